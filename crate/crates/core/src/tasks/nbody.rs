use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `[x, y, vx, vy]` of one body.
pub type Body = [f64; 4];
pub type Frame = Vec<Body>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NBodyConfig {
    pub n_bodies: usize,
    pub dims: usize,
    pub g: f64,
    pub epsilon: f64,
    pub dt: f64,
    /// Frames per trajectory, including the initial one.
    pub steps: usize,
    pub n_trajectories: usize,
    pub heavy_mass: f64,
    pub light_mass: f64,
    /// RK4 substeps per recorded frame.
    pub substeps: usize,
    /// Trajectories drifting more than this (percent) are resampled.
    pub max_drift_pct: f64,
    pub seed: u64,
}

impl Default for NBodyConfig {
    fn default() -> Self {
        Self {
            n_bodies: 5,
            dims: 2,
            g: 1.0,
            epsilon: 1e-3,
            dt: 0.01,
            steps: 100,
            n_trajectories: 50,
            heavy_mass: 10.0,
            light_mass: 1.0,
            substeps: 4,
            max_drift_pct: 1.0,
            seed: 0,
        }
    }
}

impl NBodyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.dims != 2 {
            return bad("only planar (dims = 2) systems are supported");
        }
        if self.n_bodies == 0 {
            return bad("n_bodies must be at least 1");
        }
        if !(self.epsilon > 0.0) || !(self.dt > 0.0) || !self.g.is_finite() {
            return bad("epsilon and dt must be positive, G finite");
        }
        if !(self.heavy_mass > 0.0) || !(self.light_mass > 0.0) {
            return bad("masses must be positive");
        }
        if self.steps < 1 || self.substeps < 1 {
            return bad("steps and substeps must be at least 1");
        }
        Ok(())
    }

    /// Masses for one heavy body followed by light ones.
    pub fn masses(&self) -> Vec<f64> {
        (0..self.n_bodies)
            .map(|i| {
                if i == 0 {
                    self.heavy_mass
                } else {
                    self.light_mass
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub masses: Vec<f64>,
    pub frames: Vec<Frame>,
    pub config: NBodyConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NBodyDataset {
    pub trajectories: Vec<Trajectory>,
    /// Initial conditions discarded for blow-up or excessive drift.
    pub rejections: usize,
}

pub fn potential_energy(q: &[[f64; 2]], masses: &[f64], g: f64, epsilon: f64) -> f64 {
    let mut v = 0.0;
    for i in 0..q.len() {
        for j in i + 1..q.len() {
            let dx = q[i][0] - q[j][0];
            let dy = q[i][1] - q[j][1];
            v -= g * masses[i] * masses[j] / (dx * dx + dy * dy + epsilon * epsilon).sqrt();
        }
    }
    v
}

pub fn kinetic_energy(frame: &[Body], masses: &[f64]) -> f64 {
    frame
        .iter()
        .zip(masses)
        .map(|(b, m)| 0.5 * m * (b[2] * b[2] + b[3] * b[3]))
        .sum()
}

pub fn total_energy(frame: &[Body], masses: &[f64], g: f64, epsilon: f64) -> f64 {
    let q: Vec<[f64; 2]> = frame.iter().map(|b| [b[0], b[1]]).collect();
    kinetic_energy(frame, masses) + potential_energy(&q, masses, g, epsilon)
}

/// `100 · max_t |H_t − H_0| / |H_0|`.
pub fn energy_drift(frames: &[Frame], masses: &[f64], g: f64, epsilon: f64) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(
            "energy drift needs at least two frames".into(),
        ));
    }
    let h0 = total_energy(&frames[0], masses, g, epsilon);
    if h0 == 0.0 || !h0.is_finite() {
        return Err(Error::Undefined(format!("initial energy is {h0}")));
    }
    let worst = frames[1..]
        .iter()
        .map(|f| (total_energy(f, masses, g, epsilon) - h0).abs())
        .fold(0.0, f64::max);
    Ok(100.0 * worst / h0.abs())
}

impl Trajectory {
    pub fn energy_drift(&self) -> Result<f64> {
        energy_drift(
            &self.frames,
            &self.masses,
            self.config.g,
            self.config.epsilon,
        )
    }
}

fn derivative(state: &[Body], masses: &[f64], g: f64, eps2: f64, out: &mut [Body]) {
    for (o, b) in out.iter_mut().zip(state) {
        *o = [b[2], b[3], 0.0, 0.0];
    }
    for i in 0..state.len() {
        for j in i + 1..state.len() {
            let dx = state[j][0] - state[i][0];
            let dy = state[j][1] - state[i][1];
            let r2 = dx * dx + dy * dy + eps2;
            let inv = g / (r2 * r2.sqrt());
            out[i][2] += masses[j] * inv * dx;
            out[i][3] += masses[j] * inv * dy;
            out[j][2] -= masses[i] * inv * dx;
            out[j][3] -= masses[i] * inv * dy;
        }
    }
}

fn rk4_step(state: &mut [Body], masses: &[f64], g: f64, eps2: f64, h: f64) {
    let n = state.len();
    let mut k = [
        vec![[0.0; 4]; n],
        vec![[0.0; 4]; n],
        vec![[0.0; 4]; n],
        vec![[0.0; 4]; n],
    ];
    let mut tmp = state.to_vec();
    derivative(state, masses, g, eps2, &mut k[0]);
    for (stage, c) in [(1, 0.5), (2, 0.5), (3, 1.0)] {
        for i in 0..n {
            for d in 0..4 {
                tmp[i][d] = state[i][d] + c * h * k[stage - 1][i][d];
            }
        }
        let mut next = vec![[0.0; 4]; n];
        derivative(&tmp, masses, g, eps2, &mut next);
        k[stage] = next;
    }
    for i in 0..n {
        for d in 0..4 {
            state[i][d] +=
                h / 6.0 * (k[0][i][d] + 2.0 * k[1][i][d] + 2.0 * k[2][i][d] + k[3][i][d]);
        }
    }
}

/// Integrates `initial` for `config.steps` frames spaced `dt` apart.
pub fn integrate(initial: &[Body], masses: &[f64], config: &NBodyConfig) -> Result<Trajectory> {
    config.validate()?;
    if initial.len() != masses.len() {
        return Err(Error::Shape(format!(
            "{} bodies, {} masses",
            initial.len(),
            masses.len()
        )));
    }
    let h = config.dt / config.substeps as f64;
    let eps2 = config.epsilon * config.epsilon;
    let mut state = initial.to_vec();
    let mut frames = Vec::with_capacity(config.steps);
    frames.push(state.clone());
    for t in 1..config.steps {
        for _ in 0..config.substeps {
            rk4_step(&mut state, masses, config.g, eps2, h);
        }
        if state.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "integration blew up at frame {t}"
            )));
        }
        frames.push(state.clone());
    }
    Ok(Trajectory {
        masses: masses.to_vec(),
        frames,
        config: config.clone(),
    })
}

/// Heavy body near the origin, light bodies on perturbed circular orbits,
/// shifted to the centre-of-mass frame.
fn initial_conditions(config: &NBodyConfig, rng: &mut ChaCha8Rng) -> (Frame, Vec<f64>) {
    let masses = config.masses();
    let mut frame: Frame = vec![[0.0; 4]; config.n_bodies];
    for body in frame.iter_mut().skip(1) {
        let r = rng.gen_range(1.0..3.0);
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let v = (config.g * config.heavy_mass / r).sqrt() * rng.gen_range(0.9..1.1);
        *body = [r * phi.cos(), r * phi.sin(), -v * phi.sin(), v * phi.cos()];
    }
    let m_total: f64 = masses.iter().sum();
    let mut com = [0.0; 4];
    for (b, m) in frame.iter().zip(&masses) {
        for d in 0..4 {
            com[d] += m * b[d] / m_total;
        }
    }
    for b in frame.iter_mut() {
        for d in 0..4 {
            b[d] -= com[d];
        }
    }
    (frame, masses)
}

const MAX_ATTEMPTS: usize = 1000;

fn sample_trajectory(config: &NBodyConfig, rng: &mut ChaCha8Rng) -> Result<(Trajectory, usize)> {
    for attempt in 0..MAX_ATTEMPTS {
        let (frame, masses) = initial_conditions(config, rng);
        match integrate(&frame, &masses, config) {
            Ok(traj) if config.steps < 2 => return Ok((traj, attempt)),
            Ok(traj) => match traj.energy_drift() {
                Ok(d) if d <= config.max_drift_pct => return Ok((traj, attempt)),
                _ => continue,
            },
            Err(Error::NonFinite(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Generation(format!(
        "no acceptable trajectory after {MAX_ATTEMPTS} attempts"
    )))
}

/// One trajectory from `config.seed`, resampling rejected initial conditions.
pub fn rk4_integrate(config: &NBodyConfig) -> Result<Trajectory> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(sample_trajectory(config, &mut rng)?.0)
}

/// `config.n_trajectories` trajectories, each on its own RNG stream.
pub fn generate_nbody(config: &NBodyConfig) -> Result<NBodyDataset> {
    config.validate()?;
    let mut trajectories = Vec::with_capacity(config.n_trajectories);
    let mut rejections = 0;
    for k in 0..config.n_trajectories {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(k as u64 + 1);
        let (traj, rejected) = sample_trajectory(config, &mut rng)?;
        trajectories.push(traj);
        rejections += rejected;
    }
    Ok(NBodyDataset {
        trajectories,
        rejections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn momentum(frame: &[Body], masses: &[f64]) -> [f64; 2] {
        let mut p = [0.0; 2];
        for (b, m) in frame.iter().zip(masses) {
            p[0] += m * b[2];
            p[1] += m * b[3];
        }
        p
    }

    #[test]
    fn potential_examples() {
        assert_eq!(potential_energy(&[[0.3, 0.1]], &[2.0], 1.0, 1e-3), 0.0);
        let v = potential_energy(&[[0.0, 0.0], [1.0, 0.0]], &[1.0, 1.0], 1.0, 1e-3);
        assert!((v + 1.0 / (1.0f64 + 1e-6).sqrt()).abs() < 1e-15);
        let v = potential_energy(&[[0.5, 0.5], [0.5, 0.5]], &[1.0, 1.0], 1.0, 1e-3);
        assert!((v + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn energy_at_rest_far_apart() {
        let frame = vec![[0.0, 0.0, 0.0, 0.0], [1e9, 0.0, 0.0, 0.0]];
        assert!(total_energy(&frame, &[1.0, 1.0], 1.0, 1e-3).abs() < 1e-8);
    }

    #[test]
    fn single_body_at_rest_is_stationary() {
        let cfg = NBodyConfig {
            n_bodies: 1,
            steps: 20,
            ..Default::default()
        };
        let t = integrate(&[[0.5, -0.5, 0.0, 0.0]], &[3.0], &cfg).unwrap();
        assert!(t.frames.iter().all(|f| f[0] == [0.5, -0.5, 0.0, 0.0]));
    }

    #[test]
    fn circular_two_body_orbit_keeps_radius_and_energy() {
        let (g, eps, d) = (1.0, 1e-3, 1.0f64);
        // Softened force balances the centripetal term at this speed.
        let v_rel = (g * 2.0 * d * d / (d * d + eps * eps).powf(1.5)).sqrt();
        let period = std::f64::consts::TAU * d / v_rel;
        let cfg = NBodyConfig {
            n_bodies: 2,
            dt: 0.01,
            substeps: 4,
            steps: (period / 0.01) as usize + 2,
            g,
            epsilon: eps,
            ..Default::default()
        };
        let init = vec![[-0.5, 0.0, 0.0, -v_rel / 2.0], [0.5, 0.0, 0.0, v_rel / 2.0]];
        let t = integrate(&init, &[1.0, 1.0], &cfg).unwrap();
        for f in &t.frames {
            let r = ((f[1][0] - f[0][0]).powi(2) + (f[1][1] - f[0][1]).powi(2)).sqrt();
            assert!((r - d).abs() < 1e-4, "radius {r}");
        }
        assert!(t.energy_drift().unwrap() < 1e-6);
    }

    #[test]
    fn generated_data_is_clean_and_deterministic() {
        let cfg = NBodyConfig {
            n_trajectories: 6,
            seed: 42,
            ..Default::default()
        };
        let a = generate_nbody(&cfg).unwrap();
        let b = generate_nbody(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trajectories.len(), 6);
        for t in &a.trajectories {
            assert_eq!(t.frames.len(), 100);
            let p = momentum(&t.frames[0], &t.masses);
            assert!(p[0].abs() <= 1e-10 && p[1].abs() <= 1e-10, "{p:?}");
            assert!(t.energy_drift().unwrap() <= 1.0);
            assert!(t.frames.iter().flatten().flatten().all(|v| v.is_finite()));
        }
        assert_ne!(a.trajectories[0], a.trajectories[1]);
    }

    #[test]
    fn drift_examples_and_errors() {
        let masses = [1.0, 1.0];
        let f0 = vec![[0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]];
        assert_eq!(
            energy_drift(&[f0.clone(), f0.clone()], &masses, 1.0, 1e-3).unwrap(),
            0.0
        );
        // Halving the separation doubles |V| for tiny softening.
        let f1 = vec![[0.0, 0.0, 0.0, 0.0], [0.5, 0.0, 0.0, 0.0]];
        let d = energy_drift(&[f0.clone(), f1], &masses, 1.0, 1e-9).unwrap();
        assert!((d - 100.0).abs() < 1e-6, "{d}");
        let far = vec![[0.0, 0.0, 0.0, 0.0], [f64::INFINITY, 0.0, 0.0, 0.0]];
        assert!(matches!(
            energy_drift(&[far.clone(), far], &masses, 1.0, 1e-3),
            Err(Error::Undefined(_))
        ));
        assert!(energy_drift(&[f0], &masses, 1.0, 1e-3).is_err());
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            NBodyConfig {
                epsilon: 0.0,
                ..Default::default()
            },
            NBodyConfig {
                dt: -1.0,
                ..Default::default()
            },
            NBodyConfig {
                dims: 3,
                ..Default::default()
            },
            NBodyConfig {
                light_mass: 0.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                rk4_integrate(&cfg),
                Err(Error::InvalidArgument(_))
            ));
        }
    }
}
