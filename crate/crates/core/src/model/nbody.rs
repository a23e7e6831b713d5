use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gpa::{gpa_forward, gpa_forward_tape, GpaParams, GpaVars};
use super::rollout::Dynamics;
use super::rra::{GeneratorSet, RraCell, RraParams, RraVars};
use super::Matrix;
use crate::autodiff::{Tape, Var};
use crate::tasks::{Body, Frame, Trajectory};
use crate::{Error, Result};

/// How the attention and recurrent blocks are wired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Composition {
    /// Flattened frame straight into the recurrence.
    Rra,
    /// Attention across bodies within each frame, then the recurrence.
    GpaRra,
}

impl std::str::FromStr for Composition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rra" => Ok(Self::Rra),
            "gpa-rra" | "hybrid" => Ok(Self::GpaRra),
            other => Err(Error::InvalidArgument(format!(
                "unknown composition {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub composition: Composition,
    pub n_bodies: usize,
    pub gamma: f64,
    /// Manifold normalization of the recurrent state; off only for ablation.
    pub normalize: bool,
    pub generators: GeneratorSet,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            composition: Composition::Rra,
            n_bodies: 5,
            gamma: 0.5,
            normalize: true,
            generators: GeneratorSet::Compact,
            seed: 0,
        }
    }
}

/// Per-coordinate affine standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Self {
        let (mut sum, mut sum_sq, mut n) = (vec![0.0; dim], vec![0.0; dim], 0usize);
        for r in rows {
            for (k, &v) in r.iter().enumerate() {
                sum[k] += v;
                sum_sq[k] += v * v;
            }
            n += 1;
        }
        let n = n.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sum_sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n - m * m).max(0.0).sqrt();
                if sd > 1e-8 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }
}

fn flatten(frame: &[Body]) -> Vec<f64> {
    frame.iter().flatten().copied().collect()
}

fn unflatten(x: &[f64]) -> Frame {
    x.chunks_exact(4)
        .map(|c| [c[0], c[1], c[2], c[3]])
        .collect()
}

/// Next-frame predictor for planar N-body systems: the readout is the
/// standardized change of every body's `(x, y, vx, vy)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NBodyModel {
    pub config: ModelConfig,
    pub input_norm: Standardizer,
    pub target_norm: Standardizer,
    /// Masses divided by their largest value, used as attention features.
    pub mass_features: Vec<f64>,
    pub rra: RraParams,
    pub gpa: Option<GpaParams>,
}

/// Per-token attention features: standardized state, relative mass, bias.
const TOKEN_DIM: usize = 6;

impl NBodyModel {
    pub fn new(config: ModelConfig, data: &[Trajectory]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let n = config.n_bodies;
        if n == 0 {
            return Err(Error::InvalidArgument("n_bodies must be at least 1".into()));
        }
        for t in data {
            if t.masses.len() != n || t.frames.iter().any(|f| f.len() != n) || t.frames.len() < 2 {
                return Err(Error::Shape(format!(
                    "trajectory does not have {n} bodies and two frames"
                )));
            }
        }
        let dim = 4 * n;
        let inputs: Vec<Vec<f64>> = data
            .iter()
            .flat_map(|t| t.frames[..t.frames.len() - 1].iter().map(|f| flatten(f)))
            .collect();
        let deltas: Vec<Vec<f64>> = data
            .iter()
            .flat_map(|t| t.frames.windows(2).map(|w| delta(&w[0], &w[1])))
            .collect();
        let input_norm = Standardizer::fit(inputs.iter().map(Vec::as_slice), dim);
        let target_norm = Standardizer::fit(deltas.iter().map(Vec::as_slice), dim);
        let m_max = data[0].masses.iter().cloned().fold(f64::MIN, f64::max);
        let mass_features = data[0].masses.iter().map(|m| m / m_max).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (rra_in, gpa) = match config.composition {
            Composition::Rra => (dim, None),
            Composition::GpaRra => (
                32 * n,
                Some(GpaParams::init(TOKEN_DIM, config.gamma, &mut rng)?),
            ),
        };
        let mut rra = RraParams::init(rra_in, dim, &mut rng)?;
        rra.generators = config.generators;
        Ok(Self {
            config,
            input_norm,
            target_norm,
            mass_features,
            rra,
            gpa,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Parameter arrays in a fixed order.
    pub fn named_params(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let mut out = vec![
            (
                "rra.lift",
                vec![self.rra.lift.rows(), self.rra.lift.cols()],
                self.rra.lift.data(),
            ),
            (
                "rra.w_b",
                vec![self.rra.w_b.rows(), self.rra.w_b.cols()],
                self.rra.w_b.data(),
            ),
            (
                "rra.readout",
                vec![self.rra.readout.rows(), self.rra.readout.cols()],
                self.rra.readout.data(),
            ),
        ];
        if let Some(g) = &self.gpa {
            out.push(("gpa.w_q", vec![g.w_q.rows(), g.w_q.cols()], g.w_q.data()));
            out.push(("gpa.w_k", vec![g.w_k.rows(), g.w_k.cols()], g.w_k.data()));
            out.push(("gpa.w_v", vec![g.w_v.rows(), g.w_v.cols()], g.w_v.data()));
            out.push(("gpa.gamma", vec![1], std::slice::from_ref(&g.gamma)));
        }
        out
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.named_params().into_iter().map(|(_, _, p)| p).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.rra.lift.data_mut(),
            self.rra.w_b.data_mut(),
            self.rra.readout.data_mut(),
        ];
        if let Some(g) = &mut self.gpa {
            out.push(g.w_q.data_mut());
            out.push(g.w_k.data_mut());
            out.push(g.w_v.data_mut());
            out.push(std::slice::from_mut(&mut g.gamma));
        }
        out
    }

    fn tokens(&self, z: &[f64]) -> Matrix {
        let n = self.config.n_bodies;
        let mut m = Matrix::zeros(n, TOKEN_DIM);
        for i in 0..n {
            for k in 0..4 {
                m.set(i, k, z[4 * i + k]);
            }
            m.set(i, 4, self.mass_features[i]);
            m.set(i, 5, 1.0);
        }
        m
    }

    /// Recurrent input for one raw frame.
    pub fn features(&self, frame: &[Body]) -> Result<Vec<f64>> {
        let mut z = self.input_norm.apply(&flatten(frame));
        if let Some(g) = &self.gpa {
            z = gpa_forward(&self.tokens(&z), g)?.outputs.data().to_vec();
        }
        Ok(z)
    }

    /// Standardized per-step targets of a trajectory.
    pub fn targets(&self, traj: &Trajectory) -> Vec<Vec<f64>> {
        traj.frames
            .windows(2)
            .map(|w| self.target_norm.apply(&delta(&w[0], &w[1])))
            .collect()
    }

    /// Teacher-forced loss on a tape; returns the loss node and the
    /// parameter nodes in [`Self::params`] order.
    pub fn tape_loss(&self, tape: &mut Tape, traj: &Trajectory) -> Result<(Var, Vec<Var>)> {
        let rra_vars = RraVars::register(tape, &self.rra);
        let mut param_vars = vec![rra_vars.lift, rra_vars.w_b, rra_vars.readout];
        let gpa_vars = self.gpa.as_ref().map(|g| GpaVars::register(tape, g));
        if let Some(g) = &gpa_vars {
            param_vars.extend([g.w_q, g.w_k, g.w_v, g.gamma]);
        }
        let steps = traj.frames.len() - 1;
        let mut inputs = Vec::with_capacity(steps);
        for frame in &traj.frames[..steps] {
            let z = self.input_norm.apply(&flatten(frame));
            let x = match &gpa_vars {
                None => tape.leaf(z),
                Some(gv) => {
                    let toks = self.tokens(&z);
                    let leaves: Vec<Var> = (0..toks.rows())
                        .map(|i| tape.leaf(toks.row(i).to_vec()))
                        .collect();
                    let parts = gpa_forward_tape(tape, &leaves, gv)?.outputs;
                    tape.concat(&parts)
                }
            };
            inputs.push(x);
        }
        let (outs, _) = rra_vars.forward(tape, &inputs, self.config.normalize)?;
        let pred = tape.concat(&outs);
        let target: Vec<f64> = self.targets(traj).concat();
        Ok((tape.mse(pred, &target)?, param_vars))
    }

    /// Teacher-forced MSE without building a tape.
    pub fn trajectory_mse(&self, traj: &Trajectory) -> Result<f64> {
        let mut cell = self.cell()?;
        let targets = self.targets(traj);
        let mut sum = 0.0;
        for (frame, target) in traj.frames.iter().zip(&targets) {
            let out = cell.step(&self.features(frame)?)?;
            sum += out
                .iter()
                .zip(target)
                .map(|(p, t)| (p - t).powi(2))
                .sum::<f64>();
        }
        Ok(sum / (targets.len() * 4 * self.config.n_bodies) as f64)
    }

    fn cell(&self) -> Result<RraCell<'_>> {
        let cell = RraCell::new(&self.rra)?;
        Ok(if self.config.normalize {
            cell
        } else {
            cell.without_normalization()
        })
    }

    /// Streaming next-frame predictor.
    pub fn predictor(&self) -> Result<Predictor<'_>> {
        Ok(Predictor {
            model: self,
            cell: self.cell()?,
        })
    }
}

fn delta(a: &[Body], b: &[Body]) -> Vec<f64> {
    flatten(b)
        .iter()
        .zip(flatten(a))
        .map(|(y, x)| y - x)
        .collect()
}

pub struct Predictor<'a> {
    model: &'a NBodyModel,
    cell: RraCell<'a>,
}

impl Dynamics for Predictor<'_> {
    fn reset(&mut self) {
        self.cell.reset();
    }

    fn step(&mut self, frame: &[Body]) -> Result<Frame> {
        if frame.len() != self.model.config.n_bodies {
            return Err(Error::Shape(format!("frame has {} bodies", frame.len())));
        }
        let out = self.cell.step(&self.model.features(frame)?)?;
        let d = self.model.target_norm.invert(&out);
        Ok(unflatten(
            &flatten(frame)
                .iter()
                .zip(&d)
                .map(|(x, dx)| x + dx)
                .collect::<Vec<_>>(),
        ))
    }
}
