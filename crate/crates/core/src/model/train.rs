use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NBodyModel;
use crate::autodiff::Tape;
use crate::tasks::Trajectory;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 16,
            lr: 3e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
}

impl AdamW {
    pub fn new(shapes: &[usize], cfg: &TrainConfig) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
        }
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, p) in params.iter_mut().enumerate() {
            for (i, w) in p.iter_mut().enumerate() {
                let g = grads[k][i];
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let update = (*m / c1) / ((*v / c2).sqrt() + self.eps);
                *w -= lr * (update + self.weight_decay * *w);
            }
        }
    }
}

/// Cosine-annealed learning rate at update `step` of `total`.
fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total <= 1 {
        return base;
    }
    0.5 * base * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    /// Teacher-forcing MSE over the whole set before any update.
    pub initial_mse: f64,
    /// Mean batch loss seen during each epoch.
    pub epoch_mse: Vec<f64>,
    /// Teacher-forcing MSE over the whole set after training.
    pub final_mse: f64,
}

pub fn teacher_forcing_mse(model: &NBodyModel, data: &[Trajectory]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let mut sum = 0.0;
    for t in data {
        sum += model.trajectory_mse(t)?;
    }
    Ok(sum / data.len() as f64)
}

fn diverged(epoch: usize, loss: f64) -> Error {
    Error::Diverged { epoch, loss }
}

/// Mini-batch AdamW on the teacher-forcing loss.
pub fn train(
    model: &mut NBodyModel,
    data: &[Trajectory],
    cfg: &TrainConfig,
) -> Result<LossHistory> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "batch size must be at least 1".into(),
        ));
    }
    let initial_mse = teacher_forcing_mse(model, data)?;
    let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let mut opt = AdamW::new(&shapes, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let per_epoch = data.len().div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut epoch_mse = Vec::with_capacity(cfg.epochs);
    let mut update = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads: Vec<Vec<f64>> = shapes.iter().map(|&n| vec![0.0; n]).collect();
            let mut batch_loss = 0.0;
            for &i in batch {
                let mut tape = Tape::new();
                let (loss, vars) = match model.tape_loss(&mut tape, &data[i]) {
                    Ok(x) => x,
                    Err(Error::NonFinite(_))
                    | Err(Error::NotInvertible { .. })
                    | Err(Error::CayleySingularAt { .. }) => return Err(diverged(epoch, f64::NAN)),
                    Err(e) => return Err(e),
                };
                let l = tape.scalar(loss);
                if !l.is_finite() {
                    return Err(diverged(epoch, l));
                }
                batch_loss += l;
                let g = tape.backward(loss)?;
                for (acc, v) in grads.iter_mut().zip(&vars) {
                    for (a, d) in acc.iter_mut().zip(g.get(*v)) {
                        *a += d / batch.len() as f64;
                    }
                }
            }
            if grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(diverged(epoch, f64::NAN));
            }
            let lr = cosine_lr(cfg.lr, update, total);
            opt.step(&mut model.params_mut(), &grads, lr);
            update += 1;
            epoch_sum += batch_loss;
        }
        epoch_mse.push(epoch_sum / data.len() as f64);
    }
    let final_mse = teacher_forcing_mse(model, data)?;
    if !final_mse.is_finite() {
        return Err(diverged(cfg.epochs, final_mse));
    }
    Ok(LossHistory {
        initial_mse,
        epoch_mse,
        final_mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::tasks::{generate_nbody, NBodyConfig};

    fn setup() -> (NBodyModel, Vec<Trajectory>) {
        let d = generate_nbody(&NBodyConfig {
            n_bodies: 2,
            steps: 10,
            n_trajectories: 4,
            seed: 2,
            ..Default::default()
        })
        .unwrap()
        .trajectories;
        (
            NBodyModel::new(
                ModelConfig {
                    n_bodies: 2,
                    ..Default::default()
                },
                &d,
            )
            .unwrap(),
            d,
        )
    }

    #[test]
    fn zero_learning_rate_keeps_loss_constant() {
        let (mut m, d) = setup();
        let before = m.clone();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            lr: 0.0,
            ..Default::default()
        };
        let h = train(&mut m, &d, &cfg).unwrap();
        assert_eq!(m, before);
        assert!(h
            .epoch_mse
            .iter()
            .all(|l| (l - h.initial_mse).abs() < 1e-12));
        assert_eq!(h.final_mse, h.initial_mse);
    }

    #[test]
    fn training_is_deterministic_and_descends() {
        let cfg = TrainConfig {
            epochs: 15,
            batch_size: 2,
            lr: 1e-2,
            ..Default::default()
        };
        let (mut a, d) = setup();
        let (mut b, _) = setup();
        let ha = train(&mut a, &d, &cfg).unwrap();
        let hb = train(&mut b, &d, &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
        assert!(ha.final_mse < ha.initial_mse, "{ha:?}");
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(1.0, 0, 10), 1.0);
        assert!((cosine_lr(1.0, 5, 10) - 0.5).abs() < 1e-15);
        assert!(cosine_lr(1.0, 10, 10).abs() < 1e-15);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let (mut m, _) = setup();
        assert!(train(&mut m, &[], &TrainConfig::default()).is_err());
    }
}
