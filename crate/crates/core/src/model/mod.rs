//! The Versor network: lifting, Geometric Product Attention (GPA), the
//! Recursive Rotor Accumulator (RRA), initialization, training and rollout.

mod checkpoint;
mod gpa;
mod init;
mod nbody;
mod rollout;
mod rra;
mod train;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, NamedArray};
pub use gpa::{gpa_forward, gpa_forward_tape, GpaOutput, GpaParams, GpaTapeOutput, GpaVars};
pub use init::{variance_propagation, versor_init, versor_init_matrix};
pub use nbody::{Composition, ModelConfig, NBodyModel, Standardizer};
pub use rollout::{rollout, rollout_mse, Dynamics, Rollout};
pub use rra::{
    accumulate_rotors, rra_forward, rra_forward_with, GeneratorSet, RraCell, RraOutput, RraParams,
    RraVars, VersorState,
};
pub use train::{teacher_forcing_mse, train, AdamW, LossHistory, TrainConfig};

/// Row-major dense real matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `xᵀ M` for a row vector `x` of length `rows`.
    pub fn left_mul(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (yk, w) in y.iter_mut().zip(self.row(i)) {
                *yk += xi * w;
            }
        }
        y
    }
}
