//! Clifford-algebra compute kernels for rotor-based sequence models.
//!
//! The crate is organised bottom-up:
//!
//! * [`algebra`] – signatures, blade bitmasks, the Cayley table and the
//!   naive / bit-masked geometric-product engines.
//! * [`matrix_iso`] – the `Cl(4,1) ≅ Mat(4, ℂ)` representation and a
//!   4×4 complex GEMM product engine.
//! * [`conformal`] – conformal lifting of Euclidean points, translators,
//!   the Cayley map onto `Spin(4,1)` and manifold normalization.
//! * [`autodiff`] – a small reverse-mode tape over multivector values.
//! * [`model`] – Geometric Product Attention, the Recursive Rotor
//!   Accumulator, initialization, training and rollout.
//! * [`tasks`] – softened-gravity N-body data, the broken-snake task and
//!   their metrics.
//! * [`bench`] and [`selftest`] – latency harnesses and the invariant suite
//!   driven by the command-line tool.

// Index loops mirror the kernel formulas; `!(x > eps)` deliberately rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod autodiff;
pub mod bench;
pub mod conformal;
pub mod counters;
mod error;
pub mod matrix_iso;
pub mod model;
pub mod selftest;
pub mod tasks;

pub use algebra::{BladeIndex, CayleyTable, Multivector, Signature};
pub use error::{Error, Result};

/// Version tag written into every artifact the crate produces.
pub const FORMAT_VERSION: &str = "versor-1";

/// Hex SHA-256 of the JSON encoding of a configuration value.
pub fn config_hash<T: serde::Serialize>(config: &T) -> Result<String> {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_vec(config)?;
    Ok(Sha256::digest(json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}
