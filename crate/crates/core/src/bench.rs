//! Latency harnesses for the product engines and the recurrence, plus the
//! modeled operation and traffic counts reported next to measured times.
//!
//! Modeled figures follow a simple accounting: one operation per
//! coefficient multiply-add or sign resolution, 16 bytes per Cayley-table
//! lookup, 8 bytes per real read or written.

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{Engine, Multivector, Signature};
use crate::model::{RraCell, RraParams};
use crate::{counters, Error, Result, FORMAT_VERSION};

pub const WARMUP_REPS: usize = 5;
pub const MIN_REPS: usize = 30;

/// Modeled cost of one full product.
pub fn modeled_ops(engine: Engine, sig: Signature) -> u64 {
    let (n, dim) = (sig.n() as u64, sig.dim() as u64);
    match engine {
        Engine::Naive => dim * dim * dim,
        Engine::Bitmask => n * dim * dim,
        Engine::MatrixIso => 256,
    }
}

/// Modeled bytes moved by one full product.
pub fn modeled_bytes(engine: Engine, sig: Signature) -> u64 {
    let dim = sig.dim() as u64;
    match engine {
        // Every term looks up its table entry.
        Engine::Naive => 16 * dim * dim * dim,
        // Operands in, result out; signs are computed in registers.
        Engine::Bitmask => 3 * dim * 8,
        // Two 4×4 complex operands and one result.
        Engine::MatrixIso => 3 * 16 * 16,
    }
}

pub fn modeled_intensity(engine: Engine, sig: Signature) -> f64 {
    modeled_ops(engine, sig) as f64 / modeled_bytes(engine, sig) as f64
}

/// Summary of repeated timings in nanoseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub reps: usize,
    pub median_ns: f64,
    pub mean_ns: f64,
    pub p95_ns: f64,
}

impl Timing {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("no timing samples".into()));
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let pick = |q: f64| s[((s.len() - 1) as f64 * q).round() as usize];
        Ok(Self {
            reps: s.len(),
            median_ns: pick(0.5),
            mean_ns: s.iter().sum::<f64>() / s.len() as f64,
            p95_ns: pick(0.95),
        })
    }
}

/// Runs `f` for `WARMUP_REPS` untimed and `reps` timed repetitions.
pub fn time_reps(reps: usize, mut f: impl FnMut()) -> Result<Timing> {
    if reps < MIN_REPS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_REPS} repetitions, got {reps}"
        )));
    }
    for _ in 0..WARMUP_REPS {
        f();
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        f();
        samples.push(t0.elapsed().as_nanos() as f64);
    }
    Timing::from_samples(&samples)
}

/// One row of the product benchmark. Latencies are per batch, measured;
/// operation and byte counts are per product, modeled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub engine: String,
    pub batch: usize,
    pub median_ns: f64,
    pub mad_count: u64,
    pub intensity: f64,
    pub mean_ns: f64,
    pub p95_ns: f64,
    pub reps: usize,
    pub bytes_modeled: u64,
    /// Operations recorded by the instrumented counters for one product.
    pub counted_ops: u64,
    pub seed: u64,
    pub format_version: String,
}

pub fn random_multivector(sig: Signature, rng: &mut ChaCha8Rng) -> Multivector {
    let c = (0..sig.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Multivector::from_coeffs(sig, c).expect("finite by construction")
}

pub fn bench_product(engine: Engine, batch: usize, reps: usize, seed: u64) -> Result<BenchReport> {
    if batch == 0 {
        return Err(Error::InvalidArgument("batch must be at least 1".into()));
    }
    let sig = Signature::cl41();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(Multivector, Multivector)> = (0..batch)
        .map(|_| {
            (
                random_multivector(sig, &mut rng),
                random_multivector(sig, &mut rng),
            )
        })
        .collect();
    counters::reset();
    engine.product(&pairs[0].0, &pairs[0].1)?;
    let c = counters::snapshot();
    let counted_ops = c.mads + c.logic + c.matrix_flops;
    let mut failure = None;
    let timing = time_reps(reps, || {
        for (a, b) in &pairs {
            if let Err(e) = engine.product(black_box(a), black_box(b)) {
                failure.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(BenchReport {
        engine: engine.name().into(),
        batch,
        median_ns: timing.median_ns,
        mad_count: modeled_ops(engine, sig),
        intensity: modeled_intensity(engine, sig),
        mean_ns: timing.mean_ns,
        p95_ns: timing.p95_ns,
        reps: timing.reps,
        bytes_modeled: modeled_bytes(engine, sig),
        counted_ops,
        seed,
        format_version: FORMAT_VERSION.into(),
    })
}

/// Latency of a full streaming pass over `length` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RraBenchRow {
    pub length: usize,
    pub median_ns: f64,
    pub mean_ns: f64,
    pub p95_ns: f64,
    pub reps: usize,
    pub ns_per_step: f64,
    pub seed: u64,
    pub format_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RraBench {
    pub rows: Vec<RraBenchRow>,
    /// Least-squares slope of log(median) against log(length).
    pub slope: f64,
}

pub const RRA_BENCH_D_IN: usize = 8;
pub const RRA_BENCH_D_OUT: usize = 4;

/// Inputs drawn once, outside the timed region.
pub fn rra_bench_inputs(length: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ length as u64);
    (0..length)
        .map(|_| {
            (0..RRA_BENCH_D_IN)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect()
}

/// Streams `inputs` through a fresh cell, keeping only the last readout.
pub fn rra_stream(params: &RraParams, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut cell = RraCell::new(params)?;
    let mut last = Vec::new();
    for x in inputs {
        last = cell.step(x)?;
    }
    Ok(last)
}

pub fn bench_rra(lengths: &[usize], reps: usize, seed: u64) -> Result<RraBench> {
    if lengths.is_empty() || lengths.contains(&0) {
        return Err(Error::InvalidArgument(
            "lengths must be non-empty and positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = RraParams::init(RRA_BENCH_D_IN, RRA_BENCH_D_OUT, &mut rng)?;
    let mut rows = Vec::with_capacity(lengths.len());
    for &length in lengths {
        let inputs = rra_bench_inputs(length, seed);
        let mut failure = None;
        let t = time_reps(reps, || {
            if let Err(e) = rra_stream(&params, black_box(&inputs)) {
                failure.get_or_insert(e);
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        rows.push(RraBenchRow {
            length,
            median_ns: t.median_ns,
            mean_ns: t.mean_ns,
            p95_ns: t.p95_ns,
            reps: t.reps,
            ns_per_step: t.median_ns / length as f64,
            seed,
            format_version: FORMAT_VERSION.into(),
        });
    }
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.length as f64, r.median_ns))
        .collect();
    let slope = if points.len() >= 2 {
        loglog_slope(&points)?
    } else {
        f64::NAN
    };
    Ok(RraBench { rows, slope })
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InvalidArgument(
            "need two or more positive points".into(),
        ));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(
            "lengths must not all be equal".into(),
        ));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modeled_counts() {
        let sig = Signature::cl41();
        assert_eq!(modeled_ops(Engine::Bitmask, sig), 5_120);
        assert_eq!(modeled_ops(Engine::Naive, sig), 32_768);
        assert!(
            (modeled_ops(Engine::Naive, sig) as f64 / modeled_ops(Engine::Bitmask, sig) as f64
                - 6.4)
                .abs()
                < 1e-12
        );
        assert!((modeled_intensity(Engine::Naive, sig) - 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn timing_statistics() {
        let samples: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = Timing::from_samples(&samples).unwrap();
        assert_eq!(t.reps, 100);
        assert!((t.mean_ns - 50.5).abs() < 1e-12);
        assert!(t.median_ns <= t.p95_ns);
        assert!(time_reps(5, || {}).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&x| (x, 3.0 * x * x))
            .collect();
        assert!((loglog_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert!(loglog_slope(&pts[..1]).is_err());
    }

    #[test]
    fn product_bench_rows() {
        for engine in Engine::ALL {
            let r = bench_product(engine, 4, 30, 1).unwrap();
            assert!(r.median_ns <= r.p95_ns && r.reps >= 30);
            assert_eq!(r.engine, engine.name());
        }
        assert_eq!(
            bench_product(Engine::Bitmask, 1, 30, 0)
                .unwrap()
                .counted_ops,
            1024 + 160 + 3072
        );
    }

    #[test]
    fn rra_bench_of_length_one() {
        let b = bench_rra(&[1], 30, 2).unwrap();
        assert_eq!(b.rows.len(), 1);
        assert!(b.slope.is_nan());
    }
}
