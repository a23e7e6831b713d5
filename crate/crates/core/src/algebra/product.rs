//! Geometric-product engines and grade operations.

use std::fmt;
use std::str::FromStr;

use super::{reversion_sign, CayleyTable, Multivector, Signature};
use crate::{counters, Error, Result};

/// Selects one of the interchangeable product kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Cayley-table lookups: the memory-bound reference.
    Naive,
    /// Signs resolved with XOR/AND/popcount, no table reads.
    Bitmask,
    /// `ρ⁻¹(ρ(a) ρ(b))` through 4×4 complex matrices (`Cl(4,1)` only).
    MatrixIso,
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::Naive, Engine::Bitmask, Engine::MatrixIso];

    pub fn name(self) -> &'static str {
        match self {
            Engine::Naive => "naive",
            Engine::Bitmask => "bitmask",
            Engine::MatrixIso => "matrix-iso",
        }
    }

    pub fn product(self, a: &Multivector, b: &Multivector) -> Result<Multivector> {
        match self {
            Engine::Naive => geometric_product_naive(a, b),
            Engine::Bitmask => geometric_product_bitmask(a, b),
            Engine::MatrixIso => crate::matrix_iso::product_via_iso(a, b),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Engine::Naive),
            "bitmask" => Ok(Engine::Bitmask),
            "matrix-iso" | "iso" => Ok(Engine::MatrixIso),
            other => Err(Error::InvalidArgument(format!(
                "unknown engine {other:?} (naive | bitmask | matrix-iso)"
            ))),
        }
    }
}

/// Default product: the bit-masked engine.
pub fn geometric_product(a: &Multivector, b: &Multivector) -> Result<Multivector> {
    geometric_product_bitmask(a, b)
}

pub fn geometric_product_naive(a: &Multivector, b: &Multivector) -> Result<Multivector> {
    a.ensure_same_signature(b)?;
    let table = CayleyTable::shared(a.signature());
    Ok(naive_kernel(&table, a, b))
}

/// Naive engine against an explicit table (which may be deliberately wrong).
pub fn geometric_product_naive_with(
    table: &CayleyTable,
    a: &Multivector,
    b: &Multivector,
) -> Result<Multivector> {
    a.ensure_same_signature(b)?;
    if table.signature() != a.signature() {
        return Err(Error::SignatureMismatch {
            left: table.signature().to_string(),
            right: a.signature().to_string(),
        });
    }
    Ok(naive_kernel(table, a, b))
}

fn naive_kernel(table: &CayleyTable, a: &Multivector, b: &Multivector) -> Multivector {
    let dim = table.dim();
    let (ac, bc) = (a.coeffs(), b.coeffs());
    let mut out = vec![0.0; dim];
    for i in 0..dim {
        for j in 0..dim {
            let (k, w) = table.entry(i, j);
            out[k.mask() as usize] += w * ac[i] * bc[j];
        }
    }
    let pairs = (dim * dim) as u64;
    counters::add(pairs, 0, pairs, 0);
    Multivector::from_coeffs_unchecked(a.signature(), out)
}

pub fn geometric_product_bitmask(a: &Multivector, b: &Multivector) -> Result<Multivector> {
    a.ensure_same_signature(b)?;
    let sig = a.signature();
    let mut out = vec![0.0; sig.dim()];
    bitmask_kernel(sig, a.coeffs(), b.coeffs(), &mut out);
    Ok(Multivector::from_coeffs_unchecked(sig, out))
}

/// Per-row sign mask for the bit-masked kernel.
///
/// Bit `k` of the result is the parity of the generators of blade `i` above
/// `k` (the transpositions a generator `k` of the right factor makes) XOR the
/// metric sign of generator `k` when `i` contains it. The sign of
/// `e_i e_j` is then `(-1)^{popcount(j & row_mask(i))}`.
#[inline]
pub(crate) fn row_sign_mask(sig: Signature, i: u32) -> u32 {
    let neg_i = i & sig.negative_mask();
    let mut mask = 0u32;
    let mut above = 0u32;
    for k in (0..sig.n() as u32).rev() {
        mask |= (above ^ (neg_i >> k & 1)) << k;
        above ^= i >> k & 1;
    }
    mask
}

#[inline(always)]
fn apply_sign(x: f64, parity: u32) -> f64 {
    f64::from_bits(x.to_bits() ^ ((parity as u64 & 1) << 63))
}

/// `out += a · b` using only register-local bit logic for signs.
pub(crate) fn bitmask_kernel(sig: Signature, a: &[f64], b: &[f64], out: &mut [f64]) {
    let dim = sig.dim();
    debug_assert!(a.len() == dim && b.len() == dim && out.len() == dim);
    #[cfg(feature = "counters")]
    let (mut mads, mut logic) = (0u64, 0u64);
    for (i, &ai) in a.iter().enumerate() {
        let row = row_sign_mask(sig, i as u32);
        #[cfg(feature = "counters")]
        {
            logic += sig.n() as u64;
        }
        for (j, &bj) in b.iter().enumerate() {
            let j = j as u32;
            let k = (i as u32 ^ j) as usize;
            let parity = (j & row).count_ones();
            out[k] += apply_sign(ai * bj, parity);
            #[cfg(feature = "counters")]
            {
                // xor, and, popcount
                logic += 3;
                mads += 1;
            }
        }
    }
    #[cfg(feature = "counters")]
    counters::add(mads, logic, 0, 0);
}

/// Sign `w(i, j)` of `e_i e_j` from the bit-masked formula.
#[cfg(test)]
pub(crate) fn bitmask_sign(sig: Signature, i: u32, j: u32) -> f64 {
    apply_sign(1.0, (j & row_sign_mask(sig, i)).count_ones())
}

/// Reversion: scales each grade-`g` blade by `(-1)^{g(g-1)/2}`.
pub fn reverse(a: &Multivector) -> Multivector {
    let coeffs = a
        .coeffs()
        .iter()
        .enumerate()
        .map(|(m, c)| c * reversion_sign(m as u32))
        .collect();
    Multivector::from_coeffs_unchecked(a.signature(), coeffs)
}

/// Keeps only the grade-`g` coefficients.
pub fn grade_project(a: &Multivector, g: usize) -> Result<Multivector> {
    let n = a.signature().n();
    if g > n {
        return Err(Error::GradeOutOfRange { grade: g, n });
    }
    let coeffs = a
        .coeffs()
        .iter()
        .enumerate()
        .map(|(m, &c)| if m.count_ones() as usize == g { c } else { 0.0 })
        .collect();
    Ok(Multivector::from_coeffs_unchecked(a.signature(), coeffs))
}

/// `⟨a · reverse(b)⟩₀` in `dim` multiply-adds.
///
/// Only the diagonal pairs `j = i` reach the scalar blade; the reversion sign
/// and the swap sign of `e_i e_i` cancel, leaving the metric sign of `i`.
pub fn scalar_product_fast(a: &Multivector, b: &Multivector) -> Result<f64> {
    a.ensure_same_signature(b)?;
    Ok(scalar_product_unchecked(
        a.signature(),
        a.coeffs(),
        b.coeffs(),
    ))
}

#[inline]
pub(crate) fn scalar_product_unchecked(sig: Signature, a: &[f64], b: &[f64]) -> f64 {
    let neg = sig.negative_mask();
    let mut acc = 0.0;
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        acc += apply_sign(x * y, (i as u32 & neg).count_ones());
    }
    let dim = a.len() as u64;
    counters::add(dim, 2 * dim, 0, 0);
    acc
}

/// `⟨a · reverse(a)⟩₀`.
pub fn scalar_norm(a: &Multivector) -> f64 {
    scalar_product_unchecked(a.signature(), a.coeffs(), a.coeffs())
}
