//! Signatures, blade bitmasks and dense multivectors.
//!
//! Blades are indexed by bitmask: bit `k` set means generator `e_{k+1}` is a
//! factor, and coefficients are stored densely in ascending mask order. For
//! `Cl(4,1)` the generators `e1, e2, e3, e+, e-` occupy bits 0..=4.

mod cayley;
pub(crate) mod product;

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

pub use cayley::{basis_product, CayleyTable};
pub use product::{
    geometric_product, geometric_product_bitmask, geometric_product_naive,
    geometric_product_naive_with, grade_project, reverse, scalar_norm, scalar_product_fast, Engine,
};

use crate::{Error, Result};

/// Largest supported generator count.
pub const MAX_GENERATORS: usize = 8;

/// Metric diagonal of a non-degenerate Clifford algebra.
///
/// Stored as the generator count plus a bitmask of the generators that square
/// to `-1`, which makes the type `Copy` and the metric sign of any blade a
/// single `popcount`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    n: u8,
    neg: u16,
}

impl Signature {
    /// Builds a signature from its metric diagonal (entries `+1` or `-1`).
    pub fn new(diag: &[i8]) -> Result<Self> {
        let n = diag.len();
        if !(1..=MAX_GENERATORS).contains(&n) {
            return Err(Error::InvalidSignature(format!(
                "{n} generators (supported: 1..={MAX_GENERATORS})"
            )));
        }
        let mut neg = 0u16;
        for (k, &d) in diag.iter().enumerate() {
            match d {
                1 => {}
                -1 => neg |= 1 << k,
                other => {
                    return Err(Error::InvalidSignature(format!(
                        "entry {k} is {other}, expected +1 or -1"
                    )))
                }
            }
        }
        Ok(Self { n: n as u8, neg })
    }

    /// `Cl(p,q)`: `p` positive generators followed by `q` negative ones.
    pub fn pq(p: usize, q: usize) -> Result<Self> {
        let mut diag = vec![1i8; p];
        diag.extend(std::iter::repeat_n(-1i8, q));
        Self::new(&diag)
    }

    /// The conformal algebra `Cl(4,1)` with basis `e1, e2, e3, e+, e-`.
    pub const fn cl41() -> Self {
        Self { n: 5, neg: 1 << 4 }
    }

    pub const fn n(&self) -> usize {
        self.n as usize
    }

    /// Number of basis blades, `2^n`.
    pub const fn dim(&self) -> usize {
        1 << self.n
    }

    /// Bitmask of generators squaring to `-1`.
    pub const fn negative_mask(&self) -> u32 {
        self.neg as u32
    }

    pub fn diag(&self) -> Vec<i8> {
        (0..self.n())
            .map(|k| if self.neg >> k & 1 == 1 { -1 } else { 1 })
            .collect()
    }

    /// Product of the metric entries of every generator in `mask`.
    #[inline]
    pub fn metric_sign(&self, mask: u32) -> f64 {
        if (mask & self.neg as u32).count_ones() & 1 == 1 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn is_cl41(&self) -> bool {
        *self == Self::cl41()
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let neg = self.neg.count_ones() as usize;
        write!(f, "Cl({},{})", self.n() - neg, neg)
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A basis blade, identified by the set of generators it contains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BladeIndex(pub u32);

impl BladeIndex {
    pub const SCALAR: Self = Self(0);

    pub const fn mask(self) -> u32 {
        self.0
    }

    pub const fn grade(self) -> usize {
        self.0.count_ones() as usize
    }

    /// The blade holding the single generator `k` (0-based).
    pub const fn generator(k: usize) -> Self {
        Self(1 << k)
    }
}

/// `(-1)^{g(g-1)/2}`: the sign reversion applies to a grade-`g` blade.
#[inline]
pub(crate) fn reversion_sign(mask: u32) -> f64 {
    match mask.count_ones() % 4 {
        2 | 3 => -1.0,
        _ => 1.0,
    }
}

/// A dense multivector: one coefficient per basis blade.
#[derive(Clone, PartialEq)]
pub struct Multivector {
    sig: Signature,
    coeffs: Vec<f64>,
}

impl Multivector {
    pub fn zero(sig: Signature) -> Self {
        Self {
            sig,
            coeffs: vec![0.0; sig.dim()],
        }
    }

    pub fn scalar(sig: Signature, value: f64) -> Self {
        let mut mv = Self::zero(sig);
        mv.coeffs[0] = value;
        mv
    }

    pub fn one(sig: Signature) -> Self {
        Self::scalar(sig, 1.0)
    }

    /// `value · e_mask`.
    pub fn blade(sig: Signature, blade: BladeIndex, value: f64) -> Self {
        let mut mv = Self::zero(sig);
        mv.coeffs[blade.mask() as usize] = value;
        mv
    }

    /// Grade-1 element `Σ v_k e_{k+1}`.
    pub fn vector(sig: Signature, components: &[f64]) -> Result<Self> {
        if components.len() > sig.n() {
            return Err(Error::Shape(format!(
                "{} vector components for {sig}",
                components.len()
            )));
        }
        let mut mv = Self::zero(sig);
        for (k, &c) in components.iter().enumerate() {
            mv.coeffs[1 << k] = c;
        }
        mv.check_finite()?;
        Ok(mv)
    }

    pub fn from_coeffs(sig: Signature, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != sig.dim() {
            return Err(Error::Shape(format!(
                "{} coefficients for {sig} (expected {})",
                coeffs.len(),
                sig.dim()
            )));
        }
        let mv = Self { sig, coeffs };
        mv.check_finite()?;
        Ok(mv)
    }

    pub(crate) fn from_coeffs_unchecked(sig: Signature, coeffs: Vec<f64>) -> Self {
        debug_assert_eq!(coeffs.len(), sig.dim());
        Self { sig, coeffs }
    }

    fn check_finite(&self) -> Result<()> {
        if let Some(k) = self.coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!(
                "coefficient {k} = {}",
                self.coeffs[k]
            )));
        }
        Ok(())
    }

    pub fn signature(&self) -> Signature {
        self.sig
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn get(&self, blade: BladeIndex) -> f64 {
        self.coeffs[blade.mask() as usize]
    }

    pub fn set(&mut self, blade: BladeIndex, value: f64) {
        self.coeffs[blade.mask() as usize] = value;
    }

    pub fn scalar_part(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Euclidean norm of the coefficient vector (not the metric norm).
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Euclidean norm of the grade-`g` coefficients.
    pub fn grade_coeff_norm(&self, g: usize) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(m, _)| m.count_ones() as usize == g)
            .map(|(_, c)| c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// Squared Euclidean norm of the odd-grade coefficients.
    pub fn odd_mass(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(m, _)| m.count_ones() & 1 == 1)
            .map(|(_, c)| c * c)
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            sig: self.sig,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn ensure_same_signature(&self, other: &Self) -> Result<()> {
        if self.sig != other.sig {
            return Err(Error::SignatureMismatch {
                left: self.sig.to_string(),
                right: other.sig.to_string(),
            });
        }
        Ok(())
    }

    /// Geometric product with the bit-masked engine.
    pub fn gp(&self, other: &Self) -> Result<Self> {
        geometric_product_bitmask(self, other)
    }

    pub fn reverse(&self) -> Self {
        reverse(self)
    }
}

impl fmt::Debug for Multivector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}[", self.sig)?;
        let mut first = true;
        for (m, c) in self.coeffs.iter().enumerate() {
            if *c != 0.0 {
                if !first {
                    write!(f, ", ")?;
                }
                first = false;
                write!(f, "{c}·e{m:#b}")?;
            }
        }
        write!(f, "]")
    }
}

impl Add for &Multivector {
    type Output = Multivector;
    fn add(self, rhs: &Multivector) -> Multivector {
        assert_eq!(self.sig, rhs.sig, "signature mismatch in add");
        let coeffs = self
            .coeffs
            .iter()
            .zip(&rhs.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Multivector {
            sig: self.sig,
            coeffs,
        }
    }
}

impl Sub for &Multivector {
    type Output = Multivector;
    fn sub(self, rhs: &Multivector) -> Multivector {
        assert_eq!(self.sig, rhs.sig, "signature mismatch in sub");
        let coeffs = self
            .coeffs
            .iter()
            .zip(&rhs.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Multivector {
            sig: self.sig,
            coeffs,
        }
    }
}

impl AddAssign<&Multivector> for Multivector {
    fn add_assign(&mut self, rhs: &Multivector) {
        assert_eq!(self.sig, rhs.sig, "signature mismatch in add");
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
    }
}

impl Neg for &Multivector {
    type Output = Multivector;
    fn neg(self) -> Multivector {
        self.scale(-1.0)
    }
}

/// Geometric product (bit-masked engine). Panics on signature mismatch; use
/// [`Multivector::gp`] for the fallible form.
impl Mul for &Multivector {
    type Output = Multivector;
    fn mul(self, rhs: &Multivector) -> Multivector {
        geometric_product_bitmask(self, rhs).expect("signature mismatch in geometric product")
    }
}

impl Mul<f64> for &Multivector {
    type Output = Multivector;
    fn mul(self, rhs: f64) -> Multivector {
        self.scale(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cl41_signature() {
        let sig = Signature::cl41();
        assert_eq!(sig.diag(), vec![1, 1, 1, 1, -1]);
        assert_eq!(sig.n(), 5);
        assert_eq!(sig.dim(), 32);
        assert_eq!(Signature::pq(4, 1).unwrap(), sig);
        assert_eq!(format!("{sig}"), "Cl(4,1)");
    }

    #[test]
    fn rejects_bad_signatures() {
        assert!(Signature::new(&[]).is_err());
        assert!(Signature::new(&[1; 9]).is_err());
        assert!(Signature::new(&[1, 0]).is_err());
        assert!(Signature::new(&[1; 8]).is_ok());
    }

    #[test]
    fn blade_grade_is_popcount() {
        assert_eq!(BladeIndex(0b10110).grade(), 3);
        assert_eq!(BladeIndex::generator(4), BladeIndex(16));
    }

    #[test]
    fn from_coeffs_validates() {
        let sig = Signature::cl41();
        assert!(Multivector::from_coeffs(sig, vec![0.0; 31]).is_err());
        let mut c = vec![0.0; 32];
        c[3] = f64::NAN;
        assert!(matches!(
            Multivector::from_coeffs(sig, c),
            Err(Error::NonFinite(_))
        ));
    }
}
