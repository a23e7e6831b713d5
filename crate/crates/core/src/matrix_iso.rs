//! The `Cl(4,1) ≅ Mat(4, ℂ)` representation.
//!
//! Generators are Kronecker products of Pauli matrices:
//! `ρ(e1) = σx⊗I`, `ρ(e2) = σy⊗I`, `ρ(e3) = σz⊗σx`, `ρ(e+) = σz⊗σy`,
//! `ρ(e-) = i(σz⊗σz)`. Blade images are ordered products of generator
//! images, and `ρ⁻¹` is a fixed 32×32 real solve against those images.

use std::ops::{Add, Mul};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::algebra::{Multivector, Signature};
use crate::{counters, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// A 4×4 complex matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat4C(pub [[Complex64; 4]; 4]);

impl Mat4C {
    pub const fn zero() -> Self {
        Self([[ZERO; 4]; 4])
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for k in 0..4 {
            m.0[k][k] = ONE;
        }
        m
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = *self;
        for row in out.0.iter_mut() {
            for e in row.iter_mut() {
                *e *= s;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.0
            .iter()
            .flatten()
            .all(|e| e.re.is_finite() && e.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|e| e.norm())
            .fold(0.0, f64::max)
    }

    /// The matrix as 32 reals: `(re, im)` interleaved, row-major.
    pub fn to_reals(&self) -> [f64; 32] {
        let mut out = [0.0; 32];
        for (k, e) in self.0.iter().flatten().enumerate() {
            out[2 * k] = e.re;
            out[2 * k + 1] = e.im;
        }
        out
    }

    pub fn from_reals(r: &[f64; 32]) -> Self {
        let mut m = Self::zero();
        for k in 0..16 {
            m.0[k / 4][k % 4] = Complex64::new(r[2 * k], r[2 * k + 1]);
        }
        m
    }

    /// Dense 4×4 complex product: 64 complex multiplies, counted as 256 real
    /// FLOPs.
    pub fn matmul(&self, rhs: &Self) -> Self {
        let mut out = Self::zero();
        for r in 0..4 {
            for c in 0..4 {
                let mut acc = ZERO;
                for k in 0..4 {
                    acc += self.0[r][k] * rhs.0[k][c];
                }
                out.0[r][c] = acc;
            }
        }
        counters::add(0, 0, 0, 64 * 4);
        out
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting, together
    /// with the determinant.
    pub fn inverse(&self) -> (Option<Self>, Complex64) {
        let mut a = self.0;
        let mut inv = Self::identity().0;
        let mut det = ONE;
        for col in 0..4 {
            let pivot = (col..4)
                .max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm()))
                .unwrap_or(col);
            if a[pivot][col] == ZERO {
                return (None, ZERO);
            }
            if pivot != col {
                a.swap(pivot, col);
                inv.swap(pivot, col);
                det = -det;
            }
            let p = a[col][col];
            det *= p;
            let p_inv = ONE / p;
            for k in 0..4 {
                a[col][k] *= p_inv;
                inv[col][k] *= p_inv;
            }
            for r in 0..4 {
                if r != col {
                    let f = a[r][col];
                    if f != ZERO {
                        for k in 0..4 {
                            a[r][k] -= f * a[col][k];
                            inv[r][k] -= f * inv[col][k];
                        }
                    }
                }
            }
        }
        (Some(Self(inv)), det)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Add for Mat4C {
    type Output = Mat4C;
    fn add(mut self, rhs: Mat4C) -> Mat4C {
        for (a, b) in self.0.iter_mut().flatten().zip(rhs.0.iter().flatten()) {
            *a += b;
        }
        self
    }
}

impl Mul for Mat4C {
    type Output = Mat4C;
    fn mul(self, rhs: Mat4C) -> Mat4C {
        self.matmul(&rhs)
    }
}

fn kron(a: [[Complex64; 2]; 2], b: [[Complex64; 2]; 2]) -> Mat4C {
    let mut m = Mat4C::zero();
    for r in 0..4 {
        for c in 0..4 {
            m.0[r][c] = a[r / 2][c / 2] * b[r % 2][c % 2];
        }
    }
    m
}

/// Images of the five generators `e1, e2, e3, e+, e-`.
pub fn build_generators() -> [Mat4C; 5] {
    let id = [[ONE, ZERO], [ZERO, ONE]];
    let sx = [[ZERO, ONE], [ONE, ZERO]];
    let sy = [[ZERO, -I], [I, ZERO]];
    let sz = [[ONE, ZERO], [ZERO, -ONE]];
    [
        kron(sx, id),
        kron(sy, id),
        kron(sz, sx),
        kron(sz, sy),
        kron(sz, sz).scale(I),
    ]
}

/// Blade images and the dual frame used by `ρ⁻¹`.
#[derive(Debug)]
pub struct IsoBasis {
    rho_blades: [Mat4C; 32],
    /// Row-major 32×32 inverse of the matrix whose columns are the blade
    /// images as real 32-vectors.
    inverse_coeffs: Vec<f64>,
}

impl IsoBasis {
    fn build() -> Self {
        let gens = build_generators();
        let mut rho_blades = [Mat4C::identity(); 32];
        for (mask, slot) in rho_blades.iter_mut().enumerate() {
            let mut m = Mat4C::identity();
            for (k, g) in gens.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    m = mul_uncounted(&m, g);
                }
            }
            *slot = m;
        }
        let mut frame = vec![0.0; 32 * 32];
        for (col, m) in rho_blades.iter().enumerate() {
            for (row, v) in m.to_reals().iter().enumerate() {
                frame[row * 32 + col] = *v;
            }
        }
        let inverse_coeffs =
            invert_real(&frame, 32).expect("blade images are linearly independent");
        Self {
            rho_blades,
            inverse_coeffs,
        }
    }

    /// Shared basis, built once.
    pub fn get() -> &'static IsoBasis {
        static BASIS: OnceLock<IsoBasis> = OnceLock::new();
        BASIS.get_or_init(Self::build)
    }

    pub fn rho_blade(&self, mask: usize) -> &Mat4C {
        &self.rho_blades[mask]
    }

    pub fn inverse_coeffs(&self) -> &[f64] {
        &self.inverse_coeffs
    }
}

fn mul_uncounted(a: &Mat4C, b: &Mat4C) -> Mat4C {
    let mut out = Mat4C::zero();
    for r in 0..4 {
        for c in 0..4 {
            out.0[r][c] = (0..4).map(|k| a.0[r][k] * b.0[k][c]).sum();
        }
    }
    out
}

/// Dense real inverse by Gauss-Jordan with partial pivoting.
fn invert_real(m: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut a = m.to_vec();
    let mut inv = vec![0.0; n * n];
    for k in 0..n {
        inv[k * n + k] = 1.0;
    }
    for col in 0..n {
        let pivot =
            (col..n).max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))?;
        if a[pivot * n + col].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
                inv.swap(pivot * n + k, col * n + k);
            }
        }
        let p = 1.0 / a[col * n + col];
        for k in 0..n {
            a[col * n + k] *= p;
            inv[col * n + k] *= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col];
            if f != 0.0 {
                for k in 0..n {
                    a[r * n + k] -= f * a[col * n + k];
                    inv[r * n + k] -= f * inv[col * n + k];
                }
            }
        }
    }
    Some(inv)
}

fn require_cl41(a: &Multivector) -> Result<()> {
    if !a.signature().is_cl41() {
        return Err(Error::WrongSignature(a.signature().to_string()));
    }
    Ok(())
}

/// `ρ(a) = Σ_J a_J ρ(E_J)`.
pub fn rho(a: &Multivector) -> Result<Mat4C> {
    require_cl41(a)?;
    let basis = IsoBasis::get();
    let mut out = Mat4C::zero();
    for (mask, &c) in a.coeffs().iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let b = basis.rho_blade(mask);
        for (o, e) in out.0.iter_mut().flatten().zip(b.0.iter().flatten()) {
            *o += e * c;
        }
    }
    Ok(out)
}

/// Recovers the multivector whose image is `m`.
pub fn rho_inverse(m: &Mat4C) -> Multivector {
    let inv = IsoBasis::get().inverse_coeffs();
    let r = m.to_reals();
    let coeffs = (0..32)
        .map(|row| {
            inv[row * 32..(row + 1) * 32]
                .iter()
                .zip(&r)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();
    Multivector::from_coeffs_unchecked(Signature::cl41(), coeffs)
}

/// Geometric product as `ρ⁻¹(ρ(a) ρ(b))`.
pub fn product_via_iso(a: &Multivector, b: &Multivector) -> Result<Multivector> {
    a.ensure_same_signature(b)?;
    require_cl41(a)?;
    let m = rho(a)?.matmul(&rho(b)?);
    Ok(rho_inverse(&m))
}

/// Multivector inverse through the matrix representation.
///
/// Fails when `|det ρ(a)| ≤ 1e-12 · scale⁴`, with `scale` the largest entry of
/// `ρ(a)`.
pub fn invert(a: &Multivector) -> Result<Multivector> {
    let m = rho(a)?;
    let scale = m.max_abs();
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::NotInvertible { det: 0.0 });
    }
    // Normalize before eliminating so the determinant threshold is relative.
    let unit = m.scale(Complex64::new(1.0 / scale, 0.0));
    let (inv, det) = unit.inverse();
    match inv {
        Some(inv) if det.norm() > 1e-12 => {
            let inv = inv.scale(Complex64::new(1.0 / scale, 0.0));
            let out = rho_inverse(&inv);
            if out.is_finite() {
                Ok(out)
            } else {
                Err(Error::NotInvertible {
                    det: det.norm() * scale.powi(4),
                })
            }
        }
        _ => Err(Error::NotInvertible {
            det: det.norm() * scale.powi(4),
        }),
    }
}
