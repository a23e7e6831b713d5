//! Conformal lifting, rotors and the Cayley map in `Cl(4,1)`.
//!
//! Generator bits: `e1 = 1`, `e2 = 2`, `e3 = 4`, `e+ = 8`, `e- = 16`. The null
//! basis is `e_o = ½(e- − e+)` and `e_∞ = e- + e+`.

use crate::algebra::{
    geometric_product_bitmask, reverse, scalar_norm, scalar_product_fast, BladeIndex, Multivector,
    Signature,
};
use crate::{matrix_iso, Error, Result};

pub const E_PLUS: BladeIndex = BladeIndex(8);
pub const E_MINUS: BladeIndex = BladeIndex(16);

/// Largest tolerated `|⟨R R~⟩₀ − 1|` for a value to act as a rotor.
pub const ROTOR_NORM_TOL: f64 = 1e-6;
/// Largest tolerated odd-grade mass, relative to total mass.
pub const ODD_MASS_TOL: f64 = 1e-9;
/// Smallest `⟨Ψ Ψ~⟩₀` manifold normalization accepts.
pub const NORM_EPS: f64 = 1e-12;

fn require_cl41(sig: Signature) -> Result<()> {
    if !sig.is_cl41() {
        return Err(Error::WrongSignature(sig.to_string()));
    }
    Ok(())
}

/// `(e_o, e_∞)` for `Cl(4,1)`.
pub fn null_basis(sig: Signature) -> Result<(Multivector, Multivector)> {
    require_cl41(sig)?;
    let mut eo = Multivector::zero(sig);
    eo.set(E_MINUS, 0.5);
    eo.set(E_PLUS, -0.5);
    let mut einf = Multivector::zero(sig);
    einf.set(E_MINUS, 1.0);
    einf.set(E_PLUS, 1.0);
    Ok((eo, einf))
}

/// A lifted Euclidean point `X = x + ½x² e_∞ + e_o` (a null vector).
#[derive(Clone, Debug, PartialEq)]
pub struct ConformalPoint {
    mv: Multivector,
}

impl ConformalPoint {
    pub fn multivector(&self) -> &Multivector {
        &self.mv
    }

    pub fn into_multivector(self) -> Multivector {
        self.mv
    }

    /// Euclidean coordinates, reading `x` back off the grade-1 part after
    /// dividing by the `e_o` weight.
    pub fn euclidean(&self) -> [f64; 3] {
        let w = self.origin_weight();
        [
            self.mv.get(BladeIndex(1)) / w,
            self.mv.get(BladeIndex(2)) / w,
            self.mv.get(BladeIndex(4)) / w,
        ]
    }

    /// Coefficient of `e_o` (1 for a freshly lifted point).
    pub fn origin_weight(&self) -> f64 {
        // X = a e+ + b e- with e_o weight = b - a.
        self.mv.get(E_MINUS) - self.mv.get(E_PLUS)
    }
}

/// Lifts a point with up to three coordinates; missing ones are zero.
pub fn lift(x: &[f64]) -> Result<ConformalPoint> {
    if x.len() > 3 {
        return Err(Error::Shape(format!("{} coordinates (at most 3)", x.len())));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("coordinate {v}")));
    }
    let sig = Signature::cl41();
    let mut mv = Multivector::zero(sig);
    for (k, &c) in x.iter().enumerate() {
        mv.set(BladeIndex(1 << k), c);
    }
    let half_sq = 0.5 * x.iter().map(|c| c * c).sum::<f64>();
    // ½x²(e- + e+) + ½(e- − e+)
    mv.set(E_PLUS, half_sq - 0.5);
    mv.set(E_MINUS, half_sq + 0.5);
    Ok(ConformalPoint { mv })
}

/// `X1 · X2 = −½‖x1 − x2‖²`.
pub fn conformal_inner(a: &ConformalPoint, b: &ConformalPoint) -> f64 {
    // Vectors are fixed by reversion, so ⟨a b~⟩₀ is the inner product.
    scalar_product_fast(&a.mv, &b.mv).expect("conformal points share Cl(4,1)")
}

/// An even-grade element with unit reversion norm.
#[derive(Clone, Debug, PartialEq)]
pub struct Rotor {
    mv: Multivector,
}

impl Rotor {
    /// Accepts `mv` if it is even (odd mass ≤ 1e-9 of the total) and
    /// `|⟨R R~⟩₀ − 1| ≤ 1e-6`.
    pub fn new(mv: Multivector) -> Result<Self> {
        check_even(&mv)?;
        let norm = scalar_norm(&mv);
        if (norm - 1.0).abs() > ROTOR_NORM_TOL {
            return Err(Error::NotARotor(format!("<R R~>_0 = {norm}, expected 1")));
        }
        Ok(Self { mv })
    }

    pub fn identity() -> Self {
        Self {
            mv: Multivector::one(Signature::cl41()),
        }
    }

    pub fn multivector(&self) -> &Multivector {
        &self.mv
    }

    pub fn into_multivector(self) -> Multivector {
        self.mv
    }

    pub fn reverse(&self) -> Self {
        Self {
            mv: reverse(&self.mv),
        }
    }

    /// `self · other`, renormalized.
    pub fn compose(&self, other: &Rotor) -> Result<Rotor> {
        manifold_normalize(&geometric_product_bitmask(&self.mv, &other.mv)?)
    }

    pub fn sandwich(&self, x: &Multivector) -> Result<Multivector> {
        sandwich(self, x)
    }
}

fn check_even(mv: &Multivector) -> Result<()> {
    require_cl41(mv.signature())?;
    let total: f64 = mv.coeffs().iter().map(|c| c * c).sum();
    let odd = mv.odd_mass();
    if odd > ODD_MASS_TOL * total.max(f64::MIN_POSITIVE) {
        return Err(Error::NotARotor(format!(
            "odd-grade mass {odd:e} of {total:e}"
        )));
    }
    Ok(())
}

/// `R X R~`.
pub fn sandwich(r: &Rotor, x: &Multivector) -> Result<Multivector> {
    let norm = scalar_norm(&r.mv);
    if (norm - 1.0).abs() > ROTOR_NORM_TOL {
        return Err(Error::NotARotor(format!(
            "unnormalized rotor, <R R~>_0 = {norm}"
        )));
    }
    let rx = geometric_product_bitmask(&r.mv, x)?;
    geometric_product_bitmask(&rx, &reverse(&r.mv))
}

/// `T = 1 − ½ t e_∞`.
pub fn translator(t: &[f64]) -> Result<Rotor> {
    if t.len() > 3 {
        return Err(Error::Shape(format!(
            "{} translation components (at most 3)",
            t.len()
        )));
    }
    if let Some(v) = t.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("translation component {v}")));
    }
    let mut mv = Multivector::one(Signature::cl41());
    for (k, &c) in t.iter().enumerate() {
        let ek = 1u32 << k;
        // t_k e_k (e+ + e-): both blades keep ascending order.
        mv.set(BladeIndex(ek | E_PLUS.mask()), -0.5 * c);
        mv.set(BladeIndex(ek | E_MINUS.mask()), -0.5 * c);
    }
    Ok(Rotor { mv })
}

/// Multivector inverse through `Mat(4, ℂ)`.
pub fn mv_inverse(a: &Multivector) -> Result<Multivector> {
    matrix_iso::invert(a)
}

/// Grade-2 element of `Cl(4,1)`, coefficients over [`bivector_basis`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Bivector(pub [f64; 10]);

/// Kind of symmetry a bivector blade generates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorClass {
    /// `e12, e13, e23`: the `so(3)` subalgebra.
    Rotation,
    /// `e+-`, proportional to `e_o ∧ e_∞`.
    Dilation,
    /// `e_i e±` mixes a translation `e_i e_∞` and a special conformal
    /// transformation `e_i e_o`.
    TranslationConformal,
}

/// Metadata for one grade-2 blade.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BivectorBlade {
    pub blade: BladeIndex,
    pub class: GeneratorClass,
    /// Weights `(τ, κ)` with `blade = τ · e_i e_∞ + κ · e_i e_o` for the mixed
    /// class, zero otherwise.
    pub translation_weight: f64,
    pub conformal_weight: f64,
}

/// The ten grade-2 masks in ascending order.
pub const BIVECTOR_MASKS: [u32; 10] = [3, 5, 6, 9, 10, 12, 17, 18, 20, 24];

pub fn bivector_basis() -> [BivectorBlade; 10] {
    BIVECTOR_MASKS.map(|mask| {
        let blade = BladeIndex(mask);
        let spatial = mask & 0b111;
        if mask & 0b11000 == 0 {
            BivectorBlade {
                blade,
                class: GeneratorClass::Rotation,
                translation_weight: 0.0,
                conformal_weight: 0.0,
            }
        } else if spatial == 0 {
            BivectorBlade {
                blade,
                class: GeneratorClass::Dilation,
                translation_weight: 0.0,
                conformal_weight: 0.0,
            }
        } else if mask & E_PLUS.mask() != 0 {
            // e+ = ½e_∞ − e_o
            BivectorBlade {
                blade,
                class: GeneratorClass::TranslationConformal,
                translation_weight: 0.5,
                conformal_weight: -1.0,
            }
        } else {
            // e- = ½e_∞ + e_o
            BivectorBlade {
                blade,
                class: GeneratorClass::TranslationConformal,
                translation_weight: 0.5,
                conformal_weight: 1.0,
            }
        }
    })
}

impl Bivector {
    pub fn to_multivector(&self) -> Multivector {
        let mut mv = Multivector::zero(Signature::cl41());
        for (&mask, &c) in BIVECTOR_MASKS.iter().zip(&self.0) {
            mv.set(BladeIndex(mask), c);
        }
        mv
    }

    /// Reads the grade-2 part; other grades are ignored.
    pub fn from_multivector(mv: &Multivector) -> Result<Self> {
        require_cl41(mv.signature())?;
        Ok(Self(BIVECTOR_MASKS.map(|m| mv.get(BladeIndex(m)))))
    }

    /// `θ e12`.
    pub fn rotation_xy(theta: f64) -> Self {
        let mut b = Self::default();
        b.0[0] = theta;
        b
    }
}

/// `ΔR = (2 − B)(2 + B)⁻¹`.
pub fn cayley_rotor(b: &Bivector) -> Result<Rotor> {
    let bm = b.to_multivector();
    if !bm.is_finite() {
        return Err(Error::NonFinite("bivector coefficient".into()));
    }
    cayley_from_multivector(&bm)
}

pub(crate) fn cayley_from_multivector(bm: &Multivector) -> Result<Rotor> {
    let sig = bm.signature();
    let two = Multivector::scalar(sig, 2.0);
    let minus = &two - bm;
    let plus = &two + bm;
    let plus_inv = match mv_inverse(&plus) {
        Ok(inv) => inv,
        Err(Error::NotInvertible { .. }) => return Err(Error::CayleySingular),
        Err(e) => return Err(e),
    };
    let r = geometric_product_bitmask(&minus, &plus_inv)?;
    Rotor::new(r).map_err(|_| Error::CayleySingular)
}

/// `Ψ / √⟨Ψ Ψ~⟩₀`.
pub fn manifold_normalize(psi: &Multivector) -> Result<Rotor> {
    require_cl41(psi.signature())?;
    let norm = scalar_norm(psi);
    if !(norm > NORM_EPS) || !norm.is_finite() {
        return Err(Error::DegenerateState { norm });
    }
    let mv = psi.scale(1.0 / norm.sqrt());
    check_even(&mv)?;
    Ok(Rotor { mv })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cl41() -> Signature {
        Signature::cl41()
    }

    #[test]
    fn null_basis_relations() {
        let (eo, einf) = null_basis(cl41()).unwrap();
        assert_eq!(scalar_norm(&eo), 0.0);
        assert_eq!(scalar_norm(&einf), 0.0);
        assert_eq!(scalar_product_fast(&eo, &einf).unwrap(), -1.0);
        assert_eq!(einf.get(E_PLUS), 1.0);
        assert_eq!(einf.get(E_MINUS), 1.0);
        // e_o e_o = 0 as a full product, not only its scalar part.
        assert_eq!(
            geometric_product_bitmask(&eo, &eo).unwrap().coeff_norm(),
            0.0
        );
        assert!(null_basis(Signature::pq(3, 0).unwrap()).is_err());
    }

    #[test]
    fn lift_examples() {
        let (eo, einf) = null_basis(cl41()).unwrap();
        assert_eq!(lift(&[0.0, 0.0, 0.0]).unwrap().multivector(), &eo);
        let mut expected = &eo + &einf.scale(0.5);
        expected.set(BladeIndex(1), 1.0);
        assert_eq!(lift(&[1.0, 0.0, 0.0]).unwrap().multivector(), &expected);
        assert_eq!(lift(&[1.0, 0.0]).unwrap(), lift(&[1.0, 0.0, 0.0]).unwrap());
        assert!(lift(&[f64::NAN]).is_err());
        assert!(lift(&[0.0; 4]).is_err());
        let p = lift(&[1.5, -2.0, 0.25]).unwrap();
        assert_eq!(p.origin_weight(), 1.0);
        assert_eq!(p.euclidean(), [1.5, -2.0, 0.25]);
    }

    #[test]
    fn inner_product_examples() {
        let o = lift(&[0.0, 0.0, 0.0]).unwrap();
        let p = lift(&[2.0, 0.0, 0.0]).unwrap();
        assert_eq!(conformal_inner(&o, &p), -2.0);
        assert_eq!(conformal_inner(&p, &p), 0.0);
    }

    #[test]
    fn translator_moves_points() {
        assert_eq!(translator(&[0.0, 0.0, 0.0]).unwrap(), Rotor::identity());
        let t = translator(&[1.0, 2.0, 0.0]).unwrap();
        let tt = geometric_product_bitmask(t.multivector(), &reverse(t.multivector())).unwrap();
        assert!(tt.max_abs_diff(&Multivector::one(cl41())) < 1e-15);
        let moved = sandwich(&t, lift(&[0.0, 0.0, 0.0]).unwrap().multivector()).unwrap();
        assert!(moved.max_abs_diff(lift(&[1.0, 2.0, 0.0]).unwrap().multivector()) < 1e-12);
        let moved = sandwich(&t, lift(&[-3.0, 0.5, 4.0]).unwrap().multivector()).unwrap();
        assert!(moved.max_abs_diff(lift(&[-2.0, 2.5, 4.0]).unwrap().multivector()) < 1e-9);
    }

    #[test]
    fn identity_sandwich() {
        let x = lift(&[0.3, 0.1, -0.7]).unwrap().into_multivector();
        assert_eq!(sandwich(&Rotor::identity(), &x).unwrap(), x);
    }

    #[test]
    fn cayley_basics() {
        assert!(
            cayley_rotor(&Bivector::default())
                .unwrap()
                .multivector()
                .max_abs_diff(&Multivector::one(cl41()))
                < 1e-15
        );
        let theta = 1e-4;
        let r = cayley_rotor(&Bivector::rotation_xy(theta)).unwrap();
        let mut first_order = Multivector::one(cl41());
        first_order.set(BladeIndex(3), -theta);
        assert!(r.multivector().max_abs_diff(&first_order) < 2.0 * theta * theta);
    }

    #[test]
    fn cayley_rotation_matches_rotation_matrix() {
        // (2 − θe12)/(2 + θe12) = cos φ − sin φ e12 with φ = 2 atan(θ/2), which
        // rotates vectors by 2φ in the e1e2 plane.
        let theta = 0.7;
        let r = cayley_rotor(&Bivector::rotation_xy(theta)).unwrap();
        let angle = 4.0 * (theta / 2.0).atan();
        let x = lift(&[1.0, 0.0, 0.0]).unwrap();
        let y = sandwich(&r, x.multivector()).unwrap();
        let expected = lift(&[angle.cos(), angle.sin(), 0.0]).unwrap();
        assert!(y.max_abs_diff(expected.multivector()) < 1e-12, "{y:?}");
        assert!(scalar_norm(&y).abs() < 1e-12);
    }

    #[test]
    fn cayley_singular_boost() {
        // e1 e- squares to +1, so B = 2 e1e- has eigenvalue -2.
        let mut b = Bivector::default();
        b.0[6] = 2.0;
        assert!(matches!(cayley_rotor(&b), Err(Error::CayleySingular)));
    }

    #[test]
    fn normalization() {
        let two = Multivector::scalar(cl41(), 2.0);
        assert_eq!(manifold_normalize(&two).unwrap(), Rotor::identity());
        let r = cayley_rotor(&Bivector([
            0.1, -0.2, 0.3, 0.05, 0.0, 0.1, -0.1, 0.2, 0.0, 0.3,
        ]))
        .unwrap();
        let back = manifold_normalize(&r.multivector().scale(3.0)).unwrap();
        assert!(back.multivector().max_abs_diff(r.multivector()) < 1e-15);
        let again = manifold_normalize(back.multivector()).unwrap();
        assert!(again.multivector().max_abs_diff(back.multivector()) < 1e-12);
        assert!(matches!(
            manifold_normalize(&Multivector::zero(cl41())),
            Err(Error::DegenerateState { .. })
        ));
        // e1e- squares to +1, so its reversion norm is −1.
        let neg = Multivector::blade(cl41(), BladeIndex(17), 1.0);
        assert!(matches!(
            manifold_normalize(&neg),
            Err(Error::DegenerateState { .. })
        ));
    }

    #[test]
    fn rotor_rejects_odd_or_unnormalized() {
        let v = Multivector::blade(cl41(), BladeIndex(1), 1.0);
        assert!(matches!(Rotor::new(v), Err(Error::NotARotor(_))));
        assert!(Rotor::new(Multivector::scalar(cl41(), 1.5)).is_err());
    }

    #[test]
    fn mv_inverse_examples() {
        let two = Multivector::scalar(cl41(), 2.0);
        assert!(
            mv_inverse(&two)
                .unwrap()
                .max_abs_diff(&Multivector::scalar(cl41(), 0.5))
                < 1e-15
        );
        let e1 = Multivector::blade(cl41(), BladeIndex(1), 1.0);
        assert!(mv_inverse(&e1).unwrap().max_abs_diff(&e1) < 1e-15);
    }

    #[test]
    fn bivector_basis_metadata() {
        let basis = bivector_basis();
        assert_eq!(basis.len(), 10);
        assert_eq!(basis[0].blade, BladeIndex(3));
        for w in basis.windows(2) {
            assert!(w[0].blade < w[1].blade);
        }
        for b in &basis {
            assert_eq!(b.blade.grade(), 2);
        }
        let rotations: Vec<u32> = basis
            .iter()
            .filter(|b| b.class == GeneratorClass::Rotation)
            .map(|b| b.blade.mask())
            .collect();
        assert_eq!(rotations, vec![3, 5, 6]);
        assert_eq!(basis[9].class, GeneratorClass::Dilation);
        // Check the mixed decomposition: blade = τ e_i e_∞ + κ e_i e_o.
        let (eo, einf) = null_basis(cl41()).unwrap();
        for b in basis
            .iter()
            .filter(|b| b.class == GeneratorClass::TranslationConformal)
        {
            let ei = Multivector::blade(cl41(), BladeIndex(b.blade.mask() & 0b111), 1.0);
            let rebuilt = &geometric_product_bitmask(&ei, &einf)
                .unwrap()
                .scale(b.translation_weight)
                + &geometric_product_bitmask(&ei, &eo)
                    .unwrap()
                    .scale(b.conformal_weight);
            assert!(rebuilt.max_abs_diff(&Multivector::blade(cl41(), b.blade, 1.0)) < 1e-15);
        }
    }
}
