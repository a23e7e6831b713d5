use serde::{Deserialize, Serialize};

use super::{init::versor_init_matrix, Matrix};
use crate::algebra::{geometric_product_bitmask, Multivector, Signature};
use crate::autodiff::{Tape, Var};
use crate::conformal::{
    cayley_from_multivector, manifold_normalize, Rotor, BIVECTOR_MASKS, NORM_EPS,
};
use crate::{Error, Result};

const D: usize = 32;
const NB: usize = 10;

/// Which of the 10 bivector generators the projection may drive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorSet {
    /// All of `Spin(4,1)`, boosts and dilation included. Boost rapidities
    /// compound over long sequences and the coefficients grow without bound.
    Full,
    /// The compact `Spin(4)` generators over `e1, e2, e3, e+`.
    #[default]
    Compact,
}

impl GeneratorSet {
    /// Bit `k` set when slot `k` of [`BIVECTOR_MASKS`] is active.
    pub fn keep_mask(self) -> u16 {
        match self {
            Self::Full => 0x3ff,
            Self::Compact => BIVECTOR_MASKS
                .iter()
                .enumerate()
                .filter(|(_, &m)| m & 16 == 0)
                .fold(0, |acc, (k, _)| acc | 1 << k),
        }
    }
}

impl std::str::FromStr for GeneratorSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "compact" => Ok(Self::Compact),
            other => Err(Error::InvalidArgument(format!(
                "unknown generator set {other:?}"
            ))),
        }
    }
}

/// Lift (`d_in × 32`), bivector projection (`32 × 10`) and readout (`32 × d_out`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RraParams {
    pub lift: Matrix,
    pub w_b: Matrix,
    pub readout: Matrix,
    #[serde(default)]
    pub generators: GeneratorSet,
}

impl RraParams {
    pub fn init(d_in: usize, d_out: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            lift: versor_init_matrix(d_in, D, d_in, rng)?,
            w_b: versor_init_matrix(D, NB, D, rng)?,
            readout: versor_init_matrix(D, d_out, D, rng)?,
            generators: GeneratorSet::default(),
        })
    }

    pub fn d_in(&self) -> usize {
        self.lift.rows()
    }

    pub fn d_out(&self) -> usize {
        self.readout.cols()
    }

    pub fn parameter_count(&self) -> usize {
        self.lift.data().len() + self.w_b.data().len() + self.readout.data().len()
    }

    fn check(&self) -> Result<()> {
        if self.lift.cols() != D
            || self.w_b.rows() != D
            || self.w_b.cols() != NB
            || self.readout.rows() != D
        {
            return Err(Error::Shape(format!(
                "recurrent weights {}x{}, {}x{}, {}x{}",
                self.lift.rows(),
                self.lift.cols(),
                self.w_b.rows(),
                self.w_b.cols(),
                self.readout.rows(),
                self.readout.cols()
            )));
        }
        Ok(())
    }
}

/// Recurrent state: the accumulated rotor and the number of steps taken.
#[derive(Clone, Debug, PartialEq)]
pub struct VersorState {
    pub psi: Multivector,
    pub step: usize,
}

impl VersorState {
    pub fn identity() -> Self {
        Self {
            psi: Multivector::one(Signature::cl41()),
            step: 0,
        }
    }
}

impl Default for VersorState {
    fn default() -> Self {
        Self::identity()
    }
}

/// Streaming recurrence: constant memory in the sequence length.
#[derive(Clone, Debug)]
pub struct RraCell<'a> {
    params: &'a RraParams,
    state: VersorState,
    normalize: bool,
}

impl<'a> RraCell<'a> {
    pub fn new(params: &'a RraParams) -> Result<Self> {
        params.check()?;
        Ok(Self {
            params,
            state: VersorState::identity(),
            normalize: true,
        })
    }

    /// Disables manifold normalization (ablation only).
    pub fn without_normalization(mut self) -> Self {
        self.normalize = false;
        self
    }

    pub fn state(&self) -> &VersorState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state = VersorState::identity();
    }

    /// Consumes one input row and returns the readout for this step.
    pub fn step(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.params;
        if x.len() != p.d_in() {
            return Err(Error::Shape(format!(
                "input has {} features, expected {}",
                x.len(),
                p.d_in()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "input at step {}",
                self.state.step
            )));
        }
        let sig = Signature::cl41();
        let step = self.state.step;
        let u = Multivector::from_coeffs_unchecked(sig, p.lift.left_mul(x));
        let b10 = p.w_b.left_mul(u.coeffs());
        let keep = p.generators.keep_mask();
        let mut b = Multivector::zero(sig);
        for (k, (&m, &c)) in BIVECTOR_MASKS.iter().zip(&b10).enumerate() {
            if keep >> k & 1 == 1 {
                b.coeffs_mut()[m as usize] = c;
            }
        }
        let delta = match cayley_from_multivector(&b) {
            Ok(r) => r,
            Err(Error::CayleySingular) => return Err(Error::CayleySingularAt { step }),
            Err(e) => return Err(e),
        };
        let next = geometric_product_bitmask(delta.multivector(), &self.state.psi)?;
        let psi = if self.normalize {
            match manifold_normalize(&next) {
                Ok(r) => r.into_multivector(),
                Err(Error::DegenerateState { norm }) => {
                    return Err(Error::DegenerateStateAt { step, norm })
                }
                Err(e) => return Err(e),
            }
        } else {
            if !next.is_finite() {
                return Err(Error::NonFinite(format!("recurrent state at step {step}")));
            }
            next
        };
        let unit = psi.scale(1.0 / psi.coeff_norm().max(NORM_EPS));
        let y = geometric_product_bitmask(&geometric_product_bitmask(&unit, &u)?, &unit.reverse())?;
        self.state = VersorState {
            psi,
            step: step + 1,
        };
        Ok(p.readout.left_mul(y.coeffs()))
    }
}

/// States `Ψ_1..Ψ_L` and the `L × d_out` readouts of a full pass.
#[derive(Clone, Debug, PartialEq)]
pub struct RraOutput {
    pub states: Vec<Rotor>,
    pub outputs: Matrix,
}

impl RraOutput {
    /// Final state, identity for an empty sequence.
    pub fn last(&self) -> Rotor {
        self.states.last().cloned().unwrap_or_else(Rotor::identity)
    }
}

pub fn rra_forward(features: &Matrix, params: &RraParams) -> Result<RraOutput> {
    let mut cell = RraCell::new(params)?;
    let mut states = Vec::with_capacity(features.rows());
    let mut out = Vec::with_capacity(features.rows() * params.d_out());
    for t in 0..features.rows() {
        out.extend(cell.step(features.row(t))?);
        states.push(Rotor::new(cell.state.psi.clone())?);
    }
    Ok(RraOutput {
        states,
        outputs: Matrix::from_vec(features.rows(), params.d_out(), out)?,
    })
}

/// Final state and readouts, optionally without manifold normalization.
pub fn rra_forward_with(
    features: &Matrix,
    params: &RraParams,
    normalize: bool,
) -> Result<(Multivector, Matrix)> {
    let mut cell = RraCell::new(params)?;
    if !normalize {
        cell = cell.without_normalization();
    }
    let mut out = Vec::with_capacity(features.rows() * params.d_out());
    for t in 0..features.rows() {
        out.extend(cell.step(features.row(t))?);
    }
    let psi = cell.state.psi;
    Ok((psi, Matrix::from_vec(features.rows(), params.d_out(), out)?))
}

/// `Ψ = normalize(ΔR_L ⋯ ΔR_1)` with normalization after every step.
pub fn accumulate_rotors(rotors: &[Rotor]) -> Result<Rotor> {
    let mut psi = Rotor::identity();
    for r in rotors {
        psi = r.compose(&psi)?;
    }
    Ok(psi)
}

/// Tape handles for the recurrent parameters.
#[derive(Clone, Copy, Debug)]
pub struct RraVars {
    pub lift: Var,
    pub w_b: Var,
    pub readout: Var,
    pub d_in: usize,
    pub d_out: usize,
    pub generators: GeneratorSet,
}

impl RraVars {
    pub fn register(tape: &mut Tape, params: &RraParams) -> Self {
        Self {
            lift: tape.leaf(params.lift.data().to_vec()),
            w_b: tape.leaf(params.w_b.data().to_vec()),
            readout: tape.leaf(params.readout.data().to_vec()),
            d_in: params.d_in(),
            d_out: params.d_out(),
            generators: params.generators,
        }
    }

    /// Differentiable unrolled recurrence; returns per-step readouts and the
    /// final state node.
    pub fn forward(
        &self,
        tape: &mut Tape,
        inputs: &[Var],
        normalize: bool,
    ) -> Result<(Vec<Var>, Var)> {
        let sig = Signature::cl41();
        let mut psi = tape.leaf_mv(&Multivector::one(sig));
        let mut outs = Vec::with_capacity(inputs.len());
        for (step, &x) in inputs.iter().enumerate() {
            let u = tape.linear(x, self.lift, self.d_in, D)?;
            let b10 = tape.linear(u, self.w_b, D, NB)?;
            let b = tape.embed_bivector_masked(b10, self.generators.keep_mask())?;
            let neg = tape.scale(b, -1.0);
            let minus = tape.shift_scalar(neg, 2.0);
            let plus = tape.shift_scalar(b, 2.0);
            let inv = match tape.inverse(plus) {
                Ok(v) => v,
                Err(Error::NotInvertible { .. }) => return Err(Error::CayleySingularAt { step }),
                Err(e) => return Err(e),
            };
            let delta = tape.gp(minus, inv, sig)?;
            let next = tape.gp(delta, psi, sig)?;
            psi = if normalize {
                tape.normalize(next, sig)?
            } else {
                next
            };
            let unit = tape.unit_coeffs(psi);
            let left = tape.gp(unit, u, sig)?;
            let rev = tape.reverse(unit);
            let y = tape.gp(left, rev, sig)?;
            outs.push(tape.linear(y, self.readout, D, self.d_out)?);
        }
        Ok((outs, psi))
    }
}
