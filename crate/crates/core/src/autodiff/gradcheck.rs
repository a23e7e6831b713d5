use super::{Tape, Var};
use crate::{Error, Result};

/// Denominator floor for relative errors, so that near-zero gradients are
/// compared absolutely.
pub const GRADCHECK_FLOOR: f64 = 1e-3;

/// Compares tape gradients of a scalar function with central differences.
///
/// `f` receives a fresh tape and the leaf holding `x`, and returns the scalar
/// loss node. Step size is `h = 1e-6 · (1 + |x_i|)`. Returns the worst
/// `|analytic − numeric| / max(|analytic|, |numeric|, GRADCHECK_FLOOR)`.
pub fn grad_check<F>(f: F, x: &[f64]) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let eval = |point: &[f64]| -> Result<f64> {
        let mut tape = Tape::new();
        let leaf = tape.leaf(point.to_vec());
        let out = f(&mut tape, leaf)?;
        if tape.value(out).len() != 1 {
            return Err(Error::NonScalarLoss(tape.value(out).len()));
        }
        Ok(tape.scalar(out))
    };

    let mut tape = Tape::new();
    let leaf = tape.leaf(x.to_vec());
    let out = f(&mut tape, leaf)?;
    let f0 = tape.value(out).first().copied().unwrap_or(f64::NAN);
    if !f0.is_finite() {
        return Err(Error::NonFinite(format!("f(x) = {f0}")));
    }
    let grads = tape.backward(out)?;
    let analytic = grads.get(leaf);

    let mut worst = 0.0f64;
    let mut point = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        point[i] = x[i] + h;
        let up = eval(&point)?;
        point[i] = x[i] - h;
        let down = eval(&point)?;
        point[i] = x[i];
        let numeric = (up - down) / (2.0 * h);
        if !numeric.is_finite() {
            return Err(Error::NonFinite(format!(
                "finite difference at component {i}"
            )));
        }
        let denom = analytic[i].abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form_is_exact() {
        // f(x) = mean((x - t)^2)
        let target = [0.5, -1.0, 2.0];
        let err = grad_check(|t, x| t.mse(x, &target), &[1.0, 2.0, -3.0]).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn non_finite_value_is_rejected() {
        let r = grad_check(|t, x| t.mse(x, &[f64::INFINITY]), &[1.0]);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
