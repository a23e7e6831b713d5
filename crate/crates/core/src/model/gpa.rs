use serde::{Deserialize, Serialize};

use super::{init::versor_init_matrix, Matrix};
use crate::algebra::{geometric_product_bitmask, scalar_product_fast, Multivector, Signature};
use crate::autodiff::{Tape, Var};
use crate::{Error, Result};

const D: usize = 32;

/// Query, key and value lifts (`d_in × 32` each) and the bivector weight γ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpaParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub gamma: f64,
}

impl GpaParams {
    pub fn init(d_in: usize, gamma: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            w_q: versor_init_matrix(d_in, D, d_in, rng)?,
            w_k: versor_init_matrix(d_in, D, d_in, rng)?,
            w_v: versor_init_matrix(d_in, D, d_in, rng)?,
            gamma,
        })
    }

    pub fn d_in(&self) -> usize {
        self.w_q.rows()
    }

    fn check(&self) -> Result<()> {
        let d = self.d_in();
        for (name, w) in [("w_q", &self.w_q), ("w_k", &self.w_k), ("w_v", &self.w_v)] {
            if w.rows() != d || w.cols() != D {
                return Err(Error::Shape(format!(
                    "{name} is {}x{}, expected {d}x{D}",
                    w.rows(),
                    w.cols()
                )));
            }
        }
        if !self.gamma.is_finite() {
            return Err(Error::NonFinite("gamma".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpaOutput {
    /// `L × 32` attended multivectors.
    pub outputs: Matrix,
    /// Row-stochastic `L × L` attention weights.
    pub attention: Matrix,
    /// `⟨Q_i K~_j⟩₀`.
    pub scalar_map: Matrix,
    /// `‖⟨Q_i K~_j⟩₂‖`.
    pub bivector_map: Matrix,
}

fn lift_rows(features: &Matrix, w: &Matrix) -> Result<Vec<Multivector>> {
    let sig = Signature::cl41();
    (0..features.rows())
        .map(|i| Multivector::from_coeffs(sig, w.left_mul(features.row(i))))
        .collect()
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        z += *v;
    }
    for v in row.iter_mut() {
        *v /= z;
    }
}

/// Attention over `L` tokens with `d_in` features each.
pub fn gpa_forward(features: &Matrix, params: &GpaParams) -> Result<GpaOutput> {
    params.check()?;
    let l = features.rows();
    if l == 0 {
        return Err(Error::Shape("attention needs at least one token".into()));
    }
    if features.cols() != params.d_in() {
        return Err(Error::Shape(format!(
            "features have {} columns, weights expect {}",
            features.cols(),
            params.d_in()
        )));
    }
    if !features.is_finite() {
        return Err(Error::NonFinite("attention features".into()));
    }
    let q = lift_rows(features, &params.w_q)?;
    let k = lift_rows(features, &params.w_k)?;
    let v = lift_rows(features, &params.w_v)?;
    let k_rev: Vec<Multivector> = k.iter().map(Multivector::reverse).collect();
    let scale = 1.0 / (params.d_in() as f64).sqrt();

    let mut scalar_map = Matrix::zeros(l, l);
    let mut bivector_map = Matrix::zeros(l, l);
    let mut attention = Matrix::zeros(l, l);
    for i in 0..l {
        for j in 0..l {
            let s = scalar_product_fast(&q[i], &k[j])?;
            let b = geometric_product_bitmask(&q[i], &k_rev[j])?.grade_coeff_norm(2);
            scalar_map.set(i, j, s);
            bivector_map.set(i, j, b);
            attention.set(i, j, (s + params.gamma * b) * scale);
        }
        softmax_in_place(&mut attention.data_mut()[i * l..(i + 1) * l]);
    }
    let mut outputs = Matrix::zeros(l, D);
    for i in 0..l {
        for (j, vj) in v.iter().enumerate() {
            let a = attention.get(i, j);
            for (o, c) in outputs.data_mut()[i * D..(i + 1) * D]
                .iter_mut()
                .zip(vj.coeffs())
            {
                *o += a * c;
            }
        }
    }
    Ok(GpaOutput {
        outputs,
        attention,
        scalar_map,
        bivector_map,
    })
}

/// Tape handles for the attention parameters.
#[derive(Clone, Copy, Debug)]
pub struct GpaVars {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub gamma: Var,
    pub d_in: usize,
}

impl GpaVars {
    pub fn register(tape: &mut Tape, params: &GpaParams) -> Self {
        Self {
            w_q: tape.leaf(params.w_q.data().to_vec()),
            w_k: tape.leaf(params.w_k.data().to_vec()),
            w_v: tape.leaf(params.w_v.data().to_vec()),
            gamma: tape.leaf(vec![params.gamma]),
            d_in: params.d_in(),
        }
    }
}

pub struct GpaTapeOutput {
    pub outputs: Vec<Var>,
    pub attention: Vec<Var>,
}

/// Differentiable attention; `tokens` are nodes of length `d_in`.
pub fn gpa_forward_tape(tape: &mut Tape, tokens: &[Var], vars: &GpaVars) -> Result<GpaTapeOutput> {
    if tokens.is_empty() {
        return Err(Error::Shape("attention needs at least one token".into()));
    }
    let sig = Signature::cl41();
    let d = vars.d_in;
    let mut q = Vec::with_capacity(tokens.len());
    let mut k_rev = Vec::with_capacity(tokens.len());
    let mut k = Vec::with_capacity(tokens.len());
    let mut v = Vec::with_capacity(tokens.len());
    for &t in tokens {
        q.push(tape.linear(t, vars.w_q, d, D)?);
        let kt = tape.linear(t, vars.w_k, d, D)?;
        k.push(kt);
        k_rev.push(tape.reverse(kt));
        v.push(tape.linear(t, vars.w_v, d, D)?);
    }
    let scale = 1.0 / (d as f64).sqrt();
    let mut outputs = Vec::with_capacity(tokens.len());
    let mut attention = Vec::with_capacity(tokens.len());
    for &qi in &q {
        let mut scores = Vec::with_capacity(tokens.len());
        for (&kj, &kr) in k.iter().zip(&k_rev) {
            let s = tape.scalar_product(qi, kj, sig)?;
            let prod = tape.gp(qi, kr, sig)?;
            let b = tape.grade_norm(prod, 2);
            let gb = tape.scale_by(b, vars.gamma)?;
            let sum = tape.add(s, gb)?;
            scores.push(tape.scale(sum, scale));
        }
        let row = tape.concat(&scores);
        let alpha = tape.softmax(row);
        outputs.push(tape.weighted_sum(alpha, &v)?);
        attention.push(alpha);
    }
    Ok(GpaTapeOutput { outputs, attention })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(l: usize, d: usize, seed: u64) -> (Matrix, GpaParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = GpaParams::init(d, 0.5, &mut rng).unwrap();
        let f =
            Matrix::from_vec(l, d, (0..l * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        (f, p)
    }

    #[test]
    fn attention_rows_are_stochastic() {
        let (f, p) = setup(6, 4, 1);
        let out = gpa_forward(&f, &p).unwrap();
        for i in 0..6 {
            let s: f64 = out.attention.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(out.attention.row(i).iter().all(|&a| a >= 0.0));
        }
    }

    #[test]
    fn score_decomposes_into_scalar_and_bivector_parts() {
        let (f, p) = setup(4, 3, 2);
        let out = gpa_forward(&f, &p).unwrap();
        let scale = 1.0 / 3f64.sqrt();
        for i in 0..4 {
            let logits: Vec<f64> = (0..4)
                .map(|j| (out.scalar_map.get(i, j) + p.gamma * out.bivector_map.get(i, j)) * scale)
                .collect();
            let mut expect = logits.clone();
            softmax_in_place(&mut expect);
            for j in 0..4 {
                assert!((expect[j] - out.attention.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gamma_zero_reduces_to_scalar_attention() {
        let (f, mut p) = setup(5, 3, 3);
        p.gamma = 0.0;
        let out = gpa_forward(&f, &p).unwrap();
        let mut row: Vec<f64> = (0..5)
            .map(|j| out.scalar_map.get(0, j) / 3f64.sqrt())
            .collect();
        softmax_in_place(&mut row);
        for j in 0..5 {
            assert!((row[j] - out.attention.get(0, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn tape_matches_plain_forward() {
        let (f, p) = setup(4, 3, 4);
        let plain = gpa_forward(&f, &p).unwrap();
        let mut tape = Tape::new();
        let vars = GpaVars::register(&mut tape, &p);
        let tokens: Vec<Var> = (0..4).map(|i| tape.leaf(f.row(i).to_vec())).collect();
        let out = gpa_forward_tape(&mut tape, &tokens, &vars).unwrap();
        for i in 0..4 {
            for (a, b) in tape.value(out.outputs[i]).iter().zip(plain.outputs.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in tape
                .value(out.attention[i])
                .iter()
                .zip(plain.attention.row(i))
            {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let (f, p) = setup(3, 4, 5);
        let wrong = Matrix::zeros(3, 5);
        assert!(matches!(gpa_forward(&wrong, &p), Err(Error::Shape(_))));
        let mut bad = f.clone();
        bad.set(0, 0, f64::NAN);
        assert!(matches!(gpa_forward(&bad, &p), Err(Error::NonFinite(_))));
        assert!(matches!(
            gpa_forward(&Matrix::zeros(0, 4), &p),
            Err(Error::Shape(_))
        ));
    }
}
