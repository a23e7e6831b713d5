use crate::algebra::product::{bitmask_kernel, row_sign_mask};
use crate::algebra::{reversion_sign, Multivector, Signature};
use crate::conformal::{BIVECTOR_MASKS, NORM_EPS};
use crate::{matrix_iso, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    /// Multiplies every component of the first node by the scalar second node.
    ScaleBy(Var, Var),
    ScaleConst(Var, f64),
    /// Adds a constant to component 0 (the scalar blade).
    ShiftScalar(Var),
    /// `y = xᵀ W` with `W` stored row-major as `in_dim × out_dim`.
    Linear {
        x: Var,
        w: Var,
        in_dim: usize,
        out_dim: usize,
    },
    Gp(Var, Var, Signature),
    Reverse(Var),
    Grade(Var, usize),
    /// `⟨a b~⟩₀`.
    ScalarProduct(Var, Var, Signature),
    /// Euclidean norm of the grade-`g` coefficients.
    GradeNorm(Var, usize),
    /// `a / √⟨a a~⟩₀`, denominator guarded at `NORM_EPS`.
    Normalize(Var, Signature),
    /// `a / ‖a‖` with the Euclidean coefficient norm, guarded at `NORM_EPS`.
    UnitCoeffs(Var),
    /// Multivector inverse (`Cl(4,1)`).
    Inverse(Var),
    /// Bit `k` of the mask keeps slot `k` of the 10 bivector coefficients.
    EmbedBivector(Var, u16),
    Softmax(Var),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    /// `Σ_k w_k · items_k`.
    WeightedSum {
        w: Var,
        items: Vec<Var>,
    },
    Mse {
        pred: Var,
        target: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Vec<f64>,
}

/// Append-only record of a forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every node after [`Tape::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    adjoints: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> &[f64] {
        &self.adjoints[v.0]
    }

    pub fn norm(&self, v: Var) -> f64 {
        self.get(v).iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn multivector(&self, v: Var, sig: Signature) -> Result<Multivector> {
        Multivector::from_coeffs(sig, self.value(v).to_vec())
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn len_of(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    fn same_len(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.len_of(a) != self.len_of(b) {
            return Err(Error::Shape(format!(
                "{what}: lengths {} and {}",
                self.len_of(a),
                self.len_of(b)
            )));
        }
        Ok(())
    }

    fn mv_len(&self, a: Var, sig: Signature, what: &str) -> Result<()> {
        if self.len_of(a) != sig.dim() {
            return Err(Error::Shape(format!(
                "{what}: {} components for {sig}",
                self.len_of(a)
            )));
        }
        Ok(())
    }

    pub fn leaf(&mut self, value: Vec<f64>) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn leaf_mv(&mut self, mv: &Multivector) -> Var {
        self.leaf(mv.coeffs().to_vec())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "add")?;
        let v = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "sub")?;
        let v = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x - y)
            .collect();
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.len_of(s) != 1 {
            return Err(Error::Shape("scale_by: scale must be a scalar node".into()));
        }
        let k = self.scalar(s);
        let v = self.value(x).iter().map(|c| c * k).collect();
        Ok(self.push(Op::ScaleBy(x, s), v))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let v = self.value(x).iter().map(|c| c * k).collect();
        self.push(Op::ScaleConst(x, k), v)
    }

    pub fn shift_scalar(&mut self, x: Var, k: f64) -> Var {
        let mut v = self.value(x).to_vec();
        v[0] += k;
        self.push(Op::ShiftScalar(x), v)
    }

    pub fn linear(&mut self, x: Var, w: Var, in_dim: usize, out_dim: usize) -> Result<Var> {
        if self.len_of(x) != in_dim || self.len_of(w) != in_dim * out_dim {
            return Err(Error::Shape(format!(
                "linear: x has {}, W has {} (expected {in_dim} and {in_dim}x{out_dim})",
                self.len_of(x),
                self.len_of(w)
            )));
        }
        let (xv, wv) = (self.value(x), self.value(w));
        let mut y = vec![0.0; out_dim];
        for (i, &xi) in xv.iter().enumerate() {
            for (k, yk) in y.iter_mut().enumerate() {
                *yk += xi * wv[i * out_dim + k];
            }
        }
        Ok(self.push(
            Op::Linear {
                x,
                w,
                in_dim,
                out_dim,
            },
            y,
        ))
    }

    pub fn gp(&mut self, a: Var, b: Var, sig: Signature) -> Result<Var> {
        self.mv_len(a, sig, "gp")?;
        self.mv_len(b, sig, "gp")?;
        let mut out = vec![0.0; sig.dim()];
        bitmask_kernel(sig, self.value(a), self.value(b), &mut out);
        Ok(self.push(Op::Gp(a, b, sig), out))
    }

    pub fn reverse(&mut self, a: Var) -> Var {
        let v = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(m, c)| c * reversion_sign(m as u32))
            .collect();
        self.push(Op::Reverse(a), v)
    }

    pub fn grade(&mut self, a: Var, g: usize) -> Var {
        let v = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(m, &c)| if m.count_ones() as usize == g { c } else { 0.0 })
            .collect();
        self.push(Op::Grade(a, g), v)
    }

    pub fn scalar_product(&mut self, a: Var, b: Var, sig: Signature) -> Result<Var> {
        self.mv_len(a, sig, "scalar_product")?;
        self.mv_len(b, sig, "scalar_product")?;
        let s =
            crate::algebra::product::scalar_product_unchecked(sig, self.value(a), self.value(b));
        Ok(self.push(Op::ScalarProduct(a, b, sig), vec![s]))
    }

    pub fn grade_norm(&mut self, a: Var, g: usize) -> Var {
        let s = self
            .value(a)
            .iter()
            .enumerate()
            .filter(|(m, _)| m.count_ones() as usize == g)
            .map(|(_, c)| c * c)
            .sum::<f64>()
            .sqrt();
        self.push(Op::GradeNorm(a, g), vec![s])
    }

    pub fn normalize(&mut self, a: Var, sig: Signature) -> Result<Var> {
        self.mv_len(a, sig, "normalize")?;
        let n =
            crate::algebra::product::scalar_product_unchecked(sig, self.value(a), self.value(a));
        let s = n.max(NORM_EPS).sqrt();
        let v = self.value(a).iter().map(|c| c / s).collect();
        Ok(self.push(Op::Normalize(a, sig), v))
    }

    pub fn unit_coeffs(&mut self, a: Var) -> Var {
        let n = dot(self.value(a), self.value(a)).sqrt().max(NORM_EPS);
        let v = self.value(a).iter().map(|c| c / n).collect();
        self.push(Op::UnitCoeffs(a), v)
    }

    pub fn inverse(&mut self, a: Var) -> Result<Var> {
        let mv = self.multivector(a, Signature::cl41())?;
        let inv = matrix_iso::invert(&mv)?;
        Ok(self.push(Op::Inverse(a), inv.into_coeffs()))
    }

    /// Places 10 bivector coefficients on the grade-2 blades of `Cl(4,1)`.
    pub fn embed_bivector(&mut self, b: Var) -> Result<Var> {
        self.embed_bivector_masked(b, 0x3ff)
    }

    /// As [`Self::embed_bivector`], dropping slots whose bit in `keep` is clear.
    pub fn embed_bivector_masked(&mut self, b: Var, keep: u16) -> Result<Var> {
        if self.len_of(b) != 10 {
            return Err(Error::Shape(format!(
                "embed_bivector: {} coefficients",
                self.len_of(b)
            )));
        }
        let mut v = vec![0.0; 32];
        for (k, (&m, &c)) in BIVECTOR_MASKS.iter().zip(self.value(b)).enumerate() {
            if keep >> k & 1 == 1 {
                v[m as usize] = c;
            }
        }
        Ok(self.push(Op::EmbedBivector(b, keep), v))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let max = xv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = xv.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = e.iter().sum();
        let v = e.into_iter().map(|v| v / z).collect();
        self.push(Op::Softmax(x), v)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let v = parts
            .iter()
            .flat_map(|p| self.value(*p).iter().copied())
            .collect();
        self.push(Op::Concat(parts.to_vec()), v)
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        if start + len > self.len_of(x) {
            return Err(Error::Shape(format!(
                "slice {start}..{} of {}",
                start + len,
                self.len_of(x)
            )));
        }
        let v = self.value(x)[start..start + len].to_vec();
        Ok(self.push(Op::Slice { x, start }, v))
    }

    pub fn weighted_sum(&mut self, w: Var, items: &[Var]) -> Result<Var> {
        if self.len_of(w) != items.len() || items.is_empty() {
            return Err(Error::Shape(format!(
                "weighted_sum: {} weights for {} items",
                self.len_of(w),
                items.len()
            )));
        }
        let d = self.len_of(items[0]);
        let mut out = vec![0.0; d];
        for (k, item) in items.iter().enumerate() {
            if self.len_of(*item) != d {
                return Err(Error::Shape("weighted_sum: items differ in length".into()));
            }
            let wk = self.value(w)[k];
            for (o, c) in out.iter_mut().zip(self.value(*item)) {
                *o += wk * c;
            }
        }
        Ok(self.push(
            Op::WeightedSum {
                w,
                items: items.to_vec(),
            },
            out,
        ))
    }

    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        if self.len_of(pred) != target.len() || target.is_empty() {
            return Err(Error::Shape(format!(
                "mse: prediction {} vs target {}",
                self.len_of(pred),
                target.len()
            )));
        }
        let n = target.len() as f64;
        let l = self
            .value(pred)
            .iter()
            .zip(target)
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>()
            / n;
        Ok(self.push(
            Op::Mse {
                pred,
                target: target.to_vec(),
            },
            vec![l],
        ))
    }

    /// Reverse sweep from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        if self.len_of(loss) != 1 {
            return Err(Error::NonScalarLoss(self.len_of(loss)));
        }
        let mut adj: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        adj[loss.0][0] = 1.0;
        for idx in (0..=loss.0).rev() {
            let g = std::mem::take(&mut adj[idx]);
            if g.iter().all(|v| *v == 0.0) {
                adj[idx] = g;
                continue;
            }
            self.propagate(idx, &g, &mut adj);
            adj[idx] = g;
        }
        Ok(Gradients { adjoints: adj })
    }

    fn propagate(&self, idx: usize, g: &[f64], adj: &mut [Vec<f64>]) {
        let node = &self.nodes[idx];
        let val = |v: Var| self.nodes[v.0].value.as_slice();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                axpy(&mut adj[a.0], 1.0, g);
                axpy(&mut adj[b.0], 1.0, g);
            }
            Op::Sub(a, b) => {
                axpy(&mut adj[a.0], 1.0, g);
                axpy(&mut adj[b.0], -1.0, g);
            }
            Op::ScaleBy(x, s) => {
                let k = val(*s)[0];
                axpy(&mut adj[x.0], k, g);
                adj[s.0][0] += dot(g, val(*x));
            }
            Op::ScaleConst(x, k) => axpy(&mut adj[x.0], *k, g),
            Op::ShiftScalar(x) => axpy(&mut adj[x.0], 1.0, g),
            Op::Linear {
                x,
                w,
                in_dim,
                out_dim,
            } => {
                let (xv, wv) = (val(*x), val(*w));
                for i in 0..*in_dim {
                    let row = &wv[i * out_dim..(i + 1) * out_dim];
                    adj[x.0][i] += dot(row, g);
                }
                let aw = &mut adj[w.0];
                for (i, &xi) in xv.iter().enumerate() {
                    if xi != 0.0 {
                        axpy(&mut aw[i * out_dim..(i + 1) * out_dim], xi, g);
                    }
                }
            }
            Op::Gp(a, b, sig) => {
                let (ga, gb) = gp_backward_raw(*sig, g, val(*a), val(*b));
                axpy(&mut adj[a.0], 1.0, &ga);
                axpy(&mut adj[b.0], 1.0, &gb);
            }
            Op::Reverse(a) => {
                for (m, (t, gv)) in adj[a.0].iter_mut().zip(g).enumerate() {
                    *t += gv * reversion_sign(m as u32);
                }
            }
            Op::Grade(a, gr) => {
                for (m, (t, gv)) in adj[a.0].iter_mut().zip(g).enumerate() {
                    if m.count_ones() as usize == *gr {
                        *t += gv;
                    }
                }
            }
            Op::ScalarProduct(a, b, sig) => {
                // d/da_i Σ m_i a_i b_i = m_i b_i
                let gs = g[0];
                let (av, bv) = (val(*a).to_vec(), val(*b).to_vec());
                for i in 0..sig.dim() {
                    let m = sig.metric_sign(i as u32);
                    adj[a.0][i] += gs * m * bv[i];
                    adj[b.0][i] += gs * m * av[i];
                }
            }
            Op::GradeNorm(a, gr) => {
                let n = node.value[0];
                if n > NORM_EPS {
                    let av = val(*a);
                    for (m, t) in adj[a.0].iter_mut().enumerate() {
                        if m.count_ones() as usize == *gr {
                            *t += g[0] * av[m] / n;
                        }
                    }
                }
            }
            Op::Normalize(a, sig) => {
                let av = val(*a);
                let n = crate::algebra::product::scalar_product_unchecked(*sig, av, av);
                let s = n.max(NORM_EPS).sqrt();
                let ga: f64 = dot(g, av);
                let guarded = n <= NORM_EPS;
                for (i, t) in adj[a.0].iter_mut().enumerate() {
                    let mut d = g[i] / s;
                    if !guarded {
                        d -= ga * sig.metric_sign(i as u32) * av[i] / (s * s * s);
                    }
                    *t += d;
                }
            }
            Op::UnitCoeffs(a) => {
                let av = val(*a);
                let raw = dot(av, av).sqrt();
                let n = raw.max(NORM_EPS);
                let ga = if raw > NORM_EPS {
                    dot(g, av) / (n * n * n)
                } else {
                    0.0
                };
                for (i, t) in adj[a.0].iter_mut().enumerate() {
                    *t += g[i] / n - ga * av[i];
                }
            }
            Op::Inverse(a) => {
                // d(A⁻¹) = −A⁻¹ dA A⁻¹
                let sig = Signature::cl41();
                let y = &node.value;
                let (h, _) = gp_backward_raw(sig, g, y, y);
                let (_, ga) = gp_backward_raw(sig, &h, y, y);
                axpy(&mut adj[a.0], -1.0, &ga);
            }
            Op::EmbedBivector(b, keep) => {
                for (k, &m) in BIVECTOR_MASKS.iter().enumerate() {
                    if keep >> k & 1 == 1 {
                        adj[b.0][k] += g[m as usize];
                    }
                }
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let gy = dot(g, y);
                for (i, t) in adj[x.0].iter_mut().enumerate() {
                    *t += y[i] * (g[i] - gy);
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.nodes[p.0].value.len();
                    axpy(&mut adj[p.0], 1.0, &g[off..off + n]);
                    off += n;
                }
            }
            Op::Slice { x, start } => {
                let dst = &mut adj[x.0][*start..*start + g.len()];
                axpy(dst, 1.0, g);
            }
            Op::WeightedSum { w, items } => {
                let wv = val(*w).to_vec();
                for (k, item) in items.iter().enumerate() {
                    adj[w.0][k] += dot(g, val(*item));
                    axpy(&mut adj[item.0], wv[k], g);
                }
            }
            Op::Mse { pred, target } => {
                let n = target.len() as f64;
                let pv = val(*pred);
                for (i, t) in adj[pred.0].iter_mut().enumerate() {
                    *t += g[0] * 2.0 * (pv[i] - target[i]) / n;
                }
            }
        }
    }
}

fn axpy(dst: &mut [f64], k: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Adjoints of `Z = X Y`: `∂L/∂X_i = Σ_j w(i,j) ∂L/∂Z_{i⊕j} Y_j` and
/// `∂L/∂Y_j = Σ_i w(i,j) ∂L/∂Z_{i⊕j} X_i`.
fn gp_backward_raw(sig: Signature, gz: &[f64], x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dim = sig.dim();
    let mut gx = vec![0.0; dim];
    let mut gy = vec![0.0; dim];
    for i in 0..dim {
        let row = row_sign_mask(sig, i as u32);
        let mut acc = 0.0;
        for j in 0..dim {
            let w = if (j as u32 & row).count_ones() & 1 == 1 {
                -1.0
            } else {
                1.0
            };
            let gk = w * gz[i ^ j];
            acc += gk * y[j];
            gy[j] += gk * x[i];
        }
        gx[i] = acc;
    }
    (gx, gy)
}

/// Adjoints of both factors of `Z = X Y` given `∂L/∂Z`.
pub fn gp_backward(
    adjoint_z: &Multivector,
    x: &Multivector,
    y: &Multivector,
) -> Result<(Multivector, Multivector)> {
    x.ensure_same_signature(y)?;
    adjoint_z.ensure_same_signature(x)?;
    let sig = x.signature();
    let (gx, gy) = gp_backward_raw(sig, adjoint_z.coeffs(), x.coeffs(), y.coeffs());
    Ok((
        Multivector::from_coeffs(sig, gx)?,
        Multivector::from_coeffs(sig, gy)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn empty_tape_and_non_scalar_loss() {
        let t = Tape::new();
        assert!(matches!(t.backward(Var(0)), Err(Error::EmptyTape)));
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0, 2.0]);
        assert!(matches!(t.backward(x), Err(Error::NonScalarLoss(2))));
    }

    #[test]
    fn gp_backward_identity_left_factor() {
        let sig = Signature::cl41();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Multivector::from_coeffs(sig, rand_vec(&mut rng, 32)).unwrap();
        let y = Multivector::from_coeffs(sig, rand_vec(&mut rng, 32)).unwrap();
        let (_, gy) = gp_backward(&g, &Multivector::one(sig), &y).unwrap();
        assert!(gy.max_abs_diff(&g) < 1e-15);
    }

    #[test]
    fn gp_backward_scalar_chain() {
        let sig = Signature::cl41();
        let (a, b, g) = (1.5, -0.25, 2.0);
        let (ga, gb) = gp_backward(
            &Multivector::scalar(sig, g),
            &Multivector::scalar(sig, a),
            &Multivector::scalar(sig, b),
        )
        .unwrap();
        assert_eq!(ga.coeffs()[0], g * b);
        assert_eq!(gb.coeffs()[0], g * a);
    }

    #[test]
    fn constant_loss_has_zero_gradients() {
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0, 2.0, 3.0]);
        let z = t.scale(x, 0.0);
        let s = t.slice(z, 0, 1).unwrap();
        let c = t.shift_scalar(s, 5.0);
        let g = t.backward(c).unwrap();
        assert!(g.get(x).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let mut t = Tape::new();
        let a = t.leaf(vec![1.0; 3]);
        let b = t.leaf(vec![1.0; 4]);
        assert!(t.add(a, b).is_err());
        assert!(t.gp(a, b, Signature::cl41()).is_err());
        assert!(t.linear(a, b, 3, 2).is_err());
        assert!(t.mse(a, &[1.0]).is_err());
        assert!(t.embed_bivector(a).is_err());
    }

    #[test]
    fn backward_is_deterministic() {
        let sig = Signature::cl41();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut t = Tape::new();
            let a = t.leaf(rand_vec(&mut rng, 32));
            let b = t.leaf(rand_vec(&mut rng, 32));
            let p = t.gp(a, b, sig).unwrap();
            let n = t.normalize(p, sig).unwrap();
            let l = t.mse(n, &rand_vec(&mut rng, 32)).unwrap();
            let g = t.backward(l).unwrap();
            (g.get(a).to_vec(), g.get(b).to_vec())
        };
        let (a1, b1) = run();
        let (a2, b2) = run();
        assert_eq!(
            a1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            a2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(b1, b2);
    }
}
