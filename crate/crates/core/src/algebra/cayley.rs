use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::{BladeIndex, Signature};

/// Product of two basis blades: `e_i e_j = w · e_k`.
///
/// The target blade is `i XOR j`. The sign counts the transpositions needed
/// to bring the juxtaposed generators into ascending order (for each bit of
/// `j`, the bits of `i` above it), then multiplies in the metric entry of every
/// generator present in both blades.
pub fn basis_product(i: BladeIndex, j: BladeIndex, sig: Signature) -> (BladeIndex, f64) {
    let (i, j) = (i.mask(), j.mask());
    let k = i ^ j;
    let mut swaps = 0u32;
    for bit in 0..sig.n() as u32 {
        if (j >> bit) & 1 == 1 {
            let higher = i & !((1u32 << (bit + 1)) - 1);
            swaps += higher.count_ones();
        }
    }
    let sigma = if swaps & 1 == 1 { -1.0 } else { 1.0 };
    let w = sig.metric_sign(i & j);
    (BladeIndex(k), sigma * w)
}

/// Materialized `dim × dim` table of basis products, indexed row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CayleyTable {
    sig: Signature,
    target: Vec<u16>,
    weight: Vec<i8>,
}

impl CayleyTable {
    pub fn build(sig: Signature) -> Self {
        let dim = sig.dim();
        let mut target = Vec::with_capacity(dim * dim);
        let mut weight = Vec::with_capacity(dim * dim);
        for i in 0..dim as u32 {
            for j in 0..dim as u32 {
                let (k, w) = basis_product(BladeIndex(i), BladeIndex(j), sig);
                target.push(k.mask() as u16);
                weight.push(w as i8);
            }
        }
        Self {
            sig,
            target,
            weight,
        }
    }

    /// Process-wide table for `sig`, built on first use.
    pub fn shared(sig: Signature) -> Arc<CayleyTable> {
        static CACHE: OnceLock<Mutex<HashMap<Signature, Arc<CayleyTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard
            .entry(sig)
            .or_insert_with(|| Arc::new(Self::build(sig)))
            .clone()
    }

    pub fn signature(&self) -> Signature {
        self.sig
    }

    pub fn dim(&self) -> usize {
        self.sig.dim()
    }

    #[inline]
    pub fn target(&self, i: usize, j: usize) -> BladeIndex {
        BladeIndex(self.target[i * self.dim() + j] as u32)
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weight[i * self.dim() + j] as f64
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> (BladeIndex, f64) {
        (self.target(i, j), self.weight(i, j))
    }

    /// Negates one entry. Only useful as a negative control for the
    /// engine-equivalence checks.
    pub fn flip_sign(&mut self, i: usize, j: usize) {
        let d = self.dim();
        self.weight[i * d + j] = -self.weight[i * d + j];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cl41() -> Signature {
        Signature::cl41()
    }

    #[test]
    fn generator_squares() {
        assert_eq!(
            basis_product(BladeIndex(1), BladeIndex(1), cl41()),
            (BladeIndex(0), 1.0)
        );
        assert_eq!(
            basis_product(BladeIndex(16), BladeIndex(16), cl41()),
            (BladeIndex(0), -1.0)
        );
    }

    #[test]
    fn e12_times_e1_is_minus_e2() {
        assert_eq!(
            basis_product(BladeIndex(3), BladeIndex(1), cl41()),
            (BladeIndex(2), -1.0)
        );
        assert_eq!(
            basis_product(BladeIndex(1), BladeIndex(3), cl41()),
            (BladeIndex(2), 1.0)
        );
    }

    // Vector-vector block of the Cl(4,1) table, rows/columns e1 e2 e3 e+ e-.
    // Entry (mask, sign).
    #[test]
    fn vector_block_matches_reference_table() {
        let t = CayleyTable::build(cl41());
        let gens = [1usize, 2, 4, 8, 16];
        for (r, &i) in gens.iter().enumerate() {
            for (c, &j) in gens.iter().enumerate() {
                let (k, w) = t.entry(i, j);
                if r == c {
                    assert_eq!(k, BladeIndex(0));
                    assert_eq!(w, if r == 4 { -1.0 } else { 1.0 });
                } else {
                    assert_eq!(k.mask() as usize, i | j);
                    assert_eq!(w, if r < c { 1.0 } else { -1.0 }, "row {r} col {c}");
                }
            }
        }
    }

    #[test]
    fn cl01_is_complex_numbers() {
        let sig = Signature::new(&[-1]).unwrap();
        let t = CayleyTable::build(sig);
        assert_eq!(t.dim(), 2);
        assert_eq!(t.entry(0, 0), (BladeIndex(0), 1.0));
        assert_eq!(t.entry(0, 1), (BladeIndex(1), 1.0));
        assert_eq!(t.entry(1, 0), (BladeIndex(1), 1.0));
        assert_eq!(t.entry(1, 1), (BladeIndex(0), -1.0));
    }

    #[test]
    fn scalar_row_is_identity() {
        for sig in [
            cl41(),
            Signature::pq(3, 0).unwrap(),
            Signature::pq(2, 4).unwrap(),
        ] {
            let t = CayleyTable::build(sig);
            for j in 0..sig.dim() {
                assert_eq!(t.entry(0, j), (BladeIndex(j as u32), 1.0));
            }
        }
    }

    #[test]
    fn xor_closure_up_to_eight_generators() {
        for n in 1..=8 {
            for q in [0, 1, n / 2] {
                let sig = Signature::pq(n - q, q).unwrap();
                let dim = sig.dim() as u32;
                for i in 0..dim {
                    for j in 0..dim {
                        let (k, w) = basis_product(BladeIndex(i), BladeIndex(j), sig);
                        assert_eq!(k.mask(), i ^ j);
                        assert!(w == 1.0 || w == -1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn distinct_generators_anticommute() {
        for sig in [
            cl41(),
            Signature::pq(8, 0).unwrap(),
            Signature::pq(5, 3).unwrap(),
        ] {
            for a in 0..sig.n() {
                for b in 0..sig.n() {
                    if a == b {
                        continue;
                    }
                    let (ga, gb) = (BladeIndex::generator(a), BladeIndex::generator(b));
                    let (k1, w1) = basis_product(ga, gb, sig);
                    let (k2, w2) = basis_product(gb, ga, sig);
                    assert_eq!(k1, k2);
                    assert_eq!(w1, -w2);
                }
            }
        }
    }

    #[test]
    fn shared_table_is_cached() {
        let a = CayleyTable::shared(cl41());
        let b = CayleyTable::shared(cl41());
        assert!(Arc::ptr_eq(&a, &b));
    }
}
