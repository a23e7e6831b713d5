//! Thread-local operation counters for the product kernels.
//!
//! Counting is compiled in with the `counters` feature (on by default) and
//! never changes numeric results. Counters are per thread, so a test can
//! [`reset`] and [`snapshot`] around a single call without interference.

use std::cell::Cell;

/// Counts accumulated since the last [`reset`] on this thread.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCounts {
    /// Real multiply-adds on multivector coefficients.
    pub mads: u64,
    /// Integer bit operations spent resolving blade indices and signs.
    pub logic: u64,
    /// Cayley-table entries read.
    pub table_reads: u64,
    /// Real floating point operations in the 4×4 complex matrix core
    /// (4 per complex multiply).
    pub matrix_flops: u64,
}

thread_local! {
    static COUNTS: Cell<OpCounts> = const { Cell::new(OpCounts { mads: 0, logic: 0, table_reads: 0, matrix_flops: 0 }) };
}

pub fn reset() {
    COUNTS.with(|c| c.set(OpCounts::default()));
}

pub fn snapshot() -> OpCounts {
    COUNTS.with(|c| c.get())
}

/// Whether counting is compiled in.
pub const fn enabled() -> bool {
    cfg!(feature = "counters")
}

#[inline(always)]
#[allow(unused_variables)]
pub(crate) fn add(mads: u64, logic: u64, table_reads: u64, matrix_flops: u64) {
    #[cfg(feature = "counters")]
    COUNTS.with(|c| {
        let mut v = c.get();
        v.mads += mads;
        v.logic += logic;
        v.table_reads += table_reads;
        v.matrix_flops += matrix_flops;
        c.set(v);
    });
}

/// Runs `f` and returns its output with the operations it performed.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, OpCounts) {
    let before = snapshot();
    let out = f();
    let after = snapshot();
    let delta = OpCounts {
        mads: after.mads - before.mads,
        logic: after.logic - before.logic,
        table_reads: after.table_reads - before.table_reads,
        matrix_flops: after.matrix_flops - before.matrix_flops,
    };
    (out, delta)
}
