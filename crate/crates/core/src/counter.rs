//! Per-thread count of transform kernel invocations. Lets tests assert that
//! a code path did no transform work at all.

use std::cell::Cell;

thread_local! {
    static TRANSFORM_OPS: Cell<u64> = const { Cell::new(0) };
}

pub(crate) fn bump() {
    TRANSFORM_OPS.with(|c| c.set(c.get() + 1));
}

/// Number of transform kernels (DWT/IDWT levels, FFTs, direct DCTs) run on
/// the current thread so far.
pub fn transform_ops() -> u64 {
    TRANSFORM_OPS.with(Cell::get)
}
