//! Multiply-accumulate accounting.
//!
//! Kernels report the multiply-accumulates they perform through [`record`];
//! the counts only accumulate inside an [`instrument`] scope on the calling
//! thread. Kernels record from the dispatching thread before fanning out, so
//! rayon workers never need to see the counter.

use std::cell::Cell;

thread_local! {
    static COUNTER: Cell<Option<u64>> = const { Cell::new(None) };
}

#[inline]
pub fn record(n: u64) {
    COUNTER.with(|c| {
        if let Some(v) = c.get() {
            c.set(Some(v + n));
        }
    });
}

/// Runs `f` and returns its result with the number of multiply-accumulates
/// recorded while it ran.
pub fn instrument<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let outer = COUNTER.with(|c| c.replace(Some(0)));
    let out = f();
    let counted = COUNTER.with(|c| c.replace(outer)).unwrap_or(0);
    if outer.is_some() {
        record(counted);
    }
    (out, counted)
}
