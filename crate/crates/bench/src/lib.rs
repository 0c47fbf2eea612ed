//! Shared fixtures for the benchmarks.

use dwc_core::sources::{sample, SourceSpec};
use dwc_core::Symbol;

/// A fixed-seed path from `uniform(lo, hi)`.
pub fn uniform_path(lo: Symbol, hi: Symbol, n: usize) -> Vec<Symbol> {
    sample(&SourceSpec::uniform(lo, hi), 0xBE7C4, n).expect("valid uniform spec")
}
