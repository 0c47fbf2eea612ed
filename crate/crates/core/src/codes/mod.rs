//! Sequential coding measures over strings of naturals, codelengths and
//! redundancy.
//!
//! Only codelengths `-log2 q(x^n)` are computed; no bitstream is produced.

mod kt;
mod mixture;
mod pattern;
mod redundancy;

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::pmf::{kl, Pmf, Symbol};

pub use kt::{kt_rbound, KtCode};
pub use mixture::{harmonic_weight_log2, MixtureMeasure};
pub use pattern::PatternCode;
pub use redundancy::{
    enumerate_types, exact_redundancy_by_types, redundancy, type_count, RedundancyEstimate,
    RedundancyMode, MAX_EXACT_TYPES,
};

/// Per-stream evaluation state. Count-based measures use `counts`; mixtures
/// keep one child state and cumulative log-probability per component.
#[derive(Debug, Clone, Default)]
pub struct MeasureState {
    pub n: u64,
    pub counts: HashMap<Symbol, u64>,
    pub log2_prob: f64,
    pub(crate) children: Vec<MeasureState>,
    pub(crate) child_logs: Vec<f64>,
}

impl MeasureState {
    pub fn count(&self, a: Symbol) -> u64 {
        self.counts.get(&a).copied().unwrap_or(0)
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    fn record(&mut self, a: Symbol) {
        *self.counts.entry(a).or_insert(0) += 1;
        self.n += 1;
    }
}

pub trait SequentialMeasure: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    fn initial_state(&self) -> MeasureState {
        MeasureState::default()
    }

    /// `log2 q(a | x^n)` for the string summarized by `state`.
    fn conditional(&self, state: &MeasureState, a: Symbol) -> f64;

    /// Appends `a` and returns its conditional log-probability.
    fn observe(&self, state: &mut MeasureState, a: Symbol) -> f64 {
        let l = self.conditional(state, a);
        state.record(a);
        state.log2_prob += l;
        l
    }

    /// Analytic upper bound on per-symbol redundancy at length `n` over the
    /// sources this measure is built for.
    fn rbound(&self, _n: u64) -> Option<f64> {
        None
    }

    /// `log2 q(x^n)` for any string with the given symbol counts, when `q` is
    /// exchangeable.
    fn log2_type_prob(&self, _counts: &[(Symbol, u64)]) -> Option<f64> {
        None
    }

    /// `(1/n) D_n(p || q)` in bits, exactly.
    fn exact_redundancy(&self, p: &Pmf, n: u64) -> Result<f64> {
        exact_redundancy_by_types(p, self, n)
    }
}

/// `log2 q(x^n)`.
pub fn log2_prob<M: SequentialMeasure + ?Sized>(m: &M, xs: &[Symbol]) -> f64 {
    let mut st = m.initial_state();
    for &a in xs {
        m.observe(&mut st, a);
    }
    st.log2_prob
}

/// `-log2 q(x^n)` in bits.
pub fn codelength<M: SequentialMeasure + ?Sized>(m: &M, xs: &[Symbol]) -> f64 {
    -log2_prob(m, xs)
}

/// `log2 p(x^n)` under the i.i.d. law `p`.
pub fn iid_log2_prob(p: &Pmf, xs: &[Symbol]) -> f64 {
    xs.iter().map(|&x| p.mass(x).log2()).sum()
}

/// The memoryless measure `q(x^n) = prod q(x_i)`.
#[derive(Debug, Clone)]
pub struct IidMeasure {
    pub pmf: Pmf,
}

pub fn iid_measure(q: Pmf) -> IidMeasure {
    IidMeasure { pmf: q }
}

impl SequentialMeasure for IidMeasure {
    fn name(&self) -> String {
        format!("iid[{}]", self.pmf.describe())
    }

    fn conditional(&self, _state: &MeasureState, a: Symbol) -> f64 {
        self.pmf.mass(a).log2()
    }

    fn observe(&self, state: &mut MeasureState, a: Symbol) -> f64 {
        // memoryless: skip the count table
        let l = self.pmf.mass(a).log2();
        state.n += 1;
        state.log2_prob += l;
        l
    }

    fn log2_type_prob(&self, counts: &[(Symbol, u64)]) -> Option<f64> {
        Some(
            counts
                .iter()
                .filter(|c| c.1 > 0)
                .map(|&(a, c)| c as f64 * self.pmf.mass(a).log2())
                .sum(),
        )
    }

    fn exact_redundancy(&self, p: &Pmf, _n: u64) -> Result<f64> {
        Ok(kl(p, &self.pmf).value())
    }
}

/// One row of a codelength trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub n: u64,
    pub cumulative_bits: f64,
    /// `(codelength - log2 1/p(x^n)) / n` along this path.
    pub per_symbol_redundancy: f64,
}

/// Codelength of every prefix of `xs` under `m`, against the source `p`.
pub fn codelength_trace<M: SequentialMeasure + ?Sized>(
    m: &M,
    p: &Pmf,
    xs: &[Symbol],
) -> Vec<TraceRow> {
    let mut st = m.initial_state();
    let mut source_bits = 0.0;
    xs.iter()
        .map(|&a| {
            m.observe(&mut st, a);
            source_bits -= p.mass(a).log2();
            let n = st.n;
            TraceRow {
                n,
                cumulative_bits: -st.log2_prob,
                per_symbol_redundancy: (-st.log2_prob - source_bits) / n as f64,
            }
        })
        .collect()
}

/// `2 h^{3/2} / sqrt(log2 n) + pi sqrt(2 / (3n))` bits per symbol.
pub fn bound_mh(n: u64, h: f64) -> Result<f64> {
    if n < 2 || !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("bound_mh(n={n}, h={h})")));
    }
    let nf = n as f64;
    Ok(2.0 * h.powf(1.5) / nf.log2().sqrt() + std::f64::consts::PI * (2.0 / (3.0 * nf)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmf::{Geometric, Harmonic, Zipf2};

    #[test]
    fn iid_examples() {
        let h = iid_measure(Pmf::lazy(Harmonic));
        assert!((log2_prob(&h, &[3]) + 12f64.log2()).abs() < 1e-12);
        let g = iid_measure(Pmf::lazy(Geometric { ratio: 0.5 }));
        assert!((log2_prob(&g, &[1, 2]) + 3.0).abs() < 1e-12);
        let z = Pmf::lazy(Zipf2);
        assert!((z.mass(1) - 0.6079).abs() < 1e-4);
        assert_eq!(log2_prob(&g, &[]), 0.0);
    }

    #[test]
    fn bound_mh_examples() {
        let a = bound_mh(1 << 16, 1.0).unwrap();
        assert!((a - (0.5 + std::f64::consts::PI * (2.0f64 / 196608.0).sqrt())).abs() < 1e-12);
        assert!((a - 0.5100).abs() < 1e-4);
        let b = bound_mh(16, 1.0).unwrap();
        assert!((b - 1.641).abs() < 1e-3);
        let mut prev = f64::INFINITY;
        for n in 2..5000 {
            let v = bound_mh(n, 1.0).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(bound_mh(1, 1.0).is_err());
        assert!(bound_mh(4, 0.0).is_err());
    }

    #[test]
    fn trace_rows_add_up() {
        let p = Pmf::uniform(1, 2).unwrap();
        let m = KtCode::new(vec![1, 2]).unwrap();
        let xs = [1, 2, 2, 1, 1];
        let rows = codelength_trace(&m, &p, &xs);
        assert_eq!(rows.len(), 5);
        assert!((rows[4].cumulative_bits - codelength(&m, &xs)).abs() < 1e-12);
        assert!((rows[4].per_symbol_redundancy - (codelength(&m, &xs) - 5.0) / 5.0).abs() < 1e-12);
    }
}
