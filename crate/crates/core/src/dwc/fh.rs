//! The class `F_h`: a uniform head followed, past its span, by a shifted
//! `M_h` tail. Demo-level: percentile bounds on the tail are astronomically
//! loose, so this scheme never traps at desk scale.

use std::f64::consts::LN_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{CaptureIndex, Centroid, Coverage, Quantization};
use crate::codes::{bound_mh, kt_rbound, KtCode, MeasureState, MixtureMeasure, PatternCode, SequentialMeasure};
use crate::error::{Error, Result};
use crate::pmf::{Pmf, Symbol};

/// Add-half flag between head and tail, add-half over the head
/// `base..=base+size-1`, pattern code over tail symbols `x - span - 1`.
#[derive(Debug, Clone)]
pub struct TwoRegimeCode {
    pub base: Symbol,
    pub size: Symbol,
    pub h: f64,
    head: KtCode,
    tail: PatternCode,
}

impl TwoRegimeCode {
    pub fn new(base: Symbol, size: Symbol, h: f64) -> Result<TwoRegimeCode> {
        Ok(TwoRegimeCode {
            base,
            size,
            h,
            head: KtCode::range(base, base + size - 1)?,
            tail: PatternCode::harmonic(),
        })
    }

    fn span(&self) -> Symbol {
        self.base + self.size - 1
    }

    fn split(&self, counts: &[(Symbol, u64)]) -> Option<(Vec<(Symbol, u64)>, Vec<(Symbol, u64)>)> {
        let span = self.span();
        let mut head = Vec::new();
        let mut tail = Vec::new();
        for &(a, c) in counts.iter().filter(|c| c.1 > 0) {
            if a >= self.base && a <= span {
                head.push((a, c));
            } else if a >= span + 2 {
                tail.push((a - span - 1, c));
            } else {
                return None;
            }
        }
        Some((head, tail))
    }
}

impl SequentialMeasure for TwoRegimeCode {
    fn name(&self) -> String {
        format!("two-regime[{}..={}, h={}]", self.base, self.span(), self.h)
    }

    fn conditional(&self, state: &MeasureState, a: Symbol) -> f64 {
        let mut counts: Vec<(Symbol, u64)> = state.counts.iter().map(|(&s, &c)| (s, c)).collect();
        let before = self.log2_type_prob(&counts).unwrap();
        match counts.iter_mut().find(|c| c.0 == a) {
            Some(c) => c.1 += 1,
            None => counts.push((a, 1)),
        }
        self.log2_type_prob(&counts).unwrap() - before
    }

    fn log2_type_prob(&self, counts: &[(Symbol, u64)]) -> Option<f64> {
        let Some((head, tail)) = self.split(counts) else {
            return Some(f64::NEG_INFINITY);
        };
        let nh: u64 = head.iter().map(|c| c.1).sum();
        let nt: u64 = tail.iter().map(|c| c.1).sum();
        let flag = KtCode::new(vec![1, 2]).unwrap().log2_counts_prob(&[(1, nh), (2, nt)]);
        Some(flag + self.head.log2_counts_prob(&head) + self.tail.log2_type_prob(&tail)?)
    }

    /// Heuristic: the two add-half bounds plus the `M_h` acceptance curve.
    fn rbound(&self, n: u64) -> Option<f64> {
        let tail = bound_mh(n.max(2), self.h).ok()?;
        Some(kt_rbound(2, n) + kt_rbound(self.size as usize, n) + tail)
    }
}

/// Uniform-weight mixture of [`TwoRegimeCode`] over every `(base, size)` with
/// `base + size <= limit`.
#[derive(Debug, Clone)]
struct FhLocal {
    mix: MixtureMeasure,
    members: usize,
    max_size: Symbol,
    h: f64,
}

impl FhLocal {
    fn new(limit: Symbol, h: f64) -> Result<FhLocal> {
        let mut comps: Vec<(u64, Arc<dyn SequentialMeasure>)> = Vec::new();
        for base in 1..limit {
            for size in 1..=limit - base {
                comps.push((comps.len() as u64 + 1, Arc::new(TwoRegimeCode::new(base, size, h)?)));
            }
        }
        let k = comps.len();
        let w = vec![-(k as f64).log2(); k];
        Ok(FhLocal {
            mix: MixtureMeasure::with_log2_weights(comps, w)?,
            members: k,
            max_size: limit - 1,
            h,
        })
    }
}

impl SequentialMeasure for FhLocal {
    fn name(&self) -> String {
        format!("two-regime mixture[{}]", self.members)
    }
    fn initial_state(&self) -> MeasureState {
        self.mix.initial_state()
    }
    fn conditional(&self, state: &MeasureState, a: Symbol) -> f64 {
        self.mix.conditional(state, a)
    }
    fn observe(&self, state: &mut MeasureState, a: Symbol) -> f64 {
        self.mix.observe(state, a)
    }
    fn log2_type_prob(&self, counts: &[(Symbol, u64)]) -> Option<f64> {
        self.mix.log2_type_prob(counts)
    }
    fn rbound(&self, n: u64) -> Option<f64> {
        let one = TwoRegimeCode::new(1, self.max_size, self.h).ok()?.rbound(n)?;
        Some(one + (self.members as f64).log2() / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FhQuantizationConfig {
    pub max_base: Symbol,
    pub max_size: Symbol,
    pub eps_grid: Vec<f64>,
    pub h: f64,
}

impl Default for FhQuantizationConfig {
    fn default() -> Self {
        FhQuantizationConfig {
            max_base: 3,
            max_size: 3,
            eps_grid: vec![0.5, 0.25, 0.1],
            h: 1.0,
        }
    }
}

/// One centroid per `(base, size, eps)`: head `u(base..base+size-1)`, tail a
/// point mass at `span + 2`. Reach `rho^2 / (4 ln 2)` with
/// `rho = (1-eps)^2 / (size (size+1))` keeps the ball inside an `l1` ball
/// where `base' + size' <= base + ceil(size / (1-eps))`.
pub fn fh_quantization(cfg: &FhQuantizationConfig) -> Result<Quantization> {
    if cfg.max_base == 0 || cfg.max_size == 0 || cfg.max_base + cfg.max_size > 16 {
        return Err(Error::InvalidArgument("F_h grid must have 1 <= base, size and base + size <= 16".into()));
    }
    if cfg.eps_grid.is_empty() || cfg.eps_grid.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::InvalidArgument("F_h eps grid must lie in (0,1)".into()));
    }
    let h = cfg.h;
    let mut centroids = Vec::new();
    for base in 1..=cfg.max_base {
        for size in 1..=cfg.max_size {
            for &eps in &cfg.eps_grid {
                let span = base + size - 1;
                let head = Pmf::uniform(base, span)?;
                let pmf = head.contaminate(&Pmf::point(span + 2), eps)?;
                let rho = (1.0 - eps).powi(2) / (size * (size + 1)) as f64;
                let reach = rho * rho / (4.0 * LN_2);
                let limit = base + (size as f64 / (1.0 - eps)).ceil() as Symbol;
                let local: Arc<dyn SequentialMeasure> = Arc::new(FhLocal::new(limit, h)?);
                // tail: P(X > x) <= h / log2(x)^2 for monotone M_h members
                let sup: super::PercentileSup = Arc::new(move |g: f64| {
                    let e = (h / g).sqrt();
                    if e >= 62.0 {
                        1 << 62
                    } else {
                        limit + e.exp2().ceil() as Symbol
                    }
                });
                centroids.push(Centroid::new(
                    centroids.len() as u64 + 1,
                    format!("f({base},{size},{eps})"),
                    pmf,
                    reach,
                    local,
                    Coverage::None,
                    sup,
                ));
            }
        }
    }
    let qstar: Arc<dyn SequentialMeasure> = Arc::new(MixtureMeasure::new(
        centroids.iter().map(|c| (c.index, c.local.clone())).collect(),
    )?);
    Ok(Quantization::new(
        "fh",
        centroids,
        format!("{cfg:?}"),
        CaptureIndex::Brute,
        qstar,
    ))
}
