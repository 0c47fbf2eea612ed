//! Quantization of the uniform class `U = { u(m..M) }`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{CaptureIndex, Centroid, Coverage, Quantization};
use crate::codes::{KtCode, MixtureMeasure, SequentialMeasure};
use crate::error::{Error, Result};
use crate::pmf::{Pmf, Symbol, PERCENTILE_SLACK};

/// How far each centroid's reach extends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ReachRule {
    /// The ball holds only the centroid; local code is add-half over its
    /// own support.
    Isolated,
    /// The ball holds the uniforms inside `1..=window` that are closer than
    /// every uniform reaching past it; local code is add-half over
    /// `1..=window`. Windows below the centroid's own maximum are raised to it.
    Window { window: Symbol },
    /// Per centroid, the window in `M..=cap` whose refine threshold on `n`
    /// is smallest at this `eta`.
    Tuned { eta: f64 },
}

/// Index of `u(a..b)`: ordered by `b`, then `a`.
pub fn uniform_index(a: Symbol, b: Symbol) -> u64 {
    b * (b - 1) / 2 + a
}

/// Inverse of [`uniform_index`].
pub fn uniform_interval(index: u64) -> (Symbol, Symbol) {
    let mut b = ((2.0 * index as f64).sqrt()) as u64;
    while b * (b + 1) / 2 < index {
        b += 1;
    }
    while b > 1 && b * (b - 1) / 2 >= index {
        b -= 1;
    }
    (index - b * (b - 1) / 2, b)
}

fn j_closed(o: u64, s: u64, big_s: u64) -> f64 {
    let (o, s, t) = (o as f64, s as f64, big_s as f64);
    let shared = if o > 0.0 {
        o * ((2.0 * t / (t + s)).log2() / s + (2.0 * s / (t + s)).log2() / t)
    } else {
        0.0
    };
    shared + (s - o) / s + (t - o) / t
}

/// `J(u(p.0..p.1), u(r.0..r.1))` in closed form.
pub fn uniform_j(p: (Symbol, Symbol), r: (Symbol, Symbol)) -> f64 {
    let lo = p.0.max(r.0);
    let hi = p.1.min(r.1);
    let o = if lo <= hi { hi - lo + 1 } else { 0 };
    j_closed(o, p.1 - p.0 + 1, r.1 - r.0 + 1)
}

fn uniform_percentile(a: Symbol, b: Symbol, gamma: f64) -> Symbol {
    let s = (b - a + 1) as f64;
    let k = ((1.0 - gamma) * s - PERCENTILE_SLACK * s).ceil().max(1.0) as u64;
    (a - 1 + k).min(b)
}

/// Table of `J` for supports up to `cap + 1`, keyed by `(o, s, S)`.
struct JTable {
    side: usize,
    v: Vec<f64>,
}

impl JTable {
    fn new(max: u64) -> JTable {
        let side = max as usize + 1;
        let mut v = vec![f64::NAN; side * side * side];
        for s in 1..side {
            for t in 1..side {
                for o in 0..=s.min(t) {
                    v[(o * side + s) * side + t] = j_closed(o as u64, s as u64, t as u64);
                }
            }
        }
        JTable { side, v }
    }

    fn get(&self, p: (Symbol, Symbol), r: (Symbol, Symbol)) -> f64 {
        let lo = p.0.max(r.0);
        let hi = p.1.min(r.1);
        let o = if lo <= hi { hi - lo + 1 } else { 0 } as usize;
        let s = (p.1 - p.0 + 1) as usize;
        let t = (r.1 - r.0 + 1) as usize;
        self.v[(o * self.side + s) * self.side + t]
    }
}

struct Plan {
    window: Symbol,
    reach: f64,
    members: Vec<(Symbol, Symbol)>,
}

fn isolated(jt: &JTable, p: (Symbol, Symbol), cap: Symbol) -> Plan {
    let mut reach = f64::INFINITY;
    for b in 1..=cap + 1 {
        for a in 1..=b {
            if (a, b) != p {
                reach = reach.min(jt.get(p, (a, b)));
            }
        }
    }
    Plan {
        window: 0,
        reach,
        members: vec![p],
    }
}

fn windowed(jt: &JTable, p: (Symbol, Symbol), window: Symbol) -> Plan {
    let w = window.max(p.1);
    // nearest uniform that reaches past the window: J grows with the size
    // once the overlap is fixed, so b = w + 1 suffices
    let reach = (1..=w + 1)
        .map(|a| jt.get(p, (a, w + 1)))
        .fold(f64::INFINITY, f64::min);
    let mut members = Vec::new();
    for b in 1..=w {
        for a in 1..=b {
            if jt.get(p, (a, b)) < reach {
                members.push((a, b));
            }
        }
    }
    Plan {
        window: w,
        reach,
        members,
    }
}

fn centroid_from_plan(index: u64, p: (Symbol, Symbol), plan: Plan) -> Result<Centroid> {
    let (lo, hi, coverage) = if plan.window == 0 {
        (p.0, p.1, Coverage::Interval(p.0, p.1))
    } else {
        (1, plan.window, Coverage::Interval(1, plan.window))
    };
    let members = plan.members;
    let sup: super::PercentileSup = Arc::new(move |g| {
        members
            .iter()
            .map(|&(a, b)| uniform_percentile(a, b, g))
            .max()
            .unwrap_or(1)
    });
    Ok(Centroid::new(
        index,
        format!("u({},{})", p.0, p.1),
        Pmf::uniform(p.0, p.1)?,
        plan.reach,
        Arc::new(KtCode::range(lo, hi)?),
        coverage,
        sup,
    ))
}

/// Centroids `u(a..b)` for every `1 <= a <= b <= cap`, i.e.
/// `cap (cap + 1) / 2` of them.
pub fn uniform_quantization(cap: Symbol, rule: ReachRule) -> Result<Quantization> {
    if !(1..=256).contains(&cap) {
        return Err(Error::InvalidArgument(format!("uniform cap {cap} outside 1..=256")));
    }
    if let ReachRule::Tuned { eta } = rule {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidArgument(format!("eta = {eta}")));
        }
    }
    let jt = JTable::new(cap + 1);
    let mut centroids = Vec::new();
    for b in 1..=cap {
        for a in 1..=b {
            let p = (a, b);
            let index = uniform_index(a, b);
            let c = match rule {
                ReachRule::Isolated => centroid_from_plan(index, p, isolated(&jt, p, cap))?,
                ReachRule::Window { window } => {
                    centroid_from_plan(index, p, windowed(&jt, p, window.min(cap)))?
                }
                ReachRule::Tuned { eta } => {
                    let mut best: Option<(u64, Centroid)> = None;
                    for w in b..=cap {
                        let c = centroid_from_plan(index, p, windowed(&jt, p, w))?;
                        let t = c.trap_from(eta);
                        if best.as_ref().is_none_or(|(bt, _)| t < *bt) {
                            best = Some((t, c));
                        }
                    }
                    best.unwrap().1
                }
            };
            centroids.push(c);
        }
    }
    let qstar: Arc<dyn SequentialMeasure> = Arc::new(MixtureMeasure::new(
        centroids.iter().map(|c| (c.index, c.local.clone())).collect(),
    )?);
    let note = format!("uniforms with support inside 1..={cap}, reach rule {rule:?}");
    Ok(Quantization::new(
        "uniform",
        centroids,
        note,
        CaptureIndex::Intervals { cap },
        qstar,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dwc::EmpiricalType;
    use crate::pmf::j_divergence;

    #[test]
    fn index_order() {
        assert_eq!(uniform_index(1, 1), 1);
        assert_eq!(uniform_index(1, 2), 2);
        assert_eq!(uniform_index(2, 2), 3);
        assert_eq!(uniform_index(5, 5), 15);
        assert_eq!(uniform_index(3, 10), 48);
        for i in 1..3000 {
            let (a, b) = uniform_interval(i);
            assert!(a >= 1 && a <= b);
            assert_eq!(uniform_index(a, b), i);
        }
    }

    #[test]
    fn closed_form_j_matches_generic() {
        for (p, r) in [((1, 2), (1, 3)), ((3, 10), (5, 20)), ((1, 1), (2, 2)), ((4, 9), (1, 30))] {
            let g = j_divergence(
                &Pmf::uniform(p.0, p.1).unwrap(),
                &Pmf::uniform(r.0, r.1).unwrap(),
            );
            assert!((uniform_j(p, r) - g).abs() < 1e-12, "{p:?} {r:?}");
        }
        assert!((uniform_j((1, 1), (1, 2)) - (3.0 - 1.5 * 3f64.log2())).abs() < 1e-12);
    }

    #[test]
    fn j_grows_with_size_at_fixed_overlap() {
        for s in 1..=20u64 {
            for o in 0..=s {
                let mut prev = 0.0;
                for t in o.max(1)..=200 {
                    let v = j_closed(o, s, t);
                    assert!(v >= prev - 1e-12, "o={o} s={s} t={t}");
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn isolated_reach_excludes_neighbours() {
        let q = uniform_quantization(12, ReachRule::Isolated).unwrap();
        assert_eq!(q.len(), 78);
        for c in &q.centroids {
            let p = uniform_interval(c.index);
            for b in 1..=13 {
                for a in 1..=b {
                    if (a, b) != p {
                        assert!(uniform_j(p, (a, b)) >= c.reach);
                    }
                }
            }
        }
    }

    #[test]
    fn window_members_are_in_window_and_reach() {
        let c = &uniform_quantization(20, ReachRule::Window { window: 16 }).unwrap().centroids
            [uniform_index(3, 10) as usize - 1];
        for b in 17..40 {
            for a in 1..=b {
                assert!(uniform_j((3, 10), (a, b)) >= c.reach);
            }
        }
        // percentiles never leave the window
        assert!(c.percentile_sup(1e-9) <= 16);
        assert!(c.percentile_sup(1e-9) >= 10);
        assert!(c.coverage.covers(&Pmf::uniform(3, 10).unwrap()));
    }

    #[test]
    fn fast_candidates_match_full_scan() {
        let q = uniform_quantization(16, ReachRule::Window { window: 16 }).unwrap();
        let mut stream = crate::sources::SampleStream::new(&Pmf::uniform(3, 10).unwrap(), 4, 0);
        let mut tau = EmpiricalType::new();
        for n in 1..=300_000 {
            tau.push(stream.next_symbol());
            if n % 24_989 == 0 || n < 50 {
                let full = q.capture_candidates(&tau.to_pmf().unwrap());
                assert_eq!(q.capture_candidates_type(&tau), full, "n={n}");
            }
        }
        assert_eq!(q.capture_candidates_type(&tau), vec![uniform_index(3, 10)]);
    }
}
