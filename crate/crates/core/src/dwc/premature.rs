//! Premature-entry certification and the threshold indicator for strongly
//! compressible classes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EmpiricalType, PhiScheme, Quantization};
use crate::codes::{
    bound_mh, exact_redundancy_by_types, harmonic_weight_log2, iid_log2_prob, log2_prob,
    type_count, PatternCode, SequentialMeasure, MAX_EXACT_TYPES,
};
use crate::error::{Error, Result};
use crate::numeric::{frequency_se, mean_ci95, mean_se};
use crate::pmf::{Pmf, Symbol};
use crate::sources::{SampleStream, SourceSpec};

/// Sampled paths behind a Monte Carlo lower certificate.
const LOWER_MC_TRIALS: u64 = 64;
/// One-sided z for the lower certificate (about 0.05%).
const LOWER_Z: f64 = 3.29;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NotPremature,
    Premature,
    Indeterminate,
}

/// Bounds on `(1/j) D_j(p || q*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub j: u64,
    pub upper: f64,
    pub lower: Option<f64>,
    pub lower_exact: bool,
    pub verdict: Verdict,
}

/// `min_i rbound_i(j) + log2(i(i+1))/j` over centroids whose local measure
/// covers `p`; `+inf` if none does.
pub fn upper_certificate(quant: &Quantization, p: &Pmf, j: u64) -> f64 {
    quant
        .centroids
        .iter()
        .filter(|c| c.coverage.covers(p))
        .filter_map(|c| c.local.rbound(j).map(|r| r - harmonic_weight_log2(c.index) / j as f64))
        .fold(f64::INFINITY, f64::min)
}

fn lower_certificate(q: &dyn SequentialMeasure, p: &Pmf, j: u64, seed: u64) -> Option<(f64, bool)> {
    if let Some(f) = p.as_finite() {
        if type_count(j, f.atoms().len()) <= MAX_EXACT_TYPES {
            if let Ok(v) = exact_redundancy_by_types(p, q, j) {
                return Some((v, true));
            }
        }
    }
    let exchangeable = q.log2_type_prob(&[(p.base(), 0)]).is_some();
    let samples: Vec<f64> = (0..LOWER_MC_TRIALS)
        .map(|t| {
            let xs = SampleStream::new(p, seed ^ 0x10CE_47, t).take(j as usize);
            let lq = if exchangeable {
                q.log2_type_prob(&EmpiricalType::from_symbols(&xs).counts()).unwrap()
            } else {
                log2_prob(q, &xs)
            };
            (iid_log2_prob(p, &xs) - lq) / j as f64
        })
        .collect();
    let (mean, se) = mean_se(&samples);
    Some((mean - LOWER_Z * se, false))
}

/// Certifies one entry at length `j`.
pub fn certify(quant: &Quantization, p: &Pmf, j: u64, delta: f64, seed: u64) -> Certificate {
    let upper = upper_certificate(quant, p, j);
    if upper <= delta {
        return Certificate {
            j,
            upper,
            lower: None,
            lower_exact: false,
            verdict: Verdict::NotPremature,
        };
    }
    let (lower, exact) = match lower_certificate(quant.qstar().as_ref(), p, j, seed) {
        Some((l, e)) => (Some(l), e),
        None => (None, false),
    };
    let verdict = match lower {
        Some(l) if l > delta => Verdict::Premature,
        Some(_) if exact => Verdict::NotPremature,
        _ => Verdict::Indeterminate,
    };
    Certificate {
        j,
        upper,
        lower,
        lower_exact: exact,
        verdict,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrematureRow {
    pub trial: u64,
    pub entered: bool,
    pub entry_time: Option<u64>,
    pub trap_index: Option<u64>,
    pub premature: bool,
    pub indeterminate: bool,
}

impl PrematureRow {
    pub const CSV_HEADER: &'static str =
        "trial,entered,entry_time,trap_index,premature,indeterminate";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.trial,
            self.entered as u8,
            opt(self.entry_time),
            opt(self.trap_index),
            self.premature as u8,
            self.indeterminate as u8
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrematureReport {
    pub quantization: String,
    pub centroids: usize,
    pub delta: f64,
    pub eta: f64,
    pub trials: u64,
    pub horizon: u64,
    pub seed: u64,
    pub entry_fraction: f64,
    pub premature_fraction: f64,
    pub premature_ci95: f64,
    pub indeterminate_fraction: f64,
    /// Paths that reached the horizon without entering.
    pub not_entered: u64,
    pub rows: Vec<PrematureRow>,
}

/// Runs `trials` paths of `p` through `phi`. Each path stops at entry: the
/// upper certificate only decreases in `j`, so later lengths add nothing.
pub fn premature_probability(
    p: &SourceSpec,
    phi: &PhiScheme,
    trials: u64,
    horizon: u64,
    seed: u64,
) -> Result<PrematureReport> {
    if trials == 0 || horizon == 0 {
        return Err(Error::InvalidArgument("premature runs need trials >= 1 and horizon >= 1".into()));
    }
    let pmf = p.make_pmf()?;
    let states: Vec<_> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut s = SampleStream::new(&pmf, seed, t);
            phi.run_path(&mut s, horizon)
        })
        .collect();
    let mut entries: Vec<u64> = states.iter().filter_map(|s| s.entry_time).collect();
    entries.sort_unstable();
    entries.dedup();
    let verdicts: BTreeMap<u64, Verdict> = entries
        .par_iter()
        .map(|&j| (j, certify(&phi.quant, &pmf, j, phi.delta, seed).verdict))
        .collect();
    let rows: Vec<PrematureRow> = states
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let v = s.entry_time.map(|j| verdicts[&j]);
            PrematureRow {
                trial: t as u64,
                entered: s.entered,
                entry_time: s.entry_time,
                trap_index: s.trap,
                premature: v == Some(Verdict::Premature),
                indeterminate: v == Some(Verdict::Indeterminate),
            }
        })
        .collect();
    let k = trials as usize;
    let entered = rows.iter().filter(|r| r.entered).count();
    let premature = rows.iter().filter(|r| r.premature).count();
    let indeterminate = rows.iter().filter(|r| r.indeterminate).count();
    Ok(PrematureReport {
        quantization: phi.quant.tag.clone(),
        centroids: phi.quant.len(),
        delta: phi.delta,
        eta: phi.eta,
        trials,
        horizon,
        seed,
        entry_fraction: entered as f64 / k as f64,
        premature_fraction: premature as f64 / k as f64,
        premature_ci95: 1.96 * frequency_se(premature, k),
        indeterminate_fraction: indeterminate as f64 / k as f64,
        not_entered: (k - entered) as u64,
        rows,
    })
}

/// `Phi(x^i) = 1` iff `i > threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScPhi {
    pub threshold: u64,
}

impl ScPhi {
    pub fn entered(&self, i: u64) -> bool {
        i > self.threshold
    }
}

/// `threshold = max { n >= 2 : class_bound(n) >= delta }`, 0 if the bound
/// starts below `delta`. The bound is taken as nonincreasing; lengths past
/// `scan_horizon` are not examined.
pub fn sc_phi(class_bound: impl Fn(u64) -> f64, delta: f64, scan_horizon: u64) -> Result<ScPhi> {
    if class_bound(2) < delta {
        return Ok(ScPhi { threshold: 0 });
    }
    let mut hi = 4u64;
    while class_bound(hi) >= delta {
        if hi >= scan_horizon {
            return Err(Error::InvalidArgument(format!(
                "class bound stays >= {delta} up to n = {scan_horizon}"
            )));
        }
        hi = (hi * 2).min(scan_horizon);
    }
    let mut lo = (hi / 2).max(2);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if class_bound(mid) >= delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ScPhi { threshold: lo })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScReport {
    pub source: String,
    pub h: f64,
    pub delta: f64,
    pub threshold: u64,
    pub entry_time: u64,
    pub class_bound_at_entry: f64,
    pub trials: u64,
    pub premature: u64,
    /// Pattern-code redundancy at entry over the same paths.
    pub mc_redundancy: f64,
    pub mc_ci95: f64,
}

/// Simulates the threshold indicator for an `M_h` member: every path enters
/// at `threshold + 1`, certified by the class bound, and the pattern-code
/// redundancy at entry is estimated as a cross-check.
pub fn sc_premature_run(spec: &SourceSpec, h: f64, delta: f64, trials: u64, seed: u64) -> Result<ScReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("sc run needs trials >= 1".into()));
    }
    let phi = sc_phi(|n| bound_mh(n, h).unwrap_or(f64::INFINITY), delta, 1 << 40)?;
    let p = spec.make_pmf()?;
    let j = phi.threshold + 1;
    let cert = bound_mh(j.max(2), h)?;
    let code = PatternCode::harmonic();
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let xs: Vec<Symbol> = SampleStream::new(&p, seed, t).take(j as usize);
            let lq = code.log2_type_prob(&EmpiricalType::from_symbols(&xs).counts()).unwrap();
            (iid_log2_prob(&p, &xs) - lq) / j as f64
        })
        .collect();
    let (mean, half) = mean_ci95(&samples);
    let premature = if cert > delta { trials } else { 0 };
    Ok(ScReport {
        source: spec.to_json(),
        h,
        delta,
        threshold: phi.threshold,
        entry_time: j,
        class_bound_at_entry: cert,
        trials,
        premature,
        mc_redundancy: mean,
        mc_ci95: half,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dwc::{b_quantization, uniform_index, uniform_quantization, ReachRule};
    use std::sync::Arc;

    #[test]
    fn sc_threshold_matches_linear_scan() {
        let f = |n: u64| bound_mh(n, 1.0).unwrap();
        let phi = sc_phi(f, 0.6, 1 << 40).unwrap();
        let scan = (2..1_000_000u64).filter(|&n| f(n) >= 0.6).max().unwrap();
        assert_eq!(phi.threshold, scan);
        assert!(f(16) > 1.64 && f(16) < 1.642);
        assert_eq!(sc_phi(f, 100.0, 1 << 40).unwrap().threshold, 0);
        assert!(sc_phi(f, 0.01, 1 << 30).is_err());
    }

    #[test]
    fn upper_certificate_uses_covering_centroids() {
        let q = uniform_quantization(12, ReachRule::Isolated).unwrap();
        let p = Pmf::uniform(3, 10).unwrap();
        let j = 1000;
        let i = uniform_index(3, 10);
        let own = crate::codes::kt_rbound(8, j) - harmonic_weight_log2(i) / j as f64;
        let u = upper_certificate(&q, &p, j);
        assert!((u - own).abs() < 1e-12);
        assert_eq!(upper_certificate(&q, &Pmf::uniform(3, 20).unwrap(), j), f64::INFINITY);
    }

    #[test]
    fn certificate_upper_dominates_exact() {
        let q = uniform_quantization(6, ReachRule::Isolated).unwrap();
        let p = Pmf::uniform(1, 2).unwrap();
        for j in [1u64, 4, 16, 64] {
            let exact = exact_redundancy_by_types(&p, q.qstar().as_ref(), j).unwrap();
            assert!(exact <= upper_certificate(&q, &p, j) + 1e-12, "j={j}");
            let c = certify(&q, &p, j, 0.1, 1);
            if c.lower_exact {
                assert!((c.lower.unwrap() - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn infinite_delta_is_never_premature() {
        let q = Arc::new(b_quantization(3).unwrap());
        let phi = PhiScheme::new(q, f64::INFINITY, 0.05);
        let spec = SourceSpec::BMember { epsilon: 0.3, j: 1 };
        let r = premature_probability(&spec, &phi, 8, 2000, 3).unwrap();
        assert_eq!(r.premature_fraction, 0.0);
        assert!(premature_probability(&spec, &phi, 0, 10, 3).is_err());
    }

    #[test]
    fn out_of_zone_source_never_enters() {
        let q = Arc::new(uniform_quantization(8, ReachRule::Isolated).unwrap());
        let phi = PhiScheme::new(q, 0.1, 0.05);
        let spec = SourceSpec::uniform(100, 120);
        let r = premature_probability(&spec, &phi, 4, 3000, 1).unwrap();
        assert_eq!(r.entry_fraction, 0.0);
        assert_eq!(r.not_entered, 4);
    }

    #[test]
    fn csv_row_layout() {
        let r = PrematureRow {
            trial: 3,
            entered: true,
            entry_time: Some(17),
            trap_index: Some(2),
            premature: false,
            indeterminate: false,
        };
        assert_eq!(r.csv_row(), "3,1,17,2,0,0");
    }
}
