//! The indicator scheme: centroids with reaches and zones, capture of the
//! empirical type, the two refine conditions, traps and entry.

mod bclass;
mod fh;
mod premature;
mod uniform;

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::fmt;
use std::sync::Arc;

use crate::codes::{harmonic_weight_log2, SequentialMeasure};
use crate::pmf::{Pmf, Symbol, PERCENTILE_SLACK};
use crate::sources::SampleStream;

pub use bclass::{
    b_adversary_all_ones_prob, b_class_adversary, b_member_kl_iid, b_quantization, BAdversary,
    BStar,
};
pub use fh::{fh_quantization, FhQuantizationConfig, TwoRegimeCode};
pub use premature::{
    premature_probability, sc_phi, sc_premature_run, upper_certificate, Certificate,
    PrematureReport, PrematureRow, ScPhi, ScReport, Verdict,
};
pub use uniform::{
    uniform_index, uniform_interval, uniform_j, uniform_quantization, ReachRule,
};

/// `sup` over a centroid's reach of `F_r^{-1}(1 - gamma)`.
pub type PercentileSup = Arc<dyn Fn(f64) -> Symbol + Send + Sync>;

/// Sources for which a centroid's local measure has a valid `rbound`.
#[derive(Debug, Clone, PartialEq)]
pub enum Coverage {
    /// Finite-support sources inside `lo..=hi`.
    Interval(Symbol, Symbol),
    /// Finite-support sources inside this set.
    Set(Vec<Symbol>),
    None,
}

impl Coverage {
    pub fn covers(&self, p: &Pmf) -> bool {
        let Some(f) = p.as_finite() else {
            return false;
        };
        match self {
            Coverage::Interval(lo, hi) => f.atoms().iter().all(|a| a.0 >= *lo && a.0 <= *hi),
            Coverage::Set(s) => f.atoms().iter().all(|a| s.contains(&a.0)),
            Coverage::None => false,
        }
    }
}

#[derive(Clone)]
pub struct Centroid {
    pub index: u64,
    pub label: String,
    pub pmf: Pmf,
    pub reach: f64,
    pub local: Arc<dyn SequentialMeasure>,
    pub coverage: Coverage,
    percentile_sup: PercentileSup,
    pub zone_radius: f64,
    pub d: f64,
    /// `log2 C = 2 * percentile_sup(sqrt(D) / 6)`.
    pub log2_c: f64,
}

impl fmt::Debug for Centroid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Centroid")
            .field("index", &self.index)
            .field("label", &self.label)
            .field("reach", &self.reach)
            .field("zone_radius", &self.zone_radius)
            .field("d", &self.d)
            .field("log2_c", &self.log2_c)
            .finish()
    }
}

impl Centroid {
    pub fn new(
        index: u64,
        label: String,
        pmf: Pmf,
        reach: f64,
        local: Arc<dyn SequentialMeasure>,
        coverage: Coverage,
        percentile_sup: PercentileSup,
    ) -> Centroid {
        assert!(index >= 1 && reach > 0.0, "centroid {label}: index {index}, reach {reach}");
        let ln2_4 = LN_2.powi(4);
        let zone_radius = reach * reach * LN_2 * LN_2 / 16.0;
        let d = reach.powi(4) * ln2_4 / 256.0;
        let log2_c = 2.0 * percentile_sup(d.sqrt() / 6.0) as f64;
        // zone members are within the reach: J <= l1 / ln 2 < reach
        debug_assert!(zone_radius / LN_2 < reach);
        Centroid {
            index,
            label,
            pmf,
            reach,
            local,
            coverage,
            percentile_sup,
            zone_radius,
            d,
            log2_c,
        }
    }

    pub fn percentile_sup(&self, gamma: f64) -> Symbol {
        (self.percentile_sup)(gamma)
    }

    /// `exp(-n D / 18) <= eta / (2 C i^2 n (n+1))`, compared in natural logs.
    pub fn bnkrpt(&self, n: u64, eta: f64) -> bool {
        let nf = n as f64;
        let lhs = -nf * self.d / 18.0;
        let rhs = eta.ln()
            - LN_2
            - self.log2_c * LN_2
            - 2.0 * (self.index as f64).ln()
            - nf.ln()
            - (nf + 1.0).ln();
        lhs <= rhs
    }

    /// Smallest `n` satisfying [`Centroid::bnkrpt`]. The gap between the two
    /// sides is convex in `n` and negative at `n = 1` whenever `C >= 4`, so
    /// the admitting set is a ray.
    pub fn trap_from(&self, eta: f64) -> u64 {
        if self.bnkrpt(1, eta) {
            return 1;
        }
        let mut hi: u64 = 2;
        while !self.bnkrpt(hi, eta) {
            if hi >= 1 << 62 {
                return u64::MAX;
            }
            hi *= 2;
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.bnkrpt(mid, eta) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// `rbound(n) + log2(i(i+1)) / n`.
    pub fn entry_gap(&self, n: u64) -> f64 {
        match self.local.rbound(n) {
            Some(r) => r - harmonic_weight_log2(self.index) / n as f64,
            None => f64::INFINITY,
        }
    }

    /// `max { n >= 1 : rbound(n) + log2(i(i+1))/n >= delta }` (0 if empty),
    /// assuming the left side is nonincreasing in `n`.
    pub fn entry_after(&self, delta: f64) -> u64 {
        if self.entry_gap(1) < delta {
            return 0;
        }
        let mut hi: u64 = 2;
        while self.entry_gap(hi) >= delta {
            if hi >= 1 << 62 {
                return u64::MAX;
            }
            hi *= 2;
        }
        let mut lo = hi / 2;
        // entry_gap(lo) >= delta > entry_gap(hi)
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.entry_gap(mid) >= delta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// How capture candidates are located without scanning every centroid.
#[derive(Debug, Clone)]
pub(crate) enum CaptureIndex {
    Brute,
    /// Centroids are uniforms `u(a, b)` with `b <= cap`, indexed by
    /// [`uniform_index`].
    Intervals { cap: Symbol },
    /// Two-point centroids on `{1, s}` with index `s - 1`, for `s <= max_symbol`.
    Cells { max_symbol: Symbol },
}

/// A finite prefix of a countable quantization.
pub struct Quantization {
    pub tag: String,
    pub centroids: Vec<Centroid>,
    pub note: String,
    pub(crate) index: CaptureIndex,
    pub(crate) qstar: Arc<dyn SequentialMeasure>,
    max_radius: f64,
}

impl fmt::Debug for Quantization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Quantization")
            .field("tag", &self.tag)
            .field("centroids", &self.centroids.len())
            .field("note", &self.note)
            .finish()
    }
}

impl Quantization {
    pub(crate) fn new(
        tag: &str,
        centroids: Vec<Centroid>,
        note: String,
        index: CaptureIndex,
        qstar: Arc<dyn SequentialMeasure>,
    ) -> Quantization {
        for (k, c) in centroids.iter().enumerate() {
            assert_eq!(c.index, k as u64 + 1, "centroid indices must be 1..K in order");
        }
        let max_radius = centroids.iter().map(|c| c.zone_radius).fold(0.0, f64::max);
        Quantization {
            tag: tag.into(),
            centroids,
            note,
            index,
            qstar,
            max_radius,
        }
    }

    /// A quantization scanned by brute force, with `q*` the mixture of the
    /// local measures.
    pub fn from_centroids(tag: &str, centroids: Vec<Centroid>) -> crate::Result<Quantization> {
        let qstar: Arc<dyn SequentialMeasure> = if centroids.is_empty() {
            Arc::new(crate::codes::iid_measure(Pmf::lazy(crate::pmf::Harmonic)))
        } else {
            Arc::new(crate::codes::MixtureMeasure::new(
                centroids.iter().map(|c| (c.index, c.local.clone())).collect(),
            )?)
        };
        Ok(Quantization::new(tag, centroids, String::new(), CaptureIndex::Brute, qstar))
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    /// Centroid with index `i` (1-based).
    pub fn centroid(&self, i: u64) -> &Centroid {
        &self.centroids[(i - 1) as usize]
    }

    /// The mixture `q*` of the local measures with weights `1/(i(i+1))`.
    pub fn qstar(&self) -> &Arc<dyn SequentialMeasure> {
        &self.qstar
    }

    /// Indices `i` with `|centroid_i - tau|_1 < zone_radius_i`, increasing.
    pub fn capture_candidates_type(&self, tau: &EmpiricalType) -> Vec<u64> {
        if tau.n == 0 || self.centroids.is_empty() {
            return Vec::new();
        }
        let mut out = match &self.index {
            CaptureIndex::Brute => self
                .centroids
                .iter()
                .filter(|c| tau.l1(&c.pmf) < c.zone_radius)
                .map(|c| c.index)
                .collect(),
            CaptureIndex::Intervals { cap } => self.interval_candidates(tau, *cap),
            CaptureIndex::Cells { max_symbol } => tau
                .iter()
                .filter(|&(s, _)| s >= 2 && s <= *max_symbol)
                .map(|(s, _)| s - 1)
                .filter(|&i| {
                    let c = self.centroid(i);
                    tau.l1(&c.pmf) < c.zone_radius
                })
                .collect(),
        };
        out.sort_unstable();
        out
    }

    fn interval_candidates(&self, tau: &EmpiricalType, cap: Symbol) -> Vec<u64> {
        // l1 >= 2 tau(outside [a,b]) and l1 >= #zeros in [a,b] / S
        let r = self.max_radius;
        let n = tau.n as f64;
        let thr = r / 2.0 * n;
        let mut a_max = 0;
        let mut b_min = Symbol::MAX;
        let mut cum = 0u64;
        let mut support = 0u64;
        for (x, c) in tau.iter() {
            support += 1;
            let before = cum as f64;
            cum += c;
            if a_max == 0 && cum as f64 >= thr {
                a_max = x;
            }
            if b_min == Symbol::MAX && n - (cum as f64) < thr {
                b_min = x;
            }
            let _ = before;
        }
        let s_max = ((support as f64) / (1.0 - r)).floor() as u64;
        let mut out = Vec::new();
        for a in 1..=a_max.min(cap) {
            let b_hi = cap.min(a + s_max.saturating_sub(1));
            for b in b_min.max(a)..=b_hi {
                let i = uniform_index(a, b);
                let c = self.centroid(i);
                if tau.l1(&c.pmf) < c.zone_radius {
                    out.push(i);
                }
            }
        }
        out
    }

    /// Capture candidates of an arbitrary finite-support pmf `tau` by a full
    /// scan.
    pub fn capture_candidates(&self, tau: &Pmf) -> Vec<u64> {
        self.centroids
            .iter()
            .filter(|c| crate::pmf::l1(&c.pmf, tau) < c.zone_radius)
            .map(|c| c.index)
            .collect()
    }

    /// Keeps the candidates that pass both refine conditions at length `n`.
    pub fn refine(&self, tau: &EmpiricalType, n: u64, eta: f64, candidates: &[u64]) -> Vec<u64> {
        candidates
            .iter()
            .copied()
            .filter(|&i| {
                let c = self.centroid(i);
                c.bnkrpt(n, eta) && second_condition(c, tau)
            })
            .collect()
    }
}

/// `2 F_tau^{-1}(1 - sqrt(D)/6) <= log2 C`.
fn second_condition(c: &Centroid, tau: &EmpiricalType) -> bool {
    2.0 * tau.percentile(c.d.sqrt() / 6.0) as f64 <= c.log2_c
}

const DENSE: usize = 256;

/// Symbol counts of a sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalType {
    pub n: u64,
    dense: Vec<u64>,
    /// One past the largest dense symbol seen.
    dense_end: usize,
    sparse: BTreeMap<Symbol, u64>,
    distinct: usize,
}

impl Default for EmpiricalType {
    fn default() -> Self {
        Self::new()
    }
}

impl EmpiricalType {
    pub fn new() -> Self {
        EmpiricalType {
            n: 0,
            dense: vec![0; DENSE],
            dense_end: 0,
            sparse: BTreeMap::new(),
            distinct: 0,
        }
    }

    pub fn from_symbols(xs: &[Symbol]) -> Self {
        let mut t = Self::new();
        for &x in xs {
            t.push(x);
        }
        t
    }

    pub fn push(&mut self, x: Symbol) {
        self.n += 1;
        let slot = if (x as usize) < DENSE {
            self.dense_end = self.dense_end.max(x as usize + 1);
            &mut self.dense[x as usize]
        } else {
            self.sparse.entry(x).or_insert(0)
        };
        if *slot == 0 {
            self.distinct += 1;
        }
        *slot += 1;
    }

    pub fn count(&self, x: Symbol) -> u64 {
        if (x as usize) < DENSE {
            self.dense[x as usize]
        } else {
            self.sparse.get(&x).copied().unwrap_or(0)
        }
    }

    pub fn distinct(&self) -> usize {
        self.distinct
    }

    /// `(symbol, count)` in increasing symbol order.
    pub fn iter(&self) -> impl Iterator<Item = (Symbol, u64)> + '_ {
        self.dense[..self.dense_end]
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(x, &c)| (x as Symbol, c))
            .chain(self.sparse.iter().map(|(&x, &c)| (x, c)))
    }

    pub fn counts(&self) -> Vec<(Symbol, u64)> {
        self.iter().collect()
    }

    pub fn to_pmf(&self) -> crate::Result<Pmf> {
        Pmf::empirical(&self.counts())
    }

    /// `|tau - p|_1 = sum_{x in supp tau} |tau(x) - p(x)| + p(outside supp tau)`.
    pub fn l1(&self, p: &Pmf) -> f64 {
        let n = self.n as f64;
        let mut diff = 0.0;
        let mut covered = 0.0;
        for (x, c) in self.iter() {
            let m = p.mass(x);
            covered += m;
            diff += (c as f64 / n - m).abs();
        }
        diff + (1.0 - covered).max(0.0)
    }

    /// Smallest `m` with empirical cdf `>= 1 - gamma`.
    pub fn percentile(&self, gamma: f64) -> Symbol {
        let target = (1.0 - gamma) * self.n as f64 - PERCENTILE_SLACK * self.n as f64;
        let mut cum = 0u64;
        let mut last = 1;
        for (x, c) in self.iter() {
            cum += c;
            last = x;
            if cum as f64 >= target {
                return x;
            }
        }
        last
    }
}

/// The indicator `Phi` for one quantization and one `(delta, eta)`.
#[derive(Debug)]
pub struct PhiScheme {
    pub quant: Arc<Quantization>,
    pub delta: f64,
    pub eta: f64,
    trap_from: Vec<u64>,
    entry_after: Vec<u64>,
    min_trap_from: u64,
}

impl PhiScheme {
    pub fn new(quant: Arc<Quantization>, delta: f64, eta: f64) -> PhiScheme {
        let trap_from: Vec<u64> = quant.centroids.iter().map(|c| c.trap_from(eta)).collect();
        let entry_after = quant.centroids.iter().map(|c| c.entry_after(delta)).collect();
        let min_trap_from = trap_from.iter().copied().min().unwrap_or(u64::MAX);
        PhiScheme {
            quant,
            delta,
            eta,
            trap_from,
            entry_after,
            min_trap_from,
        }
    }

    /// First length at which the refine condition on `n` admits centroid `i`.
    pub fn trap_from(&self, i: u64) -> u64 {
        self.trap_from[(i - 1) as usize]
    }

    /// `max N_c` for centroid `i`; entry needs `m > entry_after`.
    pub fn entry_after(&self, i: u64) -> u64 {
        self.entry_after[(i - 1) as usize]
    }

    pub fn min_trap_from(&self) -> u64 {
        self.min_trap_from
    }

    /// Advances `state` by one symbol.
    pub fn step(&self, state: &mut IndicatorState, x: Symbol) {
        state.tau.push(x);
        state.n += 1;
        let n = state.n;
        if state.trap.is_none() && n >= self.min_trap_from {
            let tau = &state.tau;
            let trap = self
                .quant
                .capture_candidates_type(tau)
                .into_iter()
                .filter(|&i| n >= self.trap_from(i))
                .find(|&i| second_condition(self.quant.centroid(i), tau));
            if let Some(i) = trap {
                state.trap = Some(i);
                state.trap_time = Some(n);
            }
        }
        if let (Some(i), false) = (state.trap, state.entered) {
            if n > self.entry_after(i) {
                state.entered = true;
                state.entry_time = Some(n);
            }
        }
    }

    /// Runs one path until entry or `horizon`.
    pub fn run_path(&self, stream: &mut SampleStream, horizon: u64) -> IndicatorState {
        let mut st = IndicatorState::new();
        while st.n < horizon && !st.entered {
            let x = stream.next_symbol();
            self.step(&mut st, x);
        }
        st
    }
}

/// Monotone state of `Phi` along one path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndicatorState {
    pub n: u64,
    pub tau: EmpiricalType,
    pub trap: Option<u64>,
    pub trap_time: Option<u64>,
    pub entered: bool,
    pub entry_time: Option<u64>,
}

impl IndicatorState {
    pub fn new() -> Self {
        IndicatorState {
            tau: EmpiricalType::new(),
            ..Default::default()
        }
    }
}

/// Functional form of [`PhiScheme::step`].
pub fn phi_step(scheme: &PhiScheme, mut state: IndicatorState, x: Symbol) -> IndicatorState {
    scheme.step(&mut state, x);
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::KtCode;

    fn point_centroid(index: u64, x: Symbol, reach: f64) -> Centroid {
        Centroid::new(
            index,
            format!("point {x}"),
            Pmf::point(x),
            reach,
            Arc::new(KtCode::new(vec![x]).unwrap()),
            Coverage::Set(vec![x]),
            Arc::new(move |_| x),
        )
    }

    #[test]
    fn derived_constants() {
        let c = point_centroid(1, 3, 0.5);
        assert!((c.zone_radius - 0.25 * LN_2 * LN_2 / 16.0).abs() < 1e-16);
        assert!((c.d - 0.0625 * LN_2.powi(4) / 256.0).abs() < 1e-18);
        assert_eq!(c.log2_c, 6.0);
    }

    #[test]
    fn trap_from_matches_scan() {
        // reach 0.5 with C = 2^8 at index 1
        let c = Centroid::new(
            1,
            "fixed".into(),
            Pmf::point(4),
            0.5,
            Arc::new(KtCode::new(vec![4]).unwrap()),
            Coverage::Set(vec![4]),
            Arc::new(|_| 4),
        );
        assert_eq!(c.log2_c, 8.0);
        let eta = 0.1;
        let fast = c.trap_from(eta);
        let scan = (1..).find(|&n| c.bnkrpt(n, eta)).unwrap();
        assert_eq!(fast, scan);
        assert!(!c.bnkrpt(fast - 1, eta));
    }

    #[test]
    fn entry_after_matches_scan() {
        let c = point_centroid(1, 1, 1.0);
        let delta = 0.1;
        let scan = (1..100_000u64)
            .filter(|&n| 2.0 / n as f64 + 1.0 / n as f64 >= delta)
            .max()
            .unwrap();
        assert_eq!(c.entry_after(delta), scan);
        assert_eq!(scan, 30);
    }

    #[test]
    fn capture_boundary_is_strict() {
        let c = point_centroid(1, 1, 1.0);
        let q = Quantization::from_centroids("points", vec![c.clone()]).unwrap();
        assert_eq!(q.capture_candidates(&Pmf::point(1)), vec![1]);
        let eps = c.zone_radius / 2.0;
        let at_radius = Pmf::from_atoms(vec![(1, 1.0 - eps), (2, eps)]).unwrap();
        assert!((crate::pmf::l1(&at_radius, &c.pmf) - c.zone_radius).abs() < 1e-15);
        let inside = Pmf::from_atoms(vec![(1, 1.0 - eps * 0.99), (2, eps * 0.99)]).unwrap();
        assert_eq!(q.capture_candidates(&inside), vec![1]);
        let outside = Pmf::from_atoms(vec![(1, 1.0 - eps * 1.01), (2, eps * 1.01)]).unwrap();
        assert!(q.capture_candidates(&outside).is_empty());
        assert!(q.capture_candidates(&Pmf::point(9)).is_empty());
    }

    #[test]
    fn refine_second_condition_point_mass() {
        let c = point_centroid(1, 1, 1.0);
        assert!(c.log2_c >= 2.0);
        let tau = EmpiricalType::from_symbols(&[1; 10]);
        assert!(second_condition(&c, &tau));
        let q = Quantization::from_centroids("points", vec![c.clone()]).unwrap();
        assert!(q.refine(&tau, 10, 0.05, &[1]).is_empty());
        let n = c.trap_from(0.05);
        assert_eq!(q.refine(&tau, n, 0.05, &[1]), vec![1]);
    }

    #[test]
    fn single_point_class_traps_then_enters() {
        let c = point_centroid(1, 2, 1.0);
        let q = Arc::new(Quantization::from_centroids("points", vec![c.clone()]).unwrap());
        let phi = PhiScheme::new(q, 0.1, 0.05);
        let mut st = IndicatorState::new();
        let t = c.trap_from(0.05);
        for m in 1..=t {
            phi.step(&mut st, 2);
            assert_eq!(st.trap.is_some(), m >= t);
        }
        assert_eq!(st.trap_time, Some(t));
        // entry needs rbound + 1/n < 0.1, i.e. n > 30, already true
        assert!(st.entered);
        assert_eq!(st.entry_time, Some(t));
    }

    #[test]
    fn empty_quantization_never_enters() {
        let q = Arc::new(Quantization::from_centroids("empty", vec![]).unwrap());
        let phi = PhiScheme::new(q, 0.1, 0.05);
        let mut stream = SampleStream::new(&Pmf::uniform(1, 3).unwrap(), 1, 0);
        let st = phi.run_path(&mut stream, 5000);
        assert!(!st.entered && st.trap.is_none());
        assert_eq!(st.n, 5000);
    }

    #[test]
    fn empirical_type_ops() {
        let t = EmpiricalType::from_symbols(&[3, 1, 3, 1000, 3]);
        assert_eq!(t.counts(), vec![(1, 1), (3, 3), (1000, 1)]);
        assert_eq!(t.distinct(), 3);
        assert_eq!(t.percentile(0.5), 3);
        assert_eq!(t.percentile(0.1), 1000);
        let p = Pmf::uniform(1, 3).unwrap();
        let direct = crate::pmf::l1(&t.to_pmf().unwrap(), &p);
        assert!((t.l1(&p) - direct).abs() < 1e-12);
    }
}
