//! Data-driven percentile bounds, premiums derived from them, and the
//! quadrant witnesses separating compressibility from insurability.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::bound_mh;
use crate::dwc::{b_class_adversary, sc_premature_run, IndicatorState, PhiScheme, Quantization};
use crate::error::{Error, Result};
use crate::numeric::{fmt17, frequency_se};
use crate::pmf::{l1, percentile, tail_mass, Pmf, Symbol, PERCENTILE_SLACK};
use crate::sources::{mh_catalog, IRule, SampleStream, Selector, SourceSpec};

/// Where the bound `f(x^n, delta)` comes from.
#[derive(Clone)]
pub enum PercentileBound {
    /// Enters when `Phi` traps; the bound is the trap's `percentile_sup`.
    Trap(Arc<PhiScheme>),
    /// A data-independent rule, on from the first symbol.
    Analytic {
        label: String,
        rule: Arc<dyn Fn(f64) -> Symbol + Send + Sync>,
    },
}

impl fmt::Debug for PercentileBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PercentileBound::Trap(phi) => write!(f, "Trap({})", phi.quant.tag),
            PercentileBound::Analytic { label, .. } => write!(f, "Analytic({label})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PercentileScheme {
    pub bound: PercentileBound,
}

/// The trap machinery of `quant` at confidence `eta`, used as a percentile
/// bounder: `I` turns on at the trap, `f(., delta)` is the trap's sup.
pub fn percentile_scheme(quant: Arc<Quantization>, eta: f64) -> Result<PercentileScheme> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidArgument(format!("eta = {eta}")));
    }
    // entry is irrelevant here; an infinite delta makes it coincide with the trap
    Ok(PercentileScheme {
        bound: PercentileBound::Trap(Arc::new(PhiScheme::new(quant, f64::INFINITY, eta))),
    })
}

/// `f(delta) = 2^floor(1/delta) - 1` for every member of `I`.
pub fn i_class_scheme() -> PercentileScheme {
    PercentileScheme {
        bound: PercentileBound::Analytic {
            label: "I analytic tail".into(),
            rule: Arc::new(i_class_bound),
        },
    }
}

/// `2^floor(1/delta) - 1`, saturating at `u64::MAX`.
pub fn i_class_bound(delta: f64) -> Symbol {
    let k = (1.0 / delta + PERCENTILE_SLACK).floor();
    if k >= 64.0 {
        Symbol::MAX
    } else {
        (1u64 << k as u32) - 1
    }
}

impl PercentileScheme {
    pub fn new_state(&self) -> IndicatorState {
        IndicatorState::new()
    }

    pub fn step(&self, state: &mut IndicatorState, x: Symbol) {
        match &self.bound {
            PercentileBound::Trap(phi) => phi.step(state, x),
            PercentileBound::Analytic { .. } => {
                state.tau.push(x);
                state.n += 1;
            }
        }
    }

    /// `I(x^n)`.
    pub fn indicator(&self, state: &IndicatorState) -> bool {
        match &self.bound {
            PercentileBound::Trap(_) => state.trap.is_some(),
            PercentileBound::Analytic { .. } => true,
        }
    }

    /// `f(x^n, delta)` when `I = 1`.
    pub fn bound(&self, state: &IndicatorState, delta: f64) -> Option<Symbol> {
        match &self.bound {
            PercentileBound::Trap(phi) => state.trap.map(|i| phi.quant.centroid(i).percentile_sup(delta)),
            PercentileBound::Analytic { rule, .. } => Some(rule(delta)),
        }
    }

    /// `f(x^n, 1/n^2)`, or `None` before the insurer has begun.
    pub fn premium(&self, state: &IndicatorState) -> Option<Symbol> {
        if !self.indicator(state) || state.n == 0 {
            return None;
        }
        let n = state.n as f64;
        self.bound(state, 1.0 / (n * n))
    }
}

/// Premium after reading `xs`.
pub fn premium(scheme: &PercentileScheme, xs: &[Symbol]) -> Option<Symbol> {
    let mut st = scheme.new_state();
    for &x in xs {
        scheme.step(&mut st, x);
    }
    scheme.premium(&st)
}

/// Is there a `delta` with `f(delta) < F_p^{-1}(1 - delta)`? For finite `p`
/// only the `delta` just below each jump of `F_p^{-1}` matter, since `f` is
/// nonincreasing; lazy `p` is checked on the grid `2^-k`.
pub fn has_violation(f: impl Fn(f64) -> Symbol, p: &Pmf) -> bool {
    match p.as_finite() {
        Some(fin) => {
            let mut below = 0.0;
            for &(v, m) in fin.atoms() {
                // F^{-1}(1 - delta) >= v exactly when delta < 1 - F(v - 1)
                let right = 1.0 - below;
                if right > 0.0 && f(right * (1.0 - 1e-9)) < v {
                    return true;
                }
                below += m;
            }
            false
        }
        None => (1..60).any(|k| {
            let d = (-(k as f64)).exp2();
            f(d) < percentile(p, d)
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsureRow {
    pub trial: u64,
    pub entry_time: Option<u64>,
    pub premium_at_entry: Option<Symbol>,
    pub violations: u64,
    pub ruined: bool,
}

impl InsureRow {
    pub const CSV_HEADER: &'static str = "trial,entry_time,premium_at_entry,violations,ruined";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.trial,
            opt(self.entry_time),
            opt(self.premium_at_entry),
            self.violations,
            self.ruined as u8
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsureReport {
    pub scheme: String,
    pub eta: f64,
    pub trials: u64,
    pub horizon: u64,
    pub seed: u64,
    pub entry_fraction: f64,
    pub violation_count: u64,
    pub ruin_fraction: f64,
    pub ruin_se: f64,
    /// `eta + sum_{n >= first entry} n^-2`.
    pub ruin_allowance: f64,
    pub rows: Vec<InsureRow>,
}

fn insure_path(scheme: &PercentileScheme, p: &Pmf, seed: u64, trial: u64, horizon: u64) -> InsureRow {
    let mut stream = SampleStream::new(p, seed, trial);
    let mut st = scheme.new_state();
    loop {
        let x = stream.next_symbol();
        scheme.step(&mut st, x);
        if st.n >= horizon || scheme.indicator(&st) {
            break;
        }
    }
    if !scheme.indicator(&st) {
        return InsureRow {
            trial,
            entry_time: None,
            premium_at_entry: None,
            violations: 0,
            ruined: false,
        };
    }
    let entry = st.n;
    let premium_at_entry = scheme.premium(&st);
    let violations = has_violation(|d| scheme.bound(&st, d).unwrap(), p) as u64;
    // the premium only grows with n and settles at its limit
    let limit = scheme.bound(&st, 1e-300).unwrap();
    let mut ruined = false;
    let mut n = st.n;
    let mut settled = false;
    while n < horizon {
        let prem = if settled {
            limit
        } else {
            let v = scheme.bound(&st, 1.0 / (n as f64 * n as f64)).unwrap();
            settled = v == limit;
            v
        };
        let x = stream.next_symbol();
        n += 1;
        if x > prem {
            ruined = true;
            break;
        }
    }
    InsureRow {
        trial,
        entry_time: Some(entry),
        premium_at_entry,
        violations,
        ruined,
    }
}

/// Runs `trials` insured paths of `p` to `horizon`.
pub fn insure_run(
    p: &SourceSpec,
    scheme: &PercentileScheme,
    trials: u64,
    horizon: u64,
    seed: u64,
) -> Result<InsureReport> {
    if trials == 0 || horizon == 0 {
        return Err(Error::InvalidArgument("insure runs need trials >= 1 and horizon >= 1".into()));
    }
    let pmf = p.make_pmf()?;
    let rows: Vec<InsureRow> = (0..trials)
        .into_par_iter()
        .map(|t| insure_path(scheme, &pmf, seed, t, horizon))
        .collect();
    let k = trials as usize;
    let entered = rows.iter().filter(|r| r.entry_time.is_some()).count();
    let ruined = rows.iter().filter(|r| r.ruined).count();
    let first = rows.iter().filter_map(|r| r.entry_time).min().unwrap_or(horizon).max(1);
    let eta = match &scheme.bound {
        PercentileBound::Trap(phi) => phi.eta,
        PercentileBound::Analytic { .. } => 0.0,
    };
    Ok(InsureReport {
        scheme: format!("{:?}", scheme.bound),
        eta,
        trials,
        horizon,
        seed,
        entry_fraction: entered as f64 / k as f64,
        violation_count: rows.iter().map(|r| r.violations).sum(),
        ruin_fraction: ruined as f64 / k as f64,
        ruin_se: frequency_se(ruined, k),
        ruin_allowance: eta + crate::pmf::trigamma_tail(first as f64),
        rows,
    })
}

/// Adversarial selector against harmonic `q`: the lightest element of each
/// block, summed until the divergence partial sum passes `bits`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IAdversary {
    pub bits: f64,
    /// Number of blocks needed.
    pub k: u64,
    pub partial_sum: f64,
    /// `sum_{i <= k} (1/(i(i+1))) log2 1/q(x_i)`, the cross-entropy part.
    pub cross_entropy: f64,
}

/// `sum_{i <= K} p_i log2(p_i / q(x_i))` with `p_i = 1/(i(i+1))`, `x_i` the
/// rightmost symbol of block `i` and `q` harmonic, computed in log space so
/// that blocks past `2^64` are reachable. Gives up after `max_blocks`.
pub fn i_adversary_partial_sums(bits: f64, max_blocks: u64) -> Result<IAdversary> {
    let mut sum = 0.0;
    let mut cross = 0.0;
    for i in 1..=max_blocks {
        let fi = i as f64;
        let pi = 1.0 / (fi * (fi + 1.0));
        let lx = Selector::Rightmost.log2_pick(i);
        // log2(x(x+1)) = 2 log2 x + log2(1 + 1/x)
        let neg_lq = 2.0 * lx + (-lx).exp2().ln_1p() / std::f64::consts::LN_2;
        cross += pi * neg_lq;
        sum += pi * (pi.log2() + neg_lq);
        if sum > bits {
            return Ok(IAdversary {
                bits,
                k: i,
                partial_sum: sum,
                cross_entropy: cross,
            });
        }
    }
    Err(Error::Unsupported(format!("partial sums stay below {bits} bits for {max_blocks} blocks")))
}

/// One machine-checked line of a quadrant witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoLine {
    pub quadrant: String,
    pub item: String,
    pub parameter: String,
    pub value: f64,
    pub holds: bool,
}

impl DemoLine {
    pub const CSV_HEADER: &'static str = "quadrant,item,parameter,value,holds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.quadrant,
            self.item,
            self.parameter,
            fmt17(self.value),
            self.holds as u8
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationshipReport {
    pub lines: Vec<DemoLine>,
}

impl RelationshipReport {
    pub fn all_hold(&self) -> bool {
        self.lines.iter().all(|l| l.holds)
    }
}

fn line(q: &str, item: &str, parameter: String, value: f64, holds: bool) -> DemoLine {
    DemoLine {
        quadrant: q.into(),
        item: item.into(),
        parameter,
        value,
        holds,
    }
}

/// The four quadrants: (a) `N_1` weak but not tight, (b) `I` insurable but
/// not compressible, (c) `B` insurable but not d.w.c., (d) `M_h` strong.
pub fn relationship_demos(seed: u64) -> Result<RelationshipReport> {
    let mut lines = Vec::new();

    // (a) geometric(1/2) code pays E[X] bits; contamination by uniform(T_k)
    let p = Pmf::from_atoms(vec![(1, 0.5), (2, 0.3), (3, 0.2)])?;
    let mean: f64 = p.as_finite().unwrap().atoms().iter().map(|a| a.0 as f64 * a.1).sum();
    lines.push(line("a", "kieffer_cost", "geometric(1/2)".into(), mean, mean.is_finite()));
    let eps = 0.05;
    for k in [4u32, 8, 12, 16, 20] {
        let block = crate::sources::t_block(k)?;
        let contam = p.contaminate(&Pmf::uniform(*block.start(), *block.end())?, eps)?;
        let pc = percentile(&contam, eps / 2.0);
        lines.push(line(
            "a",
            "contamination_percentile",
            format!("k={k},eps={eps},delta={}", eps / 2.0),
            pc as f64,
            pc >= 1 << k && l1(&contam, &p) <= 2.0 * eps + 1e-12,
        ));
    }

    // (b) analytic tail bound, then the adversarial selector
    let member = Pmf::lazy(IRule {
        selector: Selector::Third,
    });
    for k in 2..=20u64 {
        let d = 1.0 / k as f64;
        let f = i_class_bound(d);
        let t = tail_mass(&member, f.saturating_add(1));
        lines.push(line("b", "tail_at_bound", format!("delta=1/{k}"), t, t <= d + 1e-12));
    }
    let adv = i_adversary_partial_sums(20.0, 1 << 40)?;
    lines.push(line("b", "adversary_blocks", "bits=20".into(), adv.k as f64, adv.partial_sum > 20.0));

    // (c) every all-ones entry is deceived
    for m in [10u64, 100, 1000] {
        let a = b_class_adversary(m, 0.1)?;
        lines.push(line(
            "c",
            "all_ones_prob",
            format!("m={m}"),
            a.all_ones_prob,
            a.all_ones_prob >= (-1f64).exp() - 1e-3,
        ));
        lines.push(line("c", "divergence", format!("m={m}"), a.per_symbol_divergence, a.exceeds_delta));
    }

    // (d) threshold indicator never premature
    for (name, spec) in mh_catalog() {
        let r = sc_premature_run(&spec, 1.0, 0.6, 50, seed)?;
        lines.push(line("d", "sc_premature", name.clone(), r.premature as f64, r.premature == 0));
        lines.push(line(
            "d",
            "sc_mc_redundancy",
            name,
            r.mc_redundancy,
            r.mc_redundancy <= bound_mh(r.entry_time, 1.0)? + r.mc_ci95,
        ));
    }
    Ok(RelationshipReport { lines })
}
