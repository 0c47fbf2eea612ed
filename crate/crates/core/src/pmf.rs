//! Distributions over the naturals and the divergence / percentile primitives.
//!
//! A [`Pmf`] is either an explicit finite list of atoms or a lazy rule with an
//! analytic tail. Lazy sums are truncated once the relevant tails drop below
//! [`TAIL_TOLERANCE`]; KL sums that exceed [`DIVERGENCE_CAP_BITS`] are reported
//! as infinite. Everything is in bits.

use std::fmt;
use std::ops::Add;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// A natural number `>= 1`.
pub type Symbol = u64;

/// Lazy sums stop once the remaining tail mass is below this.
pub const TAIL_TOLERANCE: f64 = 1e-14;
/// A truncated divergence sum above this many bits is declared infinite.
pub const DIVERGENCE_CAP_BITS: f64 = 1e4;
/// Finite pmfs must sum to one within this tolerance.
pub const MASS_TOLERANCE: f64 = 1e-12;
/// Absolute slack applied to cdf comparisons in [`percentile`].
pub const PERCENTILE_SLACK: f64 = 1e-12;
const MAX_WALK: usize = 50_000_000;

/// A nonnegative real or `+inf`, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// As an `f64`, with `Infinite` mapped to `f64::INFINITY`.
    pub fn value(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::Infinite => f64::INFINITY,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            ExtReal::Finite(v)
        } else {
            ExtReal::Infinite
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::Infinite,
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.value().partial_cmp(&other.value())
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinite => f.write_str("inf"),
        }
    }
}

/// A distribution with infinite (or very large) support given by a rule.
///
/// Implementations must keep `tail` nonincreasing with `tail(1) == 1`, and
/// `next_atom(from)` must return the smallest support symbol `>= from`.
pub trait LazyRule: Send + Sync + fmt::Debug {
    fn describe(&self) -> String;
    fn mass(&self, x: Symbol) -> f64;
    fn next_atom(&self, from: Symbol) -> Option<Symbol>;
    /// Total mass on symbols `>= k`.
    fn tail(&self, k: Symbol) -> f64;
    /// Inverse cdf, when it has a closed form.
    fn quantile(&self, _u: f64) -> Option<Symbol> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinitePmf {
    atoms: Vec<(Symbol, f64)>,
}

impl FinitePmf {
    pub fn atoms(&self) -> &[(Symbol, f64)] {
        &self.atoms
    }

    pub fn mass(&self, x: Symbol) -> f64 {
        match self.atoms.binary_search_by_key(&x, |a| a.0) {
            Ok(i) => self.atoms[i].1,
            Err(_) => 0.0,
        }
    }

    fn tail(&self, k: Symbol) -> f64 {
        let start = self.atoms.partition_point(|a| a.0 < k);
        if start == 0 {
            return 1.0;
        }
        self.atoms[start..]
            .iter()
            .map(|a| a.1)
            .collect::<CompensatedSum>()
            .value()
    }

    fn next_atom(&self, from: Symbol) -> Option<Symbol> {
        let i = self.atoms.partition_point(|a| a.0 < from);
        self.atoms.get(i).map(|a| a.0)
    }
}

#[derive(Debug, Clone)]
pub enum Pmf {
    Finite(FinitePmf),
    Lazy(Arc<dyn LazyRule>),
}

impl PartialEq for Pmf {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Pmf::Finite(a), Pmf::Finite(b)) => a == b,
            (Pmf::Lazy(a), Pmf::Lazy(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl Pmf {
    /// Builds a finite pmf; atoms may come in any order but must be distinct,
    /// strictly positive and sum to one.
    pub fn from_atoms(mut atoms: Vec<(Symbol, f64)>) -> Result<Pmf> {
        if atoms.is_empty() {
            return Err(Error::InvalidPmf("empty support".into()));
        }
        atoms.sort_by_key(|a| a.0);
        for w in atoms.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidPmf(format!("repeated symbol {}", w[0].0)));
            }
        }
        for &(x, m) in &atoms {
            if x == 0 {
                return Err(Error::InvalidPmf("symbol 0 is not a natural".into()));
            }
            if !(m > 0.0 && m <= 1.0 + MASS_TOLERANCE) {
                return Err(Error::InvalidPmf(format!("mass {m} at symbol {x}")));
            }
        }
        let total = atoms.iter().map(|a| a.1).collect::<CompensatedSum>().value();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidPmf(format!("masses sum to {total}")));
        }
        Ok(Pmf::Finite(FinitePmf { atoms }))
    }

    /// Like [`Pmf::from_atoms`] but merges repeated symbols and drops zeros.
    pub fn from_weights(weights: impl IntoIterator<Item = (Symbol, f64)>) -> Result<Pmf> {
        let mut v: Vec<(Symbol, f64)> = weights.into_iter().filter(|a| a.1 > 0.0).collect();
        v.sort_by_key(|a| a.0);
        let mut merged: Vec<(Symbol, f64)> = Vec::with_capacity(v.len());
        for (x, m) in v {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += m,
                _ => merged.push((x, m)),
            }
        }
        Pmf::from_atoms(merged)
    }

    pub fn point(x: Symbol) -> Pmf {
        Pmf::Finite(FinitePmf {
            atoms: vec![(x.max(1), 1.0)],
        })
    }

    /// Uniform over `lo..=hi`.
    pub fn uniform(lo: Symbol, hi: Symbol) -> Result<Pmf> {
        if lo == 0 || lo > hi {
            return Err(Error::InvalidPmf(format!("uniform({lo},{hi})")));
        }
        let size = hi - lo + 1;
        if size > 50_000_000 {
            return Err(Error::InvalidPmf(format!("uniform support too large: {size}")));
        }
        let m = 1.0 / size as f64;
        Ok(Pmf::Finite(FinitePmf {
            atoms: (lo..=hi).map(|x| (x, m)).collect(),
        }))
    }

    pub fn lazy(rule: impl LazyRule + 'static) -> Pmf {
        Pmf::Lazy(Arc::new(rule))
    }

    /// Empirical distribution of a count table.
    pub fn empirical(counts: &[(Symbol, u64)]) -> Result<Pmf> {
        let n: u64 = counts.iter().map(|c| c.1).sum();
        if n == 0 {
            return Err(Error::InvalidPmf("empty sample".into()));
        }
        Pmf::from_weights(counts.iter().map(|&(x, c)| (x, c as f64 / n as f64)))
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Pmf::Finite(_))
    }

    pub fn as_finite(&self) -> Option<&FinitePmf> {
        match self {
            Pmf::Finite(f) => Some(f),
            Pmf::Lazy(_) => None,
        }
    }

    pub fn mass(&self, x: Symbol) -> f64 {
        match self {
            Pmf::Finite(f) => f.mass(x),
            Pmf::Lazy(r) => r.mass(x),
        }
    }

    /// Smallest support symbol `>= from`.
    pub fn next_atom(&self, from: Symbol) -> Option<Symbol> {
        match self {
            Pmf::Finite(f) => f.next_atom(from),
            Pmf::Lazy(r) => r.next_atom(from),
        }
    }

    /// Mass on symbols `>= k`.
    pub fn tail(&self, k: Symbol) -> f64 {
        if k <= 1 {
            return 1.0;
        }
        match self {
            Pmf::Finite(f) => f.tail(k),
            Pmf::Lazy(r) => r.tail(k),
        }
    }

    /// Smallest support symbol.
    pub fn base(&self) -> Symbol {
        self.next_atom(1).expect("nonempty support")
    }

    /// Largest support symbol; only defined for finite supports.
    pub fn span(&self) -> Result<Symbol> {
        match self {
            Pmf::Finite(f) => Ok(f.atoms.last().expect("nonempty").0),
            Pmf::Lazy(r) => Err(Error::InvalidArgument(format!(
                "span of infinite-support pmf {}",
                r.describe()
            ))),
        }
    }

    /// Relocates mass so that the result puts `p(i)` on `i + r`.
    pub fn shift(&self, r: Symbol) -> Pmf {
        if r == 0 {
            return self.clone();
        }
        match self {
            Pmf::Finite(f) => Pmf::Finite(FinitePmf {
                atoms: f.atoms.iter().map(|&(x, m)| (x + r, m)).collect(),
            }),
            Pmf::Lazy(_) => Pmf::lazy(Shifted {
                inner: self.clone(),
                offset: r,
            }),
        }
    }

    /// `(1 - eps) * self + eps * other`.
    pub fn contaminate(&self, other: &Pmf, eps: f64) -> Result<Pmf> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidArgument(format!("mixing weight {eps}")));
        }
        if eps == 0.0 {
            return Ok(self.clone());
        }
        if eps == 1.0 {
            return Ok(other.clone());
        }
        match (self, other) {
            (Pmf::Finite(a), Pmf::Finite(b)) => Pmf::from_weights(
                a.atoms
                    .iter()
                    .map(|&(x, m)| (x, (1.0 - eps) * m))
                    .chain(b.atoms.iter().map(|&(x, m)| (x, eps * m))),
            ),
            _ => Ok(Pmf::lazy(Mixed {
                a: self.clone(),
                b: other.clone(),
                eps,
            })),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Pmf::Finite(f) if f.atoms.len() <= 8 => format!("{:?}", f.atoms),
            Pmf::Finite(f) => format!(
                "finite[{} atoms on {}..={}]",
                f.atoms.len(),
                f.atoms[0].0,
                f.atoms.last().unwrap().0
            ),
            Pmf::Lazy(r) => r.describe(),
        }
    }

    /// Walks the support in increasing order, stopping once the remaining
    /// tail is below `tol` (lazy) or the support is exhausted. Returns the
    /// first unvisited symbol and its tail.
    pub fn walk(&self, tol: f64, mut f: impl FnMut(Symbol, f64)) -> (Option<Symbol>, f64) {
        match self {
            Pmf::Finite(p) => {
                for &(x, m) in &p.atoms {
                    f(x, m);
                }
                (None, 0.0)
            }
            Pmf::Lazy(r) => {
                let mut cur = r.next_atom(1);
                let mut steps = 0usize;
                while let Some(x) = cur {
                    let t = r.tail(x);
                    if t < tol || steps >= MAX_WALK {
                        return (Some(x), t);
                    }
                    f(x, r.mass(x));
                    steps += 1;
                    cur = x.checked_add(1).and_then(|y| r.next_atom(y));
                }
                (None, 0.0)
            }
        }
    }

    pub fn sampler(&self) -> Sampler {
        match self {
            Pmf::Finite(p) => {
                let mut acc = CompensatedSum::new();
                let mut cdf = Vec::with_capacity(p.atoms.len());
                for &(_, m) in &p.atoms {
                    acc.add(m);
                    cdf.push(acc.value());
                }
                Sampler::Table {
                    symbols: p.atoms.iter().map(|a| a.0).collect(),
                    cdf,
                }
            }
            Pmf::Lazy(r) => Sampler::Lazy(r.clone()),
        }
    }
}

/// Inverse-cdf sampler for a [`Pmf`].
#[derive(Debug, Clone)]
pub enum Sampler {
    Table { symbols: Vec<Symbol>, cdf: Vec<f64> },
    Lazy(Arc<dyn LazyRule>),
}

impl Sampler {
    /// Maps `u` in `[0, 1)` to a symbol.
    pub fn draw(&self, u: f64) -> Symbol {
        match self {
            Sampler::Table { symbols, cdf } => {
                let i = cdf.partition_point(|&c| c <= u);
                symbols[i.min(symbols.len() - 1)]
            }
            Sampler::Lazy(r) => {
                if let Some(x) = r.quantile(u) {
                    return x;
                }
                let mut acc = 0.0;
                let mut cur = r.next_atom(1);
                let mut last = 1;
                while let Some(x) = cur {
                    acc += r.mass(x);
                    last = x;
                    if acc > u {
                        return x;
                    }
                    cur = x.checked_add(1).and_then(|y| r.next_atom(y));
                }
                last
            }
        }
    }
}

/// Walks the union of two supports. Stops when each side is either exhausted
/// or (lazy) has tail below `tol`; returns the tails left over.
fn walk_union(p: &Pmf, q: &Pmf, tol: f64, mut f: impl FnMut(f64, f64)) -> (f64, f64) {
    let mut cur: Symbol = 1;
    let mut steps = 0usize;
    loop {
        let np = p.next_atom(cur);
        let nq = q.next_atom(cur);
        let x = match (np, nq) {
            (None, None) => return (0.0, 0.0),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (Some(a), Some(b)) => a.min(b),
        };
        let done_p = np.is_none() || (!p.is_finite() && p.tail(x) < tol);
        let done_q = nq.is_none() || (!q.is_finite() && q.tail(x) < tol);
        if (done_p && done_q) || steps >= MAX_WALK {
            let tp = if np.is_none() { 0.0 } else { p.tail(x) };
            let tq = if nq.is_none() { 0.0 } else { q.tail(x) };
            return (tp, tq);
        }
        f(p.mass(x), q.mass(x));
        steps += 1;
        match x.checked_add(1) {
            Some(y) => cur = y,
            None => return (0.0, 0.0),
        }
    }
}

/// Partial KL sum and the lower / upper remainder bounds left by truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlInterval {
    pub lower: ExtReal,
    pub upper: ExtReal,
}

/// `D(p || q)` in bits, with an interval for the truncated remainder.
pub fn kl_interval(p: &Pmf, q: &Pmf) -> KlInterval {
    let mut sum = CompensatedSum::new();
    let mut infinite = false;
    let (next, tp) = p.walk(TAIL_TOLERANCE, |x, pm| {
        let qm = q.mass(x);
        if qm <= 0.0 {
            infinite = true;
        } else {
            sum.add(pm * (pm / qm).log2());
        }
    });
    let partial = sum.value();
    if infinite || partial > DIVERGENCE_CAP_BITS {
        return KlInterval {
            lower: ExtReal::Infinite,
            upper: ExtReal::Infinite,
        };
    }
    match next {
        None => KlInterval {
            lower: ExtReal::Finite(partial.max(0.0)),
            upper: ExtReal::Finite(partial.max(0.0)),
        },
        Some(x) => {
            // log-sum inequality on the remainder
            let tq = q.tail(x);
            if tp > 0.0 && tq <= 0.0 {
                return KlInterval {
                    lower: ExtReal::Infinite,
                    upper: ExtReal::Infinite,
                };
            }
            let rem = if tp > 0.0 { tp * (tp / tq).log2() } else { 0.0 };
            KlInterval {
                lower: ExtReal::Finite((partial + rem).max(0.0)),
                upper: if tp > 0.0 {
                    ExtReal::Infinite
                } else {
                    ExtReal::Finite(partial.max(0.0))
                },
            }
        }
    }
}

/// `D(p || q)` in bits. When a lazy `p` had to be truncated this is the
/// partial sum plus the log-sum lower bound of the remainder.
pub fn kl(p: &Pmf, q: &Pmf) -> ExtReal {
    kl_interval(p, q).lower
}

/// `D(p || m) + D(q || m)` with `m` the midpoint; lies in `[0, 2]`.
pub fn j_divergence(p: &Pmf, q: &Pmf) -> f64 {
    let mut sum = CompensatedSum::new();
    walk_union(p, q, TAIL_TOLERANCE, |a, b| sum.add(j_term(a, b)));
    sum.value().clamp(0.0, 2.0)
}

/// Contribution of one coordinate to [`j_divergence`].
pub fn j_term(a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    let mut t = 0.0;
    if a > 0.0 {
        t += a * (a / m).log2();
    }
    if b > 0.0 {
        t += b * (b / m).log2();
    }
    t
}

/// `sum_x |p(x) - q(x)|`.
pub fn l1(p: &Pmf, q: &Pmf) -> f64 {
    let mut sum = CompensatedSum::new();
    let (tp, tq) = walk_union(p, q, TAIL_TOLERANCE, |a, b| sum.add((a - b).abs()));
    // the remainder is at most tp + tq and at least |tp - tq|
    sum.add((tp - tq).abs());
    sum.value().clamp(0.0, 2.0)
}

/// Smallest `m` with `sum_{x <= m} p(x) >= 1 - gamma`.
///
/// Returns `Symbol::MAX` if the cdf never reaches the level within the
/// representable range.
pub fn percentile(p: &Pmf, gamma: f64) -> Symbol {
    let level = 1.0 - gamma;
    match p {
        Pmf::Finite(f) => {
            let mut cdf = CompensatedSum::new();
            for &(x, m) in &f.atoms {
                cdf.add(m);
                if cdf.value() + PERCENTILE_SLACK >= level {
                    return x;
                }
            }
            f.atoms.last().unwrap().0
        }
        Pmf::Lazy(r) => {
            let mut cur = r.next_atom(1);
            let mut steps = 0usize;
            while let Some(x) = cur {
                let rest = match x.checked_add(1) {
                    Some(y) => r.tail(y),
                    None => 0.0,
                };
                if rest <= gamma + PERCENTILE_SLACK || steps >= MAX_WALK {
                    return x;
                }
                steps += 1;
                cur = x.checked_add(1).and_then(|y| r.next_atom(y));
            }
            Symbol::MAX
        }
    }
}

/// Shannon entropy in bits.
pub fn entropy(p: &Pmf) -> ExtReal {
    let mut sum = CompensatedSum::new();
    p.walk(TAIL_TOLERANCE, |_, m| sum.add(-m * m.log2()));
    let h = sum.value();
    if h > DIVERGENCE_CAP_BITS {
        ExtReal::Infinite
    } else {
        ExtReal::Finite(h.max(0.0))
    }
}

/// Mass on symbols `>= k`.
pub fn tail_mass(p: &Pmf, k: Symbol) -> f64 {
    p.tail(k)
}

// ---------------------------------------------------------------------------
// Lazy rules

/// `q(i) = 1 / (i (i + 1))`.
#[derive(Debug, Clone, Copy)]
pub struct Harmonic;

impl LazyRule for Harmonic {
    fn describe(&self) -> String {
        "harmonic 1/(i(i+1))".into()
    }
    fn mass(&self, x: Symbol) -> f64 {
        if x == 0 {
            return 0.0;
        }
        let x = x as f64;
        1.0 / (x * (x + 1.0))
    }
    fn next_atom(&self, from: Symbol) -> Option<Symbol> {
        Some(from.max(1))
    }
    fn tail(&self, k: Symbol) -> f64 {
        1.0 / k.max(1) as f64
    }
    fn quantile(&self, u: f64) -> Option<Symbol> {
        // cdf(i) = 1 - 1/(i+1)
        let guess = (1.0 / (1.0 - u) - 1.0).ceil().max(1.0);
        if !guess.is_finite() || guess > 1e18 {
            return Some(Symbol::MAX);
        }
        let mut i = guess as Symbol;
        while i > 1 && 1.0 - 1.0 / i as f64 > u {
            i -= 1;
        }
        while 1.0 - 1.0 / (i as f64 + 1.0) <= u {
            i += 1;
        }
        Some(i)
    }
}

/// `p(i) = (1 - r) r^{i-1}`.
#[derive(Debug, Clone, Copy)]
pub struct Geometric {
    pub ratio: f64,
}

impl LazyRule for Geometric {
    fn describe(&self) -> String {
        format!("geometric(ratio={})", self.ratio)
    }
    fn mass(&self, x: Symbol) -> f64 {
        if x == 0 {
            return 0.0;
        }
        (1.0 - self.ratio) * self.ratio.powf((x - 1) as f64)
    }
    fn next_atom(&self, from: Symbol) -> Option<Symbol> {
        Some(from.max(1))
    }
    fn tail(&self, k: Symbol) -> f64 {
        self.ratio.powf((k.max(1) - 1) as f64)
    }
    fn quantile(&self, u: f64) -> Option<Symbol> {
        if self.ratio <= 0.0 {
            return Some(1);
        }
        // smallest i with 1 - r^i > u
        let i = ((1.0 - u).ln() / self.ratio.ln()).floor() + 1.0;
        Some(if i.is_finite() && i >= 1.0 { i as Symbol } else { 1 })
    }
}

/// `q(n) = 6 / (pi^2 n^2)`.
#[derive(Debug, Clone, Copy)]
pub struct Zipf2;

pub(crate) fn trigamma_tail(k: f64) -> f64 {
    // sum_{n >= k} 1/n^2
    let mut acc = 0.0;
    let mut x = k;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = x * x;
    acc + 1.0 / x + 1.0 / (2.0 * x2) + 1.0 / (6.0 * x2 * x) - 1.0 / (30.0 * x2 * x2 * x)
        + 1.0 / (42.0 * x2 * x2 * x2 * x)
        - 1.0 / (30.0 * x2 * x2 * x2 * x2 * x)
}

impl LazyRule for Zipf2 {
    fn describe(&self) -> String {
        "zipf 6/(pi^2 n^2)".into()
    }
    fn mass(&self, x: Symbol) -> f64 {
        if x == 0 {
            return 0.0;
        }
        let x = x as f64;
        6.0 / (std::f64::consts::PI.powi(2) * x * x)
    }
    fn next_atom(&self, from: Symbol) -> Option<Symbol> {
        Some(from.max(1))
    }
    fn tail(&self, k: Symbol) -> f64 {
        if k <= 1 {
            return 1.0;
        }
        (6.0 / std::f64::consts::PI.powi(2) * trigamma_tail(k as f64)).min(1.0)
    }
}

/// Splits `1/((i+1)(i+2))` equally over the dyadic block `{2^i, ..., 2^{i+1}-1}`.
#[derive(Debug, Clone, Copy)]
pub struct DyadicSplit;

fn block_of(x: Symbol) -> u32 {
    63 - x.leading_zeros()
}

impl LazyRule for DyadicSplit {
    fn describe(&self) -> String {
        "dyadic split 1/((i+1)(i+2)) over T_i".into()
    }
    fn mass(&self, x: Symbol) -> f64 {
        if x == 0 {
            return 0.0;
        }
        let i = block_of(x) as f64;
        1.0 / ((i + 1.0) * (i + 2.0)) / 2f64.powf(i)
    }
    fn next_atom(&self, from: Symbol) -> Option<Symbol> {
        Some(from.max(1))
    }
    fn tail(&self, k: Symbol) -> f64 {
        if k <= 1 {
            return 1.0;
        }
        let i = block_of(k);
        let block_end = if i == 63 { Symbol::MAX } else { (1u64 << (i + 1)) - 1 };
        let left = (block_end - k + 1) as f64;
        left * self.mass(k) + 1.0 / (i as f64 + 2.0)
    }
}

/// `(1 - eps) a + eps b` when at least one side is lazy.
#[derive(Debug, Clone)]
pub struct Mixed {
    pub a: Pmf,
    pub b: Pmf,
    pub eps: f64,
}

impl LazyRule for Mixed {
    fn describe(&self) -> String {
        format!(
            "(1-{e})*[{}] + {e}*[{}]",
            self.a.describe(),
            self.b.describe(),
            e = self.eps
        )
    }
    fn mass(&self, x: Symbol) -> f64 {
        (1.0 - self.eps) * self.a.mass(x) + self.eps * self.b.mass(x)
    }
    fn next_atom(&self, from: Symbol) -> Option<Symbol> {
        match (self.a.next_atom(from), self.b.next_atom(from)) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        }
    }
    fn tail(&self, k: Symbol) -> f64 {
        (1.0 - self.eps) * self.a.tail(k) + self.eps * self.b.tail(k)
    }
}

/// `inner` relocated by `offset`.
#[derive(Debug, Clone)]
pub struct Shifted {
    pub inner: Pmf,
    pub offset: Symbol,
}

impl LazyRule for Shifted {
    fn describe(&self) -> String {
        format!("shift({}, {})", self.inner.describe(), self.offset)
    }
    fn mass(&self, x: Symbol) -> f64 {
        if x <= self.offset {
            0.0
        } else {
            self.inner.mass(x - self.offset)
        }
    }
    fn next_atom(&self, from: Symbol) -> Option<Symbol> {
        let inner_from = from.saturating_sub(self.offset).max(1);
        self.inner
            .next_atom(inner_from)
            .and_then(|x| x.checked_add(self.offset))
    }
    fn tail(&self, k: Symbol) -> f64 {
        if k <= self.offset + 1 {
            1.0
        } else {
            self.inner.tail(k - self.offset)
        }
    }
    fn quantile(&self, u: f64) -> Option<Symbol> {
        match &self.inner {
            Pmf::Lazy(r) => r.quantile(u).map(|x| x.saturating_add(self.offset)),
            Pmf::Finite(_) => None,
        }
    }
}
