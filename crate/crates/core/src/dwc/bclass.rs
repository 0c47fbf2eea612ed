//! The class `B`: two-point sources `(1 - eps) on 1, eps on 2^{n_eps} + j - 1`,
//! their cell quantization and the all-ones deception.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{CaptureIndex, Centroid, Coverage, Quantization};
use crate::codes::{KtCode, MeasureState, SequentialMeasure};
use crate::error::{Error, Result};
use crate::numeric::{log2_gamma, CompensatedSum};
use crate::pmf::{j_divergence, Pmf, Symbol};
use crate::sources::{b_symbol, SourceSpec};

/// `log2` of the add-half probability of `a` ones and `b` copies of the
/// other symbol, over a two-letter alphabet.
fn log2_kt2(a: u64, b: u64) -> f64 {
    log2_gamma(a as f64 + 0.5) + log2_gamma(b as f64 + 0.5)
        - PI.log2()
        - log2_gamma((a + b) as f64 + 1.0)
}

/// `log2 1/(i(i+1))` for the cell `(n, j)`, whose index is `2^n - 2 + j`,
/// without forming `2^n`.
pub(crate) fn log2_cell_weight(n: u64, j: u64) -> f64 {
    let scale = (-(n as f64)).exp2();
    let li = n as f64 + ((j as f64 - 2.0) * scale).ln_1p() / std::f64::consts::LN_2;
    let li1 = n as f64 + ((j as f64 - 1.0) * scale).ln_1p() / std::f64::consts::LN_2;
    -(li + li1)
}

/// Infinite mixture over every cell `(n, j)` of add-half codes on `{1, s}`
/// with weight `1/((s-1) s)`. All-ones strings collect the total weight 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct BStar;

impl BStar {
    /// `log2 q*` of a string with `ones` ones and `c` copies of the symbol of
    /// cell `(n, j)`.
    pub fn log2_cell_prob(n: u64, j: u64, ones: u64, c: u64) -> f64 {
        if c == 0 {
            log2_kt2(ones, 0)
        } else {
            log2_cell_weight(n, j) + log2_kt2(ones, c)
        }
    }
}

impl SequentialMeasure for BStar {
    fn name(&self) -> String {
        "B-cell mixture".into()
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
        let mut ones = 0;
        let mut other: Option<(Symbol, u64)> = None;
        for &(s, c) in counts.iter().filter(|c| c.1 > 0) {
            match s {
                0 => return Some(f64::NEG_INFINITY),
                1 => ones = c,
                _ if other.is_some() => return Some(f64::NEG_INFINITY),
                _ => other = Some((s, c)),
            }
        }
        Some(match other {
            None => log2_kt2(ones, 0),
            Some((s, c)) => {
                let i = (s - 1) as f64;
                -(i.log2() + (i + 1.0).log2()) + log2_kt2(ones, c)
            }
        })
    }
}

/// Cells `(n, j)` for `n <= max_level`, i.e. `2^{max_level+1} - 2` centroids.
/// Centroid `(n, j)` sits at the midpoint of `(1/(n+1), 1/n]`, has index
/// `s - 1` for its symbol `s`, and reach `J(centroid, delta_1)`.
pub fn b_quantization(max_level: u64) -> Result<Quantization> {
    if !(1..=16).contains(&max_level) {
        return Err(Error::InvalidArgument(format!("B max level {max_level} outside 1..=16")));
    }
    let mut centroids = Vec::new();
    for n in 1..=max_level {
        let eps = 0.5 * (1.0 / (n as f64 + 1.0) + 1.0 / n as f64);
        let top = 1.0 / n as f64;
        for j in 1..=(1u64 << n) {
            let s = b_symbol(n, j)?;
            let pmf = Pmf::from_atoms(vec![(1, 1.0 - eps), (s, eps)])?;
            // other supports stay at J >= eps + eps' > J(centroid, delta_1)
            let reach = j_divergence(&pmf, &Pmf::point(1));
            let sup: super::PercentileSup = Arc::new(move |g| if g < top { s } else { 1 });
            centroids.push(Centroid::new(
                s - 1,
                format!("b({n},{j})"),
                pmf,
                reach,
                Arc::new(KtCode::new(vec![1, s])?),
                Coverage::Set(vec![1, s]),
                sup,
            ));
        }
    }
    let max_symbol = (1u64 << (max_level + 1)) - 1;
    Ok(Quantization::new(
        "b",
        centroids,
        format!("cells with level <= {max_level}; q* is the full infinite mixture"),
        CaptureIndex::Cells { max_symbol },
        Arc::new(BStar),
    ))
}

/// The member that defeats entry on all-ones prefixes of length `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BAdversary {
    pub m: u64,
    pub spec: SourceSpec,
    pub epsilon: f64,
    /// `n_eps = 2m`; the support symbol is `2^{2m}`.
    pub level: u64,
    pub all_ones_prob: f64,
    /// `(1/m) D_m(p || q*)` against [`BStar`], exact.
    pub per_symbol_divergence: f64,
    pub delta: f64,
    pub exceeds_delta: bool,
}

/// `(1 - 1/(2m))^m`.
pub fn b_adversary_all_ones_prob(m: u64) -> f64 {
    let eps = 0.5 / m as f64;
    (m as f64 * (-eps).ln_1p()).exp()
}

/// `eps = 1/(2m)`, `j = 1`: the path is all ones with probability about
/// `e^{-1/2}`, yet `q*` pays `log2((s-1)s) ~ 4m` bits whenever the rare
/// symbol shows up.
pub fn b_class_adversary(m: u64, delta: f64) -> Result<BAdversary> {
    if m == 0 {
        return Err(Error::InvalidArgument("adversary needs m >= 1".into()));
    }
    let eps = 0.5 / m as f64;
    let level = 2 * m;
    let (l1e, le) = ((-eps).ln_1p() / std::f64::consts::LN_2, eps.log2());
    let mut acc = CompensatedSum::new();
    let mf = m as f64;
    for c in 0..=m {
        let log2_binom = log2_gamma(mf + 1.0) - log2_gamma(c as f64 + 1.0)
            - log2_gamma((m - c) as f64 + 1.0);
        let lp = (m - c) as f64 * l1e + c as f64 * le;
        let w = (log2_binom + lp).exp2();
        if w == 0.0 {
            continue;
        }
        acc.add(w * (lp - BStar::log2_cell_prob(level, 1, m - c, c)));
    }
    let per_symbol_divergence = acc.value() / mf;
    Ok(BAdversary {
        m,
        spec: SourceSpec::BMember { epsilon: eps, j: 1 },
        epsilon: eps,
        level,
        all_ones_prob: b_adversary_all_ones_prob(m),
        per_symbol_divergence,
        delta,
        exceeds_delta: per_symbol_divergence > delta,
    })
}

/// Single-letter `D(p || q)` for the member `(eps, j)` against an i.i.d. `q`.
pub fn b_member_kl_iid(eps: f64, j: u64, q: &Pmf) -> Result<f64> {
    let s = b_symbol(crate::sources::n_epsilon(eps), j)?;
    let a = 1.0 - eps;
    Ok(a * (a / q.mass(1)).log2() + eps * (eps / q.mass(s)).log2())
}
