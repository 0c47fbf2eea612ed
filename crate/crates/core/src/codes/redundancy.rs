use rayon::prelude::*;

use super::{iid_log2_prob, log2_prob, SequentialMeasure};
use crate::error::{Error, Result};
use crate::numeric::{mean_ci95, CompensatedSum};
use crate::pmf::{Pmf, Symbol};
use crate::sources::SampleStream;

/// Type enumeration is refused beyond this many types.
pub const MAX_EXACT_TYPES: u128 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RedundancyMode {
    Exact,
    MonteCarlo { trials: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedundancyEstimate {
    /// Bits per symbol.
    pub value: f64,
    /// Half-width of the 95% interval (Monte Carlo only).
    pub ci95: Option<f64>,
}

/// `C(n + k - 1, k - 1)`, saturating.
pub fn type_count(n: u64, k: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 1..k as u128 {
        c = c.saturating_mul(n as u128 + i) / i;
    }
    c
}

/// Calls `f(counts, log2 P(type))` for every type of length `n` over the atoms
/// of a finite pmf.
pub fn enumerate_types(p: &Pmf, n: u64, mut f: impl FnMut(&[(Symbol, u64)], f64)) -> Result<()> {
    let atoms = p
        .as_finite()
        .ok_or_else(|| Error::Unsupported("type enumeration needs a finite source".into()))?
        .atoms()
        .to_vec();
    let k = atoms.len();
    let count = type_count(n, k);
    if count > MAX_EXACT_TYPES {
        return Err(Error::Unsupported(format!(
            "{count} types at n = {n} over {k} symbols"
        )));
    }
    let mut log2_fact = Vec::with_capacity(n as usize + 1);
    let mut acc = CompensatedSum::new();
    log2_fact.push(0.0);
    for i in 1..=n {
        acc.add((i as f64).log2());
        log2_fact.push(acc.value());
    }
    let log2_p: Vec<f64> = atoms.iter().map(|a| a.1.log2()).collect();
    let mut counts: Vec<(Symbol, u64)> = atoms.iter().map(|a| (a.0, 0)).collect();

    #[allow(clippy::too_many_arguments)]
    fn rec(
        pos: usize,
        left: u64,
        partial: f64,
        counts: &mut Vec<(Symbol, u64)>,
        log2_p: &[f64],
        log2_fact: &[f64],
        n: u64,
        f: &mut dyn FnMut(&[(Symbol, u64)], f64),
    ) {
        let k = counts.len();
        if pos == k - 1 {
            counts[pos].1 = left;
            let lp = partial - log2_fact[left as usize] + left as f64 * log2_p[pos];
            f(counts, log2_fact[n as usize] + lp);
            return;
        }
        for c in 0..=left {
            counts[pos].1 = c;
            let lp = partial - log2_fact[c as usize] + c as f64 * log2_p[pos];
            rec(pos + 1, left - c, lp, counts, log2_p, log2_fact, n, f);
        }
    }
    rec(0, n, 0.0, &mut counts, &log2_p, &log2_fact, n, &mut f);
    Ok(())
}

/// `(1/n) D_n(p || q)` for an exchangeable `q`, by enumerating types of `p`.
pub fn exact_redundancy_by_types<M: SequentialMeasure + ?Sized>(
    p: &Pmf,
    q: &M,
    n: u64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("redundancy at n = 0".into()));
    }
    let probe: Vec<(Symbol, u64)> = vec![(p.base(), 0)];
    if q.log2_type_prob(&probe).is_none() {
        return Err(Error::Unsupported(format!(
            "exact redundancy of {} needs an exchangeable measure",
            q.name()
        )));
    }
    let mut sum = CompensatedSum::new();
    let mut mass = CompensatedSum::new();
    let mut infinite = false;
    enumerate_types(p, n, |counts, lp| {
        let w = lp.exp2();
        mass.add(w);
        let lq = q.log2_type_prob(counts).unwrap();
        if lq == f64::NEG_INFINITY {
            if w > 0.0 {
                infinite = true;
            }
            return;
        }
        let lpx: f64 = counts
            .iter()
            .filter(|c| c.1 > 0)
            .map(|&(a, c)| c as f64 * p.mass(a).log2())
            .sum();
        sum.add(w * (lpx - lq));
    })?;
    if infinite {
        return Ok(f64::INFINITY);
    }
    Ok((sum.value() / mass.value() / n as f64).max(0.0))
}

/// Per-symbol redundancy of `m` against the i.i.d. source `p` at length `n`.
pub fn redundancy<M: SequentialMeasure + ?Sized>(
    p: &Pmf,
    m: &M,
    n: u64,
    mode: RedundancyMode,
) -> Result<RedundancyEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument("redundancy at n = 0".into()));
    }
    match mode {
        RedundancyMode::Exact => Ok(RedundancyEstimate {
            value: m.exact_redundancy(p, n)?,
            ci95: None,
        }),
        RedundancyMode::MonteCarlo { trials, seed } => {
            if trials == 0 {
                return Err(Error::InvalidArgument("Monte Carlo needs trials >= 1".into()));
            }
            let samples: Vec<f64> = (0..trials as u64)
                .into_par_iter()
                .map(|t| {
                    let xs = SampleStream::new(p, seed, t).take(n as usize);
                    (iid_log2_prob(p, &xs) - log2_prob(m, &xs)) / n as f64
                })
                .collect();
            let (mean, half) = mean_ci95(&samples);
            Ok(RedundancyEstimate {
                value: mean,
                ci95: Some(half),
            })
        }
    }
}
