//! The lemmas as executable formulas, each paired with a falsification check
//! that reports whether any instance violated the inequality.

use std::f64::consts::{E, LN_2, LOG2_E};

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{frequency_se, fmt17, CompensatedSum};
use crate::pmf::{j_divergence, kl, l1, percentile, Pmf, Symbol};
use crate::rng::Substream;
use crate::sources::SampleStream;

/// Slack allowed before an inequality counts as violated.
pub const BOUND_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_name: String,
    pub parameters: String,
    pub bound_value: f64,
    pub observed_value: f64,
    /// Trials or enumeration size.
    pub trials: u64,
    pub violated: bool,
}

impl BoundReport {
    pub const CSV_HEADER: &'static str =
        "bound_name,parameters,bound_value,observed_value,trials,violated";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.bound_name,
            self.parameters.replace(',', ";"),
            fmt17(self.bound_value),
            fmt17(self.observed_value),
            self.trials,
            self.violated
        )
    }
}

/// `delta * log2 m`: no `q` has `sup_i D(p_i || q)` below this.
pub fn sr_lower_bound(sets: &[Vec<Symbol>], dists: &[Pmf], delta: f64) -> Result<f64> {
    if !(delta > 0.5 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} must lie in (1/2, 1]")));
    }
    if sets.len() != dists.len() || sets.is_empty() {
        return Err(Error::InvalidArgument("one set per distribution".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for s in sets {
        for &x in s {
            if !seen.insert(x) {
                return Err(Error::InvalidArgument(format!("sets overlap at {x}")));
            }
        }
    }
    for (i, (s, p)) in sets.iter().zip(dists).enumerate() {
        let mass: f64 = s.iter().map(|&x| p.mass(x)).sum();
        if mass < delta - 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "p_{i}(S_{i}) = {mass} < delta = {delta}"
            )));
        }
    }
    Ok(delta * (sets.len() as f64).log2())
}

/// `max_i D(p_i || q)`.
pub fn sup_divergence(dists: &[Pmf], q: &Pmf) -> f64 {
    dists
        .iter()
        .map(|p| kl(p, q).value())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Calls `f` on every composition of `total` into `parts` positive parts.
pub fn for_each_composition(total: u32, parts: usize, f: &mut dyn FnMut(&[u32])) {
    fn rec(left: u32, pos: usize, buf: &mut Vec<u32>, f: &mut dyn FnMut(&[u32])) {
        let parts = buf.len();
        if pos == parts - 1 {
            buf[pos] = left;
            f(buf);
            return;
        }
        let reserve = (parts - pos - 1) as u32;
        for c in 1..=left.saturating_sub(reserve) {
            buf[pos] = c;
            rec(left - c, pos + 1, buf, f);
        }
    }
    if parts == 0 || (total as usize) < parts {
        return;
    }
    let mut buf = vec![0; parts];
    rec(total, 0, &mut buf, f);
}

/// Calls `f` on every partition of `total` into exactly `parts` positive parts
/// (nonincreasing order).
pub fn for_each_partition(total: u32, parts: usize, f: &mut dyn FnMut(&[u32])) {
    fn rec(left: u32, max: u32, pos: usize, buf: &mut Vec<u32>, f: &mut dyn FnMut(&[u32])) {
        let parts = buf.len();
        if pos == parts - 1 {
            if left <= max && left >= 1 {
                buf[pos] = left;
                f(buf);
            }
            return;
        }
        let reserve = (parts - pos - 1) as u32;
        let hi = max.min(left.saturating_sub(reserve));
        for c in (1..=hi).rev() {
            // remaining parts are at most c each
            if (left - c) > c * reserve {
                break;
            }
            buf[pos] = c;
            rec(left - c, c, pos + 1, buf, f);
        }
    }
    if parts == 0 || (total as usize) < parts {
        return;
    }
    let mut buf = vec![0; parts];
    rec(total, total, 0, &mut buf, f);
}

/// Grid minimax `min_q max_i D(p_i || q)` over `q` with masses in multiples
/// of `1/resolution` on the merged support of `dists`.
pub fn sr_grid_minimax(dists: &[Pmf], resolution: u32) -> Result<(f64, u64)> {
    let mut support: Vec<Symbol> = Vec::new();
    for p in dists {
        let f = p
            .as_finite()
            .ok_or_else(|| Error::Unsupported("grid search needs finite supports".into()))?;
        support.extend(f.atoms().iter().map(|a| a.0));
    }
    support.sort_unstable();
    support.dedup();
    let mut best = f64::INFINITY;
    let mut evaluated = 0u64;
    for_each_composition(resolution, support.len(), &mut |c| {
        evaluated += 1;
        let worst = dists
            .iter()
            .map(|p| {
                let f = p.as_finite().unwrap();
                f.atoms()
                    .iter()
                    .map(|&(x, m)| {
                        let k = support.binary_search(&x).unwrap();
                        m * (m * resolution as f64 / c[k] as f64).log2()
                    })
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        best = best.min(worst);
    });
    Ok((best, evaluated))
}

/// Grid minimax for `m` point masses on distinct symbols. The objective is
/// `-log2 min_i q_i`, symmetric in the coordinates, so partitions suffice.
pub fn sr_grid_minimax_point_masses(m: usize, resolution: u32) -> (f64, u64) {
    let mut best = f64::INFINITY;
    let mut evaluated = 0u64;
    for_each_partition(resolution, m, &mut |c| {
        evaluated += 1;
        let min = *c.iter().min().unwrap() as f64 / resolution as f64;
        best = best.min(-min.log2());
    });
    (best, evaluated)
}

/// `1 - alpha - 2 N^3 sqrt(4 eps ln 2) - 1/N`, a lower bound on `q^N(R_N)`.
pub fn jn_bound(alpha: f64, epsilon: f64, n: u64) -> f64 {
    let nf = n as f64;
    1.0 - alpha - 2.0 * nf.powi(3) * (4.0 * epsilon * LN_2).sqrt() - 1.0 / nf
}

/// Checks in exact rational arithmetic that `eps = 1/(16 ln2 N^8)` turns the
/// middle term of [`jn_bound`] into `1/N`: `(2N^3)^2 * 4 * (eps ln 2) = 1/N^2`.
pub fn jn_identity_exact(n: u64) -> bool {
    let n = n as i128;
    let eps_ln2 = Ratio::new(1, 16 * n.pow(8));
    let squared = Ratio::from_integer(4 * n.pow(6)) * Ratio::from_integer(4) * eps_ln2;
    squared == Ratio::new(1, n * n)
}

/// `(eps0^2 (ln2)^2 / 16, eps0^2 ln2 / 16)`.
pub fn dpq_separation(epsilon0: f64) -> (f64, f64) {
    let e2 = epsilon0 * epsilon0;
    (e2 * LN_2 * LN_2 / 16.0, e2 * LN_2 / 16.0)
}

/// `(2^k - 2) exp(-n delta^2 / 18)`.
pub fn yeung_bound(n: u64, delta: f64, k: u32) -> f64 {
    (2f64.powi(k as i32) - 2.0) * (-(n as f64) * delta * delta / 18.0).exp()
}

/// Empirical distribution of a sample.
pub fn empirical(xs: &[Symbol]) -> Pmf {
    let mut v = xs.to_vec();
    v.sort_unstable();
    let mut counts: Vec<(Symbol, u64)> = Vec::new();
    for x in v {
        match counts.last_mut() {
            Some(c) if c.0 == x => c.1 += 1,
            _ => counts.push((x, 1)),
        }
    }
    Pmf::empirical(&counts).expect("nonempty sample")
}

/// Monte Carlo frequency of `{|tau - p|_1 > delta and 2 F_tau^{-1}(1 - delta/6) <= k}`.
pub fn yeung_check(p: &Pmf, n: u64, delta: f64, k: u32, trials: usize, seed: u64) -> BoundReport {
    let hits: usize = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let xs = SampleStream::new(p, seed, t).take(n as usize);
            let tau = empirical(&xs);
            let far = l1(&tau, p) > delta;
            let short = 2 * percentile(&tau, delta / 6.0) <= k as u64;
            usize::from(far && short)
        })
        .sum();
    let freq = hits as f64 / trials.max(1) as f64;
    let bound = yeung_bound(n, delta, k);
    let se = frequency_se(hits, trials);
    BoundReport {
        bound_name: "yeung".into(),
        parameters: format!("p={} n={n} delta={delta} k={k} seed={seed}", p.describe()),
        bound_value: bound,
        observed_value: freq,
        trials: trials as u64,
        violated: freq > bound + 3.0 * se + BOUND_TOLERANCE,
    }
}

/// `2 log2(e) / e`, the bound on the negative part of `E |log p/q|`.
pub fn neg_part_constant() -> f64 {
    2.0 * LOG2_E / E
}

/// Smallest integer `m` with `(R + 2 log2 e / e) / m < gamma / 2`.
pub fn tightness_level(r: f64, gamma: f64) -> u64 {
    let c = r + neg_part_constant();
    let mut m = (2.0 * c / gamma).floor().max(1.0) as u64;
    while m > 1 && c / ((m - 1) as f64) < gamma / 2.0 {
        m -= 1;
    }
    while c / m as f64 >= gamma / 2.0 {
        m += 1;
    }
    m
}

/// `F_q^{-1}(1 - gamma / 2^{m+1})` with `m` from [`tightness_level`]: every
/// `p` with `D(p || q) <= R` has tail mass at most `gamma` beyond it.
pub fn tightness_from_redundancy(r: f64, gamma: f64, q: &Pmf) -> Result<Symbol> {
    if !(r >= 0.0) || !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("R = {r}, gamma = {gamma}")));
    }
    let m = tightness_level(r, gamma);
    let level = gamma / 2f64.powf(m as f64 + 1.0);
    Ok(percentile(q, level))
}

/// `(p(|log2 p/q| > m), (D(p||q) + 2 log2 e / e) / m)` for finite `p`.
pub fn tightness_inner(p: &Pmf, q: &Pmf, m: f64) -> (f64, f64) {
    let d = kl(p, q).value();
    let lhs = p
        .as_finite()
        .map(|f| {
            f.atoms()
                .iter()
                .filter(|&&(x, pm)| (pm / q.mass(x)).log2().abs() > m)
                .map(|a| a.1)
                .sum()
        })
        .unwrap_or(f64::NAN);
    (lhs, (d + neg_part_constant()) / m)
}

/// `1/e`.
pub fn b_class_deception_bound() -> f64 {
    (-1.0f64).exp()
}

// ---------------------------------------------------------------------------
// Falsification suites

/// Random pmf on `1..=k` with some coordinates zeroed.
pub fn random_pmf(rng: &mut Substream, k: usize, zero_prob: f64) -> Pmf {
    loop {
        let w: Vec<f64> = (0..k)
            .map(|_| {
                if rng.next_f64() < zero_prob {
                    0.0
                } else {
                    -(1.0 - rng.next_f64()).ln()
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            if let Ok(p) = Pmf::from_weights(
                w.iter()
                    .enumerate()
                    .map(|(i, &x)| (i as Symbol + 1, x / total)),
            ) {
                return p;
            }
        }
    }
}

/// Every pmf on `1..=k` with masses in multiples of `1/res` (zeros allowed).
pub fn grid_pmfs(k: usize, res: u32) -> Vec<Pmf> {
    let mut out = Vec::new();
    // compositions of res + k into k positive parts, minus one each
    for_each_composition(res + k as u32, k, &mut |c| {
        let p = Pmf::from_weights(
            c.iter()
                .enumerate()
                .map(|(i, &x)| (i as Symbol + 1, (x - 1) as f64 / res as f64)),
        );
        if let Ok(p) = p {
            out.push(p);
        }
    });
    out
}

#[derive(Debug, Clone, Copy, Default)]
struct Worst {
    slack: f64,
    checked: u64,
}

impl Worst {
    fn new() -> Self {
        Worst {
            slack: f64::NEG_INFINITY,
            checked: 0,
        }
    }
    fn push(&mut self, lhs_minus_rhs: f64) {
        self.slack = self.slack.max(lhs_minus_rhs);
        self.checked += 1;
    }
}

/// Both single-pair inequalities and the chain inequality of the distance
/// lemma over `grid_pairs` grid pairs and `random` random pairs / triples.
pub fn dist_suite(grid_pairs: usize, random: usize, seed: u64) -> Vec<BoundReport> {
    let mut lower = Worst::new();
    let mut upper = Worst::new();
    let mut chain = Worst::new();
    let mut check_pair = |p: &Pmf, q: &Pmf| {
        let d = l1(p, q);
        let j = j_divergence(p, q);
        lower.push(d * d / (4.0 * LN_2) - j);
        upper.push(j - d / LN_2);
    };
    let grid = grid_pmfs(6, 6);
    let g = grid.len();
    let mut chain_check = |p: &Pmf, q: &Pmf, r: &Pmf| {
        let jpr = j_divergence(p, r);
        chain.push(LN_2 / 8.0 * jpr * jpr - (j_divergence(p, q) + j_divergence(q, r)));
    };
    for t in 0..grid_pairs {
        let p = &grid[(t * 7919) % g];
        let q = &grid[(t * 104_729 + 13) % g];
        let r = &grid[(t * 1_299_709 + 101) % g];
        check_pair(p, q);
        chain_check(p, q, r);
    }
    let mut rng = Substream::new(seed, 0);
    for _ in 0..random {
        let k = 1 + (rng.next_u64() % 6) as usize;
        let p = random_pmf(&mut rng, k, 0.2);
        let q = random_pmf(&mut rng, k, 0.2);
        let r = random_pmf(&mut rng, k, 0.2);
        check_pair(&p, &q);
        chain_check(&p, &q, &r);
    }
    let params = format!("grid={grid_pairs} random={random} seed={seed}");
    [
        ("dist_lower", lower),
        ("dist_upper", upper),
        ("dist_chain", chain),
    ]
    .into_iter()
    .map(|(name, w)| BoundReport {
        bound_name: name.into(),
        parameters: params.clone(),
        bound_value: 0.0,
        observed_value: w.slack,
        trials: w.checked,
        violated: w.slack > BOUND_TOLERANCE,
    })
    .collect()
}

/// Exhaustive `p^N(R)` and `q^N(R)` for a set `R` of length-`N` strings given
/// by a membership mask over all `k^N` strings (lexicographic order).
pub fn string_set_probs(p: &Pmf, q: &Pmf, k: usize, n: u32, member: &[bool]) -> (f64, f64) {
    let total = k.pow(n);
    assert_eq!(member.len(), total);
    let mut pp = CompensatedSum::new();
    let mut qq = CompensatedSum::new();
    for (idx, &inside) in member.iter().enumerate() {
        if !inside {
            continue;
        }
        let mut rest = idx;
        let (mut a, mut b) = (1.0, 1.0);
        for _ in 0..n {
            let s = (rest % k) as Symbol + 1;
            rest /= k;
            a *= p.mass(s);
            b *= q.mass(s);
        }
        pp.add(a);
        qq.add(b);
    }
    (pp.value(), qq.value())
}

/// Micro-oracle for the `q^N(R_N)` lemma: random `(p, q, R_N)` on alphabets
/// of size `<= 3` and `N <= 5`, with `eps = J(p, q)` and `alpha = 1 - p^N(R_N)`.
pub fn jn_suite(cases: usize, seed: u64) -> BoundReport {
    let mut rng = Substream::new(seed, 1);
    let mut worst = Worst::new();
    for _ in 0..cases {
        let k = 2 + (rng.next_u64() % 2) as usize;
        let n = 1 + (rng.next_u64() % 5) as u32;
        let p = random_pmf(&mut rng, k, 0.0);
        // q: p nudged toward a random pmf by a log-uniform amount
        let r = random_pmf(&mut rng, k, 0.0);
        let t = 10f64.powf(-1.0 - 9.0 * rng.next_f64());
        let q = p.contaminate(&r, t).expect("valid weight");
        let member: Vec<bool> = (0..k.pow(n)).map(|_| rng.next_f64() < 0.5).collect();
        let (pr, qr) = string_set_probs(&p, &q, k, n, &member);
        let eps = j_divergence(&p, &q);
        let bound = jn_bound(1.0 - pr, eps, n as u64);
        worst.push(bound - qr);
    }
    BoundReport {
        bound_name: "jn".into(),
        parameters: format!("cases={cases} seed={seed}"),
        bound_value: 0.0,
        observed_value: worst.slack,
        trials: worst.checked,
        violated: worst.slack > BOUND_TOLERANCE,
    }
}

/// Random falsification of the separation lemma: `J(p, p0) >= eps0` and
/// `|p0 - q|_1 <= radius` must give `J(p, q) >= separation`.
pub fn dpq_suite(cases: usize, seed: u64) -> BoundReport {
    let mut rng = Substream::new(seed, 2);
    let mut worst = Worst::new();
    for _ in 0..cases {
        let k = 1 + (rng.next_u64() % 5) as usize;
        let p = random_pmf(&mut rng, k, 0.2);
        let p0 = random_pmf(&mut rng, k, 0.2);
        let eps0 = j_divergence(&p, &p0);
        if eps0 <= 0.0 {
            continue;
        }
        let (radius, sep) = dpq_separation(eps0);
        // q = (1-t) p0 + t r has |p0 - q|_1 <= 2t
        let r = random_pmf(&mut rng, k, 0.2);
        let t = (radius / 2.0 * rng.next_f64()).min(1.0);
        let q = p0.contaminate(&r, t).expect("valid weight");
        if l1(&p0, &q) > radius {
            continue;
        }
        worst.push(sep - j_divergence(&p, &q));
    }
    BoundReport {
        bound_name: "dpq".into(),
        parameters: format!("cases={cases} seed={seed}"),
        bound_value: 0.0,
        observed_value: worst.slack,
        trials: worst.checked,
        violated: worst.slack > BOUND_TOLERANCE,
    }
}

/// The Markov step behind bounded-redundancy tightness, over grid pmfs.
pub fn tightness_inner_suite(k: usize, res: u32) -> BoundReport {
    let grid = grid_pmfs(k, res);
    let full: Vec<&Pmf> = grid
        .iter()
        .filter(|q| q.as_finite().unwrap().atoms().len() == k)
        .collect();
    let mut worst = Worst::new();
    for p in &grid {
        for q in &full {
            for m in [0.5, 1.0, 2.0, 4.0] {
                let (lhs, rhs) = tightness_inner(p, q, m);
                worst.push(lhs - rhs);
            }
        }
    }
    BoundReport {
        bound_name: "tightness_inner".into(),
        parameters: format!("k={k} res={res}"),
        bound_value: 0.0,
        observed_value: worst.slack,
        trials: worst.checked,
        violated: worst.slack > BOUND_TOLERANCE,
    }
}

/// Grid minimax against the distinguishability bound for point masses.
pub fn sr_suite(ms: &[usize], resolution: u32) -> Vec<BoundReport> {
    ms.iter()
        .map(|&m| {
            let (best, evaluated) = sr_grid_minimax_point_masses(m, resolution);
            let bound = (m as f64).log2();
            BoundReport {
                bound_name: "sr".into(),
                parameters: format!("m={m} delta=1 resolution={resolution}"),
                bound_value: bound,
                observed_value: best,
                trials: evaluated,
                violated: best < bound - BOUND_TOLERANCE,
            }
        })
        .collect()
}

/// The whole suite at default sizes.
pub fn run_suite(seed: u64) -> Vec<BoundReport> {
    let mut out = dist_suite(1000, 10_000, seed);
    out.push(jn_suite(100, seed));
    out.push(yeung_check(&Pmf::uniform(1, 4).unwrap(), 500, 0.2, 6, 10_000, seed));
    out.extend(sr_suite(&[2, 4, 8], 64));
    out.push(dpq_suite(10_000, seed));
    out.push(tightness_inner_suite(3, 12));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmf::Harmonic;

    #[test]
    fn sr_examples() {
        let sets: Vec<Vec<Symbol>> = (1..=8).map(|i| vec![i]).collect();
        let dists: Vec<Pmf> = (1..=8).map(Pmf::point).collect();
        assert!((sr_lower_bound(&sets, &dists, 1.0).unwrap() - 3.0).abs() < 1e-15);
        assert!(sr_lower_bound(&sets, &dists, 0.5).is_err());
        let overlapping = vec![vec![1, 2], vec![2]];
        assert!(sr_lower_bound(&overlapping, &dists[..2], 1.0).is_err());
        let q = Pmf::uniform(1, 2).unwrap();
        assert!((sup_divergence(&dists[..2], &q) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn partitions_and_compositions() {
        let mut n = 0;
        for_each_composition(5, 2, &mut |_| n += 1);
        assert_eq!(n, 4);
        let mut parts = Vec::new();
        for_each_partition(6, 3, &mut |c| parts.push(c.to_vec()));
        assert_eq!(parts, vec![vec![4, 1, 1], vec![3, 2, 1], vec![2, 2, 2]]);
    }

    #[test]
    fn jn_examples() {
        for n in 1..=5u64 {
            let eps = 1.0 / (16.0 * LN_2 * (n as f64).powi(8));
            assert!((jn_bound(0.1, eps, n) - (1.0 - 0.1 - 2.0 / n as f64)).abs() < 1e-12);
            assert!(jn_identity_exact(n));
            assert!((jn_bound(0.1, 0.0, n) - (0.9 - 1.0 / n as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn dpq_examples() {
        let (a, b) = dpq_separation(1.0);
        assert!((a - 0.03002).abs() < 1e-5);
        assert!((b - 0.04332).abs() < 1e-5);
        let (a, b) = dpq_separation(1e-9);
        assert!(a < 1e-18 && b < 1e-18);
    }

    #[test]
    fn yeung_examples() {
        assert!((yeung_bound(100, 0.3, 4) - 14.0 * (-0.5f64).exp()).abs() < 1e-12);
        assert!((yeung_bound(100, 0.3, 4) - 8.4913).abs() < 5e-4);
        let v = yeung_bound(10_000, 0.3, 4);
        assert!((v / (14.0 * (-50.0f64).exp()) - 1.0).abs() < 1e-12);
        assert!(v < 3e-21 && v > 2.5e-21);
    }

    #[test]
    fn tightness_examples() {
        assert!((neg_part_constant() - 1.0615).abs() < 1e-4);
        assert_eq!(tightness_level(1.0, 0.5), 9);
        let q = Pmf::lazy(Harmonic);
        let b = tightness_from_redundancy(1.0, 0.5, &q).unwrap();
        assert_eq!(b, percentile(&q, 0.5 / 1024.0));
        assert_eq!(b, 2047);
        let zero = tightness_from_redundancy(0.0, 0.3, &q).unwrap();
        assert!(zero >= percentile(&q, 0.3));
    }

    #[test]
    fn deception_constant() {
        assert!((b_class_deception_bound() - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn small_suites_hold() {
        for r in dist_suite(200, 500, 3) {
            assert!(!r.violated, "{r:?}");
        }
        assert!(!jn_suite(30, 3).violated);
        assert!(!dpq_suite(500, 3).violated);
        assert!(!tightness_inner_suite(3, 6).violated);
        assert!(sr_suite(&[2, 4], 16).iter().all(|r| !r.violated));
    }

    #[test]
    fn csv_row_shape() {
        let r = &sr_suite(&[2], 8)[0];
        assert_eq!(r.csv_row().split(',').count(), 6);
        assert!(BoundReport::CSV_HEADER.starts_with("bound_name"));
    }
}
