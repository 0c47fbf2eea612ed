use std::collections::HashMap;

use super::{MeasureState, SequentialMeasure};
use crate::error::{Error, Result};
use crate::numeric::{binomial_window, log2_gamma, CompensatedSum};
use crate::pmf::{entropy, Pmf, Symbol};

/// `(k - 1) log2(n + 1) / (2n) + 2/n`.
pub fn kt_rbound(k: usize, n: u64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    let nf = n as f64;
    (k as f64 - 1.0) * (nf + 1.0).log2() / (2.0 * nf) + 2.0 / nf
}

/// Add-half estimator over a fixed finite support.
#[derive(Debug, Clone)]
pub struct KtCode {
    support: Vec<Symbol>,
    index: HashMap<Symbol, usize>,
}

impl KtCode {
    pub fn new(mut support: Vec<Symbol>) -> Result<KtCode> {
        support.sort_unstable();
        support.dedup();
        if support.is_empty() || support[0] == 0 {
            return Err(Error::InvalidArgument("known-support code needs symbols >= 1".into()));
        }
        let index = support.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Ok(KtCode { support, index })
    }

    pub fn range(lo: Symbol, hi: Symbol) -> Result<KtCode> {
        if lo == 0 || lo > hi || hi - lo > 1 << 24 {
            return Err(Error::InvalidArgument(format!("support {lo}..={hi}")));
        }
        KtCode::new((lo..=hi).collect())
    }

    pub fn support(&self) -> &[Symbol] {
        &self.support
    }

    pub fn contains(&self, a: Symbol) -> bool {
        self.index.contains_key(&a)
    }

    fn k(&self) -> f64 {
        self.support.len() as f64
    }

    /// `log2` of the add-half probability of a string with these counts;
    /// counts on symbols outside the support give `-inf`.
    pub fn log2_counts_prob(&self, counts: &[(Symbol, u64)]) -> f64 {
        let k = self.k();
        let mut n = 0u64;
        let mut acc = CompensatedSum::new();
        for &(a, c) in counts {
            if c == 0 {
                continue;
            }
            if !self.contains(a) {
                return f64::NEG_INFINITY;
            }
            n += c;
            acc.add(log2_gamma(c as f64 + 0.5) - log2_gamma(0.5));
        }
        acc.add(log2_gamma(k / 2.0) - log2_gamma(n as f64 + k / 2.0));
        acc.value()
    }
}

impl SequentialMeasure for KtCode {
    fn name(&self) -> String {
        if self.support.len() > 6 {
            format!(
                "kt[{} symbols in {}..={}]",
                self.support.len(),
                self.support[0],
                self.support.last().unwrap()
            )
        } else {
            format!("kt{:?}", self.support)
        }
    }

    fn conditional(&self, state: &MeasureState, a: Symbol) -> f64 {
        if !self.contains(a) {
            return f64::NEG_INFINITY;
        }
        ((state.count(a) as f64 + 0.5) / (state.n as f64 + self.k() / 2.0)).log2()
    }

    fn rbound(&self, n: u64) -> Option<f64> {
        Some(kt_rbound(self.support.len(), n))
    }

    fn log2_type_prob(&self, counts: &[(Symbol, u64)]) -> Option<f64> {
        Some(self.log2_counts_prob(counts))
    }

    /// `(1/n)(E[-log2 q(X^n)] - n H(p))`, using that each count is binomial.
    fn exact_redundancy(&self, p: &Pmf, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidArgument("redundancy at n = 0".into()));
        }
        let f = match p.as_finite() {
            Some(f) => f,
            None => return Ok(f64::INFINITY),
        };
        if f.atoms().iter().any(|a| !self.contains(a.0)) {
            return Ok(f64::INFINITY);
        }
        let k = self.k();
        let nf = n as f64;
        let mut cost = CompensatedSum::new();
        cost.add(log2_gamma(nf + k / 2.0) - log2_gamma(k / 2.0));
        for &(_, pa) in f.atoms() {
            let (lo, masses) = binomial_window(n, pa);
            let mut e = CompensatedSum::new();
            for (i, m) in masses.iter().enumerate() {
                let c = (lo + i as u64) as f64;
                e.add(m * (log2_gamma(c + 0.5) - log2_gamma(0.5)));
            }
            cost.add(-e.value());
        }
        // symbols of the support that p never emits have count 0 and cost nothing
        let h = entropy(p).value();
        Ok(((cost.value() - nf * h) / nf).max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{codelength, log2_prob};

    #[test]
    fn singleton_support_is_free() {
        let m = KtCode::new(vec![5]).unwrap();
        assert_eq!(codelength(&m, &[5; 10]), 0.0);
    }

    #[test]
    fn first_symbol_is_half() {
        let m = KtCode::new(vec![1, 2]).unwrap();
        assert!((log2_prob(&m, &[2]) + 1.0).abs() < 1e-15);
        assert_eq!(log2_prob(&m, &[3]), f64::NEG_INFINITY);
    }

    #[test]
    fn type_prob_matches_sequential() {
        let m = KtCode::new(vec![1, 2, 7]).unwrap();
        let xs = [1, 7, 7, 2, 1, 1, 7];
        let counts = [(1, 3), (2, 1), (7, 3)];
        assert!((log2_prob(&m, &xs) - m.log2_counts_prob(&counts)).abs() < 1e-10);
    }

    #[test]
    fn exact_redundancy_below_rbound() {
        let m = KtCode::new(vec![1, 2]).unwrap();
        let p = Pmf::uniform(1, 2).unwrap();
        let n = 1 << 12;
        let r = m.exact_redundancy(&p, n).unwrap();
        let b = kt_rbound(2, n);
        assert!(r <= b, "{r} > {b}");
        assert!((b - (0.5 * 4097f64.log2() / 4096.0 + 2.0 / 4096.0)).abs() < 1e-15);
        // asymptotically (k-1)/2 log2 n / n
        assert!(r > 0.4 * (n as f64).log2() / n as f64);
        assert_eq!(m.exact_redundancy(&Pmf::point(3), 10).unwrap(), f64::INFINITY);
    }

    #[test]
    fn exact_redundancy_matches_enumeration() {
        let m = KtCode::new(vec![1, 2, 3]).unwrap();
        let p = Pmf::from_atoms(vec![(1, 0.5), (3, 0.5)]).unwrap();
        let n = 6;
        // brute force over all 2^6 strings on {1,3}
        let mut acc = 0.0;
        for mask in 0u32..64 {
            let xs: Vec<Symbol> = (0..6).map(|i| if mask >> i & 1 == 1 { 3 } else { 1 }).collect();
            acc += (1.0 / 64.0) * (-6.0 - log2_prob(&m, &xs));
        }
        let exact = m.exact_redundancy(&p, n).unwrap();
        assert!((exact - acc / 6.0).abs() < 1e-10);
    }
}
