use super::{MeasureState, SequentialMeasure};
use crate::numeric::{log2_gamma, CompensatedSum};
use crate::pmf::{Harmonic, Pmf, Symbol};

/// Two-part code: a sequential pattern assignment plus `-log2 symbol_code(x)`
/// for the first occurrence of every symbol `x`.
///
/// The pattern part is a two-parameter Chinese restaurant assignment with
/// discount 1/2 and concentration 1/2: after `n` symbols with `d` distinct,
/// a new symbol has probability `(1/2 + d/2) / (n + 1/2)` and a seen symbol
/// `a` has `(c_a - 1/2) / (n + 1/2)`.
#[derive(Debug, Clone)]
pub struct PatternCode {
    pub symbol_code: Pmf,
}

const DISCOUNT: f64 = 0.5;
const CONCENTRATION: f64 = 0.5;

impl PatternCode {
    pub fn new(symbol_code: Pmf) -> PatternCode {
        PatternCode { symbol_code }
    }

    pub fn harmonic() -> PatternCode {
        PatternCode::new(Pmf::lazy(Harmonic))
    }

    /// `log2` probability of the pattern alone for the given block sizes.
    pub fn log2_pattern_prob(sizes: &[u64]) -> f64 {
        let n: u64 = sizes.iter().sum();
        let d = sizes.iter().filter(|&&c| c > 0).count();
        if n == 0 {
            return 0.0;
        }
        let mut acc = CompensatedSum::new();
        // prod_{i<d} (theta + i*alpha)
        for i in 1..d {
            acc.add((CONCENTRATION + i as f64 * DISCOUNT).log2());
        }
        for &c in sizes.iter().filter(|&&c| c > 0) {
            acc.add(log2_gamma(c as f64 - DISCOUNT) - log2_gamma(1.0 - DISCOUNT));
        }
        acc.add(log2_gamma(CONCENTRATION + 1.0) - log2_gamma(CONCENTRATION + n as f64));
        acc.value()
    }
}

impl SequentialMeasure for PatternCode {
    fn name(&self) -> String {
        format!("pattern[{}]", self.symbol_code.describe())
    }

    fn conditional(&self, state: &MeasureState, a: Symbol) -> f64 {
        let n = state.n as f64;
        let c = state.count(a);
        if c == 0 {
            let d = state.distinct() as f64;
            let p_new = (CONCENTRATION + DISCOUNT * d) / (n + CONCENTRATION);
            p_new.log2() + self.symbol_code.mass(a).log2()
        } else {
            ((c as f64 - DISCOUNT) / (n + CONCENTRATION)).log2()
        }
    }

    fn log2_type_prob(&self, counts: &[(Symbol, u64)]) -> Option<f64> {
        let sizes: Vec<u64> = counts.iter().map(|c| c.1).collect();
        let dict: f64 = counts
            .iter()
            .filter(|c| c.1 > 0)
            .map(|c| self.symbol_code.mass(c.0).log2())
            .sum();
        Some(Self::log2_pattern_prob(&sizes) + dict)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{codelength, log2_prob};

    #[test]
    fn single_symbol_costs_its_dictionary_entry() {
        let m = PatternCode::harmonic();
        assert!((codelength(&m, &[3]) - 12f64.log2()).abs() < 1e-12);
        let run = codelength(&m, &[4; 100]);
        assert!(run > 20f64.log2());
        // pattern cost of a constant run is O(log n)
        assert!(run - 20f64.log2() < 2.0 * 100f64.log2());
    }

    #[test]
    fn closed_form_matches_sequential() {
        let m = PatternCode::harmonic();
        let xs = [5, 1, 5, 5, 9, 1, 2, 5];
        let counts = [(5, 4), (1, 2), (9, 1), (2, 1)];
        assert!((log2_prob(&m, &xs) - m.log2_type_prob(&counts).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn relabeling_keeps_pattern_cost() {
        let m = PatternCode::harmonic();
        let a = [1, 2, 1, 1, 3];
        let b = [7, 4, 7, 7, 2];
        let dict = |xs: &[u64]| -> f64 {
            let mut seen = vec![];
            let mut t = 0.0;
            for &x in xs {
                if !seen.contains(&x) {
                    seen.push(x);
                    t -= m.symbol_code.mass(x).log2();
                }
            }
            t
        };
        let pa = codelength(&m, &a) - dict(&a);
        let pb = codelength(&m, &b) - dict(&b);
        assert!((pa - pb).abs() < 1e-12);
    }
}
