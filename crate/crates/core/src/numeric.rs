//! Small numeric helpers shared by the divergence and coding code.

use std::f64::consts::LN_2;

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// `log2(2^a + 2^b)` without overflow.
pub fn log2_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + ((lo - hi) * LN_2).exp().ln_1p() / LN_2
}

/// `log2(sum_i 2^{x_i})` with max extraction.
pub fn log2_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: CompensatedSum = xs.iter().map(|x| ((x - max) * LN_2).exp()).collect();
    max + s.value().log2()
}

/// `log2 Γ(x)` for x > 0.
pub fn log2_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x) / LN_2
}

/// Binomial(n, p) masses over `c in lo..lo+len`, restricted to the window that
/// carries all but a negligible fraction of the mass. Built by the ratio
/// recurrence outward from the mode, then normalized.
pub fn binomial_window(n: u64, p: f64) -> (u64, Vec<f64>) {
    if p <= 0.0 {
        return (0, vec![1.0]);
    }
    if p >= 1.0 {
        return (n, vec![1.0]);
    }
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    let half = (14.0 * sd + 30.0).ceil();
    let lo = (mean - half).floor().max(0.0) as u64;
    let hi = ((mean + half).ceil() as u64).min(n);
    let mode = (((n + 1) as f64 * p).floor() as u64).clamp(lo, hi);
    let odds = p / (1.0 - p);
    let mut masses = vec![0.0; (hi - lo + 1) as usize];
    masses[(mode - lo) as usize] = 1.0;
    let mut m = 1.0;
    for c in mode..hi {
        m *= (n - c) as f64 / (c + 1) as f64 * odds;
        masses[(c + 1 - lo) as usize] = m;
    }
    m = 1.0;
    for c in (lo..mode).rev() {
        m *= (c + 1) as f64 / (n - c) as f64 / odds;
        masses[(c - lo) as usize] = m;
    }
    let total = masses.iter().copied().collect::<CompensatedSum>().value();
    for x in &mut masses {
        *x /= total;
    }
    (lo, masses)
}

/// Sample mean and the half-width of a normal-approximation 95% interval.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let (mean, se) = mean_se(xs);
    (mean, 1.96 * se)
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .collect::<CompensatedSum>()
        .value()
        / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Standard error of a Bernoulli frequency estimate.
pub fn frequency_se(hits: usize, trials: usize) -> f64 {
    if trials == 0 {
        return f64::NAN;
    }
    let f = hits as f64 / trials as f64;
    (f * (1.0 - f) / trials as f64).sqrt()
}

/// Float with 17 significant digits, locale-free (`1.2345678901234567e-3`).
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 12345.678] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt17(f64::INFINITY), "inf");
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        for _ in 0..10_000 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-12).abs() < 1e-20);
    }

    #[test]
    fn log2_sum_exp_matches_direct() {
        let xs = [-3.0, -1.0, -2.5];
        let direct: f64 = xs.iter().map(|x: &f64| x.exp2()).sum::<f64>().log2();
        assert!((log2_sum_exp(&xs) - direct).abs() < 1e-12);
        assert!((log2_add(-3.0, -1.0) - (0.125f64 + 0.5).log2()).abs() < 1e-12);
        assert_eq!(log2_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn log2_sum_exp_survives_extreme_exponents() {
        let v = log2_sum_exp(&[-100_000.0, -100_001.0]);
        assert!((v - (-100_000.0 + 1.5f64.log2())).abs() < 1e-9);
    }

    #[test]
    fn binomial_window_sums_to_one() {
        for &(n, p) in &[(10u64, 0.3), (1000, 0.01), (100_000, 0.5), (5, 1.0)] {
            let (_, m) = binomial_window(n, p);
            let s: f64 = m.iter().sum();
            assert!((s - 1.0).abs() < 1e-10, "n={n} p={p} s={s}");
        }
        let (lo, m) = binomial_window(10, 0.3);
        assert_eq!(lo, 0);
        // C(10,3) 0.3^3 0.7^7
        assert!((m[3] - 120.0 * 0.027 * 0.7f64.powi(7)).abs() < 1e-14);
    }
}
