//! Source classes over the naturals: constructors, membership checks and
//! replayable i.i.d. samplers.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::pmf::{
    DyadicSplit, ExtReal, Geometric, Harmonic, LazyRule, Pmf, Sampler, Symbol, Zipf2,
    DIVERGENCE_CAP_BITS, TAIL_TOLERANCE,
};
use crate::rng::Substream;

/// Largest dyadic block index whose symbols fit in a `Symbol`.
pub const MAX_BLOCK: u32 = 63;
const MONOTONE_CHECK_PREFIX: u64 = 10_000;

/// `{2^i, ..., 2^{i+1} - 1}` as an inclusive range.
pub fn t_block(i: u32) -> Result<std::ops::RangeInclusive<Symbol>> {
    if i > MAX_BLOCK {
        return Err(Error::InvalidArgument(format!("block {i} is not representable")));
    }
    let lo = 1u64 << i;
    let hi = if i == MAX_BLOCK { Symbol::MAX } else { (1u64 << (i + 1)) - 1 };
    Ok(lo..=hi)
}

/// Index of the dyadic block containing `x`.
pub fn block_index(x: Symbol) -> u32 {
    63 - x.max(1).leading_zeros()
}

/// A named pmf that can live in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PmfSpec {
    Atoms { atoms: Vec<(Symbol, f64)> },
    Geometric { ratio: f64 },
    /// `1/(i(i+1))`.
    Harmonic,
    /// `1/(i(i+1))` on `1..=n`, renormalized.
    HarmonicTruncated { n: Symbol },
    Zipf2,
    DyadicSplit,
}

impl PmfSpec {
    pub fn build(&self) -> Result<Pmf> {
        match self {
            PmfSpec::Atoms { atoms } => Pmf::from_atoms(atoms.clone()),
            PmfSpec::Geometric { ratio } => {
                if !(0.0..1.0).contains(ratio) {
                    return Err(Error::InvalidPmf(format!("geometric ratio {ratio}")));
                }
                if *ratio == 0.0 {
                    return Ok(Pmf::point(1));
                }
                Ok(Pmf::lazy(Geometric { ratio: *ratio }))
            }
            PmfSpec::Harmonic => Ok(Pmf::lazy(Harmonic)),
            PmfSpec::HarmonicTruncated { n } => {
                if *n == 0 || *n > 10_000_000 {
                    return Err(Error::InvalidPmf(format!("harmonic truncation {n}")));
                }
                let total = 1.0 - 1.0 / (*n as f64 + 1.0);
                Pmf::from_atoms(
                    (1..=*n)
                        .map(|i| {
                            let f = i as f64;
                            (i, 1.0 / (f * (f + 1.0)) / total)
                        })
                        .collect(),
                )
            }
            PmfSpec::Zipf2 => Ok(Pmf::lazy(Zipf2)),
            PmfSpec::DyadicSplit => Ok(Pmf::lazy(DyadicSplit)),
        }
    }
}

/// Canonical representatives for members of the uncountable class `I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// `2^i`
    Leftmost,
    /// `2^{i+1} - 1`; the lightest element of `T_i` under any decreasing code.
    Rightmost,
    /// `2^i + floor(2^i / 3)`
    Third,
}

impl Selector {
    pub fn pick(self, i: u32) -> Symbol {
        let lo = 1u64 << i;
        match self {
            Selector::Leftmost => lo,
            Selector::Rightmost => lo + (lo - 1),
            Selector::Third => lo + lo / 3,
        }
    }

    /// `log2` of the picked symbol, valid for any block index.
    pub fn log2_pick(self, i: u64) -> f64 {
        let i = i as f64;
        match self {
            Selector::Leftmost => i,
            Selector::Rightmost => i + 1.0 + (-(2f64).powf(-(i + 1.0))).ln_1p() / std::f64::consts::LN_2,
            Selector::Third => i + (4.0f64 / 3.0).log2(),
        }
    }
}

/// A member of `I`: mass `1/(i(i+1))` on `selector(i)` for `1 <= i < 63`; the
/// mass of every deeper block (`1/63` in total) is carried by block 63.
#[derive(Debug, Clone, Copy)]
pub struct IRule {
    pub selector: Selector,
}

impl IRule {
    fn block_mass(i: u32) -> f64 {
        if i == 0 {
            0.0
        } else if i >= MAX_BLOCK {
            1.0 / MAX_BLOCK as f64
        } else {
            let f = i as f64;
            1.0 / (f * (f + 1.0))
        }
    }

    /// Exact tail beyond `k` as a rational, by summing the masses of the
    /// blocks whose picked symbol lies below `k`.
    pub fn tail_exact(&self, k: Symbol) -> Ratio<i128> {
        let mut below = Ratio::from_integer(0i128);
        for i in 1..MAX_BLOCK {
            if self.selector.pick(i) < k {
                let d = i as i128 * (i as i128 + 1);
                below += Ratio::new(1, d);
            }
        }
        if self.selector.pick(MAX_BLOCK) < k {
            below += Ratio::new(1, MAX_BLOCK as i128);
        }
        Ratio::from_integer(1) - below
    }
}

impl LazyRule for IRule {
    fn describe(&self) -> String {
        format!("I-member({:?})", self.selector)
    }
    fn mass(&self, x: Symbol) -> f64 {
        let i = block_index(x);
        if i >= 1 && self.selector.pick(i) == x {
            Self::block_mass(i)
        } else {
            0.0
        }
    }
    fn next_atom(&self, from: Symbol) -> Option<Symbol> {
        let start = block_index(from).max(1);
        (start..=MAX_BLOCK)
            .map(|i| self.selector.pick(i))
            .find(|&x| x >= from)
    }
    fn tail(&self, k: Symbol) -> f64 {
        match self.next_atom(k) {
            None => 0.0,
            Some(x) => {
                let i = block_index(x);
                if i >= MAX_BLOCK {
                    1.0 / MAX_BLOCK as f64
                } else {
                    1.0 / i as f64
                }
            }
        }
    }
    fn quantile(&self, u: f64) -> Option<Symbol> {
        let mut acc = 0.0;
        for i in 1..=MAX_BLOCK {
            acc += Self::block_mass(i);
            if acc > u {
                return Some(self.selector.pick(i));
            }
        }
        Some(self.selector.pick(MAX_BLOCK))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum SourceSpec {
    Uniform {
        m: Symbol,
        #[serde(rename = "M")]
        max: Symbol,
    },
    BMember {
        epsilon: f64,
        j: u64,
    },
    BZero,
    IMember {
        selector: Selector,
    },
    MonotonePmf {
        pmf: PmfSpec,
    },
    MhMember {
        pmf: PmfSpec,
        h: f64,
    },
    FhMember {
        m: Symbol,
        #[serde(rename = "M")]
        max: Symbol,
        pmf: PmfSpec,
        h: f64,
        epsilon: f64,
    },
    Contaminated {
        base: Box<SourceSpec>,
        contaminant: Box<SourceSpec>,
        epsilon: f64,
    },
}

/// `floor(1/eps)`, reading `1/eps` within a few ulps of an integer as that
/// integer so that `eps = 1/(2m)` lands in level `2m`.
pub fn n_epsilon(eps: f64) -> u64 {
    let f = 1.0 / eps;
    let r = f.round();
    if (f - r).abs() <= 4.0 * f64::EPSILON * r {
        r as u64
    } else {
        f.floor() as u64
    }
}

/// Support symbol of the `B` member with cell `(n, j)`, i.e. `2^n + j - 1`.
pub fn b_symbol(n: u64, j: u64) -> Result<Symbol> {
    if n >= 63 {
        return Err(Error::InvalidSource(format!(
            "B member symbol 2^{n}+{j}-1 is not representable"
        )));
    }
    Ok((1u64 << n) + j - 1)
}

fn check_unit_open(name: &str, eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidSource(format!("{name} = {eps} outside (0,1)")))
    }
}

/// Checks `p(y+1) <= p(y)` for every `y` (for lazy pmfs, on a long prefix).
pub fn is_monotone(p: &Pmf) -> bool {
    match p.as_finite() {
        Some(f) => {
            let atoms = f.atoms();
            atoms[0].0 == 1
                && atoms
                    .windows(2)
                    .all(|w| w[1].0 == w[0].0 + 1 && w[1].1 <= w[0].1 * (1.0 + 1e-12))
        }
        None => {
            let mut prev = p.mass(1);
            if prev <= 0.0 {
                return false;
            }
            for y in 2..=MONOTONE_CHECK_PREFIX {
                let m = p.mass(y);
                if m > prev * (1.0 + 1e-12) {
                    return false;
                }
                prev = m;
            }
            true
        }
    }
}

/// `E_p[(log2 1/p(X))^2]`.
pub fn self_info_moment2(p: &Pmf) -> ExtReal {
    let mut sum = CompensatedSum::new();
    p.walk(TAIL_TOLERANCE, |_, m| {
        let l = m.log2();
        sum.add(m * l * l);
    });
    let v = sum.value();
    if v > DIVERGENCE_CAP_BITS * DIVERGENCE_CAP_BITS {
        ExtReal::Infinite
    } else {
        ExtReal::Finite(v.max(0.0))
    }
}

fn mh_pmf(pmf: &PmfSpec, h: f64) -> Result<Pmf> {
    if !(h > 0.0) {
        return Err(Error::InvalidSource(format!("h = {h} must be positive")));
    }
    let p = pmf.build()?;
    if !is_monotone(&p) {
        return Err(Error::InvalidSource("M_h member is not monotone".into()));
    }
    let m2 = self_info_moment2(&p);
    if m2.value() > h + 1e-12 {
        return Err(Error::InvalidSource(format!(
            "second self-information moment {m2} exceeds h = {h}"
        )));
    }
    Ok(p)
}

impl SourceSpec {
    pub fn uniform(m: Symbol, max: Symbol) -> SourceSpec {
        SourceSpec::Uniform { m, max }
    }

    /// Checks parameter constraints without building the pmf.
    pub fn validate(&self) -> Result<()> {
        self.make_pmf().map(|_| ())
    }

    pub fn make_pmf(&self) -> Result<Pmf> {
        match self {
            SourceSpec::Uniform { m, max } => {
                if *m == 0 || m > max {
                    return Err(Error::InvalidSource(format!("uniform({m},{max})")));
                }
                Pmf::uniform(*m, *max)
            }
            SourceSpec::BMember { epsilon, j } => {
                check_unit_open("epsilon", *epsilon)?;
                let n = n_epsilon(*epsilon);
                if n >= 63 {
                    return Err(Error::InvalidSource(format!(
                        "epsilon = {epsilon} puts mass on 2^{n}, beyond the symbol range"
                    )));
                }
                if *j < 1 || *j > 1u64 << n {
                    return Err(Error::InvalidSource(format!("j = {j} outside [1, 2^{n}]")));
                }
                let s = b_symbol(n, *j)?;
                if s == 1 {
                    return Err(Error::InvalidSource("B member collapses onto 1".into()));
                }
                Pmf::from_atoms(vec![(1, 1.0 - epsilon), (s, *epsilon)])
            }
            SourceSpec::BZero => Ok(Pmf::point(1)),
            SourceSpec::IMember { selector } => Ok(Pmf::lazy(IRule {
                selector: *selector,
            })),
            SourceSpec::MonotonePmf { pmf } => {
                let p = pmf.build()?;
                if !is_monotone(&p) {
                    return Err(Error::InvalidSource("pmf is not monotone".into()));
                }
                Ok(p)
            }
            SourceSpec::MhMember { pmf, h } => mh_pmf(pmf, *h),
            SourceSpec::FhMember {
                m,
                max,
                pmf,
                h,
                epsilon,
            } => {
                check_unit_open("epsilon", *epsilon)?;
                let p1 = SourceSpec::uniform(*m, *max).make_pmf()?;
                let p2 = mh_pmf(pmf, *h)?;
                p1.contaminate(&p2.shift(*max + 1), *epsilon)
            }
            SourceSpec::Contaminated {
                base,
                contaminant,
                epsilon,
            } => {
                check_unit_open("epsilon", *epsilon)?;
                base.make_pmf()?.contaminate(&contaminant.make_pmf()?, *epsilon)
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("source spec serializes")
    }

    pub fn from_json(s: &str) -> Result<SourceSpec> {
        serde_json::from_str(s).map_err(|e| Error::InvalidSource(e.to_string()))
    }
}

pub fn span(p: &Pmf) -> Result<Symbol> {
    p.span()
}

pub fn base(p: &Pmf) -> Symbol {
    p.base()
}

pub fn shift(p: &Pmf, r: Symbol) -> Pmf {
    p.shift(r)
}

/// A replayable i.i.d. stream: draw `k` of trial `t` depends only on
/// `(seed, t, k)`.
#[derive(Debug, Clone)]
pub struct SampleStream {
    sampler: Sampler,
    rng: Substream,
}

impl SampleStream {
    pub fn new(p: &Pmf, seed: u64, trial: u64) -> SampleStream {
        SampleStream {
            sampler: p.sampler(),
            rng: Substream::new(seed, trial),
        }
    }

    pub fn from_spec(spec: &SourceSpec, seed: u64, trial: u64) -> Result<SampleStream> {
        Ok(Self::new(&spec.make_pmf()?, seed, trial))
    }

    pub fn position(&self) -> u64 {
        self.rng.position()
    }

    pub fn seek(&mut self, position: u64) {
        self.rng.seek(position);
    }

    pub fn next_symbol(&mut self) -> Symbol {
        let u = self.rng.next_f64();
        self.sampler.draw(u)
    }

    pub fn take(&mut self, n: usize) -> Vec<Symbol> {
        (0..n).map(|_| self.next_symbol()).collect()
    }
}

/// `n` draws from trial 0 of `(spec, seed)`.
pub fn sample(spec: &SourceSpec, seed: u64, n: usize) -> Result<Vec<Symbol>> {
    Ok(SampleStream::from_spec(spec, seed, 0)?.take(n))
}

/// The three `M_1` members used throughout the tests and demos.
pub fn mh_catalog() -> Vec<(String, SourceSpec)> {
    vec![
        (
            "two_point".into(),
            SourceSpec::MhMember {
                pmf: PmfSpec::Atoms {
                    atoms: vec![(1, 0.95), (2, 0.05)],
                },
                h: 1.0,
            },
        ),
        (
            "three_point".into(),
            SourceSpec::MhMember {
                pmf: PmfSpec::Atoms {
                    atoms: vec![(1, 0.98), (2, 0.015), (3, 0.005)],
                },
                h: 1.0,
            },
        ),
        (
            "geometric".into(),
            SourceSpec::MhMember {
                pmf: PmfSpec::Geometric { ratio: 0.02 },
                h: 1.0,
            },
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmf::l1;

    #[test]
    fn blocks() {
        assert_eq!(t_block(0).unwrap(), 1..=1);
        let b3 = t_block(3).unwrap();
        assert_eq!(b3.clone().count(), 8);
        assert_eq!(b3, 8..=15);
        let mut covered: Vec<Symbol> = (0..=4).flat_map(|i| t_block(i).unwrap()).collect();
        covered.sort();
        assert_eq!(covered, (1..=31).collect::<Vec<_>>());
        assert!(t_block(64).is_err());
        assert_eq!(block_index(15), 3);
        assert_eq!(block_index(16), 4);
    }

    #[test]
    fn b_member_example() {
        let p = SourceSpec::BMember { epsilon: 0.3, j: 1 }.make_pmf().unwrap();
        assert_eq!(p.as_finite().unwrap().atoms(), &[(1, 0.7), (8, 0.3)]);
        assert!(SourceSpec::BMember { epsilon: 0.3, j: 9 }.make_pmf().is_err());
        assert!(SourceSpec::BMember { epsilon: 0.3, j: 8 }.make_pmf().is_ok());
    }

    #[test]
    fn i_member_example() {
        let p = SourceSpec::IMember {
            selector: Selector::Leftmost,
        }
        .make_pmf()
        .unwrap();
        assert!((p.mass(2) - 0.5).abs() < 1e-16);
        assert!((p.mass(4) - 1.0 / 6.0).abs() < 1e-16);
        assert!((p.mass(8) - 1.0 / 12.0).abs() < 1e-16);
        assert_eq!(p.mass(3), 0.0);
        let total: f64 = (1..=MAX_BLOCK).map(|i| p.mass(1u64 << i)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_span_base_shift() {
        let p = SourceSpec::uniform(2, 3).make_pmf().unwrap();
        assert_eq!(p.as_finite().unwrap().atoms(), &[(2, 0.5), (3, 0.5)]);
        let u = Pmf::uniform(2, 5).unwrap();
        assert_eq!(span(&u).unwrap(), 5);
        assert_eq!(base(&u), 2);
        assert_eq!(shift(&Pmf::point(1), 4), Pmf::point(5));
        assert!(span(&Pmf::lazy(Harmonic)).is_err());
    }

    #[test]
    fn fh_member_base_and_disjointness() {
        let spec = SourceSpec::FhMember {
            m: 3,
            max: 4,
            pmf: PmfSpec::Atoms {
                atoms: vec![(1, 0.95), (2, 0.05)],
            },
            h: 1.0,
            epsilon: 0.2,
        };
        let p = spec.make_pmf().unwrap();
        assert_eq!(base(&p), 3);
        assert_eq!(p.mass(5), 0.0);
        assert!((p.mass(6) - 0.2 * 0.95).abs() < 1e-15);
        assert!((p.mass(3) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn moment_examples() {
        assert_eq!(self_info_moment2(&Pmf::point(4)), ExtReal::Finite(0.0));
        assert!((self_info_moment2(&Pmf::uniform(1, 4).unwrap()).value() - 4.0).abs() < 1e-12);
        let n = 50;
        let p = PmfSpec::HarmonicTruncated { n }.build().unwrap();
        let total = 1.0 - 1.0 / (n as f64 + 1.0);
        let direct: f64 = (1..=n)
            .map(|i| {
                let m = 1.0 / ((i * (i + 1)) as f64) / total;
                m * m.log2().powi(2)
            })
            .sum();
        assert!((self_info_moment2(&p).value() - direct).abs() < 1e-10);
    }

    #[test]
    fn catalog_members_are_valid() {
        for (name, spec) in mh_catalog() {
            let p = spec.make_pmf().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(self_info_moment2(&p).value() <= 1.0);
        }
        let bad = SourceSpec::MhMember {
            pmf: PmfSpec::Atoms {
                atoms: vec![(1, 0.5), (2, 0.5)],
            },
            h: 0.5,
        };
        assert!(bad.make_pmf().is_err());
        let non_monotone = SourceSpec::MonotonePmf {
            pmf: PmfSpec::Atoms {
                atoms: vec![(1, 0.2), (2, 0.8)],
            },
        };
        assert!(non_monotone.make_pmf().is_err());
    }

    #[test]
    fn json_round_trip() {
        let spec = SourceSpec::Contaminated {
            base: Box::new(SourceSpec::uniform(1, 4)),
            contaminant: Box::new(SourceSpec::IMember {
                selector: Selector::Third,
            }),
            epsilon: 0.1,
        };
        let s = spec.to_json();
        assert!(s.contains("\"variant\":\"Contaminated\""));
        assert_eq!(SourceSpec::from_json(&s).unwrap(), spec);
        let u = SourceSpec::from_json(r#"{"variant":"Uniform","m":3,"M":10}"#).unwrap();
        assert_eq!(u, SourceSpec::uniform(3, 10));
    }

    #[test]
    fn sampling() {
        let point = SourceSpec::uniform(3, 3);
        assert_eq!(sample(&point, 1, 5).unwrap(), vec![3; 5]);
        assert!(sample(&point, 1, 0).unwrap().is_empty());
        let spec = SourceSpec::uniform(1, 4);
        let xs = sample(&spec, 9, 100_000).unwrap();
        let mut counts = [0u64; 5];
        for x in &xs {
            counts[*x as usize] += 1;
        }
        for c in &counts[1..] {
            assert!((*c as f64 / 1e5 - 0.25).abs() < 0.01);
        }
        assert_eq!(xs, sample(&spec, 9, 100_000).unwrap());
        let emp = Pmf::empirical(&(1..=4).map(|x| (x, counts[x as usize])).collect::<Vec<_>>()).unwrap();
        assert!(l1(&emp, &spec.make_pmf().unwrap()) < 0.02);
    }

    #[test]
    fn i_member_sampling_hits_selected_symbols() {
        let spec = SourceSpec::IMember {
            selector: Selector::Rightmost,
        };
        let xs = sample(&spec, 3, 2000).unwrap();
        assert!(xs.iter().all(|&x| {
            let i = block_index(x);
            i >= 1 && Selector::Rightmost.pick(i) == x
        }));
        let ones = xs.iter().filter(|&&x| x == 3).count() as f64 / 2000.0;
        assert!((ones - 0.5).abs() < 0.05);
    }
}
