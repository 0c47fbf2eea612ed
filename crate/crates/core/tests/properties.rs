use std::f64::consts::LN_2;
use std::sync::Arc;

use dwc_core::codes::{
    exact_redundancy_by_types, iid_measure, log2_prob, KtCode, MixtureMeasure, PatternCode,
    SequentialMeasure,
};
use dwc_core::dwc::{Centroid, Coverage, IndicatorState, PhiScheme, Quantization};
use dwc_core::insure::i_class_bound;
use dwc_core::pmf::{j_divergence, kl, l1, percentile, tail_mass, Pmf, Symbol};
use dwc_core::sources::{IRule, PmfSpec, SampleStream, Selector, SourceSpec};
use num_rational::Ratio;
use proptest::prelude::*;

fn pmf_strategy(max_k: usize) -> impl Strategy<Value = Pmf> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.001f64..1.0], 1..=max_k).prop_filter_map(
        "all-zero weights",
        |w| {
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return None;
            }
            Pmf::from_weights(w.iter().enumerate().map(|(i, &m)| (i as Symbol + 1, m / total))).ok()
        },
    )
}

proptest! {
    #[test]
    fn dist_lemma_pair(p in pmf_strategy(6), q in pmf_strategy(6)) {
        let d = l1(&p, &q);
        let j = j_divergence(&p, &q);
        prop_assert!(d * d / (4.0 * LN_2) <= j + 1e-9);
        prop_assert!(j <= d / LN_2 + 1e-9);
    }

    #[test]
    fn dist_lemma_chain(p in pmf_strategy(6), q in pmf_strategy(6), r in pmf_strategy(6)) {
        let jpr = j_divergence(&p, &r);
        prop_assert!(j_divergence(&p, &q) + j_divergence(&q, &r) >= LN_2 / 8.0 * jpr * jpr - 1e-9);
    }

    #[test]
    fn kl_nonnegative_and_j_symmetric(p in pmf_strategy(5), q in pmf_strategy(5)) {
        let v = kl(&p, &q).value();
        prop_assert!(v >= -1e-12);
        prop_assert!(kl(&p, &p).value().abs() < 1e-12);
        if v.is_finite() && v < 1e-14 {
            prop_assert!(l1(&p, &q) < 1e-6);
        }
        prop_assert!((j_divergence(&p, &q) - j_divergence(&q, &p)).abs() < 1e-12);
    }

    #[test]
    fn percentile_monotone_with_tail(p in pmf_strategy(8), a in 0.001f64..0.999, b in 0.001f64..0.999) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(percentile(&p, lo) >= percentile(&p, hi));
        prop_assert!(tail_mass(&p, percentile(&p, lo) + 1) <= lo + 1e-12);
    }

    #[test]
    fn b_members_have_two_atoms(eps in 0.02f64..0.99, jj in 1u64..1000) {
        let n = dwc_core::sources::n_epsilon(eps);
        let j = 1 + (jj - 1) % (1u64 << n);
        let spec = SourceSpec::BMember { epsilon: eps, j };
        if let Ok(p) = spec.make_pmf() {
            prop_assert!(p.as_finite().unwrap().atoms().len() <= 2);
        }
    }

    #[test]
    fn monotone_members_below_one_over_i(w in prop::collection::vec(0.01f64..1.0, 1..30)) {
        let mut w = w;
        w.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let total: f64 = w.iter().sum();
        let atoms = w.iter().enumerate().map(|(i, &m)| (i as Symbol + 1, m / total)).collect();
        let p = SourceSpec::MonotonePmf { pmf: PmfSpec::Atoms { atoms } }.make_pmf().unwrap();
        for &(x, m) in p.as_finite().unwrap().atoms() {
            prop_assert!(m <= 1.0 / x as f64 + 1e-12);
        }
    }

    #[test]
    fn iid_redundancy_is_kl(p in pmf_strategy(3), q in pmf_strategy(3), n in 1u64..40) {
        let m = iid_measure(q.clone());
        let r = exact_redundancy_by_types(&p, &m, n).unwrap();
        let d = kl(&p, &q).value();
        if d.is_finite() {
            prop_assert!((r - d).abs() < 1e-9 * (1.0 + d));
        } else {
            prop_assert!(r.is_infinite());
        }
    }

    #[test]
    fn mixture_penalty(p in pmf_strategy(3), n in 1u64..200, pick in 0usize..6) {
        let comps: Vec<(u64, Arc<dyn SequentialMeasure>)> = (1..=6u64)
            .map(|i| (i, Arc::new(KtCode::range(1, 2 + i / 2).unwrap()) as Arc<dyn SequentialMeasure>))
            .collect();
        let mix = MixtureMeasure::new(comps.clone()).unwrap();
        let (iota, comp) = &comps[pick];
        let rq = exact_redundancy_by_types(&p, &mix, n).unwrap();
        let ri = exact_redundancy_by_types(&p, comp.as_ref(), n).unwrap();
        prop_assert!(rq <= ri + ((iota * (iota + 1)) as f64).log2() / n as f64 + 1e-9);
    }

    #[test]
    fn pattern_code_label_invariant(xs in prop::collection::vec(1u64..6, 1..30), shift in 1u64..50) {
        // relabelling symbols keeps the pattern, so only the dictionary part moves
        let code = PatternCode::harmonic();
        let relabel: Vec<Symbol> = xs.iter().map(|&x| x + shift).collect();
        let mut distinct: Vec<Symbol> = xs.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let dict = |s: &[Symbol]| -> f64 { s.iter().map(|&x| -((x * (x + 1)) as f64).log2()).sum() };
        let shifted: Vec<Symbol> = distinct.iter().map(|&x| x + shift).collect();
        let a = log2_prob(&code, &xs) - dict(&distinct);
        let b = log2_prob(&code, &relabel) - dict(&shifted);
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn i_class_bound_tail_is_exact(k in 2u32..=20, sel in 0usize..3) {
        let selector = [Selector::Leftmost, Selector::Rightmost, Selector::Third][sel];
        let delta = 1.0 / k as f64;
        let f = i_class_bound(delta);
        let tail = IRule { selector }.tail_exact(f + 1);
        prop_assert!(tail <= Ratio::new(1, k as i128));
    }
}

#[test]
fn measure_consistency_exhaustive() {
    let measures: Vec<Box<dyn SequentialMeasure>> = vec![
        Box::new(KtCode::range(1, 4).unwrap()),
        Box::new(PatternCode::harmonic()),
        Box::new(iid_measure(Pmf::uniform(1, 4).unwrap())),
        Box::new(
            MixtureMeasure::new(vec![
                (1, Arc::new(KtCode::range(1, 2).unwrap()) as Arc<dyn SequentialMeasure>),
                (2, Arc::new(KtCode::range(1, 4).unwrap())),
            ])
            .unwrap(),
        ),
    ];
    for m in &measures {
        // a pattern code also spends mass on symbols past 4
        let open = m.name().to_lowercase().contains("pattern");
        let mut strings: Vec<Vec<Symbol>> = vec![vec![]];
        for _ in 0..5 {
            let mut next = Vec::new();
            for s in &strings {
                let here = log2_prob(m.as_ref(), s).exp2();
                let mut below = 0.0;
                for a in 1..=4 {
                    let mut t = s.clone();
                    t.push(a);
                    below += log2_prob(m.as_ref(), &t).exp2();
                    next.push(t);
                }
                if open {
                    assert!(below <= here + 1e-12, "{} at {s:?}", m.name());
                } else {
                    assert!((below - here).abs() < 1e-12, "{} at {s:?}", m.name());
                }
            }
            strings = next;
        }
    }
}

fn small_phi() -> PhiScheme {
    let mk = |i: u64, p: Pmf, hi: Symbol| {
        Centroid::new(
            i,
            format!("c{i}"),
            p,
            2.0,
            Arc::new(KtCode::range(1, hi).unwrap()) as Arc<dyn SequentialMeasure>,
            Coverage::Interval(1, hi),
            Arc::new(move |_| hi),
        )
    };
    let cs = vec![
        mk(1, Pmf::point(1), 1),
        mk(2, Pmf::uniform(1, 2).unwrap(), 2),
        mk(3, Pmf::uniform(1, 3).unwrap(), 3),
    ];
    PhiScheme::new(Arc::new(Quantization::from_centroids("toy", cs).unwrap()), 0.2, 0.1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn phi_monotone_and_consistent(seed in 0u64..1_000_000, which in 0usize..3) {
        let phi = small_phi();
        let p = [Pmf::point(1), Pmf::uniform(1, 2).unwrap(), Pmf::uniform(1, 3).unwrap()][which].clone();
        let horizon = phi.min_trap_from() + 20_000;
        let mut stream = SampleStream::new(&p, seed, 0);
        let mut st = IndicatorState::new();
        let mut was_entered = false;
        let mut was_trapped: Option<u64> = None;
        while st.n < horizon && !st.entered {
            let x = stream.next_symbol();
            phi.step(&mut st, x);
            prop_assert!(!was_entered || st.entered);
            if let Some(t) = was_trapped {
                prop_assert_eq!(st.trap, Some(t));
            } else if let Some(t) = st.trap {
                let cands = phi.quant.capture_candidates_type(&st.tau);
                let refined = phi.quant.refine(&st.tau, st.n, phi.eta, &cands);
                prop_assert_eq!(refined.iter().copied().min(), Some(t));
                was_trapped = Some(t);
            }
            was_entered = st.entered;
        }
        prop_assert!(st.entered, "no entry by {}", horizon);
        if let (Some(c), Some(n)) = (st.trap, st.entry_time) {
            let centroid = phi.quant.centroid(c);
            let gap = centroid.local.rbound(n).unwrap() + ((c * (c + 1)) as f64).log2() / n as f64;
            prop_assert!(gap < phi.delta);
            // good trap: the local code is already below delta from entry on
            if centroid.coverage.covers(&p) {
                for j in [n, 2 * n] {
                    let r = centroid.local.exact_redundancy(&p, j).unwrap();
                    prop_assert!(r < phi.delta);
                }
            }
        }
    }
}
