//! The library's evaluators and brute-force optima against independent
//! recursions over subsets and assignments.

mod common;

use common::{mixed_instance, naive_maxmin, naive_mms, naive_multilinear, naive_nsw, rng};
use cyclecancel::multilinear::{self, gradient, partial};
use cyclecancel::{
    brute_opt_maxmin, brute_opt_nsw, max_weight_matching, mms_bruteforce, BruteLimits, EvalMode, GoodSet,
    ValuationSpec, WeightMatrix,
};
use rand::seq::SliceRandom;
use rand::Rng;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn multilinear_matches_subset_sum() {
    let mut r = rng(11);
    for trial in 0..200 {
        let m = r.gen_range(1..=9);
        let spec = mixed_instance(1, m, trial).valuation(0).clone();
        let x: Vec<f64> = (0..m)
            .map(|_| match r.gen_range(0..5) {
                0 => 0.0,
                1 => 1.0,
                _ => r.gen_range(0.0..1.0),
            })
            .collect();
        let want = naive_multilinear(&spec, &x);
        let got = multilinear::eval(&spec, &x, EvalMode::Exact).unwrap().value;
        assert!(close(got, want), "trial {trial}: {got} vs {want}");
        let grad = gradient(&spec, &x, EvalMode::Exact).unwrap();
        for g in 0..m {
            let mut hi = x.clone();
            hi[g] = 1.0;
            let mut lo = x.clone();
            lo[g] = 0.0;
            let want = naive_multilinear(&spec, &hi) - naive_multilinear(&spec, &lo);
            assert!(close(grad[g].value, want), "trial {trial}, good {g}");
            assert!(close(partial(&spec, &x, g, EvalMode::Exact).unwrap().value, want));
        }
    }
}

#[test]
fn worked_multilinear_values() {
    // weights (2, 1) at (0.5, 0.5): 0.5·2 + 0.5·1
    let spec = ValuationSpec::Additive { weights: vec![2.0, 1.0] };
    assert_eq!(naive_multilinear(&spec, &[0.5, 0.5]), 1.5);
    assert_eq!(multilinear::eval(&spec, &[0.5, 0.5], EvalMode::Exact).unwrap().value, 1.5);
    // two goods covering {0,1} and {1,2}: 0.25·3 + 0.5·2 = 1.75
    let cov = ValuationSpec::Coverage {
        element_weights: vec![1.0; 3],
        covers: vec![vec![0, 1], vec![1, 2]],
    };
    assert_eq!(naive_multilinear(&cov, &[0.5, 0.5]), 1.75);
    assert!(close(multilinear::eval(&cov, &[0.5, 0.5], EvalMode::Exact).unwrap().value, 1.75));
}

#[test]
fn brute_optima_match_recursion() {
    let limits = BruteLimits::default();
    let mut r = rng(12);
    for k in 0..60 {
        let n = r.gen_range(1..=3);
        let m = r.gen_range(0..=6);
        let inst = mixed_instance(n, m, 300 + k);
        let (mm, a) = brute_opt_maxmin(&inst, &limits).unwrap();
        assert!(close(mm, naive_maxmin(&inst)), "instance {k}");
        let achieved = a.values(inst.valuations()).unwrap().into_iter().fold(f64::INFINITY, f64::min);
        assert!(close(achieved, mm) || (n == 1 && close(achieved, mm)));
        let (nsw, _) = brute_opt_nsw(&inst, &limits).unwrap();
        assert!(close(nsw, naive_nsw(&inst)), "instance {k}: {nsw} vs {}", naive_nsw(&inst));
        for i in 0..n {
            for parts in 1..=3 {
                let goods: Vec<usize> = (0..m).filter(|_| r.gen_bool(0.8)).collect();
                let set = GoodSet::from_indices(m, goods.iter().copied()).unwrap();
                let got = mms_bruteforce(inst.valuation(i), parts, &set, &limits).unwrap();
                assert!(close(got, naive_mms(inst.valuation(i), parts, &goods)), "instance {k}");
            }
        }
    }
}

#[test]
fn mms_of_identical_agents_is_maxmin() {
    let limits = BruteLimits::default();
    for seed in 0..30 {
        let base = mixed_instance(1, 6, 700 + seed).valuation(0).clone();
        for n in 2..=3 {
            let inst = cyclecancel::Instance::new(vec![base.clone(); n]).unwrap();
            let mms = mms_bruteforce(&base, n, &GoodSet::full(6), &limits).unwrap();
            assert!(close(mms, brute_opt_maxmin(&inst, &limits).unwrap().0));
        }
    }
}

fn best_injective(w: &WeightMatrix) -> f64 {
    fn go(w: &WeightMatrix, row: usize, used: &mut Vec<bool>) -> f64 {
        if row == w.rows() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for c in 0..w.cols() {
            if !used[c] {
                used[c] = true;
                best = best.max(w.get(row, c) + go(w, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    go(w, 0, &mut vec![false; w.cols()])
}

#[test]
fn matching_is_exactly_optimal() {
    let mut r = rng(13);
    for trial in 0..300 {
        let n = r.gen_range(1..=6);
        let k = r.gen_range(n..=8);
        let w = WeightMatrix::from_fn(n, k, |_, _| {
            if r.gen_bool(0.1) {
                f64::NEG_INFINITY
            } else {
                // small integers make exact ties common
                r.gen_range(0..6) as f64
            }
        })
        .unwrap();
        let want = best_injective(&w);
        match max_weight_matching(&w) {
            Ok((m, total)) => {
                assert_eq!(total, want, "trial {trial}");
                let mut seen = vec![false; k];
                for &c in &m.assign {
                    assert!(!seen[c]);
                    seen[c] = true;
                }
                assert_eq!(m.assign.iter().enumerate().map(|(i, &c)| w.get(i, c)).sum::<f64>(), total);

                // permuting columns keeps the optimum and relabels a solution
                let mut perm: Vec<usize> = (0..k).collect();
                perm.shuffle(&mut r);
                let pw = WeightMatrix::from_fn(n, k, |i, j| w.get(i, perm[j])).unwrap();
                let (pm, ptotal) = max_weight_matching(&pw).unwrap();
                assert_eq!(ptotal, total);
                let mapped: f64 = pm.assign.iter().enumerate().map(|(i, &c)| w.get(i, perm[c])).sum();
                assert_eq!(mapped, total);
            }
            Err(cyclecancel::Error::Infeasible(_)) => assert_eq!(want, f64::NEG_INFINITY),
            Err(e) => panic!("unexpected {e}"),
        }
    }
}
