//! End-to-end checks of the rounding pipeline on generated instances.

use atspp_core::exact::held_karp;
use atspp_core::instance::{gap_instance, random_instance, RandomModel};
use atspp_core::lp::{check_feasible, solve_subtour_lp, LpOptions};
use atspp_core::narrowcuts::{brute_force_narrow_cuts, find_narrow_cuts, verify_structure};
use atspp_core::patch::{round, RoundOptions};
use atspp_core::retree::{build_z, decompose_trees, verify_z};
use proptest::prelude::*;

const TOL: f64 = 1e-7;

fn models() -> [RandomModel; 2] {
    [RandomModel::EuclideanPerturbed, RandomModel::ShortestPathClosure]
}

#[test]
fn lp_is_feasible_and_below_optimum() {
    for n in [4, 6, 8, 10] {
        for seed in 0..6 {
            for model in models() {
                let inst = random_instance(n, seed, model).unwrap();
                let lp = solve_subtour_lp(&inst, &LpOptions::default()).unwrap();
                assert!(check_feasible(&inst, &lp.x, 1e-6).is_feasible(), "n={n} seed={seed} {model}");
                let opt = held_karp(&inst).unwrap().cost;
                assert!(lp.value <= opt + 1e-6, "lp {} > opt {opt}", lp.value);
            }
        }
    }
}

#[test]
fn narrow_cuts_match_brute_force_on_lp_points() {
    for n in [5, 8, 11] {
        for seed in 0..8 {
            for model in models() {
                let inst = random_instance(n, seed, model).unwrap();
                let lp = solve_subtour_lp(&inst, &LpOptions::default()).unwrap();
                for tau in [0.05, 0.25] {
                    let chain = find_narrow_cuts(&lp.x, n, inst.s(), inst.t(), tau, TOL).unwrap();
                    let brute = brute_force_narrow_cuts(&lp.x, n, inst.s(), inst.t(), tau, TOL).unwrap();
                    assert_eq!(chain.cuts, brute, "n={n} seed={seed} tau={tau}");
                    let report = verify_structure(&lp.x, &chain);
                    assert!(report.passed(), "{:?}", report.failures());
                }
            }
        }
    }
}

#[test]
fn rerouted_vector_invariants_on_lp_points() {
    for n in [6, 9, 12] {
        for seed in 0..6 {
            for model in models() {
                let inst = random_instance(n, seed, model).unwrap();
                let lp = solve_subtour_lp(&inst, &LpOptions::default()).unwrap();
                let chain = find_narrow_cuts(&lp.x, n, inst.s(), inst.t(), 0.25, TOL).unwrap();
                let zv = build_z(&lp.x, &chain).unwrap();
                let report = verify_z(&zv, &lp.x);
                assert!(report.passed(), "n={n} seed={seed}: {report:?}");
            }
        }
    }
}

#[test]
fn round_sandwiched_by_optimum() {
    for n in [5, 8, 10, 12] {
        for seed in 0..5 {
            for model in models() {
                let inst = random_instance(n, seed, model).unwrap();
                let out = round(&inst, &RoundOptions { seed, ..RoundOptions::default() }).unwrap();
                let opt = held_karp(&inst).unwrap().cost;
                assert!(out.walk.lp_value <= opt + 1e-6);
                assert!(opt <= out.walk.cost + 1e-6);
                assert!(out.walk.cost <= out.bound + 1e-6);
                assert!(out.hoffman.as_ref().unwrap().passed());
            }
        }
    }
}

#[test]
fn gap_family_rounds() {
    for r in 1..=5 {
        let (inst, _) = gap_instance(r).unwrap();
        let out = round(&inst, &RoundOptions::default()).unwrap();
        assert!(out.walk.lp_value <= (r + 1) as f64 + 1e-6);
        assert!(out.walk.cost >= (2 * r - 1) as f64 - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposition_terms_are_spanning_trees(
        n in 3usize..11,
        seed in 0u64..1000,
        closure in any::<bool>(),
        tau in prop::sample::select(vec![0.02, 0.1, 0.25]),
    ) {
        let model = if closure { RandomModel::ShortestPathClosure } else { RandomModel::EuclideanPerturbed };
        let inst = random_instance(n, seed, model).unwrap();
        let lp = solve_subtour_lp(&inst, &LpOptions::default()).unwrap();
        let chain = find_narrow_cuts(&lp.x, n, inst.s(), inst.t(), tau, TOL).unwrap();
        let zv = build_z(&lp.x, &chain).unwrap();
        let comb = decompose_trees(&zv).unwrap();
        let check = atspp_core::retree::check_combination(&comb, &zv);
        prop_assert!(check.passed(), "{:?}", check);
    }
}
