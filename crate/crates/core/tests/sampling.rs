//! Empirical checks on swap rounding over fractional tree combinations.

use std::collections::BTreeMap;

use atspp_core::instance::{random_instance, RandomModel};
use atspp_core::lp::{solve_subtour_lp, LpOptions, DEFAULT_TOL};
use atspp_core::narrowcuts::find_narrow_cuts;
use atspp_core::retree::{build_z, decompose_trees, TreeCombination};
use atspp_core::sampler::{sample_tree, SampleConfig};

const SAMPLES: u64 = 20_000;

type Edge = (usize, usize);

fn fractional(count: usize) -> Vec<TreeCombination> {
    let mut out = Vec::new();
    for seed in 0..300 {
        let inst = random_instance(9, seed, RandomModel::EuclideanPerturbed).unwrap();
        let lp = solve_subtour_lp(&inst, &LpOptions::default()).unwrap();
        let chain = find_narrow_cuts(&lp.x, inst.n(), inst.s(), inst.t(), 0.25, DEFAULT_TOL).unwrap();
        let comb = decompose_trees(&build_z(&lp.x, &chain).unwrap()).unwrap();
        if comb.terms.len() > 1 {
            out.push(comb);
            if out.len() == count {
                break;
            }
        }
    }
    assert_eq!(out.len(), count, "not enough fractional instances");
    out
}

fn edge((u, v): Edge) -> Edge {
    (u.min(v), u.max(v))
}

/// Swap rounding on spanning trees is negatively correlated: for two
/// distinct edges, P(both) ≤ P(e)·P(f). Checked up to 4 standard errors.
#[test]
fn edge_pairs_are_negatively_correlated() {
    let mut pairs_checked = 0;
    for comb in fractional(2) {
        let mut single: BTreeMap<Edge, f64> = BTreeMap::new();
        let mut joint: BTreeMap<(Edge, Edge), f64> = BTreeMap::new();
        for seed in 0..SAMPLES {
            let mut edges: Vec<_> =
                sample_tree(&comb, &SampleConfig::new(seed, 0.25, comb.n).unwrap()).into_iter().map(edge).collect();
            edges.sort();
            edges.dedup();
            for (i, &e) in edges.iter().enumerate() {
                *single.entry(e).or_default() += 1.0;
                for &f in &edges[i + 1..] {
                    *joint.entry((e, f)).or_default() += 1.0;
                }
            }
        }
        let p = |e| single.get(&e).copied().unwrap_or(0.0) / SAMPLES as f64;
        let edges: Vec<_> = single.keys().copied().collect();
        for (i, &e) in edges.iter().enumerate() {
            for &f in &edges[i + 1..] {
                let (pe, pf) = (p(e), p(f));
                if pe >= 1.0 || pf >= 1.0 {
                    continue;
                }
                let both = joint.get(&(e, f)).copied().unwrap_or(0.0) / SAMPLES as f64;
                let se = (pe * pf * (1.0 - pe * pf) / SAMPLES as f64).sqrt().max(1.0 / SAMPLES as f64);
                assert!(both <= pe * pf + 4.0 * se, "{e:?} {f:?}: joint {both} > {pe} * {pf}");
                pairs_checked += 1;
            }
        }
    }
    assert!(pairs_checked > 0);
}
