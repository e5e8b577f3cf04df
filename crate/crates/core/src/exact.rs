//! Exact oracles: Held–Karp for Hamiltonian s-t paths, a permutation brute
//! force to cross-check it, and exhaustive cut enumeration.

use itertools::Itertools;
use serde::Serialize;

use crate::instance::{full_mask, Cut, DirectedMetric};
use crate::{Error, Result};

pub const HELD_KARP_LIMIT: usize = 22;
pub const BRUTE_FORCE_LIMIT: usize = 10;
pub const CUT_ENUMERATION_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactResult {
    pub cost: f64,
    pub path: Vec<usize>,
    pub states_expanded: u64,
}

/// Minimum-cost Hamiltonian s-t path by subset dynamic programming.
///
/// States are (S, last) with S a subset of the interior vertices; s is the
/// implicit start and t is appended as the final hop.
pub fn held_karp(inst: &DirectedMetric) -> Result<ExactResult> {
    let n = inst.n();
    if n > HELD_KARP_LIMIT {
        return Err(Error::TooLarge { n, limit: HELD_KARP_LIMIT, what: "held_karp" });
    }
    let (s, t) = (inst.s(), inst.t());
    let interior: Vec<usize> = (0..n).filter(|&v| v != s && v != t).collect();
    let m = interior.len();
    if m == 0 {
        return Ok(ExactResult { cost: inst.cost(s, t), path: vec![s, t], states_expanded: 1 });
    }

    let full = (1usize << m) - 1;
    let mut dp = vec![f64::INFINITY; (full + 1) * m];
    let idx = |set: usize, last: usize| set * m + last;
    for (i, &v) in interior.iter().enumerate() {
        dp[idx(1 << i, i)] = inst.cost(s, v);
    }
    let mut expanded = 0u64;
    for set in 1..=full {
        for last in 0..m {
            if set & (1 << last) == 0 {
                continue;
            }
            let here = dp[idx(set, last)];
            if here.is_infinite() {
                continue;
            }
            expanded += 1;
            let lv = interior[last];
            let mut rest = full & !set;
            while rest != 0 {
                let next = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let cand = here + inst.cost(lv, interior[next]);
                let slot = &mut dp[idx(set | (1 << next), next)];
                if cand < *slot {
                    *slot = cand;
                }
            }
        }
    }

    let (mut last, cost) = (0..m)
        .map(|i| (i, dp[idx(full, i)] + inst.cost(interior[i], t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty interior");

    // Walk back through the table; each predecessor is the one whose value
    // plus the connecting arc reproduces the stored optimum.
    let mut rev = vec![t];
    let mut set = full;
    loop {
        rev.push(interior[last]);
        let prev_set = set & !(1 << last);
        if prev_set == 0 {
            break;
        }
        let target = dp[idx(set, last)];
        let lv = interior[last];
        let prev = (0..m)
            .filter(|&p| prev_set & (1 << p) != 0)
            .min_by(|&a, &b| {
                let da = (dp[idx(prev_set, a)] + inst.cost(interior[a], lv) - target).abs();
                let db = (dp[idx(prev_set, b)] + inst.cost(interior[b], lv) - target).abs();
                da.total_cmp(&db)
            })
            .expect("nonempty predecessor set");
        set = prev_set;
        last = prev;
    }
    rev.push(s);
    rev.reverse();
    Ok(ExactResult { cost, path: rev, states_expanded: expanded })
}

/// Enumerates every ordering of the interior vertices. Test oracle only.
pub fn brute_force_path(inst: &DirectedMetric) -> Result<ExactResult> {
    let n = inst.n();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { n, limit: BRUTE_FORCE_LIMIT, what: "brute_force_path" });
    }
    let (s, t) = (inst.s(), inst.t());
    let interior: Vec<usize> = (0..n).filter(|&v| v != s && v != t).collect();
    let mut best: Option<ExactResult> = None;
    let mut count = 0u64;
    for order in interior.iter().copied().permutations(interior.len()) {
        count += 1;
        let path: Vec<usize> = std::iter::once(s).chain(order).chain(std::iter::once(t)).collect();
        let cost = inst.path_cost(&path);
        if best.as_ref().is_none_or(|b| cost < b.cost) {
            best = Some(ExactResult { cost, path, states_expanded: 0 });
        }
    }
    let mut best = best.expect("at least one ordering");
    best.states_expanded = count;
    Ok(best)
}

/// All nonempty proper subsets of `0..n` accepted by `keep`, in mask order.
pub fn enumerate_cuts(n: usize, keep: impl Fn(&Cut) -> bool) -> Result<Vec<Cut>> {
    if n > CUT_ENUMERATION_LIMIT {
        return Err(Error::TooLarge { n, limit: CUT_ENUMERATION_LIMIT, what: "cut enumeration" });
    }
    if n < 2 {
        return Ok(Vec::new());
    }
    Ok((1..full_mask(n)).map(|mask| Cut::new(mask, n)).filter(|c| keep(c)).collect())
}
