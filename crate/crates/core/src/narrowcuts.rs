//! τ-narrow s-t cuts: recursive contraction search, the nested chain they
//! form, its layers, and checks of the structural bounds on the layers.
//!
//! A cut `s ∈ U ⊆ V∖{t}` is narrow when `x(∂⁺(U)) < 1 + τ - tol`. The strict
//! threshold is shifted by the LP tolerance so solver noise at exactly
//! `1 + τ` never produces a narrow cut.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::exact::{enumerate_cuts, CUT_ENUMERATION_LIMIT};
use crate::flows::{max_flow, FlowNetwork};
use crate::instance::{bits, full_mask, ArcVector, Cut, MAX_VERTICES};
use crate::{Error, Result};

/// Layers up to this size get every set partition checked.
pub const PARTITION_EXHAUSTIVE_LIMIT: usize = 12;
pub const PARTITION_SAMPLES: usize = 1000;
const REPORT_EPS: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct NarrowCutChain {
    pub tau: f64,
    pub tol: f64,
    pub n: usize,
    pub s: usize,
    pub t: usize,
    /// `U_1 = {s} ⊂ U_2 ⊂ … ⊂ U_k = V∖{t}`.
    pub cuts: Vec<Cut>,
    /// `L_1 = {s}`, `L_i = U_i ∖ U_{i-1}`, `L_{k+1} = {t}`; stored zero-based.
    pub layers: Vec<Vec<usize>>,
    /// Zero-based layer index of every vertex.
    pub layer_of: Vec<usize>,
    /// Contracted subproblems in which the search found a cut.
    pub splits: usize,
}

impl NarrowCutChain {
    pub fn k(&self) -> usize {
        self.cuts.len()
    }

    pub fn layer_mask(&self, i: usize) -> u64 {
        self.layers[i].iter().fold(0, |m, &v| m | (1 << v))
    }

    /// Arcs from layer `i` to layer `i + 1` (zero-based), the boundary of cut `i`.
    pub fn is_boundary_arc(&self, (u, v): (usize, usize)) -> bool {
        self.layer_of[v] == self.layer_of[u] + 1
    }

    pub fn is_within_layer(&self, (u, v): (usize, usize)) -> bool {
        self.layer_of[u] == self.layer_of[v]
    }

    pub fn boundary_mass(&self, x: &ArcVector, i: usize) -> f64 {
        x.between(self.layer_mask(i), self.layer_mask(i + 1))
    }

    fn from_cuts(mut cuts: Vec<Cut>, n: usize, s: usize, t: usize, tau: f64, tol: f64, splits: usize) -> Result<Self> {
        cuts.sort_by_key(|c| (c.len(), c.mask()));
        cuts.dedup();
        for (i, a) in cuts.iter().enumerate() {
            for b in &cuts[i + 1..] {
                if a.crosses(b) {
                    return Err(Error::ChainViolation { a: *a, b: *b });
                }
            }
        }
        for w in cuts.windows(2) {
            if w[0].len() == w[1].len() {
                return Err(Error::ChainViolation { a: w[0], b: w[1] });
            }
        }
        let mut layer_of = vec![0; n];
        let mut layers = Vec::with_capacity(cuts.len() + 1);
        let mut prev = 0u64;
        for c in &cuts {
            let layer: Vec<usize> = bits(c.mask() & !prev).collect();
            for &v in &layer {
                layer_of[v] = layers.len();
            }
            layers.push(layer);
            prev = c.mask();
        }
        layer_of[t] = layers.len();
        layers.push(vec![t]);
        Ok(Self { tau, tol, n, s, t, cuts, layers, layer_of, splits })
    }
}

pub fn narrow_threshold(tau: f64, tol: f64) -> f64 {
    1.0 + tau - tol
}

pub fn is_narrow(x: &ArcVector, cut: &Cut, tau: f64, tol: f64) -> bool {
    x.out_of(cut) < narrow_threshold(tau, tol)
}

/// The `x(∂⁻(U)) < τ` form of the narrowness test.
pub fn is_narrow_by_inflow(x: &ArcVector, cut: &Cut, tau: f64, tol: f64) -> bool {
    x.inflow(cut) < tau - tol
}

fn check_args(n: usize, s: usize, t: usize, tau: f64) -> Result<()> {
    if !(0.0..=0.25).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau must lie in [0, 1/4], got {tau}")));
    }
    if !(2..=MAX_VERTICES).contains(&n) || s >= n || t >= n || s == t {
        return Err(Error::InvalidArgument(format!("bad terminals s={s}, t={t} for n={n}")));
    }
    Ok(())
}

/// Finds every τ-narrow s-t cut by recursive contraction.
///
/// A subproblem is a start set and an end set, each contracted to one node,
/// with every other vertex left alone. For each ordered pair of free
/// vertices `(u, v)` the search pins `u` to the start side and `v` to the
/// end side and asks for a minimum cut. The first narrow one splits the
/// subproblem in two.
pub fn find_narrow_cuts(x: &ArcVector, n: usize, s: usize, t: usize, tau: f64, tol: f64) -> Result<NarrowCutChain> {
    check_args(n, s, t, tau)?;
    let full = full_mask(n);
    let mut found = vec![Cut::singleton(s, n), Cut::new(full & !(1 << t), n)];
    let mut splits = 0;
    let mut stack = vec![(1u64 << s, 1u64 << t)];
    let big = x.total() + 1.0;
    while let Some((start, end)) = stack.pop() {
        let free: Vec<usize> = bits(full & !start & !end).collect();
        if free.len() < 2 {
            continue;
        }
        let pairs: Vec<(usize, usize)> =
            free.iter().flat_map(|&u| free.iter().filter(move |&&v| v != u).map(move |&v| (u, v))).collect();
        let hit = pairs.par_iter().find_map_first(|&(u, v)| {
            let (src, snk) = (n, n + 1);
            let mut net = FlowNetwork::new(n + 2, src, snk);
            for ((a, b), w) in x.iter() {
                net.add_arc(a, b, w);
            }
            for w in bits(start | (1 << u)) {
                net.add_arc(src, w, big);
            }
            for w in bits(end | (1 << v)) {
                net.add_arc(w, snk, big);
            }
            let mf = max_flow(&net);
            let mask = mf.mincut.mask() & full;
            let cut = Cut::new(mask, n);
            (mf.value < narrow_threshold(tau, tol) && is_narrow(x, &cut, tau, tol)).then_some(cut)
        });
        if let Some(cut) = hit {
            splits += 1;
            found.push(cut);
            stack.push((start, full & !cut.mask()));
            stack.push((cut.mask(), end));
        }
    }
    NarrowCutChain::from_cuts(found, n, s, t, tau, tol, splits)
}

/// All narrow s-t cuts by enumeration over the `2^(n-2)` candidates.
pub fn brute_force_narrow_cuts(x: &ArcVector, n: usize, s: usize, t: usize, tau: f64, tol: f64) -> Result<Vec<Cut>> {
    check_args(n, s, t, tau)?;
    let mut cuts = enumerate_cuts(n, |c| c.separates(s, t) && is_narrow(x, c, tau, tol))?;
    cuts.sort_by_key(|c| (c.len(), c.mask()));
    Ok(cuts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMode {
    Certified,
    Sampled,
}

#[derive(Clone, Debug, Serialize)]
pub struct LayerPartitionCheck {
    pub layer: usize,
    pub size: usize,
    pub mode: PartitionMode,
    pub partitions_checked: u64,
    /// Smallest `κ(x)(∂π) - (|π| - 1 - 2τ)` seen.
    pub min_slack: f64,
    pub witness: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StructureReport {
    pub crossing: Option<(Cut, Cut)>,
    pub nesting_ok: bool,
    pub cuts_narrow: bool,
    /// `x(∂(L_i; L_{i+1}))` for each consecutive pair of layers.
    pub boundary_mass: Vec<f64>,
    pub mass_bound: f64,
    pub partitions: Vec<LayerPartitionCheck>,
    /// Cuts where the outflow and inflow forms of narrowness disagree.
    pub test_mismatches: Vec<Cut>,
    /// For `n ≤ 20`, whether the chain equals the brute-force narrow set.
    pub exhaustive_match: Option<bool>,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.crossing.is_none()
            && self.nesting_ok
            && self.cuts_narrow
            && self.boundary_mass.iter().all(|&m| m >= self.mass_bound - REPORT_EPS)
            && self.partitions.iter().all(|p| p.min_slack >= -REPORT_EPS)
            && self.test_mismatches.is_empty()
            && self.exhaustive_match != Some(false)
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some((a, b)) = &self.crossing {
            out.push(format!("cuts {:?} and {:?} cross", a.members(), b.members()));
        }
        if !self.nesting_ok {
            out.push("chain is not strictly nested from {s} to V∖{t}".into());
        }
        if !self.cuts_narrow {
            out.push("a chain cut is not narrow".into());
        }
        for (i, &m) in self.boundary_mass.iter().enumerate() {
            if m < self.mass_bound - REPORT_EPS {
                out.push(format!("boundary mass {m} between layers {} and {} below {}", i + 1, i + 2, self.mass_bound));
            }
        }
        for p in &self.partitions {
            if p.min_slack < -REPORT_EPS {
                out.push(format!("layer {} partition {:?} short by {}", p.layer + 1, p.witness, -p.min_slack));
            }
        }
        for c in &self.test_mismatches {
            out.push(format!("outflow and inflow narrowness disagree on {:?}", c.members()));
        }
        if self.exhaustive_match == Some(false) {
            out.push("chain differs from brute-force narrow cuts".into());
        }
        out
    }
}

/// Checks the chain against `x`: no crossings, boundary mass at least
/// `1 - 3τ`, the partition bound `κ(x)(∂π) ≥ |π| - 1 - 2τ` on every layer,
/// agreement of the two narrowness tests, and (for small `n`) equality with
/// brute force.
pub fn verify_structure(x: &ArcVector, chain: &NarrowCutChain) -> StructureReport {
    let (n, s, t, tau, tol) = (chain.n, chain.s, chain.t, chain.tau, chain.tol);
    let mut crossing = None;
    'outer: for (i, a) in chain.cuts.iter().enumerate() {
        for b in &chain.cuts[i + 1..] {
            if a.crosses(b) {
                crossing = Some((*a, *b));
                break 'outer;
            }
        }
    }
    let nesting_ok = chain.cuts.first().map(|c| c.mask()) == Some(1 << s)
        && chain.cuts.last().map(|c| c.mask()) == Some(full_mask(n) & !(1 << t))
        && chain.cuts.windows(2).all(|w| w[0].is_subset_of(&w[1]) && w[0] != w[1]);
    let cuts_narrow = chain.cuts.iter().all(|c| is_narrow(x, c, tau, tol));
    let boundary_mass = (0..chain.k()).map(|i| chain.boundary_mass(x, i)).collect();

    let partitions = chain
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.len() >= 2)
        .map(|(i, l)| check_layer_partitions(x, i, l, tau))
        .collect();

    let (test_mismatches, exhaustive_match) = if n <= CUT_ENUMERATION_LIMIT {
        let all = enumerate_cuts(n, |c| c.separates(s, t)).expect("n within limit");
        let mismatches =
            all.iter().filter(|c| is_narrow(x, c, tau, tol) != is_narrow_by_inflow(x, c, tau, tol)).copied().collect();
        let narrow: Vec<Cut> = {
            let mut v: Vec<Cut> = all.into_iter().filter(|c| is_narrow(x, c, tau, tol)).collect();
            v.sort_by_key(|c| (c.len(), c.mask()));
            v
        };
        (mismatches, Some(narrow == chain.cuts))
    } else {
        let mismatches = chain
            .cuts
            .iter()
            .filter(|c| is_narrow(x, c, tau, tol) != is_narrow_by_inflow(x, c, tau, tol))
            .copied()
            .collect();
        (mismatches, None)
    };

    StructureReport {
        crossing,
        nesting_ok,
        cuts_narrow,
        boundary_mass,
        mass_bound: 1.0 - 3.0 * tau,
        partitions,
        test_mismatches,
        exhaustive_match,
    }
}

/// Symmetric weights `κ(x)` between layer members, indexed by position in the layer.
fn layer_weights(x: &ArcVector, layer: &[usize]) -> Vec<Vec<f64>> {
    let m = layer.len();
    let mut w = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i != j {
                w[i][j] = x.get(layer[i], layer[j]) + x.get(layer[j], layer[i]);
            }
        }
    }
    w
}

fn check_layer_partitions(x: &ArcVector, index: usize, layer: &[usize], tau: f64) -> LayerPartitionCheck {
    let w = layer_weights(x, layer);
    let m = layer.len();
    let mut best = (f64::INFINITY, Vec::new());
    let mut checked = 0u64;
    let mut consider = |blocks: &[usize], count: usize, crossing: f64| {
        checked += 1;
        let slack = crossing - (count as f64 - 1.0 - 2.0 * tau);
        if slack < best.0 {
            best = (slack, blocks.to_vec());
        }
    };
    let mode = if m <= PARTITION_EXHAUSTIVE_LIMIT {
        // Restricted-growth strings: vertex j joins an existing block or opens
        // block `max + 1`. Crossing weight is accumulated incrementally.
        let mut blocks = vec![0usize; m];
        fn rec(
            j: usize,
            count: usize,
            crossing: f64,
            blocks: &mut [usize],
            w: &[Vec<f64>],
            f: &mut dyn FnMut(&[usize], usize, f64),
        ) {
            let m = blocks.len();
            if j == m {
                f(blocks, count, crossing);
                return;
            }
            for b in 0..=count {
                blocks[j] = b;
                let add: f64 = (0..j).filter(|&i| blocks[i] != b).map(|i| w[i][j]).sum();
                rec(j + 1, count.max(b + 1), crossing + add, blocks, w, f);
            }
        }
        rec(0, 0, 0.0, &mut blocks, &w, &mut consider);
        PartitionMode::Certified
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(index as u64);
        for _ in 0..PARTITION_SAMPLES {
            let parts = rng.gen_range(2..=m);
            let raw: Vec<usize> = (0..m).map(|_| rng.gen_range(0..parts)).collect();
            let mut relabel = vec![usize::MAX; parts];
            let mut count = 0;
            let blocks: Vec<usize> = raw
                .iter()
                .map(|&b| {
                    if relabel[b] == usize::MAX {
                        relabel[b] = count;
                        count += 1;
                    }
                    relabel[b]
                })
                .collect();
            let crossing: f64 = (0..m)
                .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
                .filter(|&(i, j)| blocks[i] != blocks[j])
                .map(|(i, j)| w[i][j])
                .sum();
            consider(&blocks, count, crossing);
        }
        PartitionMode::Sampled
    };
    let (min_slack, blocks) = best;
    let count = blocks.iter().max().map_or(0, |b| b + 1);
    let witness = (0..count).map(|b| (0..m).filter(|&i| blocks[i] == b).map(|i| layer[i]).collect()).collect();
    LayerPartitionCheck { layer: index, size: m, mode, partitions_checked: checked, min_slack, witness }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gap_instance, GapLayout};

    fn path_x() -> ArcVector {
        [((0, 1), 1.0), ((1, 2), 1.0)].into_iter().collect()
    }

    #[test]
    fn forced_path_chain() {
        let chain = find_narrow_cuts(&path_x(), 3, 0, 2, 0.25, 1e-7).unwrap();
        assert_eq!(chain.cuts.iter().map(|c| c.members()).collect::<Vec<_>>(), vec![vec![0], vec![0, 1]]);
        assert_eq!(chain.k(), 2);
        assert_eq!(chain.layers, vec![vec![0], vec![1], vec![2]]);
        assert!(verify_structure(&path_x(), &chain).passed());
    }

    #[test]
    fn gap_one_chain() {
        let (_, x) = gap_instance(1).unwrap();
        let g = GapLayout { r: 1 };
        let chain = find_narrow_cuts(&x, 4, g.s(), g.t(), 0.25, 1e-7).unwrap();
        let want = vec![vec![g.s()], vec![g.s(), g.u(1), g.v(1)]];
        assert_eq!(chain.cuts.iter().map(|c| c.members()).collect::<Vec<_>>(), want);
        // {s, u1} carries 1.5 and is not narrow.
        let su = Cut::from_members(&[g.s(), g.u(1)], 4).unwrap();
        assert_eq!(x.out_of(&su), 1.5);
        assert!(!is_narrow(&x, &su, 0.25, 1e-7));

        let report = verify_structure(&x, &chain);
        assert!(report.passed(), "{:?}", report.failures());
        assert_eq!(report.boundary_mass, vec![1.0, 1.0]);
        let layer = &report.partitions[0];
        assert_eq!(layer.mode, PartitionMode::Certified);
        assert_eq!(layer.partitions_checked, 2);
        // Singletons: x(u1v1) + x(v1u1) = 1 against the bound 2 - 1 - 1/2.
        assert_eq!(layer.min_slack, 0.5);
    }

    #[test]
    fn two_vertices_give_single_cut() {
        let x: ArcVector = [((0, 1), 1.0)].into_iter().collect();
        let chain = find_narrow_cuts(&x, 2, 0, 1, 0.25, 1e-7).unwrap();
        assert_eq!(chain.k(), 1);
        assert_eq!(chain.layers, vec![vec![0], vec![1]]);
    }

    #[test]
    fn gap_family_matches_brute_force() {
        for r in 1..=5 {
            let (inst, x) = gap_instance(r).unwrap();
            let chain = find_narrow_cuts(&x, inst.n(), inst.s(), inst.t(), 0.25, 1e-7).unwrap();
            let brute = brute_force_narrow_cuts(&x, inst.n(), inst.s(), inst.t(), 0.25, 1e-7).unwrap();
            assert_eq!(chain.cuts, brute);
            assert!(chain.splits <= chain.k().saturating_sub(2));
            assert!(verify_structure(&x, &chain).passed());
        }
    }

    #[test]
    fn partition_enumeration_counts_bell_numbers() {
        let bell = [1u64, 1, 2, 5, 15, 52, 203, 877];
        for m in 2..=7 {
            let layer: Vec<usize> = (0..m).collect();
            let x: ArcVector = (0..m).map(|i| ((i, (i + 1) % m), 1.0)).collect();
            let check = check_layer_partitions(&x, 0, &layer, 0.25);
            assert_eq!(check.partitions_checked, bell[m]);
            // A directed cycle: cutting into p arcs-worth of parts costs at least p.
            assert!(check.min_slack >= 0.0);
        }
    }

    #[test]
    fn crossing_cuts_are_rejected() {
        let a = Cut::from_members(&[0, 1], 4).unwrap();
        let b = Cut::from_members(&[0, 2], 4).unwrap();
        let err = NarrowCutChain::from_cuts(vec![a, b], 4, 0, 3, 0.25, 1e-7, 0).unwrap_err();
        assert!(matches!(err, Error::ChainViolation { .. }));
    }

    #[test]
    fn tau_out_of_range() {
        assert!(find_narrow_cuts(&path_x(), 3, 0, 2, 0.3, 1e-7).is_err());
    }
}
