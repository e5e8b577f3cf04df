//! Patching the sampled tree into a Hamiltonian s-t path.
//!
//! The tree arcs plus `ts` become lower bounds of a circulation. Its
//! min-cost integral solution is an Eulerian multigraph; an Euler circuit
//! through `ts`, with `ts` removed and repeated vertices shortcut, is the path.

use serde::Serialize;

use crate::exact::{enumerate_cuts, CUT_ENUMERATION_LIMIT};
use crate::flows::{min_cost_circulation, CirculationProblem};
use crate::forest::is_connected;
use crate::instance::{Arc, ArcVector, Cut, DirectedMetric};
use crate::lp::{solve_subtour_lp, LpOptions, LpSolution, DEFAULT_TOL};
use crate::narrowcuts::{find_narrow_cuts, verify_structure, NarrowCutChain, StructureReport};
use crate::retree::{build_z, check_combination, decompose_trees, CombinationCheck};
use crate::sampler::{cost_of, draw_until_good, Draw, SampleConfig, ThinnessMode};
use crate::{Error, Result};

/// Integrality and balance checks use this absolute slack.
const FLOW_EPS: f64 = 1e-9;
/// Hoffman slacks inherit LP noise scaled by `α/τ`.
const HOFFMAN_EPS: f64 = 1e-6;

/// Lower and upper bounds for the patching circulation.
///
/// `ℓ_a = 1` on tree arcs and on `ts`. `u_ts = 1`; every other arc gets
/// `(1 + 1/τ)·α·x_a`, plus one on tree arcs.
pub fn hoffman_bounds(arcs: &[Arc], x: &ArcVector, cfg: &SampleConfig, s: usize, t: usize) -> (ArcVector, ArcVector) {
    let scale = (1.0 + 1.0 / cfg.tau) * cfg.alpha;
    let mut lower = ArcVector::new();
    let mut upper = ArcVector::new();
    for ((u, v), w) in x.iter() {
        upper.set(u, v, scale * w);
    }
    for &(u, v) in arcs {
        lower.set(u, v, 1.0);
        upper.set(u, v, 1.0 + scale * x.get(u, v));
    }
    lower.set(t, s, 1.0);
    upper.set(t, s, 1.0);
    (lower, upper)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CutCase {
    NarrowSt,
    WideSt,
    Ts,
    NonSeparating,
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseSummary {
    pub case: CutCase,
    pub cuts: usize,
    /// Smallest `u(∂⁻(U)) - ℓ(∂⁺(U))` in this class.
    pub min_slack: f64,
    pub witness: Option<Cut>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HoffmanReport {
    pub cases: Vec<CaseSummary>,
    pub lower_le_upper: bool,
}

impl HoffmanReport {
    pub fn passed(&self) -> bool {
        self.lower_le_upper && self.cases.iter().all(|c| c.cuts == 0 || c.min_slack >= -HOFFMAN_EPS)
    }

    pub fn cuts_checked(&self) -> usize {
        self.cases.iter().map(|c| c.cuts).sum()
    }
}

pub fn classify_cut(cut: &Cut, chain: &NarrowCutChain) -> CutCase {
    let (s, t) = (chain.s, chain.t);
    if cut.separates(s, t) {
        if chain.cuts.contains(cut) {
            CutCase::NarrowSt
        } else {
            CutCase::WideSt
        }
    } else if cut.separates(t, s) {
        CutCase::Ts
    } else {
        CutCase::NonSeparating
    }
}

/// Hoffman's condition `ℓ(∂⁺(U)) ≤ u(∂⁻(U))` over every nonempty proper
/// subset, with the minimum slack reported per class of cut.
pub fn verify_hoffman(lower: &ArcVector, upper: &ArcVector, chain: &NarrowCutChain) -> Result<HoffmanReport> {
    let n = chain.n;
    if n > CUT_ENUMERATION_LIMIT {
        return Err(Error::TooLarge { n, limit: CUT_ENUMERATION_LIMIT, what: "hoffman verification" });
    }
    let lower_le_upper = lower.iter().all(|((u, v), l)| l <= upper.get(u, v) + FLOW_EPS);
    let mut cases: Vec<CaseSummary> = [CutCase::NarrowSt, CutCase::WideSt, CutCase::Ts, CutCase::NonSeparating]
        .into_iter()
        .map(|case| CaseSummary { case, cuts: 0, min_slack: f64::INFINITY, witness: None })
        .collect();
    let l: Vec<(Arc, f64)> = lower.iter().collect();
    let u: Vec<(Arc, f64)> = upper.iter().collect();
    for cut in enumerate_cuts(n, |_| true)? {
        let m = cut.mask();
        let inside = |v: usize| m >> v & 1 == 1;
        let out: f64 = l.iter().filter(|((a, b), _)| inside(*a) && !inside(*b)).map(|(_, w)| w).sum();
        let into: f64 = u.iter().filter(|((a, b), _)| !inside(*a) && inside(*b)).map(|(_, w)| w).sum();
        let slack = into - out;
        let entry = &mut cases[classify_cut(&cut, chain) as usize];
        entry.cuts += 1;
        if slack < entry.min_slack {
            entry.min_slack = slack;
            entry.witness = Some(cut);
        }
    }
    Ok(HoffmanReport { cases, lower_le_upper })
}

/// The Eulerian multigraph: arc multiplicities of the integral circulation.
#[derive(Clone, Debug, Serialize)]
pub struct Eulerian {
    pub n: usize,
    pub s: usize,
    pub t: usize,
    pub multiplicity: Vec<(Arc, u32)>,
    pub circulation_cost: f64,
}

impl Eulerian {
    pub fn count(&self, arc: Arc) -> u32 {
        self.multiplicity.iter().find(|(a, _)| *a == arc).map_or(0, |&(_, m)| m)
    }

    pub fn is_balanced(&self) -> bool {
        let mut bal = vec![0i64; self.n];
        for &((u, v), m) in &self.multiplicity {
            bal[u] -= m as i64;
            bal[v] += m as i64;
        }
        bal.iter().all(|&b| b == 0)
    }
}

/// Min-cost integral circulation with `ℓ` from the tree and `ts`, `u_ts = 1`
/// and no other finite upper bound.
pub fn augment_to_eulerian(arcs: &[Arc], inst: &DirectedMetric) -> Result<Eulerian> {
    let (n, s, t) = (inst.n(), inst.s(), inst.t());
    if !is_connected(n, arcs.iter().copied()) {
        return Err(Error::InvalidArgument("tree arcs do not connect every vertex".into()));
    }
    let mut prob = CirculationProblem::new(n);
    let is_tree = |a: Arc| arcs.contains(&a);
    let lower_sum = arcs.len() as f64 + 1.0;
    let cap = lower_sum + n as f64 + 1.0;
    for u in 0..n {
        for v in (0..n).filter(|&v| v != u) {
            let lower = if (u, v) == (t, s) || is_tree((u, v)) { 1.0 } else { 0.0 };
            let upper = if (u, v) == (t, s) { 1.0 } else { cap };
            prob.add_arc(u, v, lower, upper, inst.cost(u, v));
        }
    }
    debug_assert_eq!(cap, prob.unbounded_capacity());
    let circ = min_cost_circulation(&prob).map_err(|e| match e {
        Error::Infeasible { .. } => Error::Invariant(format!("patching circulation infeasible: {e}")),
        other => other,
    })?;
    let mut multiplicity = Vec::new();
    for (a, &f) in prob.arcs.iter().zip(&circ.flow) {
        let r = f.round();
        if (f - r).abs() > FLOW_EPS || r < 0.0 {
            return Err(Error::Invariant(format!("non-integral flow {f} on arc ({}, {})", a.tail, a.head)));
        }
        if r > 0.0 {
            multiplicity.push(((a.tail, a.head), r as u32));
        }
    }
    let eul = Eulerian { n, s, t, multiplicity, circulation_cost: circ.cost };
    if eul.count((t, s)) != 1 {
        return Err(Error::Invariant(format!("arc ts used {} times", eul.count((t, s)))));
    }
    if !eul.is_balanced() {
        return Err(Error::Invariant("circulation is not balanced".into()));
    }
    Ok(eul)
}

#[derive(Clone, Debug, Serialize)]
pub struct WalkResult {
    pub path: Vec<usize>,
    pub cost: f64,
    /// The s-t walk before shortcutting.
    pub walk: Vec<usize>,
    pub walk_cost: f64,
    pub circulation_cost: f64,
    pub tree_cost: f64,
    pub lp_value: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShortcutWalk {
    pub walk: Vec<usize>,
    pub walk_cost: f64,
    pub path: Vec<usize>,
    pub cost: f64,
}

/// Euler circuit rotated to begin with `ts`, with `ts` dropped and repeated
/// vertices skipped. The path keeps the first visit of every vertex except
/// `t`, which the walk may pass through early and which must come last.
pub fn extract_path(eul: &Eulerian, inst: &DirectedMetric) -> Result<ShortcutWalk> {
    let (n, s, t) = (eul.n, eul.s, eul.t);
    if !eul.is_balanced() {
        return Err(Error::InvalidArgument("multigraph is not Eulerian".into()));
    }
    if eul.count((t, s)) != 1 {
        return Err(Error::InvalidArgument("multigraph must contain ts exactly once".into()));
    }
    // Out-arcs per vertex, consumed from the back; `ts` is placed last in t's
    // list so the circuit from t leaves along it first.
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &((u, v), m) in eul.multiplicity.iter().rev() {
        if (u, v) != (t, s) {
            out[u].extend(std::iter::repeat_n(v, m as usize));
        }
    }
    out[t].push(s);
    let total: usize = eul.multiplicity.iter().map(|&(_, m)| m as usize).sum();
    let mut stack = vec![t];
    let mut circuit = Vec::with_capacity(total + 1);
    while let Some(&v) = stack.last() {
        match out[v].pop() {
            Some(w) => stack.push(w),
            None => circuit.push(stack.pop().expect("nonempty")),
        }
    }
    circuit.reverse();
    if circuit.len() != total + 1 {
        return Err(Error::InvalidArgument("multigraph is not connected".into()));
    }
    debug_assert_eq!(&circuit[..2], &[t, s]);
    let walk: Vec<usize> = circuit[1..].to_vec();
    let mut seen = vec![false; n];
    let mut path = Vec::with_capacity(n);
    for &v in &walk {
        if v != t && !seen[v] {
            seen[v] = true;
            path.push(v);
        }
    }
    path.push(t);
    if path.len() != n || walk.last() != Some(&t) {
        return Err(Error::InvalidArgument("walk does not cover every vertex".into()));
    }
    Ok(ShortcutWalk { walk_cost: inst.path_cost(&walk), cost: inst.path_cost(&path), walk, path })
}

#[derive(Clone, Debug)]
pub struct RoundOptions {
    pub tau: f64,
    pub seed: u64,
    pub max_tries: usize,
    pub tol: f64,
}

impl Default for RoundOptions {
    fn default() -> Self {
        Self { tau: 0.25, seed: 0, max_tries: 64, tol: DEFAULT_TOL }
    }
}

/// Every intermediate object of one rounding run.
#[derive(Clone, Debug, Serialize)]
pub struct RoundOutcome {
    pub lp: LpSolution,
    pub chain: NarrowCutChain,
    pub structure: StructureReport,
    pub z_max_cut_residual: f64,
    pub z_cap_excess: f64,
    pub combination: CombinationCheck,
    pub config: SampleConfig,
    pub draw: Draw,
    pub hoffman: Option<HoffmanReport>,
    pub eulerian: Eulerian,
    pub walk: WalkResult,
    /// `(3/(1-3τ) + (1+1/τ)·α)·lp_value`.
    pub bound: f64,
}

pub fn cost_bound(cfg: &SampleConfig, lp_value: f64) -> f64 {
    (3.0 / (1.0 - 3.0 * cfg.tau) + (1.0 + 1.0 / cfg.tau) * cfg.alpha) * lp_value
}

/// LP, narrow cuts, rerouting, tree sampling, patching and shortcutting,
/// with the cost chain and the final bound checked on the way out.
pub fn round(inst: &DirectedMetric, opts: &RoundOptions) -> Result<RoundOutcome> {
    let (n, s, t) = (inst.n(), inst.s(), inst.t());
    let cfg = SampleConfig::new(opts.seed, opts.tau, n)?;
    let lp = solve_subtour_lp(inst, &LpOptions { tol: opts.tol, ..LpOptions::default() })?;
    let x = &lp.x;
    let chain = find_narrow_cuts(x, n, s, t, opts.tau, opts.tol)?;
    let structure = verify_structure(x, &chain);
    let zv = build_z(x, &chain)?;
    let comb = decompose_trees(&zv)?;
    let combination = check_combination(&comb, &zv);
    if !combination.passed() {
        return Err(Error::Invariant(format!("tree combination check failed: {combination:?}")));
    }
    let z_cap_excess = zv.z.iter().map(|((u, v), w)| w - x.get(u, v) / (1.0 - 3.0 * opts.tau)).fold(0.0, f64::max);
    let z_max_cut_residual =
        chain.cuts.iter().map(|c| (zv.z.out_of(c) - 1.0).abs().max(zv.z.inflow(c).abs())).fold(0.0, f64::max);

    let mode = ThinnessMode::auto(&chain, opts.seed);
    let draw = draw_until_good(&comb, x, inst, lp.value, &cfg, &mode, opts.max_tries)?;
    let hoffman = if n <= CUT_ENUMERATION_LIMIT {
        let (lower, upper) = hoffman_bounds(&draw.arcs, x, &cfg, s, t);
        Some(verify_hoffman(&lower, &upper, &chain)?)
    } else {
        None
    };
    let eulerian = augment_to_eulerian(&draw.arcs, inst)?;
    let ShortcutWalk { walk, walk_cost, path, cost } = extract_path(&eulerian, inst)?;
    let tree_cost = cost_of(&draw.arcs, inst);
    let ratio = if lp.value > 0.0 {
        cost / lp.value
    } else if cost == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    let bound = cost_bound(&cfg, lp.value);
    let slack = 1e-6 * lp.value.abs().max(1.0);
    let ts = inst.cost(t, s);
    if walk_cost > eulerian.circulation_cost - ts + slack {
        return Err(Error::Invariant(format!("walk cost {walk_cost} exceeds circulation minus ts")));
    }
    if cost > walk_cost + slack {
        return Err(Error::Invariant(format!("shortcutting raised cost from {walk_cost} to {cost}")));
    }
    let patch_bound = tree_cost + (1.0 + 1.0 / cfg.tau) * cfg.alpha * lp.value;
    if eulerian.circulation_cost - ts > patch_bound + slack {
        return Err(Error::Invariant(format!("circulation cost exceeds tree cost plus {patch_bound}")));
    }
    if cost > bound + slack || cost < lp.value - slack {
        return Err(Error::Invariant(format!("path cost {cost} outside [{}, {bound}]", lp.value)));
    }
    let walk = WalkResult {
        path,
        cost,
        walk,
        walk_cost,
        circulation_cost: eulerian.circulation_cost,
        tree_cost,
        lp_value: lp.value,
        ratio,
    };
    Ok(RoundOutcome {
        lp,
        chain,
        structure,
        z_max_cut_residual,
        z_cap_excess,
        combination,
        config: cfg,
        draw,
        hoffman,
        eulerian,
        walk,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gap_instance, parse_instance, GapLayout};

    fn forced_path() -> DirectedMetric {
        parse_instance("atspp 1\nn 3\ns 0\nt 2\n0 1 2\n10 0 1\n10 10 0\n").unwrap()
    }

    #[test]
    fn bounds_examples() {
        let (_, x) = gap_instance(1).unwrap();
        let g = GapLayout { r: 1 };
        let cfg = SampleConfig::new(0, 0.25, 4).unwrap();
        let tree = [(g.s(), g.u(1)), (g.u(1), g.v(1)), (g.v(1), g.t())];
        let (l, u) = hoffman_bounds(&tree, &x, &cfg, g.s(), g.t());
        assert_eq!((l.get(g.t(), g.s()), u.get(g.t(), g.s())), (1.0, 1.0));
        assert_eq!(l.get(g.s(), g.u(1)), 1.0);
        assert!((u.get(g.s(), g.u(1)) - (1.0 + 2.5 * cfg.alpha)).abs() < 1e-9);
        // Not in the tree and no LP mass.
        assert_eq!((l.get(g.u(1), g.s()), u.get(g.u(1), g.s())), (0.0, 0.0));
        // In x but not the tree.
        assert_eq!(l.get(g.s(), g.v(1)), 0.0);
        assert!((u.get(g.s(), g.v(1)) - 2.5 * cfg.alpha).abs() < 1e-9);
    }

    #[test]
    fn forced_path_hoffman_and_patch() {
        let inst = forced_path();
        let x: ArcVector = [((0, 1), 1.0), ((1, 2), 1.0)].into_iter().collect();
        let chain = find_narrow_cuts(&x, 3, 0, 2, 0.25, 1e-7).unwrap();
        let cfg = SampleConfig::new(0, 0.25, 3).unwrap();
        let tree = [(0, 1), (1, 2)];
        let (l, u) = hoffman_bounds(&tree, &x, &cfg, 0, 2);
        let rep = verify_hoffman(&l, &u, &chain).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.cuts_checked(), 6);
        let narrow = &rep.cases[CutCase::NarrowSt as usize];
        assert_eq!(narrow.cuts, 2);

        let eul = augment_to_eulerian(&tree, &inst).unwrap();
        assert_eq!(eul.multiplicity, vec![((0, 1), 1), ((1, 2), 1), ((2, 0), 1)]);
        assert_eq!(eul.circulation_cost, 1.0 + 1.0 + 10.0);
        let sw = extract_path(&eul, &inst).unwrap();
        assert_eq!(sw.walk, vec![0, 1, 2]);
        assert_eq!(sw.path, vec![0, 1, 2]);
        assert_eq!(sw.cost, 2.0);
    }

    #[test]
    fn gap_one_patch_adds_only_ts() {
        let (inst, _) = gap_instance(1).unwrap();
        let g = GapLayout { r: 1 };
        let tree = [(g.s(), g.u(1)), (g.u(1), g.v(1)), (g.v(1), g.t())];
        let eul = augment_to_eulerian(&tree, &inst).unwrap();
        assert_eq!(eul.multiplicity.len(), 4);
        assert_eq!(eul.count((g.t(), g.s())), 1);
        assert_eq!(extract_path(&eul, &inst).unwrap().cost, 2.0);
        // BIG on ts enters the circulation once and leaves with the ts arc.
        assert_eq!(eul.circulation_cost - inst.cost(g.t(), g.s()), 2.0);
    }

    #[test]
    fn shortcut_skips_repeats() {
        let (inst, _) = gap_instance(1).unwrap();
        let g = GapLayout { r: 1 };
        let (s, u, v, t) = (g.s(), g.u(1), g.v(1), g.t());
        // Walk s, u1, v1, u1, t closed by ts.
        let eul = Eulerian {
            n: 4,
            s,
            t,
            multiplicity: vec![((s, u), 1), ((u, v), 1), ((v, u), 1), ((u, t), 1), ((t, s), 1)],
            circulation_cost: 0.0,
        };
        let sw = extract_path(&eul, &inst).unwrap();
        assert_eq!(sw.walk, vec![s, u, v, u, t]);
        assert_eq!(sw.path, vec![s, u, v, t]);
        assert!(sw.cost <= sw.walk_cost);
    }

    #[test]
    fn t_visited_mid_walk_stays_last() {
        let inst = parse_instance("atspp 1\nn 3\ns 0\nt 2\n0 1 1\n1 0 1\n1 1 0\n").unwrap();
        let eul = Eulerian {
            n: 3,
            s: 0,
            t: 2,
            multiplicity: vec![((0, 2), 1), ((2, 1), 1), ((1, 2), 1), ((2, 0), 1)],
            circulation_cost: 0.0,
        };
        let sw = extract_path(&eul, &inst).unwrap();
        assert_eq!(sw.walk.first(), Some(&0));
        assert_eq!(sw.walk.last(), Some(&2));
        assert_eq!(sw.path, vec![0, 1, 2]);
    }

    #[test]
    fn unbalanced_multigraph_rejected() {
        let inst = forced_path();
        let eul = Eulerian { n: 3, s: 0, t: 2, multiplicity: vec![((0, 1), 1), ((2, 0), 1)], circulation_cost: 0.0 };
        assert!(extract_path(&eul, &inst).is_err());
    }

    #[test]
    fn round_forced_path_is_optimal() {
        let out = round(&forced_path(), &RoundOptions::default()).unwrap();
        assert_eq!(out.walk.path, vec![0, 1, 2]);
        assert_eq!(out.walk.cost, 2.0);
        assert!((out.walk.ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn round_gap_three() {
        let (inst, _) = gap_instance(3).unwrap();
        let out = round(&inst, &RoundOptions { seed: 3, ..RoundOptions::default() }).unwrap();
        let mut sorted = out.walk.path.clone();
        sorted.sort();
        assert_eq!(sorted, (0..8).collect::<Vec<_>>());
        assert!(out.walk.cost <= out.bound);
        assert!(out.hoffman.as_ref().unwrap().passed());
        assert!(out.structure.passed());
    }
}
