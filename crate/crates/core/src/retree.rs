//! The rerouted vector `z` and its decomposition into spanning trees.
//!
//! `z` rescales `x` so that each boundary `∂(L_i; L_{i+1})` carries exactly one
//! unit, inflates within-layer arcs by `1/(1-2τ)`, and zeroes everything
//! else. Every narrow cut is then crossed forward by exactly one unit and
//! backward by nothing, and `κ(z)` splits into a convex combination of
//! spanning trees: a tree packing inside each layer, one arc per boundary.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::forest::{is_spanning_tree, DisjointSets};
use crate::instance::{Arc, ArcVector};
use crate::lp::simplex::{solve, LinearProgram, Sense};
use crate::narrowcuts::NarrowCutChain;
use crate::{Error, Result};

/// Products with more terms than this are coupled instead of enumerated.
pub const PRODUCT_TERM_LIMIT: usize = 4096;
const PACKING_ITERATION_LIMIT: usize = 10_000;
const CHECK_EPS: f64 = 1e-9;

/// One edge of the undirected bi-edge multigraph, remembering the arc it came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UndirectedEdge {
    pub ends: (usize, usize),
    pub arc: Arc,
    pub weight: f64,
}

/// `κ(w)`: every arc becomes its own undirected edge, so the two orientations
/// of a pair stay parallel rather than merging.
pub fn undirect(w: &ArcVector) -> Vec<UndirectedEdge> {
    w.iter().map(|((u, v), weight)| UndirectedEdge { ends: (u.min(v), u.max(v)), arc: (u, v), weight }).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ReroutedVector {
    pub z: ArcVector,
    pub chain: NarrowCutChain,
    pub tau: f64,
}

pub fn build_z(x: &ArcVector, chain: &NarrowCutChain) -> Result<ReroutedVector> {
    let tau = chain.tau;
    let masses: Vec<f64> = (0..chain.k()).map(|i| chain.boundary_mass(x, i)).collect();
    if let Some(layer) = masses.iter().position(|&m| m <= 0.0) {
        return Err(Error::ZeroBoundaryMass { layer });
    }
    let z = x
        .iter()
        .filter_map(|(a, w)| {
            if chain.is_boundary_arc(a) {
                Some((a, w / masses[chain.layer_of[a.0]]))
            } else if chain.is_within_layer(a) {
                Some((a, w / (1.0 - 2.0 * tau)))
            } else {
                None
            }
        })
        .collect();
    Ok(ReroutedVector { z, chain: chain.clone(), tau })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeTerm {
    pub weight: f64,
    /// Sorted arcs; their undirected shadow is a spanning tree.
    pub arcs: Vec<Arc>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TreeCombination {
    pub n: usize,
    pub terms: Vec<TreeTerm>,
}

impl TreeCombination {
    pub fn single(n: usize, mut arcs: Vec<Arc>) -> Self {
        arcs.sort();
        Self { n, terms: vec![TreeTerm { weight: 1.0, arcs }] }
    }

    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    /// `Σ_j λ_j · 1[a ∈ T_j]` per arc.
    pub fn marginals(&self) -> ArcVector {
        let mut m = ArcVector::new();
        for t in &self.terms {
            for &(u, v) in &t.arcs {
                m.add(u, v, t.weight);
            }
        }
        m
    }
}

/// A distribution over arc-sets, used for one layer or one boundary.
type Factor = Vec<(f64, Vec<Arc>)>;

/// Splits `κ(z)` into spanning trees: a fractional tree packing of total
/// weight one inside each layer, an independent categorical choice of one
/// arc per boundary, and their product (or a monotone coupling of the
/// factors when the product would be too large).
pub fn decompose_trees(zv: &ReroutedVector) -> Result<TreeCombination> {
    let chain = &zv.chain;
    let mut factors: Vec<Factor> = Vec::new();
    for (i, layer) in chain.layers.iter().enumerate() {
        if layer.len() >= 2 {
            let edges: Vec<(Arc, f64)> =
                zv.z.iter().filter(|&((u, v), _)| chain.layer_of[u] == i && chain.layer_of[v] == i).collect();
            factors.push(decompose_layer(layer, &edges).map_err(|e| match e {
                Error::Decomposition(msg) => Error::Decomposition(format!("layer {}: {msg}", i + 1)),
                other => other,
            })?);
        }
    }
    for i in 0..chain.k() {
        let boundary: Factor =
            zv.z.iter()
                .filter(|&((u, v), _)| chain.layer_of[u] == i && chain.layer_of[v] == i + 1)
                .map(|(a, w)| (w, vec![a]))
                .collect();
        if boundary.is_empty() {
            return Err(Error::ZeroBoundaryMass { layer: i });
        }
        factors.push(boundary);
    }

    let size = factors.iter().try_fold(1usize, |acc, f| acc.checked_mul(f.len()).filter(|&p| p <= PRODUCT_TERM_LIMIT));
    let raw = match size {
        Some(_) => product(&factors),
        None => couple(&factors),
    };
    let mut merged: BTreeMap<Vec<Arc>, f64> = BTreeMap::new();
    for (w, mut arcs) in raw {
        arcs.sort();
        *merged.entry(arcs).or_default() += w;
    }
    let terms = merged.into_iter().filter(|&(_, w)| w > 0.0).map(|(arcs, weight)| TreeTerm { weight, arcs }).collect();
    Ok(TreeCombination { n: chain.n, terms })
}

fn product(factors: &[Factor]) -> Vec<(f64, Vec<Arc>)> {
    let mut acc: Vec<(f64, Vec<Arc>)> = vec![(1.0, Vec::new())];
    for f in factors {
        acc = acc
            .iter()
            .flat_map(|(w, arcs)| {
                f.iter().map(move |(fw, fa)| {
                    let mut joined = arcs.clone();
                    joined.extend_from_slice(fa);
                    (w * fw, joined)
                })
            })
            .collect();
    }
    acc
}

/// Lays every factor's weights end to end on `[0, 1)` and cuts at the union
/// of their breakpoints; each piece picks, from every factor, the item whose
/// interval contains it. Each factor's marginals are kept exactly and the
/// term count is at most the sum of the factor sizes.
fn couple(factors: &[Factor]) -> Vec<(f64, Vec<Arc>)> {
    let mut breaks: Vec<f64> = vec![0.0, 1.0];
    for f in factors {
        let mut acc = 0.0;
        for (w, _) in &f[..f.len() - 1] {
            acc += w;
            breaks.push(acc.min(1.0));
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut cursors = vec![(0usize, 0.0f64); factors.len()];
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let mut arcs = Vec::new();
        for (f, (idx, start)) in factors.iter().zip(cursors.iter_mut()) {
            while *idx + 1 < f.len() && *start + f[*idx].0 <= lo {
                *start += f[*idx].0;
                *idx += 1;
            }
            arcs.extend_from_slice(&f[*idx].1);
        }
        out.push((hi - lo, arcs));
    }
    out
}

/// Spanning trees of `layer` with weights summing to one whose marginals are
/// dominated by the edge weights. A greedy peel of maximum-weight trees is
/// tried first; when it stalls before reaching one, a fractional tree
/// packing is solved by column generation and normalized.
fn decompose_layer(layer: &[usize], edges: &[(Arc, f64)]) -> Result<Factor> {
    if let Some(terms) = greedy_trees(layer, edges) {
        return Ok(terms);
    }
    let (trees, lambda) = tree_packing(layer, edges)?;
    let value: f64 = lambda.iter().sum();
    if value < 1.0 - 1e-7 {
        return Err(Error::Decomposition(format!("tree packing value {value} is below 1")));
    }
    Ok(trees
        .into_iter()
        .zip(lambda)
        .filter(|&(_, l)| l > 1e-12)
        .map(|(t, l)| (l / value, t.into_iter().map(|e| edges[e].0).collect()))
        .collect())
}

/// Kruskal over `order`, returning edge indices of a spanning tree of `layer`.
fn spanning_tree_in_order(
    layer: &[usize],
    edges: &[(Arc, f64)],
    order: impl Iterator<Item = usize>,
) -> Option<Vec<usize>> {
    let mut local = BTreeMap::new();
    for (i, &v) in layer.iter().enumerate() {
        local.insert(v, i);
    }
    let mut ds = DisjointSets::new(layer.len());
    let mut tree = Vec::with_capacity(layer.len() - 1);
    for e in order {
        let ((u, v), _) = edges[e];
        if ds.union(local[&u], local[&v]) {
            tree.push(e);
            if tree.len() + 1 == layer.len() {
                return Some(tree);
            }
        }
    }
    None
}

fn greedy_trees(layer: &[usize], edges: &[(Arc, f64)]) -> Option<Factor> {
    let mut rem: Vec<f64> = edges.iter().map(|&(_, w)| w.min(1.0)).collect();
    let mut total = 0.0;
    let mut out = Vec::new();
    while total < 1.0 - 1e-12 {
        let mut order: Vec<usize> = (0..edges.len()).filter(|&e| rem[e] > 1e-12).collect();
        order.sort_by(|&a, &b| rem[b].total_cmp(&rem[a]).then(a.cmp(&b)));
        let tree = spanning_tree_in_order(layer, edges, order.into_iter())?;
        let lambda = tree.iter().map(|&e| rem[e]).fold(1.0 - total, f64::min);
        for &e in &tree {
            rem[e] -= lambda;
        }
        total += lambda;
        out.push((lambda, tree.into_iter().map(|e| edges[e].0).collect()));
    }
    Some(out)
}

/// Maximum fractional packing of spanning trees under edge capacities.
///
/// The dual (cover every tree with `y`-weight at least one at minimum
/// `w·y`) is grown by row generation with a minimum spanning tree as the
/// pricing oracle; the primal is then solved over the generated trees.
fn tree_packing(layer: &[usize], edges: &[(Arc, f64)]) -> Result<(Vec<Vec<usize>>, Vec<f64>)> {
    let m = edges.len();
    let mut trees: Vec<Vec<usize>> = Vec::new();
    let mut y = vec![0.0f64; m];
    for _ in 0..PACKING_ITERATION_LIMIT {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
        let tree = spanning_tree_in_order(layer, edges, order.into_iter())
            .ok_or_else(|| Error::Decomposition("layer support is disconnected".into()))?;
        let cover: f64 = tree.iter().map(|&e| y[e]).sum();
        if cover >= 1.0 - 1e-9 {
            let mut primal = LinearProgram::new(vec![-1.0; trees.len()]);
            for e in 0..m {
                let row: Vec<(usize, f64)> =
                    trees.iter().enumerate().filter(|(_, t)| t.contains(&e)).map(|(j, _)| (j, 1.0)).collect();
                if !row.is_empty() {
                    primal.add_row(row, Sense::Le, edges[e].1);
                }
            }
            let sol = solve::<f64>(&primal)?;
            return Ok((trees, sol.x));
        }
        trees.push(tree);
        let mut dual = LinearProgram::new(edges.iter().map(|&(_, w)| w).collect());
        for t in &trees {
            dual.add_row(t.iter().map(|&e| (e, 1.0)).collect(), Sense::Ge, 1.0);
        }
        y = solve::<f64>(&dual)?.x;
    }
    Err(Error::Decomposition("tree packing did not converge".into()))
}

#[derive(Clone, Debug, Serialize)]
pub struct CombinationCheck {
    pub terms: usize,
    pub weight_sum: f64,
    /// Indices of terms whose shadow is not a spanning tree.
    pub non_tree_terms: Vec<usize>,
    /// `(term, cut)` pairs where the term does not cross the cut exactly once forward.
    pub crossing_failures: Vec<(usize, usize)>,
    /// Largest `|marginal - z|` over boundary arcs.
    pub boundary_residual: f64,
    /// Largest `marginal - z` over all arcs.
    pub dominance_excess: f64,
}

impl CombinationCheck {
    pub fn passed(&self) -> bool {
        (self.weight_sum - 1.0).abs() <= CHECK_EPS
            && self.non_tree_terms.is_empty()
            && self.crossing_failures.is_empty()
            && self.boundary_residual <= CHECK_EPS
            && self.dominance_excess <= CHECK_EPS
    }
}

pub fn check_combination(comb: &TreeCombination, zv: &ReroutedVector) -> CombinationCheck {
    let chain = &zv.chain;
    let vertices: Vec<usize> = (0..chain.n).collect();
    let mut non_tree_terms = Vec::new();
    let mut crossing_failures = Vec::new();
    for (j, term) in comb.terms.iter().enumerate() {
        if !is_spanning_tree(&vertices, &term.arcs) {
            non_tree_terms.push(j);
        }
        for (i, cut) in chain.cuts.iter().enumerate() {
            let fwd = term.arcs.iter().filter(|&&(u, v)| cut.contains(u) && !cut.contains(v)).count();
            let back = term.arcs.iter().filter(|&&(u, v)| !cut.contains(u) && cut.contains(v)).count();
            if fwd != 1 || back != 0 {
                crossing_failures.push((j, i));
            }
        }
    }
    let marg = comb.marginals();
    let mut boundary_residual: f64 = 0.0;
    let mut dominance_excess: f64 = f64::NEG_INFINITY;
    let arcs: std::collections::BTreeSet<Arc> = marg.support().chain(zv.z.support()).collect();
    for a in arcs {
        let (m, z) = (marg.get(a.0, a.1), zv.z.get(a.0, a.1));
        if chain.is_boundary_arc(a) {
            boundary_residual = boundary_residual.max((m - z).abs());
        }
        dominance_excess = dominance_excess.max(m - z);
    }
    CombinationCheck {
        terms: comb.terms.len(),
        weight_sum: comb.total_weight(),
        non_tree_terms,
        crossing_failures,
        boundary_residual,
        dominance_excess: dominance_excess.max(0.0),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ZReport {
    /// Largest `z_a - x_a/(1-3τ)`; at most zero when the cap holds.
    pub cap_excess: f64,
    pub cap_witness: Option<Arc>,
    /// `z(∂⁺(U_i))` for every chain cut.
    pub cut_out: Vec<f64>,
    /// `z(∂⁻(U_i))` for every chain cut.
    pub cut_in: Vec<f64>,
    /// Arcs carrying `z` that are neither boundary nor within-layer.
    pub stray_support: Vec<Arc>,
    /// Tree decomposition acting as a certificate for the partition constraints.
    pub decomposition: Option<CombinationCheck>,
    pub decomposition_error: Option<String>,
}

impl ZReport {
    pub fn passed(&self) -> bool {
        self.cap_excess <= CHECK_EPS
            && self.cut_out.iter().all(|v| (v - 1.0).abs() <= CHECK_EPS)
            && self.cut_in.iter().all(|v| v.abs() <= CHECK_EPS)
            && self.stray_support.is_empty()
            && self.decomposition.as_ref().is_some_and(|d| d.passed())
    }

    pub fn max_cut_residual(&self) -> f64 {
        self.cut_out.iter().map(|v| (v - 1.0).abs()).chain(self.cut_in.iter().map(|v| v.abs())).fold(0.0, f64::max)
    }
}

/// Checks the cap `z ≤ x/(1-3τ)`, the unit forward and zero backward load
/// on each narrow cut, the support restriction, and certifies the partition
/// constraints by exhibiting a tree decomposition.
pub fn verify_z(zv: &ReroutedVector, x: &ArcVector) -> ZReport {
    let scale = 1.0 / (1.0 - 3.0 * zv.tau);
    let (cap_excess, cap_witness) =
        zv.z.iter()
            .map(|(a, w)| (w - x.get(a.0, a.1) * scale, Some(a)))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap_or((f64::NEG_INFINITY, None));
    let cut_out = zv.chain.cuts.iter().map(|c| zv.z.out_of(c)).collect();
    let cut_in = zv.chain.cuts.iter().map(|c| zv.z.inflow(c)).collect();
    let stray_support =
        zv.z.support().filter(|&a| !zv.chain.is_boundary_arc(a) && !zv.chain.is_within_layer(a)).collect();
    let (decomposition, decomposition_error) = match decompose_trees(zv) {
        Ok(comb) => (Some(check_combination(&comb, zv)), None),
        Err(e) => (None, Some(e.to_string())),
    };
    ZReport { cap_excess, cap_witness, cut_out, cut_in, stray_support, decomposition, decomposition_error }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gap_instance, GapLayout};
    use crate::narrowcuts::find_narrow_cuts;

    fn gap_one() -> (ArcVector, ReroutedVector, GapLayout) {
        let (_, x) = gap_instance(1).unwrap();
        let chain = find_narrow_cuts(&x, 4, 0, 3, 0.25, 1e-7).unwrap();
        let zv = build_z(&x, &chain).unwrap();
        (x, zv, GapLayout { r: 1 })
    }

    #[test]
    fn undirect_keeps_parallel_edges() {
        let w: ArcVector = [((0, 1), 0.3), ((1, 0), 0.5)].into_iter().collect();
        let k = undirect(&w);
        assert_eq!(k.len(), 2);
        assert!(k.iter().all(|e| e.ends == (0, 1)));
        assert_eq!(k.iter().map(|e| e.weight).sum::<f64>(), w.total());
        let (_, x) = gap_instance(1).unwrap();
        let kx = undirect(&x);
        assert_eq!(kx.len(), 6);
        assert!(kx.iter().all(|e| e.weight == 0.5));
    }

    #[test]
    fn gap_one_z_values() {
        let (x, zv, g) = gap_one();
        let (s, u, v, t) = (g.s(), g.u(1), g.v(1), g.t());
        for (a, want) in [((s, u), 0.5), ((s, v), 0.5), ((u, t), 0.5), ((v, t), 0.5), ((u, v), 1.0), ((v, u), 1.0)] {
            assert_eq!(zv.z.get(a.0, a.1), want, "arc {a:?}");
        }
        assert_eq!(zv.z.len(), 6);
        let report = verify_z(&zv, &x);
        assert!(report.passed(), "{report:?}");
        assert!(report.max_cut_residual() <= 1e-12);
    }

    #[test]
    fn gap_one_decomposes_into_four_quarter_terms() {
        let (_, zv, g) = gap_one();
        let comb = decompose_trees(&zv).unwrap();
        assert_eq!(comb.terms.len(), 4);
        assert!(comb.terms.iter().all(|t| t.weight == 0.25));
        for t in &comb.terms {
            let from_s = t.arcs.iter().filter(|a| a.0 == g.s()).count();
            let into_t = t.arcs.iter().filter(|a| a.1 == g.t()).count();
            let inside = t.arcs.iter().filter(|&&(a, b)| a != g.s() && b != g.t()).count();
            assert_eq!((from_s, into_t, inside), (1, 1, 1));
        }
        assert!(check_combination(&comb, &zv).passed());
    }

    #[test]
    fn forced_path_is_one_term() {
        let x: ArcVector = [((0, 1), 1.0), ((1, 2), 1.0)].into_iter().collect();
        let chain = find_narrow_cuts(&x, 3, 0, 2, 0.25, 1e-7).unwrap();
        let zv = build_z(&x, &chain).unwrap();
        assert_eq!(zv.z, x);
        let comb = decompose_trees(&zv).unwrap();
        assert_eq!(comb.terms, vec![TreeTerm { weight: 1.0, arcs: vec![(0, 1), (1, 2)] }]);
    }

    #[test]
    fn inflated_arc_breaks_cap() {
        let (x, mut zv, g) = gap_one();
        zv.z.set(g.s(), g.u(1), 3.0);
        let report = verify_z(&zv, &x);
        assert!(report.cap_excess > 0.0);
        assert_eq!(report.cap_witness, Some((g.s(), g.u(1))));
        assert!(!report.passed());
    }

    #[test]
    fn triangle_needs_the_packing_fallback() {
        // Three edges of weight 2/3: each tree uses two, so only a packing of
        // all three trees reaches total weight one.
        let layer = [0, 1, 2];
        let edges = [((0, 1), 2.0 / 3.0), ((1, 2), 2.0 / 3.0), ((2, 0), 2.0 / 3.0)];
        assert!(greedy_trees(&layer, &edges).is_none());
        let terms = decompose_layer(&layer, &edges).unwrap();
        let total: f64 = terms.iter().map(|t| t.0).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let mut marg: BTreeMap<Arc, f64> = BTreeMap::new();
        for (w, arcs) in &terms {
            assert!(is_spanning_tree(&layer, arcs));
            for &a in arcs {
                *marg.entry(a).or_default() += w;
            }
        }
        assert!(marg.values().all(|&m| m <= 2.0 / 3.0 + 1e-9));
    }

    #[test]
    fn coupling_preserves_factor_marginals() {
        let factors: Vec<Factor> = vec![
            vec![(0.5, vec![(0, 1)]), (0.5, vec![(0, 2)])],
            vec![(0.2, vec![(1, 3)]), (0.3, vec![(2, 3)]), (0.5, vec![(4, 3)])],
        ];
        let terms = couple(&factors);
        assert!(terms.len() <= 5);
        let mut marg: BTreeMap<Arc, f64> = BTreeMap::new();
        for (w, arcs) in &terms {
            assert_eq!(arcs.len(), 2);
            for &a in arcs {
                *marg.entry(a).or_default() += w;
            }
        }
        for (a, want) in [((0, 1), 0.5), ((0, 2), 0.5), ((1, 3), 0.2), ((2, 3), 0.3), ((4, 3), 0.5)] {
            assert!((marg[&a] - want).abs() < 1e-12, "{a:?}");
        }
    }
}
