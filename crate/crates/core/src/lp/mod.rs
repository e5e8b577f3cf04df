//! The subtour-elimination LP for s-t paths, solved by row generation.
//!
//! The restricted master starts from the degree equalities; violated cut
//! constraints `x(∂⁺(U)) ≥ 1` (`s ∈ U ⊊ V`) are found with one max-flow per
//! target vertex and added until none remain.

pub mod simplex;

use std::collections::BTreeSet;

use num::BigRational;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::{max_flow, FlowNetwork};
use crate::instance::{Arc, ArcVector, Cut, DirectedMetric};
use simplex::{Field, LinearProgram, Sense};

pub const DEFAULT_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Arithmetic {
    Float,
    Rational,
}

#[derive(Clone, Debug)]
pub struct LpOptions {
    pub tol: f64,
    pub arithmetic: Arithmetic,
    pub max_rounds: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, arithmetic: Arithmetic::Float, max_rounds: 1000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LpSolution {
    pub x: ArcVector,
    pub value: f64,
    pub active_cuts: Vec<Cut>,
    pub iterations: usize,
    /// Exact optimum as `p/q` when solved in rational arithmetic.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_value: Option<String>,
}

/// Arcs that can carry LP mass: nothing enters `s` or leaves `t`.
fn lp_arcs(inst: &DirectedMetric) -> Vec<Arc> {
    let (n, s, t) = (inst.n(), inst.s(), inst.t());
    (0..n).flat_map(|u| (0..n).map(move |v| (u, v))).filter(|&(u, v)| u != v && u != t && v != s).collect()
}

fn cut_row(arcs: &[Arc], cut: &Cut) -> Vec<(usize, f64)> {
    arcs.iter().enumerate().filter(|(_, &(u, v))| cut.contains(u) && !cut.contains(v)).map(|(j, _)| (j, 1.0)).collect()
}

pub fn solve_subtour_lp(inst: &DirectedMetric, opts: &LpOptions) -> Result<LpSolution> {
    if !(opts.tol > 0.0 && opts.tol <= 1e-4) {
        return Err(Error::InvalidArgument(format!("tol must lie in (0, 1e-4], got {}", opts.tol)));
    }
    match opts.arithmetic {
        Arithmetic::Float => row_generation::<f64>(inst, opts),
        Arithmetic::Rational => row_generation::<BigRational>(inst, opts),
    }
}

fn row_generation<T: Field + std::fmt::Display>(inst: &DirectedMetric, opts: &LpOptions) -> Result<LpSolution> {
    let (n, s, t) = (inst.n(), inst.s(), inst.t());
    let arcs = lp_arcs(inst);
    let mut master = LinearProgram::new(arcs.iter().map(|&(u, v)| inst.cost(u, v)).collect());
    for v in 0..n {
        if v != t {
            let row = arcs.iter().enumerate().filter(|(_, a)| a.0 == v).map(|(j, _)| (j, 1.0)).collect();
            master.add_row(row, Sense::Eq, 1.0);
        }
        if v != s {
            let row = arcs.iter().enumerate().filter(|(_, a)| a.1 == v).map(|(j, _)| (j, 1.0)).collect();
            master.add_row(row, Sense::Eq, 1.0);
        }
    }

    let mut active: Vec<Cut> = Vec::new();
    let mut seen: BTreeSet<u64> = BTreeSet::new();
    let mut last_value = f64::NEG_INFINITY;
    for round in 1..=opts.max_rounds {
        let sol = simplex::solve::<T>(&master)?;
        let x: ArcVector = arcs.iter().zip(&sol.x).map(|(&a, v)| (a, v.to_f64())).filter(|&(_, v)| v > 1e-12).collect();
        let value = sol.value.to_f64();
        debug_assert!(value >= last_value - 1e-6, "master objective decreased: {last_value} -> {value}");
        last_value = value;

        let violated = separate_all(inst, &x, opts.tol);
        let fresh: Vec<Cut> = violated.into_iter().filter(|c| seen.insert(c.mask())).collect();
        if fresh.is_empty() {
            if let Some(c) = separate(inst, &x, opts.tol) {
                return Err(Error::Invariant(format!("generated cut {:?} still violated after re-solve", c.members())));
            }
            return Ok(LpSolution {
                x,
                value,
                active_cuts: active,
                iterations: round,
                exact_value: T::EXACT.then(|| sol.value.to_string()),
            });
        }
        if round == opts.max_rounds {
            return Err(Error::IterationCap { iterations: round, violated: fresh[0] });
        }
        for cut in fresh {
            master.add_row(cut_row(&arcs, &cut), Sense::Ge, 1.0);
            active.push(cut);
        }
    }
    unreachable!("loop returns on its last round")
}

/// Max-flow values from `s` to every other vertex, with their min cuts.
fn flows_from_source(inst: &DirectedMetric, x: &ArcVector) -> Vec<(f64, Cut)> {
    let (n, s) = (inst.n(), inst.s());
    (0..n)
        .filter(|&v| v != s)
        .map(|v| {
            let mf = max_flow(&FlowNetwork::from_arc_vector(n, x, s, v));
            (mf.value, mf.mincut)
        })
        .collect()
}

/// The most violated cut `s ∈ U ⊊ V` with `x(∂⁺(U)) < 1 - tol`, if any.
pub fn separate(inst: &DirectedMetric, x: &ArcVector, tol: f64) -> Option<Cut> {
    flows_from_source(inst, x)
        .into_iter()
        .filter(|(val, _)| *val < 1.0 - tol)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
}

/// Every distinct violated min cut found by the per-target flows.
pub fn separate_all(inst: &DirectedMetric, x: &ArcVector, tol: f64) -> Vec<Cut> {
    let mut found: Vec<(f64, Cut)> = flows_from_source(inst, x).into_iter().filter(|(v, _)| *v < 1.0 - tol).collect();
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut seen = BTreeSet::new();
    found.into_iter().filter(|(_, c)| seen.insert(c.mask())).map(|(_, c)| c).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ConstraintClass {
    /// Arcs out of `s` sum to 1.
    SourceOut,
    /// Arcs into `t` sum to 1.
    SinkIn,
    /// Nothing enters `s`.
    SourceIn,
    /// Nothing leaves `t`.
    SinkOut,
    /// Out-degree 1 at interior vertices.
    VertexOut,
    /// In-degree 1 at interior vertices.
    VertexIn,
    /// `x(∂⁺(U)) ≥ 1` for `s ∈ U ⊊ V`.
    Cut,
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub class: ConstraintClass,
    pub worst: f64,
    pub witness: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violated(&self, class: ConstraintClass) -> Option<&Violation> {
        self.violations.iter().find(|v| v.class == class)
    }
}

/// Checks every constraint class of the LP, keeping the worst offender per class.
pub fn check_feasible(inst: &DirectedMetric, x: &ArcVector, tol: f64) -> FeasibilityReport {
    let (n, s, t) = (inst.n(), inst.s(), inst.t());
    let mut report = FeasibilityReport::default();
    let mut note = |class: ConstraintClass, dev: f64, witness: String| {
        if dev > tol {
            match report.violations.iter_mut().find(|v| v.class == class) {
                Some(v) if v.worst >= dev => {}
                Some(v) => {
                    v.worst = dev;
                    v.witness = witness;
                }
                None => report.violations.push(Violation { class, worst: dev, witness }),
            }
        }
    };
    note(ConstraintClass::SourceOut, (x.out_degree(s) - 1.0).abs(), format!("vertex {s}"));
    note(ConstraintClass::SinkIn, (x.in_degree(t) - 1.0).abs(), format!("vertex {t}"));
    note(ConstraintClass::SourceIn, x.in_degree(s), format!("vertex {s}"));
    note(ConstraintClass::SinkOut, x.out_degree(t), format!("vertex {t}"));
    for v in (0..n).filter(|&v| v != s && v != t) {
        note(ConstraintClass::VertexOut, (x.out_degree(v) - 1.0).abs(), format!("vertex {v}"));
        note(ConstraintClass::VertexIn, (x.in_degree(v) - 1.0).abs(), format!("vertex {v}"));
    }
    if let Some(cut) = separate(inst, x, tol) {
        note(ConstraintClass::Cut, 1.0 - x.out_of(&cut), format!("{:?}", cut.members()));
    }
    report.violations.sort_by_key(|v| v.class);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gap_instance, parse_instance, random_instance, RandomModel};

    fn three_vertex() -> DirectedMetric {
        // s=0, a=1, t=2; only s->a and a->t are cheap.
        parse_instance("atspp 1\nn 3\ns 0\nt 2\n0 1 2\n10 0 1\n10 10 0\n").unwrap()
    }

    #[test]
    fn forced_path() {
        let inst = three_vertex();
        let sol = solve_subtour_lp(&inst, &LpOptions::default()).unwrap();
        assert_eq!(sol.x.get(0, 1), 1.0);
        assert_eq!(sol.x.get(1, 2), 1.0);
        assert_eq!(sol.x.len(), 2);
        assert!((sol.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn gap_family_lp_bound() {
        for r in 1..=5 {
            let (inst, x) = gap_instance(r).unwrap();
            let sol = solve_subtour_lp(&inst, &LpOptions::default()).unwrap();
            assert!(sol.value <= (r + 1) as f64 + 1e-6, "r={r} value {}", sol.value);
            assert!(check_feasible(&inst, &sol.x, 1e-6).is_feasible());
            assert!(check_feasible(&inst, &x, 1e-9).is_feasible());
            assert!(separate(&inst, &x, 1e-9).is_none());
        }
    }

    #[test]
    fn rational_matches_float() {
        for seed in 0..3 {
            let inst = random_instance(7, seed, RandomModel::ShortestPathClosure).unwrap();
            let f = solve_subtour_lp(&inst, &LpOptions::default()).unwrap();
            let opts = LpOptions { arithmetic: Arithmetic::Rational, ..LpOptions::default() };
            let r = solve_subtour_lp(&inst, &opts).unwrap();
            assert!((f.value - r.value).abs() < 1e-6);
            assert!(r.exact_value.is_some());
        }
    }

    #[test]
    fn zero_vector_violates_every_degree() {
        let inst = three_vertex();
        let rep = check_feasible(&inst, &ArcVector::new(), 1e-9);
        for class in
            [ConstraintClass::SourceOut, ConstraintClass::SinkIn, ConstraintClass::VertexOut, ConstraintClass::VertexIn]
        {
            assert!(rep.violated(class).is_some(), "{class:?}");
        }
        assert!(rep.violated(ConstraintClass::Cut).is_some());
    }

    #[test]
    fn hamiltonian_path_indicator_is_not_separated() {
        let inst = random_instance(6, 3, RandomModel::EuclideanPerturbed).unwrap();
        let x: ArcVector = [(0, 2), (2, 1), (1, 4), (4, 3), (3, 5)].into_iter().map(|a| (a, 1.0)).collect();
        assert!(separate(&inst, &x, 1e-9).is_none());
        assert!(check_feasible(&inst, &x, 1e-9).is_feasible());
    }

    #[test]
    fn disjoint_cycles_are_separated() {
        // s=0 -> 1 -> t=5 is a path; {2,3,4} is a separate 3-cycle.
        let inst = random_instance(6, 0, RandomModel::ShortestPathClosure).unwrap();
        let x: ArcVector = [(0, 1), (1, 5), (2, 3), (3, 4), (4, 2)].into_iter().map(|a| (a, 1.0)).collect();
        let cut = separate(&inst, &x, 1e-9).expect("cycle must be cut off");
        assert_eq!(cut.members(), vec![0, 1, 5]);
        // Exhaustive: it is the only violated s-cut.
        let violated: Vec<u64> =
            (1u64..(1 << 6) - 1).filter(|m| m & 1 == 1 && x.out_of(&Cut::new(*m, 6)) < 1.0 - 1e-9).collect();
        assert_eq!(violated, vec![0b100011]);
    }
}
