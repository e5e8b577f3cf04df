//! Max-flow/min-cut (Dinic) and min-cost circulation with lower and upper
//! bounds (successive shortest paths after the `f = ℓ + f'` reduction).

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::instance::{ArcVector, Cut};

const EPS: f64 = 1e-12;
const FEAS_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowArc {
    pub tail: usize,
    pub head: usize,
    pub capacity: f64,
    pub cost: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct FlowNetwork {
    pub n: usize,
    pub arcs: Vec<FlowArc>,
    pub source: usize,
    pub sink: usize,
}

impl FlowNetwork {
    pub fn new(n: usize, source: usize, sink: usize) -> Self {
        Self { n, arcs: Vec::new(), source, sink }
    }

    pub fn add_arc(&mut self, tail: usize, head: usize, capacity: f64) {
        debug_assert!(capacity >= 0.0);
        self.arcs.push(FlowArc { tail, head, capacity, cost: None });
    }

    /// One arc per entry of `x`, capacity equal to the weight.
    pub fn from_arc_vector(n: usize, x: &ArcVector, source: usize, sink: usize) -> Self {
        let mut net = Self::new(n, source, sink);
        for ((u, v), w) in x.iter() {
            net.add_arc(u, v, w);
        }
        net
    }
}

#[derive(Clone, Debug)]
pub struct MaxFlow {
    pub value: f64,
    /// Source side of a minimum cut: the vertices reachable in the final residual graph.
    pub mincut: Cut,
    /// Flow on each arc of the input network, in input order.
    pub flow: Vec<f64>,
}

struct Residual {
    head: Vec<usize>,
    cap: Vec<f64>,
    cost: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl Residual {
    fn new(n: usize) -> Self {
        Self { head: Vec::new(), cap: Vec::new(), cost: Vec::new(), adj: vec![Vec::new(); n] }
    }

    /// Returns the index of the forward half; the reverse half is `idx ^ 1`.
    fn add(&mut self, u: usize, v: usize, cap: f64, cost: f64) -> usize {
        let idx = self.head.len();
        self.head.push(v);
        self.cap.push(cap);
        self.cost.push(cost);
        self.adj[u].push(idx);
        self.head.push(u);
        self.cap.push(0.0);
        self.cost.push(-cost);
        self.adj[v].push(idx + 1);
        idx
    }

    fn reachable(&self, from: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.head[e];
                if !seen[v] && self.cap[e] > EPS {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    fn dinic(&mut self, s: usize, t: usize) -> f64 {
        let n = self.adj.len();
        let mut total = 0.0;
        loop {
            let mut level = vec![usize::MAX; n];
            level[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &e in &self.adj[u] {
                    let v = self.head[e];
                    if level[v] == usize::MAX && self.cap[e] > EPS {
                        level[v] = level[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            if level[t] == usize::MAX {
                return total;
            }
            let mut next = vec![0usize; n];
            loop {
                let pushed = self.blocking(s, t, f64::INFINITY, &level, &mut next);
                if pushed <= EPS {
                    break;
                }
                total += pushed;
            }
        }
    }

    fn blocking(&mut self, u: usize, t: usize, limit: f64, level: &[usize], next: &mut [usize]) -> f64 {
        if u == t {
            return limit;
        }
        while next[u] < self.adj[u].len() {
            let e = self.adj[u][next[u]];
            let v = self.head[e];
            if self.cap[e] > EPS && level[v] == level[u].wrapping_add(1) {
                let pushed = self.blocking(v, t, limit.min(self.cap[e]), level, next);
                if pushed > EPS {
                    self.cap[e] -= pushed;
                    self.cap[e ^ 1] += pushed;
                    return pushed;
                }
            }
            next[u] += 1;
        }
        0.0
    }
}

/// Maximum `source → sink` flow and a source-side minimum cut.
///
/// Panics if `source == sink` or either is out of range.
pub fn max_flow(net: &FlowNetwork) -> MaxFlow {
    assert!(net.source < net.n && net.sink < net.n && net.source != net.sink);
    let mut res = Residual::new(net.n);
    let ids: Vec<usize> = net.arcs.iter().map(|a| res.add(a.tail, a.head, a.capacity, 0.0)).collect();
    let value = res.dinic(net.source, net.sink);
    let seen = res.reachable(net.source);
    let mask = seen.iter().enumerate().filter(|(_, &r)| r).fold(0u64, |m, (v, _)| m | 1 << v);
    let flow = ids.iter().zip(&net.arcs).map(|(&e, a)| (a.capacity - res.cap[e]).max(0.0)).collect();
    MaxFlow { value, mincut: Cut::new(mask, net.n), flow }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircArc {
    pub tail: usize,
    pub head: usize,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, Default)]
pub struct CirculationProblem {
    pub n: usize,
    pub arcs: Vec<CircArc>,
}

impl CirculationProblem {
    pub fn new(n: usize) -> Self {
        Self { n, arcs: Vec::new() }
    }

    pub fn add_arc(&mut self, tail: usize, head: usize, lower: f64, upper: f64, cost: f64) {
        self.arcs.push(CircArc { tail, head, lower, upper, cost });
    }

    /// Stand-in for an infinite upper bound: `Σ ℓ + n + 1`.
    pub fn unbounded_capacity(&self) -> f64 {
        self.arcs.iter().map(|a| a.lower).sum::<f64>() + self.n as f64 + 1.0
    }

    /// Hoffman's condition for one set: `ℓ(∂⁺(U)) ≤ u(∂⁻(U))`. Returns the slack.
    pub fn hoffman_slack(&self, mask: u64) -> f64 {
        let inside = |v: usize| mask >> v & 1 == 1;
        let lower_out: f64 = self.arcs.iter().filter(|a| inside(a.tail) && !inside(a.head)).map(|a| a.lower).sum();
        let upper_in: f64 = self.arcs.iter().filter(|a| !inside(a.tail) && inside(a.head)).map(|a| a.upper).sum();
        upper_in - lower_out
    }
}

#[derive(Clone, Debug)]
pub struct Circulation {
    /// Flow on each arc, in problem order.
    pub flow: Vec<f64>,
    pub cost: f64,
}

impl Circulation {
    /// Sums parallel arcs.
    pub fn to_arc_vector(&self, prob: &CirculationProblem) -> ArcVector {
        prob.arcs
            .iter()
            .zip(&self.flow)
            .filter(|(a, _)| a.tail != a.head)
            .map(|(a, &f)| ((a.tail, a.head), f))
            .collect()
    }
}

/// Minimum-cost circulation `f` with `ℓ ≤ f ≤ u`.
///
/// Flows are integral whenever all bounds are. On infeasibility the error
/// carries a set `W` with `ℓ(∂⁺(W)) > u(∂⁻(W))`.
pub fn min_cost_circulation(prob: &CirculationProblem) -> Result<Circulation> {
    let n = prob.n;
    for (i, a) in prob.arcs.iter().enumerate() {
        if a.tail >= n || a.head >= n {
            return Err(Error::InvalidArgument(format!("circulation arc {i} out of range")));
        }
        if !(a.lower >= 0.0 && a.lower <= a.upper && a.upper.is_finite() && a.cost.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "circulation arc {i} has bad bounds [{}, {}] or cost {}",
                a.lower, a.upper, a.cost
            )));
        }
    }
    let (src, snk) = (n, n + 1);
    let mut res = Residual::new(n + 2);
    let mut base = vec![0.0; prob.arcs.len()];
    let mut ids = Vec::with_capacity(prob.arcs.len());
    let mut excess = vec![0.0; n];
    for (i, a) in prob.arcs.iter().enumerate() {
        let room = a.upper - a.lower;
        // Negative-cost arcs start saturated so that every residual arc costs >= 0.
        let e = if a.cost < 0.0 {
            base[i] = a.upper;
            let e = res.add(a.tail, a.head, 0.0, a.cost);
            res.cap[e ^ 1] = room;
            e
        } else {
            base[i] = a.lower;
            res.add(a.tail, a.head, room, a.cost)
        };
        ids.push(e);
        excess[a.head] += base[i];
        excess[a.tail] -= base[i];
    }
    let mut demand = 0.0;
    for (v, &b) in excess.iter().enumerate() {
        if b > 0.0 {
            res.add(src, v, b, 0.0);
            demand += b;
        } else if b < 0.0 {
            res.add(v, snk, -b, 0.0);
        }
    }

    let mut shipped = 0.0;
    while let Some((path, bottleneck)) = shortest_path(&res, src, snk) {
        for &e in &path {
            res.cap[e] -= bottleneck;
            res.cap[e ^ 1] += bottleneck;
        }
        shipped += bottleneck;
    }
    if shipped < demand - FEAS_EPS * demand.max(1.0) {
        let seen = res.reachable(src);
        let mask = (0..n).filter(|&v| seen[v]).fold(0u64, |m, v| m | 1 << v);
        let witness = Cut::try_new(mask, n).map(|c| c.complement());
        return Err(Error::Infeasible { witness });
    }

    let flow: Vec<f64> = prob
        .arcs
        .iter()
        .zip(&ids)
        .map(|(a, &e)| {
            let room = a.upper - a.lower;
            if a.cost < 0.0 {
                a.lower + res.cap[e ^ 1].min(room)
            } else {
                a.lower + (room - res.cap[e]).max(0.0)
            }
        })
        .collect();
    let cost = prob.arcs.iter().zip(&flow).map(|(a, f)| a.cost * f).sum();
    Ok(Circulation { flow, cost })
}

/// Bellman–Ford (queue based) over residual arcs with positive capacity.
fn shortest_path(res: &Residual, s: usize, t: usize) -> Option<(Vec<usize>, f64)> {
    let n = res.adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut via = vec![usize::MAX; n];
    let mut queued = vec![false; n];
    let mut queue = VecDeque::from([s]);
    dist[s] = 0.0;
    queued[s] = true;
    while let Some(u) = queue.pop_front() {
        queued[u] = false;
        for &e in &res.adj[u] {
            if res.cap[e] <= EPS {
                continue;
            }
            let v = res.head[e];
            let nd = dist[u] + res.cost[e];
            if nd < dist[v] - 1e-12 {
                dist[v] = nd;
                via[v] = e;
                if !queued[v] {
                    queued[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    if dist[t].is_infinite() {
        return None;
    }
    let mut path = Vec::new();
    let mut v = t;
    let mut bottleneck = f64::INFINITY;
    while v != s {
        let e = via[v];
        path.push(e);
        bottleneck = bottleneck.min(res.cap[e]);
        v = res.head[e ^ 1];
    }
    Some((path, bottleneck))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::gap_instance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_min_cut(net: &FlowNetwork) -> f64 {
        let mut best = f64::INFINITY;
        for mask in 0u64..(1 << net.n) {
            if mask >> net.source & 1 == 0 || mask >> net.sink & 1 == 1 {
                continue;
            }
            let cap: f64 = net
                .arcs
                .iter()
                .filter(|a| mask >> a.tail & 1 == 1 && mask >> a.head & 1 == 0)
                .map(|a| a.capacity)
                .sum();
            best = best.min(cap);
        }
        best
    }

    #[test]
    fn single_arc() {
        let mut net = FlowNetwork::new(2, 0, 1);
        net.add_arc(0, 1, 1.0);
        let mf = max_flow(&net);
        assert_eq!(mf.value, 1.0);
        assert_eq!(mf.mincut.members(), vec![0]);
    }

    #[test]
    fn unreachable_sink_has_zero_flow() {
        let mut net = FlowNetwork::new(3, 0, 2);
        net.add_arc(0, 1, 3.0);
        let mf = max_flow(&net);
        assert_eq!(mf.value, 0.0);
        assert_eq!(mf.mincut.members(), vec![0, 1]);
    }

    #[test]
    fn gap_one_min_cut_is_source() {
        let (inst, x) = gap_instance(1).unwrap();
        let net = FlowNetwork::from_arc_vector(inst.n(), &x, inst.s(), inst.t());
        let mf = max_flow(&net);
        assert!((mf.value - 1.0).abs() < 1e-12);
        assert!((brute_min_cut(&net) - 1.0).abs() < 1e-12);
        assert_eq!(mf.mincut.members(), vec![0]);
    }

    #[test]
    fn random_networks_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let n = 10;
            let mut net = FlowNetwork::new(n, 0, n - 1);
            for u in 0..n {
                for v in 0..n {
                    if u != v && rng.gen_bool(0.35) {
                        net.add_arc(u, v, rng.gen_range(0..20) as f64 / 4.0);
                    }
                }
            }
            let mf = max_flow(&net);
            assert!((mf.value - brute_min_cut(&net)).abs() < 1e-9);
            let cut_cap: f64 = net
                .arcs
                .iter()
                .filter(|a| mf.mincut.contains(a.tail) && !mf.mincut.contains(a.head))
                .map(|a| a.capacity)
                .sum();
            assert!((cut_cap - mf.value).abs() < 1e-9);
        }
    }

    #[test]
    fn forced_three_cycle() {
        let mut p = CirculationProblem::new(3);
        p.add_arc(0, 1, 1.0, 1.0, 1.0);
        p.add_arc(1, 2, 1.0, 1.0, 1.0);
        p.add_arc(2, 0, 1.0, 1.0, 1.0);
        let c = min_cost_circulation(&p).unwrap();
        assert_eq!(c.flow, vec![1.0, 1.0, 1.0]);
        assert_eq!(c.cost, 3.0);
    }

    #[test]
    fn zero_lower_bounds_give_zero_circulation() {
        let mut p = CirculationProblem::new(3);
        p.add_arc(0, 1, 0.0, 5.0, 2.0);
        p.add_arc(1, 0, 0.0, 5.0, 0.0);
        p.add_arc(1, 2, 0.0, 5.0, 1.0);
        let c = min_cost_circulation(&p).unwrap();
        assert!(c.flow.iter().all(|&f| f == 0.0));
        assert_eq!(c.cost, 0.0);
    }

    #[test]
    fn negative_cost_cycle_is_saturated() {
        let mut p = CirculationProblem::new(2);
        p.add_arc(0, 1, 0.0, 3.0, -2.0);
        p.add_arc(1, 0, 0.0, 2.0, 1.0);
        let c = min_cost_circulation(&p).unwrap();
        assert_eq!(c.flow, vec![2.0, 2.0]);
        assert_eq!(c.cost, -2.0);
    }

    #[test]
    fn infeasible_reports_hoffman_witness() {
        let mut p = CirculationProblem::new(3);
        p.add_arc(0, 1, 2.0, 2.0, 0.0);
        p.add_arc(1, 2, 0.0, 5.0, 0.0);
        p.add_arc(2, 0, 0.0, 1.0, 0.0);
        match min_cost_circulation(&p) {
            Err(Error::Infeasible { witness: Some(w) }) => assert!(p.hoffman_slack(w.mask()) < 0.0),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    fn lp_oracle(p: &CirculationProblem) -> Option<f64> {
        use crate::lp::simplex::{solve, LinearProgram, Sense};
        let mut lp = LinearProgram::new(p.arcs.iter().map(|a| a.cost).collect());
        for (j, a) in p.arcs.iter().enumerate() {
            lp.add_row(vec![(j, 1.0)], Sense::Ge, a.lower);
            lp.add_row(vec![(j, 1.0)], Sense::Le, a.upper);
        }
        for v in 0..p.n {
            let mut row = Vec::new();
            for (j, a) in p.arcs.iter().enumerate() {
                if a.head == v && a.tail != v {
                    row.push((j, 1.0));
                } else if a.tail == v && a.head != v {
                    row.push((j, -1.0));
                }
            }
            lp.add_row(row, Sense::Eq, 0.0);
        }
        solve::<f64>(&lp).ok().map(|s| s.value)
    }

    #[test]
    fn random_circulations_match_lp_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut feasible = 0;
        for _ in 0..60 {
            let n = 8;
            let mut p = CirculationProblem::new(n);
            for u in 0..n {
                for v in 0..n {
                    if u != v && rng.gen_bool(0.3) {
                        let lower = if rng.gen_bool(0.15) { 1.0 } else { 0.0 };
                        let upper = lower + rng.gen_range(0..4) as f64;
                        p.add_arc(u, v, lower, upper, rng.gen_range(-3..10) as f64);
                    }
                }
            }
            match (min_cost_circulation(&p), lp_oracle(&p)) {
                (Ok(c), Some(opt)) => {
                    feasible += 1;
                    assert!((c.cost - opt).abs() < 1e-7, "ssp {} vs lp {opt}", c.cost);
                    for (a, &f) in p.arcs.iter().zip(&c.flow) {
                        assert!(f >= a.lower && f <= a.upper && f.fract() == 0.0);
                    }
                    let mut bal = vec![0.0; n];
                    for (a, &f) in p.arcs.iter().zip(&c.flow) {
                        bal[a.head] += f;
                        bal[a.tail] -= f;
                    }
                    assert!(bal.iter().all(|&b| b == 0.0));
                }
                (Err(Error::Infeasible { witness }), None) => {
                    let w = witness.expect("witness");
                    assert!(p.hoffman_slack(w.mask()) < 0.0);
                }
                (a, b) => panic!("disagreement: {a:?} vs {b:?}"),
            }
        }
        assert!(feasible > 10);
    }
}
