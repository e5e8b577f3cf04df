//! Problem instances: the directed metric, sparse arc vectors, vertex cuts,
//! the text format, metric completion and the instance generators.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Vertex sets are stored as `u64` bitmasks, which caps instances at 64 vertices.
pub const MAX_VERTICES: usize = 64;

const TRIANGLE_EPS: f64 = 1e-9;

/// A vertex subset `U` with `∅ ⊊ U ⊊ V`, stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cut {
    mask: u64,
    n: usize,
}

impl Cut {
    /// Panics when the mask is empty, full, or has bits at or above `n`.
    pub fn new(mask: u64, n: usize) -> Self {
        Self::try_new(mask, n).expect("cut must be a nonempty proper subset")
    }

    pub fn try_new(mask: u64, n: usize) -> Option<Self> {
        let full = full_mask(n);
        (n <= MAX_VERTICES && mask != 0 && mask & !full == 0 && mask != full).then_some(Cut { mask, n })
    }

    pub fn from_members(members: &[usize], n: usize) -> Option<Self> {
        let mask = members.iter().fold(0u64, |m, &v| m | (1u64 << v));
        Self::try_new(mask, n)
    }

    pub fn singleton(v: usize, n: usize) -> Self {
        Self::new(1u64 << v, n)
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn contains(&self, v: usize) -> bool {
        self.mask >> v & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn members(&self) -> Vec<usize> {
        bits(self.mask).collect()
    }

    pub fn complement(&self) -> Cut {
        Cut { mask: full_mask(self.n) & !self.mask, n: self.n }
    }

    /// `s ∈ U` and `t ∉ U`.
    pub fn separates(&self, s: usize, t: usize) -> bool {
        self.contains(s) && !self.contains(t)
    }

    /// Two cuts cross when each has a vertex the other lacks.
    pub fn crosses(&self, other: &Cut) -> bool {
        self.mask & !other.mask != 0 && other.mask & !self.mask != 0
    }

    pub fn is_subset_of(&self, other: &Cut) -> bool {
        self.mask & !other.mask == 0
    }
}

impl std::fmt::Debug for Cut {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Cut{:?}", self.members())
    }
}

impl Serialize for Cut {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.len()))?;
        for v in bits(self.mask) {
            seq.serialize_element(&v)?;
        }
        seq.end()
    }
}

pub fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Iterates the set bits of a mask in increasing order.
pub fn bits(mut mask: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let v = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(v)
        }
    })
}

/// A directed arc `(tail, head)`.
pub type Arc = (usize, usize);

/// Sparse nonnegative weights on directed arcs; absent arcs weigh zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ArcVector {
    entries: BTreeMap<Arc, f64>,
}

impl ArcVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.entries.get(&(u, v)).copied().unwrap_or(0.0)
    }

    /// Sets an entry. Zero removes it; negative or self-loop entries panic.
    pub fn set(&mut self, u: usize, v: usize, value: f64) {
        assert!(u != v, "self-loop ({u},{v}) in arc vector");
        assert!(value >= 0.0 && value.is_finite(), "bad arc weight {value} on ({u},{v})");
        if value == 0.0 {
            self.entries.remove(&(u, v));
        } else {
            self.entries.insert((u, v), value);
        }
    }

    pub fn add(&mut self, u: usize, v: usize, delta: f64) {
        let cur = self.get(u, v);
        self.set(u, v, cur + delta);
    }

    pub fn iter(&self) -> impl Iterator<Item = (Arc, f64)> + '_ {
        self.entries.iter().map(|(&a, &w)| (a, w))
    }

    pub fn support(&self) -> impl Iterator<Item = Arc> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn cost(&self, inst: &DirectedMetric) -> f64 {
        self.iter().map(|((u, v), w)| w * inst.cost(u, v)).sum()
    }

    /// Weight on arcs from `from` to `to` (both bitmasks).
    pub fn between(&self, from: u64, to: u64) -> f64 {
        self.iter().filter(|&((u, v), _)| from >> u & 1 == 1 && to >> v & 1 == 1).map(|(_, w)| w).sum()
    }

    /// `w(∂⁺(U))`
    pub fn out_of(&self, cut: &Cut) -> f64 {
        self.between(cut.mask(), cut.complement().mask())
    }

    /// `w(∂⁻(U))`
    pub fn inflow(&self, cut: &Cut) -> f64 {
        self.between(cut.complement().mask(), cut.mask())
    }

    pub fn out_degree(&self, v: usize) -> f64 {
        self.iter().filter(|&((a, _), _)| a == v).map(|(_, w)| w).sum()
    }

    pub fn in_degree(&self, v: usize) -> f64 {
        self.iter().filter(|&((_, b), _)| b == v).map(|(_, w)| w).sum()
    }

    /// Drops entries at or below `eps`.
    pub fn pruned(&self, eps: f64) -> ArcVector {
        self.iter().filter(|&(_, w)| w > eps).collect()
    }

    pub fn max_vertex(&self) -> Option<usize> {
        self.support().map(|(u, v)| u.max(v)).max()
    }
}

impl FromIterator<(Arc, f64)> for ArcVector {
    fn from_iter<I: IntoIterator<Item = (Arc, f64)>>(iter: I) -> Self {
        let mut out = ArcVector::new();
        for ((u, v), w) in iter {
            out.add(u, v, w);
        }
        out
    }
}

impl Serialize for ArcVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.len()))?;
        for ((u, v), w) in self.iter() {
            seq.serialize_element(&(u, v, w))?;
        }
        seq.end()
    }
}

/// A complete asymmetric metric with distinguished endpoints `s != t`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectedMetric {
    n: usize,
    names: Option<Vec<String>>,
    cost: Vec<f64>,
    s: usize,
    t: usize,
}

impl DirectedMetric {
    /// Validates shape, endpoints, nonnegativity, zero diagonal and the
    /// triangle inequality.
    pub fn new(cost: Vec<Vec<f64>>, s: usize, t: usize) -> Result<Self> {
        let inst = Self::unchecked(cost, s, t)?;
        inst.check_triangle()?;
        Ok(inst)
    }

    fn unchecked(rows: Vec<Vec<f64>>, s: usize, t: usize) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::InvalidInstance(format!("need at least 2 vertices, got {n}")));
        }
        if n > MAX_VERTICES {
            return Err(Error::TooLarge { n, limit: MAX_VERTICES, what: "instances" });
        }
        if s >= n || t >= n {
            return Err(Error::InvalidInstance(format!("endpoint out of range (s={s}, t={t}, n={n})")));
        }
        if s == t {
            return Err(Error::InvalidInstance("s and t must differ".into()));
        }
        let mut cost = Vec::with_capacity(n * n);
        for (u, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInstance(format!("row length {} for vertex {u}, expected {n}", row.len())));
            }
            for (v, c) in row.into_iter().enumerate() {
                if !c.is_finite() || c < 0.0 {
                    return Err(Error::InvalidInstance(format!("negative or non-finite cost {c} on ({u},{v})")));
                }
                if u == v && c != 0.0 {
                    return Err(Error::InvalidInstance(format!("nonzero diagonal at {u}")));
                }
                cost.push(c);
            }
        }
        Ok(Self { n, names: None, cost, s, t })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.n);
        self.names = Some(names);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn name(&self, v: usize) -> String {
        match &self.names {
            Some(names) => names[v].clone(),
            None => v.to_string(),
        }
    }

    #[inline]
    pub fn cost(&self, u: usize, v: usize) -> f64 {
        self.cost[u * self.n + v]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.cost.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn max_cost(&self) -> f64 {
        self.cost.iter().copied().fold(0.0, f64::max)
    }

    /// Exhaustive `O(n³)` check; returns the first violating triple.
    pub fn check_triangle(&self) -> Result<()> {
        let n = self.n;
        for u in 0..n {
            for v in 0..n {
                for w in 0..n {
                    let direct = self.cost(u, w);
                    let via = self.cost(u, v) + self.cost(v, w);
                    if direct > via + TRIANGLE_EPS * via.max(1.0) {
                        return Err(Error::TriangleViolation { u, v, w, direct, via });
                    }
                }
            }
        }
        Ok(())
    }

    /// Total cost of the vertex sequence.
    pub fn path_cost(&self, path: &[usize]) -> f64 {
        path.windows(2).map(|w| self.cost(w[0], w[1])).sum()
    }

    /// Renders the instance in the `atspp 1` text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(names) = &self.names {
            let _ = writeln!(out, "# vertices: {}", names.join(" "));
        }
        let _ = writeln!(out, "atspp 1");
        let _ = writeln!(out, "n {}", self.n);
        let _ = writeln!(out, "s {}", self.s);
        let _ = writeln!(out, "t {}", self.t);
        for row in self.cost.chunks(self.n) {
            let line: Vec<String> = row.iter().map(|c| format!("{c}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

/// Parses the `atspp 1` format, rejecting triangle-inequality violations.
pub fn parse_instance(text: &str) -> Result<DirectedMetric> {
    parse_instance_with(text, false)
}

/// With `complete`, the matrix is replaced by its shortest-path closure
/// instead of being rejected when the triangle inequality fails.
pub fn parse_instance_with(text: &str, complete: bool) -> Result<DirectedMetric> {
    let mut lines =
        text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let mut header = |key: &str| -> Result<(usize, String)> {
        let (line, l) = lines.next().ok_or(Error::Parse { line: 0, msg: format!("missing header line `{key}`") })?;
        let mut parts = l.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(v), None) if k == key => Ok((line, v.to_string())),
            _ => Err(Error::Parse { line, msg: format!("malformed header, expected `{key} <value>`, got `{l}`") }),
        }
    };

    let (line, version) = header("atspp")?;
    if version != "1" {
        return Err(Error::Parse { line, msg: format!("unsupported format version {version}") });
    }
    let mut int_header = |key: &str| -> Result<usize> {
        let (line, v) = header(key)?;
        v.parse().map_err(|_| Error::Parse { line, msg: format!("malformed header `{key}`: `{v}` is not an index") })
    };
    let n = int_header("n")?;
    let s = int_header("s")?;
    let t = int_header("t")?;
    if n < 2 {
        return Err(Error::Parse { line: 0, msg: format!("n must be at least 2, got {n}") });
    }

    let mut rows = Vec::with_capacity(n);
    for (line, l) in lines.by_ref() {
        let row: Vec<f64> = l
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("bad cost `{tok}`") }))
            .collect::<Result<_>>()?;
        if row.len() != n {
            return Err(Error::Parse { line, msg: format!("row length {} != n = {n}", row.len()) });
        }
        if let Some(c) = row.iter().find(|c| **c < 0.0 || !c.is_finite()) {
            return Err(Error::Parse { line, msg: format!("negative or non-finite cost {c}") });
        }
        rows.push(row);
        if rows.len() == n {
            break;
        }
    }
    if rows.len() != n {
        return Err(Error::Parse { line: 0, msg: format!("matrix is not square: {} rows for n = {n}", rows.len()) });
    }
    if let Some((line, _)) = lines.next() {
        return Err(Error::Parse { line, msg: "trailing data after matrix".into() });
    }

    let names = text
        .lines()
        .find_map(|l| l.trim().strip_prefix("# vertices:"))
        .map(|rest| rest.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|names| names.len() == n);

    let inst = if complete {
        let arcs = (0..n)
            .flat_map(|u| (0..n).map(move |v| (u, v)))
            .filter(|&(u, v)| u != v)
            .map(|(u, v)| (u, v, rows[u][v]))
            .collect();
        metric_completion(&PartialDigraph { n, s, t, arcs })?
    } else {
        DirectedMetric::new(rows, s, t)?
    };
    Ok(match names {
        Some(names) => inst.with_names(names),
        None => inst,
    })
}

/// A digraph with costs on some arcs, the input to [`metric_completion`].
#[derive(Clone, Debug)]
pub struct PartialDigraph {
    pub n: usize,
    pub s: usize,
    pub t: usize,
    pub arcs: Vec<(usize, usize, f64)>,
}

/// Shortest-path closure. Pairs with no path get `BIG = n * max_cost + 1`,
/// strictly above every finite shortest-path distance.
pub fn metric_completion(g: &PartialDigraph) -> Result<DirectedMetric> {
    let n = g.n;
    if n < 2 || g.s >= n || g.t >= n || g.s == g.t {
        return Err(Error::InvalidInstance(format!("bad digraph (n={n}, s={}, t={})", g.s, g.t)));
    }
    let mut dist = vec![vec![f64::INFINITY; n]; n];
    for (v, row) in dist.iter_mut().enumerate() {
        row[v] = 0.0;
    }
    let mut max_cost: f64 = 0.0;
    for &(u, v, c) in &g.arcs {
        if u >= n || v >= n {
            return Err(Error::InvalidInstance(format!("arc ({u},{v}) out of range")));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidInstance(format!("bad cost {c} on ({u},{v})")));
        }
        if u != v {
            dist[u][v] = dist[u][v].min(c);
            max_cost = max_cost.max(c);
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = dist[i][k];
            if dik.is_infinite() {
                continue;
            }
            for j in 0..n {
                let via = dik + dist[k][j];
                if via < dist[i][j] {
                    dist[i][j] = via;
                }
            }
        }
    }
    if dist[g.s][g.t].is_infinite() {
        return Err(Error::Unreachable { target: g.t });
    }
    let big = n as f64 * max_cost + 1.0;
    for row in dist.iter_mut() {
        for d in row.iter_mut() {
            if d.is_infinite() {
                *d = big;
            }
        }
    }
    DirectedMetric::new(dist, g.s, g.t)
}

/// Vertex layout of the gap family: `s = 0`, `u_i = i`, `v_i = r + i`, `t = 2r + 1`.
pub struct GapLayout {
    pub r: usize,
}

impl GapLayout {
    pub fn s(&self) -> usize {
        0
    }
    pub fn u(&self, i: usize) -> usize {
        debug_assert!((1..=self.r).contains(&i));
        i
    }
    pub fn v(&self, i: usize) -> usize {
        debug_assert!((1..=self.r).contains(&i));
        self.r + i
    }
    pub fn t(&self) -> usize {
        2 * self.r + 1
    }
    pub fn n(&self) -> usize {
        2 * self.r + 2
    }
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["s".to_string()];
        names.extend((1..=self.r).map(|i| format!("u{i}")));
        names.extend((1..=self.r).map(|i| format!("v{i}")));
        names.push("t".into());
        names
    }
}

/// The two-chain digraph `G_r`: unit arcs out of `s`, into `t` and down
/// each chain; free arcs up each chain and across from `u_1`/`v_1` to the
/// far end of the other chain.
pub fn gap_graph(r: usize) -> Result<PartialDigraph> {
    if r < 1 {
        return Err(Error::InvalidArgument(format!("gap family needs r >= 1, got {r}")));
    }
    let g = GapLayout { r };
    let mut arcs = vec![
        (g.s(), g.u(1), 1.0),
        (g.s(), g.v(1), 1.0),
        (g.u(r), g.t(), 1.0),
        (g.v(r), g.t(), 1.0),
        (g.u(1), g.v(r), 0.0),
        (g.v(1), g.u(r), 0.0),
    ];
    for i in 1..r {
        arcs.push((g.u(i + 1), g.u(i), 1.0));
        arcs.push((g.v(i + 1), g.v(i), 1.0));
        arcs.push((g.u(i), g.u(i + 1), 0.0));
        arcs.push((g.v(i), g.v(i + 1), 0.0));
    }
    Ok(PartialDigraph { n: g.n(), s: g.s(), t: g.t(), arcs })
}

/// The gap instance `F_r` (metric completion of `G_r`) and the
/// half-integral LP point placing 1/2 on every arc of `G_r`.
pub fn gap_instance(r: usize) -> Result<(DirectedMetric, ArcVector)> {
    let g = gap_graph(r)?;
    let inst = metric_completion(&g)?.with_names(GapLayout { r }.names());
    let x = g.arcs.iter().map(|&(u, v, _)| ((u, v), 0.5)).collect();
    Ok((inst, x))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RandomModel {
    /// Integer grid points, distances inflated by a random per-arc factor, then closed.
    EuclideanPerturbed,
    /// Random sparse arcs plus a random Hamiltonian cycle, then shortest-path closure.
    ShortestPathClosure,
}

impl std::str::FromStr for RandomModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" | "euclidean-perturbed" => Ok(RandomModel::EuclideanPerturbed),
            "closure" | "shortest-path-closure" => Ok(RandomModel::ShortestPathClosure),
            _ => Err(Error::InvalidArgument(format!("unknown random model `{s}`"))),
        }
    }
}

impl std::fmt::Display for RandomModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RandomModel::EuclideanPerturbed => "euclidean",
            RandomModel::ShortestPathClosure => "closure",
        })
    }
}

/// Deterministic in `(n, seed, model)`; costs are integers, `s = 0`, `t = n - 1`.
pub fn random_instance(n: usize, seed: u64, model: RandomModel) -> Result<DirectedMetric> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("random instance needs n >= 2, got {n}")));
    }
    if n > MAX_VERTICES {
        return Err(Error::TooLarge { n, limit: MAX_VERTICES, what: "instances" });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arcs = Vec::new();
    match model {
        RandomModel::EuclideanPerturbed => {
            let pts: Vec<(f64, f64)> =
                (0..n).map(|_| (rng.gen_range(0..=100) as f64, rng.gen_range(0..=100) as f64)).collect();
            for u in 0..n {
                for v in 0..n {
                    if u != v {
                        let d = ((pts[u].0 - pts[v].0).powi(2) + (pts[u].1 - pts[v].1).powi(2)).sqrt();
                        let factor = 1.0 + 0.5 * rng.gen::<f64>();
                        arcs.push((u, v, (d * factor).round()));
                    }
                }
            }
        }
        RandomModel::ShortestPathClosure => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            for i in 0..n {
                let (u, v) = (order[i], order[(i + 1) % n]);
                arcs.push((u, v, rng.gen_range(1..=100) as f64));
            }
            for u in 0..n {
                for v in 0..n {
                    if u != v && rng.gen_bool(0.3) {
                        arcs.push((u, v, rng.gen_range(1..=100) as f64));
                    }
                }
            }
        }
    }
    metric_completion(&PartialDigraph { n, s: 0, t: n - 1, arcs })
}
