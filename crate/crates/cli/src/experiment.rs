//! The gap-family table and the batch experiment harness.

use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use atspp_core::exact::held_karp;
use atspp_core::instance::{gap_instance, random_instance, DirectedMetric, RandomModel};
use atspp_core::lp::{solve_subtour_lp, LpOptions, DEFAULT_TOL};
use atspp_core::patch::{round, RoundOptions};
use atspp_core::{Error, Result};
use rayon::prelude::*;

/// Largest `n` for which tables and experiments fill in the exact optimum.
pub const DEFAULT_EXACT_LIMIT: usize = 16;
const RATIO_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GapRow {
    pub r: usize,
    pub n: usize,
    pub lp_value: f64,
    pub opt: Option<f64>,
    /// `opt / lp_value` when the optimum was computed.
    pub ratio: Option<f64>,
    /// `(2r - 1)/(r + 1)`, what the ratio must reach.
    pub target: f64,
}

pub fn gap_demo(rs: &[usize]) -> Result<Vec<GapRow>> {
    if let Some(r) = rs.iter().find(|&&r| r < 2) {
        return Err(Error::InvalidArgument(format!("gap demo needs r >= 2, got {r}")));
    }
    rs.par_iter()
        .map(|&r| {
            let (inst, _) = gap_instance(r)?;
            let lp = solve_subtour_lp(&inst, &LpOptions::default())?;
            let opt = (inst.n() <= DEFAULT_EXACT_LIMIT).then(|| held_karp(&inst)).transpose()?.map(|e| e.cost);
            Ok(GapRow {
                r,
                n: inst.n(),
                lp_value: lp.value,
                opt,
                ratio: opt.map(|o| o / lp.value),
                target: (2 * r - 1) as f64 / (r + 1) as f64,
            })
        })
        .collect()
}

pub fn render_gap_table(rows: &[GapRow]) -> String {
    let mut out = String::from("r\tn\tlp_value\topt\tratio\t(2r-1)/(r+1)\n");
    let mut omitted = false;
    for row in rows {
        let opt = row.opt.map_or_else(|| "-".to_string(), |o| format!("{o}"));
        let ratio = row.ratio.map_or_else(|| "-".to_string(), |r| format!("{r:.6}"));
        omitted |= row.opt.is_none();
        out.push_str(&format!("{}\t{}\t{:.6}\t{opt}\t{ratio}\t{:.6}\n", row.r, row.n, row.lp_value, row.target));
    }
    if omitted {
        out.push_str(&format!("# exact optimum omitted for n > {DEFAULT_EXACT_LIMIT}\n"));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Gap,
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub family: Family,
    /// `r` values for the gap family, `n` values for random instances.
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub tau: f64,
    pub model: RandomModel,
    pub max_tries: usize,
    pub exact_limit: usize,
    /// Fill the `wall_ms` column. Off by default so output is reproducible.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            family: Family::Gap,
            sizes: Vec::new(),
            seeds: vec![0],
            tau: 0.25,
            model: RandomModel::EuclideanPerturbed,
            max_tries: 64,
            exact_limit: DEFAULT_EXACT_LIMIT,
            timing: false,
        }
    }
}

/// Comma-separated integers and ranges: `3`, `2..6` (half-open), `2..=5`.
pub fn parse_int_list(text: &str) -> std::result::Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parse = |s: &str| s.trim().parse::<u64>().map_err(|_| format!("`{s}` is not an integer"));
        if let Some((a, b)) = item.split_once("..=") {
            out.extend(parse(a)?..=parse(b)?);
        } else if let Some((a, b)) = item.split_once("..") {
            out.extend(parse(a)?..parse(b)?);
        } else {
            out.push(parse(item)?);
        }
    }
    Ok(out)
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut sizes_key = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Config(format!("line {}: {msg}", i + 1));
            let (key, value) =
                line.split_once('=').ok_or_else(|| bad(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "family" => {
                    cfg.family = match value {
                        "gap" => Family::Gap,
                        "random" => Family::Random,
                        other => return Err(bad(format!("unknown family `{other}`"))),
                    }
                }
                "r" | "n" => {
                    cfg.sizes = parse_int_list(value).map_err(bad)?.into_iter().map(|v| v as usize).collect();
                    sizes_key = Some(key.to_string());
                }
                "seeds" => cfg.seeds = parse_int_list(value).map_err(bad)?,
                "tau" => cfg.tau = value.parse().map_err(|_| bad(format!("bad tau `{value}`")))?,
                "model" => cfg.model = value.parse().map_err(|e: Error| bad(e.to_string()))?,
                "tries" => cfg.max_tries = value.parse().map_err(|_| bad(format!("bad tries `{value}`")))?,
                "exact_limit" => {
                    cfg.exact_limit = value.parse().map_err(|_| bad(format!("bad exact_limit `{value}`")))?
                }
                "timing" => cfg.timing = value.parse().map_err(|_| bad(format!("bad timing `{value}`")))?,
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        let want = match cfg.family {
            Family::Gap => "r",
            Family::Random => "n",
        };
        match sizes_key.as_deref() {
            Some(k) if k == want => {}
            Some(k) => return Err(Error::Config(format!("family {want:?} takes `{want}`, not `{k}`"))),
            None => return Err(Error::Config(format!("missing `{want}`"))),
        }
        if !(cfg.tau > 0.0 && cfg.tau <= 0.25) {
            return Err(Error::Config(format!("tau must lie in (0, 1/4], got {}", cfg.tau)));
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRow {
    pub instance: String,
    pub n: usize,
    pub seed: u64,
    pub lp_value: f64,
    pub opt: Option<f64>,
    pub path_cost: f64,
    pub ratio_path_lp: f64,
    pub ratio_opt_lp: Option<f64>,
    pub alpha_obs: f64,
    pub tries: usize,
    pub wall_ms: Option<u128>,
    /// `(3/(1-3τ) + (1+1/τ)·α)·lp_value` for this run.
    pub bound: f64,
}

pub const CSV_HEADER: [&str; 11] = [
    "instance",
    "n",
    "seed",
    "lp_value",
    "opt",
    "path_cost",
    "ratio_path_lp",
    "ratio_opt_lp",
    "alpha_obs",
    "tries",
    "wall_ms",
];

impl ExperimentRow {
    fn record(&self) -> [String; 11] {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x}"));
        [
            self.instance.clone(),
            self.n.to_string(),
            self.seed.to_string(),
            format!("{}", self.lp_value),
            opt(self.opt),
            format!("{}", self.path_cost),
            format!("{}", self.ratio_path_lp),
            opt(self.ratio_opt_lp),
            format!("{}", self.alpha_obs),
            self.tries.to_string(),
            self.wall_ms.map_or_else(String::new, |ms| ms.to_string()),
        ]
    }
}

fn build_instance(cfg: &ExperimentConfig, size: usize, seed: u64) -> Result<(String, DirectedMetric)> {
    match cfg.family {
        Family::Gap => Ok((format!("gap-r{size}"), gap_instance(size)?.0)),
        Family::Random => {
            Ok((format!("random-{}-n{size}-s{seed}", cfg.model), random_instance(size, seed, cfg.model)?))
        }
    }
}

fn run_one(cfg: &ExperimentConfig, size: usize, seed: u64) -> Result<ExperimentRow> {
    let start = Instant::now();
    let (id, inst) = build_instance(cfg, size, seed)?;
    let opts = RoundOptions { tau: cfg.tau, seed, max_tries: cfg.max_tries, tol: DEFAULT_TOL };
    let out = round(&inst, &opts)?;
    let opt = (inst.n() <= cfg.exact_limit).then(|| held_karp(&inst)).transpose()?.map(|e| e.cost);
    let lp = out.walk.lp_value;
    let row = ExperimentRow {
        instance: id,
        n: inst.n(),
        seed,
        lp_value: lp,
        opt,
        path_cost: out.walk.cost,
        ratio_path_lp: out.walk.ratio,
        ratio_opt_lp: opt.map(|o| if lp > 0.0 { o / lp } else { 1.0 }),
        alpha_obs: out.draw.thinness.alpha_obs,
        tries: out.draw.tries,
        wall_ms: cfg.timing.then(|| start.elapsed().as_millis()),
        bound: out.bound,
    };
    validate_row(&row, &out.walk.path, &inst)?;
    Ok(row)
}

/// Re-checks a row against its path before it is written.
pub fn validate_row(row: &ExperimentRow, path: &[usize], inst: &DirectedMetric) -> Result<()> {
    let n = inst.n();
    let mut seen = vec![false; n];
    let hamiltonian = path.len() == n
        && path.first() == Some(&inst.s())
        && path.last() == Some(&inst.t())
        && path.iter().all(|&v| v < n && !std::mem::replace(&mut seen[v], true));
    let fail = |msg: String| Err(Error::Invariant(format!("{} seed {}: {msg}", row.instance, row.seed)));
    if !hamiltonian {
        return fail(format!("path {path:?} is not a Hamiltonian s-t path"));
    }
    if (inst.path_cost(path) - row.path_cost).abs() > 1e-9 * row.path_cost.abs().max(1.0) {
        return fail("recorded cost does not match the path".into());
    }
    if row.ratio_path_lp < 1.0 - RATIO_EPS {
        return fail(format!("path/lp ratio {} below one", row.ratio_path_lp));
    }
    if row.path_cost > row.bound + RATIO_EPS * row.bound.max(1.0) {
        return fail(format!("path cost {} above bound {}", row.path_cost, row.bound));
    }
    if let Some(r) = row.ratio_opt_lp {
        if r < 1.0 - RATIO_EPS {
            return fail(format!("opt/lp ratio {r} below one"));
        }
    }
    if let Some(opt) = row.opt {
        if opt > row.path_cost + RATIO_EPS {
            return fail(format!("optimum {opt} above path cost {}", row.path_cost));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub rows: usize,
    pub max_ratio_path_lp: Option<f64>,
    pub max_ratio_opt_lp: Option<f64>,
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x}"));
        write!(
            f,
            "rows={} max_ratio_path_lp={} max_ratio_opt_lp={}",
            self.rows,
            show(self.max_ratio_path_lp),
            show(self.max_ratio_opt_lp)
        )
    }
}

/// One row per `(size, seed)`, computed in parallel and returned in config order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Vec<ExperimentRow>, Summary)> {
    let jobs: Vec<(usize, u64)> =
        cfg.sizes.iter().flat_map(|&size| cfg.seeds.iter().map(move |&s| (size, s))).collect();
    let rows: Vec<ExperimentRow> =
        jobs.par_iter().map(|&(size, seed)| run_one(cfg, size, seed)).collect::<Result<_>>()?;
    let max = |it: &mut dyn Iterator<Item = f64>| it.fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let summary = Summary {
        rows: rows.len(),
        max_ratio_path_lp: max(&mut rows.iter().map(|r| r.ratio_path_lp)),
        max_ratio_opt_lp: max(&mut rows.iter().filter_map(|r| r.ratio_opt_lp)),
    };
    Ok((rows, summary))
}

pub fn write_csv<W: Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Config(format!("writing csv: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(io)?;
    for row in rows {
        w.write_record(row.record()).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Config(format!("writing csv: {e}")))?;
    Ok(())
}
