use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atspp_cli::experiment::{self, ExperimentConfig};
use atspp_cli::report;
use atspp_core::exact::held_karp;
use atspp_core::instance::{
    gap_instance, parse_instance_with, random_instance, ArcVector, DirectedMetric, RandomModel,
};
use atspp_core::lp::{check_feasible, solve_subtour_lp, Arithmetic, LpOptions, LpSolution, DEFAULT_TOL};
use atspp_core::narrowcuts::{find_narrow_cuts, verify_structure, NarrowCutChain, PartitionMode};
use atspp_core::patch::{round, RoundOptions};
use atspp_core::retree::{build_z, check_combination, decompose_trees, verify_z, TreeCombination};
use atspp_core::sampler::{cost_of, sample_tree, thinness, SampleConfig, ThinnessMode};
use atspp_core::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "atspp", version, about = "LP rounding for the asymmetric TSP path problem")]
struct Cli {
    /// Replace a matrix that breaks the triangle inequality by its shortest-path closure.
    #[arg(long, global = true)]
    complete: bool,
    /// Emit a versioned JSON report instead of plain text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// Instance file in the `atspp 1` format, or `-` for stdin.
    instance: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args)]
struct Tau {
    #[arg(long, default_value_t = 0.25)]
    tau: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the subtour LP and print its value and the nonzero x* entries.
    Lp {
        #[command(flatten)]
        input: Input,
        /// Solve in exact rational arithmetic (small instances only).
        #[arg(long)]
        rational: bool,
    },
    /// Narrow cuts of the LP optimum and the structural checks on them.
    Cuts {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        tau: Tau,
    },
    /// Rerouted vector z and its spanning-tree decomposition.
    Reroute {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        tau: Tau,
    },
    /// Draw trees from the decomposition and compare empirical marginals.
    Sample {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        tau: Tau,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        samples: u64,
    },
    /// Run the full pipeline and print the resulting path.
    Round {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        tau: Tau,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        tries: usize,
    },
    /// Optimal path by Held-Karp.
    Exact { instance: PathBuf },
    /// LP value, optimum and ratio on the integrality-gap family.
    GapDemo {
        #[arg(default_values_t = [2usize, 3, 4, 5, 6, 7])]
        r: Vec<usize>,
    },
    /// Run an experiment config and write CSV rows.
    Experiment {
        config: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a generated instance.
    Gen {
        #[command(subcommand)]
        family: GenFamily,
    },
}

#[derive(Subcommand)]
enum GenFamily {
    /// Integrality-gap instance with parameter r.
    Gap { r: usize },
    /// Random instance; `model` is `euclidean` or `closure`.
    Random {
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "euclidean")]
        model: String,
    },
}

fn read_text(path: &Path) -> Result<String> {
    let mut text = String::new();
    let io = |e: io::Error| Error::InvalidArgument(format!("reading {}: {e}", path.display()));
    if path.as_os_str() == "-" {
        io::stdin().read_to_string(&mut text).map_err(io)?;
    } else {
        text = fs::read_to_string(path).map_err(io)?;
    }
    Ok(text)
}

fn load(path: &Path, complete: bool) -> Result<DirectedMetric> {
    parse_instance_with(&read_text(path)?, complete)
}

fn solve(inst: &DirectedMetric, tol: f64) -> Result<LpSolution> {
    solve_subtour_lp(inst, &LpOptions { tol, ..LpOptions::default() })
}

fn chain_for(inst: &DirectedMetric, x: &ArcVector, tau: f64, tol: f64) -> Result<NarrowCutChain> {
    find_narrow_cuts(x, inst.n(), inst.s(), inst.t(), tau, tol)
}

fn print_json(value: &Value) -> Result<()> {
    write_out(&report::render(value))
}

fn write_out(text: &str) -> Result<()> {
    io::stdout().write_all(text.as_bytes()).map_err(|e| Error::InvalidArgument(format!("writing stdout: {e}")))
}

/// A report whose checks failed is still printed, then turned into exit code 2.
fn emit_checked(value: Value, passed: bool, what: &str) -> Result<()> {
    print_json(&value)?;
    checked(passed, what)
}

fn line_of(cut: &[usize]) -> String {
    cut.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn arc_lines(x: &ArcVector) -> String {
    x.iter().map(|((u, v), w)| format!("{u} {v} {w}\n")).collect()
}

fn cmd_lp(inst: &DirectedMetric, input: &Input, rational: bool, json: bool) -> Result<()> {
    let arithmetic = if rational { Arithmetic::Rational } else { Arithmetic::Float };
    let lp = solve_subtour_lp(inst, &LpOptions { tol: input.tol, arithmetic, ..LpOptions::default() })?;
    let feasibility = check_feasible(inst, &lp.x, 1e-6);
    let passed = feasibility.is_feasible();
    if json {
        return emit_checked(
            json!({ "schema": report::SCHEMA, "lp": lp, "feasibility": feasibility }),
            passed,
            "feasibility",
        );
    }
    let mut text = format!("value {}\n", lp.value);
    if let Some(exact) = &lp.exact_value {
        text.push_str(&format!("# exact {exact}\n"));
    }
    text.push_str(&arc_lines(&lp.x));
    write_out(&text)?;
    for v in &feasibility.violations {
        eprintln!("violation: {v:?}");
    }
    checked(passed, "feasibility")
}

fn checked(passed: bool, what: &str) -> Result<()> {
    if passed {
        Ok(())
    } else {
        Err(Error::Invariant(format!("{what} checks failed")))
    }
}

fn cmd_cuts(inst: &DirectedMetric, input: &Input, tau: f64, json: bool) -> Result<()> {
    let lp = solve(inst, input.tol)?;
    let chain = chain_for(inst, &lp.x, tau, input.tol)?;
    let structure = verify_structure(&lp.x, &chain);
    let passed = structure.passed();
    if json {
        let value = json!({
            "schema": report::SCHEMA,
            "lp_value": lp.value,
            "k": chain.k(),
            "chain": chain,
            "structure": structure,
            "failures": structure.failures(),
        });
        return emit_checked(value, passed, "structure");
    }
    let mut text = format!("# tau {tau}, k {}\n", chain.k());
    for cut in &chain.cuts {
        text.push_str(&line_of(&cut.members()));
        text.push('\n');
    }
    text.push_str("# layer\tsize\tboundary_mass\tpartitions\tmin_slack\tvertices\n");
    for (i, layer) in chain.layers.iter().enumerate() {
        let mass = structure.boundary_mass.get(i).map_or_else(|| "-".to_string(), |m| format!("{m:.6}"));
        let (checked, slack) = match structure.partitions.iter().find(|p| p.layer == i) {
            Some(p) => {
                let mode = if p.mode == PartitionMode::Certified { "" } else { " sampled" };
                (format!("{}{mode}", p.partitions_checked), format!("{:.6}", p.min_slack))
            }
            None => ("-".into(), "-".into()),
        };
        text.push_str(&format!("# {i}\t{}\t{mass}\t{checked}\t{slack}\t{}\n", layer.len(), line_of(layer)));
    }
    write_out(&text)?;
    for failure in structure.failures() {
        eprintln!("structure: {failure}");
    }
    checked(passed, "structure")
}

fn cmd_reroute(inst: &DirectedMetric, input: &Input, tau: f64, json: bool) -> Result<()> {
    let lp = solve(inst, input.tol)?;
    let chain = chain_for(inst, &lp.x, tau, input.tol)?;
    let zv = build_z(&lp.x, &chain)?;
    let z_report = verify_z(&zv, &lp.x);
    let passed = z_report.passed();
    if json {
        let value = json!({
            "schema": report::SCHEMA,
            "lp_value": lp.value,
            "z": zv.z,
            "report": z_report,
        });
        return emit_checked(value, passed, "rerouted vector");
    }
    let mut text = arc_lines(&zv.z);
    text.push_str(&format!("# max cut residual {}\n", z_report.max_cut_residual()));
    text.push_str(&format!("# cap excess {}\n", z_report.cap_excess));
    match &z_report.decomposition {
        Some(c) => text.push_str(&format!(
            "# terms {}\n# weight sum {}\n# boundary marginal residual {}\n",
            c.terms, c.weight_sum, c.boundary_residual
        )),
        None => text.push_str(&format!(
            "# decomposition failed: {}\n",
            z_report.decomposition_error.as_deref().unwrap_or("unknown")
        )),
    }
    write_out(&text)?;
    checked(passed, "rerouted vector")
}

fn combination_for(
    inst: &DirectedMetric,
    input: &Input,
    tau: f64,
) -> Result<(LpSolution, NarrowCutChain, TreeCombination)> {
    let lp = solve(inst, input.tol)?;
    let chain = chain_for(inst, &lp.x, tau, input.tol)?;
    let comb = decompose_trees(&build_z(&lp.x, &chain)?)?;
    Ok((lp, chain, comb))
}

fn cmd_sample(inst: &DirectedMetric, input: &Input, tau: f64, seed: u64, samples: u64, json: bool) -> Result<()> {
    if samples == 0 {
        return Err(Error::InvalidArgument("--samples must be positive".into()));
    }
    let (lp, chain, comb) = combination_for(inst, input, tau)?;
    let mode = ThinnessMode::auto(&chain, seed);
    let mut counts = ArcVector::new();
    let mut crossing_ok = 0u64;
    let mut total_cost = 0.0;
    let mut rows = Vec::new();
    for i in 0..samples {
        let cfg = SampleConfig::new(seed.wrapping_add(i), tau, inst.n())?;
        let arcs = sample_tree(&comb, &cfg);
        for &(u, v) in &arcs {
            counts.add(u, v, 1.0);
        }
        let once =
            chain.cuts.iter().all(|c| arcs.iter().filter(|&&(u, v)| c.contains(u) && !c.contains(v)).count() == 1);
        crossing_ok += u64::from(once);
        let cost = cost_of(&arcs, inst);
        total_cost += cost;
        let alpha_obs = thinness(&arcs, &lp.x, inst.n(), &mode)?.alpha_obs;
        rows.push((cfg.seed, cost, alpha_obs, once));
    }
    let marginals = comb.marginals();
    let mut max_sigma: f64 = 0.0;
    let arcs: Vec<Value> = marginals
        .iter()
        .map(|((u, v), p)| {
            let empirical = counts.get(u, v) / samples as f64;
            let sd = (p * (1.0 - p) / samples as f64).sqrt();
            let sigmas = if sd > 0.0 { (empirical - p).abs() / sd } else { 0.0 };
            max_sigma = max_sigma.max(sigmas);
            json!({ "arc": [u, v], "marginal": p, "empirical": empirical, "sigmas": sigmas })
        })
        .collect();
    let mean_cost = total_cost / samples as f64;
    if json {
        let per_sample: Vec<Value> = rows
            .iter()
            .map(|&(seed, cost, alpha_obs, once)| {
                json!({ "seed": seed, "cost": cost, "alpha_obs": alpha_obs, "narrow_cuts_ok": once })
            })
            .collect();
        let value = json!({
            "schema": report::SCHEMA,
            "lp_value": lp.value,
            "terms": comb.terms.len(),
            "samples": per_sample,
            "crossing_rate": crossing_ok as f64 / samples as f64,
            "mean_cost": mean_cost,
            "max_sigma": max_sigma,
            "arcs": arcs,
            "check": check_combination(&comb, &build_z(&lp.x, &chain)?),
        });
        return emit_checked(value, crossing_ok == samples, "crossing");
    }
    let mut text = String::from("seed\tcost\talpha_obs\tnarrow_cuts_ok\n");
    for (seed, cost, alpha_obs, once) in rows {
        text.push_str(&format!("{seed}\t{cost}\t{alpha_obs:.6}\t{once}\n"));
    }
    text.push_str(&format!(
        "# terms {} lp_value {} mean_cost {mean_cost} crossing_rate {} max_marginal_sigma {max_sigma:.3}\n",
        comb.terms.len(),
        lp.value,
        crossing_ok as f64 / samples as f64
    ));
    write_out(&text)?;
    checked(crossing_ok == samples, "crossing")
}

fn cmd_round(inst: &DirectedMetric, input: &Input, tau: f64, seed: u64, tries: usize, json: bool) -> Result<()> {
    let opts = RoundOptions { tau, seed, max_tries: tries, tol: input.tol };
    let out = round(inst, &opts)?;
    if json {
        return print_json(&report::round_report(inst, &opts, &out));
    }
    let names: Vec<String> = out.walk.path.iter().map(|&v| inst.name(v)).collect();
    write_out(&format!(
        "path {}\ncost {}\nlp_value {}\nratio {:.6}\nbound {}\ntries {}\n",
        names.join(" "),
        out.walk.cost,
        out.walk.lp_value,
        out.walk.ratio,
        out.bound,
        out.draw.tries
    ))
}

fn cmd_exact(inst: &DirectedMetric, json: bool) -> Result<()> {
    let res = held_karp(inst)?;
    if json {
        return print_json(&json!({ "schema": report::SCHEMA, "exact": res }));
    }
    write_out(&format!("cost {}\npath {}\n", res.cost, line_of(&res.path)))
}

fn cmd_experiment(config: &Path, out: Option<&Path>) -> Result<()> {
    let cfg: ExperimentConfig = read_text(config)?.parse()?;
    let (rows, summary) = experiment::run_experiment(&cfg)?;
    match out {
        Some(path) => {
            let file = fs::File::create(path)
                .map_err(|e| Error::InvalidArgument(format!("creating {}: {e}", path.display())))?;
            experiment::write_csv(&rows, file)?;
        }
        None => experiment::write_csv(&rows, io::stdout().lock())?,
    }
    eprintln!("{summary}");
    Ok(())
}

fn cmd_gen(family: &GenFamily) -> Result<()> {
    let inst = match family {
        GenFamily::Gap { r } => gap_instance(*r)?.0,
        GenFamily::Random { n, seed, model } => random_instance(*n, *seed, model.parse::<RandomModel>()?)?,
    };
    write_out(&inst.to_text())
}

fn run(cli: Cli) -> Result<()> {
    let complete = cli.complete;
    let json = cli.json;
    match &cli.command {
        Command::Lp { input, rational } => cmd_lp(&load(&input.instance, complete)?, input, *rational, json),
        Command::Cuts { input, tau } => cmd_cuts(&load(&input.instance, complete)?, input, tau.tau, json),
        Command::Reroute { input, tau } => cmd_reroute(&load(&input.instance, complete)?, input, tau.tau, json),
        Command::Sample { input, tau, seed, samples } => {
            cmd_sample(&load(&input.instance, complete)?, input, tau.tau, *seed, *samples, json)
        }
        Command::Round { input, tau, seed, tries } => {
            cmd_round(&load(&input.instance, complete)?, input, tau.tau, *seed, *tries, json)
        }
        Command::Exact { instance } => cmd_exact(&load(instance, complete)?, json),
        Command::GapDemo { r } => write_out(&experiment::render_gap_table(&experiment::gap_demo(r)?)),
        Command::Experiment { config, out } => cmd_experiment(config, out.as_deref()),
        Command::Gen { family } => cmd_gen(family),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("atspp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
