//! Versioned JSON report for one rounding run.

use atspp_core::instance::DirectedMetric;
use atspp_core::patch::{RoundOptions, RoundOutcome};
use serde_json::{json, Value};

pub const SCHEMA: u32 = 1;

/// Everything needed to audit one run. Keys come out sorted and nothing
/// time-dependent is recorded, so equal inputs give byte-equal reports.
pub fn round_report(inst: &DirectedMetric, opts: &RoundOptions, out: &RoundOutcome) -> Value {
    let hoffman = out.hoffman.as_ref().map(|h| {
        json!({
            "passed": h.passed(),
            "cuts_checked": h.cuts_checked(),
            "cases": h.cases,
        })
    });
    json!({
        "schema": SCHEMA,
        "instance": {
            "n": inst.n(),
            "s": inst.s(),
            "t": inst.t(),
            "names": inst.names(),
        },
        "options": {
            "tau": opts.tau,
            "seed": opts.seed,
            "max_tries": opts.max_tries,
            "tol": opts.tol,
        },
        "lp": {
            "value": out.lp.value,
            "exact_value": out.lp.exact_value,
            "iterations": out.lp.iterations,
            "active_cuts": out.lp.active_cuts,
            "x": out.lp.x,
        },
        "chain": {
            "k": out.chain.k(),
            "cuts": out.chain.cuts,
            "layers": out.chain.layers,
            "splits": out.chain.splits,
            "structure_passed": out.structure.passed(),
            "boundary_mass": out.structure.boundary_mass,
        },
        "rerouted": {
            "max_cut_residual": out.z_max_cut_residual,
            "cap_excess": out.z_cap_excess,
            "combination": out.combination,
        },
        "sample": {
            "alpha": out.config.alpha,
            "beta": out.config.beta,
            "arcs": out.draw.arcs,
            "cost": out.draw.cost,
            "tries": out.draw.tries,
            "alpha_obs": out.draw.thinness.alpha_obs,
            "thinness_witness": out.draw.thinness.witness,
            "cuts_inspected": out.draw.thinness.cuts_inspected,
        },
        "hoffman": hoffman,
        "circulation": {
            "cost": out.eulerian.circulation_cost,
            "multiplicity": out.eulerian.multiplicity,
        },
        "walk": out.walk,
        "bound": out.bound,
    })
}

pub fn render(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report values serialize");
    s.push('\n');
    s
}
