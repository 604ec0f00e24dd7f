use anyhow::Result;
use serde::Serialize;
use specflow::flowopt::{optimize, OptResult, SearchSpace};

use super::f6;
use crate::output::{json, Table};
use crate::Ctx;

pub const SCHEMA: &str = "specflow-optimize/1";

const HEADER: [&str; 13] = [
    "layer",
    "flow",
    "ps",
    "ns",
    "n_bram",
    "min_fixed_flow",
    "min_fixed_bram",
    "tau_ms",
    "transfers_in",
    "transfers_kernel",
    "transfers_out",
    "transfers_total",
    "bw_gbps",
];

#[derive(Serialize)]
struct Body<'a> {
    space: &'a SearchSpace,
    result: &'a OptResult,
}

pub fn run(ctx: &Ctx, p_par: Vec<usize>, n_par: Vec<usize>, replicas: usize) -> Result<()> {
    let space = SearchSpace { p_par, n_par, replicas, bram_budget: ctx.bram_budget, tau_total: ctx.tau_total };
    let res = optimize(&ctx.model, &space, &ctx.cost, ctx.exec)?;

    let mut t = Table::new(SCHEMA, &HEADER);
    t.note(format!("arch: p_par={} n_par={} replicas={}", res.arch.p_par, res.arch.n_par, res.arch.replicas));
    t.note(format!("bram_budget: {}", res.bram_budget));
    t.note(format!("bw_max_gbps: {}", f6(res.bw_max_gbps())));
    t.note(format!("total_transfers: {}", res.total_transfers()));
    t.note(format!("compute_cycles: {}", res.compute_cycles));
    for c in &res.per_layer {
        t.row(vec![
            c.layer.clone(),
            c.flow.to_string(),
            c.stream.ps.to_string(),
            c.stream.ns.to_string(),
            c.n_bram.to_string(),
            c.min_fixed.0.to_string(),
            c.min_fixed.1.to_string(),
            f6(c.tau * 1e3),
            c.transfers.inputs.to_string(),
            c.transfers.kernels.to_string(),
            c.transfers.outputs.to_string(),
            c.transfers.total().to_string(),
            f6(c.bw_gbps()),
        ]);
    }
    eprintln!(
        "optimum: P'={} N'={} r={}, bw_max {:.3} GB/s, {} transfers",
        res.arch.p_par,
        res.arch.n_par,
        res.arch.replicas,
        res.bw_max_gbps(),
        res.total_transfers()
    );
    let body = Body { space: &space, result: &res };
    ctx.sink.emit("optimize", &t.render(&ctx.manifest)?, &json(&ctx.manifest, &body)?)
}
