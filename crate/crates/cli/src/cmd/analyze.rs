use anyhow::Result;
use serde::Serialize;
use specflow::complexity::{latency_budget, ArchParams, CostReport, FlowId};
use specflow::flowopt::{optimize_layer, FlowChoice};

use super::f6;
use crate::output::{json, Table};
use crate::Ctx;

pub const SCHEMA: &str = "specflow-analyze/1";

const HEADER: [&str; 13] = [
    "layer",
    "flow",
    "ps",
    "ns",
    "n_bram",
    "feasible",
    "tau_ms",
    "transfers_in",
    "transfers_kernel",
    "transfers_out",
    "transfers_total",
    "words",
    "bw_gbps",
];

#[derive(Serialize)]
struct LayerAnalysis {
    layer: String,
    tau: f64,
    fixed: Vec<CostReport>,
    /// Absent when no streaming choice fits the budget.
    flexible: Option<FlowChoice>,
}

#[derive(Serialize)]
struct Body {
    arch: ArchParams,
    bram_budget: u64,
    tau_total: f64,
    layers: Vec<LayerAnalysis>,
}

pub fn run(ctx: &Ctx, arch: ArchParams) -> Result<()> {
    arch.validate()?;
    let model = &ctx.model;
    let budget = latency_budget(model, ctx.tau_total)?;
    let layers: Vec<_> = model.optimized_layers().collect();
    let analyses = ctx.exec.map(&layers, |l| {
        let tau = budget.tau(&l.name).expect("budget covers every layer");
        LayerAnalysis {
            layer: l.name.clone(),
            tau,
            fixed: FlowId::FIXED.iter().map(|&f| ctx.cost.bandwidth(l, &model.spectral, &arch, f, tau)).collect(),
            flexible: optimize_layer(l, model, &arch, &ctx.cost, ctx.bram_budget, tau),
        }
    });

    let mut t = Table::new(SCHEMA, &HEADER);
    t.note(format!("arch: p_par={} n_par={} replicas={}", arch.p_par, arch.n_par, arch.replicas));
    t.note(format!("bram_budget: {}", ctx.bram_budget));
    for a in &analyses {
        let tau_ms = f6(a.tau * 1e3);
        for r in &a.fixed {
            let tr = r.transfers();
            t.row(vec![
                a.layer.clone(),
                r.flow.to_string(),
                String::new(),
                String::new(),
                r.n_bram.to_string(),
                (r.n_bram < ctx.bram_budget).to_string(),
                tau_ms.clone(),
                tr.inputs.to_string(),
                tr.kernels.to_string(),
                tr.outputs.to_string(),
                tr.total().to_string(),
                format!("{:.0}", ctx.cost.words(&tr, r.flow)),
                f6(r.bw_gbps()),
            ]);
        }
        match &a.flexible {
            Some(c) => t.row(vec![
                a.layer.clone(),
                FlowId::Flexible.to_string(),
                c.stream.ps.to_string(),
                c.stream.ns.to_string(),
                c.n_bram.to_string(),
                "true".into(),
                tau_ms,
                c.transfers.inputs.to_string(),
                c.transfers.kernels.to_string(),
                c.transfers.outputs.to_string(),
                c.transfers.total().to_string(),
                format!("{:.0}", ctx.cost.words(&c.transfers, FlowId::Flexible)),
                f6(c.bw_gbps()),
            ]),
            None => {
                let mut cells = vec![a.layer.clone(), FlowId::Flexible.to_string()];
                cells.extend([""; 3].map(String::from));
                cells.push("false".into());
                cells.push(tau_ms);
                cells.extend([""; 6].map(String::from));
                t.row(cells);
            }
        }
    }
    let body = Body { arch, bram_budget: ctx.bram_budget, tau_total: ctx.tau_total, layers: analyses };
    ctx.sink.emit("analyze", &t.render(&ctx.manifest)?, &json(&ctx.manifest, &body)?)
}
