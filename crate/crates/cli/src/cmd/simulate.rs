use anyhow::Result;
use clap::{Args, ValueEnum};
use serde::Serialize;
use specflow::complexity::{latency_budget, FlowId, StreamParams, Transfers};
use specflow::flowopt::optimize_layer;
use specflow::netmodel::{gen_sparse_kernels, LayerConfig, Pattern};
use specflow::scheduler::SchedulerKind;
use specflow::spectralsim::{dataflow_simulate, ConstantSchedule, KernelSchedules, SimPlan, SimTrace};
use specflow::{Error, Exec};

use crate::output::{json, Table};
use crate::{parse_pattern, parse_scheduler, ArchArgs, Ctx};

pub const SCHEMA: &str = "specflow-simulate/1";

const HEADER: [&str; 16] = [
    "layer",
    "plan",
    "ps",
    "ns",
    "inputs_read",
    "kernels_read",
    "outputs_written",
    "psums_written",
    "psums_read",
    "compute_cycles",
    "conv_steps",
    "model_inputs",
    "model_kernels",
    "model_outputs",
    "matches_model",
    "legal",
];

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlanArg {
    Flexible,
    Flow3,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    arch: ArchArgs,
    /// Layers to simulate; all optimized layers when omitted.
    #[arg(long, value_delimiter = ',')]
    layer: Vec<String>,
    #[arg(long, value_enum, default_value_t = PlanArg::Flexible)]
    plan: PlanArg,
    /// Tile stream size; taken from the optimizer unless both --ps and --ns are given.
    #[arg(long, requires = "ns")]
    ps: Option<usize>,
    #[arg(long, requires = "ps")]
    ns: Option<usize>,
    /// Scheduler producing per-group cycle counts.
    #[arg(long, value_parser = parse_scheduler, default_value = "greedy", conflicts_with = "cycles")]
    scheduler: SchedulerKind,
    /// Fixed cycles per (channel, kernel group) instead of scheduling kernels.
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long, value_parser = parse_pattern, default_value = "clustered")]
    pattern: Pattern,
}

#[derive(Serialize)]
struct Run {
    trace: SimTrace,
    model: Transfers,
}

#[derive(Serialize)]
struct Body {
    runs: Vec<Run>,
}

pub fn run(ctx: &Ctx, a: &SimulateArgs) -> Result<()> {
    let model = &ctx.model;
    let spectral = model.spectral;
    let arch = a.arch.arch();
    arch.validate()?;
    let budget = latency_budget(model, ctx.tau_total)?;
    let all: Vec<(usize, &LayerConfig)> = model.layers.iter().enumerate().collect();
    let selected: Vec<(usize, &LayerConfig)> = if a.layer.is_empty() {
        all.into_iter().filter(|(_, l)| !l.skip_optimization).collect()
    } else {
        a.layer
            .iter()
            .map(|name| {
                all.iter().copied().find(|(_, l)| &l.name == name).ok_or_else(|| Error::Validation {
                    layer: name.clone(),
                    field: "layer",
                    message: "not in model".into(),
                })
            })
            .collect::<Result<_, _>>()?
    };

    let runs = ctx.exec.map(&selected, |&(li, l)| -> Result<Run, Error> {
        let plan = match (a.plan, a.ps, a.ns) {
            (PlanArg::Flow3, _, _) => SimPlan::Flow3,
            (PlanArg::Flexible, Some(ps), Some(ns)) => SimPlan::Flexible(StreamParams::new(ps, ns)),
            (PlanArg::Flexible, _, _) => {
                let tau = budget.tau(&l.name).expect("budget covers every layer");
                let c = optimize_layer(l, model, &arch, &ctx.cost, ctx.bram_budget, tau)
                    .ok_or_else(|| Error::Infeasible { layer: l.name.clone(), budget: ctx.bram_budget })?;
                SimPlan::Flexible(c.stream)
            }
        };
        let outputs = ctx.cost.accounting.outputs;
        let trace = match a.cycles {
            Some(c) => dataflow_simulate(l, &spectral, &arch, plan, outputs, &mut ConstantSchedule(c))?,
            None => {
                let ks =
                    gen_sparse_kernels(ctx.seed * 131 + li as u64, a.pattern, l.out_channels, l.in_channels, &spectral);
                let mut s =
                    KernelSchedules::build(&ks, arch.n_par, arch.replicas, a.scheduler, ctx.seed, Exec::Sequential)?;
                dataflow_simulate(l, &spectral, &arch, plan, outputs, &mut s)?
            }
        };
        let closed = match plan {
            SimPlan::Flexible(st) => ctx.cost.transfers_flexible(l, &spectral, &arch, &st),
            SimPlan::Flow3 => ctx.cost.transfers(l, &spectral, &arch, FlowId::Flow3),
        };
        Ok(Run { trace, model: closed })
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut t = Table::new(SCHEMA, &HEADER);
    t.note(format!("arch: p_par={} n_par={} replicas={}", arch.p_par, arch.n_par, arch.replicas));
    for r in &runs {
        let s = &r.trace;
        let (plan, ps, ns) = match s.plan {
            SimPlan::Flexible(st) => ("flexible", st.ps.to_string(), st.ns.to_string()),
            SimPlan::Flow3 => ("flow3", String::new(), String::new()),
        };
        // Flow #3 partial sums round-trip through DRAM alongside the final write
        let out_traffic = s.outputs_written + s.psums_written + s.psums_read;
        let matches =
            s.inputs_read == r.model.inputs && s.kernels_read == r.model.kernels && out_traffic == r.model.outputs;
        t.row(vec![
            s.layer.clone(),
            plan.into(),
            ps,
            ns,
            s.inputs_read.to_string(),
            s.kernels_read.to_string(),
            s.outputs_written.to_string(),
            s.psums_written.to_string(),
            s.psums_read.to_string(),
            s.compute_cycles.to_string(),
            s.conv_steps.to_string(),
            r.model.inputs.to_string(),
            r.model.kernels.to_string(),
            r.model.outputs.to_string(),
            matches.to_string(),
            s.is_legal().to_string(),
        ]);
    }
    ctx.sink.emit("simulate", &t.render(&ctx.manifest)?, &json(&ctx.manifest, &Body { runs })?)
}
