use anyhow::Result;
use clap::Args;
use serde::Serialize;
use specflow::complexity::layer_cmp;
use specflow::netmodel::{gen_sparse_kernels, Pattern, SparseKernelSet};
use specflow::scheduler::{build_graph, emit_tables, layer_utilization, schedule_greedy, weighted_mean, SchedulerKind};

use super::f6;
use crate::output::{json, Table};
use crate::{parse_pattern, parse_scheduler, Ctx};

pub const SCHEMA: &str = "specflow-schedule/1";

const HEADER: [&str; 9] = ["pattern", "method", "seed", "r", "layer", "instances", "cycles", "pairs", "mu"];

#[derive(Args)]
pub struct ScheduleArgs {
    /// Sparsity patterns to sweep.
    #[arg(long, value_delimiter = ',', value_parser = parse_pattern, default_value = "clustered")]
    pattern: Vec<Pattern>,
    #[arg(long, value_delimiter = ',', value_parser = parse_scheduler, default_value = "greedy,random,lowest-index")]
    methods: Vec<SchedulerKind>,
    /// Explicit replica counts; overrides --r-min/--r-max.
    #[arg(long, value_delimiter = ',')]
    r: Option<Vec<usize>>,
    #[arg(long, default_value_t = 4)]
    r_min: usize,
    #[arg(long, default_value_t = 20)]
    r_max: usize,
    /// Overrides the model's pruning ratio.
    #[arg(long)]
    alpha: Option<usize>,
    /// Kernels per group (N').
    #[arg(long, default_value_t = 64)]
    n_kernels: usize,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    /// Input channels sampled per layer.
    #[arg(long, default_value_t = 2)]
    channels: usize,
    /// Replica count of the emitted greedy INDEX/VALUE tables.
    #[arg(long, default_value_t = 10)]
    tables_r: usize,
}

#[derive(Serialize)]
struct LayerPoint {
    layer: String,
    weight: u64,
    instances: usize,
    cycles: u64,
    pairs: u64,
    mu: f64,
}

#[derive(Serialize)]
struct Point {
    pattern: Pattern,
    method: SchedulerKind,
    seed: u64,
    r: usize,
    weighted_mu: f64,
    layers: Vec<LayerPoint>,
}

#[derive(Serialize)]
struct Body {
    n_kernels: usize,
    alpha: usize,
    channels: usize,
    points: Vec<Point>,
}

fn bad(field: &'static str, message: &str) -> specflow::Error {
    specflow::Error::Validation { layer: "schedule".into(), field, message: message.into() }
}

pub fn run(ctx: &Ctx, a: &ScheduleArgs) -> Result<()> {
    let mut model = ctx.model.clone();
    if let Some(alpha) = a.alpha {
        model.spectral.alpha = alpha;
        model.validate()?;
    }
    let rs: Vec<usize> = match &a.r {
        Some(v) => v.clone(),
        None => (a.r_min..=a.r_max).collect(),
    };
    if rs.is_empty() || rs.contains(&0) {
        return Err(bad("r", "needs at least one positive replica count").into());
    }
    if a.n_kernels == 0 || a.channels == 0 || a.seeds == 0 || a.tables_r == 0 {
        return Err(bad("n_kernels", "counts must be positive").into());
    }
    let spectral = model.spectral;
    let layers: Vec<_> = model.optimized_layers().collect();
    let seeds: Vec<u64> = (0..a.seeds as u64).map(|i| ctx.seed + i).collect();

    let mut t = Table::new(SCHEMA, &HEADER);
    t.note(format!("n_kernels: {} alpha: {} channels: {}", a.n_kernels, spectral.alpha, a.channels));
    let mut points = Vec::new();
    for &pattern in &a.pattern {
        for &seed in &seeds {
            let sets: Vec<SparseKernelSet> = layers
                .iter()
                .enumerate()
                .map(|(li, l)| {
                    let m = a.channels.min(l.in_channels);
                    gen_sparse_kernels(seed * 131 + li as u64, pattern, l.out_channels, m, &spectral)
                })
                .collect();
            for &method in &a.methods {
                for &r in &rs {
                    let mut lp = Vec::with_capacity(layers.len());
                    for (l, ks) in layers.iter().zip(&sets) {
                        let u = layer_utilization(ks, a.n_kernels, r, method, seed, ctx.exec)?;
                        lp.push(LayerPoint {
                            layer: l.name.clone(),
                            weight: layer_cmp(l, &spectral),
                            instances: u.instances,
                            cycles: u.cycles,
                            pairs: u.pairs,
                            mu: u.mu(),
                        });
                    }
                    let weighted_mu = weighted_mean(&lp.iter().map(|p| (p.mu, p.weight as f64)).collect::<Vec<_>>());
                    let head = [pattern.to_string(), method.to_string(), seed.to_string(), r.to_string()];
                    for p in &lp {
                        let mut cells = head.to_vec();
                        cells.extend([
                            p.layer.clone(),
                            p.instances.to_string(),
                            p.cycles.to_string(),
                            p.pairs.to_string(),
                            f6(p.mu),
                        ]);
                        t.row(cells);
                    }
                    let mut cells = head.to_vec();
                    cells.extend([
                        "weighted".to_string(),
                        lp.iter().map(|p| p.instances).sum::<usize>().to_string(),
                        lp.iter().map(|p| p.cycles).sum::<u64>().to_string(),
                        lp.iter().map(|p| p.pairs).sum::<u64>().to_string(),
                        f6(weighted_mu),
                    ]);
                    t.row(cells);
                    points.push(Point { pattern, method, seed, r, weighted_mu, layers: lp });
                }
            }
            if ctx.sink.has_dir() && seed == seeds[0] {
                for (l, ks) in layers.iter().zip(&sets) {
                    let group = ks.group(0, 0, a.n_kernels);
                    let s = schedule_greedy(&build_graph(&group, spectral.window_len()), a.tables_r);
                    let tables = emit_tables(&s, &group)?;
                    let mut bin = Vec::new();
                    tables.write_binary(&mut bin)?;
                    let stem = format!("tables/{pattern}/{}", l.name);
                    ctx.sink.write_file(&format!("{stem}.ivt"), &bin)?;
                    ctx.sink.write_file(&format!("{stem}.json"), tables.to_json().as_bytes())?;
                }
            }
        }
    }
    let body = Body { n_kernels: a.n_kernels, alpha: spectral.alpha, channels: a.channels, points };
    ctx.sink.emit("schedule", &t.render(&ctx.manifest)?, &json(&ctx.manifest, &body)?)
}
