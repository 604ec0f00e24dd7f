use std::time::Instant;

use anyhow::Result;
use clap::{Args, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use specflow::complexity::{ArchParams, StreamParams};
use specflow::netmodel::{gen_sparse_kernels, tile_grid, LayerConfig, Pattern, SpectralConfig};
use specflow::scheduler::{
    build_graph, emit_tables, run_scheduler, schedule_bruteforce, schedule_greedy, AccessGraph, SchedulerKind,
};
use specflow::spectralsim::{
    dataflow_simulate, dense_kernel_set, dft2_naive, fft2, spatial_conv_reference, spectral_conv,
    spectral_conv_scheduled, KernelSchedules, ScheduledKernels, SimPlan, SpatialTensor,
};
use specflow::Exec;

use crate::output::{json, Table};
use crate::Ctx;

pub const SCHEMA: &str = "specflow-verify/1";

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sizes {
    Tiny,
    Full,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Sizes::Full)]
    sizes: Sizes,
    /// Multiplies every numerical tolerance.
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    measured: f64,
    tolerance: f64,
    pass: bool,
    detail: String,
}

impl Check {
    fn at_most(name: &'static str, measured: f64, tolerance: f64, detail: String) -> Self {
        Self { name, measured, tolerance, pass: measured <= tolerance, detail }
    }
}

#[derive(Serialize)]
struct Body<'a> {
    sizes: &'static str,
    checks: &'a [Check],
}

struct Plan {
    fft_tiles: usize,
    conv_instances: usize,
    max_side: usize,
    max_channels: usize,
    schedule_instances: u64,
    oracle_instances: usize,
    sim_configs: usize,
}

fn plan(s: Sizes) -> Plan {
    match s {
        Sizes::Tiny => Plan {
            fft_tiles: 10,
            conv_instances: 5,
            max_side: 16,
            max_channels: 2,
            schedule_instances: 6,
            oracle_instances: 20,
            sim_configs: 3,
        },
        Sizes::Full => Plan {
            fft_tiles: 100,
            conv_instances: 50,
            max_side: 24,
            max_channels: 4,
            schedule_instances: 20,
            oracle_instances: 50,
            sim_configs: SIM_CONFIGS.len(),
        },
    }
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-1.0..1.0)
}

fn fft_vs_dft(rng: &mut ChaCha8Rng, p: &Plan, scale: f64) -> Check {
    let mut worst: f64 = 0.0;
    for _ in 0..p.fft_tiles {
        let x: Vec<Complex64> = (0..64).map(|_| Complex64::new(unit(rng), unit(rng))).collect();
        let f = fft2(&x, 8, false);
        let d = dft2_naive(&x, 8, false);
        let norm = d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let err = f.iter().zip(&d).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() / norm;
        worst = worst.max(err);
    }
    Check::at_most("fft-vs-dft", worst, 1e-10 * scale, format!("{} random 8x8 tiles, relative error", p.fft_tiles))
}

fn random_conv(rng: &mut ChaCha8Rng, p: &Plan) -> (SpatialTensor, SpatialTensor) {
    let m = rng.random_range(1..=p.max_channels);
    let n = rng.random_range(1..=p.max_channels);
    let h = rng.random_range(12..=p.max_side);
    let w = rng.random_range(12..=p.max_side);
    let x = SpatialTensor::image(m, h, w, (0..m * h * w).map(|_| unit(rng)).collect()).expect("sized");
    let wt = SpatialTensor::from_vec([n, m, 3, 3], (0..n * m * 9).map(|_| unit(rng)).collect()).expect("sized");
    (x, wt)
}

fn conv_equivalence(rng: &mut ChaCha8Rng, p: &Plan, scale: f64) -> Result<Check> {
    let spectral = SpectralConfig::new(8, 4);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..p.conv_instances {
        let (x, wt) = random_conv(rng, p);
        let y = spectral_conv(&x, &dense_kernel_set(&wt, &spectral)?, 3)?;
        worst = worst.max(y.max_abs_diff(&spatial_conv_reference(&x, &wt, 1)?)?);
    }
    Ok(Check::at_most(
        "conv-equivalence",
        worst,
        1e-6 * scale,
        format!("{} instances, max abs error, {:.2} s", p.conv_instances, start.elapsed().as_secs_f64()),
    ))
}

fn scheduled_replay(seed: u64) -> Result<Check> {
    let spectral = SpectralConfig::new(8, 4);
    let ks = gen_sparse_kernels(seed, Pattern::Clustered, 16, 3, &spectral);
    let n = 3 * 20 * 20;
    let x = SpatialTensor::image(3, 20, 20, (0..n).map(|i| ((i * 29 % 97) as f64 - 48.0) / 48.0).collect())?;
    let direct = spectral_conv(&x, &ks, 3)?;
    let mut worst: f64 = 0.0;
    for kind in [SchedulerKind::Greedy, SchedulerKind::Random, SchedulerKind::LowestIndex] {
        let s = ScheduledKernels::build(&ks, 8, 4, kind, seed, Exec::Sequential)?;
        worst = worst.max(spectral_conv_scheduled(&x, &s, 3)?.max_abs_diff(&direct)?);
    }
    Ok(Check::at_most("scheduled-conv-replay", worst, 0.0, "table-driven products vs direct, 3 schedulers".into()))
}

fn schedule_validity(seed: u64, p: &Plan) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut invalid = 0usize;
    let mut checked = 0usize;
    for inst in 0..p.schedule_instances {
        let n_par = [8, 64][rng.random_range(0..2)];
        let alpha = [2, 4, 8][rng.random_range(0..3)];
        let r = [1, 4, 10][rng.random_range(0..3)];
        let pattern = if inst % 2 == 0 { Pattern::UniformRandom } else { Pattern::Clustered };
        let spectral = SpectralConfig::new(8, alpha);
        let ks = gen_sparse_kernels(seed.wrapping_add(inst), pattern, n_par, 1, &spectral);
        let group = ks.group(0, 0, n_par);
        let graph = build_graph(&group, spectral.window_len());
        let mut want: Vec<_> = group
            .iter()
            .enumerate()
            .flat_map(|(k, kr)| kr.entries.iter().map(move |&(i, v)| (k, i, v.re.to_bits(), v.im.to_bits())))
            .collect();
        want.sort_unstable();
        for kind in [SchedulerKind::Greedy, SchedulerKind::Random, SchedulerKind::LowestIndex] {
            let s = run_scheduler(kind, &graph, r, inst)?;
            let mut got: Vec<_> = emit_tables(&s, &group)?
                .replay()?
                .into_iter()
                .map(|(k, i, v)| (k, i, v.re.to_bits(), v.im.to_bits()))
                .collect();
            got.sort_unstable();
            checked += 1;
            invalid += usize::from(s.check(&graph).is_err() || got != want);
        }
    }
    Ok(Check::at_most("schedule-validity", invalid as f64, 0.0, format!("{checked} schedules, invalid count")))
}

fn greedy_vs_bruteforce(seed: u64, p: &Plan) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut equal, mut worst) = (0usize, 1.0f64);
    for _ in 0..p.oracle_instances {
        let n_k = rng.random_range(1..=5);
        let kernels: Vec<Vec<u16>> = (0..n_k)
            .map(|_| {
                let nnz = rng.random_range(1..=3);
                rand::seq::index::sample(&mut rng, 9, nnz).into_iter().map(|i| i as u16).collect()
            })
            .collect();
        let r = rng.random_range(1..=2);
        let g = AccessGraph::from_indices(9, kernels);
        let (opt, _) = schedule_bruteforce(&g, r)?;
        let greedy = schedule_greedy(&g, r).len();
        equal += usize::from(greedy == opt);
        worst = worst.max(greedy as f64 / opt as f64);
    }
    let frac = equal as f64 / p.oracle_instances as f64;
    let mut c = Check::at_most(
        "greedy-vs-bruteforce",
        worst,
        1.5,
        format!("{} instances, worst length ratio, optimal on {:.0}% (>= 80%)", p.oracle_instances, frac * 100.0),
    );
    c.pass &= frac >= 0.8;
    Ok(c)
}

/// (M, N, H, P', N', Ps, Ns) with tile grids divisible by Ps.
const SIM_CONFIGS: [(usize, usize, usize, usize, usize, usize, usize); 10] = [
    (2, 4, 12, 2, 2, 4, 4),
    (2, 4, 12, 2, 2, 2, 2),
    (3, 8, 24, 2, 4, 4, 4),
    (3, 8, 24, 4, 4, 8, 8),
    (4, 16, 36, 3, 4, 9, 8),
    (4, 16, 36, 6, 8, 36, 16),
    (1, 8, 18, 3, 2, 3, 4),
    (8, 32, 30, 5, 8, 25, 16),
    (5, 12, 48, 4, 4, 16, 12),
    (2, 64, 6, 1, 64, 1, 64),
];

fn simulator_vs_model(ctx: &Ctx, p: &Plan) -> Result<Check> {
    let spectral = SpectralConfig::new(8, 4);
    let outputs = ctx.cost.accounting.outputs;
    let mut mismatches = 0usize;
    for (i, &(m, n, h, pp, np, ps, ns)) in SIM_CONFIGS.iter().take(p.sim_configs).enumerate() {
        let layer = LayerConfig::new(&format!("cfg{i}"), m, n, h, 3);
        let arch = ArchParams::new(pp, np, 4);
        let st = StreamParams::new(ps, ns);
        let ks = gen_sparse_kernels(ctx.seed.wrapping_add(i as u64), Pattern::Clustered, n, m, &spectral);
        let mut sched = KernelSchedules::build(&ks, np, 4, SchedulerKind::Greedy, ctx.seed, Exec::Sequential)?;
        let want_cycles =
            (tile_grid(&layer, &spectral).count() / pp) as u64 * sched.lengths.iter().flatten().sum::<usize>() as u64;
        let t = ctx.cost.transfers_flexible(&layer, &spectral, &arch, &st);
        let sim = dataflow_simulate(&layer, &spectral, &arch, SimPlan::Flexible(st), outputs, &mut sched)?;
        let ok = [sim.inputs_read, sim.kernels_read, sim.outputs_written] == [t.inputs, t.kernels, t.outputs]
            && sim.compute_cycles == want_cycles
            && sim.is_legal();
        mismatches += usize::from(!ok);
    }
    Ok(Check::at_most(
        "simulator-vs-model",
        mismatches as f64,
        0.0,
        format!("{} configurations, mismatch count", p.sim_configs),
    ))
}

pub fn run(ctx: &Ctx, a: &VerifyArgs) -> Result<bool> {
    let p = plan(a.sizes);
    let scale = a.tolerance_scale;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let checks = vec![
        fft_vs_dft(&mut rng, &p, scale),
        conv_equivalence(&mut rng, &p, scale)?,
        scheduled_replay(ctx.seed)?,
        schedule_validity(ctx.seed, &p)?,
        greedy_vs_bruteforce(ctx.seed, &p)?,
        simulator_vs_model(ctx, &p)?,
    ];
    let mut t = Table::new(SCHEMA, &["check", "measured", "tolerance", "pass", "detail"]);
    for c in &checks {
        println!(
            "{} {}: {:.3e} (tolerance {:.3e}) {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.tolerance,
            c.detail
        );
        t.row(vec![
            c.name.into(),
            format!("{:e}", c.measured),
            format!("{:e}", c.tolerance),
            c.pass.to_string(),
            c.detail.clone(),
        ]);
    }
    let sizes = match a.sizes {
        Sizes::Tiny => "tiny",
        Sizes::Full => "full",
    };
    if ctx.sink.has_dir() {
        ctx.sink.emit("verify", &t.render(&ctx.manifest)?, &json(&ctx.manifest, &Body { sizes, checks: &checks })?)?;
    }
    Ok(checks.iter().all(|c| c.pass))
}
