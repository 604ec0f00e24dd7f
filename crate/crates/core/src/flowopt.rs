//! Scan over PE-array parallelism (P′, N′) and per-layer streaming
//! parameters (Ps, Ns) minimising the worst-layer bandwidth under a BRAM
//! budget.
//!
//! For each architecture every layer is scanned independently: all
//! multiples of P′ up to the padded tile count for `Ps`, all multiples of N′
//! up to N for `Ns`. A point is feasible when its flexible-flow BRAM count
//! is strictly below the budget. The layer keeps the feasible point with
//! the least bandwidth (ties: smaller Ns, then smaller Ps). The
//! architecture's score is the largest per-layer bandwidth over the
//! optimized layers.
//!
//! When several architectures share the same worst-layer bandwidth, which
//! happens whenever a layer with compulsory-only traffic dominates, the
//! architecture with fewer ideal compute cycles wins, then smaller N′, then
//! smaller P′.

use serde::{Deserialize, Serialize};

use crate::complexity::{
    latency_budget, padded_tiles, ArchParams, CostModel, CostReport, FlowId, LatencyBudget, StreamParams, Transfers,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::netmodel::{tile_grid, LayerConfig, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub p_par: Vec<usize>,
    pub n_par: Vec<usize>,
    pub replicas: usize,
    pub bram_budget: u64,
    /// Seconds.
    pub tau_total: f64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            p_par: vec![4, 8, 9, 16],
            n_par: vec![16, 32, 64, 128],
            replicas: 10,
            bram_budget: 2160,
            tau_total: 0.020,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.p_par.is_empty() || self.p_par.contains(&0) {
            return Err(Error::validation("search space", "p_par", "needs nonzero candidates"));
        }
        if self.n_par.is_empty() || self.n_par.contains(&0) {
            return Err(Error::validation("search space", "n_par", "needs nonzero candidates"));
        }
        if self.replicas == 0 {
            return Err(Error::validation("search space", "replicas", "must be at least 1"));
        }
        if self.bram_budget == 0 {
            return Err(Error::validation("search space", "bram_budget", "must be positive"));
        }
        if !(self.tau_total > 0.0 && self.tau_total.is_finite()) {
            return Err(Error::validation("search space", "tau_total", "must be positive"));
        }
        Ok(())
    }

    /// Candidate architectures in scan order (N′ outer, P′ inner, both ascending).
    pub fn archs(&self) -> Vec<ArchParams> {
        let mut n = self.n_par.clone();
        let mut p = self.p_par.clone();
        n.sort_unstable();
        n.dedup();
        p.sort_unstable();
        p.dedup();
        n.iter()
            .flat_map(|&np| p.iter().map(move |&pp| (np, pp)))
            .map(|(np, pp)| ArchParams::new(pp, np, self.replicas))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowChoice {
    pub layer: String,
    pub flow: FlowId,
    pub stream: StreamParams,
    pub n_bram: u64,
    /// Bytes per second.
    pub bw: f64,
    /// Seconds.
    pub tau: f64,
    pub transfers: Transfers,
    /// Fixed flow with the fewest BRAMs at this architecture, and its count.
    pub min_fixed: (FlowId, u64),
}

impl FlowChoice {
    pub fn bw_gbps(&self) -> f64 {
        self.bw / 1e9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub arch: ArchParams,
    pub per_layer: Vec<FlowChoice>,
    /// Bytes per second.
    pub bw_max: f64,
    pub bram_budget: u64,
    /// Σ ⌈P/P′⌉·⌈N/N′⌉·M·nnz over optimized layers.
    pub compute_cycles: u64,
    pub budget: LatencyBudget,
}

impl OptResult {
    pub fn layer(&self, name: &str) -> Option<&FlowChoice> {
        self.per_layer.iter().find(|c| c.layer == name)
    }

    pub fn total_transfers(&self) -> u64 {
        self.per_layer.iter().map(|c| c.transfers.total()).sum()
    }

    pub fn bw_max_gbps(&self) -> f64 {
        self.bw_max / 1e9
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("OptResult serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Ideal PE cycles of one layer: every tile group meets every kernel group
/// on every input channel, one nonzero per cycle per PE.
pub fn ideal_cycles(layer: &LayerConfig, model: &ModelConfig, arch: &ArchParams) -> u64 {
    let p = tile_grid(layer, &model.spectral).count() as u64;
    p.div_ceil(arch.p_par as u64)
        * (layer.out_channels as u64).div_ceil(arch.n_par as u64)
        * layer.in_channels as u64
        * model.spectral.nnz_per_kernel() as u64
}

/// Best feasible streaming parameters of one layer at a fixed architecture.
pub fn optimize_layer(
    layer: &LayerConfig,
    model: &ModelConfig,
    arch: &ArchParams,
    cost: &CostModel,
    bram_budget: u64,
    tau: f64,
) -> Option<FlowChoice> {
    let s = &model.spectral;
    if arch.n_par > layer.out_channels {
        return None;
    }
    let p_max = padded_tiles(layer, s, arch);
    let mut best: Option<(u64, StreamParams, u64)> = None;
    for ns in (arch.n_par..=layer.out_channels).step_by(arch.n_par) {
        for ps in (arch.p_par..=p_max).step_by(arch.p_par) {
            let st = StreamParams::new(ps, ns);
            let n_bram = cost.bram_flexible(layer, s, arch, &st);
            if n_bram >= bram_budget {
                continue;
            }
            let t = cost.transfers_flexible(layer, s, arch, &st);
            let w = cost.words(&t, FlowId::Flexible) as u64;
            if best.is_none_or(|(bw, _, _)| w < bw) {
                best = Some((w, st, n_bram));
            }
        }
    }
    let (_, stream, n_bram) = best?;
    let report = cost.bandwidth_flexible(layer, s, arch, &stream, tau);
    let min_fixed = FlowId::FIXED
        .iter()
        .map(|&f| (f, cost.bram_count(layer, s, arch, f)))
        .min_by_key(|&(f, n)| (n, f))
        .expect("three fixed flows");
    Some(FlowChoice {
        layer: layer.name.clone(),
        flow: FlowId::Flexible,
        stream,
        n_bram,
        bw: report.bw,
        tau,
        transfers: report.transfers(),
        min_fixed,
    })
}

/// Optimizes every layer at one architecture. Fails with the first layer
/// that has no feasible point.
pub fn optimize_arch(
    model: &ModelConfig,
    arch: &ArchParams,
    space: &SearchSpace,
    cost: &CostModel,
) -> Result<OptResult> {
    let budget = latency_budget(model, space.tau_total)?;
    optimize_arch_with(model, arch, space, cost, &budget)
}

fn optimize_arch_with(
    model: &ModelConfig,
    arch: &ArchParams,
    space: &SearchSpace,
    cost: &CostModel,
    budget: &LatencyBudget,
) -> Result<OptResult> {
    let mut per_layer = Vec::new();
    let mut compute_cycles = 0;
    for layer in model.optimized_layers() {
        let tau = budget.tau(&layer.name).expect("budget covers every layer");
        let choice = optimize_layer(layer, model, arch, cost, space.bram_budget, tau)
            .ok_or_else(|| Error::Infeasible { layer: layer.name.clone(), budget: space.bram_budget })?;
        compute_cycles += ideal_cycles(layer, model, arch);
        per_layer.push(choice);
    }
    let bw_max = per_layer.iter().map(|c| c.bw).fold(0.0, f64::max);
    Ok(OptResult {
        arch: *arch,
        per_layer,
        bw_max,
        bram_budget: space.bram_budget,
        compute_cycles,
        budget: budget.clone(),
    })
}

/// Full scan over the search space.
pub fn optimize(model: &ModelConfig, space: &SearchSpace, cost: &CostModel, exec: Exec) -> Result<OptResult> {
    model.validate()?;
    space.validate()?;
    let budget = latency_budget(model, space.tau_total)?;
    let archs = space.archs();
    let results = exec.map(&archs, |arch| optimize_arch_with(model, arch, space, cost, &budget));
    let mut best: Option<OptResult> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let key = |o: &OptResult| (o.compute_cycles, o.arch.n_par, o.arch.p_par);
                        match r.bw_max.total_cmp(&b.bw_max) {
                            std::cmp::Ordering::Less => true,
                            std::cmp::Ordering::Equal => key(&r) < key(b),
                            std::cmp::Ordering::Greater => false,
                        }
                    }
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("nonempty search space"))
}

/// Fixed-flow reports for every optimized layer, in flow order 1, 2, 3.
pub fn evaluate_fixed_flows(
    model: &ModelConfig,
    arch: &ArchParams,
    cost: &CostModel,
    budget: &LatencyBudget,
) -> Vec<[CostReport; 3]> {
    model
        .optimized_layers()
        .map(|l| {
            let tau = budget.tau(&l.name).expect("budget covers every layer");
            FlowId::FIXED.map(|f| cost.bandwidth(l, &model.spectral, arch, f, tau))
        })
        .collect()
}

/// Evaluates user-given streaming parameters at one architecture, e.g. a
/// published configuration, without feasibility filtering.
pub fn evaluate_streams(
    model: &ModelConfig,
    arch: &ArchParams,
    cost: &CostModel,
    budget: &LatencyBudget,
    streams: &[(&str, StreamParams)],
) -> Result<Vec<CostReport>> {
    streams
        .iter()
        .map(|(name, st)| {
            let l = model.layer(name).ok_or_else(|| Error::validation(name, "layer", "not in model"))?;
            st.validate(l, &model.spectral, arch)?;
            let tau = budget.tau(name).expect("budget covers every layer");
            Ok(cost.bandwidth_flexible(l, &model.spectral, arch, st, tau))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{vgg16_k8, SpectralConfig};

    #[test]
    fn published_streams_at_measured_bram_use() {
        let model = vgg16_k8();
        let space = SearchSpace { bram_budget: 1469, ..Default::default() };
        let r = optimize_arch(&model, &ArchParams::new(9, 64, 10), &space, &CostModel::default()).unwrap();
        let want = [(243, 64), (126, 128), (108, 128), (27, 512), (9, 512)];
        for (prefix, (ps, ns)) in ["conv1", "conv2", "conv3", "conv4", "conv5"].iter().zip(want) {
            for c in r.per_layer.iter().filter(|c| c.layer.starts_with(prefix)) {
                assert_eq!((c.stream.ps, c.stream.ns), (ps, ns), "{}", c.layer);
            }
        }
    }

    #[test]
    fn everything_fits_means_single_pass() {
        let mut model = vgg16_k8();
        model.layers = vec![LayerConfig::new("solo", 8, 32, 18, 3)];
        let space = SearchSpace { p_par: vec![3], n_par: vec![16], bram_budget: 1 << 20, ..Default::default() };
        let r = optimize(&model, &space, &CostModel::default(), Exec::Sequential).unwrap();
        let c = &r.per_layer[0];
        assert_eq!((c.stream.ps, c.stream.ns), (9, 32));
        assert_eq!(c.transfers.inputs, 8 * 18 * 18);
        assert_eq!(c.transfers.kernels, 32 * 8 * 16);
    }

    #[test]
    fn infeasible_names_layer() {
        let model = vgg16_k8();
        let space = SearchSpace { bram_budget: 50, ..Default::default() };
        match optimize(&model, &space, &CostModel::default(), Exec::Sequential) {
            Err(Error::Infeasible { layer, budget }) => {
                assert_eq!(budget, 50);
                assert!(model.layer(&layer).is_some());
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn choices_recompute_via_cost_model() {
        let model = vgg16_k8();
        let space = SearchSpace::default();
        let cost = CostModel::default();
        let r = optimize(&model, &space, &cost, Exec::Parallel).unwrap();
        for c in &r.per_layer {
            let l = model.layer(&c.layer).unwrap();
            assert!(c.n_bram < space.bram_budget);
            let rep = cost.bandwidth_flexible(l, &model.spectral, &r.arch, &c.stream, c.tau);
            assert_eq!(rep.bw, c.bw);
            assert_eq!(rep.n_bram, c.n_bram);
        }
        let max = r.per_layer.iter().map(|c| c.bw).fold(0.0, f64::max);
        assert_eq!(max, r.bw_max);
        assert!(r.layer("conv1_1").is_none());
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let model = vgg16_k8();
        let space = SearchSpace::default();
        let cost = CostModel::default();
        let a = optimize(&model, &space, &cost, Exec::Sequential).unwrap();
        let b = optimize(&model, &space, &cost, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn json_round_trip() {
        let model = vgg16_k8();
        let space = SearchSpace { p_par: vec![9], n_par: vec![64], ..Default::default() };
        let r = optimize(&model, &space, &CostModel::default(), Exec::Sequential).unwrap();
        assert_eq!(OptResult::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn fixed_flow_ordering_on_vgg16() {
        let model = vgg16_k8();
        let cost = CostModel::default();
        let arch = ArchParams::new(9, 64, 10);
        let budget = latency_budget(&model, 0.02).unwrap();
        let rows = evaluate_fixed_flows(&model, &arch, &cost, &budget);
        let sum = |f: usize| rows.iter().map(|r| r[f].total_transfers()).sum::<u64>();
        assert!(sum(2) > sum(0) && sum(2) > sum(1));
        for (l, r) in model.optimized_layers().zip(&rows) {
            if l.name.starts_with("conv4") {
                assert!(r[0].total_transfers() < r[1].total_transfers(), "{}", l.name);
            }
            assert!(r[0].n_bram > r[1].n_bram, "{}", l.name);
        }
    }

    #[test]
    fn unit_depth_model_has_no_kernel_reuse_penalty() {
        let s = SpectralConfig::new(8, 4);
        let l = LayerConfig::new("toy", 1, 4, 12, 3);
        let cost = CostModel::default();
        let arch = ArchParams::new(1, 1, 1);
        assert_eq!(
            cost.transfers(&l, &s, &arch, FlowId::Flow3).outputs,
            2 * cost.transfers(&l, &s, &arch, FlowId::Flow1).outputs
        );
    }
}
