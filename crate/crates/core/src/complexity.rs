//! On-chip storage (BRAM count) and off-chip transfer models.
//!
//! Three fixed reuse flows are modelled:
//!
//! - Flow #1 keeps kernels and partial sums on chip and streams input tiles,
//!   so inputs are re-read once per kernel group.
//! - Flow #2 keeps input tiles and partial sums on chip and streams kernels,
//!   so kernels are re-read once per tile group.
//! - Flow #3 keeps inputs and kernels on chip and streams partial sums out
//!   and back once per input channel group.
//!
//! The flexible flow interpolates between #1 and #2 with streaming
//! parameters `Ps` (tiles processed before kernels are flushed) and `Ns`
//! (kernels processed before input tiles are flushed).
//!
//! Transfer terms are element counts. Reload factors are whole pass counts
//! (`⌈N/Ns⌉`, `⌈P/Ps⌉` with P the tile-grid count), which coincide with the
//! real-valued ratios whenever the grid and the kernel count divide evenly;
//! [`CostModel::transfers_flexible_nominal`] keeps the real-valued form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{tile_grid, LayerConfig, ModelConfig, SpectralConfig};

/// Memory depth of one BRAM in words.
pub const BRAM_DEPTH: u64 = 1024;

/// Parallelism of the PE array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchParams {
    /// Input tiles processed in parallel (P′).
    pub p_par: usize,
    /// Kernels processed in parallel (N′).
    pub n_par: usize,
    /// Input channels processed in parallel (M′); 1 in the modelled design.
    pub m_par: usize,
    /// Replicas of each input tile buffer (r).
    pub replicas: usize,
}

impl ArchParams {
    pub fn new(p_par: usize, n_par: usize, replicas: usize) -> Self {
        Self { p_par, n_par, m_par: 1, replicas }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in
            [("p_par", self.p_par), ("n_par", self.n_par), ("m_par", self.m_par), ("replicas", self.replicas)]
        {
            if v == 0 {
                return Err(Error::validation("arch", field, "must be at least 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StreamParams {
    /// Input tiles processed before the kernel buffer is flushed.
    pub ps: usize,
    /// Kernels processed before the input buffer is flushed.
    pub ns: usize,
}

impl StreamParams {
    pub fn new(ps: usize, ns: usize) -> Self {
        Self { ps, ns }
    }

    /// `Ps` must be a positive multiple of P′ no larger than the tile count
    /// rounded up to whole P′ groups; `Ns` a positive multiple of N′ no
    /// larger than N.
    pub fn validate(&self, layer: &LayerConfig, spectral: &SpectralConfig, arch: &ArchParams) -> Result<()> {
        let p_max = padded_tiles(layer, spectral, arch);
        if self.ps == 0 || !self.ps.is_multiple_of(arch.p_par) || self.ps > p_max {
            return Err(Error::validation(
                &layer.name,
                "ps",
                format!("{} must be a multiple of P'={} in [P', {}]", self.ps, arch.p_par, p_max),
            ));
        }
        if self.ns == 0 || !self.ns.is_multiple_of(arch.n_par) || self.ns > layer.out_channels {
            return Err(Error::validation(
                &layer.name,
                "ns",
                format!("{} must be a multiple of N'={} in [N', {}]", self.ns, arch.n_par, layer.out_channels),
            ));
        }
        Ok(())
    }
}

/// Tile count rounded up to whole groups of P′ tiles.
pub fn padded_tiles(layer: &LayerConfig, spectral: &SpectralConfig, arch: &ArchParams) -> usize {
    tile_grid(layer, spectral).count().div_ceil(arch.p_par) * arch.p_par
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowId {
    Flow1,
    Flow2,
    Flow3,
    Flexible,
}

impl FlowId {
    pub const FIXED: [FlowId; 3] = [FlowId::Flow1, FlowId::Flow2, FlowId::Flow3];

    pub fn as_str(self) -> &'static str {
        match self {
            FlowId::Flow1 => "flow1",
            FlowId::Flow2 => "flow2",
            FlowId::Flow3 => "flow3",
            FlowId::Flexible => "flexible",
        }
    }
}

impl std::fmt::Display for FlowId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How transferred elements convert to words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WordConvention {
    /// Every transferred element, real or complex, is one word.
    #[default]
    Elements,
    /// Complex spectral data (kernels, Flow #3 partial sums) is two words;
    /// spatial inputs and outputs one word.
    ComplexWords,
}

/// What the output term counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputTraffic {
    /// Full K×K IFFT tiles are written; overlap-add happens off chip.
    #[default]
    Tiles,
    /// Only the h_out×w_out output plane is written.
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Accounting {
    pub words: WordConvention,
    pub outputs: OutputTraffic,
}

/// Off-chip element counts per transfer class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Transfers {
    pub inputs: u64,
    pub kernels: u64,
    pub outputs: u64,
}

impl Transfers {
    pub fn total(&self) -> u64 {
        self.inputs + self.kernels + self.outputs
    }
}

/// Storage and bandwidth of one layer under one flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub layer: String,
    pub flow: FlowId,
    pub n_bram: u64,
    pub transfers_in: u64,
    pub transfers_kernel: u64,
    pub transfers_out: u64,
    /// Bytes per second at the layer's latency budget.
    pub bw: f64,
}

impl CostReport {
    pub fn transfers(&self) -> Transfers {
        Transfers { inputs: self.transfers_in, kernels: self.transfers_kernel, outputs: self.transfers_out }
    }

    pub fn total_transfers(&self) -> u64 {
        self.transfers().total()
    }

    pub fn bw_gbps(&self) -> f64 {
        self.bw / 1e9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBudget {
    pub layer: String,
    /// Seconds.
    pub tau: f64,
    /// Complex multiply-accumulates in the spectral engine, P·M·N·K².
    pub cmp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBudget {
    pub tau_total: f64,
    pub layers: Vec<LayerBudget>,
}

impl LatencyBudget {
    pub fn tau(&self, layer: &str) -> Option<f64> {
        self.layers.iter().find(|b| b.layer == layer).map(|b| b.tau)
    }

    pub fn cmp_of(&self, layer: &str) -> Option<u64> {
        self.layers.iter().find(|b| b.layer == layer).map(|b| b.cmp)
    }
}

/// Spectral-domain work of one layer: P·M·N·K².
pub fn layer_cmp(layer: &LayerConfig, spectral: &SpectralConfig) -> u64 {
    let p = tile_grid(layer, spectral).count() as u64;
    p * layer.in_channels as u64 * layer.out_channels as u64 * spectral.window_len() as u64
}

/// Splits `tau_total` over all layers in proportion to their spectral work.
/// Layers excluded from optimization still receive their share.
pub fn latency_budget(model: &ModelConfig, tau_total: f64) -> Result<LatencyBudget> {
    if !(tau_total > 0.0 && tau_total.is_finite()) {
        return Err(Error::validation(&model.name, "tau_total", "must be positive"));
    }
    let cmps: Vec<u64> = model.layers.iter().map(|l| layer_cmp(l, &model.spectral)).collect();
    let total: u64 = cmps.iter().sum();
    let layers = model
        .layers
        .iter()
        .zip(&cmps)
        .map(|(l, &c)| LayerBudget { layer: l.name.clone(), tau: tau_total * c as f64 / total as f64, cmp: c })
        .collect();
    Ok(LatencyBudget { tau_total, layers })
}

fn div_ceil(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Device and accounting settings shared by all cost evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub accounting: Accounting,
    pub bram_depth: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { accounting: Accounting::default(), bram_depth: BRAM_DEPTH }
    }
}

struct Dims {
    m: u64,
    n: u64,
    hw: u64,
    hw_out: u64,
    tiles: u64,
    tile_area: u64,
    k2: u64,
    nnz: u64,
    r: u64,
    pp: u64,
    np: u64,
    mp: u64,
}

impl Dims {
    fn new(layer: &LayerConfig, spectral: &SpectralConfig, arch: &ArchParams) -> Self {
        let g = tile_grid(layer, spectral);
        Self {
            m: layer.in_channels as u64,
            n: layer.out_channels as u64,
            hw: (layer.h_in * layer.w_in) as u64,
            hw_out: (layer.h_out * layer.w_out) as u64,
            tiles: g.count() as u64,
            tile_area: (g.tile * g.tile) as u64,
            k2: spectral.window_len() as u64,
            nnz: spectral.nnz_per_kernel() as u64,
            r: arch.replicas as u64,
            pp: arch.p_par as u64,
            np: arch.n_par as u64,
            mp: arch.m_par as u64,
        }
    }
}

impl CostModel {
    pub fn new(accounting: Accounting) -> Self {
        Self { accounting, ..Self::default() }
    }

    /// BRAMs required by a fixed flow.
    ///
    /// The partial-sum (Flow #1) and input (Flow #3) depth terms count the
    /// tile grid, P·K² words spread over P′ lines.
    pub fn bram_count(&self, layer: &LayerConfig, spectral: &SpectralConfig, arch: &ArchParams, flow: FlowId) -> u64 {
        let d = Dims::new(layer, spectral, arch);
        let depth = self.bram_depth;
        let input = d.r * d.mp * d.pp;
        let kernels = d.mp * d.np;
        let grid_lines = div_ceil(d.tiles * d.k2, d.pp * depth);
        match flow {
            FlowId::Flow1 => input + kernels + d.np * d.pp * grid_lines,
            FlowId::Flow2 => input + kernels + d.mp * d.pp * div_ceil(d.n * d.k2, d.np * depth),
            FlowId::Flow3 => {
                let psums = d.mp * d.pp;
                let a = input * grid_lines + kernels + psums;
                let b = input + kernels * div_ceil(d.n * d.nnz, d.np * depth) + psums;
                a.min(b)
            }
            FlowId::Flexible => panic!("bram_count takes a fixed flow; use bram_flexible"),
        }
    }

    /// Flow #1 partial-sum blocks per line, `⌈h·w·K² / (P′·h′·w′·depth)⌉`,
    /// computed from the plane area instead of the tile grid. Agrees with
    /// the tile-grid form when tiles divide the plane.
    pub fn flow1_psum_lines_nominal(&self, layer: &LayerConfig, spectral: &SpectralConfig, arch: &ArchParams) -> u64 {
        let d = Dims::new(layer, spectral, arch);
        div_ceil(d.hw * d.k2, d.pp * d.tile_area * self.bram_depth)
    }

    /// Flow #1 partial-sum blocks per line from the tile grid.
    pub fn flow1_psum_lines(&self, layer: &LayerConfig, spectral: &SpectralConfig, arch: &ArchParams) -> u64 {
        let d = Dims::new(layer, spectral, arch);
        div_ceil(d.tiles * d.k2, d.pp * self.bram_depth)
    }

    /// BRAMs required by the flexible flow with streaming parameters `stream`.
    pub fn bram_flexible(
        &self,
        layer: &LayerConfig,
        spectral: &SpectralConfig,
        arch: &ArchParams,
        stream: &StreamParams,
    ) -> u64 {
        let d = Dims::new(layer, spectral, arch);
        let (ps, ns) = (stream.ps as u64, stream.ns as u64);
        let depth = self.bram_depth;
        d.r * d.pp
            + d.np * div_ceil(ns * d.nnz, d.np * depth)
            + d.np * d.pp * div_ceil(ns * ps * d.k2, d.np * d.pp * depth)
    }

    fn output_elements(&self, d: &Dims) -> u64 {
        match self.accounting.outputs {
            OutputTraffic::Tiles => d.n * d.tiles * d.k2,
            OutputTraffic::Spatial => d.n * d.hw_out,
        }
    }

    /// Transfer terms of a fixed flow.
    pub fn transfers(
        &self,
        layer: &LayerConfig,
        spectral: &SpectralConfig,
        arch: &ArchParams,
        flow: FlowId,
    ) -> Transfers {
        let d = Dims::new(layer, spectral, arch);
        let once_in = d.m * d.hw;
        let once_k = d.n * d.m * d.nnz;
        let out = self.output_elements(&d);
        match flow {
            FlowId::Flow1 => Transfers { inputs: once_in * div_ceil(d.n, d.np), kernels: once_k, outputs: out },
            FlowId::Flow2 => Transfers { inputs: once_in, kernels: once_k * div_ceil(d.tiles, d.pp), outputs: out },
            FlowId::Flow3 => Transfers { inputs: once_in, kernels: once_k, outputs: out * 2 * div_ceil(d.m, d.mp) },
            FlowId::Flexible => panic!("transfers takes a fixed flow; use transfers_flexible"),
        }
    }

    /// Transfer terms of the flexible flow.
    pub fn transfers_flexible(
        &self,
        layer: &LayerConfig,
        spectral: &SpectralConfig,
        arch: &ArchParams,
        stream: &StreamParams,
    ) -> Transfers {
        let d = Dims::new(layer, spectral, arch);
        Transfers {
            inputs: d.m * d.hw * div_ceil(d.n, stream.ns as u64),
            kernels: d.n * d.m * d.nnz * div_ceil(d.tiles, stream.ps as u64),
            outputs: self.output_elements(&d),
        }
    }

    /// Real-valued flexible-flow terms with reload factors `N/Ns` and
    /// `h·w/(Ps·h′·w′)`, outputs counted per plane area.
    pub fn transfers_flexible_nominal(
        &self,
        layer: &LayerConfig,
        spectral: &SpectralConfig,
        arch: &ArchParams,
        stream: &StreamParams,
    ) -> [f64; 3] {
        let d = Dims::new(layer, spectral, arch);
        let (m, n, hw, area) = (d.m as f64, d.n as f64, d.hw as f64, d.tile_area as f64);
        let out = match self.accounting.outputs {
            OutputTraffic::Tiles => n * hw / area * d.k2 as f64,
            OutputTraffic::Spatial => n * d.hw_out as f64,
        };
        [m * hw * n / stream.ns as f64, n * m * d.nnz as f64 * hw / (stream.ps as f64 * area), out]
    }

    /// Words moved for `t` under `flow`, applying the word convention.
    pub fn words(&self, t: &Transfers, flow: FlowId) -> f64 {
        match self.accounting.words {
            WordConvention::Elements => t.total() as f64,
            WordConvention::ComplexWords => {
                let out = if flow == FlowId::Flow3 { 2 * t.outputs } else { t.outputs };
                (t.inputs + 2 * t.kernels + out) as f64
            }
        }
    }

    fn bytes_per_second(&self, spectral: &SpectralConfig, t: &Transfers, flow: FlowId, tau: f64) -> f64 {
        spectral.word_bytes() * self.words(t, flow) / tau
    }

    /// Cost of a fixed flow at latency `tau` seconds.
    pub fn bandwidth(
        &self,
        layer: &LayerConfig,
        spectral: &SpectralConfig,
        arch: &ArchParams,
        flow: FlowId,
        tau: f64,
    ) -> CostReport {
        let t = self.transfers(layer, spectral, arch, flow);
        self.report(layer, flow, self.bram_count(layer, spectral, arch, flow), t, spectral, tau)
    }

    /// Cost of the flexible flow at latency `tau` seconds.
    pub fn bandwidth_flexible(
        &self,
        layer: &LayerConfig,
        spectral: &SpectralConfig,
        arch: &ArchParams,
        stream: &StreamParams,
        tau: f64,
    ) -> CostReport {
        let t = self.transfers_flexible(layer, spectral, arch, stream);
        let n_bram = self.bram_flexible(layer, spectral, arch, stream);
        self.report(layer, FlowId::Flexible, n_bram, t, spectral, tau)
    }

    fn report(
        &self,
        layer: &LayerConfig,
        flow: FlowId,
        n_bram: u64,
        t: Transfers,
        spectral: &SpectralConfig,
        tau: f64,
    ) -> CostReport {
        assert!(tau > 0.0, "latency must be positive");
        CostReport {
            layer: layer.name.clone(),
            flow,
            n_bram,
            transfers_in: t.inputs,
            transfers_kernel: t.kernels,
            transfers_out: t.outputs,
            bw: self.bytes_per_second(spectral, &t, flow, tau),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::vgg16_k8;

    fn conv2_1() -> LayerConfig {
        LayerConfig::new("conv2_1", 64, 128, 112, 3)
    }

    fn k8() -> SpectralConfig {
        SpectralConfig::new(8, 4)
    }

    #[test]
    fn flow1_bram_conv2_1() {
        let cm = CostModel::default();
        let arch = ArchParams::new(9, 64, 10);
        // 90 input + 64 kernel + 576·⌈2.42⌉ partial-sum BRAMs
        assert_eq!(cm.bram_count(&conv2_1(), &k8(), &arch, FlowId::Flow1), 90 + 64 + 1728);
        assert_eq!(cm.flow1_psum_lines_nominal(&conv2_1(), &k8(), &arch), 3);
    }

    #[test]
    fn unit_arch_small_layer_needs_three_brams() {
        let cm = CostModel::default();
        let arch = ArchParams::new(1, 1, 1);
        let l = LayerConfig::new("tiny", 1, 4, 6, 3);
        assert_eq!(cm.bram_count(&l, &k8(), &arch, FlowId::Flow2), 3);
    }

    #[test]
    fn flow3_takes_the_smaller_branch() {
        let cm = CostModel::default();
        let arch = ArchParams::new(4, 16, 4);
        let s = k8();
        // Large plane: buffering every input tile on chip is very expensive,
        // so the kernel-depth branch wins.
        let l = LayerConfig::new("big", 16, 64, 600, 3);
        let d = Dims::new(&l, &s, &arch);
        let depth = cm.bram_depth;
        let a = d.r * d.pp * div_ceil(d.tiles * d.k2, d.pp * depth) + d.np + d.pp;
        let b = d.r * d.pp + d.np * div_ceil(d.n * d.nnz, d.np * depth) + d.pp;
        assert!(b < a);
        assert_eq!(cm.bram_count(&l, &s, &arch, FlowId::Flow3), b);
        // Tiny plane with many kernels: the input branch wins.
        let l = LayerConfig::new("small", 16, 65536, 6, 3);
        let d = Dims::new(&l, &s, &arch);
        let a = d.r * d.pp * div_ceil(d.tiles * d.k2, d.pp * depth) + d.np + d.pp;
        let b = d.r * d.pp + d.np * div_ceil(d.n * d.nnz, d.np * depth) + d.pp;
        assert!(a < b);
        assert_eq!(cm.bram_count(&l, &s, &arch, FlowId::Flow3), a);
    }

    #[test]
    fn flow1_input_term_conv2_1() {
        let cm = CostModel::default();
        let arch = ArchParams::new(9, 64, 10);
        let t = cm.transfers(&conv2_1(), &k8(), &arch, FlowId::Flow1);
        assert_eq!(t.inputs, 64 * 112 * 112 * 2);
        // single kernel group: one pass
        let arch = ArchParams::new(9, 128, 10);
        assert_eq!(cm.transfers(&conv2_1(), &k8(), &arch, FlowId::Flow1).inputs, 64 * 112 * 112);
    }

    #[test]
    fn flow3_output_factor() {
        let cm = CostModel::new(Accounting { outputs: OutputTraffic::Spatial, ..Default::default() });
        let arch = ArchParams::new(9, 64, 10);
        let t = cm.transfers(&conv2_1(), &k8(), &arch, FlowId::Flow3);
        assert_eq!(t.outputs, 128 * 112 * 112 * 2 * 64);
        let one = LayerConfig::new("toy", 1, 4, 12, 3);
        assert_eq!(cm.transfers(&one, &k8(), &arch, FlowId::Flow3).outputs, 2 * 4 * 144);
    }

    #[test]
    fn flexible_bram_conv5() {
        let cm = CostModel::default();
        let arch = ArchParams::new(9, 64, 10);
        let l = LayerConfig::new("conv5_1", 512, 512, 14, 3);
        assert_eq!(cm.bram_flexible(&l, &k8(), &arch, &StreamParams::new(9, 512)), 90 + 64 + 576);
    }

    #[test]
    fn flexible_bram_minimal_stream() {
        let cm = CostModel::default();
        let arch = ArchParams::new(2, 2, 1);
        let l = LayerConfig::new("t", 1, 4, 12, 3);
        assert_eq!(cm.bram_flexible(&l, &k8(), &arch, &StreamParams::new(2, 2)), 2 + 2 + 4);
    }

    #[test]
    fn doubling_ns_never_shrinks_kernel_term() {
        let cm = CostModel::default();
        let s = k8();
        for n_par in [16, 64] {
            let arch = ArchParams::new(9, n_par, 10);
            let mut ns = n_par;
            while ns * 2 <= 4096 * 8 {
                let kernel_term = |ns: usize| {
                    let d = Dims::new(&LayerConfig::new("x", 8, 1 << 16, 14, 3), &s, &arch);
                    d.np * div_ceil(ns as u64 * d.nnz, d.np * cm.bram_depth)
                };
                assert!(kernel_term(2 * ns) >= kernel_term(ns));
                ns *= 2;
            }
        }
    }

    #[test]
    fn flexible_extremes_match_fixed_flow_terms() {
        let cm = CostModel::default();
        let s = k8();
        let model = vgg16_k8();
        for arch in [ArchParams::new(9, 64, 10), ArchParams::new(4, 16, 4)] {
            for l in model.optimized_layers() {
                let p = padded_tiles(l, &s, &arch);
                let f1 = cm.transfers(l, &s, &arch, FlowId::Flow1);
                let f2 = cm.transfers(l, &s, &arch, FlowId::Flow2);
                let ext1 = cm.transfers_flexible(l, &s, &arch, &StreamParams::new(p, arch.n_par));
                let ext2 = cm.transfers_flexible(l, &s, &arch, &StreamParams::new(arch.p_par, l.out_channels));
                assert_eq!(ext1, f1, "{}", l.name);
                assert_eq!(ext2, f2, "{}", l.name);
            }
        }
    }

    #[test]
    fn full_streams_transfer_everything_once() {
        let cm = CostModel::default();
        let s = k8();
        let arch = ArchParams::new(9, 64, 10);
        let l = conv2_1();
        let t = cm.transfers_flexible(&l, &s, &arch, &StreamParams::new(padded_tiles(&l, &s, &arch), 128));
        assert_eq!(t.inputs, 64 * 112 * 112);
        assert_eq!(t.kernels, 128 * 64 * 16);
    }

    #[test]
    fn nominal_and_pass_forms_agree_on_divisible_grids() {
        let cm = CostModel::default();
        let s = k8();
        let arch = ArchParams::new(2, 4, 2);
        let l = LayerConfig::new("d", 3, 16, 24, 3); // 4x4 tiles
        for (ps, ns) in [(2, 4), (4, 8), (8, 16), (16, 16)] {
            let st = StreamParams::new(ps, ns);
            let t = cm.transfers_flexible(&l, &s, &arch, &st);
            let nom = cm.transfers_flexible_nominal(&l, &s, &arch, &st);
            assert_eq!([t.inputs as f64, t.kernels as f64, t.outputs as f64], nom);
        }
        assert_eq!(cm.flow1_psum_lines(&l, &s, &arch), cm.flow1_psum_lines_nominal(&l, &s, &arch));
    }

    #[test]
    fn complex_words_double_kernels() {
        let s = k8();
        let arch = ArchParams::new(9, 64, 10);
        let l = conv2_1();
        let e = CostModel::default().bandwidth(&l, &s, &arch, FlowId::Flow1, 1.0);
        let c = CostModel::new(Accounting { words: WordConvention::ComplexWords, ..Default::default() }).bandwidth(
            &l,
            &s,
            &arch,
            FlowId::Flow1,
            1.0,
        );
        let extra = 2.0 * e.transfers_kernel as f64;
        assert!((c.bw - e.bw - extra).abs() < 1e-6);
    }

    #[test]
    fn latency_budget_split() {
        let mut m = vgg16_k8();
        m.layers.truncate(2);
        m.layers[0] = m.layers[1].clone();
        m.layers[0].name = "twin".into();
        let b = latency_budget(&m, 0.02).unwrap();
        assert!((b.layers[0].tau - 0.01).abs() < 1e-15);
        assert!((b.layers[1].tau - 0.01).abs() < 1e-15);
        assert!(latency_budget(&m, 0.0).is_err());
    }

    #[test]
    fn vgg16_budget_sums_and_conv5_is_smallest() {
        let m = vgg16_k8();
        let b = latency_budget(&m, 0.02).unwrap();
        let sum: f64 = b.layers.iter().map(|l| l.tau).sum();
        assert!((sum - 0.02).abs() < 1e-15);
        let min =
            m.optimized_layers().min_by(|a, c| b.tau(&a.name).unwrap().total_cmp(&b.tau(&c.name).unwrap())).unwrap();
        assert!(min.name.starts_with("conv5"));
    }

    #[test]
    fn stream_validation() {
        let s = k8();
        let arch = ArchParams::new(9, 64, 10);
        let l = LayerConfig::new("conv3_1", 128, 256, 56, 3); // 100 tiles -> 108 padded
        assert!(StreamParams::new(108, 128).validate(&l, &s, &arch).is_ok());
        assert!(StreamParams::new(117, 128).validate(&l, &s, &arch).is_err());
        assert!(StreamParams::new(10, 128).validate(&l, &s, &arch).is_err());
        assert!(StreamParams::new(9, 96).validate(&l, &s, &arch).is_err());
        assert!(StreamParams::new(9, 512).validate(&l, &s, &arch).is_err());
    }
}
