//! Event-level walk of the streaming controller over one layer.
//!
//! Flexible plan, `Ms = M`:
//!
//! ```text
//! for each kernel block of Ns kernels:
//!   for each tile block of Ps tiles:
//!     for each input channel m:
//!       READ KERNEL   the block's kernels of channel m
//!       for each group of P′ tiles in the block:
//!         READ INPUT  those tiles of channel m
//!         for each group of N′ kernels in the block:
//!           CONV, DONE CONV
//!     PROC IFFT, WRITE OUT   the block's outputs
//! DONE
//! ```
//!
//! Flow #3 keeps all inputs and kernels of a channel on chip and evicts the
//! partial sums after every channel; they are written out and read back
//! once per channel.
//!
//! Transfers are counted per element from the layer geometry (tiles at the
//! image border are clipped), independently of the closed-form model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::conv::ScheduledKernels;
use crate::complexity::{ArchParams, OutputTraffic, StreamParams};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::netmodel::{tile_grid, LayerConfig, SparseKernelSet, SpectralConfig};
use crate::scheduler::{build_graph, run_scheduler, SchedulerKind};

/// Entries of the state log kept verbatim; transitions are always counted.
pub const LOG_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum State {
    Idle,
    ReadKernel,
    ReadInput,
    Conv,
    DoneConv,
    ProcIfft,
    WriteOut,
    Done,
}

impl State {
    pub fn can_go_to(self, next: State) -> bool {
        use State::*;
        matches!(
            (self, next),
            (Idle, ReadKernel)
                | (ReadKernel, ReadInput)
                | (ReadInput, Conv)
                | (Conv, DoneConv)
                | (DoneConv, Conv | ReadInput | ReadKernel | ProcIfft)
                | (ProcIfft, WriteOut)
                | (WriteOut, ReadKernel | Done)
        )
    }
}

/// Schedule lengths for the CONV state.
pub trait ScheduleProvider {
    /// Cycles to stream kernel group `group` (global index, N′ kernels
    /// each) of input channel `in_ch` against one tile group.
    fn cycles(&mut self, in_ch: usize, group: usize) -> usize;
}

/// Same length for every group, e.g. the ideal K²/α.
#[derive(Debug, Clone, Copy)]
pub struct ConstantSchedule(pub usize);

impl ScheduleProvider for ConstantSchedule {
    fn cycles(&mut self, _: usize, _: usize) -> usize {
        self.0
    }
}

/// Precomputed lengths `[in_ch][group]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSchedules {
    pub lengths: Vec<Vec<usize>>,
}

impl KernelSchedules {
    /// Schedules every (channel, group) of `kernels`. The random baseline
    /// uses seed `seed + in_ch·groups + group`.
    pub fn build(
        kernels: &SparseKernelSet,
        n_par: usize,
        r: usize,
        scheduler: SchedulerKind,
        seed: u64,
        exec: Exec,
    ) -> Result<Self> {
        let groups = kernels.n_groups(n_par);
        let window = kernels.spectral.window_len();
        let channels: Vec<usize> = (0..kernels.n_in).collect();
        let lengths = exec
            .map(&channels, |&c| {
                (0..groups)
                    .map(|g| {
                        let graph = build_graph(&kernels.group(c, g, n_par), window);
                        run_scheduler(scheduler, &graph, r, seed.wrapping_add((c * groups + g) as u64)).map(|s| s.len())
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lengths })
    }

    pub fn from_tables(s: &ScheduledKernels) -> Self {
        Self { lengths: s.tables.iter().map(|row| row.iter().map(|t| t.n_cycles()).collect()).collect() }
    }
}

impl ScheduleProvider for KernelSchedules {
    fn cycles(&mut self, in_ch: usize, group: usize) -> usize {
        self.lengths[in_ch][group]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimPlan {
    Flexible(StreamParams),
    Flow3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub layer: String,
    pub plan: SimPlan,
    pub inputs_read: u64,
    pub kernels_read: u64,
    pub outputs_written: u64,
    pub psums_written: u64,
    pub psums_read: u64,
    pub compute_cycles: u64,
    /// Number of CONV visits (tile group × kernel group × channel).
    pub conv_steps: u64,
    pub transitions: BTreeMap<String, u64>,
    pub log: Vec<State>,
    pub log_truncated: bool,
}

impl SimTrace {
    /// Checks every recorded transition against the controller graph.
    pub fn is_legal(&self) -> bool {
        let logged = self.log.windows(2).all(|w| w[0].can_go_to(w[1]));
        let starts = self.log.first() == Some(&State::Idle);
        let ends = self.log_truncated || self.log.last() == Some(&State::Done);
        logged && starts && ends
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }
}

struct Walker {
    state: State,
    trace: SimTrace,
}

impl Walker {
    fn go(&mut self, next: State) {
        assert!(self.state.can_go_to(next), "illegal transition {:?} -> {:?}", self.state, next);
        *self.trace.transitions.entry(format!("{:?}->{:?}", self.state, next)).or_insert(0) += 1;
        if self.trace.log.len() < LOG_LIMIT {
            self.trace.log.push(next);
        } else {
            self.trace.log_truncated = true;
        }
        self.state = next;
    }
}

/// Geometry of one tile: clipped input area and output area.
struct TileAreas {
    input: Vec<u64>,
    spatial_out: Vec<u64>,
}

fn tile_areas(layer: &LayerConfig, spectral: &SpectralConfig) -> TileAreas {
    let g = tile_grid(layer, spectral);
    let t = g.tile;
    let mut input = Vec::with_capacity(g.count());
    let mut spatial_out = Vec::with_capacity(g.count());
    for row in 0..g.tiles_h {
        for col in 0..g.tiles_w {
            let ih = t.min(layer.h_in - row * t) as u64;
            let iw = t.min(layer.w_in - col * t) as u64;
            input.push(ih * iw);
            let oh = t.min(layer.h_out.saturating_sub(row * t)) as u64;
            let ow = t.min(layer.w_out.saturating_sub(col * t)) as u64;
            spatial_out.push(oh * ow);
        }
    }
    TileAreas { input, spatial_out }
}

/// Simulates one layer under `plan`.
pub fn dataflow_simulate(
    layer: &LayerConfig,
    spectral: &SpectralConfig,
    arch: &ArchParams,
    plan: SimPlan,
    outputs: OutputTraffic,
    schedules: &mut dyn ScheduleProvider,
) -> Result<SimTrace> {
    layer.validate()?;
    spectral.validate()?;
    spectral.validate_for(layer)?;
    arch.validate()?;
    if arch.m_par != 1 {
        return Err(Error::validation(&layer.name, "m_par", "the controller processes channels serially"));
    }
    if let SimPlan::Flexible(st) = plan {
        st.validate(layer, spectral, arch)?;
    }
    let areas = tile_areas(layer, spectral);
    let p = areas.input.len();
    let k2 = spectral.window_len() as u64;
    let nnz = spectral.nnz_per_kernel() as u64;
    let out_area = |tiles: std::ops::Range<usize>| -> u64 {
        match outputs {
            OutputTraffic::Tiles => tiles.len() as u64 * k2,
            OutputTraffic::Spatial => areas.spatial_out[tiles].iter().sum(),
        }
    };
    let mut w = Walker {
        state: State::Idle,
        trace: SimTrace {
            layer: layer.name.clone(),
            plan,
            inputs_read: 0,
            kernels_read: 0,
            outputs_written: 0,
            psums_written: 0,
            psums_read: 0,
            compute_cycles: 0,
            conv_steps: 0,
            transitions: BTreeMap::new(),
            log: vec![State::Idle],
            log_truncated: false,
        },
    };
    let (m, n) = (layer.in_channels, layer.out_channels);
    let (pp, np) = (arch.p_par, arch.n_par);

    match plan {
        SimPlan::Flexible(st) => {
            for k_lo in (0..n).step_by(st.ns) {
                let k_hi = (k_lo + st.ns).min(n);
                let groups = (k_lo / np)..k_hi.div_ceil(np);
                for t_lo in (0..p).step_by(st.ps) {
                    let t_hi = (t_lo + st.ps).min(p);
                    for c in 0..m {
                        w.go(State::ReadKernel);
                        w.trace.kernels_read += (k_hi - k_lo) as u64 * nnz;
                        for g_lo in (t_lo..t_hi).step_by(pp) {
                            let g_hi = (g_lo + pp).min(t_hi);
                            w.go(State::ReadInput);
                            w.trace.inputs_read += areas.input[g_lo..g_hi].iter().sum::<u64>();
                            for g in groups.clone() {
                                w.go(State::Conv);
                                w.trace.compute_cycles += schedules.cycles(c, g) as u64;
                                w.trace.conv_steps += 1;
                                w.go(State::DoneConv);
                            }
                        }
                    }
                    w.go(State::ProcIfft);
                    w.go(State::WriteOut);
                    w.trace.outputs_written += (k_hi - k_lo) as u64 * out_area(t_lo..t_hi);
                }
            }
        }
        SimPlan::Flow3 => {
            let groups = n.div_ceil(np);
            let plane = out_area(0..p) * n as u64;
            for c in 0..m {
                w.go(State::ReadKernel);
                w.trace.kernels_read += n as u64 * nnz;
                w.go(State::ReadInput);
                w.trace.inputs_read += areas.input.iter().sum::<u64>();
                w.trace.psums_read += plane;
                for tg in 0..p.div_ceil(pp) {
                    if tg > 0 {
                        w.go(State::ReadInput);
                    }
                    for g in 0..groups {
                        w.go(State::Conv);
                        w.trace.compute_cycles += schedules.cycles(c, g) as u64;
                        w.trace.conv_steps += 1;
                        w.go(State::DoneConv);
                    }
                }
                w.go(State::ProcIfft);
                w.go(State::WriteOut);
                w.trace.psums_written += plane;
            }
        }
    }
    w.go(State::Done);
    Ok(w.trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LayerConfig {
        LayerConfig::new("toy", 2, 4, 12, 3) // 2x2 tiles of 6
    }

    #[test]
    fn single_pass_reads_inputs_once() {
        let s = SpectralConfig::new(8, 4);
        let arch = ArchParams::new(2, 2, 2);
        let t = dataflow_simulate(
            &toy(),
            &s,
            &arch,
            SimPlan::Flexible(StreamParams::new(4, 4)),
            OutputTraffic::Tiles,
            &mut ConstantSchedule(16),
        )
        .unwrap();
        assert_eq!(t.inputs_read, 2 * 12 * 12);
        assert_eq!(t.kernels_read, 4 * 2 * 16);
        assert_eq!(t.outputs_written, 4 * 4 * 64);
        assert!(t.is_legal());
    }

    #[test]
    fn half_kernel_blocks_double_input_reads() {
        let s = SpectralConfig::new(8, 4);
        let arch = ArchParams::new(2, 2, 2);
        let t = dataflow_simulate(
            &toy(),
            &s,
            &arch,
            SimPlan::Flexible(StreamParams::new(4, 2)),
            OutputTraffic::Tiles,
            &mut ConstantSchedule(16),
        )
        .unwrap();
        assert_eq!(t.inputs_read, 2 * 2 * 12 * 12);
    }

    #[test]
    fn compute_cycles_per_group() {
        let s = SpectralConfig::new(8, 4);
        let arch = ArchParams::new(4, 4, 2);
        let t = dataflow_simulate(
            &toy(),
            &s,
            &arch,
            SimPlan::Flexible(StreamParams::new(4, 4)),
            OutputTraffic::Tiles,
            &mut ConstantSchedule(19),
        )
        .unwrap();
        // one tile group, one kernel group
        assert_eq!(t.compute_cycles, 19 * 2);
        assert_eq!(t.conv_steps, 2);
    }

    #[test]
    fn flow3_evicts_psums_every_channel() {
        let s = SpectralConfig::new(8, 4);
        let arch = ArchParams::new(2, 2, 2);
        let t = dataflow_simulate(&toy(), &s, &arch, SimPlan::Flow3, OutputTraffic::Spatial, &mut ConstantSchedule(16))
            .unwrap();
        assert_eq!(t.psums_written, 2 * 4 * 144);
        assert_eq!(t.psums_read, t.psums_written);
        assert_eq!(t.inputs_read, 2 * 144);
        assert!(t.is_legal());
    }

    #[test]
    fn ragged_grid_clips_inputs() {
        let s = SpectralConfig::new(8, 4);
        let layer = LayerConfig::new("r", 1, 2, 14, 3); // 3x3 tiles, last row/col 2 wide
        let arch = ArchParams::new(3, 2, 1);
        let t = dataflow_simulate(
            &layer,
            &s,
            &arch,
            SimPlan::Flexible(StreamParams::new(9, 2)),
            OutputTraffic::Spatial,
            &mut ConstantSchedule(1),
        )
        .unwrap();
        assert_eq!(t.inputs_read, 14 * 14);
        assert_eq!(t.outputs_written, 2 * 14 * 14);
    }

    #[test]
    fn infeasible_stream_is_rejected() {
        let s = SpectralConfig::new(8, 4);
        let arch = ArchParams::new(2, 2, 2);
        let r = dataflow_simulate(
            &toy(),
            &s,
            &arch,
            SimPlan::Flexible(StreamParams::new(3, 4)),
            OutputTraffic::Tiles,
            &mut ConstantSchedule(1),
        );
        assert!(matches!(r, Err(Error::Validation { field: "ps", .. })));
    }

    #[test]
    fn transitions_are_legal_and_trace_round_trips() {
        let s = SpectralConfig::new(8, 4);
        let layer = LayerConfig::new("t", 3, 8, 24, 3);
        let arch = ArchParams::new(2, 2, 2);
        let t = dataflow_simulate(
            &layer,
            &s,
            &arch,
            SimPlan::Flexible(StreamParams::new(4, 4)),
            OutputTraffic::Tiles,
            &mut ConstantSchedule(16),
        )
        .unwrap();
        assert!(t.is_legal());
        assert!(t.transitions.contains_key("DoneConv->ReadKernel"));
        assert!(t.transitions.contains_key("DoneConv->ReadInput"));
        assert!(t.transitions.contains_key("DoneConv->Conv"));
        assert!(t.transitions.contains_key("WriteOut->ReadKernel"));
        assert_eq!(SimTrace::from_json(&t.to_json()).unwrap(), t);
        assert!(!State::Conv.can_go_to(State::WriteOut));
    }
}
