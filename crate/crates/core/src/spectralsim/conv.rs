//! Tiled spectral convolution with overlap-add.
//!
//! An input plane is cut into `h_tile × h_tile` tiles (`h_tile = K − k + 1`),
//! each zero-padded to K×K and transformed. Per output channel the spectra
//! are multiplied elementwise with the kernel spectra and summed over input
//! channels, transformed back, and the K×K results are overlap-added at
//! stride `h_tile`. The canvas is cropped by `(k − 1)/2` to the input size.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::{fft2, fft2_real};
use super::tensor::SpatialTensor;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::netmodel::{SparseKernel, SparseKernelSet, SpectralConfig, TileGrid};
use crate::scheduler::{build_graph, emit_tables, run_scheduler, IndexValueTables, SchedulerKind};

/// Spectrum of a `k`×`k` spatial kernel, flipped in both axes and
/// zero-padded to `fft_size`×`fft_size`, so that the Hadamard product
/// realises the CNN's cross-correlation.
pub fn spectralize_kernel(w: &[f64], k: usize, fft_size: usize) -> Vec<Complex64> {
    assert_eq!(w.len(), k * k, "kernel must be k×k");
    assert!(k <= fft_size, "kernel larger than FFT window");
    let mut padded = vec![0.0; fft_size * fft_size];
    for a in 0..k {
        for b in 0..k {
            padded[a * fft_size + b] = w[(k - 1 - a) * k + (k - 1 - b)];
        }
    }
    fft2_real(&padded, fft_size)
}

/// Unpruned spectral kernels from spatial weights `[N, M, k, k]`. Every
/// kernel stores all K² entries; the returned set's `alpha` is 1.
pub fn dense_kernel_set(weights: &SpatialTensor, spectral: &SpectralConfig) -> Result<SparseKernelSet> {
    let [n, m, k, k2] = weights.dims;
    if k != k2 || k > spectral.fft_size {
        return Err(Error::ShapeMismatch(format!("weights {:?} for FFT window {}", weights.dims, spectral.fft_size)));
    }
    let kernels = (0..n)
        .flat_map(|o| (0..m).map(move |c| (o, c)))
        .map(|(o, c)| {
            let spec = spectralize_kernel(weights.plane(o, c), k, spectral.fft_size);
            SparseKernel {
                out_ch: o,
                in_ch: c,
                entries: spec.into_iter().enumerate().map(|(i, v)| (i as u16, v)).collect(),
            }
        })
        .collect();
    Ok(SparseKernelSet { spectral: SpectralConfig { alpha: 1, ..*spectral }, n_out: n, n_in: m, kernels })
}

/// Spectra of one spatial tile position across all input channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralTile {
    pub row: usize,
    pub col: usize,
    pub fft_size: usize,
    pub channels: Vec<Vec<Complex64>>,
}

fn grid_for(h: usize, w: usize, tile: usize) -> TileGrid {
    TileGrid { tiles_h: h.div_ceil(tile), tiles_w: w.div_ceil(tile), tile }
}

/// Row-major spectral tiles of batch element `b`.
pub fn spectral_tiles(input: &SpatialTensor, b: usize, tile: usize, fft_size: usize) -> Vec<SpectralTile> {
    let [_, m, h, w] = input.dims;
    let g = grid_for(h, w, tile);
    let mut out = Vec::with_capacity(g.count());
    for row in 0..g.tiles_h {
        for col in 0..g.tiles_w {
            let channels = (0..m)
                .map(|c| {
                    let mut buf = vec![0.0; fft_size * fft_size];
                    for y in 0..tile.min(h - row * tile) {
                        for x in 0..tile.min(w - col * tile) {
                            buf[y * fft_size + x] = input.get(b, c, row * tile + y, col * tile + x);
                        }
                    }
                    fft2_real(&buf, fft_size)
                })
                .collect();
            out.push(SpectralTile { row, col, fft_size, channels });
        }
    }
    out
}

/// Spatial K×K results per tile position, `channels × K²` each, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputTiles {
    pub channels: usize,
    pub grid: TileGrid,
    pub fft_size: usize,
    pub tiles: Vec<Option<Vec<f64>>>,
}

impl OutputTiles {
    pub fn new(channels: usize, grid: TileGrid, fft_size: usize) -> Self {
        Self { channels, grid, fft_size, tiles: vec![None; grid.count()] }
    }
}

/// Places tiles at stride `grid.tile`, sums the overlapping borders and
/// crops by `(k − 1)/2` to `h_out × w_out`.
pub fn overlap_add(tiles: &OutputTiles, k: usize, h_out: usize, w_out: usize) -> Result<SpatialTensor> {
    let g = tiles.grid;
    let kf = tiles.fft_size;
    if kf != g.tile + k - 1 {
        return Err(Error::ShapeMismatch(format!("tile {} with k={k} needs window {}", g.tile, g.tile + k - 1)));
    }
    let (ch, cw) = (g.tiles_h * g.tile + k - 1, g.tiles_w * g.tile + k - 1);
    let p = (k - 1) / 2;
    if h_out + p > ch || w_out + p > cw {
        return Err(Error::ShapeMismatch(format!("output {h_out}x{w_out} exceeds canvas {ch}x{cw}")));
    }
    let mut canvas = vec![0.0; tiles.channels * ch * cw];
    for row in 0..g.tiles_h {
        for col in 0..g.tiles_w {
            let t = tiles.tiles[row * g.tiles_w + col].as_ref().ok_or(Error::MissingTile { row, col })?;
            for c in 0..tiles.channels {
                for y in 0..kf {
                    let base = (c * ch + row * g.tile + y) * cw + col * g.tile;
                    for x in 0..kf {
                        canvas[base + x] += t[(c * kf + y) * kf + x];
                    }
                }
            }
        }
    }
    let mut out = SpatialTensor::zeros([1, tiles.channels, h_out, w_out]);
    for c in 0..tiles.channels {
        for y in 0..h_out {
            for x in 0..w_out {
                out.set(0, c, y, x, canvas[(c * ch + y + p) * cw + x + p]);
            }
        }
    }
    Ok(out)
}

fn check_shapes(input: &SpatialTensor, n_in: usize, k: usize, spectral: &SpectralConfig) -> Result<()> {
    if input.channels() != n_in {
        return Err(Error::ShapeMismatch(format!("input has {} channels, kernels expect {}", input.channels(), n_in)));
    }
    if k.is_multiple_of(2) || k >= spectral.fft_size {
        return Err(Error::ShapeMismatch(format!("k={k} with FFT window {}", spectral.fft_size)));
    }
    Ok(())
}

/// Tile loop shared by the direct and the table-driven paths. `hadamard`
/// adds channel `c`'s products into the per-output-channel accumulators.
fn run_tiles<F>(
    input: &SpatialTensor,
    n_out: usize,
    k: usize,
    spectral: &SpectralConfig,
    hadamard: F,
) -> Result<SpatialTensor>
where
    F: Fn(usize, &[Complex64], &mut [Vec<Complex64>]),
{
    let kf = spectral.fft_size;
    let tile = spectral.tile_side(k);
    let [b, m, h, w] = input.dims;
    let mut out = SpatialTensor::zeros([b, n_out, h, w]);
    for bi in 0..b {
        let tiles = spectral_tiles(input, bi, tile, kf);
        let mut results = OutputTiles::new(n_out, grid_for(h, w, tile), kf);
        for (slot, t) in results.tiles.iter_mut().zip(&tiles) {
            let mut acc = vec![vec![Complex64::new(0.0, 0.0); kf * kf]; n_out];
            for c in 0..m {
                hadamard(c, &t.channels[c], &mut acc);
            }
            let mut spatial = Vec::with_capacity(n_out * kf * kf);
            for a in &acc {
                spatial.extend(fft2(a, kf, true).into_iter().map(|z| z.re));
            }
            *slot = Some(spatial);
        }
        let y = overlap_add(&results, k, h, w)?;
        let n = n_out * h * w;
        out.data[bi * n..(bi + 1) * n].copy_from_slice(&y.data);
    }
    Ok(out)
}

/// Spectral convolution with kernels of spatial side `k`. Each kernel only
/// touches its stored indices.
pub fn spectral_conv(input: &SpatialTensor, kernels: &SparseKernelSet, k: usize) -> Result<SpatialTensor> {
    let spectral = &kernels.spectral;
    check_shapes(input, kernels.n_in, k, spectral)?;
    run_tiles(input, kernels.n_out, k, spectral, |c, x, acc| {
        for (o, a) in acc.iter_mut().enumerate() {
            for &(i, v) in &kernels.kernel(o, c).entries {
                a[i as usize] += x[i as usize] * v;
            }
        }
    })
}

/// INDEX/VALUE tables for every (input channel, kernel group) of a layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledKernels {
    pub spectral: SpectralConfig,
    pub n_out: usize,
    pub n_in: usize,
    pub n_par: usize,
    pub r: usize,
    pub scheduler: SchedulerKind,
    /// `tables[in_ch][group]`.
    pub tables: Vec<Vec<IndexValueTables>>,
}

impl ScheduledKernels {
    /// Schedules each (channel, group) independently. The random baseline
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
        let jobs: Vec<(usize, usize)> = (0..kernels.n_in).flat_map(|c| (0..groups).map(move |g| (c, g))).collect();
        let window = kernels.spectral.window_len();
        let built = exec.map(&jobs, |&(c, g)| {
            let group = kernels.group(c, g, n_par);
            let graph = build_graph(&group, window);
            let s = run_scheduler(scheduler, &graph, r, seed.wrapping_add((c * groups + g) as u64))?;
            emit_tables(&s, &group)
        });
        let mut tables: Vec<Vec<IndexValueTables>> = (0..kernels.n_in).map(|_| Vec::with_capacity(groups)).collect();
        for ((c, _), t) in jobs.iter().zip(built) {
            tables[*c].push(t?);
        }
        Ok(Self { spectral: kernels.spectral, n_out: kernels.n_out, n_in: kernels.n_in, n_par, r, scheduler, tables })
    }

    /// Schedule length of (channel, group).
    pub fn cycles(&self, in_ch: usize, group: usize) -> usize {
        self.tables[in_ch][group].n_cycles()
    }
}

/// Spectral convolution that performs the Hadamard products in the order
/// the INDEX/VALUE tables serve them.
pub fn spectral_conv_scheduled(input: &SpatialTensor, sched: &ScheduledKernels, k: usize) -> Result<SpatialTensor> {
    check_shapes(input, sched.n_in, k, &sched.spectral)?;
    run_tiles(input, sched.n_out, k, &sched.spectral, |c, x, acc| {
        for (g, t) in sched.tables[c].iter().enumerate() {
            for (slots, lanes) in t.index_table.iter().zip(&t.value_table) {
                for (lane, l) in lanes.iter().enumerate().filter(|(_, l)| l.valid) {
                    let i = slots[l.sel as usize].expect("valid lane selects a used slot") as usize;
                    acc[g * sched.n_par + lane][i] += x[i] * l.value;
                }
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectralsim::fft::fft2;

    #[test]
    fn delta_kernel_spectrum_is_flat() {
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        // centre tap flips onto itself and lands at (1, 1): a pure phase
        let s = spectralize_kernel(&w, 3, 8);
        assert!(s.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        let mut d = vec![0.0; 1];
        d[0] = 1.0;
        assert!(spectralize_kernel(&d, 1, 8).iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn kernel_round_trips_through_ifft() {
        let w: Vec<f64> = (0..9).map(|i| (i as f64 * 1.3).sin()).collect();
        let back = fft2(&spectralize_kernel(&w, 3, 8), 8, true);
        for a in 0..8 {
            for b in 0..8 {
                let want = if a < 3 && b < 3 { w[(2 - a) * 3 + (2 - b)] } else { 0.0 };
                assert!((back[a * 8 + b].re - want).abs() < 1e-10);
                assert!(back[a * 8 + b].im.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = SpatialTensor::image(2, 13, 9, (0..234).map(|i| (i as f64 * 0.37).cos()).collect()).unwrap();
        let mut w = SpatialTensor::zeros([2, 2, 3, 3]);
        w.set(0, 0, 1, 1, 1.0);
        w.set(1, 1, 1, 1, 1.0);
        let ks = dense_kernel_set(&w, &SpectralConfig::new(8, 4)).unwrap();
        let y = spectral_conv(&x, &ks, 3).unwrap();
        assert!(y.max_abs_diff(&x).unwrap() < 1e-12);
    }

    #[test]
    fn single_tile_is_crop_only() {
        let grid = TileGrid { tiles_h: 1, tiles_w: 1, tile: 6 };
        let mut t = OutputTiles::new(1, grid, 8);
        t.tiles[0] = Some((0..64).map(f64::from).collect());
        let y = overlap_add(&t, 3, 6, 6).unwrap();
        assert_eq!(y.get(0, 0, 0, 0), 9.0);
        assert_eq!(y.get(0, 0, 5, 5), 54.0);
    }

    #[test]
    fn adjacent_tiles_sum_on_overlap() {
        let grid = TileGrid { tiles_h: 1, tiles_w: 2, tile: 6 };
        let mut t = OutputTiles::new(1, grid, 8);
        t.tiles = vec![Some(vec![1.0; 64]), Some(vec![1.0; 64])];
        let y = overlap_add(&t, 3, 6, 12).unwrap();
        let row: Vec<f64> = (0..12).map(|x| y.get(0, 0, 2, x)).collect();
        assert_eq!(row, vec![1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        t.tiles[1] = None;
        assert!(matches!(overlap_add(&t, 3, 6, 12), Err(Error::MissingTile { row: 0, col: 1 })));
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let x = SpatialTensor::zeros([1, 3, 8, 8]);
        let w = SpatialTensor::zeros([1, 2, 3, 3]);
        let ks = dense_kernel_set(&w, &SpectralConfig::new(8, 4)).unwrap();
        assert!(matches!(spectral_conv(&x, &ks, 3), Err(Error::ShapeMismatch(_))));
    }
}
