//! Network, layer and spectral configuration; tiling arithmetic; synthetic
//! sparse spectral kernels.
//!
//! Model files are TOML with a global block and one `[[layer]]` table per
//! convolutional layer:
//!
//! ```toml
//! fft_size = 8
//! alpha = 4
//! word_bits = 16
//!
//! [[layer]]
//! name = "conv1_1"
//! in_channels = 3
//! out_channels = 64
//! h_in = 224
//! w_in = 224
//! k = 3
//! pool_after = false
//! skip_optimization = true
//! ```
//!
//! `h_out`/`w_out` may be given but must equal `h_in`/`w_in` (stride 1,
//! "same" padding). `pool_after = true` marks a 2x2 pooling boundary: the
//! next layer's spatial size must be half of this one's.

use std::path::Path;

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the built-in VGG16 model with an 8x8 FFT window.
pub const VGG16_K8: &str = "vgg16-k8";

/// One convolutional layer.
///
/// `in_channels` is M (c_in), `out_channels` is N (c_out).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub k: usize,
    pub h_out: usize,
    pub w_out: usize,
    /// Pooling follows this layer; the next layer sees half the spatial size.
    pub pool_after: bool,
    /// Included in latency budgeting but excluded from optimizer objectives.
    pub skip_optimization: bool,
}

impl LayerConfig {
    /// A stride-1, same-padded layer.
    pub fn new(name: &str, in_channels: usize, out_channels: usize, side: usize, k: usize) -> Self {
        Self {
            name: name.to_string(),
            in_channels,
            out_channels,
            h_in: side,
            w_in: side,
            k,
            h_out: side,
            w_out: side,
            pool_after: false,
            skip_optimization: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.name;
        for (field, v) in [
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
            ("h_in", self.h_in),
            ("w_in", self.w_in),
            ("k", self.k),
        ] {
            if v == 0 {
                return Err(Error::validation(n, field, "must be at least 1"));
            }
        }
        if self.k.is_multiple_of(2) {
            return Err(Error::validation(n, "k", format!("must be odd, got {}", self.k)));
        }
        if self.h_out != self.h_in {
            return Err(Error::validation(n, "h_out", "must equal h_in for stride-1 same padding"));
        }
        if self.w_out != self.w_in {
            return Err(Error::validation(n, "w_out", "must equal w_in for stride-1 same padding"));
        }
        Ok(())
    }
}

/// FFT window and compression settings shared by all layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralConfig {
    /// FFT window side K.
    pub fft_size: usize,
    /// Compression ratio: every spectral kernel keeps K²/alpha nonzeros.
    pub alpha: usize,
    /// Bits per transferred scalar, used only for bandwidth conversion.
    pub word_bits: u32,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self { fft_size: 8, alpha: 4, word_bits: 16 }
    }
}

impl SpectralConfig {
    pub fn new(fft_size: usize, alpha: usize) -> Self {
        Self { fft_size, alpha, word_bits: 16 }
    }

    /// K².
    pub fn window_len(&self) -> usize {
        self.fft_size * self.fft_size
    }

    /// Nonzeros per pruned kernel, K²/alpha.
    pub fn nnz_per_kernel(&self) -> usize {
        self.window_len() / self.alpha
    }

    /// Spatial tile side for a kernel of side `k`: K − k + 1.
    pub fn tile_side(&self, k: usize) -> usize {
        self.fft_size + 1 - k
    }

    pub fn word_bytes(&self) -> f64 {
        f64::from(self.word_bits) / 8.0
    }

    pub fn validate(&self) -> Result<()> {
        let g = "spectral";
        if self.fft_size < 2 || !self.fft_size.is_power_of_two() {
            return Err(Error::validation(
                g,
                "fft_size",
                format!("must be a power of two >= 2, got {}", self.fft_size),
            ));
        }
        if self.alpha == 0 || !self.window_len().is_multiple_of(self.alpha) {
            return Err(Error::validation(
                g,
                "alpha",
                format!("must divide K² = {}, got {}", self.window_len(), self.alpha),
            ));
        }
        if self.word_bits == 0 {
            return Err(Error::validation(g, "word_bits", "must be positive"));
        }
        Ok(())
    }

    /// Checks the window against one layer's kernel size (K > k).
    pub fn validate_for(&self, layer: &LayerConfig) -> Result<()> {
        if self.fft_size <= layer.k {
            return Err(Error::validation(
                &layer.name,
                "k",
                format!("must be smaller than fft_size {}", self.fft_size),
            ));
        }
        Ok(())
    }
}

/// Tile decomposition of one layer's input plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub tiles_h: usize,
    pub tiles_w: usize,
    /// Spatial tile side (h_tile = w_tile).
    pub tile: usize,
}

impl TileGrid {
    /// Total tile count P.
    pub fn count(&self) -> usize {
        self.tiles_h * self.tiles_w
    }

    /// `true` when the tiles exactly cover the plane with no padded border.
    pub fn is_exact(&self, layer: &LayerConfig) -> bool {
        layer.h_in.is_multiple_of(self.tile) && layer.w_in.is_multiple_of(self.tile)
    }
}

pub fn tile_grid(layer: &LayerConfig, spectral: &SpectralConfig) -> TileGrid {
    let tile = spectral.tile_side(layer.k);
    TileGrid { tiles_h: layer.h_in.div_ceil(tile), tiles_w: layer.w_in.div_ceil(tile), tile }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub layers: Vec<LayerConfig>,
    pub spectral: SpectralConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.spectral.validate()?;
        if self.layers.is_empty() {
            return Err(Error::validation(&self.name, "layer", "model has no layers"));
        }
        for layer in &self.layers {
            layer.validate()?;
            self.spectral.validate_for(layer)?;
        }
        for pair in self.layers.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.out_channels != b.in_channels {
                return Err(Error::validation(
                    &b.name,
                    "in_channels",
                    format!("{} does not match out_channels {} of `{}`", b.in_channels, a.out_channels, a.name),
                ));
            }
            let (eh, ew) = if a.pool_after { (a.h_out / 2, a.w_out / 2) } else { (a.h_out, a.w_out) };
            if b.h_in != eh || b.w_in != ew {
                return Err(Error::validation(
                    &b.name,
                    "h_in",
                    format!("{}x{} does not follow {}x{} of `{}`", b.h_in, b.w_in, eh, ew, a.name),
                ));
            }
        }
        Ok(())
    }

    /// Layers that take part in dataflow optimization.
    pub fn optimized_layers(&self) -> impl Iterator<Item = &LayerConfig> {
        self.layers.iter().filter(|l| !l.skip_optimization)
    }

    pub fn layer(&self, name: &str) -> Option<&LayerConfig> {
        self.layers.iter().find(|l| l.name == name)
    }
}

/// Standard VGG16 convolutional stack on 224x224 inputs, K = 8, alpha = 4.
///
/// The layer dimensions are those of the published VGG16 architecture.
/// `conv1_1` is kept in the model but excluded from optimization.
pub fn vgg16_k8() -> ModelConfig {
    let spec: [(&str, usize, usize, usize, bool); 13] = [
        ("conv1_1", 3, 64, 224, false),
        ("conv1_2", 64, 64, 224, true),
        ("conv2_1", 64, 128, 112, false),
        ("conv2_2", 128, 128, 112, true),
        ("conv3_1", 128, 256, 56, false),
        ("conv3_2", 256, 256, 56, false),
        ("conv3_3", 256, 256, 56, true),
        ("conv4_1", 256, 512, 28, false),
        ("conv4_2", 512, 512, 28, false),
        ("conv4_3", 512, 512, 28, true),
        ("conv5_1", 512, 512, 14, false),
        ("conv5_2", 512, 512, 14, false),
        ("conv5_3", 512, 512, 14, true),
    ];
    let layers = spec
        .iter()
        .map(|&(name, m, n, side, pool)| {
            let mut l = LayerConfig::new(name, m, n, side, 3);
            l.pool_after = pool;
            l.skip_optimization = name == "conv1_1";
            l
        })
        .collect();
    ModelConfig { name: VGG16_K8.to_string(), layers, spectral: SpectralConfig::new(8, 4) }
}

pub fn builtin(name: &str) -> Option<ModelConfig> {
    match name {
        VGG16_K8 => Some(vgg16_k8()),
        _ => None,
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(default)]
    name: Option<String>,
    fft_size: usize,
    alpha: usize,
    #[serde(default = "default_word_bits")]
    word_bits: u32,
    #[serde(default)]
    layer: Vec<LayerRecord>,
}

fn default_word_bits() -> u32 {
    16
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    name: String,
    in_channels: usize,
    out_channels: usize,
    h_in: usize,
    w_in: usize,
    k: usize,
    h_out: Option<usize>,
    w_out: Option<usize>,
    #[serde(default)]
    pool_after: bool,
    #[serde(default)]
    skip_optimization: bool,
}

/// Parses and validates a model description. `origin` labels parse errors.
pub fn parse_model(text: &str, origin: &Path) -> Result<ModelConfig> {
    let file: ModelFile =
        toml::from_str(text).map_err(|e| Error::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
    let layers = file
        .layer
        .into_iter()
        .map(|r| LayerConfig {
            h_out: r.h_out.unwrap_or(r.h_in),
            w_out: r.w_out.unwrap_or(r.w_in),
            name: r.name,
            in_channels: r.in_channels,
            out_channels: r.out_channels,
            h_in: r.h_in,
            w_in: r.w_in,
            k: r.k,
            pool_after: r.pool_after,
            skip_optimization: r.skip_optimization,
        })
        .collect();
    let model = ModelConfig {
        name: file
            .name
            .unwrap_or_else(|| origin.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()),
        layers,
        spectral: SpectralConfig { fft_size: file.fft_size, alpha: file.alpha, word_bits: file.word_bits },
    };
    model.validate()?;
    Ok(model)
}

/// Loads a model file, or a built-in model when `source` names one.
pub fn load_model(source: impl AsRef<Path>) -> Result<ModelConfig> {
    let path = source.as_ref();
    if let Some(m) = path.to_str().and_then(builtin) {
        return Ok(m);
    }
    let text = std::fs::read_to_string(path)?;
    parse_model(&text, path)
}

/// Serializes a model in the file format accepted by [`parse_model`].
pub fn model_to_toml(model: &ModelConfig) -> String {
    let mut out = format!(
        "name = \"{}\"\nfft_size = {}\nalpha = {}\nword_bits = {}\n",
        model.name, model.spectral.fft_size, model.spectral.alpha, model.spectral.word_bits
    );
    for l in &model.layers {
        out.push_str(&format!(
            "\n[[layer]]\nname = \"{}\"\nin_channels = {}\nout_channels = {}\nh_in = {}\nw_in = {}\nh_out = {}\nw_out = {}\nk = {}\npool_after = {}\nskip_optimization = {}\n",
            l.name, l.in_channels, l.out_channels, l.h_in, l.w_in, l.h_out, l.w_out, l.k, l.pool_after, l.skip_optimization
        ));
    }
    out
}

/// Synthetic sparsity pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    /// Indices drawn uniformly without replacement.
    UniformRandom,
    /// Indices concentrated on a per-channel hotspot set shared by all
    /// kernels of that channel, emulating ADMM-pruned kernels.
    Clustered,
}

impl std::str::FromStr for Pattern {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uniform-random" | "uniform" | "random" => Ok(Pattern::UniformRandom),
            "clustered" => Ok(Pattern::Clustered),
            other => Err(format!("unknown pattern `{other}` (expected uniform-random or clustered)")),
        }
    }
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pattern::UniformRandom => "uniform-random",
            Pattern::Clustered => "clustered",
        })
    }
}

/// One pruned spectral kernel W̃[out_ch, in_ch], stored as sorted
/// `(index, value)` entries over the flattened K×K window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseKernel {
    pub out_ch: usize,
    pub in_ch: usize,
    pub entries: Vec<(u16, Complex64)>,
}

impl SparseKernel {
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(i, _)| usize::from(i))
    }

    pub fn value_at(&self, index: usize) -> Option<Complex64> {
        self.entries.binary_search_by_key(&index, |&(i, _)| usize::from(i)).ok().map(|p| self.entries[p].1)
    }
}

/// All kernels of a layer (or of a kernel group), out-channel major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseKernelSet {
    pub spectral: SpectralConfig,
    pub n_out: usize,
    pub n_in: usize,
    pub kernels: Vec<SparseKernel>,
}

impl SparseKernelSet {
    pub fn kernel(&self, out_ch: usize, in_ch: usize) -> &SparseKernel {
        &self.kernels[out_ch * self.n_in + in_ch]
    }

    /// Kernels `[group*n_par, (group+1)*n_par)` of input channel `in_ch`.
    pub fn group(&self, in_ch: usize, group: usize, n_par: usize) -> Vec<&SparseKernel> {
        let lo = group * n_par;
        let hi = (lo + n_par).min(self.n_out);
        (lo..hi).map(|o| self.kernel(o, in_ch)).collect()
    }

    pub fn n_groups(&self, n_par: usize) -> usize {
        self.n_out.div_ceil(n_par)
    }
}

fn stream_seed(seed: u64, channel: usize) -> u64 {
    // splitmix64 finalizer over (seed, channel)
    let mut z = seed ^ (channel as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Generates `n_kernels × n_channels` pruned spectral kernels.
///
/// Each input channel has its own random stream, so channel `c` of a set is
/// identical regardless of how many channels are requested. In clustered
/// mode a hotspot of `2·K²/α` indices is drawn per channel; each kernel
/// samples K²/α hotspot positions with replacement and pads to exactly
/// K²/α distinct indices with uniform draws from the rest of the window.
pub fn gen_sparse_kernels(
    seed: u64,
    pattern: Pattern,
    n_kernels: usize,
    n_channels: usize,
    spectral: &SpectralConfig,
) -> SparseKernelSet {
    let len = spectral.window_len();
    let nnz = spectral.nnz_per_kernel();
    let mut per_channel: Vec<Vec<SparseKernel>> = Vec::with_capacity(n_channels);
    for c in 0..n_channels {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, c));
        let hotspot: Vec<usize> = match pattern {
            Pattern::Clustered => sample(&mut rng, len, (2 * nnz).min(len)).into_vec(),
            Pattern::UniformRandom => Vec::new(),
        };
        let mut kernels = Vec::with_capacity(n_kernels);
        for o in 0..n_kernels {
            let mut chosen = vec![false; len];
            let mut idx: Vec<usize> = match pattern {
                Pattern::UniformRandom => sample(&mut rng, len, nnz).into_vec(),
                Pattern::Clustered => {
                    let mut v = Vec::with_capacity(nnz);
                    for _ in 0..nnz {
                        let h = hotspot[rng.random_range(0..hotspot.len())];
                        if !chosen[h] {
                            chosen[h] = true;
                            v.push(h);
                        }
                    }
                    let rest: Vec<usize> = (0..len).filter(|&i| !chosen[i]).collect();
                    let pad = nnz - v.len();
                    v.extend(sample(&mut rng, rest.len(), pad).into_iter().map(|p| rest[p]));
                    v
                }
            };
            idx.sort_unstable();
            let entries = idx.into_iter().map(|i| (i as u16, complex_normal(&mut rng))).collect();
            kernels.push(SparseKernel { out_ch: o, in_ch: c, entries });
        }
        per_channel.push(kernels);
    }
    let mut kernels = Vec::with_capacity(n_kernels * n_channels);
    let mut iters: Vec<_> = per_channel.into_iter().map(|v| v.into_iter()).collect();
    for _ in 0..n_kernels {
        for it in iters.iter_mut() {
            kernels.push(it.next().expect("channel stream has n_kernels kernels"));
        }
    }
    SparseKernelSet { spectral: *spectral, n_out: n_kernels, n_in: n_channels, kernels }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vgg16_builtin_shape() {
        let m = load_model(VGG16_K8).unwrap();
        assert_eq!(m.layers.len(), 13);
        let c12 = m.layer("conv1_2").unwrap();
        assert_eq!((c12.in_channels, c12.out_channels, c12.h_in), (64, 64, 224));
        assert!(m.layers[0].skip_optimization);
        assert_eq!(m.optimized_layers().count(), 12);
        m.validate().unwrap();
    }

    #[test]
    fn k3_window8_gives_tile6() {
        let s = SpectralConfig::new(8, 4);
        assert_eq!(s.tile_side(3), 6);
    }

    #[test]
    fn tile_grid_examples() {
        let s = SpectralConfig::new(8, 4);
        let g = tile_grid(&LayerConfig::new("a", 1, 1, 224, 3), &s);
        assert_eq!((g.tiles_h, g.count()), (38, 1444));
        assert_eq!(tile_grid(&LayerConfig::new("b", 1, 1, 6, 3), &s).count(), 1);
        let g = tile_grid(&LayerConfig::new("c", 1, 1, 14, 3), &s);
        assert_eq!((g.tiles_h, g.count()), (3, 9));
    }

    const TWO_LAYERS: &str = r#"
fft_size = 8
alpha = 4

[[layer]]
name = "a"
in_channels = 2
out_channels = 4
h_in = 12
w_in = 12
k = 3
pool_after = true

[[layer]]
name = "b"
in_channels = 4
out_channels = 4
h_in = 6
w_in = 6
k = 3
"#;

    #[test]
    fn parses_and_round_trips() {
        let m = parse_model(TWO_LAYERS, Path::new("two.toml")).unwrap();
        assert_eq!(m.name, "two");
        assert_eq!(m.spectral.word_bits, 16);
        assert!(m.layers[0].pool_after);
        let again = parse_model(&model_to_toml(&m), Path::new("x")).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn even_kernel_is_rejected() {
        let bad = TWO_LAYERS.replacen("k = 3", "k = 4", 1);
        match parse_model(&bad, Path::new("bad.toml")) {
            Err(Error::Validation { layer, field, .. }) => {
                assert_eq!(layer, "a");
                assert_eq!(field, "k");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let bad = TWO_LAYERS.replacen("in_channels = 4", "in_channels = 3", 1);
        assert!(matches!(
            parse_model(&bad, Path::new("bad.toml")),
            Err(Error::Validation { field: "in_channels", .. })
        ));
    }

    #[test]
    fn missing_pool_marker_is_rejected() {
        let bad = TWO_LAYERS.replacen("pool_after = true", "pool_after = false", 1);
        assert!(matches!(parse_model(&bad, Path::new("bad.toml")), Err(Error::Validation { field: "h_in", .. })));
    }

    #[test]
    fn malformed_file_is_a_parse_error() {
        assert!(matches!(parse_model("fft_size = [", Path::new("m.toml")), Err(Error::Parse { .. })));
    }

    #[test]
    fn empty_model_is_rejected() {
        assert!(parse_model("fft_size = 8\nalpha = 4\n", Path::new("e.toml")).is_err());
    }

    #[test]
    fn bad_alpha_and_window() {
        assert!(SpectralConfig::new(8, 3).validate().is_err());
        assert!(SpectralConfig::new(6, 4).validate().is_err());
        let s = SpectralConfig::new(4, 4);
        assert!(s.validate_for(&LayerConfig::new("x", 1, 1, 8, 5)).is_err());
    }

    #[test]
    fn uniform_kernels_have_exact_nnz() {
        let s = SpectralConfig::new(8, 4);
        let set = gen_sparse_kernels(0, Pattern::UniformRandom, 8, 3, &s);
        assert_eq!(set.kernels.len(), 24);
        for k in &set.kernels {
            assert_eq!(k.entries.len(), 16);
            assert!(k.entries.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }

    #[test]
    fn alpha_one_is_dense() {
        let s = SpectralConfig::new(8, 1);
        for p in [Pattern::UniformRandom, Pattern::Clustered] {
            let set = gen_sparse_kernels(3, p, 4, 2, &s);
            for k in &set.kernels {
                assert_eq!(k.indices().collect::<Vec<_>>(), (0..64).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_channel_stable() {
        let s = SpectralConfig::new(8, 4);
        let a = gen_sparse_kernels(7, Pattern::Clustered, 16, 4, &s);
        let b = gen_sparse_kernels(7, Pattern::Clustered, 16, 4, &s);
        assert_eq!(a, b);
        let c = gen_sparse_kernels(7, Pattern::Clustered, 16, 2, &s);
        assert_eq!(a.kernel(5, 1), c.kernel(5, 1));
        let d = gen_sparse_kernels(8, Pattern::Clustered, 16, 4, &s);
        assert_ne!(a, d);
    }

    #[test]
    fn clustered_kernels_share_indices() {
        let s = SpectralConfig::new(8, 4);
        let overlap = |p| {
            let set = gen_sparse_kernels(1, p, 64, 1, &s);
            let mut deg = [0usize; 64];
            for k in &set.kernels {
                for i in k.indices() {
                    deg[i] += 1;
                }
            }
            // distinct indices actually used across the group
            deg.iter().filter(|&&d| d > 0).count()
        };
        assert!(overlap(Pattern::Clustered) <= overlap(Pattern::UniformRandom));
    }

    #[test]
    fn group_slices_out_channels() {
        let s = SpectralConfig::new(8, 4);
        let set = gen_sparse_kernels(0, Pattern::UniformRandom, 10, 2, &s);
        assert_eq!(set.n_groups(4), 3);
        let g = set.group(1, 2, 4);
        assert_eq!(g.len(), 2);
        assert_eq!((g[0].out_ch, g[0].in_ch), (8, 1));
    }
}
