//! Slow, obviously-correct references for tests and `verify`.

use num_complex::Complex64;

use super::tensor::SpatialTensor;
use crate::error::{Error, Result};

/// Direct O(k⁴) 2-D DFT; the inverse is scaled by 1/k².
pub fn dft2_naive(tile: &[Complex64], k: usize, inverse: bool) -> Vec<Complex64> {
    assert_eq!(tile.len(), k * k, "tile must be k×k");
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut out = vec![Complex64::new(0.0, 0.0); k * k];
    for u in 0..k {
        for v in 0..k {
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..k {
                for x in 0..k {
                    let phase = sign * 2.0 * std::f64::consts::PI * ((u * y + v * x) % k) as f64 / k as f64;
                    acc += tile[y * k + x] * Complex64::from_polar(1.0, phase);
                }
            }
            out[u * k + v] = if inverse { acc / (k * k) as f64 } else { acc };
        }
    }
    out
}

/// Direct stride-1 convolution in the CNN (cross-correlation) sense:
/// `y[n, i, j] = Σ_m Σ_a Σ_b w[n, m, a, b] · x[m, i + a − pad, j + b − pad]`,
/// zero outside the input. `weights` has dims `[N, M, k, k]`. The output
/// keeps the input's spatial size when `pad = (k − 1)/2`.
pub fn spatial_conv_reference(input: &SpatialTensor, weights: &SpatialTensor, pad: usize) -> Result<SpatialTensor> {
    let [b, m, h, w] = input.dims;
    let [n, wm, k, k2] = weights.dims;
    if wm != m || k != k2 {
        return Err(Error::ShapeMismatch(format!("input {:?} with weights {:?}", input.dims, weights.dims)));
    }
    if h + 2 * pad < k || w + 2 * pad < k {
        return Err(Error::ShapeMismatch("kernel larger than padded input".into()));
    }
    let (ho, wo) = (h + 2 * pad + 1 - k, w + 2 * pad + 1 - k);
    let mut out = SpatialTensor::zeros([b, n, ho, wo]);
    for bi in 0..b {
        for o in 0..n {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = 0.0;
                    for c in 0..m {
                        for a in 0..k {
                            let y = (i + a) as isize - pad as isize;
                            if y < 0 || y >= h as isize {
                                continue;
                            }
                            for bb in 0..k {
                                let x = (j + bb) as isize - pad as isize;
                                if x < 0 || x >= w as isize {
                                    continue;
                                }
                                acc += weights.get(o, c, a, bb) * input.get(bi, c, y as usize, x as usize);
                            }
                        }
                    }
                    out.set(bi, o, i, j, acc);
                }
            }
        }
    }
    Ok(out)
}
