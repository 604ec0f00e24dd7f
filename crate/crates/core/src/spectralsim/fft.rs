//! Iterative radix-2 FFT over square row-major tiles.

use num_complex::Complex64;

/// In-place 1-D transform of `buf` (length a power of two), unnormalized.
pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    assert!(n.is_power_of_two(), "FFT length must be a power of two");
    let bits = n.trailing_zeros();
    if bits == 0 {
        return;
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let step = sign * 2.0 * std::f64::consts::PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                let w = Complex64::from_polar(1.0, step * k as f64);
                let a = buf[start + k];
                let b = buf[start + k + len / 2] * w;
                buf[start + k] = a + b;
                buf[start + k + len / 2] = a - b;
            }
        }
        len <<= 1;
    }
}

/// 2-D DFT of a `k`×`k` tile. The inverse is scaled by 1/k² so that
/// `fft2(&fft2(x, k, false), k, true) == x`.
pub fn fft2(tile: &[Complex64], k: usize, inverse: bool) -> Vec<Complex64> {
    assert_eq!(tile.len(), k * k, "tile must be k×k");
    let mut out = tile.to_vec();
    for row in out.chunks_mut(k) {
        fft_in_place(row, inverse);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); k];
    for c in 0..k {
        for r in 0..k {
            col[r] = out[r * k + c];
        }
        fft_in_place(&mut col, inverse);
        for r in 0..k {
            out[r * k + c] = col[r];
        }
    }
    if inverse {
        let s = 1.0 / (k * k) as f64;
        out.iter_mut().for_each(|v| *v *= s);
    }
    out
}

/// Forward 2-D DFT of a real tile.
pub fn fft2_real(tile: &[f64], k: usize) -> Vec<Complex64> {
    let z: Vec<Complex64> = tile.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft2(&z, k, false)
}
