use num_complex::Complex64;
use proptest::prelude::*;
use specflow::netmodel::{gen_sparse_kernels, Pattern, SpectralConfig};
use specflow::scheduler::SchedulerKind;
use specflow::spectralsim::{
    dense_kernel_set, dft2_naive, fft2, spatial_conv_reference, spectral_conv, spectral_conv_scheduled,
    ScheduledKernels, SpatialTensor,
};
use specflow::Exec;

fn tile(k: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0).prop_map(|(a, b)| Complex64::new(a, b)), k * k)
}

fn energy(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

proptest! {
    #[test]
    fn fft_round_trips(x in tile(8)) {
        let back = fft2(&fft2(&x, 8, false), 8, true);
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10);
    }

    #[test]
    fn parseval_holds(x in tile(16)) {
        let f = fft2(&x, 16, false);
        let lhs = energy(&x);
        let rhs = energy(&f) / 256.0;
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(1.0));
    }

    #[test]
    fn fft_is_linear(x in tile(4), y in tile(4), a in -3.0f64..3.0) {
        let sum: Vec<Complex64> = x.iter().zip(&y).map(|(p, q)| p * a + q).collect();
        let lhs = fft2(&sum, 4, false);
        let fx = fft2(&x, 4, false);
        let fy = fft2(&y, 4, false);
        for i in 0..16 {
            prop_assert!((lhs[i] - (fx[i] * a + fy[i])).norm() < 1e-9);
        }
    }

    #[test]
    fn fft_matches_naive_dft(x in tile(8)) {
        let f = fft2(&x, 8, false);
        let d = dft2_naive(&x, 8, false);
        let err = f.iter().zip(&d).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-10 * energy(&x).sqrt().max(1.0));
    }
}

fn ramp(dims: [usize; 4], scale: f64) -> SpatialTensor {
    let n: usize = dims.iter().product();
    SpatialTensor::from_vec(dims, (0..n).map(|i| ((i * 37 % 101) as f64 - 50.0) * scale).collect()).unwrap()
}

#[test]
fn dense_spectral_conv_matches_spatial_on_uneven_grid() {
    // 13 is not a multiple of the 6-wide tile
    let spectral = SpectralConfig::new(8, 4);
    let x = ramp([2, 3, 13, 11], 0.01);
    let w = ramp([4, 3, 3, 3], 0.1);
    let y = spectral_conv(&x, &dense_kernel_set(&w, &spectral).unwrap(), 3).unwrap();
    let r = spatial_conv_reference(&x, &w, 1).unwrap();
    assert!(y.max_abs_diff(&r).unwrap() < 1e-9);
}

#[test]
fn scheduled_conv_is_bit_identical() {
    let spectral = SpectralConfig::new(8, 4);
    let set = gen_sparse_kernels(5, Pattern::Clustered, 12, 3, &spectral);
    let x = ramp([1, 3, 18, 18], 0.02);
    let direct = spectral_conv(&x, &set, 3).unwrap();
    for kind in [SchedulerKind::Greedy, SchedulerKind::Random, SchedulerKind::LowestIndex] {
        for exec in [Exec::Sequential, Exec::Parallel] {
            let s = ScheduledKernels::build(&set, 8, 5, kind, 9, exec).unwrap();
            let y = spectral_conv_scheduled(&x, &s, 3).unwrap();
            assert_eq!(y, direct, "{kind}");
        }
    }
}

#[test]
fn conv_rejects_channel_mismatch() {
    let spectral = SpectralConfig::new(8, 4);
    let set = gen_sparse_kernels(1, Pattern::UniformRandom, 2, 3, &spectral);
    let x = ramp([1, 2, 12, 12], 1.0);
    assert!(spectral_conv(&x, &set, 3).is_err());
}

#[test]
fn tensor_formats_round_trip() {
    let t = ramp([2, 3, 4, 5], 0.125);
    let mut buf = Vec::new();
    t.write_binary(&mut buf).unwrap();
    assert_eq!(&buf[..4], b"SPT1");
    assert_eq!(SpatialTensor::read_binary(buf.as_slice()).unwrap(), t);
    assert_eq!(SpatialTensor::from_text(&t.to_text()).unwrap(), t);
    assert!(SpatialTensor::read_binary(&buf[..20]).is_err());
    assert!(SpatialTensor::from_text("1 1 2 2\n1 2 3").is_err());
}
