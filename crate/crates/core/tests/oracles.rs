//! Brute-force cross-checks against direct sums on small grids.

mod common;

use common::{circular_convolution, dft3_direct, kernel_of_window, random_volume, rel_l2, rel_l2_complex};
use dipolelets::bands::{AngularConfig, BandConfig, BandIndex, BandSet};
use dipolelets::fourier::{apply_multiplier, fft3, ifft3, ifft3_real, Spectrum};
use dipolelets::kernel::{dipole_kernel, SpectralWindow};
use dipolelets::simulate::forward_dipole;
use dipolelets::transform::analyze;
use dipolelets::volume::{FreqGrid, GridSpec, Volume};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn delta(g: GridSpec) -> Volume {
    let mut v = Volume::zeros(g);
    v.data_mut()[0] = 1.0;
    v
}

#[test]
fn odd_grid_spectrum_and_inverse_match_direct_sums() {
    let g = GridSpec::with_shape([5, 6, 7]).unwrap();
    let v = random_volume(g, 21);
    let input: Vec<Complex64> = v.data().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let spec = fft3(&v);
    let oracle = dft3_direct(&g, &input, -1.0);
    assert!(rel_l2_complex(spec.data(), &oracle) < 1e-10);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let coeffs: Vec<Complex64> = (0..g.len())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let back = ifft3(&Spectrum::from_vec(g, coeffs.clone()).unwrap());
    let n = g.len() as f64;
    let oracle: Vec<Complex64> = dft3_direct(&g, &coeffs, 1.0).into_iter().map(|c| c / n).collect();
    assert!(rel_l2_complex(back.data(), &oracle) < 1e-10);
}

#[test]
fn symmetrized_spectrum_has_real_inverse() {
    let g = GridSpec::with_shape([6, 5, 8]).unwrap();
    let fg = FreqGrid::new(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let raw: Vec<Complex64> = (0..g.len())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let sym: Vec<Complex64> = (0..g.len()).map(|i| (raw[i] + raw[fg.mirror_index(i)].conj()) / 2.0).collect();
    let full = ifft3(&Spectrum::from_vec(g, sym.clone()).unwrap());
    let worst_im = full.data().iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    assert!(worst_im < 1e-10, "{worst_im}");
    assert!(ifft3_real(&Spectrum::from_vec(g, sym).unwrap()).is_ok());
}

#[test]
fn gaussian_window_on_a_delta_is_its_kernel() {
    let g = GridSpec::cubic(8).unwrap();
    let fg = FreqGrid::new(&g);
    let w = SpectralWindow::new(g, fg.map_bins(|xi| (-(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]) * 20.0).exp()))
        .unwrap();
    let out = apply_multiplier(&delta(g), &w).unwrap();
    let kernel = kernel_of_window(&g, w.data());
    assert!(rel_l2(out.data(), &kernel) < 1e-12);

    let f = random_volume(g, 3);
    let direct = circular_convolution(&g, f.data(), &kernel);
    assert!(rel_l2(apply_multiplier(&f, &w).unwrap().data(), &direct) < 1e-10);
}

#[test]
fn dipole_forward_of_a_delta_is_the_dipole_kernel() {
    let g = GridSpec::cubic(16).unwrap();
    let d = dipole_kernel(&FreqGrid::new(&g), 0.0);
    let kernel = kernel_of_window(&g, d.data());
    let out = forward_dipole(&delta(g), 0.0).unwrap();
    assert!(rel_l2(out.data(), &kernel) < 1e-10);
}

#[test]
fn every_band_is_a_direct_convolution() {
    let g = GridSpec::with_shape([6, 7, 8]).unwrap();
    let bs = BandSet::new(&g, &BandConfig::new(1, AngularConfig::default())).unwrap();
    let f = random_volume(g, 13);
    let d = analyze(&f, &bs).unwrap();
    for band in [BandIndex::new(0, 0), BandIndex::new(0, 2), BandIndex::new(1, 1)] {
        let kernel = kernel_of_window(&g, bs.combined(band).unwrap().data());
        let direct = circular_convolution(&g, f.data(), &kernel);
        let got = d.band(band).unwrap();
        assert!(rel_l2(got.data(), &direct) < 1e-10, "{band}");
    }
    let kernel = kernel_of_window(&g, bs.coarse().data());
    let direct = circular_convolution(&g, f.data(), &kernel);
    assert!(rel_l2(d.coarse().data(), &direct) < 1e-10);
}
