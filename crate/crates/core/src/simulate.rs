//! Synthetic susceptibility phantoms, forward field models and phase
//! corruption.
//!
//! Phase is modelled directly as `F^-1 D F chi` (unit field-to-phase
//! scale), so a phantom value of 0.1 produces phase excursions of a few
//! hundredths of a radian.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Fft3;
use crate::kernel::{dipole_kernel, sti_forward_multipliers};
use crate::volume::{FreqGrid, GridSpec, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Geometric primitive in voxel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    Ellipsoid { center: [f64; 3], radii: [f64; 3] },
    Cylinder { center: [f64; 3], radius: f64, axis: Axis, half_length: f64 },
    Slab { min: [f64; 3], max: [f64; 3] },
}

impl Shape {
    /// Whether the voxel center `p` lies inside the shape.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            Shape::Sphere { center, radius } => {
                (0..3).map(|a| (p[a] - center[a]).powi(2)).sum::<f64>() <= radius * radius
            }
            Shape::Ellipsoid { center, radii } => {
                (0..3).map(|a| ((p[a] - center[a]) / radii[a]).powi(2)).sum::<f64>() <= 1.0
            }
            Shape::Cylinder {
                center,
                radius,
                axis,
                half_length,
            } => {
                let ax = axis.index();
                let radial: f64 = (0..3)
                    .filter(|&a| a != ax)
                    .map(|a| (p[a] - center[a]).powi(2))
                    .sum();
                radial <= radius * radius && (p[ax] - center[ax]).abs() <= *half_length
            }
            Shape::Slab { min, max } => (0..3).all(|a| p[a] >= min[a] && p[a] <= max[a]),
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            Shape::Sphere { center, radius } => (center.map(|c| c - radius), center.map(|c| c + radius)),
            Shape::Ellipsoid { center, radii } => (
                [0, 1, 2].map(|a| center[a] - radii[a]),
                [0, 1, 2].map(|a| center[a] + radii[a]),
            ),
            Shape::Cylinder {
                center,
                radius,
                axis,
                half_length,
            } => {
                let ax = axis.index();
                let ext = [0, 1, 2].map(|a| if a == ax { *half_length } else { *radius });
                ([0, 1, 2].map(|a| center[a] - ext[a]), [0, 1, 2].map(|a| center[a] + ext[a]))
            }
            Shape::Slab { min, max } => (*min, *max),
        }
    }

    fn validate(&self, grid: &GridSpec) -> Result<()> {
        let positive = match self {
            Shape::Sphere { radius, .. } => *radius > 0.0,
            Shape::Ellipsoid { radii, .. } => radii.iter().all(|&r| r > 0.0),
            Shape::Cylinder { radius, half_length, .. } => *radius > 0.0 && *half_length > 0.0,
            Shape::Slab { min, max } => (0..3).all(|a| min[a] <= max[a]),
        };
        if !positive {
            return Err(Error::config(format!("degenerate shape {self:?}")));
        }
        let (lo, hi) = self.bounds();
        let shape = grid.shape();
        for a in 0..3 {
            if lo[a] < -0.5 || hi[a] > shape[a] as f64 - 0.5 {
                return Err(Error::config(format!(
                    "shape {self:?} extends outside the {grid} grid along axis {a}"
                )));
            }
        }
        Ok(())
    }

    fn rasterize(&self, grid: &GridSpec) -> Vec<usize> {
        (0..grid.len())
            .filter(|&idx| {
                let [i, j, k] = grid.unravel(idx);
                self.contains([i as f64, j as f64, k as f64])
            })
            .collect()
    }
}

/// Tensor component a shape contributes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    #[default]
    Chi33,
    Chi13,
    Chi23,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub shape: Shape,
    /// Susceptibility added inside the shape (ppm).
    pub value: f64,
    #[serde(default)]
    pub component: Component,
}

/// ROI plus a list of additive shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PhantomRecipe {
    /// Region of interest; the whole grid when absent.
    #[serde(default)]
    pub roi: Option<Shape>,
    #[serde(default)]
    pub shapes: Vec<Placement>,
}

impl PhantomRecipe {
    /// Head-like phantom scaled to the grid: ellipsoidal ROI, two positive
    /// and one negative sphere (+-0.1 ppm) and a vein-like cylinder along y
    /// (+0.3 ppm).
    pub fn default_head(grid: &GridSpec) -> Self {
        let [nx, ny, nz] = grid.shape().map(|n| n as f64);
        let c = [nx / 2.0, ny / 2.0, nz / 2.0];
        let at = |fx: f64, fy: f64, fz: f64| [c[0] + fx * nx, c[1] + fy * ny, c[2] + fz * nz];
        let n = nx.min(ny).min(nz);
        let sphere = |center, frac: f64, value| Placement {
            shape: Shape::Sphere {
                center,
                radius: (frac * n).max(1.5),
            },
            value,
            component: Component::Chi33,
        };
        Self {
            roi: Some(Shape::Ellipsoid {
                center: c,
                radii: [0.40 * nx, 0.36 * ny, 0.34 * nz],
            }),
            shapes: vec![
                sphere(at(-0.15, 0.10, 0.05), 0.08, 0.1),
                sphere(at(0.15, -0.08, -0.05), 0.07, -0.1),
                sphere(at(0.02, 0.16, -0.12), 0.05, 0.1),
                Placement {
                    shape: Shape::Cylinder {
                        center: at(0.0, -0.02, 0.14),
                        radius: (0.03 * n).max(1.5),
                        axis: Axis::Y,
                        half_length: 0.22 * ny,
                    },
                    value: 0.3,
                    component: Component::Chi33,
                },
            ],
        }
    }
}

/// Ground-truth susceptibility and region of interest.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub chi33: Volume,
    pub chi13: Option<Volume>,
    pub chi23: Option<Volume>,
    pub mask: Volume,
    pub description: Vec<String>,
}

impl Phantom {
    pub fn grid(&self) -> &GridSpec {
        self.chi33.grid()
    }

    /// Copy with `chi13 = s13 * chi33` and `chi23 = s23 * chi33`.
    pub fn with_proportional_cross_terms(&self, s13: f64, s23: f64) -> Phantom {
        let mut p = self.clone();
        p.chi13 = Some(self.chi33.scaled(s13));
        p.chi23 = Some(self.chi33.scaled(s23));
        p.description
            .push(format!("cross terms chi13 = {s13} chi33, chi23 = {s23} chi33"));
        p
    }
}

pub fn make_phantom(grid: &GridSpec, recipe: &PhantomRecipe) -> Result<Phantom> {
    let mut description = Vec::new();
    let mask = match &recipe.roi {
        Some(roi) => {
            roi.validate(grid)?;
            let mut m = Volume::zeros(*grid);
            for idx in roi.rasterize(grid) {
                m.data_mut()[idx] = 1.0;
            }
            description.push(format!("roi {roi:?}"));
            m
        }
        None => Volume::filled(*grid, 1.0),
    };

    let mut chi = [Volume::zeros(*grid), Volume::zeros(*grid), Volume::zeros(*grid)];
    let mut used = [true, false, false];
    for p in &recipe.shapes {
        p.shape.validate(grid)?;
        let slot = match p.component {
            Component::Chi33 => 0,
            Component::Chi13 => 1,
            Component::Chi23 => 2,
        };
        used[slot] = true;
        let data = chi[slot].data_mut();
        for idx in p.shape.rasterize(grid) {
            data[idx] += p.value;
        }
        description.push(format!("{:?} {:+} ppm {:?}", p.component, p.value, p.shape));
    }
    let [chi33, chi13, chi23] = chi;
    Ok(Phantom {
        chi33,
        chi13: used[1].then_some(chi13),
        chi23: used[2].then_some(chi23),
        mask,
        description,
    })
}

/// `F^-1(D F chi)` with `D(0) = dc_value`.
pub fn forward_dipole(chi: &Volume, dc_value: f64) -> Result<Volume> {
    let d = dipole_kernel(&FreqGrid::new(chi.grid()), dc_value);
    Fft3::for_grid(chi.grid()).apply_multiplier(chi, &d)
}

/// z-axis tensor forward model; absent cross terms count as zero.
pub fn forward_sti_z(p: &Phantom) -> Result<Volume> {
    let grid = *p.chi33.grid();
    let plan = Fft3::for_grid(&grid);
    let m = sti_forward_multipliers(&FreqGrid::new(&grid));
    let mut acc = plan.fft3(&p.chi33).multiplied(&m.chi33)?.into_vec();
    for (chi, mult) in [(&p.chi13, &m.chi13), (&p.chi23, &m.chi23)] {
        if let Some(chi) = chi {
            grid.ensure_matches(chi.grid())?;
            let s = plan.fft3(chi).multiplied(mult)?;
            for (a, b) in acc.iter_mut().zip(s.data()) {
                *a += b;
            }
        }
    }
    let scale = [Some(&p.chi33), p.chi13.as_ref(), p.chi23.as_ref()]
        .into_iter()
        .flatten()
        .map(|v| v.linf_norm())
        .fold(0.0, f64::max);
    plan.inverse_real(grid, acc, scale)
}

/// Additive phase jump inside a ball (radius 0 = single voxel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseOffset {
    pub center: [usize; 3],
    #[serde(default)]
    pub radius: f64,
    #[serde(default = "default_offset")]
    pub value: f64,
}

fn default_offset() -> f64 {
    PI
}

impl PhaseOffset {
    pub fn voxel(center: [usize; 3], value: f64) -> Self {
        Self {
            center,
            radius: 0.0,
            value,
        }
    }

    pub fn ball(center: [usize; 3], radius: f64, value: f64) -> Self {
        Self { center, radius, value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSpec {
    /// `1/sigma` of the per-component complex noise; no noise when absent.
    #[serde(default = "default_snr")]
    pub noise_snr: Option<f64>,
    #[serde(default)]
    pub offsets: Vec<PhaseOffset>,
    #[serde(default)]
    pub seed: u64,
}

fn default_snr() -> Option<f64> {
    Some(100.0)
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self {
            noise_snr: default_snr(),
            offsets: Vec::new(),
            seed: 0,
        }
    }
}

impl CorruptionSpec {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if let Some(snr) = self.noise_snr {
            if !(snr > 0.0) {
                return Err(Error::config(format!("noise SNR {snr} must be positive")));
            }
        }
        let shape = grid.shape();
        for o in &self.offsets {
            if !(o.radius >= 0.0) {
                return Err(Error::config(format!("offset radius {} must be >= 0", o.radius)));
            }
            if (0..3).any(|a| o.center[a] >= shape[a]) {
                return Err(Error::config(format!("offset center {:?} outside {grid}", o.center)));
            }
        }
        Ok(())
    }
}

/// Three `+pi` balls of radius 2 at fixed fractions of the grid, inside the
/// default head ROI.
pub fn default_offsets(grid: &GridSpec) -> Vec<PhaseOffset> {
    let [nx, ny, nz] = grid.shape().map(|n| n as f64);
    let at = |fx: f64, fy: f64, fz: f64| {
        [
            (fx * nx).round() as usize,
            (fy * ny).round() as usize,
            (fz * nz).round() as usize,
        ]
    };
    vec![
        PhaseOffset::ball(at(0.35, 0.42, 0.62), 2.0, PI),
        PhaseOffset::ball(at(0.62, 0.60, 0.45), 2.0, PI),
        PhaseOffset::ball(at(0.48, 0.30, 0.36), 2.0, PI),
    ]
}

/// Adds phase offsets, then complex Gaussian noise on `exp(i psi)`, and
/// returns the wrapped phase `arg(exp(i psi) + n)`.
pub fn corrupt(psi: &Volume, spec: &CorruptionSpec) -> Result<Volume> {
    let grid = *psi.grid();
    spec.validate(&grid)?;
    let mut phase = psi.clone();
    for o in &spec.offsets {
        let c = o.center.map(|x| x as f64);
        let ball = Shape::Sphere {
            center: c,
            radius: o.radius,
        };
        if o.radius == 0.0 {
            let [i, j, k] = o.center;
            let v = phase.get(i, j, k);
            phase.set(i, j, k, v + o.value);
        } else {
            let data = phase.data_mut();
            for idx in ball.rasterize(&grid) {
                data[idx] += o.value;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = match spec.noise_snr {
        Some(snr) => Some(
            Normal::new(0.0, 1.0 / snr)
                .map_err(|e| Error::config(format!("noise distribution: {e}")))?,
        ),
        None => None,
    };
    for v in phase.data_mut() {
        let mut s = Complex64::from_polar(1.0, *v);
        if let Some(n) = &noise {
            s += Complex64::new(n.sample(&mut rng), n.sample(&mut rng));
        }
        *v = s.arg();
    }
    Ok(phase)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::fft3;
    use crate::kernel::cone_distance_proxy;

    #[test]
    fn empty_recipe_is_zero() {
        let grid = GridSpec::cubic(8).unwrap();
        let p = make_phantom(&grid, &PhantomRecipe::default()).unwrap();
        assert_eq!(p.chi33.linf_norm(), 0.0);
        assert!(p.chi13.is_none());
        assert_eq!(p.mask.data().iter().sum::<f64>(), 512.0);
    }

    #[test]
    fn sphere_volume_close_to_analytic() {
        let grid = GridSpec::cubic(32).unwrap();
        let recipe = PhantomRecipe {
            roi: None,
            shapes: vec![Placement {
                shape: Shape::Sphere { center: [16.0; 3], radius: 8.0 },
                value: 1.0,
                component: Component::Chi33,
            }],
        };
        let p = make_phantom(&grid, &recipe).unwrap();
        let count = p.chi33.data().iter().filter(|&&v| v == 1.0).count() as f64;
        let analytic = 4.0 / 3.0 * PI * 512.0;
        assert!((count - analytic).abs() / analytic < 0.15, "{count} vs {analytic}");
    }

    #[test]
    fn disjoint_spheres_superpose() {
        let grid = GridSpec::cubic(16).unwrap();
        let a = Placement { shape: Shape::Sphere { center: [4.0; 3], radius: 2.0 }, value: 1.0, component: Component::Chi33 };
        let b = Placement { shape: Shape::Sphere { center: [11.0; 3], radius: 3.0 }, value: -0.5, component: Component::Chi33 };
        let pa = make_phantom(&grid, &PhantomRecipe { roi: None, shapes: vec![a.clone()] }).unwrap();
        let pb = make_phantom(&grid, &PhantomRecipe { roi: None, shapes: vec![b.clone()] }).unwrap();
        let pab = make_phantom(&grid, &PhantomRecipe { roi: None, shapes: vec![a, b] }).unwrap();
        assert_eq!(pab.chi33, pa.chi33.add(&pb.chi33).unwrap());
    }

    #[test]
    fn out_of_bounds_shape_rejected() {
        let grid = GridSpec::cubic(16).unwrap();
        let recipe = PhantomRecipe {
            roi: None,
            shapes: vec![Placement { shape: Shape::Sphere { center: [2.0, 8.0, 8.0], radius: 4.0 }, value: 1.0, component: Component::Chi33 }],
        };
        assert!(matches!(make_phantom(&grid, &recipe), Err(Error::Config(_))));
    }

    #[test]
    fn default_head_fits_common_grids() {
        for n in [16, 32, 48, 64] {
            let grid = GridSpec::cubic(n).unwrap();
            let p = make_phantom(&grid, &PhantomRecipe::default_head(&grid)).unwrap();
            assert!(p.chi33.linf_norm() > 0.29);
            let outside: f64 = p.chi33.data().iter().zip(p.mask.data()).map(|(c, m)| c.abs() * (1.0 - m)).sum();
            assert_eq!(outside, 0.0, "shapes must lie inside the ROI at n={n}");
            for o in default_offsets(&grid) {
                let [i, j, k] = o.center;
                assert_eq!(p.mask.get(i, j, k), 1.0);
            }
        }
    }

    #[test]
    fn forward_of_zero_and_constant() {
        let grid = GridSpec::cubic(8).unwrap();
        assert_eq!(forward_dipole(&Volume::zeros(grid), 0.0).unwrap().linf_norm(), 0.0);
        let psi = forward_dipole(&Volume::filled(grid, 0.7), 0.0).unwrap();
        assert!(psi.linf_norm() < 1e-14);
    }

    #[test]
    fn forward_spectrum_vanishes_near_cone() {
        let grid = GridSpec::cubic(16).unwrap();
        let p = make_phantom(&grid, &PhantomRecipe::default_head(&grid)).unwrap();
        let psi = forward_dipole(&p.chi33, 0.0).unwrap();
        let s = fft3(&psi);
        let abs_d = cone_distance_proxy(&FreqGrid::new(&grid));
        let max = s.data().iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (c, &d) in s.data().iter().zip(abs_d.data()).skip(1) {
            if d < 1e-3 {
                assert!(c.norm() <= 1e-3 * max);
            }
        }
    }

    #[test]
    fn sti_reduces_to_dipole_without_cross_terms() {
        let grid = GridSpec::cubic(16).unwrap();
        let p = make_phantom(&grid, &PhantomRecipe::default_head(&grid)).unwrap();
        let zero = p.with_proportional_cross_terms(0.0, 0.0);
        let a = forward_sti_z(&zero).unwrap();
        let b = forward_dipole(&p.chi33, 0.0).unwrap();
        assert!(a.sub(&b).unwrap().linf_norm() < 1e-12);
        assert!(forward_sti_z(&p).unwrap().sub(&b).unwrap().linf_norm() < 1e-12);
    }

    #[test]
    fn sti_cross_term_reaches_the_cone() {
        let grid = GridSpec::cubic(16).unwrap();
        let mut chi13 = Volume::zeros(grid);
        chi13.set(0, 0, 0, 1.0);
        let p = Phantom {
            chi33: Volume::zeros(grid),
            chi13: Some(chi13),
            chi23: None,
            mask: Volume::filled(grid, 1.0),
            description: vec![],
        };
        let s = fft3(&forward_sti_z(&p).unwrap());
        let on_cone = grid.index(1, 1, 1); // xi_z xi_x != 0, |D| = 0
        assert!(s.data()[on_cone].norm() > 0.1);
    }

    #[test]
    fn sti_cross_term_is_linear_in_sign() {
        let grid = GridSpec::cubic(16).unwrap();
        let base = make_phantom(&grid, &PhantomRecipe::default_head(&grid)).unwrap();
        let dip = forward_dipole(&base.chi33, 0.0).unwrap();
        let plus = forward_sti_z(&base.with_proportional_cross_terms(1.0, 0.0)).unwrap();
        let minus = forward_sti_z(&base.with_proportional_cross_terms(-1.0, 0.0)).unwrap();
        let cp = plus.sub(&dip).unwrap();
        let cm = minus.sub(&dip).unwrap();
        assert!(cp.add(&cm).unwrap().linf_norm() < 1e-12);
        assert!(cp.linf_norm() > 1e-3);
    }

    #[test]
    fn single_voxel_offset_without_noise() {
        let grid = GridSpec::cubic(8).unwrap();
        let psi = Volume::from_fn(grid, |[i, j, k]| 0.01 * (i as f64 - j as f64 + 0.5 * k as f64));
        let spec = CorruptionSpec {
            noise_snr: None,
            offsets: vec![PhaseOffset::voxel([3, 4, 5], PI)],
            seed: 0,
        };
        let out = corrupt(&psi, &spec).unwrap();
        let mut changed = 0;
        for (idx, (a, b)) in out.data().iter().zip(psi.data()).enumerate() {
            let diff = (a - b).rem_euclid(2.0 * PI);
            if (a - b).abs() > 1e-12 {
                changed += 1;
                assert_eq!(grid.unravel(idx), [3, 4, 5]);
                assert!((diff - PI).abs() < 1e-12);
            }
        }
        assert_eq!(changed, 1);
    }

    #[test]
    fn vanishing_noise_is_identity() {
        let grid = GridSpec::cubic(8).unwrap();
        let psi = Volume::from_fn(grid, |[i, j, k]| 0.1 * (i as f64 * 0.7 + j as f64 - k as f64).sin());
        let spec = CorruptionSpec { noise_snr: Some(1e12), offsets: vec![], seed: 3 };
        assert!(corrupt(&psi, &spec).unwrap().sub(&psi).unwrap().linf_norm() < 1e-6);
    }

    #[test]
    fn snr_100_noise_level() {
        let grid = GridSpec::cubic(32).unwrap();
        let out = corrupt(&Volume::zeros(grid), &CorruptionSpec { seed: 42, ..Default::default() }).unwrap();
        let n = grid.len() as f64;
        let mean = out.data().iter().sum::<f64>() / n;
        let sd = (out.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((0.009..=0.011).contains(&sd), "sd = {sd}");
    }

    #[test]
    fn corruption_is_reproducible() {
        let grid = GridSpec::cubic(8).unwrap();
        let psi = Volume::zeros(grid);
        let spec = CorruptionSpec { seed: 7, offsets: vec![PhaseOffset::ball([4, 4, 4], 1.5, 1.0)], ..Default::default() };
        let a = corrupt(&psi, &spec).unwrap();
        let b = corrupt(&psi, &spec).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let other = corrupt(&psi, &CorruptionSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn invalid_corruption_specs() {
        let grid = GridSpec::cubic(8).unwrap();
        let psi = Volume::zeros(grid);
        let bad_snr = CorruptionSpec { noise_snr: Some(0.0), ..Default::default() };
        assert!(corrupt(&psi, &bad_snr).is_err());
        let bad_center = CorruptionSpec { offsets: vec![PhaseOffset::voxel([8, 0, 0], 1.0)], ..Default::default() };
        assert!(corrupt(&psi, &bad_center).is_err());
    }
}
