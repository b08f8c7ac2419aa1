//! Analysis into band images and synthesis by summation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bands::{BandConfig, BandId, BandIndex, BandSet};
use crate::error::{Error, Result};
use crate::fourier::Fft3;
use crate::volume::{GridSpec, Volume};

/// Band images `F^-1(W_(j,m) F f)` and the coarse image of one volume.
#[derive(Debug, Clone)]
pub struct Decomposition {
    grid: GridSpec,
    config: BandConfig,
    expected: Vec<BandIndex>,
    bands: BTreeMap<BandIndex, Volume>,
    coarse: Volume,
}

impl Decomposition {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Configuration of the band set that produced this decomposition.
    pub fn band_config(&self) -> &BandConfig {
        &self.config
    }

    pub fn band(&self, idx: BandIndex) -> Option<&Volume> {
        self.bands.get(&idx)
    }

    pub fn band_mut(&mut self, idx: BandIndex) -> Option<&mut Volume> {
        self.bands.get_mut(&idx)
    }

    pub fn get(&self, id: BandId) -> Option<&Volume> {
        match id {
            BandId::Detail(b) => self.band(b),
            BandId::Coarse => Some(&self.coarse),
        }
    }

    pub fn coarse(&self) -> &Volume {
        &self.coarse
    }

    pub fn coarse_mut(&mut self) -> &mut Volume {
        &mut self.coarse
    }

    /// Detail bands in scale-major order.
    pub fn bands(&self) -> impl Iterator<Item = (BandIndex, &Volume)> {
        self.bands.iter().map(|(k, v)| (*k, v))
    }

    pub fn remove_band(&mut self, idx: BandIndex) -> Option<Volume> {
        self.bands.remove(&idx)
    }

    /// Replaces a band image; the grid must match.
    pub fn set_band(&mut self, idx: BandIndex, v: Volume) -> Result<()> {
        if !self.expected.contains(&idx) {
            return Err(Error::config(format!("band {idx} is not part of this decomposition")));
        }
        self.grid.ensure_matches(v.grid())?;
        self.bands.insert(idx, v);
        Ok(())
    }
}

pub fn analyze(f: &Volume, bs: &BandSet) -> Result<Decomposition> {
    f.grid().ensure_matches(bs.grid())?;
    let grid = *f.grid();
    let plan = Fft3::for_grid(&grid);
    let spectrum = plan.fft3(f);
    let scale = f.linf_norm();

    let ids = bs.band_ids();
    let images: Vec<Volume> = ids
        .par_iter()
        .map(|&id| {
            let w = bs.window(id).expect("id from band_ids");
            plan.inverse_real(grid, spectrum.multiplied(w)?.into_vec(), scale)
        })
        .collect::<Result<_>>()?;

    let mut bands = BTreeMap::new();
    let mut coarse = None;
    for (id, img) in ids.into_iter().zip(images) {
        match id {
            BandId::Detail(b) => {
                bands.insert(b, img);
            }
            BandId::Coarse => coarse = Some(img),
        }
    }
    Ok(Decomposition {
        grid,
        config: bs.config().clone(),
        expected: bs.detail_indices(),
        bands,
        coarse: coarse.expect("band_ids ends with the coarse band"),
    })
}

/// Sum of the coarse image and all band images.
pub fn synthesize(d: &Decomposition) -> Result<Volume> {
    if let Some(missing) = d.expected.iter().find(|b| !d.bands.contains_key(b)) {
        return Err(Error::config(format!("decomposition is missing band {missing}")));
    }
    let mut out = d.coarse.clone();
    for band in d.bands.values() {
        for (o, &v) in out.data_mut().iter_mut().zip(band.data()) {
            *o += v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMode {
    /// Voxelwise sum of the selected band images.
    SignedSum,
    /// Voxelwise sum of squared band images.
    #[default]
    SumOfSquares,
}

#[derive(Debug, Clone)]
pub struct EnergyMap {
    pub map: Volume,
    pub mode: EnergyMode,
    pub selection: Vec<BandId>,
}

pub fn band_energy_map(d: &Decomposition, selection: &[BandId], mode: EnergyMode) -> Result<EnergyMap> {
    if selection.is_empty() {
        return Err(Error::config("band energy map needs a non-empty band selection"));
    }
    let mut map = Volume::zeros(d.grid);
    for &id in selection {
        let band = d
            .get(id)
            .ok_or_else(|| Error::config(format!("band {id} is not in the decomposition")))?;
        for (m, &v) in map.data_mut().iter_mut().zip(band.data()) {
            *m += match mode {
                EnergyMode::SignedSum => v,
                EnergyMode::SumOfSquares => v * v,
            };
        }
    }
    Ok(EnergyMap {
        map,
        mode,
        selection: selection.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::AngularConfig;
    use crate::fourier::apply_multiplier;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(grid: GridSpec, seed: u64) -> Volume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Volume::from_fn(grid, |_| rng.random_range(-1.0..1.0))
    }

    fn rel(a: &Volume, b: &Volume) -> f64 {
        a.sub(b).unwrap().l2_norm() / b.l2_norm()
    }

    #[test]
    fn zero_input_gives_zero_bands() {
        let grid = GridSpec::cubic(8).unwrap();
        let bs = BandSet::new(&grid, &BandConfig::default()).unwrap();
        let d = analyze(&Volume::zeros(grid), &bs).unwrap();
        assert!(d.bands().all(|(_, v)| v.linf_norm() == 0.0));
        assert_eq!(d.coarse().linf_norm(), 0.0);
    }

    #[test]
    fn delta_bands_are_window_kernels() {
        let grid = GridSpec::cubic(8).unwrap();
        let bs = BandSet::new(&grid, &BandConfig::new(1, AngularConfig::evenly_spaced(1))).unwrap();
        let mut delta = Volume::zeros(grid);
        delta.set(0, 0, 0, 1.0);
        let d = analyze(&delta, &bs).unwrap();
        for (idx, band) in d.bands() {
            let w = bs.combined(idx).unwrap();
            let spectrum = crate::fourier::Spectrum::from_vec(
                grid,
                w.data().iter().map(|&x| num_complex::Complex64::new(x, 0.0)).collect(),
            )
            .unwrap();
            let kernel = crate::fourier::ifft3_real(&spectrum).unwrap();
            assert!(band.sub(&kernel).unwrap().linf_norm() < 1e-14);
        }
    }

    #[test]
    fn bands_match_apply_multiplier_exactly() {
        let grid = GridSpec::cubic(16).unwrap();
        let bs = BandSet::new(&grid, &BandConfig::new(1, AngularConfig::evenly_spaced(1))).unwrap();
        let f = random(grid, 11);
        let d = analyze(&f, &bs).unwrap();
        for (idx, band) in d.bands() {
            let direct = apply_multiplier(&f, bs.combined(idx).unwrap()).unwrap();
            assert_eq!(band, &direct);
        }
    }

    #[test]
    fn reconstruction_even_and_odd() {
        for (shape, seed) in [([16, 16, 16], 1), ([15, 17, 16], 2)] {
            let grid = GridSpec::with_shape(shape).unwrap();
            let bs = BandSet::new(&grid, &BandConfig::default()).unwrap();
            let f = random(grid, seed);
            let back = synthesize(&analyze(&f, &bs).unwrap()).unwrap();
            assert!(rel(&back, &f) < 1e-10);
        }
    }

    #[test]
    fn single_band_reconstruction() {
        let grid = GridSpec::cubic(8).unwrap();
        let bs = BandSet::new(&grid, &BandConfig::new(0, AngularConfig::all_pass())).unwrap();
        let f = random(grid, 3);
        let d = analyze(&f, &bs).unwrap();
        assert_eq!(d.bands().count(), 1);
        let sum = d.coarse().add(d.band(BandIndex::new(0, 0)).unwrap()).unwrap();
        assert!(rel(&sum, &f) < 1e-12);
    }

    #[test]
    fn zeroing_near_cone_bands_matches_multiplier() {
        let grid = GridSpec::cubic(12).unwrap();
        let bs = BandSet::new(&grid, &BandConfig::new(1, AngularConfig::default())).unwrap();
        let f = random(grid, 5);
        let mut d = analyze(&f, &bs).unwrap();
        let near = bs.near_cone_selection();
        for &b in &near {
            d.set_band(b, Volume::zeros(grid)).unwrap();
        }
        let kept = synthesize(&d).unwrap();
        let removed: Vec<(BandId, f64)> = near.iter().map(|&b| (BandId::Detail(b), 1.0)).collect();
        let w = bs.weighted_sum(&removed).unwrap().map(|s| 1.0 - s).unwrap();
        let direct = apply_multiplier(&f, &w).unwrap();
        assert!(rel(&kept, &direct) < 1e-10);
    }

    #[test]
    fn missing_band_is_an_error() {
        let grid = GridSpec::cubic(8).unwrap();
        let bs = BandSet::new(&grid, &BandConfig::default()).unwrap();
        let mut d = analyze(&random(grid, 1), &bs).unwrap();
        d.remove_band(BandIndex::new(1, 1));
        assert!(matches!(synthesize(&d), Err(Error::Config(_))));
    }

    #[test]
    fn energy_map_modes() {
        let grid = GridSpec::cubic(8).unwrap();
        let bs = BandSet::new(&grid, &BandConfig::default()).unwrap();
        let f = random(grid, 7);
        let d = analyze(&f, &bs).unwrap();

        let all = band_energy_map(&d, &bs.band_ids(), EnergyMode::SignedSum).unwrap();
        assert!(rel(&all.map, &f) < 1e-10);

        let b = BandIndex::new(0, 1);
        let sq = band_energy_map(&d, &[BandId::Detail(b)], EnergyMode::SumOfSquares).unwrap();
        let expected = d.band(b).unwrap().map(|v| v * v);
        assert_eq!(sq.map, expected);
        assert_eq!(sq.mode, EnergyMode::SumOfSquares);

        assert!(matches!(band_energy_map(&d, &[], EnergyMode::SignedSum), Err(Error::Config(_))));
    }
}
