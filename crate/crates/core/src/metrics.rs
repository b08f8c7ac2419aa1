//! ROI-masked error metrics and near-cone streak energy.

use serde::{Deserialize, Serialize};

use crate::bands::{BandId, BandIndex, BandSet};
use crate::error::{Error, Result};
use crate::fourier::apply_multiplier;
use crate::volume::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XsimParams {
    #[serde(default = "d_k1")]
    pub k1: f64,
    #[serde(default = "d_k2")]
    pub k2: f64,
    /// Dynamic range (ppm).
    #[serde(default = "d_l")]
    pub dynamic_range: f64,
    /// Standard deviation of the Gaussian window (voxels).
    #[serde(default = "d_sigma")]
    pub sigma: f64,
}

fn d_k1() -> f64 {
    0.01
}
fn d_k2() -> f64 {
    0.001
}
fn d_l() -> f64 {
    1.0
}
fn d_sigma() -> f64 {
    1.5
}

impl Default for XsimParams {
    fn default() -> Self {
        Self {
            k1: d_k1(),
            k2: d_k2(),
            dynamic_range: d_l(),
            sigma: d_sigma(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse_percent: f64,
    pub xsim: f64,
    pub streak_energy: f64,
    pub roi_voxels: usize,
}

fn roi_count(est: &Volume, truth: &Volume, roi: &Volume) -> Result<usize> {
    est.grid().ensure_matches(truth.grid())?;
    est.grid().ensure_matches(roi.grid())?;
    let n = roi.data().iter().filter(|&&m| m != 0.0).count();
    if n == 0 {
        Err(Error::config("region of interest is empty"))
    } else {
        Ok(n)
    }
}

/// `100 * |(est - truth) roi| / |truth roi|`.
pub fn rmse(est: &Volume, truth: &Volume, roi: &Volume) -> Result<f64> {
    roi_count(est, truth, roi)?;
    let (mut num, mut den) = (0.0, 0.0);
    for ((&e, &t), &m) in est.data().iter().zip(truth.data()).zip(roi.data()) {
        if m != 0.0 {
            num += (e - t) * (e - t);
            den += t * t;
        }
    }
    if den == 0.0 {
        return Err(Error::config("ground truth is zero on the region of interest"));
    }
    Ok(100.0 * (num / den).sqrt())
}

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Separable zero-padded convolution with symmetric `taps`.
fn blur(v: &Volume, taps: &[f64]) -> Volume {
    let grid = *v.grid();
    let shape = grid.shape();
    let r = (taps.len() / 2) as isize;
    let mut cur = v.clone();
    for axis in 0..3 {
        let n = shape[axis] as isize;
        let src = cur.clone();
        for (idx, out) in cur.data_mut().iter_mut().enumerate() {
            let pos = grid.unravel(idx);
            let mut acc = 0.0;
            for (t, &w) in taps.iter().enumerate() {
                let q = pos[axis] as isize + t as isize - r;
                if q < 0 || q >= n {
                    continue;
                }
                let mut p = pos;
                p[axis] = q as usize;
                acc += w * src.data()[grid.index(p[0], p[1], p[2])];
            }
            *out = acc;
        }
    }
    cur
}

/// Structural similarity with Gaussian local statistics renormalized
/// inside the ROI, averaged over ROI voxels.
pub fn xsim(est: &Volume, truth: &Volume, roi: &Volume, params: &XsimParams) -> Result<f64> {
    let n = roi_count(est, truth, roi)?;
    let taps = gaussian_taps(params.sigma);
    let m = roi.map(|x| if x != 0.0 { 1.0 } else { 0.0 });
    let mx = est.mul(&m)?;
    let my = truth.mul(&m)?;
    let wsum = blur(&m, &taps);
    let local = |v: &Volume| -> Volume {
        let b = blur(v, &taps);
        b.zip_map(&wsum, |a, w| if w > 0.0 { a / w } else { 0.0 }).expect("same grid")
    };
    let mu_x = local(&mx);
    let mu_y = local(&my);
    let exx = local(&mx.mul(&mx)?);
    let eyy = local(&my.mul(&my)?);
    let exy = local(&mx.mul(&my)?);

    let c1 = (params.k1 * params.dynamic_range).powi(2);
    let c2 = (params.k2 * params.dynamic_range).powi(2);
    let mut total = 0.0;
    for idx in 0..m.data().len() {
        if m.data()[idx] == 0.0 {
            continue;
        }
        let (ux, uy) = (mu_x.data()[idx], mu_y.data()[idx]);
        let vx = exx.data()[idx] - ux * ux;
        let vy = eyy.data()[idx] - uy * uy;
        let cxy = exy.data()[idx] - ux * uy;
        let num = (2.0 * ux * uy + c1) * (2.0 * cxy + c2);
        let den = (ux * ux + uy * uy + c1) * (vx + vy + c2);
        total += num / den;
    }
    Ok(total / n as f64)
}

/// `|sum of selected band images| / |est|`; 0 for a zero volume.
pub fn streak_energy(est: &Volume, bs: &BandSet, near: &[BandIndex]) -> Result<f64> {
    if near.is_empty() {
        return Err(Error::config("streak energy needs a non-empty band selection"));
    }
    let total = est.l2_norm();
    if total == 0.0 {
        return Ok(0.0);
    }
    let ids: Vec<(BandId, f64)> = near.iter().map(|&b| (BandId::Detail(b), 1.0)).collect();
    let w = bs.weighted_sum(&ids)?;
    Ok(apply_multiplier(est, &w)?.l2_norm() / total)
}

pub fn metric_report(
    est: &Volume,
    truth: &Volume,
    roi: &Volume,
    params: &XsimParams,
    bs: &BandSet,
    near: &[BandIndex],
) -> Result<MetricReport> {
    Ok(MetricReport {
        rmse_percent: rmse(est, truth, roi)?,
        xsim: xsim(est, truth, roi, params)?,
        streak_energy: streak_energy(est, bs, near)?,
        roi_voxels: roi_count(est, truth, roi)?,
    })
}
