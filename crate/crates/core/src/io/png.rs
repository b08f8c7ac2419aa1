//! 8-bit grayscale slice rendering.
//!
//! A sample `v` maps to `floor((clip(v) - lo) / (hi - lo) * 255 + 0.5)`,
//! so ties round up. Slices normal to z are `nx` wide and `ny` tall, normal
//! to y `nx` by `nz`, normal to x `ny` by `nz`; row 0 is index 0 (no flip).

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::simulate::Axis;
use crate::volume::Volume;

/// A grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

fn check_window(window: [f64; 2]) -> Result<()> {
    if window[0] < window[1] && window.iter().all(|w| w.is_finite()) {
        Ok(())
    } else {
        Err(Error::config(format!("display window {window:?} must satisfy lo < hi")))
    }
}

pub fn to_gray(v: f64, window: [f64; 2]) -> u8 {
    let [lo, hi] = window;
    let t = (v.clamp(lo, hi) - lo) / (hi - lo);
    (t * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn axis_index(axis: Axis) -> usize {
    match axis {
        Axis::X => 0,
        Axis::Y => 1,
        Axis::Z => 2,
    }
}

/// One slice normal to `axis` at `index`.
pub fn slice_image(v: &Volume, axis: Axis, index: usize, window: [f64; 2]) -> Result<GrayImage> {
    check_window(window)?;
    let shape = v.grid().shape();
    let a = axis_index(axis);
    if index >= shape[a] {
        return Err(Error::OutOfRange(format!(
            "slice {index} along {axis:?} (extent {})",
            shape[a]
        )));
    }
    let (u, w) = match a {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (width, height) = (shape[u], shape[w]);
    let mut pixels = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let mut p = [0usize; 3];
            p[a] = index;
            p[u] = col;
            p[w] = row;
            pixels.push(to_gray(v.get(p[0], p[1], p[2]), window));
        }
    }
    Ok(GrayImage { width, height, pixels })
}

pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&img.pixels)?;
        writer.finish()?;
    }
    Ok(out)
}

pub fn write_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    std::io::Write::write_all(&mut w, &encode_png(img)?).map_err(|e| Error::io(path, e))
}

/// Writes `<prefix>_<axis><index>.png` for each index; returns the paths.
pub fn render_slices(
    v: &Volume,
    axis: Axis,
    indices: &[usize],
    window: [f64; 2],
    path_prefix: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let prefix = path_prefix.as_ref();
    let images: Vec<GrayImage> = indices
        .iter()
        .map(|&i| slice_image(v, axis, i, window))
        .collect::<Result<_>>()?;
    let tag = match axis {
        Axis::X => 'x',
        Axis::Y => 'y',
        Axis::Z => 'z',
    };
    let mut paths = Vec::with_capacity(indices.len());
    for (img, &i) in images.iter().zip(indices) {
        let name = format!(
            "{}_{tag}{i:03}.png",
            prefix.file_name().and_then(|s| s.to_str()).unwrap_or("slice")
        );
        let path = prefix.with_file_name(name);
        write_png(img, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Tiles equally sized images row by row, `cols` per row, with a one-pixel
/// black gutter.
pub fn montage(tiles: &[GrayImage], cols: usize) -> Result<GrayImage> {
    let first = tiles
        .first()
        .ok_or_else(|| Error::config("montage needs at least one tile"))?;
    if cols == 0 {
        return Err(Error::config("montage needs at least one column"));
    }
    if tiles.iter().any(|t| t.width != first.width || t.height != first.height) {
        return Err(Error::config("montage tiles differ in size"));
    }
    let rows = tiles.len().div_ceil(cols);
    let width = cols * first.width + (cols - 1);
    let height = rows * first.height + (rows - 1);
    let mut pixels = vec![0u8; width * height];
    for (t, tile) in tiles.iter().enumerate() {
        let (r0, c0) = ((t / cols) * (first.height + 1), (t % cols) * (first.width + 1));
        for y in 0..first.height {
            let dst = (r0 + y) * width + c0;
            pixels[dst..dst + first.width].copy_from_slice(&tile.pixels[y * first.width..(y + 1) * first.width]);
        }
    }
    Ok(GrayImage { width, height, pixels })
}
