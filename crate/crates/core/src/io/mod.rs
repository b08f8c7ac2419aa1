//! Volume files, NIfTI-1 interop and PNG slice rendering.

mod container;
mod nifti;
mod png;

use std::path::{Path, PathBuf};

pub use container::{
    decode_volume, encode_volume, read_real_volume, read_volume, write_volume, AnyVolume,
    ContainerHeader, CONTAINER_VERSION,
};
pub use nifti::{decode_nifti, encode_nifti, read_nifti_minimal, write_nifti_minimal};
pub use png::{encode_png, montage, render_slices, slice_image, to_gray, write_png, GrayImage};

use crate::bands::BandId;
use crate::error::Result;
use crate::transform::Decomposition;
use crate::volume::Volume;

/// Extension of the native container.
pub const VOLUME_EXT: &str = "dlv";

/// Writes every band image as `<prefix>_<band>.dlv` in `dir`.
pub fn export_decomposition(d: &Decomposition, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut ids: Vec<BandId> = d.bands().map(|(b, _)| BandId::Detail(b)).collect();
    ids.push(BandId::Coarse);
    let mut paths = Vec::with_capacity(ids.len());
    for id in ids {
        let path = dir.join(format!("{prefix}_{id}.{VOLUME_EXT}"));
        write_volume(d.get(id).expect("listed from the decomposition"), &path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads a real volume, as NIfTI-1 for `.nii` paths and as the native
/// container otherwise.
pub fn read_any_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("nii") => read_nifti_minimal(path),
        _ => read_real_volume(path),
    }
}
