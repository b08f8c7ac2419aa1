//! Native volume container: `u32` LE header length, JSON header, then
//! little-endian `f64` samples (complex samples interleaved re, im).

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{ComplexVolume, GridSpec, Sample, Volume, VolumeKind};

pub const CONTAINER_VERSION: u32 = 1;
const MAX_HEADER_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContainerHeader {
    pub shape: [usize; 3],
    pub voxel_size: [f64; 3],
    pub kind: VolumeKind,
    pub order: String,
    pub version: u32,
}

/// A volume read back from disk, of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyVolume {
    Real(Volume),
    Complex(ComplexVolume),
}

impl AnyVolume {
    pub fn grid(&self) -> &GridSpec {
        match self {
            AnyVolume::Real(v) => v.grid(),
            AnyVolume::Complex(v) => v.grid(),
        }
    }

    pub fn kind(&self) -> VolumeKind {
        match self {
            AnyVolume::Real(_) => VolumeKind::Real,
            AnyVolume::Complex(_) => VolumeKind::Complex,
        }
    }

    pub fn into_real(self) -> Result<Volume> {
        match self {
            AnyVolume::Real(v) => Ok(v),
            AnyVolume::Complex(_) => Err(Error::Unsupported {
                field: "kind",
                value: "complex volume where a real one is required".into(),
            }),
        }
    }
}

pub fn encode_volume<T: Sample>(v: &Volume<T>) -> Result<Vec<u8>> {
    let header = ContainerHeader {
        shape: v.grid().shape(),
        voxel_size: v.grid().voxel_size(),
        kind: T::KIND,
        order: "x_fastest".into(),
        version: CONTAINER_VERSION,
    };
    let json = serde_json::to_vec(&header)?;
    let per = match T::KIND {
        VolumeKind::Real => 1,
        VolumeKind::Complex => 2,
    };
    let mut out = Vec::with_capacity(4 + json.len() + 8 * per * v.data().len());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for s in v.data() {
        let c = s.to_complex();
        out.extend_from_slice(&c.re.to_le_bytes());
        if per == 2 {
            out.extend_from_slice(&c.im.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_volume(bytes: &[u8], path: &Path) -> Result<AnyVolume> {
    let malformed = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 4 {
        return Err(malformed("file shorter than the length prefix".into()));
    }
    let hlen = LittleEndian::read_u32(&bytes[..4]) as usize;
    if hlen == 0 || hlen > MAX_HEADER_BYTES || 4 + hlen > bytes.len() {
        return Err(malformed(format!("implausible header length {hlen}")));
    }
    let raw: serde_json::Value =
        serde_json::from_slice(&bytes[4..4 + hlen]).map_err(|e| malformed(e.to_string()))?;
    match raw.get("version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == CONTAINER_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::VersionMismatch {
                path: path.to_path_buf(),
                found: v.min(u32::MAX as u64) as u32,
            })
        }
        None => return Err(malformed("missing or non-integer version".into())),
    }
    let header: ContainerHeader = serde_json::from_value(raw).map_err(|e| malformed(e.to_string()))?;
    if header.order != "x_fastest" {
        return Err(malformed(format!("unsupported sample order {:?}", header.order)));
    }
    let grid = GridSpec::new(header.shape, header.voxel_size).map_err(|e| malformed(e.to_string()))?;

    let per = match header.kind {
        VolumeKind::Real => 1,
        VolumeKind::Complex => 2,
    };
    let payload = &bytes[4 + hlen..];
    let expected = 8 * per * grid.len();
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(malformed(format!(
            "{} trailing bytes after the payload",
            payload.len() - expected
        )));
    }
    let mut floats = vec![0f64; per * grid.len()];
    LittleEndian::read_f64_into(payload, &mut floats);
    let bad = |e: Error| malformed(format!("payload: {e}"));
    Ok(match header.kind {
        VolumeKind::Real => {
            AnyVolume::Real(Volume::from_vec(grid, floats).map_err(bad)?)
        }
        VolumeKind::Complex => AnyVolume::Complex(
            Volume::from_vec(
                grid,
                floats
                    .chunks_exact(2)
                    .map(|c| Complex64::new(c[0], c[1]))
                    .collect(),
            )
            .map_err(bad)?,
        ),
    })
}

pub fn write_volume<T: Sample>(v: &Volume<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_volume(v)?).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<AnyVolume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_volume(&bytes, path)
}

/// Reads a container that must hold a real volume.
pub fn read_real_volume(path: impl AsRef<Path>) -> Result<Volume> {
    read_volume(path)?.into_real()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(grid: GridSpec, seed: u64) -> Volume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Volume::from_fn(grid, |_| rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-300..300)))
    }

    #[test]
    fn real_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.dlv");
        let grid = GridSpec::new([16, 16, 16], [1.0, 0.5, 2.0]).unwrap();
        let v = random(grid, 1);
        write_volume(&v, &path).unwrap();
        let back = read_real_volume(&path).unwrap();
        assert_eq!(back.grid(), v.grid());
        assert!(back.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn complex_round_trip_keeps_imaginary_parts() {
        let grid = GridSpec::cubic(6).unwrap();
        let re = random(grid, 2);
        let im = random(grid, 3);
        let v = re.zip_map(&im, Complex64::new).unwrap();
        match decode_volume(&encode_volume(&v).unwrap(), Path::new("mem")).unwrap() {
            AnyVolume::Complex(back) => assert_eq!(back, v),
            other => panic!("wrong kind {:?}", other.kind()),
        }
    }

    #[test]
    fn truncated_payload_is_reported() {
        let grid = GridSpec::cubic(4).unwrap();
        let bytes = encode_volume(&random(grid, 4)).unwrap();
        let err = decode_volume(&bytes[..bytes.len() - 3], Path::new("t")).unwrap_err();
        assert!(matches!(err, Error::TruncatedPayload { expected: 512, found: 509, .. }), "{err}");
    }

    #[test]
    fn version_and_header_errors_are_distinct() {
        let grid = GridSpec::cubic(4).unwrap();
        let bytes = encode_volume(&random(grid, 5)).unwrap();
        let hlen = LittleEndian::read_u32(&bytes[..4]) as usize;
        let header = std::str::from_utf8(&bytes[4..4 + hlen]).unwrap().replace("\"version\":1", "\"version\":2");
        let mut v2 = (header.len() as u32).to_le_bytes().to_vec();
        v2.extend_from_slice(header.as_bytes());
        v2.extend_from_slice(&bytes[4 + hlen..]);
        assert!(matches!(decode_volume(&v2, Path::new("v")), Err(Error::VersionMismatch { found: 2, .. })));

        let mut garbage = 5u32.to_le_bytes().to_vec();
        garbage.extend_from_slice(b"{oops");
        assert!(matches!(decode_volume(&garbage, Path::new("g")), Err(Error::MalformedHeader { .. })));
        assert!(matches!(decode_volume(&[1, 0], Path::new("s")), Err(Error::MalformedHeader { .. })));
    }
}
