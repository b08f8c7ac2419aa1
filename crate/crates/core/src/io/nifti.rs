//! Single-file NIfTI-1 (`n+1`) import/export for 3-D float volumes.

use std::fs;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::volume::{GridSpec, Volume};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

// Byte offsets of the header fields used here.
const DIM: usize = 40;
const DATATYPE: usize = 70;
const BITPIX: usize = 72;
const PIXDIM: usize = 76;
const VOX_OFFSET_FIELD: usize = 108;
const SCL_SLOPE: usize = 112;
const SCL_INTER: usize = 116;
const XYZT_UNITS: usize = 123;
const DESCRIP: usize = 148;
const SFORM_CODE: usize = 254;
const SROW: usize = 280;
const MAGIC: usize = 344;

pub fn read_nifti_minimal(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_nifti(&bytes, path)
}

pub fn decode_nifti(bytes: &[u8], path: &Path) -> Result<Volume> {
    let malformed = |reason: &str| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < HEADER_SIZE {
        return Err(malformed("shorter than a NIfTI-1 header"));
    }
    if LittleEndian::read_i32(bytes) == HEADER_SIZE as i32 {
        decode_with::<LittleEndian>(bytes, path)
    } else if BigEndian::read_i32(bytes) == HEADER_SIZE as i32 {
        decode_with::<BigEndian>(bytes, path)
    } else {
        Err(malformed("sizeof_hdr is not 348 in either byte order"))
    }
}

fn decode_with<B: ByteOrder>(bytes: &[u8], path: &Path) -> Result<Volume> {
    let malformed = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    match &bytes[MAGIC..MAGIC + 4] {
        b"n+1\0" => {}
        b"ni1\0" => {
            return Err(Error::Unsupported {
                field: "magic",
                value: "ni1 (separate header/image pair)".into(),
            })
        }
        other => return Err(malformed(format!("bad magic {other:?}"))),
    }
    let dim: Vec<i16> = (0..8).map(|i| B::read_i16(&bytes[DIM + 2 * i..])).collect();
    if dim[0] != 3 {
        return Err(Error::Unsupported {
            field: "dim[0]",
            value: format!("{} dimensions (only 3-D volumes are read)", dim[0]),
        });
    }
    let datatype = B::read_i16(&bytes[DATATYPE..]);
    let width = match datatype {
        DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => {
            return Err(Error::Unsupported {
                field: "datatype",
                value: format!("code {other} (float32 = 16 and float64 = 64 are read)"),
            })
        }
    };
    let shape = [1, 2, 3].map(|i| dim[i].max(0) as usize);
    let voxel = [1, 2, 3].map(|i| B::read_f32(&bytes[PIXDIM + 4 * i..]).abs() as f64);
    let grid = GridSpec::new(shape, voxel).map_err(|e| malformed(e.to_string()))?;

    let offset = B::read_f32(&bytes[VOX_OFFSET_FIELD..]);
    if !(offset >= HEADER_SIZE as f32) || offset.fract() != 0.0 {
        return Err(malformed(format!("vox_offset {offset}")));
    }
    let offset = offset as usize;
    let expected = width * grid.len();
    let found = bytes.len().saturating_sub(offset);
    if found < expected {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    let payload = &bytes[offset..offset + expected];
    let mut data: Vec<f64> = if width == 4 {
        payload.chunks_exact(4).map(|c| B::read_f32(c) as f64).collect()
    } else {
        payload.chunks_exact(8).map(B::read_f64).collect()
    };
    let slope = B::read_f32(&bytes[SCL_SLOPE..]) as f64;
    let inter = B::read_f32(&bytes[SCL_INTER..]) as f64;
    if slope != 0.0 && slope.is_finite() {
        let inter = if inter.is_finite() { inter } else { 0.0 };
        for v in &mut data {
            *v = slope * *v + inter;
        }
    }
    Volume::from_vec(grid, data).map_err(|e| malformed(format!("payload: {e}")))
}

/// Little-endian float32 NIfTI-1 with a diagonal sform.
pub fn encode_nifti(v: &Volume) -> Result<Vec<u8>> {
    let mut h = vec![0u8; VOX_OFFSET];
    let shape = v.grid().shape();
    let voxel = v.grid().voxel_size();
    LittleEndian::write_i32(&mut h[0..], HEADER_SIZE as i32);
    h[38] = b'r';
    let mut dim = [1i16; 8];
    dim[0] = 3;
    for a in 0..3 {
        dim[a + 1] = i16::try_from(shape[a])
            .map_err(|_| Error::OutOfRange(format!("extent {} exceeds NIfTI-1 limits", shape[a])))?;
    }
    for (i, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut h[DIM + 2 * i..], *d);
    }
    LittleEndian::write_i16(&mut h[DATATYPE..], DT_FLOAT32);
    LittleEndian::write_i16(&mut h[BITPIX..], 32);
    let mut pixdim = [1f32; 8];
    for a in 0..3 {
        pixdim[a + 1] = voxel[a] as f32;
    }
    for (i, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut h[PIXDIM + 4 * i..], *p);
    }
    LittleEndian::write_f32(&mut h[VOX_OFFSET_FIELD..], VOX_OFFSET as f32);
    h[XYZT_UNITS] = 2; // millimetres
    let descrip = b"dipolelets";
    h[DESCRIP..DESCRIP + descrip.len()].copy_from_slice(descrip);
    LittleEndian::write_i16(&mut h[SFORM_CODE..], 1);
    for row in 0..3 {
        LittleEndian::write_f32(&mut h[SROW + 16 * row + 4 * row..], voxel[row] as f32);
    }
    h[MAGIC..MAGIC + 4].copy_from_slice(b"n+1\0");

    h.reserve(4 * v.data().len());
    for &x in v.data() {
        let y = x as f32;
        if !y.is_finite() {
            return Err(Error::OutOfRange(format!("sample {x} not representable as f32")));
        }
        h.extend_from_slice(&y.to_le_bytes());
    }
    Ok(h)
}

pub fn write_nifti_minimal(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_nifti(v)?).map_err(|e| Error::io(path, e))
}
