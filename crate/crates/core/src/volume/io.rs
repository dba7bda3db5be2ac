use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use super::{BoundingBox, Geometry, Volume3D};
use crate::error::{Error, Result};

const NIFTI_HEADER_LEN: usize = 348;
const NIFTI_VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeFormat {
    Nifti1,
    RawJson,
}

impl VolumeFormat {
    /// `.nii` / `.nii.gz` select NIfTI-1, `.json` selects the raw sidecar format.
    pub fn from_path(path: &Path) -> Result<Self> {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        if name.ends_with(".nii") || name.ends_with(".nii.gz") {
            Ok(VolumeFormat::Nifti1)
        } else if name.ends_with(".json") {
            Ok(VolumeFormat::RawJson)
        } else {
            Err(Error::InvalidParameter(format!(
                "cannot infer volume format from {}",
                path.display()
            )))
        }
    }
}

pub fn load_volume(path: &Path, format: VolumeFormat) -> Result<Volume3D> {
    match format {
        VolumeFormat::Nifti1 => load_nifti(path),
        VolumeFormat::RawJson => load_raw_json(path),
    }
}

pub fn save_volume(vol: &Volume3D, path: &Path, format: VolumeFormat) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    match format {
        VolumeFormat::Nifti1 => save_nifti(vol, path),
        VolumeFormat::RawJson => save_raw_json(vol, path),
    }
}

fn format_err(format: &'static str, path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        format,
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn le_i16(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn le_i32(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn le_f32(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn load_nifti(path: &Path) -> Result<Volume3D> {
    let bytes = read_all(path)?;
    if bytes.len() < NIFTI_HEADER_LEN {
        return Err(format_err("nifti", path, "file shorter than header"));
    }
    if le_i32(&bytes, 0) != NIFTI_HEADER_LEN as i32 {
        return Err(format_err(
            "nifti",
            path,
            "sizeof_hdr is not 348 (big-endian or not NIfTI-1)",
        ));
    }
    if &bytes[344..347] != b"n+1" {
        return Err(format_err("nifti", path, "missing n+1 single-file magic"));
    }

    let ndim = le_i16(&bytes, 40);
    if !(1..=7).contains(&ndim) {
        return Err(format_err("nifti", path, format!("dim[0] = {ndim}")));
    }
    let mut dims = [1usize; 3];
    for (a, d) in dims.iter_mut().enumerate() {
        if (a as i16) < ndim {
            let v = le_i16(&bytes, 42 + 2 * a);
            if v <= 0 {
                return Err(format_err("nifti", path, format!("dim[{}] = {v}", a + 1)));
            }
            *d = v as usize;
        }
    }
    for a in 3..ndim as usize {
        let v = le_i16(&bytes, 42 + 2 * a);
        if v > 1 {
            return Err(format_err(
                "nifti",
                path,
                format!("only 3D volumes are supported, dim[{}] = {v}", a + 1),
            ));
        }
    }

    let mut spacing = [1.0f64; 3];
    for (a, s) in spacing.iter_mut().enumerate() {
        let v = le_f32(&bytes, 80 + 4 * a) as f64;
        *s = if v > 0.0 { v } else { 1.0 };
    }

    let sform_code = le_i16(&bytes, 254);
    let centre0 = if sform_code > 0 {
        [le_f32(&bytes, 292), le_f32(&bytes, 308), le_f32(&bytes, 324)]
    } else {
        [le_f32(&bytes, 268), le_f32(&bytes, 272), le_f32(&bytes, 276)]
    };
    let origin = [0, 1, 2].map(|a| centre0[a] as f64 - 0.5 * spacing[a]);

    let datatype = le_i16(&bytes, 70);
    let width = match datatype {
        DT_UINT8 => 1,
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => return Err(Error::UnsupportedDatatype(other)),
    };
    let vox_offset = le_f32(&bytes, 108);
    if !(vox_offset >= NIFTI_HEADER_LEN as f32) {
        return Err(format_err("nifti", path, format!("vox_offset {vox_offset}")));
    }
    let vox_offset = vox_offset as usize;
    let payload = bytes.get(vox_offset..).unwrap_or(&[]);
    let expected = dims.iter().product::<usize>();
    if payload.len() != expected * width {
        return Err(Error::LengthMismatch {
            dims,
            expected,
            found: payload.len() / width,
        });
    }

    let slope = le_f32(&bytes, 112) as f64;
    let inter = le_f32(&bytes, 116) as f64;
    let scale = slope != 0.0 && slope.is_finite() && !(slope == 1.0 && inter == 0.0);

    let mut data: Vec<f64> = match datatype {
        DT_UINT8 => payload.iter().map(|&b| b as f64).collect(),
        DT_INT16 => payload
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        DT_FLOAT32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        _ => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    if scale {
        for v in &mut data {
            *v = *v * slope + inter;
        }
    }

    let geom = Geometry::new(dims, spacing, origin).map_err(|e| format_err("nifti", path, e.to_string()))?;
    Volume3D::new(geom, data).map_err(|e| match e {
        Error::InvalidParameter(r) => format_err("nifti", path, r),
        other => other,
    })
}

fn save_nifti(vol: &Volume3D, path: &Path) -> Result<()> {
    let mut hdr = vec![0u8; NIFTI_VOX_OFFSET];
    let put_i16 = |h: &mut [u8], off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut [u8], off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());

    hdr[0..4].copy_from_slice(&(NIFTI_HEADER_LEN as i32).to_le_bytes());
    let dims = vol.dims();
    if dims.iter().any(|&d| d > i16::MAX as usize) {
        return Err(Error::InvalidParameter(format!(
            "dims {dims:?} exceed NIfTI-1 limits"
        )));
    }
    put_i16(&mut hdr, 40, 3);
    for (a, &d) in dims.iter().enumerate() {
        put_i16(&mut hdr, 42 + 2 * a, d as i16);
    }
    for a in 4..8 {
        put_i16(&mut hdr, 40 + 2 * a, 1);
    }
    // float64 payload so any volume round-trips bit-exactly
    put_i16(&mut hdr, 70, DT_FLOAT64);
    put_i16(&mut hdr, 72, 64);
    put_f32(&mut hdr, 76, 1.0);
    let spacing = vol.spacing();
    for a in 0..3 {
        put_f32(&mut hdr, 80 + 4 * a, spacing[a] as f32);
    }
    put_f32(&mut hdr, 108, NIFTI_VOX_OFFSET as f32);
    put_f32(&mut hdr, 112, 1.0);
    hdr[123] = 10; // xyzt_units: mm, s
    put_i16(&mut hdr, 252, 1); // qform_code: scanner
    let origin = vol.origin();
    for a in 0..3 {
        put_f32(&mut hdr, 268 + 4 * a, (origin[a] + 0.5 * spacing[a]) as f32);
    }
    hdr[344..348].copy_from_slice(b"n+1\0");

    let mut bytes = hdr;
    bytes.reserve(vol.len() * 8);
    for &v in vol.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }

    let gz = path
        .to_str()
        .map(|s| s.to_ascii_lowercase().ends_with(".gz"))
        .unwrap_or(false);
    let out = if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes
    };
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSidecar {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    dtype: String,
}

/// The binary payload sits next to the JSON sidecar with a `.bin` extension.
pub fn raw_payload_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("bin")
}

fn load_raw_json(path: &Path) -> Result<Volume3D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let side: RawSidecar =
        serde_json::from_str(&text).map_err(|e| format_err("raw_json", path, e.to_string()))?;
    let width = match side.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => {
            return Err(format_err(
                "raw_json",
                path,
                format!("unsupported dtype {other:?}"),
            ))
        }
    };
    let bin_path = raw_payload_path(path);
    let payload = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let expected = side.dims.iter().product::<usize>();
    if payload.len() != expected * width {
        return Err(Error::LengthMismatch {
            dims: side.dims,
            expected,
            found: payload.len() / width,
        });
    }
    let data = if width == 4 {
        payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect()
    } else {
        payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let geom = Geometry::new(side.dims, side.spacing, side.origin)?;
    Volume3D::new(geom, data)
}

fn save_raw_json(vol: &Volume3D, path: &Path) -> Result<()> {
    let side = RawSidecar {
        dims: vol.dims(),
        spacing: vol.spacing(),
        origin: vol.origin(),
        dtype: "f64".into(),
    };
    let json = serde_json::to_string_pretty(&side)?;
    fs::write(path, json).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::with_capacity(vol.len() * 8);
    for &v in vol.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let bin = raw_payload_path(path);
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))
}

#[derive(Debug, Deserialize)]
struct BoxRow {
    patient_id: String,
    x0: usize,
    y0: usize,
    z0: usize,
    sx: usize,
    sy: usize,
    sz: usize,
}

/// Reads `patient_id,x0,y0,z0,sx,sy,sz` rows.
pub fn load_bounding_boxes(path: &Path) -> Result<BTreeMap<String, BoundingBox>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for row in rdr.deserialize() {
        let r: BoxRow = row?;
        let bbox = BoundingBox::new([r.x0, r.y0, r.z0], [r.sx, r.sy, r.sz])?;
        if out.insert(r.patient_id.clone(), bbox).is_some() {
            return Err(format_err(
                "bbox csv",
                path,
                format!("duplicate patient_id {}", r.patient_id),
            ));
        }
    }
    Ok(out)
}
