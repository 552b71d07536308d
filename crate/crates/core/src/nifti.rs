//! Minimal NIfTI-1 reader: uncompressed single-file volumes, float32 and
//! int16 data, either endianness. Endianness is detected from the
//! `sizeof_hdr` byte pattern; the header magic may be `n+1\0` (data in the
//! same file at `vox_offset`) or `ni1\0` (data in a companion `.img`).

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::Volume4;

pub const HEADER_SIZE: usize = 348;
pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn i16(self, b: &[u8], off: usize) -> i16 {
        let raw = [b[off], b[off + 1]];
        match self {
            Endian::Little => i16::from_le_bytes(raw),
            Endian::Big => i16::from_be_bytes(raw),
        }
    }

    fn i32(self, b: &[u8], off: usize) -> i32 {
        let raw = [b[off], b[off + 1], b[off + 2], b[off + 3]];
        match self {
            Endian::Little => i32::from_le_bytes(raw),
            Endian::Big => i32::from_be_bytes(raw),
        }
    }

    fn f32(self, b: &[u8], off: usize) -> f32 {
        let raw = [b[off], b[off + 1], b[off + 2], b[off + 3]];
        match self {
            Endian::Little => f32::from_le_bytes(raw),
            Endian::Big => f32::from_be_bytes(raw),
        }
    }
}

/// The header fields this reader cares about.
#[derive(Debug, Clone)]
pub struct NiftiHeader {
    pub dim: [usize; 4],
    pub datatype: i16,
    pub pixdim: [f32; 4],
    pub vox_offset: u64,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub single_file: bool,
}

impl NiftiHeader {
    /// Repetition time from `pixdim[4]`, if the header carries one.
    pub fn tr_seconds(&self) -> Option<f64> {
        let tr = self.pixdim[3] as f64;
        (tr > 0.0).then_some(tr)
    }
}

fn format_err(path: &Path, field: &str, message: String) -> Error {
    Error::Format {
        file: path.display().to_string(),
        message: format!("{field}: {message}"),
    }
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<(NiftiHeader, Endian)> {
    if bytes.len() < HEADER_SIZE {
        return Err(format_err(
            path,
            "sizeof_hdr",
            format!(
                "file has only {} bytes, header needs {}",
                bytes.len(),
                HEADER_SIZE
            ),
        ));
    }
    let endian = if Endian::Little.i32(bytes, 0) == HEADER_SIZE as i32 {
        Endian::Little
    } else if Endian::Big.i32(bytes, 0) == HEADER_SIZE as i32 {
        Endian::Big
    } else {
        return Err(format_err(
            path,
            "sizeof_hdr",
            format!("expected 348, got {} (LE)", Endian::Little.i32(bytes, 0)),
        ));
    };

    let magic = &bytes[344..348];
    let single_file = match magic {
        b"n+1\0" => true,
        b"ni1\0" => false,
        _ => {
            return Err(format_err(
                path,
                "magic",
                format!("expected \"n+1\\0\" or \"ni1\\0\", got {magic:?}"),
            ))
        }
    };

    let ndim = endian.i16(bytes, 40);
    if !(1..=7).contains(&ndim) {
        return Err(format_err(
            path,
            "dim[0]",
            format!("must be 1..=7, got {ndim}"),
        ));
    }
    let mut dim = [1usize; 4];
    for (i, d) in dim.iter_mut().enumerate() {
        if (i as i16) < ndim {
            let v = endian.i16(bytes, 40 + 2 * (i + 1));
            if v <= 0 {
                return Err(format_err(
                    path,
                    &format!("dim[{}]", i + 1),
                    format!("must be positive, got {v}"),
                ));
            }
            *d = v as usize;
        }
    }

    let datatype = endian.i16(bytes, 70);
    if datatype != DT_INT16 && datatype != DT_FLOAT32 {
        return Err(Error::UnsupportedDatatype { code: datatype });
    }

    let mut pixdim = [0f32; 4];
    for (i, p) in pixdim.iter_mut().enumerate() {
        *p = endian.f32(bytes, 76 + 4 * (i + 1));
    }

    let vox_offset = endian.f32(bytes, 108);
    if vox_offset < 0.0 || vox_offset.fract() != 0.0 {
        return Err(format_err(
            path,
            "vox_offset",
            format!("must be a nonnegative integer, got {vox_offset}"),
        ));
    }
    let min_offset = if single_file { HEADER_SIZE as u64 } else { 0 };
    let vox_offset = (vox_offset as u64).max(min_offset);

    Ok((
        NiftiHeader {
            dim,
            datatype,
            pixdim,
            vox_offset,
            scl_slope: endian.f32(bytes, 112),
            scl_inter: endian.f32(bytes, 116),
            single_file,
        },
        endian,
    ))
}

/// Reads a NIfTI-1 volume into a dense 4-D `f64` array plus its header.
///
/// Int16 data is scaled by `scl_slope`/`scl_inter` when `scl_slope != 0`;
/// float data is returned as stored.
pub fn load_nifti(path: impl AsRef<Path>) -> Result<(Volume4<f64>, NiftiHeader)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, endian) = parse_header(path, &bytes)?;

    let (data_bytes, data_path): (Vec<u8>, PathBuf) = if header.single_file {
        (bytes, path.to_path_buf())
    } else {
        let img = path.with_extension("img");
        let b = fs::read(&img).map_err(|e| Error::io(&img, e))?;
        (b, img)
    };

    let n: usize = header.dim.iter().product();
    let elem = match header.datatype {
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        _ => unreachable!(),
    };
    let start = header.vox_offset as usize;
    let need = start + n * elem;
    if data_bytes.len() < need {
        return Err(format_err(
            &data_path,
            "data",
            format!(
                "need {} bytes for {:?} voxels, file has {}",
                need,
                header.dim,
                data_bytes.len()
            ),
        ));
    }

    let mut data = Vec::with_capacity(n);
    match header.datatype {
        DT_FLOAT32 => {
            for i in 0..n {
                data.push(endian.f32(&data_bytes, start + 4 * i) as f64);
            }
        }
        DT_INT16 => {
            let (slope, inter) = if header.scl_slope != 0.0 {
                (header.scl_slope as f64, header.scl_inter as f64)
            } else {
                (1.0, 0.0)
            };
            for i in 0..n {
                let raw = endian.i16(&data_bytes, start + 2 * i) as f64;
                data.push(raw * slope + inter);
            }
        }
        _ => unreachable!(),
    }

    Ok((Volume4::new(header.dim, data)?, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    /// Builds NIfTI-1 bytes directly from the standard's byte offsets,
    /// independent of the reader's header model.
    #[allow(clippy::too_many_arguments)]
    fn build_nifti(
        dims: &[i16],
        datatype: i16,
        pixdim4: f32,
        scl: Option<(f32, f32)>,
        payload: &[u8],
        big_endian: bool,
        sizeof_hdr: i32,
        magic: &[u8; 4],
    ) -> Vec<u8> {
        let mut h = vec![0u8; 352];
        let put_i32 = |h: &mut [u8], off: usize, v: i32| {
            let b = if big_endian {
                v.to_be_bytes()
            } else {
                v.to_le_bytes()
            };
            h[off..off + 4].copy_from_slice(&b);
        };
        let put_i16 = |h: &mut [u8], off: usize, v: i16| {
            let b = if big_endian {
                v.to_be_bytes()
            } else {
                v.to_le_bytes()
            };
            h[off..off + 2].copy_from_slice(&b);
        };
        let put_f32 = |h: &mut [u8], off: usize, v: f32| {
            let b = if big_endian {
                v.to_be_bytes()
            } else {
                v.to_le_bytes()
            };
            h[off..off + 4].copy_from_slice(&b);
        };
        put_i32(&mut h, 0, sizeof_hdr);
        put_i16(&mut h, 40, dims.len() as i16);
        for (i, &d) in dims.iter().enumerate() {
            put_i16(&mut h, 40 + 2 * (i + 1), d);
        }
        put_i16(&mut h, 70, datatype);
        let bitpix = match datatype {
            4 => 16,
            16 => 32,
            2 => 8,
            _ => 0,
        };
        put_i16(&mut h, 72, bitpix);
        put_f32(&mut h, 76 + 4 * 4, pixdim4);
        put_f32(&mut h, 108, 352.0);
        if let Some((s, i)) = scl {
            put_f32(&mut h, 112, s);
            put_f32(&mut h, 116, i);
        }
        h[344..348].copy_from_slice(magic);
        h.extend_from_slice(payload);
        h
    }

    fn write_tmp(name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("parcelforge-nifti-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(bytes).unwrap();
        p
    }

    #[test]
    fn reads_float32_column_major() {
        // dim = [4,2,2,2,3], 24 little-endian floats 0..23
        let payload: Vec<u8> = (0..24).flat_map(|i| (i as f32).to_le_bytes()).collect();
        let bytes = build_nifti(&[2, 2, 2, 3], 16, 2.5, None, &payload, false, 348, b"n+1\0");
        let p = write_tmp("f32le.nii", &bytes);
        let (vol, hdr) = load_nifti(&p).unwrap();
        assert_eq!(vol.dims, [2, 2, 2, 3]);
        assert_eq!(hdr.tr_seconds(), Some(2.5));
        // x fastest: consecutive values walk x, then y, then z, then t
        let mut expect = 0.0;
        for t in 0..3 {
            for z in 0..2 {
                for y in 0..2 {
                    for x in 0..2 {
                        assert_eq!(vol.at(x, y, z, t), expect);
                        expect += 1.0;
                    }
                }
            }
        }
    }

    #[test]
    fn reads_big_endian_int16_with_scaling() {
        let values: [i16; 6] = [-2, -1, 0, 1, 2, 3];
        let payload: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
        let bytes = build_nifti(
            &[3, 2, 1, 1],
            4,
            0.0,
            Some((0.5, 10.0)),
            &payload,
            true,
            348,
            b"n+1\0",
        );
        let p = write_tmp("i16be.nii", &bytes);
        let (vol, _) = load_nifti(&p).unwrap();
        assert_eq!(vol.at(0, 0, 0, 0), -2.0 * 0.5 + 10.0);
        assert_eq!(vol.at(2, 1, 0, 0), 3.0 * 0.5 + 10.0);
    }

    #[test]
    fn bad_sizeof_hdr_is_format_error() {
        let bytes = build_nifti(
            &[2, 2, 2, 3],
            16,
            0.0,
            None,
            &[0u8; 96],
            false,
            347,
            b"n+1\0",
        );
        let p = write_tmp("bad_hdr.nii", &bytes);
        match load_nifti(&p) {
            Err(Error::Format { message, .. }) => assert!(message.contains("sizeof_hdr")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn uint8_datatype_unsupported() {
        let bytes = build_nifti(
            &[2, 2, 2, 3],
            2,
            0.0,
            None,
            &[0u8; 24],
            false,
            348,
            b"n+1\0",
        );
        let p = write_tmp("u8.nii", &bytes);
        match load_nifti(&p) {
            Err(Error::UnsupportedDatatype { code }) => assert_eq!(code, 2),
            other => panic!("expected unsupported datatype, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_format_error() {
        let bytes = build_nifti(
            &[2, 2, 2, 3],
            16,
            0.0,
            None,
            &[0u8; 96],
            false,
            348,
            b"nope",
        );
        let p = write_tmp("magic.nii", &bytes);
        match load_nifti(&p) {
            Err(Error::Format { message, .. }) => assert!(message.contains("magic")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let bytes = build_nifti(
            &[2, 2, 2, 3],
            16,
            0.0,
            None,
            &[0u8; 10],
            false,
            348,
            b"n+1\0",
        );
        let p = write_tmp("short.nii", &bytes);
        match load_nifti(&p) {
            Err(Error::Format { message, .. }) => assert!(message.contains("data")),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
