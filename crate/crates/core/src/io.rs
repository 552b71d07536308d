//! On-disk formats.
//!
//! * dataset directory: `grid.json` (dims, run-length-encoded mask,
//!   tr_seconds), `X.f64` (row-major little-endian f64, V x T), and an
//!   optional `design.csv` (header row = regressor names);
//! * `.f64` blobs: raw row-major little-endian f64 matrices with a JSON
//!   sidecar carrying shape and metadata;
//! * simple numeric CSVs for seeds, labels, similarity matrices and
//!   reports. Floats are printed with Rust's shortest round-trip
//!   formatting so files are byte-stable across runs.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{BoldDataset, DesignMatrix};
use crate::error::{Error, Result};
use crate::grid::VolumeGrid;
use crate::linalg::Mat;

// ---------------------------------------------------------------------------
// grid.json

#[derive(Debug, Serialize, Deserialize)]
struct GridFile {
    dims: [usize; 3],
    /// Alternating run lengths, starting with a (possibly zero) run of
    /// unmasked cells.
    mask_rle: Vec<usize>,
    tr_seconds: f64,
}

fn mask_to_rle(mask: &[bool]) -> Vec<usize> {
    let mut rle = Vec::new();
    let mut current = false;
    let mut run = 0usize;
    for &m in mask {
        if m == current {
            run += 1;
        } else {
            rle.push(run);
            current = m;
            run = 1;
        }
    }
    rle.push(run);
    rle
}

fn rle_to_mask(rle: &[usize], n_cells: usize) -> Result<Vec<bool>> {
    let mut mask = Vec::with_capacity(n_cells);
    let mut value = false;
    for &run in rle {
        mask.extend(std::iter::repeat(value).take(run));
        value = !value;
    }
    if mask.len() != n_cells {
        return Err(Error::Format {
            file: "grid.json".into(),
            message: format!(
                "mask RLE covers {} cells, dims need {}",
                mask.len(),
                n_cells
            ),
        });
    }
    Ok(mask)
}

pub fn write_grid(path: &Path, grid: &VolumeGrid, tr_seconds: f64) -> Result<()> {
    let file = GridFile {
        dims: grid.dims(),
        mask_rle: mask_to_rle(grid.mask()),
        tr_seconds,
    };
    let json = serde_json::to_string_pretty(&file).expect("grid serializes");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<(VolumeGrid, f64)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: GridFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        file: path.display().to_string(),
        message: e.to_string(),
    })?;
    let n_cells = file.dims.iter().product();
    let mask = rle_to_mask(&file.mask_rle, n_cells)?;
    Ok((VolumeGrid::from_mask(file.dims, mask)?, file.tr_seconds))
}

// ---------------------------------------------------------------------------
// raw f64 matrices

pub fn write_f64_matrix(path: &Path, m: &Mat<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(m.rows() * m.cols() * 8);
    for &v in m.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_f64_matrix(path: &Path, rows: usize, cols: usize) -> Result<Mat<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != rows * cols * 8 {
        return Err(Error::Format {
            file: path.display().to_string(),
            message: format!(
                "expected {} bytes for {}x{} f64 matrix, got {}",
                rows * cols * 8,
                rows,
                cols,
                bytes.len()
            ),
        });
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Mat::from_vec(rows, cols, data)
}

/// Reads an f64 blob whose row count is inferred from the file size.
pub fn read_f64_matrix_with_cols(path: &Path, cols: usize) -> Result<Mat<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if cols == 0 || bytes.len() % (8 * cols) != 0 {
        return Err(Error::Format {
            file: path.display().to_string(),
            message: format!(
                "{} bytes is not a whole number of {cols}-column f64 rows",
                bytes.len()
            ),
        });
    }
    read_f64_matrix(path, bytes.len() / (8 * cols), cols)
}

// ---------------------------------------------------------------------------
// CSV

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parses a numeric CSV; returns (header-or-None, rows). A first line with
/// any cell that does not parse as a number is treated as the header.
pub fn read_numeric_csv(path: &Path) -> Result<(Option<Vec<String>>, Mat<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let first = lines.next().ok_or_else(|| Error::Format {
        file: path.display().to_string(),
        message: "empty csv".into(),
    })?;
    let parse_line = |line: &str| -> Option<Vec<f64>> {
        line.split(',')
            .map(|c| c.trim().parse::<f64>().ok())
            .collect()
    };
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    match parse_line(first) {
        Some(r) => rows.push(r),
        None => header = Some(first.split(',').map(|s| s.trim().to_string()).collect()),
    }
    for (i, line) in lines.enumerate() {
        match parse_line(line) {
            Some(r) => rows.push(r),
            None => {
                return Err(Error::Format {
                    file: path.display().to_string(),
                    message: format!("non-numeric value on data line {}", i + 2),
                })
            }
        }
    }
    let m = Mat::from_rows(rows).map_err(|_| Error::Format {
        file: path.display().to_string(),
        message: "ragged csv rows".into(),
    })?;
    Ok((header, m))
}

pub fn write_numeric_csv(path: &Path, header: Option<&[String]>, m: &Mat<f64>) -> Result<()> {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// dataset directory

pub fn write_dataset(
    dir: &Path,
    ds: &BoldDataset<f64>,
    design: Option<&DesignMatrix<f64>>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_grid(&dir.join("grid.json"), &ds.grid, ds.tr_seconds)?;
    write_f64_matrix(&dir.join("X.f64"), &ds.x)?;
    if let Some(d) = design {
        write_design(&dir.join("design.csv"), d)?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<(BoldDataset<f64>, Option<DesignMatrix<f64>>)> {
    let (grid, tr) = read_grid(&dir.join("grid.json"))?;
    let x = read_f64_matrix_with_cols(&dir.join("X.f64"), 1)?; // re-shaped below
    let total = x.rows();
    let v = grid.n_voxels();
    if v == 0 || total % v != 0 {
        return Err(Error::Format {
            file: dir.join("X.f64").display().to_string(),
            message: format!("{total} values do not divide into {v} voxel rows"),
        });
    }
    let t = total / v;
    let x = Mat::from_vec(v, t, x.data().to_vec())?;
    let ds = BoldDataset::new(grid, x, tr)?;
    let design_path = dir.join("design.csv");
    let design = if design_path.exists() {
        Some(read_design(&design_path)?)
    } else {
        None
    };
    Ok((ds, design))
}

pub fn write_design(path: &Path, design: &DesignMatrix<f64>) -> Result<()> {
    write_numeric_csv(path, Some(&design.regressor_names), &design.y)
}

pub fn read_design(path: &Path) -> Result<DesignMatrix<f64>> {
    let (header, m) = read_numeric_csv(path)?;
    let names = header.unwrap_or_else(|| (0..m.cols()).map(|i| format!("reg{i}")).collect());
    DesignMatrix::new(m, names)
}

// ---------------------------------------------------------------------------
// label volumes (internal dataset format with T = 1)

pub fn write_label_volume(dir: &Path, grid: &VolumeGrid, labels: &[usize], tr: f64) -> Result<()> {
    let m = Mat::from_vec(labels.len(), 1, labels.iter().map(|&l| l as f64).collect())?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_grid(&dir.join("grid.json"), grid, tr)?;
    write_f64_matrix(&dir.join("X.f64"), &m)
}

// ---------------------------------------------------------------------------
// checksums

/// FNV-1a 64-bit hash, used for manifest checksums.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn file_checksum(path: &Path) -> Result<u64> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(fnv1a64(&bytes))
}

/// Writes text atomically enough for our purposes (single final write).
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
