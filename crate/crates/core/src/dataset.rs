//! Masked time-series datasets, design matrices, and the row
//! centering/normalization preprocessing steps.

use crate::error::{Error, Result};
use crate::grid::{Volume4, VolumeGrid};
use crate::linalg::{mean, Mat};
use crate::scalar::{fl, Scalar};

/// A masked voxel-by-time data matrix with its grid geometry.
#[derive(Debug, Clone)]
pub struct BoldDataset<F> {
    pub grid: VolumeGrid,
    /// V x T signal matrix; row order follows the grid's voxel rows.
    pub x: Mat<F>,
    pub tr_seconds: F,
}

impl<F: Scalar> BoldDataset<F> {
    pub fn new(grid: VolumeGrid, x: Mat<F>, tr_seconds: F) -> Result<Self> {
        if x.rows() != grid.n_voxels() {
            return Err(Error::Shape(format!(
                "matrix has {} rows but grid has {} voxels",
                x.rows(),
                grid.n_voxels()
            )));
        }
        if x.cols() < 3 {
            return Err(Error::Param(format!(
                "need at least 3 time frames, got {}",
                x.cols()
            )));
        }
        if !x.is_finite() {
            return Err(Error::Degenerate(
                "non-finite value in signal matrix".into(),
            ));
        }
        if !(tr_seconds > F::zero()) {
            return Err(Error::Param("tr_seconds must be positive".into()));
        }
        Ok(BoldDataset {
            grid,
            x,
            tr_seconds,
        })
    }

    pub fn n_voxels(&self) -> usize {
        self.x.rows()
    }

    pub fn n_frames(&self) -> usize {
        self.x.cols()
    }
}

/// Task design matrix: one column per regressor.
#[derive(Debug, Clone)]
pub struct DesignMatrix<F> {
    pub y: Mat<F>,
    pub regressor_names: Vec<String>,
}

impl<F: Scalar> DesignMatrix<F> {
    pub fn new(y: Mat<F>, regressor_names: Vec<String>) -> Result<Self> {
        if regressor_names.len() != y.cols() {
            return Err(Error::Shape(format!(
                "{} regressor names for {} columns",
                regressor_names.len(),
                y.cols()
            )));
        }
        for j in 0..y.cols() {
            let col = y.col(j);
            let m = mean(&col);
            if col
                .iter()
                .all(|&v| (v - m).abs() <= F::epsilon() * m.abs().max(F::one()))
            {
                return Err(Error::Design(format!(
                    "regressor '{}' is constant",
                    regressor_names[j]
                )));
            }
        }
        Ok(DesignMatrix { y, regressor_names })
    }

    pub fn n_regressors(&self) -> usize {
        self.y.cols()
    }

    pub fn n_frames(&self) -> usize {
        self.y.rows()
    }
}

/// Masking rule applied when flattening a 4-D volume.
#[derive(Debug, Clone)]
pub enum MaskRule<'a> {
    /// Keep voxels whose time series has nonzero variance.
    NonzeroVariance,
    /// Use the given per-cell mask (x-fastest linear order).
    Explicit(&'a [bool]),
}

/// Flattens a 4-D volume to a V x T matrix, rows ordered by ascending
/// linear grid index of the masked cells.
pub fn mask_and_flatten<F: Scalar>(
    volume: &Volume4<F>,
    rule: MaskRule<'_>,
    tr_seconds: F,
) -> Result<BoldDataset<F>> {
    let [nx, ny, nz, nt] = volume.dims;
    if nt < 3 {
        return Err(Error::Param(format!(
            "need at least 3 time frames, got {nt}"
        )));
    }
    let n_cells = nx * ny * nz;
    let mask: Vec<bool> = match rule {
        MaskRule::Explicit(m) => {
            if m.len() != n_cells {
                return Err(Error::Shape(format!(
                    "explicit mask has {} cells, volume has {}",
                    m.len(),
                    n_cells
                )));
            }
            m.to_vec()
        }
        MaskRule::NonzeroVariance => (0..n_cells)
            .map(|cell| {
                let first = volume.at_cell(cell, 0);
                (1..nt).any(|t| volume.at_cell(cell, t) != first)
            })
            .collect(),
    };
    if mask.iter().all(|&m| !m) {
        return Err(Error::EmptyMask(
            "mask rule selected no voxels (all-constant volume?)".into(),
        ));
    }
    let grid = VolumeGrid::from_mask([nx, ny, nz], mask)?;
    let v = grid.n_voxels();
    let mut x = Mat::zeros(v, nt);
    for row in 0..v {
        let cell = grid.cell_of_row(row);
        for t in 0..nt {
            x[(row, t)] = volume.at_cell(cell, t);
        }
    }
    BoldDataset::new(grid, x, tr_seconds)
}

/// Scatters a flattened matrix back into a dense 4-D volume; unmasked cells
/// are zero. Inverse of `mask_and_flatten` on the masked cells.
pub fn scatter_to_volume<F: Scalar>(grid: &VolumeGrid, x: &Mat<F>) -> Volume4<F> {
    let [nx, ny, nz] = grid.dims();
    let nt = x.cols();
    let mut data = vec![F::zero(); nx * ny * nz * nt];
    let spatial = nx * ny * nz;
    for row in 0..x.rows() {
        let cell = grid.cell_of_row(row);
        for t in 0..nt {
            data[cell + spatial * t] = x[(row, t)];
        }
    }
    Volume4::new([nx, ny, nz, nt], data).expect("scatter dims consistent")
}

/// Subtracts each row's mean.
pub fn center_rows<F: Scalar>(x: &Mat<F>) -> Mat<F> {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let m = mean(out.row(i));
        for v in out.row_mut(i) {
            *v -= m;
        }
    }
    out
}

/// Scales each row to unit Euclidean norm. Zero rows stay zero and their
/// indices are returned.
pub fn unit_normalize_rows<F: Scalar>(x: &Mat<F>) -> (Mat<F>, Vec<usize>) {
    let mut out = x.clone();
    let mut zero_rows = Vec::new();
    for i in 0..out.rows() {
        let n = out
            .row(i)
            .iter()
            .fold(F::zero(), |acc, &v| acc + v * v)
            .sqrt();
        if n == F::zero() {
            zero_rows.push(i);
        } else {
            for v in out.row_mut(i) {
                *v /= n;
            }
        }
    }
    (out, zero_rows)
}

/// Evenly spaced sample times (seconds) for a dataset's frames.
pub fn frame_times<F: Scalar>(n_frames: usize, tr_seconds: F) -> Vec<F> {
    (0..n_frames)
        .map(|i| fl::<F>(i as f64) * tr_seconds)
        .collect()
}
