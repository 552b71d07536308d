//! Volume geometry: the 3-D grid, its mask, and the bijection between
//! masked cells and matrix rows. Cells are ordered by ascending linear
//! index with x fastest, so row order is fixed across the whole crate.

use crate::error::{Error, Result};

/// A masked 3-D voxel grid. Masked cells map bijectively onto row indices
/// `0..V` in ascending linear (x-fastest) order.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGrid {
    dims: [usize; 3],
    mask: Vec<bool>,
    row_to_cell: Vec<usize>,
    cell_to_row: Vec<Option<usize>>,
}

impl VolumeGrid {
    pub fn from_mask(dims: [usize; 3], mask: Vec<bool>) -> Result<Self> {
        let n_cells = dims[0] * dims[1] * dims[2];
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Param(format!(
                "grid dims must be positive: {dims:?}"
            )));
        }
        if mask.len() != n_cells {
            return Err(Error::Shape(format!(
                "mask has {} cells, grid has {}",
                mask.len(),
                n_cells
            )));
        }
        let mut row_to_cell = Vec::new();
        let mut cell_to_row = vec![None; n_cells];
        for (cell, &m) in mask.iter().enumerate() {
            if m {
                cell_to_row[cell] = Some(row_to_cell.len());
                row_to_cell.push(cell);
            }
        }
        if row_to_cell.is_empty() {
            return Err(Error::EmptyMask("no cells selected by mask".into()));
        }
        Ok(VolumeGrid {
            dims,
            mask,
            row_to_cell,
            cell_to_row,
        })
    }

    /// Grid with every cell masked in.
    pub fn full(dims: [usize; 3]) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        VolumeGrid::from_mask(dims, vec![true; n])
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Number of masked voxels V.
    #[inline]
    pub fn n_voxels(&self) -> usize {
        self.row_to_cell.len()
    }

    #[inline]
    pub fn linear_of_coord(&self, [x, y, z]: [usize; 3]) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coord_of_linear(&self, cell: usize) -> [usize; 3] {
        let x = cell % self.dims[0];
        let rest = cell / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn cell_of_row(&self, row: usize) -> usize {
        self.row_to_cell[row]
    }

    #[inline]
    pub fn coord_of_row(&self, row: usize) -> [usize; 3] {
        self.coord_of_linear(self.row_to_cell[row])
    }

    #[inline]
    pub fn row_of_cell(&self, cell: usize) -> Option<usize> {
        self.cell_to_row.get(cell).copied().flatten()
    }

    pub fn row_of_coord(&self, coord: [usize; 3]) -> Option<usize> {
        if coord.iter().zip(&self.dims).any(|(&c, &d)| c >= d) {
            return None;
        }
        self.row_of_cell(self.linear_of_coord(coord))
    }

    /// Masked face neighbors (6-connectivity) of a voxel row, as row indices.
    pub fn neighbors6(&self, row: usize) -> Vec<usize> {
        let [x, y, z] = self.coord_of_row(row);
        let mut out = Vec::with_capacity(6);
        let mut push = |c: [usize; 3]| {
            if let Some(r) = self.row_of_coord(c) {
                out.push(r);
            }
        };
        if x > 0 {
            push([x - 1, y, z]);
        }
        if x + 1 < self.dims[0] {
            push([x + 1, y, z]);
        }
        if y > 0 {
            push([x, y - 1, z]);
        }
        if y + 1 < self.dims[1] {
            push([x, y + 1, z]);
        }
        if z > 0 {
            push([x, y, z - 1]);
        }
        if z + 1 < self.dims[2] {
            push([x, y, z + 1]);
        }
        out
    }
}

/// A dense 4-D volume (x, y, z, t), x fastest, as read from disk.
#[derive(Debug, Clone)]
pub struct Volume4<F> {
    pub dims: [usize; 4],
    data: Vec<F>,
}

impl<F: Copy> Volume4<F> {
    pub fn new(dims: [usize; 4], data: Vec<F>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::Shape(format!(
                "volume dims {:?} need {} values, got {}",
                dims,
                n,
                data.len()
            )));
        }
        Ok(Volume4 { dims, data })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize, t: usize) -> F {
        let [nx, ny, nz, _] = self.dims;
        self.data[x + nx * (y + ny * (z + nz * t))]
    }

    #[inline]
    pub fn at_cell(&self, cell: usize, t: usize) -> F {
        let spatial = self.dims[0] * self.dims[1] * self.dims[2];
        self.data[cell + spatial * t]
    }

    pub fn n_frames(&self) -> usize {
        self.dims[3]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }
}
