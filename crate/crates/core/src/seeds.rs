//! Greedy radius-constrained seed selection from IC spatial maps.

use crate::error::{Error, Result};
use crate::grid::VolumeGrid;
use crate::scalar::Scalar;

/// Seeds picked from one spatial map. Rows are ordered by decreasing
/// absolute map value; all pairwise grid distances are at least `radius`.
#[derive(Debug, Clone)]
pub struct SeedSet<F> {
    pub voxel_rows: Vec<usize>,
    /// Map value at each seed, in selection order.
    pub map_values: Vec<F>,
    /// Identifier of the IC map the seeds came from.
    pub source_map: String,
    /// Exclusion radius in voxel units.
    pub radius: F,
    /// True when no admissible voxel remained before `n_seeds` were found.
    pub exhausted: bool,
}

impl<F: Scalar> SeedSet<F> {
    pub fn len(&self) -> usize {
        self.voxel_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxel_rows.is_empty()
    }
}

fn coord_distance(a: [usize; 3], b: [usize; 3]) -> f64 {
    let d0 = a[0] as f64 - b[0] as f64;
    let d1 = a[1] as f64 - b[1] as f64;
    let d2 = a[2] as f64 - b[2] as f64;
    (d0 * d0 + d1 * d1 + d2 * d2).sqrt()
}

/// Iterative greedy selection: the first seed is the voxel with the
/// largest absolute map value; each following seed is the largest-value
/// voxel at least `radius` (Euclidean, voxel units) from every seed chosen
/// so far. Ties go to the lower linear grid index. Selection stops early
/// with `exhausted = true` when no admissible voxel remains.
pub fn select_seeds<F: Scalar>(
    ic_map: &[F],
    grid: &VolumeGrid,
    radius: F,
    n_seeds: usize,
    source_map: impl Into<String>,
) -> Result<SeedSet<F>> {
    if ic_map.len() != grid.n_voxels() {
        return Err(Error::Shape(format!(
            "map has {} values for {} voxels",
            ic_map.len(),
            grid.n_voxels()
        )));
    }
    if n_seeds == 0 {
        return Err(Error::Param("n_seeds must be at least 1".into()));
    }
    if !(radius > F::zero()) {
        return Err(Error::Param("radius must be positive".into()));
    }
    let r = radius.to_f64().unwrap();

    // rows sorted once by (|value| desc, linear index asc); rows are
    // already in ascending linear order, so a stable sort by value does it
    let mut order: Vec<usize> = (0..ic_map.len()).collect();
    order.sort_by(|&a, &b| {
        ic_map[b]
            .abs()
            .partial_cmp(&ic_map[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut chosen: Vec<usize> = Vec::with_capacity(n_seeds);
    let mut chosen_coords: Vec<[usize; 3]> = Vec::with_capacity(n_seeds);
    for &row in &order {
        if chosen.len() == n_seeds {
            break;
        }
        let coord = grid.coord_of_row(row);
        if chosen_coords.iter().all(|&c| coord_distance(c, coord) >= r) {
            chosen.push(row);
            chosen_coords.push(coord);
        }
    }
    let exhausted = chosen.len() < n_seeds;
    let map_values = chosen.iter().map(|&row| ic_map[row]).collect();
    Ok(SeedSet {
        voxel_rows: chosen,
        map_values,
        source_map: source_map.into(),
        radius,
        exhausted,
    })
}
