//! Temporal FastICA and import of externally computed decompositions.
//!
//! The data is reduced to its principal time courses, whitened, and
//! rotated to maximize non-Gaussianity (log-cosh contrast, symmetric
//! decorrelation). Spatial maps are the regression weights of the voxel
//! signals on the component time courses.

use std::path::Path;

use crate::dataset::{center_rows, BoldDataset};
use crate::error::{Error, Result};
use crate::linalg::{sample_std, sym_eigen, Cholesky, Mat};
use crate::pls::pca_decompose;
use crate::rng;
use crate::scalar::{fl, fu, Scalar};

/// Per-subject independent components: time courses and spatial maps.
#[derive(Debug, Clone)]
pub struct ICDecomposition<F> {
    pub subject_id: usize,
    /// T x N matrix; column i is the time course of IC i (unit sample
    /// variance).
    pub timecourses: Mat<F>,
    /// N x V matrix of spatial weights per IC.
    pub maps: Mat<F>,
}

impl<F: Scalar> ICDecomposition<F> {
    pub fn new(subject_id: usize, timecourses: Mat<F>, maps: Mat<F>) -> Result<Self> {
        let t = timecourses.rows();
        let n = timecourses.cols();
        if maps.rows() != n {
            return Err(Error::Shape(format!(
                "{} time courses but {} map rows",
                n,
                maps.rows()
            )));
        }
        let v = maps.cols();
        if n > t.min(v) {
            return Err(Error::Param(format!(
                "N = {n} exceeds min(T, V) = {}",
                t.min(v)
            )));
        }
        for j in 0..n {
            let col = timecourses.col(j);
            if sample_std(&col) <= F::zero() {
                return Err(Error::Degenerate(format!(
                    "IC {j} time course has zero variance"
                )));
            }
        }
        Ok(ICDecomposition {
            subject_id,
            timecourses,
            maps,
        })
    }

    pub fn n_components(&self) -> usize {
        self.timecourses.cols()
    }

    pub fn n_frames(&self) -> usize {
        self.timecourses.rows()
    }

    pub fn timecourse(&self, i: usize) -> Vec<F> {
        self.timecourses.col(i)
    }
}

pub const FASTICA_MAX_ITER: usize = 500;
pub const FASTICA_TOL: f64 = 1e-6;

/// Component count covering 95% of the variance, capped at 60 and floored
/// at 2.
pub fn default_n_components<F: Scalar>(dataset: &BoldDataset<F>) -> Result<usize> {
    let xc = center_rows(&dataset.x);
    let pca = pca_decompose(&xc)?;
    let total: F = pca.variances.iter().copied().sum();
    let target = fl::<F>(0.95) * total;
    let mut acc = F::zero();
    let mut n = pca.n_components();
    for (i, &v) in pca.variances.iter().enumerate() {
        acc += v;
        if acc >= target {
            n = i + 1;
            break;
        }
    }
    let cap = 60usize.min(dataset.n_frames() - 1).min(dataset.n_voxels());
    Ok(n.clamp(2.min(cap), cap))
}

/// `(W W')^{-1/2} W` via the eigendecomposition of `W W'`.
fn sym_decorrelate<F: Scalar>(w: &Mat<F>) -> Result<Mat<F>> {
    let wwt = w.matmul(&w.transpose());
    let eig = sym_eigen(&wwt)?;
    let n = w.rows();
    let mut scaled = Mat::zeros(n, n);
    for j in 0..n {
        let lam = eig.values[j].max(F::epsilon());
        let inv_sqrt = F::one() / lam.sqrt();
        for i in 0..n {
            scaled[(i, j)] = eig.vectors[(i, j)] * inv_sqrt;
        }
    }
    Ok(scaled.matmul(&eig.vectors.transpose()).matmul(w))
}

/// Temporal FastICA on PCA-whitened data with the default iteration cap
/// and tolerance. Deterministic given `rng_seed`; each recovered time
/// course is flipped so its largest-magnitude sample is positive, and
/// components are ordered by decreasing spatial energy.
pub fn fastica<F: Scalar>(
    dataset: &BoldDataset<F>,
    subject_id: usize,
    n_components: usize,
    rng_seed: u64,
) -> Result<ICDecomposition<F>> {
    fastica_with(
        dataset,
        subject_id,
        n_components,
        rng_seed,
        FASTICA_MAX_ITER,
        FASTICA_TOL,
    )
}

/// `fastica` with an explicit iteration cap and rotation tolerance.
pub fn fastica_with<F: Scalar>(
    dataset: &BoldDataset<F>,
    subject_id: usize,
    n_components: usize,
    rng_seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ICDecomposition<F>> {
    let v = dataset.n_voxels();
    let t = dataset.n_frames();
    if n_components < 2 || n_components > (t - 1).min(v) {
        return Err(Error::Param(format!(
            "n_components must be in 2..=min(T-1, V) = {}, got {n_components}",
            (t - 1).min(v)
        )));
    }
    let xc = center_rows(&dataset.x);
    let pca = pca_decompose(&xc)?;
    let sigma_floor = pca.variances[0].sqrt() * fl::<F>(1e-9);
    let n = n_components;
    if pca.variances[n - 1].sqrt() <= sigma_floor {
        return Err(Error::Rank(format!(
            "data rank below requested {n} components"
        )));
    }

    // whiten: rows scaled to squared norm T
    let tm1 = fu::<F>(t - 1);
    let sqrt_t = fu::<F>(t).sqrt();
    let mut z = Mat::zeros(n, t);
    for i in 0..n {
        let sigma = (pca.variances[i] * tm1).sqrt();
        let scale = sqrt_t / sigma;
        for j in 0..t {
            z[(i, j)] = pca.scores[(i, j)] * scale;
        }
    }

    // random orthogonal start
    let mut rng = rng::seeded(rng_seed);
    let w0 = Mat::from_fn(n, n, |_, _| rng::normal::<F>(&mut rng));
    let mut w = sym_decorrelate(&w0)?;

    // Stabilized fixed-point iteration: the raw update can limit-cycle on
    // near-Gaussian components, so the step is damped whenever the
    // rotation change stops improving.
    let tol = fl::<F>(tol);
    let inv_t = F::one() / fu::<F>(t);
    let mut converged = false;
    let mut mu = F::one();
    let mut best_lim = F::infinity();
    let mut stall = 0usize;
    const STALL_WINDOW: usize = 60;
    for _iter in 0..max_iter {
        let wz = w.matmul(&z); // n x t
                               // g = tanh(u), g' = 1 - tanh(u)^2
        let mut gwz = wz.clone();
        for i in 0..n {
            for val in gwz.row_mut(i) {
                *val = val.tanh();
            }
        }
        let mut update = gwz.matmul(&z.transpose()); // n x n
        for i in 0..n {
            let gprime_mean = gwz
                .row(i)
                .iter()
                .fold(F::zero(), |acc, &g| acc + (F::one() - g * g))
                * inv_t;
            for j in 0..n {
                update[(i, j)] = update[(i, j)] * inv_t - gprime_mean * w[(i, j)];
            }
        }
        // normalize and sign-align the update rows, then damp toward W
        for i in 0..n {
            let norm = crate::linalg::norm2(update.row(i));
            if norm > F::zero() {
                let sign = if crate::linalg::dot(update.row(i), w.row(i)) < F::zero() {
                    -F::one()
                } else {
                    F::one()
                };
                let scale = sign / norm;
                for val in update.row_mut(i) {
                    *val *= scale;
                }
            } else {
                update.row_mut(i).copy_from_slice(w.row(i));
            }
            for j in 0..n {
                update[(i, j)] = (F::one() - mu) * w[(i, j)] + mu * update[(i, j)];
            }
        }
        let w_new = sym_decorrelate(&update)?;
        let mut lim = F::zero();
        for i in 0..n {
            let d = crate::linalg::dot(w_new.row(i), w.row(i)).abs();
            lim = lim.max((F::one() - d).abs());
        }
        w = w_new;
        if lim < tol {
            converged = true;
            break;
        }
        if lim < best_lim * fl(0.999) {
            best_lim = lim;
            stall = 0;
        } else {
            stall += 1;
            if stall >= STALL_WINDOW {
                mu = (mu * fl(0.5)).max(fl(0.05));
                stall = 0;
            }
        }
    }
    if !converged {
        return Err(Error::Convergence {
            what: "FastICA rotation".into(),
            iterations: max_iter,
        });
    }

    // sources: row norms are sqrt(T) exactly, so scaling by
    // sqrt((T-1)/T) gives unit sample variance
    let mut s = w.matmul(&z); // n x t
    let var_fix = (fu::<F>(t - 1) / fu::<F>(t)).sqrt();
    for i in 0..n {
        for val in s.row_mut(i) {
            *val *= var_fix;
        }
    }

    // maps: regression of Xc' on the component time courses
    let u = s.transpose(); // t x n
    let utu = u.transpose().matmul(&u);
    let chol = Cholesky::new(&utu)
        .map_err(|_| Error::Rank("component time courses not independent".into()))?;
    let xu = xc.matmul(&u); // v x n
    let mut maps = Mat::zeros(n, v);
    for row in 0..v {
        let rhs: Vec<F> = (0..n).map(|j| xu[(row, j)]).collect();
        let sol = chol.solve(&rhs);
        for (j, val) in sol.into_iter().enumerate() {
            maps[(j, row)] = val;
        }
    }

    // sign convention: largest-magnitude sample of each time course positive
    let mut timecourses = u;
    for j in 0..n {
        let col = timecourses.col(j);
        let mut best = 0usize;
        for (i, val) in col.iter().enumerate() {
            if val.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < F::zero() {
            for i in 0..t {
                timecourses[(i, j)] = -timecourses[(i, j)];
            }
            for val in maps.row_mut(j) {
                *val = -*val;
            }
        }
    }

    // order components by decreasing spatial energy
    let mut order: Vec<usize> = (0..n).collect();
    let energy: Vec<F> = (0..n)
        .map(|j| maps.row(j).iter().fold(F::zero(), |acc, &m| acc + m * m))
        .collect();
    order.sort_by(|&a, &b| {
        energy[b]
            .partial_cmp(&energy[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut tc_sorted = Mat::zeros(t, n);
    let mut maps_sorted = Mat::zeros(n, v);
    for (new_j, &old_j) in order.iter().enumerate() {
        tc_sorted.set_col(new_j, &timecourses.col(old_j));
        maps_sorted.row_mut(new_j).copy_from_slice(maps.row(old_j));
    }

    ICDecomposition::new(subject_id, tc_sorted, maps_sorted)
}

/// Loads an externally computed decomposition: time courses from a CSV
/// (T rows, N columns, optional header) and maps from a raw little-endian
/// f64 blob (N x V row-major).
pub fn import_ics(
    timecourses_csv: &Path,
    maps_f64: &Path,
    subject_id: usize,
) -> Result<ICDecomposition<f64>> {
    let (_header, tc) = crate::io::read_numeric_csv(timecourses_csv)?;
    let n = tc.cols();
    if n == 0 {
        return Err(Error::Format {
            file: timecourses_csv.display().to_string(),
            message: "no time course columns".into(),
        });
    }
    let maps = crate::io::read_f64_matrix_with_cols(maps_f64, 1)?;
    let total = maps.rows();
    if total % n != 0 {
        return Err(Error::Format {
            file: maps_f64.display().to_string(),
            message: format!("{total} values do not divide into {n} map rows"),
        });
    }
    let v = total / n;
    let maps = Mat::from_vec(n, v, maps.data().to_vec())?;
    ICDecomposition::new(subject_id, tc, maps)
}

/// Writes a decomposition in the `import_ics` format.
pub fn export_ics(dir: &Path, dec: &ICDecomposition<f64>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names: Vec<String> = (0..dec.n_components()).map(|i| format!("ic{i}")).collect();
    crate::io::write_numeric_csv(&dir.join("timecourses.csv"), Some(&names), &dec.timecourses)?;
    crate::io::write_f64_matrix(&dir.join("maps.f64"), &dec.maps)
}
