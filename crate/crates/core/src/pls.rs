//! PCA decomposition with noise-component truncation, PLS latent-variable
//! extraction against seed signals, and the per-voxel covariance feature
//! field.
//!
//! `pls_fit` searches for unit-norm latent time courses inside the span of
//! the component time courses, maximizing covariance with the dependent
//! block. The span is orthonormalized first, which makes the latents
//! independent of how the component basis is scaled or rotated and makes
//! the single-regressor latent equal to the least-squares projection of
//! the regressor onto the component span.

use crate::dataset::BoldDataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, mgs_basis, norm2, power_iteration_psd, sym_eigen, Mat};
use crate::scalar::{fl, fu, Scalar};
use crate::seeds::SeedSet;

/// Thin PCA of a row-centered V x T matrix: `loadings * scores` rebuilds
/// the input. Score rows are the component time courses, scaled by their
/// singular values.
#[derive(Debug, Clone)]
pub struct PCAModel<F> {
    /// V x C orthonormal spatial loadings.
    pub loadings: Mat<F>,
    /// C x T score matrix (rows are component time courses).
    pub scores: Mat<F>,
    /// Per-component variances, non-increasing.
    pub variances: Vec<F>,
}

impl<F: Scalar> PCAModel<F> {
    pub fn n_components(&self) -> usize {
        self.variances.len()
    }
}

/// Thin SVD-based PCA via the Gram matrix of the smaller side.
pub fn pca_decompose<F: Scalar>(xc: &Mat<F>) -> Result<PCAModel<F>> {
    let v = xc.rows();
    let t = xc.cols();
    if v == 0 || t == 0 {
        return Err(Error::Shape("empty matrix in pca".into()));
    }
    let c = v.min(t);

    let (mut loadings, mut scores, sigmas) = if v >= t {
        // G = Xc' Xc (T x T): eigenvectors are right singular vectors
        let g = gram_tt(xc);
        let eig = sym_eigen(&g)?;
        let sigmas: Vec<F> = eig
            .values
            .iter()
            .map(|&l| l.max(F::zero()).sqrt())
            .collect();
        let sigma_max = sigmas[0];
        if sigma_max == F::zero() {
            return Err(Error::Degenerate("rank-0 input in pca".into()));
        }
        let cut = sigma_max * F::epsilon().sqrt() * fl(10.0);
        let mut u = Mat::zeros(v, c);
        let mut filler_cols = Vec::new();
        for j in 0..c {
            if sigmas[j] > cut {
                let wj = eig.vectors.col(j);
                let uj = xc.matvec(&wj);
                let inv = F::one() / sigmas[j];
                for i in 0..v {
                    u[(i, j)] = uj[i] * inv;
                }
            } else {
                filler_cols.push(j);
            }
        }
        fill_orthonormal(&mut u, &filler_cols);
        // scores = Sigma * W'
        let mut s = Mat::zeros(c, t);
        for i in 0..c {
            for j in 0..t {
                s[(i, j)] = sigmas[i] * eig.vectors[(j, i)];
            }
        }
        (u, s, sigmas[..c].to_vec())
    } else {
        // G = Xc Xc' (V x V): eigenvectors are left singular vectors
        let g = gram_vv(xc);
        let eig = sym_eigen(&g)?;
        let sigmas: Vec<F> = eig
            .values
            .iter()
            .map(|&l| l.max(F::zero()).sqrt())
            .collect();
        if sigmas[0] == F::zero() {
            return Err(Error::Degenerate("rank-0 input in pca".into()));
        }
        let u = eig.vectors.clone();
        let s = u.transpose().matmul(xc);
        (u, s, sigmas[..c].to_vec())
    };

    // polish loadings against drift near the rank cut; well-separated
    // columns are already orthonormal and unaffected
    let polished = mgs_basis(&loadings, fl(1e-12));
    if polished.kept.len() == loadings.cols() {
        loadings = polished.q;
    }

    // sign convention: largest-magnitude entry of each score row positive
    for i in 0..c {
        let row = scores.row(i);
        let mut best = 0usize;
        for (j, val) in row.iter().enumerate() {
            if val.abs() > row[best].abs() {
                best = j;
            }
        }
        if row[best] < F::zero() {
            for val in scores.row_mut(i) {
                *val = -*val;
            }
            for r in 0..v {
                loadings[(r, i)] = -loadings[(r, i)];
            }
        }
    }

    let tm1 = fu::<F>(t.max(2) - 1);
    let variances: Vec<F> = sigmas.iter().map(|&s| s * s / tm1).collect();
    Ok(PCAModel {
        loadings,
        scores,
        variances,
    })
}

fn gram_tt<F: Scalar>(x: &Mat<F>) -> Mat<F> {
    let t = x.cols();
    let mut g = Mat::zeros(t, t);
    for r in 0..x.rows() {
        let row = x.row(r);
        for i in 0..t {
            let xi = row[i];
            if xi == F::zero() {
                continue;
            }
            let gr = g.row_mut(i);
            for j in 0..t {
                gr[j] += xi * row[j];
            }
        }
    }
    g
}

fn gram_vv<F: Scalar>(x: &Mat<F>) -> Mat<F> {
    let v = x.rows();
    let mut g = Mat::zeros(v, v);
    for i in 0..v {
        for j in 0..=i {
            let s = dot(x.row(i), x.row(j));
            g[(i, j)] = s;
            g[(j, i)] = s;
        }
    }
    g
}

/// Replaces the listed columns with a deterministic orthonormal completion
/// against the other columns (Gram-Schmidt over standard basis vectors).
fn fill_orthonormal<F: Scalar>(u: &mut Mat<F>, fill: &[usize]) {
    if fill.is_empty() {
        return;
    }
    let v = u.rows();
    let mut done: Vec<usize> = (0..u.cols()).filter(|j| !fill.contains(j)).collect();
    let mut candidate = 0usize;
    for &j in fill {
        loop {
            assert!(candidate < v, "ran out of completion candidates");
            let mut vec = vec![F::zero(); v];
            vec[candidate] = F::one();
            candidate += 1;
            for &dj in &done {
                let c = (0..v).fold(F::zero(), |acc, i| acc + u[(i, dj)] * vec[i]);
                for (i, x) in vec.iter_mut().enumerate() {
                    *x -= c * u[(i, dj)];
                }
            }
            let n = norm2(&vec);
            if n > fl(0.5) {
                for (i, x) in vec.iter().enumerate() {
                    u[(i, j)] = *x / n;
                }
                done.push(j);
                break;
            }
        }
    }
}

/// Which components to remove before PLS.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationPolicy<F> {
    pub drop_leading: usize,
    pub drop_trailing: usize,
    /// Components with variance below this fraction of the total variance
    /// are dropped.
    pub variance_floor_fraction: F,
}

impl<F: Scalar> Default for TruncationPolicy<F> {
    fn default() -> Self {
        TruncationPolicy {
            drop_leading: 2,
            drop_trailing: 0,
            variance_floor_fraction: fl(1e-4),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TruncatedScores<F> {
    /// C' x T reduced score matrix, original order preserved.
    pub scores: Mat<F>,
    /// Indices of the retained components in the source model.
    pub kept: Vec<usize>,
}

pub fn truncate<F: Scalar>(
    model: &PCAModel<F>,
    policy: &TruncationPolicy<F>,
) -> Result<TruncatedScores<F>> {
    if policy.variance_floor_fraction < F::zero() || policy.variance_floor_fraction >= F::one() {
        return Err(Error::Param(
            "variance_floor_fraction must be in [0, 1)".into(),
        ));
    }
    let c = model.n_components();
    if policy.drop_leading + policy.drop_trailing >= c {
        return Err(Error::Param(format!("policy drops all {c} components")));
    }
    let total: F = model.variances.iter().copied().sum();
    let floor = policy.variance_floor_fraction * total;
    let kept: Vec<usize> = (policy.drop_leading..c - policy.drop_trailing)
        .filter(|&i| model.variances[i] >= floor)
        .collect();
    if kept.is_empty() {
        return Err(Error::Param(
            "variance floor removed every remaining component".into(),
        ));
    }
    let t = model.scores.cols();
    let mut scores = Mat::zeros(kept.len(), t);
    for (new_i, &old_i) in kept.iter().enumerate() {
        scores
            .row_mut(new_i)
            .copy_from_slice(model.scores.row(old_i));
    }
    Ok(TruncatedScores { scores, kept })
}

/// PLS decomposition of the component scores against a dependent block.
#[derive(Debug, Clone)]
pub struct PLSModel<F> {
    /// T x K orthonormal latent time courses.
    pub latents: Mat<F>,
    /// C x K unit-norm weights expressing each latent in score coordinates.
    pub x_weights: Mat<F>,
    /// Diagonal regression weights, one per latent.
    pub regression: Vec<F>,
    /// N_dep x K unit-norm dependent-variable weights.
    pub y_weights: Mat<F>,
    /// Number of latents requested.
    pub requested_k: usize,
    /// True when the component span ran out of rank before `requested_k`.
    pub partial: bool,
}

impl<F: Scalar> PLSModel<F> {
    pub fn k(&self) -> usize {
        self.latents.cols()
    }
}

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 1000;

/// Iterative PLS with symmetric score deflation.
///
/// At each step the dominant singular pair of the cross-covariance between
/// the (orthonormalized) component span and the centered dependent block
/// picks the latent direction; both blocks are then deflated against the
/// latent, so the latents come out orthonormal.
pub fn pls_fit<F: Scalar>(scores: &Mat<F>, d: &Mat<F>, k: usize) -> Result<PLSModel<F>> {
    let c = scores.rows();
    let t = scores.cols();
    if d.rows() != t {
        return Err(Error::Shape(format!(
            "scores have {t} frames but D has {} rows",
            d.rows()
        )));
    }
    if k == 0 || t < 2 || k > c.min(t - 1) {
        return Err(Error::Param(format!(
            "k must be in 1..=min(C, T-1) = {}, got {k}",
            c.min(t.saturating_sub(1))
        )));
    }
    let n_dep = d.cols();

    // center D columns
    let mut d_cur = d.clone();
    for j in 0..n_dep {
        let col = d_cur.col(j);
        let m = col.iter().copied().sum::<F>() / fu(t);
        for i in 0..t {
            d_cur[(i, j)] -= m;
        }
    }

    // orthonormal temporal basis of the component span
    let e_raw = scores.transpose(); // T x C
    let base = mgs_basis(&e_raw, fl(1e-10));
    let mut q_cur = base.q.clone();

    let m0_norm = q_cur.transpose().matmul(&d_cur).frob_norm();
    let m_tol = fl::<F>(POWER_TOL) * m0_norm.max(F::one());

    let mut latent_cols: Vec<Vec<F>> = Vec::new();
    let mut weight_cols: Vec<Vec<F>> = Vec::new();
    let mut c_cols: Vec<Vec<F>> = Vec::new();
    let mut b_diag: Vec<F> = Vec::new();
    let mut partial = false;

    for _step in 0..k {
        if q_cur.cols() == 0 {
            // only rank exhaustion of the component span stops early
            partial = true;
            break;
        }
        let m = q_cur.transpose().matmul(&d_cur); // r x N_dep
        let w_basis = if m.frob_norm() <= m_tol {
            // D is fully deflated: march deterministically through the
            // remaining span so extra latents stay orthonormal
            let mut e1 = vec![F::zero(); q_cur.cols()];
            e1[0] = F::one();
            e1
        } else {
            let mm = m.matmul(&m.transpose()); // r x r PSD
            match power_iteration_psd(&mm, fl(POWER_TOL), POWER_MAX_ITER) {
                Some(w) => w,
                None => {
                    let mut e1 = vec![F::zero(); q_cur.cols()];
                    e1[0] = F::one();
                    e1
                }
            }
        };
        let mut t_vec = q_cur.matvec(&w_basis);
        let nt = norm2(&t_vec);
        if nt <= F::epsilon() {
            partial = true;
            break;
        }
        for x in &mut t_vec {
            *x /= nt;
        }
        let mut c_vec = d_cur.tr_matvec(&t_vec);
        let b = norm2(&c_vec);
        if b > F::zero() {
            for x in &mut c_vec {
                *x /= b;
            }
            // sign: largest-magnitude dependent weight positive
            let mut best = 0usize;
            for (j, val) in c_vec.iter().enumerate() {
                if val.abs() > c_vec[best].abs() {
                    best = j;
                }
            }
            if c_vec[best] < F::zero() {
                for x in &mut c_vec {
                    *x = -*x;
                }
                for x in &mut t_vec {
                    *x = -*x;
                }
            }
        }

        // weights in original score coordinates, via the undeflated basis
        let w_orig = weights_in_score_coords(&base, scores.rows(), &t_vec);

        // deflate D and the basis against t
        rank1_deflate(&mut d_cur, &t_vec);
        let mut q_tmp = q_cur.clone();
        rank1_deflate(&mut q_tmp, &t_vec);
        q_cur = mgs_basis(&q_tmp, fl(1e-10)).q;

        latent_cols.push(t_vec);
        weight_cols.push(w_orig);
        c_cols.push(c_vec);
        b_diag.push(b);
    }

    let completed = latent_cols.len();
    let mut latents = Mat::zeros(t, completed);
    let mut x_weights = Mat::zeros(c, completed);
    let mut y_weights = Mat::zeros(n_dep, completed);
    for (j, col) in latent_cols.iter().enumerate() {
        latents.set_col(j, col);
    }
    for (j, col) in weight_cols.iter().enumerate() {
        x_weights.set_col(j, col);
    }
    for (j, col) in c_cols.iter().enumerate() {
        y_weights.set_col(j, col);
    }
    Ok(PLSModel {
        latents,
        x_weights,
        regression: b_diag,
        y_weights,
        requested_k: k,
        partial,
    })
}

/// Removes the rank-1 component along the unit vector `t` from each column.
fn rank1_deflate<F: Scalar>(m: &mut Mat<F>, t_vec: &[F]) {
    for j in 0..m.cols() {
        let mut coeff = F::zero();
        for i in 0..m.rows() {
            coeff += t_vec[i] * m[(i, j)];
        }
        for i in 0..m.rows() {
            let d = coeff * t_vec[i];
            m[(i, j)] -= d;
        }
    }
}

/// Expresses a latent as a unit-norm weight vector over the original score
/// rows: back-substitutes through the Gram-Schmidt triangle.
fn weights_in_score_coords<F: Scalar>(
    base: &crate::linalg::OrthoBasis<F>,
    n_scores: usize,
    t_vec: &[F],
) -> Vec<F> {
    let r = base.kept.len();
    let w_q = base.q.tr_matvec(t_vec); // coords in the q basis
                                       // solve R g = w_q (R upper triangular r x r)
    let mut g = w_q;
    for i in (0..r).rev() {
        for j in (i + 1)..r {
            let d = base.r[(i, j)] * g[j];
            g[i] -= d;
        }
        g[i] /= base.r[(i, i)];
    }
    let mut w = vec![F::zero(); n_scores];
    for (gi, &orig) in g.iter().zip(&base.kept) {
        w[orig] = *gi;
    }
    let n = norm2(&w);
    if n > F::zero() {
        for x in &mut w {
            *x /= n;
        }
    }
    w
}

/// Per-voxel covariances with the PLS latents: `X0 * T_PLS`.
#[derive(Debug, Clone)]
pub struct FeatureField<F> {
    /// V x K feature matrix.
    pub values: Mat<F>,
}

impl<F: Scalar> FeatureField<F> {
    pub fn k(&self) -> usize {
        self.values.cols()
    }

    pub fn n_voxels(&self) -> usize {
        self.values.rows()
    }
}

pub fn covariance_features<F: Scalar>(x0: &Mat<F>, model: &PLSModel<F>) -> Result<FeatureField<F>> {
    if x0.cols() != model.latents.rows() {
        return Err(Error::Shape(format!(
            "X0 has {} frames but latents have {}",
            x0.cols(),
            model.latents.rows()
        )));
    }
    Ok(FeatureField {
        values: x0.matmul(&model.latents),
    })
}

/// Dependent block for PLS: centered seed time series as columns.
#[derive(Debug, Clone)]
pub struct SeedMatrix<F> {
    /// T x N_dep matrix, one centered column per unique seed voxel.
    pub d: Mat<F>,
    /// The voxel row backing each column, in order.
    pub seed_rows: Vec<usize>,
    /// Number of duplicate seeds that were dropped.
    pub n_duplicates: usize,
}

pub fn build_seed_matrix<F: Scalar>(
    dataset: &BoldDataset<F>,
    seed_sets: &[SeedSet<F>],
) -> Result<SeedMatrix<F>> {
    let v = dataset.n_voxels();
    let t = dataset.n_frames();
    let mut rows: Vec<usize> = Vec::new();
    let mut n_duplicates = 0usize;
    for set in seed_sets {
        for &row in &set.voxel_rows {
            if row >= v {
                return Err(Error::Index(format!(
                    "seed row {row} out of range for {v} voxels"
                )));
            }
            if rows.contains(&row) {
                n_duplicates += 1;
            } else {
                rows.push(row);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Param("no seeds provided".into()));
    }
    let mut d = Mat::zeros(t, rows.len());
    for (j, &row) in rows.iter().enumerate() {
        let series = dataset.x.row(row);
        let m = series.iter().copied().sum::<F>() / fu(t);
        for i in 0..t {
            d[(i, j)] = series[i] - m;
        }
    }
    Ok(SeedMatrix {
        d,
        seed_rows: rows,
        n_duplicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VolumeGrid;
    use crate::linalg::Cholesky;
    use crate::rng;
    use rand::RngExt;

    fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
        let mut r = rng::seeded(seed);
        Mat::from_fn(rows, cols, |_, _| r.random::<f64>() * 2.0 - 1.0)
    }

    fn centered(m: &Mat<f64>) -> Mat<f64> {
        crate::dataset::center_rows(m)
    }

    fn center_cols(m: &Mat<f64>) -> Mat<f64> {
        let mut out = m.clone();
        for j in 0..out.cols() {
            let col = out.col(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            for i in 0..out.rows() {
                out[(i, j)] -= mean;
            }
        }
        out
    }

    // ---- PCA ----

    #[test]
    fn pca_reconstructs_random_30x50() {
        let xc = centered(&random_mat(30, 50, 1));
        let m = pca_decompose(&xc).unwrap();
        let rec = m.loadings.matmul(&m.scores);
        assert!(rec.sub(&xc).max_abs() <= 1e-9);
        for i in 1..m.variances.len() {
            assert!(m.variances[i - 1] >= m.variances[i] - 1e-15);
        }
    }

    #[test]
    fn pca_reconstructs_random_50x30() {
        let xc = centered(&random_mat(50, 30, 2));
        let m = pca_decompose(&xc).unwrap();
        let rec = m.loadings.matmul(&m.scores);
        assert!(rec.sub(&xc).max_abs() <= 1e-9);
        let ltl = m.loadings.transpose().matmul(&m.loadings);
        assert!(ltl.sub(&Mat::identity(m.n_components())).max_abs() < 1e-10);
    }

    #[test]
    fn pca_rank1_has_single_variance() {
        let u: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin()).collect();
        let w: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).cos()).collect();
        let outer = Mat::from_fn(30, 50, |i, j| u[i] * w[j]);
        let m = pca_decompose(&outer).unwrap();
        let top = m.variances[0];
        let above: usize = m.variances.iter().filter(|&&v| v > 1e-10 * top).count();
        assert_eq!(above, 1);
    }

    #[test]
    fn pca_score_rows_sign_convention() {
        let xc = centered(&random_mat(20, 15, 3));
        let m = pca_decompose(&xc).unwrap();
        for i in 0..m.n_components() {
            let row = m.scores.row(i);
            let best = row
                .iter()
                .fold(0.0f64, |acc, &v| if v.abs() > acc.abs() { v } else { acc });
            assert!(best >= 0.0);
        }
    }

    #[test]
    fn pca_single_voxel_row() {
        let x: Mat<f64> = Mat::from_rows(vec![vec![1.0, -1.0, 2.0, -2.0]]).unwrap();
        let xc = centered(&x);
        let m = pca_decompose(&xc).unwrap();
        assert_eq!(m.n_components(), 1);
        let rec = m.loadings.matmul(&m.scores);
        assert!(rec.sub(&xc).max_abs() < 1e-12);
    }

    #[test]
    fn pca_rejects_zero_matrix() {
        let z: Mat<f64> = Mat::zeros(4, 5);
        assert!(matches!(pca_decompose(&z), Err(Error::Degenerate(_))));
    }

    #[test]
    fn pca_rank_deficient_tall_matrix_keeps_orthonormal_loadings() {
        // 50x6 rank-2: exercises the orthonormal completion path
        let a = random_mat(50, 2, 33);
        let b = random_mat(2, 6, 34);
        let x = a.matmul(&b);
        let m = pca_decompose(&x).unwrap();
        let ltl = m.loadings.transpose().matmul(&m.loadings);
        assert!(ltl.sub(&Mat::identity(6)).max_abs() < 1e-9);
    }

    // ---- truncation ----

    fn toy_model() -> PCAModel<f64> {
        let xc = centered(&random_mat(12, 8, 4));
        pca_decompose(&xc).unwrap()
    }

    #[test]
    fn truncate_identity_policy() {
        let m = toy_model();
        let t = truncate(
            &m,
            &TruncationPolicy {
                drop_leading: 0,
                drop_trailing: 0,
                variance_floor_fraction: 0.0,
            },
        )
        .unwrap();
        assert_eq!(t.kept, (0..m.n_components()).collect::<Vec<_>>());
        assert_eq!(t.scores, m.scores);
    }

    #[test]
    fn truncate_drops_leading_and_trailing() {
        let m = toy_model();
        assert!(m.n_components() >= 5);
        let t = truncate(
            &m,
            &TruncationPolicy {
                drop_leading: 1,
                drop_trailing: m.n_components() - 4,
                variance_floor_fraction: 0.0,
            },
        )
        .unwrap();
        assert_eq!(t.kept, vec![1, 2, 3]);
    }

    #[test]
    fn truncate_empty_is_error() {
        let m = toy_model();
        let err = truncate(
            &m,
            &TruncationPolicy {
                drop_leading: m.n_components(),
                drop_trailing: 0,
                variance_floor_fraction: 0.0,
            },
        );
        assert!(matches!(err, Err(Error::Param(_))));
    }

    #[test]
    fn truncate_leading_removes_injected_drift() {
        let v = 40;
        let t = 30;
        let drift: Vec<f64> = (0..t).map(|i| i as f64 / (t - 1) as f64 - 0.5).collect();
        let mut r = rng::seeded(5);
        let x = Mat::from_fn(v, t, |_, j| {
            25.0 * drift[j] + rng::normal::<f64>(&mut r) * 0.3
        });
        let m = pca_decompose(&centered(&x)).unwrap();
        let tr = truncate(
            &m,
            &TruncationPolicy {
                drop_leading: 1,
                drop_trailing: 0,
                variance_floor_fraction: 0.0,
            },
        )
        .unwrap();
        assert!(!tr.kept.contains(&0));
        let rho = crate::linalg::pearson(m.scores.row(0), &drift).unwrap();
        assert!(rho.abs() > 0.9, "dropped PC correlates {rho} with drift");
    }

    // ---- PLS ----

    #[test]
    fn pls_latent_follows_pc1_when_d_is_pc1() {
        let xc = centered(&random_mat(40, 30, 6));
        let m = pca_decompose(&xc).unwrap();
        let pc1 = m.scores.row(0).to_vec();
        let d = Mat::from_vec(30, 1, pc1.clone()).unwrap();
        let pls = pls_fit(&m.scores, &d, 1).unwrap();
        let t1 = pls.latents.col(0);
        // pc1 is already centered (rows of centered data scores)
        let cos = dot(&t1, &pc1).abs() / norm2(&pc1);
        assert!(cos >= 1.0 - 1e-8, "cosine {cos}");
    }

    #[test]
    fn pls_single_dependent_matches_projection_oracle() {
        // independent least-squares oracle: project centered d onto the
        // span of the score rows via normal equations
        let scores = random_mat(8, 30, 7); // deliberately non-orthogonal rows
        let d_raw = random_mat(30, 1, 8);
        let pls = pls_fit(&scores, &d_raw, 1).unwrap();

        let e = scores.transpose(); // 30 x 8
        let d = center_cols(&d_raw).col(0);
        let ete = e.transpose().matmul(&e);
        let etd = e.tr_matvec(&d);
        let g = Cholesky::new(&ete).unwrap().solve(&etd);
        let proj = e.matvec(&g);
        let t1 = pls.latents.col(0);
        let cos = dot(&t1, &proj).abs() / norm2(&proj);
        assert!(cos >= 1.0 - 1e-8, "cosine {cos}");
    }

    #[test]
    fn pls_latents_orthonormal_k2() {
        let scores = random_mat(10, 40, 9);
        let d = random_mat(40, 3, 10);
        let pls = pls_fit(&scores, &d, 2).unwrap();
        assert!(!pls.partial);
        let tt = pls.latents.transpose().matmul(&pls.latents);
        assert!(tt.sub(&Mat::identity(2)).max_abs() <= 1e-8);
        for j in 0..2 {
            assert!((norm2(&pls.x_weights.col(j)) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn pls_first_pair_matches_svd_oracle() {
        // oracle route: eigendecomposition of M M' instead of power iteration
        let scores = random_mat(12, 50, 11);
        let d_raw = random_mat(50, 4, 12);
        let pls = pls_fit(&scores, &d_raw, 1).unwrap();

        let e = scores.transpose();
        let base = mgs_basis(&e, 1e-10);
        let d = center_cols(&d_raw);
        let m = base.q.transpose().matmul(&d);
        let eig = sym_eigen(&m.matmul(&m.transpose())).unwrap();
        let w_oracle = eig.vectors.col(0);
        let t_oracle = base.q.matvec(&w_oracle);
        let t1 = pls.latents.col(0);
        let cos_t = dot(&t1, &t_oracle).abs() / norm2(&t_oracle);
        assert!(cos_t >= 1.0 - 1e-8, "t cosine {cos_t}");

        let mut c_oracle = d.tr_matvec(&t_oracle);
        let nc = norm2(&c_oracle);
        for x in &mut c_oracle {
            *x /= nc;
        }
        let c1 = pls.y_weights.col(0);
        let cos_c = dot(&c1, &c_oracle).abs();
        assert!(cos_c >= 1.0 - 1e-8, "c cosine {cos_c}");
    }

    #[test]
    fn pls_covariance_maximality_over_random_probes() {
        let scores = random_mat(10, 60, 13);
        let d_raw = random_mat(60, 3, 14);
        let pls = pls_fit(&scores, &d_raw, 1).unwrap();
        let d = center_cols(&d_raw);
        let t1 = pls.latents.col(0);
        let u1 = d.matvec(&pls.y_weights.col(0));
        let best = dot(&t1, &u1);

        let e = scores.transpose();
        let mut r = rng::seeded(99);
        for _ in 0..200 {
            let mut w: Vec<f64> = (0..10).map(|_| rng::normal(&mut r)).collect();
            let nw = norm2(&w);
            for x in &mut w {
                *x /= nw;
            }
            let mut c: Vec<f64> = (0..3).map(|_| rng::normal(&mut r)).collect();
            let ncv = norm2(&c);
            for x in &mut c {
                *x /= ncv;
            }
            let mut t_probe = e.matvec(&w);
            let nt = norm2(&t_probe);
            if nt == 0.0 {
                continue;
            }
            for x in &mut t_probe {
                *x /= nt;
            }
            let u_probe = d.matvec(&c);
            let val = dot(&t_probe, &u_probe).abs();
            assert!(best + 1e-10 >= val, "probe beat the latent: {val} > {best}");
        }
    }

    #[test]
    fn pls_invariant_to_score_basis_rotation() {
        let scores = random_mat(9, 40, 15);
        let d = random_mat(40, 2, 16);
        let pls_a = pls_fit(&scores, &d, 2).unwrap();

        let g = random_mat(9, 9, 17);
        let rot = mgs_basis(&g, 1e-12).q; // 9 x 9 orthogonal
        let scores_rot = rot.transpose().matmul(&scores);
        let pls_b = pls_fit(&scores_rot, &d, 2).unwrap();

        for j in 0..2 {
            let ta = pls_a.latents.col(j);
            let tb = pls_b.latents.col(j);
            let cos = dot(&ta, &tb).abs();
            assert!(cos >= 1.0 - 1e-8, "latent {j} cosine {cos}");
        }
    }

    #[test]
    fn pls_sequential_deflation_reconstructs() {
        let scores = random_mat(7, 25, 18);
        let d = random_mat(25, 2, 19);
        let pls = pls_fit(&scores, &d, 3).unwrap();
        let e1 = scores.transpose();
        let mut e = e1.clone();
        for j in 0..pls.k() {
            let t = pls.latents.col(j);
            rank1_deflate(&mut e, &t);
        }
        // e1 = sum_i t_i (t_i' e1) + e_{k+1}
        let mut rebuilt = e.clone();
        for j in 0..pls.k() {
            let t = pls.latents.col(j);
            let coeffs = e1.tr_matvec(&t);
            for col in 0..rebuilt.cols() {
                for row in 0..rebuilt.rows() {
                    rebuilt[(row, col)] += t[row] * coeffs[col];
                }
            }
        }
        assert!(rebuilt.sub(&e1).max_abs() < 1e-10);
    }

    #[test]
    fn pls_partial_on_rank_exhaustion() {
        // rank-2 score matrix, ask for 3 latents
        let a = random_mat(2, 20, 20);
        let mut scores = Mat::zeros(4, 20);
        for j in 0..20 {
            scores[(0, j)] = a[(0, j)];
            scores[(1, j)] = a[(1, j)];
            scores[(2, j)] = a[(0, j)] + a[(1, j)];
            scores[(3, j)] = a[(0, j)] - a[(1, j)];
        }
        let d = random_mat(20, 2, 21);
        let pls = pls_fit(&scores, &d, 3).unwrap();
        assert!(pls.partial);
        assert_eq!(pls.k(), 2);
    }

    #[test]
    fn pls_param_errors() {
        let scores = random_mat(4, 10, 22);
        let d = random_mat(10, 1, 23);
        assert!(matches!(pls_fit(&scores, &d, 0), Err(Error::Param(_))));
        assert!(matches!(pls_fit(&scores, &d, 5), Err(Error::Param(_))));
        let d_bad = random_mat(9, 1, 24);
        assert!(matches!(pls_fit(&scores, &d_bad, 1), Err(Error::Shape(_))));
    }

    // ---- features ----

    #[test]
    fn features_orthonormal_voxel_and_zero_row() {
        let scores = random_mat(6, 30, 25);
        let d = random_mat(30, 2, 26);
        let pls = pls_fit(&scores, &d, 2).unwrap();
        let t1 = pls.latents.col(0);
        let mut x0 = Mat::zeros(3, 30);
        x0.row_mut(0).copy_from_slice(&t1);
        let mut r2: Vec<f64> = (0..30).map(|i| ((i * 7 + 3) as f64 * 0.37).sin()).collect();
        let n = norm2(&r2);
        for x in &mut r2 {
            *x /= n;
        }
        x0.row_mut(2).copy_from_slice(&r2);

        let feats = covariance_features(&x0, &pls).unwrap();
        assert!((feats.values[(0, 0)] - 1.0).abs() <= 1e-8);
        assert!(feats.values[(0, 1)].abs() <= 1e-8);
        assert_eq!(feats.values.row(1), &[0.0, 0.0]);
        for j in 0..2 {
            assert!(feats.values[(2, j)].abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn feature_shape_mismatch_is_error() {
        let scores = random_mat(5, 20, 27);
        let d = random_mat(20, 1, 28);
        let pls = pls_fit(&scores, &d, 1).unwrap();
        let x0: Mat<f64> = Mat::zeros(3, 19);
        assert!(matches!(
            covariance_features(&x0, &pls),
            Err(Error::Shape(_))
        ));
    }

    // ---- seed matrix ----

    fn tiny_dataset() -> BoldDataset<f64> {
        let grid = VolumeGrid::full([4, 1, 1]).unwrap();
        let x = Mat::from_fn(4, 6, |i, j| ((i + 1) * (j + 1)) as f64 + (i as f64) * 0.5);
        BoldDataset::new(grid, x, 2.0).unwrap()
    }

    fn seed_set(rows: Vec<usize>) -> SeedSet<f64> {
        SeedSet {
            voxel_rows: rows,
            map_values: vec![],
            source_map: "test".into(),
            radius: 1.0,
            exhausted: false,
        }
    }

    #[test]
    fn seed_matrix_columns_are_centered_series() {
        let ds = tiny_dataset();
        let sm = build_seed_matrix(&ds, &[seed_set(vec![2, 0])]).unwrap();
        assert_eq!(sm.d.cols(), 2);
        assert_eq!(sm.n_duplicates, 0);
        for j in 0..2 {
            let col = sm.d.col(j);
            let m: f64 = col.iter().sum::<f64>() / col.len() as f64;
            assert!(m.abs() < 1e-12);
        }
    }

    #[test]
    fn seed_matrix_dedups_across_sets() {
        let ds = tiny_dataset();
        let sm = build_seed_matrix(&ds, &[seed_set(vec![1, 3]), seed_set(vec![3, 0])]).unwrap();
        assert_eq!(sm.d.cols(), 3);
        assert_eq!(sm.n_duplicates, 1);
        assert_eq!(sm.seed_rows, vec![1, 3, 0]);
    }

    #[test]
    fn seed_matrix_out_of_range_is_index_error() {
        let ds = tiny_dataset();
        assert!(matches!(
            build_seed_matrix(&ds, &[seed_set(vec![9])]),
            Err(Error::Index(_))
        ));
    }
}
