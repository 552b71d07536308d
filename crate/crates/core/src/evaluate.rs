//! Evaluation statistics: per-voxel GLM and PLS t-maps, intra-parcel
//! functional variance, quartile summaries, method comparison tables, and
//! the adjusted Rand index against ground truth.

use rayon::prelude::*;

use crate::dataset::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Mat};
use crate::parcellate::Parcellation;
use crate::pls::pls_fit;
use crate::scalar::{fl, fu, Scalar};

/// Cap applied to saturated t-values (zero residual / |r| at 1).
pub const T_SATURATION_CAP: f64 = 1e12;
/// |r| is clipped to 1 - this before the correlation-t transform.
pub const R_CLIP_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatKind {
    Glm,
    Pls,
}

impl std::fmt::Display for StatKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StatKind::Glm => write!(f, "glm_t"),
            StatKind::Pls => write!(f, "pls_t"),
        }
    }
}

/// Per-voxel, per-regressor t-values.
#[derive(Debug, Clone)]
pub struct StatMap<F> {
    /// V x N_r matrix of t-values.
    pub t: Mat<F>,
    pub kind: StatKind,
    pub dof: usize,
    /// Entries that hit the saturation cap.
    pub n_saturated: usize,
}

/// Per-voxel OLS t-statistics against the design (an intercept column is
/// appended internally).
pub fn glm_tvalues<F: Scalar>(x: &Mat<F>, design: &DesignMatrix<F>) -> Result<StatMap<F>> {
    let t_len = x.cols();
    let n_r = design.n_regressors();
    if design.n_frames() != t_len {
        return Err(Error::Shape(format!(
            "design has {} frames, data has {t_len}",
            design.n_frames()
        )));
    }
    if t_len <= n_r + 1 {
        return Err(Error::Design(format!(
            "need T > N_r + 1 ({} regressors, {t_len} frames)",
            n_r
        )));
    }
    let p = n_r + 1;
    // augmented design [Y | 1]
    let mut y_aug = Mat::zeros(t_len, p);
    for i in 0..t_len {
        for j in 0..n_r {
            y_aug[(i, j)] = design.y[(i, j)];
        }
        y_aug[(i, n_r)] = F::one();
    }
    let yty = y_aug.transpose().matmul(&y_aug);
    let chol =
        Cholesky::new(&yty).map_err(|_| Error::Design("design matrix is rank deficient".into()))?;
    let inv_diag = chol.inverse_diag();
    let dof = t_len - p;
    let cap = fl::<F>(T_SATURATION_CAP);

    let results: Vec<(Vec<F>, usize)> = (0..x.rows())
        .into_par_iter()
        .map(|row| {
            let xv = x.row(row);
            let yt_x = y_aug.tr_matvec(xv);
            let beta = chol.solve(&yt_x);
            let fitted = y_aug.matvec(&beta);
            let mut rss = F::zero();
            for (f, &obs) in fitted.iter().zip(xv) {
                let r = obs - *f;
                rss += r * r;
            }
            let xv_scale = dot(xv, xv);
            let sigma2 = rss / fu::<F>(dof);
            let mut t_row = Vec::with_capacity(n_r);
            let mut saturated = 0usize;
            // zero residual within rounding of the signal scale saturates
            let degenerate = rss <= xv_scale * F::epsilon() * fu::<F>(t_len);
            for k in 0..n_r {
                if degenerate {
                    if beta[k] == F::zero() {
                        t_row.push(F::zero());
                    } else {
                        t_row.push(beta[k].signum() * cap);
                        saturated += 1;
                    }
                } else {
                    let se = (sigma2 * inv_diag[k]).sqrt();
                    let t_val = beta[k] / se;
                    if t_val.abs() > cap {
                        t_row.push(t_val.signum() * cap);
                        saturated += 1;
                    } else {
                        t_row.push(t_val);
                    }
                }
            }
            (t_row, saturated)
        })
        .collect();

    let mut t = Mat::zeros(x.rows(), n_r);
    let mut n_saturated = 0usize;
    for (row, (vals, sat)) in results.into_iter().enumerate() {
        t.row_mut(row).copy_from_slice(&vals);
        n_saturated += sat;
    }
    Ok(StatMap {
        t,
        kind: StatKind::Glm,
        dof,
        n_saturated,
    })
}

/// Which form of the correlation-to-t transform to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eq6Mode {
    /// t = r sqrt(T-2) / sqrt(1 - r^2): the standard correlation
    /// t-statistic with T-2 degrees of freedom.
    Sqrt,
    /// t = r sqrt(T-2) / (1 - r^2): kept for compatibility with sources
    /// that print the denominator without the square root.
    Literal,
}

/// Correlation-to-t transform.
pub fn pls_tvalue<F: Scalar>(r: F, t_len: usize, mode: Eq6Mode) -> Result<F> {
    if t_len < 3 {
        return Err(Error::Param("need T >= 3 for the t transform".into()));
    }
    if r.abs() >= F::one() {
        return Err(Error::Domain(format!("|r| must be below 1, got {r}")));
    }
    let num = r * fu::<F>(t_len - 2).sqrt();
    let denom = F::one() - r * r;
    Ok(match mode {
        Eq6Mode::Sqrt => num / denom.sqrt(),
        Eq6Mode::Literal => num / denom,
    })
}

/// Per-regressor PLS t-map: fits one latent per regressor, correlates each
/// voxel's normalized signal with the latent, and maps through the t
/// transform. |r| values at the boundary are clipped and counted.
pub fn pls_tmap<F: Scalar>(
    x0: &Mat<F>,
    design: &DesignMatrix<F>,
    scores: &Mat<F>,
    mode: Eq6Mode,
) -> Result<StatMap<F>> {
    let t_len = x0.cols();
    if design.n_frames() != t_len {
        return Err(Error::Shape(format!(
            "design has {} frames, data has {t_len}",
            design.n_frames()
        )));
    }
    if scores.cols() != t_len {
        return Err(Error::Shape(format!(
            "scores have {} frames, data has {t_len}",
            scores.cols()
        )));
    }
    let n_r = design.n_regressors();
    let v = x0.rows();
    let clip = F::one() - fl::<F>(R_CLIP_MARGIN);
    let mut t = Mat::zeros(v, n_r);
    let mut n_saturated = 0usize;
    for k in 0..n_r {
        let yk = Mat::from_vec(t_len, 1, design.y.col(k))?;
        let pls = pls_fit(scores, &yk, 1)?;
        if pls.k() == 0 {
            return Err(Error::Rank(format!(
                "regressor {k} is orthogonal to the component span"
            )));
        }
        let latent = pls.latents.col(0);
        for row in 0..v {
            let mut r = dot(x0.row(row), &latent);
            if r.abs() > clip {
                r = r.signum() * clip;
                n_saturated += 1;
            }
            t[(row, k)] = pls_tvalue(r, t_len, mode)?;
        }
    }
    Ok(StatMap {
        t,
        kind: StatKind::Pls,
        dof: t_len - 2,
        n_saturated,
    })
}

/// Quartiles by linear interpolation on the sorted values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles<F> {
    pub q1: F,
    pub median: F,
    pub q3: F,
}

/// Linear-interpolation quantile of already-sorted values.
pub fn quantile_sorted<F: Scalar>(sorted: &[F], p: f64) -> F {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = fl::<F>(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Intra-parcel dispersion of the per-voxel t-vectors.
#[derive(Debug, Clone)]
pub struct ParcelVarianceReport<F> {
    /// Per-parcel functional variance, indexed by parcel label.
    pub v: Vec<F>,
    pub quartiles: Quartiles<F>,
    pub method_tag: String,
    /// Parcels with a single voxel (their variance is defined as zero).
    pub n_singletons: usize,
}

impl<F: Scalar> ParcelVarianceReport<F> {
    pub fn mean(&self) -> F {
        self.v.iter().copied().sum::<F>() / fu(self.v.len())
    }
}

/// Root of the summed squared per-regressor sample standard deviations
/// within each parcel.
pub fn intra_parcel_variance<F: Scalar>(
    stat: &StatMap<F>,
    parc: &Parcellation,
) -> Result<ParcelVarianceReport<F>> {
    if stat.t.rows() != parc.labels.len() {
        return Err(Error::Shape(format!(
            "stat map has {} voxels, parcellation {}",
            stat.t.rows(),
            parc.labels.len()
        )));
    }
    let n_r = stat.t.cols();
    let k = parc.k;
    let mut counts = vec![0usize; k];
    let mut sums = vec![vec![F::zero(); n_r]; k];
    for (row, &label) in parc.labels.iter().enumerate() {
        counts[label] += 1;
        for (s, &val) in sums[label].iter_mut().zip(stat.t.row(row)) {
            *s += val;
        }
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::Param("parcellation has an empty parcel".into()));
    }
    let mut ssd = vec![vec![F::zero(); n_r]; k];
    for (row, &label) in parc.labels.iter().enumerate() {
        for (j, &val) in stat.t.row(row).iter().enumerate() {
            let m = sums[label][j] / fu::<F>(counts[label]);
            let d = val - m;
            ssd[label][j] += d * d;
        }
    }
    let mut v = Vec::with_capacity(k);
    let mut n_singletons = 0usize;
    for label in 0..k {
        if counts[label] == 1 {
            n_singletons += 1;
            v.push(F::zero());
            continue;
        }
        let denom = fu::<F>(counts[label] - 1);
        let total: F = ssd[label].iter().map(|&ss| ss / denom).sum();
        v.push(total.sqrt());
    }
    let mut sorted = v.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let quartiles = Quartiles {
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
    };
    Ok(ParcelVarianceReport {
        v,
        quartiles,
        method_tag: format!("{}/{}", parc.provenance, stat.kind),
        n_singletons,
    })
}

/// Standard adjusted Rand index between two labelings.
pub fn adjusted_rand(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::Shape(format!(
            "labelings of lengths {} and {}",
            labels_a.len(),
            labels_b.len()
        )));
    }
    let n = labels_a.len();
    if n == 0 {
        return Err(Error::Param("empty labelings".into()));
    }
    let ka = labels_a.iter().max().unwrap() + 1;
    let kb = labels_b.iter().max().unwrap() + 1;
    let mut contingency = vec![vec![0u64; kb]; ka];
    for (&a, &b) in labels_a.iter().zip(labels_b) {
        contingency[a][b] += 1;
    }
    let choose2 = |x: u64| -> f64 { (x * x.saturating_sub(1)) as f64 / 2.0 };
    let mut sum_ij = 0.0;
    let mut row_sums = vec![0u64; ka];
    let mut col_sums = vec![0u64; kb];
    for (i, row) in contingency.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            sum_ij += choose2(nij);
            row_sums[i] += nij;
            col_sums[j] += nij;
        }
    }
    let a_sum: f64 = row_sums.iter().map(|&x| choose2(x)).sum();
    let b_sum: f64 = col_sums.iter().map(|&x| choose2(x)).sum();
    let total = choose2(n as u64);
    let expected = a_sum * b_sum / total;
    let max_index = 0.5 * (a_sum + b_sum);
    if (max_index - expected).abs() < 1e-300 {
        return Ok(1.0); // both labelings are single-cluster
    }
    Ok((sum_ij - expected) / (max_index - expected))
}

/// One row of the method comparison table.
#[derive(Debug, Clone)]
pub struct MethodSummary<F> {
    pub method: String,
    pub mean: F,
    pub q1: F,
    pub q3: F,
}

/// Mean/Q1/Q3 of the per-parcel variance per method, in input order.
pub fn compare_methods<F: Scalar>(
    reports: &[ParcelVarianceReport<F>],
) -> Result<Vec<MethodSummary<F>>> {
    if reports.len() < 2 {
        return Err(Error::Param("comparison needs at least 2 reports".into()));
    }
    Ok(reports
        .iter()
        .map(|r| MethodSummary {
            method: r.method_tag.clone(),
            mean: r.mean(),
            q1: r.quartiles.q1,
            q3: r.quartiles.q3,
        })
        .collect())
}
