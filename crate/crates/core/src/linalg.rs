//! Dense row-major matrices and the few decompositions the crate needs:
//! a symmetric eigensolver (Householder tridiagonalization + implicit-shift
//! QL), Cholesky solves for small SPD systems, modified Gram-Schmidt, and
//! power iteration for dominant eigenpairs.

use crate::error::{Error, Result};
use crate::scalar::{fl, fu, Scalar};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {}x{} = {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<F>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        if rows.iter().any(|v| v.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Mat {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<F> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[F]) {
        debug_assert_eq!(v.len(), self.rows);
        for i in 0..self.rows {
            self[(i, j)] = v[i];
        }
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn transpose(&self) -> Mat<F> {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `self * other`, accumulated in row-major friendly (i, k, j) order.
    pub fn matmul(&self, other: &Mat<F>) -> Mat<F> {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == F::zero() {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for j in 0..other.cols {
                    out_row[j] += a * orow[j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `self^T * v` without forming the transpose.
    pub fn tr_matvec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(self.rows, v.len(), "tr_matvec shape mismatch");
        let mut out = vec![F::zero(); self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn scale(&self, s: F) -> Mat<F> {
        let mut m = self.clone();
        for x in &mut m.data {
            *x *= s;
        }
        m
    }

    pub fn sub(&self, other: &Mat<F>) -> Mat<F> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut m = self.clone();
        for (x, &y) in m.data.iter_mut().zip(&other.data) {
            *x -= y;
        }
        m
    }

    pub fn max_abs(&self) -> F {
        self.data.iter().fold(F::zero(), |acc, &x| acc.max(x.abs()))
    }

    pub fn frob_norm(&self) -> F {
        self.data
            .iter()
            .fold(F::zero(), |acc, &x| acc + x * x)
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl<F: Scalar> std::ops::Index<(usize, usize)> for Mat<F> {
    type Output = F;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F: Scalar> std::ops::IndexMut<(usize, usize)> for Mat<F> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm2<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

pub fn mean<F: Scalar>(a: &[F]) -> F {
    a.iter().copied().sum::<F>() / fu(a.len())
}

/// Sample standard deviation (divisor n - 1).
pub fn sample_std<F: Scalar>(a: &[F]) -> F {
    let m = mean(a);
    let ss = a.iter().fold(F::zero(), |acc, &x| {
        let d = x - m;
        acc + d * d
    });
    (ss / fu(a.len() - 1)).sqrt()
}

/// Pearson correlation of two equal-length series.
pub fn pearson<F: Scalar>(a: &[F], b: &[F]) -> Result<F> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "correlation arguments of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = F::zero();
    let mut saa = F::zero();
    let mut sbb = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == F::zero() || sbb == F::zero() {
        return Err(Error::Degenerate(
            "zero-variance series in correlation".into(),
        ));
    }
    Ok(sab / (saa.sqrt() * sbb.sqrt()))
}

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymEigen<F> {
    /// Eigenvalues, descending.
    pub values: Vec<F>,
    /// Orthonormal eigenvectors as columns, matching `values`.
    pub vectors: Mat<F>,
}

/// Symmetric eigendecomposition via Householder tridiagonalization followed
/// by implicit-shift QL iterations with eigenvector accumulation.
pub fn sym_eigen<F: Scalar>(a: &Mat<F>) -> Result<SymEigen<F>> {
    let n = a.rows();
    if n == 0 || a.cols() != n {
        return Err(Error::Shape(format!(
            "symmetric eigen needs a square nonempty matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let mut z = a.clone();
    let mut d = vec![F::zero(); n];
    let mut e = vec![F::zero(); n];
    tridiagonalize(&mut z, &mut d, &mut e);
    ql_implicit(&mut d, &mut e, &mut z)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap_or(std::cmp::Ordering::Equal));
    let values: Vec<F> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, new_j)] = z[(i, old_j)];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Householder reduction of a symmetric matrix to tridiagonal form, with the
/// orthogonal transform accumulated in place of the input.
fn tridiagonalize<F: Scalar>(a: &mut Mat<F>, d: &mut [F], e: &mut [F]) {
    let n = a.rows();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = F::zero();
        if l > 0 {
            let mut scale = F::zero();
            for k in 0..=l {
                scale += a[(i, k)].abs();
            }
            if scale == F::zero() {
                e[i] = a[(i, l)];
            } else {
                for k in 0..=l {
                    let v = a[(i, k)] / scale;
                    a[(i, k)] = v;
                    h += v * v;
                }
                let f = a[(i, l)];
                let g = if f >= F::zero() { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[(i, l)] = f - g;
                let mut f_acc = F::zero();
                for j in 0..=l {
                    a[(j, i)] = a[(i, j)] / h;
                    let mut g_acc = F::zero();
                    for k in 0..=j {
                        g_acc += a[(j, k)] * a[(i, k)];
                    }
                    for k in (j + 1)..=l {
                        g_acc += a[(k, j)] * a[(i, k)];
                    }
                    e[j] = g_acc / h;
                    f_acc += e[j] * a[(i, j)];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = a[(i, j)];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        let delta = f * e[k] + g * a[(i, k)];
                        a[(j, k)] -= delta;
                    }
                }
            }
        } else {
            e[i] = a[(i, l)];
        }
        d[i] = h;
    }
    d[0] = F::zero();
    e[0] = F::zero();
    for i in 0..n {
        if d[i] != F::zero() {
            for j in 0..i {
                let mut g = F::zero();
                for k in 0..i {
                    g += a[(i, k)] * a[(k, j)];
                }
                for k in 0..i {
                    let delta = g * a[(k, i)];
                    a[(k, j)] -= delta;
                }
            }
        }
        d[i] = a[(i, i)];
        a[(i, i)] = F::one();
        for j in 0..i {
            a[(j, i)] = F::zero();
            a[(i, j)] = F::zero();
        }
    }
}

/// Implicit-shift QL iterations on a tridiagonal matrix; rotations are
/// applied to the columns of `z` so its columns end up as eigenvectors.
fn ql_implicit<F: Scalar>(d: &mut [F], e: &mut [F], z: &mut Mat<F>) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = F::zero();
    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= F::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::Convergence {
                    what: "QL eigenvalue iteration".into(),
                    iterations: 50,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (fl::<F>(2.0) * e[l]);
            let mut r = g.hypot(F::one());
            g = d[m] - d[l] + e[l] / (g + sign_like(r, g));
            let mut s = F::one();
            let mut c = F::one();
            let mut p = F::zero();
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == F::zero() {
                    d[i + 1] -= p;
                    e[m] = F::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + fl::<F>(2.0) * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[(k, i + 1)];
                    z[(k, i + 1)] = s * z[(k, i)] + c * f;
                    z[(k, i)] = c * z[(k, i)] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = F::zero();
        }
    }
    Ok(())
}

#[inline]
fn sign_like<F: Scalar>(magnitude: F, sign_of: F) -> F {
    if sign_of >= F::zero() {
        magnitude.abs()
    } else {
        -magnitude.abs()
    }
}

/// Cholesky factor of a symmetric positive-definite matrix.
pub struct Cholesky<F> {
    l: Mat<F>,
}

impl<F: Scalar> Cholesky<F> {
    pub fn new(a: &Mat<F>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Shape("cholesky needs a square matrix".into()));
        }
        let scale = (0..n).fold(F::zero(), |acc, i| acc.max(a[(i, i)].abs()));
        let floor = scale * F::epsilon() * fu::<F>(n * 8);
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if s <= floor {
                        return Err(Error::Rank(
                            "matrix not positive definite in cholesky".into(),
                        ));
                    }
                    l[(i, j)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        Ok(Cholesky { l })
    }

    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let n = self.l.rows();
        debug_assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let d = self.l[(i, k)] * y[k];
                y[i] -= d;
            }
            y[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let d = self.l[(k, i)] * y[k];
                y[i] -= d;
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }

    /// Diagonal of the inverse of the factored matrix.
    pub fn inverse_diag(&self) -> Vec<F> {
        let n = self.l.rows();
        let mut diag = vec![F::zero(); n];
        for j in 0..n {
            let mut e = vec![F::zero(); n];
            e[j] = F::one();
            let x = self.solve(&e);
            diag[j] = x[j];
        }
        diag
    }
}

/// Orthonormal basis of the column span of a matrix, built with modified
/// Gram-Schmidt. `r` maps kept original columns onto the basis:
/// `input[:, kept[j]] = q * r[:, j]` up to the drop tolerance.
pub struct OrthoBasis<F> {
    pub q: Mat<F>,
    pub r: Mat<F>,
    pub kept: Vec<usize>,
}

pub fn mgs_basis<F: Scalar>(cols: &Mat<F>, rel_tol: F) -> OrthoBasis<F> {
    let m = cols.rows();
    let n = cols.cols();
    let mut q_cols: Vec<Vec<F>> = Vec::new();
    let mut r_cols: Vec<Vec<F>> = Vec::new();
    let mut kept = Vec::new();
    let max_norm = (0..n).map(|j| norm2(&cols.col(j))).fold(F::zero(), F::max);
    let tol = rel_tol * max_norm;
    for j in 0..n {
        let mut v = cols.col(j);
        let mut coeffs = vec![F::zero(); q_cols.len()];
        for (i, q) in q_cols.iter().enumerate() {
            let c = dot(q, &v);
            coeffs[i] = c;
            for (vk, qk) in v.iter_mut().zip(q) {
                *vk -= c * *qk;
            }
        }
        // second orthogonalization pass for numerical hygiene
        for (i, q) in q_cols.iter().enumerate() {
            let c = dot(q, &v);
            coeffs[i] += c;
            for (vk, qk) in v.iter_mut().zip(q) {
                *vk -= c * *qk;
            }
        }
        let nv = norm2(&v);
        if nv > tol && nv > F::zero() {
            for vk in &mut v {
                *vk /= nv;
            }
            coeffs.push(nv);
            q_cols.push(v);
            r_cols.push(coeffs);
            kept.push(j);
        }
    }
    let k = q_cols.len();
    let mut q = Mat::zeros(m, k);
    for (j, col) in q_cols.iter().enumerate() {
        q.set_col(j, col);
    }
    let mut r = Mat::zeros(k, k);
    for (j, coeffs) in r_cols.iter().enumerate() {
        for (i, &c) in coeffs.iter().enumerate() {
            r[(i, j)] = c;
        }
    }
    OrthoBasis { q, r, kept }
}

/// Dominant eigenvector of a symmetric PSD matrix by power iteration.
/// Starts from the normalized row-sum vector; runs until the iterate moves
/// less than `tol` or `max_iter` is reached, returning the final iterate.
pub fn power_iteration_psd<F: Scalar>(m: &Mat<F>, tol: F, max_iter: usize) -> Option<Vec<F>> {
    let n = m.rows();
    debug_assert_eq!(m.cols(), n);
    let mut v: Vec<F> = (0..n).map(|i| m.row(i).iter().copied().sum()).collect();
    let nv = norm2(&v);
    if nv == F::zero() {
        // fall back to the first coordinate direction
        v = vec![F::zero(); n];
        if n == 0 {
            return None;
        }
        v[0] = F::one();
    } else {
        for x in &mut v {
            *x /= nv;
        }
    }
    for _ in 0..max_iter {
        let mut w = m.matvec(&v);
        let nw = norm2(&w);
        if nw == F::zero() {
            return None;
        }
        for x in &mut w {
            *x /= nw;
        }
        let delta = v
            .iter()
            .zip(&w)
            .fold(F::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));
        v = w;
        if delta < tol {
            break;
        }
    }
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> Mat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = rng.random::<f64>() * 2.0 - 1.0;
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    #[test]
    fn eigen_2x2_known() {
        let a: Mat<f64> = Mat::from_rows(vec![vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = sym_eigen(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_reconstructs_random() {
        for seed in [1u64, 2, 3] {
            let n = 24;
            let a = random_symmetric(n, seed);
            let e = sym_eigen(&a).unwrap();
            // A q_i = lambda_i q_i
            for k in 0..n {
                let q = e.vectors.col(k);
                let aq = a.matvec(&q);
                for i in 0..n {
                    assert!(
                        (aq[i] - e.values[k] * q[i]).abs() < 1e-9,
                        "residual too large at seed {seed}"
                    );
                }
            }
            // orthonormal columns
            let qtq = e.vectors.transpose().matmul(&e.vectors);
            let diff = qtq.sub(&Mat::identity(n)).max_abs();
            assert!(diff < 1e-10);
            // sorted descending
            for k in 1..n {
                assert!(e.values[k - 1] >= e.values[k] - 1e-12);
            }
        }
    }

    #[test]
    fn eigen_one_by_one() {
        let a: Mat<f64> = Mat::from_rows(vec![vec![-3.5]]).unwrap();
        let e = sym_eigen(&a).unwrap();
        assert_eq!(e.values, vec![-3.5]);
        assert_eq!(e.vectors[(0, 0)].abs(), 1.0);
    }

    #[test]
    fn eigen_handles_diagonal_and_zero() {
        let a: Mat<f64> = Mat::from_rows(vec![
            vec![3.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .unwrap();
        let e = sym_eigen(&a).unwrap();
        assert_eq!(
            e.values
                .iter()
                .map(|v| v.round() as i64)
                .collect::<Vec<_>>(),
            vec![3, 2, -1]
        );
        let z: Mat<f64> = Mat::zeros(4, 4);
        let e = sym_eigen(&z).unwrap();
        assert!(e.values.iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn cholesky_solves() {
        let a: Mat<f64> = Mat::from_rows(vec![vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let ch = Cholesky::new(&a).unwrap();
        let x = ch.solve(&[8.0, 7.0]);
        assert!((x[0] - 1.25).abs() < 1e-12);
        assert!((x[1] - 1.5).abs() < 1e-12);
        let d = ch.inverse_diag();
        // inverse of [[4,2],[2,3]] = 1/8 [[3,-2],[-2,4]]
        assert!((d[0] - 3.0 / 8.0).abs() < 1e-12);
        assert!((d[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mgs_spans_and_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Mat::from_fn(30, 8, |_, _| rng.random::<f64>() - 0.5);
        let basis = mgs_basis(&a, 1e-12);
        assert_eq!(basis.kept.len(), 8);
        let qtq = basis.q.transpose().matmul(&basis.q);
        assert!(qtq.sub(&Mat::identity(8)).max_abs() < 1e-12);
        // q * r reproduces the input
        let qr = basis.q.matmul(&basis.r);
        assert!(qr.sub(&a).max_abs() < 1e-10);
    }

    #[test]
    fn mgs_drops_dependent_columns() {
        let a: Mat<f64> = Mat::from_rows(vec![
            vec![1.0, 2.0, 1.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        let basis = mgs_basis(&a, 1e-10);
        assert_eq!(basis.kept, vec![0, 2]);
    }

    #[test]
    fn power_iteration_matches_eigen() {
        let a = random_symmetric(12, 5);
        let g = a.matmul(&a.transpose()); // PSD
        let v = power_iteration_psd(&g, 1e-13, 2000).unwrap();
        let e = sym_eigen(&g).unwrap();
        let top = e.vectors.col(0);
        let cos = dot(&v, &top).abs();
        assert!(cos > 1.0 - 1e-8, "cosine {cos}");
    }
}
