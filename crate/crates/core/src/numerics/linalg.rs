use crate::error::{Error, Result};

/// Dense row-major matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "matrix entry ({}, {}) is not finite",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix whose columns are the given equal-length vectors.
    pub fn from_columns(n_rows: usize, columns: &[&[f64]]) -> Result<Self> {
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::Dimension("columns differ in length".into()));
        }
        let cols = columns.len();
        let mut data = Vec::with_capacity(n_rows * cols);
        for i in 0..n_rows {
            data.extend(columns.iter().map(|c| c[i]));
        }
        Self::new(n_rows, cols, data)
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// `self * v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "vector length must match column count");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_raw(idx.len(), self.cols, data)
    }

    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(idx.iter().map(|&j| r[j]));
        }
        Matrix::from_raw(self.rows, idx.len(), data)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.rows).all(|i| ((i + 1)..self.cols).all(|j| self.get(i, j) == 0.0))
    }
}

/// Lower Cholesky factor `L` with `L * L^T = sigma`.
pub fn cholesky(sigma: &Matrix) -> Result<Matrix> {
    factor(sigma, None)
}

/// Cholesky factor of a positive semidefinite matrix. Pivots within `tol` of
/// zero get a zero column, so `L * L^T` still reproduces `sigma`; a pivot below
/// `-tol` means the matrix is indefinite.
pub fn cholesky_semidefinite(sigma: &Matrix, tol: f64) -> Result<Matrix> {
    factor(sigma, Some(tol))
}

fn factor(sigma: &Matrix, psd_tol: Option<f64>) -> Result<Matrix> {
    let n = sigma.rows();
    if sigma.cols() != n {
        return Err(Error::Dimension(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            sigma.cols()
        )));
    }
    for i in 0..n {
        for j in 0..i {
            if (sigma.get(i, j) - sigma.get(j, i)).abs() > 1e-12 {
                return Err(Error::Domain(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = sigma.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        match psd_tol {
            Some(tol) if d.abs() <= tol => {
                // Remaining entries of this column must vanish too.
                for i in (j + 1)..n {
                    let mut s = sigma.get(i, j);
                    for k in 0..j {
                        s -= l.get(i, k) * l.get(j, k);
                    }
                    if s.abs() > tol.sqrt() {
                        return Err(Error::NotPositiveDefinite { pivot: j });
                    }
                }
                continue;
            }
            _ if d <= 0.0 => return Err(Error::NotPositiveDefinite { pivot: j }),
            _ => {}
        }
        let djj = d.sqrt();
        l.set(j, j, djj);
        for i in (j + 1)..n {
            let mut s = sigma.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / djj);
        }
    }
    Ok(l)
}

/// Solves `L L^T x = b` given a lower Cholesky factor.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l.get(i, k) * y[k];
        }
        y[i] /= l.get(i, i);
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l.get(k, i) * y[k];
        }
        y[i] /= l.get(i, i);
    }
    y
}

/// Outcome of a Householder least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub residual_sum_squares: f64,
    /// `|R_jj| / ||x_j||` for each column: 1 means orthogonal to the earlier
    /// columns, 0 means an exact linear combination of them.
    pub relative_diagonal: Vec<f64>,
}

/// Least squares via Householder QR. Columns whose relative diagonal falls
/// below `rank_tol` are reported as dependent (by index).
pub fn qr_least_squares(
    x: &Matrix,
    y: &[f64],
    rank_tol: f64,
) -> std::result::Result<LeastSquares, Vec<usize>> {
    let (n, p) = (x.rows(), x.cols());
    assert_eq!(y.len(), n);
    // Column-major working copy.
    let mut a: Vec<Vec<f64>> = (0..p).map(|j| x.column(j)).collect();
    let norms: Vec<f64> = a.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut b = y.to_vec();
    let mut rdiag = vec![0.0; p];
    let mut dependent = Vec::new();

    for k in 0..p {
        let alpha_norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let rel = if norms[k] > 0.0 { alpha_norm / norms[k] } else { 0.0 };
        if rel <= rank_tol {
            dependent.push(k);
            continue;
        }
        let alpha = if a[k][k] > 0.0 { -alpha_norm } else { alpha_norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        rdiag[k] = alpha;
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(k + 1) {
                let dot: f64 = v.iter().zip(&col[k..]).map(|(a, b)| a * b).sum();
                let f = 2.0 * dot / vnorm2;
                for (c, vi) in col[k..].iter_mut().zip(&v) {
                    *c -= f * vi;
                }
            }
            let dot: f64 = v.iter().zip(&b[k..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in b[k..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
        a[k][k] = alpha;
    }
    if !dependent.is_empty() {
        return Err(dependent);
    }
    let mut coef = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = b[i];
        for j in (i + 1)..p {
            s -= a[j][i] * coef[j];
        }
        coef[i] = s / rdiag[i];
    }
    let rss = b[p..].iter().map(|v| v * v).sum();
    let relative_diagonal = rdiag
        .iter()
        .zip(&norms)
        .map(|(r, nm)| if *nm > 0.0 { r.abs() / nm } else { 0.0 })
        .collect();
    Ok(LeastSquares {
        coefficients: coef,
        residual_sum_squares: rss,
        relative_diagonal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_identity() {
        let l = cholesky(&Matrix::identity(3)).unwrap();
        assert_eq!(l, Matrix::identity(3));
    }

    #[test]
    fn cholesky_two_by_two() {
        let s = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let l = cholesky(&s).unwrap();
        // Hand factorization: l21 = 0.5, l22 = sqrt(1 - 0.25).
        assert!((l.get(1, 0) - 0.5).abs() < 1e-12);
        assert!((l.get(1, 1) - 0.866025).abs() < 1e-6);
        assert_eq!(l.get(0, 1), 0.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let s = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        match cholesky(&s) {
            Err(Error::NotPositiveDefinite { pivot }) => assert_eq!(pivot, 1),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn cholesky_rejects_asymmetric() {
        let s = Matrix::from_rows(&[vec![1.0, 0.2], vec![0.3, 1.0]]).unwrap();
        assert!(cholesky(&s).is_err());
    }

    #[test]
    fn matrix_rejects_non_finite_and_bad_shape() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn qr_recovers_exact_line() {
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
            vec![1.0, 3.0],
        ])
        .unwrap();
        let y = [1.0, 3.0, 5.0, 7.0];
        let ls = qr_least_squares(&x, &y, 1e-10).unwrap();
        assert!((ls.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((ls.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(ls.residual_sum_squares < 1e-20);
    }

    #[test]
    fn qr_flags_dependent_column() {
        let x = Matrix::from_rows(&[
            vec![1.0, 1.0, 3.0],
            vec![1.0, 2.0, 6.0],
            vec![1.0, 4.0, 12.0],
            vec![1.0, 5.0, 15.0],
        ])
        .unwrap();
        let err = qr_least_squares(&x, &[1.0, 2.0, 3.0, 4.0], 1e-10).unwrap_err();
        assert_eq!(err, vec![2]);
    }

    #[test]
    fn semidefinite_factor() {
        // Rank-2 matrix: v v^T + w w^T with v = (1, 1, 0), w = (0, 1, 1).
        let s = Matrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![1.0, 2.0, 1.0], vec![0.0, 1.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&s), Err(Error::NotPositiveDefinite { pivot: 2 })));
        let l = cholesky_semidefinite(&s, 1e-10).unwrap();
        assert!(l.matmul(&l.transpose()).unwrap().max_abs_diff(&s) < 1e-12);
        assert_eq!(l.get(2, 2), 0.0);
        let bad = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(cholesky_semidefinite(&bad, 1e-10).is_err());
    }
}
