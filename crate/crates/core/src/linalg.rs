//! Dense real linear algebra: the small-matrix kernels everything else builds on.
//!
//! All matrices here are modest (n below a few hundred), so the eigensolver is
//! a cyclic Jacobi sweep and the SVD is derived from the Gram matrix. No
//! attempt is made at cache blocking or large-scale performance.

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dims must be >= 1");
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        let mut m = Matrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            m.data[i * c..(i + 1) * c].copy_from_slice(row);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &e) in entries.iter().enumerate() {
            m.data[i * n + i] = e;
        }
        m
    }

    pub fn column_vector(entries: &[f64]) -> Self {
        let mut m = Matrix::zeros(entries.len(), 1);
        m.data.copy_from_slice(entries);
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dims {}x{} * {}x{}", self.rows, self.cols, other.rows, other.cols);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for j in 0..other.cols {
                    out_row[j] += a * orow[j];
                }
            }
        }
        out
    }

    /// self^T * other without forming the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "t_matmul dims");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for j in 0..other.cols {
                    out_row[j] += a * orow[j];
                }
            }
        }
        out
    }

    /// self * other^T.
    pub fn matmul_t(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_t dims");
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let arow = &self.data[i * self.cols..(i + 1) * self.cols];
            for j in 0..other.rows {
                let brow = &other.data[j * other.cols..(j + 1) * other.cols];
                let mut s = 0.0;
                for k in 0..self.cols {
                    s += arow[k] * brow[k];
                }
                out.data[i * other.rows + j] = s;
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec dims");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut s = 0.0;
            for k in 0..self.cols {
                s += row[k] * v[k];
            }
            out[i] = s;
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, c: f64) -> Matrix {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= c;
        }
        out
    }

    pub fn add_scaled_identity(&self, c: f64) -> Matrix {
        assert!(self.is_square());
        let mut out = self.clone();
        for i in 0..self.rows {
            out.data[i * self.cols + i] += c;
        }
        out
    }

    pub fn trace(&self) -> f64 {
        assert!(self.is_square());
        (0..self.rows).map(|i| self.data[i * self.cols + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn symmetrize(&self) -> Matrix {
        assert!(self.is_square());
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                out.data[i * n + j] = v;
                out.data[j * n + i] = v;
            }
        }
        out
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    /// Keep the columns listed in `idx`, in order.
    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            for (jj, &j) in idx.iter().enumerate() {
                out.data[i * idx.len() + jj] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Embed `block` with its top-left corner at (r0, c0).
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Matrix) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for i in 0..block.rows {
            for j in 0..block.cols {
                self.data[(r0 + i) * self.cols + c0 + j] = block.data[i * block.cols + j];
            }
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out.data[i * cols + j] = self.data[(r0 + i) * self.cols + c0 + j];
            }
        }
        out
    }

    pub fn hstack(left: &Matrix, right: &Matrix) -> Matrix {
        assert_eq!(left.rows, right.rows);
        let mut out = Matrix::zeros(left.rows, left.cols + right.cols);
        out.set_block(0, 0, left);
        out.set_block(0, left.cols, right);
        out
    }

    pub fn vstack(top: &Matrix, bottom: &Matrix) -> Matrix {
        assert_eq!(top.cols, bottom.cols);
        let mut out = Matrix::zeros(top.rows + bottom.rows, top.cols);
        out.set_block(0, 0, top);
        out.set_block(top.rows, 0, bottom);
        out
    }

    pub fn blkdiag(blocks: &[&Matrix]) -> Matrix {
        let rows: usize = blocks.iter().map(|b| b.rows).sum();
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let (mut r, mut c) = (0, 0);
        for b in blocks {
            out.set_block(r, c, b);
            r += b.rows;
            c += b.cols;
        }
        out
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Vec<f64>,
    /// Column i is the eigenvector paired with `eigenvalues[i]`.
    pub eigenvectors: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// The input is symmetrized via (m + m^T)/2 before iterating; non-square input
/// is a dimension error.
pub fn sym_eig(m: &Matrix) -> Result<SymEig> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "sym_eig needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let mut a = m.symmetrize();
    let mut v = Matrix::identity(n);
    let threshold = 1e-12 * a.frobenius_norm();

    let off = |a: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let x = a.get(i, j);
                s += 2.0 * x * x;
            }
        }
        s.sqrt()
    };

    let mut converged = off(&a) <= threshold;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= threshold / (n as f64 * n as f64).max(1.0) * 1e-4 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Rotate rows/cols p and q of a.
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
        converged = off(&a) <= threshold;
    }
    if !converged {
        return Err(Error::Solver(format!(
            "Jacobi eigensolver did not converge in {} sweeps, off-diagonal residual {:.3e}",
            JACOBI_MAX_SWEEPS,
            off(&a)
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let eigenvectors = v.select_columns(&order);
    Ok(SymEig { eigenvalues, eigenvectors })
}

/// Frobenius-nearest PSD matrix: clamp negative eigenvalues to zero.
pub fn psd_project(m: &Matrix) -> Result<Matrix> {
    let eig = sym_eig(m)?;
    let n = m.rows();
    let u = &eig.eigenvectors;
    let mut out = Matrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        for i in 0..n {
            let ui = u.get(i, k) * lam;
            if ui == 0.0 {
                continue;
            }
            for j in 0..n {
                let v = out.get(i, j) + ui * u.get(j, k);
                out.set(i, j, v);
            }
        }
    }
    Ok(out.symmetrize())
}

/// Thin SVD of a wide matrix (M <= L): a = U diag(sigma) V^T with U M x M,
/// V L x M, singular values descending.
pub fn svd_thin(a: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let (m, l) = (a.rows(), a.cols());
    if m > l {
        return Err(Error::Dimension(format!("svd_thin needs rows <= cols, got {}x{}", m, l)));
    }
    let gram = a.matmul_t(a); // a a^T, M x M
    let eig = sym_eig(&gram)?;
    let sigma: Vec<f64> = eig.eigenvalues.iter().map(|&x| x.max(0.0).sqrt()).collect();
    let u = eig.eigenvectors.clone();
    // V = a^T U diag(1/sigma); columns with vanishing sigma completed by
    // Gram-Schmidt against the ones already placed.
    let at_u = a.t_matmul(&u); // L x M
    let tol = sigma.first().copied().unwrap_or(0.0) * 1e-12;
    let mut v = Matrix::zeros(l, m);
    let mut placed: Vec<Vec<f64>> = Vec::new();
    for k in 0..m {
        let mut col: Vec<f64> = if sigma[k] > tol {
            (0..l).map(|i| at_u.get(i, k) / sigma[k]).collect()
        } else {
            vec![0.0; l]
        };
        // Re-orthogonalize (and fill null columns with fresh directions).
        let mut norm = 0.0;
        for attempt in 0..(l + 1) {
            if sigma[k] <= tol {
                col = vec![0.0; l];
                col[(k + attempt) % l] = 1.0;
            }
            for p in &placed {
                let dot: f64 = col.iter().zip(p).map(|(x, y)| x * y).sum();
                for (x, y) in col.iter_mut().zip(p) {
                    *x -= dot * y;
                }
            }
            norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 || sigma[k] > tol {
                break;
            }
        }
        if norm <= 1e-14 {
            return Err(Error::Solver("svd_thin could not complete orthonormal basis".into()));
        }
        for x in col.iter_mut() {
            *x /= norm;
        }
        for i in 0..l {
            v.set(i, k, col[i]);
        }
        placed.push(col);
    }
    Ok((u, sigma, v))
}

/// Cholesky factor (lower triangular) of an SPD matrix.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::Dimension("cholesky needs a square matrix".into()));
    }
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Definiteness(format!(
                        "non-positive pivot {:.3e} at index {}",
                        s, i
                    )));
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solve m x = b for SPD m via Cholesky.
pub fn solve_spd(m: &Matrix, b: &Matrix) -> Result<Matrix> {
    if m.rows() != b.rows() {
        return Err(Error::Dimension(format!(
            "solve_spd: lhs is {}x{}, rhs has {} rows",
            m.rows(),
            m.cols(),
            b.rows()
        )));
    }
    let l = cholesky(m)?;
    let n = m.rows();
    let k = b.cols();
    let mut x = b.clone();
    // Forward substitution L y = b.
    for col in 0..k {
        for i in 0..n {
            let mut s = x.get(i, col);
            for j in 0..i {
                s -= l.get(i, j) * x.get(j, col);
            }
            x.set(i, col, s / l.get(i, i));
        }
        // Back substitution L^T x = y.
        for i in (0..n).rev() {
            let mut s = x.get(i, col);
            for j in (i + 1)..n {
                s -= l.get(j, i) * x.get(j, col);
            }
            x.set(i, col, s / l.get(i, i));
        }
    }
    Ok(x)
}

/// Inverse of an SPD matrix.
pub fn inv_spd(m: &Matrix) -> Result<Matrix> {
    solve_spd(m, &Matrix::identity(m.rows()))
}

/// Moore-Penrose pseudo-inverse via the thin SVD.
pub fn pinv(a: &Matrix) -> Result<Matrix> {
    let (m, l) = (a.rows(), a.cols());
    if m > l {
        return Ok(pinv(&a.transpose())?.transpose());
    }
    let (u, sigma, v) = svd_thin(a)?;
    let smax = sigma.first().copied().unwrap_or(0.0);
    let tol = smax * (m.max(l) as f64) * f64::EPSILON;
    // pinv = V diag(1/sigma_+) U^T, L x M
    let mut out = Matrix::zeros(l, m);
    for k in 0..m {
        if sigma[k] <= tol {
            continue;
        }
        let inv_s = 1.0 / sigma[k];
        for i in 0..l {
            let vi = v.get(i, k) * inv_s;
            for j in 0..m {
                let val = out.get(i, j) + vi * u.get(j, k);
                out.set(i, j, val);
            }
        }
    }
    Ok(out)
}

/// Haar-ish random orthogonal matrix via modified Gram-Schmidt on a
/// Gaussian matrix (re-drawing on near-dependence, which is measure zero).
pub fn random_orthogonal(n: usize, stream: &mut crate::rng::Stream) -> Matrix {
    loop {
        let mut q = Matrix::from_fn(n, n, |_, _| stream.normal());
        let mut ok = true;
        for j in 0..n {
            let mut col = q.column(j);
            for prev in 0..j {
                let dot: f64 = (0..n).map(|i| q.get(i, prev) * col[i]).sum();
                for i in 0..n {
                    col[i] -= dot * q.get(i, prev);
                }
            }
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for i in 0..n {
                q.set(i, j, col[i] / norm);
            }
        }
        if ok {
            return q;
        }
    }
}

/// Symmetric inverse square root of an SPD matrix.
pub fn inv_sqrt_spd(m: &Matrix) -> Result<Matrix> {
    let eig = sym_eig(m)?;
    let n = m.rows();
    let u = &eig.eigenvectors;
    let mut out = Matrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= 0.0 {
            return Err(Error::Definiteness(format!("eigenvalue {:.3e} in inv_sqrt_spd", lam)));
        }
        let w = 1.0 / lam.sqrt();
        for i in 0..n {
            let ui = u.get(i, k) * w;
            for j in 0..n {
                let v = out.get(i, j) + ui * u.get(j, k);
                out.set(i, j, v);
            }
        }
    }
    Ok(out.symmetrize())
}
