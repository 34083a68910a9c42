//! Dense linear algebra used by the bandit policies and the imputation step.
//!
//! Everything here works on a small row-major [`Matrix`] type and plain
//! `&[f64]` vectors. The kernel is deliberately self-contained: closed-form
//! inverses of `I + x xᵀ`, ridge solves, a cyclic Jacobi eigensolver, a
//! one-sided Jacobi SVD and an ALS-WR factorizer for masked matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Relative column-orthogonality threshold below which a one-sided Jacobi rotation is skipped.
const JACOBI_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is singular")]
    Singular,
    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },
    #[error("regularization must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("{axis} {index} has no observed entries")]
    EmptySlice { axis: &'static str, index: usize },
    #[error("empty vector")]
    EmptyVector,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting bad lengths and non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        check_finite(&data, "matrix")?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LinalgError::DimensionMismatch("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    /// Outer product `x yᵀ`.
    pub fn outer(x: &[f64], y: &[f64]) -> Self {
        let mut m = Self::zeros(x.len(), y.len());
        for (i, &xi) in x.iter().enumerate() {
            for (j, &yj) in y.iter().enumerate() {
                m.data[i * y.len() + j] = xi * yj;
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (l, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(l), out_row);
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.cols != x.len() {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm_sq(&self.data).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest elementwise absolute difference; `inf` on a shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        match self.sub(other) {
            Ok(d) => d.max_abs(),
            Err(_) => f64::INFINITY,
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite(what))
    }
}

/// Closed-form `(I + x xᵀ)⁻¹ = I − x xᵀ / (1 + ‖x‖²)`.
pub fn rank_one_identity_inverse(x: &[f64]) -> Result<Matrix> {
    if x.is_empty() {
        return Err(LinalgError::EmptyVector);
    }
    check_finite(x, "context vector")?;
    let k = x.len();
    let denom = 1.0 + norm_sq(x);
    let mut inv = Matrix::identity(k);
    for i in 0..k {
        for j in 0..k {
            inv.data[i * k + j] -= x[i] * x[j] / denom;
        }
    }
    Ok(inv)
}

/// `xᵀ (I + x xᵀ)⁻¹ x`, which collapses to `‖x‖² / (1 + ‖x‖²)`.
pub fn fixed_quadratic_form(x: &[f64]) -> Result<f64> {
    check_finite(x, "context vector")?;
    Ok(quadratic_form_from_norm_sq(norm_sq(x)))
}

/// The same quantity when only `‖x‖²` is known.
#[inline]
pub fn quadratic_form_from_norm_sq(norm_sq: f64) -> f64 {
    norm_sq / (1.0 + norm_sq)
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch(
            "cholesky needs a square matrix".into(),
        ));
    }
    let n = a.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let diag = a.get(j, j) - norm_sq(&l.row(j)[..j]);
        if diag <= 0.0 || !diag.is_finite() {
            return Err(LinalgError::NotPositiveDefinite);
        }
        let ljj = diag.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let s = a.get(i, j) - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn solve_lower(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - dot(&l.row(i)[..i], &y[..i])) / l.get(i, i);
    }
    y
}

/// Solves `Lᵀ x = y` for lower-triangular `L`.
pub fn solve_lower_transposed(l: &Matrix, y: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut x = y.to_vec();
    for i in (0..n).rev() {
        x[i] /= l.get(i, i);
        let xi = x[i];
        for j in 0..i {
            x[j] -= l.get(i, j) * xi;
        }
    }
    x
}

/// Solves `A x = b` given the Cholesky factor of `A`.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    solve_lower_transposed(l, &solve_lower(l, b))
}

/// Dense Gauss–Jordan inverse with partial pivoting. `O(n³)`.
pub fn invert(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch(
            "inverse needs a square matrix".into(),
        ));
    }
    let n = a.rows;
    let mut m = a.clone();
    let mut swaps = Vec::with_capacity(n);
    let mut pivot_row = vec![0.0; n];
    let scale = a.max_abs().max(f64::MIN_POSITIVE);

    for col in 0..n {
        let (p, best) = (col..n)
            .map(|r| (r, m.get(r, col).abs()))
            .fold(
                (col, -1.0),
                |acc, cur| if cur.1 > acc.1 { cur } else { acc },
            );
        if best <= scale * 1e-14 {
            return Err(LinalgError::Singular);
        }
        if p != col {
            for j in 0..n {
                m.data.swap(p * n + j, col * n + j);
            }
        }
        swaps.push((col, p));

        let inv_piv = 1.0 / m.get(col, col);
        m.set(col, col, 1.0);
        for v in m.row_mut(col) {
            *v *= inv_piv;
        }
        pivot_row.copy_from_slice(m.row(col));

        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m.get(r, col);
            if f == 0.0 {
                continue;
            }
            m.set(r, col, 0.0);
            axpy(-f, &pivot_row, m.row_mut(r));
        }
    }

    // Undo the row interchanges as column interchanges, in reverse order.
    for &(col, p) in swaps.iter().rev() {
        if p != col {
            for r in 0..n {
                m.data.swap(r * n + p, r * n + col);
            }
        }
    }
    Ok(m)
}

/// Ridge estimate `argmin ‖Dθ − b‖² + λ‖θ‖²`, i.e. `(DᵀD + λI)⁻¹ Dᵀb`.
pub fn ridge_solve(design: &Matrix, targets: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if targets.len() != design.rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "design has {} rows, targets have {}",
            design.rows,
            targets.len()
        )));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(LinalgError::NonPositiveLambda(lambda));
    }
    check_finite(&design.data, "design matrix")?;
    check_finite(targets, "targets")?;

    let k = design.cols;
    let mut gram = Matrix::zeros(k, k);
    let mut rhs = vec![0.0; k];
    for (t, &target) in targets.iter().enumerate() {
        let row = design.row(t);
        for (i, &ri) in row.iter().enumerate() {
            if ri == 0.0 {
                continue;
            }
            axpy(ri, row, gram.row_mut(i));
            rhs[i] += ri * target;
        }
    }
    for i in 0..k {
        gram.data[i * k + i] += lambda;
    }
    let l = cholesky(&gram)?;
    Ok(cholesky_solve(&l, &rhs))
}

/// Eigenpairs of a symmetric matrix. `values` ascend; column `i` of `vectors` pairs with `values[i]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch(
            "eigen needs a square matrix".into(),
        ));
    }
    check_finite(&a.data, "matrix")?;
    let n = a.rows;
    let asym = a.max_asymmetry();
    if asym > 1e-9 * a.max_abs().max(1.0) {
        return Err(LinalgError::NotSymmetric(asym));
    }

    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let total = a.frobenius_norm();
    let max_sweeps = 10 * n.max(1);

    for _ in 0..max_sweeps {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(i, i).total_cmp(&m.get(j, j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, dst, v.get(k, src));
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

pub fn min_eigenvalue(a: &Matrix) -> Result<f64> {
    let eig = symmetric_eigen(a)?;
    Ok(eig.values.first().copied().unwrap_or(0.0))
}

/// Loewner order check `A ⪯ B`: the smallest eigenvalue of `B − A` is at least `−tol`.
pub fn psd_order_holds(a: &Matrix, b: &Matrix, tol: f64) -> Result<bool> {
    if !a.is_square() || a.rows != b.rows || a.cols != b.cols {
        return Err(LinalgError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let sym_tol = tol.max(1e-9 * a.max_abs().max(b.max_abs()).max(1.0));
    for m in [a, b] {
        let asym = m.max_asymmetry();
        if asym > sym_tol {
            return Err(LinalgError::NotSymmetric(asym));
        }
    }
    let diff = b.sub(a)?;
    let sym = diff.add(&diff.transpose())?.scale(0.5);
    Ok(min_eigenvalue(&sym)? >= -tol)
}

/// Rank-`r` singular value decomposition `M ≈ U diag(S) Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let (p, q, r) = (self.u.rows, self.v.rows, self.rank());
        let mut out = Matrix::zeros(p, q);
        for i in 0..p {
            let row = out.row_mut(i);
            for l in 0..r {
                let w = self.u.get(i, l) * self.singular_values[l];
                if w == 0.0 {
                    continue;
                }
                for (j, o) in row.iter_mut().enumerate() {
                    *o += w * self.v.get(j, l);
                }
            }
        }
        out
    }
}

/// Truncated SVD via one-sided (Hestenes) Jacobi rotations, which diagonalize
/// the Gram matrix `MᵀM` implicitly without forming it.
pub fn truncated_svd(m: &Matrix, rank: usize) -> Result<Svd> {
    let max = m.rows.min(m.cols);
    if rank == 0 || rank > max {
        return Err(LinalgError::RankOutOfRange { rank, max });
    }
    check_finite(&m.data, "matrix")?;

    if m.rows < m.cols {
        let t = truncated_svd(&m.transpose(), rank)?;
        return Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }

    let (p, q) = (m.rows, m.cols);
    // Column-major working copy: cols[j] is column j of M.
    let mut cols: Vec<Vec<f64>> = (0..q).map(|j| m.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..q)
        .map(|j| {
            let mut e = vec![0.0; q];
            e[j] = 1.0;
            e
        })
        .collect();

    let scale = m.frobenius_norm();
    let negligible = (scale * f64::EPSILON).powi(2);
    for _ in 0..(10 * q.max(1)) {
        let mut rotated = false;
        for i in 0..q {
            for j in (i + 1)..q {
                let alpha = norm_sq(&cols[i]);
                let beta = norm_sq(&cols[j]);
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma = dot(&cols[i], &cols[j]);
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, i, j, c, s);
                rotate_pair(&mut vcols, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = cols.iter().map(|c| norm_sq(c).sqrt()).collect();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let sigma_max = order.first().map_or(0.0, |&i| sigma[i]);
    let cutoff = sigma_max * f64::EPSILON * (p.max(q) as f64) * 8.0;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(rank);
    let mut s_out = Vec::with_capacity(rank);
    let mut v_out: Vec<Vec<f64>> = Vec::with_capacity(rank);
    for &idx in order.iter().take(rank) {
        let s = sigma[idx];
        if s > cutoff && s > 0.0 {
            u_cols.push(cols[idx].iter().map(|x| x / s).collect());
            s_out.push(s);
        } else {
            sigma[idx] = 0.0;
            u_cols.push(orthonormal_complement(&u_cols, p));
            s_out.push(0.0);
        }
        v_out.push(vcols[idx].clone());
    }

    let mut u = Matrix::zeros(p, rank);
    let mut v = Matrix::zeros(q, rank);
    for l in 0..rank {
        for i in 0..p {
            u.set(i, l, u_cols[l][i]);
        }
        for j in 0..q {
            v.set(j, l, v_out[l][j]);
        }
    }
    Ok(Svd {
        u,
        singular_values: s_out,
        v,
    })
}

fn rotate_pair(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(j);
    let (ci, cj) = (&mut left[i], &mut right[0]);
    for (a, b) in ci.iter_mut().zip(cj.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// A unit vector orthogonal to every vector in `basis` (Gram–Schmidt on the standard basis).
fn orthonormal_complement(basis: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut best: Option<Vec<f64>> = None;
    let mut best_norm = 0.0;
    for e in 0..dim {
        let mut cand = vec![0.0; dim];
        cand[e] = 1.0;
        for _ in 0..2 {
            for b in basis {
                let proj = dot(&cand, b);
                axpy(-proj, b, &mut cand);
            }
        }
        let n = norm_sq(&cand).sqrt();
        if n > 0.5 {
            return cand.into_iter().map(|x| x / n).collect();
        }
        if n > best_norm {
            best_norm = n;
            best = Some(cand);
        }
    }
    let cand = best.unwrap_or_else(|| vec![0.0; dim]);
    cand.into_iter()
        .map(|x| x / best_norm.max(f64::MIN_POSITIVE))
        .collect()
}

/// Factors from [`als_wr_factorize`] with the objective after every full sweep.
#[derive(Debug, Clone)]
pub struct AlsFactors {
    /// `p × r` row factors.
    pub u: Matrix,
    /// `q × r` column factors.
    pub v: Matrix,
    pub objective: Vec<f64>,
}

impl AlsFactors {
    pub fn reconstruct(&self) -> Matrix {
        self.u
            .matmul(&self.v.transpose())
            .expect("factor shapes agree by construction")
    }
}

/// Alternating least squares with weighted-λ regularization over the observed
/// entries of `m`. The objective is
/// `Σ_obs (m_ij − u_i·v_j)² + λ (Σ_i n_i ‖u_i‖² + Σ_j n_j ‖v_j‖²)`.
///
/// The first factor of every column is seeded with the column's observed mean,
/// the rest uniformly in `[−0.5/r, 0.5/r]`.
pub fn als_wr_factorize(
    m: &Matrix,
    mask: &[bool],
    rank: usize,
    lambda: f64,
    iters: usize,
    seed: u64,
) -> Result<AlsFactors> {
    let (p, q) = (m.rows, m.cols);
    if mask.len() != p * q {
        return Err(LinalgError::DimensionMismatch(format!(
            "mask has {} entries for a {p}x{q} matrix",
            mask.len()
        )));
    }
    if rank == 0 {
        return Err(LinalgError::RankOutOfRange {
            rank,
            max: p.min(q),
        });
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(LinalgError::NonPositiveLambda(lambda));
    }
    check_finite(&m.data, "matrix")?;

    let row_obs: Vec<Vec<usize>> = (0..p)
        .map(|i| (0..q).filter(|&j| mask[i * q + j]).collect())
        .collect();
    let col_obs: Vec<Vec<usize>> = (0..q)
        .map(|j| (0..p).filter(|&i| mask[i * q + j]).collect())
        .collect();
    if let Some(i) = row_obs.iter().position(Vec::is_empty) {
        return Err(LinalgError::EmptySlice {
            axis: "row",
            index: i,
        });
    }
    if let Some(j) = col_obs.iter().position(Vec::is_empty) {
        return Err(LinalgError::EmptySlice {
            axis: "column",
            index: j,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half_width = 0.5 / rank as f64;
    let mut v = Matrix::zeros(q, rank);
    for j in 0..q {
        let mean = col_obs[j].iter().map(|&i| m.get(i, j)).sum::<f64>() / col_obs[j].len() as f64;
        v.set(j, 0, mean);
        for l in 1..rank {
            v.set(j, l, rng.random_range(-half_width..=half_width));
        }
    }
    let mut u = Matrix::zeros(p, rank);
    let mt = m.transpose();

    let mut objective = Vec::with_capacity(iters);
    for _ in 0..iters {
        solve_side(&mut u, &v, m, &row_obs, lambda)?;
        solve_side(&mut v, &u, &mt, &col_obs, lambda)?;
        objective.push(als_objective(m, &row_obs, &u, &v, lambda));
    }
    Ok(AlsFactors { u, v, objective })
}

/// Exact ridge minimization of every row of `target` with `fixed` held constant.
fn solve_side(
    target: &mut Matrix,
    fixed: &Matrix,
    values: &Matrix,
    observed: &[Vec<usize>],
    lambda: f64,
) -> Result<()> {
    let r = fixed.cols;
    for (i, obs) in observed.iter().enumerate() {
        let mut gram = Matrix::zeros(r, r);
        let mut rhs = vec![0.0; r];
        for &j in obs {
            let f = fixed.row(j);
            for a in 0..r {
                axpy(f[a], f, gram.row_mut(a));
            }
            axpy(values.get(i, j), f, &mut rhs);
        }
        let reg = lambda * obs.len() as f64;
        for a in 0..r {
            gram.data[a * r + a] += reg;
        }
        let l = cholesky(&gram)?;
        target.row_mut(i).copy_from_slice(&cholesky_solve(&l, &rhs));
    }
    Ok(())
}

fn als_objective(m: &Matrix, row_obs: &[Vec<usize>], u: &Matrix, v: &Matrix, lambda: f64) -> f64 {
    let mut loss = 0.0;
    let mut col_counts = vec![0usize; v.rows];
    for (i, obs) in row_obs.iter().enumerate() {
        for &j in obs {
            let e = m.get(i, j) - dot(u.row(i), v.row(j));
            loss += e * e;
            col_counts[j] += 1;
        }
        loss += lambda * obs.len() as f64 * norm_sq(u.row(i));
    }
    for (j, &n) in col_counts.iter().enumerate() {
        loss += lambda * n as f64 * norm_sq(v.row(j));
    }
    loss
}
