//! Small dense/sparse linear-algebra kernels used by the solvers.
//!
//! The mesh operators have exactly one diagonal entry plus three neighbor
//! entries per row, so a purpose-built CSR type plus Jacobi-preconditioned
//! Krylov solvers beats a general sparse library here.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// 3-vector in ambient ℝ³.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        Vec3::new(self.x / n, self.y / n, self.z / n)
    }

    /// Component of `self` tangential to the unit direction `m`,
    /// i.e. `(m × self) × m = self − (m·self) m`.
    #[inline]
    pub fn tangential_at(self, m: Vec3) -> Vec3 {
        self - m * self.dot(m)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

/// Compressed sparse row matrix with a fixed sparsity pattern.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Builds a CSR matrix from per-row (column, value) lists. Entries within a
    /// row are sorted by column; duplicate columns are summed.
    pub fn from_rows(rows: &[Vec<(usize, f64)>]) -> Csr {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows {
            let mut entries = row.clone();
            entries.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in entries {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Csr { n, row_ptr, col_idx, values }
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    /// y = Aᵀ x
    pub fn mul_vec_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        y.fill(0.0);
        for i in 0..self.n {
            let xi = x[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.values[k] * xi;
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    d[i] = self.values[k];
                }
            }
        }
        d
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.values[self.row_ptr[i]..self.row_ptr[i + 1]].iter().sum())
            .collect()
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Matrix-vector action abstraction so solvers work with either a plain CSR
/// matrix or a composed operator.
pub trait LinearOp {
    fn size(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOp for Csr {
    fn size(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec(x, y);
    }
}

/// Aᵀ-view over a CSR matrix.
pub struct Transposed<'a>(pub &'a Csr);

impl LinearOp for Transposed<'_> {
    fn size(&self) -> usize {
        self.0.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.mul_vec_transpose(x, y);
    }
}

/// Jacobi-preconditioned BiCGSTAB for general (nonsymmetric) systems.
///
/// Returns when ‖b − Ax‖ ≤ tol·‖b‖. `inv_diag` is the reciprocal diagonal of A.
pub fn bicgstab(
    op: &dyn LinearOp,
    b: &[f64],
    x: &mut [f64],
    inv_diag: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats, String> {
    let n = op.size();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(SolveStats { iterations: 0, rel_residual: 0.0 });
    }

    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];

    let mut resid = norm2(&r);
    if resid <= tol * bnorm {
        return Ok(SolveStats { iterations: 0, rel_residual: resid / bnorm });
    }

    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            return Err(format!("bicgstab breakdown (rho = 0) at iteration {it}"));
        }
        if it == 1 {
            p.copy_from_slice(&r);
        } else {
            let beta = (rho_new / rho) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }
        rho = rho_new;
        for i in 0..n {
            phat[i] = p[i] * inv_diag[i];
        }
        op.apply(&phat, &mut v);
        let denom = dot(&r0, &v);
        if denom == 0.0 {
            return Err(format!("bicgstab breakdown (r0·v = 0) at iteration {it}"));
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= tol * bnorm {
            axpy(alpha, &phat, x);
            return Ok(SolveStats { iterations: it, rel_residual: norm2(&s) / bnorm });
        }
        for i in 0..n {
            shat[i] = s[i] * inv_diag[i];
        }
        op.apply(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(format!("bicgstab breakdown (t = 0) at iteration {it}"));
        }
        omega = dot(&t, &s) / tt;
        if omega == 0.0 {
            return Err(format!("bicgstab stagnation (omega = 0) at iteration {it}"));
        }
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        resid = norm2(&r);
        if resid <= tol * bnorm {
            return Ok(SolveStats { iterations: it, rel_residual: resid / bnorm });
        }
    }
    Err(format!(
        "bicgstab did not converge in {max_iter} iterations (relative residual {:.3e})",
        resid / bnorm
    ))
}

/// Conjugate gradients for symmetric positive definite systems, with an
/// optional weighted inner product `⟨x,y⟩ = Σ w_i x_i y_i` (pass `None` for
/// the Euclidean one). The operator must be self-adjoint in that product.
pub fn conjugate_gradient(
    op: &dyn LinearOp,
    b: &[f64],
    x: &mut [f64],
    weights: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats, String> {
    let n = op.size();
    let wdot = |a: &[f64], c: &[f64]| -> f64 {
        match weights {
            Some(w) => a.iter().zip(c).zip(w).map(|((x, y), wi)| wi * x * y).sum(),
            None => dot(a, c),
        }
    };
    let bnorm = wdot(b, b).sqrt();
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(SolveStats { iterations: 0, rel_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rs = wdot(&r, &r);
    if rs.sqrt() <= tol * bnorm {
        return Ok(SolveStats { iterations: 0, rel_residual: rs.sqrt() / bnorm });
    }
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let pap = wdot(&p, &ap);
        if pap <= 0.0 {
            return Err(format!("cg: operator not positive definite (pᵀAp = {pap:.3e})"));
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = wdot(&r, &r);
        if rs_new.sqrt() <= tol * bnorm {
            return Ok(SolveStats { iterations: it, rel_residual: rs_new.sqrt() / bnorm });
        }
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(format!(
        "cg did not converge in {max_iter} iterations (relative residual {:.3e})",
        rs.sqrt() / bnorm
    ))
}

/// Thomas algorithm for a tridiagonal system. `lower[0]` and
/// `upper[n-1]` are ignored. Fails on a zero pivot.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>, String> {
    let n = diag.len();
    assert_eq!(lower.len(), n);
    assert_eq!(upper.len(), n);
    assert_eq!(rhs.len(), n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 {
        return Err("tridiagonal solve: zero pivot at row 0".into());
    }
    c[0] = upper[0] / pivot;
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * c[i - 1];
        if pivot == 0.0 {
            return Err(format!("tridiagonal solve: zero pivot at row {i}"));
        }
        c[i] = upper[i] / pivot;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / pivot;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}
