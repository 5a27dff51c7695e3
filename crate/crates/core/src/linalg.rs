//! Small dense/iterative linear algebra kit: vector helpers, conjugate
//! gradients, cyclic Jacobi eigendecomposition, power iteration.

use crate::error::{Error, Result};
use crate::grid::SplitMix64;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `y += s * x`
pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Deterministic pseudo-random vector in `[-1, 1)`.
pub fn random_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = SplitMix64::new(seed);
    (0..n).map(|_| 2.0 * rng.next_f64() - 1.0).collect()
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iters: usize,
    /// Final relative residual `|b - Ax| / |b|`.
    pub residual: f64,
}

/// Conjugate gradients for a symmetric positive definite operator. Stops on
/// relative residual `<= tol`.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> Result<CgOutcome> {
    let out = conjugate_gradient_capped(apply, b, x0, tol, max_iters)?;
    if out.residual <= tol {
        Ok(out)
    } else {
        Err(Error::ConvergenceFailure {
            what: "conjugate gradient",
            iters: out.iters,
            residual: out.residual,
        })
    }
}

/// Like [`conjugate_gradient`] but returns the last iterate when the
/// iteration cap is reached; the caller inspects `residual`.
pub fn conjugate_gradient_capped(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> Result<CgOutcome> {
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; b.len()],
            iters: 0,
            residual: 0.0,
        });
    }
    let mut x = x0.map_or_else(|| vec![0.0; b.len()], <[f64]>::to_vec);
    let mut r = if x0.is_some() { sub(b, &apply(&x)) } else { b.to_vec() };
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for k in 0..max_iters {
        let rel = rr.sqrt() / bnorm;
        if rel <= tol {
            return Ok(CgOutcome { x, iters: k, residual: rel });
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::InnerSolveFailure(format!(
                "operator not positive definite in CG (p'Ap = {pap:e})"
            )));
        }
        let alpha = rr / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    Ok(CgOutcome {
        x,
        iters: max_iters,
        residual: rr.sqrt() / bnorm,
    })
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by
/// power iteration from a fixed pseudo-random start.
pub fn power_iteration(apply: impl Fn(&[f64]) -> Vec<f64>, n: usize, iters: usize) -> f64 {
    let mut v = random_vector(n, 0x5EED);
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = apply(&v);
        lambda = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        v = scale(&w, 1.0 / nw);
    }
    lambda.max(0.0)
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

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

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in d.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    /// Materializes a linear map by applying it to the unit vectors.
    pub fn from_columns(rows: usize, cols: usize, apply: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut m = Self::zeros(rows, cols);
        let mut e = vec![0.0; cols];
        for j in 0..cols {
            e[j] = 1.0;
            let col = apply(&e);
            e[j] = 0.0;
            for i in 0..rows {
                m.data[i * cols + j] = col[i];
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        self.data.chunks_exact(self.cols).map(|row| dot(row, x)).collect()
    }

    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, yi) in self.data.chunks_exact(self.cols).zip(y) {
            axpy(&mut out, *yi, row);
        }
        out
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

    pub fn matmul(&self, other: &DenseMatrix) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a != 0.0 {
                    axpy(orow, a, &other.data[k * other.cols..(k + 1) * other.cols]);
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &DenseMatrix) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: sub(&self.data, &other.data),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: scale(&self.data, s),
        }
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn asymmetry(&self) -> f64 {
        self.sub(&self.transpose()).norm()
    }

    /// Gauss–Jordan inverse with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(Error::shape("square matrix", format!("{}x{}", self.rows, self.cols)));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for c in 0..n {
            let piv = (c..n)
                .max_by(|&i, &j| a.get(i, c).abs().total_cmp(&a.get(j, c).abs()))
                .unwrap();
            let pv = a.get(piv, c);
            if pv.abs() < 1e-300 {
                return Err(Error::InnerSolveFailure("singular matrix".into()));
            }
            if piv != c {
                for j in 0..n {
                    a.data.swap(c * n + j, piv * n + j);
                    inv.data.swap(c * n + j, piv * n + j);
                }
            }
            let s = 1.0 / pv;
            for j in 0..n {
                a.data[c * n + j] *= s;
                inv.data[c * n + j] *= s;
            }
            for i in 0..n {
                if i == c {
                    continue;
                }
                let f = a.get(i, c);
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a.data[i * n + j] -= f * a.data[c * n + j];
                    inv.data[i * n + j] -= f * inv.data[c * n + j];
                }
            }
        }
        Ok(inv)
    }

    /// Solves `self x = b` (square) by Gaussian elimination with partial
    /// pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.inverse()?.matvec(b))
    }
}

/// Eigendecomposition of a symmetric matrix: `A = V diag(values) V^T`,
/// eigenvectors stored as the columns of `vectors`, values ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SymmetricEigen {
    /// `V diag(f(values)) V^T`
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut scaled = self.vectors.clone();
        for i in 0..n {
            for j in 0..n {
                scaled.data[i * n + j] *= fv[j];
            }
        }
        scaled.matmul(&self.vectors.transpose())
    }
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius mass is below
/// `tol` times the total.
pub fn jacobi_eigen(m: &DenseMatrix, tol: f64, max_sweeps: usize) -> Result<SymmetricEigen> {
    let n = m.rows();
    if n != m.cols() {
        return Err(Error::shape("square matrix", format!("{}x{}", m.rows(), m.cols())));
    }
    let mut a = m.data.clone();
    let mut v = DenseMatrix::identity(n).data;
    let total = norm(&a).max(f64::MIN_POSITIVE);
    let off = |a: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };
    for _ in 0..max_sweeps {
        if off(&a) <= tol * total {
            return Ok(finish_eigen(n, &a, v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- J^T A J on rows/cols p, q
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if off(&a) <= tol * total {
        Ok(finish_eigen(n, &a, v))
    } else {
        Err(Error::ConvergenceFailure {
            what: "Jacobi eigendecomposition",
            iters: max_sweeps,
            residual: off(&a) / total,
        })
    }
}

fn finish_eigen(n: usize, a: &[f64], v: Vec<f64>) -> SymmetricEigen {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for k in 0..n {
            vectors.data[k * n + new_j] = v[k * n + old_j];
        }
    }
    SymmetricEigen { values, vectors }
}
