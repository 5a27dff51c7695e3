use super::LinearMap;
use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};

#[derive(Debug, Clone, Copy)]
pub struct ProbeOptions {
    /// Extra block columns beyond `k`; they speed up convergence of the
    /// trailing values.
    pub oversample: usize,
    /// Stop when every one of the top-`k` Ritz values moved by less than
    /// `tol * lambda_1` in one sweep.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            oversample: 5,
            tol: 1e-8,
            max_iters: 2000,
            seed: 0xB10C,
        }
    }
}

/// Top-`k` singular values of `A`, descending, by block power iteration
/// (subspace iteration with Rayleigh–Ritz) on `A*A`.
pub fn singular_spectrum_probe<A: LinearMap + ?Sized>(a: &A, k: usize) -> Result<Vec<f64>> {
    singular_spectrum_probe_with(a, k, ProbeOptions::default())
}

pub fn singular_spectrum_probe_with<A: LinearMap + ?Sized>(a: &A, k: usize, opts: ProbeOptions) -> Result<Vec<f64>> {
    let n = a.domain_dim();
    if k == 0 {
        return Err(Error::InvalidArgument("probe needs k >= 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds dimension {n}")));
    }
    let b = (k + opts.oversample).min(n);
    let mut block: Vec<Vec<f64>> = (0..b)
        .map(|j| linalg::random_vector(n, opts.seed.wrapping_add(j as u64)))
        .collect();
    orthonormalize(&mut block);
    let mut prev: Option<Vec<f64>> = None;
    let mut last_change = f64::INFINITY;
    for _ in 0..opts.max_iters {
        let images: Vec<Vec<f64>> = block.iter().map(|q| a.normal(q)).collect();
        // Rayleigh–Ritz on the current subspace
        let mut h = DenseMatrix::zeros(b, b);
        for i in 0..b {
            for j in 0..b {
                h.set(i, j, 0.5 * (linalg::dot(&block[i], &images[j]) + linalg::dot(&block[j], &images[i])));
            }
        }
        let eig = linalg::jacobi_eigen(&h, 1e-14, 100)?;
        // descending Ritz values
        let ritz: Vec<f64> = eig.values.iter().rev().copied().collect();
        if let Some(p) = &prev {
            let scale = ritz[0].abs().max(f64::MIN_POSITIVE);
            last_change = ritz[..k]
                .iter()
                .zip(&p[..k])
                .map(|(x, y)| (x - y).abs() / scale)
                .fold(0.0, f64::max);
            if last_change <= opts.tol {
                return Ok(ritz[..k].iter().map(|v| v.max(0.0).sqrt()).collect());
            }
        }
        prev = Some(ritz);
        // next block: orthonormalized A*A Q, rotated into the Ritz basis
        let mut next: Vec<Vec<f64>> = (0..b)
            .rev()
            .map(|c| {
                let mut v = vec![0.0; n];
                for (r, img) in images.iter().enumerate() {
                    linalg::axpy(&mut v, eig.vectors.get(r, c), img);
                }
                v
            })
            .collect();
        orthonormalize(&mut next);
        block = next;
    }
    Err(Error::ConvergenceFailure {
        what: "singular spectrum probe",
        iters: opts.max_iters,
        residual: last_change,
    })
}

/// Modified Gram–Schmidt with one re-orthogonalization pass. Columns that
/// collapse numerically are replaced by fresh pseudo-random directions so
/// the block keeps full rank.
fn orthonormalize(vs: &mut [Vec<f64>]) {
    for i in 0..vs.len() {
        let (done, rest) = vs.split_at_mut(i);
        let v = &mut rest[0];
        let before = linalg::norm(v);
        project_out(done, v);
        let mut nv = linalg::norm(v);
        if nv <= 1e-10 * before || nv == 0.0 {
            *v = linalg::random_vector(v.len(), 0xC0FFEE + i as u64);
            project_out(done, v);
            nv = linalg::norm(v);
        }
        v.iter_mut().for_each(|x| *x /= nv);
    }
}

fn project_out(basis: &[Vec<f64>], v: &mut [f64]) {
    for _ in 0..2 {
        for q in basis {
            let c = linalg::dot(q, v);
            linalg::axpy(v, -c, q);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridImage;
    use crate::operators::{make_identity, make_mask, DenseMap};

    #[test]
    fn identity_spectrum() {
        let s = singular_spectrum_probe(&make_identity(5, 5), 4).unwrap();
        assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn mask_spectrum() {
        let m = GridImage::from_fn(4, 4, |i, j| if (i + j) % 3 == 0 { 1.0 } else { 0.0 });
        let ones = m.sum() as usize;
        let s = singular_spectrum_probe(&make_mask(&m).unwrap(), ones + 3).unwrap();
        for (i, v) in s.iter().enumerate() {
            let expect = if i < ones { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-8, "{i}: {v}");
        }
    }

    #[test]
    fn diagonal_spectrum_sorted() {
        let d = [3.0, 0.5, 2.0, 1.0, 0.25, 4.0];
        let a = DenseMap {
            matrix: DenseMatrix::diagonal(&d),
        };
        let s = singular_spectrum_probe(&a, 3).unwrap();
        for (v, e) in s.iter().zip([4.0, 3.0, 2.0]) {
            assert!((v - e).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_k() {
        assert!(singular_spectrum_probe(&make_identity(2, 2), 0).is_err());
        assert!(singular_spectrum_probe(&make_identity(2, 2), 5).is_err());
    }
}
