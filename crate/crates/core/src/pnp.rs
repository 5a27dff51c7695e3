//! Plug-and-Play reconstruction with linear denoisers.
//!
//! A symmetric denoiser `D` with spectrum in `(0, 1]` is the proximal map of
//! `J(x) = 1/2 <x, (D^-1 - I) x>`. Filtering its eigenvalues through
//! `g_tau(l) = l / (tau - l (tau - 1))` gives the proximal map of `tau J`,
//! which is how regularization strength is controlled. PnP-ADMM and PnP-FBS
//! plug the filtered denoiser in place of the regularizer prox.
//!
//! Nonlinear denoisers (gradient-step, RED) are not implemented. RED-type
//! schemes additionally need the denoiser Jacobian to be symmetric.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::convex::ProxFn;
use crate::error::{Error, Result};
use crate::fidelity::Fidelity;
use crate::grid::{Dft2, GridImage, SplitMix64};
use crate::linalg::{self, DenseMatrix, SymmetricEigen};
use crate::operators::{make_blur, LinearMap, Shape};
use crate::solvers::{admm, forward_backward, DataTerm, SolverConfig, SolverTrace};

/// Largest grid (in pixels) handled by dense eigendecompositions.
pub const DENSE_MAX_PIXELS: usize = 32 * 32;
/// Lower floor applied to convolutional denoiser symbols.
pub const SYMBOL_FLOOR: f64 = 1e-3;
const SYMMETRY_TOL: f64 = 1e-10;
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_SWEEPS: usize = 100;
const PROX_TRIALS: usize = 20;
const PROX_PASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
enum Spectrum {
    Dense { matrix: DenseMatrix, eigen: SymmetricEigen },
    /// Diagonal in the unitary DFT basis with a real, even symbol.
    Fourier { plan: Dft2, symbol: Vec<f64> },
}

/// Symmetric positive definite averaging operator with spectrum in
/// `[lambda_lo, 1]`.
#[derive(Debug, Clone)]
pub struct LinearDenoiser {
    width: usize,
    height: usize,
    spectrum: Spectrum,
    lambda_lo: f64,
}

fn check_spectrum(values: &[f64]) -> Result<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo > 0.0) {
        return Err(Error::SingularDenoiser(lo));
    }
    if hi > 1.0 + SYMMETRY_TOL {
        return Err(Error::InvalidArgument(format!("denoiser eigenvalue {hi} exceeds 1")));
    }
    Ok(lo)
}

impl LinearDenoiser {
    /// Dense symmetric matrix on the flattened `height × width` grid.
    pub fn dense(matrix: DenseMatrix, width: usize, height: usize) -> Result<Self> {
        let n = width * height;
        if matrix.rows() != n || matrix.cols() != n {
            return Err(Error::shape(format!("{n}x{n}"), format!("{}x{}", matrix.rows(), matrix.cols())));
        }
        if n > DENSE_MAX_PIXELS {
            return Err(Error::InvalidArgument(format!(
                "dense denoisers are limited to {DENSE_MAX_PIXELS} pixels, got {n}"
            )));
        }
        let asym = matrix.asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidArgument(format!("denoiser matrix is not symmetric (defect {asym:e})")));
        }
        let eigen = linalg::jacobi_eigen(&matrix, JACOBI_TOL, JACOBI_SWEEPS)?;
        let lambda_lo = check_spectrum(&eigen.values)?;
        Ok(Self {
            width,
            height,
            spectrum: Spectrum::Dense { matrix, eigen },
            lambda_lo,
        })
    }

    /// Periodic convolution with a point-symmetric kernel. The symbol is
    /// clamped into `[SYMBOL_FLOOR, 1]`.
    pub fn convolution(kernel: &GridImage, width: usize, height: usize) -> Result<Self> {
        let blur = make_blur(kernel, width, height)?;
        let worst_imag = blur.symbol().iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if worst_imag > SYMMETRY_TOL {
            return Err(Error::InvalidArgument(format!(
                "kernel is not point-symmetric (symbol imaginary part {worst_imag:e})"
            )));
        }
        let symbol = blur.symbol().iter().map(|z| z.re.clamp(SYMBOL_FLOOR, 1.0)).collect();
        Self::fourier(symbol, width, height)
    }

    /// Diagonal in the DFT basis. The symbol must be even, `s[-k] = s[k]`,
    /// so that the operator is real.
    pub fn fourier(symbol: Vec<f64>, width: usize, height: usize) -> Result<Self> {
        if symbol.len() != width * height || symbol.is_empty() {
            return Err(Error::shape(width * height, symbol.len()));
        }
        for i in 0..height {
            for j in 0..width {
                let mirror = ((height - i) % height) * width + (width - j) % width;
                if (symbol[i * width + j] - symbol[mirror]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "symbol is not even at frequency ({i}, {j})"
                    )));
                }
            }
        }
        let lambda_lo = check_spectrum(&symbol)?;
        Ok(Self {
            width,
            height,
            spectrum: Spectrum::Fourier {
                plan: Dft2::new(width, height),
                symbol,
            },
            lambda_lo,
        })
    }

    /// `c I` for `c` in `(0, 1]`.
    pub fn scaled_identity(c: f64, width: usize, height: usize) -> Result<Self> {
        Self::fourier(vec![c; width * height], width, height)
    }

    pub fn identity(width: usize, height: usize) -> Self {
        Self::scaled_identity(1.0, width, height).expect("identity is a valid denoiser")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Certified lower spectral bound.
    pub fn lambda_lo(&self) -> f64 {
        self.lambda_lo
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.spectrum, Spectrum::Dense { .. })
    }

    /// Eigenvalues: ascending for dense denoisers, in DFT order otherwise.
    pub fn eigenvalues(&self) -> &[f64] {
        match &self.spectrum {
            Spectrum::Dense { eigen, .. } => &eigen.values,
            Spectrum::Fourier { symbol, .. } => symbol,
        }
    }

    /// Same eigenvectors, eigenvalues mapped through `f`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        let spectrum = match &self.spectrum {
            Spectrum::Dense { eigen, .. } => {
                let values = eigen.values.iter().map(|&l| f(l)).collect::<Result<Vec<_>>>()?;
                let eigen = SymmetricEigen {
                    values,
                    vectors: eigen.vectors.clone(),
                };
                let mut matrix = eigen.reconstruct_with(|l| l);
                symmetrize(&mut matrix);
                Spectrum::Dense { matrix, eigen }
            }
            Spectrum::Fourier { plan, symbol } => Spectrum::Fourier {
                plan: plan.clone(),
                symbol: symbol.iter().map(|&l| f(l)).collect::<Result<Vec<_>>>()?,
            },
        };
        let lambda_lo = check_spectrum(match &spectrum {
            Spectrum::Dense { eigen, .. } => &eigen.values,
            Spectrum::Fourier { symbol, .. } => symbol,
        })?;
        Ok(Self {
            width: self.width,
            height: self.height,
            spectrum,
            lambda_lo,
        })
    }

    /// `sum_i weight(l_i) <x, e_i>^2`.
    fn spectral_energy(&self, x: &[f64], weight: impl Fn(f64) -> f64) -> f64 {
        match &self.spectrum {
            Spectrum::Dense { eigen, .. } => {
                let coeffs = eigen.vectors.matvec_t(x);
                coeffs.iter().zip(&eigen.values).map(|(c, &l)| weight(l) * c * c).sum()
            }
            Spectrum::Fourier { plan, symbol } => {
                let coeffs = plan.forward_real(x);
                coeffs.iter().zip(symbol).map(|(c, &l)| weight(l) * c.norm_sqr()).sum()
            }
        }
    }

    /// `J(x) = 1/2 <x, (D^-1 - I) x>`, evaluated in the eigenbasis.
    pub fn regularizer_value(&self, x: &[f64]) -> Result<f64> {
        if self.lambda_lo <= 0.0 {
            return Err(Error::SingularDenoiser(self.lambda_lo));
        }
        if x.len() != self.width * self.height {
            return Err(Error::shape(self.width * self.height, x.len()));
        }
        Ok(0.5 * self.spectral_energy(x, |l| (1.0 - l) / l))
    }

    /// Dense matrix of the operator.
    pub fn to_dense(&self) -> DenseMatrix {
        match &self.spectrum {
            Spectrum::Dense { matrix, .. } => matrix.clone(),
            Spectrum::Fourier { .. } => {
                let n = self.width * self.height;
                let mut m = DenseMatrix::from_columns(n, n, |x| self.apply(x));
                symmetrize(&mut m);
                m
            }
        }
    }
}

fn symmetrize(m: &mut DenseMatrix) {
    let n = m.rows();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, avg);
            m.set(j, i, avg);
        }
    }
}

impl LinearMap for LinearDenoiser {
    fn domain(&self) -> Shape {
        Shape::Image {
            width: self.width,
            height: self.height,
        }
    }
    fn range(&self) -> Shape {
        self.domain()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match &self.spectrum {
            Spectrum::Dense { matrix, .. } => matrix.matvec(x),
            Spectrum::Fourier { plan, symbol } => {
                let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                plan.forward_in_place(&mut buf);
                for (z, &s) in buf.iter_mut().zip(symbol) {
                    *z *= s;
                }
                plan.inverse_in_place(&mut buf);
                buf.into_iter().map(|z| z.re).collect()
            }
        }
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.apply(y)
    }
    fn norm_estimate(&self) -> f64 {
        self.eigenvalues().iter().copied().fold(0.0, f64::max)
    }
}

/// A function applied to denoiser eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralFilter {
    /// `g_tau(l) = l / (tau - l (tau - 1))`, the spectrum of `prox_{tau J}`.
    Canonical { tau: f64 },
    /// Piecewise-linear interpolation through `(eigenvalue, value)` nodes
    /// with strictly increasing eigenvalues.
    Tabulated { tau: f64, nodes: Vec<(f64, f64)> },
}

impl SpectralFilter {
    pub fn canonical(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("filter parameter must be positive, got {tau}")));
        }
        Ok(Self::Canonical { tau })
    }

    pub fn tabulated(tau: f64, nodes: Vec<(f64, f64)>) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("filter parameter must be positive, got {tau}")));
        }
        if nodes.len() < 2 || nodes.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidArgument(
                "tabulated filter needs at least two nodes with increasing eigenvalues".into(),
            ));
        }
        if let Some(&(_, g)) = nodes.iter().find(|n| !(n.1 > 0.0 && n.1 <= 1.0)) {
            return Err(Error::InvalidArgument(format!("filter value {g} outside (0, 1]")));
        }
        Ok(Self::Tabulated { tau, nodes })
    }

    pub fn tau(&self) -> f64 {
        match self {
            Self::Canonical { tau } | Self::Tabulated { tau, .. } => *tau,
        }
    }

    pub fn eval(&self, lambda: f64) -> Result<f64> {
        match self {
            Self::Canonical { tau } => {
                let den = tau - lambda * (tau - 1.0);
                if !(den > 0.0) || !(lambda > 0.0) {
                    return Err(Error::FilterDomainViolation { lambda, tau: *tau });
                }
                Ok(lambda / den)
            }
            Self::Tabulated { tau, nodes } => {
                let violation = Error::FilterDomainViolation { lambda, tau: *tau };
                let first = nodes[0];
                let last = nodes[nodes.len() - 1];
                if lambda < first.0 - SYMMETRY_TOL || lambda > last.0 + SYMMETRY_TOL {
                    return Err(violation);
                }
                let k = nodes.partition_point(|n| n.0 <= lambda).clamp(1, nodes.len() - 1);
                let (l0, g0) = nodes[k - 1];
                let (l1, g1) = nodes[k];
                let s = ((lambda - l0) / (l1 - l0)).clamp(0.0, 1.0);
                Ok(g0 + s * (g1 - g0))
            }
        }
    }
}

/// Filtered denoiser `g(D)`: same eigenvectors, eigenvalues `g(l_i)`.
pub fn apply_spectral_filter(d: &LinearDenoiser, f: &SpectralFilter) -> Result<LinearDenoiser> {
    d.map_spectrum(|l| f.eval(l))
}

/// Bounds of `(1 - g(l)) / (tau g(l))` over the spectrum, excluding
/// eigenvalues equal to one (unregularized directions).
#[derive(Debug, Clone, PartialEq)]
pub struct Admissibility {
    pub lower: f64,
    pub upper: f64,
    /// Number of spectrum points at eigenvalue one.
    pub excluded: usize,
    /// Largest relative change of the ratio between `tau/2` and `tau/4`
    /// (canonical filters only).
    pub limit_change: Option<f64>,
    pub admissible: bool,
}

fn ratio_bounds(spectrum: &[f64], f: &SpectralFilter) -> Result<(f64, f64, usize)> {
    let tau = f.tau();
    let (mut lo, mut hi, mut excluded) = (f64::INFINITY, 0.0f64, 0);
    for &l in spectrum {
        if l >= 1.0 - SYMMETRY_TOL {
            excluded += 1;
            continue;
        }
        let g = f.eval(l)?;
        let r = (1.0 - g) / (tau * g);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((lo, hi, excluded))
}

pub fn admissibility(d: &LinearDenoiser, f: &SpectralFilter) -> Result<Admissibility> {
    let spectrum = d.eigenvalues();
    let (lower, upper, excluded) = ratio_bounds(spectrum, f)?;
    let limit_change = match f {
        SpectralFilter::Canonical { tau } => {
            let half = SpectralFilter::Canonical { tau: tau / 2.0 };
            let quarter = SpectralFilter::Canonical { tau: tau / 4.0 };
            let mut worst = 0.0f64;
            for &l in spectrum.iter().filter(|&&l| l < 1.0 - SYMMETRY_TOL) {
                let r = |f: &SpectralFilter| f.eval(l).map(|g| (1.0 - g) / (f.tau() * g));
                let (a, b) = (r(&half)?, r(&quarter)?);
                worst = worst.max((a - b).abs() / a.abs().max(f64::MIN_POSITIVE));
            }
            Some(worst)
        }
        SpectralFilter::Tabulated { .. } => None,
    };
    let all_excluded = excluded == spectrum.len();
    let bounded = all_excluded || (lower > 0.0 && upper.is_finite());
    let admissible = bounded && limit_change.map_or(true, |c| c <= 1e-8);
    Ok(Admissibility {
        lower,
        upper,
        excluded,
        limit_change,
        admissible,
    })
}

/// Outcome of [`verify_prox_characterization`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProxCheck {
    /// Worst `|<Du, v> - <u, Dv>| / (|u| |v|)` over random pairs.
    pub symmetry_defect: f64,
    /// Worst `|u* - Dv| / |Dv|`, where `u*` minimizes `J(u) + 1/2 |u - v|^2`.
    pub max_deviation: f64,
    pub passed: bool,
}

/// Minimizer of `tau J(u) + 1/2 |u - v|^2` with `J(u) = 1/2 <u, (D^-1 - I) u>`.
///
/// Substituting `u = D z` removes the inverse:
/// `tau/2 (<Dz, z> - |Dz|^2) + 1/2 |Dz - v|^2`, whose normal equations
/// `(tau sym(D) + (1 - tau) D*D) z = D* v` are solved by conjugate gradients.
pub fn quadratic_prox_by_cg<D: LinearMap + ?Sized>(d: &D, v: &[f64], tau: f64) -> Result<Vec<f64>> {
    let n = d.domain_dim();
    let hessian = |z: &[f64]| {
        let dz = d.apply(z);
        let dtz = d.adjoint(z);
        let dtdz = d.adjoint(&dz);
        (0..n)
            .map(|i| 0.5 * tau * (dz[i] + dtz[i]) + (1.0 - tau) * dtdz[i])
            .collect::<Vec<_>>()
    };
    let rhs = d.adjoint(v);
    let z = linalg::conjugate_gradient(hessian, &rhs, None, 1e-13, 20 * n.max(50))?.x;
    Ok(d.apply(&z))
}

/// Checks that `D` acts as the proximal map of its implicit regularizer on
/// 20 random inputs. Passes when the operator is symmetric to 1e-10 and the
/// deviation is at most 1e-8.
pub fn verify_prox_characterization<D: LinearMap + ?Sized>(d: &D) -> ProxCheck {
    let n = d.domain_dim();
    let mut symmetry_defect = 0.0f64;
    let mut max_deviation = 0.0f64;
    for k in 0..PROX_TRIALS as u64 {
        let u = linalg::random_vector(n, 0xD0 + 2 * k);
        let v = linalg::random_vector(n, 0xD1 + 2 * k);
        let defect = (linalg::dot(&d.apply(&u), &v) - linalg::dot(&u, &d.apply(&v))).abs()
            / (linalg::norm(&u) * linalg::norm(&v));
        symmetry_defect = symmetry_defect.max(defect);
        let dv = d.apply(&v);
        let deviation = match quadratic_prox_by_cg(d, &v, 1.0) {
            Ok(u_star) => linalg::dist(&u_star, &dv) / linalg::norm(&dv).max(f64::MIN_POSITIVE),
            Err(_) => f64::INFINITY,
        };
        max_deviation = max_deviation.max(deviation);
    }
    ProxCheck {
        symmetry_defect,
        max_deviation,
        passed: symmetry_defect <= SYMMETRY_TOL && max_deviation <= PROX_PASS_TOL,
    }
}

/// The filtered denoiser as a regularizer prox. The prox ignores its step:
/// the regularization strength is fixed by the filter, so `value` reports
/// `weight J_g(x)` with `J_g` the implicit regularizer of `g(D)`.
#[derive(Debug, Clone)]
pub struct DenoiserStep {
    pub denoiser: LinearDenoiser,
    pub weight: f64,
}

impl ProxFn for DenoiserStep {
    fn value(&self, x: &[f64]) -> f64 {
        self.weight * self.denoiser.regularizer_value(x).unwrap_or(f64::INFINITY)
    }
    fn prox(&self, x: &[f64], _t: f64) -> Result<Vec<f64>> {
        Ok(self.denoiser.apply(x))
    }
}

/// PnP-ADMM: ADMM on `1/2 |Au - y|^2` with the `v` update replaced by the
/// filtered denoiser. For the canonical filter this minimizes
/// `1/2 |Au - y|^2 + lambda tau J(u)`.
pub fn pnp_admm<A: LinearMap + ?Sized>(
    a: &A,
    y: &[f64],
    d: &LinearDenoiser,
    f: &SpectralFilter,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolverTrace)> {
    if y.len() != a.range_dim() {
        return Err(Error::shape(a.range_dim(), y.len()));
    }
    let step = DenoiserStep {
        denoiser: apply_spectral_filter(d, f)?,
        weight: cfg.lambda,
    };
    let out = admm(&Fidelity::l2(y.to_vec()), a, &step, &vec![0.0; a.domain_dim()], cfg)?;
    Ok((out.u, out.trace))
}

/// PnP-FBS: `u <- g(D)(u - t A*(Au - y))` with gradient step `t = cfg.tau`.
pub fn pnp_fbs<A: LinearMap + ?Sized>(
    a: &A,
    y: &[f64],
    d: &LinearDenoiser,
    f: &SpectralFilter,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolverTrace)> {
    if y.len() != a.range_dim() {
        return Err(Error::shape(a.range_dim(), y.len()));
    }
    let fid = Fidelity::l2(y.to_vec());
    let step = DenoiserStep {
        denoiser: apply_spectral_filter(d, f)?,
        weight: 1.0 / cfg.tau,
    };
    forward_backward(&DataTerm::new(a, &fid), &step, &vec![0.0; a.domain_dim()], cfg)
}

/// Least-squares solution of `Au = y` minimizing `J`, from a dense
/// eigendecomposition of `A*A`.
pub fn minimal_regularizer_solution<A: LinearMap + ?Sized>(a: &A, y: &[f64], d: &LinearDenoiser) -> Result<Vec<f64>> {
    let n = a.domain_dim();
    if n > DENSE_MAX_PIXELS {
        return Err(Error::OracleUnavailable(n));
    }
    let mut normal = DenseMatrix::from_columns(n, n, |x| a.normal(x));
    symmetrize(&mut normal);
    let eig = linalg::jacobi_eigen(&normal, JACOBI_TOL, JACOBI_SWEEPS)?;
    let top = eig.values.iter().copied().fold(0.0, f64::max);
    let cutoff = 1e-10 * top.max(f64::MIN_POSITIVE);
    let aty = a.adjoint(y);
    let coeffs = eig.vectors.matvec_t(&aty);
    let mut u = vec![0.0; n];
    let mut null = Vec::new();
    for (k, &mu) in eig.values.iter().enumerate() {
        let col: Vec<f64> = (0..n).map(|i| eig.vectors.get(i, k)).collect();
        if mu > cutoff {
            linalg::axpy(&mut u, coeffs[k] / mu, &col);
        } else {
            null.push(col);
        }
    }
    if null.is_empty() {
        return Ok(u);
    }
    // minimize J(u + N c): (N'WN) c = -N'W u with W = D^-1 - I
    let w_apply = |x: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        match &d.spectrum {
            Spectrum::Dense { eigen, .. } => {
                let c = eigen.vectors.matvec_t(x);
                let scaled: Vec<f64> = c.iter().zip(&eigen.values).map(|(c, &l)| c * (1.0 - l) / l).collect();
                out = eigen.vectors.matvec(&scaled);
            }
            Spectrum::Fourier { plan, symbol } => {
                let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                plan.forward_in_place(&mut buf);
                for (z, &l) in buf.iter_mut().zip(symbol) {
                    *z *= (1.0 - l) / l;
                }
                plan.inverse_in_place(&mut buf);
                for (o, z) in out.iter_mut().zip(buf) {
                    *o = z.re;
                }
            }
        }
        out
    };
    let k = null.len();
    let w_null: Vec<Vec<f64>> = null.iter().map(|c| w_apply(c)).collect();
    let mut gram = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            gram.set(i, j, linalg::dot(&null[i], &w_null[j]));
        }
    }
    symmetrize(&mut gram);
    let wu = w_apply(&u);
    let rhs: Vec<f64> = null.iter().map(|c| -linalg::dot(c, &wu)).collect();
    // pseudo-inverse: directions J does not penalize keep zero coefficient
    let g_eig = linalg::jacobi_eigen(&gram, JACOBI_TOL, JACOBI_SWEEPS)?;
    let g_top = g_eig.values.iter().copied().fold(0.0, f64::max);
    let proj = g_eig.vectors.matvec_t(&rhs);
    let scaled: Vec<f64> = proj
        .iter()
        .zip(&g_eig.values)
        .map(|(p, &m)| if m > 1e-12 * g_top.max(f64::MIN_POSITIVE) { p / m } else { 0.0 })
        .collect();
    let c = g_eig.vectors.matvec(&scaled);
    for (ci, col) in c.iter().zip(&null) {
        linalg::axpy(&mut u, *ci, col);
    }
    Ok(u)
}

/// Parameter rule `delta -> tau`.
#[derive(Debug, Clone, PartialEq)]
pub enum TauRule {
    Linear { c: f64 },
    /// `tau = c delta`, with `c` chosen from the candidates by the smallest
    /// error at the smallest noise level.
    Calibrated { candidates: Vec<f64> },
}

impl TauRule {
    fn validate(&self) -> Result<()> {
        let bad = |c: f64| !(c > 0.0 && c.is_finite());
        match self {
            Self::Linear { c } if bad(*c) => Err(Error::InvalidArgument(format!("rule constant must be positive, got {c}"))),
            Self::Calibrated { candidates } if candidates.is_empty() || candidates.iter().any(|&c| bad(c)) => {
                Err(Error::InvalidArgument("calibration candidates must be positive and nonempty".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub tau: f64,
    pub err_vs_udagger: Option<f64>,
    pub err_vs_utrue: f64,
    pub iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Resolved constant of the linear rule.
    pub c: f64,
}

/// Relative increase tolerated between consecutive sweep errors.
pub const MONOTONE_SLACK: f64 = 0.05;

impl SweepTable {
    /// Error against `u†` when available, otherwise against the ground truth.
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.err_vs_udagger.unwrap_or(r.err_vs_utrue)).collect()
    }

    /// Errors non-increasing within [`MONOTONE_SLACK`] and the last below a
    /// quarter of the first. A single level is trivially monotone.
    pub fn monotone(&self) -> bool {
        let e = self.errors();
        if e.len() < 2 {
            return true;
        }
        e.windows(2).all(|w| w[1] <= (1.0 + MONOTONE_SLACK) * w[0]) && e[e.len() - 1] < e[0] / 4.0
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "delta,tau,err_vs_udagger,err_vs_utrue,iters")?;
        for r in &self.rows {
            let ud = r.err_vs_udagger.map(|e| e.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{}", r.delta, r.tau, ud, r.err_vs_utrue, r.iters)?;
        }
        Ok(())
    }
}

/// `A u_true + n` with `n` gaussian of norm about `delta`, drawn from the
/// stream for `(seed, index)`.
pub fn noisy_measurement<A: LinearMap + ?Sized>(a: &A, u_true: &[f64], delta: f64, seed: u64, index: u64) -> Vec<f64> {
    let mut y = a.apply(u_true);
    let m = y.len();
    let mut z = vec![0.0; m];
    SplitMix64::new(SplitMix64::derive(seed, index)).fill_normal(&mut z);
    linalg::axpy(&mut y, delta / (m as f64).sqrt(), &z);
    y
}

/// Convergent-regularization sweep: reconstructs from data at each noise
/// level with `tau = c delta` and records the error against `u†` (the
/// `J`-minimizing least-squares solution) and against `u_true`. Levels run
/// in parallel, each with its own noise stream.
pub fn convergence_sweep<A: LinearMap + ?Sized>(
    a: &A,
    u_true: &GridImage,
    d: &LinearDenoiser,
    rule: &TauRule,
    deltas: &[f64],
    seed: u64,
    cfg: &SolverConfig,
) -> Result<SweepTable> {
    rule.validate()?;
    if deltas.is_empty() || deltas.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument("noise levels must be positive".into()));
    }
    if deltas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("noise levels must be strictly decreasing".into()));
    }
    if u_true.len() != a.domain_dim() {
        return Err(Error::shape(a.domain_dim(), u_true.len()));
    }
    let truth = u_true.as_slice();
    let u_dagger = match minimal_regularizer_solution(a, &a.apply(truth), d) {
        Ok(u) => Some(u),
        Err(Error::OracleUnavailable(n)) => {
            log::warn!("no dense oracle for {n} unknowns; reporting error against the ground truth");
            None
        }
        Err(e) => return Err(e),
    };
    let last = deltas.len() - 1;
    let run = |c: f64, idx: usize| -> Result<SweepRow> {
        let delta = deltas[idx];
        let tau = c * delta;
        let y = noisy_measurement(a, truth, delta, seed, idx as u64);
        let (u, trace) = pnp_admm(a, &y, d, &SpectralFilter::canonical(tau)?, cfg)?;
        Ok(SweepRow {
            delta,
            tau,
            err_vs_udagger: u_dagger.as_ref().map(|ud| linalg::dist(&u, ud)),
            err_vs_utrue: linalg::dist(&u, truth),
            iters: trace.iters(),
        })
    };
    let c = match rule {
        TauRule::Linear { c } => *c,
        TauRule::Calibrated { candidates } => {
            let scored = candidates
                .par_iter()
                .map(|&c| {
                    let row = run(c, last)?;
                    Ok((c, row.err_vs_udagger.unwrap_or(row.err_vs_utrue)))
                })
                .collect::<Result<Vec<_>>>()?;
            scored.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|(c, _)| c).unwrap_or(1.0)
        }
    };
    let rows = (0..deltas.len()).into_par_iter().map(|idx| run(c, idx)).collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { rows, c })
}
