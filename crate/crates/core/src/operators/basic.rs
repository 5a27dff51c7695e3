use std::f64::consts::PI;

use num_complex::Complex64;

use super::{LinearMap, Shape};
use crate::error::{Error, Result};
use crate::grid::{divergence, gradient, Dft2, GridImage, VectorField};
use crate::linalg::DenseMatrix;

fn image_shape(u: &GridImage) -> Shape {
    Shape::Image {
        width: u.width(),
        height: u.height(),
    }
}

fn check_binary(mask: &GridImage) -> Result<()> {
    match mask.as_slice().iter().find(|&&v| v != 0.0 && v != 1.0) {
        Some(&v) => Err(Error::NonBinaryMask(v)),
        None => Ok(()),
    }
}

/// `A = Id` (denoising).
#[derive(Debug, Clone)]
pub struct Identity {
    shape: Shape,
}

pub fn make_identity(width: usize, height: usize) -> Identity {
    Identity {
        shape: Shape::Image { width, height },
    }
}

impl Identity {
    pub fn flat(n: usize) -> Self {
        Self { shape: Shape::Flat(n) }
    }
}

impl LinearMap for Identity {
    fn domain(&self) -> Shape {
        self.shape
    }
    fn range(&self) -> Shape {
        self.shape
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        y.to_vec()
    }
    fn norm_estimate(&self) -> f64 {
        1.0
    }
}

/// Pointwise restriction to a binary mask (inpainting). Self-adjoint and
/// idempotent.
#[derive(Debug, Clone)]
pub struct Mask {
    shape: Shape,
    mask: Vec<f64>,
}

pub fn make_mask(mask: &GridImage) -> Result<Mask> {
    check_binary(mask)?;
    Ok(Mask {
        shape: image_shape(mask),
        mask: mask.as_slice().to_vec(),
    })
}

impl Mask {
    pub fn ones(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1.0).count()
    }
}

impl LinearMap for Mask {
    fn domain(&self) -> Shape {
        self.shape
    }
    fn range(&self) -> Shape {
        self.shape
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mask).map(|(a, m)| a * m).collect()
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.apply(y)
    }
    fn norm_estimate(&self) -> f64 {
        if self.ones() > 0 {
            1.0
        } else {
            0.0
        }
    }
}

/// Normalized `size × size` Gaussian kernel centred in the array.
pub fn gaussian_kernel(size: usize, sigma: f64) -> GridImage {
    assert!(size > 0 && sigma > 0.0);
    let c = (size as f64 - 1.0) / 2.0;
    let k = GridImage::from_fn(size, size, |i, j| {
        let (di, dj) = (i as f64 - c, j as f64 - c);
        (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp()
    });
    let s = k.sum();
    k.map(|v| v / s)
}

/// Periodic convolution `u -> k * u`, diagonalized by the DFT.
#[derive(Debug, Clone)]
pub struct Blur {
    width: usize,
    height: usize,
    plan: Dft2,
    symbol: Vec<Complex64>,
    renormalized: bool,
}

/// Builds the blur for images of the given size. The kernel's centre
/// element `(kh / 2, kw / 2)` is the origin; the kernel wraps around
/// periodically. Kernels that do not sum to one are rescaled and flagged.
pub fn make_blur(kernel: &GridImage, width: usize, height: usize) -> Result<Blur> {
    if kernel.is_empty() {
        return Err(Error::EmptyKernel);
    }
    if let Some(&v) = kernel.as_slice().iter().find(|&&v| v < 0.0) {
        return Err(Error::InvalidArgument(format!("blur kernel has negative entry {v}")));
    }
    let total = kernel.sum();
    if total <= 0.0 {
        return Err(Error::EmptyKernel);
    }
    let renormalized = (total - 1.0).abs() > 1e-12;
    if renormalized {
        log::warn!("blur kernel sums to {total}; renormalizing");
    }
    let (ci, cj) = (kernel.height() / 2, kernel.width() / 2);
    let mut embedded = vec![Complex64::new(0.0, 0.0); width * height];
    for a in 0..kernel.height() {
        for b in 0..kernel.width() {
            let i = (a as isize - ci as isize).rem_euclid(height as isize) as usize;
            let j = (b as isize - cj as isize).rem_euclid(width as isize) as usize;
            embedded[i * width + j] += kernel.get(a, b) / total;
        }
    }
    let plan = Dft2::new(width, height);
    plan.forward_in_place(&mut embedded);
    let root_n = ((width * height) as f64).sqrt();
    let symbol = embedded.into_iter().map(|z| z * root_n).collect();
    Ok(Blur {
        width,
        height,
        plan,
        symbol,
        renormalized,
    })
}

impl Blur {
    /// DFT multiplier of the convolution (unitary convention).
    pub fn symbol(&self) -> &[Complex64] {
        &self.symbol
    }

    /// True when the supplied kernel did not sum to one.
    pub fn renormalized(&self) -> bool {
        self.renormalized
    }

    fn filter(&self, x: &[f64], conj: bool) -> Vec<f64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.plan.forward_in_place(&mut buf);
        for (z, s) in buf.iter_mut().zip(&self.symbol) {
            *z *= if conj { s.conj() } else { *s };
        }
        self.plan.inverse_in_place(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }
}

impl LinearMap for Blur {
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
        self.filter(x, false)
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.filter(y, true)
    }
    fn norm_estimate(&self) -> f64 {
        self.symbol.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// `u -> mask ⊙ F u` with the unitary DFT; range is the interleaved
/// complex grid with unsampled entries stored as zero.
#[derive(Debug, Clone)]
pub struct SubsampledFourier {
    width: usize,
    height: usize,
    plan: Dft2,
    mask: Vec<f64>,
}

pub fn make_subsampled_fourier(mask: &GridImage) -> Result<SubsampledFourier> {
    check_binary(mask)?;
    Ok(SubsampledFourier {
        width: mask.width(),
        height: mask.height(),
        plan: Dft2::new(mask.width(), mask.height()),
        mask: mask.as_slice().to_vec(),
    })
}

impl SubsampledFourier {
    pub fn sampled(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1.0).count()
    }

    pub fn mask(&self) -> &[f64] {
        &self.mask
    }
}

impl LinearMap for SubsampledFourier {
    fn domain(&self) -> Shape {
        Shape::Image {
            width: self.width,
            height: self.height,
        }
    }
    fn range(&self) -> Shape {
        Shape::Complex {
            width: self.width,
            height: self.height,
        }
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let spec = self.plan.forward_real(x);
        spec.iter()
            .zip(&self.mask)
            .flat_map(|(z, m)| [z.re * m, z.im * m])
            .collect()
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = y
            .chunks_exact(2)
            .zip(&self.mask)
            .map(|(c, m)| Complex64::new(c[0] * m, c[1] * m))
            .collect();
        self.plan.inverse_in_place(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }
    fn norm_estimate(&self) -> f64 {
        if self.sampled() > 0 {
            1.0
        } else {
            0.0
        }
    }
}

/// The discrete gradient as a map image -> field.
#[derive(Debug, Clone)]
pub struct GradientOp {
    width: usize,
    height: usize,
    spacing: f64,
}

pub fn make_gradient(width: usize, height: usize, spacing: f64) -> GradientOp {
    GradientOp {
        width,
        height,
        spacing,
    }
}

impl LinearMap for GradientOp {
    fn domain(&self) -> Shape {
        Shape::Image {
            width: self.width,
            height: self.height,
        }
    }
    fn range(&self) -> Shape {
        Shape::Field {
            width: self.width,
            height: self.height,
        }
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let u = GridImage::new(self.width, self.height, x.to_vec())
            .expect("gradient input shape")
            .with_spacing(self.spacing);
        gradient(&u).to_flat()
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let p = VectorField::from_flat(self.width, self.height, y)
            .expect("gradient adjoint shape")
            .with_spacing(self.spacing);
        divergence(&p).into_vec().into_iter().map(|v| -v).collect()
    }
    /// Exact: the Neumann path-graph Laplacians have top eigenvalue
    /// `4 sin^2(pi (n-1) / 2n)` per axis.
    fn norm_estimate(&self) -> f64 {
        let axis = |n: usize| 4.0 * (PI * (n as f64 - 1.0) / (2.0 * n as f64)).sin().powi(2);
        ((axis(self.width) + axis(self.height)).sqrt()) / self.spacing
    }
}

/// `x -> (A x, B x)`.
pub struct Stacked<A, B> {
    pub top: A,
    pub bottom: B,
}

impl<A: LinearMap, B: LinearMap> Stacked<A, B> {
    pub fn new(top: A, bottom: B) -> Result<Self> {
        if top.domain_dim() != bottom.domain_dim() {
            return Err(Error::shape(top.domain_dim(), bottom.domain_dim()));
        }
        Ok(Self { top, bottom })
    }

    pub fn split_at(&self) -> usize {
        self.top.range_dim()
    }
}

impl<A: LinearMap, B: LinearMap> LinearMap for Stacked<A, B> {
    fn domain(&self) -> Shape {
        self.top.domain()
    }
    fn range(&self) -> Shape {
        Shape::Flat(self.top.range_dim() + self.bottom.range_dim())
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.top.apply(x);
        out.extend(self.bottom.apply(x));
        out
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let (a, b) = y.split_at(self.split_at());
        let mut out = self.top.adjoint(a);
        for (o, v) in out.iter_mut().zip(self.bottom.adjoint(b)) {
            *o += v;
        }
        out
    }
    fn norm_estimate(&self) -> f64 {
        self.top.norm_estimate().hypot(self.bottom.norm_estimate())
    }
}

/// `x -> s A x`.
pub struct ScaledMap<A> {
    pub inner: A,
    pub factor: f64,
}

impl<A: LinearMap> LinearMap for ScaledMap<A> {
    fn domain(&self) -> Shape {
        self.inner.domain()
    }
    fn range(&self) -> Shape {
        self.inner.range()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.inner.apply(x).into_iter().map(|v| v * self.factor).collect()
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.inner.adjoint(y).into_iter().map(|v| v * self.factor).collect()
    }
    fn norm_estimate(&self) -> f64 {
        self.factor.abs() * self.inner.norm_estimate()
    }
}

/// An explicit matrix as a linear map.
#[derive(Debug, Clone)]
pub struct DenseMap {
    pub matrix: DenseMatrix,
}

impl LinearMap for DenseMap {
    fn domain(&self) -> Shape {
        Shape::Flat(self.matrix.cols())
    }
    fn range(&self) -> Shape {
        Shape::Flat(self.matrix.rows())
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.matvec(x)
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.matrix.matvec_t(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dist, max_abs, norm, random_vector};
    use crate::operators::adjointness_check;

    fn random_mask(w: usize, h: usize, seed: u64) -> GridImage {
        let r = random_vector(w * h, seed);
        GridImage::new(w, h, r.into_iter().map(|v| if v > 0.0 { 1.0 } else { 0.0 }).collect()).unwrap()
    }

    #[test]
    fn identity_is_trivial() {
        let a = make_identity(3, 2);
        let u = random_vector(6, 1);
        assert_eq!(a.apply(&u), u);
        assert_eq!(a.adjoint(&u), u);
        assert_eq!(adjointness_check(&a, 5, 0), 0.0);
        assert_eq!(a.norm_estimate(), 1.0);
    }

    #[test]
    fn mask_is_a_projection() {
        let m = make_mask(&random_mask(7, 5, 3)).unwrap();
        let u = random_vector(35, 4);
        let au = m.apply(&u);
        assert!(dist(&m.apply(&au), &au) < 1e-14);
        assert!(dist(&m.adjoint(&u), &au) < 1e-14);
        assert!(m.apply(&u).iter().zip(&u).all(|(a, b)| *a == 0.0 || a == b));
    }

    #[test]
    fn mask_extremes() {
        let ones = make_mask(&GridImage::filled(3, 3, 1.0)).unwrap();
        let u = random_vector(9, 2);
        assert_eq!(ones.apply(&u), u);
        let zeros = make_mask(&GridImage::zeros(3, 3)).unwrap();
        assert!(zeros.apply(&u).iter().all(|&v| v == 0.0));
        assert_eq!(zeros.norm_estimate(), 0.0);
    }

    #[test]
    fn non_binary_mask_rejected() {
        let bad = GridImage::new(2, 1, vec![1.0, 0.5]).unwrap();
        assert!(matches!(make_mask(&bad), Err(Error::NonBinaryMask(v)) if v == 0.5));
        assert!(matches!(make_subsampled_fourier(&bad), Err(Error::NonBinaryMask(_))));
    }

    #[test]
    fn delta_kernel_blur_is_identity() {
        let mut k = GridImage::zeros(3, 3);
        k.set(1, 1, 1.0);
        let b = make_blur(&k, 8, 6).unwrap();
        let u = random_vector(48, 9);
        assert!(max_abs(&crate::linalg::sub(&b.apply(&u), &u)) < 1e-12);
    }

    #[test]
    fn blur_preserves_constants() {
        let b = make_blur(&gaussian_kernel(5, 1.3), 10, 10).unwrap();
        let out = b.apply(&vec![2.5; 100]);
        assert!(out.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn blur_matches_spatial_periodic_convolution() {
        let (w, h) = (16, 16);
        let k = gaussian_kernel(5, 1.0);
        let b = make_blur(&k, w, h).unwrap();
        let u = random_vector(w * h, 17);
        let fast = b.apply(&u);
        // direct O(n^2 k^2) periodic double sum
        for i in 0..h {
            for j in 0..w {
                let mut s = 0.0;
                for a in 0..5 {
                    for c in 0..5 {
                        let ii = (i as isize - (a as isize - 2)).rem_euclid(h as isize) as usize;
                        let jj = (j as isize - (c as isize - 2)).rem_euclid(w as isize) as usize;
                        s += k.get(a, c) * u[ii * w + jj];
                    }
                }
                assert!((s - fast[i * w + j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn blur_renormalizes_and_rejects_bad_kernels() {
        let k = GridImage::filled(3, 3, 1.0);
        let b = make_blur(&k, 6, 6).unwrap();
        assert!(b.renormalized());
        assert!((b.norm_estimate() - 1.0).abs() < 1e-12);
        assert!(matches!(make_blur(&GridImage::zeros(2, 2), 4, 4), Err(Error::EmptyKernel)));
        let neg = GridImage::new(2, 1, vec![1.5, -0.5]).unwrap();
        assert!(make_blur(&neg, 4, 4).is_err());
    }

    #[test]
    fn fourier_full_mask_is_unitary() {
        let f = make_subsampled_fourier(&GridImage::filled(6, 5, 1.0)).unwrap();
        let u = random_vector(30, 8);
        assert!(dist(&f.adjoint(&f.apply(&u)), &u) < 1e-10);
        assert!((norm(&f.apply(&u)) - norm(&u)).abs() < 1e-10);
    }

    #[test]
    fn fourier_empty_mask_is_zero() {
        let f = make_subsampled_fourier(&GridImage::zeros(4, 4)).unwrap();
        assert!(f.apply(&random_vector(16, 1)).iter().all(|&v| v == 0.0));
        assert_eq!(f.norm_estimate(), 0.0);
    }

    #[test]
    fn fourier_half_plane_adjointness() {
        let mask = GridImage::from_fn(8, 8, |i, _| if i < 4 { 1.0 } else { 0.0 });
        let f = make_subsampled_fourier(&mask).unwrap();
        assert!(adjointness_check(&f, 20, 5) < 1e-10);
    }

    #[test]
    fn gradient_norm_is_exact() {
        let g = make_gradient(9, 6, 1.0);
        let est = crate::linalg::power_iteration(|x| g.normal(x), 54, 5000).sqrt();
        assert!((g.norm_estimate() - est).abs() < 1e-6, "{} vs {est}", g.norm_estimate());
        assert!(g.norm_estimate() <= 8f64.sqrt());
    }

    #[test]
    fn nonexpansive_blur_and_mask() {
        let b = make_blur(&gaussian_kernel(5, 2.0), 12, 12).unwrap();
        let m = make_mask(&random_mask(12, 12, 6)).unwrap();
        for s in 0..20 {
            let u = random_vector(144, 100 + s);
            assert!(norm(&b.apply(&u)) <= norm(&u) + 1e-12);
            assert!(norm(&m.apply(&u)) <= norm(&u) + 1e-12);
        }
    }

    #[test]
    fn stacked_and_dense_adjointness() {
        let s = Stacked::new(make_identity(4, 4), make_gradient(4, 4, 1.0)).unwrap();
        assert!(adjointness_check(&s, 10, 3) < 1e-12);
        let d = DenseMap {
            matrix: DenseMatrix::new(2, 3, random_vector(6, 1)).unwrap(),
        };
        assert!(adjointness_check(&d, 10, 3) < 1e-12);
    }
}
