//! Forward operators `A` with matched adjoints.
//!
//! Every operator acts on flat `f64` vectors. Images are row-major, vector
//! fields are `[px, py]`, complex data is interleaved `[re, im, ...]` and
//! sinograms are angle-major, so one Euclidean inner product serves every
//! domain and range.

mod basic;
mod radon;
mod spectrum;

pub use basic::{
    gaussian_kernel, make_blur, make_gradient, make_identity, make_mask, make_subsampled_fourier, Blur,
    DenseMap, GradientOp, Identity, Mask, ScaledMap, Stacked, SubsampledFourier,
};
pub use radon::{make_radon, Radon, RadonGeometry, Sinogram};
pub use spectrum::{singular_spectrum_probe, singular_spectrum_probe_with, ProbeOptions};

use crate::linalg;

/// Shape of an operator's domain or range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Image { width: usize, height: usize },
    Field { width: usize, height: usize },
    Complex { width: usize, height: usize },
    Sinogram { angles: usize, offsets: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Image { width, height } => width * height,
            Shape::Field { width, height } | Shape::Complex { width, height } => 2 * width * height,
            Shape::Sinogram { angles, offsets } => angles * offsets,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Number of power iterations used for operator norm estimates.
pub const NORM_POWER_ITERS: usize = 100;

/// A bounded linear map with its adjoint.
pub trait LinearMap: Send + Sync {
    fn domain(&self) -> Shape;
    fn range(&self) -> Shape;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn adjoint(&self, y: &[f64]) -> Vec<f64>;

    /// Spectral norm estimate. The default runs power iteration on `A*A`.
    fn norm_estimate(&self) -> f64 {
        estimate_norm(self)
    }

    fn domain_dim(&self) -> usize {
        self.domain().len()
    }

    fn range_dim(&self) -> usize {
        self.range().len()
    }

    /// `A*A x`
    fn normal(&self, x: &[f64]) -> Vec<f64> {
        self.adjoint(&self.apply(x))
    }
}

/// `sqrt(lambda_max(A*A))` by [`NORM_POWER_ITERS`] power iterations.
pub fn estimate_norm<A: LinearMap + ?Sized>(a: &A) -> f64 {
    linalg::power_iteration(|x| a.normal(x), a.domain_dim(), NORM_POWER_ITERS).sqrt()
}

/// `|<Au, v> - <u, A*v>| / (|u| |v|)` for one pair.
pub fn adjointness_residual<A: LinearMap + ?Sized>(a: &A, u: &[f64], v: &[f64]) -> f64 {
    let lhs = linalg::dot(&a.apply(u), v);
    let rhs = linalg::dot(u, &a.adjoint(v));
    let denom = linalg::norm(u) * linalg::norm(v);
    if denom == 0.0 {
        (lhs - rhs).abs()
    } else {
        (lhs - rhs).abs() / denom
    }
}

/// Worst adjointness residual over `pairs` pseudo-random pairs.
pub fn adjointness_check<A: LinearMap + ?Sized>(a: &A, pairs: usize, seed: u64) -> f64 {
    (0..pairs as u64)
        .map(|k| {
            let u = linalg::random_vector(a.domain_dim(), seed.wrapping_add(2 * k));
            let v = linalg::random_vector(a.range_dim(), seed.wrapping_add(2 * k + 1));
            adjointness_residual(a, &u, &v)
        })
        .fold(0.0, f64::max)
}

impl<T: LinearMap + ?Sized> LinearMap for &T {
    fn domain(&self) -> Shape {
        (**self).domain()
    }
    fn range(&self) -> Shape {
        (**self).range()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (**self).apply(x)
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        (**self).adjoint(y)
    }
    fn norm_estimate(&self) -> f64 {
        (**self).norm_estimate()
    }
}

impl<T: LinearMap + ?Sized> LinearMap for Box<T> {
    fn domain(&self) -> Shape {
        (**self).domain()
    }
    fn range(&self) -> Shape {
        (**self).range()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (**self).apply(x)
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        (**self).adjoint(y)
    }
    fn norm_estimate(&self) -> f64 {
        (**self).norm_estimate()
    }
}
