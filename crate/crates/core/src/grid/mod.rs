//! Dense scalar, complex and vector-valued grids plus the discrete
//! differential operators, Fourier transform, noise models and file formats
//! that everything else is built on.

mod diff;
mod fft;
pub mod io;
mod noise;

pub use diff::{divergence, gradient, laplacian};
pub use fft::{dft2, idft2, Dft2};
pub use noise::{add_noise, NoiseKind, NoiseSpec, SplitMix64};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;

/// A real scalar field on a uniform `height × width` pixel grid, stored
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridImage {
    width: usize,
    height: usize,
    spacing: f64,
    data: Vec<f64>,
}

impl GridImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("grid dimensions must be positive".into()));
        }
        if data.len() != width * height {
            return Err(Error::shape(width * height, data.len()));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::DomainViolation(format!("non-finite grid entry {bad}")));
        }
        Ok(Self {
            width,
            height,
            spacing: 1.0,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        Self {
            width,
            height,
            spacing: 1.0,
            data: vec![value; width * height],
        }
    }

    /// Builds an image from `f(row, col)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            width,
            height,
            spacing: 1.0,
            data,
        }
    }

    /// Reinterprets a flat vector with the shape (and spacing) of `self`.
    pub fn with_data(&self, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), self.len(), "data length does not match grid");
        Self {
            width: self.width,
            height: self.height,
            spacing: self.spacing,
            data,
        }
    }

    pub fn with_spacing(mut self, spacing: f64) -> Self {
        assert!(spacing > 0.0 && spacing.is_finite(), "spacing must be positive");
        self.spacing = spacing;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn same_shape(&self, other: &GridImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_shape(&self, other: &GridImage) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ))
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.data)
    }

    pub fn dot(&self, other: &GridImage) -> f64 {
        linalg::dot(&self.data, &other.data)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Complex-valued grid, row-major. Used for Fourier coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    width: usize,
    height: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn new(width: usize, height: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(width * height, data.len()));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![Complex64::new(0.0, 0.0); width * height],
        }
    }

    pub fn from_real(u: &GridImage) -> Self {
        Self {
            width: u.width(),
            height: u.height(),
            data: u.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn real_part(&self) -> GridImage {
        GridImage {
            width: self.width,
            height: self.height,
            spacing: 1.0,
            data: self.data.iter().map(|c| c.re).collect(),
        }
    }

    /// Flattens to `[re0, im0, re1, im1, ...]`. The Euclidean inner product
    /// of two interleaved vectors is the real part of the complex one.
    pub fn to_interleaved(&self) -> Vec<f64> {
        self.data.iter().flat_map(|c| [c.re, c.im]).collect()
    }

    pub fn from_interleaved(width: usize, height: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != 2 * width * height {
            return Err(Error::shape(2 * width * height, flat.len()));
        }
        let data = flat
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect();
        Ok(Self { width, height, data })
    }
}

/// Two-channel field (e.g. a discrete gradient or a dual variable), each
/// channel row-major on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    width: usize,
    height: usize,
    spacing: f64,
    px: Vec<f64>,
    py: Vec<f64>,
}

impl VectorField {
    pub fn new(width: usize, height: usize, px: Vec<f64>, py: Vec<f64>) -> Result<Self> {
        let n = width * height;
        if px.len() != n || py.len() != n {
            return Err(Error::shape(n, format!("({}, {})", px.len(), py.len())));
        }
        Ok(Self {
            width,
            height,
            spacing: 1.0,
            px,
            py,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            spacing: 1.0,
            px: vec![0.0; n],
            py: vec![0.0; n],
        }
    }

    pub fn with_spacing(mut self, spacing: f64) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn px(&self) -> &[f64] {
        &self.px
    }

    pub fn py(&self) -> &[f64] {
        &self.py
    }

    pub fn px_mut(&mut self) -> &mut [f64] {
        &mut self.px
    }

    pub fn py_mut(&mut self) -> &mut [f64] {
        &mut self.py
    }

    /// `[px..., py...]`, the layout used when a field is treated as a flat
    /// vector by the solvers.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.px.len());
        out.extend_from_slice(&self.px);
        out.extend_from_slice(&self.py);
        out
    }

    pub fn from_flat(width: usize, height: usize, flat: &[f64]) -> Result<Self> {
        let n = width * height;
        if flat.len() != 2 * n {
            return Err(Error::shape(2 * n, flat.len()));
        }
        Self::new(width, height, flat[..n].to_vec(), flat[n..].to_vec())
    }

    pub fn dot(&self, other: &VectorField) -> f64 {
        linalg::dot(&self.px, &other.px) + linalg::dot(&self.py, &other.py)
    }

    /// Pixelwise Euclidean magnitude.
    pub fn magnitude(&self) -> GridImage {
        GridImage {
            width: self.width,
            height: self.height,
            spacing: self.spacing,
            data: self
                .px
                .iter()
                .zip(&self.py)
                .map(|(a, b)| a.hypot(*b))
                .collect(),
        }
    }
}
