use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{ComplexGrid, GridImage};

/// A reusable unitary 2D DFT plan for one grid shape.
#[derive(Clone)]
pub struct Dft2 {
    width: usize,
    height: usize,
    scale: f64,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Dft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dft2")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

impl Dft2 {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "DFT needs a nonempty grid");
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            scale: 1.0 / ((width * height) as f64).sqrt(),
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// In-place transform of a row-major buffer.
    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_inv, &self.col_inv);
    }

    fn run(&self, data: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        let (w, h) = (self.width, self.height);
        assert_eq!(data.len(), w * h);
        rows.process(data);
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for j in 0..w {
            for i in 0..h {
                column[i] = data[i * w + j];
            }
            cols.process(&mut column);
            for i in 0..h {
                data[i * w + j] = column[i] * self.scale;
            }
        }
    }

    pub fn forward_real(&self, u: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }
}

/// Unitary forward DFT (`1/sqrt(wh)` normalization).
pub fn dft2(u: &GridImage) -> ComplexGrid {
    let plan = Dft2::new(u.width(), u.height());
    let mut c = ComplexGrid::from_real(u);
    plan.forward_in_place(c.as_mut_slice());
    c
}

/// Unitary inverse DFT.
pub fn idft2(c: &ComplexGrid) -> ComplexGrid {
    let plan = Dft2::new(c.width(), c.height());
    let mut out = c.clone();
    plan.inverse_in_place(out.as_mut_slice());
    out
}
