//! Parallel-beam Radon transform with a ray-driven discretization.
//!
//! The image occupies a square-pixel patch centred at the origin whose
//! longer side has unit length. Each ray `{x : <x, theta> = s}` is sampled
//! at half-pixel steps; every sample contributes bilinear interpolation
//! weights times the step length. The adjoint scatters the same weights, so
//! `<Ru, g> = <u, R*g>` holds to rounding.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read, Write};

use rayon::prelude::*;

use super::{LinearMap, Shape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RadonGeometry {
    pub width: usize,
    pub height: usize,
    /// Projection angles in radians, strictly increasing.
    pub angles: Vec<f64>,
    pub n_offsets: usize,
    /// Offsets are uniform on `[-s_max, s_max]`.
    pub s_max: f64,
}

impl RadonGeometry {
    /// `n_angles` uniform on `[0, span)`; `s_max` defaults to the image
    /// half-diagonal.
    pub fn uniform(width: usize, height: usize, n_angles: usize, n_offsets: usize, span: f64) -> Self {
        let angles = (0..n_angles).map(|k| span * k as f64 / n_angles as f64).collect();
        let mut g = Self {
            width,
            height,
            angles,
            n_offsets,
            s_max: 0.0,
        };
        g.s_max = g.half_diagonal();
        g
    }

    pub fn pixel_size(&self) -> f64 {
        1.0 / self.width.max(self.height) as f64
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.pixel_size() * ((self.width * self.width + self.height * self.height) as f64).sqrt()
    }

    pub fn offsets(&self) -> Vec<f64> {
        let m = self.n_offsets;
        (0..m)
            .map(|l| -self.s_max + 2.0 * self.s_max * l as f64 / (m - 1) as f64)
            .collect()
    }

    /// Bin width of the offset axis.
    pub fn offset_step(&self) -> f64 {
        2.0 * self.s_max / (self.n_offsets - 1) as f64
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::DegenerateGeometry("empty image".into()));
        }
        if self.angles.is_empty() {
            return Err(Error::DegenerateGeometry("need at least one angle".into()));
        }
        if self.n_offsets < 3 {
            return Err(Error::DegenerateGeometry("need at least three offsets".into()));
        }
        if self.angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::DegenerateGeometry("angles must be strictly increasing".into()));
        }
        let r = self.half_diagonal();
        if self.s_max < r * (1.0 - 1e-12) {
            return Err(Error::DegenerateGeometry(format!(
                "offsets [-{s}, {s}] do not cover the image half-diagonal {r}",
                s = self.s_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Radon {
    geometry: RadonGeometry,
    offsets: Vec<f64>,
    trig: Vec<(f64, f64)>,
    pixel: f64,
    step: f64,
    samples: usize,
    t_start: f64,
    table: Option<RayTable>,
}

/// Interpolation weights of every ray in compressed rows, kept when small
/// enough to cache. Entries appear in walking order, so sums match the
/// uncached path exactly.
#[derive(Debug, Clone)]
struct RayTable {
    starts: Vec<usize>,
    pixels: Vec<u32>,
    weights: Vec<f64>,
}

/// Largest cached table, in upper-bound entries.
const TABLE_LIMIT: usize = 1 << 23;

/// Full-circle-of-directions Radon transform: `n_angles` uniform on `[0, pi)`.
pub fn make_radon(n_angles: usize, n_offsets: usize, width: usize, height: usize) -> Result<Radon> {
    Radon::new(RadonGeometry::uniform(width, height, n_angles, n_offsets, PI))
}

impl Radon {
    pub fn new(geometry: RadonGeometry) -> Result<Self> {
        geometry.validate()?;
        let pixel = geometry.pixel_size();
        let step = 0.5 * pixel;
        let reach = geometry.half_diagonal();
        let samples = (2.0 * reach / step).ceil() as usize;
        let t_start = -0.5 * samples as f64 * step + 0.5 * step;
        let mut op = Self {
            offsets: geometry.offsets(),
            trig: geometry.angles.iter().map(|a| (a.cos(), a.sin())).collect(),
            pixel,
            step,
            samples,
            t_start,
            geometry,
            table: None,
        };
        let bound = op.n_angles() * op.n_offsets() * samples * 4;
        if bound <= TABLE_LIMIT && op.domain_dim() <= u32::MAX as usize {
            op.table = Some(op.build_table());
        }
        Ok(op)
    }

    fn build_table(&self) -> RayTable {
        let mut t = RayTable { starts: vec![0], pixels: Vec::new(), weights: Vec::new() };
        for k in 0..self.n_angles() {
            for l in 0..self.n_offsets() {
                self.walk_ray(k, l, |p, wt| {
                    t.pixels.push(p as u32);
                    t.weights.push(wt);
                });
                t.starts.push(t.pixels.len());
            }
        }
        t
    }

    /// Visits the weights of ray `(k, l)`, from the table when cached.
    #[inline]
    fn each_weight(&self, k: usize, l: usize, mut f: impl FnMut(usize, f64)) {
        match &self.table {
            Some(t) => {
                let r = k * self.n_offsets() + l;
                for e in t.starts[r]..t.starts[r + 1] {
                    f(t.pixels[e] as usize, t.weights[e]);
                }
            }
            None => self.walk_ray(k, l, f),
        }
    }

    pub fn geometry(&self) -> &RadonGeometry {
        &self.geometry
    }

    pub fn n_angles(&self) -> usize {
        self.geometry.angles.len()
    }

    pub fn n_offsets(&self) -> usize {
        self.geometry.n_offsets
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// Calls `f(pixel_index, weight)` for every interpolation weight on the
    /// ray `(angle k, offset l)`.
    #[inline]
    fn walk_ray(&self, k: usize, l: usize, mut f: impl FnMut(usize, f64)) {
        let (w, h) = (self.geometry.width, self.geometry.height);
        let (c, s) = self.trig[k];
        let off = self.offsets[l];
        let (x0, y0) = (off * c, off * s);
        let half_w = 0.5 * w as f64;
        let half_h = 0.5 * h as f64;
        let inv = 1.0 / self.pixel;
        for m in 0..self.samples {
            let t = self.t_start + m as f64 * self.step;
            let x = x0 - t * s;
            let y = y0 + t * c;
            // continuous pixel coordinates, pixel centres at integers
            let col = x * inv + half_w - 0.5;
            let row = half_h - y * inv - 0.5;
            if col <= -1.0 || row <= -1.0 || col >= w as f64 || row >= h as f64 {
                continue;
            }
            let j0 = col.floor();
            let i0 = row.floor();
            let fx = col - j0;
            let fy = row - i0;
            let (j0, i0) = (j0 as isize, i0 as isize);
            let corners = [
                (i0, j0, (1.0 - fx) * (1.0 - fy)),
                (i0, j0 + 1, fx * (1.0 - fy)),
                (i0 + 1, j0, (1.0 - fx) * fy),
                (i0 + 1, j0 + 1, fx * fy),
            ];
            for (i, j, wt) in corners {
                if i >= 0 && j >= 0 && (i as usize) < h && (j as usize) < w && wt != 0.0 {
                    f(i as usize * w + j as usize, wt * self.step);
                }
            }
        }
    }
}

impl LinearMap for Radon {
    fn domain(&self) -> Shape {
        Shape::Image {
            width: self.geometry.width,
            height: self.geometry.height,
        }
    }

    fn range(&self) -> Shape {
        Shape::Sinogram {
            angles: self.n_angles(),
            offsets: self.n_offsets(),
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let m = self.n_offsets();
        let rows: Vec<Vec<f64>> = (0..self.n_angles())
            .into_par_iter()
            .map(|k| {
                (0..m)
                    .map(|l| {
                        let mut acc = 0.0;
                        self.each_weight(k, l, |p, wt| acc += wt * x[p]);
                        acc
                    })
                    .collect()
            })
            .collect();
        rows.concat()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let n = self.domain_dim();
        let m = self.n_offsets();
        // one partial image per angle, summed in angle order so the result
        // does not depend on the thread count
        let partials: Vec<Vec<f64>> = (0..self.n_angles())
            .into_par_iter()
            .map(|k| {
                let mut img = vec![0.0; n];
                for l in 0..m {
                    let g = y[k * m + l];
                    if g != 0.0 {
                        self.each_weight(k, l, |p, wt| img[p] += wt * g);
                    }
                }
                img
            })
            .collect();
        let mut out = vec![0.0; n];
        for p in &partials {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        out
    }
}

/// Radon data over `(angle, offset)`, angle-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub angles: Vec<f64>,
    pub n_offsets: usize,
    pub s_max: f64,
    pub data: Vec<f64>,
}

impl Sinogram {
    pub fn from_radon(op: &Radon, data: Vec<f64>) -> Result<Self> {
        if data.len() != op.range_dim() {
            return Err(Error::shape(op.range_dim(), data.len()));
        }
        Ok(Self {
            angles: op.geometry().angles.clone(),
            n_offsets: op.n_offsets(),
            s_max: op.geometry().s_max,
            data,
        })
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn get(&self, angle: usize, offset: usize) -> f64 {
        self.data[angle * self.n_offsets + offset]
    }

    /// Header `angles=<n>,offsets=<m>,smax=<v>`, then one row per angle.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "angles={},offsets={},smax={}",
            self.n_angles(),
            self.n_offsets,
            self.s_max
        )?;
        for row in self.data.chunks(self.n_offsets) {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Reads the CSV form; angles are taken as uniform on `[0, pi)`.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut lines = BufReader::new(input).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty sinogram file".into()))??;
        let mut n_angles = None;
        let mut n_offsets = None;
        let mut s_max = None;
        for field in header.trim().split(',') {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad sinogram header field {field:?}")))?;
            let bad = || Error::Parse(format!("bad value for {key}: {value:?}"));
            match key.trim() {
                "angles" => n_angles = Some(value.trim().parse::<usize>().map_err(|_| bad())?),
                "offsets" => n_offsets = Some(value.trim().parse::<usize>().map_err(|_| bad())?),
                "smax" => s_max = Some(value.trim().parse::<f64>().map_err(|_| bad())?),
                other => return Err(Error::Parse(format!("unknown sinogram header key {other:?}"))),
            }
        }
        let (n_angles, n_offsets, s_max) = match (n_angles, n_offsets, s_max) {
            (Some(a), Some(o), Some(s)) => (a, o, s),
            _ => return Err(Error::Parse("sinogram header needs angles, offsets and smax".into())),
        };
        let mut data = Vec::with_capacity(n_angles * n_offsets);
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse(format!("line {}: bad number", k + 2)))?;
            if row.len() != n_offsets {
                return Err(Error::Parse(format!(
                    "line {}: expected {n_offsets} values, found {}",
                    k + 2,
                    row.len()
                )));
            }
            data.extend(row);
        }
        if data.len() != n_angles * n_offsets {
            return Err(Error::Parse(format!(
                "expected {n_angles} sinogram rows, found {}",
                data.len() / n_offsets.max(1)
            )));
        }
        Ok(Self {
            angles: (0..n_angles).map(|k| PI * k as f64 / n_angles as f64).collect(),
            n_offsets,
            s_max,
            data,
        })
    }
}
