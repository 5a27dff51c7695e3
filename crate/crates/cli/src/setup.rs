//! Turns a parsed config into concrete objects: ground truth, forward
//! operator, noisy data and solver settings. Nothing here iterates.

use std::f64::consts::PI;

use varipro::fidelity::FidelityKind;
use varipro::grid::{add_noise, io, GridImage, NoiseKind, NoiseSpec, SplitMix64};
use varipro::metrics::{make_phantom, PhantomKind};
use varipro::operators::{
    gaussian_kernel, make_blur, make_identity, make_subsampled_fourier, LinearMap, Radon, RadonGeometry,
};
use varipro::regularizers::RegularizerKind;
use varipro::solvers::{SolverConfig, StopCriterion};

use crate::config::{Kernel, Loaded, NoiseSection, SamplingMask, SolverSection};
use crate::error::CliError;

/// Stream indices derived from the run seed.
pub const NOISE_STREAM: u64 = 0;
pub const MASK_STREAM: u64 = 1;

/// CT presets as `(angles, span in degrees)`.
const FULL_VIEW: (usize, f64) = (180, 180.0);
const SPARSE_VIEW: (usize, f64) = (30, 180.0);
const LIMITED_ANGLE: (usize, f64) = (120, 120.0);

fn parsed<T: std::str::FromStr<Err = varipro::Error>>(field: &str, s: &str) -> Result<T, CliError> {
    s.parse().map_err(|e: varipro::Error| CliError::field(field, e.to_string()))
}

/// The ground-truth image: a phantom or an image file.
pub fn truth(loaded: &Loaded) -> Result<GridImage, CliError> {
    let p = &loaded.config.problem;
    match (&p.phantom, &p.image) {
        (Some(_), Some(_)) => Err(CliError::field("problem", "give either `phantom` or `image`, not both")),
        (None, None) => Err(CliError::field("problem", "needs `phantom` or `image`")),
        (Some(kind), None) => {
            let kind: PhantomKind = parsed("problem.phantom", kind)?;
            make_phantom(kind, p.size).map_err(|e| CliError::field("problem.size", e.to_string()))
        }
        (None, Some(path)) => Ok(io::load_image(existing(loaded, path, "problem.image")?)?),
    }
}

pub fn existing(loaded: &Loaded, path: &std::path::Path, field: &str) -> Result<std::path::PathBuf, CliError> {
    let full = loaded.resolve(path);
    if !full.is_file() {
        return Err(CliError::field(field, format!("no such file: {}", full.display())));
    }
    Ok(full)
}

pub fn kernel_image(k: &Kernel, field: &str) -> Result<GridImage, CliError> {
    match *k {
        Kernel::Gaussian { size, sigma } => {
            if size == 0 || !(sigma > 0.0) {
                return Err(CliError::field(field, "gaussian kernel needs size >= 1 and sigma > 0"));
            }
            Ok(gaussian_kernel(size, sigma))
        }
        Kernel::Box { width, height } => {
            if width == 0 || height == 0 {
                return Err(CliError::field(field, "box kernel needs a nonempty window"));
            }
            Ok(GridImage::filled(width, height, 1.0 / (width * height) as f64))
        }
    }
}

/// Signed frequency of DFT index `k` on an axis of length `n`.
fn frequency(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

pub fn sampling_mask(spec: &SamplingMask, w: usize, h: usize, seed: u64) -> Result<GridImage, CliError> {
    let low = |i: usize, j: usize, c: usize| frequency(i, h).unsigned_abs() < c as u64 && frequency(j, w).unsigned_abs() < c as u64;
    Ok(match *spec {
        SamplingMask::Full => GridImage::filled(w, h, 1.0),
        SamplingMask::Lines { spacing, center } => {
            if spacing == 0 {
                return Err(CliError::field("operator.mask.spacing", "must be at least 1"));
            }
            GridImage::from_fn(w, h, |i, _| {
                let keep = i % spacing == 0 || frequency(i, h).unsigned_abs() < center as u64;
                if keep { 1.0 } else { 0.0 }
            })
        }
        SamplingMask::Random { fraction, center } => {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(CliError::field("operator.mask.fraction", "must lie in [0, 1]"));
            }
            let mut rng = SplitMix64::new(SplitMix64::derive(seed, MASK_STREAM));
            GridImage::from_fn(w, h, |i, j| {
                let draw = rng.next_f64();
                if draw < fraction || low(i, j, center) { 1.0 } else { 0.0 }
            })
        }
    })
}

/// Forward operator for `kind` on a `w × h` grid.
pub fn operator(loaded: &Loaded, kind: &str, w: usize, h: usize, seed: u64) -> Result<Box<dyn LinearMap>, CliError> {
    let op = &loaded.config.operator;
    let unused = |field: &str, present: bool| {
        if present {
            Err(CliError::field(&format!("operator.{field}"), format!("not used by a {kind} operator")))
        } else {
            Ok(())
        }
    };
    let radon_fields = op.geometry.is_some() || op.angles.is_some() || op.span_degrees.is_some() || op.offsets.is_some();
    Ok(match kind {
        "identity" => {
            unused("kernel", op.kernel.is_some())?;
            unused("mask", op.mask.is_some())?;
            unused("geometry", radon_fields)?;
            Box::new(make_identity(w, h))
        }
        "blur" => {
            unused("mask", op.mask.is_some())?;
            unused("geometry", radon_fields)?;
            let k = op.kernel.clone().unwrap_or(Kernel::Gaussian { size: 5, sigma: 1.5 });
            Box::new(make_blur(&kernel_image(&k, "operator.kernel")?, w, h)?)
        }
        "fourier" => {
            unused("kernel", op.kernel.is_some())?;
            unused("geometry", radon_fields)?;
            let m = op.mask.clone().unwrap_or(SamplingMask::Random { fraction: 0.3, center: 4 });
            Box::new(make_subsampled_fourier(&sampling_mask(&m, w, h, seed)?)?)
        }
        "radon" => {
            unused("kernel", op.kernel.is_some())?;
            unused("mask", op.mask.is_some())?;
            let (angles, span) = match op.geometry.as_deref().unwrap_or("sparse") {
                "full" => FULL_VIEW,
                "sparse" => SPARSE_VIEW,
                "limited" => LIMITED_ANGLE,
                other => return Err(CliError::field("operator.geometry", format!("unknown preset '{other}'"))),
            };
            let angles = op.angles.unwrap_or(angles);
            let span = op.span_degrees.unwrap_or(span);
            if angles == 0 || !(span > 0.0 && span <= 180.0) {
                return Err(CliError::field("operator.angles", "need at least one angle over a span in (0, 180]"));
            }
            let offsets = op.offsets.unwrap_or(((w * w + h * h) as f64).sqrt().ceil() as usize);
            let geometry = RadonGeometry::uniform(w, h, angles, offsets, span.to_radians().min(PI));
            Box::new(Radon::new(geometry).map_err(|e| CliError::field("operator.offsets", e.to_string()))?)
        }
        other => return Err(CliError::field("operator.kind", format!("unknown operator '{other}'"))),
    })
}

/// Validated noise kind, `None` for noise-free data.
pub fn noise_kind(noise: &NoiseSection) -> Result<Option<NoiseKind>, CliError> {
    if noise.levels.is_some() {
        return Err(CliError::field("noise.levels", "only used by pnp-sweep"));
    }
    let Some(kind) = noise.kind.as_deref() else {
        if noise.level != 0.0 {
            return Err(CliError::field("noise.kind", "required when a level is given"));
        }
        return Ok(None);
    };
    let kind = match kind {
        "gaussian" => NoiseKind::Gaussian,
        "poisson" => NoiseKind::Poisson,
        "impulse" => NoiseKind::Impulse,
        other => return Err(CliError::field("noise.kind", format!("unknown noise '{other}'"))),
    };
    if noise.relative && kind != NoiseKind::Gaussian {
        return Err(CliError::field("noise.relative", "only gaussian levels can be relative"));
    }
    NoiseSpec { kind, level: noise.level, seed: 0 }
        .validate()
        .map_err(|e| CliError::field("noise.level", e.to_string()))?;
    Ok(Some(kind))
}

/// Adds the configured noise to flat data. Gaussian levels marked
/// `relative` are scaled by the largest clean magnitude.
pub fn noisy(clean: &[f64], noise: &NoiseSection, seed: u64) -> Result<Vec<f64>, CliError> {
    let Some(kind) = noise_kind(noise)? else {
        return Ok(clean.to_vec());
    };
    let scale = if noise.relative { clean.iter().fold(0.0f64, |m, v| m.max(v.abs())) } else { 1.0 };
    let spec = NoiseSpec {
        kind,
        level: noise.level * scale,
        seed: SplitMix64::derive(seed, NOISE_STREAM),
    };
    let flat = GridImage::new(clean.len(), 1, clean.to_vec())?;
    Ok(add_noise(&flat, &spec)?.into_vec())
}

pub fn fidelity_kind(loaded: &Loaded) -> Result<FidelityKind, CliError> {
    parsed("fidelity.kind", &loaded.config.fidelity.kind)
}

/// Regularizer kind, or `None` for `"none"`.
pub fn regularizer_kind(kind: Option<&str>) -> Result<Option<RegularizerKind>, CliError> {
    match kind.unwrap_or("tv_iso") {
        "none" => Ok(None),
        other => parsed("regularizer.kind", other).map(Some),
    }
}

/// Overlays the solver section on `base`, leaving steps the section does
/// not set for the caller to choose.
pub fn solver_config(s: &SolverSection, base: SolverConfig) -> Result<SolverConfig, CliError> {
    let mut cfg = base;
    if let Some(v) = s.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = s.tol {
        cfg.tol = v;
    }
    if let Some(v) = s.tau {
        cfg.tau = v;
    }
    if let Some(v) = s.sigma {
        cfg.sigma = v;
    }
    if let Some(v) = s.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = s.theta {
        cfg.theta = v;
    }
    if let Some(c) = &s.criterion {
        cfg.criterion = parsed::<StopCriterion>("solver.criterion", c)?;
    }
    cfg.validate().map_err(|e| CliError::field("solver", e.to_string()))?;
    Ok(cfg)
}
