//! Two-phase Chan–Vese segmentation through its convex relaxation.
//!
//! For fixed region constants the relaxed problem
//! `min_{0 <= v <= 1} alpha TV(v) + <(y - c1)^2 - (y - c2)^2, v>` is convex and
//! solved by PDHG. Rounds alternate that solve with the constant update;
//! the mask is `v >= threshold`.

use crate::convex::{L21Norm, LinearOnUnitBox};
use crate::error::{Error, Result};
use crate::grid::{self, GridImage};
use crate::operators::make_gradient;
use crate::solvers::{pdhg, SolverConfig, SolverTrace, StopCriterion};

/// Weight mass below which a region counts as empty.
const EMPTY_REGION: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SegOptions {
    pub alpha: f64,
    pub threshold: f64,
    pub outer_iters: usize,
    /// Initial `(c1, c2)`; two-means on the intensities when absent.
    pub init: Option<(f64, f64)>,
    /// Inner primal–dual solver settings.
    pub inner: SolverConfig,
}

impl Default for SegOptions {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            threshold: 0.5,
            outer_iters: 5,
            init: None,
            inner: SolverConfig {
                max_iters: 3000,
                tol: 1e-7,
                // just inside sigma tau |grad|^2 <= 1 with |grad|^2 < 8
                tau: 0.99 / 8f64.sqrt(),
                sigma: 0.99 / 8f64.sqrt(),
                criterion: StopCriterion::FixedPointResidual,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SegResult {
    /// Relaxed indicator with values in `[0, 1]`.
    pub v: GridImage,
    /// `v >= threshold`, as 0/1.
    pub mask: GridImage,
    pub c1: f64,
    pub c2: f64,
    pub energy: f64,
    /// Relaxed energy after each round.
    pub energies: Vec<f64>,
    /// A region emptied at some point (its constant was kept) or the final
    /// mask has a single phase.
    pub degenerate: bool,
    /// Inner iterations summed over rounds.
    pub inner_iters: usize,
}

/// Relaxed energy `alpha TV(v) + sum (y - c1)^2 v + (y - c2)^2 (1 - v)`.
pub fn relaxed_energy(y: &GridImage, v: &GridImage, alpha: f64, c1: f64, c2: f64) -> Result<f64> {
    y.check_shape(v)?;
    let tv: f64 = grid::gradient(v).magnitude().sum();
    let fit: f64 = y
        .as_slice()
        .iter()
        .zip(v.as_slice())
        .map(|(&yi, &vi)| (yi - c1).powi(2) * vi + (yi - c2).powi(2) * (1.0 - vi))
        .sum();
    Ok(alpha * tv + fit)
}

/// Two-means split of the intensities maximizing between-class variance.
/// Returns `(bright mean, dark mean)`; both equal for a constant image.
pub fn two_means(y: &GridImage) -> (f64, f64) {
    let mut v = y.as_slice().to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let total: f64 = v.iter().sum();
    let mut best = (f64::NEG_INFINITY, total / n as f64, total / n as f64);
    let mut left = 0.0;
    for k in 1..n {
        left += v[k - 1];
        if v[k] == v[k - 1] {
            continue;
        }
        let (m0, m1) = (left / k as f64, (total - left) / (n - k) as f64);
        let between = (k * (n - k)) as f64 * (m1 - m0).powi(2);
        if between > best.0 {
            best = (between, m1, m0);
        }
    }
    (best.1, best.2)
}

/// Solves the relaxed problem for fixed constants, warm-started from `v0`
/// and the dual field `p0`. Returns `v`, the dual field and the trace.
pub fn solve_relaxed(
    y: &GridImage,
    alpha: f64,
    c1: f64,
    c2: f64,
    v0: &GridImage,
    p0: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<(GridImage, Vec<f64>, SolverTrace)> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    y.check_shape(v0)?;
    let r: Vec<f64> = y.as_slice().iter().map(|&yi| (yi - c1).powi(2) - (yi - c2).powi(2)).collect();
    let k = make_gradient(y.width(), y.height(), y.spacing());
    let out = pdhg(&L21Norm { weight: alpha }, &LinearOnUnitBox { r }, &k, v0.as_slice(), p0, cfg)?;
    Ok((v0.with_data(out.u), out.p, out.trace))
}

/// Alternates relaxed solves with the constant update `c1, c2 = weighted
/// means of y` (weights `v` and `1 - v`, the exact minimizers of the
/// relaxed energy). A relaxed solve that fails to lower the energy is
/// discarded, so the energy never increases across rounds.
pub fn chan_vese(y: &GridImage, opts: &SegOptions) -> Result<SegResult> {
    if !y.is_finite() {
        return Err(Error::InvalidArgument("image has non-finite values".into()));
    }
    if !(opts.threshold > 0.0 && opts.threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold must lie in (0, 1), got {}", opts.threshold)));
    }
    let (mut c1, mut c2) = opts.init.unwrap_or_else(|| two_means(y));
    let mut degenerate = c1 == c2;
    let mut v = y.map(|_| 0.5);
    let mut p: Option<Vec<f64>> = None;
    let mut energy = relaxed_energy(y, &v, opts.alpha, c1, c2)?;
    let mut energies = Vec::with_capacity(opts.outer_iters);
    let mut inner_iters = 0;
    for _ in 0..opts.outer_iters {
        let (candidate, dual, trace) = solve_relaxed(y, opts.alpha, c1, c2, &v, p.as_deref(), &opts.inner)?;
        inner_iters += trace.iters();
        let e = relaxed_energy(y, &candidate, opts.alpha, c1, c2)?;
        if e <= energy {
            v = candidate;
            p = Some(dual);
        }
        let (w1, s1, w2, s2) = y.as_slice().iter().zip(v.as_slice()).fold((0.0, 0.0, 0.0, 0.0), |acc, (&yi, &vi)| {
            (acc.0 + vi, acc.1 + vi * yi, acc.2 + (1.0 - vi), acc.3 + (1.0 - vi) * yi)
        });
        if w1 > EMPTY_REGION {
            c1 = s1 / w1;
        } else {
            degenerate = true;
        }
        if w2 > EMPTY_REGION {
            c2 = s2 / w2;
        } else {
            degenerate = true;
        }
        energy = relaxed_energy(y, &v, opts.alpha, c1, c2)?;
        energies.push(energy);
    }
    let mask = v.map(|x| if x >= opts.threshold { 1.0 } else { 0.0 });
    let inside = mask.sum();
    if inside == 0.0 || inside == mask.len() as f64 {
        degenerate = true;
    }
    if degenerate {
        log::warn!("segmentation has a degenerate region");
    }
    Ok(SegResult {
        v,
        mask,
        c1,
        c2,
        energy,
        energies,
        degenerate,
        inner_iters,
    })
}
