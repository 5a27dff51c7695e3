//! Regularization functionals: quadratic Tikhonov, discrete total variation
//! and the distance to a finite prototype set.
//!
//! All values are plain discrete sums (no pixel-area factor), so each
//! gradient or subgradient below is the exact derivative of the value.

use std::path::Path;

use crate::convex::{L1Norm, L21Norm, ProxFn};
use crate::error::{Error, Result};
use crate::fidelity::Fidelity;
use crate::grid::{divergence, gradient, io, laplacian, GridImage, VectorField};
use crate::linalg;
use crate::operators::{make_gradient, LinearMap};
use crate::solvers::{pdhg, SolverConfig, StopCriterion};

/// Gradient magnitudes below this are treated as zero when selecting a
/// subgradient.
pub const SUBGRADIENT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerKind {
    TikhonovL2,
    TikhonovGrad,
    TvIso,
    TvAniso,
    ProtoDist,
}

impl std::str::FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tikhonov_l2" => Ok(Self::TikhonovL2),
            "tikhonov_grad" => Ok(Self::TikhonovGrad),
            "tv_iso" => Ok(Self::TvIso),
            "tv_aniso" => Ok(Self::TvAniso),
            "proto_dist" => Ok(Self::ProtoDist),
            other => Err(Error::Parse(format!("unknown regularizer '{other}'"))),
        }
    }
}

/// Inner solver settings for the total-variation prox.
#[derive(Debug, Clone, Copy)]
pub struct TvProxOptions {
    pub max_iters: usize,
    /// Fixed-point residual at which the inner primal–dual solve stops.
    pub tol: f64,
    /// Residual above which hitting `max_iters` is an error rather than a
    /// logged warning.
    pub fail_tol: f64,
}

impl Default for TvProxOptions {
    fn default() -> Self {
        Self {
            max_iters: 50_000,
            tol: 1e-10,
            fail_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Regularizer {
    kind: RegularizerKind,
    weight: f64,
    width: usize,
    height: usize,
    spacing: f64,
    prototypes: Vec<Vec<f64>>,
    rho0: f64,
    tv_options: TvProxOptions,
}

/// A subgradient element with the pixels where the selection was made at a
/// kink (`false`) rather than from a unique derivative (`true`).
#[derive(Debug, Clone)]
pub struct Subgradient {
    pub element: GridImage,
    pub smooth: Vec<bool>,
}

impl Subgradient {
    pub fn is_smooth(&self) -> bool {
        self.smooth.iter().all(|&s| s)
    }
}

impl Regularizer {
    /// Regularizer of the given kind on a `width x height` grid. Use
    /// [`Regularizer::proto_dist`] for the prototype distance.
    pub fn new(kind: RegularizerKind, weight: f64, width: usize, height: usize) -> Result<Self> {
        if kind == RegularizerKind::ProtoDist {
            return Err(Error::InvalidArgument("prototype distance needs a prototype set".into()));
        }
        check_weight(weight)?;
        Ok(Self {
            kind,
            weight,
            width,
            height,
            spacing: 1.0,
            prototypes: Vec::new(),
            rho0: 0.0,
            tv_options: TvProxOptions::default(),
        })
    }

    /// `weight * min_i |u - p_i| + rho0 |u|^2`.
    pub fn proto_dist(weight: f64, prototypes: &[GridImage], rho0: f64) -> Result<Self> {
        check_weight(weight)?;
        let first = prototypes
            .first()
            .ok_or_else(|| Error::InvalidArgument("prototype set is empty".into()))?;
        for p in prototypes {
            first.check_shape(p)?;
        }
        if !(rho0 >= 0.0) {
            return Err(Error::InvalidArgument(format!("rho0 must be nonnegative, got {rho0}")));
        }
        Ok(Self {
            kind: RegularizerKind::ProtoDist,
            weight,
            width: first.width(),
            height: first.height(),
            spacing: first.spacing(),
            prototypes: prototypes.iter().map(|p| p.as_slice().to_vec()).collect(),
            rho0,
            tv_options: TvProxOptions::default(),
        })
    }

    /// Prototype set read from every PGM/CSV image in `dir`, in file-name order.
    pub fn proto_dist_from_dir(weight: f64, dir: impl AsRef<Path>, rho0: f64) -> Result<Self> {
        Self::proto_dist(weight, &io::load_image_dir(dir)?, rho0)
    }

    pub fn with_spacing(mut self, spacing: f64) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn with_tv_options(mut self, options: TvProxOptions) -> Self {
        self.tv_options = options;
        self
    }

    pub fn kind(&self) -> RegularizerKind {
        self.kind
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    fn image(&self, x: &[f64]) -> GridImage {
        GridImage::new(self.width, self.height, x.to_vec())
            .expect("regularizer argument has the grid's length")
            .with_spacing(self.spacing)
    }

    fn check(&self, u: &GridImage) -> Result<()> {
        if (u.width(), u.height()) != (self.width, self.height) {
            return Err(Error::shape(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", u.width(), u.height()),
            ));
        }
        Ok(())
    }

    pub fn value(&self, u: &GridImage) -> Result<f64> {
        self.check(u)?;
        let u = &u.clone().with_spacing(self.spacing);
        let a = self.weight;
        Ok(match self.kind {
            RegularizerKind::TikhonovL2 => 0.5 * a * u.dot(u),
            RegularizerKind::TikhonovGrad => {
                let g = gradient(u);
                0.5 * a * g.dot(&g)
            }
            RegularizerKind::TvIso => a * gradient(u).magnitude().sum(),
            RegularizerKind::TvAniso => {
                let g = gradient(u);
                a * g.px().iter().chain(g.py()).map(|v| v.abs()).sum::<f64>()
            }
            RegularizerKind::ProtoDist => {
                a * self.nearest(u.as_slice()).1 + self.rho0 * u.dot(u)
            }
        })
    }

    /// Index of and distance to the nearest prototype; ties go to the lowest index.
    fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.prototypes.iter().enumerate() {
            let d = linalg::dist(x, p);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    pub fn subgradient(&self, u: &GridImage) -> Result<Subgradient> {
        self.check(u)?;
        let u = &u.clone().with_spacing(self.spacing);
        let a = self.weight;
        let n = u.len();
        match self.kind {
            RegularizerKind::TikhonovL2 => Ok(Subgradient {
                element: u.map(|v| a * v),
                smooth: vec![true; n],
            }),
            RegularizerKind::TikhonovGrad => Ok(Subgradient {
                element: laplacian(u).map(|v| -a * v),
                smooth: vec![true; n],
            }),
            RegularizerKind::TvIso | RegularizerKind::TvAniso => {
                let g = gradient(u);
                let mut smooth = vec![true; n];
                let mut q = VectorField::zeros(u.width(), u.height()).with_spacing(u.spacing());
                for k in 0..n {
                    let (px, py) = (g.px()[k], g.py()[k]);
                    if self.kind == RegularizerKind::TvIso {
                        let m = px.hypot(py);
                        if m < SUBGRADIENT_EPS {
                            smooth[k] = false;
                        } else {
                            q.px_mut()[k] = px / m;
                            q.py_mut()[k] = py / m;
                        }
                    } else {
                        for (src, dst) in [(px, 0), (py, 1)] {
                            if src.abs() < SUBGRADIENT_EPS {
                                smooth[k] = false;
                            } else if dst == 0 {
                                q.px_mut()[k] = src.signum();
                            } else {
                                q.py_mut()[k] = src.signum();
                            }
                        }
                    }
                }
                Ok(Subgradient {
                    element: divergence(&q).map(|v| -a * v),
                    smooth,
                })
            }
            RegularizerKind::ProtoDist => Err(Error::Unsupported("subgradient of the prototype distance".into())),
        }
    }

    /// `argmin_w t R(w) + ½|w - v|²`
    pub fn prox(&self, v: &GridImage, t: f64) -> Result<GridImage> {
        self.check(v)?;
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("prox step must be positive, got {t}")));
        }
        let v = &v.clone().with_spacing(self.spacing);
        let ta = t * self.weight;
        match self.kind {
            RegularizerKind::TikhonovL2 => Ok(v.map(|x| x / (1.0 + ta))),
            RegularizerKind::TikhonovGrad => {
                let apply = |x: &[f64]| {
                    let lap = laplacian(&v.with_data(x.to_vec()));
                    x.iter().zip(lap.as_slice()).map(|(a, l)| a - ta * l).collect::<Vec<_>>()
                };
                let out = linalg::conjugate_gradient(apply, v.as_slice(), Some(v.as_slice()), 1e-10, 10 * v.len() + 100)?;
                Ok(v.with_data(out.x))
            }
            RegularizerKind::TvIso | RegularizerKind::TvAniso => self.tv_prox(v, ta, &mut Vec::new()),
            RegularizerKind::ProtoDist => {
                let shrink = 1.0 + 2.0 * t * self.rho0;
                let w = linalg::scale(v.as_slice(), 1.0 / shrink);
                let radius = ta / shrink;
                let (i, d) = self.nearest(&w);
                let p = &self.prototypes[i];
                let out = if d <= radius {
                    p.clone()
                } else {
                    w.iter().zip(p).map(|(wi, pi)| wi - radius * (wi - pi) / d).collect()
                };
                Ok(v.with_data(out))
            }
        }
    }

    /// ROF problem `min_u ½|u - v|² + weight TV(u)` by PDHG on the gradient
    /// splitting, started from the dual iterate in `warm` when it fits.
    /// Returns `v - grad* p` at the final dual iterate and leaves that
    /// iterate in `warm`.
    fn tv_prox(&self, v: &GridImage, weight: f64, warm: &mut Vec<f64>) -> Result<GridImage> {
        let op = make_gradient(v.width(), v.height(), v.spacing());
        let l = op.norm_estimate().max(1e-12);
        let cfg = SolverConfig {
            tau: 1.0 / l,
            sigma: 1.0 / l,
            tol: self.tv_options.tol,
            max_iters: self.tv_options.max_iters,
            criterion: StopCriterion::FixedPointResidual,
            ..Default::default()
        };
        let data = Fidelity::l2(v.as_slice().to_vec());
        let p0 = (warm.len() == 2 * v.len()).then_some(warm.as_slice());
        let out = if self.kind == RegularizerKind::TvIso {
            pdhg(&L21Norm { weight }, &data, &op, v.as_slice(), p0, &cfg)?
        } else {
            pdhg(&L1Norm { weight }, &data, &op, v.as_slice(), p0, &cfg)?
        };
        if !out.trace.converged() {
            let res = out.trace.last().map_or(f64::NAN, |r| r.primal_res.max(r.dual_res));
            if !(res <= self.tv_options.fail_tol) {
                return Err(Error::ConvergenceFailure {
                    what: "total variation prox",
                    iters: out.trace.iters(),
                    residual: res,
                });
            }
            log::warn!("total variation prox stopped at residual {res:e} after {} iterations", out.trace.iters());
        }
        let p = VectorField::from_flat(v.width(), v.height(), &out.p)?.with_spacing(v.spacing());
        let div = divergence(&p);
        *warm = out.p;
        Ok(v.with_data(linalg::add(v.as_slice(), div.as_slice())))
    }
}

fn check_weight(weight: f64) -> Result<()> {
    if weight > 0.0 && weight.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("regularization weight must be positive, got {weight}")))
    }
}

impl ProxFn for Regularizer {
    fn value(&self, x: &[f64]) -> f64 {
        Regularizer::value(self, &self.image(x)).unwrap_or(f64::INFINITY)
    }
    fn prox(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(Regularizer::prox(self, &self.image(x), t)?.into_vec())
    }
    fn prox_warm(&self, x: &[f64], t: f64, warm: &mut Vec<f64>) -> Result<Vec<f64>> {
        match self.kind {
            RegularizerKind::TvIso | RegularizerKind::TvAniso if t > 0.0 => {
                Ok(self.tv_prox(&self.image(x), t * self.weight, warm)?.into_vec())
            }
            _ => ProxFn::prox(self, x, t),
        }
    }
}
