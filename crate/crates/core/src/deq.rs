//! Deep-equilibrium style fixed-point reconstruction with fixed, analytic
//! maps in place of trained networks.
//!
//! The equilibrium map is `G(u) = u + eta A*(y - Au) - eta R(u)`. With
//! `eta (1 + L) <= 1`, `L = lambda_max(A*A)`, `mu = lambda_min(A*A)` and
//! `R - I` being `eps`-Lipschitz, `G` is Lipschitz with constant
//! `1 - eta (1 + mu) + eta eps`, a contraction when `eps < 1 + mu`. For
//! rank-deficient `A` the bound uses `mu = 0`.

use crate::error::{Error, Result};
use crate::grid::GridImage;
use crate::linalg::{self, DenseMatrix};
use crate::operators::{make_blur, Blur, LinearMap};
use crate::solvers::{IterRecord, SolverStatus, SolverTrace};

/// Consecutive non-contracting steps before giving up.
pub const NOT_CONTRACTIVE_STREAK: usize = 10;
/// Absolute slack on the contraction certificate.
pub const CONTRACTION_SLACK: f64 = 1e-6;
const ANDERSON_REG: f64 = 1e-10;
const ANDERSON_MAX_MEMORY: usize = 10;

/// A map with a certified Lipschitz constant.
pub trait LipschitzMap: Send + Sync {
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    /// Analytic upper bound on the Lipschitz constant.
    fn lipschitz_bound(&self) -> f64;
    /// Bound for `x -> apply(x) - x`.
    fn residual_lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound() + 1.0
    }
}

/// `x -> c x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledIdentity(pub f64);

impl LipschitzMap for ScaledIdentity {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        linalg::scale(x, self.0)
    }
    fn lipschitz_bound(&self) -> f64 {
        self.0.abs()
    }
    fn residual_lipschitz_bound(&self) -> f64 {
        (self.0 - 1.0).abs()
    }
}

/// `x -> s (k * x)` for a nonnegative kernel normalized to unit mass.
#[derive(Debug, Clone)]
pub struct LinearFilter {
    blur: Blur,
    scale: f64,
}

impl LinearFilter {
    pub fn new(kernel: &GridImage, width: usize, height: usize, scale: f64) -> Result<Self> {
        Ok(Self {
            blur: make_blur(kernel, width, height)?,
            scale,
        })
    }
}

impl LipschitzMap for LinearFilter {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        linalg::scale(&self.blur.apply(x), self.scale)
    }
    /// Young's inequality: a unit-mass nonnegative kernel has norm at most one.
    fn lipschitz_bound(&self) -> f64 {
        self.scale.abs()
    }
    fn residual_lipschitz_bound(&self) -> f64 {
        self.blur
            .symbol()
            .iter()
            .map(|z| (z * self.scale - 1.0).norm())
            .fold(0.0, f64::max)
    }
}

/// Pixelwise `x -> clamp(s x + b, lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampedAffine {
    pub scale: f64,
    pub offset: f64,
    pub lo: f64,
    pub hi: f64,
}

impl LipschitzMap for ClampedAffine {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| (self.scale * v + self.offset).clamp(self.lo, self.hi)).collect()
    }
    fn lipschitz_bound(&self) -> f64 {
        self.scale.abs()
    }
    /// The pixel map `t -> clamp(s t + b) - t` has slope `s - 1` or `-1`.
    fn residual_lipschitz_bound(&self) -> f64 {
        (self.scale - 1.0).abs().max(1.0)
    }
}

/// Sampled lower bound next to the analytic upper bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzCertificate {
    pub sampled: f64,
    pub bound: f64,
    pub consistent: bool,
}

/// Largest `|G(x) - G(z)| / |x - z|` over `pairs` pseudo-random pairs,
/// half of them small perturbations.
pub fn certify_lipschitz<G: LipschitzMap + ?Sized>(g: &G, dim: usize, pairs: usize, seed: u64) -> LipschitzCertificate {
    let mut sampled = 0.0f64;
    for k in 0..pairs as u64 {
        let x = linalg::random_vector(dim, seed.wrapping_add(2 * k));
        let mut d = linalg::random_vector(dim, seed.wrapping_add(2 * k + 1));
        if k % 2 == 1 {
            d = linalg::scale(&d, 1e-3);
        }
        let z = linalg::add(&x, &d);
        let num = linalg::dist(&g.apply(&x), &g.apply(&z));
        sampled = sampled.max(num / linalg::norm(&d));
    }
    let bound = g.lipschitz_bound();
    LipschitzCertificate {
        sampled,
        bound,
        consistent: sampled <= bound * (1.0 + 1e-9) + 1e-12,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateForm {
    /// `u + G(h)`
    LearnedGradient,
    /// `u - h + G(u)`
    VariationalNet,
    /// `G(u - h)`
    LearnedProx,
}

/// One unrolled update `(u, h) -> u+` built from a Lipschitz map.
pub struct UpdateMap<G> {
    pub form: UpdateForm,
    pub gamma: G,
}

impl<G: LipschitzMap> UpdateMap<G> {
    pub fn new(form: UpdateForm, gamma: G) -> Self {
        Self { form, gamma }
    }

    pub fn apply(&self, u: &[f64], h: &[f64]) -> Vec<f64> {
        match self.form {
            UpdateForm::LearnedGradient => linalg::add(u, &self.gamma.apply(h)),
            UpdateForm::VariationalNet => {
                let mut out = self.gamma.apply(u);
                linalg::axpy(&mut out, 1.0, &linalg::sub(u, h));
                out
            }
            UpdateForm::LearnedProx => self.gamma.apply(&linalg::sub(u, h)),
        }
    }
}

fn misfit<A: LinearMap + ?Sized>(a: &A, u: &[f64], y: &[f64]) -> f64 {
    0.5 * linalg::dist(&a.apply(u), y).powi(2)
}

/// Runs exactly `steps` updates `u <- Lambda(u, A*(Au - y))`. Each record
/// holds the data misfit after the step and `|h|` in `primal_res`.
pub fn run_unrolled<G, A>(scheme: &UpdateMap<G>, a: &A, y: &[f64], u0: &[f64], steps: usize) -> Result<(Vec<f64>, SolverTrace)>
where
    G: LipschitzMap,
    A: LinearMap + ?Sized,
{
    if steps == 0 {
        return Err(Error::InvalidArgument("unrolled scheme needs at least one step".into()));
    }
    if u0.len() != a.domain_dim() || y.len() != a.range_dim() {
        return Err(Error::shape(
            format!("{} unknowns and {} data", a.domain_dim(), a.range_dim()),
            format!("{} and {}", u0.len(), y.len()),
        ));
    }
    let mut u = u0.to_vec();
    let mut trace = SolverTrace::new();
    for _ in 0..steps {
        let h = a.adjoint(&linalg::sub(&a.apply(&u), y));
        u = scheme.apply(&u, &h);
        trace.records.push(IterRecord {
            energy: misfit(a, &u, y),
            gap: None,
            primal_res: linalg::norm(&h),
            dual_res: 0.0,
            iterate_norm: linalg::norm(&u),
        });
    }
    Ok((u, trace))
}

/// `G(u) = u + eta A*(y - Au) - eta R(u)`.
pub struct DeqOperator<A, R> {
    a: A,
    y: Vec<f64>,
    eta: f64,
    rmap: R,
    eps: f64,
    lipschitz: f64,
    mu: f64,
}

impl<A: LinearMap, R: LipschitzMap> DeqOperator<A, R> {
    /// Checks `eta < 1 / (L + 1)` and estimates the spectral bounds of `A*A`.
    pub fn new(a: A, y: Vec<f64>, eta: f64, rmap: R) -> Result<Self> {
        if y.len() != a.range_dim() {
            return Err(Error::shape(a.range_dim(), y.len()));
        }
        let lipschitz = a.norm_estimate().powi(2);
        if !(eta > 0.0 && eta < 1.0 / (lipschitz + 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "step {eta} must lie in (0, 1/(L+1)) with L = {lipschitz:.6}"
            )));
        }
        // lambda_min(A*A) = L - lambda_max(L I - A*A), shrunk by 1% for safety
        let n = a.domain_dim();
        let shifted = linalg::power_iteration(
            |x| {
                let mut out = linalg::scale(x, lipschitz);
                linalg::axpy(&mut out, -1.0, &a.normal(x));
                out
            },
            n,
            300,
        );
        let mu = (lipschitz - 1.01 * shifted).max(0.0);
        let eps = rmap.residual_lipschitz_bound();
        Ok(Self {
            a,
            y,
            eta,
            rmap,
            eps,
            lipschitz,
            mu,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `lambda_max(A*A)`
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Lower estimate of `lambda_min(A*A)`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Certified Lipschitz constant of `R - I`.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `1 - eta (1 + mu) + eta eps`
    pub fn contraction_bound(&self) -> f64 {
        1.0 - self.eta * (1.0 + self.mu) + self.eta * self.eps
    }

    pub fn is_certified_contraction(&self) -> bool {
        self.eps < 1.0 + self.mu
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let r = linalg::sub(&self.y, &self.a.apply(u));
        let mut out = u.to_vec();
        linalg::axpy(&mut out, self.eta, &self.a.adjoint(&r));
        linalg::axpy(&mut out, -self.eta, &self.rmap.apply(u));
        out
    }

    fn record(&self, u: &[f64], residual: f64) -> IterRecord {
        IterRecord {
            energy: misfit(&self.a, u, &self.y),
            gap: None,
            primal_res: residual,
            dual_res: 0.0,
            iterate_norm: linalg::norm(u),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeqOutcome {
    pub u: Vec<f64>,
    /// Largest observed ratio of consecutive step lengths.
    pub gamma_est: f64,
    /// `Some(true)` when the operator is a certified contraction and the
    /// observed ratio respects the bound.
    pub within_bound: Option<bool>,
    pub trace: SolverTrace,
}

/// Picard iteration `u <- G(u)` until `|u_{k+1} - u_k| <= tol`.
pub fn deq_solve<A: LinearMap, R: LipschitzMap>(
    op: &DeqOperator<A, R>,
    u0: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<DeqOutcome> {
    if u0.len() != op.a.domain_dim() {
        return Err(Error::shape(op.a.domain_dim(), u0.len()));
    }
    let mut u = u0.to_vec();
    let mut trace = SolverTrace::new();
    let mut prev_step: Option<f64> = None;
    let mut gamma_est = 0.0f64;
    let mut streak = 0;
    for k in 0..max_iters {
        let next = op.apply(&u);
        let step = linalg::dist(&next, &u);
        u = next;
        trace.records.push(op.record(&u, step));
        if step <= tol {
            trace.status = SolverStatus::Converged;
            break;
        }
        if let Some(prev) = prev_step {
            // ratios of steps near rounding level carry no information
            if step.min(prev) > 1e-9 * linalg::norm(&u).max(1.0) {
                let ratio = step / prev;
                gamma_est = gamma_est.max(ratio);
                streak = if ratio >= 1.0 { streak + 1 } else { 0 };
                if streak >= NOT_CONTRACTIVE_STREAK {
                    return Err(Error::NotContractive { ratio, steps: k + 1 });
                }
            }
        }
        prev_step = Some(step);
    }
    let within_bound = op
        .is_certified_contraction()
        .then(|| gamma_est <= op.contraction_bound() + CONTRACTION_SLACK);
    if within_bound == Some(false) {
        log::error!(
            "observed contraction ratio {gamma_est} exceeds the certified bound {}",
            op.contraction_bound()
        );
    }
    Ok(DeqOutcome {
        u,
        gamma_est,
        within_bound,
        trace,
    })
}

/// Type-II Anderson acceleration with memory `m`: each step combines the
/// last `m + 1` map evaluations with weights from a regularized least-squares
/// fit of the residuals. Ill-conditioned fits fall back to a Picard step.
pub fn anderson_accelerate<A: LinearMap, R: LipschitzMap>(
    op: &DeqOperator<A, R>,
    u0: &[f64],
    memory: usize,
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, SolverTrace)> {
    if !(1..=ANDERSON_MAX_MEMORY).contains(&memory) {
        return Err(Error::InvalidArgument(format!(
            "Anderson memory must lie in [1, {ANDERSON_MAX_MEMORY}], got {memory}"
        )));
    }
    if u0.len() != op.a.domain_dim() {
        return Err(Error::shape(op.a.domain_dim(), u0.len()));
    }
    let mut u = u0.to_vec();
    let mut trace = SolverTrace::new();
    // histories of residual and map-value differences
    let mut d_res: Vec<Vec<f64>> = Vec::new();
    let mut d_val: Vec<Vec<f64>> = Vec::new();
    let mut last: Option<(Vec<f64>, Vec<f64>)> = None;
    for _ in 0..max_iters {
        let g = op.apply(&u);
        let f = linalg::sub(&g, &u);
        let res = linalg::norm(&f);
        trace.records.push(op.record(&g, res));
        if res <= tol {
            trace.status = SolverStatus::Converged;
            // already at a fixed point: keep the iterate itself
            return Ok((if trace.iters() == 1 { u } else { g }, trace));
        }
        if let Some((f_prev, g_prev)) = &last {
            d_res.push(linalg::sub(&f, f_prev));
            d_val.push(linalg::sub(&g, g_prev));
            if d_res.len() > memory {
                d_res.remove(0);
                d_val.remove(0);
            }
        }
        last = Some((f.clone(), g.clone()));
        u = match anderson_weights(&d_res, &f) {
            Some(w) => {
                let mut next = g;
                for (wi, dv) in w.iter().zip(&d_val) {
                    linalg::axpy(&mut next, -wi, dv);
                }
                next
            }
            None => {
                if !d_res.is_empty() {
                    log::debug!("Anderson least squares ill-conditioned; taking a plain step");
                    d_res.clear();
                    d_val.clear();
                }
                g
            }
        };
    }
    Ok((u, trace))
}

/// Solves `(dF^T dF + reg I) w = dF^T f`; `None` when empty or unusable.
fn anderson_weights(d_res: &[Vec<f64>], f: &[f64]) -> Option<Vec<f64>> {
    let k = d_res.len();
    if k == 0 {
        return None;
    }
    let mut gram = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let v = linalg::dot(&d_res[i], &d_res[j]);
            gram.set(i, j, v);
            gram.set(j, i, v);
        }
    }
    let scale = (0..k).map(|i| gram.get(i, i)).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    for i in 0..k {
        gram.set(i, i, gram.get(i, i) + ANDERSON_REG * scale);
    }
    let rhs: Vec<f64> = d_res.iter().map(|d| linalg::dot(d, f)).collect();
    let w = gram.solve(&rhs).ok()?;
    let fine = w.iter().all(|v| v.is_finite()) && linalg::norm(&w) < 1e8;
    fine.then_some(w)
}

/// Shipped benchmark with contraction factor about 0.9: Gaussian blur,
/// `R = 0.25 I` and `eta = 0.4`.
pub fn contractive_benchmark(width: usize, height: usize, seed: u64) -> Result<DeqOperator<Blur, ScaledIdentity>> {
    let a = make_blur(&crate::operators::gaussian_kernel(5, 1.5), width, height)?;
    let y = a.apply(&linalg::random_vector(width * height, seed));
    DeqOperator::new(a, y, 0.4, ScaledIdentity(0.25))
}

/// Shipped counterexample: `R = -2 I` makes `R - I` 3-Lipschitz, beyond
/// `1 + mu = 2` for `A = I`, and the iteration expands.
pub fn expanding_counterexample(width: usize, height: usize) -> Result<DeqOperator<crate::operators::Identity, ScaledIdentity>> {
    let a = crate::operators::make_identity(width, height);
    let y = linalg::random_vector(width * height, 3);
    DeqOperator::new(a, y, 0.4, ScaledIdentity(-2.0))
}
