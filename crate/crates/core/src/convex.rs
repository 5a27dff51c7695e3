//! Prox calculus: the [`ProxFn`] abstraction used by every splitting
//! solver, a handful of closed-form functionals and conjugate pairs, the
//! Moreau identity residual and the Moreau–Yosida gradient.

use crate::error::Result;
use crate::grid::VectorField;
use crate::linalg;

/// A proper convex lsc functional with an accessible proximal map.
///
/// `prox(x, t)` returns `argmin_u t f(u) + |u - x|^2 / 2`.
pub trait ProxFn: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    fn prox(&self, x: &[f64], t: f64) -> Result<Vec<f64>>;

    /// `prox` for maps evaluated by an inner iterative solve: `warm` holds
    /// solver state from the previous call (empty on the first) and is
    /// updated in place. Closed-form maps ignore it.
    fn prox_warm(&self, x: &[f64], t: f64, _warm: &mut Vec<f64>) -> Result<Vec<f64>> {
        self.prox(x, t)
    }

    /// Value of the convex conjugate, when a closed form exists. May be
    /// `+inf` outside the conjugate's domain.
    fn conj_value(&self, _p: &[f64]) -> Option<f64> {
        None
    }

    /// `prox_{s f*}(p)` through the Moreau identity
    /// `p = prox_{s f*}(p) + s prox_{f / s}(p / s)`.
    fn conj_prox(&self, p: &[f64], s: f64) -> Result<Vec<f64>> {
        let scaled: Vec<f64> = p.iter().map(|v| v / s).collect();
        let inner = self.prox(&scaled, 1.0 / s)?;
        Ok(p.iter().zip(&inner).map(|(a, b)| a - s * b).collect())
    }
}

impl<T: ProxFn + ?Sized> ProxFn for &T {
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn prox(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        (**self).prox(x, t)
    }
    fn prox_warm(&self, x: &[f64], t: f64, warm: &mut Vec<f64>) -> Result<Vec<f64>> {
        (**self).prox_warm(x, t, warm)
    }
    fn conj_value(&self, p: &[f64]) -> Option<f64> {
        (**self).conj_value(p)
    }
    fn conj_prox(&self, p: &[f64], s: f64) -> Result<Vec<f64>> {
        (**self).conj_prox(p, s)
    }
}

impl<T: ProxFn + ?Sized> ProxFn for Box<T> {
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn prox(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        (**self).prox(x, t)
    }
    fn prox_warm(&self, x: &[f64], t: f64, warm: &mut Vec<f64>) -> Result<Vec<f64>> {
        (**self).prox_warm(x, t, warm)
    }
    fn conj_value(&self, p: &[f64]) -> Option<f64> {
        (**self).conj_value(p)
    }
    fn conj_prox(&self, p: &[f64], s: f64) -> Result<Vec<f64>> {
        (**self).conj_prox(p, s)
    }
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Tolerance used when deciding whether a point lies in an indicator's set.
const FEASIBILITY_TOL: f64 = 1e-9;

/// `f = 0`. Its conjugate is the indicator of `{0}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl ProxFn for Zero {
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn prox(&self, x: &[f64], _t: f64) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }
    fn conj_value(&self, p: &[f64]) -> Option<f64> {
        Some(if linalg::max_abs(p) <= FEASIBILITY_TOL { 0.0 } else { f64::INFINITY })
    }
    fn conj_prox(&self, p: &[f64], _s: f64) -> Result<Vec<f64>> {
        Ok(vec![0.0; p.len()])
    }
}

/// `f(x) = w/2 |x|^2`, self-conjugate up to scaling.
#[derive(Debug, Clone, Copy)]
pub struct HalfSquaredNorm {
    pub weight: f64,
}

impl ProxFn for HalfSquaredNorm {
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.weight * linalg::dot(x, x)
    }
    fn prox(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(linalg::scale(x, 1.0 / (1.0 + t * self.weight)))
    }
    fn conj_value(&self, p: &[f64]) -> Option<f64> {
        Some(0.5 * linalg::dot(p, p) / self.weight)
    }
}

/// `f(x) = w/2 |x - c|^2`.
#[derive(Debug, Clone)]
pub struct QuadraticAround {
    pub weight: f64,
    pub center: Vec<f64>,
}

impl ProxFn for QuadraticAround {
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.weight * linalg::dist(x, &self.center).powi(2)
    }
    fn prox(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let tw = t * self.weight;
        Ok(x.iter().zip(&self.center).map(|(a, c)| (a + tw * c) / (1.0 + tw)).collect())
    }
    fn conj_value(&self, p: &[f64]) -> Option<f64> {
        Some(0.5 * linalg::dot(p, p) / self.weight + linalg::dot(p, &self.center))
    }
}

/// `f(x) = w |x|_1`; conjugate is the indicator of `{|p|_inf <= w}`.
#[derive(Debug, Clone, Copy)]
pub struct L1Norm {
    pub weight: f64,
}

impl ProxFn for L1Norm {
    fn value(&self, x: &[f64]) -> f64 {
        self.weight * x.iter().map(|v| v.abs()).sum::<f64>()
    }
    fn prox(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(x.iter().map(|&v| soft_threshold(v, t * self.weight)).collect())
    }
    fn conj_value(&self, p: &[f64]) -> Option<f64> {
        Some(if linalg::max_abs(p) <= self.weight * (1.0 + FEASIBILITY_TOL) {
            0.0
        } else {
            f64::INFINITY
        })
    }
    fn conj_prox(&self, p: &[f64], _s: f64) -> Result<Vec<f64>> {
        Ok(p.iter().map(|v| v.clamp(-self.weight, self.weight)).collect())
    }
}

/// Isotropic `f(p) = w sum_ij |p_ij|_2` on a flat `[px, py]` field; the
/// discrete total variation once composed with the gradient. The conjugate
/// is the indicator of the pixelwise ball of radius `w`.
#[derive(Debug, Clone, Copy)]
pub struct L21Norm {
    pub weight: f64,
}

impl ProxFn for L21Norm {
    fn value(&self, p: &[f64]) -> f64 {
        let n = p.len() / 2;
        let (px, py) = p.split_at(n);
        self.weight * px.iter().zip(py).map(|(a, b)| a.hypot(*b)).sum::<f64>()
    }
    fn prox(&self, p: &[f64], t: f64) -> Result<Vec<f64>> {
        let n = p.len() / 2;
        let r = t * self.weight;
        let mut out = p.to_vec();
        for k in 0..n {
            let m = p[k].hypot(p[n + k]);
            let f = if m > r { 1.0 - r / m } else { 0.0 };
            out[k] *= f;
            out[n + k] *= f;
        }
        Ok(out)
    }
    fn conj_value(&self, p: &[f64]) -> Option<f64> {
        let n = p.len() / 2;
        let worst = (0..n).map(|k| p[k].hypot(p[n + k])).fold(0.0, f64::max);
        Some(if worst <= self.weight * (1.0 + FEASIBILITY_TOL) {
            0.0
        } else {
            f64::INFINITY
        })
    }
    fn conj_prox(&self, p: &[f64], _s: f64) -> Result<Vec<f64>> {
        Ok(project_ball_flat(p, self.weight))
    }
}

/// `f(v) = <r, v> + indicator_[0,1](v)`: the relaxed two-phase data term.
#[derive(Debug, Clone)]
pub struct LinearOnUnitBox {
    pub r: Vec<f64>,
}

impl ProxFn for LinearOnUnitBox {
    fn value(&self, v: &[f64]) -> f64 {
        let tol = FEASIBILITY_TOL;
        if v.iter().any(|&x| x < -tol || x > 1.0 + tol) {
            return f64::INFINITY;
        }
        linalg::dot(&self.r, v)
    }
    fn prox(&self, v: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(v.iter().zip(&self.r).map(|(x, r)| (x - t * r).clamp(0.0, 1.0)).collect())
    }
    /// `sup_{v in [0,1]} <q - r, v> = sum max(q - r, 0)`
    fn conj_value(&self, q: &[f64]) -> Option<f64> {
        Some(q.iter().zip(&self.r).map(|(a, r)| (a - r).max(0.0)).sum())
    }
}

/// Separable sum over consecutive blocks of the argument, for splitting a
/// stacked operator `[A; B]`.
pub struct BlockSum {
    blocks: Vec<(usize, Box<dyn ProxFn>)>,
}

impl BlockSum {
    pub fn new(blocks: Vec<(usize, Box<dyn ProxFn>)>) -> Self {
        Self { blocks }
    }

    fn ranges(&self) -> impl Iterator<Item = (std::ops::Range<usize>, &dyn ProxFn)> {
        let mut start = 0;
        self.blocks.iter().map(move |(len, f)| {
            let r = start..start + len;
            start += len;
            (r, f.as_ref())
        })
    }
}

impl ProxFn for BlockSum {
    fn value(&self, x: &[f64]) -> f64 {
        self.ranges().map(|(r, f)| f.value(&x[r])).sum()
    }
    fn prox(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(x.len());
        for (r, f) in self.ranges() {
            out.extend(f.prox(&x[r], t)?);
        }
        Ok(out)
    }
    fn conj_value(&self, p: &[f64]) -> Option<f64> {
        self.ranges().map(|(r, f)| f.conj_value(&p[r])).sum()
    }
    fn conj_prox(&self, p: &[f64], s: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(p.len());
        for (r, f) in self.ranges() {
            out.extend(f.conj_prox(&p[r], s)?);
        }
        Ok(out)
    }
}

/// Pixelwise projection onto `{|p_ij|_2 <= radius}`.
pub fn project_ball(p: &VectorField, radius: f64) -> VectorField {
    assert!(radius > 0.0, "ball radius must be positive");
    let flat = project_ball_flat(&p.to_flat(), radius);
    VectorField::from_flat(p.width(), p.height(), &flat)
        .expect("same shape")
        .with_spacing(p.spacing())
}

fn project_ball_flat(p: &[f64], radius: f64) -> Vec<f64> {
    let n = p.len() / 2;
    let mut out = p.to_vec();
    for k in 0..n {
        let m = p[k].hypot(p[n + k]);
        if m > radius {
            let f = radius / m;
            out[k] *= f;
            out[n + k] *= f;
        }
    }
    out
}

/// `|v - prox_{tJ}(v) - t prox_{J*/t}(v / t)|_2`; zero exactly when the
/// two maps form a conjugate pair.
pub fn moreau_residual(
    prox_j: impl Fn(&[f64], f64) -> Vec<f64>,
    prox_jstar: impl Fn(&[f64], f64) -> Vec<f64>,
    v: &[f64],
    t: f64,
) -> f64 {
    let a = prox_j(v, t);
    let scaled: Vec<f64> = v.iter().map(|x| x / t).collect();
    let b = prox_jstar(&scaled, 1.0 / t);
    v.iter()
        .zip(a.iter().zip(&b))
        .map(|(x, (p, q))| (x - p - t * q).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Gradient of the Moreau–Yosida envelope `J_t(v) = min_w J(w) + |w - v|^2 / 2t`,
/// namely `(v - prox_{tJ}(v)) / t`.
pub fn moreau_yosida_grad(prox_j: impl Fn(&[f64], f64) -> Vec<f64>, v: &[f64], t: f64) -> Vec<f64> {
    let p = prox_j(v, t);
    v.iter().zip(&p).map(|(a, b)| (a - b) / t).collect()
}

/// A closed-form conjugate pair `(prox_{tJ}, prox_{sJ*})`.
pub struct ConjugatePair {
    pub name: &'static str,
    pub prox_j: fn(&[f64], f64) -> Vec<f64>,
    pub prox_jstar: fn(&[f64], f64) -> Vec<f64>,
}

/// The shipped pairs: `½|·|²` with itself, `|·|₁` with the unit
/// `ℓ∞`-ball indicator, and the isotropic `ℓ2,1` norm with the pixelwise
/// unit-ball indicator.
pub fn conjugate_pairs() -> Vec<ConjugatePair> {
    vec![
        ConjugatePair {
            name: "half_squared_norm",
            prox_j: |v, t| linalg::scale(v, 1.0 / (1.0 + t)),
            prox_jstar: |v, s| linalg::scale(v, 1.0 / (1.0 + s)),
        },
        ConjugatePair {
            name: "l1_vs_linf_ball",
            prox_j: |v, t| v.iter().map(|&x| soft_threshold(x, t)).collect(),
            prox_jstar: |v, _| v.iter().map(|x| x.clamp(-1.0, 1.0)).collect(),
        },
        ConjugatePair {
            name: "l21_vs_pixel_ball",
            prox_j: |v, t| L21Norm { weight: 1.0 }.prox(v, t).expect("closed form"),
            prox_jstar: |v, _| project_ball_flat(v, 1.0),
        },
    ]
}
