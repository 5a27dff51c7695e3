//! Data-fidelity terms `D(v, y)` evaluated at `v = Au`.
//!
//! The Poisson term is `sum v - y log v`, which differs from the KL
//! divergence by the data-only constant `sum y log y - y`.

use crate::convex::{soft_threshold, ProxFn};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FidelityKind {
    /// `½|v - y|²`, Gaussian noise.
    L2,
    /// `sum v - y log v`, Poisson noise.
    Kl,
    /// `|v - y|_1`, impulse noise.
    L1,
}

impl std::str::FromStr for FidelityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Self::L2),
            "kl" => Ok(Self::Kl),
            "l1" => Ok(Self::L1),
            other => Err(Error::Parse(format!("unknown fidelity '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fidelity {
    kind: FidelityKind,
    y: Vec<f64>,
}

impl Fidelity {
    pub fn new(kind: FidelityKind, y: Vec<f64>) -> Result<Self> {
        if kind == FidelityKind::Kl {
            if let Some(&bad) = y.iter().find(|&&v| v < 0.0) {
                return Err(Error::DomainViolation(format!("kl data must be nonnegative, found {bad}")));
            }
        }
        Ok(Self { kind, y })
    }

    pub fn l2(y: Vec<f64>) -> Self {
        Self { kind: FidelityKind::L2, y }
    }

    pub fn kind(&self) -> FidelityKind {
        self.kind
    }

    pub fn data(&self) -> &[f64] {
        &self.y
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.y.len() {
            return Err(Error::shape(self.y.len(), v.len()));
        }
        Ok(())
    }

    pub fn value(&self, v: &[f64]) -> Result<f64> {
        self.check(v)?;
        Ok(match self.kind {
            FidelityKind::L2 => 0.5 * v.iter().zip(&self.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
            FidelityKind::L1 => v.iter().zip(&self.y).map(|(a, b)| (a - b).abs()).sum(),
            FidelityKind::Kl => {
                let mut total = 0.0;
                for (&vi, &yi) in v.iter().zip(&self.y) {
                    if vi < 0.0 || (yi > 0.0 && vi <= 0.0) {
                        return Err(Error::DomainViolation(format!("kl evaluated at {vi} with data {yi}")));
                    }
                    total += vi - if yi > 0.0 { yi * vi.ln() } else { 0.0 };
                }
                total
            }
        })
    }

    pub fn gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        match self.kind {
            FidelityKind::L2 => Ok(linalg::sub(v, &self.y)),
            FidelityKind::L1 => Err(Error::NonSmooth("l1 fidelity")),
            FidelityKind::Kl => v
                .iter()
                .zip(&self.y)
                .map(|(&vi, &yi)| {
                    if vi <= 0.0 {
                        Err(Error::DomainViolation(format!("kl gradient at {vi}")))
                    } else {
                        Ok(1.0 - yi / vi)
                    }
                })
                .collect(),
        }
    }

    /// `argmin_w t D(w, y) + ½|w - v|²`
    pub fn prox(&self, v: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check(v)?;
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("prox step must be positive, got {t}")));
        }
        Ok(match self.kind {
            FidelityKind::L2 => v.iter().zip(&self.y).map(|(a, b)| (a + t * b) / (1.0 + t)).collect(),
            FidelityKind::L1 => v.iter().zip(&self.y).map(|(a, b)| b + soft_threshold(a - b, t)).collect(),
            // positive root of w² + (t - v) w - t y = 0
            FidelityKind::Kl => v
                .iter()
                .zip(&self.y)
                .map(|(&a, &b)| {
                    let c = a - t;
                    0.5 * (c + (c * c + 4.0 * t * b).sqrt())
                })
                .collect(),
        })
    }

    /// Conjugate `D*(p) = sup_v <p, v> - D(v, y)`; `+inf` outside its domain.
    pub fn conj_value(&self, p: &[f64]) -> f64 {
        match self.kind {
            FidelityKind::L2 => 0.5 * linalg::dot(p, p) + linalg::dot(p, &self.y),
            FidelityKind::L1 => {
                if linalg::max_abs(p) <= 1.0 + 1e-9 {
                    linalg::dot(p, &self.y)
                } else {
                    f64::INFINITY
                }
            }
            FidelityKind::Kl => {
                let mut total = 0.0;
                for (&pi, &yi) in p.iter().zip(&self.y) {
                    if yi == 0.0 {
                        if pi > 1.0 + 1e-12 {
                            return f64::INFINITY;
                        }
                    } else if pi >= 1.0 {
                        return f64::INFINITY;
                    } else {
                        total += yi * yi.ln() - yi - yi * (1.0 - pi).ln();
                    }
                }
                total
            }
        }
    }
}

impl ProxFn for Fidelity {
    fn value(&self, x: &[f64]) -> f64 {
        Fidelity::value(self, x).unwrap_or(f64::INFINITY)
    }
    fn prox(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Fidelity::prox(self, x, t)
    }
    fn conj_value(&self, p: &[f64]) -> Option<f64> {
        Some(Fidelity::conj_value(self, p))
    }
}
