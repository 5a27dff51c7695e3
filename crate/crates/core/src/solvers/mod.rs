//! Iterative schemes: gradient descent, proximal point, forward–backward
//! splitting, primal–dual hybrid gradient and ADMM.
//!
//! Each solver is a deterministic loop that records one [`IterRecord`] per
//! iteration and finishes with [`SolverStatus::Converged`] or
//! [`SolverStatus::MaxIters`]. Hitting the iteration cap is not an error.

mod admm;
mod descent;
mod pdhg;

pub use admm::{admm, AdmmOutcome};
pub use descent::{forward_backward, gradient_descent, proximal_point};
pub use pdhg::{pdhg, PdhgOutcome};

use std::io::Write;

use crate::error::{Error, Result};
use crate::fidelity::{Fidelity, FidelityKind};
use crate::operators::LinearMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopCriterion {
    /// Primal–dual gap; solvers without a computable gap fall back to the
    /// fixed-point residual.
    Gap,
    FixedPointResidual,
    /// Energy change relative to `max(1, |energy|)`.
    EnergyDelta,
}

impl std::str::FromStr for StopCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gap" => Ok(Self::Gap),
            "fixed_point_residual" => Ok(Self::FixedPointResidual),
            "energy_delta" => Ok(Self::EnergyDelta),
            other => Err(Error::Parse(format!("unknown stopping criterion '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Primal step.
    pub tau: f64,
    /// Dual step (PDHG).
    pub sigma: f64,
    /// Penalty (ADMM).
    pub lambda: f64,
    /// Over-relaxation (PDHG).
    pub theta: f64,
    pub criterion: StopCriterion,
    /// PDHG: rescale steps that violate `sigma tau |A|^2 <= 1` instead of failing.
    pub auto_scale: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-8,
            tau: 1.0,
            sigma: 1.0,
            lambda: 1.0,
            theta: 1.0,
            criterion: StopCriterion::FixedPointResidual,
            auto_scale: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive("tau", self.tau)?;
        positive("sigma", self.sigma)?;
        positive("lambda", self.lambda)?;
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidArgument(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be nonnegative, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub energy: f64,
    pub gap: Option<f64>,
    pub primal_res: f64,
    pub dual_res: f64,
    pub iterate_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub records: Vec<IterRecord>,
    pub status: SolverStatus,
    /// Size of the rayon pool the solve ran under.
    pub threads: usize,
}

impl SolverTrace {
    pub(crate) fn new() -> Self {
        Self {
            records: Vec::new(),
            status: SolverStatus::MaxIters,
            threads: rayon::current_num_threads(),
        }
    }

    pub fn iters(&self) -> usize {
        self.records.len()
    }

    pub fn converged(&self) -> bool {
        self.status == SolverStatus::Converged
    }

    pub fn last(&self) -> Option<&IterRecord> {
        self.records.last()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }

    /// CSV with columns `iter,energy,gap,primal_res,dual_res`; the gap
    /// field is empty where no gap was computed.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iter,energy,gap,primal_res,dual_res")?;
        for (k, r) in self.records.iter().enumerate() {
            let gap = r.gap.map(|g| g.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{}", k + 1, r.energy, gap, r.primal_res, r.dual_res)?;
        }
        Ok(())
    }
}

/// A differentiable objective term.
pub trait Smooth {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Lipschitz constant of the gradient, when known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

/// `u -> D(Au, y)` with gradient `A* grad D(Au)`.
pub struct DataTerm<'a, A: ?Sized> {
    pub op: &'a A,
    pub fidelity: &'a Fidelity,
}

impl<'a, A: LinearMap + ?Sized> DataTerm<'a, A> {
    pub fn new(op: &'a A, fidelity: &'a Fidelity) -> Self {
        Self { op, fidelity }
    }
}

impl<A: LinearMap + ?Sized> Smooth for DataTerm<'_, A> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.fidelity.value(&self.op.apply(x))
    }
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.op.adjoint(&self.fidelity.gradient(&self.op.apply(x))?))
    }
    fn lipschitz(&self) -> Option<f64> {
        match self.fidelity.kind() {
            FidelityKind::L2 => Some(self.op.norm_estimate().powi(2)),
            _ => None,
        }
    }
}

/// Tracks consecutive energy increases for divergence detection.
pub(crate) struct DivergenceGuard {
    last: f64,
    streak: usize,
}

pub(crate) const DIVERGENCE_STREAK: usize = 10;

impl DivergenceGuard {
    pub(crate) fn new(initial: f64) -> Self {
        Self { last: initial, streak: 0 }
    }

    pub(crate) fn observe(&mut self, energy: f64, iter: usize) -> Result<()> {
        if !energy.is_finite() || energy > self.last {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.last = energy;
        if self.streak >= DIVERGENCE_STREAK {
            return Err(Error::Diverged(iter));
        }
        Ok(())
    }
}
