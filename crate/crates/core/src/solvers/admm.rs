use super::{pdhg, IterRecord, SolverConfig, SolverStatus, SolverTrace, StopCriterion};
use crate::convex::{ProxFn, QuadraticAround};
use crate::error::{Error, Result};
use crate::fidelity::{Fidelity, FidelityKind};
use crate::linalg;
use crate::operators::LinearMap;

const INNER_TOL: f64 = 1e-10;
const INNER_MAX_ITERS: usize = 5000;
const CG_TOL_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Scaled dual variable.
    pub h: Vec<f64>,
    pub trace: SolverTrace,
}

/// Scaled-form ADMM for `min_u D(Au, y) + R(u)` with splitting `u = v`:
///
/// ```text
/// u+ = argmin_u D(Au, y) + lambda/2 |u - v + h|^2
/// v+ = prox_{R / lambda}(u+ + h)
/// h+ = h + u+ - v+
/// ```
///
/// The `u` step is a conjugate gradient solve of
/// `(A*A + lambda I) u = A*y + lambda (v - h)` for the quadratic fidelity and
/// an inner primal–dual solve otherwise.
pub fn admm<A, R>(fid: &Fidelity, a: &A, reg: &R, u0: &[f64], cfg: &SolverConfig) -> Result<AdmmOutcome>
where
    A: LinearMap + ?Sized,
    R: ProxFn + ?Sized,
{
    cfg.validate()?;
    if u0.len() != a.domain_dim() {
        return Err(Error::shape(a.domain_dim(), u0.len()));
    }
    let n = u0.len();
    let lambda = cfg.lambda;
    let aty = a.adjoint(fid.data());
    let mut u = u0.to_vec();
    let mut v = u0.to_vec();
    let mut h = vec![0.0; n];
    let mut inner_dual: Option<Vec<f64>> = None;
    let mut reg_state = Vec::new();
    let mut trace = SolverTrace::new();
    for _ in 0..cfg.max_iters {
        let center = linalg::sub(&v, &h);
        u = match fid.kind() {
            FidelityKind::L2 => {
                let rhs: Vec<f64> = aty.iter().zip(&center).map(|(b, c)| b + lambda * c).collect();
                let normal = |x: &[f64]| {
                    let mut out = a.normal(x);
                    linalg::axpy(&mut out, lambda, x);
                    out
                };
                // relative tolerance small enough that the solve error sits
                // well below the outer tolerance
                let tol = (1e-3 * cfg.tol / linalg::norm(&rhs).max(1.0)).clamp(CG_TOL_FLOOR, INNER_TOL);
                let out = linalg::conjugate_gradient_capped(normal, &rhs, Some(&u), tol, 10 * n.max(100))
                    .map_err(|e| Error::InnerSolveFailure(e.to_string()))?;
                if out.residual > INNER_TOL {
                    return Err(Error::InnerSolveFailure(format!("CG residual {:e}", out.residual)));
                }
                out.x
            }
            _ => {
                let quad = QuadraticAround { weight: lambda, center };
                let l = a.norm_estimate().max(1e-12);
                let inner = SolverConfig {
                    tau: 1.0 / l,
                    sigma: 1.0 / l,
                    tol: INNER_TOL,
                    max_iters: INNER_MAX_ITERS,
                    criterion: StopCriterion::FixedPointResidual,
                    ..Default::default()
                };
                let out = pdhg(fid, &quad, a, &u, inner_dual.as_deref(), &inner)?;
                let res = out.trace.last().map_or(0.0, |r| r.primal_res.max(r.dual_res));
                if !out.trace.converged() && !(res <= 1e-6) {
                    return Err(Error::InnerSolveFailure(format!("inner primal-dual residual {res:e}")));
                }
                inner_dual = Some(out.p);
                out.u
            }
        };
        let w = linalg::add(&u, &h);
        let v_next = reg.prox_warm(&w, 1.0 / lambda, &mut reg_state)?;
        let dual_res = lambda * linalg::dist(&v_next, &v);
        v = v_next;
        for ((hi, ui), vi) in h.iter_mut().zip(&u).zip(&v) {
            *hi += ui - vi;
        }
        let primal_res = linalg::dist(&u, &v);
        let energy = fid.value(&a.apply(&u)).unwrap_or(f64::INFINITY) + reg.value(&v);
        trace.records.push(IterRecord {
            energy,
            gap: None,
            primal_res,
            dual_res,
            iterate_norm: linalg::norm(&u),
        });
        let done = match cfg.criterion {
            StopCriterion::EnergyDelta => {
                let k = trace.records.len();
                k >= 2 && (trace.records[k - 2].energy - energy).abs() <= cfg.tol * energy.abs().max(1.0)
            }
            _ => primal_res.max(dual_res) <= cfg.tol,
        };
        if done {
            trace.status = SolverStatus::Converged;
            break;
        }
    }
    Ok(AdmmOutcome { u, v, h, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::{HalfSquaredNorm, Zero};
    use crate::operators::{gaussian_kernel, make_blur, make_identity, make_mask};

    #[test]
    fn no_regularizer_gives_least_squares() {
        let a = make_blur(&gaussian_kernel(3, 0.6), 8, 8).unwrap();
        let y = linalg::random_vector(64, 31);
        let fid = Fidelity::l2(y.clone());
        let cfg = SolverConfig { max_iters: 500, tol: 1e-11, lambda: 0.01, ..Default::default() };
        let out = admm(&fid, &a, &Zero, &[0.0; 64], &cfg).unwrap();
        let normal_res = linalg::dist(&a.normal(&out.u), &a.adjoint(&y));
        assert!(normal_res < 1e-8, "{normal_res}");
        // oracle: CG on the normal equations
        let cg = linalg::conjugate_gradient(|x| a.normal(x), &a.adjoint(&y), None, 1e-13, 5000).unwrap();
        assert!(linalg::dist(&cg.x, &out.u) < 1e-6 * linalg::norm(&cg.x));
    }

    #[test]
    fn tikhonov_closed_form() {
        let y = linalg::random_vector(25, 5);
        let alpha = 0.6;
        let out = admm(
            &Fidelity::l2(y.clone()),
            &make_identity(5, 5),
            &HalfSquaredNorm { weight: alpha },
            &[0.0; 25],
            &SolverConfig { max_iters: 1000, tol: 1e-12, ..Default::default() },
        )
        .unwrap();
        let expect = linalg::scale(&y, 1.0 / (1.0 + alpha));
        assert!(linalg::dist(&out.u, &expect) < 1e-8);
        assert!(out.trace.converged());
    }

    #[test]
    fn non_quadratic_fidelities_use_inner_solver() {
        let mask = crate::grid::GridImage::from_fn(4, 4, |i, j| ((i + j) % 2) as f64);
        let a = make_mask(&mask).unwrap();
        let y: Vec<f64> = linalg::random_vector(16, 2).iter().map(|v| v.abs() + 0.1).collect();
        let alpha = 0.5;
        let cfg = SolverConfig { max_iters: 500, tol: 1e-9, ..Default::default() };
        for kind in [FidelityKind::L1, FidelityKind::Kl] {
            let fid = Fidelity::new(kind, a.apply(&y)).unwrap();
            let u0 = vec![0.5; 16];
            let out = admm(&fid, &a, &HalfSquaredNorm { weight: alpha }, &u0, &cfg).unwrap();
            // per pixel: masked-out pixels shrink to 0, observed ones solve a scalar problem
            for (k, &m) in mask.as_slice().iter().enumerate() {
                let yi = y[k] * m;
                let expect = match (m > 0.0, kind) {
                    (false, _) => 0.0,
                    (true, FidelityKind::L1) => yi.min(1.0 / alpha),
                    // 1 - y/u + alpha u = 0
                    (true, _) => (-1.0 + (1.0 + 4.0 * alpha * yi).sqrt()) / (2.0 * alpha),
                };
                assert!((out.u[k] - expect).abs() < 1e-6, "{kind:?} {k}: {} vs {expect}", out.u[k]);
            }
        }
    }
}
