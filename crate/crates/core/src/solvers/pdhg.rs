use super::{IterRecord, SolverConfig, SolverStatus, SolverTrace, StopCriterion};
use crate::convex::ProxFn;
use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::LinearMap;

/// Safety factor applied to the estimated operator norm in the step bound.
const NORM_SAFETY: f64 = 1.01;

#[derive(Debug, Clone)]
pub struct PdhgOutcome {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub trace: SolverTrace,
    /// Steps actually used, after any rescaling.
    pub tau: f64,
    pub sigma: f64,
}

/// Primal–dual hybrid gradient for `min_u J(Au) + H(u)`:
///
/// ```text
/// u+ = prox_{tau H}(u - tau A* p)
/// p+ = prox_{sigma J*}(p + sigma A(u+ + theta (u+ - u)))
/// ```
///
/// The gap `J(Au) + H(u) + J*(p) + H*(-A* p)` is recorded whenever both
/// conjugates have closed forms and all four terms are finite.
pub fn pdhg<J, H, A>(j: &J, h: &H, a: &A, u0: &[f64], p0: Option<&[f64]>, cfg: &SolverConfig) -> Result<PdhgOutcome>
where
    J: ProxFn + ?Sized,
    H: ProxFn + ?Sized,
    A: LinearMap + ?Sized,
{
    cfg.validate()?;
    if u0.len() != a.domain_dim() {
        return Err(Error::shape(a.domain_dim(), u0.len()));
    }
    let mut p = match p0 {
        Some(p) if p.len() != a.range_dim() => return Err(Error::shape(a.range_dim(), p.len())),
        Some(p) => p.to_vec(),
        None => vec![0.0; a.range_dim()],
    };
    let (mut tau, mut sigma) = (cfg.tau, cfg.sigma);
    let l = a.norm_estimate() * NORM_SAFETY;
    let product = sigma * tau * l * l;
    if product > 1.0 {
        if !cfg.auto_scale {
            return Err(Error::StepSizeViolation(product));
        }
        let s = 1.0 / product.sqrt();
        log::warn!("sigma tau |A|^2 = {product:.4} > 1; scaling both steps by {s:.4}");
        tau *= s;
        sigma *= s;
    }

    let mut u = u0.to_vec();
    let mut au = a.apply(&u);
    let mut atp = a.adjoint(&p);
    let mut trace = SolverTrace::new();
    let theta = cfg.theta;
    for _ in 0..cfg.max_iters {
        let step_in: Vec<f64> = u.iter().zip(&atp).map(|(x, g)| x - tau * g).collect();
        let u_next = h.prox(&step_in, tau)?;
        let au_next = a.apply(&u_next);
        let dual_in: Vec<f64> = p
            .iter()
            .zip(au_next.iter().zip(&au))
            .map(|(q, (an, ao))| q + sigma * (an + theta * (an - ao)))
            .collect();
        let p_next = j.conj_prox(&dual_in, sigma)?;
        let atp_next = a.adjoint(&p_next);

        let primal_res = linalg::dist(&u_next, &u) / tau;
        let dual_res = linalg::dist(&p_next, &p) / sigma;
        u = u_next;
        au = au_next;
        p = p_next;
        atp = atp_next;

        let energy = j.value(&au) + h.value(&u);
        let neg_atp = linalg::scale(&atp, -1.0);
        let gap = match (j.conj_value(&p), h.conj_value(&neg_atp)) {
            (Some(js), Some(hs)) => {
                let g = energy + js + hs;
                g.is_finite().then_some(g)
            }
            _ => None,
        };
        trace.records.push(IterRecord {
            energy,
            gap,
            primal_res,
            dual_res,
            iterate_norm: linalg::norm(&u),
        });
        let done = match (cfg.criterion, gap) {
            (StopCriterion::Gap, Some(g)) => g <= cfg.tol,
            (StopCriterion::EnergyDelta, _) => {
                let n = trace.records.len();
                n >= 2 && (trace.records[n - 2].energy - energy).abs() <= cfg.tol * energy.abs().max(1.0)
            }
            _ => primal_res.max(dual_res) <= cfg.tol,
        };
        if done {
            trace.status = SolverStatus::Converged;
            break;
        }
    }
    Ok(PdhgOutcome { u, p, trace, tau, sigma })
}
