use super::{DivergenceGuard, IterRecord, Smooth, SolverConfig, SolverStatus, SolverTrace, StopCriterion};
use crate::convex::ProxFn;
use crate::error::Result;
use crate::linalg;

fn warn_step(f: &impl Smooth, tau: f64) {
    if let Some(l) = f.lipschitz() {
        if tau * l > 1.0 + 1e-12 {
            log::warn!("step {tau} exceeds 1/L = {}", 1.0 / l);
        }
    }
}

fn stop(cfg: &SolverConfig, residual: f64, prev: f64, energy: f64) -> bool {
    match cfg.criterion {
        StopCriterion::EnergyDelta => (prev - energy).abs() <= cfg.tol * energy.abs().max(1.0),
        _ => residual <= cfg.tol,
    }
}

/// `u <- u - tau grad f(u)`, stopping on `|u_{k+1} - u_k| <= tol`.
pub fn gradient_descent(f: &impl Smooth, u0: &[f64], cfg: &SolverConfig) -> Result<(Vec<f64>, SolverTrace)> {
    cfg.validate()?;
    warn_step(f, cfg.tau);
    let mut u = u0.to_vec();
    let mut trace = SolverTrace::new();
    let mut energy = f.value(&u)?;
    let mut guard = DivergenceGuard::new(energy);
    for k in 0..cfg.max_iters {
        let g = f.gradient(&u)?;
        let next: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a - cfg.tau * b).collect();
        let step = linalg::dist(&next, &u);
        let prev = energy;
        energy = f.value(&next)?;
        u = next;
        trace.records.push(IterRecord {
            energy,
            gap: None,
            primal_res: step,
            dual_res: 0.0,
            iterate_norm: linalg::norm(&u),
        });
        guard.observe(energy, k + 1)?;
        if stop(cfg, step, prev, energy) {
            trace.status = SolverStatus::Converged;
            break;
        }
    }
    Ok((u, trace))
}

/// `u <- prox_{tau R}(u)`: gradient descent with step `tau` on the
/// Moreau–Yosida envelope of `R`.
pub fn proximal_point(r: &impl ProxFn, u0: &[f64], cfg: &SolverConfig) -> Result<(Vec<f64>, SolverTrace)> {
    cfg.validate()?;
    let mut u = u0.to_vec();
    let mut trace = SolverTrace::new();
    let mut energy = r.value(&u);
    let mut state = Vec::new();
    for _ in 0..cfg.max_iters {
        let next = r.prox_warm(&u, cfg.tau, &mut state)?;
        let residual = linalg::dist(&next, &u) / cfg.tau;
        let prev = energy;
        energy = r.value(&next);
        u = next;
        trace.records.push(IterRecord {
            energy,
            gap: None,
            primal_res: residual,
            dual_res: 0.0,
            iterate_norm: linalg::norm(&u),
        });
        if stop(cfg, residual, prev, energy) {
            trace.status = SolverStatus::Converged;
            break;
        }
    }
    Ok((u, trace))
}

/// `u <- prox_{tau R}(u - tau grad f(u))`, stopping on the fixed-point
/// residual `|u_{k+1} - u_k| / tau <= tol`.
pub fn forward_backward(
    f: &impl Smooth,
    r: &impl ProxFn,
    u0: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolverTrace)> {
    cfg.validate()?;
    warn_step(f, cfg.tau);
    let mut u = u0.to_vec();
    let mut trace = SolverTrace::new();
    let mut energy = f.value(&u)? + r.value(&u);
    let mut guard = DivergenceGuard::new(energy);
    let mut state = Vec::new();
    for k in 0..cfg.max_iters {
        let g = f.gradient(&u)?;
        let forward: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a - cfg.tau * b).collect();
        let next = r.prox_warm(&forward, cfg.tau, &mut state)?;
        let residual = linalg::dist(&next, &u) / cfg.tau;
        let prev = energy;
        energy = f.value(&next)? + r.value(&next);
        u = next;
        trace.records.push(IterRecord {
            energy,
            gap: None,
            primal_res: residual,
            dual_res: 0.0,
            iterate_norm: linalg::norm(&u),
        });
        guard.observe(energy, k + 1)?;
        if stop(cfg, residual, prev, energy) {
            trace.status = SolverStatus::Converged;
            break;
        }
    }
    Ok((u, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::{HalfSquaredNorm, Zero};
    use crate::error::Error;
    use crate::fidelity::Fidelity;
    use crate::operators::{gaussian_kernel, make_blur, make_identity, LinearMap};
    use crate::solvers::DataTerm;

    struct Quadratic(Vec<f64>);

    impl Smooth for Quadratic {
        fn value(&self, x: &[f64]) -> Result<f64> {
            Ok(0.5 * linalg::dist(x, &self.0).powi(2))
        }
        fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(linalg::sub(x, &self.0))
        }
    }

    struct Flat;

    impl Smooth for Flat {
        fn value(&self, _x: &[f64]) -> Result<f64> {
            Ok(0.0)
        }
        fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![0.0; x.len()])
        }
    }

    #[test]
    fn quadratic_in_one_step() {
        let y = linalg::random_vector(10, 3);
        let (u, trace) = gradient_descent(&Quadratic(y.clone()), &[0.0; 10], &SolverConfig::default()).unwrap();
        assert_eq!(u, y);
        assert_eq!(trace.records[0].energy, 0.0);
        assert!(trace.converged() && trace.iters() == 2);
    }

    #[test]
    fn zero_gradient_returns_start() {
        let u0 = linalg::random_vector(5, 1);
        let (u, trace) = gradient_descent(&Flat, &u0, &SolverConfig::default()).unwrap();
        assert_eq!(u, u0);
        assert_eq!(trace.iters(), 1);
    }

    #[test]
    fn divergence_is_reported() {
        // step 3 on a 1-smooth quadratic doubles the iterate each time
        let cfg = SolverConfig { tau: 3.0, ..Default::default() };
        let err = gradient_descent(&Quadratic(vec![0.0; 2]), &[1.0, 0.5], &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged(10)));
    }

    #[test]
    fn blur_least_squares_energy_decreases() {
        let a = make_blur(&gaussian_kernel(5, 1.0), 16, 16).unwrap();
        let y = a.apply(&linalg::random_vector(256, 9));
        let fid = Fidelity::l2(y);
        let f = DataTerm::new(&a, &fid);
        let cfg = SolverConfig { tau: 1.0 / f.lipschitz().unwrap(), max_iters: 200, ..Default::default() };
        let (_, trace) = gradient_descent(&f, &vec![0.0; 256], &cfg).unwrap();
        let e = trace.energies();
        assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        assert!(e[e.len() - 1] < 0.05 * e[0], "{} vs {}", e[e.len() - 1], e[0]);
    }

    #[test]
    fn fbs_with_zero_regularizer_matches_descent() {
        let a = make_identity(4, 4);
        let fid = Fidelity::l2(linalg::random_vector(16, 2));
        let f = DataTerm::new(&a, &fid);
        let cfg = SolverConfig { tau: 0.3, max_iters: 50, tol: 0.0, ..Default::default() };
        let u0 = linalg::random_vector(16, 8);
        let (ua, ta) = gradient_descent(&f, &u0, &cfg).unwrap();
        let (ub, tb) = forward_backward(&f, &Zero, &u0, &cfg).unwrap();
        assert!(linalg::dist(&ua, &ub) < 1e-12);
        for (ra, rb) in ta.records.iter().zip(&tb.records) {
            assert!((ra.energy - rb.energy).abs() < 1e-12);
        }
    }

    #[test]
    fn proximal_point_reaches_minimizer() {
        let cfg = SolverConfig { tau: 1.0, max_iters: 200, tol: 1e-12, ..Default::default() };
        let (u, trace) = proximal_point(&HalfSquaredNorm { weight: 1.0 }, &[4.0, -2.0], &cfg).unwrap();
        assert!(linalg::norm(&u) < 1e-11 && trace.converged());
    }
}
