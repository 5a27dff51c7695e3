//! The twelve acceptance criteria, each timed against its budget. Prints
//! one PASS/FAIL line per criterion and fails if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use varipro::convex::{conjugate_pairs, moreau_residual, L21Norm};
use varipro::deq::{deq_solve, expanding_counterexample, DeqOperator, ScaledIdentity};
use varipro::fidelity::{Fidelity, FidelityKind};
use varipro::grid::{add_noise, GridImage, NoiseSpec};
use varipro::linalg::{self, DenseMatrix};
use varipro::metrics::{dice, make_phantom, two_phase, PhantomKind};
use varipro::operators::{
    adjointness_check, gaussian_kernel, make_blur, make_gradient, make_identity, make_mask, make_radon,
    make_subsampled_fourier, singular_spectrum_probe, LinearMap, Stacked,
};
use varipro::pnp::{apply_spectral_filter, convergence_sweep, quadratic_prox_by_cg, LinearDenoiser, SpectralFilter, TauRule};
use varipro::regularizers::{Regularizer, RegularizerKind};
use varipro::segmentation::{chan_vese, SegOptions};
use varipro::solvers::{admm, pdhg, SolverConfig, StopCriterion};
use varipro::Error;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn varipro(args: &[&str], config: &Path, out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_varipro"))
        .args(["run", args[0], "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(&args[1..])
        .output()
        .unwrap()
}

fn adjointness() -> Outcome {
    let mask = GridImage::from_fn(12, 9, |i, j| ((i * 7 + j * 3) % 4 == 0) as u8 as f64);
    let ops: Vec<(&str, Box<dyn LinearMap>)> = vec![
        ("identity", Box::new(make_identity(12, 9))),
        ("mask", Box::new(make_mask(&mask).unwrap())),
        ("blur", Box::new(make_blur(&gaussian_kernel(5, 1.2), 12, 9).unwrap())),
        ("fourier", Box::new(make_subsampled_fourier(&mask).unwrap())),
        ("gradient", Box::new(make_gradient(12, 9, 1.0))),
        ("radon", Box::new(make_radon(30, 25, 12, 9).unwrap())),
        ("stacked", Box::new(Stacked::new(make_blur(&gaussian_kernel(3, 1.0), 12, 9).unwrap(), make_gradient(12, 9, 0.5)).unwrap())),
        ("denoiser", Box::new(LinearDenoiser::convolution(&gaussian_kernel(5, 1.0), 12, 9).unwrap())),
    ];
    let mut worst = 0.0f64;
    for (k, (_, op)) in ops.iter().enumerate() {
        worst = worst.max(adjointness_check(op.as_ref(), 20, 100 * k as u64));
    }
    check(worst <= 1e-10, format!("{} operators, worst normalized residual {worst:.2e}", ops.len()))
}

/// Minimizer of a scalar function by repeated grid refinement on `[lo, hi]`.
fn grid_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let n = 400;
    let mut best = lo;
    for _ in 0..12 {
        let h = (hi - lo) / n as f64;
        best = (0..=n).map(|k| lo + k as f64 * h).min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
        lo = best - 2.0 * h;
        hi = best + 2.0 * h;
    }
    best
}

/// Two-dimensional version of [`grid_min`].
fn grid_min2(f: impl Fn(f64, f64) -> f64, c: (f64, f64), mut r: f64) -> (f64, f64) {
    let n = 80;
    let mut best = c;
    for _ in 0..14 {
        let h = 2.0 * r / n as f64;
        let (x0, y0) = (best.0 - r, best.1 - r);
        let mut val = f64::INFINITY;
        for a in 0..=n {
            for b in 0..=n {
                let (x, y) = (x0 + a as f64 * h, y0 + b as f64 * h);
                let v = f(x, y);
                if v < val {
                    val = v;
                    best = (x, y);
                }
            }
        }
        r = 2.0 * h;
    }
    best
}

fn prox_oracles() -> Outcome {
    let mut worst_grid = 0.0f64;
    let mut worst_cg = 0.0f64;
    // listed scalar examples plus a few random ones per fidelity
    let mut cases = vec![(FidelityKind::L1, 0.0, 3.0, 1.0), (FidelityKind::Kl, 1.0, 1.0, 1.0), (FidelityKind::L2, 0.7, 0.7, 2.0)];
    let r = linalg::random_vector(30, 77);
    for k in 0..10 {
        let (y, v, t) = (r[3 * k], 2.0 * r[3 * k + 1], 0.2 + r[3 * k + 2].abs());
        cases.push((FidelityKind::L2, y, v, t));
        cases.push((FidelityKind::L1, y, v, t));
        cases.push((FidelityKind::Kl, y.abs(), v, t));
    }
    for (kind, y, v, t) in cases {
        let fid = Fidelity::new(kind, vec![y]).map_err(|e| e.to_string())?;
        let got = fid.prox(&[v], t).map_err(|e| e.to_string())?[0];
        let obj = |w: f64| {
            let f = match kind {
                FidelityKind::L2 => 0.5 * (w - y).powi(2),
                FidelityKind::L1 => (w - y).abs(),
                FidelityKind::Kl if w <= 0.0 => f64::INFINITY,
                FidelityKind::Kl => w - if y > 0.0 { y * w.ln() } else { 0.0 },
            };
            t * f + 0.5 * (w - v).powi(2)
        };
        let lo = if kind == FidelityKind::Kl { 1e-12 } else { v - 10.0 };
        worst_grid = worst_grid.max((got - grid_min(obj, lo, v.abs() + 10.0)).abs());
    }
    let worst_fid = worst_grid;

    // tikhonov_l2, v = 2, t = 1 -> 1
    let tik = Regularizer::new(RegularizerKind::TikhonovL2, 1.0, 1, 1).unwrap();
    let got = tik.prox(&GridImage::filled(1, 1, 2.0), 1.0).unwrap().get(0, 0);
    worst_grid = worst_grid.max((got - grid_min(|w| 0.5 * w * w + 0.5 * (w - 2.0).powi(2), -5.0, 5.0)).abs());

    // tv on the pair (0, 1) with weight times step 0.2
    for kind in [RegularizerKind::TvIso, RegularizerKind::TvAniso] {
        let tv = Regularizer::new(kind, 0.2, 2, 1).unwrap();
        let u = tv.prox(&GridImage::new(2, 1, vec![0.0, 1.0]).unwrap(), 1.0).map_err(|e| e.to_string())?;
        let (a, b) = grid_min2(|a, b| 0.2 * (b - a).abs() + 0.5 * (a * a + (b - 1.0).powi(2)), (0.5, 0.5), 1.0);
        worst_grid = worst_grid.max((u.get(0, 0) - a).abs()).max((u.get(0, 1) - b).abs());
    }

    // tikhonov_grad against a dense solve of (I + t w grad* grad) u = v
    let (w, h) = (7, 5);
    let grad = make_gradient(w, h, 1.0);
    let v = GridImage::new(w, h, linalg::random_vector(w * h, 3)).unwrap();
    for (weight, t) in [(0.5, 1.0), (2.0, 0.3)] {
        let reg = Regularizer::new(RegularizerKind::TikhonovGrad, weight, w, h).unwrap();
        let got = reg.prox(&v, t).map_err(|e| e.to_string())?;
        let m = DenseMatrix::from_columns(w * h, w * h, |x| {
            let mut out = grad.normal(x);
            linalg::scale(&out.clone(), weight * t).iter().zip(x).enumerate().for_each(|(i, (g, xi))| out[i] = xi + g);
            out
        });
        let expect = m.solve(v.as_slice()).map_err(|e| e.to_string())?;
        worst_cg = worst_cg.max(linalg::dist(got.as_slice(), &expect));
    }

    // prototype distance: two prototypes, moved by the step or snapped
    let protos = [GridImage::zeros(2, 2), GridImage::filled(2, 2, 1.0)];
    let pd = Regularizer::proto_dist(1.0, &protos, 0.0).unwrap();
    let v = GridImage::filled(2, 2, 0.3);
    let moved = pd.prox(&v, 0.2).unwrap();
    // |v| = 0.6 to the zero prototype
    let expect = 0.3 * (1.0 - 0.2 / 0.6);
    worst_grid = worst_grid.max(moved.as_slice().iter().map(|x| (x - expect).abs()).fold(0.0, f64::max));
    worst_grid = worst_grid.max(pd.prox(&v, 1.0).unwrap().norm());

    check(
        worst_grid <= 1e-6 && worst_cg <= 1e-8,
        format!("grid-search worst {worst_grid:.2e} (fidelities {worst_fid:.2e}), dense/CG worst {worst_cg:.2e}"),
    )
}

fn moreau() -> Outcome {
    let mut worst = 0.0f64;
    let pairs = conjugate_pairs();
    for pair in &pairs {
        for k in 0..20 {
            let v: Vec<f64> = linalg::random_vector(64, 500 + k).iter().map(|x| 3.0 * x).collect();
            let t = 0.1 + 0.1 * k as f64;
            worst = worst.max(moreau_residual(pair.prox_j, pair.prox_jstar, &v, t));
        }
    }
    check(worst < 1e-10, format!("{} pairs x 20 inputs, worst residual {worst:.2e}", pairs.len()))
}

fn pdhg_rof() -> Outcome {
    let grad = make_gradient(8, 8, 1.0);
    let step = 0.99 / 8f64.sqrt();
    // a gap of 1e-6 only pins u to about sqrt(2e-6), so stop much later
    let cfg = SolverConfig {
        tau: step,
        sigma: step,
        max_iters: 2000,
        tol: 1e-10,
        criterion: StopCriterion::Gap,
        ..Default::default()
    };
    let (mut worst_gap, mut worst_rel, mut most) = (0.0f64, 0.0f64, 0);
    for seed in 0..4 {
        let y = linalg::random_vector(64, seed);
        let out = pdhg(&L21Norm { weight: 0.1 }, &Fidelity::l2(y.clone()), &grad, &y, None, &cfg).map_err(|e| e.to_string())?;
        if !out.trace.converged() {
            return Err(format!("seed {seed}: no convergence in 2000 iterations"));
        }
        worst_gap = worst_gap.max(out.trace.last().and_then(|r| r.gap).unwrap_or(f64::INFINITY));
        worst_rel = worst_rel.max(linalg::dist(&out.u, &linalg::sub(&y, &grad.adjoint(&out.p))));
        most = most.max(out.trace.iters());
    }
    check(
        worst_gap < 1e-6 && worst_rel < 1e-8,
        format!("4 random data, at most {most} iterations, gap {worst_gap:.2e}, |u - (y - grad* p)| {worst_rel:.2e}"),
    )
}

fn cross_solver() -> Outcome {
    let clean = make_phantom(PhantomKind::Rectangles, 16).unwrap();
    let y = add_noise(&clean, &NoiseSpec::gaussian(0.05, 3)).unwrap().into_vec();
    let alpha = 0.1;
    let step = 0.99 / 8f64.sqrt();
    let pd_cfg = SolverConfig {
        tau: step,
        sigma: step,
        max_iters: 50_000,
        tol: 1e-10,
        ..Default::default()
    };
    let grad = make_gradient(16, 16, 1.0);
    let pd = pdhg(&L21Norm { weight: alpha }, &Fidelity::l2(y.clone()), &grad, &y, None, &pd_cfg).map_err(|e| e.to_string())?;
    let tv = Regularizer::new(RegularizerKind::TvIso, alpha, 16, 16).unwrap();
    let ad_cfg = SolverConfig { max_iters: 2000, tol: 1e-9, ..Default::default() };
    let ad = admm(&Fidelity::l2(y.clone()), &make_identity(16, 16), &tv, &y, &ad_cfg).map_err(|e| e.to_string())?;
    let rel = linalg::dist(&pd.u, &ad.u) / linalg::norm(&pd.u);
    check(rel < 1e-4, format!("relative difference {rel:.2e}"))
}

fn radon() -> Outcome {
    let n = 128;
    let r = 0.4;
    let disk = GridImage::from_fn(n, n, |i, j| {
        let x = (j as f64 + 0.5) / n as f64 - 0.5;
        let y = 0.5 - (i as f64 + 0.5) / n as f64;
        if x * x + y * y <= r * r {
            1.0
        } else {
            0.0
        }
    });
    let offsets = 2 * n + 1;
    let op = make_radon(180, offsets, n, n).map_err(|e| e.to_string())?;
    let sino = op.apply(disk.as_slice());
    let centre = offsets / 2;
    let worst = (0..180).map(|k| (sino[k * offsets + centre] - 2.0 * r).abs() / (2.0 * r)).fold(0.0, f64::max);

    let small = make_radon(45, 91, 64, 64).map_err(|e| e.to_string())?;
    let s = singular_spectrum_probe(&small, 20).map_err(|e| e.to_string())?;
    let decreasing = s.windows(2).all(|w| w[1] < w[0]);
    check(
        worst <= 0.02 && decreasing && s[19] < s[4] && s[4] < s[0],
        format!("worst centre-ray error {:.2}%, s1 {:.3} s5 {:.3} s20 {:.3}", 100.0 * worst, s[0], s[4], s[19]),
    )
}

/// `(I + c grad* grad)^-1` on a 16 × 16 grid, a dense non-convolution denoiser.
fn smoothing_denoiser(c: f64) -> LinearDenoiser {
    let grad = make_gradient(16, 16, 1.0);
    let m = DenseMatrix::from_columns(256, 256, |x| {
        let g = grad.normal(x);
        x.iter().zip(g).map(|(a, b)| a + c * b).collect()
    });
    let mut inv = m.inverse().unwrap();
    // symmetrize away rounding from the inversion
    let t = inv.transpose();
    inv = DenseMatrix::new(256, 256, inv.as_slice().iter().zip(t.as_slice()).map(|(a, b)| 0.5 * (a + b)).collect()).unwrap();
    LinearDenoiser::dense(inv, 16, 16).unwrap()
}

fn spectral_filter() -> Outcome {
    let gauss = LinearDenoiser::convolution(&gaussian_kernel(5, 1.0), 16, 16).unwrap();
    let denoisers = [
        ("gaussian", LinearDenoiser::dense(gauss.to_dense(), 16, 16).map_err(|e| e.to_string())?),
        ("smoothing", smoothing_denoiser(0.5)),
    ];
    let mut worst_exact = 0.0f64;
    let mut worst_prox = 0.0f64;
    let id = DenseMatrix::identity(256);
    for (_, d) in &denoisers {
        let dm = d.to_dense();
        let d_inv = dm.inverse().map_err(|e| e.to_string())?;
        for tau in [0.5, 2.0, 10.0] {
            let filtered = apply_spectral_filter(d, &SpectralFilter::canonical(tau).unwrap()).map_err(|e| e.to_string())?;
            let oracle = d_inv.scaled(tau).sub(&id.scaled(tau - 1.0)).inverse().map_err(|e| e.to_string())?;
            worst_exact = worst_exact.max(filtered.to_dense().sub(&oracle).as_slice().iter().fold(0.0, |m, v| m.max(v.abs())));
            for k in 0..10 {
                let v = linalg::random_vector(256, 40 + k);
                let by_cg = quadratic_prox_by_cg(d, &v, tau).map_err(|e| e.to_string())?;
                worst_prox = worst_prox.max(linalg::dist(&filtered.apply(&v), &by_cg));
            }
        }
    }
    check(
        worst_exact <= 1e-10 && worst_prox <= 1e-8,
        format!("filter vs inverse formula {worst_exact:.2e}, filtered apply vs CG prox {worst_prox:.2e}"),
    )
}

fn sweep() -> Outcome {
    let a = make_blur(&GridImage::new(2, 1, vec![0.5, 0.5]).unwrap(), 16, 16).unwrap();
    let truth = make_phantom(PhantomKind::Rectangles, 16).unwrap();
    let d = LinearDenoiser::convolution(&gaussian_kernel(5, 1.0), 16, 16).unwrap();
    let deltas: Vec<f64> = (0..6).map(|k| 0.5 / f64::powi(2.0, k)).collect();
    let cfg = SolverConfig { max_iters: 3000, tol: 1e-9, ..Default::default() };
    let rule = TauRule::Calibrated { candidates: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0] };
    let table = convergence_sweep(&a, &truth, &d, &rule, &deltas, 0, &cfg).map_err(|e| e.to_string())?;
    let broken = convergence_sweep(&a, &truth, &d, &TauRule::Linear { c: 1e6 }, &deltas, 0, &cfg).map_err(|e| e.to_string())?;
    let e = table.errors();
    check(
        table.monotone() && !broken.monotone(),
        format!(
            "c = {}, error vs u-dagger {:.3} -> {:.3}, broken schedule monotone={}",
            table.c,
            e[0],
            e[e.len() - 1],
            broken.monotone()
        ),
    )
}

fn deq() -> Outcome {
    let (w, h) = (16, 16);
    let y = linalg::random_vector(w * h, 8);
    let op = DeqOperator::new(make_identity(w, h), y, 0.4, ScaledIdentity(1.0)).map_err(|e| e.to_string())?;
    let bound = op.contraction_bound();
    let out = deq_solve(&op, &vec![0.0; w * h], 1e-12, 500).map_err(|e| e.to_string())?;
    let counter = expanding_counterexample(w, h).map_err(|e| e.to_string())?;
    let fired = matches!(
        deq_solve(&counter, &linalg::random_vector(w * h, 2), 1e-12, 500),
        Err(Error::NotContractive { .. })
    );
    check(
        (bound - 0.2).abs() < 1e-9 && out.gamma_est <= bound + 1e-6 && fired,
        format!("bound {bound:.6}, measured ratio {:.6}, counterexample rejected={fired}", out.gamma_est),
    )
}

fn chan_vese_disk() -> Outcome {
    let truth = make_phantom(PhantomKind::Disk, 64).unwrap();
    let y = add_noise(&two_phase(&truth, 0.9, 0.1), &NoiseSpec::gaussian(0.08, 11)).unwrap();
    let out = chan_vese(&y, &SegOptions::default()).map_err(|e| e.to_string())?;
    let d = dice(&out.mask, &truth).map_err(|e| e.to_string())?;
    let monotone = out.energies.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    check(d >= 0.99 && monotone, format!("dice {d:.4}, energies non-increasing={monotone}"))
}

fn ct_end_to_end() -> Outcome {
    let tmp = tempfile::TempDir::new().unwrap();
    let res = varipro(&["ct"], &configs().join("ct_sparse.json"), tmp.path());
    if !res.status.success() {
        return Err(format!("exit {:?}: {}", res.status.code(), String::from_utf8_lossy(&res.stderr)));
    }
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("metrics.json")).unwrap()).unwrap();
    let (tv, base) = (m["psnr"].as_f64().unwrap(), m["baseline_psnr"].as_f64().unwrap());
    check(tv > base, format!("TV {tv:.2} dB vs zero-fill {base:.2} dB"))
}

fn determinism() -> Outcome {
    let tmp = tempfile::TempDir::new().unwrap();
    let mut compared = 0;
    for (cmd, cfg, files) in [
        ("denoise", "denoise_rof.json", &["trace.csv", "recon.csv"][..]),
        ("mri", "mri_tv.json", &["trace.csv", "recon.csv"][..]),
        ("pnp-sweep", "pnp_deblur16.json", &["sweep.csv"][..]),
    ] {
        let a = tmp.path().join(format!("{cmd}-a"));
        let b = tmp.path().join(format!("{cmd}-b"));
        for out in [&a, &b] {
            let res = varipro(&[cmd, "--seed", "7"], &configs().join(cfg), out);
            if res.status.code() != Some(0) {
                return Err(format!("{cmd} exited {:?}", res.status.code()));
            }
        }
        for f in files {
            if fs::read(a.join(f)).unwrap() != fs::read(b.join(f)).unwrap() {
                return Err(format!("{cmd}: {f} differs"));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} CSV pairs byte-identical"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, u64, fn() -> Outcome); 12] = [
        ("adjointness suite", 5, adjointness),
        ("prox oracle suite", 30, prox_oracles),
        ("Moreau identity", 1, moreau),
        ("PDHG on 8x8 ROF", 5, pdhg_rof),
        ("ADMM vs PDHG", 10, cross_solver),
        ("Radon chord and spectrum", 60, radon),
        ("spectral filter exactness", 30, spectral_filter),
        ("convergent-regularization sweep", 120, sweep),
        ("DEQ contraction", 5, deq),
        ("Chan-Vese segmentation", 30, chan_vese_disk),
        ("CT end-to-end", 120, ct_end_to_end),
        ("determinism", 600, determinism),
    ];
    let mut failed = Vec::new();
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(*budget);
        let (ok, detail) = match result {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        let status = if ok { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {status} {name}: {detail} [{:.2}s / {budget}s]", k + 1, took.as_secs_f64());
        if !ok {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
