//! The `run` subcommands. Each writes its artifacts into the output
//! directory and reports whether every solve converged.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Map, Value};
use varipro::convex::{BlockSum, L1Norm, L21Norm, ProxFn, Zero};
use varipro::fidelity::{Fidelity, FidelityKind};
use varipro::grid::io::{self, IntensityRange, PgmFormat};
use varipro::grid::GridImage;
use varipro::metrics::{dice, psnr, rel_err, two_phase};
use varipro::operators::{make_gradient, LinearMap, Stacked};
use varipro::pnp::{convergence_sweep, LinearDenoiser, TauRule};
use varipro::regularizers::{Regularizer, RegularizerKind};
use varipro::segmentation::{chan_vese, SegOptions};
use varipro::solvers::{admm, forward_backward, pdhg, DataTerm, SolverConfig, SolverStatus, SolverTrace};

use crate::config::{Kernel, Loaded, TauRuleSection};
use crate::error::CliError;
use crate::setup;

/// Margin kept below the PDHG step bound `sigma tau |K|^2 <= 1`.
const STEP_MARGIN: f64 = 1.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Denoise,
    Deblur,
    Mri,
    Ct,
    PnpSweep,
    Segment,
}

impl Command {
    fn default_operator(self) -> &'static str {
        match self {
            Self::Denoise => "identity",
            Self::Deblur | Self::PnpSweep => "blur",
            Self::Mri => "fourier",
            Self::Ct => "radon",
            Self::Segment => "identity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    MaxIters,
}

pub struct Run<'a> {
    pub loaded: &'a Loaded,
    pub out: &'a Path,
    pub seed: u64,
    pub dry_run: bool,
}

pub fn execute(cmd: Command, run: &Run) -> Result<Outcome, CliError> {
    match cmd {
        Command::PnpSweep => pnp_sweep(run),
        Command::Segment => segment(run),
        _ => reconstruct(cmd, run),
    }
}

struct Output {
    format: PgmFormat,
    range: IntensityRange,
}

fn output(loaded: &Loaded) -> Result<Output, CliError> {
    let o = &loaded.config.output;
    let format = match o.pgm.as_str() {
        "ascii" => PgmFormat::Ascii,
        "binary" => PgmFormat::Binary,
        other => return Err(CliError::field("output.pgm", format!("expected ascii or binary, got '{other}'"))),
    };
    let range = IntensityRange::new(o.range[0], o.range[1]).map_err(|e| CliError::field("output.range", e.to_string()))?;
    Ok(Output { format, range })
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_trace(path: &Path, trace: Option<&SolverTrace>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    match trace {
        Some(t) => t.write_csv(&mut buf)?,
        None => buf.extend_from_slice(b"iter,energy,gap,primal_res,dual_res\n"),
    }
    fs::write(path, buf)?;
    Ok(())
}

fn reject(field: &str, present: bool, cmd: &str) -> Result<(), CliError> {
    if present {
        Err(CliError::field(field, format!("not used by {cmd}")))
    } else {
        Ok(())
    }
}

/// `min_u D(Au, y) + R(u)` with the configured method.
fn solve(
    op: &dyn LinearMap,
    fid: Fidelity,
    reg: &Regularizer,
    u0: &[f64],
    method: &str,
    mut cfg: SolverConfig,
    steps_given: (bool, bool),
    identity: bool,
    width: usize,
    height: usize,
) -> Result<(Vec<f64>, SolverTrace), CliError> {
    match method {
        "pdhg" => {
            let tv = matches!(reg.kind(), RegularizerKind::TvIso | RegularizerKind::TvAniso);
            if tv && identity {
                // classical ROF splitting: TV through the gradient, the
                // fidelity as the primal term
                let k = make_gradient(width, height, 1.0);
                default_steps(&mut cfg, steps_given, k.norm_estimate());
                let out = match reg.kind() {
                    RegularizerKind::TvIso => pdhg(&L21Norm { weight: reg.weight() }, &fid, &k, u0, None, &cfg)?,
                    _ => pdhg(&L1Norm { weight: reg.weight() }, &fid, &k, u0, None, &cfg)?,
                };
                Ok((out.u, out.trace))
            } else if tv {
                // a · TV(u) = (a h) · |grad_h u| with grad_h = grad / h; h
                // matches the gradient block's norm to the operator's
                let unit = make_gradient(width, height, 1.0).norm_estimate();
                let op_norm = op.norm_estimate();
                let h = if op_norm > 0.0 { unit / op_norm } else { 1.0 };
                let k = Stacked::new(op, make_gradient(width, height, h))?;
                default_steps(&mut cfg, steps_given, k.norm_estimate());
                let weight = reg.weight() * h;
                let tv_term: Box<dyn ProxFn> = match reg.kind() {
                    RegularizerKind::TvIso => Box::new(L21Norm { weight }),
                    _ => Box::new(L1Norm { weight }),
                };
                let j = BlockSum::new(vec![(op.range_dim(), Box::new(fid)), (2 * op.domain_dim(), tv_term)]);
                let out = pdhg(&j, &Zero, &k, u0, None, &cfg)?;
                Ok((out.u, out.trace))
            } else {
                default_steps(&mut cfg, steps_given, op.norm_estimate());
                let out = pdhg(&fid, reg, op, u0, None, &cfg)?;
                Ok((out.u, out.trace))
            }
        }
        "admm" => {
            let out = admm(&fid, op, reg, u0, &cfg)?;
            Ok((out.u, out.trace))
        }
        "fbs" => {
            if fid.kind() != FidelityKind::L2 {
                return Err(CliError::field("solver.method", "fbs needs the smooth l2 fidelity"));
            }
            if !steps_given.0 {
                let l = op.norm_estimate();
                cfg.tau = 1.0 / (STEP_MARGIN * l * l).max(f64::MIN_POSITIVE);
            }
            Ok(forward_backward(&DataTerm::new(op, &fid), reg, u0, &cfg)?)
        }
        other => Err(CliError::field("solver.method", format!("expected pdhg, admm or fbs, got '{other}'"))),
    }
}

/// Balanced PDHG steps `tau = sigma = 1 / |K|` for steps left unset.
fn default_steps(cfg: &mut SolverConfig, given: (bool, bool), norm: f64) {
    let s = 1.0 / (STEP_MARGIN * norm).max(f64::MIN_POSITIVE);
    if !given.0 {
        cfg.tau = s;
    }
    if !given.1 {
        cfg.sigma = s;
    }
}

fn reconstruct(cmd: Command, run: &Run) -> Result<Outcome, CliError> {
    let loaded = run.loaded;
    let c = &loaded.config;
    let name = format!("{cmd:?}").to_lowercase();
    reject("problem.ground_truth", c.problem.ground_truth.is_some(), &name)?;
    reject("problem.contrast", c.problem.contrast.is_some(), &name)?;
    let r = &c.regularizer;
    reject("regularizer.denoiser", r.denoiser.is_some(), &name)?;
    reject("regularizer.tau_rule", r.tau_rule.is_some(), &name)?;
    reject("regularizer.threshold", r.threshold.is_some(), &name)?;
    reject("regularizer.outer_iters", r.outer_iters.is_some(), &name)?;
    reject("regularizer.init", r.init.is_some(), &name)?;

    let out_fmt = output(loaded)?;
    let truth = setup::truth(loaded)?;
    let (w, h) = truth.shape();
    let kind = c.operator.kind.as_deref().unwrap_or(cmd.default_operator());
    let op = setup::operator(loaded, kind, w, h, run.seed)?;
    let fid_kind = setup::fidelity_kind(loaded)?;
    let reg_kind = setup::regularizer_kind(r.kind.as_deref())?;
    let weight = r.weight.unwrap_or(0.1);
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(CliError::field("regularizer.weight", "must be a nonnegative number"));
    }
    let method = c.solver.method.clone().unwrap_or_else(|| "pdhg".into());
    let base = SolverConfig { max_iters: 5000, tol: 1e-6, ..Default::default() };
    let cfg = setup::solver_config(&c.solver, base)?;
    let steps_given = (c.solver.tau.is_some(), c.solver.sigma.is_some());
    if run.dry_run {
        setup::noise_kind(&c.noise)?;
        return Ok(Outcome::Converged);
    }

    let start = Instant::now();
    let clean = op.apply(truth.as_slice());
    let y = setup::noisy(&clean, &c.noise, run.seed)?;
    let baseline = truth.with_data(op.adjoint(&y));
    let (recon, trace) = match reg_kind {
        Some(k) if weight > 0.0 => {
            let reg = Regularizer::new(k, weight, w, h)?;
            let fid = Fidelity::new(fid_kind, y.clone())?;
            let u0 = if op.range_dim() == op.domain_dim() { y.clone() } else { vec![0.0; w * h] };
            let (u, t) = solve(op.as_ref(), fid, &reg, &u0, &method, cfg, steps_given, kind == "identity", w, h)?;
            (truth.with_data(u), Some(t))
        }
        // no regularization: the adjoint baseline, which is the data itself
        // for the identity
        _ => (baseline.clone(), None),
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;

    fs::create_dir_all(run.out)?;
    io::save_pgm(&recon, run.out.join("recon.pgm"), out_fmt.format, out_fmt.range)?;
    io::save_csv(&recon, run.out.join("recon.csv"))?;
    write_trace(&run.out.join("trace.csv"), trace.as_ref())?;
    if c.output.save_data {
        let shaped = if y.len() == w * h { truth.with_data(y.clone()) } else { GridImage::new(1, y.len(), y.clone())? };
        io::save_csv(&shaped, run.out.join("observed.csv"))?;
    }
    let peak = out_fmt.range.hi - out_fmt.range.lo;
    let status = match &trace {
        Some(t) if t.status == SolverStatus::MaxIters => Outcome::MaxIters,
        _ => Outcome::Converged,
    };
    let metrics = json!({
        "psnr": psnr(&recon, &truth, peak)?,
        "rel_err": rel_err(&recon, &truth)?,
        "iters": trace.as_ref().map_or(0, SolverTrace::iters),
        "wall_ms": wall_ms,
        "converged": status == Outcome::Converged,
        "baseline_psnr": psnr(&baseline, &truth, peak)?,
        "baseline_rel_err": rel_err(&baseline, &truth)?,
    });
    write_json(&run.out.join("metrics.json"), &metrics)?;
    Ok(status)
}

fn pnp_sweep(run: &Run) -> Result<Outcome, CliError> {
    let loaded = run.loaded;
    let c = &loaded.config;
    reject("problem.ground_truth", c.problem.ground_truth.is_some(), "pnp-sweep")?;
    reject("problem.contrast", c.problem.contrast.is_some(), "pnp-sweep")?;
    reject("regularizer.kind", c.regularizer.kind.is_some(), "pnp-sweep")?;
    reject("regularizer.weight", c.regularizer.weight.is_some(), "pnp-sweep")?;
    reject("regularizer.threshold", c.regularizer.threshold.is_some(), "pnp-sweep")?;
    reject("regularizer.outer_iters", c.regularizer.outer_iters.is_some(), "pnp-sweep")?;
    reject("regularizer.init", c.regularizer.init.is_some(), "pnp-sweep")?;
    reject("noise.kind", c.noise.kind.is_some(), "pnp-sweep")?;
    reject("solver.method", c.solver.method.is_some(), "pnp-sweep")?;
    if setup::fidelity_kind(loaded)? != FidelityKind::L2 {
        return Err(CliError::field("fidelity.kind", "pnp-sweep uses the l2 fidelity"));
    }

    let truth = setup::truth(loaded)?;
    let (w, h) = truth.shape();
    let kind = c.operator.kind.as_deref().unwrap_or("blur");
    let op = setup::operator(loaded, kind, w, h, run.seed)?;
    let kernel = c.regularizer.denoiser.clone().unwrap_or(Kernel::Gaussian { size: 5, sigma: 1.0 });
    let d = LinearDenoiser::convolution(&setup::kernel_image(&kernel, "regularizer.denoiser")?, w, h)
        .map_err(|e| CliError::field("regularizer.denoiser", e.to_string()))?;
    let rule = match c.regularizer.tau_rule.clone() {
        Some(TauRuleSection::Linear(c)) => TauRule::Linear { c },
        Some(TauRuleSection::Calibrated(candidates)) => TauRule::Calibrated { candidates },
        None => TauRule::Calibrated { candidates: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0] },
    };
    let levels = c.noise.levels.clone().unwrap_or_else(|| (0..6).map(|k| 0.5 / f64::powi(2.0, k)).collect());
    if levels.is_empty() || levels.iter().any(|&l| !(l > 0.0)) || levels.windows(2).any(|p| !(p[1] < p[0])) {
        return Err(CliError::field("noise.levels", "need positive, strictly decreasing levels"));
    }
    let base = SolverConfig { max_iters: 3000, tol: 1e-9, ..Default::default() };
    let cfg = setup::solver_config(&c.solver, base)?;
    if run.dry_run {
        return Ok(Outcome::Converged);
    }

    let start = Instant::now();
    let table = convergence_sweep(op.as_ref(), &truth, &d, &rule, &levels, run.seed, &cfg)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    fs::create_dir_all(run.out)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    fs::write(run.out.join("sweep.csv"), csv)?;
    let monotone = table.monotone();
    write_json(
        &run.out.join("metrics.json"),
        &json!({ "monotone": monotone, "c": table.c, "levels": levels.len(), "wall_ms": wall_ms }),
    )?;
    println!("monotone={monotone}");
    let capped = table.rows.iter().any(|r| r.iters >= cfg.max_iters);
    Ok(if capped { Outcome::MaxIters } else { Outcome::Converged })
}

fn segment(run: &Run) -> Result<Outcome, CliError> {
    let loaded = run.loaded;
    let c = &loaded.config;
    let r = &c.regularizer;
    reject("regularizer.denoiser", r.denoiser.is_some(), "segment")?;
    reject("regularizer.tau_rule", r.tau_rule.is_some(), "segment")?;
    reject("solver.method", c.solver.method.is_some(), "segment")?;
    if let Some(k) = r.kind.as_deref() {
        if k != "tv_iso" {
            return Err(CliError::field("regularizer.kind", "segmentation uses tv_iso"));
        }
    }
    if c.operator.kind.as_deref().is_some_and(|k| k != "identity") {
        return Err(CliError::field("operator.kind", "segmentation works on the image directly"));
    }
    let out_fmt = output(loaded)?;

    // a phantom is thresholded into a two-phase image whose mask is the truth
    let (clean, truth_mask) = match (&c.problem.phantom, &c.problem.ground_truth) {
        (Some(_), Some(_)) => return Err(CliError::field("problem.ground_truth", "phantoms carry their own mask")),
        (Some(_), None) => {
            let mask = setup::truth(loaded)?.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let [inside, outside] = c.problem.contrast.unwrap_or([0.9, 0.1]);
            (two_phase(&mask, inside, outside), Some(mask))
        }
        (None, gt) => {
            reject("problem.contrast", c.problem.contrast.is_some(), "segment on an image")?;
            let img = setup::truth(loaded)?;
            let mask = match gt {
                Some(p) => {
                    let m = io::load_image(setup::existing(loaded, p, "problem.ground_truth")?)?;
                    img.check_shape(&m)?;
                    Some(m.map(|v| if v > 0.5 { 1.0 } else { 0.0 }))
                }
                None => None,
            };
            (img, mask)
        }
    };
    let defaults = SegOptions::default();
    let opts = SegOptions {
        alpha: r.weight.unwrap_or(defaults.alpha),
        threshold: r.threshold.unwrap_or(defaults.threshold),
        outer_iters: r.outer_iters.unwrap_or(defaults.outer_iters),
        init: r.init.map(|[a, b]| (a, b)),
        inner: setup::solver_config(&c.solver, defaults.inner)?,
    };
    if !(opts.alpha > 0.0) {
        return Err(CliError::field("regularizer.weight", "must be positive"));
    }
    if !(opts.threshold > 0.0 && opts.threshold < 1.0) {
        return Err(CliError::field("regularizer.threshold", "must lie in (0, 1)"));
    }
    if run.dry_run {
        setup::noise_kind(&c.noise)?;
        return Ok(Outcome::Converged);
    }

    let start = Instant::now();
    let y = clean.with_data(setup::noisy(clean.as_slice(), &c.noise, run.seed)?);
    let res = chan_vese(&y, &opts)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;

    fs::create_dir_all(run.out)?;
    io::save_pgm(&res.mask, run.out.join("mask.pgm"), PgmFormat::Ascii, IntensityRange::default())?;
    io::save_pgm(&res.v, run.out.join("relaxed.pgm"), out_fmt.format, IntensityRange::default())?;
    let mut csv = String::from("round,energy\n");
    for (k, e) in res.energies.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", k + 1, e));
    }
    fs::write(run.out.join("energy.csv"), csv)?;
    if c.output.save_data {
        io::save_csv(&y, run.out.join("observed.csv"))?;
    }
    let mut m = Map::new();
    if let Some(t) = &truth_mask {
        m.insert("dice".into(), json!(dice(&res.mask, t)?));
    }
    m.insert("degenerate_region".into(), json!(res.degenerate));
    m.insert("c1".into(), json!(res.c1));
    m.insert("c2".into(), json!(res.c2));
    m.insert("energy".into(), json!(res.energy));
    m.insert("iters".into(), json!(res.inner_iters));
    m.insert("wall_ms".into(), json!(wall_ms));
    write_json(&run.out.join("metrics.json"), &Value::Object(m))?;
    Ok(Outcome::Converged)
}
