//! Single runs: instance construction, solver dispatch and artifacts.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use poissonpr::admm::{run_admm, AdmmConfig};
use poissonpr::baseline::run_lbfgs;
use poissonpr::eval::{initialize, PSNR_CAP_DB};
use poissonpr::mm::{run_mm, CurvatureKind, MmConfig, OPTIMAL_GRID_POINTS};
use poissonpr::numerics::LbfgsConfig;
use poissonpr::phantom;
use poissonpr::wf::{run_wf, Backtracking, StepRule, TruncationRule, WfConfig};
use poissonpr::{
    CanonicalDftSpec, DiffOp, ForwardModel, HuberTv, Likelihood, MaskSampling, Monitor, Objective,
    OrthoTransform, Problem, Regularizer, RunState, RunStatus, SignalVector, SparseL1, TraceRecord,
};
use serde_json::json;

use crate::config::*;
use crate::signals::{load_pgm, save_csv, save_pgm, true_signal};
use crate::CliError;

pub const PSNR_CONVENTION: &str = "psnr = 10 log10(peak^2 N / ||x_hat - x_true||^2) after global-phase correction; \
peak = max|x_true| unless psnr_peak is set; exact reconstructions report the cap";

/// Ground truth, measurement model and data of one run.
pub struct Instance {
    pub truth: SignalVector,
    pub model: Arc<ForwardModel>,
    pub counts: Vec<u64>,
}

/// In-memory result of one run. The trace starts with the initialization row.
pub struct Experiment {
    pub config: RunConfig,
    pub instance: Instance,
    pub run: RunState,
    /// Wall time of the whole run including initialization.
    pub total_seconds: f64,
}

/// Files written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub trace: PathBuf,
    pub summary: PathBuf,
    pub signal: PathBuf,
    pub image: Option<PathBuf>,
    pub status: RunStatus,
}

fn config_err(what: &str) -> impl Fn(poissonpr::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{what}: {e}"))
}

fn numerical(what: &str) -> impl Fn(poissonpr::Error) -> CliError + '_ {
    move |e| CliError::Numerical(format!("{what}: {e}"))
}

fn build_model(cfg: &RunConfig, truth: &SignalVector) -> Result<ForwardModel, CliError> {
    let m = &cfg.model;
    let n = truth.len();
    let seed = cfg.seed.wrapping_mul(0x9e37_79b9).wrapping_add(0x6d6f_64);
    let model = match m.variant {
        ModelVariant::Gaussian => ForwardModel::gaussian_random(m.m, n, seed).map_err(config_err("gaussian model"))?,
        ModelVariant::MaskedDft => {
            let sampling = match m.sampling {
                Sampling::Bernoulli => MaskSampling::Bernoulli,
                Sampling::ExactHalf => MaskSampling::ExactHalf,
            };
            ForwardModel::masked_dft_random(n, m.num_masks, sampling, seed).map_err(config_err("masked DFT model"))?
        }
        ModelVariant::CanonicalDft => {
            let (h, w) = truth
                .dims()
                .ok_or_else(|| CliError::Config("canonical_dft needs an image signal (disk or pgm)".into()))?;
            let (reference, ref_w) = match &m.reference_path {
                Some(p) => {
                    let (r, rh, rw) = load_pgm(p)?;
                    if rh != h {
                        return Err(CliError::Config(format!("reference height {rh} differs from image height {h}")));
                    }
                    (r, rw)
                }
                None => {
                    let rw = m.reference_width.unwrap_or(w);
                    let r = phantom::disk(h, rw).values().iter().map(|z| z.re).collect();
                    (r, rw)
                }
            };
            let pad = m.pad_width.unwrap_or(w);
            let total = w + pad + ref_w;
            let spec = CanonicalDftSpec {
                image_dims: (h, w),
                reference,
                ref_width: ref_w,
                pad_width: pad,
                fft_dims: (m.oversampling * h, m.oversampling * total),
            };
            ForwardModel::canonical_dft(spec).map_err(config_err("canonical DFT model"))?
        }
        ModelVariant::File => {
            let path = m.matrix_path.as_deref().expect("validated");
            let model = ForwardModel::from_csv_file(path)
                .map_err(|e| CliError::Config(format!("matrix file {}: {e}", path.display())))?;
            if model.cols() != n {
                return Err(CliError::Config(format!(
                    "matrix file has {} columns but the signal has {n} entries",
                    model.cols()
                )));
            }
            model
        }
    };
    model.with_uniform_background(cfg.background).map_err(config_err("background"))
}

/// Truth, calibrated model and Poisson data for `cfg.seed`.
pub fn build_instance(cfg: &RunConfig) -> Result<Instance, CliError> {
    let truth = true_signal(&cfg.signal, cfg.seed)?;
    let mut model = build_model(cfg, &truth)?;
    model
        .calibrate_scale(truth.values(), cfg.mean_count)
        .map_err(numerical("scale calibration"))?;
    let data = model
        .simulate_poisson(truth.values(), cfg.seed.wrapping_add(0x5eed))
        .map_err(numerical("simulation"))?;
    Ok(Instance {
        truth,
        model: Arc::new(model),
        counts: data.y,
    })
}

fn regularizer(cfg: &RunConfig, truth: &SignalVector) -> Result<Option<Regularizer>, CliError> {
    let r = &cfg.regularizer;
    let n = truth.len();
    Ok(match r.kind {
        RegularizerKind::None => None,
        RegularizerKind::HuberTv => Some(Regularizer::HuberTv(
            HuberTv::new(r.beta, r.alpha, DiffOp::for_signal(n, truth.dims())).map_err(config_err("huber_tv"))?,
        )),
        RegularizerKind::SparseL1 => {
            let t = match r.transform {
                Transform::Identity => OrthoTransform::Identity,
                Transform::Haar => OrthoTransform::Haar,
            };
            Some(Regularizer::SparseL1(SparseL1::new(r.beta, t, n).map_err(config_err("sparse_l1"))?))
        }
    })
}

/// Runs the configured solver without touching the disk.
pub fn execute(cfg: &RunConfig) -> Result<Experiment, CliError> {
    cfg.validate()?;
    let t0 = Instant::now();
    let instance = build_instance(cfg)?;
    let field = instance.truth.field();
    let y: Vec<f64> = instance.counts.iter().map(|&c| c as f64).collect();
    let likelihood = match cfg.algorithm.likelihood {
        LikelihoodKind::Poisson => Likelihood::Poisson,
        LikelihoodKind::Gaussian => Likelihood::Gaussian,
    };
    let obj = Objective::new(Arc::clone(&instance.model), y.clone(), likelihood).map_err(numerical("objective"))?;
    let reg = regularizer(cfg, &instance.truth)?;
    let problem = Problem::new(&obj, reg.as_ref(), field);
    let x0 = initialize(&instance.model, &y, field, cfg.init_iters, cfg.seed.wrapping_add(0x1417))
        .map_err(numerical("initialization"))?
        .with_dims(instance.truth.dims());
    let monitor = Monitor::new(Some(instance.truth.values()), cfg.psnr_peak);
    let c0 = problem.cost(x0.values()).map_err(numerical("initial cost"))?;
    let init_row = monitor.record(0, Duration::ZERO, c0, x0.values());

    let a = &cfg.algorithm;
    let iters = cfg.n_iters;
    let mut run = match a.kind {
        AlgorithmKind::Wf => {
            let rule = match (a.step, likelihood) {
                (StepKind::Fisher, Likelihood::Poisson) => StepRule::FisherPoisson,
                (StepKind::Fisher, Likelihood::Gaussian) => StepRule::FisherGaussian,
                (StepKind::Backtracking, _) => StepRule::Backtracking(Backtracking::default()),
                (StepKind::ExactLineSearch, _) => StepRule::ExactGaussianLineSearch,
            };
            let wf = WfConfig {
                truncation: TruncationRule {
                    enabled: a.truncation.is_some(),
                    a_h: a.truncation.unwrap_or(TruncationRule::default().a_h),
                },
                ..WfConfig::new(rule, iters)
            };
            run_wf(&problem, &wf, &x0, &monitor)
        }
        AlgorithmKind::Mm => {
            let kind = match a.curvature {
                Curvature::Max => CurvatureKind::Max,
                Curvature::Improved => CurvatureKind::Improved,
                Curvature::Optimal => CurvatureKind::OptimalNumeric {
                    points: OPTIMAL_GRID_POINTS,
                },
            };
            run_mm(&problem, &MmConfig::new(kind, iters), &x0, &monitor)
        }
        AlgorithmKind::Admm => {
            let admm = AdmmConfig {
                rho0: a.rho0,
                ..AdmmConfig::new(iters)
            };
            run_admm(&problem, &admm, &x0, &monitor).run
        }
        AlgorithmKind::Lbfgs => {
            let lb = LbfgsConfig {
                memory: a.lbfgs_memory,
                iters,
                ..Default::default()
            };
            run_lbfgs(&problem, &lb, &x0, &monitor)
        }
    };
    run.trace.insert(0, init_row);
    run.x = run.x.with_dims(instance.truth.dims());
    Ok(Experiment {
        config: cfg.clone(),
        instance,
        run,
        total_seconds: t0.elapsed().as_secs_f64(),
    })
}

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["iter", "time_s", "cost", "nrmse", "psnr"]).map_err(io)?;
    for r in trace {
        w.write_record([
            r.k.to_string(),
            r.elapsed_seconds.to_string(),
            r.cost.to_string(),
            r.nrmse.to_string(),
            r.psnr.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn status_json(s: &RunStatus) -> serde_json::Value {
    match s {
        RunStatus::Completed => json!({"state": "completed"}),
        RunStatus::Stationary { at } => json!({"state": "stationary", "at": at}),
        RunStatus::Failed { at, reason } => json!({"state": "failed", "at": at, "reason": reason}),
    }
}

/// Summary object written next to the trace.
pub fn summary(e: &Experiment) -> serde_json::Value {
    let last = e.run.trace.last().expect("trace has the initialization row");
    let first = &e.run.trace[0];
    let total: u64 = e.instance.counts.iter().sum();
    json!({
        "library": "poissonpr",
        "version": env!("CARGO_PKG_VERSION"),
        "status": status_json(&e.run.status),
        "iterations": e.run.trace.len() - 1,
        "final": {"cost": last.cost, "nrmse": last.nrmse, "psnr": last.psnr},
        "initial": {"cost": first.cost, "nrmse": first.nrmse, "psnr": first.psnr},
        "solver_time_s": last.elapsed_seconds,
        "wall_time_s": e.total_seconds,
        "measurements": {
            "rows": e.instance.model.rows(),
            "cols": e.instance.model.cols(),
            "total_counts": total,
            "observed_mean_count": total as f64 / e.instance.counts.len().max(1) as f64,
        },
        "psnr_convention": PSNR_CONVENTION,
        "psnr_cap_db": PSNR_CAP_DB,
        "warnings": e.run.warnings,
        "config": e.config.to_json(),
    })
}

/// Runs `cfg` and writes the trace CSV, summary JSON and estimate dump
/// into `cfg.output.dir`.
pub fn run_experiment(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let e = execute(cfg)?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|err| CliError::Io(format!("cannot create {}: {err}", dir.display())))?;
    let p = &cfg.output.prefix;
    let trace = dir.join(format!("{p}_trace.csv"));
    let summary_path = dir.join(format!("{p}_summary.json"));
    let signal = dir.join(format!("{p}_signal.csv"));
    write_trace(&trace, &e.run.trace)?;
    let text = serde_json::to_string_pretty(&summary(&e)).expect("summary serializes");
    std::fs::write(&summary_path, text + "\n")
        .map_err(|err| CliError::Io(format!("cannot write {}: {err}", summary_path.display())))?;
    save_csv(&signal, e.run.x.values())?;
    let image = match e.run.x.dims() {
        Some((h, w)) => {
            let path = dir.join(format!("{p}_signal.pgm"));
            save_pgm(&path, e.run.x.values(), h, w)?;
            Some(path)
        }
        None => None,
    };
    Ok(Artifacts {
        trace,
        summary: summary_path,
        signal,
        image,
        status: e.run.status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: &str) -> RunConfig {
        RunConfig::load(
            None,
            &[
                "signal.n=16".into(),
                "model.m=128".into(),
                "n_iters=5".into(),
                format!("algorithm.kind={kind}"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_iterations_leave_only_the_init_row() {
        let mut cfg = small("wf");
        cfg.n_iters = 0;
        let e = execute(&cfg).unwrap();
        assert_eq!(e.run.trace.len(), 1);
        assert_eq!(e.run.trace[0].k, 0);
    }

    #[test]
    fn every_algorithm_runs() {
        for kind in ["wf", "mm", "admm", "lbfgs"] {
            let e = execute(&small(kind)).unwrap();
            assert_eq!(e.run.trace.len(), 6, "{kind}");
            assert_eq!(e.run.status, RunStatus::Completed, "{kind}");
        }
    }

    #[test]
    fn every_model_variant_builds() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(&path, ForwardModel::gaussian_random(40, 16, 1).unwrap().to_csv_string()).unwrap();
        for o in [
            vec!["model.variant=masked_dft".to_string()],
            vec!["model.variant=canonical_dft".into(), "signal.source=disk".into(), "signal.height=6".into(), "signal.width=5".into()],
            vec!["model.variant=file".into(), format!("model.matrix_path={}", path.display())],
        ] {
            let mut all = vec!["signal.n=16".to_string(), "n_iters=3".into()];
            all.extend(o.clone());
            let cfg = RunConfig::load(None, &all).unwrap();
            let e = execute(&cfg).unwrap();
            let mean = e.instance.model.mean_intensity(e.instance.truth.values()).unwrap();
            let avg = mean.iter().sum::<f64>() / mean.len() as f64;
            assert!((avg - cfg.mean_count).abs() < 1e-12, "{o:?}: {avg}");
        }
    }

    #[test]
    fn canonical_dft_needs_an_image() {
        let cfg = RunConfig::load(None, &["model.variant=canonical_dft".into()]).unwrap();
        assert!(matches!(execute(&cfg), Err(CliError::Config(_))));
    }
}
