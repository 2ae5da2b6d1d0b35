//! Preset comparison suites with median-over-seeds traces.

use std::path::PathBuf;

use poissonpr::TraceRecord;
use serde_json::json;

use crate::config::{apply_override, RunConfig};
use crate::experiment::{execute, status_json, write_trace};
use crate::CliError;

/// A labelled set of configuration overrides.
pub struct Variant {
    pub label: &'static str,
    pub overrides: Vec<&'static str>,
}

fn v(label: &'static str, overrides: &[&'static str]) -> Variant {
    Variant {
        label,
        overrides: overrides.to_vec(),
    }
}

/// Cross-product of measurement models and algorithms.
pub struct Preset {
    pub name: &'static str,
    pub title: &'static str,
    pub models: Vec<Variant>,
    pub algorithms: Vec<Variant>,
}

pub const PRESETS: [&str; 4] = ["fig5", "fig6", "fig8", "twf"];

pub fn preset(name: &str) -> Result<Preset, CliError> {
    let huber = "regularizer.kind=huber_tv";
    Ok(match name {
        "fig5" => Preset {
            name: "fig5",
            title: "Comparison of convergence speed for various WF methods",
            models: vec![v("gaussian", &["model.variant=gaussian"])],
            algorithms: vec![
                v("wf-fisher", &["algorithm.kind=wf", "algorithm.step=fisher"]),
                v("wf-backtracking", &["algorithm.kind=wf", "algorithm.step=backtracking"]),
                v(
                    "wf-exact-gaussian",
                    &["algorithm.kind=wf", "algorithm.likelihood=gaussian", "algorithm.step=exact_line_search"],
                ),
                v("lbfgs", &["algorithm.kind=lbfgs"]),
            ],
        },
        "fig6" => Preset {
            name: "fig6",
            title: "Comparison of Poisson and Gaussian algorithms",
            models: vec![
                v("gaussian", &["model.variant=gaussian"]),
                v("masked-dft", &["model.variant=masked_dft"]),
            ],
            algorithms: vec![
                v(
                    "wf-gaussian",
                    &["algorithm.kind=wf", "algorithm.likelihood=gaussian", "algorithm.step=exact_line_search"],
                ),
                v("wf-poisson", &["algorithm.kind=wf", "algorithm.step=fisher"]),
                v("wf-poisson-huber", &["algorithm.kind=wf", "algorithm.step=fisher", huber]),
                v("mm-improved-huber", &["algorithm.kind=mm", "algorithm.curvature=improved", huber]),
                v("admm-huber", &["algorithm.kind=admm", huber]),
            ],
        },
        "fig8" => Preset {
            name: "fig8",
            title: "Regularized Poisson algorithms",
            models: vec![
                v("gaussian", &["model.variant=gaussian"]),
                v(
                    "canonical-dft",
                    &["model.variant=canonical_dft", "signal.source=disk"],
                ),
            ],
            algorithms: vec![
                v("wf-fisher", &["algorithm.kind=wf", "algorithm.step=fisher", huber]),
                v("wf-backtracking", &["algorithm.kind=wf", "algorithm.step=backtracking", huber]),
                v("mm-max", &["algorithm.kind=mm", "algorithm.curvature=max", huber]),
                v("mm-improved", &["algorithm.kind=mm", "algorithm.curvature=improved", huber]),
                v("admm", &["algorithm.kind=admm", huber]),
            ],
        },
        "twf" => Preset {
            name: "twf",
            title: "Truncated WF versus truncation threshold",
            models: vec![v("gaussian", &["model.variant=gaussian"])],
            algorithms: vec![
                v("twf-1", &["algorithm.kind=wf", "algorithm.truncation=1"]),
                v("twf-5", &["algorithm.kind=wf", "algorithm.truncation=5"]),
                v("twf-10", &["algorithm.kind=wf", "algorithm.truncation=10"]),
                v("twf-50", &["algorithm.kind=wf", "algorithm.truncation=50"]),
                v("twf-100", &["algorithm.kind=wf", "algorithm.truncation=100"]),
                v("wf", &["algorithm.kind=wf", "algorithm.truncation=null"]),
            ],
        },
        other => {
            return Err(CliError::Config(format!(
                "unknown preset '{other}', expected one of {}",
                PRESETS.join(", ")
            )))
        }
    })
}

/// Median of a nonempty slice; NaN entries sort last.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-iteration medians over traces. Traces that stop early hold their
/// last record.
pub fn median_trace(traces: &[Vec<TraceRecord>]) -> Vec<TraceRecord> {
    let len = traces.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let rows: Vec<&TraceRecord> = traces.iter().filter_map(|t| t.get(i).or(t.last())).collect();
            let col = |f: fn(&TraceRecord) -> f64| median(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            TraceRecord {
                k: i,
                elapsed_seconds: col(|r| r.elapsed_seconds),
                cost: col(|r| r.cost),
                nrmse: col(|r| r.nrmse),
                psnr: col(|r| r.psnr),
            }
        })
        .collect()
}

/// Paths written by [`run_suite`].
#[derive(Debug, Clone)]
pub struct SuiteArtifacts {
    pub tables: Vec<PathBuf>,
    pub comparison: PathBuf,
    pub summary: PathBuf,
    /// Runs that ended with a failure status.
    pub failures: usize,
}

fn resolve(base: &RunConfig, model: &Variant, alg: &Variant, seed: u64) -> Result<RunConfig, CliError> {
    let mut value = base.to_json();
    for o in model.overrides.iter().chain(&alg.overrides) {
        apply_override(&mut value, o)?;
    }
    apply_override(&mut value, &format!("seed={seed}"))?;
    let cfg: RunConfig =
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("preset configuration: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs every (model, algorithm, seed) of the preset from `base` and writes
/// one median trace per (model, algorithm), a combined comparison CSV and a
/// summary JSON into `base.output.dir`.
pub fn run_suite(name: &str, seeds: &[u64], base: &RunConfig) -> Result<SuiteArtifacts, CliError> {
    if seeds.is_empty() {
        return Err(CliError::Config("suite needs at least one seed".into()));
    }
    let p = preset(name)?;
    let dir = &base.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let comparison = dir.join(format!("{}_comparison.csv", p.name));
    let io = |e: csv::Error| CliError::Io(format!("cannot write {}: {e}", comparison.display()));
    let mut combined = csv::Writer::from_path(&comparison).map_err(io)?;
    combined
        .write_record(["model", "algorithm", "iter", "time_s", "cost", "nrmse", "psnr"])
        .map_err(io)?;
    let mut tables = Vec::new();
    let mut runs = Vec::new();
    let mut failures = 0;
    for model in &p.models {
        for alg in &p.algorithms {
            let mut traces = Vec::with_capacity(seeds.len());
            let mut config = None;
            for &seed in seeds {
                let cfg = resolve(base, model, alg, seed)?;
                log::info!("{} {} {} seed {seed}", p.name, model.label, alg.label);
                let e = execute(&cfg)?;
                if matches!(e.run.status, poissonpr::RunStatus::Failed { .. }) {
                    failures += 1;
                }
                runs.push(json!({
                    "model": model.label,
                    "algorithm": alg.label,
                    "seed": seed,
                    "status": status_json(&e.run.status),
                    "final_cost": e.run.final_cost(),
                }));
                config.get_or_insert_with(|| {
                    let mut c = cfg.to_json();
                    c.as_object_mut().expect("object").remove("seed");
                    c
                });
                traces.push(e.run.trace);
            }
            let med = median_trace(&traces);
            let path = dir.join(format!("{}_{}_{}.csv", p.name, model.label, alg.label));
            write_trace(&path, &med)?;
            tables.push(path);
            for r in &med {
                combined
                    .write_record([
                        model.label.to_string(),
                        alg.label.to_string(),
                        r.k.to_string(),
                        r.elapsed_seconds.to_string(),
                        r.cost.to_string(),
                        r.nrmse.to_string(),
                        r.psnr.to_string(),
                    ])
                    .map_err(io)?;
            }
            runs.push(json!({"model": model.label, "algorithm": alg.label, "config": config}));
        }
    }
    combined
        .flush()
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", comparison.display())))?;
    let summary = dir.join(format!("{}_summary.json", p.name));
    let body = json!({
        "library": "poissonpr",
        "version": env!("CARGO_PKG_VERSION"),
        "preset": p.name,
        "title": p.title,
        "seeds": seeds,
        "aggregation": "per-iteration median over seeds; runs that stop early hold their last record",
        "psnr_convention": crate::experiment::PSNR_CONVENTION,
        "runs": runs,
    });
    std::fs::write(&summary, serde_json::to_string_pretty(&body).expect("serializes") + "\n")
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", summary.display())))?;
    Ok(SuiteArtifacts {
        tables,
        comparison,
        summary,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(k: usize, cost: f64) -> TraceRecord {
        TraceRecord {
            k,
            elapsed_seconds: k as f64,
            cost,
            nrmse: cost / 10.0,
            psnr: -cost,
        }
    }

    #[test]
    fn median_handles_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn single_trace_is_identity() {
        let t = vec![rec(0, 5.0), rec(1, 4.0), rec(2, 3.5)];
        assert_eq!(median_trace(std::slice::from_ref(&t)), t);
    }

    #[test]
    fn short_traces_hold_their_last_row() {
        let a = vec![rec(0, 5.0), rec(1, 4.0)];
        let b = vec![rec(0, 7.0), rec(1, 6.0), rec(2, 1.0)];
        let c = vec![rec(0, 6.0), rec(1, 2.0), rec(2, 0.5)];
        let m = median_trace(&[a, b, c]);
        assert_eq!(m.len(), 3);
        assert_eq!(m[2].cost, 1.0);
        assert_eq!(m[1].cost, 4.0);
    }

    #[test]
    fn empty_seed_list_is_an_error() {
        assert!(matches!(run_suite("fig5", &[], &RunConfig::default()), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_preset_is_an_error() {
        assert!(matches!(preset("fig99"), Err(CliError::Config(_))));
    }

    #[test]
    fn presets_resolve_to_valid_configs() {
        let base = RunConfig::default();
        for name in PRESETS {
            let p = preset(name).unwrap();
            for m in &p.models {
                for a in &p.algorithms {
                    resolve(&base, m, a, 3).unwrap();
                }
            }
        }
    }
}
