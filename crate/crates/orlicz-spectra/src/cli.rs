//! File-based front end: solve, sweep and validate tasks.
//!
//! Exit codes: 0 on success, 1 for configuration problems, 2 for numerical
//! or convergence failures. Structured results are JSON, sweep tables are
//! CSV with a JSON verdict companion, and every file is written atomically
//! (temp file plus rename). A fixed configuration always produces
//! byte-identical outputs.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{RunConfig, Task, SCHEMA};
use crate::mesh::CoefficientVector;
use crate::operator::AssembledProblem;
use crate::solver::{self, Eigenpair};
use crate::validate::{
    dense_oracle_p2, lemma_b1_test, property_battery, translation_test, BatteryReport,
};
use crate::{Error, Result};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;

/// Dispatches the configured task, mapping configuration-class errors to
/// exit code 1.
pub fn run_task(cfg: &RunConfig) -> u8 {
    let outcome = match cfg.task {
        Task::Solve => cmd_solve(cfg),
        Task::Sweep => cmd_sweep(cfg),
        Task::Validate => cmd_validate(cfg),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_CONFIG
        }
    }
}

#[derive(Debug, Serialize)]
struct LevelRecord {
    i: usize,
    k: usize,
    lambda: f64,
    c_value: f64,
    residual: f64,
    iterations: usize,
    coefficients: Vec<f64>,
}

impl LevelRecord {
    fn from_pair(pair: &Eigenpair) -> Self {
        LevelRecord {
            i: pair.level,
            k: pair.dim,
            lambda: pair.lambda,
            c_value: pair.c_value,
            residual: pair.residual,
            iterations: pair.iterations,
            coefficients: pair.coefficients.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
struct ErrorRecord {
    level: Option<usize>,
    message: String,
}

#[derive(Debug, Serialize)]
struct SolveOutput<'a> {
    schema: &'static str,
    task: &'static str,
    inputs: &'a RunConfig,
    results: Vec<LevelRecord>,
    errors: Vec<ErrorRecord>,
}

fn requested_levels(cfg: &RunConfig) -> Result<Vec<usize>> {
    if cfg.levels.is_empty() {
        return Err(Error::Config("levels must not be empty".into()));
    }
    let mut seen = Vec::new();
    for &l in &cfg.levels {
        if !seen.contains(&l) {
            seen.push(l);
        }
    }
    Ok(seen)
}

/// Solves the requested levels and writes one JSON record. Convergence and
/// level-range failures land in the error list with exit code 2.
pub fn cmd_solve(cfg: &RunConfig) -> Result<u8> {
    let levels = requested_levels(cfg)?;
    let prob = cfg.build_problem(None, None, true)?;
    let (results, errors) = solve_requested(&prob, &levels, cfg);
    let output = SolveOutput {
        schema: SCHEMA,
        task: "solve",
        inputs: cfg,
        results,
        errors,
    };
    let text = serde_json::to_string_pretty(&output)?;
    write_atomic(Path::new(&cfg.output), text.as_bytes())?;
    Ok(if output_has_errors(&output) {
        EXIT_NUMERICAL
    } else {
        EXIT_OK
    })
}

fn output_has_errors(out: &SolveOutput<'_>) -> bool {
    !out.errors.is_empty()
}

fn solve_requested(
    prob: &AssembledProblem,
    levels: &[usize],
    cfg: &RunConfig,
) -> (Vec<LevelRecord>, Vec<ErrorRecord>) {
    let mut results = Vec::new();
    let mut errors = Vec::new();
    let k = prob.dim();
    let feasible: Vec<usize> = levels.iter().copied().filter(|&l| l >= 1 && l <= k).collect();
    let max_feasible = feasible.iter().copied().max().unwrap_or(0);

    let chain = if max_feasible > 0 {
        match solver::solve_chain(prob, max_feasible, &cfg.solver, None) {
            Ok(chain) => Some(chain),
            Err(e) => {
                errors.push(ErrorRecord {
                    level: None,
                    message: e.to_string(),
                });
                None
            }
        }
    } else {
        None
    };

    for &l in levels {
        if l < 1 || l > k {
            errors.push(ErrorRecord {
                level: Some(l),
                message: format!("level {l} exceeds dimension {k}: the candidate family is empty"),
            });
            continue;
        }
        if let Some(chain) = &chain {
            results.push(LevelRecord::from_pair(&chain[l - 1]));
        }
    }
    (results, errors)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    k: usize,
    s: f64,
    i: usize,
    lambda: f64,
    c_value: f64,
    residual: f64,
}

#[derive(Debug, Serialize)]
struct SweepVerdicts<'a> {
    schema: &'static str,
    task: &'static str,
    inputs: &'a RunConfig,
    /// Attained levels nondecreasing along the dimension sweep (1e-6
    /// slack), per requested level; absent without a dimension sweep.
    c_nondecreasing_in_k: Option<bool>,
    /// Attained levels nonincreasing in the level index at each sweep
    /// point.
    c_nonincreasing_in_i: Option<bool>,
    /// Multipliers nondecreasing in the level index at each sweep point.
    lambda_nondecreasing_in_i: Option<bool>,
    errors: Vec<ErrorRecord>,
}

/// Runs a dimension or order sweep; emits `k,s,i,lambda,c_value,residual`
/// rows plus a verdict JSON next to the table.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<u8> {
    let levels = requested_levels(cfg)?;
    let k_sweep = cfg.sweep.k_list.len() >= 2;
    let s_sweep = cfg.sweep.s_list.len() >= 2;
    if k_sweep == s_sweep {
        return Err(Error::Config(
            "sweep needs at least two points in exactly one of k_list or s_list".into(),
        ));
    }

    let mut rows: Vec<SweepRow> = Vec::new();
    let mut errors: Vec<ErrorRecord> = Vec::new();

    if k_sweep {
        for w in cfg.sweep.k_list.windows(2) {
            if w[1] != 2 * w[0] + 1 {
                return Err(Error::Config(format!(
                    "k_list must be a dyadic chain (next = 2k + 1); {} does not follow {}",
                    w[1], w[0]
                )));
            }
        }
        let mut problems = Vec::new();
        for &k in &cfg.sweep.k_list {
            problems.push(cfg.build_problem(Some(k), None, true)?);
        }
        for &level in &levels {
            match solver::continuation(&problems, level, &cfg.solver) {
                Ok(outcomes) => {
                    for (idx, outcome) in outcomes.iter().enumerate() {
                        match outcome {
                            Ok(pair) => rows.push(SweepRow {
                                k: cfg.sweep.k_list[idx],
                                s: cfg.s,
                                i: level,
                                lambda: pair.lambda,
                                c_value: pair.c_value,
                                residual: pair.residual,
                            }),
                            Err(e) => errors.push(ErrorRecord {
                                level: Some(level),
                                message: format!("k = {}: {e}", cfg.sweep.k_list[idx]),
                            }),
                        }
                    }
                }
                Err(e) => errors.push(ErrorRecord {
                    level: Some(level),
                    message: e.to_string(),
                }),
            }
        }
    } else {
        for &s in &cfg.sweep.s_list {
            let prob = cfg.build_problem(None, Some(s), true)?;
            let max_level = levels.iter().copied().max().unwrap_or(1);
            match solver::solve_chain(&prob, max_level, &cfg.solver, None) {
                Ok(chain) => {
                    for &level in &levels {
                        let pair = &chain[level - 1];
                        rows.push(SweepRow {
                            k: cfg.mesh.k,
                            s,
                            i: level,
                            lambda: pair.lambda,
                            c_value: pair.c_value,
                            residual: pair.residual,
                        });
                    }
                }
                Err(e) => errors.push(ErrorRecord {
                    level: None,
                    message: format!("s = {s}: {e}"),
                }),
            }
        }
    }

    // Monotonicity verdicts with the solver slack.
    let slack = 1e-6;
    let c_nondecreasing_in_k = if k_sweep {
        let mut all = true;
        let mut any = false;
        for &level in &levels {
            let seq: Vec<f64> = rows
                .iter()
                .filter(|r| r.i == level)
                .map(|r| r.c_value)
                .collect();
            if seq.len() >= 2 {
                any = true;
                all &= seq.windows(2).all(|w| w[1] >= w[0] - slack);
            }
        }
        if any {
            Some(all)
        } else {
            None
        }
    } else {
        None
    };
    let per_point = |key: fn(&SweepRow) -> f64, nonincreasing: bool| -> Option<bool> {
        let mut all = true;
        let mut any = false;
        let points: Vec<(usize, u64)> = {
            let mut seen = Vec::new();
            for r in &rows {
                let tag = (r.k, r.s.to_bits());
                if !seen.contains(&tag) {
                    seen.push(tag);
                }
            }
            seen
        };
        for (k, s_bits) in points {
            let mut seq: Vec<(usize, f64)> = rows
                .iter()
                .filter(|r| r.k == k && r.s.to_bits() == s_bits)
                .map(|r| (r.i, key(r)))
                .collect();
            seq.sort_by_key(|&(i, _)| i);
            if seq.len() >= 2 {
                any = true;
                all &= seq.windows(2).all(|w| {
                    if nonincreasing {
                        w[1].1 <= w[0].1 + slack
                    } else {
                        w[1].1 >= w[0].1 - slack
                    }
                });
            }
        }
        if any {
            Some(all)
        } else {
            None
        }
    };
    let c_nonincreasing_in_i = per_point(|r| r.c_value, true);
    let lambda_nondecreasing_in_i = per_point(|r| r.lambda, false);

    let mut csv = String::from("k,s,i,lambda,c_value,residual\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.k, r.s, r.i, r.lambda, r.c_value, r.residual
        ));
    }
    let out_path = PathBuf::from(&cfg.output);
    write_atomic(&out_path, csv.as_bytes())?;

    let verdicts = SweepVerdicts {
        schema: SCHEMA,
        task: "sweep",
        inputs: cfg,
        c_nondecreasing_in_k,
        c_nonincreasing_in_i,
        lambda_nondecreasing_in_i,
        errors,
    };
    let companion = out_path.with_extension("verdicts.json");
    write_atomic(&companion, serde_json::to_string_pretty(&verdicts)?.as_bytes())?;

    Ok(if verdicts.errors.is_empty() {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    })
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    trials: usize,
    failures: usize,
    /// Worst observed left/right ratio.
    worst_ratio: f64,
}

#[derive(Debug, Serialize)]
struct OracleCheck {
    lambda_solver: f64,
    lambda_oracle: f64,
    relative_difference: f64,
    ok: bool,
}

#[derive(Debug, Serialize)]
struct ValidateOutput<'a> {
    schema: &'static str,
    task: &'static str,
    inputs: &'a RunConfig,
    battery: BatteryReport,
    translation_norm: SweepSummary,
    translation_modular: SweepSummary,
    oracle: Option<OracleCheck>,
    total_failures: usize,
}

/// Runs the inequality battery, the translation sweeps and (for quadratic
/// data) the dense-oracle cross-check. Exit 0 only with zero failures.
pub fn cmd_validate(cfg: &RunConfig) -> Result<u8> {
    // Planted violations must reach the battery, so admissibility is not
    // enforced here.
    let prob = cfg.build_problem(None, None, false)?;
    let trials = cfg.validate.trials;
    let battery = property_battery(&prob, trials, cfg.solver.rng_seed);

    let sweep_n = if trials == 0 {
        0
    } else {
        cfg.validate.sweep_samples
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.solver.rng_seed ^ 0xB105_F00D);
    let young = cfg.build_young(false)?;
    let basis = prob.basis();
    let k = prob.dim();
    let mut norm_fail = 0usize;
    let mut norm_worst = 0.0f64;
    let mut mod_fail = 0usize;
    let mut mod_worst = 0.0f64;
    for _ in 0..sweep_n {
        let u = CoefficientVector((0..k).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let h = rng.gen_range(-0.45..0.45);
        match translation_test(basis, &young, &u, h) {
            Ok(rep) => {
                norm_worst = norm_worst.max(rep.ratio);
                if !rep.ok {
                    norm_fail += 1;
                }
            }
            Err(_) => norm_fail += 1,
        }
        match lemma_b1_test(basis, &young, &u, h) {
            Ok(rep) => {
                if rep.rhs > 0.0 {
                    mod_worst = mod_worst.max(rep.lhs / rep.rhs);
                }
                if !rep.ok {
                    mod_fail += 1;
                }
            }
            Err(_) => mod_fail += 1,
        }
    }

    let oracle = if trials > 0 && prob.young().is_quadratic() && prob.growth().is_linear() {
        let check = match dense_oracle_p2(&prob, 1) {
            Ok(spec) => match solver::solve_first(&prob, &cfg.solver) {
                Ok(pair) => {
                    let rel =
                        (pair.lambda - spec.eigenvalues[0]).abs() / spec.eigenvalues[0];
                    OracleCheck {
                        lambda_solver: pair.lambda,
                        lambda_oracle: spec.eigenvalues[0],
                        relative_difference: rel,
                        ok: rel <= 1e-6,
                    }
                }
                Err(_) => OracleCheck {
                    lambda_solver: f64::NAN,
                    lambda_oracle: spec.eigenvalues[0],
                    relative_difference: f64::INFINITY,
                    ok: false,
                },
            },
            Err(e) => {
                return Err(e);
            }
        };
        Some(check)
    } else {
        None
    };

    let oracle_failures = oracle.as_ref().map_or(0, |o| usize::from(!o.ok));
    let total_failures = battery.total_failures + norm_fail + mod_fail + oracle_failures;
    let output = ValidateOutput {
        schema: SCHEMA,
        task: "validate",
        inputs: cfg,
        battery,
        translation_norm: SweepSummary {
            trials: sweep_n,
            failures: norm_fail,
            worst_ratio: norm_worst,
        },
        translation_modular: SweepSummary {
            trials: sweep_n,
            failures: mod_fail,
            worst_ratio: mod_worst,
        },
        oracle,
        total_failures,
    };
    write_atomic(
        Path::new(&cfg.output),
        serde_json::to_string_pretty(&output)?.as_bytes(),
    )?;
    Ok(if total_failures == 0 {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    })
}

/// Writes through a sibling temp file and renames into place, so readers
/// never observe a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{SweepConfig, ValidateConfig, YoungConfig};
    use crate::solver::SolverConfig;

    fn tiny_config(dir: &Path, name: &str) -> RunConfig {
        RunConfig {
            mesh: crate::config::MeshConfig {
                k: 5,
                quad_order: 3,
                ..Default::default()
            },
            solver: SolverConfig {
                restarts: 2,
                ..SolverConfig::default()
            },
            output: dir.join(name).to_string_lossy().into_owned(),
            ..RunConfig::default()
        }
    }

    #[test]
    fn solve_writes_deterministic_output() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path(), "solve.json");
        assert_eq!(cmd_solve(&cfg).unwrap(), EXIT_OK);
        let first = std::fs::read(&cfg.output).unwrap();
        assert_eq!(cmd_solve(&cfg).unwrap(), EXIT_OK);
        let second = std::fs::read(&cfg.output).unwrap();
        assert_eq!(first, second);
        let parsed: serde_json::Value = serde_json::from_slice(&first).unwrap();
        assert_eq!(parsed["schema"], "orlicz-spectra/v1");
        assert_eq!(parsed["results"][0]["i"], 1);
        assert!(parsed["results"][0]["residual"].as_f64().unwrap() <= 1e-8);
    }

    #[test]
    fn solve_reports_level_overflow() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path(), "overflow.json");
        cfg.mesh.k = 3;
        cfg.levels = vec![5];
        assert_eq!(cmd_solve(&cfg).unwrap(), EXIT_NUMERICAL);
        let parsed: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&cfg.output).unwrap()).unwrap();
        let msg = parsed["errors"][0]["message"].as_str().unwrap();
        assert!(msg.contains("exceeds dimension"), "{msg}");
    }

    #[test]
    fn sweep_requires_two_points() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path(), "sweep.csv");
        cfg.task = Task::Sweep;
        cfg.sweep = SweepConfig {
            k_list: vec![7],
            s_list: vec![],
        };
        assert!(cmd_sweep(&cfg).is_err());
        cfg.sweep.k_list.clear();
        assert!(cmd_sweep(&cfg).is_err());
    }

    #[test]
    fn sweep_rejects_non_dyadic_chain() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path(), "sweep.csv");
        cfg.task = Task::Sweep;
        cfg.sweep.k_list = vec![7, 14];
        assert!(cmd_sweep(&cfg).is_err());
    }

    #[test]
    fn validate_zero_trials_passes() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path(), "validate.json");
        cfg.task = Task::Validate;
        cfg.validate = ValidateConfig {
            trials: 0,
            sweep_samples: 0,
        };
        assert_eq!(cmd_validate(&cfg).unwrap(), EXIT_OK);
        let parsed: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&cfg.output).unwrap()).unwrap();
        assert_eq!(parsed["total_failures"], 0);
    }

    #[test]
    fn validate_flags_planted_table() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path(), "planted.json");
        cfg.task = Task::Validate;
        cfg.young = YoungConfig::Custom {
            table: vec![(0.0, 0.0), (1.0, 2.0), (2.0, 0.5), (3.0, 4.0)],
        };
        cfg.validate = ValidateConfig {
            trials: 200,
            sweep_samples: 0,
        };
        assert_eq!(cmd_validate(&cfg).unwrap(), EXIT_NUMERICAL);
        let parsed: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&cfg.output).unwrap()).unwrap();
        assert!(parsed["total_failures"].as_u64().unwrap() > 0);
    }

    #[test]
    fn input_config_is_never_mutated() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path(), "out.json");
        let cfg_path = dir.path().join("config.json");
        std::fs::write(&cfg_path, cfg.to_json()).unwrap();
        let before = std::fs::read(&cfg_path).unwrap();
        cmd_solve(&cfg).unwrap();
        assert_eq!(before, std::fs::read(&cfg_path).unwrap());
    }
}
