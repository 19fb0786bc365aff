use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use snowgrow_core::metrics::{aggregate, format_sig, scaling_fit, Phase, SummaryRow, TrialReport};
use snowgrow_core::phase1::{expected_device_size, run_until_target, DeviceConfig, Phase1Error};
use snowgrow_core::phase2::{
    build_snowball, build_successful_snowball, estimate_schedule, fresh_flakes, optimize_schedule,
    AllocationSchedule, AttemptModel, REFERENCE,
};
use snowgrow_core::phase3::{
    assemble_small_lattice, bond_probability, generate_bonds_with_probability, percolation_report,
    FULL_GRAPH_MAX_SIDE,
};
use snowgrow_core::stabilizer::verify_rewrite_rules;
use snowgrow_core::trials::run_trials;

use crate::cli::{
    LatticeArgs, LatticeMode, Phase1Args, RunArgs, SnowballArgs, SweepArgs, SweepMetric, VerifyArgs,
};
use crate::output::{sibling, write_reports, write_rows, write_summary};
use crate::svg::{Plot, Series};

/// Why a command did not finish cleanly; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, bad config file or an infeasible request.
    Config(anyhow::Error),
    /// The run finished but a verification check failed.
    Verification(String),
    /// I/O or other runtime trouble.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn config<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

/// Largest graph size the oracle sweep enumerates (2^21 edge masks).
pub const MAX_ORACLE_N: usize = 7;

/// Devices bigger than this are refused rather than allocated.
pub const MAX_DEVICE_QUBITS: usize = 1 << 22;

fn check_run(run: &RunArgs) -> Result<(), Failure> {
    if run.trials == 0 {
        return Err(config(anyhow!("--trials must be at least 1")));
    }
    Ok(())
}

fn check_ps(ps: &[f64]) -> Result<(), Failure> {
    if ps.is_empty() {
        return Err(config(anyhow!("--p needs at least one value")));
    }
    for &p in ps {
        if !(p > 0.0 && p <= 1.0) {
            return Err(config(anyhow!("p_s = {p} is outside (0, 1]")));
        }
    }
    Ok(())
}

fn output_path(run_output: &Option<PathBuf>, name: &str) -> PathBuf {
    run_output.clone().unwrap_or_else(|| PathBuf::from(format!("{name}.csv")))
}

/// Writes the trial CSV, its summary and, if asked, a plot built from the
/// summary.
fn emit(
    path: &Path,
    reports: &[TrialReport],
    svg: bool,
    plot: impl FnOnce(&[SummaryRow]) -> Plot,
) -> Result<Vec<SummaryRow>> {
    write_reports(path, reports)?;
    let summary = aggregate(reports)?;
    let summary_path = sibling(path, ".summary.csv");
    write_summary(&summary_path, &summary)?;
    println!("wrote {} ({} trials) and {}", path.display(), reports.len(), summary_path.display());
    if svg {
        let svg_path = sibling(path, ".svg");
        fs::write(&svg_path, plot(&summary).render()).with_context(|| format!("writing {}", svg_path.display()))?;
        println!("wrote {}", svg_path.display());
    }
    Ok(summary)
}

/// One series per strategy label: (p_s or label-derived x, statistic).
fn series_by_strategy(
    summary: &[SummaryRow],
    metric: &str,
    x: impl Fn(&SummaryRow) -> f64,
    y: impl Fn(&SummaryRow) -> f64,
) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for row in summary.iter().filter(|r| r.metric == metric) {
        let point = (x(row), y(row));
        match out.iter_mut().find(|s| s.label == row.strategy) {
            Some(s) => s.points.push(point),
            None => out.push(Series {
                label: row.strategy.clone(),
                points: vec![point],
            }),
        }
    }
    out
}

fn log2_inv(p: f64) -> f64 {
    (1.0 / p).log2()
}

fn phase1_trial(cfg: &DeviceConfig, rng: &mut snowgrow_core::TrialRng) -> Result<TrialReport, Phase1Error> {
    match run_until_target(cfg, rng) {
        Err(Phase1Error::Timeout { partial }) => Ok(*partial),
        other => other,
    }
}

/// Runs every configuration in order; trial ids continue across
/// configurations and double as RNG stream indices.
fn run_phase1(configs: &[(DeviceConfig, String)], trials: u64, seed: u64) -> Result<Vec<TrialReport>, Failure> {
    for (cfg, _) in configs {
        cfg.validate().map_err(config)?;
    }
    let mut reports = Vec::new();
    for (i, (cfg, label)) in configs.iter().enumerate() {
        let first = i as u64 * trials;
        let batch = run_trials(seed, first, trials, |id, rng| {
            phase1_trial(cfg, rng).map(|mut r| {
                r.trial_id = id;
                r.strategy = label.clone();
                r
            })
        });
        for r in batch {
            reports.push(r.map_err(|e| Failure::Runtime(e.into()))?);
        }
    }
    Ok(reports)
}

pub fn phase1(args: &Phase1Args) -> Result<(), Failure> {
    check_run(&args.run)?;
    check_ps(&args.p)?;
    let label_devices = args.device_qubits.len() > 1;
    let mut configs = Vec::new();
    for &p in &args.p {
        let base = DeviceConfig::new(p, args.strategy).map_err(config)?.with_max_steps(args.max_steps);
        if args.device_qubits.is_empty() {
            configs.push((base.clone(), args.strategy.label().to_string()));
        }
        for &d in &args.device_qubits {
            let label = if label_devices {
                format!("{}@{d}", args.strategy.label())
            } else {
                args.strategy.label().to_string()
            };
            configs.push((base.clone().with_device(d), label));
        }
    }
    let reports = run_phase1(&configs, args.run.trials, args.run.seed)?;
    let timeouts = reports.iter().filter(|r| !r.success).count();
    if timeouts > 0 {
        println!("{timeouts} trials hit --max-steps {} and are flagged success=false", args.max_steps);
    }
    let path = output_path(&args.run.output, "phase1");
    let summary = emit(&path, &reports, args.run.svg, |s| {
        if label_devices {
            let series = device_series(s, &args.p);
            Plot {
                title: "Age of oldest entanglement vs device size".into(),
                x_label: "log2(device qubits)".into(),
                y_label: "median age".into(),
                series,
            }
        } else {
            Plot {
                title: "Steps to first target snowflake".into(),
                x_label: "log2(1/p_s)".into(),
                y_label: "median steps".into(),
                series: series_by_strategy(s, "steps", |r| log2_inv(r.p_s), |r| r.median),
            }
        }
    })?;
    for row in summary.iter().filter(|r| r.metric == "steps") {
        println!(
            "p_s={} {}: median steps {} (mean {})",
            format_sig(row.p_s, 6),
            row.strategy,
            format_sig(row.median, 6),
            format_sig(row.mean, 6)
        );
    }
    Ok(())
}

/// Median age against device size, one series per p_s, from labels of the
/// form `strategy@device`.
fn device_series(summary: &[SummaryRow], ps: &[f64]) -> Vec<Series> {
    ps.iter()
        .map(|&p| Series {
            label: format!("p_s={}", format_sig(p, 3)),
            points: summary
                .iter()
                .filter(|r| r.metric == "age_oldest" && r.p_s == p)
                .filter_map(|r| {
                    let d: f64 = r.strategy.rsplit('@').next()?.parse().ok()?;
                    Some((d.log2(), r.median))
                })
                .collect(),
        })
        .collect()
}

fn schedule_for(p: f64, args: &SnowballArgs) -> Result<(AllocationSchedule, Vec<Vec<String>>), Failure> {
    let opt = optimize_schedule(p, args.model, args.target, args.run.seed).map_err(config)?;
    let schedule = match &args.budgets {
        Some(b) => {
            let budgets: [usize; 4] = b.as_slice().try_into().map_err(|_| config(anyhow!("--budgets needs 4 values")))?;
            let s = AllocationSchedule::new(budgets, args.model);
            estimate_schedule(&s, p).map_err(config)?;
            s
        }
        None => opt.schedule,
    };
    let rows = opt
        .frontier
        .iter()
        .map(|f| {
            let mut row = vec![format_sig(p, 6), args.model.label().to_string()];
            row.extend(f.schedule.budgets.iter().map(|b| b.to_string()));
            row.push(format_sig(f.final_size_per_p, 6));
            row.push(format_sig(f.success_probability, 6));
            row.push((f.schedule == opt.schedule).to_string());
            row.push(format_sig(REFERENCE.snowball_size_per_p, 6));
            row.push(format_sig(REFERENCE.build_probability, 6));
            row
        })
        .collect();
    Ok((schedule, rows))
}

pub const FRONTIER_HEADER: [&str; 11] = [
    "p_s",
    "model",
    "b1",
    "b2",
    "b3",
    "b4",
    "final_size_per_p",
    "success_probability",
    "optimal",
    "reference_size_per_p",
    "reference_probability",
];

pub fn snowball(args: &SnowballArgs) -> Result<(), Failure> {
    check_run(&args.run)?;
    check_ps(&args.p)?;
    let mut reports = Vec::new();
    let mut frontier = Vec::new();
    for (i, &p) in args.p.iter().enumerate() {
        let (schedule, rows) = schedule_for(p, args)?;
        frontier.extend(rows);
        let est = estimate_schedule(&schedule, p).map_err(config)?;
        println!(
            "p_s={} {} budgets {:?}: expected size {}/p_s, success probability {} (reference {}/p_s at {})",
            format_sig(p, 6),
            args.model.label(),
            schedule.budgets,
            format_sig(est.final_size_per_p(), 6),
            format_sig(est.success_probability, 6),
            format_sig(REFERENCE.snowball_size_per_p, 6),
            format_sig(REFERENCE.build_probability, 6),
        );
        let flakes = fresh_flakes(p).map_err(config)?;
        let batch = run_trials(args.run.seed, i as u64 * args.run.trials, args.run.trials, |id, rng| {
            let built = if args.conditioned {
                build_successful_snowball(flakes.clone(), &schedule, p, rng)
            } else {
                build_snowball(flakes.clone(), &schedule, p, rng)
            };
            built.map(|(_, mut r)| {
                r.trial_id = id;
                r
            })
        });
        for r in batch {
            reports.push(r.map_err(|e| Failure::Runtime(e.into()))?);
        }
    }
    let path = output_path(&args.run.output, "snowball");
    let frontier_path = sibling(&path, ".frontier.csv");
    write_rows(&frontier_path, &FRONTIER_HEADER, &frontier)?;
    println!("wrote {}", frontier_path.display());
    let frontier_series = frontier_plot_series(&frontier);
    emit(&path, &reports, args.run.svg, |_| Plot {
        title: "Snowball schedule frontier".into(),
        x_label: "expected final size x p_s".into(),
        y_label: "log10 success probability".into(),
        series: frontier_series,
    })?;
    Ok(())
}

fn frontier_plot_series(rows: &[Vec<String>]) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for row in rows {
        let label = format!("p_s={}", row[0]);
        let x: f64 = row[6].parse().unwrap_or(f64::NAN);
        let y: f64 = row[7].parse::<f64>().map(f64::log10).unwrap_or(f64::NAN);
        match out.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push((x, y)),
            None => out.push(Series { label, points: vec![(x, y)] }),
        }
    }
    out
}

fn lattice_report(p_s: f64, strategy: &str, steps: u64, pr: &snowgrow_core::PercolationReport) -> TrialReport {
    let mut r = TrialReport::new(Phase::Lattice, p_s, strategy);
    r.steps = steps;
    r.final_size = pr.largest_cluster_size as u64;
    r.success = pr.crosses();
    r
}

pub fn lattice(args: &LatticeArgs) -> Result<(), Failure> {
    check_run(&args.run)?;
    let (w, h) = (args.width, args.height);
    if w < 2 || h < 2 {
        return Err(config(anyhow!("lattice must be at least 2x2, got {w}x{h}")));
    }
    let trials = args.run.trials;
    let seed = args.run.seed;
    let mut reports = Vec::new();
    match args.mode {
        LatticeMode::Statistical => {
            // (p_s column, bond probability, strategy label)
            let points: Vec<(f64, f64, &str)> = if args.bond_prob.is_empty() {
                check_ps(&args.p)?;
                args.p
                    .iter()
                    .map(|&p| {
                        let size = args.snowball_size.unwrap_or((REFERENCE.snowball_size_per_p / p).floor() as usize);
                        (p, bond_probability(size, p), "statistical")
                    })
                    .collect()
            } else {
                for &q in &args.bond_prob {
                    if !(0.0..=1.0).contains(&q) {
                        return Err(config(anyhow!("bond probability {q} is outside [0, 1]")));
                    }
                }
                args.bond_prob.iter().map(|&q| (q, q, "bond-map")).collect()
            };
            for (i, &(p, q, label)) in points.iter().enumerate() {
                if label == "statistical" {
                    println!("p_s={}: bond probability {}", format_sig(p, 6), format_sig(q, 6));
                }
                let batch = run_trials(seed, i as u64 * trials, trials, |id, rng| {
                    let bonds = generate_bonds_with_probability(w, h, q, rng).expect("validated dimensions");
                    let mut r = lattice_report(p, label, 1, &percolation_report(&bonds));
                    r.trial_id = id;
                    r
                });
                reports.extend(batch);
            }
        }
        LatticeMode::FullGraph => {
            check_ps(&args.p)?;
            if w > FULL_GRAPH_MAX_SIDE || h > FULL_GRAPH_MAX_SIDE {
                return Err(config(anyhow!(
                    "full-graph mode is limited to {FULL_GRAPH_MAX_SIDE}x{FULL_GRAPH_MAX_SIDE}, got {w}x{h}"
                )));
            }
            for (i, &p) in args.p.iter().enumerate() {
                let opt = optimize_schedule(p, AttemptModel::ParallelBurst, REFERENCE.snowball_size_per_p, seed)
                    .map_err(config)?;
                let flakes = fresh_flakes(p).map_err(config)?;
                let batch = run_trials(seed, i as u64 * trials, trials, |id, rng| -> Result<TrialReport> {
                    let balls = (0..w * h)
                        .map(|_| {
                            build_successful_snowball(flakes.clone(), &opt.schedule, p, rng)
                                .map(|(b, _)| b.snowball.expect("conditioned builds succeed"))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    let lat = assemble_small_lattice(&balls, w, h, p, rng)?;
                    let mut r = lattice_report(p, "full-graph", 1, &percolation_report(&lat.bonds));
                    r.trial_id = id;
                    r.max_error_weight = lat.graph.max_error_weight() as u64;
                    r.eo_attempts = lat.eo_attempts;
                    Ok(r)
                });
                for r in batch {
                    reports.push(r?);
                }
            }
        }
    }
    let path = output_path(&args.run.output, "lattice");
    let summary = emit(&path, &reports, args.run.svg, |s| Plot {
        title: format!("Crossing frequency, {w}x{h} lattice"),
        x_label: if args.bond_prob.is_empty() { "p_s".into() } else { "bond probability".into() },
        y_label: "crossing frequency".into(),
        series: series_by_strategy(s, "success", |r| r.p_s, |r| r.mean),
    })?;
    for row in summary.iter().filter(|r| r.metric == "success") {
        println!("{} {}: crossing frequency {}", row.strategy, format_sig(row.p_s, 6), format_sig(row.mean, 6));
    }
    Ok(())
}

pub const ORACLE_HEADER: [&str; 4] = ["n", "connected_graphs", "checks", "passed"];

pub fn verify_oracle(args: &VerifyArgs) -> Result<(), Failure> {
    if args.max_n == 0 || args.max_n > MAX_ORACLE_N {
        return Err(config(anyhow!("--max-n must be between 1 and {MAX_ORACLE_N}")));
    }
    let tallies = verify_rewrite_rules(args.max_n).map_err(|e| Failure::Verification(e.to_string()))?;
    let path = args.output.clone().unwrap_or_else(|| PathBuf::from("verify-oracle.csv"));
    write_rows(
        &path,
        &ORACLE_HEADER,
        tallies
            .iter()
            .map(|t| [t.n, t.connected_graphs, t.checks, t.passed].map(|v| v.to_string())),
    )?;
    let checks: usize = tallies.iter().map(|t| t.checks).sum();
    let passed: usize = tallies.iter().map(|t| t.passed).sum();
    println!("oracle: {passed}/{checks} checks passed for n <= {}", args.max_n);
    println!("wrote {}", path.display());
    if passed != checks {
        return Err(Failure::Verification(format!("{} rewrite checks disagree with the oracle", checks - passed)));
    }
    Ok(())
}

pub const FIT_HEADER: [&str; 5] = ["metric", "slope", "intercept", "residual", "points"];

pub fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    check_run(&args.run)?;
    check_ps(&args.p)?;
    let (metric, column) = match args.metric {
        SweepMetric::Age => ("age", "age_oldest"),
        SweepMetric::Steps => ("steps", "steps"),
        SweepMetric::ErrorWeight => ("error-weight", "max_error_weight"),
        SweepMetric::Diameter => ("diameter", "diameter"),
    };
    let reports = if args.metric == SweepMetric::Diameter {
        let mut reports = Vec::new();
        for (i, &p) in args.p.iter().enumerate() {
            let opt = optimize_schedule(p, AttemptModel::ParallelBurst, REFERENCE.snowball_size_per_p, args.run.seed)
                .map_err(config)?;
            let flakes = fresh_flakes(p).map_err(config)?;
            let batch = run_trials(args.run.seed, i as u64 * args.run.trials, args.run.trials, |id, rng| {
                build_successful_snowball(flakes.clone(), &opt.schedule, p, rng).map(|(_, mut r)| {
                    r.trial_id = id;
                    r
                })
            });
            for r in batch {
                reports.push(r.map_err(|e| Failure::Runtime(e.into()))?);
            }
        }
        reports
    } else {
        let mut configs = Vec::new();
        for &p in &args.p {
            let mut cfg = DeviceConfig::new(p, args.strategy).map_err(config)?.with_max_steps(args.max_steps);
            let device = match (args.device_qubits, args.metric) {
                (Some(d), _) => d,
                // the age formula needs a device that never throttles growth
                (None, SweepMetric::Age) => {
                    let need = expected_device_size(p).map_err(config)?;
                    if need > MAX_DEVICE_QUBITS as u128 {
                        return Err(config(anyhow!(
                            "p_s = {p} needs a {need}-qubit device for the age sweep; pass --device-qubits"
                        )));
                    }
                    (need as usize).max(args.strategy.minimum_device(cfg.target_level().map_err(config)?))
                }
                (None, _) => cfg.device_qubits,
            };
            cfg = cfg.with_device(device);
            configs.push((cfg, args.strategy.label().to_string()));
        }
        run_phase1(&configs, args.run.trials, args.run.seed)?
    };

    let path = output_path(&args.run.output, "sweep");
    let summary = emit(&path, &reports, args.run.svg, |s| Plot {
        title: format!("{metric} vs log2(1/p_s)"),
        x_label: "log2(1/p_s)".into(),
        y_label: format!("mean {column}"),
        series: series_by_strategy(s, column, |r| log2_inv(r.p_s), |r| r.mean),
    })?;
    let points: Vec<(f64, f64)> = summary
        .iter()
        .filter(|r| r.metric == column)
        .map(|r| (r.p_s, r.mean))
        .collect();
    let fit = match scaling_fit(&points) {
        Ok(f) => f,
        Err(e) => bail_config(e)?,
    };
    let fit_path = sibling(&path, ".fit.csv");
    write_rows(
        &fit_path,
        &FIT_HEADER,
        [[
            metric.to_string(),
            format_sig(fit.slope, 6),
            format_sig(fit.intercept, 6),
            format_sig(fit.residual, 6),
            points.len().to_string(),
        ]],
    )?;
    println!(
        "{metric}: slope {} intercept {} rms residual {} against log2(1/p_s)",
        format_sig(fit.slope, 6),
        format_sig(fit.intercept, 6),
        format_sig(fit.residual, 6)
    );
    println!("wrote {}", fit_path.display());
    Ok(())
}

fn bail_config<T>(e: impl Into<anyhow::Error>) -> Result<T, Failure> {
    Err(config(e))
}

