//! Seeded experiment execution and CSV emission.
//!
//! Each seed produces `seed_<k>/metrics.csv` (deterministic: a pure
//! function of config and seed) plus `seed_<k>/timing.csv` for wall-clock,
//! which is kept out of metrics.csv so reruns stay byte-identical.
//! `aggregate.csv` carries mean/std/CI95 across seeds per evaluation
//! point.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use powfactor_core::env::EnvConfig;
use powfactor_core::learner::{Episode, TrainMetrics, Trainer};
use powfactor_core::oracle::parallel_map;

use crate::config::ExperimentConfig;
use crate::tables::MatrixTables;

/// One evaluation-point row. Columns that do not apply to an algorithm
/// stay empty in the CSV, never shifted.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub env_steps: usize,
    pub train_steps: usize,
    pub loss_total: Option<f64>,
    pub loss_qtot: Option<f64>,
    pub loss_central: Option<f64>,
    pub loss_recognizer: Option<f64>,
    pub mean_weight: Option<f64>,
    pub test_return_mean: f64,
    pub test_return_std: f64,
    pub success_rate: f64,
    pub ar_size: Option<usize>,
}

pub const METRIC_HEADER: &str = "env_steps,train_steps,loss_total,loss_qtot,loss_central,loss_recognizer,mean_weight,test_return_mean,test_return_std,success_rate,ar_size";

impl MetricRow {
    fn csv_line(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.env_steps,
            self.train_steps,
            fmt_opt(self.loss_total),
            fmt_opt(self.loss_qtot),
            fmt_opt(self.loss_central),
            fmt_opt(self.loss_recognizer),
            fmt_opt(self.mean_weight),
            fmt_f64(self.test_return_mean),
            fmt_f64(self.test_return_std),
            fmt_f64(self.success_rate),
            self.ar_size.map(|v| v.to_string()).unwrap_or_default(),
        );
        s
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Result of one seed; a run that aborted mid-way is kept with its error
/// so sibling seeds still report.
#[derive(Debug)]
pub enum SeedOutcome {
    Finished(SeedResult),
    Failed { seed: u64, error: String },
}

#[derive(Debug)]
pub struct SeedResult {
    pub seed: u64,
    pub rows: Vec<MetricRow>,
    pub train_steps: usize,
    pub env_steps: usize,
    pub wall_clock_s: f64,
    /// Final reconstructed tables on enumerable games.
    pub matrix: Option<MatrixTables>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub seeds: Vec<SeedOutcome>,
}

impl ExperimentOutcome {
    pub fn finished(&self) -> impl Iterator<Item = &SeedResult> {
        self.seeds.iter().filter_map(|s| match s {
            SeedOutcome::Finished(r) => Some(r),
            SeedOutcome::Failed { .. } => None,
        })
    }
}

/// Worker-thread cap: POWFACTOR_THREADS, else the machine's parallelism.
pub fn worker_threads() -> usize {
    std::env::var("POWFACTOR_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Runs every seed of the experiment and writes the run directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> anyhow::Result<ExperimentOutcome> {
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;

    let threads = if cfg.parallel_seeds { worker_threads() } else { 1 };
    let seeds = cfg.seeds.clone();
    let outcomes: Vec<SeedOutcome> = parallel_map(seeds, threads, |seed| match run_seed(cfg, seed) {
        Ok(result) => SeedOutcome::Finished(result),
        Err(err) => SeedOutcome::Failed {
            seed,
            error: format!("{err:#}"),
        },
    });

    for outcome in &outcomes {
        match outcome {
            SeedOutcome::Finished(result) => write_seed_dir(cfg, result)?,
            SeedOutcome::Failed { seed, error } => {
                let dir = cfg.out.join(format!("seed_{seed}"));
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("FAILED"), error)?;
                eprintln!("seed {seed} failed: {error}");
            }
        }
    }
    let outcome = ExperimentOutcome { seeds: outcomes };
    write_aggregate(&cfg.out, &outcome)?;
    Ok(outcome)
}

/// One seed end to end: training rounds with periodic greedy evaluation.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<SeedResult> {
    let start = Instant::now();
    let mut trainer = Trainer::new(cfg.env.clone(), cfg.train.clone(), cfg.algo, &cfg.net, seed)?;
    let mut rows = Vec::new();
    let mut last_metrics: Option<TrainMetrics> = None;
    let mut next_eval = 0usize;
    let mut eval_index = 0u64;

    loop {
        if trainer.env_steps >= next_eval {
            rows.push(evaluate_row(cfg, &trainer, last_metrics.as_ref(), eval_index)?);
            eval_index += 1;
            next_eval += cfg.eval_interval;
        }
        if trainer.finished() {
            break;
        }
        if let Some(m) = trainer.round()? {
            last_metrics = Some(m);
        }
    }
    // final evaluation at the end of training
    rows.push(evaluate_row(cfg, &trainer, last_metrics.as_ref(), eval_index)?);

    let matrix = match &cfg.env {
        EnvConfig::Matrix(m) => Some(MatrixTables::from_trainer(&trainer, m)?),
        _ => None,
    };
    Ok(SeedResult {
        seed,
        rows,
        train_steps: trainer.train_steps,
        env_steps: trainer.env_steps,
        wall_clock_s: start.elapsed().as_secs_f64(),
        matrix,
    })
}

fn evaluate_row(
    cfg: &ExperimentConfig,
    trainer: &Trainer,
    last: Option<&TrainMetrics>,
    eval_index: u64,
) -> anyhow::Result<MetricRow> {
    let episodes = trainer.evaluate_episodes(cfg.eval_episodes, eval_index)?;
    let returns: Vec<f64> = episodes.iter().map(|e| e.total_reward()).collect();
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / returns.len() as f64;
    let success = episodes.iter().filter(|e| episode_succeeded(&cfg.env, e)).count() as f64
        / episodes.len() as f64;

    let uses_central = cfg.algo.uses_central();
    let uses_rec = cfg.algo.uses_recognizer();
    Ok(MetricRow {
        env_steps: trainer.env_steps,
        train_steps: trainer.train_steps,
        loss_total: last.map(|m| m.loss_total),
        loss_qtot: last.map(|m| m.loss_qtot),
        loss_central: last.and_then(|m| uses_central.then_some(m.loss_central)),
        loss_recognizer: last.and_then(|m| uses_rec.then_some(m.loss_recognizer)),
        mean_weight: last.map(|m| m.mean_weight),
        test_return_mean: mean,
        test_return_std: var.sqrt(),
        success_rate: success,
        ar_size: last.and_then(|m| m.ar_size),
    })
}

/// Matrix game: the optimal payoff was collected. Predator-prey: no live
/// prey left in the final state.
fn episode_succeeded(env: &EnvConfig, episode: &Episode) -> bool {
    match env {
        EnvConfig::Matrix(m) => {
            let best = m
                .payoff
                .iter()
                .flatten()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            episode.total_reward() >= best - 1e-9
        }
        EnvConfig::PredatorPrey(pp) => {
            let cells = pp.width * pp.height;
            let final_state = episode.states.last().expect("episodes are non-empty");
            final_state[cells..].iter().all(|v| *v == 0.0)
        }
    }
}

fn write_seed_dir(cfg: &ExperimentConfig, result: &SeedResult) -> anyhow::Result<()> {
    let dir = cfg.out.join(format!("seed_{}", result.seed));
    std::fs::create_dir_all(&dir)?;

    let mut csv = String::from(METRIC_HEADER);
    csv.push('\n');
    for row in &result.rows {
        csv.push_str(&row.csv_line());
        csv.push('\n');
    }
    std::fs::write(dir.join("metrics.csv"), csv)?;

    std::fs::write(
        dir.join("timing.csv"),
        format!("wall_clock_s\n{:.3}\n", result.wall_clock_s),
    )?;

    if let Some(tables) = &result.matrix {
        std::fs::write(dir.join("tables.txt"), tables.render_text())?;
        std::fs::write(dir.join("tables.csv"), tables.render_csv())?;
    }
    Ok(())
}

/// CI95 uses the normal approximation 1.96·std/√n.
fn write_aggregate(out: &Path, outcome: &ExperimentOutcome) -> anyhow::Result<()> {
    let finished: Vec<&SeedResult> = outcome.finished().collect();
    let mut csv = String::from("env_steps,n,test_return_mean,test_return_std,test_return_ci95,success_rate_mean\n");
    if let Some(first) = finished.first() {
        for (i, row) in first.rows.iter().enumerate() {
            let at_point: Vec<&MetricRow> = finished.iter().filter_map(|r| r.rows.get(i)).collect();
            let n = at_point.len() as f64;
            let mean = at_point.iter().map(|r| r.test_return_mean).sum::<f64>() / n;
            let var = at_point
                .iter()
                .map(|r| (r.test_return_mean - mean).powi(2))
                .sum::<f64>()
                / n;
            let std = var.sqrt();
            let ci95 = 1.96 * std / n.sqrt();
            let succ = at_point.iter().map(|r| r.success_rate).sum::<f64>() / n;
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                row.env_steps,
                at_point.len(),
                fmt_f64(mean),
                fmt_f64(std),
                fmt_f64(ci95),
                fmt_f64(succ)
            );
        }
    }
    std::fs::write(out.join("aggregate.csv"), csv)?;
    Ok(())
}
