//! Weight-sensitivity sweeps: the base experiment repeated over a grid of
//! (w_high, w_low) pairs, each in its own subdirectory.

use crate::config::ExperimentConfig;
use crate::runner::{run_experiment, ExperimentOutcome};

pub struct SweepResult {
    pub label: String,
    pub w_high: f64,
    pub w_low: f64,
    pub outcome: ExperimentOutcome,
}

pub fn run_sweep(base: &ExperimentConfig) -> anyhow::Result<Vec<SweepResult>> {
    let mut results = Vec::new();
    for &(w_high, w_low) in &base.sweep_weights {
        let label = format!("weights_{}_{}", compact(w_high), compact(w_low));
        let mut cfg = base.clone();
        cfg.train.weighting.w_high = w_high;
        cfg.train.weighting.w_low = w_low;
        cfg.out = base.out.join(&label);
        println!("sweep {label}: w_high={w_high} w_low={w_low}");
        let outcome = run_experiment(&cfg)?;
        results.push(SweepResult {
            label,
            w_high,
            w_low,
            outcome,
        });
    }
    Ok(results)
}

fn compact(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}").replace('.', "p")
    }
}
