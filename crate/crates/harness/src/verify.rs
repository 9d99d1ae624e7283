//! Oracle verification suite: exact checks of the recognizer lemmas and
//! theorems on seeded batches of enumerable games.

use std::fmt::Write as _;
use std::path::Path;

use powfactor_core::oracle::{
    check_lemma1, check_lemma2, check_lemma3, check_theorem1, check_theorem2, exact_qstar_matrix,
    fit_recognizer_fixed_utilities, parallel_map, random_payoff, random_utilities, FitConfig,
    OracleReport,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const LEMMA1_TOL: f64 = 0.2;
pub const LEMMA2_TOL: f64 = 0.05;
pub const LEMMA3_VALUE_TOL: f64 = 0.2;
pub const LEMMA3_STRICT_SLACK: f64 = 1e-3;
pub const AR_SLACK: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    /// Random payoff/utility instances for the lemma batch.
    pub lemma_instances: usize,
    /// Full-training instances for the end-to-end theorem check.
    pub theorem2_instances: usize,
    /// Environment steps per end-to-end training run.
    pub theorem2_env_steps: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            lemma_instances: 200,
            theorem2_instances: 50,
            theorem2_env_steps: 36_000,
            seed: 1000,
            threads: 1,
        }
    }
}

#[derive(Debug)]
pub struct LemmaInstance {
    pub index: usize,
    pub converged: bool,
    pub fit_steps: usize,
    pub reports: Vec<OracleReport>,
}

#[derive(Debug)]
pub struct VerifySummary {
    pub lemma_instances: Vec<LemmaInstance>,
    pub theorem2_successes: usize,
    pub theorem2_total: usize,
    pub elapsed_s: f64,
}

impl VerifySummary {
    pub fn converged(&self) -> usize {
        self.lemma_instances.iter().filter(|i| i.converged).count()
    }

    /// Failed checks among converged fits (must be empty).
    pub fn failures(&self) -> Vec<(&LemmaInstance, &OracleReport)> {
        self.lemma_instances
            .iter()
            .filter(|i| i.converged)
            .flat_map(|i| i.reports.iter().filter(|r| !r.passed).map(move |r| (i, r)))
            .collect()
    }

    pub fn convergence_rate(&self) -> f64 {
        self.converged() as f64 / self.lemma_instances.len().max(1) as f64
    }

    pub fn theorem2_rate(&self) -> f64 {
        self.theorem2_successes as f64 / self.theorem2_total.max(1) as f64
    }
}

/// Runs the lemma batch and the end-to-end theorem batch.
pub fn run_verification(cfg: &VerifyConfig) -> anyhow::Result<VerifySummary> {
    let started = std::time::Instant::now();

    let lemma_instances = parallel_map(
        (0..cfg.lemma_instances).collect::<Vec<_>>(),
        cfg.threads,
        |index| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed + index as u64);
            let payoff = random_payoff(3, &mut rng);
            let fixed_q = random_utilities(2, 3, &mut rng);
            let exact = exact_qstar_matrix(&payoff).expect("3x3 is enumerable");
            let fit = fit_recognizer_fixed_utilities(&payoff, &fixed_q, &FitConfig::default(), &mut rng)
                .expect("fit is infallible on finite inputs");
            let reports = vec![
                check_lemma1(&fit, &exact, LEMMA1_TOL),
                check_lemma2(&fit, &exact, LEMMA2_TOL),
                check_lemma3(&fit, &exact, LEMMA3_VALUE_TOL, LEMMA3_STRICT_SLACK),
                check_theorem1(&fit, &exact, AR_SLACK),
            ];
            LemmaInstance {
                index,
                converged: fit.converged,
                fit_steps: fit.steps,
                reports,
            }
        },
    );

    let theorem2: Vec<bool> = parallel_map(
        (0..cfg.theorem2_instances).collect::<Vec<_>>(),
        cfg.threads,
        |index| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed * 9 + index as u64);
            let payoff = random_payoff(3, &mut rng);
            check_theorem2(&payoff, cfg.seed * 50 + index as u64, cfg.theorem2_env_steps)
                .map(|o| o.success())
                .unwrap_or(false)
        },
    );

    Ok(VerifySummary {
        lemma_instances,
        theorem2_successes: theorem2.iter().filter(|s| **s).count(),
        theorem2_total: theorem2.len(),
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}

pub fn render_text(summary: &VerifySummary) -> String {
    let mut s = String::new();
    let total = summary.lemma_instances.len();
    let _ = writeln!(
        s,
        "recognizer fits: {}/{} converged ({:.1}%)",
        summary.converged(),
        total,
        100.0 * summary.convergence_rate()
    );
    for name in ["lemma1", "lemma2", "lemma3", "theorem1"] {
        let (mut pass, mut ran) = (0usize, 0usize);
        let mut worst: f64 = 0.0;
        for inst in summary.lemma_instances.iter().filter(|i| i.converged) {
            for r in &inst.reports {
                if r.name.starts_with(name) {
                    ran += 1;
                    if r.passed {
                        pass += 1;
                    }
                    worst = worst.max(r.worst_violation);
                }
            }
        }
        let _ = writeln!(s, "{name:<10} {pass}/{ran} pass   worst violation {worst:.4}");
    }
    let failures = summary.failures();
    if failures.is_empty() {
        let _ = writeln!(s, "no failed checks among converged fits");
    } else {
        for (inst, r) in &failures {
            let _ = writeln!(
                s,
                "FAIL instance {} {}: {}",
                inst.index,
                r.name,
                r.counterexample.as_deref().unwrap_or("-")
            );
        }
    }
    let _ = writeln!(
        s,
        "theorem2 end-to-end: {}/{} recovered the optimum with A_r = A_tgm ({:.1}%)",
        summary.theorem2_successes,
        summary.theorem2_total,
        100.0 * summary.theorem2_rate()
    );
    let _ = writeln!(s, "elapsed: {:.1}s", summary.elapsed_s);
    s
}

pub fn write_csv(summary: &VerifySummary, path: &Path) -> anyhow::Result<()> {
    let mut csv = String::from("instance,converged,fit_steps,check,passed,worst_violation,counterexample\n");
    for inst in &summary.lemma_instances {
        for r in &inst.reports {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{:.6},{}",
                inst.index,
                inst.converged,
                inst.fit_steps,
                r.name,
                r.passed,
                r.worst_violation,
                r.counterexample
                    .as_deref()
                    .unwrap_or("")
                    .replace(',', ";")
            );
        }
    }
    let _ = writeln!(
        csv,
        "theorem2,,,end-to-end,{},{:.6},{} of {} succeeded",
        summary.theorem2_rate() >= 0.9,
        1.0 - summary.theorem2_rate(),
        summary.theorem2_successes,
        summary.theorem2_total
    );
    std::fs::write(path, csv)?;
    Ok(())
}
