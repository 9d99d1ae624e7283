use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use powfactor_harness::config::{parse_seeds, ExperimentConfig};
use powfactor_harness::runner::{run_experiment, run_seed, worker_threads, SeedOutcome};
use powfactor_harness::sweep::run_sweep;
use powfactor_harness::tables::MatrixTables;
use powfactor_harness::verify::{render_text, run_verification, write_csv, VerifyConfig};

/// Weighted value factorization experiments for cooperative multi-agent
/// Q-learning.
#[derive(Parser)]
#[command(name = "powfactor", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOverrides {
    /// Experiment configuration file (INI-style).
    #[arg(long)]
    config: PathBuf,
    /// Single seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Seed range override, e.g. 0..4 (inclusive) or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Algorithm override (qmix|ow-qmix|cw-qmix|powqmix); also aligns the
    /// weighting kind.
    #[arg(long)]
    algo: Option<String>,
}

impl CommonOverrides {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(algo) = &self.algo {
            cfg.algo = algo.parse()?;
            cfg.align_weighting();
        }
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(seeds) = &self.seeds {
            cfg.seeds = parse_seeds(seeds)?;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one experiment across its seeds and write metric CSVs.
    Train(CommonOverrides),
    /// Run the weight-sensitivity grid from the config's [sweep] section.
    Sweep(CommonOverrides),
    /// Train on an enumerable game and print the reconstructed value
    /// tables.
    Tables(CommonOverrides),
    /// Run the oracle suite: lemma/theorem checks on seeded random games.
    Verify {
        /// Random instances for the lemma batch.
        #[arg(long, default_value_t = 200)]
        instances: usize,
        /// Full-training instances for the end-to-end theorem check.
        #[arg(long, default_value_t = 50)]
        theorem2: usize,
        /// Environment steps per end-to-end run.
        #[arg(long, default_value_t = 36_000)]
        steps: usize,
        /// Base seed for instance generation.
        #[arg(long, default_value_t = 1000)]
        seed: u64,
        /// Worker threads (default: POWFACTOR_THREADS or all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Where to write the CSV report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Flatten metrics.csv files under a directory into long-format CSV.
    Plotdata {
        #[arg(long)]
        dir: PathBuf,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train(common) => {
            let cfg = common.load()?;
            let outcome = run_experiment(&cfg)?;
            for seed in &outcome.seeds {
                match seed {
                    SeedOutcome::Finished(r) => println!(
                        "seed {}: {} env steps, {} train steps, final return {:.3} ({:.1}s)",
                        r.seed,
                        r.env_steps,
                        r.train_steps,
                        r.rows.last().map(|row| row.test_return_mean).unwrap_or(f64::NAN),
                        r.wall_clock_s
                    ),
                    SeedOutcome::Failed { seed, error } => println!("seed {seed}: FAILED ({error})"),
                }
            }
            println!("wrote {}", cfg.out.display());
        }
        Command::Sweep(common) => {
            let cfg = common.load()?;
            let results = run_sweep(&cfg)?;
            for r in &results {
                let finals: Vec<f64> = r
                    .outcome
                    .finished()
                    .filter_map(|s| s.rows.last().map(|row| row.test_return_mean))
                    .collect();
                let mean = finals.iter().sum::<f64>() / finals.len().max(1) as f64;
                println!(
                    "{}: mean final return {:.3} over {} seeds",
                    r.label,
                    mean,
                    finals.len()
                );
            }
        }
        Command::Tables(common) => {
            let cfg = common.load()?;
            anyhow::ensure!(
                cfg.env.as_matrix().is_some(),
                "tables requires an enumerable (matrix) environment"
            );
            for &seed in &cfg.seeds {
                let result = run_seed(&cfg, seed).with_context(|| format!("seed {seed}"))?;
                let tables: &MatrixTables = result.matrix.as_ref().expect("matrix env");
                println!("── seed {seed} ({} train steps) ──", result.train_steps);
                print!("{}", tables.render_text());
                if let Some(out) = &common.out {
                    std::fs::create_dir_all(out)?;
                    std::fs::write(out.join(format!("tables_seed_{seed}.csv")), tables.render_csv())?;
                }
            }
        }
        Command::Verify {
            instances,
            theorem2,
            steps,
            seed,
            threads,
            out,
        } => {
            let cfg = VerifyConfig {
                lemma_instances: instances,
                theorem2_instances: theorem2,
                theorem2_env_steps: steps,
                seed,
                threads: threads.unwrap_or_else(worker_threads),
            };
            let summary = run_verification(&cfg)?;
            print!("{}", render_text(&summary));
            if let Some(out) = out {
                write_csv(&summary, &out)?;
                println!("wrote {}", out.display());
            }
        }
        Command::Plotdata { dir, out } => {
            let csv = powfactor_harness::plotdata::collect_long_format(&dir)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, csv)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}
