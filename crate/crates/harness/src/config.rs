//! Experiment configuration: flat INI-style key/value sections with
//! environment-specific presets underneath.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use powfactor_core::agents::EpsilonSchedule;
use powfactor_core::env::{EnvConfig, MatrixGameConfig, PredatorPreyConfig};
use powfactor_core::learner::{Algo, NetworkConfig, TrainConfig};
use powfactor_core::weighting::{WeightKind, WeightingConfig};

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub net: NetworkConfig,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Run seeds on parallel threads (capped by POWFACTOR_THREADS).
    pub parallel_seeds: bool,
    /// Weight grid for the sweep subcommand, pairs of (w_high, w_low).
    pub sweep_weights: Vec<(f64, f64)>,
}

impl ExperimentConfig {
    /// Matrix-game preset: uniform ε = 1 exploration, feedforward agents.
    pub fn matrix_default() -> Self {
        ExperimentConfig {
            algo: Algo::PowQmix,
            env: EnvConfig::Matrix(MatrixGameConfig::hard()),
            train: TrainConfig {
                gamma: 0.99,
                td_lambda: 0.6,
                batch_size: 128,
                buffer_capacity: 5000,
                epsilon: EpsilonSchedule {
                    start: 1.0,
                    finish: 1.0,
                    anneal_steps: 0,
                },
                target_interval: 200,
                lr: 1e-3,
                clip_norm: 10.0,
                weighting: WeightingConfig::pow(1.0, 0.0, 0.05),
                total_env_steps: 40_000,
                rollout_streams: 8,
                train_interval_episodes: 8,
                min_buffer_episodes: 32,
            },
            net: NetworkConfig {
                recurrent: false,
                ..NetworkConfig::default()
            },
            seeds: vec![0],
            out: PathBuf::from("runs/matrix"),
            eval_interval: 5_000,
            eval_episodes: 32,
            parallel_seeds: false,
            sweep_weights: vec![(5.0, 0.0), (1.0, 0.0), (5.0, 0.5)],
        }
    }

    /// Predator-prey preset: recurrent agents, annealed exploration.
    pub fn predprey_default() -> Self {
        ExperimentConfig {
            algo: Algo::PowQmix,
            env: EnvConfig::PredatorPrey(PredatorPreyConfig::default()),
            train: TrainConfig {
                gamma: 0.99,
                td_lambda: 0.6,
                batch_size: 32,
                buffer_capacity: 5000,
                epsilon: EpsilonSchedule {
                    start: 1.0,
                    finish: 0.05,
                    anneal_steps: 50_000,
                },
                target_interval: 200,
                lr: 1e-3,
                clip_norm: 10.0,
                weighting: WeightingConfig::pow(5.0, 0.0, 0.05),
                total_env_steps: 500_000,
                rollout_streams: 8,
                train_interval_episodes: 8,
                min_buffer_episodes: 32,
            },
            net: NetworkConfig {
                recurrent: true,
                ..NetworkConfig::default()
            },
            seeds: vec![0],
            out: PathBuf::from("runs/predprey"),
            eval_interval: 5_000,
            eval_episodes: 32,
            parallel_seeds: false,
            sweep_weights: vec![(5.0, 0.0), (1.0, 0.0), (5.0, 0.5)],
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let sections = parse_ini(text)?;
        let env_kind = sections
            .get("experiment")
            .and_then(|s| s.get("env"))
            .map(|s| s.as_str())
            .unwrap_or("matrix");
        let mut cfg = match env_kind {
            "matrix" => Self::matrix_default(),
            "predprey" => Self::predprey_default(),
            other => bail!("[experiment] env: unknown environment `{other}` (expected matrix|predprey)"),
        };
        cfg.apply(&sections)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, sections: &Ini) -> anyhow::Result<()> {
        for (section, entries) in sections {
            for (key, value) in entries {
                self.apply_field(section, key, value)
                    .with_context(|| format!("[{section}] {key} = {value}"))?;
            }
        }
        Ok(())
    }

    fn apply_field(&mut self, section: &str, key: &str, value: &str) -> anyhow::Result<()> {
        match (section, key) {
            ("experiment", "env") => {} // handled by preset selection
            ("experiment", "algo") => self.algo = value.parse()?,
            ("experiment", "seeds") => self.seeds = parse_seeds(value)?,
            ("experiment", "out") => self.out = PathBuf::from(value),
            ("experiment", "eval_interval") => self.eval_interval = parse(value)?,
            ("experiment", "eval_episodes") => self.eval_episodes = parse(value)?,
            ("experiment", "parallel_seeds") => self.parallel_seeds = parse_bool(value)?,

            ("matrix", "payoff") => {
                self.env = EnvConfig::Matrix(MatrixGameConfig {
                    payoff: parse_payoff(value)?,
                })
            }

            ("predprey", _) => {
                let EnvConfig::PredatorPrey(ref mut pp) = self.env else {
                    bail!("[predprey] settings need `env = predprey`");
                };
                match key {
                    "width" => pp.width = parse(value)?,
                    "height" => pp.height = parse(value)?,
                    "predators" => pp.n_predators = parse(value)?,
                    "prey" => pp.n_prey = parse(value)?,
                    "punishment" => pp.miscapture_punishment = parse(value)?,
                    "capture_reward" => pp.capture_reward = parse(value)?,
                    "obs_radius" => pp.observation_radius = parse(value)?,
                    "episode_limit" => pp.episode_limit = parse(value)?,
                    other => bail!("unknown field `{other}`"),
                }
            }

            ("train", "gamma") => self.train.gamma = parse(value)?,
            ("train", "td_lambda") => self.train.td_lambda = parse(value)?,
            ("train", "batch_size") => self.train.batch_size = parse(value)?,
            ("train", "buffer_capacity") => self.train.buffer_capacity = parse(value)?,
            ("train", "lr") => self.train.lr = parse(value)?,
            ("train", "clip_norm") => self.train.clip_norm = parse(value)?,
            ("train", "target_interval") => self.train.target_interval = parse(value)?,
            ("train", "total_env_steps") => self.train.total_env_steps = parse(value)?,
            ("train", "rollout_streams") => self.train.rollout_streams = parse(value)?,
            ("train", "train_interval_episodes") => self.train.train_interval_episodes = parse(value)?,
            ("train", "min_buffer_episodes") => self.train.min_buffer_episodes = parse(value)?,
            ("train", "epsilon_start") => self.train.epsilon.start = parse(value)?,
            ("train", "epsilon_finish") => self.train.epsilon.finish = parse(value)?,
            ("train", "epsilon_anneal") => self.train.epsilon.anneal_steps = parse(value)?,

            ("net", "agent_hidden") => self.net.agent_hidden = parse(value)?,
            ("net", "mixer_embed") => self.net.mixer_embed = parse(value)?,
            ("net", "hyper_hidden") => self.net.hyper_hidden = parse(value)?,
            ("net", "recurrent") => self.net.recurrent = parse_bool(value)?,

            ("weighting", "kind") => self.train.weighting.kind = value.parse()?,
            ("weighting", "w_high") => self.train.weighting.w_high = parse(value)?,
            ("weighting", "w_low") => self.train.weighting.w_low = parse(value)?,
            ("weighting", "slack") => self.train.weighting.slack = parse(value)?,

            ("sweep", "weights") => self.sweep_weights = parse_weight_grid(value)?,

            (section, key) => bail!("unknown field `[{section}] {key}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.seeds.is_empty() {
            bail!("[experiment] seeds: at least one seed required");
        }
        self.train.validate()?;
        let needs_rec = self.train.weighting.kind == WeightKind::Pow;
        if needs_rec && self.algo != Algo::PowQmix {
            bail!("[weighting] kind = pow requires algo = powqmix");
        }
        match (self.algo, self.train.weighting.kind) {
            (Algo::OwQmix, k) if k != WeightKind::Ow => {
                bail!("[weighting] kind: ow-qmix requires kind = ow")
            }
            (Algo::CwQmix, k) if k != WeightKind::Cw => {
                bail!("[weighting] kind: cw-qmix requires kind = cw")
            }
            (Algo::Qmix, k) if k != WeightKind::Uniform => {
                bail!("[weighting] kind: qmix requires kind = uniform")
            }
            (Algo::PowQmix, k) if k != WeightKind::Pow => {
                bail!("[weighting] kind: powqmix requires kind = pow")
            }
            _ => {}
        }
        Ok(())
    }

    /// Matching weighting kind for an algorithm, used when the CLI
    /// overrides the algorithm on a preset config.
    pub fn align_weighting(&mut self) {
        self.train.weighting.kind = match self.algo {
            Algo::Qmix => WeightKind::Uniform,
            Algo::OwQmix => WeightKind::Ow,
            Algo::CwQmix => WeightKind::Cw,
            Algo::PowQmix => WeightKind::Pow,
        };
    }
}

type Ini = BTreeMap<String, BTreeMap<String, String>>;

/// `[section]` headers over `key = value` lines; `#` starts a comment.
fn parse_ini(text: &str) -> anyhow::Result<Ini> {
    let mut out: Ini = BTreeMap::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            out.entry(section.clone()).or_default();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`, got `{raw}`", lineno + 1);
        };
        if section.is_empty() {
            bail!("line {}: `{key}` appears before any [section]", lineno + 1);
        }
        out.entry(section.clone())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(value: &str) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("invalid value `{value}`: {e}"))
}

fn parse_bool(value: &str) -> anyhow::Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => bail!("invalid boolean `{other}`"),
    }
}

/// `0..4` (inclusive) or a comma list `0, 3, 17`.
pub fn parse_seeds(value: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((a, b)) = value.split_once("..") {
        let a: u64 = parse(a.trim())?;
        let b: u64 = parse(b.trim())?;
        if b < a {
            bail!("seed range `{value}` is empty");
        }
        return Ok((a..=b).collect());
    }
    value.split(',').map(|s| parse(s.trim())).collect()
}

/// Rows separated by `;`, entries by whitespace or commas.
fn parse_payoff(value: &str) -> anyhow::Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = value
        .split(';')
        .map(|row| {
            row.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(parse::<f64>)
                .collect::<anyhow::Result<Vec<f64>>>()
        })
        .collect::<anyhow::Result<_>>()?;
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
        bail!("payoff rows must be non-empty and rectangular");
    }
    Ok(rows)
}

/// `5/0, 1/0, 5/0.5` → [(5,0), (1,0), (5,0.5)].
fn parse_weight_grid(value: &str) -> anyhow::Result<Vec<(f64, f64)>> {
    value
        .split(',')
        .map(|pair| {
            let (h, l) = pair
                .trim()
                .split_once('/')
                .ok_or_else(|| anyhow!("expected `w_high/w_low`, got `{pair}`"))?;
            Ok((parse::<f64>(h.trim())?, parse::<f64>(l.trim())?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_matrix_config_parses_with_defaults() {
        let cfg = ExperimentConfig::parse("[experiment]\nenv = matrix\nseeds = 0..4\n").unwrap();
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.algo, Algo::PowQmix);
        assert!(cfg.env.as_matrix().is_some());
        assert!(!cfg.net.recurrent);
    }

    #[test]
    fn overrides_apply_and_unknown_fields_error_by_name() {
        let cfg = ExperimentConfig::parse(
            "[experiment]\nenv = predprey\nalgo = qmix\n[weighting]\nkind = uniform\n[predprey]\npunishment = -3\n[train]\nbatch_size = 16\n",
        )
        .unwrap();
        assert_eq!(cfg.algo, Algo::Qmix);
        assert_eq!(cfg.train.batch_size, 16);
        match cfg.env {
            EnvConfig::PredatorPrey(pp) => assert_eq!(pp.miscapture_punishment, -3.0),
            _ => panic!("wrong env"),
        }

        let err = ExperimentConfig::parse("[train]\nbatchsize = 16\n").unwrap_err();
        assert!(format!("{err:#}").contains("batchsize"), "{err:#}");
    }

    #[test]
    fn payoff_and_weight_grid_parse() {
        let cfg = ExperimentConfig::parse(
            "[experiment]\nenv = matrix\n[matrix]\npayoff = 1 2; 3 4\n[sweep]\nweights = 5/0, 2/1\n",
        )
        .unwrap();
        let m = cfg.env.as_matrix().unwrap();
        assert_eq!(m.payoff, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(cfg.sweep_weights, vec![(5.0, 0.0), (2.0, 1.0)]);
    }

    #[test]
    fn algorithm_weighting_mismatch_is_rejected() {
        let err = ExperimentConfig::parse("[experiment]\nenv = matrix\nalgo = qmix\n").unwrap_err();
        assert!(format!("{err:#}").contains("pow requires algo = powqmix"), "{err:#}");
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = ExperimentConfig::parse(
            "# top comment\n[experiment]\nenv = matrix\n\nseeds = 7 # trailing\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![7]);
    }
}
