//! Training assembly: network stacks per algorithm, the shared-target
//! weighted losses, and the optimization step.
//!
//! One train step samples a batch of episodes, computes the shared
//! Q-learning target y = r + γ·Q̂*_target(τ', argmax_a Q_tot_target(τ', a))
//! folded through TD(λ), then descends the sum of three masked
//! mean-squared losses: the weighted monotonic loss, the central loss, and
//! the recognizer loss. The plain monotonic learner has no central stack
//! and bootstraps from its own target mixer.

pub mod episode;
pub mod replay;
pub mod rollout;
pub mod targets;
pub mod trainer;

pub use episode::{Episode, EpisodeBatch};
pub use replay::ReplayBuffer;
pub use targets::td_lambda_targets;
pub use trainer::Trainer;

use rand_chacha::ChaCha8Rng;

use crate::agents::{masked_argmax, AgentNet, AgentNetConfig, EpsilonSchedule};
use crate::autodiff::{AdamState, Graph, ParamSet, Tensor};
use crate::mixers::{
    compute_advantages, joint_action_onehot, CentralMixer, MixerConfig, MonotonicMixer, Recognizer,
};
use crate::weighting::{cw_weights, membership_mask_ar, ow_weights, pow_weights, WeightKind, WeightingConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Qmix,
    OwQmix,
    CwQmix,
    PowQmix,
}

impl Algo {
    pub fn uses_central(&self) -> bool {
        !matches!(self, Algo::Qmix)
    }

    pub fn uses_recognizer(&self) -> bool {
        matches!(self, Algo::PowQmix)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algo::Qmix => "qmix",
            Algo::OwQmix => "ow-qmix",
            Algo::CwQmix => "cw-qmix",
            Algo::PowQmix => "powqmix",
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qmix" => Ok(Algo::Qmix),
            "ow-qmix" | "owqmix" => Ok(Algo::OwQmix),
            "cw-qmix" | "cwqmix" => Ok(Algo::CwQmix),
            "powqmix" | "pow-qmix" => Ok(Algo::PowQmix),
            other => Err(Error::InvalidConfig(format!(
                "unknown algorithm `{other}` (expected qmix|ow-qmix|cw-qmix|powqmix)"
            ))),
        }
    }
}

/// Architecture widths shared by all stacks.
#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub agent_hidden: usize,
    pub mixer_embed: usize,
    pub hyper_hidden: usize,
    pub recurrent: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            agent_hidden: 64,
            mixer_embed: 32,
            hyper_hidden: 64,
            recurrent: false,
        }
    }
}

/// All live networks of one learner, backed by a single [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Networks {
    pub algo: Algo,
    pub params: ParamSet,
    pub agent: AgentNet,
    pub mixer: MonotonicMixer,
    pub central_agent: Option<AgentNet>,
    pub central_mixer: Option<CentralMixer>,
    pub recognizer: Option<Recognizer>,
}

impl Networks {
    pub fn init(
        algo: Algo,
        n_agents: usize,
        n_actions: usize,
        obs_dim: usize,
        state_dim: usize,
        net_cfg: &NetworkConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut params = ParamSet::new();
        let agent_cfg = AgentNetConfig {
            obs_dim,
            n_actions,
            n_agents,
            hidden: net_cfg.agent_hidden,
            recurrent: net_cfg.recurrent,
        };
        let mixer_cfg = MixerConfig {
            n_agents,
            state_dim,
            embed: net_cfg.mixer_embed,
            hyper_hidden: net_cfg.hyper_hidden,
        };
        let agent = AgentNet::init(&mut params, rng, agent_cfg.clone());
        let mixer = MonotonicMixer::init(&mut params, rng, mixer_cfg.clone());
        // the unrestricted stack has its own individual action-value
        // networks, trained jointly with its mixer
        let (central_agent, central_mixer) = if algo.uses_central() {
            (
                Some(AgentNet::init(&mut params, rng, agent_cfg)),
                Some(CentralMixer::init(&mut params, rng, mixer_cfg.clone())),
            )
        } else {
            (None, None)
        };
        let recognizer = if algo.uses_recognizer() {
            Some(Recognizer::init(&mut params, rng, mixer_cfg, n_agents * n_actions))
        } else {
            None
        };
        Networks {
            algo,
            params,
            agent,
            mixer,
            central_agent,
            central_mixer,
            recognizer,
        }
    }

    /// Q_i rows for a single decision point, one row per agent.
    pub fn utilities_at(
        &self,
        params: &ParamSet,
        obs: &[Vec<f64>],
        last_actions: Option<&[usize]>,
    ) -> Result<Vec<Vec<f64>>> {
        let n = self.agent.cfg.n_agents;
        let a = self.agent.cfg.n_actions;
        let mut buf = Vec::new();
        for agent in 0..n {
            self.agent
                .write_input_row(&mut buf, &obs[agent], last_actions.map(|l| l[agent]), agent);
        }
        let inputs = Tensor::from_vec(vec![n, self.agent.cfg.input_dim()], buf);
        let mut g = Graph::no_grad();
        let hidden = self.agent.initial_hidden(n);
        let (q, _) = self.agent.forward_step(&mut g, params, &inputs, &hidden)?;
        Ok((0..n).map(|i| q.values()[i * a..(i + 1) * a].to_vec()).collect())
    }

    /// Q_tot for one decision point given chosen utilities.
    pub fn qtot_at(&self, params: &ParamSet, chosen_q: &[f64], state: &[f64]) -> Result<f64> {
        let mut g = Graph::no_grad();
        let q = Tensor::from_vec(vec![1, chosen_q.len()], chosen_q.to_vec());
        let s = Tensor::from_vec(vec![1, state.len()], state.to_vec());
        Ok(self.mixer.forward(&mut g, params, &q, &s)?.item())
    }

    /// Q_r for one decision point; `None` when the algorithm has no
    /// recognizer.
    pub fn qr_at(
        &self,
        params: &ParamSet,
        advantages: &[f64],
        state: &[f64],
        joint: &[usize],
    ) -> Result<Option<f64>> {
        let Some(rec) = &self.recognizer else {
            return Ok(None);
        };
        let mut g = Graph::no_grad();
        let adv = Tensor::from_vec(vec![1, advantages.len()], advantages.to_vec());
        let s = Tensor::from_vec(vec![1, state.len()], state.to_vec());
        let onehot = Tensor::from_vec(
            vec![1, rec.joint_onehot_dim],
            joint_action_onehot(joint, self.agent.cfg.n_actions),
        );
        Ok(Some(rec.forward(&mut g, params, &adv, &s, &onehot)?.item()))
    }

    /// Size of the potentially optimal set at an enumerable decision
    /// point, under the C-slack membership rule.
    pub fn ar_size(&self, params: &ParamSet, probe: &ArProbe, slack: f64) -> Result<Option<usize>> {
        let Some(mask) = self.ar_mask(params, probe, slack)? else {
            return Ok(None);
        };
        Ok(Some(mask.iter().filter(|m| **m).count()))
    }

    /// Membership of every joint action (row-major enumeration) in the
    /// potentially optimal set.
    pub fn ar_mask(&self, params: &ParamSet, probe: &ArProbe, slack: f64) -> Result<Option<Vec<bool>>> {
        if self.recognizer.is_none() {
            return Ok(None);
        }
        let q = self.utilities_at(params, &probe.obs, None)?;
        let n_actions = self.agent.cfg.n_actions;
        let masks: Vec<&[bool]> = probe.avail.iter().map(|m| m.as_slice()).collect();
        let qrefs: Vec<&[f64]> = q.iter().map(|v| v.as_slice()).collect();
        let ahat = crate::agents::greedy_joint_action(&qrefs, &masks)?;
        let mut qr_all = Vec::new();
        for joint in enumerate_joint_actions(self.agent.cfg.n_agents, n_actions) {
            let adv: Vec<f64> = (0..q.len())
                .map(|i| {
                    let avail = &probe.avail[i];
                    let row = &q[i];
                    let best = row
                        .iter()
                        .zip(avail)
                        .filter(|(_, ok)| **ok)
                        .map(|(v, _)| *v)
                        .fold(f64::NEG_INFINITY, f64::max);
                    row[joint[i]] - best
                })
                .collect();
            qr_all.push(self.qr_at(params, &adv, &probe.state, &joint)?.unwrap());
        }
        let qr_ahat = {
            let idx = joint_to_index(&ahat, n_actions);
            qr_all[idx]
        };
        Ok(Some(membership_mask_ar(&qr_all, qr_ahat, slack)))
    }
}

/// A single enumerable decision point (the matrix game's only state).
#[derive(Debug, Clone)]
pub struct ArProbe {
    pub state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    pub avail: Vec<Vec<bool>>,
}

/// Row-major enumeration of the joint action space.
pub fn enumerate_joint_actions(n_agents: usize, n_actions: usize) -> Vec<Vec<usize>> {
    let total = n_actions.pow(n_agents as u32);
    (0..total)
        .map(|mut idx| {
            let mut joint = vec![0; n_agents];
            for i in (0..n_agents).rev() {
                joint[i] = idx % n_actions;
                idx /= n_actions;
            }
            joint
        })
        .collect()
}

pub fn joint_to_index(joint: &[usize], n_actions: usize) -> usize {
    joint.iter().fold(0, |acc, &a| acc * n_actions + a)
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub gamma: f64,
    pub td_lambda: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub epsilon: EpsilonSchedule,
    /// Target networks refresh every this many train steps.
    pub target_interval: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub weighting: WeightingConfig,
    pub total_env_steps: usize,
    /// Parallel episode streams per round.
    pub rollout_streams: usize,
    /// Train once per round of this many fresh episodes.
    pub train_interval_episodes: usize,
    pub min_buffer_episodes: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.td_lambda) {
            return Err(Error::InvalidConfig(format!(
                "td_lambda must be in [0, 1], got {}",
                self.td_lambda
            )));
        }
        self.weighting.validate()
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainMetrics {
    pub loss_total: f64,
    pub loss_qtot: f64,
    pub loss_central: f64,
    pub loss_recognizer: f64,
    pub mean_weight: f64,
    pub grad_norm: f64,
    /// |A_r| on enumerable games, when a probe is supplied.
    pub ar_size: Option<usize>,
}

/// One optimization step over a sampled batch. `target_params` is the
/// periodic frozen copy of `nets.params`.
pub fn train_step(
    nets: &mut Networks,
    target_params: &ParamSet,
    batch: &EpisodeBatch,
    cfg: &TrainConfig,
    adam: &mut AdamState,
    ar_probe: Option<&ArProbe>,
) -> Result<TrainMetrics> {
    let (b, n, t_max) = (batch.b, batch.n_agents, batch.t_max);
    let boots = bootstrap_values(nets, target_params, batch)?;
    let y = regression_targets(batch, &boots, cfg.gamma, cfg.td_lambda);

    // ── recorded forward and losses ─────────────────────────────────────
    let mut g = Graph::new();
    let mut hid_main = nets.agent.initial_hidden(b * n);
    let mut hid_cent = nets.central_agent.as_ref().map(|a| a.initial_hidden(b * n));
    let mut acc_tot: Option<Tensor> = None;
    let mut acc_cent: Option<Tensor> = None;
    let mut acc_rec: Option<Tensor> = None;
    let mut weight_sum = 0.0;

    for t in 0..t_max {
        let (q_main, new_hid) = nets.agent.forward_step(&mut g, &nets.params, &batch.inputs[t], &hid_main)?;
        hid_main = new_hid;

        let chosen_main = g.select_last(&q_main, &batch.actions[t])?;
        let chosen_main = g.reshape(&chosen_main, vec![b, n])?;
        let qtot = nets.mixer.forward(&mut g, &nets.params, &chosen_main, &batch.states[t])?;

        let qhat = match (&nets.central_agent, &nets.central_mixer, &mut hid_cent) {
            (Some(ca), Some(cm), Some(hc)) => {
                let (q_cent, h) = ca.forward_step(&mut g, &nets.params, &batch.inputs[t], hc)?;
                *hc = h;
                let chosen_cent = g.select_last(&q_cent, &batch.actions[t])?;
                let chosen_cent = g.reshape(&chosen_cent, vec![b, n])?;
                Some((cm.forward(&mut g, &nets.params, &chosen_cent, &batch.states[t])?, q_cent))
            }
            _ => None,
        };

        let qr = match &nets.recognizer {
            Some(rec) => {
                let adv = compute_advantages(q_main.values(), batch.n_actions, &batch.actions[t], &batch.avail[t]);
                let adv = fold_agents(&adv, b, n);
                let adv = Tensor::from_vec(vec![b, n], adv);
                Some(rec.forward(&mut g, &nets.params, &adv, &batch.states[t], &batch.joint_onehots[t])?)
            }
            None => None,
        };

        // per-sample weights, all from detached values
        let weights = match cfg.weighting.kind {
            WeightKind::Uniform => vec![cfg.weighting.w_high; b],
            WeightKind::Pow => {
                let rec = nets.recognizer.as_ref().expect("pow weighting requires the recognizer");
                // Q_r(τ, â) = V(s) exactly: every advantage at â is zero
                let mut ng = Graph::no_grad();
                let v = rec.state_value(&mut ng, &nets.params, &batch.states[t])?;
                pow_weights(qr.as_ref().unwrap().values(), v.values(), &cfg.weighting)
            }
            WeightKind::Ow => ow_weights(qtot.values(), &y[t], &cfg.weighting),
            WeightKind::Cw => {
                let (_, q_cent) = qhat.as_ref().expect("cw weighting requires the central stack");
                let ahat = greedy_rows(q_main.values(), &batch.avail[t], b * n, batch.n_actions)?;
                let mut ng = Graph::no_grad();
                let chosen = ng.select_last(&q_cent.detach(), &ahat)?;
                let chosen = ng.reshape(&chosen, vec![b, n])?;
                let cm = nets.central_mixer.as_ref().unwrap();
                let qhat_ahat = cm.forward(&mut ng, &nets.params, &chosen, &batch.states[t])?;
                let is_ahat: Vec<bool> = (0..b)
                    .map(|e| (0..n).all(|i| batch.actions[t][e * n + i] == ahat[e * n + i]))
                    .collect();
                cw_weights(&y[t], qhat_ahat.values(), &is_ahat, &cfg.weighting)
            }
        };
        for e in 0..b {
            weight_sum += weights[e] * batch.filled[t][e];
        }

        let y_t = Tensor::from_vec(vec![b, 1], y[t].clone());
        let filled_t: Vec<f64> = batch.filled[t].clone();

        let wf: Vec<f64> = (0..b).map(|e| weights[e] * filled_t[e]).collect();
        let wf = Tensor::from_vec(vec![b, 1], wf);
        let err = g.sq_diff(&qtot, &y_t)?;
        let err = g.mul(&err, &wf)?;
        let s = g.sum_all(&err);
        acc_tot = Some(match acc_tot {
            None => s,
            Some(acc) => g.add(&acc, &s)?,
        });

        if let Some((qhat_t, _)) = &qhat {
            let f = Tensor::from_vec(vec![b, 1], filled_t.clone());
            let err = g.sq_diff(qhat_t, &y_t)?;
            let err = g.mul(&err, &f)?;
            let s = g.sum_all(&err);
            acc_cent = Some(match acc_cent {
                None => s,
                Some(acc) => g.add(&acc, &s)?,
            });
        }
        if let Some(qr_t) = &qr {
            let f = Tensor::from_vec(vec![b, 1], filled_t);
            let err = g.sq_diff(qr_t, &y_t)?;
            let err = g.mul(&err, &f)?;
            let s = g.sum_all(&err);
            acc_rec = Some(match acc_rec {
                None => s,
                Some(acc) => g.add(&acc, &s)?,
            });
        }
    }

    // normalize by the filled count, never by the weight sum
    let inv = 1.0 / batch.filled_count.max(1.0);
    let loss_tot = g.scale(acc_tot.as_ref().unwrap(), inv);
    let mut total = loss_tot.clone();
    let loss_cent = acc_cent.map(|acc| g.scale(&acc, inv));
    if let Some(lc) = &loss_cent {
        total = g.add(&total, lc)?;
    }
    let loss_rec = acc_rec.map(|acc| g.scale(&acc, inv));
    if let Some(lr) = &loss_rec {
        total = g.add(&total, lr)?;
    }

    if !total.item().is_finite() {
        return Err(Error::NonFiniteLoss {
            context: format!(
                "qtot={} central={:?} recognizer={:?}",
                loss_tot.item(),
                loss_cent.as_ref().map(|t| t.item()),
                loss_rec.as_ref().map(|t| t.item())
            ),
        });
    }

    let grads = g.backward(&total)?;
    let mut param_grads = grads.into_param_grads(nets.params.len());
    let grad_norm = crate::autodiff::clip_grad_norm(&mut param_grads, cfg.clip_norm);
    adam.step(&mut nets.params, &param_grads)?;

    let ar_size = match ar_probe {
        Some(probe) => nets.ar_size(&nets.params, probe, cfg.weighting.slack)?,
        None => None,
    };

    Ok(TrainMetrics {
        loss_total: total.item(),
        loss_qtot: loss_tot.item(),
        loss_central: loss_cent.map(|t| t.item()).unwrap_or(0.0),
        loss_recognizer: loss_rec.map(|t| t.item()).unwrap_or(0.0),
        mean_weight: weight_sum / batch.filled_count.max(1.0),
        grad_norm,
        ar_size,
    })
}

/// Frozen bootstrap per (t, episode): the shared target value of the slot
/// after transition t, evaluated with the target parameters.
///
/// The next-step joint action is the per-agent greedy action of the
/// monotonic target stack under availability masks; algorithms with a
/// central stack evaluate it there (its own utilities at that action),
/// the plain monotonic learner evaluates its own mixer.
pub fn bootstrap_values(nets: &Networks, target_params: &ParamSet, batch: &EpisodeBatch) -> Result<Vec<Vec<f64>>> {
    let (b, n, t_max) = (batch.b, batch.n_agents, batch.t_max);
    let mut boots = vec![vec![0.0; b]; t_max];
    if batch.all_terminal() {
        return Ok(boots);
    }
    let mut g = Graph::no_grad();
    let mut hid_main = nets.agent.initial_hidden(b * n);
    let mut hid_cent = nets.central_agent.as_ref().map(|a| a.initial_hidden(b * n));
    for t in 0..=t_max {
        let (q_main, new_hid) = nets.agent.forward_step(&mut g, target_params, &batch.inputs[t], &hid_main)?;
        hid_main = new_hid;
        let q_cent = match (&nets.central_agent, &mut hid_cent) {
            (Some(ca), Some(hc)) => {
                let (q, h) = ca.forward_step(&mut g, target_params, &batch.inputs[t], hc)?;
                *hc = h;
                Some(q)
            }
            _ => None,
        };
        if t == 0 {
            continue;
        }
        let ahat = greedy_rows(q_main.values(), &batch.avail[t], b * n, batch.n_actions)?;
        let eval_q = q_cent.as_ref().unwrap_or(&q_main);
        let chosen = g.select_last(eval_q, &ahat)?;
        let chosen = g.reshape(&chosen, vec![b, n])?;
        let value = match &nets.central_mixer {
            Some(cm) => cm.forward(&mut g, target_params, &chosen, &batch.states[t])?,
            None => nets.mixer.forward(&mut g, target_params, &chosen, &batch.states[t])?,
        };
        boots[t - 1].copy_from_slice(value.values());
    }
    Ok(boots)
}

/// TD(λ) targets per (t, episode), shared by all three losses.
pub fn regression_targets(batch: &EpisodeBatch, boots: &[Vec<f64>], gamma: f64, lambda: f64) -> Vec<Vec<f64>> {
    let (b, t_max) = (batch.b, batch.t_max);
    let mut y = vec![vec![0.0; b]; t_max];
    for e in 0..b {
        let len = (0..t_max).take_while(|&t| batch.filled[t][e] == 1.0).count();
        if len == 0 {
            continue;
        }
        let rewards: Vec<f64> = (0..len).map(|t| batch.rewards[t][e]).collect();
        let bts: Vec<f64> = (0..len).map(|t| boots[t][e]).collect();
        let term: Vec<bool> = (0..len).map(|t| batch.terminal[t][e]).collect();
        let g = td_lambda_targets(&rewards, &bts, &term, gamma, lambda);
        for (t, v) in g.into_iter().enumerate() {
            y[t][e] = v;
        }
    }
    y
}

/// Masked argmax per row over flattened (rows, n_actions) host values.
fn greedy_rows(q: &[f64], avail: &[bool], rows: usize, n_actions: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        out.push(masked_argmax(
            &q[r * n_actions..(r + 1) * n_actions],
            &avail[r * n_actions..(r + 1) * n_actions],
        )?);
    }
    Ok(out)
}

/// Identity regroup: advantages arrive row-major (b·n) and are consumed as
/// (b, n); kept for clarity at the call site.
fn fold_agents(adv: &[f64], b: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(adv.len(), b * n);
    adv.to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_action_enumeration_is_row_major() {
        let all = enumerate_joint_actions(2, 3);
        assert_eq!(all.len(), 9);
        assert_eq!(all[0], vec![0, 0]);
        assert_eq!(all[1], vec![0, 1]);
        assert_eq!(all[5], vec![1, 2]);
        assert_eq!(joint_to_index(&[1, 2], 3), 5);
    }

    #[test]
    fn algo_flags() {
        assert!(!Algo::Qmix.uses_central());
        assert!(Algo::OwQmix.uses_central() && !Algo::OwQmix.uses_recognizer());
        assert!(Algo::CwQmix.uses_central());
        assert!(Algo::PowQmix.uses_central() && Algo::PowQmix.uses_recognizer());
        assert_eq!("powqmix".parse::<Algo>().unwrap(), Algo::PowQmix);
        assert!("qmax".parse::<Algo>().is_err());
    }
}
