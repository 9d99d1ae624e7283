//! Gradient fit of a recognizer against exact targets with frozen
//! utilities, for checking the convergence identities on enumerable games.

use rand_chacha::ChaCha8Rng;

use crate::agents::greedy_joint_action;
use crate::autodiff::{AdamState, Graph, ParamSet, Tensor};
use crate::learner::{enumerate_joint_actions, joint_to_index};
use crate::mixers::{joint_action_onehot, MixerConfig, Recognizer};
use crate::Result;

#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Learning-rate stages; each runs until the stop rule fires, then the
    /// next polishes from where the previous left off.
    pub lr_stages: Vec<f64>,
    pub max_steps_per_stage: usize,
    /// Stopped when the loss changes by less than `delta` over `window`
    /// steps.
    pub window: usize,
    pub delta: f64,
    /// Independent restarts; the best final loss among stopped fits wins.
    pub restarts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lr_stages: vec![5e-3, 1e-3, 1e-4],
            max_steps_per_stage: 30_000,
            window: 100,
            delta: 1e-6,
            restarts: 3,
        }
    }
}

/// A converged (or capped) recognizer fit on a one-step game.
#[derive(Debug, Clone)]
pub struct RecognizerFit {
    /// The frozen utilities the fit was run against.
    pub fixed_q: Vec<Vec<f64>>,
    /// Q_r per joint action, row-major.
    pub qr: Vec<f64>,
    /// Q_r at the greedy joint action of the frozen utilities.
    pub qr_ahat: f64,
    pub ahat: Vec<usize>,
    pub converged: bool,
    pub steps: usize,
    pub final_loss: f64,
}

/// Fits Q_r toward Q* = payoff under uniform sampling of all joint
/// actions, leaving the utilities untouched. Non-convergence within the
/// step caps is reported, not fatal.
///
/// The minimization restarts from independent initializations and keeps
/// the stopped fit with the lowest loss; each restart anneals the learning
/// rate through `lr_stages`, re-applying the stop rule per stage.
pub fn fit_recognizer_fixed_utilities(
    payoff: &[Vec<f64>],
    fixed_q: &[Vec<f64>],
    cfg: &FitConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RecognizerFit> {
    let n_agents = fixed_q.len();
    let n_actions = fixed_q[0].len();
    assert_eq!(payoff.len(), n_actions);
    let joints = enumerate_joint_actions(n_agents, n_actions);
    let b = joints.len();

    // single-state game: the state is the constant [1.0]
    let states = Tensor::from_vec(vec![b, 1], vec![1.0; b]);
    let mut onehot_buf = Vec::with_capacity(b * n_agents * n_actions);
    let mut adv_buf = Vec::with_capacity(b * n_agents);
    let mut target_buf = Vec::with_capacity(b);
    for joint in &joints {
        onehot_buf.extend(joint_action_onehot(joint, n_actions));
        for (i, &a) in joint.iter().enumerate() {
            let best = fixed_q[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            adv_buf.push(fixed_q[i][a] - best);
        }
        target_buf.push(payoff[joint[0]][joint[1]]);
    }
    let onehots = Tensor::from_vec(vec![b, n_agents * n_actions], onehot_buf);
    let advantages = Tensor::from_vec(vec![b, n_agents], adv_buf);
    let targets = Tensor::from_vec(vec![b, 1], target_buf);

    let mut best: Option<(f64, bool, usize, ParamSet, Recognizer)> = None;
    for _restart in 0..cfg.restarts.max(1) {
        let mut params = ParamSet::new();
        let recognizer = Recognizer::init(
            &mut params,
            rng,
            MixerConfig::new(n_agents, 1),
            n_agents * n_actions,
        );
        let mut steps = 0;
        let mut stopped = true;
        let mut final_loss = f64::INFINITY;
        for &lr in &cfg.lr_stages {
            let mut adam = AdamState::new(&params, lr);
            let mut history: Vec<f64> = Vec::with_capacity(cfg.max_steps_per_stage);
            stopped = false;
            for step in 0..cfg.max_steps_per_stage {
                let mut g = Graph::new();
                let qr = recognizer.forward(&mut g, &params, &advantages, &states, &onehots)?;
                let err = g.sq_diff(&qr, &targets)?;
                let loss = g.mean_all(&err);
                final_loss = loss.item();
                let grads = g.backward(&loss)?;
                let mut pg = grads.into_param_grads(params.len());
                crate::autodiff::clip_grad_norm(&mut pg, 10.0);
                adam.step(&mut params, &pg)?;

                history.push(final_loss);
                steps += 1;
                if step >= cfg.window && (history[step - cfg.window] - final_loss).abs() < cfg.delta {
                    stopped = true;
                    break;
                }
            }
            if !stopped {
                break;
            }
        }
        let better = match &best {
            None => true,
            Some((loss, conv, ..)) => (stopped && !conv) || (stopped == *conv && final_loss < *loss),
        };
        if better {
            best = Some((final_loss, stopped, steps, params, recognizer));
        }
    }
    let (final_loss, converged, steps, params, recognizer) = best.unwrap();

    let mut g = Graph::no_grad();
    let qr = recognizer.forward(&mut g, &params, &advantages, &states, &onehots)?;
    let qr = qr.values().to_vec();
    let qrefs: Vec<&[f64]> = fixed_q.iter().map(|v| v.as_slice()).collect();
    let masks: Vec<Vec<bool>> = fixed_q.iter().map(|q| vec![true; q.len()]).collect();
    let mrefs: Vec<&[bool]> = masks.iter().map(|m| m.as_slice()).collect();
    let ahat = greedy_joint_action(&qrefs, &mrefs)?;
    let qr_ahat = qr[joint_to_index(&ahat, n_actions)];

    Ok(RecognizerFit {
        fixed_q: fixed_q.to_vec(),
        qr,
        qr_ahat,
        ahat,
        converged,
        steps,
        final_loss,
    })
}
