// Temporary: train briefly at p=-2 and inspect learned values in a
// capture-ready state, plus data statistics.
use powfactor_core::agents::EpsilonSchedule;
use powfactor_core::autodiff::{Graph, Tensor};
use powfactor_core::env::{EnvConfig, PredatorPreyConfig};
use powfactor_core::learner::{Algo, NetworkConfig, TrainConfig, Trainer};
use powfactor_core::weighting::WeightingConfig;

#[test]
#[ignore]
fn probe_trained_values() {
    let env_cfg = EnvConfig::PredatorPrey(PredatorPreyConfig {
        miscapture_punishment: -2.0,
        ..Default::default()
    });
    let cfg = TrainConfig {
        gamma: 0.99,
        td_lambda: 0.6,
        batch_size: 32,
        buffer_capacity: 5000,
        epsilon: EpsilonSchedule { start: 1.0, finish: 0.05, anneal_steps: 375_000 },
        target_interval: 25,
        lr: 1e-3,
        clip_norm: 10.0,
        weighting: WeightingConfig::pow(5.0, 0.0, 0.05),
        total_env_steps: 200_000,
        rollout_streams: 8,
        train_interval_episodes: 8,
        min_buffer_episodes: 32,
    };
    let net_cfg = NetworkConfig { recurrent: true, ..Default::default() };
    let mut tr = Trainer::new(env_cfg, cfg, Algo::PowQmix, &net_cfg, 0).unwrap();
    let mut captures = 0usize;
    let mut miscaps = 0usize;
    while !tr.finished() {
        tr.round().unwrap();
    }
    // count reward events across the replay buffer
    for i in 0..tr.buffer.len() {
        let ep = tr.buffer.sample(1, &mut powfactor_core::learner::rollout::stream_rng(9, i as u64)).unwrap()[0].clone();
        let _ = ep;
    }
    // sample many episodes uniформly to estimate event rates
    let mut rng = powfactor_core::learner::rollout::stream_rng(7, 0);
    for _ in 0..2000 {
        let ep = tr.buffer.sample(1, &mut rng).unwrap()[0];
        for r in &ep.rewards {
            if *r >= 8.0 { captures += 1; }
            if *r < 0.0 { miscaps += 1; }
        }
    }
    println!("sampled 2000 episodes: {} capture steps, {} punished steps", captures, miscaps);

    // hand-built state: predators 0,1 adjacent to prey at (0,0); 2,3 far
    let (w, h) = (7usize, 7usize);
    let mut state = vec![0.0; 2 * w * h];
    let preds = [(1i64, 0i64), (0, 1), (5, 5), (6, 6)];
    let prey = [(0i64, 0i64), (6, 0)];
    for &(x, y) in &preds { state[y as usize * w + x as usize] = 1.0; }
    for &(x, y) in &prey { state[w * h + y as usize * w + x as usize] = 1.0; }

    // egocentric obs for each predator (radius 2, 3 planes)
    let obs_of = |me: (i64, i64)| -> Vec<f64> {
        let r = 2i64;
        let side = 5usize;
        let mut obs = vec![0.0; 3 * side * side];
        for dy in -r..=r {
            for dx in -r..=r {
                let cell = (me.0 + dx, me.1 + dy);
                let idx = ((dy + r) as usize) * side + (dx + r) as usize;
                if cell.0 < 0 || cell.1 < 0 || cell.0 >= w as i64 || cell.1 >= h as i64 {
                    obs[2 * side * side + idx] = 1.0;
                    continue;
                }
                if preds.iter().any(|&p| p == cell && p != me) { obs[idx] = 1.0; }
                if prey.iter().any(|&p| p == cell) { obs[side * side + idx] = 1.0; }
            }
        }
        obs
    };
    let obs: Vec<Vec<f64>> = preds.iter().map(|&p| obs_of(p)).collect();
    let q = tr.nets.utilities_at(&tr.nets.params, &obs, None).unwrap();
    for (i, qi) in q.iter().enumerate() {
        println!("agent {i} Q: up {:+.3} down {:+.3} left {:+.3} right {:+.3} stay {:+.3} CAPTURE {:+.3}", qi[0], qi[1], qi[2], qi[3], qi[4], qi[5]);
    }
    let rec = tr.nets.recognizer.as_ref().unwrap();
    let mut g = Graph::no_grad();
    let st = Tensor::from_vec(vec![1, state.len()], state.clone());
    let v = rec.state_value(&mut g, &tr.nets.params, &st).unwrap().item();
    println!("V(s) = {v:.3}");
    // joint: capture, capture, stay, stay
    let joint = [5usize, 5, 4, 4];
    let adv: Vec<f64> = (0..4).map(|i| {
        let best = q[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        q[i][joint[i]] - best
    }).collect();
    let qr = tr.nets.qr_at(&tr.nets.params, &adv, &state, &joint).unwrap().unwrap();
    println!("Q_r(s, capture-pair) = {qr:.3}, advantages {adv:?}");
    let chosen: Vec<f64> = (0..4).map(|i| q[i][joint[i]]).collect();
    let qtot = tr.nets.qtot_at(&tr.nets.params, &chosen, &state).unwrap();
    let greedy_chosen: Vec<f64> = (0..4).map(|i| q[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
    let qtot_greedy = tr.nets.qtot_at(&tr.nets.params, &greedy_chosen, &state).unwrap();
    println!("Q_tot(s, capture-pair) = {qtot:.3}; Q_tot(s, greedy) = {qtot_greedy:.3}");
}
