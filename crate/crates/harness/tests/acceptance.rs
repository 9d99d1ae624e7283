//! Acceptance suite: every shipped claim as a pass/fail criterion, each
//! printing one line. Criteria run serially (shared lock) because several
//! of them saturate the machine internally.

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use powfactor_core::agents::EpsilonSchedule;
use powfactor_core::env::{EnvConfig, MatrixGameConfig, PredatorPreyConfig};
use powfactor_core::learner::{Algo, NetworkConfig, TrainConfig};
use powfactor_core::weighting::{WeightKind, WeightingConfig};
use powfactor_harness::config::ExperimentConfig;
use powfactor_harness::runner::{run_experiment, worker_threads};
use powfactor_harness::verify::{run_verification, VerifyConfig};

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(|poison| poison.into_inner())
}

fn report(criterion: &str, passed: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
}

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Matrix-game experiment per the theory setup: ε = 1 throughout,
/// 40k env steps (= 4,997 train steps, within the 20k budget).
fn matrix_config(algo: Algo, weighting: WeightingConfig, out: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::matrix_default();
    cfg.algo = algo;
    cfg.train.weighting = weighting;
    cfg.seeds = SEEDS.to_vec();
    cfg.out = std::env::temp_dir().join("powfactor_acceptance").join(out);
    cfg.eval_interval = 20_000;
    cfg.parallel_seeds = true;
    cfg
}

struct MatrixRun {
    seed: u64,
    greedy: Vec<usize>,
    qtot_aa: f64,
    max_distortion: f64,
    qr: Option<Vec<f64>>,
    qr_ahat: Option<f64>,
    runtime_s: f64,
}

fn run_matrix(cfg: &ExperimentConfig) -> Vec<MatrixRun> {
    let outcome = run_experiment(cfg).expect("experiment runs");
    let runs: Vec<MatrixRun> = outcome
        .finished()
        .map(|seed| {
            let t = seed.matrix.as_ref().expect("matrix tables");
            MatrixRun {
                seed: seed.seed,
                greedy: t.greedy.clone(),
                qtot_aa: t.qtot_at(0, 0),
                max_distortion: t.max_qtot_distortion(),
                qr: t.qr.clone(),
                qr_ahat: t
                    .qr
                    .as_ref()
                    .map(|qr| qr[t.greedy[0] * t.n_actions + t.greedy[1]]),
                runtime_s: seed.wall_clock_s,
            }
        })
        .collect();
    assert_eq!(runs.len(), SEEDS.len(), "all seeds must finish");
    runs
}

#[test]
fn criterion_01_matrix_optimum_recovery_and_02_recognizer_table_and_10_weight_sweep() {
    let _guard = serial();

    // criterion 1 setup doubles as the base case of the criterion 10 sweep
    let weight_grid: [(f64, f64, &str); 3] = [
        (1.0, 0.0, "pow_1_0"),
        (5.0, 0.0, "pow_5_0"),
        (5.0, 0.5, "pow_5_0p5"),
    ];
    let mut all_runs = Vec::new();
    for (w_high, w_low, label) in weight_grid {
        let cfg = matrix_config(
            Algo::PowQmix,
            WeightingConfig {
                kind: WeightKind::Pow,
                w_high,
                w_low,
                slack: 0.05,
            },
            label,
        );
        let runs = run_matrix(&cfg);
        all_runs.push((w_high, w_low, runs));
    }

    // criterion 1: weights (1, 0), C = 0.05, ≤ 20k train steps, 5/5 seeds
    let base = &all_runs[0].2;
    let ok_seeds = base
        .iter()
        .filter(|r| r.greedy == vec![0, 0] && (r.qtot_aa - 8.0).abs() <= 0.2)
        .count();
    let slowest = base.iter().map(|r| r.runtime_s).fold(0.0, f64::max);
    report(
        "1 (matrix optimum recovery)",
        ok_seeds == 5 && slowest <= 120.0,
        &format!(
            "{ok_seeds}/5 seeds greedy=(A,A) with |Q_tot(A,A)−8| ≤ 0.2; slowest seed {slowest:.1}s (≤ 120s)"
        ),
    );

    // criterion 2: per-entry |Q_r(a) − min(Q_r(â), payoff(a))| ≤ 0.2, 5/5
    let payoff = MatrixGameConfig::hard().payoff;
    let mut qr_ok = 0;
    let mut worst = 0.0f64;
    for r in base {
        let (qr, qr_ahat) = (r.qr.as_ref().unwrap(), r.qr_ahat.unwrap());
        let mut seed_worst = 0.0f64;
        for a1 in 0..3 {
            for a2 in 0..3 {
                let expect = qr_ahat.min(payoff[a1][a2]);
                seed_worst = seed_worst.max((qr[a1 * 3 + a2] - expect).abs());
            }
        }
        worst = worst.max(seed_worst);
        if seed_worst <= 0.2 {
            qr_ok += 1;
        }
    }
    report(
        "2 (recognizer table)",
        qr_ok == 5,
        &format!("{qr_ok}/5 seeds within 0.2 of min(Q_r(â), payoff); worst deviation {worst:.3}"),
    );

    // criterion 10: every swept weight pair satisfies criterion 1's
    // success condition
    let mut sweep_ok = true;
    let mut detail = String::new();
    for (w_high, w_low, runs) in &all_runs {
        let ok = runs
            .iter()
            .filter(|r| r.greedy == vec![0, 0] && (r.qtot_aa - 8.0).abs() <= 0.2)
            .count();
        sweep_ok &= ok == 5;
        detail.push_str(&format!("({w_high},{w_low}): {ok}/5  "));
    }
    report("10 (weight-sensitivity sweep on the matrix game)", sweep_ok, detail.trim());
}

#[test]
fn criterion_03_qmix_failure_reproduction() {
    let _guard = serial();
    let cfg = matrix_config(Algo::Qmix, WeightingConfig::uniform(), "qmix");
    let runs = run_matrix(&cfg);
    let failing = runs
        .iter()
        .filter(|r| r.greedy != vec![0, 0] && r.qtot_aa <= 0.0)
        .count();
    let detail: Vec<String> = runs
        .iter()
        .map(|r| format!("seed {}: greedy {:?} Q_tot(A,A) {:.2}", r.seed, r.greedy, r.qtot_aa))
        .collect();
    report(
        "3 (monotonic learner fails the hard game)",
        failing >= 4,
        &format!("{failing}/5 seeds mis-converge with Q_tot(A,A) ≤ 0 [{}]", detail.join("; ")),
    );
}

#[test]
fn criterion_04_cw_parity() {
    let _guard = serial();
    let cfg = matrix_config(
        Algo::CwQmix,
        WeightingConfig {
            kind: WeightKind::Cw,
            w_high: 1.0,
            w_low: 0.0,
            slack: 0.0,
        },
        "cw",
    );
    let runs = run_matrix(&cfg);
    let ok = runs
        .iter()
        .filter(|r| r.greedy == vec![0, 0] && (r.qtot_aa - 8.0).abs() <= 0.2)
        .count();
    report(
        "4 (centrally weighted baseline parity)",
        ok >= 4,
        &format!("{ok}/5 seeds recover (A,A) with |Q_tot(A,A)−8| ≤ 0.2"),
    );
}

#[test]
fn criterion_05_ow_distortion() {
    let _guard = serial();
    let cfg = matrix_config(
        Algo::OwQmix,
        WeightingConfig {
            kind: WeightKind::Ow,
            w_high: 1.0,
            w_low: 0.0,
            slack: 0.0,
        },
        "ow",
    );
    let runs = run_matrix(&cfg);
    let ok = runs.iter().filter(|r| r.max_distortion > 4.0).count();
    let worst: Vec<String> = runs.iter().map(|r| format!("{:.1}", r.max_distortion)).collect();
    report(
        "5 (optimistic baseline distorts values)",
        ok >= 4,
        &format!("{ok}/5 seeds with max |Q_tot − payoff| > 4 (per-seed: {})", worst.join(", ")),
    );
}

#[test]
fn criterion_06_lemma_theorem_batch() {
    let _guard = serial();
    let started = Instant::now();
    let cfg = VerifyConfig {
        lemma_instances: 200,
        theorem2_instances: 0,
        theorem2_env_steps: 0,
        seed: 1000,
        threads: worker_threads(),
    };
    let summary = run_verification(&cfg).expect("verification runs");
    let failures = summary.failures();
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "6 (lemma/theorem batch on 200 random games)",
        summary.convergence_rate() >= 0.95 && failures.is_empty() && elapsed <= 600.0,
        &format!(
            "{}/{} fits converged ({:.1}%); {} failed checks among converged; {:.0}s (≤ 600s)",
            summary.converged(),
            summary.lemma_instances.len(),
            100.0 * summary.convergence_rate(),
            failures.len(),
            elapsed
        ),
    );
}

#[test]
fn criterion_07_theorem2_end_to_end() {
    let _guard = serial();
    let cfg = VerifyConfig {
        lemma_instances: 0,
        theorem2_instances: 50,
        theorem2_env_steps: 36_000,
        seed: 1000,
        threads: worker_threads(),
    };
    let summary = run_verification(&cfg).expect("verification runs");
    report(
        "7 (end-to-end optimum recognition on 50 random games)",
        summary.theorem2_rate() >= 0.9,
        &format!(
            "{}/{} runs ended with â ∈ A_tgm and A_r = A_tgm ({:.0}%)",
            summary.theorem2_successes,
            summary.theorem2_total,
            100.0 * summary.theorem2_rate()
        ),
    );
}

#[test]
fn criterion_08_numerics() {
    let _guard = serial();
    use powfactor_core::autodiff::gradcheck::{finite_difference_grads, max_relative_error};
    use powfactor_core::autodiff::{Graph, ParamId, ParamSet, Tensor};
    use powfactor_core::mixers::{joint_action_onehot, MixerConfig, MonotonicMixer, Recognizer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // finite differences over random two-layer perceptrons
    let mut fd_worst = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(31_000 + seed);
        let mut ps = ParamSet::new();
        let dims = [
            3 + (seed as usize % 3),
            4 + (seed as usize % 4),
            1 + (seed as usize % 2),
        ];
        let w1 = ps.alloc(
            vec![dims[0], dims[1]],
            (0..dims[0] * dims[1]).map(|_| rng.gen_range(-0.7..0.7)).collect(),
        );
        let b1 = ps.alloc(vec![dims[1]], (0..dims[1]).map(|_| rng.gen_range(-0.7..0.7)).collect());
        let w2 = ps.alloc(
            vec![dims[1], dims[2]],
            (0..dims[1] * dims[2]).map(|_| rng.gen_range(-0.7..0.7)).collect(),
        );
        let x = Tensor::from_vec(
            vec![3, dims[0]],
            (0..3 * dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let forward = |ps: &ParamSet, g: &mut Graph| {
            let w1 = g.param(ps, w1);
            let b1 = g.param(ps, b1);
            let w2 = g.param(ps, w2);
            let h = g.matmul(&x, &w1).unwrap();
            let h = g.add(&h, &b1).unwrap();
            let h = match seed % 4 {
                0 => g.relu(&h),
                1 => g.elu(&h),
                2 => g.tanh(&h),
                _ => g.abs(&h),
            };
            let h = g.matmul(&h, &w2).unwrap();
            g.sum_all(&h)
        };
        let mut g = Graph::new();
        let loss = forward(&ps, &mut g);
        let grads = g.backward(&loss).unwrap();
        let analytic: Vec<Vec<f64>> = (0..ps.len())
            .map(|i| grads.by_param(ParamId(i)).unwrap().to_vec())
            .collect();
        let numeric = finite_difference_grads(&ps, 1e-5, |p| {
            let mut g = Graph::no_grad();
            forward(p, &mut g).item()
        });
        fd_worst = fd_worst.max(max_relative_error(&analytic, &numeric));
    }

    // monotonicity of the mixing head under perturbation
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut mono_violations = 0;
    for trial in 0..1000 {
        let mut ps = ParamSet::new();
        let mixer = MonotonicMixer::init(&mut ps, &mut rng, MixerConfig::new(3, 4));
        let state = Tensor::from_vec(vec![1, 4], (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let q0: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let mut q1 = q0.clone();
        q1[trial % 3] += 0.1;
        let mut g = Graph::no_grad();
        let y0 = mixer
            .forward(&mut g, &ps, &Tensor::from_vec(vec![1, 3], q0), &state)
            .unwrap()
            .item();
        let y1 = mixer
            .forward(&mut g, &ps, &Tensor::from_vec(vec![1, 3], q1), &state)
            .unwrap()
            .item();
        if y1 < y0 - 1e-12 {
            mono_violations += 1;
        }
    }

    // recognizer ceiling Q_r(a) ≤ Q_r(â) = V(s)
    let mut ceiling_violations = 0;
    for _ in 0..1000 {
        let mut ps = ParamSet::new();
        let rec = Recognizer::init(&mut ps, &mut rng, MixerConfig::new(2, 3), 6);
        let s = Tensor::from_vec(vec![1, 3], (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let joint = [rng.gen_range(0..3), rng.gen_range(0..3)];
        let onehot = Tensor::from_vec(vec![1, 6], joint_action_onehot(&joint, 3));
        let adv = Tensor::from_vec(vec![1, 2], vec![-rng.gen_range(0.0..4.0), -rng.gen_range(0.0..4.0)]);
        let mut g = Graph::no_grad();
        let qr = rec.forward(&mut g, &ps, &adv, &s, &onehot).unwrap().item();
        let v = rec.state_value(&mut g, &ps, &s).unwrap().item();
        if qr > v + 1e-12 {
            ceiling_violations += 1;
        }
    }

    // detachment: the recognizer loss reaches no agent parameters
    let mut ps = ParamSet::new();
    let agent_param = ps.alloc(vec![2], vec![0.4, -0.6]);
    let rec = Recognizer::init(&mut ps, &mut rng, MixerConfig::new(2, 3), 6);
    let mut g = Graph::new();
    let q = g.param(&ps, agent_param);
    let adv = g.reshape(&q, vec![1, 2]).unwrap();
    let s = Tensor::from_vec(vec![1, 3], vec![0.2, -0.1, 0.4]);
    let onehot = Tensor::from_vec(vec![1, 6], joint_action_onehot(&[1, 2], 3));
    let qr = rec.forward(&mut g, &ps, &adv, &s, &onehot).unwrap();
    let target = Tensor::from_vec(vec![1, 1], vec![3.0]);
    let err = g.sq_diff(&qr, &target).unwrap();
    let loss = g.sum_all(&err);
    let grads = g.backward(&loss).unwrap();
    let detached_ok = grads.by_param(agent_param).is_none();

    report(
        "8 (numerics)",
        fd_worst <= 1e-4 && mono_violations == 0 && ceiling_violations == 0 && detached_ok,
        &format!(
            "finite-difference worst rel err {fd_worst:.2e} (≤ 1e-4); monotonicity violations {mono_violations}/1000; ceiling violations {ceiling_violations}/1000; agent grads under recognizer loss absent: {detached_ok}"
        ),
    );
}

#[test]
fn criterion_09_predator_prey_trend() {
    let _guard = serial();

    let base = |algo: Algo, punishment: f64, out: &str| {
        let mut cfg = ExperimentConfig::predprey_default();
        cfg.algo = algo;
        if algo == Algo::Qmix {
            cfg.train.weighting = WeightingConfig::uniform();
        }
        match &mut cfg.env {
            EnvConfig::PredatorPrey(pp) => pp.miscapture_punishment = punishment,
            _ => unreachable!(),
        }
        cfg.seeds = SEEDS.to_vec();
        cfg.out = std::env::temp_dir().join("powfactor_acceptance").join(out);
        cfg.eval_interval = 100_000;
        cfg.parallel_seeds = true;
        cfg
    };

    let median_final = |cfg: &ExperimentConfig| -> (f64, f64) {
        let outcome = run_experiment(cfg).expect("experiment runs");
        let mut finals: Vec<f64> = outcome
            .finished()
            .map(|s| s.rows.last().unwrap().test_return_mean)
            .collect();
        assert_eq!(finals.len(), SEEDS.len(), "all seeds must finish");
        finals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let slowest = outcome
            .finished()
            .map(|s| s.wall_clock_s)
            .fold(0.0, f64::max);
        (finals[finals.len() / 2], slowest)
    };

    let (pow_p2, t1) = median_final(&base(Algo::PowQmix, -2.0, "pp_pow_p2"));
    let (qmix_p2, t2) = median_final(&base(Algo::Qmix, -2.0, "pp_qmix_p2"));
    let (pow_p0, t3) = median_final(&base(Algo::PowQmix, 0.0, "pp_pow_p0"));
    let (qmix_p0, t4) = median_final(&base(Algo::Qmix, 0.0, "pp_qmix_p0"));
    let slowest = [t1, t2, t3, t4].into_iter().fold(0.0, f64::max);

    report(
        "9 (predator-prey trend)",
        pow_p2 > 0.0 && pow_p2 > qmix_p2 && pow_p0 > 0.0 && qmix_p0 > 0.0 && slowest <= 3600.0,
        &format!(
            "p=−2 medians: pow {pow_p2:.2} vs qmix {qmix_p2:.2}; p=0 medians: pow {pow_p0:.2}, qmix {qmix_p0:.2}; slowest seed {slowest:.0}s (≤ 3600s)"
        ),
    );
}
