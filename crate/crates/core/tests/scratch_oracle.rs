// Temporary exploration for the lemma/theorem batch dynamics.
use powfactor_core::oracle::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
#[ignore]
fn explore_lemma_batch() {
    let t0 = std::time::Instant::now();
    let instances: Vec<u64> = (0..200).collect();
    let results = parallel_map(instances, 2, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
        let payoff = random_payoff(3, &mut rng);
        let fixed_q = random_utilities(2, 3, &mut rng);
        let exact = exact_qstar_matrix(&payoff).unwrap();
        let fit = fit_recognizer_fixed_utilities(&payoff, &fixed_q, &FitConfig::default(), &mut rng).unwrap();
        let l1 = check_lemma1(&fit, &exact, 0.2);
        let l2 = check_lemma2(&fit, &exact, 0.05);
        let l3 = check_lemma3(&fit, &exact, 0.2, 1e-3);
        let t1 = check_theorem1(&fit, &exact, 0.05);
        (fit.converged, fit.steps, fit.final_loss, l1, l2, l3, t1)
    });
    let conv = results.iter().filter(|r| r.0).count();
    let mut fails = vec![];
    for (i, (c, steps, loss, l1, l2, l3, t1)) in results.iter().enumerate() {
        if !c { continue; }
        for rep in [l1, l2, l3, t1] {
            if !rep.passed {
                fails.push((i, rep.name.clone(), rep.worst_violation, rep.counterexample.clone(), *steps, *loss));
            }
        }
    }
    println!("converged: {conv}/200");
    println!("failures among converged: {}", fails.len());
    for f in fails.iter().take(15) { println!("{f:?}"); }
    let max_steps = results.iter().map(|r| r.1).max().unwrap();
    let mean_steps: f64 = results.iter().map(|r| r.1 as f64).sum::<f64>() / 200.0;
    println!("steps: mean {mean_steps:.0}, max {max_steps}; elapsed {:?}", t0.elapsed());
}

#[test]
#[ignore]
fn explore_theorem2_batch() {
    let t0 = std::time::Instant::now();
    let instances: Vec<u64> = (0..50).collect();
    let results = parallel_map(instances, 2, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + i);
        let payoff = random_payoff(3, &mut rng);
        let out = check_theorem2(&payoff, 50_000 + i, 24_000).unwrap();
        (payoff, out)
    });
    let succ = results.iter().filter(|(_, o)| o.success()).count();
    println!("theorem2 successes: {succ}/50 in {:?}", t0.elapsed());
    for (i, (p, o)) in results.iter().enumerate() {
        if !o.success() {
            println!("FAIL {i}: greedy {:?} opt {} ar_eq {} (|A_r|={} |A_tgm|={}) payoff {:?}",
                o.greedy, o.greedy_optimal, o.ar_equals_tgm, o.ar_size, o.tgm_size, p);
        }
    }
}

#[test]
#[ignore]
fn explore_theorem2_hard_instances() {
    let t0 = std::time::Instant::now();
    let instances: Vec<u64> = vec![33, 47];
    let results = parallel_map(instances, 2, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + i);
        let payoff = random_payoff(3, &mut rng);
        let out = check_theorem2(&payoff, 50_000 + i, 36_000).unwrap();
        (i, out)
    });
    for (i, o) in &results {
        println!("seed {i}: success {} greedy {:?} opt {} ar_eq {} |A_r|={}",
            o.success(), o.greedy, o.greedy_optimal, o.ar_equals_tgm, o.ar_size);
    }
    println!("elapsed {:?}", t0.elapsed());
}
