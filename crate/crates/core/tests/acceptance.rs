//! Acceptance suite: one test per release criterion, each printing a
//! measured-vs-expected line. Run with `cargo test --test acceptance`
//! (add `-- --nocapture` to see the measurement lines).

use fvd_core::controller::ControllerState;
use fvd_core::diagnostics::pairwise_diversity;
use fvd_core::diffusion::{tweedie_estimate, NoiseSchedule};
use fvd_core::engine::{self, ControllerConfig, Method, RunConfig, ScheduleConfig, TerminalMode};
use fvd_core::oracle::{
    distribution_mean, fv_survivor_count_distribution, multinomial_distinct_distribution,
    tilted_target, tv_distance, Grid,
};
use fvd_core::potentials::{expected_absorption, survival_probs, PotentialConfig};
use fvd_core::priors::GaussianMixture;
use fvd_core::resampling::{fv_death_draw, multinomial_resample};
use fvd_core::rewards::RewardSpec;
use fvd_core::rng::{stream, StreamKind};
use rand::Rng;

/// Two-mode prior used by the distribution-level criteria.
fn bimodal_prior() -> GaussianMixture {
    GaussianMixture::new(
        vec![0.5, 0.5],
        vec![vec![-2.0], vec![2.0]],
        vec![vec![0.25], vec![0.25]],
    )
    .unwrap()
}

/// Schedule with enough total noise that N(0, I) matches the terminal
/// marginal; the distribution criteria depend on that.
fn saturating_schedule(t_steps: usize) -> ScheduleConfig {
    match t_steps {
        200 => ScheduleConfig {
            t_steps: 200,
            beta_start: 5e-4,
            beta_end: 0.1,
        },
        100 => ScheduleConfig {
            t_steps: 100,
            beta_start: 1e-3,
            beta_end: 0.2,
        },
        _ => panic!("no saturating schedule preset for T = {t_steps}"),
    }
}

#[test]
fn criterion_01_enumerated_distinct_ancestor_means() {
    for k in 2..=6usize {
        let dist = multinomial_distinct_distribution(k).unwrap();
        let measured = distribution_mean(&dist);
        let kf = k as f64;
        let expected = kf * (1.0 - (1.0 - 1.0 / kf).powi(k as i32));
        let err = (measured - expected).abs();
        assert!(err < 1e-12, "K={k}: {measured} vs {expected}");
        println!("PASS criterion 1 (K={k}): measured={measured:.15} expected={expected:.15} tol=1e-12");
    }
}

#[test]
fn criterion_02_asymptotic_elimination_fraction() {
    let k = 1000usize;
    let log_weights = vec![0.0; k];
    let trials = 200;
    let mut acc = 0.0;
    for trial in 0..trials {
        let mut rng = stream(1000 + trial, StreamKind::Ancestor, 0, 0);
        let ancestors = multinomial_resample(&log_weights, &mut rng).unwrap();
        let mut hit = vec![false; k];
        for a in ancestors {
            hit[a] = true;
        }
        acc += hit.iter().filter(|h| !**h).count() as f64 / k as f64;
    }
    let measured = acc / trials as f64;
    let expected = (1.0 - 1.0 / k as f64).powi(k as i32);
    assert!(
        (measured - expected).abs() < 0.01,
        "measured {measured} vs {expected}"
    );
    println!("PASS criterion 2: measured={measured:.5} expected={expected:.5} tol=0.01");
}

#[test]
fn criterion_03_survivor_count_variance() {
    let k = 100usize;
    let trials = 100_000usize;
    for vec_idx in 0..20u64 {
        let mut gen = stream(2000 + vec_idx, StreamKind::Death, 0, 0);
        let surv: Vec<f64> = (0..k).map(|_| 0.05 + 0.95 * gen.random::<f64>()).collect();
        let expected_var: f64 = surv.iter().map(|s| s * (1.0 - s)).sum();

        // exact law: variance matches the formula and respects the K/4 bound
        let dist = fv_survivor_count_distribution(&surv).unwrap();
        let mean: f64 = dist.iter().enumerate().map(|(c, p)| c as f64 * p).sum();
        let second: f64 = dist.iter().enumerate().map(|(c, p)| (c * c) as f64 * p).sum();
        let exact_var = second - mean * mean;
        assert!((exact_var - expected_var).abs() < 1e-9);
        assert!(exact_var <= k as f64 / 4.0 + 1e-12);

        // empirical variance over independent draws
        let mut rng = stream(3000 + vec_idx, StreamKind::Death, 0, 0);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..trials {
            let alive = fv_death_draw(&surv, &mut rng)
                .unwrap()
                .iter()
                .filter(|d| !**d)
                .count() as f64;
            sum += alive;
            sum_sq += alive * alive;
        }
        let m = sum / trials as f64;
        let var = sum_sq / trials as f64 - m * m;
        let rel = (var - expected_var).abs() / expected_var;
        assert!(rel < 0.05, "vector {vec_idx}: rel err {rel}");
    }
    println!("PASS criterion 3: 20 survival vectors, empirical variance within 5%, exact variance <= K/4");
}

#[test]
fn criterion_04_absorption_monotonicity_and_bound() {
    let mut worst_violation = 0.0f64;
    for vec_idx in 0..100u64 {
        let mut gen = stream(4000 + vec_idx, StreamKind::Death, 0, 0);
        let k = 2 + (gen.random::<f64>() * 30.0) as usize;
        let rewards: Vec<f64> = (0..k).map(|_| -3.0 + 6.0 * gen.random::<f64>()).collect();
        let r_max = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let r_min = rewards.iter().copied().fold(f64::INFINITY, f64::min);
        let delta = r_max - r_min;
        let mut last = -1e-15;
        for i in 0..50 {
            let lambda = 0.2 * i as f64;
            let cfg = PotentialConfig::new(lambda, [1, 2, 3, 4]).unwrap();
            let a = expected_absorption(&cfg, &rewards).unwrap();
            assert!(a >= last - 1e-12, "monotonicity violated");
            let bound = 1.0 - (-cfg.strength_per_step() * delta).exp();
            assert!(a <= bound + 1e-12, "bound violated: {a} > {bound}");
            worst_violation = worst_violation.max(a - bound);
            last = a;
        }
        // zero spread kills the pressure exactly
        let flat = vec![1.23; k];
        let cfg = PotentialConfig::new(5.0, [1, 2, 3, 4]).unwrap();
        assert_eq!(expected_absorption(&cfg, &flat).unwrap(), 0.0);
    }
    println!("PASS criterion 4: nondecreasing over 50-point lambda grid x 100 reward vectors, bound slack >= {:-e}", -worst_violation);
}

#[test]
fn criterion_05_tilted_target_at_desk_scale() {
    let prior = bimodal_prior();
    let grid_spec = Grid::regular_1d(-12.37, 12.37, 256).unwrap();
    let reward = RewardSpec::Quadratic {
        target: vec![2.0],
        scale: 1.0,
    };
    let base = RunConfig {
        k: 20_000,
        schedule: saturating_schedule(200),
        prior: prior.clone(),
        reward: reward.clone(),
        lambda: 1.0,
        n_resample: Some(4),
        controller: ControllerConfig {
            enabled: false,
            ..Default::default()
        },
        terminal_mode: TerminalMode::TerminalCorrectionReweight,
        n_eval: 20_000,
        seed: 505,
        workers: 4,
        ..Default::default()
    };

    let report = engine::run_fvd(&base).unwrap();
    let target = tilted_target(&prior, &reward, 1.0, &grid_spec).unwrap();
    let selected: Vec<Vec<f64>> = report
        .selected
        .iter()
        .map(|&i| report.final_states[i].clone())
        .collect();
    let tv_guided = tv_distance(&selected, &target).unwrap();
    assert!(tv_guided <= 0.08, "guided TV = {tv_guided}");

    let control = RunConfig {
        lambda: 0.0,
        ..base
    };
    let report0 = engine::run_fvd(&control).unwrap();
    let target0 = tilted_target(&prior, &reward, 0.0, &grid_spec).unwrap();
    let selected0: Vec<Vec<f64>> = report0
        .selected
        .iter()
        .map(|&i| report0.final_states[i].clone())
        .collect();
    let tv_control = tv_distance(&selected0, &target0).unwrap();
    assert!(tv_control <= 0.05, "control TV = {tv_control}");

    println!("PASS criterion 5: guided TV={tv_guided:.4} (tol 0.08), unguided TV={tv_control:.4} (tol 0.05)");
}

#[test]
fn criterion_06_controller_closes_the_loop() {
    let k = 256usize;
    let barriers = 200usize;
    let alpha_star = 0.5;
    let mut state = ControllerState {
        alpha_star,
        ..ControllerState::new(1.0)
    };
    let mut gen = stream(606, StreamKind::Death, 0, 0);
    let mut alphas = Vec::with_capacity(barriers);
    for b in 0..barriers {
        let rewards: Vec<f64> = (0..k).map(|_| -gen.random::<f64>()).collect();
        let cfg = PotentialConfig::new(state.lambda, [1]).unwrap();
        let surv = survival_probs(&cfg, &rewards).unwrap();
        let mut death_rng = stream(607, StreamKind::Death, b, 0);
        let mask = fv_death_draw(&surv, &mut death_rng).unwrap();
        let alpha_t = mask.iter().filter(|d| **d).count() as f64 / k as f64;
        alphas.push(alpha_t);
        let log_g: Vec<f64> = rewards.iter().map(|r| cfg.strength_per_step() * r).collect();
        let mean = log_g.iter().sum::<f64>() / k as f64;
        let std = (log_g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k as f64).sqrt();
        state = state.rm_update(alpha_t, std);
        assert!(state.lambda >= state.lambda_min && state.lambda <= state.lambda_max);
    }
    let tail = &alphas[barriers - 40..];
    let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
    assert!(
        (tail_mean - alpha_star).abs() <= 0.05,
        "tail mean alpha = {tail_mean}"
    );
    println!("PASS criterion 6: tail mean alpha={tail_mean:.4} target={alpha_star} tol=0.05 (final lambda={:.3})", state.lambda);
}

#[test]
fn criterion_07_lineage_preservation_direction() {
    let classes = vec![
        GaussianMixture::single(vec![-2.0], vec![0.25]).unwrap(),
        GaussianMixture::single(vec![2.0], vec![0.25]).unwrap(),
    ];
    let prior = GaussianMixture::new(
        vec![0.5, 0.5],
        vec![vec![-2.0], vec![2.0]],
        vec![vec![0.25], vec![0.25]],
    )
    .unwrap();
    let reward = RewardSpec::ClassLogit {
        classes,
        class_priors: vec![0.5, 0.5],
        target_class: 1,
    };
    let base = RunConfig {
        k: 1000,
        schedule: saturating_schedule(100),
        prior,
        reward,
        lambda: 1.0,
        n_resample: Some(4),
        controller: ControllerConfig {
            enabled: false,
            ..Default::default()
        },
        n_eval: 1000,
        workers: 4,
        ..Default::default()
    };
    for seed in [11u64, 22, 33, 44, 55] {
        let fvd = engine::run_fvd(&RunConfig {
            seed,
            ..base.clone()
        })
        .unwrap();
        let smc = engine::run_smc_baseline(&RunConfig {
            seed,
            method: Method::SmcMultinomial,
            ..base.clone()
        })
        .unwrap();
        let fvd_lineages = fvd.metrics["final_lineages"];
        let smc_lineages = smc.metrics["final_lineages"];
        assert!(
            fvd_lineages > smc_lineages,
            "seed {seed}: lineages {fvd_lineages} vs {smc_lineages}"
        );
        let mean_rank = |report: &engine::RunReport| {
            let ranks: Vec<f64> = report
                .events
                .iter()
                .flat_map(|e| e.killed_ranks.iter().copied())
                .collect();
            ranks.iter().sum::<f64>() / ranks.len() as f64
        };
        let fvd_rank = mean_rank(&fvd);
        let smc_rank = mean_rank(&smc);
        assert!(
            fvd_rank < smc_rank,
            "seed {seed}: killed rank {fvd_rank} vs {smc_rank}"
        );
        println!(
            "PASS criterion 7 (seed {seed}): lineages {fvd_lineages} > {smc_lineages}, killed rank {fvd_rank:.3} < {smc_rank:.3}"
        );
    }
}

#[test]
fn criterion_08_rebirth_noise_ablation() {
    let prior = bimodal_prior();
    let reward = RewardSpec::Quadratic {
        target: vec![2.0],
        scale: 1.0,
    };
    let base = RunConfig {
        k: 4000,
        schedule: saturating_schedule(100),
        prior: prior.clone(),
        reward: reward.clone(),
        lambda: 1.0,
        n_resample: Some(4),
        controller: ControllerConfig {
            enabled: false,
            ..Default::default()
        },
        terminal_mode: TerminalMode::TerminalCorrectionReweight,
        n_eval: 4000,
        seed: 808,
        workers: 4,
        ..Default::default()
    };
    let grid = Grid::regular_1d(-12.37, 12.37, 256).unwrap();
    let target = tilted_target(&prior, &reward, 1.0, &grid).unwrap();
    let mut results = Vec::new();
    for eta in [0.0, 0.4] {
        let report = engine::run_fvd(&RunConfig {
            rebirth_eta: eta,
            ..base.clone()
        })
        .unwrap();
        let selected: Vec<Vec<f64>> = report
            .selected
            .iter()
            .map(|&i| report.final_states[i].clone())
            .collect();
        let diversity = pairwise_diversity(&selected[..2000]).unwrap();
        let tv = tv_distance(&selected, &target).unwrap();
        results.push((eta, diversity, tv));
    }
    let (d0, tv0) = (results[0].1, results[0].2);
    let (d4, tv4) = (results[1].1, results[1].2);
    assert!(d0 < d4, "diversity {d0} !< {d4}");
    assert!(tv0 > tv4, "tv {tv0} !> {tv4}");
    println!("PASS criterion 8: eta=0.0 diversity={d0:.4} tv={tv0:.4}; eta=0.4 diversity={d4:.4} tv={tv4:.4}");
}

#[test]
fn criterion_10_score_and_posterior_mean_consistency() {
    let gm = GaussianMixture::new(
        vec![0.4, 0.6],
        vec![vec![-1.0, 0.5], vec![1.5, -0.75]],
        vec![vec![0.5, 1.2], vec![0.8, 0.3]],
    )
    .unwrap();
    let sched = NoiseSchedule::linear(120, 1e-4, 0.05).unwrap();
    let mut rng = stream(1010, StreamKind::TargetSample, 0, 0);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let t = rng.random_range(1..=120);
        let marginal = gm.marginal_at_t(t, &sched).unwrap();
        let x = marginal.sample(&mut rng);
        let eps = gm.eps_prediction(&x, t, &sched).unwrap();
        let scale = (1.0 - sched.alpha_bar(t)).sqrt();
        let mut fd = vec![0.0; 2];
        for d in 0..2 {
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[d] += h;
            lo[d] -= h;
            fd[d] = -scale
                * (marginal.log_density(&hi).unwrap() - marginal.log_density(&lo).unwrap())
                / (2.0 * h);
        }
        let err: f64 = eps
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rel = err / norm.max(1.0);
        worst = worst.max(rel);
        assert!(rel <= 1e-5, "relative error {rel} at t={t}");
    }

    // posterior-mean route for a single Gaussian
    let (mu, v) = (0.8, 0.4);
    let single = GaussianMixture::single(vec![mu], vec![v]).unwrap();
    let mut worst_mean = 0.0f64;
    for _ in 0..100 {
        let t = rng.random_range(1..=120);
        let abar = sched.alpha_bar(t);
        let x_t: f64 = rng.random_range(-5.0..5.0);
        let eps = single.eps_prediction(&[x_t], t, &sched).unwrap();
        let est = tweedie_estimate(&[x_t], &eps, t, &sched).unwrap();
        let posterior = mu + abar.sqrt() * v / (abar * v + 1.0 - abar) * (x_t - abar.sqrt() * mu);
        let err = (est[0] - posterior).abs();
        worst_mean = worst_mean.max(err);
        assert!(err <= 1e-8, "posterior mean error {err} at t={t}");
    }
    println!("PASS criterion 10: worst score rel err={worst:.2e} (tol 1e-5), worst posterior-mean err={worst_mean:.2e} (tol 1e-8)");
}
