use aircomp::mmse::BisectionConfig;
use aircomp::optim::*;
use aircomp::rng::{substream, Domain};
use aircomp::signal::{
    compute_stats, distortion, draw_noise, normalize, peer_averages, received_complex, Scheme,
};
use aircomp::zf::zf_design;
use aircomp::{sample_rician, SystemConfig};
use nalgebra::DVector;

fn quadratic(k: usize, d: usize, spread: f64, seed: u64) -> Task {
    let spec = TaskSpec { heterogeneous: spread > 0.0, target_spread: spread, ..TaskSpec::new(TaskKind::QuadraticConsensus, k, d) };
    make_task(&spec, &mut substream(seed, Domain::Task, 0, 0)).unwrap()
}

#[test]
fn noiseless_gap_stays_under_bound_and_shrinks() {
    let task = quadratic(4, 3, 0.0, 11);
    let mix = peer_uniform(4, 0.5).unwrap();
    let mut cfg = RunConfig::new(1000, 0.5, 0);
    cfg.record_every = 10;
    let tr = run(&task, &mix, &Transport::ideal(), &cfg).unwrap();
    for r in &tr.rows {
        assert!(r.gap <= r.bound_zf, "round {} gap {} bound {}", r.round, r.gap, r.bound_zf);
    }
    let g = tr.mean_gap_by_round();
    let at = |n| g.iter().find(|x| x.0 == n).unwrap().1;
    assert!(at(10) > at(100) && at(100) > at(1000));
}

#[test]
fn noiseless_zf_reproduces_ideal() {
    let task = quadratic(4, 5, 1.0, 3);
    let mix = peer_uniform(4, 0.5).unwrap();
    let system = SystemConfig { devices: 4, antennas: 6, dim: 5, ..Default::default() };
    let zf = Transport::AirComp { scheme: Scheme::Zf, system, sigma2: 0.0, bisection: BisectionConfig::loose() };
    let cfg = RunConfig::new(300, 0.5, 0);
    let a = run(&task, &mix, &Transport::ideal(), &cfg).unwrap();
    let b = run(&task, &mix, &zf, &cfg).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!((x.round, x.device), (y.round, y.device));
        assert!((x.gap - y.gap).abs() <= 1e-8, "round {}: {} vs {}", x.round, x.gap, y.gap);
    }
}

#[test]
fn ridge_run_approaches_normal_equation_solution() {
    // the iterate lags the moving dual optimum by O(1/sqrt(n)), so the
    // distance to x* should roughly halve per fourfold horizon
    let spec = TaskSpec { batch: 25, ..TaskSpec::new(TaskKind::RidgeRegression, 4, 3) };
    let task = make_task(&spec, &mut substream(5, Domain::Task, 0, 0)).unwrap();
    let mix = peer_uniform(4, 0.5).unwrap();
    let err = |n: usize| {
        let mut cfg = RunConfig::new(n, 0.5, 1);
        cfg.record_every = n;
        let tr = run(&task, &mix, &Transport::ideal(), &cfg).unwrap();
        tr.states.iter().map(|s| (&s.x - &task.x_star).norm()).fold(0.0, f64::max)
    };
    let (e1, e2) = (err(16_000), err(64_000));
    assert!(e2 < 0.6 * e1, "{e1} -> {e2}");
    assert!(e2 < 0.15 * task.x_star.norm());
}

#[test]
fn heterogeneous_quadratic_has_client_drift() {
    let task = quadratic(5, 4, 1.0, 8);
    let drift = (0..5).map(|k| task.gradient(k, &task.x_star).norm()).fold(0.0, f64::max);
    assert!(drift > 0.1);
}

#[test]
fn average_dual_identity_under_aircomp() {
    let k = 4;
    let system = SystemConfig { devices: k, antennas: 5, dim: 3, ..Default::default() }.with_snr_db(5.0);
    let agg = Transport::aircomp(Scheme::Mmse, &system);
    let z: Vec<DVector<f64>> = (0..k).map(|i| DVector::from_fn(3, |j, _| (i as f64 - 1.5) * (j as f64 + 0.5))).collect();
    let g: Vec<DVector<f64>> = (0..k).map(|i| DVector::from_element(3, 0.1 * i as f64)).collect();
    let out = agg.aggregate(3, &z).unwrap();
    let beta = 0.3;
    let next = dual_update(&z, &out.received, &g, beta).unwrap();
    let avg = |v: &[DVector<f64>]| v.iter().fold(DVector::zeros(3), |a, x| a + x) / k as f64;
    let truth = peer_averages(&z);
    let ghat: Vec<DVector<f64>> = (0..k).map(|i| &g[i] + (&out.received[i] - &truth[i]) * beta).collect();
    assert!((avg(&next) - (avg(&z) + avg(&ghat))).norm() <= 1e-10);
}

#[test]
fn one_round_matches_distortion_decomposition() {
    // every aligned gain is sqrt(eta) under ZF, so both indexings coincide
    let k = 3;
    let cfg = SystemConfig { devices: k, antennas: 3, dim: 2, ..Default::default() };
    let ch = sample_rician(&cfg, 0).unwrap();
    let sol = zf_design(&ch, 1.0).unwrap();
    let z: Vec<DVector<f64>> = (0..k).map(|i| DVector::from_vec(vec![i as f64, 2.0 - i as f64])).collect();
    let stats = compute_stats(&z).unwrap();
    let s: Vec<_> = z.iter().map(|v| normalize(v, stats)).collect();
    let noise = draw_noise(k, 2, cfg.noise_var, stats.std, sol.eta, &mut substream(0, Domain::Noise, 0, 0));
    let r = received_complex(&ch, &sol, &s, stats, &noise).unwrap();
    let delta = distortion(&ch, &sol, &s, stats.std, &noise).unwrap();
    let truth = peer_averages(&z);
    let beta = 0.5;
    let g = vec![DVector::from_element(2, 0.25); k];
    let next = dual_update(&z, &r.iter().map(|v| v.map(|c| c.re)).collect::<Vec<_>>(), &g, beta).unwrap();
    for i in 0..k {
        let ghat = &g[i] + delta[i].map(|c| c.re) * beta;
        let expect = &z[i] * (1.0 - beta) + &truth[i] * beta + ghat;
        assert!((&next[i] - expect).norm() < 1e-10);
    }
}

#[test]
fn distorted_gradient_second_moment_within_xi() {
    let k = 4;
    let task = quadratic(k, 3, 1.0, 2);
    let system = SystemConfig { devices: k, antennas: 6, dim: 3, ..Default::default() }.with_snr_db(10.0);
    let agg = Transport::aircomp(Scheme::Zf, &system);
    let beta = 0.5;
    let x = DVector::from_element(3, 0.2);
    let z: Vec<DVector<f64>> = (0..k).map(|i| DVector::from_fn(3, |j, _| (i + j) as f64 * 0.7 - 1.0)).collect();
    let truth = peer_averages(&z);
    let trials = 10_000;
    let mut samples = Vec::with_capacity(trials);
    let mut max_mse = 0.0f64;
    for t in 0..trials as u64 {
        let out = agg.aggregate(t, &z).unwrap();
        max_mse = max_mse.max(out.mse);
        let mut rng = substream(0, Domain::Gradient, t, 0);
        let mut total = 0.0;
        for i in 0..k {
            let g = task.stochastic_gradient(i, &x, &mut rng) + (&out.received[i] - &truth[i]) * beta;
            total += g.norm_squared();
        }
        samples.push(total / k as f64);
    }
    let (m, se) = aircomp::signal::mean_and_se(&samples);
    let bound = xi(task.omega, beta, max_mse, k);
    assert!(m <= bound * bound + 4.0 * se, "{m} vs {}", bound * bound);
}

#[test]
fn dual_deviation_under_lemma_bound() {
    let k = 5;
    let task = quadratic(k, 4, 1.0, 4);
    let mix = peer_uniform(k, 0.5).unwrap();
    let system = SystemConfig { devices: k, antennas: 8, dim: 4, ..Default::default() }.with_snr_db(0.0);
    let tr = run(&task, &mix, &Transport::aircomp(Scheme::Zf, &system), &RunConfig::new(200, 0.5, 0)).unwrap();
    let max_mse = tr.mse.iter().copied().fold(0.0, f64::max);
    let x = xi(task.omega, 0.5, max_mse, k);
    for (i, devs) in tr.deviations.iter().enumerate().skip(1) {
        let b = dual_deviation_bound(x, 0.5, mix.lambda2, i + 1, k).unwrap();
        assert!(devs.iter().all(|&d| d <= b));
    }
}

#[test]
fn aggregation_failure_reports_round() {
    let task = quadratic(3, 2, 0.0, 0);
    let mix = peer_uniform(3, 0.5).unwrap();
    let system = SystemConfig { devices: 4, antennas: 4, dim: 2, ..Default::default() };
    let err = run(&task, &mix, &Transport::aircomp(Scheme::Zf, &system), &RunConfig::new(5, 0.5, 0)).unwrap_err();
    assert!(matches!(err, aircomp::Error::Aggregation { round: 1, .. }));
}

#[test]
fn zf_mse_equals_noise_only_term() {
    let cfg = SystemConfig { devices: 3, antennas: 4, dim: 2, ..Default::default() };
    let ch = sample_rician(&cfg, 1).unwrap();
    let sol = zf_design(&ch, 1.0).unwrap();
    let mse = aircomp::signal::analytic_mse(&ch, &sol, cfg.noise_var, 2.0, 2);
    assert!((mse - 3.0 * 2.0 * 4.0 * cfg.noise_var / (4.0 * sol.eta)).abs() < 1e-12);
}
