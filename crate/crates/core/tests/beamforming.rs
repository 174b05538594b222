use aircomp::linalg::{CMat, CVec};
use aircomp::mmse::*;
use aircomp::signal::{analytic_mse, BeamformingSolution, Scheme};
use aircomp::zf::{zf_beamformer, zf_design};
use aircomp::{sample_rician, ChannelSet, SystemConfig};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

fn draw(k: usize, nt: usize, snr: f64, seed: u64) -> (SystemConfig, ChannelSet) {
    let cfg = SystemConfig { devices: k, antennas: nt, dim: 1, seed, ..Default::default() }.with_snr_db(snr);
    let ch = sample_rician(&cfg, 0).unwrap();
    (cfg, ch)
}

#[test]
fn zf_beam_is_minimum_norm_solution() {
    let (_, ch) = draw(4, 6, 10.0, 3);
    let hk = ch.device_matrix(1).unwrap();
    let p = zf_beamformer(&hk, 2.0).unwrap();
    let gram = hk.adjoint() * &hk;
    let proj = &hk * gram.try_inverse().unwrap() * hk.adjoint();
    let eye = CMat::identity(6, 6);
    let mut rng = aircomp::rng::substream(0, aircomp::rng::Domain::Probe, 0, 0);
    for _ in 0..50 {
        let v = CVec::from_fn(6, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let q = &p + (&eye - &proj) * v;
        let resid = hk.adjoint() * &q - CVec::from_element(3, Complex64::new(2f64.sqrt(), 0.0));
        assert!(resid.norm() < 1e-9);
        assert!(p.norm() <= q.norm() + 1e-12);
    }
}

#[test]
fn conditional_eta_is_a_local_minimum() {
    for seed in 0..10 {
        let (cfg, ch) = draw(3, 3, 5.0, seed);
        let sol = mmse_design(&ch, 1.0, cfg.noise_var, &BisectionConfig::default()).unwrap();
        let eta = conditional_eta(&ch, &sol.beams, cfg.noise_var).unwrap();
        let at = |e: f64| analytic_mse(&ch, &BeamformingSolution::new(Scheme::Mmse, sol.beams.clone(), e), cfg.noise_var, 1.0, 1);
        let base = at(eta);
        assert!(at(eta * 1.001) >= base && at(eta * 0.999) >= base);
    }
}

#[test]
fn min_power_grows_with_alpha() {
    let cfg_b = BisectionConfig::default();
    for seed in 0..3 {
        let (cfg, ch) = draw(3, 3, 10.0, seed);
        let sup = alpha_supremum(&ch).unwrap();
        let mut rng = aircomp::rng::substream(seed, aircomp::rng::Domain::Probe, 1, 0);
        for _ in 0..20 {
            let a: f64 = rng.random_range(0.01..0.99) * sup;
            let b: f64 = rng.random_range(0.01..0.99) * sup;
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let plo = solve_power_min(&ch, lo, cfg.noise_var, &cfg_b).unwrap().p_max;
            let phi = solve_power_min(&ch, hi, cfg.noise_var, &cfg_b).unwrap().p_max;
            assert!(plo <= phi * (1.0 + 1e-6), "p({lo}) = {plo} > p({hi}) = {phi}");
        }
    }
}

#[test]
fn mmse_meets_zf_without_noise() {
    for seed in 0..5 {
        let (_, ch) = draw(4, 4, 0.0, seed);
        let sigma2 = 1e-9;
        let m = mmse_design(&ch, 1.0, sigma2, &BisectionConfig::default()).unwrap();
        let z = zf_design(&ch, 1.0).unwrap();
        let (em, ez) = (analytic_mse(&ch, &m, sigma2, 1.0, 1), analytic_mse(&ch, &z, sigma2, 1.0, 1));
        assert!(((em - ez) / ez).abs() <= 1e-4, "{em} vs {ez}");
    }
}

#[test]
fn partial_power_devices_use_the_centroid() {
    let mut seen = 0;
    for seed in 0..20 {
        let (cfg, ch) = draw(4, 3, 5.0, seed);
        let sol = mmse_design(&ch, 1.0, cfg.noise_var, &BisectionConfig::default()).unwrap();
        let powers = sol.powers();
        assert!(powers.iter().any(|&p| p >= 1.0 - 1e-4));
        for (k, &p) in powers.iter().enumerate() {
            if p < 1.0 - 1e-3 {
                let dir = centroid_direction(&ch.device_matrix(k).unwrap(), CentroidMode::Partial, 0.0).unwrap();
                assert!(cosine(&sol.beams[k], &dir) >= 1.0 - 1e-4);
                seen += 1;
            }
        }
    }
    assert!(seen > 0, "no partial-power device in the sample");
}

#[test]
fn kkt_detects_perturbation() {
    let (cfg, ch) = draw(3, 3, 10.0, 4);
    let sol = mmse_design(&ch, 1.0, cfg.noise_var, &BisectionConfig::default()).unwrap();
    let alpha = sol.alpha.unwrap();
    let good = kkt_residuals(&ch, &sol.beams, alpha, cfg.noise_var);
    assert!(good.stationarity_residual.iter().all(|&r| r <= 1e-4));
    assert!(good.complementary_slackness <= 1e-6);
    let scaled: Vec<CVec> = sol.beams.iter().enumerate().map(|(k, p)| if k == 0 { p * Complex64::new(0.9, 0.0) } else { p.clone() }).collect();
    let bad = kkt_residuals(&ch, &scaled, alpha, cfg.noise_var);
    assert!(bad.stationarity_residual.iter().copied().fold(0.0, f64::max) > 1e-3);
}

#[test]
fn oracle_dominates_zf() {
    for seed in 0..4 {
        let (cfg, ch) = draw(2, 2, 5.0, seed);
        let grid = brute_force_mmse(&ch, 1.0, cfg.noise_var, 1e-2).unwrap();
        let z = zf_design(&ch, 1.0).unwrap();
        let eo = analytic_mse(&ch, &grid, cfg.noise_var, 1.0, 1);
        assert!(analytic_mse(&ch, &z, cfg.noise_var, 1.0, 1) >= eo * (1.0 - 0.01));
    }
}
