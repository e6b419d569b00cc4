use cycling_core::coefficients::{ModelSpec, PeriodicFunction};
use cycling_core::exec::Mode;
use cycling_core::montecarlo::{estimate_psi_minus, ks_margin, plus_leg_ks, SimConfig, Simulator};
use cycling_core::numerics::PeriodicSamples;
use cycling_core::theory::{self, Theory};
use cycling_core::variances as var;
use cycling_core::volterra::{model_table, solve_table, ModelLeg};

fn reference(sigma: f64) -> ModelSpec {
    let a = PeriodicFunction::constant(1.0, 1.0).unwrap();
    let g = PeriodicFunction::from_arrays(1.0, 1.8, &[0.36], &[]).unwrap();
    ModelSpec::new(a, g, 0.5, 0.75, sigma).unwrap()
}

#[test]
fn volterra_minus_leg_matches_closed_form() {
    let spec = reference(0.1);
    let n = 4000;
    let h = 6.0 / n as f64;
    let sol = solve_table(&model_table(&spec, ModelLeg::Minus, 0.0, h, n)).unwrap();
    for t in [2.1, 3.2, 4.15, 5.3] {
        let i = (t / h).round() as usize;
        let closed = theory::psi_minus(&spec, sol.times[i]);
        assert!((sol.psi[i] / closed - 1.0).abs() < 0.05, "t = {t}: {} vs {closed}", sol.psi[i]);
    }
}

#[test]
fn psi_minus_peaks_near_v_minus_maximum() {
    let spec = reference(0.15);
    let samples = PeriodicSamples::new(|t| var::v_per_minus(&spec, t), 1.0, 1024);
    let t_max = samples.time(samples.argmax());
    let vals: Vec<f64> = (0..1024).map(|i| theory::psi_minus(&spec, 6.0 + i as f64 / 1024.0)).collect();
    let peak = (0..1024).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap() as f64 / 1024.0;
    let d = (peak - t_max).rem_euclid(1.0);
    assert!(d.min(1.0 - d) < 0.05, "peak {peak} vs argmax {t_max}");
}

#[test]
fn simulated_first_up_times_peak_near_v_minus_maximum() {
    let spec = reference(0.25);
    let cfg = SimConfig { n_paths: 100_000, t_max_periods: 6, seed: 3, ..SimConfig::default() };
    let outcomes = Simulator::new(&spec, &cfg).simulate();
    let width = 1.0 / 16.0;
    let grid = estimate_psi_minus(&outcomes, width, 6.0);
    let mass: f64 = grid.values.iter().sum::<f64>() * width;
    assert!(mass <= 1.0);
    // Fold the later periods over phase to locate the peak.
    let mut folded = [0.0; 16];
    for (t, v) in grid.times.iter().zip(&grid.values) {
        if *t > 2.0 {
            folded[((t.rem_euclid(1.0)) / width) as usize] += v;
        }
    }
    let peak_bin = (0..16).max_by(|&a, &b| folded[a].total_cmp(&folded[b])).unwrap() as i64;
    let samples = PeriodicSamples::new(|t| var::v_per_minus(&spec, t), 1.0, 1024);
    let expected = (samples.time(samples.argmax()) / width) as i64;
    let diff = (peak_bin - expected).rem_euclid(16);
    assert!(diff <= 1 || diff >= 15, "peak bin {peak_bin}, expected {expected}");
}

#[test]
fn plus_leg_matches_reflection_law() {
    let spec = reference(0.3);
    let cfg = SimConfig { n_paths: 20_000, t_max_periods: 3, seed: 11, ..SimConfig::default() };
    let sim = Simulator::new(&spec, &cfg);
    let start = 8;
    let s = start as f64 * sim.tables.h;
    let ks = plus_leg_ks(&sim, start, |t| theory::crossing_cdf_plus(&spec, t, s));
    assert!(ks <= ks_margin(cfg.n_paths, 0.01), "KS {ks}");
}

#[test]
fn laplace_prefactor_recurs_under_sigma_shift() {
    let th = Theory::new(reference(0.02)).unwrap();
    let lt = th.rate.lambda_t();
    let shifted = th.at_sigma(0.02 * (-lt).exp());
    for i in 0..16 {
        let t = 40.0 + i as f64 / 16.0;
        let a = theory::laplace_prefactor(&th, t).unwrap() / th.spec.sigma;
        let b = theory::laplace_prefactor(&shifted, t + 1.0).unwrap() / shifted.spec.sigma;
        assert!((a / b - 1.0).abs() < 1e-4, "t = {t}: {a} vs {b}");
    }
}

#[test]
fn metastable_and_laplace_agree_at_small_noise() {
    let th = Theory::new(reference(0.02)).unwrap();
    for i in 0..16 {
        let t = 40.0 + i as f64 / 16.0;
        let m = theory::metastable_prefactor(&th, t).unwrap();
        let l = theory::laplace_prefactor(&th, t).unwrap();
        assert!((m.value / l - 1.0).abs() < 0.05, "t = {t}");
    }
}

#[test]
fn peak_cycles_with_log_sigma() {
    let th = Theory::new(reference(0.3)).unwrap();
    let lt = th.rate.lambda_t();
    let argmax = |model: &Theory, from: f64| {
        (0..512)
            .map(|i| from + i as f64 / 512.0)
            .map(|t| (t, theory::metastable_leading_term(model, t) / model.spec.sigma))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0
    };
    let t1 = argmax(&th, 20.0);
    let t2 = argmax(&th.at_sigma(0.3 * (-lt).exp()), 21.0);
    assert!((t2 - t1 - 1.0).abs() <= 1.0 / 512.0 + 1e-12);
}

#[test]
fn theory_curve_modes_agree() {
    let th = Theory::new(reference(0.3)).unwrap();
    let times: Vec<f64> = (0..200).map(|i| 0.05 * i as f64).collect();
    let a = theory::theory_curve(&th, &times, Mode::Sequential);
    let b = theory::theory_curve(&th, &times, Mode::Parallel);
    assert_eq!(a, b);
    assert_eq!(a[0].regime, theory::Regime::Transient);
    assert!(a.iter().any(|p| p.laplace.is_some()));
}
