//! Pathwise and ensemble checks of the integrator against exact solutions
//! and the qualitative predictions for each model family.

use shockrep_core::analysis::{
    detect_extinction, extinction_fraction, hitting_probability_closed_form, hitting_probability_mc, martingale_check,
    quadratic_decay_fit, stability_probability, survival_probability,
};
use shockrep_core::dynamics::{
    field_aggregate, field_bimatrix, field_explearn, field_mutation, field_second_order, field_srd,
};
use shockrep_core::engine::{pathwise_deviation, EnsembleOptions};
use shockrep_core::modified::{adjust_bimatrix, adjust_mutation};
use shockrep_core::rng::Refined;
use shockrep_core::{
    integrate, simulate_ensemble, Dominance, Dynamics, GameSpec, IntegratorConfig, MixedStrategy, NoiseModel,
    NoiseStream, PopulationState, Scheme,
};

fn state(v: &[f64]) -> PopulationState {
    PopulationState::from_blocks(vec![v.to_vec()]).unwrap()
}

fn constant(v: &[f64]) -> GameSpec {
    GameSpec::constant(vec![v.to_vec()]).unwrap()
}

fn sigma(s: &[f64]) -> NoiseModel {
    NoiseModel::per_strategy(vec![s.to_vec()]).unwrap()
}

/// Mean RMS deviation from the closed form over `paths` paths, the coarse
/// run seeing the fine run's increments summed in blocks of `factor`.
fn mean_rms(field: &shockrep_core::DynamicsField, dt: f64, factor: u64, paths: u64) -> f64 {
    let x0 = state(&[0.5, 0.5]);
    let cfg = IntegratorConfig::new(dt, 5.0);
    (0..paths)
        .map(|p| {
            let mut noise = Refined::new(NoiseStream::new(17, p), factor);
            pathwise_deviation(field, &x0, &cfg, &mut noise).unwrap().rms
        })
        .sum::<f64>()
        / paths as f64
}

#[test]
fn exponential_learning_converges_with_strong_order_one_half() {
    let f = field_explearn(&constant(&[0.0, 0.0]), &sigma(&[1.0, 1.0])).unwrap();
    let coarse = mean_rms(&f, 1e-3, 10, 16);
    let fine = mean_rms(&f, 1e-4, 1, 16);
    let ratio = coarse / fine;
    assert!((2.0..=5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn aggregate_shocks_deviation_shrinks_with_dt() {
    let f = field_aggregate(&constant(&[0.0, 0.0]), &sigma(&[1.0, 0.5])).unwrap();
    let e: Vec<f64> = [(1e-2, 100), (1e-3, 10), (1e-4, 1)]
        .iter()
        .map(|&(dt, factor)| mean_rms(&f, dt, factor, 8))
        .collect();
    assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
}

#[test]
fn zero_noise_deviation_is_truncation_error_only() {
    let f = field_explearn(&constant(&[0.0, 0.0]), &sigma(&[0.0, 0.0])).unwrap();
    let r = pathwise_deviation(
        &f,
        &state(&[0.3, 0.7]),
        &IntegratorConfig::new(1e-3, 1.0),
        &mut NoiseStream::new(1, 0),
    )
    .unwrap();
    assert!(r.max <= 1e-15);
}

#[test]
fn share_and_log_share_schemes_agree_as_dt_shrinks() {
    let g = GameSpec::matrix(vec![vec![0.0, 1.0], vec![0.5, 0.2]]).unwrap();
    let d: Dynamics = field_srd(&g, &sigma(&[0.8, 0.4])).unwrap().into();
    let x0 = state(&[0.4, 0.6]);
    let gap = |dt: f64, factor: u64| {
        (0..16)
            .map(|p| {
                let cfg = IntegratorConfig::new(dt, 2.0);
                let a = integrate(&d, &x0, &cfg, &mut Refined::new(NoiseStream::new(5, p), factor)).unwrap();
                let cfg = cfg.with_scheme(Scheme::LogY);
                let b = integrate(&d, &x0, &cfg, &mut Refined::new(NoiseStream::new(5, p), factor)).unwrap();
                (a.terminal()[0] - b.terminal()[0]).abs()
            })
            .sum::<f64>()
    };
    let (coarse, fine) = (gap(1e-2, 10), gap(1e-3, 1));
    assert!(coarse >= 2.0 * fine, "{coarse} vs {fine}");
}

#[test]
fn second_order_autonomous_and_integral_forms_agree() {
    let g = GameSpec::matrix(vec![vec![0.0, 1.0], vec![0.5, 0.2]]).unwrap();
    let d: Dynamics = field_second_order(&g, &sigma(&[0.5, 0.3])).unwrap().into();
    let x0 = state(&[0.4, 0.6]);
    let run = |scheme, dt, factor| {
        let cfg = IntegratorConfig::new(dt, 3.0).with_scheme(scheme);
        integrate(&d, &x0, &cfg, &mut Refined::new(NoiseStream::new(8, 0), factor)).unwrap()
    };
    let gap = |dt, factor| {
        let a = run(Scheme::EulerX, dt, factor);
        let b = run(Scheme::LogY, dt, factor);
        (a.terminal()[0] - b.terminal()[0]).abs()
    };
    let (coarse, fine) = (gap(1e-2, 10), gap(1e-3, 1));
    assert!(fine < 1e-2, "{fine}");
    assert!(fine < coarse, "{coarse} vs {fine}");
    let b = run(Scheme::LogY, 1e-3, 1);
    let rec = b.second_order.as_ref().unwrap();
    for v in &rec.velocity {
        assert!(v.iter().sum::<f64>().abs() < 1e-12);
    }
}

fn pure_noise_ensemble(paths: u64, horizon: f64) -> shockrep_core::EnsembleResult {
    let d: Dynamics = field_srd(&constant(&[1.0, 1.0]), &sigma(&[1.0, 1.0])).unwrap().into();
    let opts = EnsembleOptions {
        observe_times: vec![1.0],
        ..Default::default()
    };
    simulate_ensemble(
        &d,
        &state(&[0.3, 0.7]),
        &IntegratorConfig::new(1e-2, horizon),
        4,
        paths,
        &opts,
    )
    .unwrap()
}

#[test]
fn pure_noise_shares_are_martingales() {
    let e = pure_noise_ensemble(2000, 5.0);
    let m = martingale_check(&e, 0, 1.0).unwrap();
    assert!(m.z.abs() < 4.0, "{m:?}");
    let m = martingale_check(&e, 0, 5.0).unwrap();
    assert!(m.z.abs() < 4.0, "{m:?}");
    assert_eq!(martingale_check(&e, 0, 0.0).unwrap().z, 0.0);
}

#[test]
fn frozen_dynamics_have_zero_z_and_full_survival() {
    let d: Dynamics = field_srd(&constant(&[1.0, 1.0]), &sigma(&[0.0, 0.0])).unwrap().into();
    let opts = EnsembleOptions {
        observe_times: vec![1.0],
        ..Default::default()
    };
    let e = simulate_ensemble(&d, &state(&[0.3, 0.7]), &IntegratorConfig::new(1e-2, 2.0), 1, 50, &opts).unwrap();
    assert_eq!(martingale_check(&e, 0, 1.0).unwrap().z, 0.0);
    for i in 0..2 {
        assert_eq!(survival_probability(&e, i, 1e-4).unwrap().estimate, 1.0);
    }
}

#[test]
fn aggregate_shocks_eliminate_the_noisier_strategy() {
    let d: Dynamics = field_aggregate(&constant(&[0.0, 0.0]), &sigma(&[1.0, 0.1]))
        .unwrap()
        .into();
    let e = simulate_ensemble(
        &d,
        &state(&[0.5, 0.5]),
        &IntegratorConfig::new(1e-2, 100.0),
        2,
        200,
        &Default::default(),
    )
    .unwrap();
    let s = survival_probability(&e, 0, 1e-3).unwrap();
    assert!(s.estimate <= 0.02, "{s:?}");
}

#[test]
fn dominated_strategy_goes_extinct_on_a_sampled_path() {
    let d: Dynamics = field_srd(&constant(&[0.0, 1.0]), &sigma(&[0.5, 0.5])).unwrap().into();
    let t = integrate(
        &d,
        &state(&[0.5, 0.5]),
        &IntegratorConfig::new(1e-2, 100.0),
        &mut NoiseStream::new(3, 0),
    )
    .unwrap();
    let p = MixedStrategy::pure(0, 2, 0).unwrap();
    let r = detect_extinction(&t, &p, 1e-4).unwrap();
    assert!(r.extinct, "{r:?}");
    assert!(r.first_crossing.is_some());
}

#[test]
fn deterministic_quadratic_decay_has_slope_minus_half() {
    let d: Dynamics = field_second_order(&constant(&[0.0, 1.0]), &sigma(&[0.0, 0.0]))
        .unwrap()
        .into();
    let x0 = state(&[0.5, 0.5]);
    let slope = |horizon| {
        let cfg = IntegratorConfig::new(1e-3, horizon)
            .with_scheme(Scheme::LogY)
            .with_stride(10);
        let t = integrate(&d, &x0, &cfg, &mut NoiseStream::new(0, 0)).unwrap();
        quadratic_decay_fit(&t, 0, 1).unwrap().slope
    };
    let (short, long) = (slope(2.0), slope(10.0));
    // With no noise, ln(x_α/x_β) = −t²/2 exactly; only the Euler error remains.
    assert!((long + 0.5).abs() < 1e-3, "{long}");
    assert!((long + 0.5).abs() <= (short + 0.5).abs() + 1e-12, "{short} {long}");
}

#[test]
fn symmetric_rest_has_zero_slope() {
    let d: Dynamics = field_second_order(&constant(&[1.0, 1.0]), &sigma(&[0.0, 0.0]))
        .unwrap()
        .into();
    let cfg = IntegratorConfig::new(1e-2, 5.0).with_scheme(Scheme::LogY);
    let t = integrate(&d, &state(&[0.5, 0.5]), &cfg, &mut NoiseStream::new(0, 0)).unwrap();
    assert_eq!(quadratic_decay_fit(&t, 0, 1).unwrap().slope, 0.0);
}

#[test]
fn strict_equilibrium_is_stable_without_noise() {
    let d: Dynamics = field_srd(&constant(&[1.0, 0.0]), &sigma(&[0.0, 0.0])).unwrap().into();
    let target = vec![1.0, 0.0];
    let opts = EnsembleOptions {
        reference: Some(target.clone()),
        ..Default::default()
    };
    let e = simulate_ensemble(
        &d,
        &state(&[0.9, 0.1]),
        &IntegratorConfig::new(1e-2, 20.0),
        0,
        20,
        &opts,
    )
    .unwrap();
    let s = stability_probability(&e, &target, 0.5, 1e-3).unwrap();
    assert_eq!(s.staying.estimate, 1.0);
    assert_eq!(s.converging.estimate, 1.0);
}

#[test]
fn strict_equilibrium_attracts_under_srd() {
    let d: Dynamics = field_srd(&constant(&[1.0, 0.0]), &sigma(&[0.5, 0.5])).unwrap().into();
    let target = vec![1.0, 0.0];
    let opts = EnsembleOptions {
        reference: Some(target.clone()),
        ..Default::default()
    };
    let e = simulate_ensemble(
        &d,
        &state(&[0.99, 0.01]),
        &IntegratorConfig::new(1e-2, 50.0),
        6,
        300,
        &opts,
    )
    .unwrap();
    let s = stability_probability(&e, &target, 0.5, 1e-3).unwrap();
    assert!(s.converging.estimate >= 0.9, "{s:?}");
    assert!(s.converging.estimate <= s.staying.estimate);
}

#[test]
fn second_order_dynamics_do_not_converge_to_non_nash_states() {
    // e_α is strict in the noise-adjusted game for large σ, but the
    // second-order model only settles on equilibria of the original game.
    let d: Dynamics = field_second_order(&constant(&[1.0, 1.3]), &sigma(&[0.5, 0.5]))
        .unwrap()
        .into();
    let target = vec![1.0, 0.0];
    let opts = EnsembleOptions {
        reference: Some(target.clone()),
        ..Default::default()
    };
    let cfg = IntegratorConfig::new(1e-2, 100.0).with_scheme(Scheme::LogY);
    let e = simulate_ensemble(&d, &state(&[0.99, 0.01]), &cfg, 12, 200, &opts).unwrap();
    let s = stability_probability(&e, &target, 0.5, 1e-3).unwrap();
    assert!(s.converging.estimate <= 0.02, "{s:?}");
    assert!(extinction_fraction(&e, 0, 1e-4).unwrap().estimate >= 0.95);
}

#[test]
fn mutation_noise_eliminates_a_dominated_strategy_of_the_adjusted_game() {
    let g = constant(&[0.0, 1.0]);
    let eta = NoiseModel::mutation(g.layout(), vec![1.0]).unwrap();
    let adjusted = adjust_mutation(&g, &eta).unwrap();
    let p = MixedStrategy::pure(0, 2, 0).unwrap();
    let q = MixedStrategy::pure(0, 2, 1).unwrap();
    assert_eq!(adjusted.check_dominance(&p, &q).unwrap(), Dominance::Dominated);
    let d: Dynamics = field_mutation(&g, &eta).unwrap().into();
    let e = simulate_ensemble(
        &d,
        &state(&[0.5, 0.5]),
        &IntegratorConfig::new(1e-2, 40.0),
        7,
        100,
        &Default::default(),
    )
    .unwrap();
    assert!(extinction_fraction(&e, 0, 1e-4).unwrap().estimate >= 0.95);
}

#[test]
fn bimatrix_noise_eliminates_a_dominated_strategy_of_the_adjusted_game() {
    let g = GameSpec::matrix(vec![vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
    let noise = NoiseModel::matrix_entry(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    let adjusted = adjust_bimatrix(&g, &noise).unwrap();
    let p = MixedStrategy::pure(0, 2, 0).unwrap();
    let q = MixedStrategy::pure(0, 2, 1).unwrap();
    assert_eq!(adjusted.check_dominance(&p, &q).unwrap(), Dominance::Dominated);
    let d: Dynamics = field_bimatrix(&g, &noise).unwrap().into();
    let e = simulate_ensemble(
        &d,
        &state(&[0.5, 0.5]),
        &IntegratorConfig::new(1e-2, 40.0),
        8,
        100,
        &Default::default(),
    )
    .unwrap();
    assert!(extinction_fraction(&e, 0, 1e-4).unwrap().estimate >= 0.95);
}

#[test]
fn ensembles_do_not_depend_on_the_thread_count() {
    let g = GameSpec::matrix(vec![vec![0.0, 1.0], vec![0.5, 0.2]]).unwrap();
    let d: Dynamics = field_srd(&g, &sigma(&[1.0, 0.7])).unwrap().into();
    let x0 = state(&[0.4, 0.6]);
    let cfg = IntegratorConfig::new(1e-2, 5.0);
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_ensemble(&d, &x0, &cfg, 21, 64, &Default::default()).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn hitting_estimates_never_exceed_the_closed_form() {
    for (a, b) in [(1.0, 1.0), (0.5, 2.0), (-1.0, -1.0), (2.0, 0.25)] {
        let h = hitting_probability_mc(a, b, 40.0, 4000, 1e-2, 3).unwrap();
        assert!(h.estimate.estimate <= h.closed_form + h.estimate.half_width(), "{h:?}");
        assert!(h.grid_only.successes <= h.estimate.successes);
    }
    let down = hitting_probability_mc(1.0, -0.5, 40.0, 1000, 1e-2, 3).unwrap();
    assert!(down.estimate.estimate >= 0.99);
    assert_eq!(hitting_probability_closed_form(1.0, -0.5), 1.0);
}

#[test]
fn hitting_estimate_matches_closed_form_for_a_shallow_barrier() {
    let h = hitting_probability_mc(2.0, 0.25, 400.0, 20_000, 1e-2, 11).unwrap();
    let exact = (-1.0f64).exp();
    assert!((h.estimate.estimate - exact).abs() <= 0.01, "{h:?}");
}
