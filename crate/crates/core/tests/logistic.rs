use cblre::levy::{sample_path, sample_path_seeded, EnvironmentPath, JumpComponent, JumpLaw, LevyTriplet, Variant};
use cblre::logistic::{
    exact_solution, first_passage_laplace, stationary_moment, time_average, LogisticConfig, PassageConfig,
};
use cblre::mc::SeedStream;
use cblre::sde::simulate_seeded;
use cblre::Error;

#[test]
fn fixed_point_is_constant() {
    let path = EnvironmentPath::linear(1.0, 5.0, 1e-2, Variant::K).unwrap();
    let z = exact_solution(&path, 1.0, 1.0).unwrap();
    assert!(z.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn flat_environment_decays_harmonically() {
    let path = EnvironmentPath::linear(0.0, 1.0, 1e-2, Variant::K).unwrap();
    let z = exact_solution(&path, 1.0, 1.0).unwrap();
    assert!((z.terminal().value - 0.5).abs() < 1e-12);
    for (t, v) in z.times.iter().zip(&z.values) {
        assert!((v - 1.0 / (1.0 + t)).abs() < 1e-12);
    }
}

#[test]
fn euler_tracks_exact_solution() {
    let a = 0.5;
    let dt = 1e-3;
    let env = LevyTriplet::new(
        a,
        0.4,
        vec![JumpComponent::compound_poisson(1.0, JumpLaw::Normal { mean: 0.0, sd: 0.2 }).unwrap()],
        Variant::K,
    )
    .unwrap();
    let lc = LogisticConfig { z0: 1.0, a, k: 1.0, env, horizon: 5.0, dt };
    let cfg = lc.to_cblre().unwrap();
    let env_s = lc.env_s().unwrap();
    for seed in 0..10 {
        let path = sample_path_seeded(&env_s, lc.horizon, dt, seed).unwrap();
        let exact = exact_solution(&path.to_variant(Variant::K, -a).unwrap(), lc.z0, lc.k).unwrap();
        let euler = simulate_seeded(&cfg, &path, seed).unwrap();
        assert_eq!(euler.times, exact.times);
        let sup = euler.values.iter().zip(&exact.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(sup <= 5e-2, "seed {seed}: sup error {sup}");
    }
}

#[test]
fn stationary_moment_examples() {
    let env = LevyTriplet::brownian(0.5, 0.4, Variant::K).unwrap();
    assert!((stationary_moment(&env, 1.0, 1).unwrap() - 0.5).abs() < 1e-12);
    // ψ_K(1) = 0.5 + 0.4²/2
    assert!((stationary_moment(&env, 1.0, 2).unwrap() - 0.29).abs() < 1e-12);
    assert!((stationary_moment(&env, 2.0, 1).unwrap() - 0.25).abs() < 1e-12);
    let falling = LevyTriplet::brownian(-0.5, 0.4, Variant::K).unwrap();
    assert!(matches!(stationary_moment(&falling, 1.0, 1), Err(Error::InvalidParameter { .. })));
}

#[test]
fn time_average_examples() {
    let path = EnvironmentPath::linear(1.0, 10.0, 1e-2, Variant::K).unwrap();
    assert!((time_average(&path, 1.0, 1.0).unwrap() - 1.0).abs() <= std::f64::consts::LN_2 / 10.0);
    for t in [10.0, 100.0, 1000.0] {
        let flat = EnvironmentPath::linear(0.0, t, 1e-1, Variant::K).unwrap();
        let avg = time_average(&flat, 1.0, 1.0).unwrap();
        assert!((avg - (1.0 + t).ln() / t).abs() < 1e-10, "t = {t}");
    }
}

#[test]
fn drift_identity_on_deterministic_path() {
    let (c, k, z0) = (0.7, 2.0, 0.1);
    let sup_residual = |h: f64| {
        let path = EnvironmentPath::linear(c, 4.0, h, Variant::K).unwrap();
        let z = exact_solution(&path, z0, k).unwrap().values;
        (1..z.len() - 1).map(|i| ((z[i + 1] - z[i - 1]) / (2.0 * h) - z[i] * (c - k * z[i])).abs()).fold(0.0, f64::max)
    };
    let coarse = sup_residual(2e-2);
    let fine = sup_residual(1e-2);
    assert!(coarse < 1e-3, "{coarse}");
    assert!(coarse / fine > 3.5 && coarse / fine < 4.5, "ratio {}", coarse / fine);
}

#[test]
fn running_minimum_median_decreases() {
    let env = LevyTriplet::brownian(0.0, 1.0, Variant::K).unwrap();
    let mut medians = Vec::new();
    for (tag, t) in [10.0, 20.0, 40.0].into_iter().enumerate() {
        let seeds = SeedStream::new(40 + tag as u64);
        let mut minima: Vec<f64> = (0..500)
            .map(|i| {
                let path = sample_path(&env, t, 1e-2, &mut seeds.rng("env", i, 0)).unwrap();
                exact_solution(&path, 1.0, 1.0).unwrap().values.into_iter().fold(f64::INFINITY, f64::min)
            })
            .collect();
        minima.sort_by(f64::total_cmp);
        medians.push(0.5 * (minima[249] + minima[250]));
    }
    assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
}

#[test]
fn passage_deterministic_path() {
    let det = LevyTriplet::brownian(-1.0, 0.0, Variant::K).unwrap();
    let cfg = PassageConfig { n_formula: 4, n_direct: 4, ..Default::default() };
    let r = first_passage_laplace(2.0, 1.0, 2.0, 1.0, &det, &cfg).unwrap();
    assert!((r.kappa - 2.0).abs() < 1e-10);
    assert!((r.formula.mean - 9.0 / 16.0).abs() < 1e-10, "{:?}", r.formula);
    assert!((r.direct.mean - 9.0 / 16.0).abs() < 1e-6, "{:?}", r.direct);
}

#[test]
fn passage_from_the_barrier() {
    let det = LevyTriplet::brownian(-1.0, 0.0, Variant::K).unwrap();
    let cfg = PassageConfig { n_formula: 4, n_direct: 4, ..Default::default() };
    let r = first_passage_laplace(1.5, 1.5, 2.0, 1.0, &det, &cfg).unwrap();
    assert_eq!(r.direct.mean, 1.0);
    assert!((r.formula.mean - 1.0).abs() < 1e-12);
}

#[test]
fn passage_needs_kappa_above_one() {
    let det = LevyTriplet::brownian(-1.0, 0.0, Variant::K).unwrap();
    let cfg = PassageConfig { n_formula: 4, n_direct: 4, ..Default::default() };
    assert!(matches!(first_passage_laplace(2.0, 1.0, 0.0, 1.0, &det, &cfg), Err(Error::InvalidParameter { .. })));
}

#[test]
fn passage_estimators_agree_with_diffusion() {
    let env = LevyTriplet::brownian(-2.0, 0.5, Variant::K).unwrap();
    // the Brownian part can cross b inside a grid cell, so the direct estimate needs a fine grid
    let cfg = PassageConfig { n_formula: 2000, n_direct: 2000, dt: 1e-3, seed: 11, ..Default::default() };
    let r = first_passage_laplace(3.0, 1.0, 3.0, 0.5, &env, &cfg).unwrap();
    assert!(r.kappa > 1.0);
    assert!(r.z_score().abs() <= 3.0, "{r:?}");
    assert_eq!(r.unresolved, 0);
}
