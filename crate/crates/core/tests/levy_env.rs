use cblre::levy::{
    sample_path, sample_path_seeded, EnvironmentPath, JumpComponent, JumpLaw, LevyTriplet, Side, Variant,
};
use cblre::mc::{stream_accumulate, SeedStream};
use proptest::prelude::*;

fn cp(rate: f64, law: JumpLaw) -> JumpComponent {
    JumpComponent::compound_poisson(rate, law).unwrap()
}

#[test]
fn make_environment_brownian_k() {
    let t = LevyTriplet::make_environment(0.0, 1.0, vec![], Variant::K, Some(0.0)).unwrap();
    assert_eq!(t.drift, -0.5);
}

#[test]
fn make_environment_zero() {
    let t = LevyTriplet::make_environment(0.0, 0.0, vec![], Variant::K0, None).unwrap();
    assert_eq!(t.drift, 0.0);
    assert!(t.is_deterministic());
    let p = sample_path_seeded(&t, 1.0, 0.1, 3).unwrap();
    assert!(p.values().iter().all(|v| *v == 0.0));
}

#[test]
fn make_environment_unit_jumps_are_uncompensated() {
    let t = LevyTriplet::make_environment(1.0, 0.0, vec![cp(1.0, JumpLaw::Atom(1.0))], Variant::K0, None).unwrap();
    // no mass inside (-1, 1), so the exponential correction vanishes
    assert_eq!(t.compensated_drift(), 1.0);
    assert_eq!(t.drift, 1.0);
    // an atom just inside the open interval gets the closed-form correction
    let inside = LevyTriplet::make_environment(1.0, 0.0, vec![cp(1.0, JumpLaw::Atom(0.5))], Variant::K0, None).unwrap();
    let correction = 0.5f64.exp() - 1.0 - 0.5;
    assert!((inside.compensated_drift() - (1.0 - correction)).abs() < 1e-12);
}

#[test]
fn deterministic_path() {
    let t = LevyTriplet::brownian(1.0, 0.0, Variant::K).unwrap();
    let p = sample_path_seeded(&t, 2.0, 0.01, 1).unwrap();
    assert_eq!(p.terminal(), 2.0);
    assert_eq!(p.jump_events().count(), 0);
}

#[test]
fn brownian_mean() {
    let t = LevyTriplet::brownian(0.0, 1.0, Variant::K).unwrap();
    let seeds = SeedStream::new(11);
    let n = 100_000;
    let est =
        stream_accumulate((0..n).map(|i| sample_path(&t, 1.0, 1.0, &mut seeds.rng("t", i, 0)).unwrap().terminal()))
            .unwrap();
    assert!(est.mean.abs() <= 3.0 / (n as f64).sqrt(), "{}", est.mean);
}

#[test]
fn poisson_jump_count() {
    let t = LevyTriplet::new(0.0, 0.0, vec![cp(2.0, JumpLaw::Atom(-1.0))], Variant::K).unwrap();
    let seeds = SeedStream::new(12);
    let n = 100_000;
    let est = stream_accumulate(
        (0..n).map(|i| sample_path(&t, 1.0, 1.0, &mut seeds.rng("t", i, 0)).unwrap().jump_events().count() as f64),
    )
    .unwrap();
    let se = (2.0 / n as f64).sqrt();
    assert!((est.mean - 2.0).abs() <= 3.0 * se, "{} vs 2", est.mean);
}

#[test]
fn exponents_brownian() {
    let t = LevyTriplet::brownian(-1.0, 1.0, Variant::K).unwrap();
    let (psi, psi_hat) = t.laplace_exponents();
    assert!((psi_hat(2.0).unwrap() - 4.0).abs() < 1e-12);
    assert_eq!(psi(0.0).unwrap(), 0.0);
}

#[test]
fn exponent_of_unit_jumps() {
    let t = LevyTriplet::new(0.0, 0.0, vec![cp(1.0, JumpLaw::Atom(1.0))], Variant::K).unwrap();
    let e = std::f64::consts::E;
    assert!((t.psi(1.0).unwrap() - (e - 1.0)).abs() < 1e-12);
    assert_eq!(t.psi(0.0).unwrap(), 0.0);
    let seeds = SeedStream::new(13);
    let est = stream_accumulate(
        (0..100_000).map(|i| sample_path(&t, 1.0, 1.0, &mut seeds.rng("t", i, 0)).unwrap().terminal().exp()),
    )
    .unwrap();
    assert!(est.z_score((e - 1.0).exp()) <= 4.0, "{:?}", est);
}

#[test]
fn kappa_roots() {
    let t = LevyTriplet::brownian(-1.0, 1.0, Variant::K).unwrap();
    assert!((t.esscher_kappa(1.0).unwrap() - (3f64.sqrt() - 1.0)).abs() < 1e-10);
    assert_eq!(t.esscher_kappa(0.0).unwrap(), 0.0);
    let t = LevyTriplet::brownian(-2.0, 1.0, Variant::K).unwrap();
    assert!((t.esscher_kappa(2.0).unwrap() - (-2.0 + 8f64.sqrt())).abs() < 1e-10);
}

#[test]
fn tilts() {
    let t = LevyTriplet::new(0.3, 0.7, vec![cp(1.0, JumpLaw::Normal { mean: 0.1, sd: 0.2 })], Variant::K).unwrap();
    let same = t.esscher_tilt(0.0).unwrap();
    assert_eq!(same.drift, t.drift);
    assert_eq!(same.sigma, t.sigma);
    for q in [-1.0, 0.5, 2.0] {
        assert!((same.psi(q).unwrap() - t.psi(q).unwrap()).abs() < 1e-12);
    }

    let b = LevyTriplet::brownian(-1.0, 1.0, Variant::K).unwrap().esscher_tilt(1.0).unwrap();
    assert_eq!(b.drift, -2.0);
    assert_eq!(b.sigma, 1.0);

    let e =
        LevyTriplet::new(0.0, 0.0, vec![cp(1.0, JumpLaw::Exponential { mean: 1.0, side: Side::Positive })], Variant::K)
            .unwrap()
            .esscher_tilt(0.5)
            .unwrap();
    match &e.jumps[0] {
        JumpComponent::CompoundPoisson { rate, law: JumpLaw::Exponential { mean, side: Side::Positive } } => {
            assert!((rate - 2.0 / 3.0).abs() < 1e-12);
            assert!((mean - 2.0 / 3.0).abs() < 1e-12);
        }
        other => panic!("unexpected tilted component {other:?}"),
    }
}

#[test]
fn exp_functional_examples() {
    let p = EnvironmentPath::linear(1.0, 1.0, 0.01, Variant::K).unwrap();
    assert!((p.exp_functional(true) - (std::f64::consts::E - 1.0)).abs() < 1e-12);
    let p = EnvironmentPath::linear(0.0, 3.0, 0.01, Variant::K).unwrap();
    assert!((p.exp_functional(true) - 3.0).abs() < 1e-12);
    let p = EnvironmentPath::linear(-2.0, 20.0, 0.01, Variant::K).unwrap();
    assert!((p.exp_functional(true) - 0.5).abs() < 1e-6);
}

#[test]
fn sample_moments() {
    let triplets = [
        LevyTriplet::new(0.2, 0.5, vec![cp(1.5, JumpLaw::Normal { mean: 0.3, sd: 0.4 })], Variant::K).unwrap(),
        LevyTriplet::new(
            -0.4,
            0.1,
            vec![cp(0.7, JumpLaw::Exponential { mean: 0.8, side: Side::Negative })],
            Variant::K0,
        )
        .unwrap(),
        LevyTriplet::new(0.0, 0.3, vec![cp(2.0, JumpLaw::Atom(1.0)), cp(1.0, JumpLaw::Atom(-0.5))], Variant::K)
            .unwrap(),
    ];
    let n = 100_000;
    for (j, t) in triplets.iter().enumerate() {
        let seeds = SeedStream::new(20 + j as u64);
        let draws: Vec<f64> =
            (0..n).map(|i| sample_path(t, 1.0, 0.5, &mut seeds.rng("t", i, 0)).unwrap().terminal()).collect();
        let mean = stream_accumulate(draws.iter().copied()).unwrap();
        let m = mean.mean;
        let squares = stream_accumulate(draws.iter().map(|x| (x - m) * (x - m))).unwrap();
        // independent oracle from the component definitions
        let mut exp_mean = t.path_drift();
        let mut exp_var = t.sigma * t.sigma;
        for c in &t.jumps {
            if let JumpComponent::CompoundPoisson { rate, law } = c {
                exp_mean += rate * law.mean();
                exp_var += rate * law.second_moment();
            }
        }
        assert!(mean.z_score(exp_mean) <= 4.0, "triplet {j}: mean {} vs {exp_mean}", mean.mean);
        assert!(squares.z_score(exp_var) <= 4.0, "triplet {j}: var {} vs {exp_var}", squares.mean);
    }
}

fn triplet_strategy() -> impl Strategy<Value = LevyTriplet> {
    (-1.0..1.0f64, 0.0..1.0f64, 0.1..3.0f64, -0.5..0.5f64, 0.05..0.5f64).prop_map(|(d, s, r, m, sd)| {
        LevyTriplet::new(d, s, vec![cp(r, JumpLaw::Normal { mean: m, sd })], Variant::K).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exponents_are_convex(t in triplet_strategy(), q in -3.0..3.0f64) {
        let h = 1e-2;
        let (psi, psi_hat) = t.laplace_exponents();
        for f in [&psi as &dyn Fn(f64) -> cblre::Result<f64>, &psi_hat] {
            let d2 = (f(q + h).unwrap() - 2.0 * f(q).unwrap() + f(q - h).unwrap()) / (h * h);
            prop_assert!(d2 >= -1e-8, "second difference {d2} at {q}");
        }
    }

    #[test]
    fn kappa_inverts_psi_hat(d in -2.0..-0.1f64, s in 0.1..1.5f64, r in 0.0..2.0f64, lambda in 0.0..5.0f64) {
        let jumps = if r > 0.05 { vec![cp(r, JumpLaw::Exponential { mean: 0.5, side: Side::Positive })] } else { vec![] };
        let t = LevyTriplet::new(d - r * 0.5, s, jumps, Variant::K).unwrap();
        let k = t.esscher_kappa(lambda).unwrap();
        prop_assert!((t.psi_hat(k).unwrap() - lambda).abs() <= 1e-10 * (1.0 + lambda));
    }

    #[test]
    fn exp_functional_splits(slope in -2.0..2.0f64, horizon in 1.0..5.0f64, frac in 0.1..0.9f64) {
        let dt = 0.01;
        let p = EnvironmentPath::linear(slope, horizon, dt, Variant::K).unwrap();
        let split = (frac * horizon / dt).round() * dt;
        let head = p.truncate(split).unwrap();
        let tail = EnvironmentPath::linear(slope, horizon - split, dt, Variant::K).unwrap();
        let joined = head.exp_functional(true) + (slope * split).exp() * tail.exp_functional(true);
        prop_assert!((p.exp_functional(true) - joined).abs() <= 1e-10 * p.exp_functional(true));
    }

    #[test]
    fn paths_are_reproducible(t in triplet_strategy(), seed in any::<u64>()) {
        let a = sample_path_seeded(&t, 2.0, 0.05, seed).unwrap();
        let b = sample_path_seeded(&t, 2.0, 0.05, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.values()[0], 0.0);
        prop_assert!(a.times().windows(2).all(|w| w[1] > w[0]));
        let r = a.recompute_terminal();
        prop_assert!((r - a.terminal()).abs() <= 1e-12 * (1.0 + a.terminal().abs()));
    }
}
