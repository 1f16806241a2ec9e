use std::collections::HashSet;

use cblre::mc::{pooled_conditional, stream_accumulate, Accumulator, SeedStream};
use cblre::Error;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn stream_examples() {
    let e = stream_accumulate([1.0, 1.0, 1.0]).unwrap();
    assert_eq!((e.mean, e.se, e.n), (1.0, 0.0, 3));
    let e = stream_accumulate([0.0, 2.0]).unwrap();
    assert_eq!((e.mean, e.se), (1.0, 1.0));
    let (lo, hi) = e.ci95();
    assert!((lo + 0.96).abs() < 1e-12 && (hi - 2.96).abs() < 1e-12);
    assert!(matches!(stream_accumulate([3.0]), Err(Error::InsufficientSamples { .. })));
}

#[test]
fn uniform_mean() {
    let mut rng = SeedStream::new(1).rng("uniform", 0, 0);
    let e = stream_accumulate((0..1_000_000).map(|_| rng.random::<f64>())).unwrap();
    let tol = 4.0 / 12f64.sqrt() / 1e3;
    assert!((e.mean - 0.5).abs() <= tol, "{}", e.mean);
    assert!((e.se - 1.0 / 12f64.sqrt() / 1e3).abs() < 1e-5);
}

#[test]
fn stable_for_large_offsets() {
    // naive sum-of-squares loses all digits here
    let e = stream_accumulate((0..1000).map(|i| 1e9 + (i % 2) as f64)).unwrap();
    let sd = e.se * 1000f64.sqrt();
    assert!((sd - (0.25f64 * 1000.0 / 999.0).sqrt()).abs() < 1e-9, "{sd}");
}

fn acc(values: &[f64]) -> Accumulator {
    values.iter().copied().collect()
}

#[test]
fn pooled_examples() {
    let same = [acc(&[1.0, 2.0, 3.0]), acc(&[1.0, 2.0, 3.0])];
    let p = pooled_conditional(&same).unwrap();
    assert!((p.estimate.mean - 2.0).abs() < 1e-15);
    assert_eq!(p.between_variance, 0.0);
    assert!((p.within_variance - 2.0 / 3.0).abs() < 1e-15);

    let p = pooled_conditional(&[acc(&[0.0, 0.0]), acc(&[2.0, 2.0])]).unwrap();
    assert_eq!(p.estimate.mean, 1.0);
    assert_eq!(p.between_variance, 1.0);
    assert_eq!(p.within_variance, 0.0);
    assert_eq!(p.n_env, 2);

    assert!(matches!(pooled_conditional(&[acc(&[1.0, 2.0])]), Err(Error::InsufficientSamples { .. })));
    assert!(pooled_conditional(&[]).is_err());
}

#[test]
fn pooled_matches_single_pass() {
    let seeds = SeedStream::new(2);
    let mut per_env = Vec::new();
    let mut flat = Vec::new();
    for i in 0..50 {
        let mut rng = seeds.rng("pool", i, 0);
        let level = Normal::new(0.0, 1.0).unwrap().sample(&mut rng);
        let draws: Vec<f64> = (0..100 + i as usize).map(|_| level + rng.random::<f64>()).collect();
        per_env.push(acc(&draws));
        flat.extend(draws);
    }
    let p = pooled_conditional(&per_env).unwrap();
    let n = flat.len() as f64;
    let mean = flat.iter().sum::<f64>() / n;
    let var = flat.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    assert!((p.estimate.mean - mean).abs() < 1e-12);
    assert!((p.total_variance() - var).abs() < 1e-12);
    assert_eq!(p.estimate.n, flat.len() as u64);
}

#[test]
fn seed_streams_do_not_collide() {
    let seeds = SeedStream::new(3);
    let mut first = HashSet::with_capacity(1_000_000);
    for env in 0..1000 {
        for rep in 0..1000 {
            assert!(first.insert(seeds.rng("branch", env, rep).random::<u64>()), "({env}, {rep})");
        }
    }
    let mut a = seeds.rng("branch", 7, 9);
    let mut b = seeds.rng("branch", 7, 9);
    assert_eq!(a.random::<u64>(), b.random::<u64>());
    assert_ne!(seeds.rng("env", 7, 9).random::<u64>(), seeds.rng("branch", 7, 9).random::<u64>());
}

fn merged(parts: &[&Accumulator]) -> Accumulator {
    let mut out = Accumulator::new();
    for p in parts {
        out.merge(p);
    }
    out
}

proptest! {
    #[test]
    fn merge_is_associative_and_commutative(
        xs in prop::collection::vec(-1e3..1e3f64, 0..40),
        ys in prop::collection::vec(-1e3..1e3f64, 0..40),
        zs in prop::collection::vec(-1e3..1e3f64, 0..40),
    ) {
        let (a, b, c) = (acc(&xs), acc(&ys), acc(&zs));
        let left = merged(&[&merged(&[&a, &b]), &c]);
        let right = merged(&[&a, &merged(&[&b, &c])]);
        let swapped = merged(&[&c, &b, &a]);
        let all: Vec<f64> = xs.iter().chain(&ys).chain(&zs).copied().collect();
        let single = acc(&all);
        for m in [&left, &right, &swapped] {
            prop_assert_eq!(m.count(), single.count());
            if single.count() > 0 {
                prop_assert!((m.mean() - single.mean()).abs() <= 1e-12 * (1.0 + single.mean().abs()));
            }
            if single.count() > 1 {
                let v = single.sample_variance();
                prop_assert!((m.sample_variance() - v).abs() <= 1e-12 * (1.0 + v));
            }
        }
    }
}
