mod common;

use common::*;
use ne_invariant::bench::instance_seed;
use ne_invariant::game::{generate_instance, oracle_nash, validate_game};
use ne_invariant::rng;
use ne_invariant::GameKind;

#[test]
fn library_oracle_matches_elimination() {
    for k in [1, 2, 5, 10, 20, 40] {
        for kind in [GameKind::ZeroSum, GameKind::Coordination] {
            for i in 0..10 {
                let s = generate_instance(k, kind, 1.0, instance_seed(7, k, i)).unwrap();
                let ne = oracle_nash(&s).unwrap();
                let (xs, ys) = nash(&game(&s)).unwrap();
                assert!(rel_err(&to_vec(&ne.x_star), &xs) < 1e-10, "k={k} {kind}");
                assert!(rel_err(&to_vec(&ne.y_star), &ys) < 1e-10, "k={k} {kind}");
            }
        }
    }
}

#[test]
fn zero_sum_payoffs_cancel() {
    for i in 0..100 {
        let k = 1 + i % 12;
        let s = generate_instance(k, GameKind::ZeroSum, 1.0, instance_seed(9, k, i)).unwrap();
        let g = game(&s);
        let mut r = rng::init_stream(i as u64, 3);
        let x = to_vec(&rng::uniform_vector(&mut r, k, -3.0, 3.0));
        let y = to_vec(&rng::uniform_vector(&mut r, k, -3.0, 3.0));
        let p1 = dot(&x, &matvec(&g.a, &y));
        let p2 = dot(&y, &matvec(&to_rows(&s.b_matrix()), &x));
        assert!((p1 + p2).abs() <= 1e-12 * (1.0 + p1.abs()), "pair {i}: {p1} vs {p2}");
    }
}

#[test]
fn nash_gradients_vanish() {
    for kind in [GameKind::ZeroSum, GameKind::Coordination] {
        let s = generate_instance(8, kind, 1.0, 5).unwrap();
        let ne = oracle_nash(&s).unwrap();
        assert!(s.grad1(&ne.y_star).amax() < 1e-12);
        assert!(s.grad2(&ne.x_star).amax() < 1e-12);
    }
}

#[test]
fn validation_agrees_with_independent_determinant() {
    for i in 0..20 {
        let k = 2 + i % 6;
        let s = generate_instance(k, GameKind::ZeroSum, 1.0, instance_seed(13, k, i)).unwrap();
        let v = validate_game(&s).unwrap();
        assert!(v.nonsingular);
        assert!(log10_abs_det(&to_rows(&s.a)).is_finite());
        let sv = s.a.clone().singular_values();
        assert!((v.spectral_norm - sv.max()).abs() <= 1e-12 * sv.max());
    }
}
