use approx::assert_abs_diff_eq;
use decoding_lab::oracle::{
    local_temperature_grid, reverse_kl, reverse_kl_probs, tv_distance, verify_proposition1, verify_proposition2,
};
use decoding_lab::rng::Streams;
use decoding_lab::{Table, TokenSequence};
use proptest::prelude::*;

fn table(probs: &[f64]) -> Table {
    Table::new(
        probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (TokenSequence::new(vec![i]), p))
            .collect(),
    )
    .unwrap()
}

#[test]
fn distance_examples() {
    let p = table(&[0.5763, 0.4237]);
    assert_abs_diff_eq!(tv_distance(&p, &table(&[0.5, 0.5])), 0.0763, epsilon = 1e-12);
    assert_eq!(tv_distance(&p, &p), 0.0);
    let disjoint = Table::new(vec![(TokenSequence::new(vec![7]), 1.0)]).unwrap();
    assert_eq!(tv_distance(&p, &disjoint), 1.0);
    assert_abs_diff_eq!(reverse_kl(&table(&[1.0, 0.0]), &table(&[0.5, 0.5])).unwrap(), 2f64.ln(), epsilon = 1e-15);
    assert!(reverse_kl(&table(&[0.5, 0.5]), &table(&[1.0, 0.0])).is_err());
}

#[test]
fn tables_must_normalize_and_be_unique() {
    assert!(Table::new(vec![(TokenSequence::new(vec![0]), 0.5)]).is_err());
    let dup = vec![(TokenSequence::new(vec![0]), 0.5), (TokenSequence::new(vec![0]), 0.5)];
    assert!(Table::new(dup).is_err());
}

#[test]
fn grid_is_log_spaced_and_contains_one() {
    let g = local_temperature_grid(33);
    assert_eq!(g.len(), 33);
    assert_abs_diff_eq!(g[0], 0.01, epsilon = 1e-15);
    assert_abs_diff_eq!(g[32], 100.0, epsilon = 1e-9);
    assert_abs_diff_eq!(g[16], 1.0, epsilon = 1e-15);
}

#[test]
fn proposition2_default() {
    let r = verify_proposition2(0.5).unwrap();
    assert!(r.passed, "{:#?}", r.checks);
    assert!((r.branch_masses[0] - 0.5763).abs() <= 1e-4);
    assert!((r.branch_masses[1] - 0.4237).abs() <= 1e-4);
    assert!(r.min_tv > 0.07);
    assert_eq!(r.profiles, 33 * 33);
    assert_eq!(r.local_root_mass_range, [0.5, 0.5]);
}

#[test]
fn proposition2_at_unit_temperature_has_exact_match() {
    let r = verify_proposition2(1.0).unwrap();
    assert!(r.passed);
    assert!(r.min_tv < 1e-12);
}

#[test]
fn proposition1_small_run() {
    let r = verify_proposition1(20, 4, 200, &Streams::new(3)).unwrap();
    assert!(r.passed, "{:#?}", r.checks);
    assert!(r.max_residual <= 1e-9);
    assert!(verify_proposition1(1, 1, 10, &Streams::new(3)).is_err());
}

fn simplex() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.001f64..1.0, 4).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #[test]
    fn tv_is_a_metric(a in simplex(), b in simplex(), c in simplex()) {
        let (a, b, c) = (table(&a), table(&b), table(&c));
        let ab = tv_distance(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - tv_distance(&b, &a)).abs() < 1e-15);
        prop_assert!(tv_distance(&a, &c) <= ab + tv_distance(&b, &c) + 1e-12);
    }

    #[test]
    fn reverse_kl_is_nonnegative(q in simplex(), p in simplex()) {
        prop_assert!(reverse_kl_probs(&q, &p).unwrap() >= -1e-12);
        prop_assert!(reverse_kl_probs(&p, &p).unwrap().abs() < 1e-12);
    }
}
