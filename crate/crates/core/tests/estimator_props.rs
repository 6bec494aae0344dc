use std::sync::OnceLock;

use coinmax_core::estimators::{
    aeme_solve, mle_nodes, mmle_nodes, seme_nodes, AemeResult, SolverConfig,
};
use coinmax_core::penalty::{eval_sq_penalty, sup_norm_abs, unit_grid, NodeSet};
use proptest::prelude::*;

fn solved() -> &'static Vec<AemeResult> {
    static CACHE: OnceLock<Vec<AemeResult>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let cfg = SolverConfig::default();
        (1..=20).map(|n| aeme_solve(n, &cfg).unwrap()).collect()
    })
}

#[test]
fn equimax_and_ordering_up_to_twenty() {
    for (i, res) in solved().iter().enumerate() {
        let n = i + 1;
        let a = res.nodes.nodes();
        assert!(res.converged && res.equimax_residual <= 1e-10, "n={n}");
        assert!(res.nodes.is_strictly_increasing());
        assert!(a[0] > 0.0 && a[n] < 1.0);
        assert!(a[0] <= 0.5 && a[n] >= 0.5);
        for k in 0..=n {
            assert_eq!(a[k] + a[n - k], 1.0, "n={n} k={k}");
        }
        let pts = &res.maxima.points;
        assert!(pts.iter().any(|&p| p < a[0]) && pts.iter().any(|&p| p > a[n]));
        let clearance = a
            .iter()
            .flat_map(|x| pts.iter().map(move |p| (x - p).abs()))
            .fold(f64::INFINITY, f64::min);
        assert!(clearance > 1e-6, "n={n} clearance {clearance}");
    }
}

#[test]
fn dominance_over_closed_forms() {
    for (i, res) in solved().iter().enumerate() {
        let n = i + 1;
        for rival in [mle_nodes(n), mmle_nodes(n), seme_nodes(n)] {
            assert!(
                res.sup_norm <= sup_norm_abs(&rival).unwrap() + 1e-9,
                "n={n}"
            );
        }
    }
}

#[test]
fn optimum_is_monotone_in_n() {
    let sups: Vec<f64> = solved().iter().map(|r| r.sup_norm).collect();
    for w in sups.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{sups:?}");
    }
}

#[test]
fn two_toss_node_bounds() {
    let a = solved()[1].nodes.nodes();
    assert!(0.0 < a[0] && a[0] < 0.2);
    assert!(0.4 < a[1] && a[1] < 0.6);
    assert!(0.8 < a[2] && a[2] < 1.0);
    assert!(a[1] - a[0] < 0.4 && a[2] - a[1] < 0.4);
    assert!((solved()[1].sup_norm - a[0]).abs() < 1e-12);
}

#[test]
fn five_toss_comparison() {
    let aeme = solved()[4].sup_norm;
    let seme = sup_norm_abs(&seme_nodes(5)).unwrap();
    let mle = sup_norm_abs(&mle_nodes(5)).unwrap();
    assert!((aeme - 0.131).abs() <= 5e-4, "{aeme}");
    assert!((seme - 0.1545).abs() <= 5e-4, "{seme}");
    assert!(aeme < seme && seme < mle);
}

#[test]
fn seme_risk_is_flat() {
    let grid = unit_grid(10_001);
    for n in 1..=30 {
        let ns = seme_nodes(n);
        let values: Vec<f64> = grid.iter().map(|&p| eval_sq_penalty(&ns, p)).collect();
        let hi = values.iter().copied().fold(f64::MIN, f64::max);
        let lo = values.iter().copied().fold(f64::MAX, f64::min);
        // p = 0 leaves only the a_0^2 term, with a_0 = 1 / (2 (1 + sqrt n))
        let want = 0.25 / (1.0 + (n as f64).sqrt()).powi(2);
        assert!(hi - lo <= 1e-10, "n={n} spread {}", hi - lo);
        assert!((values[0] - want).abs() <= 1e-12);
    }
}

#[test]
fn mle_decay_bound() {
    for n in 1..=100 {
        let s = sup_norm_abs(&mle_nodes(n)).unwrap();
        assert!(s <= 0.5 / (n as f64).sqrt() + 1e-12, "n={n} sup {s}");
    }
    assert!(sup_norm_abs(&mle_nodes(100)).unwrap() <= 0.05);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_nodes_never_beat_optimum(n in 1usize..=8, raw in prop::collection::vec(0.0f64..=1.0, 9)) {
        let mut a = raw[..=n].to_vec();
        a.sort_by(f64::total_cmp);
        let s = sup_norm_abs(&NodeSet::new(a).unwrap()).unwrap();
        prop_assert!(solved()[n - 1].sup_norm <= s + 1e-9);
    }

    #[test]
    fn seme_constant_at_random_points(n in 1usize..=30, p in 0.0f64..=1.0) {
        let want = 0.25 / (1.0 + (n as f64).sqrt()).powi(2);
        prop_assert!((eval_sq_penalty(&seme_nodes(n), p) - want).abs() <= 1e-12);
    }
}
