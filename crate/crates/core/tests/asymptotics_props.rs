use coinmax_core::asymptotics::{
    counting_measure, decay_table, kolmogorov_uniform_distance, DecayRow,
};
use coinmax_core::estimators::{aeme_solve, mmle_nodes, seme_nodes, Method, SolverConfig};
use coinmax_core::penalty::NodeSet;
use proptest::prelude::*;

fn distance(ns: &NodeSet) -> f64 {
    kolmogorov_uniform_distance(&counting_measure(ns))
}

#[test]
fn optimal_nodes_spread_out() {
    let cfg = SolverConfig::default();
    let d2 = distance(&aeme_solve(2, &cfg).unwrap().nodes);
    let d20 = distance(&aeme_solve(20, &cfg).unwrap().nodes);
    assert!(d20 < d2, "{d20} vs {d2}");
    assert!(d20 < 0.15);
}

#[test]
fn closed_families_spread_out() {
    for family in [mmle_nodes as fn(usize) -> NodeSet, seme_nodes] {
        let d: Vec<f64> = [2, 10, 20, 50]
            .iter()
            .map(|&n| distance(&family(n)))
            .collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
        assert!(d[2] < 0.15);
    }
}

#[test]
fn decay_rows_respect_bound() {
    let n_values: Vec<usize> = (1..=100).collect();
    let rows = decay_table(&n_values, &[Method::Mle], &SolverConfig::default());
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(DecayRow::within_bound));
    assert!(rows[99].sup_norm <= 0.05);
}

#[test]
fn decay_table_examples() {
    let cfg = SolverConfig::default();
    let rows = decay_table(
        &[1, 2, 4, 5],
        &[Method::Aeme, Method::Mmle, Method::Seme],
        &cfg,
    );
    let get = |n: usize, m: Method| rows.iter().find(|r| r.n == n && r.method == m).unwrap();
    assert!((get(1, Method::Aeme).sup_norm - 0.25).abs() < 1e-12);
    assert!((get(5, Method::Aeme).sup_norm - 0.131).abs() <= 5e-4);
    // three atoms 1/4, 1/2, 3/4 with mass 1/3: the gap is 1/4 just below 1/4
    assert!((get(2, Method::Mmle).kolmogorov_distance - 0.25).abs() < 1e-15);
    // five atoms k/6: the gap is 1/6 just below 1/6
    assert!((get(4, Method::Seme).kolmogorov_distance - 1.0 / 6.0).abs() < 1e-15);
}

proptest! {
    #[test]
    fn distance_matches_brute_force(raw in prop::collection::vec(0.0f64..=1.0, 2..40)) {
        let ns = NodeSet::new(raw.clone()).unwrap();
        let d = distance(&ns);
        let m = raw.len() as f64;
        // probe just below and at every atom plus a uniform grid
        let mut probes: Vec<f64> = (0..=2000).map(|i| i as f64 / 2000.0).collect();
        for &x in &raw {
            probes.push(x);
            probes.push((x - 1e-13).max(0.0));
        }
        let brute = probes
            .iter()
            .map(|&p| {
                let f = raw.iter().filter(|&&a| a <= p).count() as f64 / m;
                (f - p).abs()
            })
            .fold(0.0, f64::max);
        prop_assert!(d >= brute - 1e-15, "{} < {}", d, brute);
        prop_assert!(d <= brute + 1e-12, "{} > {}", d, brute);
        prop_assert!(d >= 0.5 / m - 1e-15);
        prop_assert!(d <= 1.0);
    }
}
