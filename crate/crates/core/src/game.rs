//! Zero-sum game between Nature (Player I, picks `p` from a prior) and the
//! statistician (Player II, picks the nodes).
//!
//! For a fixed sign pattern of `p_j - a_k` the expected penalty
//! `E(a; mu) = sum_j m_j D(a; p_j)` is affine in the nodes, with
//! `dE/da_k = -sum_j m_j C(n,k) p_j^k (1-p_j)^(n-k) sign(p_j - a_k)`.
//! A least-favorable prior supported on the maxima of the optimal penalty
//! makes all of these vanish; together with `sum_j m_j = 1` that is a
//! square linear system for the masses.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bernstein::weight_unchecked;
use crate::error::{Error, Result};
use crate::estimators::{aeme_solve, SolverConfig};
use crate::penalty::{
    build_piecewise, certify_maxima, eval_abs_penalty, NodeSet, DEFAULT_MAXIMA_EPS,
};

/// Masses within this distance below zero are clipped instead of rejected.
pub const MASS_CLIP: f64 = 1e-10;

/// Atoms closer than this to a node make the gradient undefined.
pub const ATOM_NODE_GAP: f64 = 1e-12;

/// Finite-difference step for derivative checks of the penalty.
pub const FD_STEP: f64 = 1e-6;

/// Player I mixed strategy with finitely many atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    points: Vec<f64>,
    masses: Vec<f64>,
}

impl AtomicMeasure {
    pub fn new(points: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != masses.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} points but {} masses",
                points.len(),
                masses.len()
            )));
        }
        if !points.iter().all(|p| (0.0..=1.0).contains(p)) {
            return Err(Error::InvalidMeasure("atoms must lie in [0, 1]".into()));
        }
        if !points.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidMeasure(
                "atoms must be strictly increasing".into(),
            ));
        }
        if !masses.iter().all(|m| m.is_finite() && *m >= 0.0) {
            return Err(Error::InvalidMeasure("masses must be nonnegative".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("masses sum to {total}")));
        }
        Ok(AtomicMeasure { points, masses })
    }

    pub fn point_mass(p: f64) -> Result<Self> {
        AtomicMeasure::new(vec![p], vec![1.0])
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
}

/// `E(a; mu) = sum_j m_j D(a; p_j)`.
pub fn expected_penalty(ns: &NodeSet, m: &AtomicMeasure) -> f64 {
    m.points
        .iter()
        .zip(&m.masses)
        .map(|(&p, &w)| w * eval_abs_penalty(ns, p))
        .sum()
}

fn sign_of(atom: f64, node: f64, k: usize) -> Result<f64> {
    if (atom - node).abs() <= ATOM_NODE_GAP {
        return Err(Error::AtomOnNode { atom, k });
    }
    Ok(if atom > node { 1.0 } else { -1.0 })
}

/// Gradient of `E(a; mu)` with respect to the nodes.
pub fn penalty_gradient(ns: &NodeSet, m: &AtomicMeasure) -> Result<Vec<f64>> {
    let n = ns.n();
    ns.nodes()
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let mut g = 0.0;
            for (&p, &w) in m.points.iter().zip(&m.masses) {
                g -= w * weight_unchecked(n, k, p) * sign_of(p, a, k)?;
            }
            Ok(g)
        })
        .collect()
}

/// Result of solving for stationary prior masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum StationaryWeights {
    Feasible {
        measure: AtomicMeasure,
        condition_number: f64,
    },
    Infeasible {
        masses: Vec<f64>,
        condition_number: f64,
    },
}

impl StationaryWeights {
    pub fn masses(&self) -> &[f64] {
        match self {
            StationaryWeights::Feasible { measure, .. } => measure.masses(),
            StationaryWeights::Infeasible { masses, .. } => masses,
        }
    }

    pub fn condition_number(&self) -> f64 {
        match self {
            StationaryWeights::Feasible {
                condition_number, ..
            }
            | StationaryWeights::Infeasible {
                condition_number, ..
            } => *condition_number,
        }
    }
}

/// Masses on `support` (n + 2 atoms) that zero the node gradient and sum to one.
pub fn stationarity_weights(ns: &NodeSet, support: &[f64]) -> Result<StationaryWeights> {
    let n = ns.n();
    let size = n + 2;
    if support.len() != size {
        return Err(Error::SupportCount {
            expected: size,
            found: support.len(),
        });
    }
    let mut a = DMatrix::zeros(size, size);
    for (k, &node) in ns.nodes().iter().enumerate() {
        for (j, &p) in support.iter().enumerate() {
            a[(k, j)] = weight_unchecked(n, k, p) * sign_of(p, node, k)?;
        }
    }
    for j in 0..size {
        a[(n + 1, j)] = 1.0;
    }
    let singular = a.clone().singular_values();
    let s_max = singular.max();
    let s_min = singular.min();
    let nullity = singular.iter().filter(|&&s| s <= 1e-12 * s_max).count();
    if nullity > 0 {
        return Err(Error::RankDeficient { nullity });
    }
    let condition_number = s_max / s_min;
    let mut rhs = DVector::zeros(size);
    rhs[n + 1] = 1.0;
    let solution = a
        .lu()
        .solve(&rhs)
        .ok_or(Error::RankDeficient { nullity: 1 })?;
    let mut masses: Vec<f64> = solution.iter().copied().collect();
    if masses.iter().any(|&m| m < -MASS_CLIP) {
        return Ok(StationaryWeights::Infeasible {
            masses,
            condition_number,
        });
    }
    for m in masses.iter_mut() {
        if *m < 0.0 {
            *m = 0.0;
        }
    }
    let total: f64 = masses.iter().sum();
    for m in masses.iter_mut() {
        *m /= total;
    }
    let measure = AtomicMeasure::new(support.to_vec(), masses)?;
    Ok(StationaryWeights::Feasible {
        measure,
        condition_number,
    })
}

/// Strategy pair with residuals certifying (or refuting) an equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashCertificate {
    pub n: usize,
    pub nodes: NodeSet,
    pub support: Vec<f64>,
    pub masses: Vec<f64>,
    /// `||D(nodes; .)||_inf`.
    pub game_value: f64,
    /// `E(nodes; prior)`.
    pub expected_value: f64,
    /// `max_k |dE/da_k|`.
    pub stationarity_residual: f64,
    /// `|E(nodes; prior) - game_value|`.
    pub value_gap: f64,
    /// Largest distance from an atom to the certified maxima of the penalty.
    pub support_gap: f64,
    pub interlacing_ok: bool,
    pub masses_nonnegative: bool,
    /// Condition number of the stationarity system; absent when it is singular.
    pub condition_number: Option<f64>,
    pub tolerance: f64,
    pub valid: bool,
    pub anomalies: Vec<String>,
}

impl NashCertificate {
    pub fn prior(&self) -> Result<AtomicMeasure> {
        AtomicMeasure::new(self.support.clone(), self.masses.clone())
    }
}

/// `p_0 < a_0 < p_1 < .. < a_n < p_{n+1}`.
pub fn interlaces(ns: &NodeSet, support: &[f64]) -> bool {
    let a = ns.nodes();
    support.len() == a.len() + 1
        && a.iter()
            .enumerate()
            .all(|(k, &ak)| support[k] < ak && ak < support[k + 1])
}

struct Assembly {
    nodes: NodeSet,
    support: Vec<f64>,
    masses: Vec<f64>,
    condition_number: Option<f64>,
    masses_nonnegative: bool,
    anomalies: Vec<String>,
}

fn assemble(parts: Assembly, tol: f64) -> Result<NashCertificate> {
    let Assembly {
        nodes,
        support,
        masses,
        condition_number,
        masses_nonnegative,
        mut anomalies,
    } = parts;
    let maxima = certify_maxima(&build_piecewise(&nodes), DEFAULT_MAXIMA_EPS)?;
    let game_value = maxima.sup_norm;
    let expected_value: f64 = support
        .iter()
        .zip(&masses)
        .map(|(&p, &w)| w * eval_abs_penalty(&nodes, p))
        .sum();
    let n = nodes.n();
    let mut stationarity_residual = 0.0f64;
    for (k, &a) in nodes.nodes().iter().enumerate() {
        let mut g = 0.0;
        for (&p, &w) in support.iter().zip(&masses) {
            g -= w * weight_unchecked(n, k, p) * sign_of(p, a, k)?;
        }
        stationarity_residual = stationarity_residual.max(g.abs());
    }
    let support_gap = support
        .iter()
        .map(|p| {
            maxima
                .points
                .iter()
                .map(|q| (p - q).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    let value_gap = (expected_value - game_value).abs();
    let interlacing_ok = interlaces(&nodes, &support);
    if !interlacing_ok {
        anomalies.push("support does not interlace the nodes".into());
    }
    let valid =
        masses_nonnegative && value_gap <= tol && stationarity_residual <= tol && interlacing_ok;
    Ok(NashCertificate {
        n,
        nodes,
        support,
        masses,
        game_value,
        expected_value,
        stationarity_residual,
        value_gap,
        support_gap,
        interlacing_ok,
        masses_nonnegative,
        condition_number,
        tolerance: tol,
        valid,
        anomalies,
    })
}

/// Certificate for explicit strategies (used by the closed forms and for
/// checking user-supplied pairs).
pub fn certify_pair(ns: &NodeSet, prior: &AtomicMeasure, tol: f64) -> Result<NashCertificate> {
    assemble(
        Assembly {
            nodes: ns.clone(),
            support: prior.points().to_vec(),
            masses: prior.masses().to_vec(),
            condition_number: stationarity_weights(ns, prior.points())
                .ok()
                .map(|w| w.condition_number()),
            masses_nonnegative: true,
            anomalies: Vec::new(),
        },
        tol,
    )
}

/// Solve the AEME, put the prior on its certified maxima and fill residuals.
pub fn nash_certificate(n: usize, cfg: &SolverConfig) -> Result<NashCertificate> {
    let aeme = aeme_solve(n, cfg)?;
    let mut anomalies = Vec::new();
    let expected = n + 2;
    let found = aeme.maxima.points.len();
    let support = if found == expected {
        aeme.maxima.points.clone()
    } else if found > expected {
        anomalies.push(format!(
            "{found} certified maxima for {expected} atoms; kept the {expected} largest"
        ));
        let mut ranked: Vec<(f64, f64)> = aeme
            .maxima
            .points
            .iter()
            .map(|&p| (p, eval_abs_penalty(&aeme.nodes, p)))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
        let mut kept: Vec<f64> = ranked.into_iter().take(expected).map(|(p, _)| p).collect();
        kept.sort_by(f64::total_cmp);
        kept
    } else {
        return Err(Error::SupportCount { expected, found });
    };
    let weights = stationarity_weights(&aeme.nodes, &support)?;
    let masses_nonnegative = matches!(weights, StationaryWeights::Feasible { .. });
    if !masses_nonnegative {
        anomalies.push("stationary masses are not all nonnegative".into());
    }
    assemble(
        Assembly {
            nodes: aeme.nodes,
            condition_number: Some(weights.condition_number()),
            masses: weights.masses().to_vec(),
            support,
            masses_nonnegative,
            anomalies,
        },
        cfg.tol,
    )
}

/// Exact equilibrium for one toss.
pub fn nash_n1_closed() -> NashCertificate {
    let nodes = NodeSet::new(vec![0.25, 0.75]).expect("valid nodes");
    let prior =
        AtomicMeasure::new(vec![0.0, 0.5, 1.0], vec![0.25, 0.5, 0.25]).expect("valid prior");
    let mut cert = certify_pair(&nodes, &prior, SolverConfig::default().tol)
        .expect("closed-form pair avoids the nodes");
    cert.game_value = 0.25;
    cert
}

/// Interior atom of the two-toss prior: the real root of `x^3 - x^2 + 3x - 1`,
/// by Newton iteration from 0.35.
pub fn n2_atom_newton() -> f64 {
    let mut x = 0.35f64;
    for _ in 0..100 {
        let f = ((x - 1.0) * x + 3.0) * x - 1.0;
        let df = (3.0 * x - 2.0) * x + 3.0;
        let next = x - f / df;
        if next == x {
            break;
        }
        x = next;
    }
    x
}

/// The same atom from Cardano's formula.
pub fn n2_atom_radical() -> f64 {
    let c = (1.0 + 3.0 * 57f64.sqrt()).cbrt();
    (1.0 + c - 8.0 / c) / 3.0
}

/// Exact equilibrium for two tosses.
pub fn nash_n2_closed() -> NashCertificate {
    let p1 = n2_atom_newton();
    let q1 = 1.0 - p1;
    let denom = p1 * p1 + q1 * q1 + 1.0;
    let a0 = 2.0 * p1 * q1 * q1 / denom;
    let m1 = 0.5 / denom;
    let m0 = 0.5 - m1;
    let nodes = NodeSet::new(vec![a0, 0.5, 1.0 - a0]).expect("valid nodes");
    let prior =
        AtomicMeasure::new(vec![0.0, p1, q1, 1.0], vec![m0, m1, m1, m0]).expect("valid prior");
    certify_pair(&nodes, &prior, SolverConfig::default().tol)
        .expect("closed-form pair avoids the nodes")
}

/// Largest `|E(x; prior) - game_value|` over random node sets `x` that
/// interlace the certificate support.
pub fn interlacing_spread<R: Rng>(
    cert: &NashCertificate,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let prior = cert.prior()?;
    let s = &cert.support;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let nodes: Vec<f64> = (0..=cert.n)
            .map(|k| {
                let (lo, hi) = (s[k], s[k + 1]);
                let gap = ATOM_NODE_GAP * 10.0;
                rng.random_range((lo + gap)..(hi - gap))
            })
            .collect();
        let x = NodeSet::new(nodes)?;
        worst = worst.max((expected_penalty(&x, &prior) - cert.game_value).abs());
    }
    Ok(worst)
}

/// One-sided second-order estimate of `D'(p)` (forward when `p` is near 0).
pub fn penalty_slope(ns: &NodeSet, p: f64, h: f64) -> f64 {
    let f = |x: f64| eval_abs_penalty(ns, x);
    if p + 2.0 * h <= 1.0 {
        (-3.0 * f(p) + 4.0 * f(p + h) - f(p + 2.0 * h)) / (2.0 * h)
    } else {
        (3.0 * f(p) - 4.0 * f(p - h) + f(p - 2.0 * h)) / (2.0 * h)
    }
}

/// Central second difference of `D` at `p`.
pub fn penalty_curvature(ns: &NodeSet, p: f64, h: f64) -> f64 {
    let f = |x: f64| eval_abs_penalty(ns, x);
    (f(p + h) - 2.0 * f(p) + f(p - h)) / (h * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example_45() -> (NodeSet, AtomicMeasure) {
        (
            NodeSet::new(vec![0.25, 0.75]).unwrap(),
            AtomicMeasure::new(vec![0.0, 0.5, 1.0], vec![0.25, 0.5, 0.25]).unwrap(),
        )
    }

    #[test]
    fn measure_validation() {
        assert!(AtomicMeasure::new(vec![0.2, 0.1], vec![0.5, 0.5]).is_err());
        assert!(AtomicMeasure::new(vec![0.1, 0.2], vec![0.6, 0.5]).is_err());
        assert!(AtomicMeasure::new(vec![0.1, 0.2], vec![1.5, -0.5]).is_err());
        assert!(AtomicMeasure::new(vec![0.1], vec![0.5, 0.5]).is_err());
        assert!(AtomicMeasure::point_mass(0.3).is_ok());
    }

    #[test]
    fn expected_penalty_examples() {
        let (ns, prior) = example_45();
        assert!((expected_penalty(&ns, &prior) - 0.25).abs() < 1e-15);
        let atom = AtomicMeasure::point_mass(0.37).unwrap();
        assert_eq!(expected_penalty(&ns, &atom), eval_abs_penalty(&ns, 0.37));
    }

    #[test]
    fn gradient_examples() {
        let (ns, prior) = example_45();
        for g in penalty_gradient(&ns, &prior).unwrap() {
            assert!(g.abs() < 1e-14);
        }
        let grad = penalty_gradient(&ns, &AtomicMeasure::point_mass(0.9).unwrap()).unwrap();
        assert!(grad.iter().all(|&g| g < 0.0));
        let on_node = AtomicMeasure::point_mass(0.25).unwrap();
        assert!(matches!(
            penalty_gradient(&ns, &on_node),
            Err(Error::AtomOnNode { k: 0, .. })
        ));
    }

    #[test]
    fn weights_one_toss() {
        let (ns, _) = example_45();
        let w = stationarity_weights(&ns, &[0.0, 0.5, 1.0]).unwrap();
        let StationaryWeights::Feasible {
            measure,
            condition_number,
        } = w
        else {
            panic!("expected feasible weights");
        };
        for (m, want) in measure.masses().iter().zip([0.25, 0.5, 0.25]) {
            assert!((m - want).abs() < 1e-14);
        }
        assert!(condition_number.is_finite() && condition_number >= 1.0);
    }

    #[test]
    fn weights_wrong_support_size() {
        let (ns, _) = example_45();
        assert_eq!(
            stationarity_weights(&ns, &[0.0, 1.0]),
            Err(Error::SupportCount {
                expected: 3,
                found: 2
            })
        );
    }

    #[test]
    fn weights_infeasible_when_support_is_misplaced() {
        // atoms bunched on one side cannot balance the gradient with nonnegative mass
        let ns = NodeSet::new(vec![0.25, 0.75]).unwrap();
        let w = stationarity_weights(&ns, &[0.0, 0.1, 0.5]).unwrap();
        assert!(matches!(w, StationaryWeights::Infeasible { .. }), "{w:?}");
    }

    #[test]
    fn weights_rank_deficient() {
        // a repeated atom gives two identical columns
        let ns = NodeSet::new(vec![0.3, 0.7]).unwrap();
        let err = stationarity_weights(&ns, &[0.8, 0.8, 0.9]).unwrap_err();
        assert!(
            matches!(err, Error::RankDeficient { nullity: 1 }),
            "{err:?}"
        );
    }

    #[test]
    fn closed_forms() {
        let c1 = nash_n1_closed();
        assert!(c1.valid && c1.interlacing_ok);
        assert_eq!(c1.game_value, 0.25);

        let p_newton = n2_atom_newton();
        let p_radical = n2_atom_radical();
        assert!((p_newton - p_radical).abs() < 1e-13);
        assert!((p_newton - 0.3611).abs() < 1e-4);

        let c2 = nash_n2_closed();
        assert!(c2.valid, "{c2:?}");
        assert!((c2.nodes.nodes()[0] - 0.1916).abs() < 1e-4);
        assert!((c2.masses[1] - 0.325).abs() < 5e-4);
        assert!((c2.masses[0] - 0.175).abs() < 5e-4);
        assert!((c2.game_value - c2.nodes.nodes()[0]).abs() < 1e-12);
        assert!(c2.support_gap < 1e-8);
    }

    #[test]
    fn n2_derivative_checks() {
        let c2 = nash_n2_closed();
        let slope = penalty_slope(&c2.nodes, 0.0, FD_STEP);
        assert!((slope + 0.38).abs() < 0.01, "{slope}");
        assert!((slope + 2.0 * c2.nodes.nodes()[0]).abs() < 1e-8);
        let curv = penalty_curvature(&c2.nodes, c2.support[1], FD_STEP);
        assert!((curv + 4.43).abs() < 0.01, "{curv}");
    }

    #[test]
    fn solver_certificates_match_closed_forms() {
        let cfg = SolverConfig::default();
        for (solved, closed) in [
            (nash_certificate(1, &cfg).unwrap(), nash_n1_closed()),
            (nash_certificate(2, &cfg).unwrap(), nash_n2_closed()),
        ] {
            assert!(solved.valid, "{solved:?}");
            for (a, b) in solved.nodes.nodes().iter().zip(closed.nodes.nodes()) {
                assert!((a - b).abs() < 1e-8);
            }
            for (a, b) in solved.masses.iter().zip(&closed.masses) {
                assert!((a - b).abs() < 1e-8);
            }
            assert!((solved.game_value - closed.game_value).abs() < 1e-9);
        }
    }

    #[test]
    fn constancy_on_interlacing_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for cert in [nash_n1_closed(), nash_n2_closed()] {
            assert!(interlacing_spread(&cert, 100, &mut rng).unwrap() < 1e-10);
        }
    }
}
