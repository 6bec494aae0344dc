//! Estimator families: maximum likelihood (MLE), its `(k+1)/(n+2)`
//! modification (MMLE), the squared-error minimax rule (SEME) and the
//! absolute-error minimax rule (AEME).
//!
//! The AEME is found by equalizing the `n + 2` interval maxima of the
//! penalty. Symmetric node sets are parameterized by their lower half
//! `a_0 < .. < a_{u-1} < 1/2` with `u = ceil(n/2)`; by symmetry only
//! `u + 1` interval maxima are independent, which leaves a square system
//! `mu_j - mu_{j+1} = 0, j = -1..u-2`. It is solved by damped Newton with a
//! central finite-difference Jacobian.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nelder_mead;
use crate::penalty::{
    build_piecewise, certify_maxima, eval_abs_penalty, MaximaSet, NodeSet, DEFAULT_MAXIMA_EPS,
};

/// Solver knobs for [`aeme_solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iterations: usize,
    pub fd_step: f64,
    pub multistart_count: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iterations: 200,
            fd_step: 1e-7,
            multistart_count: 32,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if !(self.fd_step > 0.0 && self.fd_step < 1e-2) {
            return Err(Error::InvalidConfig(format!(
                "fd_step must lie in (0, 1e-2), got {}",
                self.fd_step
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mle,
    Mmle,
    Seme,
    Aeme,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mle, Method::Mmle, Method::Seme, Method::Aeme];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mle => "mle",
            Method::Mmle => "mmle",
            Method::Seme => "seme",
            Method::Aeme => "aeme",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mle" => Ok(Method::Mle),
            "mmle" => Ok(Method::Mmle),
            "seme" => Ok(Method::Seme),
            "aeme" => Ok(Method::Aeme),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

fn from_formula(n: usize, f: impl Fn(usize) -> f64) -> NodeSet {
    assert!(n >= 1, "need at least one toss");
    NodeSet::new((0..=n).map(f).collect()).expect("closed-form nodes lie in [0, 1]")
}

/// `a_k = k / n`.
pub fn mle_nodes(n: usize) -> NodeSet {
    from_formula(n, |k| k as f64 / n as f64)
}

/// `a_k = (k + 1) / (n + 2)`.
pub fn mmle_nodes(n: usize) -> NodeSet {
    from_formula(n, |k| (k + 1) as f64 / (n + 2) as f64)
}

/// `a_k = 1/2 + sqrt(n)/(1 + sqrt(n)) (k/n - 1/2)`, the constant-risk rule for squared loss.
pub fn seme_nodes(n: usize) -> NodeSet {
    let r = (n as f64).sqrt();
    let shrink = r / (1.0 + r);
    from_formula(n, |k| {
        if 2 * k == n {
            0.5
        } else {
            0.5 + shrink * (k as f64 / n as f64 - 0.5)
        }
    })
}

/// Closed-form nodes for the non-iterative methods; `None` for AEME.
pub fn closed_form_nodes(method: Method, n: usize) -> Option<NodeSet> {
    match method {
        Method::Mle => Some(mle_nodes(n)),
        Method::Mmle => Some(mmle_nodes(n)),
        Method::Seme => Some(seme_nodes(n)),
        Method::Aeme => None,
    }
}

/// Interval maxima `mu_{-1}, .., mu_n` for a strictly increasing node set.
pub fn interval_maxima(ns: &NodeSet) -> Result<Vec<f64>> {
    Ok(interval_maxima_with_set(ns)?.0)
}

fn interval_maxima_with_set(ns: &NodeSet) -> Result<(Vec<f64>, MaximaSet)> {
    if !ns.is_strictly_increasing() {
        return Err(Error::NotStrictlyIncreasing);
    }
    let set = certify_maxima(&build_piecewise(ns), DEFAULT_MAXIMA_EPS)?;
    let a = ns.nodes();
    let mut pieces = set.interval_maxima.iter();
    let mut out = Vec::with_capacity(a.len() + 1);
    for j in 0..=a.len() {
        let lo = if j == 0 { 0.0 } else { a[j - 1] };
        let hi = if j == a.len() { 1.0 } else { a[j] };
        if lo == hi {
            out.push(eval_abs_penalty(ns, lo));
        } else {
            let piece = pieces
                .next()
                .ok_or_else(|| Error::Certification("piece/interval mismatch".into()))?;
            out.push(piece.value);
        }
    }
    Ok((out, set))
}

/// `max_j mu_j - min_j mu_j` over the `n + 2` interval maxima.
pub fn equimax_residual(ns: &NodeSet) -> Result<f64> {
    Ok(spread(&interval_maxima(ns)?))
}

fn spread(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// Output of [`aeme_solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AemeResult {
    pub nodes: NodeSet,
    pub sup_norm: f64,
    pub maxima: MaximaSet,
    pub equimax_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Whether the multistart fallback had to be used.
    pub used_fallback: bool,
}

/// Free parameters of a symmetric node set with `n` tosses.
pub fn free_node_count(n: usize) -> usize {
    n.div_ceil(2)
}

/// Mirror the lower half into a full symmetric node set.
pub fn symmetric_nodes(n: usize, half: &[f64]) -> Option<NodeSet> {
    if half.len() != free_node_count(n) || !half_is_feasible(half) {
        return None;
    }
    let mut nodes = vec![0.5; n + 1];
    for (k, &a) in half.iter().enumerate() {
        nodes[k] = a;
        nodes[n - k] = 1.0 - a;
    }
    NodeSet::new(nodes).ok()
}

fn half_is_feasible(half: &[f64]) -> bool {
    half.first().is_some_and(|&a| a > 0.0)
        && half.last().is_some_and(|&a| a < 0.5)
        && half.windows(2).all(|w| w[0] < w[1])
}

fn lower_half(ns: &NodeSet) -> Vec<f64> {
    ns.nodes()[..free_node_count(ns.n())].to_vec()
}

struct Residual {
    r: Vec<f64>,
    spread: f64,
}

impl Residual {
    fn norm(&self) -> f64 {
        self.r.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn residual(n: usize, half: &[f64]) -> Result<Residual> {
    let ns = symmetric_nodes(n, half).ok_or(Error::NotStrictlyIncreasing)?;
    let mu = interval_maxima(&ns)?;
    let u = half.len();
    let r = (0..u).map(|j| mu[j] - mu[j + 1]).collect();
    Ok(Residual {
        r,
        spread: spread(&mu),
    })
}

fn jacobian(n: usize, half: &[f64], center: &Residual, h: f64) -> Result<DMatrix<f64>> {
    let u = half.len();
    let mut jac = DMatrix::zeros(u, u);
    for i in 0..u {
        let mut plus = half.to_vec();
        let mut minus = half.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let column: Vec<f64> = match (half_is_feasible(&plus), half_is_feasible(&minus)) {
            (true, true) => {
                let (rp, rm) = (residual(n, &plus)?, residual(n, &minus)?);
                rp.r.iter()
                    .zip(&rm.r)
                    .map(|(a, b)| (a - b) / (2.0 * h))
                    .collect()
            }
            (true, false) => {
                let rp = residual(n, &plus)?;
                rp.r.iter()
                    .zip(&center.r)
                    .map(|(a, b)| (a - b) / h)
                    .collect()
            }
            (false, true) => {
                let rm = residual(n, &minus)?;
                center
                    .r
                    .iter()
                    .zip(&rm.r)
                    .map(|(a, b)| (a - b) / h)
                    .collect()
            }
            (false, false) => return Err(Error::NotStrictlyIncreasing),
        };
        for (row, v) in column.into_iter().enumerate() {
            jac[(row, i)] = v;
        }
    }
    Ok(jac)
}

fn newton_direction(jac: DMatrix<f64>, r: &[f64]) -> Option<Vec<f64>> {
    let rhs = -DVector::from_column_slice(r);
    if let Some(step) = jac.clone().lu().solve(&rhs) {
        if step.iter().all(|v| v.is_finite()) {
            return Some(step.iter().copied().collect());
        }
    }
    jac.svd(true, true)
        .solve(&rhs, 1e-14)
        .ok()
        .map(|s| s.iter().copied().collect())
}

struct NewtonOutcome {
    half: Vec<f64>,
    spread: f64,
    iterations: usize,
    converged: bool,
}

/// Damped Newton on the equimax residual starting from `half`.
fn newton(n: usize, start: Vec<f64>, cfg: &SolverConfig) -> Result<NewtonOutcome> {
    const POLISH_STEPS: usize = 3;
    let mut half = start;
    let mut res = residual(n, &half)?;
    let mut iterations = 0;
    let mut polish = 0;
    while iterations < cfg.max_iterations {
        if res.spread <= cfg.tol {
            if polish == POLISH_STEPS || res.spread == 0.0 {
                break;
            }
            polish += 1;
        }
        iterations += 1;
        let jac = jacobian(n, &half, &res, cfg.fd_step)?;
        let Some(step) = newton_direction(jac, &res.r) else {
            break;
        };
        let current = res.norm();
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = half
                .iter()
                .zip(&step)
                .map(|(x, d)| x + lambda * d)
                .collect();
            if half_is_feasible(&trial) {
                let r = residual(n, &trial)?;
                if r.norm() < current {
                    accepted = Some((trial, r));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((trial, r)) => {
                half = trial;
                res = r;
            }
            None => break,
        }
    }
    Ok(NewtonOutcome {
        converged: res.spread <= cfg.tol,
        spread: res.spread,
        half,
        iterations,
    })
}

fn finish(n: usize, outcome: NewtonOutcome, used_fallback: bool) -> Result<AemeResult> {
    let nodes = symmetric_nodes(n, &outcome.half).ok_or(Error::NotStrictlyIncreasing)?;
    let (mu, maxima) = interval_maxima_with_set(&nodes)?;
    Ok(AemeResult {
        sup_norm: maxima.sup_norm,
        equimax_residual: spread(&mu),
        maxima,
        nodes,
        iterations: outcome.iterations,
        converged: outcome.converged,
        used_fallback,
    })
}

/// Newton polish from an explicit symmetric start.
pub fn aeme_polish(start: &NodeSet, cfg: &SolverConfig) -> Result<AemeResult> {
    cfg.validate()?;
    let n = start.n();
    let half = lower_half(start);
    if symmetric_nodes(n, &half).as_ref() != Some(start) {
        return Err(Error::InvalidNodes(
            "start must be symmetric and strictly increasing inside (0, 1)".into(),
        ));
    }
    finish(n, newton(n, half, cfg)?, false)
}

/// Best symmetric node set found by multistart Nelder-Mead on the sup-norm,
/// starts jittered around the MMLE and SEME nodes.
pub fn aeme_multistart(n: usize, cfg: &SolverConfig) -> Result<NodeSet> {
    cfg.validate()?;
    let u = free_node_count(n);
    let anchors = [lower_half(&mmle_nodes(n)), lower_half(&seme_nodes(n))];
    let objective = |x: &[f64]| -> f64 {
        match symmetric_nodes(n, x) {
            Some(ns) => crate::penalty::sup_norm_abs(&ns).unwrap_or(1.0),
            None => 1.0,
        }
    };
    let count = cfg.multistart_count.max(1);
    let spacing = 0.5 / (u as f64 + 1.0);
    let results: Vec<(f64, Vec<f64>)> = (0..count)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(s as u64));
            let anchor = &anchors[s % 2];
            let mut start: Vec<f64> = anchor
                .iter()
                .map(|a| a + rng.random_range(-0.25..0.25) * spacing)
                .collect();
            start.sort_by(f64::total_cmp);
            if !half_is_feasible(&start) {
                start = anchor.clone();
            }
            let m = nelder_mead::minimize(objective, &start, 0.1 * spacing, 300 * u, 1e-13);
            (m.value, m.x)
        })
        .collect();
    let (_, best) = results
        .into_iter()
        .filter(|(_, x)| half_is_feasible(x))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or(Error::NotStrictlyIncreasing)?;
    symmetric_nodes(n, &best).ok_or(Error::NotStrictlyIncreasing)
}

/// Absolute-error minimax nodes for `n` tosses.
///
/// Starts Newton from the MMLE nodes; if that stalls, seeds a second Newton
/// run from the multistart simplex search.
pub fn aeme_solve(n: usize, cfg: &SolverConfig) -> Result<AemeResult> {
    if n == 0 {
        return Err(Error::InvalidNodes("need at least one toss".into()));
    }
    cfg.validate()?;
    let first = newton(n, lower_half(&mmle_nodes(n)), cfg)?;
    if first.converged {
        return finish(n, first, false);
    }
    let seeded = aeme_multistart(n, cfg)?;
    let second = newton(n, lower_half(&seeded), cfg)?;
    if second.converged {
        let mut out = finish(n, second, true)?;
        out.iterations += first.iterations;
        return Ok(out);
    }
    let best = if second.spread < first.spread {
        second
    } else {
        first
    };
    Err(Error::NonConvergence {
        iterations: best.iterations,
        residual: best.spread,
        best_nodes: symmetric_nodes(n, &best.half)
            .map(Vec::from)
            .unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn closed_form_families() {
        assert_eq!(mle_nodes(1).nodes(), &[0.0, 1.0]);
        assert_eq!(mle_nodes(2).nodes(), &[0.0, 0.5, 1.0]);
        assert_close(mle_nodes(5).nodes(), &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0], 1e-16);
        assert_close(mmle_nodes(1).nodes(), &[1.0 / 3.0, 2.0 / 3.0], 1e-16);
        assert_eq!(mmle_nodes(2).nodes(), &[0.25, 0.5, 0.75]);
        let m5: Vec<f64> = (1..=6).map(|k| k as f64 / 7.0).collect();
        assert_close(mmle_nodes(5).nodes(), &m5, 1e-16);
    }

    #[test]
    fn seme_examples() {
        assert!((seme_nodes(4).nodes()[0] - 1.0 / 6.0).abs() < 1e-15);
        let want = 1.0 / (2.0 * (1.0 + 5f64.sqrt()));
        assert!((seme_nodes(5).nodes()[0] - want).abs() < 1e-15);
        assert!((want - 0.154_508_5).abs() < 1e-7);
        for n in [2, 4, 10, 30] {
            assert_eq!(seme_nodes(n).nodes()[n / 2], 0.5);
        }
    }

    #[test]
    fn method_parsing() {
        assert_eq!("AEME".parse::<Method>().unwrap(), Method::Aeme);
        assert!("nope".parse::<Method>().is_err());
        assert_eq!(Method::Mmle.to_string(), "mmle");
    }

    #[test]
    fn symmetric_mirroring() {
        assert_eq!(
            symmetric_nodes(2, &[0.2]).unwrap().nodes(),
            &[0.2, 0.5, 0.8]
        );
        assert_eq!(symmetric_nodes(1, &[0.25]).unwrap().nodes(), &[0.25, 0.75]);
        assert!(symmetric_nodes(3, &[0.3, 0.2]).is_none());
        assert!(symmetric_nodes(3, &[0.3]).is_none());
        assert!(symmetric_nodes(1, &[0.5]).is_none());
    }

    #[test]
    fn equimax_residual_examples() {
        let r = equimax_residual(&NodeSet::new(vec![0.25, 0.75]).unwrap()).unwrap();
        assert!(r < 1e-12);
        let r = equimax_residual(&NodeSet::new(vec![0.1, 0.5, 0.9]).unwrap()).unwrap();
        assert!(r > 0.01, "{r}");
        assert_eq!(
            equimax_residual(&NodeSet::new(vec![0.5, 0.5]).unwrap()),
            Err(Error::NotStrictlyIncreasing)
        );
    }

    #[test]
    fn mle_interval_maxima_handle_boundary_nodes() {
        let mu = interval_maxima(&mle_nodes(2)).unwrap();
        assert_eq!(mu.len(), 4);
        assert_eq!(mu[0], 0.0);
        assert_eq!(mu[3], 0.0);
    }

    #[test]
    fn aeme_one_toss() {
        let res = aeme_solve(1, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert_close(res.nodes.nodes(), &[0.25, 0.75], 1e-9);
        assert!((res.sup_norm - 0.25).abs() < 1e-9);
    }

    #[test]
    fn aeme_two_tosses() {
        let res = aeme_solve(2, &SolverConfig::default()).unwrap();
        let a0 = res.nodes.nodes()[0];
        assert!((a0 - 0.1916).abs() < 1e-4, "{a0}");
        assert!((res.sup_norm - a0).abs() < 1e-10);
        assert_eq!(res.nodes.nodes()[1], 0.5);
        assert!(res.equimax_residual <= 1e-10);
    }

    #[test]
    fn aeme_rejects_zero_tosses() {
        assert!(aeme_solve(0, &SolverConfig::default()).is_err());
    }

    #[test]
    fn non_convergence_carries_best_iterate() {
        let cfg = SolverConfig {
            tol: 1e-300,
            max_iterations: 0,
            multistart_count: 2,
            ..SolverConfig::default()
        };
        match aeme_solve(3, &cfg) {
            Err(Error::NonConvergence {
                best_nodes,
                residual,
                ..
            }) => {
                assert_eq!(best_nodes.len(), 4);
                assert!(residual > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn multistart_then_polish_agrees_with_newton() {
        let cfg = SolverConfig {
            multistart_count: 4,
            ..SolverConfig::default()
        };
        let direct = aeme_solve(4, &cfg).unwrap();
        let seeded = aeme_multistart(4, &cfg).unwrap();
        let polished = aeme_polish(&seeded, &cfg).unwrap();
        assert!(polished.converged);
        assert_close(polished.nodes.nodes(), direct.nodes.nodes(), 1e-8);
    }

    #[test]
    fn polish_rejects_asymmetric_start() {
        let start = NodeSet::new(vec![0.2, 0.5, 0.7]).unwrap();
        assert!(aeme_polish(&start, &SolverConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = SolverConfig {
            tol: -1.0,
            ..SolverConfig::default()
        };
        assert!(aeme_solve(2, &bad).is_err());
    }
}
