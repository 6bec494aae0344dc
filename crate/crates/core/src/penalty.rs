//! Risk (penalty) functions of a node set and certified location of their maxima.
//!
//! For a node set `a_0..a_n` the absolute-loss penalty is
//! `D(a; p) = sum_k C(n,k) p^k (1-p)^(n-k) |p - a_k|`. Between consecutive
//! distinct nodes every sign of `p - a_k` is fixed, so `D` is a polynomial
//! of degree at most `n + 1` on each such piece. `PiecewisePenalty` stores
//! those pieces in the local variable `p - t_i`; `certify_maxima` finds the
//! maximum of each piece among its endpoints and the real roots of the
//! piece derivative.

use serde::{Deserialize, Serialize};

use crate::bernstein::{bernstein_row, binomial_coefficient, isolate_roots, Polynomial};
use crate::error::{Error, Result};

/// Relative slack for membership in the set of absolute maxima.
pub const DEFAULT_MAXIMA_EPS: f64 = 1e-9;

/// Tolerance used when isolating critical points of a piece.
pub const CRITICAL_POINT_TOL: f64 = 1e-12;

/// Number of equispaced points used for grid cross-checks.
pub const VALIDATION_GRID: usize = 10_001;

/// Candidates closer than this are the same location.
const POINT_MERGE_TOL: f64 = 1e-10;

/// Player II strategy: one estimate per possible head count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct NodeSet {
    nodes: Vec<f64>,
}

impl NodeSet {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidNodes(format!(
                "need at least two nodes (n >= 1), got {}",
                nodes.len()
            )));
        }
        if let Some((k, a)) = nodes
            .iter()
            .enumerate()
            .find(|(_, a)| !(a.is_finite() && (0.0..=1.0).contains(*a)))
        {
            return Err(Error::InvalidNodes(format!(
                "a_{k} = {a} is outside [0, 1]"
            )));
        }
        Ok(NodeSet { nodes })
    }

    /// Number of tosses.
    pub fn n(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn is_ordered(&self) -> bool {
        self.nodes.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.nodes.windows(2).all(|w| w[0] < w[1])
    }

    /// The reflected strategy `a'_k = 1 - a_{n-k}`.
    pub fn reflected(&self) -> NodeSet {
        NodeSet {
            nodes: self.nodes.iter().rev().map(|a| 1.0 - a).collect(),
        }
    }
}

impl TryFrom<Vec<f64>> for NodeSet {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        NodeSet::new(v)
    }
}

impl From<NodeSet> for Vec<f64> {
    fn from(ns: NodeSet) -> Self {
        ns.nodes
    }
}

/// Loss used inside the penalty sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Abs,
    Sq,
}

/// `D(a; p)`, by direct summation.
pub fn eval_abs_penalty(ns: &NodeSet, p: f64) -> f64 {
    bernstein_row(ns.n(), p)
        .iter()
        .zip(&ns.nodes)
        .map(|(w, a)| w * (p - a).abs())
        .sum()
}

/// `D-hat(a; p)`, the squared-loss penalty.
pub fn eval_sq_penalty(ns: &NodeSet, p: f64) -> f64 {
    bernstein_row(ns.n(), p)
        .iter()
        .zip(&ns.nodes)
        .map(|(w, a)| w * (p - a) * (p - a))
        .sum()
}

pub fn eval_penalty(ns: &NodeSet, loss: Loss, p: f64) -> f64 {
    match loss {
        Loss::Abs => eval_abs_penalty(ns, p),
        Loss::Sq => eval_sq_penalty(ns, p),
    }
}

/// `count` equispaced points of `[0, 1]`, endpoints exact.
pub fn unit_grid(count: usize) -> Vec<f64> {
    assert!(count >= 2, "grid needs at least two points");
    let last = (count - 1) as f64;
    (0..count)
        .map(|i| if i == count - 1 { 1.0 } else { i as f64 / last })
        .collect()
}

/// Exact piecewise-polynomial form of `p -> D(a; p)`.
#[derive(Debug, Clone)]
pub struct PiecewisePenalty {
    nodes: NodeSet,
    breakpoints: Vec<f64>,
    pieces: Vec<Polynomial>,
}

impl PiecewisePenalty {
    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Piece `i` as a polynomial in `p - breakpoints[i]`.
    pub fn pieces(&self) -> &[Polynomial] {
        &self.pieces
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    fn piece_index(&self, p: f64) -> usize {
        let i = self.breakpoints.partition_point(|&b| b <= p);
        i.saturating_sub(1).min(self.pieces.len() - 1)
    }

    pub fn eval(&self, p: f64) -> f64 {
        let i = self.piece_index(p);
        self.pieces[i].eval(p - self.breakpoints[i])
    }
}

pub fn build_piecewise(ns: &NodeSet) -> PiecewisePenalty {
    let mut interior: Vec<f64> = ns
        .nodes
        .iter()
        .copied()
        .filter(|&a| a > 0.0 && a < 1.0)
        .collect();
    interior.sort_by(f64::total_cmp);
    interior.dedup();

    let mut breakpoints = Vec::with_capacity(interior.len() + 2);
    breakpoints.push(0.0);
    breakpoints.extend(interior);
    breakpoints.push(1.0);

    let pieces = breakpoints
        .windows(2)
        .map(|w| build_piece(ns, w[0], 0.5 * (w[0] + w[1])))
        .collect();
    PiecewisePenalty {
        nodes: ns.clone(),
        breakpoints,
        pieces,
    }
}

/// `sum_k s_k C(n,k) (t+x)^k (1-t-x)^(n-k) (x + t - a_k)` with `s_k = sign(mid - a_k)`.
fn build_piece(ns: &NodeSet, t: f64, mid: f64) -> Polynomial {
    let n = ns.n();
    let up = Polynomial::new(vec![t, 1.0]);
    let down = Polynomial::new(vec![1.0 - t, -1.0]);
    let mut up_pow = Vec::with_capacity(n + 1);
    let mut down_pow = Vec::with_capacity(n + 1);
    up_pow.push(Polynomial::constant(1.0));
    down_pow.push(Polynomial::constant(1.0));
    for m in 1..=n {
        up_pow.push(up_pow[m - 1].mul(&up));
        down_pow.push(down_pow[m - 1].mul(&down));
    }
    let mut acc = Polynomial::zero();
    for (k, &a) in ns.nodes.iter().enumerate() {
        let sign = if a < mid { 1.0 } else { -1.0 };
        let term = up_pow[k]
            .mul(&down_pow[n - k])
            .mul(&Polynomial::new(vec![t - a, 1.0]))
            .scale(sign * binomial_coefficient(n, k));
        acc = acc.add(&term);
    }
    acc
}

/// Maximum of one piece.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalMax {
    /// `-1` for `[0, a_0]`, `j` for `[a_j, a_{j+1}]`, `n` for `[a_n, 1]` when the
    /// nodes are distinct and interior.
    pub index: isize,
    pub lo: f64,
    pub hi: f64,
    pub argmax: f64,
    pub value: f64,
}

/// Certified global maxima of a penalty function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximaSet {
    pub sup_norm: f64,
    pub points: Vec<f64>,
    pub interval_maxima: Vec<IntervalMax>,
    pub epsilon: f64,
}

impl MaximaSet {
    /// Spread between the largest and smallest interval maxima.
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self
            .interval_maxima
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
                (lo.min(m.value), hi.max(m.value))
            });
        hi - lo
    }
}

pub fn certify_maxima(pp: &PiecewisePenalty, eps_max: f64) -> Result<MaximaSet> {
    if !(eps_max > 0.0 && eps_max <= 1e-6) {
        return Err(Error::InvalidConfig(format!(
            "maxima tolerance {eps_max} must lie in (0, 1e-6]"
        )));
    }
    let mut candidates: Vec<(f64, f64)> = Vec::new();
    let mut interval_maxima = Vec::with_capacity(pp.pieces.len());
    for (i, piece) in pp.pieces.iter().enumerate() {
        let (lo, hi) = (pp.breakpoints[i], pp.breakpoints[i + 1]);
        let mut locs = vec![lo, hi];
        let slope = piece.derivative();
        if !slope.is_zero() {
            let roots = isolate_roots(&slope, 0.0, hi - lo, CRITICAL_POINT_TOL)
                .map_err(|e| Error::Certification(format!("piece {i}: {e}")))?;
            locs.extend(roots.into_iter().map(|r| (lo + r).clamp(lo, hi)));
        }
        let mut best = IntervalMax {
            index: i as isize - 1,
            lo,
            hi,
            argmax: lo,
            value: f64::NEG_INFINITY,
        };
        for p in locs {
            let v = eval_abs_penalty(&pp.nodes, p);
            if v > best.value {
                best.argmax = p;
                best.value = v;
            }
            candidates.push((p, v));
        }
        interval_maxima.push(best);
    }
    let sup_norm = interval_maxima
        .iter()
        .map(|m| m.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let threshold = (1.0 - eps_max) * sup_norm;
    let mut points: Vec<f64> = candidates
        .into_iter()
        .filter(|&(_, v)| v >= threshold)
        .map(|(p, _)| p)
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup_by(|b, a| *b - *a <= POINT_MERGE_TOL);
    Ok(MaximaSet {
        sup_norm,
        points,
        interval_maxima,
        epsilon: eps_max,
    })
}

/// `||D(a; .)||_inf`.
pub fn sup_norm_abs(ns: &NodeSet) -> Result<f64> {
    Ok(certify_maxima(&build_piecewise(ns), DEFAULT_MAXIMA_EPS)?.sup_norm)
}
