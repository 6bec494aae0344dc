//! Distributional diagnostics of node sets as `n` grows.
//!
//! Each node set induces a normalized counting measure with mass
//! `1/(n+1)` per node. For acceptable estimator families these measures
//! approach the uniform law on `[0, 1]`; we quantify the gap by the
//! sup-distance between the measure's CDF and the identity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimators::{aeme_solve, closed_form_nodes, Method, SolverConfig};
use crate::penalty::{sup_norm_abs, NodeSet};

/// Equal-mass atoms at the nodes. Repeated nodes keep their multiplicity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingMeasure {
    atoms: Vec<f64>,
}

impl CountingMeasure {
    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn mass(&self) -> f64 {
        1.0 / self.atoms.len() as f64
    }

    /// `F(p) = mu([0, p])`.
    pub fn cdf(&self, p: f64) -> f64 {
        self.atoms.partition_point(|&a| a <= p) as f64 * self.mass()
    }
}

pub fn counting_measure(ns: &NodeSet) -> CountingMeasure {
    let mut atoms = ns.nodes().to_vec();
    atoms.sort_by(f64::total_cmp);
    CountingMeasure { atoms }
}

/// `sup_p |F(p) - p|`, evaluated exactly at each jump from both sides.
pub fn kolmogorov_uniform_distance(cm: &CountingMeasure) -> f64 {
    let atoms = cm.atoms();
    let count = atoms.len() as f64;
    let mut worst = 0.0f64;
    let mut i = 0;
    while i < atoms.len() {
        let x = atoms[i];
        let before = i as f64 / count;
        let mut j = i;
        while j < atoms.len() && atoms[j] == x {
            j += 1;
        }
        let at = j as f64 / count;
        worst = worst.max((before - x).abs()).max((at - x).abs());
        i = j;
    }
    worst
}

/// Sup-norm and distribution diagnostics for one `(n, method)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub n: usize,
    pub method: Method,
    pub sup_norm: f64,
    /// `1 / (2 sqrt(n))`.
    pub bound: f64,
    pub kolmogorov_distance: f64,
    pub converged: bool,
    /// Diagnostic when the row could not be computed normally.
    pub note: Option<String>,
}

impl DecayRow {
    pub fn within_bound(&self) -> bool {
        self.sup_norm <= self.bound + 1e-12
    }
}

pub fn decay_bound(n: usize) -> f64 {
    0.5 / (n as f64).sqrt()
}

fn row(n: usize, method: Method, cfg: &SolverConfig) -> DecayRow {
    let bound = decay_bound(n);
    let computed = if n == 0 {
        Err(crate::Error::InvalidNodes("need at least one toss".into()))
    } else {
        match closed_form_nodes(method, n) {
            Some(ns) => sup_norm_abs(&ns).map(|s| (ns, s, true)),
            None => match aeme_solve(n, cfg) {
                Ok(res) => Ok((res.nodes, res.sup_norm, res.converged)),
                Err(crate::Error::NonConvergence { best_nodes, .. }) => NodeSet::new(best_nodes)
                    .and_then(|ns| sup_norm_abs(&ns).map(|s| (ns, s, false))),
                Err(e) => Err(e),
            },
        }
    };
    match computed {
        Ok((ns, sup_norm, converged)) => DecayRow {
            n,
            method,
            sup_norm,
            bound,
            kolmogorov_distance: kolmogorov_uniform_distance(&counting_measure(&ns)),
            converged,
            note: (!converged).then(|| "solver did not converge; best iterate reported".into()),
        },
        Err(e) => DecayRow {
            n,
            method,
            sup_norm: 0.0,
            bound,
            kolmogorov_distance: 0.0,
            converged: false,
            note: Some(e.to_string()),
        },
    }
}

/// One row per `(n, method)`, ordered by `n` and then by the order of
/// `methods`. Rows are computed in parallel.
pub fn decay_table(n_values: &[usize], methods: &[Method], cfg: &SolverConfig) -> Vec<DecayRow> {
    let jobs: Vec<(usize, Method)> = n_values
        .iter()
        .flat_map(|&n| methods.iter().map(move |&m| (n, m)))
        .collect();
    jobs.par_iter().map(|&(n, m)| row(n, m, cfg)).collect()
}
