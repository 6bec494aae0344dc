//! Binomial weights, Bernstein rows and a small monomial-basis polynomial
//! type with real-root isolation on an interval.
//!
//! Root isolation converts the polynomial to Bernstein form on the target
//! interval and subdivides with de Casteljau until each cell has at most one
//! sign variation in its coefficients (variation diminishing property), then
//! refines single roots with a bracketed Newton/bisection hybrid.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Largest `n` for which binomial coefficients come from the exact integer table.
pub const EXACT_BINOMIAL_MAX: usize = 64;

/// Derivative magnitude below which an isolated root is flagged as near-multiple.
pub const NEAR_MULTIPLE_DERIVATIVE: f64 = 1e-10;

/// Same threshold relative to the derivative bound of the polynomial on the interval.
/// Double roots are only located to about sqrt(eps), where |p'| is of that order.
pub const NEAR_MULTIPLE_RELATIVE: f64 = 1e-6;

const SUBDIVISION_BUDGET: usize = 200_000;

fn pascal_table() -> &'static Vec<Vec<u64>> {
    static TABLE: OnceLock<Vec<Vec<u64>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut rows: Vec<Vec<u64>> = Vec::with_capacity(EXACT_BINOMIAL_MAX + 1);
        rows.push(vec![1]);
        for n in 1..=EXACT_BINOMIAL_MAX {
            let prev = &rows[n - 1];
            let mut row = vec![1u64; n + 1];
            for k in 1..n {
                row[k] = prev[k - 1] + prev[k];
            }
            rows.push(row);
        }
        rows
    })
}

/// `C(n, k)` as a float; zero when `k > n`.
pub fn binomial_coefficient(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    if n <= EXACT_BINOMIAL_MAX {
        return pascal_table()[n][k] as f64;
    }
    let k = k.min(n - k);
    let mut c = 1.0f64;
    for i in 1..=k {
        c = c * ((n - k + i) as f64) / (i as f64);
    }
    c
}

/// `C(n,k) p^k (1-p)^(n-k)`.
pub fn binomial_weight(n: usize, k: usize, p: f64) -> Result<f64> {
    if k > n {
        return Err(Error::Domain { n, k });
    }
    Ok(weight_unchecked(n, k, p))
}

pub(crate) fn weight_unchecked(n: usize, k: usize, p: f64) -> f64 {
    let q = 1.0 - p;
    let c = binomial_coefficient(n, k);
    if c.is_finite() {
        // grouping the powers keeps w(n, k, p) == w(n, n - k, 1 - p) exactly
        c * (powi(p, k) * powi(q, n - k))
    } else {
        // Only reachable for n in the thousands.
        let ln_c: f64 = (1..=k.min(n - k))
            .map(|i| ((n - k.min(n - k) + i) as f64).ln() - (i as f64).ln())
            .sum();
        (ln_c + k as f64 * p.ln() + (n - k) as f64 * q.ln()).exp()
    }
}

fn powi(x: f64, e: usize) -> f64 {
    if e <= i32::MAX as usize {
        x.powi(e as i32)
    } else {
        x.powf(e as f64)
    }
}

/// All `n + 1` Bernstein basis values of degree `n` at `p`.
///
/// Built with the two-term recurrence `b[k] <- (1-p) b[k] + p b[k-1]`, which
/// only ever adds nonnegative quantities for `p` in `[0, 1]`.
pub fn bernstein_row(n: usize, p: f64) -> Vec<f64> {
    let q = 1.0 - p;
    let mut row = vec![0.0; n + 1];
    row[0] = 1.0;
    for m in 1..=n {
        for k in (1..=m).rev() {
            row[k] = q * row[k] + p * row[k - 1];
        }
        row[0] *= q;
    }
    row
}

/// Real polynomial in the monomial basis, lowest degree first.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: vec![0.0] }
    }

    pub fn constant(c: f64) -> Self {
        Polynomial::new(vec![c])
    }

    /// Polynomial with the given real roots and leading coefficient.
    pub fn from_roots(leading: f64, roots: &[f64]) -> Self {
        let mut p = Polynomial::constant(leading);
        for &r in roots {
            p = p.mul(&Polynomial::new(vec![-r, 1.0]));
        }
        p
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Value and first derivative in one Horner pass.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let mut p = 0.0;
        let mut dp = 0.0;
        for &c in self.coeffs.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::zero();
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| c * i as f64)
                .collect(),
        )
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let len = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![0.0; len];
        for (i, &c) in self.coeffs.iter().enumerate() {
            out[i] += c;
        }
        for (i, &c) in other.coeffs.iter().enumerate() {
            out[i] += c;
        }
        Polynomial::new(out)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }

    /// `t -> p(shift + scale * t)`.
    pub fn compose_affine(&self, shift: f64, scale: f64) -> Polynomial {
        let lin = Polynomial::new(vec![shift, scale]);
        let mut acc = Polynomial::zero();
        for &c in self.coeffs.iter().rev() {
            acc = acc.mul(&lin).add(&Polynomial::constant(c));
        }
        acc
    }

    /// Bernstein coefficients of the same degree on `[0, 1]`.
    pub fn to_bernstein(&self) -> Vec<f64> {
        let d = self.degree();
        (0..=d)
            .map(|i| {
                (0..=i)
                    .map(|j| {
                        binomial_coefficient(i, j) / binomial_coefficient(d, j) * self.coeffs[j]
                    })
                    .sum()
            })
            .collect()
    }
}

/// A real root found by [`isolate_roots_detailed`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    /// |p'(x)| was tiny at the root, or the subdivision could not separate a cluster.
    pub near_multiple: bool,
}

/// All real roots of `poly` in `[lo, hi]`, each within `tol`, strictly increasing.
pub fn isolate_roots(poly: &Polynomial, lo: f64, hi: f64, tol: f64) -> Result<Vec<f64>> {
    Ok(isolate_roots_detailed(poly, lo, hi, tol)?
        .into_iter()
        .map(|r| r.x)
        .collect())
}

pub fn isolate_roots_detailed(poly: &Polynomial, lo: f64, hi: f64, tol: f64) -> Result<Vec<Root>> {
    if poly.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    let well_formed = lo.is_finite() && hi.is_finite() && lo < hi && tol > 0.0;
    if !well_formed {
        return Err(Error::InvalidInterval { lo, hi, tol });
    }
    if poly.degree() == 0 {
        return Ok(Vec::new());
    }
    let width = hi - lo;
    let local = poly.compose_affine(lo, width);
    let bern = local.to_bernstein();
    let d = bern.len() - 1;
    let scale = bern.iter().map(|b| b.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::ZeroPolynomial);
    }
    let zero_tol = 4.0 * f64::EPSILON * scale * (d as f64 + 1.0);
    // |p'| on [lo, hi] is bounded by d * max|b| / width
    let flat_slope =
        NEAR_MULTIPLE_DERIVATIVE.max(NEAR_MULTIPLE_RELATIVE * d as f64 * scale / width);

    let mut ctx = Isolation {
        local: &local,
        t_tol: tol / width,
        zero_tol,
        calls: 0,
        found: Vec::new(),
    };
    if bern[0].abs() <= zero_tol {
        ctx.found.push((0.0, false));
    }
    if bern[d].abs() <= zero_tol {
        ctx.found.push((1.0, false));
    }
    ctx.subdivide(&bern, 0.0, 1.0)?;

    let mut roots: Vec<Root> = ctx
        .found
        .into_iter()
        .map(|(t, cluster)| {
            let x = if t == 1.0 {
                hi
            } else {
                (lo + width * t).min(hi)
            };
            let (_, dp) = poly.eval_with_derivative(x);
            Root {
                x,
                near_multiple: cluster || dp.abs() < flat_slope,
            }
        })
        .collect();
    roots.sort_by(|a, b| a.x.total_cmp(&b.x));
    let mut merged: Vec<Root> = Vec::with_capacity(roots.len());
    for r in roots {
        match merged.last_mut() {
            Some(last) if r.x - last.x <= 2.0 * tol => {
                last.near_multiple |= r.near_multiple;
                // endpoints win over interior approximations
                if r.x == hi {
                    last.x = hi;
                }
            }
            _ => merged.push(r),
        }
    }
    Ok(merged)
}

struct Isolation<'a> {
    local: &'a Polynomial,
    t_tol: f64,
    zero_tol: f64,
    calls: usize,
    found: Vec<(f64, bool)>,
}

impl Isolation<'_> {
    fn sign(&self, v: f64) -> i8 {
        if v.abs() <= self.zero_tol {
            0
        } else if v > 0.0 {
            1
        } else {
            -1
        }
    }

    fn variations(&self, b: &[f64]) -> usize {
        let mut count = 0;
        let mut last = 0i8;
        for &c in b {
            let s = self.sign(c);
            if s != 0 {
                if last != 0 && s != last {
                    count += 1;
                }
                last = s;
            }
        }
        count
    }

    fn subdivide(&mut self, b: &[f64], a: f64, c: f64) -> Result<()> {
        self.calls += 1;
        if self.calls > SUBDIVISION_BUDGET {
            return Err(Error::Certification(
                "root isolation exceeded its subdivision budget".into(),
            ));
        }
        let v = self.variations(b);
        if v == 0 {
            return Ok(());
        }
        if c - a <= self.t_tol {
            self.found.push((0.5 * (a + c), v > 1));
            return Ok(());
        }
        let d = b.len() - 1;
        if v == 1 {
            let (s0, s1) = (self.sign(b[0]), self.sign(b[d]));
            if s0 != 0 && s1 != 0 && s0 != s1 {
                if let Some(t) = self.refine(a, c, s0) {
                    self.found.push((t, false));
                    return Ok(());
                }
            }
        }
        let (left, right) = de_casteljau_split(b);
        let mid = 0.5 * (a + c);
        if self.sign(right[0]) == 0 {
            self.found.push((mid, false));
        }
        self.subdivide(&left, a, mid)?;
        self.subdivide(&right, mid, c)
    }

    /// Bracketed Newton/bisection on `(a, c)` where the sign at `a` is `sa`.
    fn refine(&self, a: f64, c: f64, sa: i8) -> Option<f64> {
        let fa = self.local.eval(a);
        let fc = self.local.eval(c);
        let bracketed = fa * fc < 0.0;
        if !bracketed {
            return None;
        }
        debug_assert_eq!(sa, if fa > 0.0 { 1 } else { -1 });
        let (mut lo, mut hi) = (a, c);
        let neg_at_lo = fa < 0.0;
        let mut x = 0.5 * (lo + hi);
        for _ in 0..300 {
            let (f, df) = self.local.eval_with_derivative(x);
            if f == 0.0 {
                return Some(x);
            }
            if (f < 0.0) == neg_at_lo {
                lo = x;
            } else {
                hi = x;
            }
            if hi - lo <= self.t_tol {
                return Some(0.5 * (lo + hi));
            }
            let step = if df != 0.0 { f / df } else { f64::INFINITY };
            let newton = x - step;
            if newton > lo && newton < hi {
                if step.abs() <= 0.25 * self.t_tol {
                    return Some(newton);
                }
                x = newton;
            } else {
                x = 0.5 * (lo + hi);
            }
        }
        Some(0.5 * (lo + hi))
    }
}

fn de_casteljau_split(b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = b.len() - 1;
    let mut work = b.to_vec();
    let mut left = Vec::with_capacity(d + 1);
    let mut right = vec![0.0; d + 1];
    left.push(work[0]);
    right[d] = work[d];
    for r in 1..=d {
        for i in 0..=(d - r) {
            work[i] = 0.5 * (work[i] + work[i + 1]);
        }
        left.push(work[0]);
        right[d - r] = work[d - r];
    }
    (left, right)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn weight_examples() {
        assert_eq!(binomial_weight(1, 0, 0.0).unwrap(), 1.0);
        assert!(close(binomial_weight(2, 1, 0.5).unwrap(), 0.5, 1e-16));
        // 10 * 0.09 * 0.343
        assert!(close(binomial_weight(5, 2, 0.3).unwrap(), 0.3087, 1e-15));
        assert_eq!(
            binomial_weight(3, 4, 0.5),
            Err(Error::Domain { n: 3, k: 4 })
        );
    }

    #[test]
    fn exact_table_boundary() {
        assert_eq!(
            binomial_coefficient(64, 32),
            1_832_624_140_942_590_534u64 as f64
        );
        let c65 = binomial_coefficient(65, 1);
        assert_eq!(c65, 65.0);
        let rel = (binomial_coefficient(70, 35) - 112_186_277_816_662_845_432f64).abs()
            / 112_186_277_816_662_845_432f64;
        assert!(rel < 1e-14);
    }

    #[test]
    fn row_examples() {
        assert_eq!(bernstein_row(2, 0.0), vec![1.0, 0.0, 0.0]);
        assert_eq!(bernstein_row(1, 0.5), vec![0.5, 0.5]);
        let row = bernstein_row(3, 0.25);
        let want = [0.421875, 0.421875, 0.140625, 0.015625];
        for (a, b) in row.iter().zip(want) {
            assert!(close(*a, b, 1e-16));
        }
    }

    #[test]
    fn roots_of_quadratic_at_endpoints() {
        let p = Polynomial::new(vec![0.0, -1.0, 1.0]);
        assert_eq!(isolate_roots(&p, 0.0, 1.0, 1e-12).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn roots_of_cubic() {
        let p = Polynomial::new(vec![-1.0, 3.0, -1.0, 1.0]);
        let r = isolate_roots(&p, 0.0, 1.0, 1e-12).unwrap();
        assert_eq!(r.len(), 1);
        assert!(close(r[0], 0.361_103_080_528_647_4, 1e-12), "{}", r[0]);
    }

    #[test]
    fn root_inverse_sqrt3() {
        let p = Polynomial::new(vec![-1.0, 0.0, 3.0]);
        let r = isolate_roots(&p, 0.0, 1.0, 1e-12).unwrap();
        assert_eq!(r.len(), 1);
        assert!(close(r[0], 1.0 / 3f64.sqrt(), 1e-12));
    }

    #[test]
    fn zero_polynomial_rejected() {
        assert_eq!(
            isolate_roots(&Polynomial::zero(), 0.0, 1.0, 1e-12),
            Err(Error::ZeroPolynomial)
        );
        assert!(matches!(
            isolate_roots(&Polynomial::new(vec![1.0, 1.0]), 1.0, 0.0, 1e-12),
            Err(Error::InvalidInterval { .. })
        ));
    }

    #[test]
    fn double_root_reported_once_and_flagged() {
        let p = Polynomial::from_roots(1.0, &[0.3, 0.3, 0.7]);
        let r = isolate_roots_detailed(&p, 0.0, 1.0, 1e-12).unwrap();
        assert_eq!(r.len(), 2, "{r:?}");
        assert!(close(r[0].x, 0.3, 1e-6));
        assert!(r[0].near_multiple);
        assert!(close(r[1].x, 0.7, 1e-12));
        assert!(!r[1].near_multiple);
    }

    #[test]
    fn root_on_subdivision_midpoint() {
        let p = Polynomial::from_roots(1.0, &[0.5, 0.9, 0.1]);
        let r = isolate_roots(&p, 0.0, 1.0, 1e-12).unwrap();
        assert_eq!(r.len(), 3, "{r:?}");
        for (got, want) in r.iter().zip([0.1, 0.5, 0.9]) {
            assert!(close(*got, want, 1e-12));
        }
    }

    #[test]
    fn roots_on_shifted_interval() {
        let p = Polynomial::from_roots(2.0, &[-1.5, 2.25, 3.0]);
        let r = isolate_roots(&p, -2.0, 2.5, 1e-12).unwrap();
        assert_eq!(r.len(), 2);
        assert!(close(r[0], -1.5, 1e-12) && close(r[1], 2.25, 1e-12));
    }

    #[test]
    fn compose_and_bernstein_agree_with_eval() {
        let p = Polynomial::new(vec![0.3, -1.2, 0.7, 2.0, -0.4]);
        let q = p.compose_affine(0.2, 0.5);
        for t in [0.0, 0.25, 0.6, 1.0] {
            assert!(close(q.eval(t), p.eval(0.2 + 0.5 * t), 1e-14));
        }
        let b = q.to_bernstein();
        assert!(close(b[0], q.eval(0.0), 1e-14));
        assert!(close(*b.last().unwrap(), q.eval(1.0), 1e-14));
    }
}
