//! Bounded morphisms on the truncated germ space and their exponentials.
//!
//! An operator is a dense matrix on coefficient space. A `k`-bounded
//! `tau`-morphism satisfies `|u x|_s <= C (t-s)^(-k) |x|_t` for `s < t <= tau`;
//! the norm `N^k_tau(u)` used throughout the crate is `e * C` for the sharpest
//! such `C`. With that normalization the exponential series is dominated
//! termwise, `|u^j x|_s / j! <= nu^j |x|_tau` with `nu = N^1_tau(u) / (tau - s)`,
//! which is what every exponential estimate below rests on.
//!
//! Since the unit ball of a weighted l1 norm is the closed hull of scaled
//! monomials, `sup_x |u x|_s / |x|_t` is attained on the monomial basis and
//! only the `(s, t)` supremum needs care.

use std::f64::consts::E;

use num_complex::Complex64;

use crate::error::{KamError, Result};
use crate::mag::{Mag, Scale};
use crate::spaces::{CoeffSeries, ScaledElement};

/// Hard cap on the number of series terms any exponential may use.
pub const MAX_SERIES_TERMS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    /// Supremum over a finite `(s, t)` grid; never above the true norm.
    LowerBound,
    /// Closed-form bound; exact when every column has a single nonzero entry.
    Analytic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormEstimate {
    pub value: Mag,
    pub order: u32,
    pub tau: Scale,
    pub grid_spec: String,
    pub kind: NormKind,
}

impl NormEstimate {
    pub fn value_f64(&self) -> f64 {
        self.value.to_f64()
    }

    /// The bare constant `C` of the boundedness estimate, `N / e`.
    pub fn cauchy_constant(&self) -> Mag {
        self.value / Mag::new(E)
    }
}

/// Diagnostics of a guarded exponential.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpReport {
    pub nu: Mag,
    pub terms_used: usize,
    pub tail_bound: Mag,
}

/// Linear map on coefficient space with boundedness metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledOperator {
    /// Row-major `(D+1) x (D+1)`; `out[i] = sum_j m[i][j] x[j]`.
    matrix: Vec<Complex64>,
    degree: usize,
    pub order: u32,
    pub tau: Scale,
    pub label: String,
}

impl ScaledOperator {
    pub fn from_matrix(matrix: Vec<Complex64>, degree: usize, order: u32, tau: Scale, label: &str) -> Result<Self> {
        let n = degree + 1;
        if matrix.len() != n * n {
            return Err(KamError::Domain(format!(
                "matrix has {} entries, expected {}",
                matrix.len(),
                n * n
            )));
        }
        if matrix.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(KamError::Numeric(format!("operator {label}")));
        }
        Ok(Self {
            matrix,
            degree,
            order,
            tau,
            label: label.to_string(),
        })
    }

    fn blank(degree: usize, order: u32, tau: Scale, label: &str) -> Self {
        let n = degree + 1;
        Self {
            matrix: vec![Complex64::default(); n * n],
            degree,
            order,
            tau,
            label: label.to_string(),
        }
    }

    pub fn zero(degree: usize, tau: Scale) -> Self {
        Self::blank(degree, 0, tau, "0")
    }

    pub fn identity(degree: usize, tau: Scale) -> Self {
        Self::diagonal(&vec![Complex64::new(1.0, 0.0); degree + 1], tau, "id")
    }

    pub fn diagonal(weights: &[Complex64], tau: Scale, label: &str) -> Self {
        let degree = weights.len() - 1;
        let mut op = Self::blank(degree, 0, tau, label);
        for (j, &w) in weights.iter().enumerate() {
            op.set(j, j, w);
        }
        op
    }

    /// `c * d/dz`.
    pub fn derivative(degree: usize, c: Complex64, tau: Scale) -> Self {
        let mut v = CoeffSeries::zero(degree);
        v.set_coeff(0, c);
        let mut op = Self::vector_field(&v, tau);
        op.label = format!("({c})d/dz");
        op
    }

    /// The derivation `x -> v x'`.
    pub fn vector_field(v: &CoeffSeries, tau: Scale) -> Self {
        let degree = v.degree_cap();
        let mut op = Self::blank(degree, 1, tau, "v d/dz");
        for j in 1..=degree {
            for (m, &c) in v.coeffs().iter().enumerate() {
                let i = j - 1 + m;
                if i > degree {
                    break;
                }
                op.set(i, j, c * j as f64);
            }
        }
        op
    }

    /// Multiplication by `g`.
    pub fn multiplication(g: &CoeffSeries, tau: Scale) -> Self {
        let degree = g.degree_cap();
        let mut op = Self::blank(degree, 0, tau, "mul");
        for j in 0..=degree {
            for (m, &c) in g.coeffs().iter().enumerate() {
                if j + m > degree {
                    break;
                }
                op.set(j + m, j, c);
            }
        }
        op
    }

    /// Projection onto the coefficients with `keep(j)`.
    pub fn projection(degree: usize, tau: Scale, label: &str, keep: impl Fn(usize) -> bool) -> Self {
        let weights: Vec<Complex64> = (0..=degree)
            .map(|j| Complex64::new(if keep(j) { 1.0 } else { 0.0 }, 0.0))
            .collect();
        Self::diagonal(&weights, tau, label)
    }

    pub fn degree_cap(&self) -> usize {
        self.degree
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.matrix[i * (self.degree + 1) + j]
    }

    fn set(&mut self, i: usize, j: usize, value: Complex64) {
        let n = self.degree + 1;
        self.matrix[i * n + j] = value;
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|c| c.norm_sqr() == 0.0)
    }

    pub fn with_order(mut self, order: u32) -> Self {
        self.order = order;
        self
    }

    pub fn apply(&self, x: &CoeffSeries) -> Result<CoeffSeries> {
        if x.degree_cap() != self.degree {
            return Err(KamError::CapMismatch(self.degree, x.degree_cap()));
        }
        let n = self.degree + 1;
        let xs = x.coeffs();
        let mut out = vec![Complex64::default(); n];
        for (j, &xj) in xs.iter().enumerate() {
            if xj.norm_sqr() == 0.0 {
                continue;
            }
            for (i, slot) in out.iter_mut().enumerate() {
                let m = self.matrix[i * n + j];
                if m.norm_sqr() != 0.0 {
                    *slot += m * xj;
                }
            }
        }
        CoeffSeries::new(out)
    }

    fn image_of_monomial_norm(&self, j: usize, s: Scale) -> Mag {
        Mag::sum((0..=self.degree).filter_map(|i| {
            let m = self.entry(i, j);
            (m.norm_sqr() != 0.0).then(|| Mag::from_ln(m.norm().ln() + i as f64 * s.ln()))
        }))
    }

    /// `u o v`; the order adds up.
    pub fn compose(&self, v: &ScaledOperator) -> Result<ScaledOperator> {
        if self.degree != v.degree {
            return Err(KamError::CapMismatch(self.degree, v.degree));
        }
        let n = self.degree + 1;
        let mut out = Self::blank(
            self.degree,
            self.order + v.order,
            min_scale(self.tau, v.tau),
            &format!("{} o {}", self.label, v.label),
        );
        for i in 0..n {
            for k in 0..n {
                let a = self.matrix[i * n + k];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.matrix[i * n + j] += a * v.matrix[k * n + j];
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, v: &ScaledOperator) -> Result<ScaledOperator> {
        if self.degree != v.degree {
            return Err(KamError::CapMismatch(self.degree, v.degree));
        }
        let mut out = self.clone();
        for (a, b) in out.matrix.iter_mut().zip(&v.matrix) {
            *a += b;
        }
        out.order = self.order.max(v.order);
        out.tau = min_scale(self.tau, v.tau);
        out.label = format!("{} + {}", self.label, v.label);
        Ok(out)
    }

    pub fn scale_op(&self, c: Complex64) -> ScaledOperator {
        let mut out = self.clone();
        out.matrix.iter_mut().for_each(|a| *a *= c);
        out.label = format!("({c}){}", self.label);
        out
    }

    pub fn neg(&self) -> ScaledOperator {
        self.scale_op(Complex64::new(-1.0, 0.0))
    }

    /// Closed-form bound on `N^k_tau(u)`:
    /// `e * max_j sum_i |m_ij| tau^(i-j+k) sup_x x^i (1-x)^k`.
    /// A nonzero entry with `i - j + k < 0` makes the operator unbounded
    /// at order `k`.
    pub fn analytic_norm(&self, k: u32, tau: Scale) -> NormEstimate {
        let mut worst = Mag::ZERO;
        for j in 0..=self.degree {
            let mut terms = Vec::new();
            for i in 0..=self.degree {
                let m = self.entry(i, j);
                if m.norm_sqr() == 0.0 {
                    continue;
                }
                let power = i as i64 - j as i64 + k as i64;
                if power < 0 {
                    worst = Mag::INFINITY;
                    break;
                }
                let ln = m.norm().ln() + power as f64 * tau.ln() + ln_beta_peak(i as u32, k);
                terms.push(Mag::from_ln(ln));
            }
            worst = worst.max(Mag::sum(terms));
            if worst.is_infinite() {
                break;
            }
        }
        NormEstimate {
            value: worst * Mag::new(E),
            order: k,
            tau,
            grid_spec: "closed form".into(),
            kind: NormKind::Analytic,
        }
    }

    /// Grid estimate `e * sup (t-s)^k |u z^j|_s / t^j` over the given pairs
    /// and the monomial basis.
    pub fn estimate_norm(&self, k: u32, tau: Scale, grid: &[(f64, f64)]) -> Result<NormEstimate> {
        if grid.is_empty() {
            return Err(KamError::Domain("empty (s, t) grid".into()));
        }
        let mut worst = Mag::ZERO;
        for &(s, t) in grid {
            if !(s > 0.0 && s < t && t <= tau.value() * (1.0 + 1e-12)) {
                return Err(KamError::Domain(format!("grid pair ({s}, {t}) outside 0 < s < t <= tau")));
            }
            let (ss, ts) = (Scale::new(s), Scale::new(t));
            let loss = Mag::new(t - s).powi(k as i32);
            for j in 0..=self.degree {
                let ratio = loss * self.image_of_monomial_norm(j, ss) / Mag::from_ln(j as f64 * ts.ln());
                worst = worst.max(ratio);
            }
        }
        Ok(NormEstimate {
            value: worst * Mag::new(E),
            order: k,
            tau,
            grid_spec: format!("{} (s, t) pairs", grid.len()),
            kind: NormKind::LowerBound,
        })
    }

    /// Operator norm of the bounded map `(E)_t -> (E)_t`, maximised over `t <= tau`.
    pub fn operator_norm(&self, tau: Scale) -> Mag {
        // only meaningful for order-0 maps; equals the analytic order-0 sup without the e
        self.analytic_norm(0, tau).cauchy_constant()
    }
}

fn min_scale(a: Scale, b: Scale) -> Scale {
    if a <= b {
        a
    } else {
        b
    }
}

/// `ln sup_{x in (0,1)} x^i (1-x)^k = ln(i^i k^k / (i+k)^(i+k))`.
fn ln_beta_peak(i: u32, k: u32) -> f64 {
    let xlogx = |n: u32| if n == 0 { 0.0 } else { n as f64 * (n as f64).ln() };
    xlogx(i) + xlogx(k) - xlogx(i + k)
}

/// All pairs `s < t` from an `n x n` uniform grid on `(0, tau]`.
pub fn uniform_grid(tau: f64, n: usize) -> Vec<(f64, f64)> {
    let pts: Vec<f64> = (1..=n).map(|i| tau * i as f64 / n as f64).collect();
    let mut out = Vec::new();
    for (a, &s) in pts.iter().enumerate() {
        for &t in &pts[a + 1..] {
            out.push((s, t));
        }
    }
    out
}

/// The exponential parameter `nu = N^1_tau(u) / (tau - s)`.
pub fn exp_parameter(u: &ScaledOperator, tau: Scale, s: Scale) -> Result<Mag> {
    if !(s < tau) {
        return Err(KamError::Domain(format!("need s < tau, got s = {s:?}, tau = {tau:?}")));
    }
    if tau.ln() > u.tau.ln() + 1e-12 {
        return Err(KamError::Domain(format!(
            "tau {tau:?} beyond operator domain {:?}",
            u.tau
        )));
    }
    let n1 = u.analytic_norm(1, tau).value;
    if n1.is_infinite() {
        return Err(KamError::Domain(format!("operator {} is not 1-bounded", u.label)));
    }
    Ok(n1 / tau.gap(s))
}

/// Sums `sum_j coeff(j) u^j x` for `j >= first`, stopping once a power
/// vanishes or once `tail(J) * |x|_tau < tol`.
fn guarded_series(
    u: &ScaledOperator,
    x: &ScaledElement,
    tau: Scale,
    s: Scale,
    opts: SeriesOptions,
    first: usize,
    coeff: impl Fn(usize) -> f64,
    tail: impl Fn(usize, f64) -> f64,
) -> Result<(ScaledElement, ExpReport)> {
    let nu = exp_parameter(u, tau, s)?;
    if nu > Mag::new(opts.max_nu) || nu >= Mag::ONE {
        return Err(KamError::BudgetExceeded(format!(
            "exponential parameter nu = {} exceeds {} for {}",
            nu, opts.max_nu, u.label
        )));
    }
    let x_norm = x.series.norm(tau);
    let mut power = x.series.clone();
    let mut sum = CoeffSeries::zero(x.series.degree_cap());
    let mut terms = 0;
    let mut tail_bound = Mag::INFINITY;
    for j in 0..MAX_SERIES_TERMS {
        if j >= first {
            let c = coeff(j);
            if c != 0.0 {
                sum = &sum + &power.scale(Complex64::new(c, 0.0));
            }
        }
        terms = j + 1;
        if power.is_zero() {
            tail_bound = Mag::ZERO;
            break;
        }
        // nu < 1 keeps the f64 tail bound in range
        let bound = Mag::new(tail(j, nu.to_f64())) * x_norm;
        if j + 1 >= first && bound < opts.tol {
            tail_bound = bound;
            break;
        }
        power = u.apply(&power)?;
        if !power.is_finite() {
            return Err(KamError::Numeric(format!("power {} of {}", j + 1, u.label)));
        }
    }
    if tail_bound.is_infinite() {
        return Err(KamError::Numeric(format!(
            "series for {} did not reach tolerance in {MAX_SERIES_TERMS} terms",
            u.label
        )));
    }
    if !sum.is_finite() {
        return Err(KamError::Numeric(format!("series sum for {}", u.label)));
    }
    let mut out = x.with_series(sum);
    out.scale = s;
    Ok((
        out,
        ExpReport {
            nu,
            terms_used: terms,
            tail_bound,
        },
    ))
}

fn inv_factorial(j: usize) -> f64 {
    (1..=j).fold(1.0, |acc, i| acc / i as f64)
}

/// Stopping rule for the exponential series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesOptions {
    /// Absolute tolerance on the norm of the neglected tail; zero sums until
    /// the powers vanish.
    pub tol: Mag,
    /// Largest admissible `nu`; the series is refused above it.
    pub max_nu: f64,
}

impl SeriesOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            tol: Mag::new(tol),
            max_nu: 0.5,
        }
    }
}

fn exp_tail(j: usize, nu: f64) -> f64 {
    nu.powi(j as i32 + 1) / (1.0 - nu)
}

/// `e^u x`, valid at scale `s`; refuses when `nu > 1/2`.
pub fn exp_apply(u: &ScaledOperator, x: &ScaledElement, tau: Scale, s: Scale, tol: f64) -> Result<(ScaledElement, ExpReport)> {
    exp_apply_with(u, x, tau, s, SeriesOptions::new(tol))
}

pub fn exp_apply_with(
    u: &ScaledOperator,
    x: &ScaledElement,
    tau: Scale,
    s: Scale,
    opts: SeriesOptions,
) -> Result<(ScaledElement, ExpReport)> {
    guarded_series(u, x, tau, s, opts, 0, inv_factorial, exp_tail)
}

/// `(e^{-u}(Id + u) - Id) x = sum_{n>=0} (-1)^(n+1) (n+1)/(n+2)! u^(n+2) x`.
pub fn exp_defect2(u: &ScaledOperator, x: &ScaledElement, tau: Scale, s: Scale, tol: f64) -> Result<ScaledElement> {
    exp_defect2_with(u, x, tau, s, SeriesOptions::new(tol))
}

pub fn exp_defect2_with(u: &ScaledOperator, x: &ScaledElement, tau: Scale, s: Scale, opts: SeriesOptions) -> Result<ScaledElement> {
    let coeff = |j: usize| {
        let n = j - 2;
        let sign = if n % 2 == 0 { -1.0 } else { 1.0 };
        sign * (n + 1) as f64 * inv_factorial(j)
    };
    // sum_{i > J} (i - 1) nu^i
    let tail = |j: usize, nu: f64| {
        let first = j as f64 + 1.0;
        nu.powf(first) * ((first - 1.0) / (1.0 - nu) + nu / (1.0 - nu).powi(2))
    };
    Ok(guarded_series(u, x, tau, s, opts, 2, coeff, tail)?.0)
}

/// `(e^{-u} - Id) x = sum_{j>=1} (-u)^j / j! x`.
pub fn exp_defect3(u: &ScaledOperator, x: &ScaledElement, tau: Scale, s: Scale, tol: f64) -> Result<ScaledElement> {
    exp_defect3_with(u, x, tau, s, SeriesOptions::new(tol))
}

pub fn exp_defect3_with(u: &ScaledOperator, x: &ScaledElement, tau: Scale, s: Scale, opts: SeriesOptions) -> Result<ScaledElement> {
    let coeff = |j: usize| {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        sign * inv_factorial(j)
    };
    Ok(guarded_series(u, x, tau, s, opts, 1, coeff, exp_tail)?.0)
}
