//! Infinite products `g_n = e^{u_n} r e^{u_{n-1}} ... r e^{u_0}` of exponentials.
//!
//! The factors are evaluated directly; the scale budget `(1 - lambda) s` is
//! split across factors in proportion to their `N^1_s` so every factor sees the
//! same exponential parameter `sum N^1_s / ((1 - lambda) s)`.

use crate::arnold::ArnoldFamily;
use crate::error::{KamError, Result};
use crate::mag::{Mag, Scale};
use crate::operators::{exp_apply_with, ScaledOperator, SeriesOptions};
use crate::spaces::{Level, ScaledElement};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BudgetStatus {
    WithinBudget,
    Exceeded { first_offending: usize },
}

/// The hypothesis `sum_n N^1_s(u_n) <= (1 - lambda) s` and its derived constants.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductBudget {
    pub lambda: f64,
    pub s: Scale,
    pub contributions: Vec<Mag>,
    /// `lambda (1 - lambda)`.
    pub rho: f64,
    pub status: BudgetStatus,
}

impl ProductBudget {
    pub fn new(us: &[ScaledOperator], s: Scale, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(KamError::Domain(format!("lambda = {lambda} must lie in (0, 1)")));
        }
        let contributions: Vec<Mag> = us.iter().map(|u| u.analytic_norm(1, s).value).collect();
        let allowance = s.mag() * (1.0 - lambda);
        let mut partial = Mag::ZERO;
        let mut status = BudgetStatus::WithinBudget;
        for (n, &c) in contributions.iter().enumerate() {
            partial = partial + c;
            if partial > allowance {
                status = BudgetStatus::Exceeded { first_offending: n };
                break;
            }
        }
        Ok(Self {
            lambda,
            s,
            contributions,
            rho: lambda * (1.0 - lambda),
            status,
        })
    }

    pub fn total(&self) -> Mag {
        Mag::sum(self.contributions.iter().copied())
    }

    /// `sum N^1_s(u_n) / ((1 - lambda) s)`, at most one within budget.
    pub fn load(&self) -> f64 {
        (self.total() / (self.s.mag() * (1.0 - self.lambda))).to_f64()
    }

    /// `1 / (1 - load)`, the bound on `|g_n x|_{lambda s} / |x|_s`.
    pub fn lemma_constant(&self) -> f64 {
        1.0 / (1.0 - self.load())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProductOptions {
    /// Convergence tolerance on gaps, relative to `|x|_s`.
    pub rel_tol: f64,
    /// Truncation tolerance for each exponential, relative to `|x|_s`.
    pub exp_rel_tol: f64,
}

impl Default for ProductOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-14,
            exp_rel_tol: 1e-18,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductDiagnostics {
    pub budget: ProductBudget,
    pub lemma_constant: f64,
    pub input_norm: Mag,
    /// `|g x|_{lambda s}`.
    pub output_norm: Mag,
    pub norm_bound_ok: bool,
    /// `|g_n x - r g_{n-1} x|_{rho s}`.
    pub gaps: Vec<Mag>,
    /// `sup_n C / (1 - lambda - N^1_{lambda s}(u_n) / (lambda s))`; `None`
    /// when some denominator is not positive.
    pub k_constant: Option<f64>,
    pub gap_bounds: Vec<Mag>,
    pub gap_bounds_ok: Vec<bool>,
    /// First `n` with a gap and remaining tail bound both below tolerance.
    pub converged_at: Option<usize>,
    /// Scale after each factor.
    pub scales: Vec<Scale>,
}

/// `g x` at scale `lambda s`, level infinity, with the lemma and gap diagnostics.
pub fn product_apply(
    us: &[ScaledOperator],
    x: &ScaledElement,
    s: Scale,
    lambda: f64,
    fam: &ArnoldFamily,
) -> Result<(ScaledElement, ProductDiagnostics)> {
    product_apply_with(us, x, s, lambda, fam, ProductOptions::default())
}

pub fn product_apply_with(
    us: &[ScaledOperator],
    x: &ScaledElement,
    s: Scale,
    lambda: f64,
    fam: &ArnoldFamily,
    opts: ProductOptions,
) -> Result<(ScaledElement, ProductDiagnostics)> {
    if x.level != Level::Finite(0) {
        return Err(KamError::Contract(format!("product input must sit at level 0, got {:?}", x.level)));
    }
    if x.scale < s {
        return Err(KamError::Contract(format!("input scale {:?} below product scale {:?}", x.scale, s)));
    }
    let budget = ProductBudget::new(us, s, lambda)?;
    if let BudgetStatus::Exceeded { first_offending } = budget.status {
        return Err(KamError::BudgetExceeded(format!(
            "partial sum of N^1_s through u_{first_offending} exceeds (1 - lambda) s"
        )));
    }
    let total = budget.total();
    let input_norm = x.series.norm(s);
    let allowance = s.mag() * (1.0 - lambda);
    let rho_s = s.times(Mag::new(budget.rho));
    let lambda_s = s.times(Mag::new(lambda));
    let series_opts = SeriesOptions {
        tol: input_norm * opts.exp_rel_tol,
        max_nu: 1.0 - 1e-12,
    };

    let mut y = x.clone();
    y.scale = s;
    let mut t = s;
    let mut gaps = Vec::with_capacity(us.len());
    let mut scales = Vec::with_capacity(us.len());
    for (n, u) in us.iter().enumerate() {
        let prev = if n == 0 {
            y.clone()
        } else {
            let r = fam.restrict(n - 1, n)?;
            let mut moved = y.with_series(r.apply(&y.series)?);
            moved.level = Level::Finite(n);
            moved
        };
        let next = if u.is_zero() {
            prev.clone()
        } else {
            let share = budget.contributions[n] / total;
            // a share too small to move t in floating point still gets a
            // representable step; nu stays far below one there
            let step = (allowance * share).max(t.mag() * 1e-12);
            let t_next = Scale::from_ln(t.mag().saturating_sub(step).ln());
            let (out, _) = exp_apply_with(u, &prev, t, t_next, series_opts)?;
            t = t_next;
            out
        };
        gaps.push((&next.series - &prev.series).norm(rho_s));
        scales.push(t);
        y = next;
    }
    let mut out = y;
    out.level = Level::Infinity;
    out.scale = lambda_s;

    let lemma_constant = budget.lemma_constant();
    let output_norm = out.series.norm(lambda_s);
    let norm_bound_ok = output_norm.le_rel(input_norm * lemma_constant, 1e-12);

    // K and the per-step gap bounds use N^1 at lambda s
    let local: Vec<Mag> = us.iter().map(|u| u.analytic_norm(1, lambda_s).value / lambda_s.mag()).collect();
    let mut worst_denominator = f64::INFINITY;
    for l in &local {
        worst_denominator = worst_denominator.min(1.0 - lambda - l.to_f64());
    }
    let k_constant = (worst_denominator > 0.0).then(|| lemma_constant / worst_denominator.min(f64::MAX));
    let k_mag = Mag::new(k_constant.unwrap_or(f64::INFINITY));
    let gap_bounds: Vec<Mag> = local.iter().map(|&l| k_mag * l * input_norm).collect();
    let gap_bounds_ok = gaps.iter().zip(&gap_bounds).map(|(g, b)| g.le_rel(*b, 1e-9)).collect();

    let tol = input_norm * opts.rel_tol;
    let mut converged_at = None;
    for n in 0..gaps.len() {
        let tail = k_mag * Mag::sum(local[n + 1..].iter().copied()) * input_norm;
        if gaps[n] < tol && tail < tol {
            converged_at = Some(n);
            break;
        }
    }

    Ok((
        out,
        ProductDiagnostics {
            budget,
            lemma_constant,
            input_norm,
            output_norm,
            norm_bound_ok,
            gaps,
            k_constant,
            gap_bounds,
            gap_bounds_ok,
            converged_at,
            scales,
        },
    ))
}

/// `|g_n x - r g_{n-1} x|_{rho s}` for each `n`.
pub fn cauchy_gaps(us: &[ScaledOperator], x: &ScaledElement, s: Scale, lambda: f64, fam: &ArnoldFamily) -> Result<Vec<Mag>> {
    Ok(product_apply(us, x, s, lambda, fam)?.1.gaps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arnold::constant_arnold;
    use crate::operators::exp_apply;
    use crate::spaces::{CoeffSeries, SpaceSpec};
    use num_complex::Complex64;

    const D: usize = 16;

    fn setup() -> (SpaceSpec, ArnoldFamily, ScaledElement) {
        let space = SpaceSpec::new(1.0, D).unwrap();
        let fam = constant_arnold(space, 40).unwrap();
        let x = space
            .element(CoeffSeries::from_real(&[0.0, 1.0, 0.5, 0.0, 0.25]).unwrap().extended(D), 0.5, Level::Finite(0))
            .unwrap();
        (space, fam, x)
    }

    trait Extend {
        fn extended(self, d: usize) -> CoeffSeries;
    }

    impl Extend for CoeffSeries {
        fn extended(self, d: usize) -> CoeffSeries {
            let mut out = CoeffSeries::zero(d);
            for (j, &c) in self.coeffs().iter().enumerate() {
                out.set_coeff(j, c);
            }
            out
        }
    }

    fn z2_field(c: f64, tau: Scale) -> ScaledOperator {
        let mut v = CoeffSeries::zero(D);
        v.set_coeff(2, Complex64::new(c, 0.0));
        ScaledOperator::vector_field(&v, tau)
    }

    #[test]
    fn zero_factors_leave_input_unchanged() {
        let (_, fam, x) = setup();
        let s = Scale::new(0.5);
        let us = vec![ScaledOperator::zero(D, s); 5];
        let (y, diag) = product_apply(&us, &x, s, 0.5, &fam).unwrap();
        assert_eq!(y.series, x.series);
        assert!(diag.gaps.iter().all(|g| g.is_zero()));
        assert_eq!(diag.lemma_constant, 1.0);
    }

    #[test]
    fn single_factor_is_one_exponential() {
        let (_, fam, x) = setup();
        let s = Scale::new(0.5);
        let u = z2_field(0.1, s);
        let (y, _) = product_apply(&[u.clone()], &x, s, 0.5, &fam).unwrap();
        let (direct, _) = exp_apply(&u, &x, s, Scale::new(0.25), 1e-20).unwrap();
        assert!(y.series.max_abs_diff(&direct.series, D) < 1e-15);
    }

    #[test]
    fn lemma_bound_and_gap_bounds_on_geometric_family() {
        let (_, fam, x) = setup();
        let s = Scale::new(0.5);
        let us: Vec<ScaledOperator> = (0..20).map(|n| z2_field(0.04 * 0.5f64.powi(n), s)).collect();
        let (_, diag) = product_apply(&us, &x, s, 0.5, &fam).unwrap();
        assert_eq!(diag.budget.status, BudgetStatus::WithinBudget);
        assert!(diag.norm_bound_ok, "{} > {} * {}", diag.output_norm, diag.lemma_constant, diag.input_norm);
        let k = diag.k_constant.expect("positive denominators");
        assert!(k >= diag.lemma_constant);
        assert!(diag.gap_bounds_ok.iter().all(|&ok| ok));
        let total: f64 = diag.gaps.iter().map(|g| g.to_f64()).sum();
        assert!(total.is_finite());
        assert!(diag.gaps[19] < diag.gaps[0]);
    }

    #[test]
    fn budget_violation_names_first_offender() {
        let (_, fam, x) = setup();
        let s = Scale::new(0.5);
        // N^1_{0.5}(c z^2 d/dz) is just under c / 4 per factor, allowance 0.25
        let us: Vec<ScaledOperator> = (0..4).map(|_| z2_field(0.4, s)).collect();
        match product_apply(&us, &x, s, 0.5, &fam) {
            Err(KamError::BudgetExceeded(msg)) => assert!(msg.contains("u_2"), "{msg}"),
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn appending_zeros_does_not_move_the_limit() {
        let (_, fam, x) = setup();
        let s = Scale::new(0.5);
        let us: Vec<ScaledOperator> = (0..6).map(|n| z2_field(0.03 * 0.5f64.powi(n), s)).collect();
        let (a, _) = product_apply(&us, &x, s, 0.5, &fam).unwrap();
        let mut padded = us.clone();
        padded.extend(vec![ScaledOperator::zero(D, s); 4]);
        let (b, _) = product_apply(&padded, &x, s, 0.5, &fam).unwrap();
        assert_eq!(a.series, b.series);
    }
}
