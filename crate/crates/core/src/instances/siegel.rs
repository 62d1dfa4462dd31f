//! Linearization of a germ `f(z) = lambda z + O(z^2)` with `|lambda| = 1`.
//!
//! Generators are vector fields `v = O(z^2)`; `e^{-v}` conjugates a germ by
//! the time-one flow `phi` of `v`, `x -> phi^{-1} o x o phi`. Its linearization
//! at `a = lambda z` is `v -> v(lambda z) - lambda v(z)`, diagonal with
//! eigenvalue `lambda^k - lambda` on degree `k`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::arnold::{bruno_sum, constant_arnold, ArnoldFamily, TailModel, TamedSequence};
use crate::error::{KamError, Result};
use crate::kam::{choose_s0, log_candidates, product_options, run, ActionModel, Initialization, KamProblem, RunOutcome};
use crate::mag::{Mag, Scale};
use crate::operators::{exp_apply_with, ScaledOperator, SeriesOptions};
use crate::product::{product_apply_with, ProductDiagnostics};
use crate::schedule::{Exponents, ScheduleParams};
use crate::spaces::{CoeffSeries, Level, SpaceSpec};

/// `(sqrt 5 - 1) / 2`.
pub const GOLDEN: f64 = 0.618_033_988_749_894_8;
/// `sqrt 2 - 1`.
pub const SILVER: f64 = std::f64::consts::SQRT_2 - 1.0;

/// Divisors below this are treated as exact resonances.
pub const RESONANCE_TOL: f64 = 1e-12;

pub fn rotation(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * theta)
}

/// `lambda^k - lambda = lambda (e^{2 pi i (k-1) theta} - 1)`, evaluated
/// through the half-angle form so that small divisors keep full precision.
fn divisor(theta: f64, k: usize) -> Complex64 {
    let x = ((k - 1) as f64 * theta).rem_euclid(1.0);
    let half = Complex64::from_polar(1.0, PI * x);
    rotation(theta) * Complex64::new(0.0, 2.0 * (PI * x).sin()) * half
}

/// The germ to linearize.
#[derive(Clone, Debug, PartialEq)]
pub struct SiegelProblem {
    pub theta: f64,
    pub lambda: Complex64,
    pub f: CoeffSeries,
}

impl SiegelProblem {
    pub fn new(theta: f64, f: CoeffSeries) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(KamError::Domain(format!("rotation number {theta} outside (0, 1)")));
        }
        let lambda = rotation(theta);
        if f.degree_cap() < 2 {
            return Err(KamError::Domain("degree cap must be at least 2".into()));
        }
        if f.coeff(0).norm() != 0.0 || (f.coeff(1) - lambda).norm() > 1e-14 {
            return Err(KamError::Domain("germ must read lambda z + O(z^2)".into()));
        }
        Ok(Self { theta, lambda, f })
    }

    /// `f = lambda z + c z^2`.
    pub fn quadratic(theta: f64, c: f64, degree: usize) -> Result<Self> {
        let mut f = CoeffSeries::zero(degree.max(2));
        f.set_coeff(1, rotation(theta));
        f.set_coeff(2, Complex64::new(c, 0.0));
        Self::new(theta, f)
    }

    pub fn degree(&self) -> usize {
        self.f.degree_cap()
    }

    pub fn linear_part(&self) -> CoeffSeries {
        CoeffSeries::identity(self.degree()).scale(self.lambda)
    }

    /// `g = f - lambda z`.
    pub fn perturbation(&self) -> CoeffSeries {
        &self.f - &self.linear_part()
    }

    /// `|h(lambda z) - f(h(z))|_s`.
    pub fn conjugacy_residual(&self, h: &CoeffSeries, s: Scale) -> Result<Mag> {
        Ok((&h.dilate(self.lambda) - &self.f.compose(h)?).norm(s))
    }
}

/// Small divisors of a rotation and the sequence they induce.
#[derive(Clone, Debug, PartialEq)]
pub struct DivisorTable {
    pub theta: f64,
    pub lambda: Complex64,
    /// `lambda^k - lambda` at index `k`; entries 0 and 1 are unused.
    divisors: Vec<Complex64>,
    /// `p_n = max(1, max_{2 <= k <= 2^n} 1 / |lambda^k - lambda|)`, `n <= levels`.
    pub p: TamedSequence,
    pub bruno: f64,
}

impl DivisorTable {
    /// Largest `k` covered.
    pub fn max_degree(&self) -> usize {
        self.divisors.len() - 1
    }

    pub fn divisor(&self, k: usize) -> Complex64 {
        self.divisors[k]
    }

    /// `|lambda^k - lambda|`.
    pub fn omega(&self, k: usize) -> f64 {
        self.divisors[k].norm()
    }

    /// `max_{2 <= k <= top} 1 / omega(k)`, at least 1.
    pub fn max_inverse(&self, top: usize) -> f64 {
        (2..=top.min(self.max_degree())).map(|k| 1.0 / self.omega(k)).fold(1.0, f64::max)
    }

    /// The quasi-inverse as a diagonal operator on degrees `2 <= k < cutoff`.
    pub fn operator(&self, degree: usize, cutoff: usize, tau: Scale) -> ScaledOperator {
        let weights: Vec<Complex64> = (0..=degree)
            .map(|k| {
                if (2..cutoff).contains(&k) {
                    self.divisors[k].inv()
                } else {
                    Complex64::default()
                }
            })
            .collect();
        ScaledOperator::diagonal(&weights, tau, "j")
    }
}

/// Divisors through `max(degree, 2^levels)` and `p_n` for `n <= levels`.
pub fn divisor_table(theta: f64, degree: usize, levels: u32) -> Result<DivisorTable> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(KamError::Domain(format!("rotation number {theta} outside (0, 1)")));
    }
    if levels >= 40 {
        return Err(KamError::Domain(format!("{levels} levels is more than the table can hold")));
    }
    let top = degree.max(1 << levels).max(2);
    let mut divisors = vec![Complex64::default(); top + 1];
    for (k, d) in divisors.iter_mut().enumerate().skip(2) {
        *d = divisor(theta, k);
        if d.norm() < RESONANCE_TOL {
            return Err(KamError::Resonance {
                degree: k,
                divisor: d.norm(),
            });
        }
    }
    let mut table = DivisorTable {
        theta,
        lambda: rotation(theta),
        divisors,
        p: TamedSequence::ones(),
        bruno: 0.0,
    };
    let values: Vec<f64> = (0..=levels).map(|n| table.max_inverse(1 << n)).collect();
    table.p = TamedSequence::new(&values, TailModel::Constant)?;
    table.bruno = bruno_sum(&table.p);
    if !table.bruno.is_finite() {
        return Err(KamError::NotTamed("divisor sequence".into()));
    }
    Ok(table)
}

/// `v_k = rhs_k / (lambda^k - lambda)` for `2 <= k < cutoff_degree`, zero beyond.
pub fn siegel_quasi_inverse(rhs: &CoeffSeries, table: &DivisorTable, cutoff_degree: usize) -> Result<CoeffSeries> {
    if rhs.coeff(0).norm() != 0.0 || rhs.coeff(1).norm() != 0.0 {
        return Err(KamError::Contract("right-hand side must be O(z^2)".into()));
    }
    let degree = rhs.degree_cap();
    if degree > table.max_degree() {
        return Err(KamError::Contract(format!(
            "divisor table covers degree {} < {degree}",
            table.max_degree()
        )));
    }
    let mut v = CoeffSeries::zero(degree);
    for k in 2..=degree.min(cutoff_degree.saturating_sub(1)) {
        v.set_coeff(k, rhs.coeff(k) / table.divisor(k));
    }
    Ok(v)
}

/// `v(lambda z) - lambda v(z)`.
pub fn linearized_action(v: &CoeffSeries, lambda: Complex64) -> CoeffSeries {
    &v.dilate(lambda) - &v.scale(lambda)
}

/// Formal linearization degree by degree: `h_k = [g o h_{<k}]_k / (lambda^k - lambda)`.
pub fn oracle_linearize(problem: &SiegelProblem) -> Result<CoeffSeries> {
    let d = problem.degree();
    let g = problem.perturbation();
    let mut h = CoeffSeries::identity(d);
    for k in 2..=d {
        let div = divisor(problem.theta, k);
        if div.norm() < RESONANCE_TOL {
            return Err(KamError::Resonance {
                degree: k,
                divisor: div.norm(),
            });
        }
        // g = O(z^2), so the degree-k coefficient only sees h_j with j < k
        let defect = g.compose(&h)?.coeff(k);
        h.set_coeff(k, defect / div);
    }
    Ok(h)
}

fn exact() -> SeriesOptions {
    SeriesOptions {
        tol: Mag::ZERO,
        max_nu: 0.5,
    }
}

fn element(x: &CoeffSeries, s: Scale) -> Result<crate::spaces::ScaledElement> {
    SpaceSpec::new(f64::MAX, x.degree_cap())?.element_at(x.clone(), s, Level::Finite(0))
}

/// The conjugation action with `F = {0}`, `G` everything.
#[derive(Clone, Debug)]
pub struct SiegelModel {
    pub a: CoeffSeries,
    pub table: DivisorTable,
}

impl SiegelModel {
    pub fn new(table: DivisorTable, degree: usize) -> Self {
        Self {
            a: CoeffSeries::identity(degree).scale(table.lambda),
            table,
        }
    }

    /// Time-one flow of `v` (or of `-v`), as `e^{+-v d/dz} z` from `tau` to `s`.
    pub fn flow(&self, v: &CoeffSeries, backward: bool, tau: Scale, s: Scale) -> Result<CoeffSeries> {
        let mut op = ScaledOperator::vector_field(v, tau);
        if backward {
            op = op.neg();
        }
        let z = CoeffSeries::identity(v.degree_cap());
        Ok(exp_apply_with(&op, &element(&z, tau)?, tau, s, exact())?.0.series)
    }

    /// `Phi = phi_0 o ... o phi_n` as an infinite product at scale `s`,
    /// valid at `lambda s`.
    pub fn conjugacy(
        &self,
        gens: &[CoeffSeries],
        s: Scale,
        lambda: f64,
        fam: &ArnoldFamily,
    ) -> Result<(CoeffSeries, ProductDiagnostics)> {
        let ops: Vec<ScaledOperator> = gens.iter().map(|v| ScaledOperator::vector_field(v, s)).collect();
        let z = CoeffSeries::identity(self.degree());
        let (out, diag) = product_apply_with(&ops, &element(&z, s)?, s, lambda, fam, product_options())?;
        Ok((out.series, diag))
    }
}

impl ActionModel for SiegelModel {
    type Gen = CoeffSeries;

    fn degree(&self) -> usize {
        self.a.degree_cap()
    }

    fn base_point(&self) -> &CoeffSeries {
        &self.a
    }

    fn project_f(&self, x: &CoeffSeries) -> CoeffSeries {
        CoeffSeries::zero(x.degree_cap())
    }

    fn project_g(&self, x: &CoeffSeries) -> CoeffSeries {
        x.clone()
    }

    fn quasi_inverse(&self, _alpha_sum: &CoeffSeries, rhs: &CoeffSeries, _n: usize, cutoff_degree: usize) -> Result<CoeffSeries> {
        siegel_quasi_inverse(rhs, &self.table, cutoff_degree)
    }

    /// `u(x) = v o x - x' v`.
    fn act(&self, v: &CoeffSeries, x: &CoeffSeries) -> Result<CoeffSeries> {
        Ok(&v.compose(x)? - &x.derivative().try_mul(v)?)
    }

    fn exp_neg(&self, v: &CoeffSeries, x: &CoeffSeries, tau: Scale, s: Scale) -> Result<CoeffSeries> {
        let phi = self.flow(v, false, tau, s)?;
        let phi_inv = self.flow(v, true, tau, s)?;
        phi_inv.compose(&x.compose(&phi)?)
    }

    fn generator(&self, v: &CoeffSeries, tau: Scale) -> ScaledOperator {
        ScaledOperator::vector_field(v, tau)
    }

    fn assemble(
        &self,
        gens: &[CoeffSeries],
        x: &CoeffSeries,
        s: Scale,
        lambda: f64,
        fam: &ArnoldFamily,
    ) -> Result<(CoeffSeries, ProductDiagnostics)> {
        let (phi, diag) = self.conjugacy(gens, s, lambda, fam)?;
        let conjugated = phi.compositional_inverse()?.compose(&x.compose(&phi)?)?;
        Ok((conjugated, diag))
    }
}

/// Knobs of a Siegel run.
#[derive(Clone, Debug, PartialEq)]
pub struct SiegelConfig {
    pub a: f64,
    pub steps: usize,
    /// Tameness constant; `None` takes `e max_{k <= D} 1 / omega(k)`.
    pub c_tame: Option<f64>,
    pub comparison_degree: usize,
    pub levels: u32,
    /// Candidate `ln s0` grid, scanned downward.
    pub ln_s0_hi: f64,
    pub ln_s0_lo: f64,
    pub ln_s0_step: f64,
    /// Rescale `beta_0` to this multiple of `eps_0` after `s0` is chosen.
    pub inflate_beta: Option<f64>,
}

impl Default for SiegelConfig {
    fn default() -> Self {
        Self {
            a: 1.5,
            steps: 8,
            c_tame: None,
            comparison_degree: 16,
            levels: 12,
            ln_s0_hi: (0.25f64).ln(),
            ln_s0_lo: -4000.0,
            ln_s0_step: 0.5,
            inflate_beta: None,
        }
    }
}

/// Everything a Siegel run produces.
#[derive(Clone, Debug)]
pub struct SiegelReport {
    pub table: DivisorTable,
    /// `psi = z + c z^2` removes the quadratic term before the iteration.
    pub prenormal_c: Complex64,
    /// The germ actually linearized (differs from the input only when inflated).
    pub target: SiegelProblem,
    pub init: Initialization,
    pub outcome: RunOutcome<CoeffSeries>,
    pub c_tame: f64,
    pub h_engine: CoeffSeries,
    pub h_oracle: CoeffSeries,
    pub comparison_degree: usize,
    /// `max_{k <= comparison_degree} |h_engine_k - h_oracle_k|`.
    pub deviation: f64,
    /// `|beta_n|_{s_n}` for every step taken.
    pub beta_norms: Vec<Mag>,
    /// `|h_n(lambda z) - f(h_n(z))|_{s_{n+1}}` with `h_n = psi o phi_0 o ... o phi_n`.
    pub conjugacy_residuals: Vec<Mag>,
    pub residual_monotone: bool,
}

impl SiegelReport {
    pub fn bounds_ok(&self) -> bool {
        self.outcome.all_bounds_ok()
    }
}

/// Pre-normalize, run the iteration on `F = {0}`, `G = O(z^2)` with the
/// constant Arnold family, and compare with the formal oracle.
pub fn siegel_run(problem: &SiegelProblem, config: &SiegelConfig) -> Result<SiegelReport> {
    let d = problem.degree();
    let table = divisor_table(problem.theta, d, config.levels)?;

    let b2 = problem.f.coeff(2);
    let prenormal_c = b2 / table.divisor(2);
    let mut psi = CoeffSeries::identity(d);
    psi.set_coeff(2, prenormal_c);
    let psi_inv = psi.compositional_inverse()?;
    let mut f_pre = psi_inv.compose(&problem.f.compose(&psi)?)?;
    f_pre.set_coeff(2, Complex64::default());

    let c_tame = config.c_tame.unwrap_or(std::f64::consts::E * table.max_inverse(d));
    let exps = Exponents {
        k: 0,
        l: 0,
        m: 0,
        d: 0.0,
        mu: 3.0,
    };
    let params = ScheduleParams::new(exps, config.a, c_tame, config.steps);
    let model = SiegelModel::new(table.clone(), d);
    let fam = constant_arnold(SpaceSpec::new(1.0, d)?, config.steps + 2)?;
    let b_pre = &f_pre - &model.a;
    let mut kp = KamProblem::new(model, fam, b_pre, table.p.clone(), params);
    let candidates = log_candidates(config.ln_s0_hi, config.ln_s0_lo, config.ln_s0_step);
    let init = choose_s0(&kp, &candidates, false)?;

    let target = match config.inflate_beta {
        Some(factor) if !init.norm_b.is_zero() => {
            let k = factor * (init.schedule.eps(0) / init.norm_b).to_f64();
            kp.b = kp.b.scale(Complex64::new(k, 0.0));
            let f_pre_run = &kp.model.a + &kp.b;
            SiegelProblem::new(problem.theta, psi.compose(&f_pre_run.compose(&psi_inv)?)?)?
        }
        _ => problem.clone(),
    };

    let schedule = &init.schedule;
    let outcome = run(&kp, schedule, config.steps, Mag::ZERO)?;

    // per-step conjugacies, composed with the exponentials the steps used
    let mut phi = CoeffSeries::identity(d);
    let mut conjugacy_residuals = Vec::with_capacity(outcome.state.gens.len());
    for (n, v) in outcome.state.gens.iter().enumerate() {
        let step = kp.model.flow(v, false, schedule.shrunk(n, 4), schedule.s(n + 1))?;
        phi = phi.compose(&step)?;
        let h_n = psi.compose(&phi)?;
        conjugacy_residuals.push(target.conjugacy_residual(&h_n, schedule.s(n + 1))?);
    }
    let residual_monotone = conjugacy_residuals.windows(2).all(|w| w[1] < w[0] || w[0].is_zero());

    let (big_phi, _) = kp.model.conjugacy(
        &outcome.state.gens,
        schedule.s_inf(),
        crate::kam::PRODUCT_LAMBDA,
        &kp.fam,
    )?;
    let h_engine = psi.compose(&big_phi)?;
    let h_oracle = oracle_linearize(&target)?;
    let comparison_degree = config.comparison_degree.min(d);
    let deviation = h_engine.max_abs_diff(&h_oracle, comparison_degree);
    let beta_norms = outcome.state.transcript.iter().map(|r| r.norm_beta).collect();

    Ok(SiegelReport {
        table,
        prenormal_c,
        target,
        init,
        outcome,
        c_tame,
        h_engine,
        h_oracle,
        comparison_degree,
        deviation,
        beta_norms,
        conjugacy_residuals,
        residual_monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_table_is_tamed() {
        let t = divisor_table(GOLDEN, 64, 12).unwrap();
        assert_eq!(t.max_degree(), 4096);
        assert!(t.bruno.is_finite() && t.p.is_nondecreasing());
        assert!((2..=4096).all(|k| t.omega(k) > 0.0 && t.omega(k) <= 2.0));
        let direct = (rotation(GOLDEN).powu(7) - rotation(GOLDEN)).norm();
        assert!((t.omega(7) - direct).abs() < 1e-13);
    }

    #[test]
    fn rational_rotation_resonates() {
        match divisor_table(0.5, 8, 3) {
            Err(KamError::Resonance { degree, .. }) => assert_eq!(degree, 3),
            other => panic!("expected resonance, got {other:?}"),
        }
    }

    #[test]
    fn quasi_inverse_solves_below_cutoff() {
        let t = divisor_table(GOLDEN, 12, 4).unwrap();
        let rhs = CoeffSeries::monomial(2, 12);
        let v = siegel_quasi_inverse(&rhs, &t, 8).unwrap();
        let lam = t.lambda;
        assert!((v.coeff(2) - (lam * lam - lam).inv()).norm() < 1e-15);

        let mut wide = CoeffSeries::zero(12);
        for k in 2..=12 {
            wide.set_coeff(k, Complex64::new(1.0 / k as f64, 0.5));
        }
        let v = siegel_quasi_inverse(&wide, &t, 8).unwrap();
        let defect = &wide - &linearized_action(&v, lam);
        assert!((0..8).all(|k| defect.coeff(k).norm() < 1e-14));
        assert!((8..=12).all(|k| defect.coeff(k) == wide.coeff(k)));
    }

    #[test]
    fn quasi_inverse_norm_tracks_p() {
        let t = divisor_table(GOLDEN, 64, 6).unwrap();
        let tau = Scale::new(0.5);
        for n in 1..=6 {
            let op = t.operator(64, (1 << n) + 1, tau);
            let c = op.analytic_norm(0, tau).cauchy_constant().to_f64();
            let p = t.p.value_at(n);
            assert!(c <= 2.0 * p && p <= 2.0 * c, "n = {n}: {c} vs {p}");
        }
    }

    #[test]
    fn oracle_on_linear_germ_is_identity() {
        let pb = SiegelProblem::quadratic(GOLDEN, 0.0, 10).unwrap();
        assert_eq!(oracle_linearize(&pb).unwrap(), CoeffSeries::identity(10));
    }

    #[test]
    fn oracle_solves_degree_two_and_conjugates() {
        let pb = SiegelProblem::quadratic(GOLDEN, 1.0, 5).unwrap();
        let h = oracle_linearize(&pb).unwrap();
        let lam = pb.lambda;
        assert!((h.coeff(2) * (lam * lam - lam) - 1.0).norm() < 1e-14);
        let r = &h.dilate(lam) - &pb.f.compose(&h).unwrap();
        assert!(r.coeffs().iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn conjugation_action_linearizes_to_divisors() {
        let t = divisor_table(GOLDEN, 8, 3).unwrap();
        let model = SiegelModel::new(t.clone(), 8);
        let v = CoeffSeries::monomial(3, 8);
        let u_a = model.act(&v, &model.a).unwrap();
        assert!((u_a.coeff(3) - t.divisor(3)).norm() < 1e-15);
        assert!(u_a.max_abs_diff(&linearized_action(&v, t.lambda), 8) < 1e-15);
    }

    #[test]
    fn zero_perturbation_gives_identity_conjugacy() {
        let pb = SiegelProblem::quadratic(GOLDEN, 0.0, 16).unwrap();
        let cfg = SiegelConfig {
            steps: 3,
            ..SiegelConfig::default()
        };
        let rep = siegel_run(&pb, &cfg).unwrap();
        assert_eq!(rep.deviation, 0.0);
        assert_eq!(rep.h_engine, CoeffSeries::identity(16));
    }

    #[test]
    fn golden_run_meets_every_bound() {
        let pb = SiegelProblem::quadratic(GOLDEN, 1e-3, 64).unwrap();
        let rep = siegel_run(&pb, &SiegelConfig::default()).unwrap();
        assert_eq!(rep.outcome.state.transcript.len(), 8);
        for r in &rep.outcome.state.transcript {
            assert!(r.bounds.all_ok(), "step {}: {:?}", r.n, r.bounds);
        }
        assert!(rep.outcome.residual_ok);
        assert!(rep.deviation < 1e-8, "{}", rep.deviation);
        assert!(rep.residual_monotone);
        assert!(rep.outcome.measured_c_tame <= Mag::new(rep.c_tame));
    }

    #[test]
    fn inflated_start_breaks_bound_ii() {
        let pb = SiegelProblem::quadratic(GOLDEN, 1e-3, 32).unwrap();
        let cfg = SiegelConfig {
            steps: 3,
            inflate_beta: Some(2.0),
            ..SiegelConfig::default()
        };
        let rep = siegel_run(&pb, &cfg).unwrap();
        assert!(!rep.outcome.state.transcript[0].bounds.ii);
        assert!(!rep.bounds_ok());
    }
}
