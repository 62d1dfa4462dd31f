//! The KAM iteration and its per-step estimate checks.
//!
//! Starting from `a_0 = a`, `beta_0 = b` the engine iterates
//!
//! ```text
//! alpha_n   = pi_F(beta_n)
//! u_n       = j(alpha_0 + ... + alpha_{n-1}) (pi_G beta_n)
//! gamma_n   = pi_G(beta_n - u_n(a_n))
//! a_{n+1}   = a_n + alpha_n
//! beta_{n+1} = e^{-u_n}(a_n + beta_n) - a_{n+1}
//! ```
//!
//! so that `a_{n+1} + beta_{n+1} = g_n(a + b)` with `g_n = e^{-u_n} ... e^{-u_0}`.
//! Every inequality of the convergence argument is evaluated and recorded;
//! a violated bound does not stop the run.

use std::fmt::Debug;

use num_complex::Complex64;

use crate::arnold::{ArnoldFamily, TamedSequence};
use crate::error::{KamError, Result};
use crate::mag::{Mag, Scale};
use crate::operators::{exp_apply_with, exp_defect2_with, exp_defect3_with, exp_parameter, ScaledOperator, SeriesOptions};
use crate::product::{product_apply_with, ProductDiagnostics, ProductOptions};
use crate::schedule::{build_schedule, Schedule, ScheduleParams};
use crate::spaces::{CoeffSeries, Level, SpaceSpec};

/// Relative slack used when comparing a computed norm with its bound.
pub const BOUND_SLACK: f64 = 1e-9;

/// The group action being iterated: a base point, a splitting `M = F + G`,
/// generators with their action and exponential, and a quasi-inverse.
pub trait ActionModel {
    type Gen: Clone + Debug;

    fn degree(&self) -> usize;
    fn base_point(&self) -> &CoeffSeries;
    fn project_f(&self, x: &CoeffSeries) -> CoeffSeries;
    fn project_g(&self, x: &CoeffSeries) -> CoeffSeries;

    /// `j(alpha_sum) rhs`, solving `u(a_n) = rhs` on degrees below `cutoff_degree`.
    fn quasi_inverse(&self, alpha_sum: &CoeffSeries, rhs: &CoeffSeries, n: usize, cutoff_degree: usize) -> Result<Self::Gen>;

    /// Infinitesimal action `u(x)`.
    fn act(&self, u: &Self::Gen, x: &CoeffSeries) -> Result<CoeffSeries>;

    /// `e^{-u} x`, evaluated with an exponential valid from scale `tau` to `s`.
    fn exp_neg(&self, u: &Self::Gen, x: &CoeffSeries, tau: Scale, s: Scale) -> Result<CoeffSeries>;

    /// Linear operator carrying the generator's `N^1` norm.
    fn generator(&self, u: &Self::Gen, tau: Scale) -> ScaledOperator;

    /// `g(x)` for `g = e^{-u_n} ... e^{-u_0}`, assembled as an infinite product
    /// at scale `s`, together with the product diagnostics; the result lives at
    /// scale `lambda s`.
    fn assemble(&self, gens: &[Self::Gen], x: &CoeffSeries, s: Scale, lambda: f64, fam: &ArnoldFamily)
        -> Result<(CoeffSeries, ProductDiagnostics)>;

    /// `beta_{n+1} = A_n + B_n + C_n`. The default splits
    /// `T = e^{-u}` into successive increments
    /// `A = T(a + u(a)) - a`, `B = T(a + u(a) + alpha) - T(a + u(a)) - alpha`,
    /// `C = T(a + beta) - T(a + u(a) + alpha)`, which for a linear action are
    /// `(e^{-u}(Id+u) - Id) a`, `(e^{-u} - Id) alpha` and `e^{-u} gamma`.
    fn decompose(
        &self,
        u: &Self::Gen,
        a: &CoeffSeries,
        alpha: &CoeffSeries,
        beta: &CoeffSeries,
        tau: Scale,
        s: Scale,
    ) -> Result<[CoeffSeries; 3]> {
        let x1 = a + &self.act(u, a)?;
        let x2 = &x1 + alpha;
        let t1 = self.exp_neg(u, &x1, tau, s)?;
        let t2 = self.exp_neg(u, &x2, tau, s)?;
        let t3 = self.exp_neg(u, &(a + beta), tau, s)?;
        Ok([&t1 - a, &(&t2 - &t1) - alpha, &t3 - &t2])
    }
}

type QuasiInverse = dyn Fn(&CoeffSeries, &CoeffSeries, usize) -> Result<ScaledOperator>;

/// A linear action by operators: `u(x) = u x`, `e^{-u}` the operator exponential.
pub struct LinearModel {
    pub a: CoeffSeries,
    pub proj_f: ScaledOperator,
    pub proj_g: ScaledOperator,
    /// `(alpha_sum, rhs, cutoff_degree) -> u` with `u a = rhs` below the cutoff.
    pub j: Box<QuasiInverse>,
}

impl Debug for LinearModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearModel")
            .field("a", &self.a)
            .field("proj_f", &self.proj_f.label)
            .field("proj_g", &self.proj_g.label)
            .finish()
    }
}

fn element(x: &CoeffSeries, s: Scale) -> Result<crate::spaces::ScaledElement> {
    // scales here may sit far below any f64, so the bound is only a formal cap
    SpaceSpec::new(f64::MAX, x.degree_cap())?.element_at(x.clone(), s, Level::Finite(0))
}

fn exact_series() -> SeriesOptions {
    SeriesOptions {
        tol: Mag::ZERO,
        max_nu: 0.5,
    }
}

impl ActionModel for LinearModel {
    type Gen = ScaledOperator;

    fn degree(&self) -> usize {
        self.a.degree_cap()
    }

    fn base_point(&self) -> &CoeffSeries {
        &self.a
    }

    fn project_f(&self, x: &CoeffSeries) -> CoeffSeries {
        self.proj_f.apply(x).expect("projection cap matches the model")
    }

    fn project_g(&self, x: &CoeffSeries) -> CoeffSeries {
        self.proj_g.apply(x).expect("projection cap matches the model")
    }

    fn quasi_inverse(&self, alpha_sum: &CoeffSeries, rhs: &CoeffSeries, _n: usize, cutoff_degree: usize) -> Result<ScaledOperator> {
        (self.j)(alpha_sum, rhs, cutoff_degree)
    }

    fn act(&self, u: &ScaledOperator, x: &CoeffSeries) -> Result<CoeffSeries> {
        u.apply(x)
    }

    fn exp_neg(&self, u: &ScaledOperator, x: &CoeffSeries, tau: Scale, s: Scale) -> Result<CoeffSeries> {
        let mut neg = u.neg();
        neg.tau = tau;
        Ok(exp_apply_with(&neg, &element(x, tau)?, tau, s, exact_series())?.0.series)
    }

    fn generator(&self, u: &ScaledOperator, tau: Scale) -> ScaledOperator {
        let mut op = u.clone();
        op.tau = tau;
        op
    }

    fn assemble(
        &self,
        gens: &[ScaledOperator],
        x: &CoeffSeries,
        s: Scale,
        lambda: f64,
        fam: &ArnoldFamily,
    ) -> Result<(CoeffSeries, ProductDiagnostics)> {
        let negs: Vec<ScaledOperator> = gens.iter().map(|u| self.generator(&u.neg(), s)).collect();
        let (out, diag) = product_apply_with(&negs, &element(x, s)?, s, lambda, fam, product_options())?;
        Ok((out.series, diag))
    }

    fn decompose(
        &self,
        u: &ScaledOperator,
        a: &CoeffSeries,
        alpha: &CoeffSeries,
        beta: &CoeffSeries,
        tau: Scale,
        s: Scale,
    ) -> Result<[CoeffSeries; 3]> {
        let mut op = u.clone();
        op.tau = tau;
        let gamma = &(&self.project_g(beta) - &u.apply(a)?) + &(&self.project_f(beta) - alpha);
        let big_a = exp_defect2_with(&op, &element(a, tau)?, tau, s, exact_series())?.series;
        let big_b = exp_defect3_with(&op, &element(alpha, tau)?, tau, s, exact_series())?.series;
        let big_c = self.exp_neg(u, &gamma, tau, s)?;
        Ok([big_a, big_b, big_c])
    }
}

pub(crate) fn product_options() -> ProductOptions {
    ProductOptions {
        rel_tol: 1e-14,
        exp_rel_tol: 0.0,
    }
}

/// Everything the iteration needs besides the schedule.
#[derive(Debug)]
pub struct KamProblem<M: ActionModel> {
    pub model: M,
    pub fam: ArnoldFamily,
    pub b: CoeffSeries,
    /// Raw small-divisor sequence; regularised when the schedule is built.
    pub p: TamedSequence,
    pub params: ScheduleParams,
    /// Constant multiplying every norm, chosen so that `|a|_{s0} <= 1/4`.
    pub norm_rescale: f64,
}

/// Structural checks on a problem, evaluated on the monomial basis.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemCheck {
    pub projections_sum_to_identity: bool,
    pub projections_orthogonal: bool,
    pub regularity_ok: bool,
}

impl<M: ActionModel> KamProblem<M> {
    pub fn new(model: M, fam: ArnoldFamily, b: CoeffSeries, p: TamedSequence, params: ScheduleParams) -> Self {
        Self {
            model,
            fam,
            b,
            p,
            params,
            norm_rescale: 1.0,
        }
    }

    pub fn norm(&self, x: &CoeffSeries, s: Scale) -> Mag {
        x.norm(s) * self.norm_rescale
    }

    pub fn check(&self) -> ProblemCheck {
        let d = self.model.degree();
        let mut sum_ok = true;
        let mut orth_ok = true;
        for j in 0..=d {
            let e = CoeffSeries::monomial(j, d);
            let f = self.model.project_f(&e);
            let g = self.model.project_g(&e);
            sum_ok &= (&f + &g).max_abs_diff(&e, d) <= 1e-15;
            orth_ok &= self.model.project_f(&g).max_abs_diff(&CoeffSeries::zero(d), d) <= 1e-15;
        }
        ProblemCheck {
            projections_sum_to_identity: sum_ok,
            projections_orthogonal: orth_ok,
            regularity_ok: self.params.exponents.regularity_ok(),
        }
    }

    /// Regularise `p` and build the schedule from `s0`.
    pub fn schedule(&self, s0: Scale) -> Result<Schedule> {
        let p = self.params.prepare(&self.p)?;
        build_schedule(&p, s0, &self.params)
    }
}

/// Initial smallness at a candidate `s0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Initialization {
    pub s0: Scale,
    pub schedule: Schedule,
    pub norm_a: Mag,
    pub norm_b: Mag,
    pub norm_alpha0: Mag,
    pub rescaled_by: f64,
}

/// The largest candidate `s0` with `|a|_{s0} <= 1/4`, `|b|_{s0} <= eps_0` and
/// `|alpha_0|_{rho_0^4 s0} <= eps_0`. With `rescale` set, norms are first
/// multiplied by `min(1, 1 / (4 |a|_{s0}))` for each candidate.
pub fn choose_s0<M: ActionModel>(problem: &KamProblem<M>, candidates: &[Scale], rescale: bool) -> Result<Initialization> {
    if candidates.is_empty() {
        return Err(KamError::InitializationFailed("no candidate scales".into()));
    }
    let p = problem.params.prepare(&problem.p)?;
    let a = problem.model.base_point();
    let alpha0 = problem.model.project_f(&problem.b);
    let mut last_failure = String::new();
    for &s0 in candidates {
        let schedule = build_schedule(&p, s0, &problem.params)?;
        let raw_a = a.norm(s0) * problem.norm_rescale;
        let factor = if rescale && raw_a > Mag::new(0.25) {
            problem.norm_rescale * (Mag::new(0.25) / raw_a).to_f64()
        } else {
            problem.norm_rescale
        };
        let norm_a = a.norm(s0) * factor;
        let norm_b = problem.b.norm(s0) * factor;
        let norm_alpha0 = alpha0.norm(schedule.shrunk(0, 4)) * factor;
        let eps0 = schedule.eps(0);
        if !norm_a.le_rel(Mag::new(0.25), BOUND_SLACK) {
            last_failure = format!("|a|_s0 = {norm_a} > 1/4 at s0 = {:?}", s0);
        } else if !norm_b.le_rel(eps0, BOUND_SLACK) {
            last_failure = format!("|b|_s0 = {norm_b} > eps_0 = {eps0} at s0 = {:?}", s0);
        } else if !norm_alpha0.le_rel(eps0, BOUND_SLACK) {
            last_failure = format!("|alpha_0| = {norm_alpha0} > eps_0 = {eps0} at s0 = {:?}", s0);
        } else {
            return Ok(Initialization {
                s0,
                schedule,
                norm_a,
                norm_b,
                norm_alpha0,
                rescaled_by: factor,
            });
        }
    }
    Err(KamError::InitializationFailed(last_failure))
}

/// Descending candidates `s = e^{ln_hi}, e^{ln_hi - step}, ...` down to `e^{ln_lo}`.
pub fn log_candidates(ln_hi: f64, ln_lo: f64, step: f64) -> Vec<Scale> {
    let count = ((ln_hi - ln_lo) / step).floor() as usize + 1;
    (0..count).map(|i| Scale::from_ln(ln_hi - step * i as f64)).collect()
}

/// Outcome of every inequality at one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepBounds {
    /// `|alpha_n|_{rho_n^4 s_n} <= eps_n`.
    pub i: bool,
    /// `|beta_n|_{s_n} <= eps_n`.
    pub ii: bool,
    /// `|gamma_n|_{rho_n^4 s_n} <= eps_{n+1} sigma_{n+1}^m / 6`.
    pub iii: bool,
    /// `N^1_{rho_n s_n}(u_n) <= C eps_n sigma_n^{-k}`.
    pub star: bool,
    /// `|A_n| <= C^2 eps_n^2 sigma_n^{-2k-2}`.
    pub a: bool,
    /// `|B_n| <= 2 C eps_n^2 sigma_n^{-k-1}`.
    pub b: bool,
    /// `|C_n| <= eps_{n+1} sigma_{n+1}^m / 3`.
    pub c: bool,
    /// `|beta_{n+1}|_{s_{n+1}} <= eps_{n+1} sigma_{n+1}^m`.
    pub strong_ii: bool,
    /// `N^1_{s_inf}(u_n) < s_inf^{k+l+m+2} e^{-A^n}`.
    pub generator_decay: bool,
    /// `beta_{n+1} = A_n + B_n + C_n` to rounding.
    pub decomposition: bool,
    /// `u_n(a_n)` lies in `G`.
    pub image_in_g: bool,
}

impl StepBounds {
    /// The seven estimates reported in transcripts.
    pub fn core_ok(&self) -> bool {
        self.i && self.ii && self.iii && self.star && self.a && self.b && self.c
    }

    pub fn all_ok(&self) -> bool {
        self.core_ok() && self.strong_ii && self.generator_decay && self.decomposition && self.image_in_g
    }
}

/// Measured quantities of one step, with norms already rescaled.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub n: usize,
    pub s_n: Scale,
    pub rho_n: Mag,
    pub sigma_n: Mag,
    pub eps_n: Mag,
    pub norm_alpha: Mag,
    pub norm_beta: Mag,
    pub norm_gamma: Mag,
    pub n1_u: Mag,
    pub n1_u_limit: Mag,
    pub nu: Mag,
    pub norm_a_part: Mag,
    pub norm_b_part: Mag,
    pub norm_c_part: Mag,
    pub norm_beta_next: Mag,
    /// `|beta_{n+1} - (A + B + C)|` relative to the largest of the five norms.
    pub decomposition_error: f64,
    /// `|pi_F u_n(a_n)|` relative to `|u_n(a_n)|`.
    pub image_leak: f64,
    /// `N^1(u_n) sigma_n^k / |pi_G beta_n|`, the observed tameness ratio.
    pub tameness_ratio: Mag,
    pub bounds: StepBounds,
}

/// The estimates of one step, evaluated from its recorded norms.
pub fn check_step(report: &StepReport, schedule: &Schedule, n: usize) -> StepBounds {
    let e = schedule.params.exponents;
    let c = Mag::new(schedule.params.c_tame.max(1.0));
    let eps = schedule.eps(n);
    let eps1 = schedule.eps(n + 1);
    let sigma = schedule.sigma(n);
    let sigma1_m = schedule.sigma(n + 1).powi(e.m as i32);
    let k = e.k as i32;
    let ok = |x: Mag, bound: Mag| x.le_rel(bound, BOUND_SLACK);
    let s_inf = schedule.s_inf().mag();
    let decay = s_inf.powi((e.k + e.l + e.m + 2) as i32) * Mag::from_ln(-schedule.params.a.powi(n as i32));
    StepBounds {
        i: ok(report.norm_alpha, eps),
        ii: ok(report.norm_beta, eps),
        iii: ok(report.norm_gamma, eps1 * sigma1_m / Mag::new(6.0)),
        star: ok(report.n1_u, c * eps * sigma.powi(-k)),
        a: ok(report.norm_a_part, c * c * eps * eps * sigma.powi(-2 * k - 2)),
        b: ok(report.norm_b_part, Mag::new(2.0) * c * eps * eps * sigma.powi(-k - 1)),
        c: ok(report.norm_c_part, eps1 * sigma1_m / Mag::new(3.0)),
        strong_ii: ok(report.norm_beta_next, eps1 * sigma1_m),
        generator_decay: report.n1_u_limit.is_zero() || report.n1_u_limit < decay,
        decomposition: report.decomposition_error <= 1e-9,
        image_in_g: report.image_leak <= 1e-12,
    }
}

#[derive(Clone, Debug)]
pub struct IterationState<G> {
    pub n: usize,
    pub a_n: CoeffSeries,
    pub beta_n: CoeffSeries,
    pub alpha_sum: CoeffSeries,
    pub gens: Vec<G>,
    pub transcript: Vec<StepReport>,
}

impl<G> IterationState<G> {
    pub fn start(a: &CoeffSeries, b: &CoeffSeries) -> Self {
        Self {
            n: 0,
            a_n: a.clone(),
            beta_n: b.clone(),
            alpha_sum: CoeffSeries::zero(a.degree_cap()),
            gens: Vec::new(),
            transcript: Vec::new(),
        }
    }
}

fn relative(diff: Mag, scale: Mag) -> f64 {
    if diff.is_zero() {
        0.0
    } else if scale.is_zero() {
        f64::INFINITY
    } else {
        (diff / scale).to_f64()
    }
}

/// One step `n -> n + 1`.
pub fn kam_step<M: ActionModel>(
    state: IterationState<M::Gen>,
    problem: &KamProblem<M>,
    schedule: &Schedule,
) -> Result<IterationState<M::Gen>> {
    let n = state.n;
    if n > schedule.horizon() {
        return Err(KamError::Contract(format!("step {n} beyond schedule horizon {}", schedule.horizon())));
    }
    let model = &problem.model;
    let s_n = schedule.s(n);
    let s_u = schedule.shrunk(n, 1);
    let s_in = schedule.shrunk(n, 4);
    let s_next = schedule.s(n + 1);

    let alpha = model.project_f(&state.beta_n);
    let g_part = model.project_g(&state.beta_n);
    let u = model.quasi_inverse(&state.alpha_sum, &g_part, n, schedule.cutoff_degree(n))?;
    let u_a = model.act(&u, &state.a_n)?;
    let gamma = model.project_g(&(&state.beta_n - &u_a));
    let a_next = &state.a_n + &alpha;

    let image = a_next.clone();
    let moved = model.exp_neg(&u, &(&state.a_n + &state.beta_n), s_in, s_next)?;
    let beta_next = &moved - &image;
    let [big_a, big_b, big_c] = model.decompose(&u, &state.a_n, &alpha, &state.beta_n, s_in, s_next)?;
    let recombined = &(&big_a + &big_b) + &big_c;

    let op_u = model.generator(&u, s_u);
    let n1_u = op_u.analytic_norm(1, s_u).value;
    let n1_u_limit = model.generator(&u, schedule.s_inf()).analytic_norm(1, schedule.s_inf()).value;
    let nu = exp_parameter(&model.generator(&u, s_in), s_in, s_next)?;

    let nrm = |x: &CoeffSeries, s: Scale| problem.norm(x, s);
    let norm_beta_next = nrm(&beta_next, s_next);
    let norm_a_part = nrm(&big_a, s_next);
    let norm_b_part = nrm(&big_b, s_next);
    let norm_c_part = nrm(&big_c, s_next);
    let norm_beta_at_next = nrm(&state.beta_n, s_next);
    let largest = [norm_beta_next, norm_a_part, norm_b_part, norm_c_part, norm_beta_at_next]
        .into_iter()
        .fold(Mag::ZERO, Mag::max);
    let decomposition_error = relative(nrm(&(&beta_next - &recombined), s_next), largest);
    let image_leak = relative(nrm(&model.project_f(&u_a), s_u), nrm(&u_a, s_u));
    let rhs_norm = nrm(&g_part, s_n);
    let k = schedule.params.exponents.k as i32;
    let tameness_ratio = if rhs_norm.is_zero() {
        Mag::ZERO
    } else {
        n1_u * schedule.sigma(n).powi(k) / rhs_norm
    };

    let mut report = StepReport {
        n,
        s_n,
        rho_n: schedule.rho(n),
        sigma_n: schedule.sigma(n),
        eps_n: schedule.eps(n),
        norm_alpha: nrm(&alpha, s_in),
        norm_beta: nrm(&state.beta_n, s_n),
        norm_gamma: nrm(&gamma, s_in),
        n1_u,
        n1_u_limit,
        nu,
        norm_a_part,
        norm_b_part,
        norm_c_part,
        norm_beta_next,
        decomposition_error,
        image_leak,
        tameness_ratio,
        bounds: StepBounds::default(),
    };
    report.bounds = check_step(&report, schedule, n);

    let r = problem.fam.restrict(n, n + 1)?;
    let mut transcript = state.transcript;
    transcript.push(report);
    let mut gens = state.gens;
    gens.push(u);
    Ok(IterationState {
        n: n + 1,
        a_n: r.apply(&a_next)?,
        beta_n: r.apply(&beta_next)?,
        alpha_sum: r.apply(&(&state.alpha_sum + &alpha))?,
        gens,
        transcript,
    })
}

/// Result of a full run.
#[derive(Clone, Debug)]
pub struct RunOutcome<G> {
    pub state: IterationState<G>,
    /// `g(a + b)` assembled as an infinite product at the limit scale.
    pub assembled: CoeffSeries,
    pub product: ProductDiagnostics,
    /// `|pi_G(g(a + b) - a)|` at `lambda s_inf`.
    pub residual: Mag,
    /// `eps` of the first step not taken.
    pub residual_bound: Mag,
    pub residual_ok: bool,
    /// `|g(a + b) - (a_n + beta_n)|` at `lambda s_inf`, relative to `|a + b|`.
    pub telescoping_error: f64,
    /// Largest observed tameness ratio.
    pub measured_c_tame: Mag,
}

impl<G> RunOutcome<G> {
    pub fn all_bounds_ok(&self) -> bool {
        self.state.transcript.iter().all(|r| r.bounds.core_ok()) && self.residual_ok
    }
}

/// Scale factor of the product assembly.
pub const PRODUCT_LAMBDA: f64 = 0.5;

/// Iterate until `max_steps` or `|beta_n|_{s_n} < target_residual`, then
/// assemble `g` as an infinite product at `s_inf`.
pub fn run<M: ActionModel>(
    problem: &KamProblem<M>,
    schedule: &Schedule,
    max_steps: usize,
    target_residual: Mag,
) -> Result<RunOutcome<M::Gen>> {
    if max_steps > schedule.horizon() {
        return Err(KamError::Contract(format!(
            "{max_steps} steps need a schedule horizon of at least {max_steps}, got {}",
            schedule.horizon()
        )));
    }
    let a = problem.model.base_point().clone();
    let mut state = IterationState::start(&a, &problem.b);
    while state.n < max_steps {
        if problem.norm(&state.beta_n, schedule.s(state.n)) < target_residual {
            break;
        }
        state = kam_step(state, problem, schedule)?;
    }
    let s = schedule.s_inf();
    let lambda_s = s.times(Mag::new(PRODUCT_LAMBDA));
    let start = &a + &problem.b;
    let (assembled, product) = problem.model.assemble(&state.gens, &start, s, PRODUCT_LAMBDA, &problem.fam)?;
    let limit = &state.a_n + &state.beta_n;
    let telescoping_error = relative((&assembled - &limit).norm(lambda_s), start.norm(lambda_s));
    let residual = problem.norm(&problem.model.project_g(&(&assembled - &state.a_n)), lambda_s);
    let residual_bound = schedule.eps(state.n);
    let measured_c_tame = state.transcript.iter().map(|r| r.tameness_ratio).fold(Mag::ZERO, Mag::max);
    Ok(RunOutcome {
        residual_ok: residual.le_rel(residual_bound, BOUND_SLACK),
        state,
        assembled,
        product,
        residual,
        residual_bound,
        telescoping_error,
        measured_c_tame,
    })
}

/// A cheap commuting model used in examples and tests: `u` acts by
/// multiplication, `a = c` is a constant, `F` the constants and `G` the
/// series without constant term. Then `u(a) = c w`, so `j(y) = y / c`.
pub fn multiplicative_model(c: f64, degree: usize) -> LinearModel {
    let tau = Scale::new(1.0);
    let mut a = CoeffSeries::zero(degree);
    a.set_coeff(0, Complex64::new(c, 0.0));
    LinearModel {
        a,
        proj_f: ScaledOperator::projection(degree, tau, "pi_F", |j| j == 0),
        proj_g: ScaledOperator::projection(degree, tau, "pi_G", |j| j > 0),
        j: Box::new(move |_alpha, rhs, cutoff| {
            let (low, _) = rhs.split_at_degree(cutoff.min(rhs.degree_cap() + 1));
            Ok(ScaledOperator::multiplication(&low.scale(Complex64::new(1.0 / c, 0.0)), tau))
        }),
    }
}
