//! The iteration schedule: scales `s_n`, losses `rho_n`, margins `sigma_n`,
//! tolerances `eps_n` and the cutoff index `N`, all carried as logarithms.

use std::f64::consts::LN_2;

use crate::arnold::{bruno_sum, regularize_tamed, TamedSequence};
use crate::error::{KamError, Result};
use crate::mag::{Mag, Scale};
use crate::spaces::ScaledElement;

/// Loss exponents of the problem: `k` for the generators, `l` for the
/// quasi-inverse, `m` for the splitting, `d` for the harmonic filtration and
/// the regularity `mu` of the perturbation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exponents {
    pub k: u32,
    pub l: u32,
    pub m: u32,
    pub d: f64,
    pub mu: f64,
}

impl Exponents {
    /// `2k + l + m + 2`, the power of `sigma_n` in `eps_n`.
    pub fn q(&self) -> u32 {
        2 * self.k + self.l + self.m + 2
    }

    /// `mu > 2k + l + m + 2`.
    pub fn regularity_ok(&self) -> bool {
        self.mu > self.q() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleParams {
    pub exponents: Exponents,
    /// Growth rate `A` in `(1, 2)` of the regularised sequence.
    pub a: f64,
    /// Tameness constant of the quasi-inverse.
    pub c_tame: f64,
    /// `E` in the regularisation constant `C^2 2^(4k+2l+2m+E)`.
    pub tame_exponent: u32,
    pub horizon: usize,
}

impl ScheduleParams {
    pub fn new(exponents: Exponents, a: f64, c_tame: f64, horizon: usize) -> Self {
        Self {
            exponents,
            a,
            c_tame,
            tame_exponent: 5,
            horizon,
        }
    }

    /// `C^2 2^(4k+2l+2m+E)`; with `E >= 4` it makes the contraction inequality hold.
    pub fn regularization_constant(&self) -> f64 {
        let e = &self.exponents;
        let power = 4 * e.k + 2 * e.l + 2 * e.m + self.tame_exponent;
        self.c_tame.max(1.0).powi(2) * 2f64.powi(power as i32)
    }

    /// Regularise `p` with this schedule's constants.
    pub fn prepare(&self, p: &TamedSequence) -> Result<TamedSequence> {
        regularize_tamed(p, self.regularization_constant(), self.a)
    }
}

/// Per-index outcome of the four schedule invariants.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleInvariants {
    pub s_inf_positive: bool,
    /// `1 - rho_n >= 1 / (C' e^2 2^n)`.
    pub rho_gap: Vec<bool>,
    /// `p_n^(-2^(phi(n)-n)) <= sigma_{n+1}^(d+m) eps_n`.
    pub cutoff: Vec<bool>,
    /// `C^2 eps_n^2 <= eps_{n+1} sigma_{n+1}^(2k+l+m+2)`.
    pub contraction: Vec<bool>,
}

impl ScheduleInvariants {
    pub fn all_hold(&self) -> bool {
        self.s_inf_positive
            && self.rho_gap.iter().all(|&b| b)
            && self.cutoff.iter().all(|&b| b)
            && self.contraction.iter().all(|&b| b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub p: TamedSequence,
    pub params: ScheduleParams,
    pub ln_s0: f64,
    /// `ln rho_n` for `n <= horizon + 1`.
    pub ln_rho: Vec<f64>,
    /// `ln s_n` for `n <= horizon + 2`.
    pub ln_s: Vec<f64>,
    pub ln_s_inf: f64,
    pub ln_c_prime: f64,
    /// `ln sigma_n` and `ln eps_n` for `n <= horizon + 1`.
    pub ln_sigma: Vec<f64>,
    pub ln_eps: Vec<f64>,
    /// `None` when no finite cutoff exists because some `p_n = 1`; the
    /// quasi-inverse is then applied without truncation.
    pub cutoff_n: Option<usize>,
    pub invariants: ScheduleInvariants,
}

/// The least `N` is searched up to this far past the horizon.
const CUTOFF_SEARCH: usize = 256;

/// Build the schedule for a sequence `p` (already regularised, see
/// [`ScheduleParams::prepare`]) started at `s0`. Invariants are evaluated and
/// recorded; only a divergent Bruno sum or an unreachable cutoff is an error.
pub fn build_schedule(p: &TamedSequence, s0: Scale, params: &ScheduleParams) -> Result<Schedule> {
    if !bruno_sum(p).is_finite() {
        return Err(KamError::NotTamed("Bruno sum of the sequence diverges".into()));
    }
    let h = params.horizon;
    let e = params.exponents;
    let q = e.q() as f64;
    let lnp = |n: usize| p.ln_at(n).max(0.0);

    let ln_rho: Vec<f64> = (0..=h + 1).map(|n| -lnp(n + 1) / 2f64.powi(n as i32)).collect();
    let mut ln_s = vec![s0.ln()];
    for n in 0..=h + 1 {
        ln_s.push(ln_s[n] + 5.0 * ln_rho[n]);
    }
    // sum_n ln rho_n = -sum_{n>=0} ln p_{n+1} / 2^n = -2 sum_{m>=1} ln p_m / 2^m
    let ln_s_inf = s0.ln() - 10.0 * p.weighted_sum_from(1);
    if !ln_s_inf.is_finite() {
        return Err(KamError::NotTamed("limit scale vanishes".into()));
    }
    let ln_c_prime = p.sup_excess_over_double_exp().max(0.0);
    let ln_sigma: Vec<f64> = (0..=h + 1)
        .map(|n| ln_s_inf - ln_c_prime - 2.0 - n as f64 * LN_2)
        .collect();
    let ln_eps: Vec<f64> = (0..=h + 1).map(|n| q * ln_sigma[n] - lnp(n)).collect();

    let rho_gap = (0..=h)
        .map(|n| {
            let gap = -ln_rho[n].exp_m1();
            gap > 0.0 && gap.ln() >= -(ln_c_prime + 2.0 + n as f64 * LN_2) - 1e-12
        })
        .collect();

    // cutoff: for n < N the inequality reads 2^(N-n) ln p_n >= -(rhs); it cannot
    // hold at any n >= N, so N must exceed the horizon
    let rhs: Vec<f64> = (0..=h).map(|n| (e.d + e.m as f64) * ln_sigma[n + 1] + ln_eps[n]).collect();
    let cutoff_holds = |big_n: usize, n: usize| {
        let phi = big_n.max(n);
        -(2f64.powi((phi - n) as i32)) * lnp(n) <= rhs[n]
    };
    let cutoff_n = if (0..=h).any(|n| lnp(n) == 0.0) {
        None
    } else {
        let found = (h + 1..=h + 1 + CUTOFF_SEARCH).find(|&big_n| (0..=h).all(|n| cutoff_holds(big_n, n)));
        match found {
            Some(n) => Some(n),
            None => {
                return Err(KamError::ScheduleInfeasible(format!(
                    "no cutoff index up to {} satisfies the cutoff inequality",
                    h + 1 + CUTOFF_SEARCH
                )))
            }
        }
    };
    let cutoff = (0..=h).map(|n| cutoff_n.is_some_and(|big_n| cutoff_holds(big_n, n))).collect();

    let ln_c2 = 2.0 * params.c_tame.max(1.0).ln();
    let contraction = (0..=h)
        .map(|n| ln_c2 + 2.0 * ln_eps[n] <= ln_eps[n + 1] + q * ln_sigma[n + 1] + 1e-9)
        .collect();

    Ok(Schedule {
        p: p.clone(),
        params: *params,
        ln_s0: s0.ln(),
        ln_rho,
        ln_s,
        ln_s_inf,
        ln_c_prime,
        ln_sigma,
        ln_eps,
        cutoff_n,
        invariants: ScheduleInvariants {
            s_inf_positive: ln_s_inf.is_finite(),
            rho_gap,
            cutoff,
            contraction,
        },
    })
}

impl Schedule {
    pub fn horizon(&self) -> usize {
        self.params.horizon
    }

    pub fn s(&self, n: usize) -> Scale {
        Scale::from_ln(self.ln_s[n])
    }

    pub fn s_inf(&self) -> Scale {
        Scale::from_ln(self.ln_s_inf)
    }

    pub fn rho(&self, n: usize) -> Mag {
        Mag::from_ln(self.ln_rho[n])
    }

    pub fn sigma(&self, n: usize) -> Mag {
        Mag::from_ln(self.ln_sigma[n])
    }

    pub fn eps(&self, n: usize) -> Mag {
        Mag::from_ln(self.ln_eps[n])
    }

    pub fn c_prime(&self) -> Mag {
        Mag::from_ln(self.ln_c_prime)
    }

    /// `rho_n^j s_n`.
    pub fn shrunk(&self, n: usize, j: u32) -> Scale {
        Scale::from_ln(self.ln_s[n] + j as f64 * self.ln_rho[n])
    }

    /// `phi(n) = max(n, N)`.
    pub fn phi(&self, n: usize) -> Option<usize> {
        self.cutoff_n.map(|big_n| big_n.max(n))
    }

    /// `2^phi(n)`, saturating; `usize::MAX` without a cutoff.
    pub fn cutoff_degree(&self, n: usize) -> usize {
        match self.phi(n) {
            Some(phi) if phi < usize::BITS as usize => 1usize << phi,
            _ => usize::MAX,
        }
    }
}

/// Whether `|gamma|_{rho_n s} <= sigma_{n+1}^m eps_n |gamma|_s` at `s = gamma.scale`.
/// Requires `rho_n s >= s_inf`.
pub fn cutoff_check(gamma: &ScaledElement, n: usize, schedule: &Schedule) -> Result<bool> {
    let s = gamma.scale;
    let inner = Scale::from_ln(s.ln() + schedule.ln_rho[n]);
    if inner.ln() < schedule.ln_s_inf {
        return Err(KamError::Domain(format!(
            "rho_{n} s = {:?} lies below the limit scale {:?}",
            inner,
            schedule.s_inf()
        )));
    }
    let m = schedule.params.exponents.m as i32;
    let lhs = gamma.series.norm(inner);
    let rhs = schedule.sigma(n + 1).powi(m) * schedule.eps(n) * gamma.series.norm(s);
    Ok(lhs.le_rel(rhs, 1e-9))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arnold::TailModel;
    use crate::spaces::{CoeffSeries, Level, SpaceSpec};

    fn zero_exponents() -> Exponents {
        Exponents {
            k: 0,
            l: 0,
            m: 0,
            d: 0.0,
            mu: 3.0,
        }
    }

    #[test]
    fn exp_power_limit_scale() {
        let p = TamedSequence::exp_power(1.5).unwrap();
        let params = ScheduleParams::new(zero_exponents(), 1.5, 1.0, 10);
        let sched = build_schedule(&p, Scale::new(0.5), &params).unwrap();
        // ln(s_inf / s0) = -5 * 1.5 * sum (3/4)^n = -30
        assert!((sched.ln_s_inf - sched.ln_s0 + 30.0).abs() < 1e-9);
        for n in 0..5 {
            let expected = -(1.5f64.powi(n as i32 + 1)) / 2f64.powi(n as i32);
            assert!((sched.ln_rho[n] - expected).abs() < 1e-12);
        }
        assert!(sched.s(11) > sched.s_inf());
    }

    #[test]
    fn degenerate_schedule_without_small_divisors() {
        let params = ScheduleParams::new(zero_exponents(), 1.5, 1.0, 6);
        let sched = build_schedule(&TamedSequence::ones(), Scale::new(0.3), &params).unwrap();
        assert!(sched.ln_rho.iter().all(|&r| r == 0.0));
        assert_eq!(sched.ln_s_inf, sched.ln_s0);
        for n in 0..=6 {
            assert!((sched.ln_eps[n] - 2.0 * sched.ln_sigma[n]).abs() < 1e-12);
        }
        assert_eq!(sched.cutoff_n, None);
        assert_eq!(sched.cutoff_degree(3), usize::MAX);
    }

    #[test]
    fn regularised_schedule_satisfies_all_invariants() {
        let mut params = ScheduleParams::new(zero_exponents(), 1.5, 50.0, 40);
        let raw = TamedSequence::from_ln(vec![0.0, 0.0, 0.12, 0.58, 1.53, 2.0, 2.97], TailModel::Constant).unwrap();
        let p = params.prepare(&raw).unwrap();
        let sched = build_schedule(&p, Scale::new(0.5), &params).unwrap();
        assert!(sched.invariants.all_hold(), "{:?}", sched.invariants);
        assert!(sched.cutoff_n.unwrap() > 40);
        // exponent 4 is the bare minimum for the contraction inequality
        params.tame_exponent = 4;
        let p4 = params.prepare(&raw).unwrap();
        let sched4 = build_schedule(&p4, Scale::new(0.5), &params).unwrap();
        assert!(sched4.invariants.contraction.iter().all(|&b| b));
    }

    #[test]
    fn non_tamed_sequence_is_rejected() {
        let params = ScheduleParams::new(zero_exponents(), 1.5, 1.0, 6);
        let wild = TamedSequence::exp_power(2.0).unwrap();
        assert!(matches!(build_schedule(&wild, Scale::new(0.5), &params), Err(KamError::NotTamed(_))));
    }

    #[test]
    fn cutoff_check_on_boundary_monomial() {
        let params = ScheduleParams::new(zero_exponents(), 1.5, 2.0, 3);
        let p = params.prepare(&TamedSequence::ones()).unwrap();
        let sched = build_schedule(&p, Scale::new(0.5), &params).unwrap();
        assert!(sched.cutoff_degree(0) >= 16);
        let space = SpaceSpec::new(1.0, 4).unwrap();
        let zero = space.element(CoeffSeries::zero(4), 0.5, Level::Finite(0)).unwrap();
        assert!(cutoff_check(&zero, 0, &sched).unwrap());
        // z^(2^phi) itself needs a larger cap; D = 2^phi keeps the test cheap only for small N
        let deg = sched.cutoff_degree(0).min(4096);
        let space = SpaceSpec::new(1.0, deg).unwrap();
        let mono = space.element(CoeffSeries::monomial(deg, deg), 0.5, Level::Finite(0)).unwrap();
        assert!(cutoff_check(&mono, 0, &sched).unwrap());
        let low = space.element(CoeffSeries::monomial(1, deg), 0.5, Level::Finite(0)).unwrap();
        assert!(!cutoff_check(&low, 0, &sched).unwrap());
        let below = space
            .element_at(CoeffSeries::monomial(1, deg), Scale::from_ln(sched.ln_s_inf - 1.0), Level::Finite(0))
            .unwrap();
        assert!(matches!(cutoff_check(&below, 0, &sched), Err(KamError::Domain(_))));
    }
}
