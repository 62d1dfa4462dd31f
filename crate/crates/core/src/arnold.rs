//! Arnold families of scaled spaces and tamed sequences.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{KamError, Result};
use crate::mag::Scale;
use crate::operators::{uniform_grid, ScaledOperator};
use crate::spaces::{CoeffSeries, SpaceSpec};

/// Behaviour of `ln p_n` beyond the stored prefix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailModel {
    /// `ln p_n = ln p_M` for `n > M`.
    Constant,
    /// `ln p_n = c * base^n` for `n > M`.
    Geometric { c: f64, base: f64 },
}

/// A positive sequence `p_n`, stored as `ln p_n` on a prefix plus a tail model.
#[derive(Clone, Debug, PartialEq)]
pub struct TamedSequence {
    ln_prefix: Vec<f64>,
    pub tail: TailModel,
}

impl TamedSequence {
    pub fn new(values: &[f64], tail: TailModel) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
            return Err(KamError::Domain(format!("sequence entry {v} is not a positive real")));
        }
        Self::from_ln(values.iter().map(|v| v.ln()).collect(), tail)
    }

    pub fn from_ln(ln_prefix: Vec<f64>, tail: TailModel) -> Result<Self> {
        if ln_prefix.is_empty() {
            return Err(KamError::Domain("empty sequence prefix".into()));
        }
        if ln_prefix.iter().any(|l| !l.is_finite()) {
            return Err(KamError::Domain("sequence entries must be positive and finite".into()));
        }
        if let TailModel::Geometric { c, base } = tail {
            if !c.is_finite() || !(base > 0.0) || !base.is_finite() {
                return Err(KamError::Domain(format!("geometric tail c = {c}, base = {base}")));
            }
        }
        Ok(Self { ln_prefix, tail })
    }

    /// `p_n = e^{A^n}`, stored with a one-term prefix.
    pub fn exp_power(a: f64) -> Result<Self> {
        Self::from_ln(vec![1.0], TailModel::Geometric { c: 1.0, base: a })
    }

    /// `p_n = 1` for all `n`.
    pub fn ones() -> Self {
        Self {
            ln_prefix: vec![0.0],
            tail: TailModel::Constant,
        }
    }

    pub fn prefix_len(&self) -> usize {
        self.ln_prefix.len()
    }

    pub fn ln_prefix(&self) -> &[f64] {
        &self.ln_prefix
    }

    pub fn ln_at(&self, n: usize) -> f64 {
        if n < self.ln_prefix.len() {
            return self.ln_prefix[n];
        }
        match self.tail {
            TailModel::Constant => *self.ln_prefix.last().unwrap(),
            TailModel::Geometric { c, base } => c * base.powi(n as i32),
        }
    }

    pub fn value_at(&self, n: usize) -> f64 {
        self.ln_at(n).exp()
    }

    /// Materialise the tail so the prefix has at least `len` entries.
    pub fn extended(&self, len: usize) -> Self {
        let mut out = self.clone();
        while out.ln_prefix.len() < len {
            let n = out.ln_prefix.len();
            out.ln_prefix.push(self.ln_at(n));
        }
        out
    }

    /// Nondecreasing on the prefix, across the junction and in the tail.
    pub fn is_nondecreasing(&self) -> bool {
        let m = self.ln_prefix.len();
        let prefix_ok = self.ln_prefix.windows(2).all(|w| w[1] >= w[0]);
        let tail_ok = match self.tail {
            TailModel::Constant => true,
            TailModel::Geometric { c, base } => (c >= 0.0 && base >= 1.0) || (c <= 0.0 && base <= 1.0),
        };
        prefix_ok && tail_ok && self.ln_at(m) >= self.ln_at(m - 1)
    }

    /// `sum_{n >= start} max(0, ln p_n) / 2^n`, the tail in closed form.
    pub fn weighted_sum_from(&self, start: usize) -> f64 {
        let m = self.ln_prefix.len();
        let prefix: f64 = (start..m).map(|n| self.ln_prefix[n].max(0.0) / 2f64.powi(n as i32)).sum();
        let first_tail = start.max(m);
        let tail = match self.tail {
            // sum_{n >= f} L / 2^n = L / 2^(f-1)
            TailModel::Constant => self.ln_prefix[m - 1].max(0.0) / 2f64.powi(first_tail as i32 - 1),
            TailModel::Geometric { c, base } => {
                if c <= 0.0 {
                    0.0
                } else if base >= 2.0 {
                    f64::INFINITY
                } else {
                    let r = base / 2.0;
                    c * r.powi(first_tail as i32) / (1.0 - r)
                }
            }
        };
        prefix + tail
    }

    /// `sup_n (ln p_n - 2^n)`.
    pub fn sup_excess_over_double_exp(&self) -> f64 {
        let m = self.ln_prefix.len();
        let mut best = f64::NEG_INFINITY;
        for n in 0..m.max(1000) {
            let excess = self.ln_at(n) - 2f64.powi(n as i32);
            if excess.is_nan() {
                break;
            }
            best = best.max(excess);
            if n >= m && 2f64.powi(n as i32) > 4.0 * self.ln_at(n).abs() + 64.0 {
                // the excess is decreasing from here on for every tamed tail
                if let TailModel::Geometric { base, .. } = self.tail {
                    if base < 2.0 {
                        break;
                    }
                } else {
                    break;
                }
            }
        }
        best
    }
}

/// `sum_n ln p'_n / 2^n` with `p'_n = max(1, p_n)`; `+inf` when the tail diverges.
pub fn bruno_sum(p: &TamedSequence) -> f64 {
    p.weighted_sum_from(0)
}

/// Regularised majorant `q` of a tamed `p` with
/// (i) `q_n >= e^{A^n}`, (ii) `q_n^2 >= C q_{n+1}`, (iii) `q_n = max(e^{A^n}, p_n)` for large `n`.
///
/// The prefix up to the first index after which (ii) holds is flattened to a
/// constant `C * max`, with the crossing index chosen where the unflattened
/// sequence climbs back above that constant so the output stays nondecreasing.
/// A sequence that already satisfies (i) and (ii) is returned unchanged.
pub fn regularize_tamed(p: &TamedSequence, c: f64, a: f64) -> Result<TamedSequence> {
    if !(a > 1.0 && a < 2.0) {
        return Err(KamError::Domain(format!("A = {a} must lie in (1, 2)")));
    }
    if !(c >= 1.0) || !c.is_finite() {
        return Err(KamError::Domain(format!("C = {c} must be at least 1")));
    }
    if !bruno_sum(p).is_finite() {
        return Err(KamError::NotTamed("Bruno sum diverges".into()));
    }
    let ln_c = c.ln();
    let m = p.prefix_len();

    // tail of q = max(e^{A^n}, p_n) and the index from which it takes over
    let (tail, from) = match p.tail {
        TailModel::Constant => {
            let level = p.ln_prefix[m - 1];
            let cross = if level > 1.0 { (level.ln() / a.ln()).ceil() as usize } else { 0 };
            (TailModel::Geometric { c: 1.0, base: a }, cross)
        }
        TailModel::Geometric { c: pc, base } => {
            if pc <= 0.0 || base < a {
                let cross = if pc > 1.0 { (pc.ln() / (a / base).ln()).ceil() as usize } else { 0 };
                (TailModel::Geometric { c: 1.0, base: a }, cross)
            } else if base > a {
                let cross = if pc < 1.0 { ((1.0 / pc).ln() / (base / a).ln()).ceil() as usize } else { 0 };
                (TailModel::Geometric { c: pc, base }, cross)
            } else {
                (TailModel::Geometric { c: pc.max(1.0), base: a }, 0)
            }
        }
    };
    // (ii) on the tail: c b^n (2 - b) >= ln C, increasing in n
    let (tc, tb) = match tail {
        TailModel::Geometric { c, base } => (c, base),
        TailModel::Constant => unreachable!(),
    };
    let ii_from = if ln_c <= 0.0 {
        0
    } else {
        let need = ln_c / (tc * (2.0 - tb));
        if need <= 1.0 {
            0
        } else {
            (need.ln() / tb.ln()).ceil() as usize
        }
    };
    let len = m.max(from + 1).max(ii_from + 1) + 1;
    let mut q: Vec<f64> = (0..len).map(|n| p.ln_at(n).max(a.powi(n as i32))).collect();

    let holds = |q: &[f64], n: usize, next: f64| 2.0 * q[n] >= ln_c + next;
    let tail_value = |n: usize| tc * tb.powi(n as i32);
    let ii_at = |q: &[f64], n: usize| {
        let next = if n + 1 < q.len() { q[n + 1] } else { tail_value(n + 1) };
        holds(q, n, next)
    };
    // least N0 such that (ii) holds for all n >= N0
    let mut n0 = 0;
    if q.len() <= n0 + 1 {
        q.push(tail_value(q.len()));
    }
    for n in (0..q.len()).rev() {
        if !ii_at(&q, n) {
            n0 = n + 1;
            break;
        }
    }
    if n0 > 0 {
        // the crossing index must lie past N0 so that (ii) at N0 covers the junction
        let mut running_max = q[..=n0].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut crossing = n0 + 1;
        loop {
            if crossing >= q.len() {
                q.push(tail_value(crossing));
            }
            if q[crossing] >= ln_c + running_max {
                break;
            }
            running_max = running_max.max(q[crossing]);
            crossing += 1;
            if crossing > 10_000 {
                return Err(KamError::NotTamed("regularised sequence never crosses the flattened prefix".into()));
            }
        }
        let flat = ln_c + running_max;
        q.iter_mut().take(crossing).for_each(|v| *v = flat);
    }
    TamedSequence::from_ln(q, tail)
}

/// Outcome of checking one restriction map.
#[derive(Clone, Debug, PartialEq)]
pub struct RestrictionCheck {
    pub from: usize,
    pub to: usize,
    /// Bare constant of the 0-bounded estimate, required to be at most one.
    pub norm: f64,
    pub norm_ok: bool,
    pub coherent: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestrictionReport {
    pub checks: Vec<RestrictionCheck>,
}

impl RestrictionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.norm_ok && c.coherent)
    }

    pub fn failures(&self) -> Vec<(usize, usize)> {
        self.checks
            .iter()
            .filter(|c| !(c.norm_ok && c.coherent))
            .map(|c| (c.from, c.to))
            .collect()
    }
}

/// Finitely many levels `E_0, ..., E_L` of a directed system on one coefficient
/// space, with restriction maps `r_{ij}` for `i < j`. The limit level reuses the
/// last space.
#[derive(Clone, Debug)]
pub struct ArnoldFamily {
    levels: Vec<SpaceSpec>,
    restrict: BTreeMap<(usize, usize), ScaledOperator>,
    /// Degree kept at each level; equal to the space cap for constant families.
    pub kept_degree: Vec<usize>,
    constant: bool,
}

impl ArnoldFamily {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn space(&self, n: usize) -> &SpaceSpec {
        &self.levels[n.min(self.levels.len() - 1)]
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    /// `r_{ij}`; the identity for `i == j`. Constant families accept any indices.
    pub fn restrict(&self, i: usize, j: usize) -> Result<ScaledOperator> {
        let spec = self.space(i);
        let tau = Scale::new(spec.bound);
        if i == j || (self.constant && i < j) {
            return Ok(ScaledOperator::identity(spec.degree, tau));
        }
        if i > j {
            return Err(KamError::Contract(format!("restriction from level {i} to lower level {j}")));
        }
        self.restrict
            .get(&(i, j))
            .cloned()
            .ok_or_else(|| KamError::Contract(format!("no restriction ({i}, {j}) in a {}-level family", self.levels.len())))
    }

    /// Replace one restriction map, bypassing coherence.
    pub fn set_restriction(&mut self, i: usize, j: usize, op: ScaledOperator) {
        self.constant = false;
        self.restrict.insert((i, j), op);
    }

    fn from_steps(levels: Vec<SpaceSpec>, kept_degree: Vec<usize>, step: impl Fn(usize) -> ScaledOperator, constant: bool) -> Result<Self> {
        let mut restrict = BTreeMap::new();
        for i in 0..levels.len() {
            let mut acc: Option<ScaledOperator> = None;
            for j in (i + 1)..levels.len() {
                let r = step(j - 1);
                let next = match acc {
                    None => r,
                    Some(prev) => r.compose(&prev)?.with_order(0),
                };
                restrict.insert((i, j), next.clone());
                acc = Some(next);
            }
        }
        Ok(Self {
            levels,
            restrict,
            kept_degree,
            constant,
        })
    }
}

/// The family obtained from a single space by taking its product with itself:
/// every level is `space` and every restriction is the identity.
pub fn constant_arnold(space: SpaceSpec, levels: usize) -> Result<ArnoldFamily> {
    if levels == 0 {
        return Err(KamError::Domain("an Arnold family needs at least one level".into()));
    }
    let tau = Scale::new(space.bound);
    ArnoldFamily::from_steps(
        vec![space; levels],
        vec![space.degree; levels],
        |_| ScaledOperator::identity(space.degree, tau),
        true,
    )
}

/// Nested model: level `n` keeps Taylor coefficients up to `degrees[n]`,
/// mimicking restriction to shrinking domains; `r_{ij}` truncates to `degrees[j]`.
pub fn nested_projection_arnold(space: SpaceSpec, degrees: &[usize]) -> Result<ArnoldFamily> {
    if degrees.is_empty() {
        return Err(KamError::Domain("an Arnold family needs at least one level".into()));
    }
    if degrees.windows(2).any(|w| w[1] > w[0]) || degrees[0] > space.degree {
        return Err(KamError::Domain(format!("kept degrees {degrees:?} must be nonincreasing and within the cap")));
    }
    let tau = Scale::new(space.bound);
    let kept = degrees.to_vec();
    ArnoldFamily::from_steps(
        vec![space; degrees.len()],
        kept.clone(),
        |n| ScaledOperator::projection(space.degree, tau, &format!("r{n}"), |j| j <= kept[n + 1]),
        false,
    )
}

/// Verify every restriction is 0-bounded with constant at most one and that
/// `r_{ik} = r_{jk} r_{ij}`. The constant is the larger of the closed-form
/// bound and the grid estimate over `grid_points x grid_points` pairs.
pub fn check_restrictions(fam: &ArnoldFamily, grid_points: usize) -> Result<RestrictionReport> {
    let levels = fam.num_levels();
    let mut checks = Vec::new();
    for i in 0..levels {
        for j in (i + 1)..levels {
            let r = fam.restrict(i, j)?;
            let tau = Scale::new(fam.space(i).bound);
            let analytic = r.analytic_norm(0, tau).cauchy_constant().to_f64();
            let grid = r.estimate_norm(0, tau, &uniform_grid(tau.value(), grid_points))?.cauchy_constant().to_f64();
            let norm = analytic.max(grid);
            let mut coherent = true;
            for mid in (i + 1)..j {
                let via = fam.restrict(mid, j)?.compose(&fam.restrict(i, mid)?)?;
                coherent &= same_action(&r, &via);
            }
            checks.push(RestrictionCheck {
                from: i,
                to: j,
                norm,
                norm_ok: norm <= 1.0 + 1e-12,
                coherent,
            });
        }
    }
    Ok(RestrictionReport { checks })
}

/// Equality on the monomial basis plus one dense test vector.
fn same_action(a: &ScaledOperator, b: &ScaledOperator) -> bool {
    let d = a.degree_cap();
    let mut probes: Vec<CoeffSeries> = (0..=d).map(|j| CoeffSeries::monomial(j, d)).collect();
    let dense: Vec<Complex64> = (0..=d).map(|j| Complex64::new(1.0 / (j + 1) as f64, 0.5 - j as f64 * 0.1)).collect();
    probes.push(CoeffSeries::new(dense).expect("finite probe"));
    probes.iter().all(|x| match (a.apply(x), b.apply(x)) {
        (Ok(u), Ok(v)) => u.max_abs_diff(&v, d) <= 1e-14 * (1.0 + u.norm_at(1.0)),
        _ => false,
    })
}
