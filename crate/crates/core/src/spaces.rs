//! Scaled spaces of truncated analytic germs.
//!
//! An element is a Taylor coefficient vector `a_0..a_D` and its norm at scale
//! `s` is the weighted l1 sum `|x|_s = sum_j |a_j| s^j`. For `s < t` this gives
//! `|x|_s <= |x|_t`, so the inclusions of the directed system have norm at
//! most one. The degree filtration doubles as the harmonic filtration with
//! `d = 0`: a germ with no terms below degree `2^k` contracts at least like
//! `(s/t)^(2^k)`.

use std::ops::{Add, Neg, Sub};

use num_complex::Complex64;

use crate::error::{KamError, Result};
use crate::mag::{Mag, Scale};

/// Sentinel returned by [`ScaledElement::canonical_degree`] for the zero element.
pub const MAX_DEGREE: usize = usize::MAX;

/// Default boundedness constant of the grid test in `canonical_degree`.
pub const DEFAULT_FILTRATION_CONSTANT: f64 = 10.0;

/// Truncated coefficient vector of a germ at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffSeries {
    coeffs: Vec<Complex64>,
}

impl CoeffSeries {
    /// `coeffs.len() = D + 1`; every entry must be finite.
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(KamError::Domain("degree cap must be positive".into()));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(KamError::Numeric("series coefficients".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn from_real(coeffs: &[f64]) -> Result<Self> {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn zero(degree: usize) -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); degree + 1],
        }
    }

    pub fn monomial(power: usize, degree: usize) -> Self {
        let mut out = Self::zero(degree);
        if power <= degree {
            out.coeffs[power] = Complex64::new(1.0, 0.0);
        }
        out
    }

    /// The identity germ `z`.
    pub fn identity(degree: usize) -> Self {
        Self::monomial(1, degree)
    }

    pub fn degree_cap(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, j: usize) -> Complex64 {
        self.coeffs.get(j).copied().unwrap_or_default()
    }

    pub fn set_coeff(&mut self, j: usize, value: Complex64) {
        self.coeffs[j] = value;
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm_sqr() == 0.0)
    }

    /// Lowest degree with a nonzero coefficient.
    pub fn valuation(&self) -> Option<usize> {
        self.coeffs.iter().position(|c| c.norm_sqr() != 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    fn check_cap(&self, other: &Self) -> Result<()> {
        if self.degree_cap() != other.degree_cap() {
            return Err(KamError::CapMismatch(self.degree_cap(), other.degree_cap()));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_cap(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_cap(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|&c| c * factor).collect(),
        }
    }

    /// Cauchy product truncated at the degree cap.
    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_cap(other)?;
        let cap = self.degree_cap();
        let mut out = Self::zero(cap);
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            for (j, &b) in other.coeffs[..=cap - i].iter().enumerate() {
                out.coeffs[i + j] += a * b;
            }
        }
        Ok(out)
    }

    pub fn derivative(&self) -> Self {
        let cap = self.degree_cap();
        let mut out = Self::zero(cap);
        for j in 1..=cap {
            out.coeffs[j - 1] = self.coeffs[j] * j as f64;
        }
        out
    }

    /// `self(inner(z))` truncated at the cap; `inner` must vanish at 0.
    pub fn compose(&self, inner: &Self) -> Result<Self> {
        self.check_cap(inner)?;
        if inner.coeffs[0].norm_sqr() != 0.0 {
            return Err(KamError::Domain(
                "composition needs an inner germ with zero constant term".into(),
            ));
        }
        // Horner: a_D, then acc * inner + a_j
        let cap = self.degree_cap();
        let mut acc = Self::zero(cap);
        for j in (0..=cap).rev() {
            acc = acc.try_mul(inner)?;
            acc.coeffs[0] += self.coeffs[j];
        }
        Ok(acc)
    }

    /// Compositional inverse of a germ `c1 z + O(z^2)` with `c1 != 0`.
    pub fn compositional_inverse(&self) -> Result<Self> {
        let c1 = self.coeffs.get(1).copied().unwrap_or_default();
        if self.coeffs[0].norm_sqr() != 0.0 || c1.norm_sqr() == 0.0 {
            return Err(KamError::Domain(
                "inverse needs a germ fixing 0 with nonzero linear part".into(),
            ));
        }
        let cap = self.degree_cap();
        let id = Self::identity(cap);
        let mut g = id.scale(c1.inv());
        // each pass fixes at least one more degree
        for _ in 0..cap {
            let defect = &self.compose(&g)? - &id;
            g = &g - &defect.scale(c1.inv());
        }
        Ok(g)
    }

    /// `z -> self(c z)`.
    pub fn dilate(&self, c: Complex64) -> Self {
        let mut power = Complex64::new(1.0, 0.0);
        let mut out = self.clone();
        for coeff in out.coeffs.iter_mut() {
            *coeff *= power;
            power *= c;
        }
        out
    }

    /// Coefficients below `degree` and from `degree` on.
    pub fn split_at_degree(&self, degree: usize) -> (Self, Self) {
        let mut head = self.clone();
        let mut tail = self.clone();
        for j in 0..=self.degree_cap() {
            if j < degree {
                tail.coeffs[j] = Complex64::default();
            } else {
                head.coeffs[j] = Complex64::default();
            }
        }
        (head, tail)
    }

    /// Weighted l1 norm `sum_j |a_j| s^j`.
    pub fn norm(&self, s: Scale) -> Mag {
        Mag::sum(
            self.coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| c.norm_sqr() != 0.0)
                .map(|(j, c)| Mag::from_ln(c.norm().ln() + j as f64 * s.ln())),
        )
    }

    pub fn norm_at(&self, s: f64) -> f64 {
        self.norm(Scale::new(s)).to_f64()
    }

    pub fn max_abs_diff(&self, other: &Self, through_degree: usize) -> f64 {
        let top = through_degree.min(self.degree_cap()).min(other.degree_cap());
        (0..=top)
            .map(|j| (self.coeffs[j] - other.coeffs[j]).norm())
            .fold(0.0, f64::max)
    }
}

impl Add for &CoeffSeries {
    type Output = CoeffSeries;
    fn add(self, rhs: &CoeffSeries) -> CoeffSeries {
        self.try_add(rhs).expect("degree caps differ")
    }
}

impl Sub for &CoeffSeries {
    type Output = CoeffSeries;
    fn sub(self, rhs: &CoeffSeries) -> CoeffSeries {
        self.try_sub(rhs).expect("degree caps differ")
    }
}

impl Neg for &CoeffSeries {
    type Output = CoeffSeries;
    fn neg(self) -> CoeffSeries {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

/// Index of a level in an Arnold family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Finite(usize),
    Infinity,
}

/// Scale bound `S` and degree cap `D` shared by all elements of a space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceSpec {
    pub bound: f64,
    pub degree: usize,
}

impl SpaceSpec {
    pub fn new(bound: f64, degree: usize) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(KamError::Domain(format!("scale bound {bound}")));
        }
        if degree == 0 {
            return Err(KamError::Domain("degree cap must be positive".into()));
        }
        Ok(Self { bound, degree })
    }

    pub fn check_scale(&self, s: Scale) -> Result<()> {
        if s.ln() >= self.bound.ln() {
            return Err(KamError::Domain(format!(
                "scale {:?} outside (0, {})",
                s, self.bound
            )));
        }
        Ok(())
    }

    pub fn element(&self, series: CoeffSeries, scale: f64, level: Level) -> Result<ScaledElement> {
        if !(scale > 0.0) {
            return Err(KamError::Domain(format!("scale {scale}")));
        }
        self.element_at(series, Scale::new(scale), level)
    }

    pub fn element_at(&self, series: CoeffSeries, scale: Scale, level: Level) -> Result<ScaledElement> {
        self.check_scale(scale)?;
        if series.degree_cap() != self.degree {
            return Err(KamError::CapMismatch(series.degree_cap(), self.degree));
        }
        Ok(ScaledElement {
            series,
            scale,
            level,
            bound: self.bound,
        })
    }
}

/// A series declared to live in `(E_n)_t` for a given scale `t` and level `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledElement {
    pub series: CoeffSeries,
    pub scale: Scale,
    pub level: Level,
    bound: f64,
}

impl ScaledElement {
    pub fn bound(&self) -> f64 {
        self.bound
    }

    fn check(&self, s: Scale) -> Result<()> {
        if s.ln() >= self.bound.ln() {
            return Err(KamError::Domain(format!(
                "scale {:?} outside (0, {})",
                s, self.bound
            )));
        }
        Ok(())
    }

    /// `|x|_s`, or `+inf` when `s` exceeds the declared scale.
    pub fn norm(&self, s: Scale) -> Result<Mag> {
        self.check(s)?;
        if s > self.scale {
            return Ok(Mag::INFINITY);
        }
        Ok(self.series.norm(s))
    }

    pub fn norm_at(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(KamError::Domain(format!("scale {s}")));
        }
        Ok(self.norm(Scale::new(s))?.to_f64())
    }

    /// Image under the inclusion `E_t -> E_s`.
    pub fn include(&self, s: Scale) -> Result<ScaledElement> {
        if s >= self.scale {
            return Err(KamError::Contract(format!(
                "inclusion to {:?} from {:?} must shrink the scale",
                s, self.scale
            )));
        }
        Ok(ScaledElement {
            scale: s,
            ..self.clone()
        })
    }

    pub fn with_series(&self, series: CoeffSeries) -> ScaledElement {
        ScaledElement {
            series,
            ..self.clone()
        }
    }

    /// Largest `k` with `|x|_s / s^k < bound_constant` on every grid scale.
    pub fn canonical_degree(&self, grid: &[f64], bound_constant: f64) -> Result<usize> {
        if grid.is_empty() {
            return Err(KamError::Domain("empty grid".into()));
        }
        if self.series.is_zero() {
            return Ok(MAX_DEGREE);
        }
        let grid: Vec<Scale> = grid
            .iter()
            .map(|&s| {
                let s = Scale::new(s);
                if s > self.scale {
                    Err(KamError::Domain(format!("grid scale {s:?} above declared scale")))
                } else {
                    Ok(s)
                }
            })
            .collect::<Result<_>>()?;
        let bounded = |k: usize| {
            grid.iter()
                .all(|&s| self.series.norm(s).ln() - k as f64 * s.ln() < bound_constant.ln())
        };
        // ratios grow with k for s < 1, so the first failure ends the search
        let mut best = None;
        for k in 0..=self.series.degree_cap() + 1 {
            if bounded(k) {
                best = Some(k);
            } else {
                break;
            }
        }
        best.ok_or_else(|| {
            KamError::Domain(format!(
                "norm exceeds {bound_constant} on the grid even for k = 0"
            ))
        })
    }

    /// Splits into degrees below `2^k` and the harmonic tail from `2^k` on.
    pub fn harmonic_split(&self, k: u32, d: f64) -> Result<(ScaledElement, ScaledElement)> {
        if d < 0.0 {
            return Err(KamError::Domain(format!("harmonic exponent d = {d}")));
        }
        let threshold = harmonic_threshold(k);
        let (head, tail) = self.series.split_at_degree(threshold);
        Ok((self.with_series(head), self.with_series(tail)))
    }
}

/// `2^k`, saturating at `usize::MAX`.
pub fn harmonic_threshold(k: u32) -> usize {
    1usize.checked_shl(k).unwrap_or(usize::MAX)
}

/// Whether `|x|_s <= (t-s)^(-d) (s/t)^(2^k) |x|_t` holds at the given pair.
pub fn satisfies_harmonic(x: &CoeffSeries, s: Scale, t: Scale, k: u32, d: f64, rel: f64) -> bool {
    let ratio = Mag::from_ln((s.ln() - t.ln()) * harmonic_threshold(k) as f64);
    let loss = t.gap(s).powf(-d);
    x.norm(s).le_rel(loss * ratio * x.norm(t), rel)
}
