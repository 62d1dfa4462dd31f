//! Nonnegative extended reals stored by their natural logarithm.
//!
//! The iteration schedule drives scales and tolerances far below the
//! `f64` range (limits around `1e-350` are routine), so every scale-dependent
//! magnitude in the crate is carried as `ln(value)`. Zero is `ln = -inf`,
//! `+inf` is `ln = +inf`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul};

/// A value in `[0, +inf]`, represented by its logarithm.
#[derive(Clone, Copy, PartialEq)]
pub struct Mag(f64);

impl Mag {
    pub const ZERO: Mag = Mag(f64::NEG_INFINITY);
    pub const ONE: Mag = Mag(0.0);
    pub const INFINITY: Mag = Mag(f64::INFINITY);

    /// Panics on negative or NaN input.
    pub fn new(value: f64) -> Mag {
        assert!(value >= 0.0, "Mag::new on negative or NaN value {value}");
        Mag(value.ln())
    }

    pub fn from_ln(ln: f64) -> Mag {
        assert!(!ln.is_nan(), "Mag::from_ln(NaN)");
        Mag(ln)
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    /// Plain value; underflows to `0.0` below the `f64` range.
    pub fn to_f64(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn is_infinite(self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn is_finite(self) -> bool {
        self.0 < f64::INFINITY
    }

    pub fn powf(self, exponent: f64) -> Mag {
        if exponent == 0.0 {
            return Mag::ONE;
        }
        Mag(self.0 * exponent)
    }

    pub fn powi(self, exponent: i32) -> Mag {
        self.powf(exponent as f64)
    }

    pub fn max(self, other: Mag) -> Mag {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: Mag) -> Mag {
        if self <= other {
            self
        } else {
            other
        }
    }

    /// `self - other`, saturating at zero.
    pub fn saturating_sub(self, other: Mag) -> Mag {
        if other >= self {
            return Mag::ZERO;
        }
        if other.is_zero() {
            return self;
        }
        // ln(a - b) = ln a + ln(1 - b/a)
        Mag(self.0 + (-(other.0 - self.0).exp()).ln_1p())
    }

    /// `self <= other * (1 + rel)`, the comparison used for every checked bound.
    pub fn le_rel(self, other: Mag, rel: f64) -> bool {
        if self.is_zero() {
            return true;
        }
        self.0 <= other.0 + rel.ln_1p()
    }

    /// Decimal scientific notation with 17 significant digits, valid far
    /// outside the `f64` exponent range.
    pub fn to_sci(self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        if self.is_infinite() {
            return "inf".to_string();
        }
        let log10 = self.0 / std::f64::consts::LN_10;
        let mut exponent = log10.floor();
        let mut mantissa = 10f64.powf(log10 - exponent);
        // 16 digits after the point gives 17 significant digits
        let mut text = format!("{mantissa:.16}");
        if text.starts_with("10") {
            exponent += 1.0;
            mantissa /= 10.0;
            text = format!("{mantissa:.16}");
        }
        format!("{text}e{}", exponent as i64)
    }

    /// Inverse of [`Mag::to_sci`]; also accepts anything `f64::from_str` does.
    pub fn parse_sci(text: &str) -> Option<Mag> {
        let text = text.trim();
        match text {
            "0" => return Some(Mag::ZERO),
            "inf" => return Some(Mag::INFINITY),
            _ => {}
        }
        let (mantissa, exponent) = match text.find(['e', 'E']) {
            Some(pos) => (&text[..pos], text[pos + 1..].parse::<i64>().ok()?),
            None => (text, 0),
        };
        let mantissa: f64 = mantissa.parse().ok()?;
        if mantissa < 0.0 || mantissa.is_nan() {
            return None;
        }
        if mantissa == 0.0 {
            return Some(Mag::ZERO);
        }
        Some(Mag(mantissa.ln() + exponent as f64 * std::f64::consts::LN_10))
    }

    /// `ln(sum exp(ln_i))` without overflow.
    pub fn sum<I: IntoIterator<Item = Mag>>(items: I) -> Mag {
        let items: Vec<f64> = items.into_iter().map(|m| m.0).collect();
        let top = items.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY || top == f64::INFINITY {
            return Mag(top);
        }
        let acc: f64 = items.iter().map(|&l| (l - top).exp()).sum();
        Mag(top + acc.ln())
    }
}

impl PartialOrd for Mag {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.0.partial_cmp(&other.0)
    }
}

impl Mul for Mag {
    type Output = Mag;
    fn mul(self, rhs: Mag) -> Mag {
        if self.is_zero() || rhs.is_zero() {
            return Mag::ZERO;
        }
        Mag(self.0 + rhs.0)
    }
}

impl Div for Mag {
    type Output = Mag;
    fn div(self, rhs: Mag) -> Mag {
        assert!(!rhs.is_zero(), "Mag division by zero");
        if self.is_zero() {
            return Mag::ZERO;
        }
        Mag(self.0 - rhs.0)
    }
}

impl Add for Mag {
    type Output = Mag;
    fn add(self, rhs: Mag) -> Mag {
        Mag::sum([self, rhs])
    }
}

impl Mul<f64> for Mag {
    type Output = Mag;
    fn mul(self, rhs: f64) -> Mag {
        self * Mag::new(rhs)
    }
}

impl fmt::Debug for Mag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mag({})", self.to_sci())
    }
}

impl fmt::Display for Mag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sci())
    }
}

/// A scale `s` in `(0, S)`, stored as `ln s`.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
pub struct Scale(f64);

impl Scale {
    pub fn new(s: f64) -> Scale {
        assert!(s > 0.0, "scale must be positive, got {s}");
        Scale(s.ln())
    }

    pub fn from_ln(ln: f64) -> Scale {
        assert!(ln.is_finite(), "scale logarithm must be finite");
        Scale(ln)
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0.exp()
    }

    pub fn mag(self) -> Mag {
        Mag(self.0)
    }

    /// `self * factor` for a positive factor given as a magnitude.
    pub fn times(self, factor: Mag) -> Scale {
        Scale::from_ln(self.0 + factor.ln())
    }

    /// `t - s` for `s < t`; zero otherwise.
    pub fn gap(self, smaller: Scale) -> Mag {
        self.mag().saturating_sub(smaller.mag())
    }
}

impl fmt::Debug for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scale({})", self.mag().to_sci())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_matches_plain_floats() {
        let a = Mag::new(3.0);
        let b = Mag::new(0.5);
        assert!(((a * b).to_f64() - 1.5).abs() < 1e-15);
        assert!(((a / b).to_f64() - 6.0).abs() < 1e-14);
        assert!(((a + b).to_f64() - 3.5).abs() < 1e-14);
        assert!((a.saturating_sub(b).to_f64() - 2.5).abs() < 1e-14);
        assert_eq!(b.saturating_sub(a), Mag::ZERO);
        assert_eq!(Mag::ZERO + a, a);
    }

    #[test]
    fn sci_round_trip_below_f64_range() {
        let tiny = Mag::from_ln(-1700.25);
        let text = tiny.to_sci();
        assert!(text.contains("e-739"), "{text}");
        let back = Mag::parse_sci(&text).unwrap();
        assert!((back.ln() - tiny.ln()).abs() < 1e-12);
        assert_eq!(Mag::parse_sci("0.5").unwrap(), Mag::new(0.5));
        assert_eq!(Mag::parse_sci("0").unwrap(), Mag::ZERO);
    }

    #[test]
    fn sci_has_seventeen_significant_digits() {
        let text = Mag::new(0.1).to_sci();
        let mantissa = text.split('e').next().unwrap();
        assert_eq!(mantissa.replace('.', "").len(), 17, "{text}");
    }

    #[test]
    fn scale_gap() {
        let t = Scale::new(0.5);
        let s = Scale::new(0.2);
        assert!((t.gap(s).to_f64() - 0.3).abs() < 1e-15);
        assert_eq!(s.gap(t), Mag::ZERO);
    }
}
