//! The translation semigroup `e^{t d/dz} u0 = u0(z + t)`.

use num_complex::Complex64;

use crate::error::Result;
use crate::mag::Scale;
use crate::operators::{exp_apply_with, ScaledOperator, SeriesOptions};
use crate::spaces::{CoeffSeries, Level, SpaceSpec};
use crate::Mag;

/// Outer scale of the demo; `u0` is read on the unit disc.
pub const SHIFT_DOMAIN: f64 = 1.0;

/// `u0(z + t)` two ways: the exponential of `t d/dz` taken from the unit disc
/// down to scale `s`, and direct binomial recomposition.
pub fn shift_exp_demo(u0: &CoeffSeries, t: f64, s: f64) -> Result<(CoeffSeries, CoeffSeries)> {
    let degree = u0.degree_cap();
    let tau = Scale::new(SHIFT_DOMAIN);
    // scales live in the open interval below the bound
    let space = SpaceSpec::new(2.0 * SHIFT_DOMAIN, degree)?;
    let op = ScaledOperator::derivative(degree, Complex64::new(t, 0.0), tau);
    let x = space.element(u0.clone(), SHIFT_DOMAIN, Level::Finite(0))?;
    // d/dz is nilpotent on the truncated space, so the series terminates
    let opts = SeriesOptions {
        tol: Mag::ZERO,
        max_nu: 0.5,
    };
    let (via_exp, _) = exp_apply_with(&op, &x, tau, Scale::new(s), opts)?;
    Ok((via_exp.series, binomial_shift(u0, t)))
}

/// `sum_j u_j (z + t)^j` expanded in powers of `z`.
fn binomial_shift(u0: &CoeffSeries, t: f64) -> CoeffSeries {
    let degree = u0.degree_cap();
    let mut out = CoeffSeries::zero(degree);
    for j in 0..=degree {
        let uj = u0.coeff(j);
        if uj.norm_sqr() == 0.0 {
            continue;
        }
        // C(j, k) t^{j-k}, built upward from k = j
        let mut c = 1.0;
        for k in (0..=j).rev() {
            out.set_coeff(k, out.coeff(k) + uj * c);
            c *= t * k as f64 / (j - k + 1) as f64;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::KamError;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_shifts_by_a_tenth() {
        let u0 = CoeffSeries::monomial(2, 4);
        let (e, b) = shift_exp_demo(&u0, 0.1, 0.3).unwrap();
        let expect = CoeffSeries::from_real(&[0.01, 0.2, 1.0, 0.0, 0.0]).unwrap();
        assert!(e.max_abs_diff(&expect, 4) < 1e-15);
        assert!(b.max_abs_diff(&expect, 4) < 1e-15);
    }

    #[test]
    fn zero_time_is_identity() {
        let u0 = CoeffSeries::from_real(&[1.0, -2.0, 0.5, 3.0]).unwrap();
        let (e, b) = shift_exp_demo(&u0, 0.0, 0.5).unwrap();
        assert_eq!(e, u0);
        assert_eq!(b, u0);
    }

    #[test]
    fn random_degree_ten_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let c: Vec<f64> = (0..=10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u0 = CoeffSeries::from_real(&c).unwrap();
            let (e, b) = shift_exp_demo(&u0, 0.05, 0.5).unwrap();
            assert!(e.max_abs_diff(&b, 10) < 1e-12);
        }
    }

    #[test]
    fn large_time_trips_the_guard() {
        let u0 = CoeffSeries::monomial(3, 5);
        assert!(matches!(shift_exp_demo(&u0, 0.5, 0.5), Err(KamError::BudgetExceeded(_))));
    }
}
