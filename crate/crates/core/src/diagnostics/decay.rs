//! Envelope fits for algebraically decaying functionals.
//!
//! The bounds being checked are one-sided (`value ≤ C·envelope`), so the fitted
//! constant is the smallest `C` for which the envelope dominates the whole series.
//! The log-mean (least-squares) constant and the regression exponent are reported
//! alongside, as is a hold-out statistic: `C` calibrated on the first half of the
//! samples and evaluated on all of them.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub fitted_constant: f64,
    /// `exp(mean log(value/envelope))`.
    pub lsq_constant: f64,
    pub target_exponent: f64,
    /// Least-squares slope of `-log value` against `log(1 + rate·t)`.
    pub fitted_exponent: f64,
    /// `max value/(C·envelope)` over all samples.
    pub max_violation: f64,
    /// As `max_violation`, with `C` taken from the first half of the samples only.
    pub holdout_violation: f64,
}

fn validate(series: &[(f64, f64)]) -> Result<()> {
    if series.is_empty() {
        return Err(Error::InvalidParams("empty series".into()));
    }
    for (i, &(_, v)) in series.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveSeries { index: i, value: v });
        }
    }
    for (i, w) in series.windows(2).enumerate() {
        if !(w[1].0 > w[0].0) {
            return Err(Error::InvalidParams(format!(
                "sample times must increase (index {})",
                i + 1
            )));
        }
    }
    Ok(())
}

fn calibration_len(n: usize) -> usize {
    n.div_ceil(2).max(1)
}

/// Fit `value(t) ≤ C·(1 + rate·t)^{-β}`; for the superfluid mass `rate = S₀^{p/2}`, `β = 2/p`.
pub fn fit_decay(series: &[(f64, f64)], rate: f64, beta: f64) -> Result<DecayFit> {
    validate(series)?;
    let envelope = |t: f64| (1.0 + rate * t).powf(-beta);
    let ratios: Vec<f64> = series.iter().map(|&(t, v)| v / envelope(t)).collect();
    let c = ratios.iter().cloned().fold(0.0, f64::max);
    let c_cal = ratios[..calibration_len(ratios.len())]
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    let lsq = (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp();

    let xs: Vec<f64> = series.iter().map(|&(t, _)| (1.0 + rate * t).ln()).collect();
    let ys: Vec<f64> = series.iter().map(|&(_, v)| v.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let fitted_exponent = if sxx > 0.0 { -sxy / sxx } else { f64::NAN };

    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(DecayFit {
        fitted_constant: c,
        lsq_constant: lsq,
        target_exponent: beta,
        fitted_exponent,
        max_violation: max_ratio / c,
        holdout_violation: max_ratio / c_cal,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoTermFit {
    pub constant: f64,
    pub max_violation: f64,
    pub holdout_violation: f64,
}

/// `Z₀ e^{-t/C} + C S₀^{p/2+1} / (1 + S₀^{p/2} t)^{1+2/p}`.
pub fn two_term_envelope(t: f64, c: f64, z0: f64, s0: f64, p: f64) -> f64 {
    let r = s0.powf(0.5 * p);
    z0 * (-t / c).exp() + c * s0 * r / (1.0 + r * t).powf(1.0 + 2.0 / p)
}

fn minimal_constant(series: &[(f64, f64)], z0: f64, s0: f64, p: f64) -> f64 {
    let holds = |c: f64| {
        series
            .iter()
            .all(|&(t, v)| v <= two_term_envelope(t, c, z0, s0, p))
    };
    let (mut lo, mut hi) = (1e-12_f64, 1.0_f64);
    while !holds(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    if holds(lo) {
        return lo;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    hi
}

/// Smallest single `C` for which the two-term envelope bounds the series.
pub fn fit_two_term(series: &[(f64, f64)], z0: f64, s0: f64, p: f64) -> Result<TwoTermFit> {
    validate(series)?;
    let c = minimal_constant(series, z0, s0, p);
    let c_cal = minimal_constant(&series[..calibration_len(series.len())], z0, s0, p);
    let violation = |c: f64| {
        series
            .iter()
            .map(|&(t, v)| v / two_term_envelope(t, c, z0, s0, p))
            .fold(0.0, f64::max)
    };
    Ok(TwoTermFit {
        constant: c,
        max_violation: violation(c),
        holdout_violation: violation(c_cal),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn synthetic_multiple_of_envelope() {
        let rate = 0.3_f64;
        let series: Vec<(f64, f64)> = (0..50)
            .map(|i| {
                let t = 0.4 * i as f64;
                (t, 3.0 * (1.0 + rate * t).powf(-1.0))
            })
            .collect();
        let fit = fit_decay(&series, rate, 1.0).unwrap();
        assert!((fit.fitted_constant - 3.0).abs() < 1e-12);
        assert!((fit.lsq_constant - 3.0).abs() < 1e-12);
        assert!((fit.max_violation - 1.0).abs() < 1e-12);
        assert!((fit.fitted_exponent - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_nonpositive_values() {
        assert!(matches!(
            fit_decay(&[(0.0, 1.0), (1.0, 0.0)], 1.0, 1.0),
            Err(Error::NonPositiveSeries { index: 1, .. })
        ));
        assert!(fit_decay(&[(1.0, 1.0), (0.5, 0.5)], 1.0, 1.0).is_err());
    }

    #[test]
    fn scalar_ode_mass_decay_fits() {
        // S' = -2λμ S^{p/2+1}  ⇒  S = S₀ (1 + λμp S₀^{p/2} t)^{-2/p}.
        for p in [1.0, 2.0, 4.0] {
            let (lm, s0) = (0.2_f64, 0.5_f64);
            let series: Vec<(f64, f64)> = (0..=200)
                .map(|i| {
                    let t = 0.1 * i as f64;
                    (t, s0 * (1.0 + lm * p * s0.powf(p / 2.0) * t).powf(-2.0 / p))
                })
                .collect();
            let fit = fit_decay(&series, s0.powf(p / 2.0), 2.0 / p).unwrap();
            assert!(fit.fitted_constant.is_finite());
            assert!(fit.fitted_constant <= s0 * (lm * p).powf(-2.0 / p) * (1.0 + 1e-12));
            assert!((fit.max_violation - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_term_fit_on_exponential_series() {
        let series: Vec<(f64, f64)> = (0..100)
            .map(|i| {
                let t = 0.2 * i as f64;
                (t, 2.0 * (-0.5 * t).exp())
            })
            .collect();
        let fit = fit_two_term(&series, 2.0, 1e-3, 2.0).unwrap();
        assert!(fit.max_violation <= 1.0);
        assert!((fit.constant - 2.0).abs() < 1e-3, "{}", fit.constant);
    }

    proptest! {
        #[test]
        fn fitted_envelope_dominates(vals in proptest::collection::vec(1e-6f64..10.0, 2..40), rate in 0.0f64..3.0, beta in 0.1f64..3.0) {
            let series: Vec<(f64, f64)> = vals.iter().enumerate().map(|(i, &v)| (i as f64 * 0.5, v)).collect();
            let fit = fit_decay(&series, rate, beta).unwrap();
            prop_assert!(fit.max_violation <= 1.0 + 1e-12);
            prop_assert!(fit.holdout_violation >= fit.max_violation - 1e-12);
            let two = fit_two_term(&series, vals[0], 0.1, 2.0).unwrap();
            prop_assert!(two.max_violation <= 1.0 + 1e-9);
        }
    }
}
