//! Error metrics over hidden entries.

use crate::error::{Error, Result};

/// Minimum sample size for the trimmed R².
pub const ROBUST_MIN_LEN: usize = 20;
/// Share of pairs retained by the trimmed R², in percent.
pub const ROBUST_KEEP_PERCENT: usize = 95;

fn check(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch(y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    Ok((y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64).sqrt())
}

pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    if y.len() < 2 {
        return Err(Error::TooFewPoints { required: 2, got: y.len() });
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// R² after discarding the largest absolute residuals: the `ceil(0.95 n)`
/// smallest are kept, ties resolved by position (later pairs dropped first).
pub fn r2_robust(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    if y.len() < ROBUST_MIN_LEN {
        return Err(Error::TooFewPoints { required: ROBUST_MIN_LEN, got: y.len() });
    }
    let n = y.len();
    let keep = (ROBUST_KEEP_PERCENT * n).div_ceil(100);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| (y[a] - yhat[a]).abs().total_cmp(&(y[b] - yhat[b]).abs()));
    order.truncate(keep);
    order.sort_unstable();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let hs: Vec<f64> = order.iter().map(|&i| yhat[i]).collect();
    r2(&ys, &hs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mae(&[5.0], &[2.0]).unwrap(), 3.0);
        assert_eq!(rmse(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[0.0, 4.0], &[0.0, 0.0]).unwrap(), 8f64.sqrt());
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 5.0]).unwrap(), -1.0);
    }

    #[test]
    fn error_cases() {
        assert_eq!(mae(&[1.0], &[1.0, 2.0]).unwrap_err(), Error::LengthMismatch(1, 2));
        assert_eq!(rmse(&[], &[]).unwrap_err(), Error::EmptyInput);
        assert_eq!(r2(&[2.0, 2.0], &[1.0, 2.0]).unwrap_err(), Error::ZeroVariance);
        assert!(matches!(r2_robust(&[1.0; 5], &[1.0; 5]), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn robust_r2_ignores_gross_outliers() {
        let mut y: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let mut yhat = y.clone();
        for i in 0..5 {
            y.push(i as f64);
            yhat.push(i as f64 + 100.0);
        }
        assert_eq!(r2_robust(&y, &yhat).unwrap(), 1.0);
        assert!(r2(&y, &yhat).unwrap() < 0.0);
        assert_eq!(r2_robust(&y[..100], &y[..100]).unwrap(), 1.0);
    }

    #[test]
    fn robust_r2_drops_later_ties() {
        // Every residual is 1; n = 40 keeps the first 38 pairs.
        let y: Vec<f64> = (0..40).map(|i| (i * i) as f64).collect();
        let yhat: Vec<f64> = y.iter().map(|v| v + 1.0).collect();
        let expect = r2(&y[..38], &yhat[..38]).unwrap();
        assert_eq!(r2_robust(&y, &yhat).unwrap(), expect);
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(pairs in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..50)) {
            let (y, h): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert!(rmse(&y, &h).unwrap() >= mae(&y, &h).unwrap() * (1.0 - 1e-12));
        }
    }
}
