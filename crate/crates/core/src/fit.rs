//! Ordinary least-squares fits used for growth and decay exponents.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub rms: f64,
    pub n: usize,
}

/// Fits `y = slope * x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::FitFailure("length mismatch".into()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::FitFailure(format!("need at least 2 points, got {n}")));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::FitFailure("non-finite data".into()));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::FitFailure("degenerate abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        / nf)
        .sqrt();
    Ok(LineFit {
        slope,
        intercept,
        rms,
        n,
    })
}

/// Fits `log y = slope * log x + c` over the points with `x` in `window`.
/// Points with non-positive `y` are rejected.
pub fn loglog_fit(xs: &[f64], ys: &[f64], window: (f64, f64)) -> Result<LineFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, _)| **x >= window.0 && **x <= window.1)
        .map(|(x, y)| {
            if *y > 0.0 {
                Ok((x.ln(), y.ln()))
            } else {
                Err(Error::FitFailure(format!("non-positive value {y} at x = {x}")))
            }
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    linear_fit(&lx, &ly)
}

/// The window covering the top `decades` decades below the largest sample.
pub fn top_decades(xs: &[f64], decades: f64) -> (f64, f64) {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    ((hi / 10f64.powf(decades)).max(lo), hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let f = linear_fit(&xs, &ys).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!((f.intercept + 1.0).abs() < 1e-14);
        assert!(f.rms < 1e-14);
    }

    #[test]
    fn failures() {
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
        assert!(linear_fit(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(loglog_fit(&[1.0, 2.0], &[1.0, 0.0], (0.0, 10.0)).is_err());
    }

    #[test]
    fn window() {
        let xs = [1.0, 10.0, 100.0, 1e3, 1e4];
        assert_eq!(top_decades(&xs, 2.0), (100.0, 1e4));
        assert_eq!(top_decades(&xs, 9.0), (1.0, 1e4));
    }

    proptest! {
        #[test]
        fn recovers_power_laws(k in -3.0f64..3.0, c in 0.1f64..10.0) {
            let xs: Vec<f64> = (0..20).map(|i| 10f64.powf(i as f64 / 4.0)).collect();
            let ys: Vec<f64> = xs.iter().map(|x| c * x.powf(k)).collect();
            let f = loglog_fit(&xs, &ys, top_decades(&xs, 2.0)).unwrap();
            prop_assert!((f.slope - k).abs() < 1e-9);
        }
    }
}
