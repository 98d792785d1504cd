//! Small statistics helpers: empirical quantiles, moments, least squares.

use crate::error::{Error, Result};

/// Empirical quantile with linear interpolation between order statistics
/// (rank h = p (n-1)). Uses selection, not a full sort.
pub fn quantile(data: &[f64], p: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::argument("quantile of empty sample"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::argument(format!("quantile level {p} outside [0, 1]")));
    }
    let mut scratch: Vec<f64> = data.to_vec();
    Ok(quantile_in_place(&mut scratch, p))
}

/// As [`quantile`] but reordering `data` in place to avoid the copy.
pub fn quantile_in_place(data: &mut [f64], p: f64) -> f64 {
    let n = data.len();
    if n == 1 {
        return data[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let (_, lo_val, rest) = data.select_nth_unstable_by(lo, f64::total_cmp);
    let lo_val = *lo_val;
    if frac == 0.0 || rest.is_empty() {
        return lo_val;
    }
    let hi_val = *rest
        .iter()
        .min_by(|a, b| a.total_cmp(b))
        .expect("nonempty upper partition");
    lo_val * (1.0 - frac) + hi_val * frac
}

pub fn mean(data: &[f64]) -> f64 {
    data.iter().sum::<f64>() / data.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(data: &[f64]) -> f64 {
    let n = data.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(data);
    let ss: f64 = data.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Ordinary least squares y = intercept + slope * x.
#[derive(Debug, Clone, Copy)]
pub struct LinFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub rss: f64,
    pub n: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinFit> {
    if x.len() != y.len() {
        return Err(Error::argument("linear_fit: x and y lengths differ"));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::fit(format!("linear fit needs >= 2 points, got {n}")));
    }
    let xm = mean(x);
    let ym = mean(y);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - xm) * (xi - xm);
        sxy += (xi - xm) * (yi - ym);
    }
    if sxx <= 0.0 {
        return Err(Error::fit("singular design: all x identical"));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - intercept - slope * xi;
            r * r
        })
        .sum();
    let (slope_se, intercept_se) = if n > 2 {
        let s2 = rss / (n - 2) as f64;
        (
            (s2 / sxx).sqrt(),
            (s2 * (1.0 / n as f64 + xm * xm / sxx)).sqrt(),
        )
    } else {
        (0.0, 0.0)
    };
    Ok(LinFit {
        slope,
        intercept,
        slope_se,
        intercept_se,
        rss,
        n,
    })
}

/// Golden-section maximization of a unimodal function on [a, b].
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates() {
        let data = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&data, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&data, 0.5).unwrap(), 3.0);
        assert_eq!(quantile(&data, 1.0).unwrap(), 5.0);
        assert!((quantile(&data, 0.125).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn quantile_unsorted_input() {
        let data = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(quantile(&data, 0.5).unwrap(), 3.0);
    }

    #[test]
    fn quantile_rejects_bad_level() {
        assert!(quantile(&[1.0], 1.5).is_err());
        assert!(quantile(&[], 0.5).is_err());
    }

    #[test]
    fn fit_recovers_exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&xi| 2.5 * xi - 1.0).collect();
        let fit = linear_fit(&x, &y).unwrap();
        assert!((fit.slope - 2.5).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-12);
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn fit_singular_design() {
        assert!(linear_fit(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = golden_max(|x| -(x - 0.3) * (x - 0.3), -1.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        assert!(v > -1e-15);
    }
}
