//! Dynamical extremal index theta_q: Süveges estimation on product-system
//! exceedances, closed-form values for the interval maps, a quadrature
//! cross-check through the invariant density, and the entropy indicator
//! H_q = log(1 - theta_q) / (q - 1).

use crate::dynsys::{density_model, SystemKind, SystemSpec};
use crate::error::{Error, Result};
use crate::evt::ProductOrbit;
use crate::quad::integrate;
use crate::stats::{mean, quantile_in_place, sample_sd};
use rayon::prelude::*;
use std::io::Write;

/// Threshold exceedances of an observable series.
#[derive(Debug, Clone)]
pub struct ExceedanceRecord {
    pub threshold: f64,
    pub values: Vec<f64>,
    pub indices: Vec<u64>,
    pub series_len: usize,
    /// Quantile the threshold was derived from, when applicable.
    pub quantile: Option<f64>,
}

impl ExceedanceRecord {
    /// Collect exceedances of `threshold` from a series.
    pub fn from_series(series: &[f64], threshold: f64, quantile: Option<f64>) -> Self {
        let mut values = Vec::new();
        let mut indices = Vec::new();
        for (i, &v) in series.iter().enumerate() {
            if v > threshold {
                values.push(v);
                indices.push(i as u64);
            }
        }
        ExceedanceRecord {
            threshold,
            values,
            indices,
            series_len: series.len(),
            quantile,
        }
    }

    pub fn count(&self) -> usize {
        self.indices.len()
    }
}

/// Süveges diagnostics: the pieces of the likelihood estimate.
#[derive(Debug, Clone, Copy)]
pub struct SuvegesDiagnostics {
    pub n_exceedances: usize,
    /// Number of positive inter-cluster gaps (S_i > 0).
    pub n_clusters: usize,
    /// Sum of p_exc * S_i over the gaps.
    pub weighted_gap_sum: f64,
    /// True when the closed-form small-gap limit was used.
    pub limit_branch: bool,
}

/// Süveges maximum-likelihood extremal index from inter-exceedance times.
///
/// With p the exceedance probability, T_i the inter-exceedance index gaps,
/// S_i = T_i - 1, N the exceedance count, N_c the number of positive S_i,
/// A = sum p S_i and B = (N - 1) + N_c:
///
/// ```text
/// theta = (A + B - sqrt((A + B)^2 - 8 N_c A)) / (2 A)
/// ```
///
/// As A -> 0 the expression tends to 2 N_c / B (second-order expansion of
/// the square root), which is returned directly below A = 1e-12. The result
/// is clamped to [0, 1].
pub fn suveges_theta(record: &ExceedanceRecord) -> Result<(f64, SuvegesDiagnostics)> {
    let n = record.count();
    if n < 2 {
        return Err(Error::insufficient(2, n, "exceedances for the Süveges estimator"));
    }
    let p_exc = n as f64 / record.series_len as f64;
    let mut weighted_gap_sum = 0.0;
    let mut n_clusters = 0usize;
    for w in record.indices.windows(2) {
        let gap = w[1] - w[0];
        let s = gap.saturating_sub(1);
        if s > 0 {
            n_clusters += 1;
            weighted_gap_sum += p_exc * s as f64;
        }
    }
    let b = (n - 1) as f64 + n_clusters as f64;
    let (theta, limit_branch) = if weighted_gap_sum < 1e-12 {
        (2.0 * n_clusters as f64 / b, true)
    } else {
        let a = weighted_gap_sum;
        let disc = (a + b) * (a + b) - 8.0 * n_clusters as f64 * a;
        ((a + b - disc.max(0.0).sqrt()) / (2.0 * a), false)
    };
    Ok((
        theta.clamp(0.0, 1.0),
        SuvegesDiagnostics {
            n_exceedances: n,
            n_clusters,
            weighted_gap_sum,
            limit_branch,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeiMethod {
    Suveges,
    AnalyticClosedForm,
    AnalyticQuadrature,
    EntropyScaling,
}

impl DeiMethod {
    pub fn name(self) -> &'static str {
        match self {
            DeiMethod::Suveges => "suveges",
            DeiMethod::AnalyticClosedForm => "analytic",
            DeiMethod::AnalyticQuadrature => "quadrature",
            DeiMethod::EntropyScaling => "entropy-scaling",
        }
    }
}

/// One theta_q estimate with the derived indicator H_q.
#[derive(Debug, Clone, Copy)]
pub struct DeiEstimate {
    pub q: u32,
    pub theta: f64,
    pub method: DeiMethod,
    /// log(1 - theta) / (q - 1); absent at theta = 1.
    pub h_q: Option<f64>,
    /// Standard deviation across replicas for empirical estimates.
    pub stderr: Option<f64>,
}

impl DeiEstimate {
    pub fn new(q: u32, theta: f64, method: DeiMethod, stderr: Option<f64>) -> Self {
        let h_q = if theta < 1.0 {
            Some((1.0 - theta).ln() / (q as f64 - 1.0))
        } else {
            None
        };
        DeiEstimate {
            q,
            theta,
            method,
            h_q,
            stderr,
        }
    }
}

/// H_q = log(1 - theta) / (q - 1); undefined at theta = 1.
pub fn h_q(theta: f64, q: u32) -> Result<f64> {
    if q < 2 {
        return Err(Error::argument("H_q needs q >= 2"));
    }
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::argument(format!(
            "H_q undefined for theta = {theta} outside [0, 1)"
        )));
    }
    Ok((1.0 - theta).ln() / (q as f64 - 1.0))
}

/// Entropy-scaling prediction theta_q = 1 - exp(-(q-1) h_m), the constant
/// density / constant derivative baseline.
pub fn entropy_scaling_theta(q: u32, h_m: f64) -> f64 {
    1.0 - (-(q as f64 - 1.0) * h_m).exp()
}

fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut out = 1.0f64;
    for i in 0..k {
        out = out * (n - i) as f64 / (i + 1) as f64;
    }
    out
}

/// Closed-form theta_q for the four interval maps, as printed:
///
/// * `3x mod 1`: `1 - 3^(1-q)`;
/// * Markov piecewise-linear: density (3/5, 6/5, 6/5) against slopes
///   (3, 2, 3);
/// * Gauss map: the binomial sum with the log 2 term;
/// * Hemmer map: the parity-weighted binomial sum.
///
/// Note the Hemmer formula disagrees with the density-integral route of
/// [`theta_q_quadrature`] at even q (see that function's docs).
pub fn theta_q_analytic(kind: SystemKind, q: u32) -> Result<DeiEstimate> {
    if q < 2 {
        return Err(Error::argument("analytic DEI needs integer q >= 2"));
    }
    let theta = match kind {
        SystemKind::ThreeXMod1 => 1.0 - 3.0f64.powi(1 - q as i32),
        SystemKind::MarkovPl => {
            let h = [0.6f64, 1.2, 1.2];
            let t = [3.0f64, 2.0, 3.0];
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..3 {
                num += h[i].powi(q as i32) / t[i].powi(q as i32 - 1);
                den += h[i].powi(q as i32);
            }
            1.0 - num / den
        }
        SystemKind::Gauss => {
            let qm1 = q as i32 - 1;
            let mut sum = 0.0;
            for k in 0..=(2 * qm1) as u32 {
                if k as i32 == qm1 {
                    continue;
                }
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let e = k as i32 - qm1;
                sum += sign * binomial(2 * qm1 as u32, k) * (2.0f64.powi(e) - 1.0) / e as f64;
            }
            let sign_c = if (qm1 as u32).is_multiple_of(2) { 1.0 } else { -1.0 };
            sum += sign_c * binomial(2 * qm1 as u32, qm1 as u32) * std::f64::consts::LN_2;
            let den = (2.0f64.powi(1 - q as i32) - 1.0) / (1.0 - q as f64);
            1.0 - sum / den
        }
        SystemKind::Hemmer => {
            let mut sum = 0.0;
            for k in 0..=q {
                let parity = if (k + q - 1).is_multiple_of(2) { 2.0 } else { 0.0 };
                sum += binomial(q, k) * parity / (2 * k + q + 1) as f64;
            }
            1.0 - (q as f64 + 1.0) / 2.0f64.powi(q as i32) * sum
        }
        other => {
            return Err(Error::Unsupported(format!(
                "no closed-form DEI for {other}"
            )))
        }
    };
    Ok(DeiEstimate::new(q, theta, DeiMethod::AnalyticClosedForm, None))
}

/// Quadrature evaluation of the density-integral formula
///
/// ```text
/// theta_q = 1 - [ int h(x)^q / |T'(x)|^(q-1) dx ] / [ int h(x)^q dx ]
/// ```
///
/// using the closed-form [`DensityModel`] and adaptive Gauss-Kronrod panels
/// split at the density/derivative kinks. Serves as the independent oracle
/// for the closed forms. For the Hemmer map it agrees with the printed
/// closed form at odd q only: the printed formula tracks the signed
/// derivative, which flips the x > 0 branch at even q (theta_2 = 2/7 here
/// vs 2/5 from the printed sum).
pub fn theta_q_quadrature(kind: SystemKind, q: u32) -> Result<DeiEstimate> {
    if q < 2 {
        return Err(Error::argument("quadrature DEI needs integer q >= 2"));
    }
    let model = density_model(kind)?;
    let (lo, hi) = model.support();
    let cuts: Vec<f64> = match kind {
        SystemKind::MarkovPl => vec![lo, 1.0 / 3.0, 2.0 / 3.0, hi],
        SystemKind::Hemmer => vec![lo, 0.0, hi],
        _ => vec![lo, hi],
    };
    let qf = q as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for w in cuts.windows(2) {
        num += integrate(
            |x| model.density(x).powf(qf) / model.deriv_abs(x).powf(qf - 1.0),
            w[0],
            w[1],
            1e-12,
        )
        .value;
        den += integrate(|x| model.density(x).powf(qf), w[0], w[1], 1e-12).value;
    }
    Ok(DeiEstimate::new(
        q,
        1.0 - num / den,
        DeiMethod::AnalyticQuadrature,
        None,
    ))
}

/// Protocol for the empirical DEI estimate.
#[derive(Debug, Clone, Copy)]
pub struct DeiProtocol {
    /// Length of each replica series.
    pub len: usize,
    /// Quantile of the pre-run observable distribution used as threshold.
    pub quantile: f64,
    pub replicas: usize,
    /// Length of the threshold pre-run.
    pub pre_run_len: usize,
    pub burn_in: usize,
}

impl Default for DeiProtocol {
    fn default() -> Self {
        // 20 replica trajectories with a 10^6-point threshold pre-run.
        DeiProtocol {
            len: 1_000_000,
            quantile: 0.997,
            replicas: 20,
            pre_run_len: 1_000_000,
            burn_in: 1000,
        }
    }
}

/// Empirical theta_q: threshold from the quantile of a pre-run product
/// observable series, Süveges estimate per replica, mean and standard
/// deviation across replicas. Replica r runs on streams
/// `r q .. r q + q - 1`; the pre-run uses the streams after the replicas.
pub fn theta_q_empirical(
    spec: &SystemSpec,
    q: u32,
    protocol: &DeiProtocol,
    seed: u64,
) -> Result<DeiEstimate> {
    if q < 2 {
        return Err(Error::argument("empirical DEI needs integer q >= 2"));
    }
    if !(0.0 < protocol.quantile && protocol.quantile < 1.0) {
        return Err(Error::argument(format!(
            "quantile {} outside (0, 1)",
            protocol.quantile
        )));
    }
    if protocol.replicas == 0 || protocol.len < 2 {
        return Err(Error::argument("need replicas >= 1 and len >= 2"));
    }

    // Threshold pre-run on its own streams.
    let pre_stream_base = (protocol.replicas * q as usize) as u64;
    let mut orbit = ProductOrbit::new(spec, q as usize, seed, pre_stream_base, protocol.burn_in)?;
    let mut pre = Vec::with_capacity(protocol.pre_run_len);
    for _ in 0..protocol.pre_run_len {
        let v = orbit.phi_now();
        if v.is_finite() {
            pre.push(v);
        }
        orbit.advance();
    }
    if pre.is_empty() {
        return Err(Error::insufficient(1, 0, "finite pre-run observables"));
    }
    let threshold = quantile_in_place(&mut pre, protocol.quantile);

    let thetas: Vec<Result<f64>> = (0..protocol.replicas)
        .into_par_iter()
        .map(|rep| {
            let mut orbit = ProductOrbit::new(
                spec,
                q as usize,
                seed,
                (rep * q as usize) as u64,
                protocol.burn_in,
            )?;
            let mut values = Vec::new();
            let mut indices = Vec::new();
            for i in 0..protocol.len {
                let v = orbit.phi_now();
                if v > threshold {
                    values.push(v);
                    indices.push(i as u64);
                }
                orbit.advance();
            }
            let record = ExceedanceRecord {
                threshold,
                values,
                indices,
                series_len: protocol.len,
                quantile: Some(protocol.quantile),
            };
            suveges_theta(&record).map(|(theta, _)| theta)
        })
        .collect();
    let thetas: Vec<f64> = thetas.into_iter().collect::<Result<_>>()?;
    let theta = mean(&thetas);
    let sd = sample_sd(&thetas);
    Ok(DeiEstimate::new(q, theta, DeiMethod::Suveges, Some(sd)))
}

/// CSV row context for DEI output: `q,theta,theta_stderr,h_q,method,quantile,len,replicas`.
pub fn write_dei_csv<W: Write>(
    rows: &[DeiEstimate],
    quantile: Option<f64>,
    len: usize,
    replicas: usize,
    mut w: W,
) -> Result<()> {
    writeln!(w, "q,theta,theta_stderr,h_q,method,quantile,len,replicas")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            row.q,
            row.theta,
            row.stderr.map_or(String::from(""), |s| s.to_string()),
            row.h_q.map_or(String::from(""), |h| h.to_string()),
            row.method.name(),
            quantile.map_or(String::from(""), |p| p.to_string()),
            len,
            replicas
        )?;
    }
    Ok(())
}
