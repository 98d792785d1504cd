//! Free energy R(q), Legendre-Fenchel transforms (rate functions Q, Q-hat
//! and the multifractal spectrum f(alpha)) and empirical rate-function
//! estimation for local dimensions and hitting times.
//!
//! The three transforms share one source function tau(q):
//!
//! ```text
//! R(q)     = -tau(1 - q)
//! Q(s)     = sup_q { -q s + tau(q + 1) }
//! Qhat(s)  = sup_q {  q s + tau(1 - q) }
//! f(alpha) = min_q { alpha q - tau(q) }
//! ```

use crate::dynsys::{SystemSpec, Trajectory};
use crate::error::{Error, Result};
use crate::evt::LocalDimSample;
use crate::grid::SpatialGrid;
use crate::rng::SplitMix64;
use crate::scaling::DimensionSpectrum;
use crate::stats::{golden_max, mean};
use std::io::Write;

/// Shape-preserving piecewise-cubic interpolant (Fritsch-Carlson slopes).
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::argument("pchip needs >= 2 matching nodes"));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::argument("pchip nodes must be strictly increasing"));
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d[0] = end_slope(h[0], h.get(1).copied().unwrap_or(h[0]), delta[0], delta.get(1).copied().unwrap_or(delta[0]));
        d[n - 1] = end_slope(
            h[n - 2],
            if n >= 3 { h[n - 3] } else { h[n - 2] },
            delta[n - 2],
            if n >= 3 { delta[n - 3] } else { delta[n - 2] },
        );
        Ok(Pchip { x, y, d })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    pub fn eval(&self, q: f64) -> Option<f64> {
        let (lo, hi) = self.range();
        if q < lo - 1e-12 || q > hi + 1e-12 {
            return None;
        }
        let q = q.clamp(lo, hi);
        let i = match self.x.binary_search_by(|v| v.total_cmp(&q)) {
            Ok(i) => i.min(self.x.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.x.len() - 2),
        };
        let h = self.x[i + 1] - self.x[i];
        let t = (q - self.x[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Some(h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1])
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// Evaluable tau(q): analytic closed forms or an interpolated fit.
#[derive(Debug, Clone)]
pub enum TauSource {
    /// Ternary IFS with contraction 1/2: tau(q) = -log2(p1^q + p2^q + p3^q).
    IfsTernary { p: [f64; 3] },
    /// Uniform measure of dimension d: tau(q) = d (q - 1).
    Uniform { d: f64 },
    /// Shape-preserving interpolation through fitted (q, tau) points.
    Fitted(Pchip),
}

impl TauSource {
    pub fn sierpinski_standard() -> Self {
        TauSource::IfsTernary {
            p: [0.25, 0.25, 0.5],
        }
    }

    /// Build from a fitted spectrum (q = 1 uses tau = 0; non-finite cells
    /// are skipped).
    pub fn from_spectrum(spec: &DimensionSpectrum) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = spec
            .q_list
            .iter()
            .zip(&spec.tau)
            .filter(|(_, t)| t.is_finite())
            .map(|(&q, &t)| (q, t))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12);
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        Ok(TauSource::Fitted(Pchip::new(x, y)?))
    }

    /// Interpolable q-range.
    pub fn range(&self) -> (f64, f64) {
        match self {
            TauSource::Fitted(p) => p.range(),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn tau(&self, q: f64) -> Option<f64> {
        match self {
            TauSource::IfsTernary { p } => {
                let sum = p[0].powf(q) + p[1].powf(q) + p[2].powf(q);
                Some(-sum.log2())
            }
            TauSource::Uniform { d } => Some(d * (q - 1.0)),
            TauSource::Fitted(pchip) => pchip.eval(q),
        }
    }

    /// Information dimension tau'(1), from the closed forms or a central
    /// difference on the interpolant.
    pub fn d1(&self) -> Option<f64> {
        match self {
            // tau'(q) = -(sum p^q ln p / sum p^q) / ln 2; the denominator
            // sum is 1 at q = 1.
            TauSource::IfsTernary { p } => {
                Some(-p.iter().map(|&pi| pi * pi.ln()).sum::<f64>() / std::f64::consts::LN_2)
            }
            TauSource::Uniform { d } => Some(*d),
            TauSource::Fitted(pchip) => {
                let h = 1e-5;
                let (lo, hi) = pchip.range();
                if 1.0 - h < lo || 1.0 + h > hi {
                    return None;
                }
                Some((pchip.eval(1.0 + h)? - pchip.eval(1.0 - h)?) / (2.0 * h))
            }
        }
    }
}

/// Free energy R(q) = -tau(1 - q) sampled on a q-grid.
#[derive(Debug, Clone)]
pub struct FreeEnergy {
    pub q_grid: Vec<f64>,
    pub r: Vec<f64>,
}

impl FreeEnergy {
    /// Indices where discrete convexity fails beyond `tol`.
    pub fn convexity_violations(&self, tol: f64) -> Vec<usize> {
        let mut out = Vec::new();
        for i in 1..self.q_grid.len().saturating_sub(1) {
            let second = self.r[i + 1] - 2.0 * self.r[i] + self.r[i - 1];
            if second < -tol {
                out.push(i);
            }
        }
        out
    }
}

/// Evaluate R(q) = -tau(1 - q) on `q_grid`.
pub fn free_energy(tau: &TauSource, q_grid: &[f64]) -> Result<FreeEnergy> {
    let mut r = Vec::with_capacity(q_grid.len());
    for &q in q_grid {
        let t = tau.tau(1.0 - q).ok_or_else(|| {
            Error::Range(format!("tau not evaluable at 1 - q = {}", 1.0 - q))
        })?;
        r.push(-t);
    }
    Ok(FreeEnergy {
        q_grid: q_grid.to_vec(),
        r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    Q,
    QHat,
    FAlpha,
    EmpiricalLocalDim,
    EmpiricalHitting,
}

impl RateKind {
    pub fn name(self) -> &'static str {
        match self {
            RateKind::Q => "q",
            RateKind::QHat => "qhat",
            RateKind::FAlpha => "f-alpha",
            RateKind::EmpiricalLocalDim => "empirical-local-dim",
            RateKind::EmpiricalHitting => "empirical-hitting",
        }
    }
}

/// Sampled rate function (or multifractal spectrum) on an s-grid.
#[derive(Debug, Clone)]
pub struct RateCurve {
    pub s: Vec<f64>,
    pub value: Vec<f64>,
    pub kind: RateKind,
    /// Resolution of empirical curves.
    pub r_level: Option<f64>,
    /// Unreliable points: censored empirical bounds or edge-attained
    /// suprema / out-of-window transform values.
    pub censored: Vec<bool>,
    pub n_samples: usize,
}

impl RateCurve {
    /// CSV export: `s,value,kind,r_level,censored,n_samples`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,value,kind,r_level,censored,n_samples")?;
        for i in 0..self.s.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.s[i],
                self.value[i],
                self.kind.name(),
                self.r_level.map_or(String::new(), |r| r.to_string()),
                u8::from(self.censored[i]),
                self.n_samples
            )?;
        }
        Ok(())
    }

    /// Sup-distance to another curve over the points where both are
    /// uncensored, restricted to `window` on the s-axis.
    pub fn sup_distance(&self, other: &RateCurve, window: (f64, f64)) -> Option<f64> {
        let mut worst: Option<f64> = None;
        for i in 0..self.s.len() {
            let s = self.s[i];
            if s < window.0 || s > window.1 || self.censored[i] {
                continue;
            }
            let j = other
                .s
                .iter()
                .position(|&sj| (sj - s).abs() < 1e-9)
                .filter(|&j| !other.censored[j]);
            if let Some(j) = j {
                let d = (self.value[i] - other.value[j]).abs();
                worst = Some(worst.map_or(d, |w: f64| w.max(d)));
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    /// Rate function of local dimensions: sup_q { -q s + tau(q + 1) }.
    Q,
    /// Rate function of hitting times: sup_q { q s + tau(1 - q) }.
    QHat,
    /// Multifractal spectrum: min_q { alpha q - tau(q) }.
    FAlpha,
}

const LEGENDRE_Q_LO: f64 = -10.0;
const LEGENDRE_Q_HI: f64 = 10.0;
const LEGENDRE_STEP: f64 = 0.01;

/// Legendre-Fenchel transform of tau on an s-grid: a discrete sup (or min
/// for f(alpha)) over q in [-10, 10] step 0.01 intersected with the source
/// range, refined by golden section around the discrete optimum to 1e-8 in
/// q. Optima attained at the q-grid edge are flagged as censored.
pub fn legendre(kind: TransformKind, tau: &TauSource, s_grid: &[f64]) -> Result<RateCurve> {
    if s_grid.is_empty() {
        return Err(Error::argument("empty s grid"));
    }
    // Transform argument ranges: Q needs tau(q+1), QHat needs tau(1-q).
    let (src_lo, src_hi) = tau.range();
    let (q_lo, q_hi) = match kind {
        TransformKind::Q => (src_lo - 1.0, src_hi - 1.0),
        TransformKind::QHat => (1.0 - src_hi, 1.0 - src_lo),
        TransformKind::FAlpha => (src_lo, src_hi),
    };
    let q_lo = q_lo.max(LEGENDRE_Q_LO);
    let q_hi = q_hi.min(LEGENDRE_Q_HI);
    if !(q_hi > q_lo) {
        return Err(Error::Range("legendre: empty q window".into()));
    }
    let n_steps = ((q_hi - q_lo) / LEGENDRE_STEP).round() as usize;
    let qs: Vec<f64> = (0..=n_steps)
        .map(|i| q_lo + (q_hi - q_lo) * i as f64 / n_steps as f64)
        .collect();

    let mut values = Vec::with_capacity(s_grid.len());
    let mut censored = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let objective = |q: f64| -> f64 {
            let t = match kind {
                TransformKind::Q => tau.tau(q + 1.0),
                TransformKind::QHat => tau.tau(1.0 - q),
                TransformKind::FAlpha => tau.tau(q),
            };
            match (kind, t) {
                (_, None) => f64::NEG_INFINITY,
                (TransformKind::Q, Some(t)) => -q * s + t,
                (TransformKind::QHat, Some(t)) => q * s + t,
                // min alpha q - tau(q) = -max -(alpha q - tau(q))
                (TransformKind::FAlpha, Some(t)) => -(s * q - t),
            }
        };
        let mut best_i = 0usize;
        let mut best = f64::NEG_INFINITY;
        for (i, &q) in qs.iter().enumerate() {
            let v = objective(q);
            if v > best {
                best = v;
                best_i = i;
            }
        }
        let at_edge = best_i == 0 || best_i == qs.len() - 1;
        let interior_best = qs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 0 && *i != qs.len() - 1)
            .map(|(_, &q)| objective(q))
            .fold(f64::NEG_INFINITY, f64::max);
        let edge_flag = at_edge && best > interior_best + 1e-12;
        let (lo, hi) = (
            qs[best_i.saturating_sub(1)],
            qs[(best_i + 1).min(qs.len() - 1)],
        );
        let (_, refined) = golden_max(objective, lo, hi, 1e-8);
        let v = refined.max(best);
        values.push(match kind {
            TransformKind::FAlpha => -v,
            _ => v,
        });
        censored.push(edge_flag);
    }
    Ok(RateCurve {
        s: s_grid.to_vec(),
        value: values,
        kind: match kind {
            TransformKind::Q => RateKind::Q,
            TransformKind::QHat => RateKind::QHat,
            TransformKind::FAlpha => RateKind::FAlpha,
        },
        r_level: None,
        censored,
        n_samples: 0,
    })
}

/// Validity window (0, R(Delta)/Delta) of the hitting-time large-deviation
/// law, with Delta = D1 + 1; values of Qhat outside it are unreliable.
pub fn prop2_window(tau: &TauSource, d1: f64) -> Result<(f64, f64)> {
    let delta = d1 + 1.0;
    let r_delta = -tau
        .tau(1.0 - delta)
        .ok_or_else(|| Error::Range(format!("tau not evaluable at {}", 1.0 - delta)))?;
    Ok((0.0, r_delta / delta))
}

/// Empirical rate function of finite-resolution local dimensions at one
/// resolution level: tail fractions of the d1r sample against the sample
/// mean, scaled by log r. Zero-count tails are reported as censored lower
/// bounds `log(1/n) / log r`.
pub fn empirical_rate_local_dim(
    sample: &LocalDimSample,
    r_level: f64,
    s_grid: &[f64],
) -> Result<RateCurve> {
    if sample.is_empty() {
        return Err(Error::insufficient(1, 0, "local-dimension sample"));
    }
    if !(r_level > 0.0 && r_level < 1.0) {
        return Err(Error::argument("r level must lie in (0, 1)"));
    }
    let n = sample.len() as f64;
    let ln_r = r_level.ln();
    let d_mean = mean(&sample.d1r);
    let mut values = Vec::with_capacity(s_grid.len());
    let mut censored = Vec::with_capacity(s_grid.len());
    let mut all_censored = true;
    for &s in s_grid {
        let count = if s >= d_mean {
            sample.d1r.iter().filter(|&&d| d >= s).count()
        } else {
            sample.d1r.iter().filter(|&&d| d < s).count()
        };
        if count == 0 {
            values.push((1.0 / n).ln() / ln_r);
            censored.push(true);
        } else {
            values.push((count as f64 / n).ln() / ln_r);
            censored.push(false);
            all_censored = false;
        }
    }
    if all_censored {
        return Err(Error::insufficient(
            1,
            0,
            "all rate-curve cells censored at this resolution",
        ));
    }
    Ok(RateCurve {
        s: s_grid.to_vec(),
        value: values,
        kind: RateKind::EmpiricalLocalDim,
        r_level: Some(r_level),
        censored,
        n_samples: sample.len(),
    })
}

/// Protocol for the empirical hitting-time rate function.
#[derive(Debug, Clone, Copy)]
pub struct HittingLdpProtocol {
    pub orbit_len: usize,
    pub n_targets: usize,
    pub draws_per_target: usize,
    pub burn_in: usize,
}

/// Empirical rate function of `log H / (-log r)` over pairs (x, z) drawn
/// from two independent orbits. For each threshold `D1 + s` the exceedance
/// fraction is converted to a rate by `log(frac) / log r`. Pairs whose ball
/// is not hit by the end of the orbit are right-censored: they count as
/// exceedances (their hitting time exceeds the scan), and the whole curve
/// is marked censored when they exceed 10% of the pairs.
///
/// The s-axis of the returned curve holds `D1 + s`, directly comparable to
/// the Legendre Qhat curve.
pub fn empirical_rate_hitting(
    spec: &SystemSpec,
    r: f64,
    s_grid: &[f64],
    d1: f64,
    protocol: &HittingLdpProtocol,
    seed: u64,
) -> Result<RateCurve> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::argument("radius must lie in (0, 1)"));
    }
    let orbit = Trajectory::generate_stream(spec, seed, 0, protocol.burn_in, protocol.orbit_len)?;
    let targets =
        Trajectory::generate_stream(spec, seed, 1, protocol.burn_in, protocol.n_targets)?;
    let grid = SpatialGrid::build(&orbit, r);
    let mut draw_rng = SplitMix64::from_seed_stream(seed, 2);

    let mut log_ratios: Vec<f64> = Vec::with_capacity(protocol.n_targets * protocol.draws_per_target);
    let mut n_censored = 0usize;
    let neg_ln_r = -r.ln();
    for t in 0..targets.len() {
        let z = targets.state(t);
        let entries = grid.indices_in_ball(z, r);
        for _ in 0..protocol.draws_per_target {
            let j = (draw_rng.next_u64() % (orbit.len() as u64 / 2)) as u32;
            let hit = match entries.partition_point(|&e| e <= j) {
                k if k < entries.len() => Some(entries[k]),
                _ => None,
            };
            match hit {
                Some(e) => {
                    let h = (e - j) as f64;
                    log_ratios.push(h.ln() / neg_ln_r);
                }
                None => {
                    // Right-censored: hitting time exceeds the remaining scan.
                    let bound = (orbit.len() as u32 - j) as f64;
                    log_ratios.push(bound.ln() / neg_ln_r);
                    n_censored += 1;
                }
            }
        }
    }
    let total = log_ratios.len();
    let heavy_censoring = n_censored * 10 > total;
    let n = total as f64;
    let mut values = Vec::with_capacity(s_grid.len());
    let mut censored = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let threshold = d1 + s;
        let count = log_ratios.iter().filter(|&&v| v > threshold).count();
        if count == 0 {
            values.push((1.0 / n).ln() / r.ln());
            censored.push(true);
        } else {
            values.push((count as f64 / n).ln() / r.ln());
            censored.push(heavy_censoring);
        }
    }
    Ok(RateCurve {
        s: s_grid.iter().map(|&s| d1 + s).collect(),
        value: values,
        kind: RateKind::EmpiricalHitting,
        r_level: Some(r),
        censored,
        n_samples: total,
    })
}
