//! Extreme-value machinery: the -log-distance observable on q-fold product
//! systems, exceedance tails, peaks-over-threshold local dimensions, block
//! maxima and constrained GEV maximum likelihood.

use crate::dynsys::{dist, Metric, SystemSpec, Trajectory};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::stats::{mean, quantile_in_place, sample_sd};
use rayon::prelude::*;
use std::io::Write;

/// Default minimum number of exceedances for a POT estimate.
pub const MIN_EXCEEDANCES: usize = 50;

/// Observable phi_z(x) = -log d(x, z). Coincident points give +infinity,
/// which every consumer excludes from statistics and counts.
#[inline]
pub fn phi(metric: Metric, z: &[f64], x: &[f64]) -> f64 {
    let d = dist(metric, x, z);
    if d == 0.0 {
        f64::INFINITY
    } else {
        -d.ln()
    }
}

/// Product observable -log max_{i>=2} d(x_1, x_i) over q points.
#[inline]
pub fn phi_product(metric: Metric, states: &[&[f64]]) -> f64 {
    debug_assert!(states.len() >= 2);
    let first = states[0];
    let mut dmax = 0.0f64;
    for other in &states[1..] {
        let d = dist(metric, first, other);
        if d > dmax {
            dmax = d;
        }
    }
    if dmax == 0.0 {
        f64::INFINITY
    } else {
        -dmax.ln()
    }
}

/// Evenly spaced threshold grid for tail estimation.
#[derive(Debug, Clone, Copy)]
pub struct UGrid {
    pub u_min: f64,
    pub u_max: f64,
    pub n: usize,
}

impl UGrid {
    pub fn new(u_min: f64, u_max: f64, n: usize) -> Result<Self> {
        if !(u_max > u_min) || n < 2 {
            return Err(Error::argument("u grid needs u_max > u_min and n >= 2"));
        }
        Ok(UGrid { u_min, u_max, n })
    }

    pub fn points(&self) -> Vec<f64> {
        let du = (self.u_max - self.u_min) / (self.n - 1) as f64;
        (0..self.n).map(|i| self.u_min + i as f64 * du).collect()
    }
}

/// Sampled complementary distribution of the product observable:
/// `fbar[i]` estimates the probability of `phi > u[i]`.
#[derive(Debug, Clone)]
pub struct Tail {
    pub u: Vec<f64>,
    pub fbar: Vec<f64>,
    /// Raw exceedance counts behind each fbar value.
    pub counts: Vec<u64>,
    pub total: u64,
    /// Coincident-point sentinels excluded from the statistics.
    pub n_infinite: u64,
}

struct TailAccum {
    hist: Vec<u64>,
    total: u64,
    n_infinite: u64,
}

impl TailAccum {
    fn new(n: usize) -> Self {
        TailAccum {
            // hist[k] counts phi in (u_{k-1}, u_k]; hist[n] is beyond u_max.
            hist: vec![0; n + 1],
            total: 0,
            n_infinite: 0,
        }
    }

    #[inline]
    fn push(&mut self, grid: &UGrid, phi_value: f64) {
        if phi_value.is_infinite() {
            self.n_infinite += 1;
            return;
        }
        self.total += 1;
        let du = (grid.u_max - grid.u_min) / (grid.n - 1) as f64;
        let k = ((phi_value - grid.u_min) / du).ceil();
        let k = if k < 0.0 {
            0
        } else if k >= self.hist.len() as f64 {
            self.hist.len() - 1
        } else {
            k as usize
        };
        self.hist[k] += 1;
    }

    fn merge(&mut self, other: &TailAccum) {
        for (a, b) in self.hist.iter_mut().zip(&other.hist) {
            *a += b;
        }
        self.total += other.total;
        self.n_infinite += other.n_infinite;
    }

    fn finish(self, grid: &UGrid) -> Tail {
        let n = grid.n;
        let mut counts = vec![0u64; n];
        // phi > u_i collects every histogram bin strictly beyond i.
        let mut acc = 0u64;
        for i in (0..n).rev() {
            acc += self.hist[i + 1];
            counts[i] = acc;
        }
        let fbar = counts
            .iter()
            .map(|&c| c as f64 / self.total.max(1) as f64)
            .collect();
        Tail {
            u: grid.points(),
            fbar,
            counts,
            total: self.total,
            n_infinite: self.n_infinite,
        }
    }
}

/// Tail of the product observable over q stored trajectories of equal
/// length with independent seeds.
pub fn exceedance_tail(trajs: &[&Trajectory], grid: &UGrid) -> Result<Tail> {
    if trajs.len() < 2 {
        return Err(Error::argument("product tail needs q >= 2 trajectories"));
    }
    let len = trajs[0].len();
    let dim = trajs[0].dim();
    let metric = trajs[0].metric();
    if trajs.iter().any(|t| t.len() != len || t.dim() != dim) {
        return Err(Error::argument("trajectories must share length and dimension"));
    }
    let mut acc = TailAccum::new(grid.n);
    let mut states: Vec<&[f64]> = Vec::with_capacity(trajs.len());
    for j in 0..len {
        states.clear();
        states.extend(trajs.iter().map(|t| t.state(j)));
        acc.push(grid, phi_product(metric, &states));
    }
    Ok(acc.finish(grid))
}

/// Lockstep product orbit of q copies of a system, stepping without storing
/// the trajectories. Orbit i runs on substream `stream_base + i`.
pub(crate) struct ProductOrbit {
    spec: SystemSpec,
    states: Vec<[f64; 3]>,
    rngs: Vec<SplitMix64>,
    burn_in: usize,
}

impl ProductOrbit {
    pub(crate) fn new(
        spec: &SystemSpec,
        q: usize,
        seed: u64,
        stream_base: u64,
        burn_in: usize,
    ) -> Result<Self> {
        if q < 2 {
            return Err(Error::argument("product order q must be >= 2"));
        }
        let mut states = Vec::with_capacity(q);
        let mut rngs = Vec::with_capacity(q);
        for i in 0..q {
            let mut rng = SplitMix64::from_seed_stream(seed, stream_base + i as u64);
            states.push(spec.settle(&mut rng, burn_in));
            rngs.push(rng);
        }
        Ok(ProductOrbit {
            spec: spec.clone(),
            states,
            rngs,
            burn_in,
        })
    }

    #[inline]
    pub(crate) fn phi_now(&self) -> f64 {
        let metric = self.spec.metric();
        let dim = self.spec.dim();
        let first = &self.states[0][..dim];
        let mut dmax = 0.0f64;
        for s in &self.states[1..] {
            let d = dist(metric, first, &s[..dim]);
            if d > dmax {
                dmax = d;
            }
        }
        if dmax == 0.0 {
            f64::INFINITY
        } else {
            -dmax.ln()
        }
    }

    /// Advance all q orbits one step, restarting on domain pathologies the
    /// same way trajectory generation does.
    pub(crate) fn advance(&mut self) {
        for (s, rng) in self.states.iter_mut().zip(&mut self.rngs) {
            if self.spec.step_regularized(s, rng).is_err() {
                *s = self.spec.settle(rng, self.burn_in);
            }
        }
    }
}

/// Streamed tail of the product observable: `replicas` independent product
/// orbits of `len_per_replica` steps each, histograms merged in replica
/// order.
pub fn exceedance_tail_streamed(
    spec: &SystemSpec,
    q: usize,
    len_per_replica: usize,
    replicas: usize,
    seed: u64,
    burn_in: usize,
    grid: &UGrid,
) -> Result<Tail> {
    if replicas == 0 || len_per_replica == 0 {
        return Err(Error::argument("need replicas >= 1 and len >= 1"));
    }
    let accums: Vec<Result<TailAccum>> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let mut orbit =
                ProductOrbit::new(spec, q, seed, (rep * q) as u64, burn_in)?;
            let mut acc = TailAccum::new(grid.n);
            for _ in 0..len_per_replica {
                acc.push(grid, orbit.phi_now());
                orbit.advance();
            }
            Ok(acc)
        })
        .collect();
    let mut total = TailAccum::new(grid.n);
    for a in accums {
        total.merge(&a?);
    }
    Ok(total.finish(grid))
}

/// tau(q) from the exponential tail: -slope of `log fbar(u)` over the fit
/// window, with `D_q = tau / (q - 1)`. Returns `(tau, stderr)`.
pub fn tau_from_tail(tail: &Tail, u_fit: (f64, f64)) -> Result<(f64, f64)> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, &u) in tail.u.iter().enumerate() {
        if u < u_fit.0 || u > u_fit.1 || tail.fbar[i] <= 0.0 {
            continue;
        }
        x.push(u);
        y.push(tail.fbar[i].ln());
    }
    if x.len() < 3 {
        return Err(Error::fit(format!(
            "tail fit needs >= 3 points with positive fbar in range, got {}",
            x.len()
        )));
    }
    let fit = crate::stats::linear_fit(&x, &y)?;
    Ok((-fit.slope, fit.slope_se))
}

/// Threshold rule for peaks-over-threshold estimation.
#[derive(Debug, Clone, Copy)]
pub enum PotThreshold {
    /// Empirical p-quantile of the observable series.
    Quantile(f64),
    /// Fixed cutoff u = -log r.
    FixedU(f64),
}

/// One peaks-over-threshold local-dimension estimate.
#[derive(Debug, Clone, Copy)]
pub struct PotEstimate {
    /// Finite-resolution local dimension: inverse mean excess above the cut.
    pub d1r: f64,
    /// Resolution r_cut = exp(-u_cut) realized by the threshold.
    pub r_cut: f64,
    pub n_exceedances: usize,
}

/// POT estimate from a raw observable series (infinite sentinels are
/// excluded before thresholding). Consumes the buffer for quantile
/// selection.
pub fn pot_from_phis(
    mut phis: Vec<f64>,
    threshold: PotThreshold,
    min_exceedances: usize,
) -> Result<PotEstimate> {
    phis.retain(|v| v.is_finite());
    if phis.is_empty() {
        return Err(Error::insufficient(min_exceedances, 0, "empty observable series"));
    }
    let u_cut = match threshold {
        PotThreshold::Quantile(p) => {
            if !(0.0 < p && p < 1.0) {
                return Err(Error::argument(format!("quantile {p} outside (0, 1)")));
            }
            quantile_in_place(&mut phis, p)
        }
        PotThreshold::FixedU(u) => u,
    };
    pot_above_cut(&phis, u_cut, min_exceedances)
}

/// POT estimate at an explicit cutoff without consuming the series; handy
/// when one observable series is reused at several resolution levels.
pub fn pot_at_fixed_u(phis: &[f64], u_cut: f64, min_exceedances: usize) -> Result<PotEstimate> {
    pot_above_cut(phis, u_cut, min_exceedances)
}

fn pot_above_cut(phis: &[f64], u_cut: f64, min_exceedances: usize) -> Result<PotEstimate> {
    let mut excess_sum = 0.0;
    let mut n_exc = 0usize;
    for &v in phis {
        if v > u_cut && v.is_finite() {
            excess_sum += v - u_cut;
            n_exc += 1;
        }
    }
    if n_exc < min_exceedances {
        return Err(Error::insufficient(
            min_exceedances,
            n_exc,
            "exceedances above threshold",
        ));
    }
    let mean_excess = excess_sum / n_exc as f64;
    if mean_excess <= 0.0 {
        return Err(Error::fit("degenerate exceedances: zero mean excess"));
    }
    Ok(PotEstimate {
        d1r: 1.0 / mean_excess,
        r_cut: (-u_cut).exp(),
        n_exceedances: n_exc,
    })
}

/// POT local dimension of `series` at center `z`.
pub fn local_dimension_pot(
    series: &Trajectory,
    z: &[f64],
    threshold: PotThreshold,
    min_exceedances: usize,
) -> Result<PotEstimate> {
    if z.len() != series.dim() {
        return Err(Error::argument("center dimension mismatch"));
    }
    let metric = series.metric();
    let phis: Vec<f64> = series.states().map(|x| phi(metric, z, x)).collect();
    pot_from_phis(phis, threshold, min_exceedances)
}

/// POT local dimensions at many centers with per-center resolution.
#[derive(Debug, Clone)]
pub struct LocalDimSample {
    pub centers: Vec<Vec<f64>>,
    pub d1r: Vec<f64>,
    pub r_cut: Vec<f64>,
    pub n_exceedances: Vec<usize>,
    /// Quantile level used, when the threshold was quantile-derived.
    pub p: Option<f64>,
}

impl LocalDimSample {
    pub fn len(&self) -> usize {
        self.d1r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d1r.is_empty()
    }

    /// Shared effective resolution: mean of the per-center r_cut.
    pub fn r_eff(&self) -> f64 {
        mean(&self.r_cut)
    }

    /// CSV export: `z_0,..,z_{d-1},d1r,r_cut,n_exceedances`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let dim = self.centers.first().map_or(0, |c| c.len());
        let coord_header: Vec<String> = (0..dim).map(|d| format!("z_{d}")).collect();
        writeln!(w, "{},d1r,r_cut,n_exceedances", coord_header.join(","))?;
        for i in 0..self.len() {
            let coords: Vec<String> = self.centers[i].iter().map(|x| x.to_string()).collect();
            writeln!(
                w,
                "{},{},{},{}",
                coords.join(","),
                self.d1r[i],
                self.r_cut[i],
                self.n_exceedances[i]
            )?;
        }
        Ok(())
    }
}

/// POT local dimensions of `series` at every center of `centers`.
/// Centers whose estimate fails (insufficient exceedances) are dropped;
/// the second return value counts them.
pub fn local_dim_sample(
    series: &Trajectory,
    centers: &Trajectory,
    threshold: PotThreshold,
    min_exceedances: usize,
) -> Result<(LocalDimSample, usize)> {
    if centers.dim() != series.dim() {
        return Err(Error::argument("center dimension mismatch"));
    }
    let results: Vec<Option<(Vec<f64>, PotEstimate)>> = (0..centers.len())
        .into_par_iter()
        .map(|i| {
            let z = centers.state(i);
            local_dimension_pot(series, z, threshold, min_exceedances)
                .ok()
                .map(|e| (z.to_vec(), e))
        })
        .collect();
    let mut sample = LocalDimSample {
        centers: Vec::new(),
        d1r: Vec::new(),
        r_cut: Vec::new(),
        n_exceedances: Vec::new(),
        p: match threshold {
            PotThreshold::Quantile(p) => Some(p),
            PotThreshold::FixedU(_) => None,
        },
    };
    let mut dropped = 0usize;
    for r in results {
        match r {
            Some((z, e)) => {
                sample.centers.push(z);
                sample.d1r.push(e.d1r);
                sample.r_cut.push(e.r_cut);
                sample.n_exceedances.push(e.n_exceedances);
            }
            None => dropped += 1,
        }
    }
    if sample.is_empty() {
        return Err(Error::insufficient(1, 0, "no center produced a POT estimate"));
    }
    Ok((sample, dropped))
}

/// Finite-resolution generalized dimension from a local-dimension sample:
/// the q-th moment of `r_eff^((q-1) d1r)` evaluated at the shared effective
/// radius. `q = 1` returns the sample mean of the local dimensions.
/// Returns `(d_q, r_eff)`.
pub fn dq_from_local_dims(sample: &LocalDimSample, q: f64) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return Err(Error::argument("empty local-dimension sample"));
    }
    let r_eff = sample.r_eff();
    if (q - 1.0).abs() < 1e-12 {
        return Ok((mean(&sample.d1r), r_eff));
    }
    let ln_r = r_eff.ln();
    let mut sum = 0.0;
    for &d in &sample.d1r {
        sum += r_eff.powf((q - 1.0) * d);
    }
    let gamma_hat = sum / sample.len() as f64;
    if gamma_hat <= 0.0 || !gamma_hat.is_finite() {
        return Err(Error::fit(format!("degenerate moment at q = {q}")));
    }
    Ok((gamma_hat.ln() / ((q - 1.0) * ln_r), r_eff))
}

/// Non-overlapping block maxima of a series. Requires at least `min_blocks`
/// complete blocks.
pub fn block_maxima(series: &[f64], block: usize, min_blocks: usize) -> Result<Vec<f64>> {
    if block == 0 {
        return Err(Error::argument("block length must be >= 1"));
    }
    let n_blocks = series.len() / block;
    if n_blocks < min_blocks {
        return Err(Error::insufficient(min_blocks, n_blocks, "complete blocks"));
    }
    Ok((0..n_blocks)
        .map(|b| {
            series[b * block..(b + 1) * block]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect())
}

/// Streamed block maxima of the product observable over `replicas`
/// independent product orbits (`len_per_replica` steps each, concatenated in
/// replica order). Infinite sentinels within a block are skipped.
pub fn block_maxima_stream(
    spec: &SystemSpec,
    q: usize,
    len_per_replica: usize,
    replicas: usize,
    block: usize,
    seed: u64,
    burn_in: usize,
) -> Result<Vec<f64>> {
    if block == 0 || len_per_replica < block {
        return Err(Error::argument("need len_per_replica >= block > 0"));
    }
    let per_replica: Vec<Result<Vec<f64>>> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let mut orbit = ProductOrbit::new(spec, q, seed, (rep * q) as u64, burn_in)?;
            let n_blocks = len_per_replica / block;
            let mut maxima = Vec::with_capacity(n_blocks);
            for _ in 0..n_blocks {
                let mut m = f64::NEG_INFINITY;
                for _ in 0..block {
                    let v = orbit.phi_now();
                    if v.is_finite() && v > m {
                        m = v;
                    }
                    orbit.advance();
                }
                maxima.push(m);
            }
            Ok(maxima)
        })
        .collect();
    let mut out = Vec::new();
    for m in per_replica {
        out.extend(m?);
    }
    Ok(out)
}

/// Constrained GEV maximum-likelihood fit.
#[derive(Debug, Clone, Copy)]
pub struct GevFitResult {
    pub location: f64,
    pub scale: f64,
    pub shape: f64,
    pub loglik: f64,
    pub n_blocks: usize,
    /// Gradient norm below 1e-6 at an interior optimum.
    pub converged: bool,
}

/// GEV log-likelihood at (location mu, scale sigma, shape xi). Points
/// outside the support give -infinity.
pub fn gev_loglik(mu: f64, sigma: f64, xi: f64, data: &[f64]) -> f64 {
    if sigma <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let n = data.len() as f64;
    let mut ll = -n * sigma.ln();
    if xi.abs() < 1e-8 {
        for &x in data {
            let w = (x - mu) / sigma;
            ll += -w - (-w).exp();
        }
    } else {
        for &x in data {
            let w = (x - mu) / sigma;
            let t = 1.0 + xi * w;
            if t <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += -(1.0 + 1.0 / xi) * t.ln() - t.powf(-1.0 / xi);
        }
    }
    ll
}

/// Analytic gradient of [`gev_loglik`] in (mu, sigma, xi).
pub fn gev_grad(mu: f64, sigma: f64, xi: f64, data: &[f64]) -> [f64; 3] {
    let n = data.len() as f64;
    let mut g = [0.0, -n / sigma, 0.0];
    if xi.abs() < 1e-8 {
        for &x in data {
            let w = (x - mu) / sigma;
            let ew = (-w).exp();
            g[0] += (1.0 - ew) / sigma;
            g[1] += w * (1.0 - ew) / sigma;
            // d/dxi at xi = 0 (series limit of the general expression)
            g[2] += 0.5 * w * w * (1.0 - ew) - w;
        }
    } else {
        for &x in data {
            let w = (x - mu) / sigma;
            let t = 1.0 + xi * w;
            let tpow = t.powf(-1.0 / xi);
            g[0] += ((xi + 1.0) / t - tpow / t) / sigma;
            g[1] += w * ((xi + 1.0) / t - tpow / t) / sigma;
            g[2] += t.ln() / (xi * xi) - (1.0 + 1.0 / xi) * w / t
                - tpow * (t.ln() / (xi * xi) - w / (xi * t));
        }
    }
    g
}

const XI_BOUND: f64 = 0.5;

/// Maximum-likelihood GEV fit with |shape| <= 0.5, initialized by moments
/// (Gumbel start). Damped Newton iterations on (mu, log sigma, xi) with an
/// analytic gradient and a finite-difference Hessian.
pub fn fit_gev(maxima: &[f64]) -> Result<GevFitResult> {
    if maxima.len() < 10 {
        return Err(Error::insufficient(10, maxima.len(), "block maxima"));
    }
    let sd = sample_sd(maxima);
    if sd <= 0.0 {
        return Err(Error::fit("degenerate maxima: zero variance"));
    }
    let scale0 = sd * (6.0f64).sqrt() / std::f64::consts::PI;
    let loc0 = mean(maxima) - 0.5772156649015329 * scale0;

    // Parameters p = (mu, log sigma, xi).
    let mut p = [loc0, scale0.ln(), 0.0];
    let grad_p = |p: &[f64; 3]| -> [f64; 3] {
        let (mu, sigma, xi) = (p[0], p[1].exp(), p[2]);
        let g = gev_grad(mu, sigma, xi, maxima);
        [g[0], g[1] * sigma, g[2]]
    };
    let ll_p = |p: &[f64; 3]| gev_loglik(p[0], p[1].exp(), p[2], maxima);

    let mut ll = ll_p(&p);
    if !ll.is_finite() {
        return Err(Error::fit("GEV likelihood not finite at the moment start"));
    }

    let hessian = |p: &[f64; 3]| -> [[f64; 3]; 3] {
        // Central finite differences of the analytic gradient, symmetrized.
        let mut hess = [[0.0f64; 3]; 3];
        let h = 1e-5;
        for i in 0..3 {
            let mut pp = *p;
            let mut pm = *p;
            pp[i] += h;
            pm[i] -= h;
            let gp = grad_p(&pp);
            let gm = grad_p(&pm);
            for j in 0..3 {
                hess[i][j] += (gp[j] - gm[j]) / (2.0 * h);
            }
        }
        for i in 0..3 {
            for j in (i + 1)..3 {
                let s = 0.5 * (hess[i][j] + hess[j][i]);
                hess[i][j] = s;
                hess[j][i] = s;
            }
        }
        hess
    };

    // Phase 1: damped Newton ascent on the log-likelihood.
    for _ in 0..200 {
        let g = grad_p(&p);
        let gnorm = g.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if gnorm < 1e-10 {
            break;
        }
        let hess = hessian(&p);
        // Newton direction from solving H d = -g; fall back to steepest
        // ascent when the solve is unusable.
        let dir = solve3(&hess, &[-g[0], -g[1], -g[2]])
            .filter(|d| d.iter().all(|x| x.is_finite()))
            .filter(|d| d[0] * g[0] + d[1] * g[1] + d[2] * g[2] > 0.0)
            .unwrap_or_else(|| {
                let scale = 1.0 / (1.0 + gnorm);
                [g[0] * scale, g[1] * scale, g[2] * scale]
            });
        // Backtracking line search on the log-likelihood.
        let mut step = 1.0;
        let mut advanced = false;
        for _ in 0..60 {
            let mut cand = [
                p[0] + step * dir[0],
                p[1] + step * dir[1],
                (p[2] + step * dir[2]).clamp(-XI_BOUND, XI_BOUND),
            ];
            // Keep log sigma sane to avoid overflow in exp.
            cand[1] = cand[1].clamp(p[1] - 5.0, p[1] + 5.0);
            let cand_ll = ll_p(&cand);
            if cand_ll.is_finite() && cand_ll > ll {
                p = cand;
                ll = cand_ll;
                advanced = true;
                break;
            }
            step *= 0.5;
        }
        if !advanced {
            break;
        }
    }

    // Phase 2: polish to first-order optimality by driving the gradient
    // norm itself down with Newton steps on the stationarity equations.
    for _ in 0..50 {
        let g = grad_p(&p);
        let gnorm = g.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if gnorm < 1e-10 {
            break;
        }
        let hess = hessian(&p);
        let Some(dir) = solve3(&hess, &[-g[0], -g[1], -g[2]]) else {
            break;
        };
        if dir.iter().any(|x| !x.is_finite()) {
            break;
        }
        let mut step = 1.0;
        let mut advanced = false;
        for _ in 0..40 {
            let cand = [
                p[0] + step * dir[0],
                p[1] + step * dir[1],
                (p[2] + step * dir[2]).clamp(-XI_BOUND, XI_BOUND),
            ];
            if ll_p(&cand).is_finite() {
                let gc = grad_p(&cand);
                let gcnorm = gc.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                if gcnorm < gnorm {
                    p = cand;
                    advanced = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !advanced {
            break;
        }
    }

    let (mu, sigma, xi) = (p[0], p[1].exp(), p[2]);
    let g = gev_grad(mu, sigma, xi, maxima);
    let gnorm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
    let interior = xi.abs() < XI_BOUND - 1e-9;
    Ok(GevFitResult {
        location: mu,
        scale: sigma,
        shape: xi,
        loglik: gev_loglik(mu, sigma, xi, maxima),
        n_blocks: maxima.len(),
        converged: gnorm < 1e-6 && interior,
    })
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut out = [0.0; 3];
    for k in 0..3 {
        let mut m = *a;
        for row in 0..3 {
            m[row][k] = b[row];
        }
        out[k] = det(&m) / d;
    }
    Some(out)
}

/// Generalized dimension from a GEV fit of product block maxima:
/// `D_q = 1 / (scale (q-1))`, with the location-based cross-check
/// `D_q' = log n / (location (q-1))` reported alongside.
#[derive(Debug, Clone, Copy)]
pub struct GevDimension {
    pub dq: f64,
    pub dq_cross: f64,
}

pub fn dq_from_gev(fit: &GevFitResult, q: f64, block: usize) -> Result<GevDimension> {
    if (q - 1.0).abs() < 1e-12 {
        return Err(Error::argument("q = 1 is not defined for the GEV route"));
    }
    if fit.scale <= 0.0 {
        return Err(Error::argument("GEV scale must be positive"));
    }
    Ok(GevDimension {
        dq: 1.0 / (fit.scale * (q - 1.0)),
        dq_cross: (block as f64).ln() / (fit.location * (q - 1.0)),
    })
}

/// Inverse-CDF Gumbel sampler (test and calibration helper).
pub fn sample_gumbel(loc: f64, scale: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|_| {
            let u = rng.next_f64().max(1e-300);
            loc - scale * (-(u.ln())).ln()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{SystemSpec, Trajectory};

    #[test]
    fn phi_values() {
        assert_eq!(phi(Metric::Interval1D, &[0.0], &[1.0]), 0.0);
        let e3 = (-3.0f64).exp();
        assert!((phi(Metric::Interval1D, &[0.0], &[e3]) - 3.0).abs() < 1e-12);
        assert!(phi(Metric::Euclidean, &[0.5, 0.5], &[0.5, 0.5]).is_infinite());
    }

    #[test]
    fn phi_on_torus() {
        let v = phi(Metric::TorusEuclidean, &[0.0, 0.0], &[0.5, 0.5]);
        assert!((v + (0.5f64).sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn phi_product_max_distance_governs() {
        let z = [0.0];
        let a = [(-1.0f64).exp()];
        let b = [(-2.0f64).exp()];
        let v = phi_product(Metric::Interval1D, &[&z, &a, &b]);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phi_product_reduces_to_phi_at_q2() {
        let z = [0.3, 0.4];
        let x = [0.35, 0.48];
        assert_eq!(
            phi_product(Metric::Euclidean, &[&z, &x]),
            phi(Metric::Euclidean, &z, &x)
        );
    }

    #[test]
    fn tail_is_one_below_all_values() {
        let spec = SystemSpec::three_x_mod1();
        let a = Trajectory::generate(&spec, 1, 10, 20_000).unwrap();
        let b = Trajectory::generate(&spec, 2, 10, 20_000).unwrap();
        let grid = UGrid::new(-2.0, 8.0, 51).unwrap();
        let tail = exceedance_tail(&[&a, &b], &grid).unwrap();
        // phi = -log d >= -log(1) = 0 > -2, so fbar at the lowest u is 1.
        assert_eq!(tail.fbar[0], 1.0);
        assert!(tail.fbar.windows(2).all(|w| w[1] <= w[0]));
        assert!(tail.fbar.iter().all(|&f| (0.0..=1.0).contains(&f)));
    }

    #[test]
    fn streamed_tail_matches_trajectory_tail() {
        let spec = SystemSpec::three_x_mod1();
        let grid = UGrid::new(0.0, 10.0, 41).unwrap();
        let streamed =
            exceedance_tail_streamed(&spec, 2, 30_000, 1, 99, 1000, &grid).unwrap();
        let a = Trajectory::generate_stream(&spec, 99, 0, 1000, 30_000).unwrap();
        let b = Trajectory::generate_stream(&spec, 99, 1, 1000, 30_000).unwrap();
        let stored = exceedance_tail(&[&a, &b], &grid).unwrap();
        assert_eq!(streamed.counts, stored.counts);
    }

    #[test]
    fn synthetic_exponential_tail_slope() {
        // fbar = exp(-2u) has tau = 2 at q = 2.
        let grid = UGrid::new(0.0, 5.0, 26);
        let grid = grid.unwrap();
        let u = grid.points();
        let tail = Tail {
            fbar: u.iter().map(|&ui| (-2.0 * ui).exp()).collect(),
            counts: vec![1; u.len()],
            total: 1,
            n_infinite: 0,
            u,
        };
        let (tau, _) = tau_from_tail(&tail, (0.0, 5.0)).unwrap();
        assert!((tau - 2.0).abs() < 1e-10);
    }

    #[test]
    fn pot_exact_on_synthetic_exponential() {
        // Excesses exactly exponential with mean 1/2 above u_cut = 3.
        let mut phis = vec![0.0; 1000];
        let n_exc = 200;
        for k in 0..n_exc {
            let u = (k as f64 + 0.5) / n_exc as f64;
            phis.push(3.0 - 0.5 * (1.0 - u).ln());
        }
        let est = pot_from_phis(phis, PotThreshold::FixedU(3.0), 50).unwrap();
        // Mean of the quantile-spaced sample is the distribution mean up to
        // discretization.
        assert!((est.d1r - 2.0).abs() < 0.05, "d1r = {}", est.d1r);
        assert!((est.r_cut - (-3.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn pot_insufficient_data_carries_count() {
        let phis = vec![1.0; 100];
        let err = pot_from_phis(phis, PotThreshold::FixedU(5.0), 50).unwrap_err();
        match err {
            Error::InsufficientData { have, .. } => assert_eq!(have, 0),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn cat_map_local_dimension_near_two() {
        let spec = SystemSpec::arnold_cat();
        let series = Trajectory::generate(&spec, 31, 100, 200_000).unwrap();
        let est =
            local_dimension_pot(&series, &[0.37, 0.61], PotThreshold::Quantile(0.98), 50)
                .unwrap();
        assert!((est.d1r - 2.0).abs() < 0.2, "d1r = {}", est.d1r);
    }

    #[test]
    fn dq_from_local_dims_degenerate_and_limits() {
        let sample = LocalDimSample {
            centers: vec![vec![0.0]; 4],
            d1r: vec![1.3; 4],
            r_cut: vec![0.01; 4],
            n_exceedances: vec![100; 4],
            p: Some(0.98),
        };
        for q in [0.0, 2.0, 5.0, -3.0] {
            let (dq, _) = dq_from_local_dims(&sample, q).unwrap();
            assert!((dq - 1.3).abs() < 1e-12, "q={q} dq={dq}");
        }
        let (d1, _) = dq_from_local_dims(&sample, 1.0).unwrap();
        assert!((d1 - 1.3).abs() < 1e-15);

        // Mixed sample: q -> +/- inf limits bracketed by min/max d1r.
        let mixed = LocalDimSample {
            centers: vec![vec![0.0]; 3],
            d1r: vec![1.0, 1.5, 2.0],
            r_cut: vec![0.01; 3],
            n_exceedances: vec![100; 3],
            p: None,
        };
        let (d_hi, _) = dq_from_local_dims(&mixed, 40.0).unwrap();
        let (d_lo, _) = dq_from_local_dims(&mixed, -40.0).unwrap();
        assert!(d_hi > 0.99 && d_hi < 1.2, "d_+inf ~ min: {d_hi}");
        assert!(d_lo < 2.01 && d_lo > 1.8, "d_-inf ~ max: {d_lo}");
        for q in [-5.0, 0.0, 2.0, 5.0] {
            let (dq, _) = dq_from_local_dims(&mixed, q).unwrap();
            assert!(dq >= d_hi - 1e-9 && dq <= d_lo + 1e-9);
        }
    }

    #[test]
    fn block_maxima_examples() {
        let constant = vec![4.2; 50];
        let m = block_maxima(&constant, 10, 2).unwrap();
        assert!(m.iter().all(|&x| x == 4.2));

        let series: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let m = block_maxima(&series, 5, 2).unwrap();
        assert_eq!(m, vec![5.0, 10.0]);

        assert!(block_maxima(&series, 5, 10).is_err());
    }

    #[test]
    fn gumbel_fit_recovers_parameters() {
        let data = sample_gumbel(3.0, 0.5, 100_000, 7);
        let fit = fit_gev(&data).unwrap();
        assert!(fit.converged, "fit did not converge: {fit:?}");
        assert!((fit.location - 3.0).abs() < 0.01, "mu = {}", fit.location);
        assert!((fit.scale - 0.5).abs() < 0.01, "sigma = {}", fit.scale);
        assert!(fit.shape.abs() < 0.02, "xi = {}", fit.shape);
    }

    #[test]
    fn gev_gradient_matches_finite_differences() {
        let data = sample_gumbel(1.0, 2.0, 2000, 11);
        // Shapes mild enough that every data point stays inside the GEV
        // support for this sample.
        for (mu, sigma, xi) in [(1.1, 2.1, 0.08), (0.9, 1.9, -0.05), (1.0, 2.0, 0.2)] {
            assert!(gev_loglik(mu, sigma, xi, &data).is_finite());
            let g = gev_grad(mu, sigma, xi, &data);
            let h = 1e-5;
            let fd = [
                (gev_loglik(mu + h, sigma, xi, &data) - gev_loglik(mu - h, sigma, xi, &data))
                    / (2.0 * h),
                (gev_loglik(mu, sigma + h, xi, &data) - gev_loglik(mu, sigma - h, xi, &data))
                    / (2.0 * h),
                (gev_loglik(mu, sigma, xi + h, &data) - gev_loglik(mu, sigma, xi - h, &data))
                    / (2.0 * h),
            ];
            for k in 0..3 {
                let denom = fd[k].abs().max(1.0);
                assert!(
                    ((g[k] - fd[k]) / denom).abs() < 1e-4,
                    "component {k}: analytic {} vs fd {}",
                    g[k],
                    fd[k]
                );
            }
        }
    }

    #[test]
    fn gev_gradient_near_zero_shape_consistent() {
        let data = sample_gumbel(0.0, 1.0, 500, 3);
        let g0 = gev_grad(0.1, 1.05, 0.0, &data);
        let g_eps = gev_grad(0.1, 1.05, 1e-6, &data);
        for k in 0..3 {
            assert!(
                (g0[k] - g_eps[k]).abs() < 1e-3 * g0[k].abs().max(1.0),
                "branch mismatch at component {k}: {} vs {}",
                g0[k],
                g_eps[k]
            );
        }
    }

    #[test]
    fn gev_first_order_optimality() {
        let data = sample_gumbel(2.0, 0.7, 20_000, 13);
        let fit = fit_gev(&data).unwrap();
        let g = gev_grad(fit.location, fit.scale, fit.shape, &data);
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        assert!(norm < 1e-6, "gradient norm {norm}");
    }

    #[test]
    fn degenerate_maxima_rejected() {
        assert!(fit_gev(&vec![1.0; 100]).is_err());
        assert!(fit_gev(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn gumbel_max_stability() {
        // Block maxima of Gumbel data refit to the same scale.
        let data = sample_gumbel(0.0, 1.3, 200_000, 17);
        let fit_direct = fit_gev(&data).unwrap();
        let maxima = block_maxima(&data, 20, 10).unwrap();
        let fit_blocks = fit_gev(&maxima).unwrap();
        let combined_se = 2.0 * 1.3 / (maxima.len() as f64).sqrt() * 1.5;
        assert!(
            (fit_blocks.scale - fit_direct.scale).abs() < combined_se.max(0.02),
            "scales {} vs {}",
            fit_blocks.scale,
            fit_direct.scale
        );
    }

    #[test]
    fn dq_from_gev_formula() {
        let fit = GevFitResult {
            location: 4.0,
            scale: 0.5,
            shape: 0.0,
            loglik: 0.0,
            n_blocks: 100,
            converged: true,
        };
        let d = dq_from_gev(&fit, 2.0, 5000).unwrap();
        assert!((d.dq - 2.0).abs() < 1e-12);
        assert!((d.dq_cross - (5000.0f64).ln() / 4.0).abs() < 1e-12);
        assert!(dq_from_gev(&fit, 1.0, 5000).is_err());
    }
}
