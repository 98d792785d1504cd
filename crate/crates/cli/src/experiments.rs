//! One function per experiment: resolve the configuration, run the core
//! pipelines, write plot-ready CSVs plus the manifest.

use crate::config::{Cfg, OutDir};
use multifrac_core::dei::{
    entropy_scaling_theta, theta_q_analytic, theta_q_empirical, theta_q_quadrature, write_dei_csv,
    DeiEstimate, DeiProtocol,
};
use multifrac_core::dynsys::{density_model, SystemKind, SystemSpec, Trajectory};
use multifrac_core::evt::{
    block_maxima_stream, dq_from_gev, exceedance_tail_streamed, fit_gev, local_dim_sample,
    tau_from_tail, PotThreshold, Tail, UGrid,
};
use multifrac_core::ingest::{load_series, quantile_spectrum, write_spectrum_csv, SeriesFormat, SpectrumOptions};
use multifrac_core::largedev::{
    empirical_rate_hitting, legendre, HittingLdpProtocol, TauSource, TransformKind,
};
use multifrac_core::recurrence::{
    correlation_integral, first_return_integral, hitting_integral, RadiusGrid, ScalingTable,
};
use multifrac_core::scaling::{
    extrapolate_dimension, local_slopes, spectrum_from_table, DimensionSpectrum,
};
use multifrac_core::{Error, Result};
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

pub type SeedLedger = Vec<(String, u64, u64)>;

fn system_from_cfg(cfg: &Cfg) -> Result<SystemSpec> {
    let name = cfg.str_or("system", "arnold-cat");
    let kind = SystemKind::from_name(&name)
        .ok_or_else(|| Error::argument(format!("unknown system {name:?}")))?;
    match kind {
        SystemKind::Henon => {
            let params = cfg.f64_list_or("params", "1.4,0.3")?;
            if params.len() != 2 {
                return Err(Error::argument("henon params must be a,b"));
            }
            SystemSpec::henon(params[0], params[1])
        }
        SystemKind::SierpinskiIfs => {
            let p = cfg.f64_list_or("params", "0.25,0.25,0.5")?;
            if p.len() != 3 {
                return Err(Error::argument("sierpinski params must be p1,p2,p3"));
            }
            SystemSpec::sierpinski([p[0], p[1], p[2]])
        }
        SystemKind::Lorenz63 => SystemSpec::lorenz_standard(cfg.f64_or("dt", 0.013)?),
        other => SystemSpec::new(other, vec![]),
    }
}

fn radius_grid_from_cfg(cfg: &Cfg) -> Result<RadiusGrid> {
    let r_max = cfg.f64_or("r-max", 0.1)?;
    let count = cfg.usize_or("radii", 12)?;
    match cfg.get("r-min") {
        Some(_) => RadiusGrid::spanning(r_max, cfg.f64_or("r-min", 0.0)?, count),
        // Default ratio 2^(-1/2) per the standard protocol.
        None => RadiusGrid::new(r_max, cfg.f64_or("ratio", 0.5f64.sqrt())?, count),
    }
}

fn fit_range_from_cfg(cfg: &Cfg) -> Result<Option<(f64, f64)>> {
    match (cfg.get("fit-r-lo"), cfg.get("fit-r-hi")) {
        (None, None) => Ok(None),
        _ => Ok(Some((
            cfg.f64_or("fit-r-lo", 0.0)?,
            cfg.f64_or("fit-r-hi", f64::INFINITY)?,
        ))),
    }
}

fn write_table_outputs(
    out: &mut OutDir,
    cfg: &Cfg,
    table: &ScalingTable,
    fit_range: Option<(f64, f64)>,
) -> Result<()> {
    let hash = cfg.hash();
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    out.write_result("table.csv", &hash, &buf)?;

    let spectrum = spectrum_from_table(table, fit_range)?;
    let mut buf = Vec::new();
    spectrum.write_csv(&mut buf)?;
    out.write_result("spectrum.csv", &hash, &buf)?;
    let violations = spectrum.monotonicity_violations();
    if !violations.is_empty() {
        let qs: Vec<String> = violations
            .iter()
            .map(|&i| spectrum.q_list[i].to_string())
            .collect();
        eprintln!(
            "note: D_q monotonicity violated beyond 2 stderr at q = {}",
            qs.join(", ")
        );
    }

    // Finite-size extrapolation of the local slopes, per q away from 1.
    let mut text = String::from("q,d_q,b,stderr,n_slopes\n");
    for &q in &table.q_list {
        if (q - 1.0).abs() < 1e-12 {
            continue;
        }
        if let Ok(slopes) = local_slopes(table, q) {
            if let Ok(e) = extrapolate_dimension(&slopes) {
                let _ = writeln!(text, "{q},{},{},{},{}", e.d_q, e.b, e.stderr, slopes.len());
            }
        }
    }
    out.write_result("extrapolation.csv", &hash, text.as_bytes())
}

pub fn run_gamma(cfg: &Cfg, out: &mut OutDir, ledger: &mut SeedLedger) -> Result<()> {
    let spec = system_from_cfg(cfg)?;
    let seed = cfg.u64_or("seed", 42)?;
    let burn_in = cfg.usize_or("burn-in", 1000)?;
    let n_targets = cfg.usize_or("targets", 2000)?;
    let sample_len = cfg.usize_or("sample-len", 1_000_000)?;
    let q_list = cfg.f64_list_or("q", "-1,0,0.5,1,1.5,2")?;
    let grid = radius_grid_from_cfg(cfg)?;
    ledger.push(("targets".into(), seed, 0));
    ledger.push(("sample".into(), seed, 1));
    let targets = Trajectory::generate_stream(&spec, seed, 0, burn_in, n_targets)?;
    let sample = Trajectory::generate_stream(&spec, seed, 1, burn_in, sample_len)?;
    let table = correlation_integral(&targets, &sample, &grid, &q_list)?;
    write_table_outputs(out, cfg, &table, fit_range_from_cfg(cfg)?)
}

pub fn run_upsilon(cfg: &Cfg, out: &mut OutDir, ledger: &mut SeedLedger) -> Result<()> {
    let spec = system_from_cfg(cfg)?;
    let seed = cfg.u64_or("seed", 42)?;
    let burn_in = cfg.usize_or("burn-in", 1000)?;
    let n_targets = cfg.usize_or("targets", 2000)?;
    let sample_len = cfg.usize_or("sample-len", 1_000_000)?;
    let q_list = cfg.f64_list_or("q", "-1,0,0.5,1,1.5,2")?;
    let default_h = match spec.kind() {
        SystemKind::ArnoldCat => 32,
        _ => 64,
    };
    let h = cfg.usize_or("h-hits", default_h)?;
    let grid = radius_grid_from_cfg(cfg)?;
    ledger.push(("targets".into(), seed, 0));
    ledger.push(("sample".into(), seed, 1));
    let targets = Trajectory::generate_stream(&spec, seed, 0, burn_in, n_targets)?;
    let sample = Trajectory::generate_stream(&spec, seed, 1, burn_in, sample_len)?;
    let table = hitting_integral(&targets, &sample, &grid, &q_list, h)?;
    write_table_outputs(out, cfg, &table, fit_range_from_cfg(cfg)?)
}

pub fn run_return_times(cfg: &Cfg, out: &mut OutDir, ledger: &mut SeedLedger) -> Result<()> {
    let spec = system_from_cfg(cfg)?;
    let seed = cfg.u64_or("seed", 42)?;
    let burn_in = cfg.usize_or("burn-in", 1000)?;
    let len = cfg.usize_or("len", 1_000_000)?;
    let centers = cfg.usize_or("targets", 2000)?;
    let q_list = cfg.f64_list_or("q", "-1,0,0.5,1,1.5,2")?;
    let grid = radius_grid_from_cfg(cfg)?;
    ledger.push(("trajectory".into(), seed, 0));
    let traj = Trajectory::generate_stream(&spec, seed, 0, burn_in, len)?;
    let table = first_return_integral(&traj, &grid, &q_list, centers)?;
    write_table_outputs(out, cfg, &table, fit_range_from_cfg(cfg)?)
}

fn write_tail_outputs(
    out: &mut OutDir,
    cfg: &Cfg,
    tail: &Tail,
    q: f64,
    fit: (f64, f64),
) -> Result<()> {
    let hash = cfg.hash();
    let mut text = String::from("u,fbar,count\n");
    for i in 0..tail.u.len() {
        let _ = writeln!(text, "{},{},{}", tail.u[i], tail.fbar[i], tail.counts[i]);
    }
    out.write_result("tail.csv", &hash, text.as_bytes())?;

    let (tau, se) = tau_from_tail(tail, fit)?;
    let mut text = String::from("q,tau,dq,stderr,u_lo,u_hi,n_samples,n_infinite\n");
    let _ = writeln!(
        text,
        "{q},{tau},{},{se},{},{},{},{}",
        tau / (q - 1.0),
        fit.0,
        fit.1,
        tail.total,
        tail.n_infinite
    );
    out.write_result("tau.csv", &hash, text.as_bytes())
}

/// Largest grid point whose exceedance count is still at least `min_count`
/// (the end of the uncensored range).
pub fn uncensored_u_hi(tail: &Tail, min_count: u64) -> Option<f64> {
    tail.u
        .iter()
        .zip(&tail.counts)
        .rev()
        .find(|(_, &c)| c >= min_count)
        .map(|(&u, _)| u)
}

pub fn run_tail(cfg: &Cfg, out: &mut OutDir, ledger: &mut SeedLedger) -> Result<()> {
    let spec = system_from_cfg(cfg)?;
    let seed = cfg.u64_or("seed", 42)?;
    let q = cfg.usize_or("q-fold", 2)?;
    if q < 2 {
        return Err(Error::argument("q-fold must be >= 2"));
    }
    let len = cfg.usize_or("len", 1_000_000)?;
    let replicas = cfg.usize_or("replicas", 8)?;
    let burn_in = cfg.usize_or("burn-in", 1000)?;
    let grid = UGrid::new(
        cfg.f64_or("u-min", 0.5)?,
        cfg.f64_or("u-max", 10.0)?,
        cfg.usize_or("u-points", 96)?,
    )?;
    for rep in 0..replicas {
        ledger.push((format!("replica-{rep}"), seed, (rep * q) as u64));
    }
    let tail = exceedance_tail_streamed(&spec, q, len, replicas, seed, burn_in, &grid)?;
    let fit_lo = cfg.f64_or("fit-lo", 1.0)?;
    let fit_hi = match cfg.get("fit-hi") {
        Some(_) => cfg.f64_or("fit-hi", 0.0)?,
        None => uncensored_u_hi(&tail, cfg.u64_or("min-count", 100)?)
            .ok_or_else(|| Error::insufficient(1, 0, "uncensored tail points"))?,
    };
    write_tail_outputs(out, cfg, &tail, q as f64, (fit_lo, fit_hi))
}

pub fn run_blockmax(cfg: &Cfg, out: &mut OutDir, ledger: &mut SeedLedger) -> Result<()> {
    let spec = system_from_cfg(cfg)?;
    let seed = cfg.u64_or("seed", 42)?;
    let replicas = cfg.usize_or("replicas", 8)?;
    let len = cfg.usize_or("len", 2_500_000)?;
    let block = cfg.usize_or("block", 2000)?;
    let burn_in = cfg.usize_or("burn-in", 1000)?;
    let q_list = cfg.f64_list_or("q", "2..5")?;
    let hash = cfg.hash();
    let mut text = String::from("q,n,mu,sigma,xi,dq,dq_cross,loglik\n");
    for &qf in &q_list {
        let q = qf as usize;
        if qf.fract() != 0.0 || q < 2 {
            return Err(Error::argument("blockmax q values must be integers >= 2"));
        }
        for rep in 0..replicas {
            ledger.push((format!("q{q}-replica-{rep}"), seed, (rep * q) as u64));
        }
        let maxima = block_maxima_stream(&spec, q, len, replicas, block, seed, burn_in)?;
        let fit = fit_gev(&maxima)?;
        if !fit.converged {
            eprintln!("note: GEV fit at q={q} did not reach first-order optimality");
        }
        let d = dq_from_gev(&fit, qf, block)?;
        let _ = writeln!(
            text,
            "{q},{block},{},{},{},{},{},{}",
            fit.location, fit.scale, fit.shape, d.dq, d.dq_cross, fit.loglik
        );
    }
    out.write_result("gev.csv", &hash, text.as_bytes())
}

pub fn run_localdim(cfg: &Cfg, out: &mut OutDir, ledger: &mut SeedLedger) -> Result<()> {
    let spec = system_from_cfg(cfg)?;
    let seed = cfg.u64_or("seed", 42)?;
    let burn_in = cfg.usize_or("burn-in", 1000)?;
    let len = cfg.usize_or("len", 200_000)?;
    let centers = cfg.usize_or("centers", 100)?;
    let p = cfg.f64_or("quantile", 0.98)?;
    let min_exc = cfg.usize_or("min-exceedances", 50)?;
    ledger.push(("series".into(), seed, 0));
    ledger.push(("centers".into(), seed, 1));
    let series = Trajectory::generate_stream(&spec, seed, 0, burn_in, len)?;
    let center_traj = Trajectory::generate_stream(&spec, seed, 1, burn_in, centers)?;
    let (sample, dropped) =
        local_dim_sample(&series, &center_traj, PotThreshold::Quantile(p), min_exc)?;
    if dropped > 0 {
        eprintln!("note: {dropped} centers dropped (insufficient exceedances)");
    }
    let mut buf = Vec::new();
    sample.write_csv(&mut buf)?;
    out.write_result("localdim.csv", &cfg.hash(), &buf)
}

pub fn run_dei(cfg: &Cfg, out: &mut OutDir, ledger: &mut SeedLedger) -> Result<()> {
    let spec = system_from_cfg(cfg)?;
    let seed = cfg.u64_or("seed", 42)?;
    let q_list = cfg.f64_list_or("q", "2..6")?;
    let protocol = DeiProtocol {
        len: cfg.usize_or("len", 1_000_000)?,
        quantile: cfg.f64_or("quantile", 0.997)?,
        replicas: cfg.usize_or("replicas", 20)?,
        pre_run_len: cfg.usize_or("pre-run", 1_000_000)?,
        burn_in: cfg.usize_or("burn-in", 1000)?,
    };
    let h_m = density_model(spec.kind())
        .ok()
        .and_then(|m| m.metric_entropy);
    let mut rows: Vec<DeiEstimate> = Vec::new();
    for &qf in &q_list {
        let q = qf as u32;
        if qf.fract() != 0.0 || q < 2 {
            return Err(Error::argument("dei q values must be integers >= 2"));
        }
        ledger.push((format!("q{q}-replicas"), seed, 0));
        rows.push(theta_q_empirical(&spec, q, &protocol, seed)?);
        if let Ok(analytic) = theta_q_analytic(spec.kind(), q) {
            rows.push(analytic);
        }
        if let Ok(quad) = theta_q_quadrature(spec.kind(), q) {
            rows.push(quad);
        }
        if let Some(hm) = h_m {
            rows.push(DeiEstimate::new(
                q,
                entropy_scaling_theta(q, hm),
                multifrac_core::dei::DeiMethod::EntropyScaling,
                None,
            ));
        }
    }
    let mut buf = Vec::new();
    write_dei_csv(
        &rows,
        Some(protocol.quantile),
        protocol.len,
        protocol.replicas,
        &mut buf,
    )?;
    out.write_result("dei.csv", &cfg.hash(), &buf)
}

fn tau_source_from_cfg(cfg: &Cfg, key: &str, default: &str) -> Result<TauSource> {
    let text = cfg.str_or(key, default);
    if text == "sierpinski" {
        return Ok(TauSource::sierpinski_standard());
    }
    if let Some(rest) = text.strip_prefix("sierpinski:") {
        let p = crate::config::parse_f64_list(rest).map_err(Error::Argument)?;
        if p.len() != 3 {
            return Err(Error::argument("sierpinski tau source needs p1,p2,p3"));
        }
        return Ok(TauSource::IfsTernary {
            p: [p[0], p[1], p[2]],
        });
    }
    if let Some(d) = text.strip_prefix("uniform:") {
        return Ok(TauSource::Uniform {
            d: d.parse()
                .map_err(|_| Error::argument(format!("bad uniform dimension {d:?}")))?,
        });
    }
    if let Some(path) = text.strip_prefix("spectrum:") {
        let spec = DimensionSpectrum::read_csv(BufReader::new(File::open(Path::new(path))?))?;
        return TauSource::from_spectrum(&spec);
    }
    Err(Error::argument(format!(
        "tau source {text:?} not understood (sierpinski | sierpinski:p1,p2,p3 | uniform:d | spectrum:file)"
    )))
}

pub fn run_ratefn(cfg: &Cfg, out: &mut OutDir, _ledger: &mut SeedLedger) -> Result<()> {
    let tau = tau_source_from_cfg(cfg, "tau-source", "sierpinski")?;
    let kind = match cfg.str_or("kind", "q").as_str() {
        "q" => TransformKind::Q,
        "qhat" => TransformKind::QHat,
        "f-alpha" => TransformKind::FAlpha,
        other => {
            return Err(Error::argument(format!(
                "rate kind {other:?} not one of q | qhat | f-alpha"
            )))
        }
    };
    let s_min = cfg.f64_or("s-min", 1.30)?;
    let s_max = cfg.f64_or("s-max", 1.60)?;
    let n = cfg.usize_or("s-points", 61)?;
    if !(s_max > s_min) || n < 2 {
        return Err(Error::argument("need s-max > s-min and s-points >= 2"));
    }
    let s_grid: Vec<f64> = (0..n)
        .map(|i| s_min + (s_max - s_min) * i as f64 / (n - 1) as f64)
        .collect();
    let curve = legendre(kind, &tau, &s_grid)?;
    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    out.write_result("ratecurve.csv", &cfg.hash(), &buf)
}

fn default_d1(kind: SystemKind) -> Option<f64> {
    match kind {
        SystemKind::ArnoldCat => Some(2.0),
        SystemKind::ThreeXMod1 | SystemKind::Gauss | SystemKind::Hemmer | SystemKind::MarkovPl => {
            Some(1.0)
        }
        SystemKind::SierpinskiIfs => Some(1.5),
        _ => None,
    }
}

pub fn run_hitting_ldp(cfg: &Cfg, out: &mut OutDir, ledger: &mut SeedLedger) -> Result<()> {
    let spec = system_from_cfg(cfg)?;
    let seed = cfg.u64_or("seed", 42)?;
    let r = cfg.f64_or("r", 2.0f64.powi(-8))?;
    let d1 = match cfg.get("d1") {
        Some(_) => cfg.f64_or("d1", 0.0)?,
        None => default_d1(spec.kind()).ok_or_else(|| {
            Error::argument("d1 must be given for systems without a standard value")
        })?,
    };
    let s_min = cfg.f64_or("s-min", 0.02)?;
    let s_max = cfg.f64_or("s-max", 0.60)?;
    let n = cfg.usize_or("s-points", 30)?;
    let s_grid: Vec<f64> = (0..n)
        .map(|i| s_min + (s_max - s_min) * i as f64 / (n - 1) as f64)
        .collect();
    let protocol = HittingLdpProtocol {
        orbit_len: cfg.usize_or("orbit-len", 1_048_576)?,
        n_targets: cfg.usize_or("targets", 512)?,
        draws_per_target: cfg.usize_or("draws", 64)?,
        burn_in: cfg.usize_or("burn-in", 1000)?,
    };
    ledger.push(("orbit".into(), seed, 0));
    ledger.push(("targets".into(), seed, 1));
    ledger.push(("draws".into(), seed, 2));
    let hash = cfg.hash();
    let curve = empirical_rate_hitting(&spec, r, &s_grid, d1, &protocol, seed)?;
    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    out.write_result("empirical.csv", &hash, &buf)?;

    // Companion Legendre curve over the same thresholds, when tau is known.
    let default_tau = match spec.kind() {
        SystemKind::SierpinskiIfs => "sierpinski",
        SystemKind::ArnoldCat => "uniform:2",
        SystemKind::ThreeXMod1 | SystemKind::Gauss | SystemKind::Hemmer | SystemKind::MarkovPl => {
            "uniform:1"
        }
        _ => "",
    };
    if cfg.get("tau-source").is_some() || !default_tau.is_empty() {
        let tau = tau_source_from_cfg(cfg, "tau-source", default_tau)?;
        let axis: Vec<f64> = s_grid.iter().map(|s| d1 + s).collect();
        let mut qhat = legendre(TransformKind::QHat, &tau, &axis)?;
        // Mark values outside the validity window of the hitting-time law.
        if let Ok((lo, hi)) = multifrac_core::largedev::prop2_window(&tau, d1) {
            for (i, &s_axis) in qhat.s.iter().enumerate() {
                let s = s_axis - d1;
                if s <= lo || s >= hi {
                    qhat.censored[i] = true;
                }
            }
        }
        let mut buf = Vec::new();
        qhat.write_csv(&mut buf)?;
        out.write_result("legendre.csv", &hash, &buf)?;
    }
    Ok(())
}

pub fn run_ingest_spectrum(cfg: &Cfg, out: &mut OutDir, _ledger: &mut SeedLedger) -> Result<()> {
    let input = cfg
        .get("input")
        .ok_or_else(|| Error::argument("ingest-spectrum requires input=<path>"))?;
    let format = match cfg.str_or("format", "csv").as_str() {
        "csv" => SeriesFormat::Csv,
        "raw-f64" => SeriesFormat::RawF64,
        other => {
            return Err(Error::argument(format!(
                "format {other:?} not one of csv | raw-f64"
            )))
        }
    };
    let series = load_series(&PathBuf::from(input), format)?;
    let p_list = cfg.f64_list_or("p", "0.95,0.97,0.98,0.99,0.995")?;
    for &p in &p_list {
        if !(0.0 < p && p < 1.0) {
            return Err(Error::argument(format!("quantile {p} outside (0, 1)")));
        }
    }
    let q_list = cfg.f64_list_or("q", "2")?;
    let opts = SpectrumOptions {
        min_exceedances: cfg.usize_or("min-exceedances", 50)?,
        exclusion_window: cfg.usize_or("window", 0)?,
        stride: cfg.usize_or("stride", 1)?,
    };
    let rows = quantile_spectrum(&series, &p_list, &q_list, &opts)?;
    // The spread of the local dimensions should widen with the quantile;
    // a violation is a data diagnostic, not an error.
    for w in rows.windows(2) {
        if w[1].d_sd < w[0].d_sd - 1e-9 {
            eprintln!(
                "note: local-dimension spread narrowed from p={} to p={}",
                w[0].p, w[1].p
            );
        }
    }
    let mut buf = Vec::new();
    write_spectrum_csv(&rows, &q_list, &mut buf)?;
    out.write_result("spectrum_table.csv", &cfg.hash(), &buf)
}

pub fn run_compare(cfg: &Cfg, out: &mut OutDir, _ledger: &mut SeedLedger) -> Result<()> {
    let a_path = cfg
        .get("a")
        .ok_or_else(|| Error::argument("compare requires two spectrum files"))?;
    let b_path = cfg
        .get("b")
        .ok_or_else(|| Error::argument("compare requires two spectrum files"))?;
    let a = DimensionSpectrum::read_csv(BufReader::new(File::open(a_path)?))?;
    let b = DimensionSpectrum::read_csv(BufReader::new(File::open(b_path)?))?;
    if a.q_list.len() != b.q_list.len()
        || a.q_list
            .iter()
            .zip(&b.q_list)
            .any(|(x, y)| (x - y).abs() > 1e-12)
    {
        return Err(Error::argument("spectra do not share a q grid"));
    }
    let mut text = String::from("q,tau_a,tau_b,dq_a,dq_b,dq_diff,combined_stderr,within\n");
    for i in 0..a.q_list.len() {
        let diff = a.dq[i] - b.dq[i];
        let comb = a.stderr[i].hypot(b.stderr[i]);
        let within = u8::from(diff.abs() <= 2.0 * comb);
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            a.q_list[i], a.tau[i], b.tau[i], a.dq[i], b.dq[i], diff, comb, within
        );
    }
    out.write_result("compare.csv", &cfg.hash(), text.as_bytes())
}
