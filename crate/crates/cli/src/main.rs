//! `multifrac`: generalized dimensions, hitting-time statistics, extreme
//! value laws and rate functions of dynamical systems from the command line.
//!
//! Every experiment writes plot-ready CSVs plus a `manifest.txt` (config
//! echo, seed ledger, config hash) into `--out`; re-running with the same
//! configuration reproduces the CSVs byte for byte.

// `!(a > b)` comparisons double as NaN rejection.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod experiments;

use clap::{Args, Parser, Subcommand};
use config::{Cfg, OutDir};
use multifrac_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "multifrac", version, about)]
struct Cli {
    /// Experiment seed; all streams derive from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap (default 1; estimates are deterministic either way).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (must not contain completed results).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// key=value configuration file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by trajectory-driven experiments. Every flag mirrors a
/// config-file key of the same name.
#[derive(Args, Default)]
struct CommonArgs {
    /// System: arnold-cat | henon | sierpinski-ifs | lorenz63 | 3x-mod1 |
    /// gauss | hemmer | markov-pl.
    #[arg(long)]
    system: Option<String>,
    /// System parameters (henon a,b or IFS p1,p2,p3).
    #[arg(long)]
    params: Option<String>,
    /// Euler step for lorenz63.
    #[arg(long)]
    dt: Option<f64>,
    /// Transient iterates discarded before recording.
    #[arg(long)]
    burn_in: Option<usize>,
    /// Comma list; integer spans as a..b.
    #[arg(long)]
    q: Option<String>,
}

impl CommonArgs {
    fn apply(&self, cfg: &mut Cfg) {
        cfg.set_opt("system", &self.system);
        cfg.set_opt("params", &self.params);
        cfg.set_opt("dt", &self.dt);
        cfg.set_opt("burn-in", &self.burn_in);
        cfg.set_opt("q", &self.q);
    }
}

#[derive(Args, Default)]
struct GridArgs {
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    r_min: Option<f64>,
    /// Radius ratio when r_min is not given.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    radii: Option<usize>,
    /// Least-squares window (defaults to the full grid).
    #[arg(long)]
    fit_r_lo: Option<f64>,
    #[arg(long)]
    fit_r_hi: Option<f64>,
}

impl GridArgs {
    fn apply(&self, cfg: &mut Cfg) {
        cfg.set_opt("r-max", &self.r_max);
        cfg.set_opt("r-min", &self.r_min);
        cfg.set_opt("ratio", &self.ratio);
        cfg.set_opt("radii", &self.radii);
        cfg.set_opt("fit-r-lo", &self.fit_r_lo);
        cfg.set_opt("fit-r-hi", &self.fit_r_hi);
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Correlation-integral scaling table and spectrum.
    Gamma {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Number of target points.
        #[arg(long)]
        targets: Option<usize>,
        /// Sample trajectory length.
        #[arg(long)]
        sample_len: Option<usize>,
    },
    /// Hitting-time integral scaling table and spectrum.
    Upsilon {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        targets: Option<usize>,
        #[arg(long)]
        sample_len: Option<usize>,
        /// Hits per target before the inner average stops.
        #[arg(long)]
        h_hits: Option<usize>,
    },
    /// First-return-time integral on a single trajectory.
    ReturnTimes {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        len: Option<usize>,
        #[arg(long)]
        targets: Option<usize>,
    },
    /// Exceedance tail of the q-fold product observable.
    Tail {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        q_fold: Option<usize>,
        /// Steps per replica orbit.
        #[arg(long)]
        len: Option<usize>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        u_min: Option<f64>,
        #[arg(long)]
        u_max: Option<f64>,
        #[arg(long)]
        u_points: Option<usize>,
        #[arg(long)]
        fit_lo: Option<f64>,
        /// Upper fit end (default: last grid point with min-count samples).
        #[arg(long)]
        fit_hi: Option<f64>,
        #[arg(long)]
        min_count: Option<u64>,
    },
    /// Block maxima of the product observable with a GEV fit per q.
    Blockmax {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        len: Option<usize>,
        #[arg(long)]
        replicas: Option<usize>,
        /// Block length n.
        #[arg(long)]
        block: Option<usize>,
    },
    /// Peaks-over-threshold local dimensions at sampled centers.
    Localdim {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        len: Option<usize>,
        #[arg(long)]
        centers: Option<usize>,
        #[arg(long)]
        quantile: Option<f64>,
        #[arg(long)]
        min_exceedances: Option<usize>,
    },
    /// Dynamical extremal index: Süveges estimates with analytic rows.
    Dei {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        quantile: Option<f64>,
        #[arg(long)]
        len: Option<usize>,
        #[arg(long)]
        replicas: Option<usize>,
        /// Threshold pre-run length.
        #[arg(long)]
        pre_run: Option<usize>,
    },
    /// Legendre rate function / multifractal spectrum from a tau source.
    Ratefn {
        /// sierpinski | sierpinski:p1,p2,p3 | uniform:d | spectrum:file.
        #[arg(long)]
        tau_source: Option<String>,
        /// q | qhat | f-alpha.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        s_min: Option<f64>,
        #[arg(long)]
        s_max: Option<f64>,
        #[arg(long)]
        s_points: Option<usize>,
    },
    /// Empirical hitting-time rate function with its Legendre companion.
    HittingLdp {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        r: Option<f64>,
        /// Information dimension used to center the thresholds.
        #[arg(long)]
        d1: Option<f64>,
        #[arg(long)]
        tau_source: Option<String>,
        #[arg(long)]
        s_min: Option<f64>,
        #[arg(long)]
        s_max: Option<f64>,
        #[arg(long)]
        s_points: Option<usize>,
        #[arg(long)]
        orbit_len: Option<usize>,
        #[arg(long)]
        targets: Option<usize>,
        /// Start points drawn per target.
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Quantile-threshold D_q table from an empirical series.
    IngestSpectrum {
        /// Input series path.
        #[arg(long)]
        input: Option<String>,
        /// csv | raw-f64.
        #[arg(long)]
        format: Option<String>,
        /// Quantile list.
        #[arg(long)]
        p: Option<String>,
        #[arg(long)]
        q: Option<String>,
        #[arg(long)]
        stride: Option<usize>,
        /// Self-match exclusion window.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        min_exceedances: Option<usize>,
    },
    /// Per-q differences between two spectrum CSVs.
    Compare {
        a: String,
        b: String,
    },
}

type RunFn = fn(&Cfg, &mut OutDir, &mut experiments::SeedLedger) -> multifrac_core::Result<()>;

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Argument(_) | Error::Unsupported(_) | Error::Range(_) | Error::Parse { .. } => 2,
        Error::InsufficientData { .. } | Error::Fit(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let threads = cli.threads.unwrap_or(1);
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();

    let mut cfg = Cfg::new();
    if let Some(path) = &cli.config {
        if let Err(e) = cfg.load_file(path) {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code_for(&e));
        }
    }
    cfg.set_opt("seed", &cli.seed);
    if cfg.get("seed").is_none() {
        cfg.set("seed", 42u64);
    }

    let (name, run): (&str, RunFn) = match &cli.cmd {
            Cmd::Gamma {
                common,
                grid,
                targets,
                sample_len,
            } => {
                common.apply(&mut cfg);
                grid.apply(&mut cfg);
                cfg.set_opt("targets", targets);
                cfg.set_opt("sample-len", sample_len);
                ("gamma", experiments::run_gamma)
            }
            Cmd::Upsilon {
                common,
                grid,
                targets,
                sample_len,
                h_hits,
            } => {
                common.apply(&mut cfg);
                grid.apply(&mut cfg);
                cfg.set_opt("targets", targets);
                cfg.set_opt("sample-len", sample_len);
                cfg.set_opt("h-hits", h_hits);
                ("upsilon", experiments::run_upsilon)
            }
            Cmd::ReturnTimes {
                common,
                grid,
                len,
                targets,
            } => {
                common.apply(&mut cfg);
                grid.apply(&mut cfg);
                cfg.set_opt("len", len);
                cfg.set_opt("targets", targets);
                ("return-times", experiments::run_return_times)
            }
            Cmd::Tail {
                common,
                q_fold,
                len,
                replicas,
                u_min,
                u_max,
                u_points,
                fit_lo,
                fit_hi,
                min_count,
            } => {
                common.apply(&mut cfg);
                cfg.set_opt("q-fold", q_fold);
                cfg.set_opt("len", len);
                cfg.set_opt("replicas", replicas);
                cfg.set_opt("u-min", u_min);
                cfg.set_opt("u-max", u_max);
                cfg.set_opt("u-points", u_points);
                cfg.set_opt("fit-lo", fit_lo);
                cfg.set_opt("fit-hi", fit_hi);
                cfg.set_opt("min-count", min_count);
                ("tail", experiments::run_tail)
            }
            Cmd::Blockmax {
                common,
                len,
                replicas,
                block,
            } => {
                common.apply(&mut cfg);
                cfg.set_opt("len", len);
                cfg.set_opt("replicas", replicas);
                cfg.set_opt("block", block);
                ("blockmax", experiments::run_blockmax)
            }
            Cmd::Localdim {
                common,
                len,
                centers,
                quantile,
                min_exceedances,
            } => {
                common.apply(&mut cfg);
                cfg.set_opt("len", len);
                cfg.set_opt("centers", centers);
                cfg.set_opt("quantile", quantile);
                cfg.set_opt("min-exceedances", min_exceedances);
                ("localdim", experiments::run_localdim)
            }
            Cmd::Dei {
                common,
                quantile,
                len,
                replicas,
                pre_run,
            } => {
                common.apply(&mut cfg);
                cfg.set_opt("quantile", quantile);
                cfg.set_opt("len", len);
                cfg.set_opt("replicas", replicas);
                cfg.set_opt("pre-run", pre_run);
                ("dei", experiments::run_dei)
            }
            Cmd::Ratefn {
                tau_source,
                kind,
                s_min,
                s_max,
                s_points,
            } => {
                cfg.set_opt("tau-source", tau_source);
                cfg.set_opt("kind", kind);
                cfg.set_opt("s-min", s_min);
                cfg.set_opt("s-max", s_max);
                cfg.set_opt("s-points", s_points);
                ("ratefn", experiments::run_ratefn)
            }
            Cmd::HittingLdp {
                common,
                r,
                d1,
                tau_source,
                s_min,
                s_max,
                s_points,
                orbit_len,
                targets,
                draws,
            } => {
                common.apply(&mut cfg);
                cfg.set_opt("r", r);
                cfg.set_opt("d1", d1);
                cfg.set_opt("tau-source", tau_source);
                cfg.set_opt("s-min", s_min);
                cfg.set_opt("s-max", s_max);
                cfg.set_opt("s-points", s_points);
                cfg.set_opt("orbit-len", orbit_len);
                cfg.set_opt("targets", targets);
                cfg.set_opt("draws", draws);
                ("hitting-ldp", experiments::run_hitting_ldp)
            }
            Cmd::IngestSpectrum {
                input,
                format,
                p,
                q,
                stride,
                window,
                min_exceedances,
            } => {
                cfg.set_opt("input", input);
                cfg.set_opt("format", format);
                cfg.set_opt("p", p);
                cfg.set_opt("q", q);
                cfg.set_opt("stride", stride);
                cfg.set_opt("window", window);
                cfg.set_opt("min-exceedances", min_exceedances);
                ("ingest-spectrum", experiments::run_ingest_spectrum)
            }
            Cmd::Compare { a, b } => {
                cfg.set("a", a);
                cfg.set("b", b);
                ("compare", experiments::run_compare)
            }
        };
    cfg.set("experiment", name);

    let Some(out_path) = cli.out.clone() else {
        eprintln!("error: --out is required");
        return ExitCode::from(2);
    };
    let started = std::time::Instant::now();
    let mut out = match OutDir::create(&out_path) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code_for(&e));
        }
    };
    let mut ledger = experiments::SeedLedger::new();
    match run(&cfg, &mut out, &mut ledger) {
        Ok(()) => {
            if let Err(e) = out.finish(&cfg, &ledger, started.elapsed()) {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
