//! Generators for the dynamical systems under study, plus the closed-form
//! invariant densities and derivatives that the analytic DEI formulas need.
//!
//! Supported systems:
//!
//! * Arnol'd cat map `(x, y) -> (2x + y, x + y) mod 1` on the 2-torus,
//! * Hénon map `(x, y) -> (1 - a x^2 + y, b x)`,
//! * the Sierpinski-gasket IFS on the unit square (three affine contractions
//!   chosen at random with probabilities `p_1..p_3`),
//! * the Lorenz 1963 flow advanced with an explicit Euler step,
//! * interval maps `3x mod 1`, Gauss `1/x - [1/x]`, Hemmer `1 - 2 sqrt(|x|)`
//!   and a piecewise-linear Markov map on three subintervals.
//!
//! Trajectories are deterministic functions of `(seed, stream)`; only the
//! IFS consumes random bits while stepping.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use std::fmt;
use std::io::{BufRead, Write};

/// Distance convention of a phase space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Euclidean norm after wrapping each coordinate difference to [-1/2, 1/2].
    TorusEuclidean,
    Euclidean,
    /// Absolute difference on a 1-d interval.
    Interval1D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    ArnoldCat,
    Henon,
    SierpinskiIfs,
    Lorenz63,
    ThreeXMod1,
    Gauss,
    Hemmer,
    MarkovPl,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::ArnoldCat => "arnold-cat",
            SystemKind::Henon => "henon",
            SystemKind::SierpinskiIfs => "sierpinski-ifs",
            SystemKind::Lorenz63 => "lorenz63",
            SystemKind::ThreeXMod1 => "3x-mod1",
            SystemKind::Gauss => "gauss",
            SystemKind::Hemmer => "hemmer",
            SystemKind::MarkovPl => "markov-pl",
        }
    }

    pub fn from_name(name: &str) -> Option<SystemKind> {
        match name {
            "arnold-cat" => Some(SystemKind::ArnoldCat),
            "henon" => Some(SystemKind::Henon),
            "sierpinski-ifs" => Some(SystemKind::SierpinskiIfs),
            "lorenz63" => Some(SystemKind::Lorenz63),
            "3x-mod1" => Some(SystemKind::ThreeXMod1),
            "gauss" => Some(SystemKind::Gauss),
            "hemmer" => Some(SystemKind::Hemmer),
            "markov-pl" => Some(SystemKind::MarkovPl),
            _ => None,
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully parameterized system: kind, parameter vector and metric.
///
/// Parameter layout: Hénon `[a, b]`, Lorenz `[sigma, rho, beta, dt]`,
/// Sierpinski IFS `[p1, p2, p3]`, interval maps and the cat map `[]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    kind: SystemKind,
    params: Vec<f64>,
}

impl SystemSpec {
    pub fn new(kind: SystemKind, params: Vec<f64>) -> Result<Self> {
        match kind {
            SystemKind::ArnoldCat
            | SystemKind::ThreeXMod1
            | SystemKind::Gauss
            | SystemKind::Hemmer
            | SystemKind::MarkovPl => {
                if !params.is_empty() {
                    return Err(Error::argument(format!(
                        "{kind} takes no parameters, got {}",
                        params.len()
                    )));
                }
            }
            SystemKind::Henon => {
                if params.len() != 2 {
                    return Err(Error::argument("henon expects params [a, b]"));
                }
            }
            SystemKind::SierpinskiIfs => {
                if params.len() != 3 {
                    return Err(Error::argument("sierpinski-ifs expects params [p1, p2, p3]"));
                }
                let sum: f64 = params.iter().sum();
                if (sum - 1.0).abs() > 1e-12 || params.iter().any(|&p| p <= 0.0) {
                    return Err(Error::argument(
                        "IFS probabilities must be positive and sum to 1 within 1e-12",
                    ));
                }
            }
            SystemKind::Lorenz63 => {
                if params.len() != 4 {
                    return Err(Error::argument(
                        "lorenz63 expects params [sigma, rho, beta, dt]",
                    ));
                }
                if params[3] <= 0.0 {
                    return Err(Error::argument("lorenz63 requires dt > 0"));
                }
            }
        }
        Ok(SystemSpec { kind, params })
    }

    pub fn arnold_cat() -> Self {
        SystemSpec::new(SystemKind::ArnoldCat, vec![]).unwrap()
    }

    /// Hénon at the standard parameter values a = 1.4, b = 0.3.
    pub fn henon_standard() -> Self {
        SystemSpec::new(SystemKind::Henon, vec![1.4, 0.3]).unwrap()
    }

    pub fn henon(a: f64, b: f64) -> Result<Self> {
        SystemSpec::new(SystemKind::Henon, vec![a, b])
    }

    /// Sierpinski-gasket IFS with probabilities (1/4, 1/4, 1/2).
    pub fn sierpinski_standard() -> Self {
        SystemSpec::new(SystemKind::SierpinskiIfs, vec![0.25, 0.25, 0.5]).unwrap()
    }

    pub fn sierpinski(p: [f64; 3]) -> Result<Self> {
        SystemSpec::new(SystemKind::SierpinskiIfs, p.to_vec())
    }

    /// Lorenz 1963 with sigma = 10, rho = 28, beta = 8/3 and Euler step dt.
    pub fn lorenz_standard(dt: f64) -> Result<Self> {
        SystemSpec::new(SystemKind::Lorenz63, vec![10.0, 28.0, 8.0 / 3.0, dt])
    }

    pub fn three_x_mod1() -> Self {
        SystemSpec::new(SystemKind::ThreeXMod1, vec![]).unwrap()
    }

    pub fn gauss_map() -> Self {
        SystemSpec::new(SystemKind::Gauss, vec![]).unwrap()
    }

    pub fn hemmer() -> Self {
        SystemSpec::new(SystemKind::Hemmer, vec![]).unwrap()
    }

    pub fn markov_pl() -> Self {
        SystemSpec::new(SystemKind::MarkovPl, vec![]).unwrap()
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            SystemKind::ThreeXMod1 | SystemKind::Gauss | SystemKind::Hemmer | SystemKind::MarkovPl => 1,
            SystemKind::Lorenz63 => 3,
            _ => 2,
        }
    }

    /// Metric is tied to the kind: the cat map lives on the torus, interval
    /// maps on the line, everything else in Euclidean space.
    pub fn metric(&self) -> Metric {
        match self.kind {
            SystemKind::ArnoldCat => Metric::TorusEuclidean,
            SystemKind::ThreeXMod1 | SystemKind::Gauss | SystemKind::Hemmer | SystemKind::MarkovPl => {
                Metric::Interval1D
            }
            _ => Metric::Euclidean,
        }
    }

    /// Per-coordinate phase-space box. Generated states stay inside it.
    pub fn phase_box(&self) -> Vec<(f64, f64)> {
        match self.kind {
            SystemKind::ArnoldCat => vec![(0.0, 1.0); 2],
            SystemKind::Henon => vec![(-10.0, 10.0); 2],
            SystemKind::SierpinskiIfs => vec![(0.0, 1.0); 2],
            SystemKind::Lorenz63 => vec![(-100.0, 100.0); 3],
            SystemKind::ThreeXMod1 | SystemKind::MarkovPl => vec![(0.0, 1.0)],
            SystemKind::Gauss => vec![(0.0, 1.0)],
            SystemKind::Hemmer => vec![(-1.0, 1.0)],
        }
    }

    /// Box initial conditions are drawn from. For Hénon this is a small
    /// region inside the basin of attraction; for Lorenz a box around the
    /// attractor. Both rely on burn-in to land on the attractor.
    pub(crate) fn init_box(&self) -> Vec<(f64, f64)> {
        match self.kind {
            SystemKind::Henon => vec![(-0.5, 0.5), (-0.25, 0.25)],
            SystemKind::Lorenz63 => vec![(-15.0, 15.0), (-20.0, 20.0), (5.0, 40.0)],
            SystemKind::Gauss => vec![(1e-6, 1.0)],
            _ => self.phase_box(),
        }
    }

    pub fn in_phase_box(&self, state: &[f64]) -> bool {
        let bx = self.phase_box();
        state.len() == bx.len()
            && state
                .iter()
                .zip(bx.iter())
                .all(|(x, (lo, hi))| x.is_finite() && *x >= *lo && *x <= *hi)
    }

    /// One iterate of the map (or one Euler step of size dt for Lorenz).
    /// Only the Sierpinski IFS consumes bits from `rng`.
    pub fn step(&self, state: &[f64], rng: &mut SplitMix64) -> Result<Vec<f64>> {
        if state.len() != self.dim() {
            return Err(Error::argument(format!(
                "state dimension {} does not match system dimension {}",
                state.len(),
                self.dim()
            )));
        }
        if !self.in_phase_box(state) {
            return Err(Error::domain(format!(
                "{:?} not in the phase box of {}",
                state, self.kind
            )));
        }
        let mut buf = [0.0; 3];
        buf[..state.len()].copy_from_slice(state);
        self.step_unchecked(&mut buf, rng)?;
        Ok(buf[..state.len()].to_vec())
    }

    /// Stepping core without the phase-box precondition check. `buf` holds
    /// the state in its first `dim()` entries and is overwritten in place.
    #[inline]
    pub(crate) fn step_unchecked(&self, buf: &mut [f64; 3], rng: &mut SplitMix64) -> Result<()> {
        const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;
        match self.kind {
            SystemKind::ArnoldCat => {
                let (x, y) = (buf[0], buf[1]);
                buf[0] = (2.0 * x + y).rem_euclid(1.0);
                buf[1] = (x + y).rem_euclid(1.0);
            }
            SystemKind::Henon => {
                let (a, b) = (self.params[0], self.params[1]);
                let (x, y) = (buf[0], buf[1]);
                buf[0] = 1.0 - a * x * x + y;
                buf[1] = b * x;
                if buf[0].abs() > 10.0 || buf[1].abs() > 10.0 {
                    return Err(Error::domain("henon orbit escaped |x| > 10"));
                }
            }
            SystemKind::SierpinskiIfs => {
                let u = rng.next_f64();
                let (x, y) = (buf[0], buf[1]);
                if u < self.params[0] {
                    buf[0] = 0.5 * x;
                    buf[1] = 0.5 * (y + 1.0);
                } else if u < self.params[0] + self.params[1] {
                    buf[0] = 0.5 * (x + 1.0);
                    buf[1] = 0.5 * (y + 1.0);
                } else {
                    buf[0] = 0.5 * x;
                    buf[1] = 0.5 * y;
                }
            }
            SystemKind::Lorenz63 => {
                let (sigma, rho, beta, dt) = (
                    self.params[0],
                    self.params[1],
                    self.params[2],
                    self.params[3],
                );
                let (x, y, z) = (buf[0], buf[1], buf[2]);
                buf[0] = x + dt * sigma * (y - x);
                buf[1] = y + dt * (x * (rho - z) - y);
                buf[2] = z + dt * (x * y - beta * z);
                if buf.iter().any(|v| !v.is_finite() || v.abs() > 100.0) {
                    return Err(Error::domain("lorenz orbit left the bounding box"));
                }
            }
            SystemKind::ThreeXMod1 => {
                buf[0] = (3.0 * buf[0]).rem_euclid(1.0).min(BELOW_ONE);
            }
            SystemKind::Gauss => {
                let x = buf[0];
                // 1/x overflows for denormal x; treat as the measure-zero
                // pathology it is and let the caller resample.
                if x <= 1e-300 {
                    return Err(Error::domain("gauss map evaluated at x <= 1e-300"));
                }
                let y = 1.0 / x;
                buf[0] = y - y.floor();
            }
            SystemKind::Hemmer => {
                buf[0] = 1.0 - 2.0 * buf[0].abs().sqrt();
            }
            SystemKind::MarkovPl => {
                let x = buf[0];
                let y = if x < 1.0 / 3.0 {
                    3.0 * x
                } else if x < 2.0 / 3.0 {
                    5.0 / 3.0 - 2.0 * x
                } else {
                    3.0 * x - 2.0
                };
                buf[0] = y.clamp(0.0, BELOW_ONE);
            }
        }
        Ok(())
    }

    pub(crate) fn draw_initial(&self, rng: &mut SplitMix64) -> [f64; 3] {
        let mut buf = [0.0; 3];
        for (i, (lo, hi)) in self.init_box().iter().enumerate() {
            buf[i] = rng.uniform(*lo, *hi);
        }
        buf
    }

    /// Regularization scale for trajectory generation. The piecewise-linear
    /// maps contract the f64 lattice onto short attracting pseudo-orbits,
    /// so independent orbits can land on the same cycle and merge exactly;
    /// sub-resolution dither (~2^-49, nine orders below the smallest
    /// analysis radius) keeps them apart without touching any statistic at
    /// observable scales. Nonlinear maps dither themselves through rounding.
    fn dither_scale(&self) -> f64 {
        match self.kind {
            SystemKind::ArnoldCat | SystemKind::ThreeXMod1 | SystemKind::MarkovPl => {
                2.0f64.powi(-49)
            }
            _ => 0.0,
        }
    }

    /// One generation step: the map followed by the regularization dither,
    /// wrapped back into the phase box. Used by every trajectory producer;
    /// the public [`SystemSpec::step`] stays the pure map.
    #[inline]
    pub(crate) fn step_regularized(&self, buf: &mut [f64; 3], rng: &mut SplitMix64) -> Result<()> {
        self.step_unchecked(buf, rng)?;
        let scale = self.dither_scale();
        if scale > 0.0 {
            const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;
            for d in 0..self.dim() {
                let x = buf[d] + rng.uniform(-scale, scale);
                buf[d] = x.rem_euclid(1.0).min(BELOW_ONE);
            }
        }
        Ok(())
    }

    /// Initial state after burn-in, with the restart rules of trajectory
    /// generation, leaving `rng` positioned for the next step.
    pub(crate) fn settle(&self, rng: &mut SplitMix64, burn_in: usize) -> [f64; 3] {
        let mut state = self.draw_initial(rng);
        let mut burned = 0usize;
        while burned < burn_in {
            if self.step_regularized(&mut state, rng).is_err() {
                state = self.draw_initial(rng);
                burned = 0;
                continue;
            }
            burned += 1;
        }
        state
    }
}

/// Where a trajectory came from.
#[derive(Debug, Clone, PartialEq)]
pub enum TrajectorySource {
    System(SystemSpec),
    External { label: String },
}

/// An ordered sequence of d-dimensional states, immutable after
/// construction. Regenerating with the same `(seed, stream)` reproduces the
/// sequence bit-exactly.
#[derive(Debug, Clone)]
pub struct Trajectory {
    data: Vec<f64>,
    dim: usize,
    seed: u64,
    stream: u64,
    burn_in: usize,
    source: TrajectorySource,
}

impl Trajectory {
    /// Generate `len` states of `spec` after discarding `burn_in` iterates,
    /// starting from a uniform draw in the system's initial box.
    pub fn generate(spec: &SystemSpec, seed: u64, burn_in: usize, len: usize) -> Result<Self> {
        Trajectory::generate_stream(spec, seed, 0, burn_in, len)
    }

    /// As [`Trajectory::generate`] but on substream `stream` of `seed`, so
    /// batches of trajectories can share one experiment seed.
    pub fn generate_stream(
        spec: &SystemSpec,
        seed: u64,
        stream: u64,
        burn_in: usize,
        len: usize,
    ) -> Result<Self> {
        if len == 0 {
            return Err(Error::argument("trajectory length must be >= 1"));
        }
        let dim = spec.dim();
        let mut rng = SplitMix64::from_seed_stream(seed, stream);
        // Escaping orbits and domain pathologies restart from a fresh
        // seed-derived point inside settle().
        let mut state = spec.settle(&mut rng, burn_in);

        let mut data = Vec::with_capacity(len * dim);
        let mut recorded = 0usize;
        while recorded < len {
            data.extend_from_slice(&state[..dim]);
            recorded += 1;
            if recorded == len {
                break;
            }
            if spec.step_regularized(&mut state, &mut rng).is_err() {
                state = spec.settle(&mut rng, burn_in);
            }
        }

        Ok(Trajectory {
            data,
            dim,
            seed,
            stream,
            burn_in,
            source: TrajectorySource::System(spec.clone()),
        })
    }

    /// Wrap externally produced states (`data` is row-major, `len * dim`).
    pub fn from_states(data: Vec<f64>, dim: usize, label: impl Into<String>) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::argument("states must be a non-empty multiple of dim"));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::argument("states contain non-finite entries"));
        }
        Ok(Trajectory {
            data,
            dim,
            seed: 0,
            stream: 0,
            burn_in: 0,
            source: TrajectorySource::External {
                label: label.into(),
            },
        })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn source(&self) -> &TrajectorySource {
        &self.source
    }

    /// Metric of the generating system; external data defaults to Euclidean.
    pub fn metric(&self) -> Metric {
        match &self.source {
            TrajectorySource::System(spec) => spec.metric(),
            TrajectorySource::External { .. } => Metric::Euclidean,
        }
    }

    #[inline]
    pub fn state(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    /// CSV export: a `# system,seed,burn_in,dt` header, then one state per
    /// line with 17 significant digits (enough for bit-exact re-import).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let (name, dt) = match &self.source {
            TrajectorySource::System(spec) => {
                let dt = if spec.kind() == SystemKind::Lorenz63 {
                    spec.params()[3]
                } else {
                    0.0
                };
                (spec.kind().name().to_string(), dt)
            }
            TrajectorySource::External { label } => (label.clone(), 0.0),
        };
        writeln!(w, "# {},{},{},{}", name, self.seed, self.burn_in, dt)?;
        for state in self.states() {
            let row: Vec<String> = state.iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Inverse of [`Trajectory::write_csv`]. States round-trip bit-exactly;
    /// known system names are re-attached with their default parameters.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut name = String::from("external");
        let mut seed = 0u64;
        let mut burn_in = 0usize;
        let mut dt = 0.0f64;
        let mut data = Vec::new();
        let mut dim = 0usize;

        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let fields: Vec<&str> = rest.trim().split(',').collect();
                if fields.len() == 4 {
                    name = fields[0].to_string();
                    seed = fields[1].trim().parse().unwrap_or(0);
                    burn_in = fields[2].trim().parse().unwrap_or(0);
                    dt = fields[3].trim().parse().unwrap_or(0.0);
                }
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: lineno + 1,
                        message: format!("bad float {f:?}"),
                    })
                })
                .collect::<Result<_>>()?;
            if dim == 0 {
                dim = row.len();
            } else if row.len() != dim {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("ragged row: {} fields, expected {dim}", row.len()),
                });
            }
            data.extend(row);
        }
        if data.is_empty() {
            return Err(Error::argument("trajectory csv contains no states"));
        }

        let source = match SystemKind::from_name(&name) {
            Some(SystemKind::Lorenz63) => {
                TrajectorySource::System(SystemSpec::lorenz_standard(if dt > 0.0 { dt } else { 0.013 })?)
            }
            Some(SystemKind::Henon) => TrajectorySource::System(SystemSpec::henon_standard()),
            Some(SystemKind::SierpinskiIfs) => {
                TrajectorySource::System(SystemSpec::sierpinski_standard())
            }
            Some(kind) => TrajectorySource::System(SystemSpec::new(kind, vec![])?),
            None => TrajectorySource::External { label: name },
        };
        Ok(Trajectory {
            data,
            dim,
            seed,
            stream: 0,
            burn_in,
            source,
        })
    }
}

/// Distance between two states under `metric`.
pub fn distance(metric: Metric, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::argument(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(dist(metric, a, b))
}

/// Unchecked distance kernel for hot loops.
#[inline(always)]
pub(crate) fn dist(metric: Metric, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        Metric::TorusEuclidean => {
            let mut s = 0.0;
            for (x, y) in a.iter().zip(b) {
                let mut d = x - y;
                d -= d.round(); // wraps to [-1/2, 1/2]
                s += d * d;
            }
            s.sqrt()
        }
        Metric::Euclidean => {
            let mut s = 0.0;
            for (x, y) in a.iter().zip(b) {
                let d = x - y;
                s += d * d;
            }
            s.sqrt()
        }
        Metric::Interval1D => (a[0] - b[0]).abs(),
    }
}

/// Closed-form invariant density and derivative data for the interval maps.
#[derive(Debug, Clone, Copy)]
pub struct DensityModel {
    kind: SystemKind,
    /// Metric entropy (positive Lyapunov exponent), when known in closed form.
    pub metric_entropy: Option<f64>,
}

impl DensityModel {
    /// Support of the density as an interval.
    pub fn support(&self) -> (f64, f64) {
        match self.kind {
            SystemKind::Hemmer => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }

    /// Invariant density h(x).
    pub fn density(&self, x: f64) -> f64 {
        match self.kind {
            SystemKind::ThreeXMod1 => 1.0,
            SystemKind::Gauss => 1.0 / (std::f64::consts::LN_2 * (1.0 + x)),
            SystemKind::Hemmer => 0.5 * (1.0 - x),
            SystemKind::MarkovPl => {
                if x < 1.0 / 3.0 {
                    3.0 / 5.0
                } else {
                    6.0 / 5.0
                }
            }
            _ => unreachable!(),
        }
    }

    /// |T'(x)|.
    pub fn deriv_abs(&self, x: f64) -> f64 {
        match self.kind {
            SystemKind::ThreeXMod1 => 3.0,
            SystemKind::Gauss => 1.0 / (x * x),
            SystemKind::Hemmer => 1.0 / x.abs().sqrt(),
            SystemKind::MarkovPl => {
                if (1.0 / 3.0..2.0 / 3.0).contains(&x) {
                    2.0
                } else {
                    3.0
                }
            }
            _ => unreachable!(),
        }
    }
}

/// Closed-form density model for the four interval maps; other kinds are
/// unsupported.
pub fn density_model(kind: SystemKind) -> Result<DensityModel> {
    let metric_entropy = match kind {
        SystemKind::ThreeXMod1 => Some(3.0f64.ln()),
        SystemKind::Gauss => Some(std::f64::consts::PI.powi(2) / (6.0 * std::f64::consts::LN_2)),
        SystemKind::Hemmer => Some(0.5),
        SystemKind::MarkovPl => Some(0.6 * 3.0f64.ln() + 0.4 * 2.0f64.ln()),
        _ => {
            return Err(Error::Unsupported(format!(
                "no closed-form density for {kind}"
            )))
        }
    };
    Ok(DensityModel {
        kind,
        metric_entropy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;

    fn step1(spec: &SystemSpec, x: f64) -> f64 {
        let mut rng = SplitMix64::new(0);
        spec.step(&[x], &mut rng).unwrap()[0]
    }

    #[test]
    fn cat_fixed_point() {
        let spec = SystemSpec::arnold_cat();
        let mut rng = SplitMix64::new(0);
        let next = spec.step(&[0.0, 0.0], &mut rng).unwrap();
        assert_eq!(next, vec![0.0, 0.0]);
    }

    #[test]
    fn three_x_step() {
        let spec = SystemSpec::three_x_mod1();
        assert!((step1(&spec, 0.2) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn hemmer_step() {
        // T(0.25) = 1 - 2*sqrt(0.25) = 0
        let spec = SystemSpec::hemmer();
        assert_eq!(step1(&spec, 0.25), 0.0);
    }

    #[test]
    fn markov_pl_middle_branch() {
        // T2(0.5) = 5/3 - 1 = 2/3
        let spec = SystemSpec::markov_pl();
        assert!((step1(&spec, 0.5) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_rejects_tiny_x() {
        let spec = SystemSpec::gauss_map();
        let mut rng = SplitMix64::new(0);
        assert!(spec.step(&[0.0], &mut rng).is_err());
        assert!(spec.step(&[1e-301], &mut rng).is_err());
    }

    #[test]
    fn out_of_box_state_is_domain_error() {
        let spec = SystemSpec::three_x_mod1();
        let mut rng = SplitMix64::new(0);
        assert!(matches!(
            spec.step(&[1.5], &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn three_x_trajectory_unrolls_definition() {
        // Exact up to the generation dither (~2^-49).
        let spec = SystemSpec::three_x_mod1();
        let t = Trajectory::generate(&spec, 1, 0, 3).unwrap();
        let x0 = t.state(0)[0];
        assert!((t.state(1)[0] - (3.0 * x0).rem_euclid(1.0)).abs() < 1e-13);
        let x1 = t.state(1)[0];
        assert!((t.state(2)[0] - (3.0 * x1).rem_euclid(1.0)).abs() < 1e-13);
    }

    #[test]
    fn ifs_trajectories_reproducible() {
        let spec = SystemSpec::sierpinski_standard();
        let a = Trajectory::generate(&spec, 9, 100, 500).unwrap();
        let b = Trajectory::generate(&spec, 9, 100, 500).unwrap();
        assert_eq!(a.raw(), b.raw());
        let c = Trajectory::generate(&spec, 10, 100, 500).unwrap();
        assert_ne!(a.raw(), c.raw());
    }

    #[test]
    fn zero_length_rejected() {
        let spec = SystemSpec::three_x_mod1();
        assert!(Trajectory::generate(&spec, 1, 0, 0).is_err());
    }

    #[test]
    fn states_stay_in_phase_box() {
        for spec in [
            SystemSpec::arnold_cat(),
            SystemSpec::henon_standard(),
            SystemSpec::sierpinski_standard(),
            SystemSpec::lorenz_standard(0.013).unwrap(),
            SystemSpec::three_x_mod1(),
            SystemSpec::gauss_map(),
            SystemSpec::hemmer(),
            SystemSpec::markov_pl(),
        ] {
            let t = Trajectory::generate(&spec, 3, 1000, 50_000).unwrap();
            for s in t.states() {
                assert!(spec.in_phase_box(s), "{:?} escaped for {}", s, spec.kind());
            }
        }
    }

    #[test]
    fn torus_distance_wraps() {
        let d = distance(Metric::TorusEuclidean, &[0.1, 0.1], &[0.9, 0.9]).unwrap();
        assert!((d - (0.08f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn euclidean_identity() {
        let p = [0.3, -2.5];
        assert_eq!(distance(Metric::Euclidean, &p, &p).unwrap(), 0.0);
    }

    #[test]
    fn interval_distance() {
        assert!((distance(Metric::Interval1D, &[0.2], &[0.7]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn distance_dimension_mismatch() {
        assert!(distance(Metric::Euclidean, &[0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn gauss_density_value() {
        let m = density_model(SystemKind::Gauss).unwrap();
        assert!((m.density(0.0) - 1.0 / std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn hemmer_density_vanishes_at_one() {
        let m = density_model(SystemKind::Hemmer).unwrap();
        assert_eq!(m.density(1.0), 0.0);
    }

    #[test]
    fn three_x_density_flat() {
        let m = density_model(SystemKind::ThreeXMod1).unwrap();
        assert_eq!(m.density(0.37), 1.0);
        assert_eq!(m.deriv_abs(0.37), 3.0);
    }

    #[test]
    fn densities_integrate_to_one() {
        for kind in [
            SystemKind::ThreeXMod1,
            SystemKind::Gauss,
            SystemKind::Hemmer,
            SystemKind::MarkovPl,
        ] {
            let m = density_model(kind).unwrap();
            let (lo, hi) = m.support();
            // Integrate piecewise so the Markov map's jumps do not cost
            // adaptive subdivisions.
            let cuts = match kind {
                SystemKind::MarkovPl => vec![lo, 1.0 / 3.0, 2.0 / 3.0, hi],
                SystemKind::Hemmer => vec![lo, 0.0, hi],
                _ => vec![lo, hi],
            };
            let total: f64 = cuts
                .windows(2)
                .map(|w| integrate(|x| m.density(x), w[0], w[1], 1e-12).value)
                .sum();
            assert!(
                (total - 1.0).abs() < 1e-8,
                "{kind} density integrates to {total}"
            );
        }
    }

    #[test]
    fn density_model_unsupported_kind() {
        assert!(density_model(SystemKind::Henon).is_err());
    }

    #[test]
    fn csv_round_trip_bit_exact() {
        let spec = SystemSpec::henon_standard();
        let t = Trajectory::generate(&spec, 77, 1000, 200).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(&buf[..]).unwrap();
        assert_eq!(t.raw(), back.raw());
        assert_eq!(back.seed(), 77);
        assert_eq!(back.burn_in(), 1000);
    }

    #[test]
    fn lorenz_states_bounded() {
        let spec = SystemSpec::lorenz_standard(0.013).unwrap();
        let t = Trajectory::generate(&spec, 5, 1000, 100_000).unwrap();
        for s in t.states() {
            assert!(s.iter().all(|v| v.abs() <= 100.0));
        }
    }
}
