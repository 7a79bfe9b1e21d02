//! Reproduction harness behind the CLI: mass map, catalog sweep, evolution
//! runs written to disk, and the two convergence-rate checks.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evolution::{self, StepLog, TrajectoryRecord};
use crate::functionals::{self, DiagnosticsSample, Params};
use crate::grid::{fmt17, Field, PeriodicGrid};
use crate::steady::{self, Kind, SittingBranch, SteadyState};

/// Number of τ samples in the mass map.
pub const MASSMAP_POINTS: usize = 200;

/// (τ, M(τ)) over the admissible hanging-drop interval, ending 1e−3 short of
/// π/max(α,1).
pub fn massmap(alpha: f64) -> Result<Vec<(f64, f64)>> {
    let hi = steady::hanging_tau_max(alpha) - 1e-3;
    let lo = hi / MASSMAP_POINTS as f64;
    (0..MASSMAP_POINTS)
        .map(|k| {
            let tau = lo + (hi - lo) * k as f64 / (MASSMAP_POINTS - 1) as f64;
            Ok((tau, steady::mass_of_tau(alpha, tau, steady::Branch::Hanging)?))
        })
        .collect()
}

pub fn massmap_csv(rows: &[(f64, f64)]) -> String {
    let mut s = String::from("tau,M\n");
    for (t, m) in rows {
        let _ = writeln!(s, "{},{}", fmt17(*t), fmt17(*m));
    }
    s
}

/// Catalog of every mass on an equispaced sweep.
#[derive(Debug, Clone)]
pub struct CatalogSweep {
    pub alpha: f64,
    pub rows: Vec<(f64, Vec<SteadyState>)>,
}

pub fn catalog_sweep(alpha: f64, mass_min: f64, mass_max: f64, points: usize) -> Result<CatalogSweep> {
    if !(mass_min > 0.0 && mass_max >= mass_min) || points < 2 {
        return Err(Error::InvalidParameter(format!(
            "need 0 < mass_min ≤ mass_max and ≥ 2 points (got {mass_min}, {mass_max}, {points})"
        )));
    }
    let branch = SittingBranch::new(alpha);
    let rows = (0..points)
        .map(|k| {
            let m = mass_min + (mass_max - mass_min) * k as f64 / (points - 1) as f64;
            Ok((m, steady::catalog_on(&branch, m, steady::DEFAULT_SPLITS)?))
        })
        .collect::<Result<_>>()?;
    Ok(CatalogSweep { alpha, rows })
}

impl CatalogSweep {
    pub fn to_csv(&self) -> String {
        let mut s = format!("M,{}\n", steady::CATALOG_HEADER);
        for (m, states) in &self.rows {
            for st in states {
                let _ = writeln!(s, "{},{}", fmt17(*m), st.csv_row());
            }
        }
        s
    }

    /// Masses at which the minimizer is not strictly the lowest entry.
    pub fn ordering_violations(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|(_, states)| {
                let e_min = states[0].energy;
                states[1..].iter().any(|s| s.energy <= e_min)
            })
            .map(|(m, _)| *m)
            .collect()
    }

    /// Smallest non-minimizer energy per mass: an empirical stand-in for the
    /// energy threshold below which the minimizer is the only steady state.
    pub fn threshold_proxy(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|(m, states)| {
                let e = states[1..].iter().map(|s| s.energy).fold(f64::INFINITY, f64::min);
                e.is_finite().then_some((*m, e))
            })
            .collect()
    }
}

fn has_saddle(branch: &SittingBranch, mass: f64) -> Result<bool> {
    Ok(steady::catalog_on(branch, mass, 0)?.len() > 1)
}

/// First mass in [mass_min, mass_max] at which a non-minimizing steady state
/// exists: a scan followed by bisection on constructibility to 1e−6.
pub fn saddle_onset(alpha: f64, mass_min: f64, mass_max: f64) -> Result<Option<f64>> {
    const SCAN: usize = 56;
    let branch = SittingBranch::new(alpha);
    let has_saddle = |m: f64| has_saddle(&branch, m);
    let mut prev = mass_min;
    if has_saddle(prev)? {
        return Ok(Some(prev));
    }
    for k in 1..=SCAN {
        let m = mass_min + (mass_max - mass_min) * k as f64 / SCAN as f64;
        if has_saddle(m)? {
            let (mut lo, mut hi) = (prev, m);
            while hi - lo > 1e-6 {
                let mid = 0.5 * (lo + hi);
                if has_saddle(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Some(hi));
        }
        prev = m;
    }
    Ok(None)
}

/// Key-value metadata stored next to a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub grid_size: usize,
    pub n: f64,
    pub alpha: f64,
    pub eps: f64,
    pub mass: f64,
}

impl RunMeta {
    pub fn params(&self) -> Result<Params> {
        Params::new(self.n, self.alpha, self.mass, self.eps)
    }

    fn to_text(&self) -> String {
        format!(
            "N = {}\nn = {}\nalpha = {}\neps = {}\nmass = {}\n",
            self.grid_size,
            fmt17(self.n),
            fmt17(self.alpha),
            fmt17(self.eps),
            fmt17(self.mass)
        )
    }

    fn parse(text: &str) -> Result<Self> {
        let get = |key: &str| -> Result<String> {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .find(|(k, _)| k.trim() == key)
                .map(|(_, v)| v.trim().to_string())
                .ok_or_else(|| Error::MissingKey(key.into()))
        };
        let num = |v: String, key: &str| v.parse::<f64>().map_err(|_| Error::Config(format!("meta `{key}`: bad value `{v}`")));
        Ok(Self {
            grid_size: get("N")?.parse().map_err(|_| Error::Config("meta `N`: bad value".into()))?,
            n: num(get("n")?, "n")?,
            alpha: num(get("alpha")?, "alpha")?,
            eps: num(get("eps")?, "eps")?,
            mass: num(get("mass")?, "mass")?,
        })
    }
}

pub const STEPS_HEADER: &str = "t,dt,newton,rejections,E,E_discrete,mass,min_u,D_discrete,S_kad,h2";

fn steps_csv(steps: &[StepLog]) -> String {
    let mut s = format!("{STEPS_HEADER}\n");
    for st in steps {
        let cols = [
            fmt17(st.t),
            fmt17(st.dt),
            st.newton_iterations.to_string(),
            st.rejections.to_string(),
            fmt17(st.energy_after),
            fmt17(st.energy_discrete_after),
            fmt17(st.mass),
            fmt17(st.min_u),
            fmt17(st.dissipation_discrete),
            fmt17(st.entropy_kadanoff),
            fmt17(st.h2_sq),
        ];
        let _ = writeln!(s, "{}", cols.join(","));
    }
    s
}

/// (t, S_kad) per accepted step from `steps.csv`.
fn read_step_entropy(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(STEPS_HEADER) {
        return Err(Error::Csv { line: 1, msg: format!("expected header `{STEPS_HEADER}`") });
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let cols: Vec<&str> = l.split(',').collect();
            let parse = |k: usize| {
                cols.get(k)
                    .and_then(|c| c.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Csv { line: i + 2, msg: format!("bad column {k}") })
            };
            Ok((parse(0)?, parse(9)?))
        })
        .collect()
}

/// Result of `thinfilm evolve`.
#[derive(Debug, Clone)]
pub struct EvolveOutcome {
    pub record: TrajectoryRecord,
    pub meta: RunMeta,
    pub reference: Field,
    /// Mass drift and energy increase exceeded their limits.
    pub invariant_failures: Vec<String>,
}

/// Mass-drift limit checked after every run.
pub const MASS_TOL: f64 = 1e-11;

/// Run a configuration and write snapshots, diagnostics and metadata to `outdir`.
pub fn evolve(cfg: &RunConfig, outdir: &Path) -> Result<EvolveOutcome> {
    let u0 = cfg.initial_field()?;
    let params = cfg.params(&u0)?;
    let grid = cfg.grid()?;
    let star = steady::minimizer(params.alpha, params.mass)?;
    let reference = star.evaluate(&grid);
    let record = match cfg.stop_gap {
        Some(limit) => {
            let stop = gap_oracle(&star, &reference);
            evolution::run_until(u0, &params, &cfg.scheme, Some(&reference), |_, u| stop(u) <= limit)?
        }
        None => evolution::run(u0, &params, &cfg.scheme, Some(&reference))?,
    };
    let meta = RunMeta { grid_size: grid.len(), n: params.n, alpha: params.alpha, eps: params.eps, mass: params.mass };
    write_trajectory(outdir, &record, &meta)?;

    let mut invariant_failures = Vec::new();
    if record.max_mass_drift > MASS_TOL {
        invariant_failures.push(format!("relative mass drift {} > {MASS_TOL:e}", fmt17(record.max_mass_drift)));
    }
    for s in &record.steps {
        let slack = cfg.scheme.energy_slack.unwrap_or(1e-10 * (1.0 + s.energy_discrete_before.abs()));
        if s.energy_discrete_after > s.energy_discrete_before + slack {
            invariant_failures.push(format!("energy increased at t = {}", fmt17(s.t)));
            break;
        }
    }
    Ok(EvolveOutcome { record, meta, reference, invariant_failures })
}

/// E(u) − E(u*): the resolved Fourier form for positive minimizers, the
/// quadrature expansion otherwise.
pub fn gap_oracle<'a>(star: &'a SteadyState, reference: &'a Field) -> impl Fn(&Field) -> f64 + 'a {
    move |u| {
        if star.kind == Kind::SmoothFilm {
            functionals::energy_gap_resolved(u, reference, star.alpha, star.lambda()).unwrap_or(f64::NAN)
        } else {
            functionals::energy_gap(u, star, star.alpha, star.lambda())
        }
    }
}

fn snapshot_name(k: usize) -> String {
    format!("snapshot_{k:04}.csv")
}

pub fn write_trajectory(outdir: &Path, rec: &TrajectoryRecord, meta: &RunMeta) -> Result<()> {
    fs::create_dir_all(outdir)?;
    fs::write(outdir.join("meta.txt"), meta.to_text())?;
    fs::write(outdir.join("diagnostics.csv"), functionals::diagnostics_to_csv(&rec.samples))?;
    fs::write(outdir.join("steps.csv"), steps_csv(&rec.steps))?;
    let mut index = String::from("index,t,file\n");
    // gnuplot: one data block per snapshot, selected with `index k`.
    let mut profiles = String::new();
    for (k, (t, u)) in rec.snapshots.iter().enumerate() {
        u.write_csv(outdir.join(snapshot_name(k)))?;
        let _ = writeln!(index, "{k},{},{}", fmt17(*t), snapshot_name(k));
        let _ = writeln!(profiles, "# t = {}", fmt17(*t));
        for (x, v) in u.grid().nodes().zip(u.values()) {
            let _ = writeln!(profiles, "{} {}", fmt17(x), fmt17(*v));
        }
        profiles.push_str("\n\n");
    }
    fs::write(outdir.join("snapshots.csv"), index)?;
    fs::write(outdir.join("profiles.dat"), profiles)?;
    Ok(())
}

/// A trajectory read back from disk.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub id: String,
    pub meta: RunMeta,
    pub samples: Vec<DiagnosticsSample>,
    pub snapshots: Vec<(f64, Field)>,
    /// (t, S_kad) per accepted step.
    pub step_entropy: Vec<(f64, f64)>,
}

pub fn read_trajectory(dir: &Path) -> Result<Trajectory> {
    let meta = RunMeta::parse(&fs::read_to_string(dir.join("meta.txt"))?)?;
    let samples = functionals::diagnostics_from_csv(&fs::read_to_string(dir.join("diagnostics.csv"))?)?;
    let step_entropy = read_step_entropy(&fs::read_to_string(dir.join("steps.csv"))?)?;
    let mut snapshots = Vec::new();
    let index = fs::read_to_string(dir.join("snapshots.csv"))?;
    for (i, line) in index.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Csv { line: i + 1, msg: "expected index,t,file".into() });
        }
        let t: f64 = cols[1].parse().map_err(|_| Error::Csv { line: i + 1, msg: "bad time".into() })?;
        snapshots.push((t, Field::read_csv(dir.join(cols[2]))?));
    }
    let id = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(Trajectory { id, meta, samples, snapshots, step_entropy })
}

impl Trajectory {
    pub fn from_record(id: &str, rec: &TrajectoryRecord, meta: RunMeta) -> Self {
        Self {
            id: id.into(),
            meta,
            samples: rec.samples.clone(),
            snapshots: rec.snapshots.clone(),
            step_entropy: rec.steps.iter().map(|s| (s.t, s.entropy_kadanoff)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMode {
    PowerLaw,
    Exponential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub trajectory: String,
    pub mode: RateMode,
    /// Entropy intercept S(u0) and envelope slope max (S(t) − S0)/t.
    pub s0: f64,
    pub k0: f64,
    /// max |S − fit| / max S for the least-squares line over the last decade.
    pub envelope_residual: f64,
    /// (t, bound) from the power-law lower bound; empty in exponential mode.
    pub lower_bound_series: Vec<(f64, f64)>,
    /// (t, dH1) in power-law mode, (t, E − E*) in exponential mode.
    pub measured_series: Vec<(f64, f64)>,
    pub violations: usize,
    /// Late-time slope of log dH1 vs log t, or of log(E − E*) vs t.
    pub fitted_exponent: f64,
    /// (1 − α²)(min u*)ⁿ, exponential mode only.
    pub mu: f64,
    /// fitted_exponent / (2μ), exponential mode only.
    pub rate_ratio: f64,
    /// Samples with dH1 > coercivity bound + 1e−12 (exponential mode only).
    pub coercivity_violations: usize,
}

impl RateReport {
    /// Checks the report must satisfy; an empty list means the run is valid.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.violations > 0 {
            out.push(format!("{} samples below the lower bound", self.violations));
        }
        if self.mode == RateMode::Exponential {
            if !(self.fitted_exponent <= -1.5 * self.mu) {
                out.push(format!(
                    "energy-gap slope {} is slower than −1.5μ = {}",
                    fmt17(self.fitted_exponent),
                    fmt17(-1.5 * self.mu)
                ));
            }
            if self.coercivity_violations > 0 {
                out.push(format!("{} samples violate the coercivity bound", self.coercivity_violations));
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mode = match self.mode {
            RateMode::PowerLaw => "powerlaw",
            RateMode::Exponential => "exponential",
        };
        let mut s = String::new();
        let _ = writeln!(s, "trajectory,{}", self.trajectory);
        let _ = writeln!(s, "mode,{mode}");
        for (k, v) in [
            ("S0", self.s0),
            ("K0", self.k0),
            ("envelope_residual", self.envelope_residual),
            ("fitted_exponent", self.fitted_exponent),
            ("mu", self.mu),
            ("rate_ratio", self.rate_ratio),
        ] {
            let _ = writeln!(s, "{k},{}", fmt17(v));
        }
        let _ = writeln!(s, "violations,{}", self.violations);
        let _ = writeln!(s, "coercivity_violations,{}", self.coercivity_violations);
        s.push('\n');
        match self.mode {
            RateMode::PowerLaw => {
                s.push_str("t,dH1,bound\n");
                for ((t, m), (_, b)) in self.measured_series.iter().zip(&self.lower_bound_series) {
                    let _ = writeln!(s, "{},{},{}", fmt17(*t), fmt17(*m), fmt17(*b));
                }
            }
            RateMode::Exponential => {
                s.push_str("t,gap\n");
                for (t, g) in &self.measured_series {
                    let _ = writeln!(s, "{},{}", fmt17(*t), fmt17(*g));
                }
            }
        }
        s
    }
}

/// Least-squares line y ≈ a + b·x; returns (a, b).
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxx, sxy) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (x - mx), b + (x - mx) * (y - my)));
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// Points with t in the last decade [t_last/10, t_last]; widened to the last
/// eight points with t > 0 when the decade holds fewer.
pub fn late_window(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let pos: Vec<(f64, f64)> = pts.iter().copied().filter(|(t, _)| *t > 0.0).collect();
    let Some(&(t_last, _)) = pos.last() else { return Vec::new() };
    let decade: Vec<(f64, f64)> = pos.iter().copied().filter(|(t, _)| *t >= 0.1 * t_last).collect();
    if decade.len() >= 8 {
        decade
    } else {
        pos[pos.len().saturating_sub(8)..].to_vec()
    }
}

/// (S0, K0, envelope residual) from the step-resolved entropy series.
fn entropy_envelope(traj: &Trajectory) -> (f64, f64, f64) {
    let s0 = traj.samples.first().map_or(f64::NAN, |s| s.entropy_kadanoff);
    let mut series: Vec<(f64, f64)> = traj.step_entropy.clone();
    series.extend(traj.samples.iter().map(|s| (s.t, s.entropy_kadanoff)));
    series.sort_by(|a, b| a.0.total_cmp(&b.0));
    let k0 = series
        .iter()
        .filter(|(t, _)| *t > 0.0)
        .map(|(t, s)| (s - s0) / t)
        .fold(0.0, f64::max);
    let late = late_window(&traj.step_entropy);
    let residual = if late.len() >= 2 {
        let (a, b) = linear_fit(&late);
        let worst = late.iter().map(|(t, s)| (s - a - b * t).abs()).fold(0.0, f64::max);
        worst / late.iter().map(|(_, s)| s.abs()).fold(0.0, f64::max)
    } else {
        f64::NAN
    };
    (s0, k0, residual)
}

pub fn rates(traj: &Trajectory, mode: RateMode) -> Result<RateReport> {
    let m = &traj.meta;
    let star = steady::minimizer(m.alpha, m.mass)?;
    let (s0, k0, envelope_residual) = entropy_envelope(traj);
    let mut report = RateReport {
        trajectory: traj.id.clone(),
        mode,
        s0,
        k0,
        envelope_residual,
        lower_bound_series: Vec::new(),
        measured_series: Vec::new(),
        violations: 0,
        fitted_exponent: f64::NAN,
        mu: f64::NAN,
        rate_ratio: f64::NAN,
        coercivity_violations: 0,
    };
    match mode {
        RateMode::PowerLaw => {
            let Some(drop) = star.droplet().filter(|_| star.kind == Kind::HangingDrop) else {
                return Err(Error::Rates(
                    "power-law mode needs a minimizer with a dry set, but this run's minimizer is a strictly positive film"
                        .into(),
                ));
            };
            if m.n != 3.0 {
                return Err(Error::Rates(format!("the power-law bound is implemented for n = 3 (run has n = {})", m.n)));
            }
            let dry = 2.0 * (PI - drop.tau);
            for s in &traj.samples {
                let bound = PI.sqrt().recip() * (dry / (s0 + k0 * s.t)).powf(2.0 / 3.0);
                report.lower_bound_series.push((s.t, bound));
                report.measured_series.push((s.t, s.d_h1));
                if s.d_h1 < bound {
                    report.violations += 1;
                }
            }
            let logs: Vec<(f64, f64)> = late_window(&report.measured_series)
                .into_iter()
                .map(|(t, d)| (t.ln(), d.ln()))
                .collect();
            if logs.len() >= 2 {
                report.fitted_exponent = linear_fit(&logs).1;
            }
        }
        RateMode::Exponential => {
            if star.kind != Kind::SmoothFilm || star.min_value() <= 0.0 {
                return Err(Error::Rates(
                    "exponential mode needs a strictly positive minimizer, but this run's minimizer has a dry set".into(),
                ));
            }
            let grid = PeriodicGrid::new(m.grid_size)?;
            let reference = star.evaluate(&grid);
            report.mu = (1.0 - m.alpha * m.alpha) * star.min_value().powf(m.n);
            let gap = gap_oracle(&star, &reference);
            let gaps: Vec<(f64, f64)> = if traj.snapshots.is_empty() {
                traj.samples.iter().map(|s| (s.t, s.energy - star.energy)).collect()
            } else {
                traj.snapshots.iter().map(|(t, u)| (*t, gap(u))).collect()
            };
            for (t, g) in &gaps {
                if let Some(s) = traj.samples.iter().find(|s| s.t == *t) {
                    let bound = functionals::coercivity_bound(g.max(0.0), m.alpha)?;
                    if s.d_h1 > bound + 1e-12 {
                        report.coercivity_violations += 1;
                    }
                }
            }
            let logs: Vec<(f64, f64)> =
                late_window(&gaps).into_iter().filter(|(_, g)| *g > 0.0).map(|(t, g)| (t, g.ln())).collect();
            if logs.len() >= 2 {
                report.fitted_exponent = linear_fit(&logs).1;
            }
            report.rate_ratio = report.fitted_exponent / (2.0 * report.mu);
            report.measured_series = gaps;
        }
    }
    Ok(report)
}

pub fn load_and_rate(dir: impl AsRef<Path>, mode: RateMode) -> Result<RateReport> {
    rates(&read_trajectory(dir.as_ref())?, mode)
}

/// Path helper used by the CLI for `--out` files.
pub fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(path.to_path_buf())
}
