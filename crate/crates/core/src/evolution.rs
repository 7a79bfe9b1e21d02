//! Conservative implicit integrator for
//! u_t + ∂x[f_ε(u) ∂x(u_xx + α²u + cos x)] = 0.
//!
//! Nodal pressure p_i from the three-point Laplacian, edge fluxes
//! F_{i+½} = m_{i+½}(p_{i+1} − p_i)/h, and u^{k+1} = u^k − dt·DIV F(u^{k+1})
//! solved by Newton with the exact Jacobian (cyclic, half-bandwidth 2).

use crate::banded::CyclicBanded;
use crate::error::{Error, Result};
use crate::functionals::{self, DiagnosticsSample, Params};
use crate::grid::{Field, PeriodicGrid};

/// Edge average of the nodal mobilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeMobility {
    #[default]
    Arithmetic,
    Harmonic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub grid_size: usize,
    pub dt0: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub t_end: f64,
    /// Sorted snapshot times in [0, t_end].
    pub log_times: Vec<f64>,
    /// Allowed per-step energy increase; `None` means 1e−10·(1+|E|).
    pub energy_slack: Option<f64>,
    pub mobility: EdgeMobility,
    /// Extra times with diagnostics but no snapshot.
    pub sample_times: Vec<f64>,
}

/// Accepted steps in a row before dt doubles.
const GROW_AFTER: usize = 5;

impl SchemeConfig {
    /// Defaults: dt0 = 1e−4, dt ∈ [1e−12, 1], Newton tolerance 1e−10 with 25 iterations.
    pub fn new(grid_size: usize, t_end: f64, log_times: Vec<f64>) -> Self {
        Self {
            grid_size,
            dt0: 1e-4,
            dt_min: 1e-12,
            dt_max: 1.0,
            newton_tol: 1e-10,
            newton_max: 25,
            t_end,
            log_times,
            energy_slack: None,
            mobility: EdgeMobility::Arithmetic,
            sample_times: Vec::new(),
        }
    }

    /// Add `per_decade` log-spaced diagnostic times from `t_first` to `t_end`.
    pub fn with_log_samples(mut self, t_first: f64, per_decade: usize) -> Self {
        self.sample_times = log_spaced(t_first, self.t_end, per_decade);
        self
    }

    /// Fixed step size: dt_min = dt0 = dt_max.
    pub fn with_fixed_dt(mut self, dt: f64) -> Self {
        self.dt0 = dt;
        self.dt_min = dt;
        self.dt_max = dt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        PeriodicGrid::new(self.grid_size)?;
        let bad = |m: String| Err(Error::Config(m));
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt0 && self.dt0 <= self.dt_max) {
            return bad(format!(
                "need 0 < dt_min ≤ dt0 ≤ dt_max (got {}, {}, {})",
                self.dt_min, self.dt0, self.dt_max
            ));
        }
        if !(self.newton_tol > 0.0) || self.newton_max == 0 {
            return bad("newton_tol and newton_max must be positive".into());
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be ≥ 0 (got {})", self.t_end));
        }
        if self.log_times.iter().any(|&t| !(0.0..=self.t_end).contains(&t)) {
            return bad(format!("log_times must lie in [0, {}]", self.t_end));
        }
        if self.log_times.windows(2).any(|w| w[1] < w[0]) {
            return bad("log_times must be sorted".into());
        }
        if self.sample_times.iter().any(|&t| !(0.0..=self.t_end).contains(&t)) {
            return bad(format!("sample times must lie in [0, {}]", self.t_end));
        }
        Ok(())
    }
}

/// t_first·10^{k/per_decade} for k ≥ 0 while ≤ t_end (t_end itself included).
pub fn log_spaced(t_first: f64, t_end: f64, per_decade: usize) -> Vec<f64> {
    if !(t_first > 0.0) || per_decade == 0 || t_first > t_end {
        return Vec::new();
    }
    let mut out: Vec<f64> = (0..)
        .map(|k| t_first * 10f64.powf(k as f64 / per_decade as f64))
        .take_while(|&t| t < t_end * (1.0 - 1e-12))
        .collect();
    out.push(t_end);
    out
}

/// p_i = (u_{i−1} − 2u_i + u_{i+1})/h² + α²u_i + cos x_i.
pub fn pressure(u: &Field, alpha: f64) -> Field {
    let g = u.grid();
    let v = u.values();
    let n = v.len();
    let h2 = g.spacing() * g.spacing();
    let p = (0..n)
        .map(|i| (v[(i + n - 1) % n] - 2.0 * v[i] + v[(i + 1) % n]) / h2 + alpha * alpha * v[i] + g.node(i).cos())
        .collect();
    Field::new(g, p).expect("same grid")
}

fn edge_mobility(kind: EdgeMobility, a: f64, b: f64) -> f64 {
    match kind {
        EdgeMobility::Arithmetic => 0.5 * (a + b),
        EdgeMobility::Harmonic if a + b > 0.0 => 2.0 * a * b / (a + b),
        EdgeMobility::Harmonic => 0.0,
    }
}

/// (∂m/∂a, ∂m/∂b) of the edge average.
fn edge_mobility_grad(kind: EdgeMobility, a: f64, b: f64) -> (f64, f64) {
    match kind {
        EdgeMobility::Arithmetic => (0.5, 0.5),
        EdgeMobility::Harmonic if a + b > 0.0 => {
            let s2 = (a + b) * (a + b);
            (2.0 * b * b / s2, 2.0 * a * a / s2)
        }
        EdgeMobility::Harmonic => (0.0, 0.0),
    }
}

/// Edge fluxes, entry i holding F_{i+½}.
pub fn flux(u: &Field, p: &Field, params: &Params, kind: EdgeMobility) -> Vec<f64> {
    let (v, pv) = (u.values(), p.values());
    let n = v.len();
    let h = u.grid().spacing();
    (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            edge_mobility(kind, params.mobility(v[i]), params.mobility(v[j])) * (pv[j] - pv[i]) / h
        })
        .collect()
}

/// DIV(F)_i = (F_{i+½} − F_{i−½})/h.
pub fn divergence(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    (0..n).map(|i| (f[i] - f[(i + n - 1) % n]) / h).collect()
}

/// Discrete dissipation Σ_edges h·m(Δp/h)², the decay rate of the stencil energy.
pub fn discrete_dissipation(u: &Field, params: &Params, kind: EdgeMobility) -> f64 {
    let g = u.grid();
    let p = pressure(u, params.alpha);
    let (v, pv) = (u.values(), p.values());
    let n = v.len();
    let h = g.spacing();
    (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            let q = (pv[j] - pv[i]) / h;
            h * edge_mobility(kind, params.mobility(v[i]), params.mobility(v[j])) * q * q
        })
        .sum()
}

/// ‖u_xx‖₂² with the three-point second difference.
pub fn h2_seminorm_sq(u: &Field) -> f64 {
    let v = u.values();
    let n = v.len();
    let h = u.grid().spacing();
    (0..n)
        .map(|i| {
            let d = (v[(i + n - 1) % n] - 2.0 * v[i] + v[(i + 1) % n]) / (h * h);
            d * d
        })
        .sum::<f64>()
        * h
}

fn mobility_slope(params: &Params, z: f64) -> f64 {
    if z > 0.0 {
        params.n * z.powf(params.n - 1.0)
    } else {
        0.0
    }
}

/// Backward-Euler residual (u − u_old)/dt + DIV F(u) and its Jacobian.
fn residual_and_jacobian(
    u: &[f64],
    u_old: &[f64],
    dt: f64,
    grid: &PeriodicGrid,
    params: &Params,
    kind: EdgeMobility,
) -> (Vec<f64>, CyclicBanded) {
    let n = u.len();
    let h = grid.spacing();
    let h2 = h * h;
    let a2 = params.alpha * params.alpha;
    let at = |i: isize| u[i.rem_euclid(n as isize) as usize];
    let p: Vec<f64> = (0..n as isize)
        .map(|i| (at(i - 1) - 2.0 * at(i) + at(i + 1)) / h2 + a2 * at(i) + grid.node(i as usize).cos())
        .collect();
    let f: Vec<f64> = u.iter().map(|&z| params.mobility(z)).collect();
    let df: Vec<f64> = u.iter().map(|&z| mobility_slope(params, z)).collect();

    // Pressure stencil (u_{k−1}, u_k, u_{k+1}) and ∂q/∂u over u_{i−1..i+2} for q = (p_{i+1} − p_i)/h.
    let c = [1.0 / h2, -2.0 / h2 + a2, 1.0 / h2];
    let dq = [-c[0] / h, (c[0] - c[1]) / h, (c[1] - c[2]) / h, c[2] / h];

    let mut flux = vec![0.0; n];
    // dflux[e][k] = ∂F_e/∂u_{e−1+k}
    let mut dflux = vec![[0.0; 4]; n];
    for e in 0..n {
        let j = (e + 1) % n;
        let m = edge_mobility(kind, f[e], f[j]);
        let (ma, mb) = edge_mobility_grad(kind, f[e], f[j]);
        let q = (p[j] - p[e]) / h;
        flux[e] = m * q;
        let mut d = dq.map(|v| m * v);
        d[1] += ma * df[e] * q;
        d[2] += mb * df[j] * q;
        dflux[e] = d;
    }

    let mut jac = CyclicBanded::zeros(n, 2);
    let mut res = vec![0.0; n];
    for i in 0..n {
        let prev = (i + n - 1) % n;
        res[i] = (u[i] - u_old[i]) / dt + (flux[i] - flux[prev]) / h;
        jac.add(i, 0, 1.0 / dt);
        for (k, v) in dflux[i].iter().enumerate() {
            jac.add(i, k as isize - 1, v / h);
        }
        for (k, v) in dflux[prev].iter().enumerate() {
            jac.add(i, k as isize - 2, -v / h);
        }
    }
    (res, jac)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Why a trial step was rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rejection {
    Newton,
    Positivity(f64),
    Energy(f64),
}

/// Newton solve of one backward-Euler step. Returns (u^{k+1}, iterations).
///
/// Every Jacobian column sums to 1/dt, so each Newton update preserves mass
/// up to the round-off of the linear solve.
pub fn implicit_solve(
    u_old: &Field,
    dt: f64,
    params: &Params,
    cfg: &SchemeConfig,
) -> std::result::Result<(Field, usize), Rejection> {
    let grid = u_old.grid();
    let mut u = u_old.values().to_vec();
    for it in 1..=cfg.newton_max {
        let (res, jac) = residual_and_jacobian(&u, u_old.values(), dt, &grid, params, cfg.mobility);
        let delta = jac.solve(&res).map_err(|_| Rejection::Newton)?;
        for (ui, di) in u.iter_mut().zip(&delta) {
            *ui -= di;
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Rejection::Newton);
        }
        let (res, _) = residual_and_jacobian(&u, u_old.values(), dt, &grid, params, cfg.mobility);
        let scale = cfg.newton_tol * (1.0 + sup(&u));
        // The residual of a fourth-order operator has a round-off floor of order
        // m·|u|·ε_mach/h⁴, which can sit above scale/dt on fine grids; a Newton
        // correction below the tolerance is then accepted instead.
        if sup(&res) <= scale / dt || sup(&delta) <= scale {
            return Ok((Field::new(grid, u).expect("same grid"), it));
        }
    }
    Err(Rejection::Newton)
}

/// How strictly the positivity guard is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PositivityGuard {
    /// min u > 0 (strictly positive initial data).
    Strict,
    /// min u ≥ −1e−10·max u (initial data with a dry set).
    Nonnegative,
}

impl PositivityGuard {
    pub fn for_initial(u0: &Field) -> Self {
        if u0.is_positive() {
            Self::Strict
        } else {
            Self::Nonnegative
        }
    }

    pub fn admits(&self, u: &Field) -> bool {
        match self {
            Self::Strict => u.min() > 0.0,
            Self::Nonnegative => u.min() >= -1e-10 * u.max(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub t: f64,
    pub u: Field,
    pub step_count: usize,
    pub dt: f64,
    pub samples: Vec<DiagnosticsSample>,
    pub guard: PositivityGuard,
    accepts_in_row: usize,
    /// Stencil energy of `u`, the quantity checked for monotonicity.
    pub energy_discrete: f64,
}

impl EvolutionState {
    pub fn new(u0: Field, cfg: &SchemeConfig, params: &Params) -> Self {
        let energy_discrete = functionals::energy_discrete(&u0, params.alpha);
        Self {
            t: 0.0,
            guard: PositivityGuard::for_initial(&u0),
            u: u0,
            step_count: 0,
            dt: cfg.dt0,
            samples: Vec::new(),
            accepts_in_row: 0,
            energy_discrete,
        }
    }
}

/// Record of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub t: f64,
    pub dt: f64,
    pub newton_iterations: usize,
    pub rejections: usize,
    pub energy_discrete_before: f64,
    pub energy_discrete_after: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    pub mass: f64,
    pub min_u: f64,
    /// Discrete dissipation at the new time level.
    pub dissipation_discrete: f64,
    /// S_{n−3/2} at the new time level.
    pub entropy_kadanoff: f64,
    /// ‖u_xx‖₂² at the new time level.
    pub h2_sq: f64,
}

fn energy_slack(cfg: &SchemeConfig, e: f64) -> f64 {
    cfg.energy_slack.unwrap_or(1e-10 * (1.0 + e.abs()))
}

/// Advance by one accepted step of length ≤ min(state.dt, max_dt), halving on
/// rejection and doubling after five accepts in a row.
pub fn step(state: &mut EvolutionState, cfg: &SchemeConfig, params: &Params, max_dt: f64) -> Result<StepLog> {
    let e_before = functionals::energy(&state.u, params.alpha);
    let mut rejections = 0;
    let mut dt = state.dt.min(max_dt);
    loop {
        let outcome = implicit_solve(&state.u, dt, params, cfg).and_then(|(next, iters)| {
            if !state.guard.admits(&next) {
                return Err(Rejection::Positivity(next.min()));
            }
            let e_next = functionals::energy_discrete(&next, params.alpha);
            if e_next > state.energy_discrete + energy_slack(cfg, state.energy_discrete) {
                return Err(Rejection::Energy(e_next - state.energy_discrete));
            }
            Ok((next, iters, e_next))
        });
        match outcome {
            Ok((next, iters, e_next)) => {
                let log = StepLog {
                    t: state.t + dt,
                    dt,
                    newton_iterations: iters,
                    rejections,
                    energy_discrete_before: state.energy_discrete,
                    energy_discrete_after: e_next,
                    energy_before: e_before,
                    energy_after: functionals::energy(&next, params.alpha),
                    mass: next.mass(),
                    min_u: next.min(),
                    dissipation_discrete: discrete_dissipation(&next, params, cfg.mobility),
                    entropy_kadanoff: kadanoff(&next, params).unwrap_or(f64::NAN),
                    h2_sq: h2_seminorm_sq(&next),
                };
                state.t += dt;
                state.u = next;
                state.energy_discrete = e_next;
                state.step_count += 1;
                // A step shortened to hit a log time leaves dt itself alone.
                state.dt = state.dt.max(dt);
                state.accepts_in_row += 1;
                if state.accepts_in_row >= GROW_AFTER {
                    state.dt = (2.0 * state.dt).min(cfg.dt_max);
                    state.accepts_in_row = 0;
                }
                return Ok(log);
            }
            Err(why) => {
                rejections += 1;
                state.accepts_in_row = 0;
                log::debug!("t={} dt={dt:e}: step rejected ({why:?})", state.t);
                let half = 0.5 * dt;
                if half < cfg.dt_min {
                    return Err(match why {
                        Rejection::Positivity(min_u) => Error::PositivityLoss { t: state.t, min_u },
                        _ => Error::NonConvergence { t: state.t, dt },
                    });
                }
                dt = half;
                state.dt = half;
            }
        }
    }
}

/// Everything recorded along a run.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryRecord {
    /// Diagnostics at t = 0 and at every log time reached.
    pub samples: Vec<DiagnosticsSample>,
    /// (t, u) at every log time reached.
    pub snapshots: Vec<(f64, Field)>,
    pub steps: Vec<StepLog>,
    /// Running max over steps of S_{n−3/2}(u(t)) − S_{n−3/2}(u0), one per sample.
    pub entropy_excess: Vec<f64>,
    /// ∫₀ᵗ ‖u_xx‖₂² dt (right-endpoint rule), one per sample.
    pub h2_budget: Vec<f64>,
    /// ∫₀ᵗ D dt with the diagnostic dissipation (trapezoid over steps), one per sample.
    pub dissipation_integral: Vec<f64>,
    /// ∫₀ᵗ D_h dt with the discrete dissipation (right endpoint), one per sample.
    pub dissipation_integral_discrete: Vec<f64>,
    /// Largest per-step increase of the stencil energy (≤ 0 when monotone).
    pub max_energy_increase: f64,
    /// Largest per-step relative mass change.
    pub max_mass_drift: f64,
    pub stopped_early: bool,
}

impl TrajectoryRecord {
    pub fn final_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }
}

fn kadanoff(u: &Field, params: &Params) -> Result<f64> {
    let beta = params.n - 1.5;
    if beta <= 0.0 {
        return Ok(f64::NAN);
    }
    let e = functionals::entropy(u, beta, functionals::default_entropy_floor(beta))?;
    Ok(if e.infinite { f64::INFINITY } else { e.value })
}

/// Integrate to `cfg.t_end`. Diagnostics distances are measured against `reference`.
pub fn run(u0: Field, params: &Params, cfg: &SchemeConfig, reference: Option<&Field>) -> Result<TrajectoryRecord> {
    run_until(u0, params, cfg, reference, |_, _| false)
}

/// As [`run`], but stops at the first log time where `stop(sample, u)` holds.
pub fn run_until(
    u0: Field,
    params: &Params,
    cfg: &SchemeConfig,
    reference: Option<&Field>,
    mut stop: impl FnMut(&DiagnosticsSample, &Field) -> bool,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    params.validate()?;
    if u0.grid().len() != cfg.grid_size {
        return Err(Error::GridMismatch(u0.grid().len(), cfg.grid_size));
    }
    if !u0.is_nonnegative() {
        return Err(Error::InvalidParameter(format!("initial data must be nonnegative (min {})", u0.min())));
    }
    let mass0 = u0.mass();
    let s0 = kadanoff(&u0, params)?;
    let mut rec = TrajectoryRecord { max_energy_increase: f64::NEG_INFINITY, ..Default::default() };
    let mut state = EvolutionState::new(u0, cfg, params);

    let mut entropy_max = 0.0f64;
    let mut h2 = 0.0;
    let mut d_int = 0.0;
    let mut dh_int = 0.0;
    let mut d_prev = functionals::dissipation(&state.u, params, functionals::default_delta(&state.u));

    let mut record = |state: &EvolutionState, rec: &mut TrajectoryRecord, snapshot: bool, e: f64, h2: f64, d: f64, dh: f64| -> Result<bool> {
        let sample = DiagnosticsSample::measure(state.t, &state.u, params, reference)?;
        let halt = stop(&sample, &state.u);
        rec.samples.push(sample);
        rec.entropy_excess.push(e);
        rec.h2_budget.push(h2);
        rec.dissipation_integral.push(d);
        rec.dissipation_integral_discrete.push(dh);
        if snapshot {
            rec.snapshots.push((state.t, state.u.clone()));
        }
        Ok(halt)
    };

    // (time, snapshot?) in increasing order; coincident times merge.
    let mut all: Vec<(f64, bool)> = cfg.log_times.iter().map(|&t| (t, true)).collect();
    all.extend(cfg.sample_times.iter().map(|&t| (t, false)));
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    all.dedup_by(|b, a| {
        let same = (a.0 - b.0).abs() <= 1e-12 * a.0.max(1.0);
        a.1 |= same && b.1;
        same
    });
    let mut targets = all.into_iter().peekable();
    let zero_snapshot = match targets.peek() {
        Some(&(t, snap)) if t == 0.0 => {
            targets.next();
            snap
        }
        _ => false,
    };
    if record(&state, &mut rec, zero_snapshot, 0.0, 0.0, 0.0, 0.0)? {
        rec.stopped_early = true;
        state.samples = rec.samples.clone();
        return Ok(rec);
    }
    let mut next_target = targets.next();
    while state.t < cfg.t_end {
        let goal = next_target.map_or(cfg.t_end, |(t, _)| t).min(cfg.t_end);
        let remaining = goal - state.t;
        let log = step(&mut state, cfg, params, remaining)?;
        // Land exactly on the target despite round-off in the sum of steps.
        let hit = (state.t - goal).abs() <= 1e-12 * goal.max(1.0);
        if hit {
            state.t = goal;
        }
        rec.max_energy_increase = rec.max_energy_increase.max(log.energy_discrete_after - log.energy_discrete_before);
        rec.max_mass_drift = rec.max_mass_drift.max((log.mass - mass0).abs() / mass0);
        let d_now = functionals::dissipation(&state.u, params, functionals::default_delta(&state.u));
        d_int += 0.5 * (d_prev + d_now) * log.dt;
        d_prev = d_now;
        dh_int += log.dissipation_discrete * log.dt;
        h2 += log.h2_sq * log.dt;
        let s = log.entropy_kadanoff;
        if (s - s0).is_finite() {
            entropy_max = entropy_max.max(s - s0);
        } else if s.is_infinite() {
            entropy_max = f64::INFINITY;
        }
        rec.steps.push(log);
        if let Some((_, snapshot)) = next_target.filter(|&(t, _)| hit && t <= state.t) {
            next_target = targets.next();
            if record(&state, &mut rec, snapshot, entropy_max, h2, d_int, dh_int)? {
                rec.stopped_early = true;
                break;
            }
        } else if hit && state.t >= cfg.t_end {
            record(&state, &mut rec, false, entropy_max, h2, d_int, dh_int)?;
        }
    }
    state.samples = rec.samples.clone();
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn params(n: f64, alpha: f64, mass: f64, eps: f64) -> Params {
        Params::new(n, alpha, mass, eps).unwrap()
    }

    #[test]
    fn pressure_of_constant() {
        let g = PeriodicGrid::new(32).unwrap();
        let p = pressure(&g.constant(2.0), 1.0);
        for (x, v) in g.nodes().zip(p.values()) {
            assert_abs_diff_eq!(*v, 2.0 + x.cos(), epsilon = 1e-13);
        }
    }

    #[test]
    fn pressure_stencil_eigenvalue() {
        let g = PeriodicGrid::new(64).unwrap();
        let h = g.spacing();
        let p = pressure(&g.sample(f64::cos), 0.0);
        let lam = -(2.0 - 2.0 * h.cos()) / (h * h);
        for (x, v) in g.nodes().zip(p.values()) {
            assert_abs_diff_eq!(*v, (lam + 1.0) * x.cos(), epsilon = 1e-11);
        }
    }

    #[test]
    fn flux_examples() {
        let g = PeriodicGrid::new(64).unwrap();
        let pr = params(3.0, 1.0, 2.0 * PI, 0.0);
        let u = g.constant(1.5);
        let f = flux(&u, &g.constant(0.3), &pr, EdgeMobility::Arithmetic);
        assert!(f.iter().all(|v| *v == 0.0));
        let u = g.constant(1.0);
        let f = flux(&u, &pressure(&u, 1.0), &pr, EdgeMobility::Arithmetic);
        let h = g.spacing();
        for (i, v) in f.iter().enumerate() {
            assert_abs_diff_eq!(*v, (g.node(i + 1).cos() - g.node(i).cos()) / h, epsilon = 1e-12);
            assert_abs_diff_eq!(*v, -(g.node(i) + 0.5 * h).sin(), epsilon = 1e-3);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = PeriodicGrid::new(16).unwrap();
        let u: Vec<f64> = g.nodes().map(|x| 1.0 + 0.3 * x.cos() + 0.1 * (2.0 * x).sin()).collect();
        let old: Vec<f64> = u.iter().map(|v| v * 0.99).collect();
        for kind in [EdgeMobility::Arithmetic, EdgeMobility::Harmonic] {
            let pr = params(3.0, 0.7, 1.0, 1e-3);
            let (r0, jac) = residual_and_jacobian(&u, &old, 0.1, &g, &pr, kind);
            for j in 0..16 {
                let mut up = u.clone();
                let step = 1e-6;
                up[j] += step;
                let (r1, _) = residual_and_jacobian(&up, &old, 0.1, &g, &pr, kind);
                for i in 0..16 {
                    let fd = (r1[i] - r0[i]) / step;
                    let an = jac.get(i, j);
                    assert!((fd - an).abs() <= 1e-4 * (1.0 + an.abs()), "{kind:?} ({i},{j}): {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn one_step_conserves_mass_and_lowers_energy() {
        let g = PeriodicGrid::new(64).unwrap();
        let u0 = g.constant(1.0);
        let pr = params(3.0, 1.0, 2.0 * PI, 1e-8);
        let cfg = SchemeConfig::new(64, 1.0, vec![]).with_fixed_dt(1e-4);
        let (u1, _) = implicit_solve(&u0, 1e-4, &pr, &cfg).unwrap();
        assert!((u1.mass() - u0.mass()).abs() <= 1e-13 * u0.mass());
        assert!(functionals::energy(&u1, 1.0) < functionals::energy(&u0, 1.0));
    }

    #[test]
    fn t_end_zero_gives_single_sample() {
        let g = PeriodicGrid::new(32).unwrap();
        let u0 = g.constant(1.0);
        let pr = params(3.0, 1.0, u0.mass(), 1e-8);
        let rec = run(u0.clone(), &pr, &SchemeConfig::new(32, 0.0, vec![]), None).unwrap();
        assert_eq!(rec.samples.len(), 1);
        assert_eq!(rec.samples[0].csv_row(), DiagnosticsSample::measure(0.0, &u0, &pr, None).unwrap().csv_row());
    }

    #[test]
    fn run_hits_log_times() {
        let g = PeriodicGrid::new(32).unwrap();
        let u0 = g.sample(|x| 2.0 + 0.5 * x.cos());
        let pr = params(3.0, 0.5, u0.mass(), 0.0);
        let cfg = SchemeConfig::new(32, 0.1, vec![0.0, 0.013, 0.05, 0.1]);
        let rec = run(u0, &pr, &cfg, None).unwrap();
        let times: Vec<f64> = rec.snapshots.iter().map(|s| s.0).collect();
        assert_eq!(times, vec![0.0, 0.013, 0.05, 0.1]);
        assert_eq!(rec.samples.len(), 4);
        assert!(rec.max_mass_drift < 1e-13);
    }

    #[test]
    fn diagnostic_only_samples() {
        let g = PeriodicGrid::new(32).unwrap();
        let u0 = g.sample(|x| 2.0 + 0.5 * x.cos());
        let pr = params(3.0, 0.5, u0.mass(), 0.0);
        let cfg = SchemeConfig::new(32, 0.1, vec![0.0, 0.1]).with_log_samples(0.01, 2);
        assert_eq!(cfg.sample_times.len(), 3);
        let rec = run(u0, &pr, &cfg, None).unwrap();
        assert_eq!(rec.snapshots.len(), 2);
        let times: Vec<f64> = rec.samples.iter().map(|s| s.t).collect();
        assert_eq!(times.len(), 4);
        assert!((times[2] - 0.01 * 10f64.sqrt()).abs() < 1e-15);
    }
}
