//! Closed-form zero-dissipation steady states.
//!
//! On each component of its positivity set a steady state solves
//! `u_xx + α²u + cos x = λ` with `u = u_x = 0` at the contact points. Even
//! solutions are `u⁰(x) + A cos(αx) + const`, where `u⁰` is the particular
//! solution below; the contact conditions fix `A` and the constant.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::banded::CyclicBanded;
use crate::error::{Error, Result};
use crate::functionals::{self, ExactProfile};
use crate::grid::{fmt17, Field, PeriodicGrid};

/// α within this distance of 1 uses the resonant particular solution.
pub const ALPHA_ONE_TOL: f64 = 1e-9;

/// Smallest |sin(α(π−τ))| accepted for a sitting drop.
pub const RESONANCE_TOL: f64 = 1e-8;

fn is_alpha_one(alpha: f64) -> bool {
    (alpha - 1.0).abs() < ALPHA_ONE_TOL
}

/// Particular solution u⁰ of u_xx + α²u + cos x = 0 and its first two derivatives.
pub fn particular_solution(alpha: f64, x: f64) -> (f64, f64, f64) {
    let (s, c) = x.sin_cos();
    if is_alpha_one(alpha) {
        (-0.5 * x * s, -0.5 * (s + x * c), -c + 0.5 * x * s)
    } else {
        let k = 1.0 / (1.0 - alpha * alpha);
        (k * c, -k * s, -k * c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Support (−τ, τ), dry region at the top of the cylinder.
    Hanging,
    /// Support (τ, 2π−τ), dry region at the bottom; only for α > 1.
    Sitting,
}

/// Symmetric droplet with zero contact angle at ±τ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropletProfile {
    pub branch: Branch,
    pub alpha: f64,
    pub tau: f64,
    /// Coefficient of the homogeneous cosine.
    pub a: f64,
    pub lambda: f64,
    pub mass: f64,
}

/// Upper end of the admissible contact-point interval of hanging drops.
pub fn hanging_tau_max(alpha: f64) -> f64 {
    PI / alpha.max(1.0)
}

pub fn hanging_drop(alpha: f64, tau: f64) -> Result<DropletProfile> {
    check_alpha(alpha)?;
    let max = hanging_tau_max(alpha);
    if !(tau > 0.0 && tau < max) {
        return Err(Error::TauOutOfRange { tau, max });
    }
    let (u0, u0x, _) = particular_solution(alpha, tau);
    let a = u0x / (alpha * (alpha * tau).sin());
    let lambda = -alpha * alpha * (a * (alpha * tau).cos() + u0);
    let mut p = DropletProfile { branch: Branch::Hanging, alpha, tau, a, lambda, mass: 0.0 };
    p.mass = functionals::profile_mass(&p);
    Ok(p)
}

/// Drop centred at x = π with dry set [−τ, τ].
///
/// In the local coordinate s = x − π (mod 2π) the profile is
/// u⁰(x) + A cos(αs) − u⁰(τ) − A cos(α(π−τ)), with A fixed by u_x(τ) = 0.
pub fn sitting_drop(alpha: f64, tau: f64) -> Result<DropletProfile> {
    check_alpha(alpha)?;
    if alpha <= 1.0 {
        return Err(Error::SittingDropAlpha(alpha));
    }
    if !(tau > 0.0 && tau < PI) {
        return Err(Error::TauOutOfRange { tau, max: PI });
    }
    let half = PI - tau;
    let s = (alpha * half).sin();
    if s.abs() < RESONANCE_TOL {
        return Err(Error::Resonant(s.abs()));
    }
    let (u0, u0x, _) = particular_solution(alpha, tau);
    let a = -u0x / (alpha * s);
    let lambda = -alpha * alpha * (u0 + a * (alpha * half).cos());
    let mut p = DropletProfile { branch: Branch::Sitting, alpha, tau, a, lambda, mass: 0.0 };
    p.mass = functionals::profile_mass(&p);
    Ok(p)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be > 0 (got {alpha})")));
    }
    Ok(())
}

/// Map x ∈ ℝ to [−π, π).
pub fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl DropletProfile {
    /// Local coordinate centred on the drop.
    fn local(&self, x: f64) -> f64 {
        let x = wrap(x);
        match self.branch {
            Branch::Hanging => x,
            Branch::Sitting => {
                if x >= 0.0 {
                    x - PI
                } else {
                    x + PI
                }
            }
        }
    }

    pub fn half_width(&self) -> f64 {
        match self.branch {
            Branch::Hanging => self.tau,
            Branch::Sitting => PI - self.tau,
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        self.local(x).abs() < self.half_width()
    }

    fn boundary_constant(&self) -> f64 {
        let (u0, _, _) = particular_solution(self.alpha, self.tau);
        u0 + self.a * (self.alpha * self.half_width()).cos()
    }

    /// (u, u_x, u_xx) from the formula, continued outside the support.
    pub fn formula(&self, x: f64) -> (f64, f64, f64) {
        let s = self.local(x);
        let x = wrap(x);
        let (u0, u0x, u0xx) = particular_solution(self.alpha, x);
        let (sn, cs) = (self.alpha * s).sin_cos();
        let a = self.alpha;
        (
            u0 + self.a * cs - self.boundary_constant(),
            u0x - self.a * a * sn,
            u0xx - self.a * a * a * cs,
        )
    }

    /// One-sided second derivative at the contact point from inside the support.
    pub fn contact_curvature(&self) -> f64 {
        let x = match self.branch {
            Branch::Hanging => self.tau,
            Branch::Sitting => -self.tau,
        };
        self.formula(x).2
    }

    pub fn curvature(&self, x: f64) -> f64 {
        if self.in_support(x) {
            self.formula(x).2
        } else {
            0.0
        }
    }

    /// Minimum of the profile over its support (sampled), used to filter
    /// constructible but sign-changing solutions.
    pub fn min_on_support(&self) -> f64 {
        let w = self.half_width();
        let centre = match self.branch {
            Branch::Hanging => 0.0,
            Branch::Sitting => PI,
        };
        (1..400)
            .map(|k| self.formula(centre - w + 2.0 * w * k as f64 / 400.0).0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Nonnegative with strictly positive curvature at the contact points.
    pub fn is_admissible(&self) -> bool {
        self.min_on_support() > 0.0 && self.contact_curvature() > 0.0
    }

    pub fn energy(&self) -> f64 {
        functionals::profile_energy(self, self.alpha)
    }

    pub fn evaluate(&self, grid: &PeriodicGrid) -> Field {
        grid.sample(|x| self.value(x))
    }
}

impl ExactProfile for DropletProfile {
    fn value(&self, x: f64) -> f64 {
        if self.in_support(x) {
            self.formula(x).0
        } else {
            0.0
        }
    }

    fn slope(&self, x: f64) -> f64 {
        if self.in_support(x) {
            self.formula(x).1
        } else {
            0.0
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![-self.tau, self.tau]
    }

    fn is_dry(&self, x: f64) -> bool {
        !self.in_support(x)
    }
}

/// Droplet mass M(τ) on the given branch.
pub fn mass_of_tau(alpha: f64, tau: f64, branch: Branch) -> Result<f64> {
    Ok(match branch {
        Branch::Hanging => hanging_drop(alpha, tau)?.mass,
        Branch::Sitting => sitting_drop(alpha, tau)?.mass,
    })
}

/// Inverse of the hanging-drop mass map by bisection, with a Newton polish.
pub fn tau_from_mass(alpha: f64, mass: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let lo = 1e-8;
    let hi = hanging_tau_max(alpha) - 1e-8;
    let m_lo = mass_of_tau(alpha, lo, Branch::Hanging)?;
    let m_hi = mass_of_tau(alpha, hi, Branch::Hanging)?;
    if !(mass > m_lo && mass < m_hi) {
        return Err(Error::MassOutOfRange { mass, lo: m_lo, hi: m_hi });
    }
    let tol = 1e-12 * (1.0 + mass);
    let f = |t: f64| mass_of_tau(alpha, t, Branch::Hanging).map(|m| m - mass);
    invert_monotone(f, lo, hi, tol)
}

/// Root of an increasing function on [lo, hi] with f(lo) < 0 < f(hi).
fn invert_monotone(f: impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut best = (f64::INFINITY, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid)?;
        if v.abs() < best.0 {
            best = (v.abs(), mid);
        }
        if v.abs() <= tol {
            break;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Newton polish with a centred-difference slope, kept inside the bracket.
    let (mut err, mut t) = best;
    for _ in 0..3 {
        if err <= 0.01 * tol {
            break;
        }
        let step = 1e-6 * t.max(1e-6);
        let slope = (f(t + step)? - f(t - step)?) / (2.0 * step);
        let v = f(t)?;
        let next = t - v / slope;
        if !(next > lo && next < hi) || !slope.is_finite() || slope <= 0.0 {
            break;
        }
        let e = f(next)?.abs();
        if e >= err {
            break;
        }
        t = next;
        err = e;
    }
    Ok(t)
}

/// Positive film M/(2π) + cos x/(1−α²) + A cos kx + B sin kx; the (A, B) term
/// is only a solution for integer α = k > 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothFilm {
    pub alpha: f64,
    pub mass: f64,
    pub a: f64,
    pub b: f64,
}

impl SmoothFilm {
    pub fn symmetric(alpha: f64, mass: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if is_alpha_one(alpha) {
            return Err(Error::InvalidParameter("no smooth film exists for α = 1".into()));
        }
        Ok(Self { alpha, mass, a: 0.0, b: 0.0 })
    }

    /// Non-symmetric film for integer α = k > 1; must stay nonnegative.
    pub fn nonsymmetric(k: u32, mass: f64, a: f64, b: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("non-symmetric films need integer α ≥ 2 (got {k})")));
        }
        let f = Self { alpha: k as f64, mass, a, b };
        if f.min_value() < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "film with A={a}, B={b} is negative somewhere; mass {mass} too small"
            )));
        }
        Ok(f)
    }

    pub fn mean(&self) -> f64 {
        self.mass / (2.0 * PI)
    }

    pub fn amplitude(&self) -> f64 {
        1.0 / (1.0 - self.alpha * self.alpha)
    }

    pub fn lambda(&self) -> f64 {
        self.alpha * self.alpha * self.mean()
    }

    fn derivs(&self, x: f64) -> (f64, f64, f64) {
        let (s, c) = x.sin_cos();
        let k = self.alpha;
        let (sk, ck) = (k * x).sin_cos();
        let amp = self.amplitude();
        (
            self.mean() + amp * c + self.a * ck + self.b * sk,
            -amp * s - k * self.a * sk + k * self.b * ck,
            -amp * c - k * k * (self.a * ck + self.b * sk),
        )
    }

    pub fn min_value(&self) -> f64 {
        (0..2000)
            .map(|i| self.derivs(-PI + 2.0 * PI * i as f64 / 2000.0).0)
            .fold(f64::INFINITY, f64::min)
    }
}

impl ExactProfile for SmoothFilm {
    fn value(&self, x: f64) -> f64 {
        self.derivs(x).0
    }
    fn slope(&self, x: f64) -> f64 {
        self.derivs(x).1
    }
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
    fn is_dry(&self, _x: f64) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    SmoothFilm,
    HangingDrop,
    SittingDrop,
    TwoDroplet,
}

impl Kind {
    pub fn name(&self) -> &'static str {
        match self {
            Kind::SmoothFilm => "smooth_film",
            Kind::HangingDrop => "hanging_drop",
            Kind::SittingDrop => "sitting_drop",
            Kind::TwoDroplet => "two_droplet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    Film(SmoothFilm),
    Drop(DropletProfile),
}

impl Component {
    pub fn lambda(&self) -> f64 {
        match self {
            Component::Film(f) => f.lambda(),
            Component::Drop(d) => d.lambda,
        }
    }

    fn in_support(&self, x: f64) -> bool {
        match self {
            Component::Film(_) => true,
            Component::Drop(d) => d.in_support(x),
        }
    }

    fn derivs(&self, x: f64) -> (f64, f64, f64) {
        match self {
            Component::Film(f) => f.derivs(x),
            Component::Drop(d) if d.in_support(x) => d.formula(x),
            Component::Drop(_) => (0.0, 0.0, 0.0),
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            Component::Film(f) => f.mass,
            Component::Drop(d) => d.mass,
        }
    }
}

/// Zero-dissipation steady state: one film, one drop, or a hanging plus a
/// sitting drop with disjoint supports.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub kind: Kind,
    pub alpha: f64,
    pub components: Vec<Component>,
    pub energy: f64,
    pub is_minimizer: bool,
}

impl SteadyState {
    fn new(kind: Kind, alpha: f64, components: Vec<Component>, is_minimizer: bool) -> Self {
        let mut s = Self { kind, alpha, components, energy: 0.0, is_minimizer };
        s.energy = functionals::profile_energy(&s, alpha);
        s
    }

    pub fn film(film: SmoothFilm, is_minimizer: bool) -> Self {
        Self::new(Kind::SmoothFilm, film.alpha, vec![Component::Film(film)], is_minimizer)
    }

    pub fn drop(d: DropletProfile, is_minimizer: bool) -> Self {
        let kind = match d.branch {
            Branch::Hanging => Kind::HangingDrop,
            Branch::Sitting => Kind::SittingDrop,
        };
        Self::new(kind, d.alpha, vec![Component::Drop(d)], is_minimizer)
    }

    pub fn two_droplet(hanging: DropletProfile, sitting: DropletProfile) -> Self {
        Self::new(
            Kind::TwoDroplet,
            hanging.alpha,
            vec![Component::Drop(hanging), Component::Drop(sitting)],
            false,
        )
    }

    pub fn mass(&self) -> f64 {
        self.components.iter().map(Component::mass).sum()
    }

    /// Multiplier of the first component (the only one unless two-droplet).
    pub fn lambda(&self) -> f64 {
        self.components[0].lambda()
    }

    pub fn droplet(&self) -> Option<&DropletProfile> {
        self.components.iter().find_map(|c| match c {
            Component::Drop(d) => Some(d),
            _ => None,
        })
    }

    pub fn evaluate(&self, grid: &PeriodicGrid) -> Field {
        grid.sample(|x| self.value(x))
    }

    fn component_at(&self, x: f64) -> Option<&Component> {
        self.components.iter().find(|c| c.in_support(x))
    }

    /// Minimum of the state's profile.
    pub fn min_value(&self) -> f64 {
        self.components
            .iter()
            .map(|c| match c {
                Component::Film(f) => f.min_value(),
                Component::Drop(_) => 0.0,
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// The CSV row for the catalog table.
    pub fn csv_row(&self) -> String {
        let drops: Vec<&DropletProfile> = self
            .components
            .iter()
            .filter_map(|c| match c {
                Component::Drop(d) => Some(d),
                _ => None,
            })
            .collect();
        let field = |i: usize, f: fn(&DropletProfile) -> f64| drops.get(i).map_or(f64::NAN, |d| f(d));
        let (mass1, lambda1) = match self.components[0] {
            Component::Film(f) => (f.mass, f.lambda()),
            Component::Drop(d) => (d.mass, d.lambda),
        };
        let cols = [
            field(0, |d| d.tau),
            field(1, |d| d.tau),
            mass1,
            self.components.get(1).map_or(f64::NAN, Component::mass),
            lambda1,
            self.components.get(1).map_or(f64::NAN, Component::lambda),
            self.energy,
        ];
        let mut s = String::from(self.kind.name());
        for v in cols {
            let _ = write!(s, ",{}", fmt17(v));
        }
        let _ = write!(s, ",{}", self.is_minimizer);
        s
    }
}

impl ExactProfile for SteadyState {
    fn value(&self, x: f64) -> f64 {
        self.component_at(x).map_or(0.0, |c| c.derivs(x).0)
    }
    fn slope(&self, x: f64) -> f64 {
        self.component_at(x).map_or(0.0, |c| c.derivs(x).1)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.components
            .iter()
            .flat_map(|c| match c {
                Component::Film(_) => Vec::new(),
                Component::Drop(d) => d.breakpoints(),
            })
            .collect()
    }
    fn is_dry(&self, x: f64) -> bool {
        self.component_at(x).is_none()
    }
}

/// True when the minimizer of mass M is the strictly positive smooth film.
pub fn minimizer_is_film(alpha: f64, mass: f64) -> bool {
    alpha < 1.0 && !is_alpha_one(alpha) && mass * (1.0 - alpha * alpha) >= 2.0 * PI
}

/// The unique nonnegative energy minimizer of mass M.
pub fn minimizer(alpha: f64, mass: f64) -> Result<SteadyState> {
    check_alpha(alpha)?;
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::InvalidParameter(format!("mass must be > 0 (got {mass})")));
    }
    if minimizer_is_film(alpha, mass) {
        return Ok(SteadyState::film(SmoothFilm::symmetric(alpha, mass)?, true));
    }
    let tau = tau_from_mass(alpha, mass)?;
    Ok(SteadyState::drop(hanging_drop(alpha, tau)?, true))
}

/// Admissible sitting drops on a fixed τ scan; reused for every mass at one α.
#[derive(Debug, Clone)]
pub struct SittingBranch {
    alpha: f64,
    scan: Vec<(f64, Option<DropletProfile>)>,
}

impl SittingBranch {
    const SCAN: usize = 400;

    pub fn new(alpha: f64) -> Self {
        let scan = if alpha > 1.0 {
            (1..Self::SCAN)
                .map(|k| {
                    let t = PI * k as f64 / Self::SCAN as f64;
                    (t, sitting_drop(alpha, t).ok().filter(DropletProfile::is_admissible))
                })
                .collect()
        } else {
            Vec::new()
        };
        Self { alpha, scan }
    }

    /// Nonnegative sitting drops of mass M: bisection in every bracketing
    /// interval of admissible scan points.
    pub fn drops_of_mass(&self, mass: f64) -> Vec<DropletProfile> {
        let alpha = self.alpha;
        let mut found = Vec::new();
        for w in self.scan.windows(2) {
            let ((ta, Some(a)), (tb, Some(b))) = (w[0], w[1]) else { continue };
            let (ma, mb) = (a.mass - mass, b.mass - mass);
            if ma * mb > 0.0 {
                continue;
            }
            let sign = if mb > ma { 1.0 } else { -1.0 };
            let f = |t: f64| sitting_drop(alpha, t).map(|d| sign * (d.mass - mass));
            let tol = 1e-12 * (1.0 + mass);
            if let Ok(t) = invert_monotone(f, ta, tb, tol) {
                if let Ok(d) = sitting_drop(alpha, t) {
                    if d.is_admissible() && (d.mass - mass).abs() <= 1e-9 * (1.0 + mass) {
                        found.push(d);
                    }
                }
            }
        }
        found
    }
}

/// Nonnegative sitting drops of mass M (none for α ≤ 1).
pub fn sitting_drops_of_mass(alpha: f64, mass: f64) -> Vec<DropletProfile> {
    SittingBranch::new(alpha).drops_of_mass(mass)
}

/// Nonnegative hanging drop of mass m (not necessarily the minimizer when α<1).
fn hanging_drop_of_mass(alpha: f64, m: f64) -> Option<DropletProfile> {
    tau_from_mass(alpha, m).ok().and_then(|t| hanging_drop(alpha, t).ok())
}

/// Default number of two-droplet mass splits.
pub const DEFAULT_SPLITS: usize = 9;

/// Every constructible zero-dissipation steady state of mass M.
pub fn catalog(alpha: f64, mass: f64, splits: usize) -> Result<Vec<SteadyState>> {
    catalog_on(&SittingBranch::new(alpha), mass, splits)
}

/// As [`catalog`], with a precomputed sitting branch.
pub fn catalog_on(branch: &SittingBranch, mass: f64, splits: usize) -> Result<Vec<SteadyState>> {
    let alpha = branch.alpha;
    let mut out = vec![minimizer(alpha, mass)?];
    if alpha <= 1.0 || is_alpha_one(alpha) {
        return Ok(out);
    }
    for d in branch.drops_of_mass(mass) {
        out.push(SteadyState::drop(d, false));
    }
    if mass * (alpha * alpha - 1.0) >= 2.0 * PI {
        out.push(SteadyState::film(SmoothFilm::symmetric(alpha, mass)?, false));
    }
    for k in 1..=splits {
        let m = mass * k as f64 / (splits + 1) as f64;
        let Some(h) = hanging_drop_of_mass(alpha, m) else { continue };
        for s in branch.drops_of_mass(mass - m) {
            if h.tau < s.tau {
                out.push(SteadyState::two_droplet(h, s));
            }
        }
    }
    Ok(out)
}

pub const CATALOG_HEADER: &str = "kind,tau1,tau2,mass1,mass2,lambda1,lambda2,energy,is_minimizer";

pub fn catalog_to_csv(states: &[SteadyState]) -> String {
    let mut s = String::from(CATALOG_HEADER);
    s.push('\n');
    for st in states {
        let _ = writeln!(s, "{}", st.csv_row());
    }
    s
}

/// sup over interior wet nodes (≥ 3h from any contact point) of
/// |u_xx + α²u + cos x − λ|, using the exact second derivative.
pub fn el_residual(state: &SteadyState, grid: &PeriodicGrid) -> f64 {
    let h = grid.spacing();
    let alpha = state.alpha;
    let contacts = state.breakpoints();
    grid.nodes()
        .filter(|&x| contacts.iter().all(|&c| wrap(x - c).abs() >= 3.0 * h))
        .filter_map(|x| {
            let comp = state.component_at(x)?;
            let (u, _, uxx) = comp.derivs(x);
            Some((uxx + alpha * alpha * u + x.cos() - comp.lambda()).abs())
        })
        .fold(0.0, f64::max)
}

/// Both contact points share cos τ and the profile is even to 1e−12.
pub fn symmetry_roots_check(profile: &DropletProfile) -> bool {
    let roots_agree = ((-profile.tau).cos() - profile.tau.cos()).abs() <= 1e-15;
    roots_agree && profile_asymmetry(profile) <= 1e-12
}

/// max_x |u(x) − u(−x)| over 1000 points in (0, π).
pub fn profile_asymmetry(p: &impl ExactProfile) -> f64 {
    (1..1000)
        .map(|k| {
            let x = PI * k as f64 / 1000.0;
            (p.value(x) - p.value(-x)).abs()
        })
        .fold(0.0, f64::max)
}

/// max_i |u(x_i) − u(−x_i)| on the grid (node i mirrors node N−i).
pub fn field_asymmetry(u: &Field) -> f64 {
    let v = u.values();
    let n = v.len();
    (1..n).map(|i| (v[i] - v[n - i]).abs()).fold(0.0, f64::max)
}

/// Minimizer of the stencil energy h·Σ[½((u_{i+1}−u_i)/h)² − ½α²u_i² − u_i cos x_i]
/// over nonnegative grid functions of mass M.
///
/// This is the exact steady state of the implicit scheme (pressure constant on
/// the wet nodes). Solved by an active-set iteration started from the wet set
/// of the continuum minimizer.
pub fn discrete_minimizer(alpha: f64, mass: f64, grid: &PeriodicGrid) -> Result<(Field, f64)> {
    let cont = minimizer(alpha, mass)?.evaluate(grid);
    let mut wet: Vec<bool> = cont.values().iter().map(|&v| v > 0.0).collect();
    let n = grid.len();
    let h = grid.spacing();
    let a2 = alpha * alpha;
    for _ in 0..4 * n {
        let mut mat = CyclicBanded::zeros(n, 1);
        let mut rhs = vec![0.0; n];
        let mut ones = vec![0.0; n];
        for i in 0..n {
            if wet[i] {
                mat.add(i, -1, 1.0 / (h * h));
                mat.add(i, 0, -2.0 / (h * h) + a2);
                mat.add(i, 1, 1.0 / (h * h));
                rhs[i] = -grid.node(i).cos();
                ones[i] = 1.0;
            } else {
                mat.add(i, 0, 1.0);
            }
        }
        let base = mat.solve(&rhs)?;
        let unit = mat.solve(&ones)?;
        let lambda = (mass / h - base.iter().sum::<f64>()) / unit.iter().sum::<f64>();
        let u: Vec<f64> = (0..n).map(|i| if wet[i] { base[i] + lambda * unit[i] } else { 0.0 }).collect();

        let pressure = |i: usize| {
            (u[(i + n - 1) % n] - 2.0 * u[i] + u[(i + 1) % n]) / (h * h) + a2 * u[i] + grid.node(i).cos()
        };
        let mut changed = false;
        // Drop the most negative wet node first, else wake the dry node with
        // the largest pressure excess.
        let worst_wet = (0..n).filter(|&i| wet[i] && u[i] < 0.0).min_by(|&a, &b| u[a].total_cmp(&u[b]));
        if let Some(i) = worst_wet {
            wet[i] = false;
            wet[(n - i) % n] = false;
            changed = true;
        } else {
            let tol = 1e-12 * (1.0 + lambda.abs());
            let wake = (0..n)
                .filter(|&i| !wet[i] && pressure(i) > lambda + tol)
                .max_by(|&a, &b| pressure(a).total_cmp(&pressure(b)));
            if let Some(i) = wake {
                wet[i] = true;
                wet[(n - i) % n] = true;
                changed = true;
            }
        }
        if !changed {
            return Ok((Field::new(*grid, u)?, lambda));
        }
    }
    Err(Error::InvalidParameter("active-set iteration for the discrete minimizer did not settle".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn particular_solution_values() {
        assert_abs_diff_eq!(particular_solution(1.0, PI / 2.0).0, -PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(particular_solution(0.5, 0.0).0, 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(particular_solution(2.0, PI).0, 1.0 / 3.0, epsilon = 1e-15);
        // near-one α routes to the resonant formula
        assert_eq!(particular_solution(1.0 + 1e-10, 0.7), particular_solution(1.0, 0.7));
    }

    #[test]
    fn hanging_drop_hand_value() {
        let d = hanging_drop(1.0, PI / 2.0).unwrap();
        assert_abs_diff_eq!(d.a, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.value(0.0), PI / 4.0 - 0.5, epsilon = 1e-14);
    }

    #[test]
    fn contact_conditions_hold() {
        for (alpha, tau) in [(0.5, 1.0), (0.5, 3.0), (1.0, 2.0), (1.0, 3.1), (2f64.sqrt(), 2.0), (2.0, 1.5)] {
            let d = hanging_drop(alpha, tau).unwrap();
            for x in [-tau, tau] {
                let (u, ux, _) = d.formula(x);
                assert!(u.abs() <= 1e-12 && ux.abs() <= 1e-12, "α={alpha} τ={tau}: {u} {ux}");
            }
            assert!(d.contact_curvature() > 0.0);
            assert!(d.lambda > tau.cos());
        }
    }

    #[test]
    fn tau_range_is_enforced() {
        assert!(matches!(hanging_drop(2.0, 1.6), Err(Error::TauOutOfRange { .. })));
        assert!(hanging_drop(1.0, PI).is_err());
        assert!(hanging_drop(1.0, 0.0).is_err());
    }

    #[test]
    fn sitting_drop_errors_and_contacts() {
        let err = sitting_drop(1.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("sitting drops require α>1"));
        let a = 2f64.sqrt();
        assert!(matches!(sitting_drop(a, PI - PI / a), Err(Error::Resonant(_))));
        let d = sitting_drop(a, 1.0).unwrap();
        for x in [-1.0, 1.0] {
            let (u, ux, _) = d.formula(x);
            assert!(u.abs() <= 1e-12 && ux.abs() <= 1e-12);
        }
        assert!(symmetry_roots_check(&d));
        // τ = 1 lies past the resonance: constructible but not a nonnegative film
        assert!(!d.is_admissible());
        let d = sitting_drop(a, 0.5).unwrap();
        assert!(d.is_admissible());
    }

    #[test]
    fn symmetry_and_perturbed_residual() {
        let d = hanging_drop(1.0, 2.0).unwrap();
        assert!(symmetry_roots_check(&d));
        let grid = PeriodicGrid::new(256).unwrap();
        let s = SteadyState::drop(d, false);
        assert!(el_residual(&s, &grid) <= 1e-10);
        let mut bad = d;
        bad.a += 0.01;
        let s = SteadyState::drop(bad, false);
        assert!(el_residual(&s, &grid) > 1e-3);
    }

    #[test]
    fn minimizer_branching() {
        let film = minimizer(0.5, 4.0 * 2.0 * PI / 3.0).unwrap();
        assert_eq!(film.kind, Kind::SmoothFilm);
        assert_abs_diff_eq!(film.value(PI), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(film.value(-PI), 0.0, epsilon = 1e-14);
        let d = minimizer(1.0, 2.0 * PI).unwrap();
        assert_eq!(d.kind, Kind::HangingDrop);
        assert!(d.is_minimizer);
        let s = minimizer(0.5, 20.0).unwrap();
        assert!(el_residual(&s, &PeriodicGrid::new(64).unwrap()) <= 1e-10);
        assert_abs_diff_eq!(s.lambda(), 0.25 * 20.0 / (2.0 * PI), epsilon = 1e-15);
    }

    #[test]
    fn catalog_counts() {
        assert_eq!(catalog(1.0, 3.0, DEFAULT_SPLITS).unwrap().len(), 1);
        let a = 2f64.sqrt();
        let small = catalog(a, 3.0, DEFAULT_SPLITS).unwrap();
        assert_eq!(small.len(), 1);
        assert_eq!(small[0].kind, Kind::HangingDrop);
        let big = catalog(a, 10.0, DEFAULT_SPLITS).unwrap();
        assert!(big.len() >= 2);
        let emin = big[0].energy;
        assert!(big[1..].iter().all(|s| s.energy > emin));
        for s in &big {
            assert_abs_diff_eq!(s.mass(), 10.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn catalog_csv_shape() {
        let states = catalog(2f64.sqrt(), 10.0, 3).unwrap();
        let text = catalog_to_csv(&states);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CATALOG_HEADER));
        for l in lines {
            assert_eq!(l.split(',').count(), 9);
        }
    }

    #[test]
    fn discrete_minimizer_is_stencil_steady() {
        let grid = PeriodicGrid::new(128).unwrap();
        let (u, lambda) = discrete_minimizer(1.0, 2.0 * PI, &grid).unwrap();
        assert_abs_diff_eq!(u.mass(), 2.0 * PI, epsilon = 1e-11);
        assert!(u.min() >= 0.0);
        let v = u.values();
        let n = v.len();
        let h = grid.spacing();
        for i in 0..n {
            if v[i] > 0.0 {
                let p = (v[(i + n - 1) % n] - 2.0 * v[i] + v[(i + 1) % n]) / (h * h) + v[i] + grid.node(i).cos();
                assert!((p - lambda).abs() < 1e-8, "node {i}: {p} vs {lambda}");
            }
        }
        let cont = minimizer(1.0, 2.0 * PI).unwrap().evaluate(&grid);
        assert!(crate::grid::linf_distance(&u, &cont).unwrap() < 1e-2);
    }
}
