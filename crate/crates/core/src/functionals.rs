//! Energy, dissipation and entropy functionals, plus the closed-form bounds
//! that serve as oracles for the steady-state and evolution code.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{self, fmt17, Field, Spectrum};
use crate::quadrature;

/// Model parameters: mobility exponent n, geometric constant α, mass M, regularization ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub n: f64,
    pub alpha: f64,
    pub mass: f64,
    pub eps: f64,
}

impl Params {
    pub fn new(n: f64, alpha: f64, mass: f64, eps: f64) -> Result<Self> {
        let p = Self { n, alpha, mass, eps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.n) {
            return Err(Error::InvalidParameter(format!("n must be > 0 (got {})", self.n)));
        }
        if !ok(self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0 (got {})", self.alpha)));
        }
        if !ok(self.mass) {
            return Err(Error::InvalidParameter(format!("mass must be > 0 (got {})", self.mass)));
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be ≥ 0 (got {})", self.eps)));
        }
        Ok(())
    }

    /// Regularized mobility f_ε(z) = max(z,0)ⁿ + ε.
    pub fn mobility(&self, z: f64) -> f64 {
        z.max(0.0).powf(self.n) + self.eps
    }
}

/// E(u) = ½∫(u_x² − α²u²) − ∫u cos x, spectral derivative plus trapezoid rule.
pub fn energy(u: &Field, alpha: f64) -> f64 {
    let ux = grid::derivative(u, 1).expect("order 1 is valid");
    let h = u.grid().spacing();
    u.values()
        .iter()
        .zip(ux.values())
        .zip(u.grid().nodes())
        .map(|((&v, &dv), x)| 0.5 * (dv * dv - alpha * alpha * v * v) - v * x.cos())
        .sum::<f64>()
        * h
}

/// The same energy assembled from Fourier coefficients:
/// π·Σ_{p≠0}(p²−α²)|û(p)|² − α²M²/(4π) − π(û(1)+û(−1)).
///
/// The Nyquist mode carries no derivative (as in [`grid::derivative`]) and only
/// contributes to the −α² term.
pub fn energy_fourier(u: &Field, alpha: f64, mass: f64) -> Result<f64> {
    let m = u.mass();
    if (m - mass).abs() > 1e-10 * (1.0 + mass.abs()) {
        return Err(Error::MassMismatch { field: m, expected: mass });
    }
    let spec = Spectrum::of(u);
    let a2 = alpha * alpha;
    let quad: f64 = spec
        .resolved()
        .filter(|(p, _)| *p != 0)
        .map(|(p, c)| ((p * p) as f64 - a2) * c.norm_sqr())
        .sum();
    let nyq = -a2 * spec.nyquist().norm_sqr();
    let linear = (spec.coeff(1)? + spec.coeff(-1)?).re;
    Ok(PI * (quad + nyq) - a2 * mass * mass / (4.0 * PI) - PI * linear)
}

/// Discrete energy matching the evolution stencils:
/// h·Σ[½((u_{i+1}−u_i)/h)² − ½α²u_i² − u_i cos x_i].
///
/// Its gradient is −h times the stencil pressure, so the implicit scheme is a
/// discrete gradient flow of this functional.
pub fn energy_discrete(u: &Field, alpha: f64) -> f64 {
    let h = u.grid().spacing();
    let v = u.values();
    let n = v.len();
    (0..n)
        .map(|i| {
            let d = (v[(i + 1) % n] - v[i]) / h;
            0.5 * (d * d - alpha * alpha * v[i] * v[i]) - v[i] * u.grid().node(i).cos()
        })
        .sum::<f64>()
        * h
}

/// Positivity threshold used by [`dissipation`] when none is given.
pub fn default_delta(u: &Field) -> f64 {
    1e-7 * u.max().max(0.0)
}

/// Nodes excluded around the dry set.
const DRY_BUFFER: usize = 3;

/// D(u) = ∫_{u>δ} uⁿ (u_xxx + α²u_x − sin x)².
///
/// Without dry nodes the derivatives are spectral. When some nodes satisfy
/// u ≤ δ, the integrand is evaluated only at nodes at least three cells from
/// the dry set, with centered seven-point stencils that never reach across the
/// contact point.
pub fn dissipation(u: &Field, params: &Params, delta: f64) -> f64 {
    let g = u.grid();
    let n = g.len();
    let h = g.spacing();
    let a2 = params.alpha * params.alpha;
    let v = u.values();
    let wet: Vec<bool> = v.iter().map(|&x| x > delta).collect();
    let integrand = |i: usize, ux: f64, uxxx: f64| {
        let r = uxxx + a2 * ux - g.node(i).sin();
        v[i].max(0.0).powf(params.n) * r * r
    };

    if wet.iter().all(|&w| w) {
        let ux = grid::derivative(u, 1).expect("valid order");
        let uxxx = grid::derivative(u, 3).expect("valid order");
        return h * (0..n).map(|i| integrand(i, ux.values()[i], uxxx.values()[i])).sum::<f64>();
    }

    let at = |i: usize, k: isize| v[(i as isize + k).rem_euclid(n as isize) as usize];
    // sixth-order first derivative, fourth-order third derivative
    const D1: [f64; 7] = [-1.0 / 60.0, 3.0 / 20.0, -3.0 / 4.0, 0.0, 3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
    const D3: [f64; 7] = [1.0 / 8.0, -1.0, 13.0 / 8.0, 0.0, -13.0 / 8.0, 1.0, -1.0 / 8.0];
    let buffered = |i: usize| {
        (-(DRY_BUFFER as isize)..=DRY_BUFFER as isize)
            .all(|k| wet[(i as isize + k).rem_euclid(n as isize) as usize])
    };
    h * (0..n)
        .filter(|&i| buffered(i))
        .map(|i| {
            let mut ux = 0.0;
            let mut uxxx = 0.0;
            for (j, k) in (-3..=3).enumerate() {
                ux += D1[j] * at(i, k);
                uxxx += D3[j] * at(i, k);
            }
            integrand(i, ux / h, uxxx / (h * h * h))
        })
        .sum::<f64>()
}

/// Entropy value with an explicit infinity flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entropy {
    /// h·Σ max(u_i, floor)^{−β}
    pub value: f64,
    /// Some node had u_i ≤ floor, so the continuum entropy is infinite.
    pub infinite: bool,
}

/// Default floor: the clamp at which u^{−β} reaches 1e300.
pub fn default_entropy_floor(beta: f64) -> f64 {
    1e-300f64.powf(1.0 / beta)
}

/// S_β(u) = ∫u^{−β}, clamped from below at `floor`.
pub fn entropy(u: &Field, beta: f64, floor: f64) -> Result<Entropy> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("entropy exponent must be > 0 (got {beta})")));
    }
    if !(floor > 0.0) {
        return Err(Error::InvalidParameter(format!("entropy floor must be > 0 (got {floor})")));
    }
    let mut infinite = false;
    let sum: f64 = u
        .values()
        .iter()
        .map(|&v| {
            if v <= floor {
                infinite = true;
            }
            v.max(floor).powf(-beta)
        })
        .sum();
    Ok(Entropy { value: u.grid().spacing() * sum, infinite })
}

/// Lower bound on E over nonnegative functions of mass M:
/// −α⁴πM²/8 − (1 + α²/(4π))M.
pub fn energy_lower_bound(mass: f64, alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    -a2 * a2 * PI * mass * mass / 8.0 - (1.0 + a2 / (4.0 * PI)) * mass
}

/// Explicit coercivity d_{H¹}(u,u*) ≤ (2ΔE/(1−α²))^{1/2}, available for α < 1 only.
pub fn coercivity_bound(delta_e: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "explicit coercivity constant needs 0 < α < 1 (got {alpha})"
        )));
    }
    if delta_e < 0.0 {
        return Err(Error::InvalidParameter(format!("energy gap must be ≥ 0 (got {delta_e})")));
    }
    Ok((2.0 * delta_e / (1.0 - alpha * alpha)).sqrt())
}

/// A steady profile known in closed form on [−π, π).
pub trait ExactProfile {
    fn value(&self, x: f64) -> f64;
    fn slope(&self, x: f64) -> f64;
    /// Points in (−π, π) where the profile is only C^{1,1}.
    fn breakpoints(&self) -> Vec<f64>;
    /// x lies in the zero set Z(u).
    fn is_dry(&self, x: f64) -> bool;
}

/// ∫_{−π}^{π} f, split at the profile's breakpoints.
pub fn integrate_piecewise(profile: &impl ExactProfile, mut f: impl FnMut(f64) -> f64) -> f64 {
    let mut cuts = vec![-PI];
    let mut bp = profile.breakpoints();
    bp.sort_by(f64::total_cmp);
    cuts.extend(bp.into_iter().filter(|&b| b > -PI && b < PI));
    cuts.push(PI);
    cuts.windows(2).map(|w| quadrature::integrate(w[0], w[1], &mut f)).sum()
}

pub fn profile_mass(profile: &impl ExactProfile) -> f64 {
    integrate_piecewise(profile, |x| profile.value(x))
}

/// Energy of a closed-form profile by Gauss–Legendre quadrature.
pub fn profile_energy(profile: &impl ExactProfile, alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    integrate_piecewise(profile, |x| {
        let (u, ux) = (profile.value(x), profile.slope(x));
        0.5 * (ux * ux - a2 * u * u) - u * x.cos()
    })
}

/// Residual of the exact second-order expansion of E about a critical point u*:
///
/// E(v) = E(u*) + ∫_{Z(u*)} v(λ − cos x) − λ(M_v − M_*) + ½∫((v−u*)_x² − α²(v−u*)²).
///
/// E(v) comes from the grid ([`energy`]); the other terms integrate the
/// trigonometric interpolant of v against the exact profile.
pub fn taylor_gap(v: &Field, ustar: &impl ExactProfile, alpha: f64, lambda: f64) -> f64 {
    let ev = energy(v, alpha);
    let rhs = energy_gap(v, ustar, alpha, lambda) + profile_energy(ustar, alpha);
    (ev - rhs).abs()
}

/// E(v) − E(u*) through the expansion about the critical point u*, without
/// forming either energy; this avoids cancellation when v is close to u*.
pub fn energy_gap(v: &Field, ustar: &impl ExactProfile, alpha: f64, lambda: f64) -> f64 {
    let a2 = alpha * alpha;
    let spec = Spectrum::of(v);
    let mass_defect = v.mass() - profile_mass(ustar);
    let rest = integrate_piecewise(ustar, |x| {
        let (vi, vx) = spec.eval(x);
        let (d, dx) = (vi - ustar.value(x), vx - ustar.slope(x));
        let dry = if ustar.is_dry(x) { vi * (lambda - x.cos()) } else { 0.0 };
        dry + 0.5 * (dx * dx - a2 * d * d)
    });
    rest - lambda * mass_defect
}

/// Energy gap to a grid-resolved, strictly positive critical point (no dry
/// set), evaluated on Fourier coefficients of the difference:
/// π·Σ_{p≠0}(p²−α²)|Δ̂(p)|² − λ·(M_v − M_*).
pub fn energy_gap_resolved(v: &Field, ustar: &Field, alpha: f64, lambda: f64) -> Result<f64> {
    let diff = v.sub(ustar)?;
    let spec = Spectrum::of(&diff);
    let a2 = alpha * alpha;
    let quad: f64 = spec
        .resolved()
        .filter(|(p, _)| *p != 0)
        .map(|(p, c)| ((p * p) as f64 - a2) * c.norm_sqr())
        .sum::<f64>()
        - a2 * spec.nyquist().norm_sqr();
    Ok(PI * quad - lambda * diff.mass())
}

/// H¹ distance of two grid fields through Fourier coefficients,
/// √(2π·Σ_{p≠0} p²|Δ̂(p)|²).
pub fn h1_distance_fourier(u: &Field, v: &Field) -> Result<f64> {
    let spec = Spectrum::of(&u.sub(v)?);
    let s: f64 = spec.resolved().map(|(p, c)| (p * p) as f64 * c.norm_sqr()).sum();
    Ok((2.0 * PI * s).sqrt())
}

/// One row of the diagnostics time series.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSample {
    pub t: f64,
    pub energy: f64,
    pub dissipation: f64,
    pub mass: f64,
    /// S_{n−2} (NaN when n ≤ 2)
    pub entropy_bf: f64,
    /// S_{n−3/2} (NaN when n ≤ 3/2)
    pub entropy_kadanoff: f64,
    pub d_h1: f64,
    pub d_l2: f64,
    pub d_linf: f64,
}

pub const DIAGNOSTICS_HEADER: &str = "t,E,D,mass,S_bf,S_kad,dH1,dL2,dLinf";

impl DiagnosticsSample {
    /// Evaluate every diagnostic at time `t`; distances are NaN without a reference.
    pub fn measure(t: f64, u: &Field, params: &Params, reference: Option<&Field>) -> Result<Self> {
        let ent = |beta: f64| -> Result<f64> {
            if beta <= 0.0 {
                return Ok(f64::NAN);
            }
            let e = entropy(u, beta, default_entropy_floor(beta))?;
            Ok(if e.infinite { f64::INFINITY } else { e.value })
        };
        let (d_h1, d_l2, d_linf) = match reference {
            Some(r) => (
                grid::h1_distance(u, r)?,
                grid::l2_distance(u, r)?,
                grid::linf_distance(u, r)?,
            ),
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        Ok(Self {
            t,
            energy: energy(u, params.alpha),
            dissipation: dissipation(u, params, default_delta(u)),
            mass: u.mass(),
            entropy_bf: ent(params.n - 2.0)?,
            entropy_kadanoff: ent(params.n - 1.5)?,
            d_h1,
            d_l2,
            d_linf,
        })
    }

    pub fn csv_row(&self) -> String {
        [
            self.t,
            self.energy,
            self.dissipation,
            self.mass,
            self.entropy_bf,
            self.entropy_kadanoff,
            self.d_h1,
            self.d_l2,
            self.d_linf,
        ]
        .iter()
        .map(|&v| fmt17(v))
        .collect::<Vec<_>>()
        .join(",")
    }

    pub fn parse_row(line: &str, lineno: usize) -> Result<Self> {
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Csv { line: lineno, msg: e.to_string() })?;
        if cols.len() != 9 {
            return Err(Error::Csv { line: lineno, msg: format!("expected 9 columns, got {}", cols.len()) });
        }
        Ok(Self {
            t: cols[0],
            energy: cols[1],
            dissipation: cols[2],
            mass: cols[3],
            entropy_bf: cols[4],
            entropy_kadanoff: cols[5],
            d_h1: cols[6],
            d_l2: cols[7],
            d_linf: cols[8],
        })
    }
}

pub fn diagnostics_to_csv(samples: &[DiagnosticsSample]) -> String {
    let mut s = String::from(DIAGNOSTICS_HEADER);
    s.push('\n');
    for row in samples {
        let _ = writeln!(s, "{}", row.csv_row());
    }
    s
}

pub fn diagnostics_from_csv(text: &str) -> Result<Vec<DiagnosticsSample>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == DIAGNOSTICS_HEADER => {}
        other => {
            return Err(Error::Csv {
                line: 1,
                msg: format!("expected header `{DIAGNOSTICS_HEADER}`, got `{}`", other.unwrap_or("")),
            })
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| DiagnosticsSample::parse_row(l, i + 2))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use approx::assert_abs_diff_eq;

    fn g(n: usize) -> PeriodicGrid {
        PeriodicGrid::new(n).unwrap()
    }

    #[test]
    fn energy_of_constant_and_shifted_cosine() {
        let grid = g(64);
        for alpha in [0.3, 1.0, 2.0] {
            let c = 1.7;
            assert_abs_diff_eq!(energy(&grid.constant(c), alpha), -alpha * alpha * PI * c * c, epsilon = 1e-12);
        }
        let u = grid.sample(|x| 1.0 + x.cos());
        assert_abs_diff_eq!(energy(&u, 1.0), -2.0 * PI, epsilon = 1e-10);
    }

    #[test]
    fn energy_fourier_examples() {
        let grid = g(64);
        let m = 5.0;
        let c = m / (2.0 * PI);
        let e = energy_fourier(&grid.constant(c), 0.7, m).unwrap();
        assert_abs_diff_eq!(e, -0.49 * m * m / (4.0 * PI), epsilon = 1e-12);
        let u = grid.sample(|x| c + x.cos());
        let e = energy_fourier(&u, 1.0, m).unwrap();
        assert_abs_diff_eq!(e, -m * m / (4.0 * PI) - PI, epsilon = 1e-12);
        assert!(matches!(energy_fourier(&u, 1.0, m + 1.0), Err(Error::MassMismatch { .. })));
    }

    #[test]
    fn discrete_energy_converges_to_spectral() {
        let f = |x: f64| 2.0 + 0.5 * x.cos() + 0.2 * (2.0 * x).sin();
        let e = energy(&g(512).sample(f), 0.8);
        let d1 = (energy_discrete(&g(128).sample(f), 0.8) - e).abs();
        let d2 = (energy_discrete(&g(256).sample(f), 0.8) - e).abs();
        assert!(d2 < d1 / 3.5, "{d1} {d2}");
    }

    #[test]
    fn dissipation_of_constant() {
        let grid = g(128);
        let p = Params::new(3.0, 1.0, 1.0, 0.0).unwrap();
        let c = 1.3;
        assert_abs_diff_eq!(dissipation(&grid.constant(c), &p, 1e-7), c.powi(3) * PI, epsilon = 1e-12);
        // with a dry patch the stencil path applies away from it
        let mut u = grid.constant(c);
        u.values_mut()[0] = 0.0;
        let d = dissipation(&u, &p, 1e-7);
        let skipped = 7.0 * grid.spacing() * c.powi(3);
        assert!(d > c.powi(3) * PI - skipped - 1e-9 && d < c.powi(3) * PI, "{d}");
    }

    #[test]
    fn entropy_examples() {
        let grid = g(32);
        let e = entropy(&grid.constant(1.0), 1.5, 1e-12).unwrap();
        assert_abs_diff_eq!(e.value, 2.0 * PI, epsilon = 1e-13);
        assert!(!e.infinite);
        let e = entropy(&grid.constant(4.0), 1.5, 1e-12).unwrap();
        assert_abs_diff_eq!(e.value, PI / 4.0, epsilon = 1e-13);
        let mut u = grid.constant(1.0);
        u.values_mut()[3] = 0.0;
        let e = entropy(&u, 1.5, default_entropy_floor(1.5)).unwrap();
        assert!(e.infinite && e.value.is_finite());
        assert!(entropy(&u, 0.0, 1e-3).is_err());
    }

    #[test]
    fn lower_bound_and_coercivity_formulas() {
        let b = energy_lower_bound(2.0 * PI, 1.0);
        assert_abs_diff_eq!(b, -PI.powi(3) / 2.0 - 2.0 * PI - 0.5, epsilon = 1e-12);
        assert!(energy_lower_bound(1e-12, 1.0).abs() < 1e-11);
        assert_eq!(coercivity_bound(0.0, 0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(coercivity_bound(0.375, 0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert!(coercivity_bound(0.1, 1.0).is_err());
        assert!(coercivity_bound(-0.1, 0.5).is_err());
    }

    #[test]
    fn fourier_h1_matches_spectral_h1() {
        let grid = g(128);
        let u = grid.sample(|x| (x.sin()).exp());
        let v = grid.sample(|x| 1.0 + 0.3 * (3.0 * x).cos());
        let a = grid::h1_distance(&u, &v).unwrap();
        let b = h1_distance_fourier(&u, &v).unwrap();
        assert!((a - b).abs() < 1e-10 * b);
    }

    #[test]
    fn diagnostics_csv_round_trip() {
        let grid = g(32);
        let p = Params::new(3.0, 1.0, 2.0 * PI, 1e-8).unwrap();
        let u = grid.sample(|x| 1.0 + 0.5 * x.cos());
        let s = DiagnosticsSample::measure(0.25, &u, &p, Some(&grid.constant(1.0))).unwrap();
        let text = diagnostics_to_csv(&[s.clone(), s.clone()]);
        assert!(text.starts_with("t,E,D,mass,S_bf,S_kad,dH1,dL2,dLinf\n"));
        let back = diagnostics_from_csv(&text).unwrap();
        assert_eq!(back, vec![s.clone(), s]);
    }
}
