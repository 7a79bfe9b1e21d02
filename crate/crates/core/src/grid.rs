//! Periodic grid on [−π, π), nodal fields, and the spectral toolkit used for
//! diagnostics (quadrature, differentiation, Fourier coefficients, distances).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Round-off slack for the nonnegativity flag.
pub const NONNEG_SLACK: f64 = 1e-13;

/// Uniform grid x_i = −π + i·h, h = 2π/N.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicGrid {
    n: usize,
}

impl PeriodicGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 16 || n % 2 != 0 {
            return Err(Error::InvalidGridSize(n));
        }
        Ok(Self { n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        -PI + i as f64 * self.spacing()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    /// Field of samples f(x_i).
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::new(*self, self.nodes().map(f).collect()).expect("length matches grid")
    }

    pub fn constant(&self, c: f64) -> Field {
        self.sample(|_| c)
    }
}

/// Nodal samples of a periodic function.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(grid.len(), values.len()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        integrate(self)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.min() >= -NONNEG_SLACK
    }

    pub fn is_positive(&self) -> bool {
        self.min() > 0.0
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.check_grid(other)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    /// Rotate node indices by `shift` (a discrete translation).
    pub fn rotate(&self, shift: usize) -> Field {
        let mut values = self.values.clone();
        values.rotate_left(shift % self.values.len());
        Field { grid: self.grid, values }
    }

    pub fn check_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(self.grid.len(), other.grid.len()));
        }
        Ok(())
    }

    /// CSV with header `x,u`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,u\n");
        for (x, u) in self.grid.nodes().zip(&self.values) {
            let _ = writeln!(s, "{},{}", fmt17(x), fmt17(*u));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Field> {
        let f = std::fs::File::open(path)?;
        Self::parse_csv(std::io::BufReader::new(f))
    }

    pub fn parse_csv(reader: impl BufRead) -> Result<Field> {
        let mut values = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if lineno == 0 {
                if line != "x,u" {
                    return Err(Error::Csv {
                        line: 1,
                        msg: format!("expected header `x,u`, got `{line}`"),
                    });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let u = line
                .split(',')
                .nth(1)
                .ok_or_else(|| Error::Csv { line: lineno + 1, msg: "missing column".into() })?;
            values.push(u.trim().parse::<f64>().map_err(|e| Error::Csv {
                line: lineno + 1,
                msg: e.to_string(),
            })?);
        }
        let grid = PeriodicGrid::new(values.len())?;
        Field::new(grid, values)
    }
}

/// 17 significant digits in scientific notation, which round-trips any f64.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Trapezoid quadrature h·Σu_i, exact for trigonometric polynomials of degree < N.
pub fn integrate(u: &Field) -> f64 {
    u.grid.spacing() * u.values.iter().sum::<f64>()
}

pub fn l2_norm(u: &Field) -> f64 {
    (u.grid.spacing() * u.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

pub fn l2_distance(u: &Field, v: &Field) -> Result<f64> {
    Ok(l2_norm(&u.sub(v)?))
}

pub fn linf_distance(u: &Field, v: &Field) -> Result<f64> {
    u.check_grid(v)?;
    Ok(u.values
        .iter()
        .zip(&v.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Discrete Fourier coefficients û(p) = (1/N)·Σ u_i e^{−ip x_i}, stored in FFT
/// order: index k holds mode p = k for k < N/2 and p = k − N otherwise; index
/// N/2 is the Nyquist mode.
#[derive(Debug, Clone)]
pub struct Spectrum {
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn of(u: &Field) -> Self {
        let n = u.grid.len();
        let mut buf: Vec<Complex64> = u.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        // x_0 = −π contributes the phase e^{ipπ} = (−1)^p.
        for (k, c) in buf.iter_mut().enumerate() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            *c *= sign / n as f64;
        }
        Self { coeffs: buf }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Signed wavenumber of FFT slot `k`.
    pub fn wavenumber(&self, k: usize) -> i64 {
        let n = self.coeffs.len();
        if k < n / 2 {
            k as i64
        } else {
            k as i64 - n as i64
        }
    }

    /// û(p) for |p| < N/2.
    pub fn coeff(&self, p: i64) -> Result<Complex64> {
        let n = self.coeffs.len();
        if p.unsigned_abs() as usize >= n / 2 {
            return Err(Error::Aliased { p, half: n / 2 });
        }
        Ok(self.coeffs[p.rem_euclid(n as i64) as usize])
    }

    /// (slot, p, û(p)) over the resolved modes |p| < N/2 (Nyquist excluded).
    pub fn resolved(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let half = self.coeffs.len() / 2;
        self.coeffs
            .iter()
            .enumerate()
            .filter(move |(k, _)| *k != half)
            .map(move |(k, c)| (self.wavenumber(k), *c))
    }

    pub fn nyquist(&self) -> Complex64 {
        self.coeffs[self.coeffs.len() / 2]
    }

    /// Evaluate the trigonometric interpolant and its first derivative at any x.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let n = self.coeffs.len();
        let mut u = 0.0;
        let mut ux = 0.0;
        for (p, c) in self.resolved() {
            let (s, co) = (p as f64 * x).sin_cos();
            // Re(c e^{ipx}) and its derivative.
            u += c.re * co - c.im * s;
            ux += -(p as f64) * (c.re * s + c.im * co);
        }
        // Nyquist term uses the real cosine form so the interpolant stays real.
        let half = (n / 2) as f64;
        let c = self.nyquist().re;
        let phase = half * (x + PI);
        // Its derivative is dropped, matching the odd-order spectral derivative.
        u += c * phase.cos();
        (u, ux)
    }
}

/// û(p) with the convention û(0) = mean.
pub fn fourier_coeff(u: &Field, p: i64) -> Result<Complex64> {
    Spectrum::of(u).coeff(p)
}

/// Spectral derivative of order 1, 2 or 3. Odd orders drop the Nyquist mode.
pub fn derivative(u: &Field, order: u32) -> Result<Field> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidParameter(format!("derivative order {order} not in 1..=3")));
    }
    let n = u.grid.len();
    let mut buf: Vec<Complex64> = u.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let i = Complex64::new(0.0, 1.0);
    // FFT roundoff in unresolved modes is amplified by p^order; clear it.
    let floor = 8.0 * f64::EPSILON * buf.iter().map(|c| c.norm()).fold(0.0, f64::max);
    for (k, c) in buf.iter_mut().enumerate() {
        if c.norm() <= floor {
            *c = Complex64::new(0.0, 0.0);
            continue;
        }
        let p = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
        if k == n / 2 && order % 2 == 1 {
            *c = Complex64::new(0.0, 0.0);
            continue;
        }
        *c *= (i * p).powu(order) / n as f64;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Field::new(u.grid, buf.into_iter().map(|c| c.re).collect())
}

/// d_{H¹}(u,v) = ‖u_x − v_x‖₂. Masses are expected to agree; a mismatch only warns.
pub fn h1_distance(u: &Field, v: &Field) -> Result<f64> {
    u.check_grid(v)?;
    let (mu, mv) = (u.mass(), v.mass());
    if (mu - mv).abs() > 1e-10 * (1.0 + mu.abs()) {
        log::warn!("h1_distance between fields of unequal mass ({mu} vs {mv})");
    }
    Ok(l2_norm(&derivative(&u.sub(v)?, 1)?))
}
