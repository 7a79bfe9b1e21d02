//! Flat `key = value` run configuration for `thinfilm evolve`.
//!
//! ```text
//! # relaxation of a uniform film at alpha = 1
//! N = 256
//! n = 3
//! alpha = 1
//! eps = auto
//! dt0 = 1e-4
//! dt_min = 1e-12
//! dt_max = 1
//! t_end = 1000
//! newton_tol = 1e-10
//! newton_max = 20
//! log_times = 0, 0.01, 0.1, 1, 10, 100, 1000
//! init = constant:1
//! ```
//!
//! Optional keys: `mass` (needed by `init = minimizer`), `energy_slack`,
//! `mobility = arithmetic|harmonic`, `stop_gap`, `samples_per_decade`
//! (diagnostics without snapshots, log-spaced from the first positive log time).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evolution::{EdgeMobility, SchemeConfig};
use crate::functionals::Params;
use crate::grid::{Field, PeriodicGrid};
use crate::steady;

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Constant(f64),
    File(PathBuf),
    Minimizer,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Eps {
    Value(f64),
    /// 1e−8·(M/2π)ⁿ
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scheme: SchemeConfig,
    pub n: f64,
    pub alpha: f64,
    pub eps: Eps,
    pub init: Init,
    pub mass: Option<f64>,
    /// Stop once E(u) − E(u*) drops below this value (checked at log times).
    pub stop_gap: Option<f64>,
}

const REQUIRED: [&str; 12] = [
    "N", "n", "alpha", "eps", "dt0", "dt_min", "dt_max", "t_end", "newton_tol", "newton_max", "log_times", "init",
];
const OPTIONAL: [&str; 5] = ["mass", "energy_slack", "mobility", "stop_gap", "samples_per_decade"];

fn parse_map(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let k = k.trim();
        if !REQUIRED.contains(&k) && !OPTIONAL.contains(&k) {
            return Err(Error::Config(format!("line {}: unknown key `{k}`", lineno + 1)));
        }
        if map.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
        }
    }
    Ok(map)
}

fn num(map: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    let v = map.get(key).ok_or_else(|| Error::MissingKey(key.into()))?;
    v.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}` as a number")))
}

fn opt_num(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    map.contains_key(key).then(|| num(map, key)).transpose()
}

fn count(map: &BTreeMap<String, String>, key: &str) -> Result<usize> {
    let v = map.get(key).ok_or_else(|| Error::MissingKey(key.into()))?;
    v.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}` as a count")))
}

impl RunConfig {
    /// Parse a configuration; relative `file:` paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let map = parse_map(text)?;
        if let Some(missing) = REQUIRED.iter().find(|k| !map.contains_key(**k)) {
            return Err(Error::MissingKey((*missing).into()));
        }
        let log_times = map["log_times"]
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| Error::Config(format!("`log_times`: bad entry `{s}`"))))
            .collect::<Result<Vec<f64>>>()?;
        let eps = match map["eps"].as_str() {
            "auto" => Eps::Auto,
            _ => Eps::Value(num(&map, "eps")?),
        };
        let init = match map["init"].split_once(':') {
            Some(("constant", c)) => Init::Constant(
                c.trim().parse().map_err(|_| Error::Config(format!("`init`: bad constant `{c}`")))?,
            ),
            Some(("file", p)) => {
                let p = PathBuf::from(p.trim());
                Init::File(match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p,
                })
            }
            None if map["init"] == "minimizer" => Init::Minimizer,
            _ => {
                return Err(Error::Config(format!(
                    "`init` must be constant:c, file:path or minimizer (got `{}`)",
                    map["init"]
                )))
            }
        };
        let mobility = match map.get("mobility").map(String::as_str) {
            None | Some("arithmetic") => EdgeMobility::Arithmetic,
            Some("harmonic") => EdgeMobility::Harmonic,
            Some(other) => return Err(Error::Config(format!("`mobility`: unknown value `{other}`"))),
        };
        let mut scheme = SchemeConfig {
            grid_size: count(&map, "N")?,
            dt0: num(&map, "dt0")?,
            dt_min: num(&map, "dt_min")?,
            dt_max: num(&map, "dt_max")?,
            newton_tol: num(&map, "newton_tol")?,
            newton_max: count(&map, "newton_max")?,
            t_end: num(&map, "t_end")?,
            log_times,
            energy_slack: opt_num(&map, "energy_slack")?,
            mobility,
            sample_times: Vec::new(),
        };
        scheme.log_times.sort_by(f64::total_cmp);
        if map.contains_key("samples_per_decade") {
            let per = count(&map, "samples_per_decade")?;
            let first = scheme.log_times.iter().copied().find(|&t| t > 0.0).unwrap_or(scheme.t_end);
            scheme.sample_times = crate::evolution::log_spaced(first, scheme.t_end, per);
        }
        scheme.validate()?;
        let cfg = Self {
            scheme,
            n: num(&map, "n")?,
            alpha: num(&map, "alpha")?,
            eps,
            init,
            mass: opt_num(&map, "mass")?,
            stop_gap: opt_num(&map, "stop_gap")?,
        };
        if cfg.init == Init::Minimizer && cfg.mass.is_none() {
            return Err(Error::MissingKey("mass".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent())
    }

    pub fn grid(&self) -> Result<PeriodicGrid> {
        PeriodicGrid::new(self.scheme.grid_size)
    }

    /// Initial field; `minimizer` uses the discrete minimizer of the stencil energy.
    pub fn initial_field(&self) -> Result<Field> {
        let grid = self.grid()?;
        match &self.init {
            Init::Constant(c) => Ok(grid.constant(*c)),
            Init::File(p) => {
                let u = Field::read_csv(p)?;
                if u.grid() != grid {
                    return Err(Error::GridMismatch(u.grid().len(), grid.len()));
                }
                Ok(u)
            }
            Init::Minimizer => {
                let mass = self.mass.ok_or_else(|| Error::MissingKey("mass".into()))?;
                Ok(steady::discrete_minimizer(self.alpha, mass, &grid)?.0)
            }
        }
    }

    pub fn params(&self, u0: &Field) -> Result<Params> {
        let mass = u0.mass();
        let eps = match self.eps {
            Eps::Value(e) => e,
            Eps::Auto => default_eps(mass, self.n),
        };
        Params::new(self.n, self.alpha, mass, eps)
    }
}

/// Regularization 1e−8·(M/2π)ⁿ.
pub fn default_eps(mass: f64, n: f64) -> f64 {
    1e-8 * (mass / (2.0 * PI)).powf(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "N = 64\nn = 3\nalpha = 1\neps = auto\ndt0 = 1e-4\ndt_min = 1e-10\ndt_max = 1\n\
                        t_end = 1\nnewton_tol = 1e-10\nnewton_max = 20\nlog_times = 0, 0.5, 1\ninit = constant:1\n";

    #[test]
    fn parses_full_config() {
        let c = RunConfig::parse(BASE, None).unwrap();
        assert_eq!(c.scheme.grid_size, 64);
        assert_eq!(c.scheme.log_times, vec![0.0, 0.5, 1.0]);
        assert_eq!(c.init, Init::Constant(1.0));
        assert_eq!(c.eps, Eps::Auto);
        let u0 = c.initial_field().unwrap();
        let p = c.params(&u0).unwrap();
        assert!((p.eps - 1e-8).abs() < 1e-20);
    }

    #[test]
    fn missing_key_is_named() {
        for key in REQUIRED {
            let text: String = BASE.lines().filter(|l| !l.starts_with(&format!("{key} "))).map(|l| format!("{l}\n")).collect();
            let err = RunConfig::parse(&text, None).unwrap_err();
            assert!(err.to_string().contains(&format!("`{key}`")), "{key}: {err}");
        }
    }

    #[test]
    fn minimizer_init_needs_mass() {
        let text = BASE.replace("init = constant:1", "init = minimizer");
        assert!(matches!(RunConfig::parse(&text, None), Err(Error::MissingKey(k)) if k == "mass"));
        let text = format!("{text}mass = 6.283185307179586\n");
        let c = RunConfig::parse(&text, None).unwrap();
        assert!((c.initial_field().unwrap().mass() - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse(&format!("{BASE}bogus = 1\n"), None).is_err());
        assert!(RunConfig::parse(&BASE.replace("dt0 = 1e-4", "dt0 = 10"), None).is_err());
        assert!(RunConfig::parse(&BASE.replace("init = constant:1", "init = sphere"), None).is_err());
    }
}
