//! Flat `key = value` experiment configs.
//!
//! One assignment per line, `#` starts a comment, keys are dotted
//! (`kernel.alpha`, `solver.tol`). Every key is optional and falls back to
//! the documented default; unknown keys and out-of-range values are errors
//! that carry the offending line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use jumpdiff_core::{KernelSpec, Mode};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Checks run by `verify-all`; each subcommand runs its own subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Check {
    Layer,
    Stability,
    Energy,
    Poincare,
    Cutoff,
    Calibration,
    Hamiltonian,
    Modica,
    Igamma,
}

impl Check {
    pub const ALL: [Check; 9] = [
        Check::Layer,
        Check::Stability,
        Check::Energy,
        Check::Poincare,
        Check::Cutoff,
        Check::Calibration,
        Check::Hamiltonian,
        Check::Modica,
        Check::Igamma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Layer => "layer",
            Check::Stability => "stability",
            Check::Energy => "energy",
            Check::Poincare => "poincare",
            Check::Cutoff => "cutoff",
            Check::Calibration => "calibration",
            Check::Hamiltonian => "hamiltonian",
            Check::Modica => "modica",
            Check::Igamma => "igamma",
        }
    }

    fn parse(s: &str) -> Option<Check> {
        Check::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridParams {
    pub half_width: f64,
    pub points: usize,
    /// Interaction reach of infinite-range kernels, in x units.
    pub reach: f64,
}

impl GridParams {
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub residual: f64,
    pub stability: f64,
    pub energy_slack: f64,
    pub poincare: f64,
    pub hamiltonian: f64,
    pub modica_factor: f64,
    pub calibration: f64,
    pub derivative: f64,
    pub mc_sigmas: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoincareParams {
    pub half_width: f64,
    pub points: usize,
    pub delta0: f64,
    pub cutoff_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionParams {
    pub gamma: f64,
    pub radii: Vec<f64>,
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub c: f64,
    pub mode: Mode,
    pub nonlinearity: String,
    pub grid: GridParams,
    pub solver_tol: f64,
    pub energy_radii: Vec<f64>,
    pub stability_radii: Vec<f64>,
    pub poincare: PoincareParams,
    pub cutoff_radii: Vec<f64>,
    pub cutoff_samples: usize,
    pub extension: ExtensionParams,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub checks: Vec<Check>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::parse("").expect("defaults are valid")
    }
}

struct Entry {
    line: usize,
    value: String,
}

/// Typed accessor over the raw entries. Reading a key removes it, so whatever
/// remains after extraction is unknown.
struct Raw {
    entries: BTreeMap<String, Entry>,
}

impl Raw {
    fn text(&mut self, key: &str, default: &str) -> (String, Option<usize>) {
        match self.entries.remove(key) {
            Some(e) => (e.value, Some(e.line)),
            None => (default.to_string(), None),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, default: T, what: &str) -> Result<(T, Option<usize>), ConfigError> {
        match self.entries.remove(key) {
            None => Ok((default, None)),
            Some(e) => e.value.parse::<T>().map(|v| (v, Some(e.line))).map_err(|_| ConfigError {
                line: Some(e.line),
                key: key.to_string(),
                message: format!("expected {what}, got {:?}", e.value),
            }),
        }
    }

    fn real(&mut self, key: &str, default: f64, ok: impl Fn(f64) -> bool, range: &str) -> Result<f64, ConfigError> {
        let (v, line) = self.parsed::<f64>(key, default, "a real number")?;
        if !v.is_finite() || !ok(v) {
            return Err(ConfigError {
                line,
                key: key.to_string(),
                message: format!("value {v} out of range: {range}"),
            });
        }
        Ok(v)
    }

    fn count(&mut self, key: &str, default: usize, min: usize) -> Result<usize, ConfigError> {
        let (v, line) = self.parsed::<usize>(key, default, "a nonnegative integer")?;
        if v < min {
            return Err(ConfigError {
                line,
                key: key.to_string(),
                message: format!("value {v} out of range: must be at least {min}"),
            });
        }
        Ok(v)
    }

    fn list(&mut self, key: &str, default: &[f64], min_len: usize) -> Result<(Vec<f64>, Option<usize>), ConfigError> {
        let (text, line) = match self.entries.remove(key) {
            None => return Ok((default.to_vec(), None)),
            Some(e) => (e.value, Some(e.line)),
        };
        let bad = |message: String| ConfigError {
            line,
            key: key.to_string(),
            message,
        };
        let values = text
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad(format!("expected a comma-separated list of reals, got {text:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() < min_len {
            return Err(bad(format!("need at least {min_len} entries")));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) || values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("radii must be positive and strictly increasing".into()));
        }
        Ok((values, line))
    }
}

fn order(v: f64) -> bool {
    v > 0.0 && v < 2.0
}

fn positive(v: f64) -> bool {
    v > 0.0
}

fn nonnegative(v: f64) -> bool {
    v >= 0.0
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            key: path.display().to_string(),
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (k, raw_line) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw_line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ConfigError {
                    line: Some(line),
                    key: body.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError {
                    line: Some(line),
                    key: String::new(),
                    message: "empty key".into(),
                });
            }
            if let Some(prev) = entries.insert(key.to_string(), Entry { line, value: value.to_string() }) {
                return Err(ConfigError {
                    line: Some(line),
                    key: key.to_string(),
                    message: format!("duplicate key, first set on line {}", prev.line),
                });
            }
        }
        let mut raw = Raw { entries };
        let cfg = Self::from_raw(&mut raw)?;
        if let Some((key, e)) = raw.entries.iter().next() {
            return Err(ConfigError {
                line: Some(e.line),
                key: key.clone(),
                message: "unknown key".into(),
            });
        }
        Ok(cfg)
    }

    fn from_raw(raw: &mut Raw) -> Result<Self, ConfigError> {
        let (kind, kind_line) = raw.text("kernel.type", "fractional");
        let (n, n_line) = raw.parsed::<usize>("kernel.n", 1, "a nonnegative integer")?;
        if n != 1 {
            return Err(ConfigError {
                line: n_line,
                key: "kernel.n".into(),
                message: format!("value {n} out of range: the driver solves 1D layers; 2D runs use the poincare.* keys"),
            });
        }
        let alpha = raw.real("kernel.alpha", 1.0, order, "must lie in (0, 2)")?;
        let kernel = match kind.as_str() {
            "fractional" => KernelSpec::fractional(n, alpha),
            "truncated" => {
                let big_lambda = raw.real("kernel.big_lambda", 1.0, positive, "must be positive")?;
                let delta0 = raw.real("kernel.delta0", 1.0, positive, "must be positive")?;
                KernelSpec::truncated(n, alpha, big_lambda, delta0)
            }
            "sum" => {
                let alpha2 = raw.real("kernel.alpha2", 1.5, order, "must lie in (0, 2)")?;
                KernelSpec::sum(KernelSpec::fractional(n, alpha), KernelSpec::fractional(n, alpha2))
            }
            other => {
                return Err(ConfigError {
                    line: kind_line,
                    key: "kernel.type".into(),
                    message: format!("unknown kernel type {other:?}; expected fractional, truncated or sum"),
                })
            }
        };

        let c = raw.real("operator.c", 0.0, nonnegative, "must be nonnegative")?;
        let (mode_text, mode_line) = raw.text("operator.mode", "mixed");
        let mode = match mode_text.as_str() {
            "mixed" => Mode::Mixed,
            "nonlocal_only" => Mode::NonlocalOnly,
            other => {
                return Err(ConfigError {
                    line: mode_line,
                    key: "operator.mode".into(),
                    message: format!("unknown mode {other:?}; expected mixed or nonlocal_only"),
                })
            }
        };
        let (nonlinearity, nl_line) = raw.text("nonlinearity", "allen_cahn");
        if !matches!(nonlinearity.as_str(), "allen_cahn" | "focusing") {
            return Err(ConfigError {
                line: nl_line,
                key: "nonlinearity".into(),
                message: format!("unknown nonlinearity {nonlinearity:?}; expected allen_cahn or focusing"),
            });
        }

        let half_width = raw.real("grid.half_width", 20.0, positive, "must be positive")?;
        let (points, points_line) = raw.parsed::<usize>("grid.points", 401, "a nonnegative integer")?;
        if points < 9 || points % 2 == 0 {
            return Err(ConfigError {
                line: points_line,
                key: "grid.points".into(),
                message: format!("value {points} out of range: must be odd and at least 9"),
            });
        }
        let reach = raw.real("grid.reach", 2.0 * half_width, nonnegative, "must be nonnegative")?;
        let grid = GridParams {
            half_width,
            points,
            reach,
        };

        let solver_tol = raw.real("solver.tol", 1e-10, positive, "must be positive")?;
        let (energy_radii, energy_line) = raw.list("energy.radii", &[2.0, 4.0, 8.0, 16.0], 4)?;
        let (stability_radii, stability_line) = raw.list("stability.radii", &[4.0, 6.0, 8.0, 10.0], 2)?;
        for (key, radii, line) in [
            ("energy.radii", &energy_radii, energy_line),
            ("stability.radii", &stability_radii, stability_line),
        ] {
            if radii.last().is_some_and(|&r| r > half_width) {
                return Err(ConfigError {
                    line,
                    key: key.into(),
                    message: "radii must not exceed grid.half_width".into(),
                });
            }
        }
        if energy_radii[0] <= 1.0 {
            return Err(ConfigError {
                line: energy_line,
                key: "energy.radii".into(),
                message: "radii must exceed 1".into(),
            });
        }

        let poincare = PoincareParams {
            half_width: raw.real("poincare.half_width", 8.0, positive, "must be positive")?,
            points: raw.count("poincare.points", 33, 9)?,
            delta0: raw.real("poincare.delta0", 1.0, positive, "must be positive")?,
            cutoff_radius: raw.real("poincare.cutoff_radius", 7.0, |v| v > 1.0, "must exceed 1")?,
        };
        let cutoff_radii = raw.list("cutoff.radii", &[16.0, 32.0, 64.0], 2)?.0;
        let cutoff_samples = raw.count("cutoff.samples", 100_000, 100)?;

        let extension = ExtensionParams {
            gamma: raw.real("extension.gamma", 2.0, |v| v > 0.0 && v <= 2.0, "must lie in (0, 2]")?,
            radii: raw.list("extension.radii", &[2.0, 4.0, 6.0, 8.0], 2)?.0,
            window: raw.real("extension.window", 10.0, positive, "must be positive")?,
        };

        let tolerances = Tolerances {
            residual: raw.real("tol.residual", 1e-9, nonnegative, "must be nonnegative")?,
            stability: raw.real("tol.stability", 1e-6, nonnegative, "must be nonnegative")?,
            energy_slack: raw.real("tol.energy_slack", 0.1, nonnegative, "must be nonnegative")?,
            poincare: raw.real("tol.poincare", 1e-6, nonnegative, "must be nonnegative")?,
            hamiltonian: raw.real("tol.hamiltonian", 1e-3, nonnegative, "must be nonnegative")?,
            modica_factor: raw.real("tol.modica_factor", 3.0, nonnegative, "must be nonnegative")?,
            calibration: raw.real("tol.calibration", 0.05, nonnegative, "must be nonnegative")?,
            derivative: raw.real("tol.derivative", 0.05, nonnegative, "must be nonnegative")?,
            mc_sigmas: raw.real("tol.mc_sigmas", 3.0, nonnegative, "must be nonnegative")?,
        };

        let (seed, _) = raw.parsed::<u64>("seed", 20_240_917, "an unsigned 64-bit integer")?;
        let (out, _) = raw.text("output.dir", "jumpdiff-out");

        let (checks_text, checks_line) = raw.text("checks", "all");
        let checks = if checks_text == "all" {
            Check::ALL.to_vec()
        } else {
            let mut list = Vec::new();
            for item in checks_text.split(',').map(str::trim) {
                let check = Check::parse(item).ok_or_else(|| ConfigError {
                    line: checks_line,
                    key: "checks".into(),
                    message: format!("unknown check {item:?}"),
                })?;
                if !list.contains(&check) {
                    list.push(check);
                }
            }
            list.sort();
            list
        };

        Ok(ExperimentConfig {
            kernel,
            c,
            mode,
            nonlinearity,
            grid,
            solver_tol,
            energy_radii,
            stability_radii,
            poincare,
            cutoff_radii,
            cutoff_samples,
            extension,
            tolerances,
            seed,
            output_dir: PathBuf::from(out),
            checks,
        })
    }

    /// Order of the 1D kernel, for the fractional extension and the growth bound.
    pub fn kernel_order(&self) -> f64 {
        self.kernel.orders().iter().cloned().fold(2.0, f64::min)
    }
}
