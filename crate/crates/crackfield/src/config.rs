//! Line-based `key = value` run configuration.

use std::fmt;
use std::path::PathBuf;

use crackfield_core::adapt::{AdaptConfig, RefinementMode};
use crackfield_core::physics::{lame_from_poisson, MaterialParams};

#[derive(Clone, Debug, PartialEq)]
pub enum ConfigError {
    /// A line with a value but no key.
    MissingKey {
        line: usize,
    },
    BadValue {
        line: usize,
        key: String,
        message: String,
    },
    UnknownKey {
        line: usize,
        key: String,
    },
    Io(String),
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::MissingKey { .. } => "MISSING_KEY",
            ConfigError::BadValue { .. } => "BAD_VALUE",
            ConfigError::UnknownKey { .. } => "UNKNOWN_KEY",
            ConfigError::Io(_) => "IO",
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::MissingKey { line }
            | ConfigError::BadValue { line, .. }
            | ConfigError::UnknownKey { line, .. } => Some(*line),
            ConfigError::Io(_) => None,
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::MissingKey { line } => write!(f, "MISSING_KEY on line {line}"),
            ConfigError::BadValue { line, key, message } => {
                write!(f, "BAD_VALUE on line {line} for `{key}`: {message}")
            }
            ConfigError::UnknownKey { line, key } => {
                write!(f, "UNKNOWN_KEY `{key}` on line {line}")
            }
            ConfigError::Io(m) => write!(f, "cannot read config: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    /// The L-shaped panel.
    LShape,
    /// Unit-size square under a smooth stretch; stays intact.
    SmoothStretch,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Coarse start and large steps for quick runs.
    Desk,
    /// Small steps and a fine start for long runs.
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub params: MaterialParams,
    pub adapt: AdaptConfig,
    pub output_dir: PathBuf,
    /// Write `state_c<k>_s<n>.vtu` every this many steps (0 disables,
    /// the last step is always written).
    pub snapshot_stride: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::LShape,
            params: MaterialParams::default(),
            adapt: AdaptConfig::default(),
            output_dir: PathBuf::from("output"),
            snapshot_stride: 10,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn apply_preset(&mut self, preset: Preset) {
        match preset {
            Preset::Desk => {
                self.params.dt = 5e-3;
                self.adapt.initial_refinements = 3;
                self.adapt.max_cycles = 3;
            }
            Preset::Full => {
                self.params.dt = 1e-4;
                self.adapt.initial_refinements = 5;
                self.adapt.max_cycles = 3;
            }
        }
    }

    /// Sets Poisson's ratio and recomputes the second Lamé parameter.
    pub fn set_poisson(&mut self, nu: f64) -> Result<(), String> {
        self.params.lambda = lame_from_poisson(self.params.mu, nu).map_err(|e| e.to_string())?;
        self.params.nu = nu;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        self.params.validate().map_err(|e| e.to_string())?;
        self.adapt.validate().map_err(|e| e.to_string())
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.into(),
        message: format!("cannot parse `{v}`"),
    })
}

/// Parses a configuration. A `preset` line applies first wherever it
/// appears; explicit keys override it. Unset keys keep the defaults of
/// [`RunConfig::default`].
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(ConfigError::BadValue {
                line,
                key: content.into(),
                message: "expected `key = value`".into(),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::MissingKey { line });
        }
        if v.is_empty() {
            return Err(ConfigError::BadValue {
                line,
                key: k.into(),
                message: "empty value".into(),
            });
        }
        entries.push((line, k.to_string(), v.to_string()));
    }

    let mut cfg = RunConfig::default();
    for (line, k, v) in entries.iter().filter(|e| e.1 == "preset") {
        let preset = match v.as_str() {
            "desk" => Preset::Desk,
            "full" => Preset::Full,
            _ => {
                return Err(ConfigError::BadValue {
                    line: *line,
                    key: k.clone(),
                    message: "expected `desk` or `full`".into(),
                })
            }
        };
        cfg.apply_preset(preset);
    }

    let mut nu = None;
    for (line, k, v) in &entries {
        let (line, key, v) = (*line, k.as_str(), v.as_str());
        let bad = |message: &str| ConfigError::BadValue {
            line,
            key: key.into(),
            message: message.into(),
        };
        let positive = |x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(bad("must be positive"))
            }
        };
        match key {
            "preset" => {}
            "scenario" => {
                cfg.scenario = match v {
                    "lshape" => ScenarioKind::LShape,
                    "smooth_stretch" => ScenarioKind::SmoothStretch,
                    _ => return Err(bad("expected `lshape` or `smooth_stretch`")),
                }
            }
            "mu" => cfg.params.mu = positive(parse_num(line, key, v)?)?,
            "nu" => {
                let x: f64 = parse_num(line, key, v)?;
                if !(x > -1.0 && x < 0.5) {
                    return Err(bad("Poisson's ratio must lie in (-1, 0.5)"));
                }
                nu = Some((line, x));
            }
            "gc" => cfg.params.gc = positive(parse_num(line, key, v)?)?,
            "eps" => cfg.params.eps = positive(parse_num(line, key, v)?)?,
            "kappa" => cfg.params.kappa = positive(parse_num(line, key, v)?)?,
            "dt" => cfg.params.dt = positive(parse_num(line, key, v)?)?,
            "t_end" => cfg.params.t_end = positive(parse_num(line, key, v)?)?,
            "initial_refinements" => cfg.adapt.initial_refinements = parse_num(line, key, v)?,
            "theta" => {
                let x: f64 = parse_num(line, key, v)?;
                if !(x > 0.0 && x < 1.0) {
                    return Err(bad("must lie in (0, 1)"));
                }
                cfg.adapt.theta = x;
            }
            "tol_eta" => cfg.adapt.tol_eta = parse_num(line, key, v)?,
            "tol_interp" => cfg.adapt.tol_interp = parse_num(line, key, v)?,
            "cycles" => cfg.adapt.max_cycles = parse_num(line, key, v)?,
            "mode" => {
                cfg.adapt.mode = match v {
                    "adaptive" => RefinementMode::Adaptive,
                    "uniform" => RefinementMode::Uniform,
                    _ => return Err(bad("expected `adaptive` or `uniform`")),
                }
            }
            "output_dir" => cfg.output_dir = PathBuf::from(v),
            "snapshot_stride" => cfg.snapshot_stride = parse_num(line, key, v)?,
            "seed" => cfg.seed = parse_num(line, key, v)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.into(),
                })
            }
        }
    }
    // lambda follows mu and nu whatever their order in the file
    let nu = nu.map(|n| n.1).unwrap_or(cfg.params.nu);
    let nu_line = entries
        .iter()
        .find(|e| e.1 == "nu")
        .map(|e| e.0)
        .unwrap_or(0);
    cfg.set_poisson(nu)
        .map_err(|message| ConfigError::BadValue {
            line: nu_line,
            key: "nu".into(),
            message,
        })?;
    Ok(cfg)
}

pub fn read_config(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config("").unwrap();
        let p = &c.params;
        assert_eq!(
            (p.nu, p.gc, p.eps, p.kappa, p.dt, p.t_end),
            (0.18, 8.9e-5, 14.0, 1e-10, 1e-4, 0.4)
        );
        assert_eq!(p.mu, 10.95);
        assert_eq!(c.adapt.theta, 0.3);
    }

    #[test]
    fn nu_recomputes_lambda() {
        let c = parse_config("nu = 0.49\n").unwrap();
        assert!((c.params.lambda - 2.0 * 10.95 * 0.49 / 0.02).abs() < 1e-9);
        let c = parse_config("nu = 0.4\nmu = 1.0 # later key\n").unwrap();
        assert!((c.params.lambda - 4.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_lines_are_reported_with_line_numbers() {
        assert_eq!(
            parse_config("# c\nnu = 0.6\n").unwrap_err(),
            ConfigError::BadValue {
                line: 2,
                key: "nu".into(),
                message: "Poisson's ratio must lie in (-1, 0.5)".into()
            }
        );
        assert_eq!(
            parse_config("\n\nfoo = 1").unwrap_err().code(),
            "UNKNOWN_KEY"
        );
        assert_eq!(
            parse_config("= 3").unwrap_err(),
            ConfigError::MissingKey { line: 1 }
        );
        assert_eq!(parse_config("dt = -1").unwrap_err().line(), Some(1));
        assert_eq!(parse_config("dt = x").unwrap_err().code(), "BAD_VALUE");
        assert_eq!(
            parse_config("mode = fancy").unwrap_err().code(),
            "BAD_VALUE"
        );
    }

    #[test]
    fn preset_applies_before_explicit_keys() {
        let c = parse_config("dt = 0.01\npreset = desk\n").unwrap();
        assert_eq!(c.params.dt, 0.01);
        assert_eq!(c.adapt.max_cycles, 3);
        let c = parse_config("preset = desk").unwrap();
        assert_eq!(c.params.dt, 5e-3);
        assert_eq!(c.params.num_steps(), 80);
    }
}
