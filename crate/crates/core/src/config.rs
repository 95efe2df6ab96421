//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are rejected so a
//! typo never silently falls back to a default. Every section is validated
//! before a command runs.

use std::path::Path;

use nalgebra::DVector;
use thiserror::Error;

use crate::clik::{default_home, Gains, ManipulatorModel};
use crate::dynamics::PendulumParams;
use crate::rl::{ArmSetup, LearningConfig, TrackingMode};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Free-oscillation experiment settings for synthesizing traces.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillationConfig {
    /// Release angle from the hanging position, rad.
    pub theta0: f64,
    pub theta_dot0: f64,
    /// Sample spacing of the written trace, s.
    pub h: f64,
    pub duration: f64,
    pub noise_std: f64,
    pub counts_per_rev: Option<u32>,
}

impl Default for OscillationConfig {
    fn default() -> Self {
        Self {
            theta0: 0.1,
            theta_dot0: 0.0,
            h: 0.005,
            duration: 5.0,
            noise_std: 0.0,
            counts_per_rev: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            max_iterations: 4_000,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: PendulumParams,
    pub learning: LearningConfig,
    pub arm: ArmSetup,
    pub oscillation: OscillationConfig,
    pub fit: FitSettings,
    /// Evaluation episodes.
    pub trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: PendulumParams::default(),
            learning: LearningConfig::default(),
            arm: ArmSetup::default(),
            oscillation: OscillationConfig::default(),
            fit: FitSettings::default(),
            trials: 100,
        }
    }
}

/// Raw arm entries, resolved together once all lines are read.
#[derive(Default)]
struct ArmEntries {
    links: Option<Vec<f64>>,
    home: Option<Vec<f64>>,
    kp: Option<Vec<f64>>,
    kd: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parse a config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut arm = ArmEntries::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: i + 1,
                message: format!("expected key=value, got `{line}`"),
            })?;
            cfg.apply(key.trim(), value.trim(), i + 1, &mut arm)?;
        }
        cfg.resolve_arm(arm)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `key=value` overrides, as given on the command line.
    pub fn with_overrides(mut self, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut arm = ArmEntries::default();
        for (i, o) in overrides.iter().enumerate() {
            let (key, value) = o.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: i + 1,
                message: format!("override `{o}` is not key=value"),
            })?;
            self.apply(key.trim(), value.trim(), i + 1, &mut arm)?;
        }
        self.resolve_arm(arm)?;
        self.validate()?;
        Ok(self)
    }

    fn apply(&mut self, key: &str, value: &str, line: usize, arm: &mut ArmEntries) -> Result<(), ConfigError> {
        let num = || -> Result<f64, ConfigError> {
            value.parse::<f64>().map_err(|e| ConfigError::Parse {
                line,
                message: format!("`{key}`: {e}"),
            })
        };
        let int = || -> Result<usize, ConfigError> {
            value.parse::<usize>().map_err(|e| ConfigError::Parse {
                line,
                message: format!("`{key}`: {e}"),
            })
        };
        let list = || -> Result<Vec<f64>, ConfigError> {
            value
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|e| ConfigError::Parse {
                        line,
                        message: format!("`{key}`: {e}"),
                    })
                })
                .collect()
        };
        let p = &mut self.params;
        let l = &mut self.learning;
        let o = &mut self.oscillation;
        match key {
            "I" => p.inertia = num()?,
            "b" => p.damping = num()?,
            "m" => p.mass = num()?,
            "g" => p.gravity = num()?,
            "l" => p.length = num()?,
            "theta0" => o.theta0 = num()?,
            "theta_dot0" => o.theta_dot0 = num()?,
            "osc_h" => o.h = num()?,
            "duration" => o.duration = num()?,
            "noise_std" => o.noise_std = num()?,
            "counts_per_rev" => {
                o.counts_per_rev = match value {
                    "none" | "0" => None,
                    _ => Some(value.parse().map_err(|e| ConfigError::Parse {
                        line,
                        message: format!("`{key}`: {e}"),
                    })?),
                }
            }
            "alpha" => l.alpha = num()?,
            "gamma" => l.gamma = num()?,
            "episodes" => l.episodes = int()?,
            "h" => l.h = num()?,
            "max_steps" => l.max_steps = int()?,
            "epsilon_start" => l.epsilon_start = num()?,
            "epsilon_end" => l.epsilon_end = num()?,
            "epsilon_decay_episodes" => l.epsilon_decay_episodes = int()?,
            "param_noise_rel" => l.param_noise_rel = num()?,
            "error_noise" => l.error_noise = num()?,
            "tracking" => {
                l.tracking_mode = value
                    .parse::<TrackingMode>()
                    .map_err(|message| ConfigError::Parse { line, message })?
            }
            "seed" => {
                l.seed = value.parse().map_err(|e| ConfigError::Parse {
                    line,
                    message: format!("`seed`: {e}"),
                })?
            }
            "checkpoint_every" => l.checkpoint_every = int()?,
            "checkpoint_trials" => l.checkpoint_trials = int()?,
            "trials" => self.trials = int()?,
            "fit_max_iterations" => self.fit.max_iterations = int()?,
            "fit_tolerance" => self.fit.tolerance = num()?,
            "links" => arm.links = Some(list()?),
            "home" => arm.home = Some(list()?),
            "kp" => arm.kp = Some(list()?),
            "kd" => arm.kd = Some(list()?),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    fn resolve_arm(&mut self, entries: ArmEntries) -> Result<(), ConfigError> {
        let invalid = |key: &'static str, reason: String| ConfigError::Invalid { key, reason };
        let geometry_changed = entries.links.is_some();
        let model = match entries.links {
            Some(links) => ManipulatorModel::new(links).map_err(|e| invalid("links", e.to_string()))?,
            None => self.arm.model.clone(),
        };
        let dim = model.task_dim();
        let home = match entries.home {
            Some(h) => DVector::from_vec(h),
            None if geometry_changed && self.arm.home.len() != dim => default_home(&model),
            None => self.arm.home.clone(),
        };
        if home.len() != model.dof() {
            return Err(invalid("home", format!("expected {} joint angles", model.dof())));
        }
        let expand = |key: &'static str, given: Option<Vec<f64>>, current: &DVector<f64>| {
            match given {
                Some(v) if v.len() == 1 => Ok(DVector::from_element(dim, v[0])),
                Some(v) if v.len() == dim => Ok(DVector::from_vec(v)),
                Some(v) => Err(invalid(key, format!("{} entries for a {dim}-D task", v.len()))),
                None if current.len() == dim => Ok(current.clone()),
                None => Ok(DVector::from_element(dim, current[0])),
            }
        };
        let gains = Gains {
            kp: expand("kp", entries.kp, &self.arm.gains.kp)?,
            kd: expand("kd", entries.kd, &self.arm.gains.kd)?,
        };
        gains.validate().map_err(|e| invalid("kp/kd", e.to_string()))?;
        self.arm = ArmSetup { model, home, gains };
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params
            .validate()
            .map_err(|e| ConfigError::Invalid {
                key: "I/b/m/g/l",
                reason: e.to_string(),
            })?;
        self.learning.validate()?;
        let o = &self.oscillation;
        let invalid = |key: &'static str, reason: &str| ConfigError::Invalid {
            key,
            reason: reason.to_string(),
        };
        if !(o.h.is_finite() && o.h > 0.0) {
            return Err(invalid("osc_h", "must be positive"));
        }
        if !(o.duration.is_finite() && o.duration > o.h) {
            return Err(invalid("duration", "must exceed osc_h"));
        }
        if !(o.noise_std.is_finite() && o.noise_std >= 0.0) {
            return Err(invalid("noise_std", "must be non-negative"));
        }
        if !(o.theta0.is_finite() && o.theta_dot0.is_finite()) {
            return Err(invalid("theta0", "must be finite"));
        }
        if self.fit.max_iterations == 0 {
            return Err(invalid("fit_max_iterations", "must be positive"));
        }
        if !(self.fit.tolerance.is_finite() && self.fit.tolerance > 0.0) {
            return Err(invalid("fit_tolerance", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_survive_empty_file() {
        let cfg = RunConfig::parse("# nothing here\n\n").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn keys_and_comments() {
        let cfg = RunConfig::parse(
            "alpha = 0.2  # faster\nlinks=0.4,0.3,0.2\nkp=50\nkd=10,11,12\ntracking=clik\nseed=7\ncounts_per_rev=2000\n",
        )
        .unwrap();
        assert_eq!(cfg.learning.alpha, 0.2);
        assert_eq!(cfg.arm.model.dof(), 3);
        assert_eq!(cfg.arm.home.len(), 3);
        assert_eq!(cfg.arm.gains.kp.as_slice(), &[50.0, 50.0, 50.0]);
        assert_eq!(cfg.arm.gains.kd.as_slice(), &[10.0, 11.0, 12.0]);
        assert_eq!(cfg.learning.tracking_mode, TrackingMode::Clik);
        assert_eq!(cfg.learning.seed, 7);
        assert_eq!(cfg.oscillation.counts_per_rev, Some(2000));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::parse("alpha=0"), Err(ConfigError::Invalid { key: "alpha", .. })));
        assert!(matches!(RunConfig::parse("duration=0"), Err(ConfigError::Invalid { key: "duration", .. })));
        assert!(matches!(RunConfig::parse("\nbogus=1"), Err(ConfigError::UnknownKey { line: 2, .. })));
        assert!(matches!(RunConfig::parse("alpha"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(RunConfig::parse("alpha=abc"), Err(ConfigError::Parse { .. })));
        assert!(RunConfig::parse("links=0.4,-0.4").is_err());
        assert!(RunConfig::parse("kp=1,2,3").is_err());
        assert!(RunConfig::parse("b=-1").is_err());
    }

    #[test]
    fn overrides_win() {
        let cfg = RunConfig::parse("seed=1\n")
            .unwrap()
            .with_overrides(&["seed=9".into(), "episodes=5".into()])
            .unwrap();
        assert_eq!(cfg.learning.seed, 9);
        assert_eq!(cfg.learning.episodes, 5);
    }
}
