//! Simulated balancing episodes with per-episode parameter randomization.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::discretize::{discretize, Observation};
use super::qtable::{select_action, QTable, ACTIONS};
use crate::clik::{ClikError, Gains, ManipulatorModel, TrackingChannel};
use crate::dynamics::{linearized_step, ContinuousState, PendulumParams};
use crate::ConfigError;

/// Half-width of the uniform initial pendulum angle, degrees.
pub const INITIAL_PHI_DEG: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackingMode {
    /// Achieved acceleration equals the command plus the injected error response.
    Ideal,
    /// Full arm model integrated alongside the pendulum.
    Clik,
}

impl std::str::FromStr for TrackingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ideal" => Ok(Self::Ideal),
            "clik" => Ok(Self::Clik),
            other => Err(format!("unknown tracking mode `{other}` (ideal|clik)")),
        }
    }
}

impl std::fmt::Display for TrackingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ideal => "ideal",
            Self::Clik => "clik",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub episodes: usize,
    /// Control and integration step, s.
    pub h: f64,
    pub max_steps: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: usize,
    /// Log-normal relative spread applied to I and b once per episode.
    pub param_noise_rel: f64,
    /// Standard deviation of the per-step tracking error noise, m.
    pub error_noise: f64,
    pub tracking_mode: TrackingMode,
    pub seed: u64,
    /// Score the greedy table every this many episodes and keep the best
    /// snapshot; 0 returns the final table.
    pub checkpoint_every: usize,
    /// Held-out greedy episodes per checkpoint score.
    pub checkpoint_trials: usize,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.95,
            episodes: 10_000,
            h: 0.01,
            max_steps: 1_000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_episodes: 8_000,
            param_noise_rel: 0.02,
            error_noise: 1e-3,
            tracking_mode: TrackingMode::Ideal,
            seed: 0,
            checkpoint_every: 250,
            checkpoint_trials: 50,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &'static str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid {
                    key,
                    reason: msg.to_string(),
                })
            }
        };
        check(self.alpha > 0.0 && self.alpha <= 1.0, "alpha", "must lie in (0, 1]")?;
        check(self.gamma >= 0.0 && self.gamma < 1.0, "gamma", "must lie in [0, 1)")?;
        check(self.episodes > 0, "episodes", "must be positive")?;
        check(self.max_steps > 0, "max_steps", "must be positive")?;
        check(self.h.is_finite() && self.h > 0.0, "h", "must be positive")?;
        for (key, eps) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
        ] {
            check((0.0..=1.0).contains(&eps), key, "must lie in [0, 1]")?;
        }
        check(
            self.param_noise_rel.is_finite() && self.param_noise_rel >= 0.0,
            "param_noise_rel",
            "must be non-negative",
        )?;
        check(
            self.error_noise.is_finite() && self.error_noise >= 0.0,
            "error_noise",
            "must be non-negative",
        )?;
        Ok(())
    }

    /// Linear anneal from `epsilon_start` to `epsilon_end`, then constant.
    pub fn epsilon(&self, episode: usize) -> f64 {
        if self.epsilon_decay_episodes == 0 {
            return self.epsilon_end;
        }
        let frac = (episode as f64 / self.epsilon_decay_episodes as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Arm geometry and gains for the tracking channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSetup {
    pub model: ManipulatorModel,
    pub home: DVector<f64>,
    pub gains: Gains,
}

impl Default for ArmSetup {
    fn default() -> Self {
        let model = ManipulatorModel::default();
        let home = crate::clik::default_home(&model);
        let gains = Gains::uniform(model.task_dim(), 100.0, 20.0).expect("positive gains");
        Self { model, home, gains }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalReason {
    Failure,
    Timeout,
    Singularity,
}

impl std::fmt::Display for TerminalReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Failure => "failure",
            Self::Timeout => "timeout",
            Self::Singularity => "singularity",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub steps_survived: usize,
    pub terminal_reason: TerminalReason,
    pub cumulative_reward: f64,
}

/// One simulated control step, as reported to rollout observers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub u_cmd: f64,
    pub u_actual: f64,
    pub state: ContinuousState,
}

/// +1 for surviving a step, -1 for falling.
pub fn reward(next: Observation) -> f64 {
    match next {
        Observation::State(_) => 1.0,
        Observation::Failure => -1.0,
    }
}

/// Independent RNG stream for one episode, so results never depend on the
/// order in which episodes run.
pub fn episode_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The pendulum on the flange, with its tracking channel.
#[derive(Debug, Clone)]
pub struct PendulumEnv {
    base: PendulumParams,
    params: PendulumParams,
    state: ContinuousState,
    channel: TrackingChannel,
    h: f64,
    param_noise: Option<Normal<f64>>,
}

impl PendulumEnv {
    pub fn new(base: PendulumParams, arm: &ArmSetup, cfg: &LearningConfig) -> Result<Self, ClikError> {
        let channel = match cfg.tracking_mode {
            TrackingMode::Ideal => TrackingChannel::ideal(arm.gains.clone(), cfg.error_noise),
            TrackingMode::Clik => TrackingChannel::arm(
                arm.model.clone(),
                arm.home.clone(),
                arm.gains.clone(),
                cfg.error_noise,
                cfg.h,
            )?,
        };
        Ok(Self {
            base,
            params: base,
            state: ContinuousState::default(),
            channel,
            h: cfg.h,
            param_noise: (cfg.param_noise_rel > 0.0)
                .then(|| Normal::new(0.0, cfg.param_noise_rel).expect("finite spread")),
        })
    }

    /// Draw this episode's I and b and a near-upright start.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> ContinuousState {
        self.params = self.base;
        if let Some(n) = self.param_noise {
            self.params.inertia *= n.sample(rng).exp();
            self.params.damping *= n.sample(rng).exp();
        }
        let half = INITIAL_PHI_DEG.to_radians();
        self.state = ContinuousState::new(0.0, 0.0, rng.random_range(-half..half), 0.0);
        self.channel.reset();
        self.state
    }

    pub fn state(&self) -> ContinuousState {
        self.state
    }

    pub fn params(&self) -> &PendulumParams {
        &self.params
    }

    /// Apply a commanded flange acceleration for one step; returns the
    /// achieved acceleration.
    pub fn step<R: Rng + ?Sized>(&mut self, u_cmd: f64, rng: &mut R) -> Result<f64, ClikError> {
        let u_actual = self.channel.step(u_cmd, rng)?;
        self.state = linearized_step(&self.state, u_actual, &self.params, self.h)
            .expect("validated parameters and finite inputs");
        Ok(u_actual)
    }
}

/// How an episode uses the table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeMode {
    pub epsilon: f64,
    pub learn: bool,
}

impl EpisodeMode {
    pub const GREEDY: Self = Self {
        epsilon: 0.0,
        learn: false,
    };
}

pub fn run_episode<R: Rng + ?Sized>(
    env: &mut PendulumEnv,
    table: &mut QTable,
    cfg: &LearningConfig,
    mode: EpisodeMode,
    rng: &mut R,
) -> EpisodeStats {
    run_episode_observed(env, table, cfg, mode, rng, |_| {})
}

/// [`run_episode`] with a callback on every simulated step. Each record holds
/// the command issued at `t - h` and the state it produced at `t`; the last
/// record of a failed episode is the failing state.
pub fn run_episode_observed<R: Rng + ?Sized>(
    env: &mut PendulumEnv,
    table: &mut QTable,
    cfg: &LearningConfig,
    mode: EpisodeMode,
    rng: &mut R,
    mut observe: impl FnMut(&StepRecord),
) -> EpisodeStats {
    let start = env.reset(rng);
    let mut current = discretize(&start)
        .state()
        .expect("initial state lies inside the limits")
        .index();
    let mut stats = EpisodeStats {
        steps_survived: 0,
        terminal_reason: TerminalReason::Timeout,
        cumulative_reward: 0.0,
    };

    for step in 1..=cfg.max_steps {
        let action = select_action(table, current, mode.epsilon, rng);
        let u_cmd = ACTIONS[action];
        let u_actual = match env.step(u_cmd, rng) {
            Ok(u) => u,
            Err(_) => {
                stats.terminal_reason = TerminalReason::Singularity;
                break;
            }
        };
        let state = env.state();
        observe(&StepRecord {
            t: step as f64 * cfg.h,
            u_cmd,
            u_actual,
            state,
        });
        let next = discretize(&state);
        let r = reward(next);
        stats.cumulative_reward += r;
        let next_idx = next.state().map(|s| s.index());
        if mode.learn {
            table.update(current, action, r, next_idx, cfg.alpha, cfg.gamma);
        }
        match next_idx {
            Some(idx) => {
                stats.steps_survived += 1;
                current = idx;
            }
            None => {
                stats.terminal_reason = TerminalReason::Failure;
                break;
            }
        }
    }
    stats
}
