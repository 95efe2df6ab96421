//! Training, greedy evaluation, and single-episode rollouts.

use super::env::{
    episode_rng, run_episode, run_episode_observed, ArmSetup, EpisodeMode, EpisodeStats,
    LearningConfig, PendulumEnv, StepRecord, TerminalReason,
};
use super::qtable::QTable;
use crate::clik::ClikError;
use crate::dynamics::PendulumParams;
use crate::par::{map_indexed, Execution};

/// Evaluation episodes draw from streams disjoint from training episodes.
const EVAL_STREAM_BASE: u64 = 1 << 62;
/// Checkpoint scoring uses a third, disjoint block of streams.
const CHECKPOINT_STREAM_BASE: u64 = 1 << 61;

/// Greedy score of a table snapshot taken during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    /// Number of training episodes completed when the snapshot was taken.
    pub episode: usize,
    pub median_steps: f64,
    pub mean_steps: f64,
}

impl Checkpoint {
    fn beats(&self, other: &Checkpoint) -> bool {
        (self.median_steps, self.mean_steps) >= (other.median_steps, other.mean_steps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    /// The best-scoring checkpoint, or the final table when checkpointing is off.
    pub table: QTable,
    pub final_table: QTable,
    pub curve: Vec<EpisodeStats>,
    pub selected: Option<Checkpoint>,
}

/// Run `cfg.episodes` learning episodes from a zero table. Episode `i` uses
/// RNG stream `i` of `cfg.seed`, so the result is a pure function of the inputs.
///
/// With `checkpoint_every > 0` the greedy table is scored after every
/// `checkpoint_every` episodes (and after the last) on `checkpoint_trials`
/// held-out episodes, and the best snapshot is returned as `table`. Later
/// snapshots win ties.
pub fn train(
    params: &PendulumParams,
    arm: &ArmSetup,
    cfg: &LearningConfig,
) -> Result<TrainingOutcome, ClikError> {
    let mut env = PendulumEnv::new(*params, arm, cfg)?;
    let mut table = QTable::pendulum();
    let mut curve = Vec::with_capacity(cfg.episodes);
    let mut best: Option<(Checkpoint, QTable)> = None;

    for episode in 0..cfg.episodes {
        let mode = EpisodeMode {
            epsilon: cfg.epsilon(episode),
            learn: true,
        };
        let mut rng = episode_rng(cfg.seed, episode as u64);
        curve.push(run_episode(&mut env, &mut table, cfg, mode, &mut rng));

        let done = episode + 1;
        let due = cfg.checkpoint_every > 0
            && cfg.checkpoint_trials > 0
            && (done % cfg.checkpoint_every == 0 || done == cfg.episodes);
        if due {
            let score = score_checkpoint(&table, done, &env, cfg);
            if best.as_ref().is_none_or(|(b, _)| score.beats(b)) {
                best = Some((score, table.clone()));
            }
        }
    }

    let (selected, chosen) = match best {
        Some((c, t)) => (Some(c), t),
        None => (None, table.clone()),
    };
    Ok(TrainingOutcome {
        table: chosen,
        final_table: table,
        curve,
        selected,
    })
}

fn score_checkpoint(table: &QTable, episode: usize, env: &PendulumEnv, cfg: &LearningConfig) -> Checkpoint {
    let trials = map_indexed(cfg.checkpoint_trials, Execution::Parallel, |k| {
        let mut env = env.clone();
        let mut frozen = table.clone();
        let mut rng = episode_rng(cfg.seed, CHECKPOINT_STREAM_BASE + k as u64);
        run_episode(&mut env, &mut frozen, cfg, EpisodeMode::GREEDY, &mut rng)
    });
    let steps: Vec<f64> = trials.iter().map(|t| t.steps_survived as f64).collect();
    Checkpoint {
        episode,
        median_steps: median(&steps).unwrap_or(0.0),
        mean_steps: steps.iter().sum::<f64>() / steps.len() as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub h: f64,
    pub trials: Vec<EpisodeStats>,
}

impl EvalSummary {
    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    fn survival_secs(&self) -> Vec<f64> {
        self.trials
            .iter()
            .map(|t| t.steps_survived as f64 * self.h)
            .collect()
    }

    /// Median survival time, s. `None` when no trials ran.
    pub fn median_survival(&self) -> Option<f64> {
        median(&self.survival_secs())
    }

    pub fn mean_survival(&self) -> Option<f64> {
        let v = self.survival_secs();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn count(&self, reason: TerminalReason) -> usize {
        self.trials
            .iter()
            .filter(|t| t.terminal_reason == reason)
            .count()
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Median of `steps_survived` over a slice of episodes.
pub fn median_steps(curve: &[EpisodeStats]) -> Option<f64> {
    median(&curve.iter().map(|s| s.steps_survived as f64).collect::<Vec<_>>())
}

/// Greedy, non-learning episodes over a frozen table. Trial `k` always uses the
/// same RNG stream, so parallel and sequential runs agree exactly.
pub fn evaluate(
    table: &QTable,
    n_trials: usize,
    params: &PendulumParams,
    arm: &ArmSetup,
    cfg: &LearningConfig,
    exec: Execution,
) -> Result<EvalSummary, ClikError> {
    let template = PendulumEnv::new(*params, arm, cfg)?;
    let trials = map_indexed(n_trials, exec, |k| {
        let mut env = template.clone();
        // greedy episodes never write to it
        let mut frozen = table.clone();
        let mut rng = episode_rng(cfg.seed, EVAL_STREAM_BASE + k as u64);
        run_episode(&mut env, &mut frozen, cfg, EpisodeMode::GREEDY, &mut rng)
    });
    Ok(EvalSummary { h: cfg.h, trials })
}

/// One greedy episode, recording every step. Uses the stream of evaluation trial 0.
pub fn rollout(
    table: &QTable,
    params: &PendulumParams,
    arm: &ArmSetup,
    cfg: &LearningConfig,
) -> Result<(Vec<StepRecord>, EpisodeStats), ClikError> {
    let mut env = PendulumEnv::new(*params, arm, cfg)?;
    let mut frozen = table.clone();
    let mut records = Vec::new();
    let mut rng = episode_rng(cfg.seed, EVAL_STREAM_BASE);
    let stats = run_episode_observed(
        &mut env,
        &mut frozen,
        cfg,
        EpisodeMode::GREEDY,
        &mut rng,
        |r| records.push(*r),
    );
    Ok((records, stats))
}
