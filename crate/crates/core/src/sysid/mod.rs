//! Estimation of the pendulum's inertia and damping from free-oscillation traces.
//!
//! The model trajectory is the RK4 solution of the damped pendulum, linearly
//! interpolated to the sample times. Inertia, damping, and the two initial
//! conditions are fit by simplex descent on the residual sum of squares. Only
//! the ratios `b/I` and `mgl/I` shape the trajectory, so `m`, `g`, `l` are held
//! fixed and set the scale of the fitted `I` and `b`.

pub mod nelder_mead;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dynamics::{
    natural_period, rk4_step, simulate_free_oscillation, ModelError, OscillationSample,
    PendulumParams,
};
use crate::par::{map_indexed, Execution};
use nelder_mead::{minimize, SimplexOptions};

/// Minimum sample count for a well-posed fit.
pub const MIN_SAMPLES: usize = 50;
/// Minimum trace length, in natural periods, for a well-posed fit.
pub const MIN_PERIODS: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SysidError {
    #[error("no samples")]
    Empty,
    #[error("sample times must be finite and strictly increasing (sample {0})")]
    NonMonotonic(usize),
    #[error("degenerate data: the angle never changes")]
    Degenerate,
    #[error("invalid candidate: {0}")]
    InvalidCandidate(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Constants held fixed during a fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedConstants {
    pub mass: f64,
    pub gravity: f64,
    pub length: f64,
}

impl FixedConstants {
    pub fn of(p: &PendulumParams) -> Self {
        Self {
            mass: p.mass,
            gravity: p.gravity,
            length: p.length,
        }
    }

    pub fn mgl(&self) -> f64 {
        self.mass * self.gravity * self.length
    }

    fn with(&self, inertia: f64, damping: f64) -> PendulumParams {
        PendulumParams {
            inertia,
            damping,
            mass: self.mass,
            gravity: self.gravity,
            length: self.length,
        }
    }
}

/// A point in fit space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub inertia: f64,
    pub damping: f64,
    pub theta0: f64,
    pub theta_dot0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub initial_guess: Candidate,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Integrator step; `None` picks `min(sample spacing, period / 100)`.
    pub h: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitWarning {
    /// Fewer than [`MIN_SAMPLES`] samples.
    FewSamples,
    /// Trace shorter than [`MIN_PERIODS`] natural periods of the initial guess.
    ShortTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: PendulumParams,
    pub theta0: f64,
    pub theta_dot0: f64,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<FitWarning>,
}

fn check_data(data: &[OscillationSample]) -> Result<(), SysidError> {
    if data.is_empty() {
        return Err(SysidError::Empty);
    }
    for (i, s) in data.iter().enumerate() {
        if !(s.t.is_finite() && s.theta.is_finite()) {
            return Err(SysidError::NonMonotonic(i));
        }
        if i > 0 && s.t <= data[i - 1].t {
            return Err(SysidError::NonMonotonic(i));
        }
    }
    Ok(())
}

fn check_candidate(c: &Candidate) -> Result<(), SysidError> {
    if !(c.inertia.is_finite() && c.inertia > 0.0) {
        return Err(SysidError::InvalidCandidate(format!("I = {}", c.inertia)));
    }
    if !(c.damping.is_finite() && c.damping >= 0.0) {
        return Err(SysidError::InvalidCandidate(format!("b = {}", c.damping)));
    }
    if !(c.theta0.is_finite() && c.theta_dot0.is_finite()) {
        return Err(SysidError::InvalidCandidate("non-finite initial condition".into()));
    }
    Ok(())
}

/// Simulated angle at each sample time, starting from the candidate's initial
/// condition at the first sample's time.
fn simulate_at(p: &PendulumParams, c: &Candidate, data: &[OscillationSample], h: f64) -> Vec<f64> {
    const SNAP: f64 = 1e-9;
    let t0 = data[0].t;
    let mut k = 0usize;
    let (mut theta, mut omega) = (c.theta0, c.theta_dot0);
    let mut out = Vec::with_capacity(data.len());
    for s in data {
        let pos = (s.t - t0) / h;
        let mut idx = pos.floor() as usize;
        let mut frac = pos - idx as f64;
        if frac > 1.0 - SNAP {
            idx += 1;
            frac = 0.0;
        }
        while k < idx {
            (theta, omega) = rk4_step(theta, omega, h, p);
            k += 1;
        }
        if frac < SNAP {
            out.push(theta);
        } else {
            let (next, _) = rk4_step(theta, omega, h, p);
            out.push(theta + frac * (next - theta));
        }
    }
    out
}

/// Model-minus-data residuals for `candidate`.
pub fn residuals(
    candidate: &Candidate,
    data: &[OscillationSample],
    fixed: &FixedConstants,
    h: f64,
) -> Result<Vec<f64>, SysidError> {
    check_candidate(candidate)?;
    check_data(data)?;
    if !(h.is_finite() && h > 0.0) {
        return Err(ModelError::BadStep(h).into());
    }
    let p = fixed.with(candidate.inertia, candidate.damping);
    p.validate()?;
    Ok(simulate_at(&p, candidate, data, h)
        .into_iter()
        .zip(data)
        .map(|(sim, d)| sim - d.theta)
        .collect())
}

fn min_spacing(data: &[OscillationSample]) -> f64 {
    data.windows(2)
        .map(|w| w[1].t - w[0].t)
        .fold(f64::INFINITY, f64::min)
}

/// Maps the unconstrained simplex coordinates to a candidate.
///
/// `[ln I, b / b_ref, theta0, theta_dot0 / omega_ref]`; the damping coordinate
/// enters through its absolute value so `b >= 0` always.
#[derive(Debug, Clone, Copy)]
struct Coordinates {
    b_ref: f64,
    omega_ref: f64,
}

impl Coordinates {
    fn encode(&self, c: &Candidate) -> Vec<f64> {
        vec![
            c.inertia.ln(),
            c.damping / self.b_ref,
            c.theta0,
            c.theta_dot0 / self.omega_ref,
        ]
    }

    fn decode(&self, z: &[f64]) -> Candidate {
        Candidate {
            inertia: z[0].exp(),
            damping: z[1].abs() * self.b_ref,
            theta0: z[2],
            theta_dot0: z[3] * self.omega_ref,
        }
    }
}

/// Fit `I`, `b`, and the initial condition to a trace.
///
/// The fit runs over growing prefixes of the trace (an eighth, a quarter, a
/// half, then all of it), each stage starting from the previous optimum, so
/// that a poor initial period estimate does not lock onto a neighbouring
/// phase-slipped minimum. Convergence is judged on the full-trace stage.
pub fn fit_parameters(
    data: &[OscillationSample],
    fixed: &FixedConstants,
    cfg: &FitConfig,
) -> Result<FitResult, SysidError> {
    check_data(data)?;
    check_candidate(&cfg.initial_guess)?;
    if !(cfg.tolerance.is_finite() && cfg.tolerance > 0.0) || cfg.max_iterations == 0 {
        return Err(SysidError::InvalidCandidate(
            "tolerance and max_iterations must be positive".into(),
        ));
    }
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.theta), hi.max(s.theta))
        });
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        return Err(SysidError::Degenerate);
    }

    let guess = cfg.initial_guess;
    let guess_params = fixed.with(guess.inertia, guess.damping);
    guess_params.validate()?;
    let period = natural_period(&guess_params);
    let span = data[data.len() - 1].t - data[0].t;

    let mut warnings = Vec::new();
    if data.len() < MIN_SAMPLES {
        warnings.push(FitWarning::FewSamples);
    }
    if span < MIN_PERIODS * period {
        warnings.push(FitWarning::ShortTrace);
    }

    let h = match cfg.h {
        Some(h) if h.is_finite() && h > 0.0 => h,
        Some(h) => return Err(ModelError::BadStep(h).into()),
        None if data.len() > 1 => min_spacing(data).min(period / 100.0),
        None => period / 100.0,
    };

    let omega_ref = 2.0 * std::f64::consts::PI / period;
    let coords = Coordinates {
        b_ref: if guess.damping > 0.0 {
            guess.damping
        } else {
            0.01 * guess.inertia * omega_ref
        },
        omega_ref,
    };
    let steps = [0.1, 0.2, 0.05, 0.05];

    let rss_on = |z: &[f64], window: &[OscillationSample]| -> f64 {
        let c = coords.decode(z);
        let p = fixed.with(c.inertia, c.damping);
        simulate_at(&p, &c, window, h)
            .iter()
            .zip(window)
            .map(|(sim, d)| (sim - d.theta).powi(2))
            .sum()
    };

    let prefix_len = |fraction: f64| {
        let end = data[0].t + span * fraction;
        data.partition_point(|s| s.t <= end)
            .max(MIN_SAMPLES.min(data.len()))
    };
    let mut stages: Vec<usize> = [0.125, 0.25, 0.5]
        .iter()
        .map(|&f| prefix_len(f))
        .filter(|&n| n < data.len())
        .collect();
    stages.dedup();
    stages.push(data.len());

    let warmup_budget = cfg.max_iterations / (2 * stages.len());
    let mut z = coords.encode(&guess);
    let mut used = 0;
    let mut last = None;
    for (i, &len) in stages.iter().enumerate() {
        let final_stage = i + 1 == stages.len();
        let budget = if final_stage {
            cfg.max_iterations - used
        } else {
            warmup_budget
        };
        let window = &data[..len];
        let opts = SimplexOptions {
            max_iterations: budget,
            tolerance: cfg.tolerance,
            ..Default::default()
        };
        let r = minimize(|z| rss_on(z, window), &z, &steps, &opts);
        used += r.iterations;
        z = r.x.clone();
        last = Some(r);
    }
    let r = last.expect("at least one stage");
    let best = coords.decode(&r.x);
    let initial_rss = rss_on(&coords.encode(&guess), data);
    // earlier stages optimize prefixes, so the full-trace result is not
    // guaranteed to beat the guess
    let (best, rss) = if r.value <= initial_rss {
        (best, r.value)
    } else {
        (guess, initial_rss)
    };

    Ok(FitResult {
        params: fixed.with(best.inertia, best.damping),
        theta0: best.theta0,
        theta_dot0: best.theta_dot0,
        rss,
        iterations: used,
        converged: r.converged,
        warnings,
    })
}

/// Fit many traces independently.
pub fn fit_batch(
    traces: &[Vec<OscillationSample>],
    fixed: &FixedConstants,
    cfg: &FitConfig,
    exec: Execution,
) -> Vec<Result<FitResult, SysidError>> {
    map_indexed(traces.len(), exec, |i| fit_parameters(&traces[i], fixed, cfg))
}

/// Encoder-like trace of a free oscillation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderSpec {
    pub duration: f64,
    pub sample_rate: f64,
    pub noise_std: f64,
    pub counts_per_rev: Option<u32>,
}

/// RK4 trajectory sampled at `sample_rate`, plus Gaussian noise, optionally
/// quantized to whole encoder counts. The integrator takes whole substeps per
/// sample, no longer than a hundredth of the natural period.
pub fn generate_synthetic_encoder_data<R: Rng + ?Sized>(
    p: &PendulumParams,
    theta0: f64,
    theta_dot0: f64,
    spec: &EncoderSpec,
    rng: &mut R,
) -> Result<Vec<OscillationSample>, SysidError> {
    if !(spec.sample_rate.is_finite() && spec.sample_rate > 0.0) {
        return Err(ModelError::BadStep(spec.sample_rate).into());
    }
    if !(spec.duration.is_finite() && spec.duration > 0.0) {
        return Err(ModelError::BadDuration {
            duration: spec.duration,
            h: 1.0 / spec.sample_rate,
        }
        .into());
    }
    p.validate()?;
    let spacing = 1.0 / spec.sample_rate;
    let substeps = (spacing / (natural_period(p) / 100.0)).ceil().max(1.0) as usize;
    let n = (spec.duration * spec.sample_rate + 1e-9).floor() as usize;
    let h = spacing / substeps as f64;

    let noise = (spec.noise_std > 0.0)
        .then(|| Normal::new(0.0, spec.noise_std).expect("finite noise"));
    let quantum = spec
        .counts_per_rev
        .filter(|c| *c > 0)
        .map(|c| 2.0 * std::f64::consts::PI / c as f64);

    let mut out = Vec::with_capacity(n + 1);
    let (mut theta, mut omega) = (theta0, theta_dot0);
    for k in 0..=n {
        if k > 0 {
            for _ in 0..substeps {
                (theta, omega) = rk4_step(theta, omega, h, p);
            }
        }
        let mut reading = theta;
        if let Some(dist) = noise {
            reading += dist.sample(rng);
        }
        if let Some(q) = quantum {
            reading = (reading / q).round() * q;
        }
        out.push(OscillationSample {
            t: k as f64 * spacing,
            theta: reading,
        });
    }
    Ok(out)
}

/// Convenience wrapper: a noiseless trace at spacing `h` via the dynamics module.
pub fn clean_trace(
    p: &PendulumParams,
    theta0: f64,
    theta_dot0: f64,
    h: f64,
    duration: f64,
) -> Result<Vec<OscillationSample>, SysidError> {
    Ok(simulate_free_oscillation(p, theta0, theta_dot0, h, duration)?.samples)
}
