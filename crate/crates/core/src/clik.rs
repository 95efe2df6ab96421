//! Second-order closed-loop inverse kinematics for a planar serial arm.
//!
//! The arm stands in for a non-redundant manipulator: with `n` joints the task
//! space has `n` dimensions (planar position for two links, position plus
//! orientation for three), so the Jacobian is square and is inverted directly.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Rows of the Jacobian are scaled to unit norm before this test.
pub const SINGULARITY_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClikError {
    #[error("near-singular Jacobian (|det| = {det:.3e} after row normalization)")]
    Singular { det: f64 },
    #[error("dimension mismatch: expected {expected}, got {got} for {what}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid arm model: {0}")]
    InvalidModel(String),
    #[error("invalid gains: {0}")]
    InvalidGains(String),
}

/// Planar serial arm with 2 or 3 revolute joints.
#[derive(Debug, Clone, PartialEq)]
pub struct ManipulatorModel {
    link_lengths: Vec<f64>,
}

impl Default for ManipulatorModel {
    fn default() -> Self {
        Self {
            link_lengths: vec![0.4, 0.4],
        }
    }
}

impl ManipulatorModel {
    pub fn new(link_lengths: Vec<f64>) -> Result<Self, ClikError> {
        if !(2..=3).contains(&link_lengths.len()) {
            return Err(ClikError::InvalidModel(format!(
                "{} links (only 2 or 3 supported)",
                link_lengths.len()
            )));
        }
        if let Some(l) = link_lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(ClikError::InvalidModel(format!("link length {l}")));
        }
        Ok(Self { link_lengths })
    }

    pub fn link_lengths(&self) -> &[f64] {
        &self.link_lengths
    }

    pub fn dof(&self) -> usize {
        self.link_lengths.len()
    }

    /// Equal to `dof()`: planar position, plus orientation for three links.
    pub fn task_dim(&self) -> usize {
        self.dof()
    }

    fn check(&self, what: &'static str, v: &DVector<f64>) -> Result<(), ClikError> {
        if v.len() != self.dof() {
            return Err(ClikError::Dimension {
                what,
                expected: self.dof(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Absolute link angles (cumulative joint sums).
    fn link_angles(&self, q: &DVector<f64>) -> Vec<f64> {
        q.iter()
            .scan(0.0, |acc, qi| {
                *acc += qi;
                Some(*acc)
            })
            .collect()
    }

    /// Flange pose: `[x, y]`, or `[x, y, orientation]` for three links.
    pub fn forward_kinematics(&self, q: &DVector<f64>) -> DVector<f64> {
        let angles = self.link_angles(q);
        let mut pose = DVector::zeros(self.task_dim());
        for (l, a) in self.link_lengths.iter().zip(&angles) {
            pose[0] += l * a.cos();
            pose[1] += l * a.sin();
        }
        if self.task_dim() == 3 {
            pose[2] = angles[2];
        }
        pose
    }

    /// Analytic Jacobian of [`forward_kinematics`](Self::forward_kinematics).
    pub fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dof();
        let angles = self.link_angles(q);
        let mut j = DMatrix::zeros(self.task_dim(), n);
        for col in 0..n {
            for (l, a) in self.link_lengths.iter().zip(&angles).skip(col) {
                j[(0, col)] -= l * a.sin();
                j[(1, col)] += l * a.cos();
            }
            if n == 3 {
                j[(2, col)] = 1.0;
            }
        }
        j
    }

    /// Time derivative of the Jacobian along the joint velocity `q_dot`.
    pub fn jacobian_dot(&self, q: &DVector<f64>, q_dot: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dof();
        let angles = self.link_angles(q);
        let rates = self.link_angles(q_dot);
        let mut jd = DMatrix::zeros(self.task_dim(), n);
        for col in 0..n {
            for k in col..n {
                let l = self.link_lengths[k];
                jd[(0, col)] -= l * angles[k].cos() * rates[k];
                jd[(1, col)] -= l * angles[k].sin() * rates[k];
            }
        }
        jd
    }
}

/// Determinant of `j` after scaling each row to unit norm.
pub fn normalized_determinant(j: &DMatrix<f64>) -> f64 {
    let mut scaled = j.clone();
    for mut row in scaled.row_iter_mut() {
        let norm = row.norm();
        if norm == 0.0 {
            return 0.0;
        }
        row /= norm;
    }
    scaled.determinant()
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub q_dot: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, q_dot: DVector<f64>) -> Self {
        Self { q, q_dot }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            q_dot: DVector::zeros(n),
        }
    }
}

/// Diagonal proportional and derivative gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    pub kp: DVector<f64>,
    pub kd: DVector<f64>,
}

impl Gains {
    pub fn uniform(dim: usize, kp: f64, kd: f64) -> Result<Self, ClikError> {
        let g = Self {
            kp: DVector::from_element(dim, kp),
            kd: DVector::from_element(dim, kd),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ClikError> {
        if self.kp.len() != self.kd.len() {
            return Err(ClikError::InvalidGains("kp and kd differ in length".into()));
        }
        if self
            .kp
            .iter()
            .chain(self.kd.iter())
            .any(|g| !(g.is_finite() && *g > 0.0))
        {
            return Err(ClikError::InvalidGains("gains must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingError {
    pub e: DVector<f64>,
    pub e_dot: DVector<f64>,
}

impl TrackingError {
    pub fn zero(dim: usize) -> Self {
        Self {
            e: DVector::zeros(dim),
            e_dot: DVector::zeros(dim),
        }
    }
}

/// Joint accelerations `J^-1 (Gamma + Kd e_dot + Kp e - J_dot q_dot)`.
pub fn clik_joint_accel(
    model: &ManipulatorModel,
    js: &JointState,
    gamma_cmd: &DVector<f64>,
    err: &TrackingError,
    gains: &Gains,
) -> Result<DVector<f64>, ClikError> {
    model.check("q", &js.q)?;
    model.check("q_dot", &js.q_dot)?;
    model.check("task acceleration", gamma_cmd)?;
    model.check("e", &err.e)?;
    model.check("e_dot", &err.e_dot)?;
    model.check("kp", &gains.kp)?;
    model.check("kd", &gains.kd)?;

    let j = model.jacobian(&js.q);
    let det = normalized_determinant(&j);
    if det.abs() <= SINGULARITY_THRESHOLD {
        return Err(ClikError::Singular { det: det.abs() });
    }
    let jd = model.jacobian_dot(&js.q, &js.q_dot);
    let rhs = gamma_cmd + gains.kd.component_mul(&err.e_dot) + gains.kp.component_mul(&err.e)
        - jd * &js.q_dot;
    j.lu().solve(&rhs).ok_or(ClikError::Singular { det: 0.0 })
}

/// Flange acceleration `J q_ddot + J_dot q_dot`.
pub fn eef_accel(model: &ManipulatorModel, js: &JointState, q_ddot: &DVector<f64>) -> DVector<f64> {
    model.jacobian(&js.q) * q_ddot + model.jacobian_dot(&js.q, &js.q_dot) * &js.q_dot
}

/// Projection of a task acceleration onto the base x axis.
pub fn tracking_accel(gamma_actual: &DVector<f64>) -> f64 {
    gamma_actual[0]
}

/// Achieved x acceleration for a commanded `u_cmd` under tracking error `err`.
pub fn track_command(
    model: &ManipulatorModel,
    js: &JointState,
    u_cmd: f64,
    err: &TrackingError,
    gains: &Gains,
) -> Result<f64, ClikError> {
    let mut gamma = DVector::zeros(model.task_dim());
    gamma[0] = u_cmd;
    let q_ddot = clik_joint_accel(model, js, &gamma, err, gains)?;
    Ok(tracking_accel(&eef_accel(model, js, &q_ddot)))
}

/// Default home configuration: elbow at a right angle, flange on the base x axis.
pub fn default_home(model: &ManipulatorModel) -> DVector<f64> {
    match model.dof() {
        2 => DVector::from_vec(vec![-std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2]),
        _ => DVector::from_vec(vec![
            -std::f64::consts::FRAC_PI_4,
            std::f64::consts::FRAC_PI_2,
            -std::f64::consts::FRAC_PI_4,
        ]),
    }
}

#[derive(Debug, Clone)]
enum Channel {
    /// Closure identity applied directly; error is injected noise only.
    Ideal,
    /// Arm state integrated at `h`, following a reference built from the
    /// commanded accelerations.
    Arm {
        model: ManipulatorModel,
        home: DVector<f64>,
        js: JointState,
        reference: DVector<f64>,
        reference_vel: DVector<f64>,
        h: f64,
    },
}

/// Maps commanded flange accelerations to achieved ones, one per control step.
///
/// Owned by a single environment; holds the arm state in the CLIK mode.
#[derive(Debug, Clone)]
pub struct TrackingChannel {
    channel: Channel,
    gains: Gains,
    noise: Option<Normal<f64>>,
}

impl TrackingChannel {
    pub fn ideal(gains: Gains, noise_std: f64) -> Self {
        Self {
            channel: Channel::Ideal,
            gains,
            noise: noise_dist(noise_std),
        }
    }

    pub fn arm(
        model: ManipulatorModel,
        home: DVector<f64>,
        gains: Gains,
        noise_std: f64,
        h: f64,
    ) -> Result<Self, ClikError> {
        model.check("home", &home)?;
        model.check("kp", &gains.kp)?;
        let reference = model.forward_kinematics(&home);
        let dim = model.task_dim();
        Ok(Self {
            channel: Channel::Arm {
                js: JointState::at_rest(home.clone()),
                home,
                model,
                reference,
                reference_vel: DVector::zeros(dim),
                h,
            },
            gains,
            noise: noise_dist(noise_std),
        })
    }

    /// Return the arm to its home configuration at rest.
    pub fn reset(&mut self) {
        if let Channel::Arm {
            model,
            home,
            js,
            reference,
            reference_vel,
            ..
        } = &mut self.channel
        {
            *js = JointState::at_rest(home.clone());
            *reference = model.forward_kinematics(home);
            reference_vel.fill(0.0);
        }
    }

    pub fn joint_state(&self) -> Option<&JointState> {
        match &self.channel {
            Channel::Arm { js, .. } => Some(js),
            Channel::Ideal => None,
        }
    }

    /// Advance one control step and return the achieved x acceleration.
    pub fn step<R: Rng + ?Sized>(&mut self, u_cmd: f64, rng: &mut R) -> Result<f64, ClikError> {
        let noise = self.noise;
        let mut jitter = |dim: usize| match noise {
            Some(n) => DVector::from_fn(dim, |_, _| n.sample(rng)),
            None => DVector::zeros(dim),
        };
        match &mut self.channel {
            Channel::Ideal => {
                let dim = self.gains.kp.len();
                let mut gamma = DVector::zeros(dim);
                gamma[0] = u_cmd;
                let err = TrackingError {
                    e: jitter(dim),
                    e_dot: DVector::zeros(dim),
                };
                let achieved = gamma + self.gains.kd.component_mul(&err.e_dot)
                    + self.gains.kp.component_mul(&err.e);
                Ok(tracking_accel(&achieved))
            }
            Channel::Arm {
                model,
                js,
                reference,
                reference_vel,
                h,
                ..
            } => {
                let dim = model.task_dim();
                let mut gamma = DVector::zeros(dim);
                gamma[0] = u_cmd;
                let pose = model.forward_kinematics(&js.q);
                let vel = model.jacobian(&js.q) * &js.q_dot;
                let err = TrackingError {
                    e: &*reference - pose + jitter(dim),
                    e_dot: &*reference_vel - vel,
                };
                let q_ddot = clik_joint_accel(model, js, &gamma, &err, &self.gains)?;
                let achieved = tracking_accel(&eef_accel(model, js, &q_ddot));

                js.q_dot += &q_ddot * *h;
                js.q += &js.q_dot * *h;
                *reference_vel += &gamma * *h;
                *reference += &*reference_vel * *h;
                Ok(achieved)
            }
        }
    }
}

fn noise_dist(std: f64) -> Option<Normal<f64>> {
    (std > 0.0).then(|| Normal::new(0.0, std).expect("noise std is finite and positive"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn two_link() -> ManipulatorModel {
        ManipulatorModel::new(vec![1.0, 1.0]).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn jacobian_fixtures() {
        let m = two_link();
        let j = m.jacobian(&v(&[PI / 2.0, -PI / 2.0]));
        let expected = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, 1.0]);
        assert!((j - expected).abs().max() < 1e-12);

        let j0 = m.jacobian(&v(&[0.0, 0.0]));
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 1.0]);
        assert!((&j0 - expected).abs().max() < 1e-12);
        assert_eq!(normalized_determinant(&j0), 0.0);
    }

    #[test]
    fn jacobian_dot_fixture() {
        let m = two_link();
        let jd = m.jacobian_dot(&v(&[PI / 2.0, -PI / 2.0]), &v(&[1.0, 0.0]));
        assert!((jd[(0, 0)] - -1.0).abs() < 1e-12);
        assert!(m.jacobian_dot(&v(&[0.3, 0.2]), &v(&[0.0, 0.0])).abs().max() == 0.0);
    }

    #[test]
    fn jacobian_dot_is_linear_in_rate() {
        let m = ManipulatorModel::new(vec![0.4, 0.3, 0.2]).unwrap();
        let q = v(&[0.1, 0.7, -0.4]);
        let qd = v(&[0.5, -1.0, 2.0]);
        let a = m.jacobian_dot(&q, &qd) * 3.0;
        let b = m.jacobian_dot(&q, &(qd * 3.0));
        assert!((a - b).abs().max() < 1e-12);
    }

    #[test]
    fn singular_configuration_rejected() {
        let m = two_link();
        let js = JointState::at_rest(v(&[0.0, 0.0]));
        let gains = Gains::uniform(2, 100.0, 20.0).unwrap();
        let err = clik_joint_accel(&m, &js, &v(&[1.0, 0.0]), &TrackingError::zero(2), &gains);
        assert!(matches!(err, Err(ClikError::Singular { .. })));
    }

    #[test]
    fn zero_error_rest_is_pure_inverse() {
        let m = ManipulatorModel::default();
        let js = JointState::at_rest(default_home(&m));
        let gains = Gains::uniform(2, 100.0, 20.0).unwrap();
        let gamma = v(&[1.3, -0.4]);
        let qdd = clik_joint_accel(&m, &js, &gamma, &TrackingError::zero(2), &gains).unwrap();
        assert!((m.jacobian(&js.q) * &qdd - &gamma).abs().max() < 1e-12);
        assert!((eef_accel(&m, &js, &qdd) - gamma).abs().max() < 1e-12);
        assert_eq!(eef_accel(&m, &js, &DVector::zeros(2)).abs().max(), 0.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = ManipulatorModel::default();
        let js = JointState::at_rest(v(&[0.1, 0.2, 0.3]));
        let gains = Gains::uniform(2, 1.0, 1.0).unwrap();
        assert!(matches!(
            clik_joint_accel(&m, &js, &v(&[0.0, 0.0]), &TrackingError::zero(2), &gains),
            Err(ClikError::Dimension { .. })
        ));
        assert!(ManipulatorModel::new(vec![1.0]).is_err());
        assert!(ManipulatorModel::new(vec![1.0, -1.0]).is_err());
        assert!(Gains::uniform(2, 0.0, 1.0).is_err());
    }

    #[test]
    fn tracking_selector() {
        assert_eq!(tracking_accel(&v(&[1.5, 0.2])), 1.5);
        assert_eq!(tracking_accel(&v(&[0.0, 0.0, 0.0])), 0.0);
    }

    #[test]
    fn position_error_shifts_tracking() {
        let m = ManipulatorModel::default();
        let js = JointState::new(default_home(&m), v(&[0.3, -0.2]));
        let gains = Gains::uniform(2, 100.0, 20.0).unwrap();
        let err = TrackingError {
            e: v(&[0.001, 0.0]),
            e_dot: v(&[0.0, 0.0]),
        };
        let u = track_command(&m, &js, 0.5, &err, &gains).unwrap();
        assert!((u - 0.6).abs() < 1e-10);
        let u = track_command(&m, &js, 0.5, &TrackingError::zero(2), &gains).unwrap();
        assert!((u - 0.5).abs() < 1e-12);
    }

    #[test]
    fn noiseless_channels_track_exactly() {
        let m = ManipulatorModel::default();
        let gains = Gains::uniform(2, 100.0, 20.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ideal = TrackingChannel::ideal(gains.clone(), 0.0);
        let mut arm = TrackingChannel::arm(m.clone(), default_home(&m), gains, 0.0, 0.01).unwrap();
        for k in 0..200 {
            // zero-mean command keeps the flange well inside the workspace
            let u = if k % 40 < 10 || k % 40 >= 30 { 1.5 } else { -1.5 };
            assert_eq!(ideal.step(u, &mut rng).unwrap(), u);
            // the arm is integrated in joint space and the reference in task
            // space, so a small discretization gap feeds back through Kp, Kd
            let got = arm.step(u, &mut rng).unwrap();
            assert!((got - u).abs() < 1e-2, "step {k}: {got} vs {u}");
        }
        arm.reset();
        assert_eq!(arm.joint_state().unwrap().q, default_home(&m));
    }

    #[test]
    fn ideal_channel_noise_is_zero_mean() {
        let gains = Gains::uniform(2, 100.0, 20.0).unwrap();
        let sigma = 1e-3;
        let mut ch = TrackingChannel::ideal(gains, sigma);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| ch.step(0.0, &mut rng).unwrap()).sum::<f64>() / n as f64;
        // achieved noise scale is kp * sigma
        assert!(mean.abs() < 3.0 * 100.0 * sigma / (n as f64).sqrt());
    }
}
