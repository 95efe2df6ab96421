//! Bin layout of the continuous state.
//!
//! Interval ends are open or closed exactly as listed below; angles are
//! compared in radians against degree constants converted once.

use crate::dynamics::{is_failure, ContinuousState};

pub const PHI_BINS: usize = 6;
pub const PHIDOT_BINS: usize = 5;
pub const X_BINS: usize = 3;
pub const XDOT_BINS: usize = 3;
pub const STATE_COUNT: usize = PHI_BINS * PHIDOT_BINS * X_BINS * XDOT_BINS;

/// Bin indices of a non-failed state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DiscreteState {
    pub phi_bin: u8,
    pub phidot_bin: u8,
    pub x_bin: u8,
    pub xdot_bin: u8,
}

/// Either a bin tuple or the terminal failure outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    State(DiscreteState),
    Failure,
}

impl Observation {
    pub fn state(self) -> Option<DiscreteState> {
        match self {
            Observation::State(s) => Some(s),
            Observation::Failure => None,
        }
    }
}

impl DiscreteState {
    pub fn new(phi_bin: u8, phidot_bin: u8, x_bin: u8, xdot_bin: u8) -> Option<Self> {
        ((phi_bin as usize) < PHI_BINS
            && (phidot_bin as usize) < PHIDOT_BINS
            && (x_bin as usize) < X_BINS
            && (xdot_bin as usize) < XDOT_BINS)
            .then_some(Self {
                phi_bin,
                phidot_bin,
                x_bin,
                xdot_bin,
            })
    }

    /// Row-major index with `xdot_bin` fastest.
    pub fn index(&self) -> usize {
        ((self.phi_bin as usize * PHIDOT_BINS + self.phidot_bin as usize) * X_BINS
            + self.x_bin as usize)
            * XDOT_BINS
            + self.xdot_bin as usize
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        if idx >= STATE_COUNT {
            return None;
        }
        let xdot = idx % XDOT_BINS;
        let rest = idx / XDOT_BINS;
        let x = rest % X_BINS;
        let rest = rest / X_BINS;
        let phidot = rest % PHIDOT_BINS;
        let phi = rest / PHIDOT_BINS;
        Some(Self {
            phi_bin: phi as u8,
            phidot_bin: phidot as u8,
            x_bin: x as u8,
            xdot_bin: xdot as u8,
        })
    }

    pub fn all() -> impl Iterator<Item = DiscreteState> {
        (0..STATE_COUNT).filter_map(Self::from_index)
    }
}

fn deg(v: f64) -> f64 {
    v.to_radians()
}

/// ]-11,-5[ [-5,-1[ [-1,0[ [0,1[ [1,5[ [5,11[ degrees.
fn phi_bin(phi: f64) -> u8 {
    if phi < deg(-5.0) {
        0
    } else if phi < deg(-1.0) {
        1
    } else if phi < 0.0 {
        2
    } else if phi < deg(1.0) {
        3
    } else if phi < deg(5.0) {
        4
    } else {
        5
    }
}

/// ]-inf,-50] ]-50,-10] ]-10,10[ [10,50[ [50,inf[ degrees per second.
fn phidot_bin(phi_dot: f64) -> u8 {
    if phi_dot <= deg(-50.0) {
        0
    } else if phi_dot <= deg(-10.0) {
        1
    } else if phi_dot < deg(10.0) {
        2
    } else if phi_dot < deg(50.0) {
        3
    } else {
        4
    }
}

/// ]-0.22,-0.08] ]-0.08,0.08[ [0.08,0.22[ metres.
fn x_bin(x: f64) -> u8 {
    if x <= -0.08 {
        0
    } else if x < 0.08 {
        1
    } else {
        2
    }
}

/// ]-inf,-0.5] ]-0.5,0.5[ [0.5,inf[ metres per second.
fn xdot_bin(x_dot: f64) -> u8 {
    if x_dot <= -0.5 {
        0
    } else if x_dot < 0.5 {
        1
    } else {
        2
    }
}

pub fn discretize(s: &ContinuousState) -> Observation {
    if is_failure(s) {
        return Observation::Failure;
    }
    Observation::State(DiscreteState {
        phi_bin: phi_bin(s.phi),
        phidot_bin: phidot_bin(s.phi_dot),
        x_bin: x_bin(s.x),
        xdot_bin: xdot_bin(s.x_dot),
    })
}
