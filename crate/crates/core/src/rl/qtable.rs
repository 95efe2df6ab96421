use rand::Rng;

use super::discretize::STATE_COUNT;

/// Flange acceleration commands, m/s^2. Zero is not an action.
pub const ACTIONS: [f64; 8] = [-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0];
pub const ACTION_COUNT: usize = ACTIONS.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId(u8);

impl ActionId {
    pub fn new(index: usize) -> Option<Self> {
        (index < ACTION_COUNT).then_some(Self(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn acceleration(self) -> f64 {
        ACTIONS[self.index()]
    }
}

/// Dense state-action value table, zero-initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    /// 270 states by 8 actions.
    pub fn pendulum() -> Self {
        Self::new(STATE_COUNT, ACTION_COUNT)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.n_actions + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action; ties go to the lowest index.
    pub fn argmax(&self, state: usize) -> usize {
        let row = self.row(state);
        let mut best = 0;
        for (a, v) in row.iter().enumerate().skip(1) {
            if *v > row[best] {
                best = a;
            }
        }
        best
    }

    /// One tabular Q-learning update. `next = None` marks a terminal transition,
    /// which contributes no bootstrap value.
    pub fn update(
        &mut self,
        state: usize,
        action: usize,
        reward: f64,
        next: Option<usize>,
        alpha: f64,
        gamma: f64,
    ) {
        let bootstrap = next.map_or(0.0, |s| self.max_value(s));
        let q = self.get(state, action);
        self.set(
            state,
            action,
            (1.0 - alpha) * q + alpha * (reward + gamma * bootstrap),
        );
    }
}

/// Epsilon-greedy choice over a table row.
pub fn select_action<R: Rng + ?Sized>(table: &QTable, state: usize, epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..table.n_actions())
    } else {
        table.argmax(state)
    }
}
