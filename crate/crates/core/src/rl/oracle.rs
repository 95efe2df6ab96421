//! Small explicit MDPs and a value-iteration solver, used to cross-check the
//! tabular update against the Bellman optimality fixed point.

use rand::Rng;

use super::qtable::QTable;

/// Finite MDP with known dynamics. `transitions[s][a]` lists
/// `(next_state, probability)`; `rewards[s][a]` is the expected reward.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
    pub rewards: Vec<Vec<f64>>,
    pub gamma: f64,
}

impl TabularMdp {
    pub fn n_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn n_actions(&self) -> usize {
        self.rewards.first().map_or(0, Vec::len)
    }

    /// Random ergodic MDP: every transition row puts mass on at least two states.
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, gamma: f64, rng: &mut R) -> Self {
        let mut transitions = Vec::with_capacity(n_states);
        let mut rewards = Vec::with_capacity(n_states);
        for _ in 0..n_states {
            let mut t_row = Vec::with_capacity(n_actions);
            let mut r_row = Vec::with_capacity(n_actions);
            for _ in 0..n_actions {
                let a = rng.random_range(0..n_states);
                let b = (a + 1 + rng.random_range(0..n_states - 1)) % n_states;
                let p = rng.random_range(0.2..0.8);
                t_row.push(vec![(a, p), (b, 1.0 - p)]);
                r_row.push(rng.random_range(-1.0..1.0));
            }
            transitions.push(t_row);
            rewards.push(r_row);
        }
        Self {
            transitions,
            rewards,
            gamma,
        }
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        let mut u: f64 = rng.random();
        let row = &self.transitions[s][a];
        for &(next, p) in row {
            if u < p {
                return next;
            }
            u -= p;
        }
        row.last().expect("non-empty transition row").0
    }
}

/// Bellman optimality iteration until successive sweeps differ by less than `tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> QTable {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut q = QTable::new(ns, na);
    loop {
        let mut next = QTable::new(ns, na);
        let mut delta: f64 = 0.0;
        for s in 0..ns {
            for a in 0..na {
                let future: f64 = mdp.transitions[s][a]
                    .iter()
                    .map(|&(s2, p)| p * q.max_value(s2))
                    .sum();
                let v = mdp.rewards[s][a] + mdp.gamma * future;
                delta = delta.max((v - q.get(s, a)).abs());
                next.set(s, a, v);
            }
        }
        q = next;
        if delta < tol {
            return q;
        }
    }
}

/// Tabular Q-learning under a uniform-random behaviour policy with a
/// `1 / visits(s, a)` step size.
pub fn q_learning_uniform<R: Rng + ?Sized>(mdp: &TabularMdp, steps: usize, rng: &mut R) -> QTable {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut q = QTable::new(ns, na);
    let mut visits = vec![0u64; ns * na];
    let mut s = 0;
    for _ in 0..steps {
        let a = rng.random_range(0..na);
        let s2 = mdp.sample_next(s, a, rng);
        let n = &mut visits[s * na + a];
        *n += 1;
        q.update(s, a, mdp.rewards[s][a], Some(s2), 1.0 / *n as f64, mdp.gamma);
        s = s2;
    }
    q
}

pub fn max_abs_diff(a: &QTable, b: &QTable) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Two states, two actions, deterministic: action 0 stays, action 1 swaps.
    /// Reward 1 for staying in state 1, 0 otherwise.
    fn chain(gamma: f64) -> TabularMdp {
        TabularMdp {
            transitions: vec![
                vec![vec![(0, 1.0)], vec![(1, 1.0)]],
                vec![vec![(1, 1.0)], vec![(0, 1.0)]],
            ],
            rewards: vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            gamma,
        }
    }

    #[test]
    fn chain_closed_form() {
        let g: f64 = 0.9;
        let q = value_iteration(&chain(g), 1e-12);
        let v1 = 1.0 / (1.0 - g);
        // Q*(1,stay) = 1/(1-g); Q*(0,swap) = g/(1-g); Q*(0,stay) = g^2/(1-g); Q*(1,swap) = g^2/(1-g)
        assert!((q.get(1, 0) - v1).abs() < 1e-9);
        assert!((q.get(0, 1) - g * v1).abs() < 1e-9);
        assert!((q.get(0, 0) - g * g * v1).abs() < 1e-9);
        assert!((q.get(1, 1) - g * g * v1).abs() < 1e-9);
    }

    #[test]
    fn myopic_equals_rewards() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mdp = TabularMdp::random(10, 3, 0.0, &mut rng);
        let q = value_iteration(&mdp, 1e-12);
        for s in 0..10 {
            for a in 0..3 {
                assert_eq!(q.get(s, a), mdp.rewards[s][a]);
            }
        }
    }

    #[test]
    fn transition_rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mdp = TabularMdp::random(20, 4, 0.5, &mut rng);
        for row in mdp.transitions.iter().flatten() {
            let total: f64 = row.iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert_ne!(row[0].0, row[1].0);
        }
    }
}
