//! The cyclic template MDP and random-policy transition models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DtgError, HuState};

/// Steps of the random-policy rollout used to build a transition model.
pub const DEFAULT_MODEL_STEPS: usize = 5000;

/// States are template indices; action `a` moves state `i` to
/// `(i + a) mod n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateMdp {
    states: Vec<HuState>,
    actions: Vec<i64>,
}

impl TemplateMdp {
    /// Every action must move the state.
    pub fn new(states: Vec<HuState>, actions: Vec<i64>) -> Result<Self, DtgError> {
        let n = states.len() as i64;
        if n < 2 {
            return Err(DtgError::InvalidParam(format!(
                "an MDP needs at least 2 states, got {n}"
            )));
        }
        if actions.is_empty() {
            return Err(DtgError::InvalidParam(
                "an MDP needs at least one action".into(),
            ));
        }
        if let Some(a) = actions.iter().find(|a| a.rem_euclid(n) == 0) {
            return Err(DtgError::InvalidParam(format!(
                "action {a} leaves every state in place"
            )));
        }
        Ok(Self { states, actions })
    }

    /// Actions `-10..=-1` and `1..=10`.
    pub fn with_standard_actions(states: Vec<HuState>) -> Result<Self, DtgError> {
        Self::new(states, standard_actions())
    }

    pub fn states(&self) -> &[HuState] {
        &self.states
    }

    pub fn actions(&self) -> &[i64] {
        &self.actions
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    /// Successor of `state` under the action at `action_index`.
    pub fn next(&self, state: usize, action_index: usize) -> usize {
        (state as i64 + self.actions[action_index]).rem_euclid(self.states.len() as i64) as usize
    }
}

pub fn standard_actions() -> Vec<i64> {
    (-10..=-1).chain(1..=10).collect()
}

/// One stored step `[x_i, x_{i+1}, a, r]`, states by index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub next: usize,
    pub action: i64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    states: Vec<HuState>,
    transitions: Vec<Transition>,
}

impl TransitionModel {
    pub fn states(&self) -> &[HuState] {
        &self.states
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Visits per state over the rollout (counting each transition's origin).
    pub fn visit_counts(&self) -> Vec<u64> {
        let mut v = vec![0; self.states.len()];
        for t in &self.transitions {
            v[t.state] += 1;
        }
        v
    }
}

/// Rolls out a uniform random policy for `steps` steps from a uniformly
/// drawn start state. Rewards are stored as 0.
pub fn build_transition_model(
    mdp: &TemplateMdp,
    steps: usize,
    seed: u64,
) -> Result<TransitionModel, DtgError> {
    if steps == 0 {
        return Err(DtgError::EmptyModel);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = rng.random_range(0..mdp.n_states());
    let mut transitions = Vec::with_capacity(steps);
    for _ in 0..steps {
        let a = rng.random_range(0..mdp.n_actions());
        let next = mdp.next(state, a);
        transitions.push(Transition {
            state,
            next,
            action: mdp.actions()[a],
            reward: 0.0,
        });
        state = next;
    }
    Ok(TransitionModel {
        states: mdp.states().to_vec(),
        transitions,
    })
}
