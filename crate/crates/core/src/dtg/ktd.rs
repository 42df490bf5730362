//! Divergence-to-go learned by kernel temporal differences.
//!
//! `dtg(x, a) = D0 + alpha * sum_j delta_j k((x, a), (x_j, a_j))` over the
//! visited state-action pairs, with
//!
//! `delta_t = D(x_t, a_t) + gamma * max_a' dtg(x_{t+1}, a') - dtg(x_t, a_t)`.
//!
//! The kernel is a Gaussian correntropy kernel on state vectors times the
//! indicator that the actions agree. Actions are chosen epsilon-greedily on
//! dtg with uniform tie-breaking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DivergenceTable, DtgError, SelectionMethod, SelectionResult, TemplateMdp};

#[derive(Debug, Clone, PartialEq)]
pub struct DtgConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub d0: f64,
    pub epsilon: f64,
    /// Steps per episode.
    pub steps: usize,
    pub episodes: usize,
    /// Number of most visited states returned.
    pub n_select: usize,
    /// State-kernel width; the median pairwise state distance when `None`.
    pub kernel_sigma: Option<f64>,
}

impl Default for DtgConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            alpha: 0.1,
            d0: 0.0,
            epsilon: 0.1,
            steps: 2000,
            episodes: 1,
            n_select: 10,
            kernel_sigma: None,
        }
    }
}

impl DtgConfig {
    /// Everything except the discount.
    fn validate_common(&self) -> Result<(), DtgError> {
        let bad = |m: String| Err(DtgError::InvalidParam(m));
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !self.d0.is_finite() {
            return bad("D0 must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must be in [0, 1], got {}", self.epsilon));
        }
        if self.steps == 0 || self.episodes == 0 {
            return bad("steps and episodes must be positive".into());
        }
        if let Some(s) = self.kernel_sigma {
            if !(s.is_finite() && s > 0.0) {
                return bad(format!("kernel width must be > 0, got {s}"));
            }
        }
        Ok(())
    }

    /// The discount must lie strictly inside (0, 1).
    pub fn validate(&self) -> Result<(), DtgError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(DtgError::InvalidDiscount(self.gamma));
        }
        self.validate_common()
    }
}

/// Median of the pairwise distances between distinct states.
pub fn median_pairwise_distance(mdp: &TemplateMdp) -> f64 {
    let s = mdp.states();
    let mut d: Vec<f64> = (0..s.len())
        .flat_map(|i| (i + 1..s.len()).map(move |j| (i, j)))
        .map(|(i, j)| s[i].distance(&s[j]))
        .collect();
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m == 0 {
        return 0.0;
    }
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

/// Gaussian correntropy kernel between every pair of states.
pub fn state_kernel(mdp: &TemplateMdp, sigma: f64) -> Vec<f64> {
    let s = mdp.states();
    let n = s.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = (-s[i].distance_sq(&s[j]) / (2.0 * sigma * sigma)).exp();
        }
    }
    k
}

/// The learned kernel expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct DtgFunction {
    d0: f64,
    alpha: f64,
    n_states: usize,
    kernel: Vec<f64>,
    /// `(state, action index, delta)` per update, in order.
    support: Vec<(usize, usize, f64)>,
}

impl DtgFunction {
    fn new(d0: f64, alpha: f64, n_states: usize, kernel: Vec<f64>) -> Self {
        Self {
            d0,
            alpha,
            n_states,
            kernel,
            support: Vec::new(),
        }
    }

    /// Evaluates the expansion term by term.
    pub fn value(&self, state: usize, action_index: usize) -> f64 {
        let row = &self.kernel[state * self.n_states..(state + 1) * self.n_states];
        self.d0
            + self.alpha
                * self
                    .support
                    .iter()
                    .filter(|s| s.1 == action_index)
                    .map(|&(j, _, delta)| delta * row[j])
                    .sum::<f64>()
    }

    pub fn support(&self) -> &[(usize, usize, f64)] {
        &self.support
    }

    pub fn kernel_value(&self, a: usize, b: usize) -> f64 {
        self.kernel[a * self.n_states + b]
    }
}

/// Indices of the `n` largest counts, ties to the lower index.
pub fn top_visited(visits: &[u64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..visits.len()).collect();
    idx.sort_by(|&a, &b| visits[b].cmp(&visits[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

fn argmax_random_tie(values: &[f64], rng: &mut impl Rng) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..values.len()).filter(|&i| values[i] == best).collect();
    ties[rng.random_range(0..ties.len())]
}

/// Trains on a fixed divergence table. Unlike [`train_dtg`] this accepts
/// `gamma = 0`, which reduces dtg to the immediate divergence.
pub fn learn_dtg(
    mdp: &TemplateMdp,
    divergences: &DivergenceTable,
    config: &DtgConfig,
    seed: u64,
) -> Result<(DtgFunction, SelectionResult), DtgError> {
    config.validate_common()?;
    if !(0.0..1.0).contains(&config.gamma) {
        return Err(DtgError::InvalidDiscount(config.gamma));
    }
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    if divergences.n_states() != n || divergences.n_actions() != na {
        return Err(DtgError::InvalidParam(
            "divergence table does not match the MDP".into(),
        ));
    }
    if config.n_select > n {
        return Err(DtgError::InvalidParam(format!(
            "cannot select {} of {n} states",
            config.n_select
        )));
    }
    let sigma = match config.kernel_sigma {
        Some(s) => s,
        None => median_pairwise_distance(mdp),
    };
    let kernel = if sigma > 0.0 {
        state_kernel(mdp, sigma)
    } else {
        (0..n * n)
            .map(|i| if i / n == i % n { 1.0 } else { 0.0 })
            .collect()
    };
    let mut f = DtgFunction::new(config.d0, config.alpha, n, kernel);
    // table[s * na + a] tracks f.value(s, a) incrementally.
    let mut table = vec![config.d0; n * na];
    let mut visits = vec![0u64; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..config.episodes {
        let mut s = rng.random_range(0..n);
        for _ in 0..config.steps {
            visits[s] += 1;
            let a = if rng.random_bool(config.epsilon) {
                rng.random_range(0..na)
            } else {
                argmax_random_tie(&table[s * na..(s + 1) * na], &mut rng)
            };
            let next = mdp.next(s, a);
            let best_next = table[next * na..(next + 1) * na]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let delta = divergences.get(s, a) + config.gamma * best_next - table[s * na + a];
            f.support.push((s, a, delta));
            for x in 0..n {
                table[x * na + a] += config.alpha * delta * f.kernel[x * n + s];
            }
            s = next;
        }
    }
    let chosen = top_visited(&visits, config.n_select);
    Ok((
        f,
        SelectionResult {
            method: SelectionMethod::Dtg,
            visits,
            chosen,
        },
    ))
}

/// [`learn_dtg`] with the discount restricted to (0, 1).
pub fn train_dtg(
    mdp: &TemplateMdp,
    divergences: &DivergenceTable,
    config: &DtgConfig,
    seed: u64,
) -> Result<(DtgFunction, SelectionResult), DtgError> {
    config.validate()?;
    learn_dtg(mdp, divergences, config, seed)
}

/// Top-`n` visited states of a uniform random walk of `steps` steps.
pub fn random_select(
    mdp: &TemplateMdp,
    steps: usize,
    n: usize,
    seed: u64,
) -> Result<SelectionResult, DtgError> {
    if steps == 0 {
        return Err(DtgError::InvalidParam(
            "random walk needs at least one step".into(),
        ));
    }
    if n > mdp.n_states() {
        return Err(DtgError::InvalidParam(format!(
            "cannot select {n} of {} states",
            mdp.n_states()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut visits = vec![0u64; mdp.n_states()];
    let mut s = rng.random_range(0..mdp.n_states());
    for _ in 0..steps {
        visits[s] += 1;
        s = mdp.next(s, rng.random_range(0..mdp.n_actions()));
    }
    let chosen = top_visited(&visits, n);
    Ok(SelectionResult {
        method: SelectionMethod::Random,
        visits,
        chosen,
    })
}
