//! Kernel density estimates of next-state distributions and the
//! Cauchy-Schwarz divergence between them.
//!
//! Conditioned on a state-action pair `(x, a)`, a model's next-state
//! density is a Gaussian mixture over its stored transitions with action
//! `a`, each weighted by a Gaussian kernel on the distance from its origin
//! state to `x`. For two such mixtures with a shared bandwidth `h`,
//!
//! `D_CS(p, q) = -ln <p, q> + ln<p, p> / 2 + ln<q, q> / 2`
//!
//! where `<N(m_i, h^2), N(m_j, h^2)>` is proportional to
//! `exp(-|m_i - m_j|^2 / 4h^2)`. Everything is evaluated in the log domain.

use std::collections::BTreeMap;

use super::{DtgError, HuState, TemplateMdp, TransitionModel};

#[derive(Debug, Clone, PartialEq)]
pub struct KdeConfig {
    /// Shared kernel width; Silverman's rule on the pooled next-state
    /// samples when `None`.
    pub bandwidth: Option<f64>,
    /// Reported where either model has no support.
    pub d_max: f64,
    /// A transition supports `(x, a)` when its conditioning kernel value is
    /// at least this.
    pub min_support: f64,
}

impl Default for KdeConfig {
    fn default() -> Self {
        Self {
            bandwidth: None,
            d_max: 10.0,
            min_support: 1e-3,
        }
    }
}

impl KdeConfig {
    pub fn validate(&self) -> Result<(), DtgError> {
        if let Some(h) = self.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(DtgError::InvalidParam(format!(
                    "bandwidth must be > 0, got {h}"
                )));
            }
        }
        if !(self.d_max.is_finite() && self.d_max > 0.0) {
            return Err(DtgError::InvalidParam(format!(
                "d_max must be > 0, got {}",
                self.d_max
            )));
        }
        if !(self.min_support > 0.0 && self.min_support <= 1.0) {
            return Err(DtgError::InvalidParam(format!(
                "min_support must be in (0, 1], got {}",
                self.min_support
            )));
        }
        Ok(())
    }
}

/// Silverman's rule of thumb for a `d`-dimensional Gaussian kernel:
/// `sigma * (4 / ((d + 2) n))^(1 / (d + 4))` with `sigma` the root mean
/// per-dimension standard deviation. Falls back to 1 for degenerate samples.
pub fn silverman_bandwidth(samples: &[HuState]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 1.0;
    }
    let d = 7.0;
    let nf = n as f64;
    let mut var = 0.0;
    for k in 0..7 {
        let mean = samples.iter().map(|s| s.0[k]).sum::<f64>() / nf;
        var += samples.iter().map(|s| (s.0[k] - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    }
    let sigma = (var / d).sqrt();
    if !(sigma > 0.0) {
        return 1.0;
    }
    sigma * (4.0 / ((d + 2.0) * nf)).powf(1.0 / (d + 4.0))
}

/// Bandwidth from every stored next state of the given models.
pub fn pooled_bandwidth(models: &[&TransitionModel]) -> f64 {
    let samples: Vec<HuState> = models
        .iter()
        .flat_map(|m| m.transitions().iter().map(|t| m.states()[t.next]))
        .collect();
    silverman_bandwidth(&samples)
}

/// Gaussian mixture with unnormalized log weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub log_weights: Vec<f64>,
    pub centres: Vec<HuState>,
}

/// Next-state mixture of `models` conditioned near `(x, action)`, or
/// `None` when no transition supports the pair.
pub fn conditional_mixture(
    models: &[&TransitionModel],
    x: &HuState,
    action: i64,
    h: f64,
    min_support: f64,
) -> Option<Mixture> {
    let mut counts: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for (k, m) in models.iter().enumerate() {
        for t in m.transitions().iter().filter(|t| t.action == action) {
            *counts.entry((k, t.state, t.next)).or_default() += 1.0;
        }
    }
    let log_floor = min_support.ln();
    let mut supported = false;
    let mut mix = Mixture {
        log_weights: Vec::new(),
        centres: Vec::new(),
    };
    for (&(k, s, next), &c) in &counts {
        let states = models[k].states();
        let log_k = -states[s].distance_sq(x) / (2.0 * h * h);
        supported |= log_k >= log_floor;
        mix.log_weights.push(c.ln() + log_k);
        mix.centres.push(states[next]);
    }
    supported.then_some(mix)
}

fn log_sum_exp(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln <p, q>` up to the constant shared by all three inner products.
fn log_inner(p: &Mixture, q: &Mixture, h: f64) -> f64 {
    let s = 4.0 * h * h;
    log_sum_exp(p.log_weights.iter().zip(&p.centres).flat_map(|(wp, cp)| {
        q.log_weights
            .iter()
            .zip(&q.centres)
            .map(move |(wq, cq)| wp + wq - cp.distance_sq(cq) / s)
    }))
}

/// Cauchy-Schwarz divergence between two mixtures sharing bandwidth `h`.
pub fn cs_divergence(p: &Mixture, q: &Mixture, h: f64) -> f64 {
    let d = 0.5 * (log_inner(p, p, h) + log_inner(q, q, h)) - log_inner(p, q, h);
    d.max(0.0)
}

/// Divergence between the next-state densities of `p` and `q` conditioned
/// near `(x, action)`, clamped to `d_max`.
pub fn divergence(
    p: &[&TransitionModel],
    q: &[&TransitionModel],
    x: &HuState,
    action: i64,
    h: f64,
    config: &KdeConfig,
) -> Result<f64, DtgError> {
    let pm = conditional_mixture(p, x, action, h, config.min_support);
    let qm = conditional_mixture(q, x, action, h, config.min_support);
    match (pm, qm) {
        (Some(pm), Some(qm)) => Ok(cs_divergence(&pm, &qm, h).min(config.d_max)),
        _ => Err(DtgError::NoSupport),
    }
}

/// `D(s, a)` for every state and action of `mdp`, `s` being the state
/// vector of template `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceTable {
    n_actions: usize,
    values: Vec<f64>,
}

impl DivergenceTable {
    /// Row-major `n_states x n_actions` values.
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self, DtgError> {
        if values.len() != n_states * n_actions || n_actions == 0 {
            return Err(DtgError::InvalidParam(format!(
                "divergence table needs {n_states} x {n_actions} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DtgError::InvalidParam("divergences must be finite".into()));
        }
        Ok(Self { n_actions, values })
    }

    pub fn get(&self, state: usize, action_index: usize) -> f64 {
        self.values[state * self.n_actions + action_index]
    }

    pub fn n_states(&self) -> usize {
        self.values.len() / self.n_actions
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Divergences of `own` against the concatenation of `others` at every
/// state-action pair of `mdp`; unsupported pairs get `d_max`.
pub fn divergence_table(
    mdp: &TemplateMdp,
    own: &TransitionModel,
    others: &[&TransitionModel],
    config: &KdeConfig,
) -> Result<DivergenceTable, DtgError> {
    config.validate()?;
    if own.is_empty() || others.is_empty() || others.iter().any(|m| m.is_empty()) {
        return Err(DtgError::EmptyModel);
    }
    let h = match config.bandwidth {
        Some(h) => h,
        None => {
            let mut all = vec![own];
            all.extend_from_slice(others);
            pooled_bandwidth(&all)
        }
    };
    let mut values = Vec::with_capacity(mdp.n_states() * mdp.n_actions());
    for x in mdp.states() {
        for &a in mdp.actions() {
            values.push(match divergence(&[own], others, x, a, h, config) {
                Ok(d) => d,
                Err(DtgError::NoSupport) => config.d_max,
                Err(e) => return Err(e),
            });
        }
    }
    DivergenceTable::new(mdp.n_states(), mdp.n_actions(), values)
}
