//! Control agents: q-quantile Q-learning / SARSA over the density models,
//! plus Watkins' Q-learning and worst-case Q-hat learning as baselines.
//!
//! A q-Q agent scores each action by the q-quantile of its return-density
//! model (a value-at-risk of the return) and learns the densities with the
//! natural-gradient TD updates. Action selection is softmax or epsilon-greedy
//! over those values with time-varying schedules.

use rand::{Rng, RngExt};

use crate::density::{DensityParams, ModelKind, ParamTable};
use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, TransitionSample};
use crate::ng::{build_target_offpolicy, build_target_onpolicy, ng_update, td_delta, TdContext};

/// A deterministic function of the step counter, used for learning rates and
/// exploration parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant(f64),
    /// 1 / (a + b * t / total_steps)
    InverseRamp {
        a: f64,
        b: f64,
        total_steps: u64,
    },
    /// from + (to - from) * t / total_steps
    Linear {
        from: f64,
        to: f64,
        total_steps: u64,
    },
    /// base schedule divided by a constant (e.g. a TD baseline run at rate
    /// alpha_t / gamma)
    DividedBy {
        base: Box<Schedule>,
        divisor: f64,
    },
}

impl Schedule {
    pub fn value(&self, t: u64) -> f64 {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::InverseRamp { a, b, total_steps } => {
                1.0 / (a + b * (t as f64 / *total_steps as f64))
            }
            Schedule::Linear {
                from,
                to,
                total_steps,
            } => from + (to - from) * (t as f64 / *total_steps as f64),
            Schedule::DividedBy { base, divisor } => base.value(t) / divisor,
        }
    }
}

/// Action-selection rule.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    /// Probabilities proportional to exp(beta_t * value).
    Softmax { beta: Schedule },
    /// Uniform action with probability epsilon_t, greedy otherwise.
    EpsilonGreedy { epsilon: Schedule },
}

impl PolicySpec {
    /// Action distribution at step t given per-action values.
    pub fn probabilities(&self, values: &[f64], t: u64) -> Vec<f64> {
        match self {
            PolicySpec::Softmax { beta } => {
                let b = beta.value(t);
                let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = values.iter().map(|v| (b * (v - max)).exp()).collect();
                let total: f64 = exps.iter().sum();
                exps.into_iter().map(|e| e / total).collect()
            }
            PolicySpec::EpsilonGreedy { epsilon } => {
                let eps = epsilon.value(t);
                let n = values.len();
                let best = argmax(values);
                (0..n)
                    .map(|a| eps / n as f64 + if a == best { 1.0 - eps } else { 0.0 })
                    .collect()
            }
        }
    }

    pub fn select_action<R: Rng + ?Sized>(&self, values: &[f64], t: u64, rng: &mut R) -> usize {
        match self {
            PolicySpec::Softmax { .. } => {
                let probs = self.probabilities(values, t);
                let u: f64 = rng.random();
                let mut cum = 0.0;
                for (a, p) in probs.iter().enumerate() {
                    cum += p;
                    if u < cum {
                        return a;
                    }
                }
                probs.len() - 1
            }
            PolicySpec::EpsilonGreedy { epsilon } => {
                let eps = epsilon.value(t);
                let u: f64 = rng.random();
                if u < eps {
                    rng.random_range(0..values.len())
                } else {
                    argmax(values)
                }
            }
        }
    }
}

/// Lowest-index argmax.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Sample an action from the policy given per-action criterion values.
pub fn select_action<R: Rng + ?Sized>(
    policy: &PolicySpec,
    values: &[f64],
    t: u64,
    rng: &mut R,
) -> usize {
    policy.select_action(values, t, rng)
}

/// The q-Q value of a state-action pair: the q-quantile of its return model.
pub fn q_value(params: &DensityParams, q: f64) -> Result<f64> {
    params.quantile(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMode {
    OffPolicy,
    OnPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Algorithm {
    /// Quantile-criterion control with natural-gradient density learning.
    QQLearning {
        q: f64,
        model: ModelKind,
        target_mode: TargetMode,
    },
    /// Classical expected-return Q-learning.
    WatkinsQ,
    /// Worst-case (minimax) learning: a running minimum with optimistic
    /// initialization. `init: None` defaults to r_goal / (1 - gamma).
    QHat { init: Option<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub algorithm: Algorithm,
    pub learning_rate: Schedule,
}

impl AgentSpec {
    pub fn new(algorithm: Algorithm, learning_rate: Schedule) -> Result<Self> {
        if let Algorithm::QQLearning { q, .. } = &algorithm {
            if !(*q > 0.0 && *q < 1.0) {
                return Err(Error::QuantileOutOfRange(*q));
            }
        }
        Ok(AgentSpec {
            algorithm,
            learning_rate,
        })
    }
}

/// Plain action-value table used by the baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        QTable {
            n_states,
            n_actions,
            values: vec![value; n_states * n_actions],
        }
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
        &self.values[state * self.n_actions..][..self.n_actions]
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state)
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# retden q table v1\n");
        out.push_str(&format!("states = {}\n", self.n_states));
        out.push_str(&format!("actions = {}\n", self.n_actions));
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                out.push_str(&format!("{s} {a} {:.16e}\n", self.get(s, a)));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut n_states = None;
        let mut n_actions = None;
        let mut rows: Vec<(usize, usize, f64)> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "states" => {
                        n_states = Some(
                            value
                                .parse()
                                .map_err(|_| Error::Parse(format!("states `{value}`")))?,
                        )
                    }
                    "actions" => {
                        n_actions = Some(
                            value
                                .parse()
                                .map_err(|_| Error::Parse(format!("actions `{value}`")))?,
                        )
                    }
                    other => return Err(Error::Parse(format!("unknown key `{other}`"))),
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!("bad q-table row `{line}`")));
            }
            let parse_idx = |f: &str| -> Result<usize> {
                f.parse().map_err(|_| Error::Parse(format!("index `{f}`")))
            };
            let value: f64 = fields[2]
                .parse()
                .map_err(|_| Error::Parse(format!("value `{}`", fields[2])))?;
            rows.push((parse_idx(fields[0])?, parse_idx(fields[1])?, value));
        }
        let n_states = n_states.ok_or_else(|| Error::Parse("missing `states`".into()))?;
        let n_actions = n_actions.ok_or_else(|| Error::Parse("missing `actions`".into()))?;
        if rows.len() != n_states * n_actions {
            return Err(Error::Parse(format!(
                "expected {} rows, found {}",
                n_states * n_actions,
                rows.len()
            )));
        }
        let mut table = QTable::filled(n_states, n_actions, 0.0);
        for (s, a, v) in rows {
            if s >= n_states || a >= n_actions {
                return Err(Error::IndexOutOfRange(format!("({s}, {a})")));
            }
            table.set(s, a, v);
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentValues {
    Density(ParamTable),
    Q(QTable),
}

/// Mutable learner state: the value/density table plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub values: AgentValues,
    pub step: u64,
}

impl AgentState {
    /// Fresh state for the given agent on the given environment. The density
    /// tables start zero-centered with unit scale; the skewness starts at the
    /// target quantile so that the initial model's q-quantile equals m.
    pub fn new(spec: &AgentSpec, mdp: &TabularMdp) -> Result<Self> {
        let values = match &spec.algorithm {
            Algorithm::QQLearning { q, model, .. } => {
                let init = match model {
                    ModelKind::Gaussian => DensityParams::gaussian(0.0, 1.0)?,
                    ModelKind::Laplace => DensityParams::laplace(0.0, 1.0)?,
                    ModelKind::SkewedLaplace => DensityParams::skewed_laplace(0.0, 1.0, *q)?,
                };
                AgentValues::Density(ParamTable::filled(mdp.n_states(), mdp.n_actions(), init))
            }
            Algorithm::WatkinsQ => {
                AgentValues::Q(QTable::filled(mdp.n_states(), mdp.n_actions(), 0.0))
            }
            Algorithm::QHat { init } => {
                let value = init.unwrap_or_else(|| {
                    let r_goal = mdp.max_deterministic_reward();
                    let base = if r_goal > 0.0 { r_goal } else { 1.0 };
                    base / (1.0 - mdp.discount())
                });
                AgentValues::Q(QTable::filled(mdp.n_states(), mdp.n_actions(), value))
            }
        };
        Ok(AgentState { values, step: 0 })
    }

    /// Per-action criterion values at a state: q-quantiles for q-Q agents,
    /// plain Q values for the baselines.
    pub fn action_values(&self, spec: &AgentSpec, state: usize) -> Result<Vec<f64>> {
        match (&self.values, &spec.algorithm) {
            (AgentValues::Density(table), Algorithm::QQLearning { q, .. }) => (0..table
                .n_actions())
                .map(|a| table.get(state, a)?.quantile(*q))
                .collect(),
            (AgentValues::Q(table), _) => Ok(table.row(state).to_vec()),
            _ => Err(Error::InvalidParameter(
                "agent state does not match spec".into(),
            )),
        }
    }

    /// Checkpoint: the step counter followed by the value-table serialization.
    pub fn checkpoint_text(&self) -> String {
        let body = match &self.values {
            AgentValues::Density(table) => table.to_text(),
            AgentValues::Q(table) => table.to_text(),
        };
        format!("step = {}\n{body}", self.step)
    }

    pub fn from_checkpoint_text(text: &str) -> Result<Self> {
        let (step_line, body) = text
            .split_once('\n')
            .ok_or_else(|| Error::Parse("empty checkpoint".into()))?;
        let step_value = step_line
            .strip_prefix("step =")
            .ok_or_else(|| Error::Parse(format!("expected `step = N`, got `{step_line}`")))?;
        let step: u64 = step_value
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("step `{step_value}`")))?;
        let values = if body.starts_with("# retden param table") {
            AgentValues::Density(ParamTable::from_text(body)?)
        } else if body.starts_with("# retden q table") {
            AgentValues::Q(QTable::from_text(body)?)
        } else {
            return Err(Error::Parse("unrecognized checkpoint table".into()));
        };
        Ok(AgentState { values, step })
    }
}

/// Apply one learning update for the observed transition and advance the
/// step counter. The policy is consulted only by on-policy (SARSA-type)
/// targets, which weight successor densities by the action probabilities.
pub fn agent_step(
    spec: &AgentSpec,
    state: &mut AgentState,
    sample: &TransitionSample,
    discount: f64,
    policy: &PolicySpec,
) -> Result<()> {
    let t = state.step;
    let alpha = spec.learning_rate.value(t);
    match (&mut state.values, &spec.algorithm) {
        (AgentValues::Density(table), Algorithm::QQLearning { q, target_mode, .. }) => {
            let target = match target_mode {
                TargetMode::OffPolicy => build_target_offpolicy(table, sample.next_state, *q)?,
                TargetMode::OnPolicy => {
                    let next_values: Result<Vec<f64>> = (0..table.n_actions())
                        .map(|a| table.get(sample.next_state, a)?.quantile(*q))
                        .collect();
                    let probs = policy.probabilities(&next_values?, t);
                    build_target_onpolicy(table, sample.next_state, &probs)?
                }
            };
            let current = *table.get(sample.state, sample.action)?;
            let ctx = TdContext::new(sample.reward, discount, alpha, current, target)?;
            table.set(sample.state, sample.action, ng_update(&ctx)?)?;
        }
        (AgentValues::Q(table), Algorithm::WatkinsQ) => {
            let current = table.get(sample.state, sample.action);
            let next_max = table.max_value(sample.next_state);
            let delta = td_delta(current, next_max, sample.reward, discount);
            table.set(sample.state, sample.action, current + alpha * delta);
        }
        (AgentValues::Q(table), Algorithm::QHat { .. }) => {
            let current = table.get(sample.state, sample.action);
            let candidate = sample.reward + discount * table.max_value(sample.next_state);
            if candidate < current {
                table.set(sample.state, sample.action, candidate);
            }
        }
        _ => {
            return Err(Error::InvalidParameter(
                "agent state does not match spec".into(),
            ))
        }
    }
    state.step += 1;
    Ok(())
}

/// A fixed per-state action distribution: what remains of an agent once
/// learning stops. Used for evaluation rollouts and as the policy input of
/// the distributional Bellman operator.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl FrozenPolicy {
    pub fn from_probs(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::BadProbabilities(format!(
                "expected {} probabilities, got {}",
                n_states * n_actions,
                probs.len()
            )));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..][..n_actions];
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 || row.iter().any(|p| *p < 0.0) {
                return Err(Error::BadProbabilities(format!("state {s} row {row:?}")));
            }
        }
        Ok(FrozenPolicy {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        FrozenPolicy {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Deterministic greedy extraction from a learned agent state.
    pub fn greedy(mdp: &TabularMdp, spec: &AgentSpec, state: &AgentState) -> Result<Self> {
        let mut probs = vec![0.0; mdp.n_states() * mdp.n_actions()];
        for s in 0..mdp.n_states() {
            let values = state.action_values(spec, s)?;
            probs[s * mdp.n_actions() + argmax(&values)] = 1.0;
        }
        Ok(FrozenPolicy {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            probs,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn probs(&self, state: usize) -> &[f64] {
        &self.probs[state * self.n_actions..][..self.n_actions]
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let row = self.probs(state);
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for (a, p) in row.iter().enumerate() {
            cum += p;
            if u < cum {
                return a;
            }
        }
        row.len() - 1
    }
}

/// Follow greedy actions through most-probable transitions from the start
/// state until the goal is reached or a state repeats. The walk is bounded
/// by the number of states.
pub fn greedy_path(mdp: &TabularMdp, spec: &AgentSpec, state: &AgentState) -> Result<Vec<usize>> {
    let mut path = vec![mdp.start_state()];
    let mut visited = vec![false; mdp.n_states()];
    visited[mdp.start_state()] = true;
    for _ in 0..mdp.n_states() {
        let s = *path.last().unwrap();
        let values = state.action_values(spec, s)?;
        let a = argmax(&values);
        let next = mdp.most_probable_successor(s, a)?;
        if Some(next) == mdp.goal_state() {
            path.push(next);
            break;
        }
        if visited[next] {
            break;
        }
        visited[next] = true;
        path.push(next);
    }
    Ok(path)
}
