//! Finite tabular MDPs, the cliff-walk gridworld, and stochastic reward
//! generators.
//!
//! The cliff walk is a rows x cols grid with a start cell, a goal cell, and a
//! cliff edge along the boundary. Moving lands in the chosen direction with
//! probability `slip_main` and in each other direction with `slip_other`.
//! Walking into the cliff edge keeps the state unchanged and draws the cliff
//! penalty; walking off any other boundary keeps the state unchanged with
//! zero reward. The task is non-episodic: arriving at the goal pays the goal
//! reward and teleports the agent back to the start as an ordinary
//! transition.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StudentT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Reward distribution attached to a (state, action, successor) triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardSpec {
    Deterministic(f64),
    /// Minus a gamma draw: mean -shape*scale. Models heavy one-sided losses.
    NegativeGamma {
        shape: f64,
        scale: f64,
    },
    /// location + scale * T with T standard Student-t. For dof in (1, 2] the
    /// mean exists (= location) but the variance is infinite.
    ShiftedStudentT {
        dof: f64,
        scale: f64,
        location: f64,
    },
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RewardSpec::Deterministic(v) => {
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!("deterministic reward {v}")));
                }
            }
            RewardSpec::NegativeGamma { shape, scale } => {
                if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "negative gamma shape {shape}, scale {scale}"
                    )));
                }
            }
            RewardSpec::ShiftedStudentT {
                dof,
                scale,
                location,
            } => {
                if !(dof > 1.0 && dof.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "student-t dof {dof} must exceed 1"
                    )));
                }
                if !(scale > 0.0 && scale.is_finite() && location.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "student-t scale {scale}, location {location}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Exact mean (finite for every valid spec since dof > 1).
    pub fn mean(&self) -> f64 {
        match *self {
            RewardSpec::Deterministic(v) => v,
            RewardSpec::NegativeGamma { shape, scale } => -shape * scale,
            RewardSpec::ShiftedStudentT { location, .. } => location,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, RewardSpec::Deterministic(_))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            RewardSpec::Deterministic(v) => v,
            RewardSpec::NegativeGamma { shape, scale } => {
                -Gamma::new(shape, scale).expect("validated").sample(rng)
            }
            RewardSpec::ShiftedStudentT {
                dof,
                scale,
                location,
            } => location + scale * StudentT::new(dof).expect("validated").sample(rng),
        }
    }

    /// Density at r; None for the deterministic case (a point mass).
    pub fn pdf(&self, r: f64) -> Option<f64> {
        match *self {
            RewardSpec::Deterministic(_) => None,
            RewardSpec::NegativeGamma { shape, scale } => {
                if r >= 0.0 {
                    return Some(0.0);
                }
                let x = -r;
                let ln = (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln();
                Some(ln.exp())
            }
            RewardSpec::ShiftedStudentT {
                dof,
                scale,
                location,
            } => {
                let t = (r - location) / scale;
                let ln_norm = ln_gamma((dof + 1.0) / 2.0)
                    - ln_gamma(dof / 2.0)
                    - 0.5 * (dof * std::f64::consts::PI).ln();
                let ln = ln_norm - (dof + 1.0) / 2.0 * (1.0 + t * t / dof).ln();
                Some(ln.exp() / scale)
            }
        }
    }

    pub fn to_text(&self) -> String {
        match *self {
            RewardSpec::Deterministic(v) => format!("deterministic {v}"),
            RewardSpec::NegativeGamma { shape, scale } => format!("neg_gamma {shape} {scale}"),
            RewardSpec::ShiftedStudentT {
                dof,
                scale,
                location,
            } => {
                format!("student_t {dof} {scale} {location}")
            }
        }
    }
}

impl std::str::FromStr for RewardSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let fields: Vec<&str> = s.split_whitespace().collect();
        let parse = |f: &str| -> Result<f64> {
            f.parse()
                .map_err(|_| Error::Parse(format!("reward value `{f}`")))
        };
        let spec = match fields.as_slice() {
            ["deterministic", v] => RewardSpec::Deterministic(parse(v)?),
            ["neg_gamma", shape, scale] => RewardSpec::NegativeGamma {
                shape: parse(shape)?,
                scale: parse(scale)?,
            },
            ["student_t", dof, scale, location] => RewardSpec::ShiftedStudentT {
                dof: parse(dof)?,
                scale: parse(scale)?,
                location: parse(location)?,
            },
            _ => return Err(Error::Parse(format!("reward spec `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Draw a reward from a spec.
pub fn sample_reward<R: Rng + ?Sized>(spec: &RewardSpec, rng: &mut R) -> f64 {
    spec.sample(rng)
}

/// One observed transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSample {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// A finite MDP with a dense transition tensor and per-triple reward specs.
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    rewards: Vec<RewardSpec>,
    discount: f64,
    start_state: usize,
    goal_state: Option<usize>,
}

const ROW_SUM_TOL: f64 = 1e-12;

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        rewards: Vec<RewardSpec>,
        discount: f64,
        start_state: usize,
        goal_state: Option<usize>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidParameter("empty state or action set".into()));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::InvalidParameter(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if rewards.len() != transition.len() {
            return Err(Error::InvalidParameter("reward table size mismatch".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidParameter(format!(
                "discount {discount} must lie in [0, 1)"
            )));
        }
        if start_state >= n_states {
            return Err(Error::IndexOutOfRange(format!("start state {start_state}")));
        }
        if let Some(g) = goal_state {
            if g >= n_states {
                return Err(Error::IndexOutOfRange(format!("goal state {g}")));
            }
        }
        for p in &transition {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::InvalidParameter(format!(
                    "transition probability {p}"
                )));
            }
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::InvalidParameter(format!(
                        "transition row (s={s}, a={a}) sums to {sum}"
                    )));
                }
            }
        }
        for spec in &rewards {
            spec.validate()?;
        }
        Ok(TabularMdp {
            n_states,
            n_actions,
            transition,
            rewards,
            discount,
            start_state,
            goal_state,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn start_state(&self) -> usize {
        self.start_state
    }

    pub fn goal_state(&self) -> Option<usize> {
        self.goal_state
    }

    fn check_indices(&self, state: usize, action: usize) -> Result<()> {
        if state >= self.n_states || action >= self.n_actions {
            return Err(Error::IndexOutOfRange(format!(
                "(state {state}, action {action})"
            )));
        }
        Ok(())
    }

    pub fn transition_row(&self, state: usize, action: usize) -> Result<&[f64]> {
        self.check_indices(state, action)?;
        Ok(&self.transition[(state * self.n_actions + action) * self.n_states..][..self.n_states])
    }

    pub fn transition_prob(&self, state: usize, action: usize, next: usize) -> Result<f64> {
        let row = self.transition_row(state, action)?;
        row.get(next)
            .copied()
            .ok_or_else(|| Error::IndexOutOfRange(format!("next state {next}")))
    }

    pub fn reward_spec(&self, state: usize, action: usize, next: usize) -> Result<&RewardSpec> {
        self.check_indices(state, action)?;
        if next >= self.n_states {
            return Err(Error::IndexOutOfRange(format!("next state {next}")));
        }
        Ok(&self.rewards[(state * self.n_actions + action) * self.n_states + next])
    }

    /// Successor with the largest transition probability (lowest index wins ties).
    pub fn most_probable_successor(&self, state: usize, action: usize) -> Result<usize> {
        let row = self.transition_row(state, action)?;
        let mut best = 0usize;
        for (i, p) in row.iter().enumerate() {
            if *p > row[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Largest reward magnitude over transitions with positive probability,
    /// using the exact means of stochastic specs. Used to bound returns.
    pub fn reward_magnitude_bound(&self) -> f64 {
        let mut bound = 0.0f64;
        for (i, spec) in self.rewards.iter().enumerate() {
            if self.transition[i] > 0.0 {
                bound = bound.max(spec.mean().abs());
            }
        }
        bound
    }

    /// Largest deterministic reward over reachable transitions (0 if none).
    pub fn max_deterministic_reward(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, spec) in self.rewards.iter().enumerate() {
            if self.transition[i] > 0.0 {
                if let RewardSpec::Deterministic(v) = spec {
                    best = best.max(*v);
                }
            }
        }
        best
    }

    /// Sample one environment transition.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: usize,
        action: usize,
        rng: &mut R,
    ) -> Result<TransitionSample> {
        use rand::RngExt;
        let row = self.transition_row(state, action)?;
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut next = self.n_states - 1;
        for (i, p) in row.iter().enumerate() {
            cum += p;
            if u < cum {
                next = i;
                break;
            }
        }
        // guard against fp shortfall in the cumulative sum
        if row[next] == 0.0 {
            next = (0..self.n_states).rev().find(|i| row[*i] > 0.0).unwrap();
        }
        let reward =
            self.rewards[(state * self.n_actions + action) * self.n_states + next].sample(rng);
        Ok(TransitionSample {
            state,
            action,
            reward,
            next_state: next,
        })
    }
}

/// Movement directions, in action-index order.
pub const ACTION_NAMES: [&str; 4] = ["north", "south", "east", "west"];
const DIRS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, 1), (0, -1)];

/// Description of a slippery grid walk with a cliff edge. Cliff cells are
/// given in grid coordinates and must lie outside the grid proper (they are
/// edges one walks off, not occupiable cells).
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub cliff: Vec<(isize, isize)>,
    pub slip_main: f64,
    pub slip_other: f64,
    pub goal_reward: f64,
    pub cliff_reward: RewardSpec,
    pub discount: f64,
}

impl GridSpec {
    /// The fixed 6x3 cliff-walk map: states indexed row-major with row 0 on
    /// top, start at the bottom-left, goal at the bottom-right, and the cliff
    /// along the bottom edge strictly between them.
    pub fn cliff_walk(
        cliff_reward: RewardSpec,
        goal_reward: f64,
        slip_main: f64,
        slip_other: f64,
    ) -> GridSpec {
        let rows = 3;
        let cols = 6;
        GridSpec {
            rows,
            cols,
            start: (rows - 1, 0),
            goal: (rows - 1, cols - 1),
            cliff: (1..cols - 1).map(|c| (rows as isize, c as isize)).collect(),
            slip_main,
            slip_other,
            goal_reward,
            cliff_reward,
            discount: 0.95,
        }
    }

    fn state_index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn build(&self) -> Result<TabularMdp> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidParameter("empty grid".into()));
        }
        for &(r, c) in [&self.start, &self.goal] {
            if r >= self.rows || c >= self.cols {
                return Err(Error::IndexOutOfRange(format!("cell ({r}, {c})")));
            }
        }
        if self.start == self.goal {
            return Err(Error::InvalidParameter("start equals goal".into()));
        }
        for &(r, c) in &self.cliff {
            let inside = r >= 0 && c >= 0 && (r as usize) < self.rows && (c as usize) < self.cols;
            if inside {
                return Err(Error::InvalidParameter(format!(
                    "cliff cell ({r}, {c}) lies inside the grid"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.slip_main) || !(0.0..=1.0).contains(&self.slip_other) {
            return Err(Error::InvalidParameter(format!(
                "slip probabilities ({}, {})",
                self.slip_main, self.slip_other
            )));
        }
        if (self.slip_main + 3.0 * self.slip_other - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "slip probabilities must satisfy main + 3*other = 1, got {} + 3*{}",
                self.slip_main, self.slip_other
            )));
        }
        self.cliff_reward.validate()?;

        let n_states = self.rows * self.cols;
        let n_actions = 4;
        let start = self.state_index(self.start.0, self.start.1);
        let goal = self.state_index(self.goal.0, self.goal.1);
        let mut transition = vec![0.0; n_states * n_actions * n_states];
        let mut rewards = vec![RewardSpec::Deterministic(0.0); n_states * n_actions * n_states];

        for row in 0..self.rows {
            for col in 0..self.cols {
                let s = self.state_index(row, col);
                for (a, chosen) in DIRS.iter().enumerate() {
                    for (d, dir) in DIRS.iter().enumerate() {
                        let prob = if d == a {
                            self.slip_main
                        } else {
                            self.slip_other
                        };
                        if prob == 0.0 {
                            continue;
                        }
                        let _ = chosen;
                        let tr = row as isize + dir.0;
                        let tc = col as isize + dir.1;
                        let in_grid = tr >= 0
                            && tc >= 0
                            && (tr as usize) < self.rows
                            && (tc as usize) < self.cols;
                        let (landed, reward) = if self.cliff.contains(&(tr, tc)) {
                            (s, self.cliff_reward)
                        } else if in_grid {
                            (
                                self.state_index(tr as usize, tc as usize),
                                RewardSpec::Deterministic(0.0),
                            )
                        } else {
                            (s, RewardSpec::Deterministic(0.0))
                        };
                        // any move resolving at the goal cell teleports to
                        // the start and pays the goal reward
                        let (next, reward) = if landed == goal {
                            (start, RewardSpec::Deterministic(self.goal_reward))
                        } else {
                            (landed, reward)
                        };
                        let idx = (s * n_actions + a) * n_states + next;
                        if transition[idx] > 0.0 && rewards[idx] != reward {
                            return Err(Error::InvalidParameter(format!(
                                "conflicting rewards for transition (s={s}, a={a}, s'={next}): \
                                 {} vs {}",
                                rewards[idx].to_text(),
                                reward.to_text()
                            )));
                        }
                        transition[idx] += prob;
                        rewards[idx] = reward;
                    }
                }
            }
        }

        TabularMdp::new(
            n_states,
            n_actions,
            transition,
            rewards,
            self.discount,
            start,
            Some(goal),
        )
    }

    /// Plain-text description, loadable by the CLI for custom layouts.
    pub fn to_text(&self) -> String {
        let cliff: Vec<String> = self.cliff.iter().map(|(r, c)| format!("{r} {c}")).collect();
        format!(
            "# retden gridwalk v1\n\
             rows = {}\n\
             cols = {}\n\
             start = {} {}\n\
             goal = {} {}\n\
             cliff = {}\n\
             slip_main = {}\n\
             slip_other = {}\n\
             goal_reward = {}\n\
             cliff_reward = {}\n\
             discount = {}\n",
            self.rows,
            self.cols,
            self.start.0,
            self.start.1,
            self.goal.0,
            self.goal.1,
            cliff.join(", "),
            self.slip_main,
            self.slip_other,
            self.goal_reward,
            self.cliff_reward.to_text(),
            self.discount
        )
    }

    pub fn from_text(text: &str) -> Result<GridSpec> {
        let mut fields: std::collections::HashMap<&str, String> = std::collections::HashMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected `key = value`, got `{line}`")))?;
            fields.insert(key.trim_end(), value.trim().to_string());
        }
        let get = |key: &str| -> Result<String> {
            fields
                .iter()
                .find(|(k, _)| k.trim() == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::Parse(format!("missing key `{key}`")))
        };
        let parse_usize = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Parse(format!("integer `{v}`")))
        };
        let parse_f64 = |v: &str| -> Result<f64> {
            v.parse().map_err(|_| Error::Parse(format!("number `{v}`")))
        };
        let parse_cell = |v: &str| -> Result<(usize, usize)> {
            let parts: Vec<&str> = v.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(Error::Parse(format!("cell `{v}`")));
            }
            Ok((parse_usize(parts[0])?, parse_usize(parts[1])?))
        };
        let cliff_text = get("cliff")?;
        let mut cliff = Vec::new();
        for part in cliff_text.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let nums: Vec<&str> = part.split_whitespace().collect();
            if nums.len() != 2 {
                return Err(Error::Parse(format!("cliff cell `{part}`")));
            }
            let r: isize = nums[0]
                .parse()
                .map_err(|_| Error::Parse(format!("cliff row `{}`", nums[0])))?;
            let c: isize = nums[1]
                .parse()
                .map_err(|_| Error::Parse(format!("cliff col `{}`", nums[1])))?;
            cliff.push((r, c));
        }
        Ok(GridSpec {
            rows: parse_usize(&get("rows")?)?,
            cols: parse_usize(&get("cols")?)?,
            start: parse_cell(&get("start")?)?,
            goal: parse_cell(&get("goal")?)?,
            cliff,
            slip_main: parse_f64(&get("slip_main")?)?,
            slip_other: parse_f64(&get("slip_other")?)?,
            goal_reward: parse_f64(&get("goal_reward")?)?,
            cliff_reward: get("cliff_reward")?.parse()?,
            discount: parse_f64(&get("discount")?)?,
        })
    }
}

/// The fixed 6x3 cliff walk of the experiments (discount 0.95).
pub fn build_cliff_walk(
    cliff_reward: RewardSpec,
    goal_reward: f64,
    slip_main: f64,
    slip_other: f64,
) -> Result<TabularMdp> {
    GridSpec::cliff_walk(cliff_reward, goal_reward, slip_main, slip_other).build()
}
