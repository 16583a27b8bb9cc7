//! Trial runner and evaluation protocol: run T learning steps under the
//! configured schedules, freeze the greedy policy, estimate return
//! statistics from the start state by Monte Carlo, and aggregate across
//! seeded trials.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::agent::{agent_step, greedy_path, AgentSpec, AgentState, FrozenPolicy, PolicySpec};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

/// Monte Carlo evaluation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub n_rollouts: usize,
    /// None: derived so the truncation bias stays below 1e-3.
    pub horizon: Option<usize>,
    pub quantiles: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_rollouts: 100_000,
            horizon: None,
            quantiles: vec![0.01, 0.1, 0.3, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mdp: TabularMdp,
    pub agent: AgentSpec,
    pub policy: PolicySpec,
    pub total_steps: u64,
    pub n_trials: usize,
    pub eval: EvalConfig,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::InvalidParameter("n_trials must be positive".into()));
        }
        if self.eval.n_rollouts == 0 {
            return Err(Error::InvalidParameter(
                "n_rollouts must be positive".into(),
            ));
        }
        let qs = &self.eval.quantiles;
        for q in qs {
            if !(*q > 0.0 && *q < 1.0) {
                return Err(Error::QuantileOutOfRange(*q));
            }
        }
        if qs.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter(
                "quantile list must be sorted".into(),
            ));
        }
        Ok(())
    }
}

/// Sample statistics of truncated returns from the start state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnStats {
    pub mean: f64,
    pub quantile_values: Vec<(f64, f64)>,
    pub n_rollouts: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub final_state: AgentState,
    pub greedy_path: Vec<usize>,
    pub stats: ReturnStats,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stat {
    Mean,
    Quantile(f64),
}

impl std::fmt::Display for Stat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stat::Mean => write!(f, "mean"),
            Stat::Quantile(q) => write!(f, "q{q}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatSummary {
    pub statistic: Stat,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub summaries: Vec<StatSummary>,
    pub trials: Vec<TrialResult>,
}

/// Horizon K with gamma^K * R_bound / (1 - gamma) < 1e-3, so truncation bias
/// stays below reporting precision for bounded rewards. Heavy-tail reward
/// configurations use their mean magnitude as the bound; the truncation is
/// recorded in every ReturnStats.
pub fn auto_horizon(mdp: &TabularMdp) -> usize {
    let gamma = mdp.discount();
    if gamma == 0.0 {
        return 1;
    }
    let bound = mdp.reward_magnitude_bound().max(1e-9);
    let target = 1e-3 * (1.0 - gamma) / bound;
    (target.ln() / gamma.ln()).ceil().max(1.0) as usize
}

/// Empirical quantile with linear interpolation between order statistics.
fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Simulate truncated discounted returns under a frozen policy.
pub fn monte_carlo_return_stats(
    mdp: &TabularMdp,
    policy: &FrozenPolicy,
    start_state: usize,
    n_rollouts: usize,
    horizon: Option<usize>,
    quantiles: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<ReturnStats> {
    if start_state >= mdp.n_states() {
        return Err(Error::IndexOutOfRange(format!("start state {start_state}")));
    }
    let horizon = horizon.unwrap_or_else(|| auto_horizon(mdp));
    let gamma = mdp.discount();
    let mut returns = Vec::with_capacity(n_rollouts);
    for _ in 0..n_rollouts {
        let mut s = start_state;
        let mut acc = 0.0;
        let mut disc = 1.0;
        for _ in 0..horizon {
            let a = policy.sample_action(s, rng);
            let sample = mdp.step(s, a, rng)?;
            acc += disc * sample.reward;
            disc *= gamma;
            s = sample.next_state;
        }
        returns.push(acc);
    }
    let mean = returns.iter().sum::<f64>() / n_rollouts as f64;
    returns.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile_values: Vec<(f64, f64)> = quantiles
        .iter()
        .map(|&q| (q, empirical_quantile(&returns, q)))
        .collect();
    Ok(ReturnStats {
        mean,
        quantile_values,
        n_rollouts,
        horizon,
    })
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-trial seed derivation.
pub fn derive_trial_seed(master_seed: u64, trial_index: usize) -> u64 {
    splitmix64(master_seed.wrapping_add(splitmix64(trial_index as u64 + 1)))
}

/// One full trial: T learning steps, greedy freeze, Monte Carlo evaluation.
pub fn run_trial(config: &ExperimentConfig, seed: u64) -> Result<TrialResult> {
    config.validate()?;
    let mdp = &config.mdp;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = AgentState::new(&config.agent, mdp)?;
    let mut s = mdp.start_state();
    for t in 0..config.total_steps {
        let values = state
            .action_values(&config.agent, s)
            .map_err(|e| Error::TrialFailed {
                step: t,
                source: Box::new(e),
            })?;
        let a = config.policy.select_action(&values, t, &mut rng);
        let sample = mdp.step(s, a, &mut rng).map_err(|e| Error::TrialFailed {
            step: t,
            source: Box::new(e),
        })?;
        agent_step(
            &config.agent,
            &mut state,
            &sample,
            mdp.discount(),
            &config.policy,
        )
        .map_err(|e| Error::TrialFailed {
            step: t,
            source: Box::new(e),
        })?;
        s = sample.next_state;
    }
    let frozen = FrozenPolicy::greedy(mdp, &config.agent, &state)?;
    // evaluation stream decorrelated from the training stream
    let mut eval_rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x0E7A_1BAD_5EED_FACE));
    let stats = monte_carlo_return_stats(
        mdp,
        &frozen,
        mdp.start_state(),
        config.eval.n_rollouts,
        config.eval.horizon,
        &config.eval.quantiles,
        &mut eval_rng,
    )?;
    let path = greedy_path(mdp, &config.agent, &state)?;
    Ok(TrialResult {
        final_state: state,
        greedy_path: path,
        stats,
        seed,
    })
}

/// Sample mean and (n-1)-denominator standard deviation.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Mean and sample standard deviation of each statistic across trials.
pub fn aggregate(trials: &[TrialResult]) -> Vec<StatSummary> {
    let mut summaries = Vec::new();
    if trials.is_empty() {
        return summaries;
    }
    let means: Vec<f64> = trials.iter().map(|t| t.stats.mean).collect();
    let (mean, std) = mean_and_std(&means);
    summaries.push(StatSummary {
        statistic: Stat::Mean,
        mean,
        std,
    });
    for (qi, &(q, _)) in trials[0].stats.quantile_values.iter().enumerate() {
        let values: Vec<f64> = trials
            .iter()
            .map(|t| t.stats.quantile_values[qi].1)
            .collect();
        let (mean, std) = mean_and_std(&values);
        summaries.push(StatSummary {
            statistic: Stat::Quantile(q),
            mean,
            std,
        });
    }
    summaries
}

/// Run all trials (optionally across a bounded worker pool) and aggregate.
/// Outputs are a pure function of (config, master_seed) regardless of the
/// worker count.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<ExperimentOutcome> {
    config.validate()?;
    let n = config.n_trials;
    let seeds: Vec<u64> = (0..n)
        .map(|i| derive_trial_seed(config.master_seed, i))
        .collect();
    let workers = workers.max(1).min(n);
    let mut slots: Vec<Option<Result<TrialResult>>> = (0..n).map(|_| None).collect();
    if workers == 1 {
        for (i, &seed) in seeds.iter().enumerate() {
            slots[i] = Some(run_trial(config, seed));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results: Vec<std::sync::Mutex<Option<Result<TrialResult>>>> =
            (0..n).map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let result = run_trial(config, seeds[i]);
                    *results[i].lock().unwrap() = Some(result);
                });
            }
        });
        for (i, cell) in results.into_iter().enumerate() {
            slots[i] = cell.into_inner().unwrap();
        }
    }
    let mut trials = Vec::with_capacity(n);
    for slot in slots {
        trials.push(slot.expect("every trial ran")?);
    }
    let summaries = aggregate(&trials);
    Ok(ExperimentOutcome { summaries, trials })
}

/// Outcome of the two-sided Welch test at the 1% level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WelchOutcome {
    Test {
        t: f64,
        df: f64,
        significant_1pct: bool,
    },
    /// Both samples have zero variance: no basis for a t statistic.
    Degenerate,
}

impl WelchOutcome {
    pub fn significant(&self) -> bool {
        matches!(
            self,
            WelchOutcome::Test {
                significant_1pct: true,
                ..
            }
        )
    }
}

/// Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom.
pub fn welch_t_test(sample_a: &[f64], sample_b: &[f64]) -> Result<WelchOutcome> {
    if sample_a.len() < 2 || sample_b.len() < 2 {
        return Err(Error::InvalidParameter(
            "both samples need at least 2 points".into(),
        ));
    }
    let stats = |xs: &[f64]| -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var, n)
    };
    let (ma, va, na) = stats(sample_a);
    let (mb, vb, nb) = stats(sample_b);
    if va == 0.0 && vb == 0.0 {
        return Ok(WelchOutcome::Degenerate);
    }
    let sa = va / na;
    let sb = vb / nb;
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa.powi(2) / (na - 1.0) + sb.powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::InvalidParameter(format!("welch df {df}: {e}")))?;
    let critical = dist.inverse_cdf(0.995);
    Ok(WelchOutcome::Test {
        t,
        df,
        significant_1pct: t.abs() > critical,
    })
}
