//! Implementations of the CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use retden::agent::FrozenPolicy;
use retden::bellman::{expected_q_values, grid_stats, iterate_to_fixed_point};
use retden::density::{DensityParams, ModelKind};
use retden::experiment::{mean_and_std, run_experiment, ExperimentOutcome, Stat};
use retden::mdp::{RewardSpec, TabularMdp};
use retden::ng::{mixture_increment, ng_curve, ng_increment_numeric, QuadratureConfig, TdContext};
use retden::Error;

use crate::config::{resolve, Overrides, ResolvedRun, RunManifest};
use crate::presets;

pub type Result<T> = std::result::Result<T, Error>;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Load a config by path, falling back to the bundled preset table.
pub fn load_config(arg: &str) -> Result<(String, String)> {
    let path = Path::new(arg);
    if path.exists() {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read config `{arg}`: {e}")))?;
        return Ok((text, arg.to_string()));
    }
    if let Some(text) = presets::preset(arg) {
        return Ok((text, format!("preset:{arg}")));
    }
    Err(Error::Parse(format!(
        "config `{arg}` is neither a file nor a bundled preset; presets: {}",
        presets::preset_names().join(", ")
    )))
}

fn results_csv(run: &ResolvedRun, outcome: &ExperimentOutcome) -> String {
    let mut out = String::from("algorithm,model,q,statistic,mean,std,n_trials,seed\n");
    for summary in &outcome.summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            run.algorithm_label,
            run.model_label,
            run.q_label,
            summary.statistic,
            fmt(summary.mean),
            fmt(summary.std),
            run.config.n_trials,
            run.config.master_seed
        ));
    }
    out
}

fn trials_csv(run: &ResolvedRun, outcome: &ExperimentOutcome) -> String {
    let mut out = String::new();
    out.push_str(&format!("# algorithm = {}\n", run.algorithm_label));
    out.push_str(&format!("# model = {}\n", run.model_label));
    out.push_str(&format!("# q = {}\n", run.q_label));
    out.push_str(&format!("# n_trials = {}\n", run.config.n_trials));
    out.push_str(&format!("# master_seed = {}\n", run.config.master_seed));
    out.push_str("trial,seed,statistic,value\n");
    for (i, trial) in outcome.trials.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},mean,{}\n",
            trial.seed,
            fmt(trial.stats.mean)
        ));
        for (q, v) in &trial.stats.quantile_values {
            out.push_str(&format!(
                "{i},{},{},{}\n",
                trial.seed,
                Stat::Quantile(*q),
                fmt(*v)
            ));
        }
    }
    out
}

fn paths_csv(outcome: &ExperimentOutcome) -> String {
    let mut out = String::from("trial,seed,greedy_path\n");
    for (i, trial) in outcome.trials.iter().enumerate() {
        let path: Vec<String> = trial.greedy_path.iter().map(|s| s.to_string()).collect();
        out.push_str(&format!("{i},{},{}\n", trial.seed, path.join("-")));
    }
    out
}

pub fn cmd_run(
    config_arg: &str,
    overrides: Overrides,
    out_dir: &Path,
    workers: usize,
) -> Result<()> {
    let (text, source) = load_config(config_arg)?;
    let run = resolve(&text, overrides)?;
    let outcome = run_experiment(&run.config, workers)?;

    fs::create_dir_all(out_dir)
        .map_err(|e| Error::Parse(format!("cannot create {}: {e}", out_dir.display())))?;
    let write = |name: &str, contents: String| -> Result<()> {
        fs::write(out_dir.join(name), contents)
            .map_err(|e| Error::Parse(format!("cannot write {name}: {e}")))
    };
    write("results.csv", results_csv(&run, &outcome))?;
    write("trials.csv", trials_csv(&run, &outcome))?;
    write("paths.csv", paths_csv(&outcome))?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config_source: source,
        out_dir: out_dir.display().to_string(),
        resolved: run.sections.clone(),
    };
    write("manifest.txt", manifest.render())?;
    for summary in &outcome.summaries {
        println!(
            "{:>8}  {:>12.4} +- {:.4}",
            summary.statistic.to_string(),
            summary.mean,
            summary.std
        );
    }
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn parse_components(
    kind: ModelKind,
    text: Option<&str>,
    default_skew: f64,
) -> Result<DensityParams> {
    match text {
        None => {
            let comps: &[f64] = match kind {
                ModelKind::Gaussian | ModelKind::Laplace => &[0.0, 1.0],
                ModelKind::SkewedLaplace => &[0.0, 1.0, default_skew],
            };
            DensityParams::from_components(kind, &comps[..kind.dim()])
        }
        Some(text) => {
            let comps: Result<Vec<f64>> = text
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("parameter `{f}`")))
                })
                .collect();
            DensityParams::from_components(kind, &comps?)
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_ng_curve(
    model: &str,
    params: Option<&str>,
    target: Option<&str>,
    delta_min: f64,
    delta_max: f64,
    points: usize,
    discount: f64,
    out_file: &Path,
) -> Result<()> {
    let kind: ModelKind = model.parse()?;
    let current = parse_components(kind, params, 0.5)?;
    let tgt = parse_components(kind, target, 0.5)?;
    let curve = ng_curve(&current, &tgt, delta_min, delta_max, points, discount)?;

    let mut out = String::from("delta");
    for name in kind.param_names() {
        out.push_str(&format!(",ng_{name}"));
    }
    out.push('\n');
    for point in &curve {
        out.push_str(&fmt(point.delta));
        for i in 0..kind.dim() {
            out.push_str(&format!(",{}", fmt(point.ng.get(i))));
        }
        out.push('\n');
    }
    if let Some(parent) = out_file.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| Error::Parse(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(out_file, out)
        .map_err(|e| Error::Parse(format!("cannot write {}: {e}", out_file.display())))?;
    println!("wrote {} ({} rows)", out_file.display(), curve.len());
    Ok(())
}

fn random_params(kind: ModelKind, rng: &mut ChaCha8Rng) -> DensityParams {
    let central = rng.random_range(-5.0..5.0);
    let scale = rng.random_range(0.1..3.0);
    match kind {
        ModelKind::Gaussian => DensityParams::gaussian(central, scale).unwrap(),
        ModelKind::Laplace => DensityParams::laplace(central, scale).unwrap(),
        ModelKind::SkewedLaplace => {
            DensityParams::skewed_laplace(central, scale, rng.random_range(0.05..0.95)).unwrap()
        }
    }
}

/// Randomized closed-form-vs-quadrature sweep plus the grid fixed-point
/// check. Returns false (and prints the failing cases) when any check
/// exceeds its tolerance.
pub fn cmd_oracle_check(cases: usize, seed: u64, perturb_laplace_b: Option<f64>) -> Result<bool> {
    let quad = QuadratureConfig::default();
    let mut all_ok = true;

    for kind in [
        ModelKind::Gaussian,
        ModelKind::Laplace,
        ModelKind::SkewedLaplace,
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        let mut failures = Vec::new();
        for case in 0..cases {
            let current = random_params(kind, &mut rng);
            let target = random_params(kind, &mut rng);
            let discount = rng.random_range(0.6..0.99);
            let base: f64 = rng.random_range(0.5..4.0);
            let reward = if case % 2 == 0 { base } else { -base };
            let ctx = TdContext::single(reward, discount, 0.1, current, target).unwrap();
            let mut closed = mixture_increment(&ctx)?;
            if kind == ModelKind::Laplace {
                if let Some(perturb) = perturb_laplace_b {
                    // fault-injection fixture: shift the scale component
                    let mut vals: Vec<f64> = closed.as_slice().to_vec();
                    vals[1] += perturb;
                    closed = retden::density::Gradient::from_slice(&vals);
                }
            }
            let numeric = ng_increment_numeric(&ctx, &quad)?;
            for i in 0..closed.dim() {
                let diff = (closed.get(i) - numeric.get(i)).abs();
                let denom = closed.get(i).abs().max(numeric.get(i).abs());
                let rel = if denom > 1e-3 { diff / denom } else { diff };
                worst = worst.max(rel);
                if rel > 1e-5 {
                    failures.push(format!(
                        "case {case} param {i}: closed {} vs quadrature {} \
                         (current {current:?}, target {target:?}, reward {reward}, discount {discount})",
                        closed.get(i),
                        numeric.get(i)
                    ));
                }
            }
        }
        println!("{kind}: worst relative discrepancy {worst:.3e} over {cases} cases");
        if !failures.is_empty() {
            all_ok = false;
            println!("{kind}: {} FAILING cases:", failures.len());
            for f in failures.iter().take(5) {
                println!("  {f}");
            }
        }
    }

    // grid fixed point vs the exact linear system on a random 3-state MDP
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB311);
    let n_states = 3;
    let n_actions = 2;
    let gamma = 0.9;
    let mut transition = Vec::new();
    let mut rewards = Vec::new();
    for _ in 0..n_states * n_actions {
        let mut row: Vec<f64> = (0..n_states).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = row.iter().sum();
        for p in row.iter_mut() {
            *p /= total;
        }
        let sum: f64 = row.iter().sum();
        let imax = (0..n_states)
            .max_by(|&i, &j| row[i].partial_cmp(&row[j]).unwrap())
            .unwrap();
        row[imax] += 1.0 - sum;
        transition.extend_from_slice(&row);
        for _ in 0..n_states {
            rewards.push(RewardSpec::Deterministic(rng.random_range(-1.0..1.0)));
        }
    }
    let mdp = TabularMdp::new(n_states, n_actions, transition, rewards, gamma, 0, None)?;
    let policy = FrozenPolicy::uniform(n_states, n_actions);
    let (table, iters) = iterate_to_fixed_point(&mdp, &policy, -25.0, 25.0, 2501, 1e-7)?;
    let exact = expected_q_values(&mdp, &policy)?;
    let bin = table.get(0, 0).bin_width();
    let mut worst_mean: f64 = 0.0;
    for s in 0..n_states {
        for a in 0..n_actions {
            let mean = grid_stats(table.get(s, a), &[])?.mean;
            worst_mean = worst_mean.max((mean - exact[s * n_actions + a]).abs());
        }
    }
    println!(
        "bellman fixed point: worst mean error {worst_mean:.3e} ({:.2} bins) in {iters} sweeps",
        worst_mean / bin
    );
    if worst_mean > 2.0 * bin {
        all_ok = false;
        println!("bellman fixed point FAILED (> 2 bins)");
    }

    Ok(all_ok)
}

/// Re-aggregate an existing per-trial file into the results schema.
pub fn cmd_report(trials_file: &Path, out_file: &Path) -> Result<()> {
    let text = fs::read_to_string(trials_file)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", trials_file.display())))?;
    let mut meta = std::collections::HashMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut values: std::collections::HashMap<String, Vec<f64>> = std::collections::HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if line.is_empty() || line.starts_with("trial,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!("bad trial row `{line}`")));
        }
        let stat = fields[2].to_string();
        let value: f64 = fields[3]
            .parse()
            .map_err(|_| Error::Parse(format!("bad value `{}`", fields[3])))?;
        if !values.contains_key(&stat) {
            order.push(stat.clone());
        }
        values.entry(stat).or_default().push(value);
    }
    let get = |k: &str| meta.get(k).cloned().unwrap_or_else(|| "-".into());
    let mut out = String::from("algorithm,model,q,statistic,mean,std,n_trials,seed\n");
    for stat in &order {
        let vals = &values[stat];
        let (mean, std) = mean_and_std(vals);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            get("algorithm"),
            get("model"),
            get("q"),
            stat,
            fmt(mean),
            fmt(std),
            vals.len(),
            get("master_seed")
        ));
    }
    fs::write(out_file, out)
        .map_err(|e| Error::Parse(format!("cannot write {}: {e}", out_file.display())))?;
    println!("wrote {}", out_file.display());
    Ok(())
}

pub fn default_out_dir() -> PathBuf {
    PathBuf::from("retden-out")
}
