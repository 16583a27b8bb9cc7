//! Plain-text experiment configuration: flat `key = value` sections, one per
//! subsystem, diff-able and embedded verbatim in run manifests.

use retden::agent::{AgentSpec, Algorithm, PolicySpec, Schedule, TargetMode};
use retden::density::ModelKind;
use retden::experiment::{EvalConfig, ExperimentConfig};
use retden::mdp::{GridSpec, RewardSpec, TabularMdp};
use retden::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Parsed config: ordered sections of key/value pairs.
#[derive(Debug, Clone, Default)]
pub struct Sections {
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl Sections {
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Sections::default();
        let mut current: Option<usize> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                let name = line[1..line.len() - 1].trim().to_string();
                out.sections.push((name, Vec::new()));
                current = Some(out.sections.len() - 1);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                ))
            })?;
            let idx = current.ok_or_else(|| {
                Error::Parse(format!("line {}: key outside any section", lineno + 1))
            })?;
            out.sections[idx]
                .1
                .push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(out)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .iter()
            .filter(|(name, _)| name == section)
            .flat_map(|(_, kvs)| kvs.iter())
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key)
            .ok_or_else(|| Error::Parse(format!("missing `{key}` in [{section}]")))
    }

    pub fn set(&mut self, section: &str, key: &str, value: String) {
        for (name, kvs) in self.sections.iter_mut() {
            if name == section {
                for (k, v) in kvs.iter_mut() {
                    if k == key {
                        *v = value;
                        return;
                    }
                }
                kvs.push((key.to_string(), value));
                return;
            }
        }
        self.sections
            .push((section.to_string(), vec![(key.to_string(), value)]));
    }

    /// Canonical text form (manifest body).
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, kvs) in &self.sections {
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in kvs {
                out.push_str(&format!("{k} = {v}\n"));
            }
            out.push('\n');
        }
        out
    }
}

fn parse_u64(value: &str, what: &str) -> Result<u64> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("{what}: expected integer, got `{value}`")))
}

fn parse_usize(value: &str, what: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("{what}: expected integer, got `{value}`")))
}

fn parse_f64(value: &str, what: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("{what}: expected number, got `{value}`")))
}

/// Schedule grammar: `constant V` | `inverse A B` (1/(A + B t/T)) |
/// `linear FROM TO`.
fn parse_schedule(value: &str, total_steps: u64, what: &str) -> Result<Schedule> {
    let fields: Vec<&str> = value.split_whitespace().collect();
    match fields.as_slice() {
        ["constant", v] => Ok(Schedule::Constant(parse_f64(v, what)?)),
        ["inverse", a, b] => Ok(Schedule::InverseRamp {
            a: parse_f64(a, what)?,
            b: parse_f64(b, what)?,
            total_steps,
        }),
        ["linear", from, to] => Ok(Schedule::Linear {
            from: parse_f64(from, what)?,
            to: parse_f64(to, what)?,
            total_steps,
        }),
        _ => Err(Error::Parse(format!("{what}: unknown schedule `{value}`"))),
    }
}

fn build_mdp(sections: &Sections) -> Result<TabularMdp> {
    match sections.require("mdp", "kind")? {
        "cliff_walk" => {
            let cliff_reward: RewardSpec = sections.require("mdp", "cliff_reward")?.parse()?;
            let goal_reward = parse_f64(sections.require("mdp", "goal_reward")?, "goal_reward")?;
            let slip_main = parse_f64(sections.require("mdp", "slip_main")?, "slip_main")?;
            let slip_other = parse_f64(sections.require("mdp", "slip_other")?, "slip_other")?;
            let mut spec = GridSpec::cliff_walk(cliff_reward, goal_reward, slip_main, slip_other);
            if let Some(d) = sections.get("mdp", "discount") {
                spec.discount = parse_f64(d, "discount")?;
            }
            spec.build()
        }
        "gridwalk" => {
            // custom layout: the [mdp] section carries the full grid document
            let mut doc = String::new();
            for key in [
                "rows",
                "cols",
                "start",
                "goal",
                "cliff",
                "slip_main",
                "slip_other",
                "goal_reward",
                "cliff_reward",
                "discount",
            ] {
                doc.push_str(&format!("{key} = {}\n", sections.require("mdp", key)?));
            }
            GridSpec::from_text(&doc)?.build()
        }
        other => Err(Error::Parse(format!("unknown mdp kind `{other}`"))),
    }
}

fn build_agent(sections: &Sections, total_steps: u64) -> Result<AgentSpec> {
    let lr = parse_schedule(
        sections.require("schedules", "learning_rate")?,
        total_steps,
        "learning_rate",
    )?;
    let algorithm = match sections.require("agent", "algorithm")? {
        "qq_learning" => {
            let model: ModelKind = sections.require("agent", "model")?.parse()?;
            let q = parse_f64(sections.require("agent", "q")?, "q")?;
            let target_mode = match sections.get("agent", "target").unwrap_or("off_policy") {
                "off_policy" => TargetMode::OffPolicy,
                "on_policy" => TargetMode::OnPolicy,
                other => return Err(Error::Parse(format!("unknown target mode `{other}`"))),
            };
            Algorithm::QQLearning {
                q,
                model,
                target_mode,
            }
        }
        "watkins_q" => Algorithm::WatkinsQ,
        "q_hat" => {
            let init = match sections.get("agent", "qhat_init") {
                None | Some("auto") => None,
                Some(v) => Some(parse_f64(v, "qhat_init")?),
            };
            Algorithm::QHat { init }
        }
        other => return Err(Error::Parse(format!("unknown algorithm `{other}`"))),
    };
    AgentSpec::new(algorithm, lr)
}

fn build_policy(sections: &Sections, total_steps: u64) -> Result<PolicySpec> {
    match sections.require("policy", "kind")? {
        "epsilon_greedy" => Ok(PolicySpec::EpsilonGreedy {
            epsilon: parse_schedule(
                sections.require("policy", "epsilon")?,
                total_steps,
                "epsilon",
            )?,
        }),
        "softmax" => Ok(PolicySpec::Softmax {
            beta: parse_schedule(sections.require("policy", "beta")?, total_steps, "beta")?,
        }),
        other => Err(Error::Parse(format!("unknown policy `{other}`"))),
    }
}

fn build_eval(sections: &Sections) -> Result<EvalConfig> {
    let mut eval = EvalConfig::default();
    if let Some(v) = sections.get("eval", "n_rollouts") {
        eval.n_rollouts = parse_usize(v, "n_rollouts")?;
    }
    if let Some(v) = sections.get("eval", "horizon") {
        eval.horizon = if v == "auto" {
            None
        } else {
            Some(parse_usize(v, "horizon")?)
        };
    }
    if let Some(v) = sections.get("eval", "quantiles") {
        let qs: Result<Vec<f64>> = v
            .split_whitespace()
            .map(|f| parse_f64(f, "quantiles"))
            .collect();
        eval.quantiles = qs?;
    }
    Ok(eval)
}

/// Resolved run: the experiment config plus the identity fields written to
/// the results schema.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub config: ExperimentConfig,
    pub algorithm_label: String,
    pub model_label: String,
    pub q_label: String,
    pub sections: Sections,
}

/// CLI overrides applied on top of the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub steps: Option<u64>,
}

pub fn resolve(text: &str, overrides: Overrides) -> Result<ResolvedRun> {
    let mut sections = Sections::parse(text)?;
    if let Some(seed) = overrides.seed {
        sections.set("run", "master_seed", seed.to_string());
    }
    if let Some(trials) = overrides.trials {
        sections.set("run", "n_trials", trials.to_string());
    }
    if let Some(steps) = overrides.steps {
        sections.set("schedules", "total_steps", steps.to_string());
    }

    let total_steps = parse_u64(sections.require("schedules", "total_steps")?, "total_steps")?;
    let mdp = build_mdp(&sections)?;
    let agent = build_agent(&sections, total_steps)?;
    let policy = build_policy(&sections, total_steps)?;
    let eval = build_eval(&sections)?;
    let n_trials = parse_usize(sections.require("run", "n_trials")?, "n_trials")?;
    let master_seed = parse_u64(sections.require("run", "master_seed")?, "master_seed")?;

    let config = ExperimentConfig {
        mdp,
        agent,
        policy,
        total_steps,
        n_trials,
        eval,
        master_seed,
    };
    config.validate()?;

    let algorithm_label = sections.require("agent", "algorithm")?.to_string();
    let model_label = sections.get("agent", "model").unwrap_or("-").to_string();
    let q_label = sections.get("agent", "q").unwrap_or("-").to_string();
    Ok(ResolvedRun {
        config,
        algorithm_label,
        model_label,
        q_label,
        sections,
    })
}

/// Run manifest: tool identity plus the fully resolved config, written next
/// to the outputs. Feeding the manifest back through `run` reproduces the
/// results file byte for byte.
pub struct RunManifest {
    pub tool_version: String,
    pub created_unix: u64,
    pub config_source: String,
    pub out_dir: String,
    pub resolved: Sections,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("[manifest]\n");
        out.push_str(&format!("tool = retden {}\n", self.tool_version));
        out.push_str(&format!("created_unix = {}\n", self.created_unix));
        out.push_str(&format!("config_source = {}\n", self.config_source));
        out.push_str(&format!("out_dir = {}\n", self.out_dir));
        out.push('\n');
        out.push_str(&self.resolved.render());
        out
    }
}
