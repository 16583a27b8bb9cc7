//! Bundled experiment presets: one per benchmark table row plus the two
//! learning-curve comparisons.

fn table2_preset(penalty: &str, agent_block: &str) -> String {
    format!(
        "[mdp]\n\
         kind = cliff_walk\n\
         cliff_reward = {penalty}\n\
         goal_reward = 12\n\
         slip_main = 0.7\n\
         slip_other = 0.1\n\
         discount = 0.95\n\
         \n\
         [agent]\n\
         {agent_block}\n\
         \n\
         [policy]\n\
         kind = epsilon_greedy\n\
         epsilon = linear 1 0\n\
         \n\
         [schedules]\n\
         total_steps = 300000\n\
         learning_rate = inverse 30 30\n\
         \n\
         [eval]\n\
         n_rollouts = 100000\n\
         horizon = auto\n\
         quantiles = 0.01 0.1 0.3 0.5\n\
         \n\
         [run]\n\
         n_trials = 20\n\
         master_seed = 20100613\n"
    )
}

fn fig3_preset(agent_block: &str) -> String {
    format!(
        "[mdp]\n\
         kind = cliff_walk\n\
         cliff_reward = deterministic -10\n\
         goal_reward = 12\n\
         slip_main = 0.7\n\
         slip_other = 0.1\n\
         discount = 0.95\n\
         \n\
         [agent]\n\
         {agent_block}\n\
         \n\
         [policy]\n\
         kind = softmax\n\
         beta = linear 0 2\n\
         \n\
         [schedules]\n\
         total_steps = 300000\n\
         learning_rate = constant 0.1\n\
         \n\
         [eval]\n\
         n_rollouts = 100000\n\
         horizon = auto\n\
         quantiles = 0.01 0.1 0.3 0.5\n\
         \n\
         [run]\n\
         n_trials = 10\n\
         master_seed = 20100613\n"
    )
}

fn qq_block(model: &str, q: &str) -> String {
    format!("algorithm = qq_learning\nmodel = {model}\nq = {q}\ntarget = off_policy")
}

pub fn preset(name: &str) -> Option<String> {
    const GAMMA: &str = "neg_gamma 0.5 20";
    const STUDENT: &str = "student_t 1.2 10 -10";
    let (penalty, rest) = if let Some(rest) = name.strip_prefix("table2a-") {
        (GAMMA, rest)
    } else if let Some(rest) = name.strip_prefix("table2b-") {
        (STUDENT, rest)
    } else {
        let rest = name.strip_prefix("fig3-")?;
        let block = match rest {
            "q-learning" => "algorithm = watkins_q".to_string(),
            "gaussian-q01" => qq_block("gaussian", "0.1"),
            _ => return None,
        };
        return Some(fig3_preset(&block));
    };
    let block = match rest {
        "q-learning" => "algorithm = watkins_q".to_string(),
        "q-hat" => "algorithm = q_hat\nqhat_init = auto".to_string(),
        "gaussian-q01" => qq_block("gaussian", "0.1"),
        "gaussian-q03" => qq_block("gaussian", "0.3"),
        "laplace-q01" => qq_block("laplace", "0.1"),
        "laplace-q03" => qq_block("laplace", "0.3"),
        "laplace-q05" => qq_block("laplace", "0.5"),
        "skewed-laplace-q01" => qq_block("skewed_laplace", "0.1"),
        "skewed-laplace-q03" => qq_block("skewed_laplace", "0.3"),
        "skewed-laplace-q05" => qq_block("skewed_laplace", "0.5"),
        _ => return None,
    };
    Some(table2_preset(penalty, &block))
}

pub fn preset_names() -> Vec<String> {
    let mut names = Vec::new();
    for table in ["table2a", "table2b"] {
        for row in [
            "q-learning",
            "q-hat",
            "gaussian-q01",
            "gaussian-q03",
            "laplace-q01",
            "laplace-q03",
            "laplace-q05",
            "skewed-laplace-q01",
            "skewed-laplace-q03",
            "skewed-laplace-q05",
        ] {
            names.push(format!("{table}-{row}"));
        }
    }
    names.push("fig3-q-learning".into());
    names.push("fig3-gaussian-q01".into());
    names
}
