//! Command implementations for the lab CLI. Each command is a pure function
//! of (config bytes, build) to (exit code, output bytes); the only
//! non-deterministic lines are confined to `#`-prefixed comments, and none
//! are emitted by default.

pub mod config;

use cmdp_lab::campaign::run_campaign;
use cmdp_lab::cup::{train_cup, train_lagrangian_baseline, TrainLog};
use cmdp_lab::dp::{objective, solve_policy, Signal};
use cmdp_lab::sampler::sample_trajectories;
use cmdp_lab::{mix_seed, SoftmaxPolicy};
use config::{load_raw, resolve, ResolvedConfig};
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Models up to this many table cells get exact per-policy summaries.
const EXACT_SUMMARY_LIMIT: usize = 4096;

fn load_config(path: &Path) -> Result<ResolvedConfig, String> {
    let raw = load_raw(path).map_err(|e| e.to_string())?;
    resolve(&raw).map_err(|e| e.to_string())
}

fn output_path(resolved: &ResolvedConfig, output_override: Option<&Path>, default: &str) -> PathBuf {
    if let Some(path) = output_override {
        return path.to_path_buf();
    }
    match &resolved.output_path {
        Some(path) => PathBuf::from(path),
        None => PathBuf::from(default),
    }
}

fn write_output(path: &Path, contents: &str) -> Result<(), String> {
    std::fs::write(path, contents)
        .map_err(|e| format!("cannot write output {}: {e}", path.display()))
}

/// Runs the bound-verification campaign and writes one CSV row per
/// (cmdp, pair, λ). Exits 0 iff the hard assertions hold everywhere: the
/// performance sandwich, both objective identities, the KL-relaxation
/// ordering, and the one-sided bounds at λ = 0. One-sided results at λ > 0
/// and the visitation-gap comparison are recorded as diagnostics.
pub fn cmd_verify_bounds(config_path: &Path, output_override: Option<&Path>) -> i32 {
    let resolved = match load_config(config_path) {
        Ok(resolved) => resolved,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = resolved.campaign.validate() {
        eprintln!("error: invalid campaign: {e}");
        return EXIT_CONFIG;
    }
    let outcome = match run_campaign(&resolved.campaign) {
        Ok(outcome) => outcome,
        Err(e) => {
            eprintln!("error: campaign failed: {e}");
            return EXIT_CONFIG;
        }
    };
    let path = output_path(&resolved, output_override, "verify_bounds.csv");
    let mut text = format!(
        "# verify-bounds seed={} n_cmdps={} pairs={} lambdas={:?}\n",
        resolved.campaign.seed,
        resolved.campaign.n_cmdps,
        resolved.campaign.pairs_per_cmdp,
        resolved.campaign.lambdas
    );
    text.push_str(&outcome.to_csv());
    if let Err(e) = write_output(&path, &text) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    let s = &outcome.summary;
    println!("rows evaluated                {}", s.rows);
    println!("hard violations               {}", s.hard_violations);
    println!("  sandwich                    {}", s.sandwich_violations);
    println!("  identities                  {}", s.identity_violations);
    println!("  kl ordering                 {}", s.kl_order_violations);
    println!("  one-sided (lambda = 0)      {}", s.one_sided_violations_lambda0);
    println!(
        "diagnostic: one-sided misses (lambda > 0)  {}",
        s.one_sided_violations_positive_lambda
    );
    println!(
        "diagnostic: visitation gap lhs<=rhs        {}/{}",
        s.visitation_gap_holds, s.rows
    );
    println!(
        "diagnostic: denominator flag rate          {}/{}",
        s.denom_flagged, s.rows
    );
    println!("max sandwich margin           {:.3e}", s.max_sandwich_margin);
    println!("max identity gap              {:.3e}", s.max_identity_gap);
    println!("csv written to                {}", path.display());
    if s.hard_violations == 0 {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    }
}

fn final_means(log: &TrainLog) -> Option<(f64, f64)> {
    let tail = log.rows.iter().rev().take(10).collect::<Vec<_>>();
    if tail.is_empty() {
        return None;
    }
    let n = tail.len() as f64;
    let j = tail
        .iter()
        .map(|r| r.j_exact.unwrap_or(r.j_hat))
        .sum::<f64>()
        / n;
    let jc = tail
        .iter()
        .map(|r| r.jc_exact.unwrap_or(r.jc_hat))
        .sum::<f64>()
        / n;
    Some((j, jc))
}

/// Trains with the conservative-update loop (optionally also the Lagrangian
/// baseline) and writes the TrainLog CSV.
pub fn cmd_train(
    config_path: &Path,
    output_override: Option<&Path>,
    dump_batch: Option<&Path>,
) -> i32 {
    let resolved = match load_config(config_path) {
        Ok(resolved) => resolved,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let Some(env) = &resolved.env else {
        eprintln!("error: missing \"env\" key (train requires an environment)");
        return EXIT_CONFIG;
    };
    let cmdp = match env.build() {
        Ok(cmdp) => cmdp,
        Err(e) => {
            eprintln!("error: invalid env: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(path) = dump_batch {
        let policy = SoftmaxPolicy::uniform(cmdp.n_states, cmdp.n_actions);
        let batch = sample_trajectories(
            &cmdp,
            &policy,
            resolved.cup.horizon,
            resolved.cup.episodes,
            mix_seed(resolved.cup.seed, 0),
        );
        if let Err(e) = write_output(path, &batch.to_json_lines()) {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
        println!("iteration-0 batch dumped to   {}", path.display());
    }
    let log = match train_cup(&cmdp, &resolved.cup) {
        Ok(log) => log,
        Err(e) => {
            eprintln!("error: training failed: {e}");
            return EXIT_CONFIG;
        }
    };
    let path = output_path(&resolved, output_override, "train_log.csv");
    let mut text = format!(
        "# train iterations={} seed={} b={}\n",
        resolved.cup.iterations, resolved.cup.seed, resolved.cup.cost_limit
    );
    text.push_str(&log.to_csv());
    if let Err(e) = write_output(&path, &text) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    println!("iterations                    {}", log.rows.len());
    if let Some((j, jc)) = final_means(&log) {
        println!("final-10 mean J               {j:.6}");
        println!(
            "final-10 mean J^c             {jc:.6} (limit {})",
            resolved.cup.cost_limit
        );
    }
    println!("log written to                {}", path.display());
    if resolved.baseline {
        match train_lagrangian_baseline(&cmdp, &resolved.cup) {
            Ok(baseline_log) => {
                let baseline_path = path.with_extension("baseline.csv");
                let mut text = format!(
                    "# train-baseline iterations={} seed={} b={}\n",
                    resolved.cup.iterations, resolved.cup.seed, resolved.cup.cost_limit
                );
                text.push_str(&baseline_log.to_csv());
                if let Err(e) = write_output(&baseline_path, &text) {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
                if let Some((j, jc)) = final_means(&baseline_log) {
                    println!("baseline final-10 mean J      {j:.6}");
                    println!("baseline final-10 mean J^c    {jc:.6}");
                }
                println!("baseline log written to       {}", baseline_path.display());
            }
            Err(e) => {
                eprintln!("error: baseline training failed: {e}");
                return EXIT_CONFIG;
            }
        }
    }
    EXIT_OK
}

/// Prints the fully resolved configuration, the environment summary, and
/// the exact uniform-policy objectives when the model is small enough.
pub fn cmd_describe(config_path: &Path, dump_dp: Option<&Path>) -> i32 {
    let resolved = match load_config(config_path) {
        Ok(resolved) => resolved,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let Some(env) = &resolved.env else {
        eprintln!("error: missing \"env\" key (describe requires an environment)");
        return EXIT_CONFIG;
    };
    let cmdp = match env.build() {
        Ok(cmdp) => cmdp,
        Err(e) => {
            eprintln!("error: invalid env: {e}");
            return EXIT_CONFIG;
        }
    };
    let pretty = serde_json::to_string_pretty(&resolved.to_value())
        .expect("resolved config serializes");
    println!("{pretty}");
    println!("n_states                      {}", cmdp.n_states);
    println!("n_actions                     {}", cmdp.n_actions);
    println!("gamma                         {}", cmdp.gamma);
    println!("cost_limit                    {}", cmdp.cost_limit);
    let report = cmdp_lab::validate_cmdp(&cmdp);
    println!("validation                    {report}");
    let uniform = SoftmaxPolicy::uniform(cmdp.n_states, cmdp.n_actions);
    if cmdp.n_states * cmdp.n_actions <= EXACT_SUMMARY_LIMIT {
        match (
            objective(&cmdp, &uniform, Signal::Reward),
            objective(&cmdp, &uniform, Signal::Cost),
        ) {
            (Ok(j), Ok(jc)) => {
                println!("uniform-policy J              {j:.12}");
                println!("uniform-policy J^c            {jc:.12}");
            }
            (Err(e), _) | (_, Err(e)) => {
                eprintln!("error: exact solve failed: {e}");
                return EXIT_CONFIG;
            }
        }
    }
    if let Some(path) = dump_dp {
        match solve_policy(&cmdp, &uniform, Signal::Reward, resolved.cup.lambda_gae) {
            Ok(solution) => {
                let json = serde_json::to_string_pretty(&solution)
                    .expect("solution serializes");
                if let Err(e) = write_output(path, &json) {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
                println!("dp solution dumped to         {}", path.display());
            }
            Err(e) => {
                eprintln!("error: exact solve failed: {e}");
                return EXIT_CONFIG;
            }
        }
    }
    EXIT_OK
}

/// Strips `#`-prefixed comment lines (the only lines allowed to vary
/// between otherwise identical runs).
pub fn strip_comments(text: &str) -> String {
    text.lines()
        .filter(|line| !line.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}
