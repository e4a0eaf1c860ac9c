//! Randomized bound-verification campaigns: a deterministic sweep of random
//! CMDPs and softmax policy pairs, every bound and identity evaluated per
//! (pair, λ) and serialized one CSV row at a time.

use crate::bounds::{pair_report, BoundError, BoundReport, PASS_TOL};
use crate::cmdp::{build_random_cmdp, SoftmaxPolicy};
use crate::mix_seed;
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Campaign shape: sizes are drawn uniformly from the inclusive ranges and
/// the whole sweep is a pure function of `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub n_cmdps: usize,
    pub pairs_per_cmdp: usize,
    pub lambdas: Vec<f64>,
    pub state_range: (usize, usize),
    pub action_range: (usize, usize),
    pub seed: u64,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        Self {
            n_cmdps: 100,
            pairs_per_cmdp: 5,
            lambdas: vec![0.0, 0.5, 0.95],
            state_range: (2, 6),
            action_range: (2, 3),
            seed: 1,
        }
    }
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.lambdas.is_empty() {
            return Err("empty lambdas".into());
        }
        if self.lambdas.iter().any(|l| !(0.0..1.0).contains(l)) {
            return Err("lambdas must lie in [0,1)".into());
        }
        if self.n_cmdps == 0 || self.pairs_per_cmdp == 0 {
            return Err("n_cmdps and pairs_per_cmdp must be at least 1".into());
        }
        for (name, (lo, hi)) in [
            ("state_range", self.state_range),
            ("action_range", self.action_range),
        ] {
            if lo < 1 || lo > hi {
                return Err(format!("{name} must satisfy 1 <= lo <= hi, got ({lo}, {hi})"));
            }
        }
        Ok(())
    }
}

/// One evaluated (cmdp, pair, λ) combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignRow {
    pub cmdp_index: usize,
    pub pair_index: usize,
    pub cmdp_seed: u64,
    pub n_states: usize,
    pub n_actions: usize,
    pub report: BoundReport,
}

impl CampaignRow {
    pub const CSV_HEADER: &'static str = "cmdp,pair,seed,n_states,n_actions,lambda,j_diff,jc_diff,l_minus,l_plus,eps_series,tail_bound,improve_lb,cost_ub,improve_lb_kl,cost_ub_kl,eps_v,eps_c,expected_tv,expected_kl,visit_gap_lhs,visit_gap_rhs,identity_gap,classic_gap,pass_sandwich,pass_improve_lb,pass_cost_ub,pass_kl_order,denom_flag";

    pub fn csv_row(&self) -> String {
        let r = &self.report;
        [
            self.cmdp_index.to_string(),
            self.pair_index.to_string(),
            self.cmdp_seed.to_string(),
            self.n_states.to_string(),
            self.n_actions.to_string(),
            crate::format_real(r.lambda),
            crate::format_real(r.j_diff),
            crate::format_real(r.jc_diff),
            crate::format_real(r.l_minus),
            crate::format_real(r.l_plus),
            crate::format_real(r.eps_series),
            crate::format_real(r.tail_bound),
            crate::format_real(r.improvement_lower),
            crate::format_real(r.cost_upper),
            crate::format_real(r.improvement_lower_kl),
            crate::format_real(r.cost_upper_kl),
            crate::format_real(r.eps_v),
            crate::format_real(r.eps_c),
            crate::format_real(r.expected_tv),
            crate::format_real(r.expected_kl),
            crate::format_real(r.visit_gap_lhs),
            crate::format_real(r.visit_gap_rhs),
            crate::format_real(r.identity_gap),
            crate::format_real(r.classic_gap),
            r.pass_sandwich.to_string(),
            r.pass_improvement_lower.to_string(),
            r.pass_cost_upper.to_string(),
            r.pass_kl_order.to_string(),
            r.denom_flag.to_string(),
        ]
        .join(",")
    }
}

/// Aggregate counts over a finished campaign.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub rows: usize,
    /// Sandwich, identity, KL-ordering, or λ=0 one-sided violations: the
    /// properties that are supposed to hold everywhere.
    pub hard_violations: usize,
    pub sandwich_violations: usize,
    pub identity_violations: usize,
    pub kl_order_violations: usize,
    pub one_sided_violations_lambda0: usize,
    /// One-sided bound violations at λ > 0, reported as diagnostics: the
    /// stated penalty coefficients do not actually control this regime.
    pub one_sided_violations_positive_lambda: usize,
    pub visitation_gap_holds: usize,
    pub denom_flagged: usize,
    pub max_sandwich_margin: f64,
    pub max_identity_gap: f64,
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub rows: Vec<CampaignRow>,
    pub summary: CampaignSummary,
}

impl CampaignOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CampaignRow::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Runs the full sweep. Sizes, policies, and per-CMDP seeds all derive from
/// `spec.seed`, so two runs of the same spec produce identical rows.
pub fn run_campaign(spec: &CampaignSpec) -> Result<CampaignOutcome, BoundError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::new();
    let mut summary = CampaignSummary::default();
    for cmdp_index in 0..spec.n_cmdps {
        let n_states = rng.random_range(spec.state_range.0..=spec.state_range.1);
        let n_actions = rng.random_range(spec.action_range.0..=spec.action_range.1);
        let cmdp_seed = mix_seed(spec.seed, cmdp_index as u64);
        let cmdp = build_random_cmdp(n_states, n_actions, cmdp_seed)
            .expect("campaign sizes are at least 1");
        for pair_index in 0..spec.pairs_per_cmdp {
            let draw_policy = |rng: &mut ChaCha8Rng| {
                let logits =
                    Array2::from_shape_fn((n_states, n_actions), |_| rng.random_range(-2.0..2.0));
                SoftmaxPolicy::new(logits).expect("finite logits")
            };
            let pi_new = draw_policy(&mut rng);
            let pi_old = draw_policy(&mut rng);
            for &lambda in &spec.lambdas {
                let report = pair_report(&cmdp, &pi_new, &pi_old, lambda, None)?;
                summary.rows += 1;
                let mut hard = false;
                if !report.pass_sandwich {
                    summary.sandwich_violations += 1;
                    hard = true;
                    let margin = (report.l_minus - report.j_diff)
                        .max(report.j_diff - report.l_plus);
                    summary.max_sandwich_margin = summary.max_sandwich_margin.max(margin);
                }
                if report.identity_gap > PASS_TOL || report.classic_gap > PASS_TOL {
                    summary.identity_violations += 1;
                    hard = true;
                }
                summary.max_identity_gap = summary
                    .max_identity_gap
                    .max(report.identity_gap)
                    .max(report.classic_gap);
                if !report.pass_kl_order {
                    summary.kl_order_violations += 1;
                    hard = true;
                }
                let one_sided_ok = report.pass_improvement_lower && report.pass_cost_upper;
                if lambda == 0.0 {
                    if !one_sided_ok {
                        summary.one_sided_violations_lambda0 += 1;
                        hard = true;
                    }
                } else if !one_sided_ok {
                    summary.one_sided_violations_positive_lambda += 1;
                }
                if report.visit_gap_lhs <= report.visit_gap_rhs + PASS_TOL {
                    summary.visitation_gap_holds += 1;
                }
                if report.denom_flag {
                    summary.denom_flagged += 1;
                }
                if hard {
                    summary.hard_violations += 1;
                }
                rows.push(CampaignRow {
                    cmdp_index,
                    pair_index,
                    cmdp_seed,
                    n_states,
                    n_actions,
                    report,
                });
            }
        }
    }
    Ok(CampaignOutcome { rows, summary })
}
