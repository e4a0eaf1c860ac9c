//! Performance-difference bounds for policy pairs: the two-sided surrogate
//! sandwich, the reward lower / cost upper surrogate bounds with their
//! KL-relaxed variants, the visitation-distribution gap diagnostic, and the
//! per-update improvement/constraint guarantees.
//!
//! All bounds are evaluated against the exact oracle in [`crate::dp`]; the
//! infinite series are truncated with certified tail bounds.

use crate::cmdp::{Cmdp, SoftmaxPolicy};
use crate::dp::{
    self, objective, objective_identity_check, required_series_len, solve_policy, DpError,
    DpSolution, Signal,
};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for every pass/fail flag, chosen above accumulated solve residuals.
pub const PASS_TOL: f64 = 1e-8;
/// Certified bound required of every truncated series tail.
pub const TAIL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BoundError {
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error("degenerate denominator |1 - 2γλ|S||A|| = {0:.3e}")]
    DegenerateDenominator(f64),
    #[error("series truncated at {given} terms, {required} required for the tail bound")]
    TruncationTooShort { given: usize, required: usize },
}

/// Per-state KL divergences `KL(from(·|s) ‖ to(·|s))` between two
/// row-stochastic tables.
pub fn kl_rows(from: &Array2<f64>, to: &Array2<f64>) -> Array1<f64> {
    let (n_states, n_actions) = from.dim();
    let mut kl = Array1::zeros(n_states);
    for s in 0..n_states {
        let mut total = 0.0;
        for a in 0..n_actions {
            let p = from[[s, a]];
            if p > 0.0 {
                total += p * (p.ln() - to[[s, a]].ln());
            }
        }
        kl[s] = total;
    }
    kl
}

/// Per-state and aggregate divergences between two policies, with
/// expectations taken under the old policy's λ-visitation distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergenceProfile {
    /// Total-variation distance per state: `tv[s] = ½ Σ_a |π'(a|s) − π(a|s)|`.
    pub tv: Array1<f64>,
    /// `kl[s] = KL(π_old(·|s) ‖ π_new(·|s))`.
    pub kl: Array1<f64>,
    pub expected_tv: f64,
    pub expected_kl: f64,
    /// `Σ_s Σ_a |π'(a|s) − π(a|s)|`, at most `2|S||A|`.
    pub pi_gap_11: f64,
}

pub fn divergence_profile(
    pi_new: &SoftmaxPolicy,
    pi_old: &SoftmaxPolicy,
    d_lambda_old: &Array1<f64>,
) -> DivergenceProfile {
    let new_probs = pi_new.distribution();
    let old_probs = pi_old.distribution();
    let (n_states, n_actions) = new_probs.dim();
    let mut tv = Array1::zeros(n_states);
    let mut pi_gap_11 = 0.0;
    for s in 0..n_states {
        let mut abs_sum = 0.0;
        for a in 0..n_actions {
            abs_sum += (old_probs[[s, a]] - new_probs[[s, a]]).abs();
        }
        tv[s] = 0.5 * abs_sum;
        pi_gap_11 += abs_sum;
    }
    let kl = kl_rows(&old_probs, &new_probs);
    DivergenceProfile {
        expected_tv: d_lambda_old.dot(&tv),
        expected_kl: d_lambda_old.dot(&kl),
        tv,
        kl,
        pi_gap_11,
    }
}

/// Worst-case expected absolute TD error under the new policy:
/// `max_s Σ_a π(a|s) Σ_s' P(s'|s,a) |signal + γφ(s') − φ(s)|`.
///
/// Taking the absolute value per realized transition dominates the signed
/// q-norm for every propagation step t, so this value is the exact sup over t.
fn abs_td_sup(cmdp: &Cmdp, probs_new: &Array2<f64>, signal: Signal, phi: &Array1<f64>) -> f64 {
    let mut sup = 0.0f64;
    for s in 0..cmdp.n_states {
        let mut per_state = 0.0;
        for a in 0..cmdp.n_actions {
            let w = probs_new[[s, a]];
            if w == 0.0 {
                continue;
            }
            let base = match signal {
                Signal::Reward => 0.0,
                Signal::Cost => cmdp.cost[[s, a]],
            };
            let mut expected_abs = 0.0;
            for s2 in 0..cmdp.n_states {
                let p = cmdp.transition[[s, a, s2]];
                if p == 0.0 {
                    continue;
                }
                let reward = match signal {
                    Signal::Reward => cmdp.reward[[s, a, s2]],
                    Signal::Cost => 0.0,
                };
                expected_abs += p * (base + reward + cmdp.gamma * phi[s2] - phi[s]).abs();
            }
            per_state += w * expected_abs;
        }
        sup = sup.max(per_state);
    }
    sup
}

/// `|1 − 2γλ|S||A||`, the denominator shared by the penalty terms.
fn penalty_denominator(cmdp: &Cmdp, lambda: f64) -> f64 {
    (1.0 - 2.0 * cmdp.gamma * lambda * (cmdp.n_states * cmdp.n_actions) as f64).abs()
}

/// Hölder-pair instantiations of the sandwich error term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HolderPair {
    /// p = 1 on the visitation gap, q = ∞ on the TD-error vector (default).
    OneInf,
    /// p = q = 2.
    TwoTwo,
}

/// Two-sided surrogate sandwich around the exact performance difference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sandwich {
    pub j_diff: f64,
    pub l_minus: f64,
    pub l_plus: f64,
    /// Discounted error series `(1/(1−γ̃)) Σ_t (γλ)^t ε_t`; equals
    /// `(l_plus − l_minus) / 2` by construction.
    pub eps_series: f64,
    pub tail_bound: f64,
    pub terms: usize,
    pub pass: bool,
}

/// Expected TD-gap vectors for `t = 0..t_max` where the per-step importance
/// ratio is replaced by its single-step reweighting: states propagate under
/// the old policy and only the time-t action is reweighted, which collapses
/// in exact arithmetic to
/// `Δ_t(s) = Σ_{s_t} P_old^t[s,s_t] Σ_a (π_new−π_old)(a|s_t) δ̄^φ(s_t,a)`.
///
/// This coincides with the true TD-error difference
/// `δ^φ_{new,t} − δ^φ_{old,t}` at `t = 0` but not beyond: a single-action
/// reweighting cannot correct the t-step state distribution, which is why
/// [`performance_sandwich`] uses the true difference instead.
pub fn delta_gap_vectors(
    cmdp: &Cmdp,
    pi_new: &SoftmaxPolicy,
    pi_old: &SoftmaxPolicy,
    phi: &Array1<f64>,
    t_max: usize,
) -> Result<Vec<Array1<f64>>, BoundError> {
    if phi.len() != cmdp.n_states {
        return Err(DpError::PhiLength {
            expected: cmdp.n_states,
            got: phi.len(),
        }
        .into());
    }
    let new_probs = pi_new.distribution();
    let old_probs = pi_old.distribution();
    let p_old = dp::policy_transition(cmdp, &old_probs);
    let table = dp::td_table(cmdp, Signal::Reward, phi);
    let mut current = Array1::zeros(cmdp.n_states);
    for s in 0..cmdp.n_states {
        for a in 0..cmdp.n_actions {
            current[s] += (new_probs[[s, a]] - old_probs[[s, a]]) * table[[s, a]];
        }
    }
    let mut out = Vec::with_capacity(t_max);
    for _ in 0..t_max {
        out.push(current.clone());
        current = p_old.dot(&current);
    }
    Ok(out)
}

fn vector_norm(v: &Array1<f64>, pair: HolderPair, dual: bool) -> f64 {
    match (pair, dual) {
        // p-norm on the distribution gap.
        (HolderPair::OneInf, false) => v.iter().map(|x| x.abs()).sum(),
        (HolderPair::TwoTwo, false) | (HolderPair::TwoTwo, true) => {
            v.iter().map(|x| x * x).sum::<f64>().sqrt()
        }
        // q-norm on the TD-error vector.
        (HolderPair::OneInf, true) => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
    }
}

/// Evaluates the generalized performance-difference sandwich
/// `L⁻ ≤ J(π_new) − J(π_old) ≤ L⁺` for an arbitrary state function φ.
///
/// The Δ-part is the true expected-TD-error difference
/// `⟨d^λ_old, δ^φ_{new,t} − δ^φ_{old,t}⟩` (each policy propagates its own
/// chain), so the sandwich follows from the exact TD expansion of both
/// objectives plus one Hölder step on `⟨d^λ_new − d^λ_old, δ^φ_{new,t}⟩`;
/// it holds for every λ and both Hölder pairs, and is tight at
/// `π_new = π_old`.
///
/// With `t_max = None` the series length is chosen so the certified tail
/// bound falls below [`TAIL_TOL`]; an insufficient explicit `t_max` is
/// rejected with the required length.
pub fn performance_sandwich(
    cmdp: &Cmdp,
    pi_new: &SoftmaxPolicy,
    pi_old: &SoftmaxPolicy,
    phi: &Array1<f64>,
    lambda: f64,
    pair: HolderPair,
    t_max: Option<usize>,
) -> Result<Sandwich, BoundError> {
    let new_sol = solve_policy(cmdp, pi_new, Signal::Reward, lambda)?;
    let old_sol = solve_policy(cmdp, pi_old, Signal::Reward, lambda)?;
    sandwich_from_solutions(cmdp, &new_sol, &old_sol, pi_new, pi_old, phi, pair, t_max)
}

#[allow(clippy::too_many_arguments)]
fn sandwich_from_solutions(
    cmdp: &Cmdp,
    new_sol: &DpSolution,
    old_sol: &DpSolution,
    pi_new: &SoftmaxPolicy,
    pi_old: &SoftmaxPolicy,
    phi: &Array1<f64>,
    pair: HolderPair,
    t_max: Option<usize>,
) -> Result<Sandwich, BoundError> {
    if phi.len() != cmdp.n_states {
        return Err(DpError::PhiLength {
            expected: cmdp.n_states,
            got: phi.len(),
        }
        .into());
    }
    let lambda = new_sol.lambda;
    let j_diff = cmdp.rho0.dot(&new_sol.v) - cmdp.rho0.dot(&old_sol.v);

    let new_probs = pi_new.distribution();
    let old_probs = pi_old.distribution();
    let table = dp::td_table(cmdp, Signal::Reward, phi);
    let mut td_new = Array1::zeros(cmdp.n_states);
    let mut td_old = Array1::zeros(cmdp.n_states);
    for s in 0..cmdp.n_states {
        for a in 0..cmdp.n_actions {
            td_new[s] += new_probs[[s, a]] * table[[s, a]];
            td_old[s] += old_probs[[s, a]] * table[[s, a]];
        }
    }
    let dist_gap = vector_norm(&(&new_sol.d_lambda - &old_sol.d_lambda), pair, false);

    let magnitude = table.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let td_norm_bound = match pair {
        HolderPair::OneInf => magnitude,
        HolderPair::TwoTwo => magnitude * (cmdp.n_states as f64).sqrt(),
    };
    let scale = (2.0 * magnitude + dist_gap * td_norm_bound) / (1.0 - new_sol.tilde_gamma);
    let required = required_series_len(cmdp.gamma, lambda, scale, TAIL_TOL);
    let terms = match t_max {
        None => required,
        Some(given) if given >= required => given,
        Some(given) => return Err(BoundError::TruncationTooShort { given, required }),
    };

    let gl = cmdp.gamma * lambda;
    let mut delta_sum = 0.0;
    let mut eps_sum = 0.0;
    let mut factor = 1.0;
    let mut td_new_t = td_new;
    let mut td_old_t = td_old;
    for _ in 0..terms {
        delta_sum += factor * (old_sol.d_lambda.dot(&td_new_t) - old_sol.d_lambda.dot(&td_old_t));
        eps_sum += factor * dist_gap * vector_norm(&td_new_t, pair, true);
        factor *= gl;
        if factor == 0.0 {
            break;
        }
        td_new_t = new_sol.p_pi.dot(&td_new_t);
        td_old_t = old_sol.p_pi.dot(&td_old_t);
    }
    let denom = 1.0 - new_sol.tilde_gamma;
    let l_minus = (delta_sum - eps_sum) / denom;
    let l_plus = (delta_sum + eps_sum) / denom;
    let tail_bound = if gl > 0.0 {
        factor * scale / (1.0 - gl)
    } else {
        0.0
    };
    let pass = l_minus - PASS_TOL <= j_diff && j_diff <= l_plus + PASS_TOL;
    Ok(Sandwich {
        j_diff,
        l_minus,
        l_plus,
        eps_series: eps_sum / denom,
        tail_bound,
        terms,
        pass,
    })
}

/// The four surrogate one-sided bounds for a policy pair, plus the
/// quantities entering their penalty terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateBounds {
    /// Guaranteed lower bound on `J(π_new) − J(π_old)`.
    pub improvement_lower: f64,
    /// Guaranteed upper bound on `J^c(π_new) − J^c(π_old)`.
    pub cost_upper: f64,
    /// KL-relaxed variant of `improvement_lower` (never tighter).
    pub improvement_lower_kl: f64,
    /// KL-relaxed variant of `cost_upper` (never tighter).
    pub cost_upper_kl: f64,
    pub eps_v: f64,
    pub eps_c: f64,
    pub expected_tv: f64,
    pub expected_kl: f64,
}

fn surrogate_from_solutions(
    cmdp: &Cmdp,
    old_r: &DpSolution,
    old_c: &DpSolution,
    pi_new: &SoftmaxPolicy,
    pi_old: &SoftmaxPolicy,
    lambda: f64,
) -> Result<SurrogateBounds, BoundError> {
    let denominator = penalty_denominator(cmdp, lambda);
    if denominator < 1e-12 {
        return Err(BoundError::DegenerateDenominator(denominator));
    }
    let new_probs = pi_new.distribution();
    let profile = divergence_profile(pi_new, pi_old, &old_r.d_lambda);
    let eps_v = abs_td_sup(cmdp, &new_probs, Signal::Reward, &old_r.v);
    let eps_c = abs_td_sup(cmdp, &new_probs, Signal::Cost, &old_c.v);

    let mut gae_r = 0.0;
    let mut gae_c = 0.0;
    for s in 0..cmdp.n_states {
        for a in 0..cmdp.n_actions {
            let w = old_r.d_lambda[s] * new_probs[[s, a]];
            gae_r += w * old_r.adv_gae[[s, a]];
            gae_c += w * old_c.adv_gae[[s, a]];
        }
    }

    let prefactor = 1.0 / (1.0 - old_r.tilde_gamma);
    let shared = 2.0 * cmdp.gamma * (1.0 - lambda) / ((1.0 - cmdp.gamma * lambda) * denominator);
    let kl_relaxed_tv = (profile.expected_kl / 2.0).sqrt();
    Ok(SurrogateBounds {
        improvement_lower: prefactor * (gae_r - shared * eps_v * profile.expected_tv),
        cost_upper: prefactor * (gae_c + shared * eps_c * profile.expected_tv),
        improvement_lower_kl: prefactor * (gae_r - shared * eps_v * kl_relaxed_tv),
        cost_upper_kl: prefactor * (gae_c + shared * eps_c * kl_relaxed_tv),
        eps_v,
        eps_c,
        expected_tv: profile.expected_tv,
        expected_kl: profile.expected_kl,
    })
}

/// Guaranteed lower bound on `J(π_new) − J(π_old)` built from the old
/// policy's exact GAE table and a total-variation penalty.
pub fn improvement_lower_bound(
    cmdp: &Cmdp,
    pi_new: &SoftmaxPolicy,
    pi_old: &SoftmaxPolicy,
    lambda: f64,
) -> Result<f64, BoundError> {
    let old_r = solve_policy(cmdp, pi_old, Signal::Reward, lambda)?;
    let old_c = solve_policy(cmdp, pi_old, Signal::Cost, lambda)?;
    Ok(surrogate_from_solutions(cmdp, &old_r, &old_c, pi_new, pi_old, lambda)?.improvement_lower)
}

/// Guaranteed upper bound on `J^c(π_new) − J^c(π_old)`, the mirror image of
/// [`improvement_lower_bound`] for the cost signal.
pub fn cost_upper_bound(
    cmdp: &Cmdp,
    pi_new: &SoftmaxPolicy,
    pi_old: &SoftmaxPolicy,
    lambda: f64,
) -> Result<f64, BoundError> {
    let old_r = solve_policy(cmdp, pi_old, Signal::Reward, lambda)?;
    let old_c = solve_policy(cmdp, pi_old, Signal::Cost, lambda)?;
    Ok(surrogate_from_solutions(cmdp, &old_r, &old_c, pi_new, pi_old, lambda)?.cost_upper)
}

/// Both one-sided bounds with the expected-TV factor replaced by
/// `sqrt(E[KL]/2)`; looser than the TV versions in the safe direction.
pub fn kl_relaxed_bounds(
    cmdp: &Cmdp,
    pi_new: &SoftmaxPolicy,
    pi_old: &SoftmaxPolicy,
    lambda: f64,
) -> Result<(f64, f64), BoundError> {
    let old_r = solve_policy(cmdp, pi_old, Signal::Reward, lambda)?;
    let old_c = solve_policy(cmdp, pi_old, Signal::Cost, lambda)?;
    let bounds = surrogate_from_solutions(cmdp, &old_r, &old_c, pi_new, pi_old, lambda)?;
    Ok((bounds.improvement_lower_kl, bounds.cost_upper_kl))
}

/// Diagnostic comparison of the visitation-distribution gap against its
/// claimed penalty form. No hard guarantee: the claimed right-hand side is
/// vacuous where the pre-absolute-value denominator changes sign, which
/// `denom_flag` marks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VisitationGap {
    /// Exact `‖d^λ_old − d^λ_new‖_1`.
    pub lhs: f64,
    /// Claimed penalty-form bound on `lhs`.
    pub rhs: f64,
    /// True when `1 − γλ·Σ_{s,a}|π_old − π_new| ≤ 0`.
    pub denom_flag: bool,
}

pub fn visitation_gap(
    cmdp: &Cmdp,
    pi_new: &SoftmaxPolicy,
    pi_old: &SoftmaxPolicy,
    lambda: f64,
) -> Result<VisitationGap, BoundError> {
    let new_sol = solve_policy(cmdp, pi_new, Signal::Reward, lambda)?;
    let old_sol = solve_policy(cmdp, pi_old, Signal::Reward, lambda)?;
    Ok(visitation_gap_from_solutions(
        cmdp, &new_sol, &old_sol, pi_new, pi_old, lambda,
    ))
}

fn visitation_gap_from_solutions(
    cmdp: &Cmdp,
    new_sol: &DpSolution,
    old_sol: &DpSolution,
    pi_new: &SoftmaxPolicy,
    pi_old: &SoftmaxPolicy,
    lambda: f64,
) -> VisitationGap {
    let lhs = (&old_sol.d_lambda - &new_sol.d_lambda)
        .iter()
        .map(|x| x.abs())
        .sum();
    // Expectation under the new policy's λ-visitation.
    let profile = divergence_profile(pi_new, pi_old, &new_sol.d_lambda);
    let denominator = penalty_denominator(cmdp, lambda);
    let rhs = (1.0 / (1.0 - new_sol.tilde_gamma))
        * ((1.0 - cmdp.gamma * lambda) / denominator)
        * 2.0
        * profile.expected_tv;
    let denom_flag = 1.0 - cmdp.gamma * lambda * profile.pi_gap_11 <= 0.0;
    VisitationGap {
        lhs,
        rhs,
        denom_flag,
    }
}

/// Per-update guarantees for one conservative-update iteration
/// `π_k → π_{k+1/2} → π_{k+1}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpdateGuarantee {
    /// `χ = E_{d^λ_k}[KL(π_k ‖ π_{k+1/2})]`, the trust-region contraction measure.
    pub chi: f64,
    /// Lower bound on `J(π_{k+1}) − J(π_k)`.
    pub improvement_floor: f64,
    /// Upper bound on `J^c(π_{k+1})`.
    pub cost_ceiling: f64,
    pub j_delta: f64,
    pub j_cost_new: f64,
    pub pass_improvement: bool,
    pub pass_cost: bool,
    /// True when the intermediate penalty denominator is vacuous for this pair.
    pub denom_flag: bool,
}

/// Evaluates the improvement-floor and constraint-ceiling guarantees with
/// the configured step coefficients and the measured contraction `χ`.
pub fn update_guarantees(
    cmdp: &Cmdp,
    pi_k: &SoftmaxPolicy,
    pi_half: &SoftmaxPolicy,
    pi_next: &SoftmaxPolicy,
    alpha: f64,
    beta: f64,
    lambda: f64,
) -> Result<UpdateGuarantee, BoundError> {
    let denominator = penalty_denominator(cmdp, lambda);
    if denominator < 1e-12 {
        return Err(BoundError::DegenerateDenominator(denominator));
    }
    let k_reward = solve_policy(cmdp, pi_k, Signal::Reward, lambda)?;
    let k_cost = solve_policy(cmdp, pi_k, Signal::Cost, lambda)?;
    let next_probs = pi_next.distribution();
    let k_probs = pi_k.distribution();
    let half_probs = pi_half.distribution();

    let chi = k_reward.d_lambda.dot(&kl_rows(&k_probs, &half_probs));
    let eps_v = abs_td_sup(cmdp, &next_probs, Signal::Reward, &k_reward.v);
    let eps_c = abs_td_sup(cmdp, &next_probs, Signal::Cost, &k_cost.v);
    let scale = cmdp.gamma * (1.0 - lambda) * (2.0 * chi).sqrt()
        / ((1.0 - cmdp.gamma) * denominator);
    let improvement_floor = -scale * alpha * eps_v;
    let cost_ceiling = cmdp.cost_limit + scale * beta * eps_c;

    let j_delta = objective(cmdp, pi_next, Signal::Reward)? - cmdp.rho0.dot(&k_reward.v);
    let j_cost_new = objective(cmdp, pi_next, Signal::Cost)?;

    let mut pi_gap_11 = 0.0;
    for s in 0..cmdp.n_states {
        for a in 0..cmdp.n_actions {
            pi_gap_11 += (k_probs[[s, a]] - next_probs[[s, a]]).abs();
        }
    }
    Ok(UpdateGuarantee {
        chi,
        improvement_floor,
        cost_ceiling,
        j_delta,
        j_cost_new,
        pass_improvement: j_delta >= improvement_floor - PASS_TOL,
        pass_cost: j_cost_new <= cost_ceiling + PASS_TOL,
        denom_flag: 1.0 - cmdp.gamma * lambda * pi_gap_11 <= 0.0,
    })
}

/// Everything the campaign records for one `(pair, λ)` combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub lambda: f64,
    pub j_diff: f64,
    pub jc_diff: f64,
    pub l_minus: f64,
    pub l_plus: f64,
    pub eps_series: f64,
    pub tail_bound: f64,
    pub improvement_lower: f64,
    pub cost_upper: f64,
    pub improvement_lower_kl: f64,
    pub cost_upper_kl: f64,
    pub eps_v: f64,
    pub eps_c: f64,
    pub expected_tv: f64,
    pub expected_kl: f64,
    pub visit_gap_lhs: f64,
    pub visit_gap_rhs: f64,
    pub denom_flag: bool,
    /// Gap of the TD-expansion identity for the objective.
    pub identity_gap: f64,
    /// Gap of the classic advantage-form difference identity at λ = 0.
    pub classic_gap: f64,
    pub pass_sandwich: bool,
    pub pass_improvement_lower: bool,
    pub pass_cost_upper: bool,
    pub pass_kl_order: bool,
}

impl BoundReport {
    pub fn all_hard_checks_pass(&self) -> bool {
        self.pass_sandwich
            && self.pass_improvement_lower
            && self.pass_cost_upper
            && self.pass_kl_order
            && self.identity_gap < PASS_TOL
            && self.classic_gap < PASS_TOL
    }
}

/// Evaluates every bound and identity for one policy pair at one λ, with
/// φ fixed to the old policy's exact value function.
pub fn pair_report(
    cmdp: &Cmdp,
    pi_new: &SoftmaxPolicy,
    pi_old: &SoftmaxPolicy,
    lambda: f64,
    t_max: Option<usize>,
) -> Result<BoundReport, BoundError> {
    let new_r = solve_policy(cmdp, pi_new, Signal::Reward, lambda)?;
    let old_r = solve_policy(cmdp, pi_old, Signal::Reward, lambda)?;
    let old_c = solve_policy(cmdp, pi_old, Signal::Cost, lambda)?;
    let jc_new = objective(cmdp, pi_new, Signal::Cost)?;
    let jc_diff = jc_new - cmdp.rho0.dot(&old_c.v);

    let phi = old_r.v.clone();
    let sandwich = sandwich_from_solutions(
        cmdp,
        &new_r,
        &old_r,
        pi_new,
        pi_old,
        &phi,
        HolderPair::OneInf,
        t_max,
    )?;
    let surrogate = surrogate_from_solutions(cmdp, &old_r, &old_c, pi_new, pi_old, lambda)?;
    let gap = visitation_gap_from_solutions(cmdp, &new_r, &old_r, pi_new, pi_old, lambda);
    let identity = objective_identity_check(cmdp, pi_new, &phi, lambda, t_max)?;

    // Classic difference identity, evaluated from the λ-independent pieces.
    let new_probs = pi_new.distribution();
    let mut classic = 0.0;
    for s in 0..cmdp.n_states {
        for a in 0..cmdp.n_actions {
            classic += new_r.d_rho0[s] * new_probs[[s, a]] * old_r.adv[[s, a]];
        }
    }
    classic /= 1.0 - cmdp.gamma;
    let classic_gap = (sandwich.j_diff - classic).abs();

    Ok(BoundReport {
        lambda,
        j_diff: sandwich.j_diff,
        jc_diff,
        l_minus: sandwich.l_minus,
        l_plus: sandwich.l_plus,
        eps_series: sandwich.eps_series,
        tail_bound: sandwich.tail_bound,
        improvement_lower: surrogate.improvement_lower,
        cost_upper: surrogate.cost_upper,
        improvement_lower_kl: surrogate.improvement_lower_kl,
        cost_upper_kl: surrogate.cost_upper_kl,
        eps_v: surrogate.eps_v,
        eps_c: surrogate.eps_c,
        expected_tv: surrogate.expected_tv,
        expected_kl: surrogate.expected_kl,
        visit_gap_lhs: gap.lhs,
        visit_gap_rhs: gap.rhs,
        denom_flag: gap.denom_flag,
        identity_gap: identity.gap,
        classic_gap,
        pass_sandwich: sandwich.pass,
        pass_improvement_lower: surrogate.improvement_lower <= sandwich.j_diff + PASS_TOL,
        pass_cost_upper: jc_diff <= surrogate.cost_upper + PASS_TOL,
        pass_kl_order: surrogate.improvement_lower_kl <= surrogate.improvement_lower + PASS_TOL
            && surrogate.cost_upper_kl >= surrogate.cost_upper - PASS_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::{build_gridworld, build_random_cmdp, build_two_state, two_state};
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn biased_policy(n_states: usize, n_actions: usize, action: usize) -> SoftmaxPolicy {
        let mut logits = Array2::zeros((n_states, n_actions));
        for s in 0..n_states {
            logits[[s, action]] = 40.0;
        }
        SoftmaxPolicy::new(logits).unwrap()
    }

    fn random_policy(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize) -> SoftmaxPolicy {
        let logits =
            Array2::from_shape_fn((n_states, n_actions), |_| rng.random_range(-2.0..2.0));
        SoftmaxPolicy::new(logits).unwrap()
    }

    #[test]
    fn divergence_profile_of_identical_policies_is_zero() {
        let policy = SoftmaxPolicy::uniform(3, 2);
        let weights = Array1::from_elem(3, 1.0 / 3.0);
        let profile = divergence_profile(&policy, &policy, &weights);
        assert_eq!(profile.pi_gap_11, 0.0);
        assert!(profile.tv.iter().all(|&x| x == 0.0));
        assert!(profile.kl.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn divergence_profile_matches_direct_evaluation() {
        // Old policy (0.75, 0.25) against the uniform new policy.
        let pi_old = SoftmaxPolicy::new(arr2(&[[3.0f64.ln(), 0.0]])).unwrap();
        let pi_new = SoftmaxPolicy::uniform(1, 2);
        let weights = Array1::from_elem(1, 1.0);
        let profile = divergence_profile(&pi_new, &pi_old, &weights);
        assert_abs_diff_eq!(profile.tv[0], 0.25, epsilon = 1e-12);
        let expected_kl = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert_abs_diff_eq!(profile.kl[0], expected_kl, epsilon = 1e-12);
        assert_abs_diff_eq!(profile.pi_gap_11, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn pinsker_holds_per_state_on_random_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let a = random_policy(&mut rng, 1, 3);
            let b = random_policy(&mut rng, 1, 3);
            let weights = Array1::from_elem(1, 1.0);
            let profile = divergence_profile(&a, &b, &weights);
            assert!(profile.tv[0] <= (profile.kl[0] / 2.0).sqrt() + 1e-12);
        }
    }

    #[test]
    fn delta_gaps_vanish_for_identical_policies() {
        let cmdp = build_random_cmdp(4, 2, 17).unwrap();
        let policy = SoftmaxPolicy::uniform(4, 2);
        let phi = Array1::from_elem(4, 0.3);
        let gaps = delta_gap_vectors(&cmdp, &policy, &policy, &phi, 4).unwrap();
        for gap in gaps {
            assert!(gap.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn delta_gap_at_t_zero_is_the_advantage_surrogate() {
        // With φ = V_old, Δ_0(s) = Σ_a π_new(a|s) A_old(s,a).
        let cmdp = build_random_cmdp(5, 3, 23).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pi_new = random_policy(&mut rng, 5, 3);
        let pi_old = random_policy(&mut rng, 5, 3);
        let old_sol = solve_policy(&cmdp, &pi_old, Signal::Reward, 0.0).unwrap();
        let gaps = delta_gap_vectors(&cmdp, &pi_new, &pi_old, &old_sol.v, 1).unwrap();
        let probs = pi_new.distribution();
        for s in 0..5 {
            let direct: f64 = (0..3).map(|a| probs[[s, a]] * old_sol.adv[[s, a]]).sum();
            assert_abs_diff_eq!(gaps[0][s], direct, epsilon = 1e-10);
        }
    }

    #[test]
    fn delta_gap_matches_monte_carlo_ratio_estimator() {
        // Two-state, π_old uniform, π_new biased to flip, φ = 0, t = 0:
        // the expectation form must agree with the sampled importance-ratio
        // estimator within 3 standard errors.
        let cmdp = build_two_state(0.9, 0.5).unwrap();
        let pi_new = biased_policy(2, 2, two_state::FLIP);
        let pi_old = SoftmaxPolicy::uniform(2, 2);
        let phi = Array1::zeros(2);
        let gaps = delta_gap_vectors(&cmdp, &pi_new, &pi_old, &phi, 1).unwrap();
        let new_probs = pi_new.distribution();
        let old_probs = pi_old.distribution();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for s in 0..2 {
            let n = 100_000;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..n {
                let a = if rng.random::<f64>() < old_probs[[s, 0]] { 0 } else { 1 };
                let u: f64 = rng.random();
                let mut s2 = 0;
                let mut acc = 0.0;
                for cand in 0..2 {
                    acc += cmdp.transition[[s, a, cand]];
                    if u < acc {
                        s2 = cand;
                        break;
                    }
                }
                let td = cmdp.reward[[s, a, s2]] + cmdp.gamma * phi[s2] - phi[s];
                let value = (new_probs[[s, a]] / old_probs[[s, a]] - 1.0) * td;
                sum += value;
                sum_sq += value * value;
            }
            let mean = sum / n as f64;
            let var = (sum_sq / n as f64 - mean * mean).max(0.0);
            let stderr = (var / n as f64).sqrt();
            assert!(
                (mean - gaps[0][s]).abs() <= 3.0 * stderr,
                "state {s}: mc {mean} vs exact {} (3se {})",
                gaps[0][s],
                3.0 * stderr
            );
        }
    }

    #[test]
    fn sandwich_is_identically_zero_for_equal_policies() {
        let cmdp = build_random_cmdp(5, 3, 3).unwrap();
        let policy = SoftmaxPolicy::uniform(5, 3);
        let sol = solve_policy(&cmdp, &policy, Signal::Reward, 0.5).unwrap();
        let s = performance_sandwich(
            &cmdp,
            &policy,
            &policy,
            &sol.v,
            0.5,
            HolderPair::OneInf,
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(s.j_diff, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.l_minus, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.l_plus, 0.0, epsilon = 1e-12);
        assert!(s.pass);
    }

    #[test]
    fn two_state_sandwich_golden_values() {
        // Flip vs uniform at λ = 0 with φ = V_uniform. The three quantities
        // have closed forms; frozen here as a regression anchor.
        let cmdp = build_two_state(0.9, 0.5).unwrap();
        let pi_new = biased_policy(2, 2, two_state::FLIP);
        let pi_old = SoftmaxPolicy::uniform(2, 2);
        let old_sol = solve_policy(&cmdp, &pi_old, Signal::Reward, 0.0).unwrap();
        let s = performance_sandwich(
            &cmdp,
            &pi_new,
            &pi_old,
            &old_sol.v,
            0.0,
            HolderPair::OneInf,
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(s.j_diff, 0.2631578947368421, epsilon = 1e-9);
        assert_abs_diff_eq!(s.l_minus, 0.2631578947368421, epsilon = 1e-9);
        assert_abs_diff_eq!(s.l_plus, 0.7368421052631579, epsilon = 1e-9);
        assert!(s.pass);
        assert!(s.l_minus - PASS_TOL <= s.j_diff && s.j_diff <= s.l_plus + PASS_TOL);
    }

    #[test]
    fn sandwich_holds_on_a_small_random_campaign_for_both_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for seed in 0..15u64 {
            let cmdp = build_random_cmdp(5, 3, seed).unwrap();
            let pi_new = random_policy(&mut rng, 5, 3);
            let pi_old = random_policy(&mut rng, 5, 3);
            for lambda in [0.0, 0.5, 0.95] {
                let old_sol = solve_policy(&cmdp, &pi_old, Signal::Reward, lambda).unwrap();
                for pair in [HolderPair::OneInf, HolderPair::TwoTwo] {
                    let s = performance_sandwich(
                        &cmdp, &pi_new, &pi_old, &old_sol.v, lambda, pair, None,
                    )
                    .unwrap();
                    assert!(s.pass, "seed {seed} λ {lambda} pair {pair:?}: {s:?}");
                    assert!(s.l_minus <= s.l_plus);
                    assert_abs_diff_eq!(
                        s.l_plus - s.l_minus,
                        2.0 * s.eps_series,
                        epsilon = 1e-10
                    );
                }
            }
        }
    }

    #[test]
    fn sandwich_rejects_insufficient_truncation() {
        let cmdp = build_random_cmdp(4, 2, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pi_new = random_policy(&mut rng, 4, 2);
        let pi_old = random_policy(&mut rng, 4, 2);
        let phi = Array1::zeros(4);
        let err = performance_sandwich(
            &cmdp,
            &pi_new,
            &pi_old,
            &phi,
            0.95,
            HolderPair::OneInf,
            Some(3),
        )
        .unwrap_err();
        assert!(matches!(err, BoundError::TruncationTooShort { .. }));
    }

    #[test]
    fn one_sided_bounds_vanish_for_equal_policies() {
        let cmdp = build_random_cmdp(4, 3, 29).unwrap();
        let policy = SoftmaxPolicy::uniform(4, 3);
        let lower = improvement_lower_bound(&cmdp, &policy, &policy, 0.5).unwrap();
        let upper = cost_upper_bound(&cmdp, &policy, &policy, 0.5).unwrap();
        // E_{a~π}[A_π] = 0 per state and the divergence penalty is zero.
        assert_abs_diff_eq!(lower, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(upper, 0.0, epsilon = 1e-10);
        let (lower_kl, upper_kl) = kl_relaxed_bounds(&cmdp, &policy, &policy, 0.5).unwrap();
        assert_abs_diff_eq!(lower_kl, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(upper_kl, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn one_sided_bounds_hold_at_lambda_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for seed in 0..20u64 {
            let cmdp = build_random_cmdp(5, 3, seed).unwrap();
            let pi_new = random_policy(&mut rng, 5, 3);
            let pi_old = random_policy(&mut rng, 5, 3);
            let report = pair_report(&cmdp, &pi_new, &pi_old, 0.0, None).unwrap();
            assert!(report.pass_improvement_lower, "seed {seed}: {report:?}");
            assert!(report.pass_cost_upper, "seed {seed}: {report:?}");
            for lambda in [0.0, 0.5, 0.95] {
                let report = pair_report(&cmdp, &pi_new, &pi_old, lambda, None).unwrap();
                assert!(report.pass_kl_order, "seed {seed} λ {lambda}");
            }
        }
    }

    #[test]
    fn one_sided_bounds_are_not_guaranteed_beyond_lambda_zero() {
        // The stated penalty coefficient shrinks with |1 − 2γλ|S||A|| while
        // the surrogate's distribution mismatch does not, so for λ > 0 the
        // one-sided bounds fail on well-separated pairs. This pins the
        // observed behavior so a silent change to the formulas would show up.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut violations = 0;
        for seed in 0..20u64 {
            let cmdp = build_random_cmdp(5, 3, seed).unwrap();
            let pi_new = random_policy(&mut rng, 5, 3);
            let pi_old = random_policy(&mut rng, 5, 3);
            let report = pair_report(&cmdp, &pi_new, &pi_old, 0.95, None).unwrap();
            if !report.pass_improvement_lower || !report.pass_cost_upper {
                violations += 1;
            }
        }
        assert!(violations > 0, "expected at least one λ=0.95 violation");
    }

    #[test]
    fn zero_cost_model_gives_zero_cost_difference_and_nonnegative_bound() {
        let cmdp = build_gridworld(3, 3, &[], (2, 2), 0.9, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pi_new = random_policy(&mut rng, 9, 4);
        let pi_old = random_policy(&mut rng, 9, 4);
        let report = pair_report(&cmdp, &pi_new, &pi_old, 0.5, None).unwrap();
        assert_abs_diff_eq!(report.jc_diff, 0.0, epsilon = 1e-10);
        assert!(report.cost_upper >= 0.0);
    }

    #[test]
    fn lambda_zero_penalty_improves_the_classic_coefficient_by_one_minus_gamma() {
        // At λ = 0 the penalty term equals the conservative-policy-iteration
        // style penalty times (1 − γ), i.e. the bound is tighter by 1/(1−γ).
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for seed in 0..10u64 {
            let cmdp = build_random_cmdp(5, 3, seed).unwrap();
            let pi_new = random_policy(&mut rng, 5, 3);
            let pi_old = random_policy(&mut rng, 5, 3);
            let old_r = solve_policy(&cmdp, &pi_old, Signal::Reward, 0.0).unwrap();
            let old_c = solve_policy(&cmdp, &pi_old, Signal::Cost, 0.0).unwrap();
            let bounds =
                surrogate_from_solutions(&cmdp, &old_r, &old_c, &pi_new, &pi_old, 0.0).unwrap();
            let penalty_here = 2.0 * cmdp.gamma * bounds.eps_v * bounds.expected_tv
                / (1.0 - cmdp.gamma);
            let penalty_classic = 2.0 * cmdp.gamma * bounds.eps_v * bounds.expected_tv
                / ((1.0 - cmdp.gamma) * (1.0 - cmdp.gamma));
            if penalty_classic > 0.0 {
                let ratio = penalty_here / penalty_classic;
                assert!(
                    (ratio - (1.0 - cmdp.gamma)).abs() < 1e-10,
                    "seed {seed}: ratio {ratio}"
                );
            }
        }
    }

    #[test]
    fn kl_penalty_is_near_tight_for_small_perturbations() {
        // ε-greedy perturbation of the uniform policy: Pinsker is nearly an
        // equality, so the KL-relaxed penalty exceeds the TV penalty by a
        // hair. The ratio has a closed form, also checked as a golden value.
        let cmdp = build_two_state(0.9, 0.5).unwrap();
        let eps: f64 = 0.01;
        let p_preferred: f64 = 0.5 * (1.0 - eps) + eps;
        let logits = arr2(&[
            [(p_preferred / (1.0 - p_preferred)).ln(), 0.0],
            [(p_preferred / (1.0 - p_preferred)).ln(), 0.0],
        ]);
        let pi_new = SoftmaxPolicy::new(logits).unwrap();
        let pi_old = SoftmaxPolicy::uniform(2, 2);
        let old_r = solve_policy(&cmdp, &pi_old, Signal::Reward, 0.5).unwrap();
        let old_c = solve_policy(&cmdp, &pi_old, Signal::Cost, 0.5).unwrap();
        let bounds =
            surrogate_from_solutions(&cmdp, &old_r, &old_c, &pi_new, &pi_old, 0.5).unwrap();
        let ratio = (bounds.expected_kl / 2.0).sqrt() / bounds.expected_tv;
        assert!(ratio - 1.0 < 0.25, "relative gap {}", ratio - 1.0);
        // Closed form: both states share the same row, so the expectation
        // weights drop out of the ratio.
        let tv = eps / 2.0;
        let kl = 0.5 * ((0.5f64 / p_preferred).ln() + (0.5f64 / (1.0 - p_preferred)).ln());
        let expected_ratio = (kl / 2.0).sqrt() / tv;
        assert_abs_diff_eq!(ratio, expected_ratio, epsilon = 1e-10);
    }

    #[test]
    fn visitation_gap_zero_for_equal_policies() {
        let cmdp = build_random_cmdp(4, 2, 37).unwrap();
        let policy = SoftmaxPolicy::uniform(4, 2);
        let gap = visitation_gap(&cmdp, &policy, &policy, 0.5).unwrap();
        assert_abs_diff_eq!(gap.lhs, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gap.rhs, 0.0, epsilon = 1e-12);
        assert!(!gap.denom_flag);
    }

    #[test]
    fn visitation_gap_at_lambda_zero_compares_plain_visitations() {
        let cmdp = build_random_cmdp(5, 3, 41).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pi_new = random_policy(&mut rng, 5, 3);
        let pi_old = random_policy(&mut rng, 5, 3);
        let gap = visitation_gap(&cmdp, &pi_new, &pi_old, 0.0).unwrap();
        let new_sol = solve_policy(&cmdp, &pi_new, Signal::Reward, 0.0).unwrap();
        let old_sol = solve_policy(&cmdp, &pi_old, Signal::Reward, 0.0).unwrap();
        let direct: f64 = (&old_sol.d_rho0 - &new_sol.d_rho0)
            .iter()
            .map(|x| x.abs())
            .sum();
        assert_abs_diff_eq!(gap.lhs, direct, epsilon = 1e-12);
        assert!(gap.rhs.is_finite());
    }

    #[test]
    fn null_update_has_trivial_guarantees() {
        let cmdp = build_two_state(0.9, 0.5).unwrap();
        let policy = SoftmaxPolicy::uniform(2, 2);
        let g = update_guarantees(&cmdp, &policy, &policy, &policy, 0.15, 0.15, 0.95).unwrap();
        assert_eq!(g.chi, 0.0);
        assert_eq!(g.improvement_floor, 0.0);
        assert_abs_diff_eq!(g.cost_ceiling, cmdp.cost_limit, epsilon = 1e-15);
        assert!(g.pass_improvement);
        // Uniform policy on the two-state model has J^c = 5 > b = 0.5, so the
        // cost flag reports the initial infeasibility.
        assert!(!g.pass_cost);
        let feasible = build_two_state(0.9, 6.0).unwrap();
        let g2 = update_guarantees(&feasible, &policy, &policy, &policy, 0.15, 0.15, 0.95).unwrap();
        assert!(g2.pass_cost);
    }

    #[test]
    fn guarantees_reduce_to_the_simple_form_as_lambda_vanishes() {
        let cmdp = build_random_cmdp(5, 3, 43).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pi_k = random_policy(&mut rng, 5, 3);
        let pi_half = random_policy(&mut rng, 5, 3);
        let pi_next = random_policy(&mut rng, 5, 3);
        let (alpha, beta) = (0.15, 0.2);
        let g = update_guarantees(&cmdp, &pi_k, &pi_half, &pi_next, alpha, beta, 1e-12).unwrap();
        // Remark-style limit: floor → −γ α √(2χ) ε_V / (1−γ), ceiling analogous.
        let k_r = solve_policy(&cmdp, &pi_k, Signal::Reward, 1e-12).unwrap();
        let k_c = solve_policy(&cmdp, &pi_k, Signal::Cost, 1e-12).unwrap();
        let next_probs = pi_next.distribution();
        let eps_v = abs_td_sup(&cmdp, &next_probs, Signal::Reward, &k_r.v);
        let eps_c = abs_td_sup(&cmdp, &next_probs, Signal::Cost, &k_c.v);
        let chi = k_r
            .d_lambda
            .dot(&kl_rows(&pi_k.distribution(), &pi_half.distribution()));
        let floor_limit = -cmdp.gamma * alpha * (2.0 * chi).sqrt() * eps_v / (1.0 - cmdp.gamma);
        let ceiling_limit =
            cmdp.cost_limit + cmdp.gamma * beta * (2.0 * chi).sqrt() * eps_c / (1.0 - cmdp.gamma);
        assert!((g.improvement_floor - floor_limit).abs() <= 1e-6 * floor_limit.abs());
        assert!((g.cost_ceiling - ceiling_limit).abs() <= 1e-6 * ceiling_limit.abs().max(1.0));
    }

    #[test]
    fn degenerate_denominator_is_rejected() {
        // 2γλ|S||A| = 1 exactly: |S||A| = 4, γ = 0.9 → λ = 1/7.2.
        let cmdp = build_two_state(0.9, 0.5).unwrap();
        let policy = SoftmaxPolicy::uniform(2, 2);
        let lambda = 1.0 / (2.0 * 0.9 * 4.0);
        let err = improvement_lower_bound(&cmdp, &policy, &policy, lambda).unwrap_err();
        assert!(matches!(err, BoundError::DegenerateDenominator(_)));
    }
}
