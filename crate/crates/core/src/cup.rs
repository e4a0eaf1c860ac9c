//! Conservative update policy training: a performance-improvement step with
//! a square-root KL penalty, followed by a primal-dual projection back onto
//! the cost-feasible set, with tabular least-squares critic fitting. A plain
//! one-step Lagrangian optimizer is included as a comparison baseline.
//!
//! All gradients over softmax logits are analytic; the optimizer is plain
//! minibatch SGD with a fixed learning rate and a fixed minibatch order, so
//! a run is a pure function of `(cmdp, config, initial policy)`.

use crate::bounds::{self, kl_rows, UpdateGuarantee};
use crate::cmdp::{Cmdp, SoftmaxPolicy};
use crate::dp::{objective, Signal};
use crate::mix_seed;
use crate::sampler::{compute_gae, sample_trajectories, GaeTables, SamplerError, TrajectoryBatch};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smoothing constant under the square-root KL penalty, avoiding the
/// infinite gradient of `√KL` at `KL = 0`.
const KL_EPS: f64 = 1e-12;

/// Exact per-iteration logging is enabled up to this many table cells.
const EXACT_LOG_LIMIT: usize = 4096;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Dp(#[from] crate::dp::DpError),
}

/// Hyperparameters for the trainer. Defaults follow the usual robot-scale
/// recipe (γ 0.99, GAE 0.95, ν learning rate 0.01, policy learning rate
/// 3e-4, ν_max 2, 10 optimization epochs over minibatches of 64) with
/// desk-scale batch sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CupConfig {
    pub gamma: f64,
    pub lambda_gae: f64,
    pub horizon: usize,
    pub episodes: usize,
    /// Coefficient on the √KL penalty of the improvement step.
    pub alpha: f64,
    /// Coefficient entering the exact per-update cost-ceiling check.
    pub beta: f64,
    pub nu_init: f64,
    pub nu_max: f64,
    pub nu_lr: f64,
    pub policy_lr: f64,
    pub optimization_epochs: usize,
    pub minibatch: usize,
    pub iterations: usize,
    pub cost_limit: f64,
    pub seed: u64,
}

impl Default for CupConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda_gae: 0.95,
            horizon: 200,
            episodes: 25,
            alpha: 0.15,
            beta: 0.15,
            nu_init: 0.0,
            nu_max: 2.0,
            nu_lr: 0.01,
            policy_lr: 3e-4,
            optimization_epochs: 10,
            minibatch: 64,
            iterations: 100,
            cost_limit: 1.0,
            seed: 0,
        }
    }
}

impl CupConfig {
    /// Defaults with `gamma` and `cost_limit` taken from the model.
    pub fn for_cmdp(cmdp: &Cmdp) -> Self {
        Self {
            gamma: cmdp.gamma,
            cost_limit: cmdp.cost_limit,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("nu_lr", self.nu_lr),
            ("policy_lr", self.policy_lr),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(TrainError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(TrainError::Config("gamma must lie in (0,1)".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda_gae) {
            return Err(TrainError::Config("lambda_gae must lie in [0,1]".into()));
        }
        if self.nu_init < 0.0 || self.nu_init > self.nu_max {
            return Err(TrainError::Config("nu_init must lie in [0, nu_max]".into()));
        }
        if self.horizon == 0 || self.episodes == 0 || self.minibatch == 0 {
            return Err(TrainError::Config(
                "horizon, episodes, and minibatch must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One TrainLog row. Exact columns are absent when the model is too large
/// for per-iteration oracle logging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub iteration: usize,
    pub j_hat: f64,
    pub jc_hat: f64,
    pub j_exact: Option<f64>,
    pub jc_exact: Option<f64>,
    pub nu: f64,
    pub kl_step1: f64,
    pub kl_step2: f64,
    pub chi: Option<f64>,
    pub improve_floor_ok: Option<bool>,
    pub cost_ceiling_ok: Option<bool>,
    pub denom_flag: Option<bool>,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<TrainRow>,
    pub final_policy: SoftmaxPolicy,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "iteration,j_hat,jc_hat,j_exact,jc_exact,nu,kl_step1,kl_step2,chi,improve_floor_ok,cost_ceiling_ok,denom_flag,fallback";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let fields = [
                row.iteration.to_string(),
                crate::format_real(row.j_hat),
                crate::format_real(row.jc_hat),
                row.j_exact.map(crate::format_real).unwrap_or_default(),
                row.jc_exact.map(crate::format_real).unwrap_or_default(),
                crate::format_real(row.nu),
                crate::format_real(row.kl_step1),
                crate::format_real(row.kl_step2),
                row.chi.map(crate::format_real).unwrap_or_default(),
                row.improve_floor_ok
                    .map(|b| b.to_string())
                    .unwrap_or_default(),
                row.cost_ceiling_ok
                    .map(|b| b.to_string())
                    .unwrap_or_default(),
                row.denom_flag.map(|b| b.to_string()).unwrap_or_default(),
                row.fallback.to_string(),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Empirical KL divergence over a batch's visited decision states:
/// `(1/(MT)) Σ_{i,t} KL(π_a(·|s_{i,t}) ‖ π_b(·|s_{i,t}))`, computed in
/// closed form per state.
pub fn empirical_kl(pi_a: &SoftmaxPolicy, pi_b: &SoftmaxPolicy, batch: &TrajectoryBatch) -> f64 {
    let table = kl_rows(&pi_a.distribution(), &pi_b.distribution());
    let mut total = 0.0;
    let mut count = 0usize;
    for ep in &batch.episodes {
        for t in 0..batch.horizon {
            total += table[ep.states[t]];
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Flattened `(state, action, advantage, cost advantage)` view of a batch,
/// in fixed episode-major order. Both advantage columns are standardized
/// over the batch (zero mean, unit variance) before entering the
/// surrogates; without this the √KL cusp freezes any policy whose raw
/// advantage scale falls below α. Degenerate (constant) columns are kept
/// as-is.
struct Samples {
    states: Vec<usize>,
    actions: Vec<usize>,
    adv: Vec<f64>,
    adv_cost: Vec<f64>,
}

fn standardize(values: &mut [f64]) {
    let n = values.len() as f64;
    if n == 0.0 {
        return;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-8 {
        return;
    }
    for x in values {
        *x = (*x - mean) / std;
    }
}

impl Samples {
    fn new(batch: &TrajectoryBatch, gae: &GaeTables) -> Self {
        let n = batch.episodes.len() * batch.horizon;
        let mut states = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        let mut adv = Vec::with_capacity(n);
        let mut adv_cost = Vec::with_capacity(n);
        for (i, ep) in batch.episodes.iter().enumerate() {
            for t in 0..batch.horizon {
                states.push(ep.states[t]);
                actions.push(ep.actions[t]);
                adv.push(gae.adv[[i, t]]);
                adv_cost.push(gae.adv_cost[[i, t]]);
            }
        }
        standardize(&mut adv);
        standardize(&mut adv_cost);
        Self {
            states,
            actions,
            adv,
            adv_cost,
        }
    }

    fn len(&self) -> usize {
        self.states.len()
    }
}

/// Mean importance-weighted advantage over a sample range plus its gradient:
/// `(1/n) Σ ratio·w` with `∂ratio/∂θ[s,b] = ratio·(1[b=a] − π_θ(b|s))`.
fn ratio_term(
    probs_theta: &Array2<f64>,
    probs_ref: &Array2<f64>,
    samples: &Samples,
    idx: &[usize],
    weights: &[f64],
    grad: Option<&mut Array2<f64>>,
) -> f64 {
    let n = idx.len() as f64;
    let n_actions = probs_theta.ncols();
    let mut value = 0.0;
    if let Some(grad) = grad {
        for &i in idx {
            let (s, a) = (samples.states[i], samples.actions[i]);
            let ratio = probs_theta[[s, a]] / probs_ref[[s, a]];
            let coeff = weights[i] * ratio / n;
            value += weights[i] * ratio;
            grad[[s, a]] += coeff;
            for b in 0..n_actions {
                grad[[s, b]] -= coeff * probs_theta[[s, b]];
            }
        }
    } else {
        for &i in idx {
            let (s, a) = (samples.states[i], samples.actions[i]);
            value += weights[i] * probs_theta[[s, a]] / probs_ref[[s, a]];
        }
    }
    value / n
}

/// Mean per-sample KL `KL(p_ref(·|s) ‖ p_θ(·|s))` over a sample range plus
/// its gradient `∂/∂θ[s,b] = π_θ(b|s) − p_ref(b|s)` per visit.
fn kl_term(
    probs_theta: &Array2<f64>,
    probs_ref: &Array2<f64>,
    samples: &Samples,
    idx: &[usize],
    grad: Option<&mut Array2<f64>>,
) -> f64 {
    let n = idx.len() as f64;
    let n_actions = probs_theta.ncols();
    let table = kl_rows(probs_ref, probs_theta);
    let mut value = 0.0;
    if let Some(grad) = grad {
        for &i in idx {
            let s = samples.states[i];
            value += table[s];
            for b in 0..n_actions {
                grad[[s, b]] += (probs_theta[[s, b]] - probs_ref[[s, b]]) / n;
            }
        }
    } else {
        for &i in idx {
            value += table[samples.states[i]];
        }
    }
    value / n
}

/// Improvement-step surrogate `L̂_R(θ) = mean ratio·Â − α √(KL̂(π_k, π_θ) + ε)`,
/// to be maximized. `Â` is the batch-standardized GAE column.
pub fn improvement_objective(
    logits: &Array2<f64>,
    pi_k: &SoftmaxPolicy,
    batch: &TrajectoryBatch,
    gae: &GaeTables,
    alpha: f64,
) -> f64 {
    let samples = Samples::new(batch, gae);
    let idx: Vec<usize> = (0..samples.len()).collect();
    let probs_theta = SoftmaxPolicy::distribution_of(logits);
    let probs_k = pi_k.distribution();
    let gain = ratio_term(&probs_theta, &probs_k, &samples, &idx, &samples.adv, None);
    let kl = kl_term(&probs_theta, &probs_k, &samples, &idx, None);
    gain - alpha * (kl + KL_EPS).sqrt()
}

/// Analytic gradient of [`improvement_objective`] with respect to the logits.
pub fn improvement_gradient(
    logits: &Array2<f64>,
    pi_k: &SoftmaxPolicy,
    batch: &TrajectoryBatch,
    gae: &GaeTables,
    alpha: f64,
) -> Array2<f64> {
    let samples = Samples::new(batch, gae);
    let idx: Vec<usize> = (0..samples.len()).collect();
    let probs_k = pi_k.distribution();
    improvement_grad_on(logits, &probs_k, &samples, &idx, alpha).1
}

fn improvement_grad_on(
    logits: &Array2<f64>,
    probs_k: &Array2<f64>,
    samples: &Samples,
    idx: &[usize],
    alpha: f64,
) -> (f64, Array2<f64>) {
    let probs_theta = SoftmaxPolicy::distribution_of(logits);
    let mut gain_grad = Array2::zeros(logits.raw_dim());
    let gain = ratio_term(
        &probs_theta,
        probs_k,
        samples,
        idx,
        &samples.adv,
        Some(&mut gain_grad),
    );
    let mut kl_grad = Array2::zeros(logits.raw_dim());
    let kl = kl_term(&probs_theta, probs_k, samples, idx, Some(&mut kl_grad));
    let penalty_scale = alpha / (2.0 * (kl + KL_EPS).sqrt());
    let value = gain - alpha * (kl + KL_EPS).sqrt();
    (value, gain_grad - &(kl_grad * penalty_scale))
}

/// Projection-step loss
/// `L̂_c(θ) = KL̂(π_half, π_θ) + ν·((1−γλ)/(1−γ))·mean ratio·Â^C`,
/// to be minimized; the importance ratio is still taken against the
/// batch-generating policy `π_k`, and `Â^C` is the batch-standardized
/// cost-GAE column.
#[allow(clippy::too_many_arguments)]
pub fn projection_objective(
    logits: &Array2<f64>,
    pi_k: &SoftmaxPolicy,
    pi_half: &SoftmaxPolicy,
    batch: &TrajectoryBatch,
    gae: &GaeTables,
    nu: f64,
    gamma: f64,
    lambda: f64,
) -> f64 {
    let samples = Samples::new(batch, gae);
    let idx: Vec<usize> = (0..samples.len()).collect();
    let probs_theta = SoftmaxPolicy::distribution_of(logits);
    let coeff = nu * (1.0 - gamma * lambda) / (1.0 - gamma);
    let cost = ratio_term(
        &probs_theta,
        &pi_k.distribution(),
        &samples,
        &idx,
        &samples.adv_cost,
        None,
    );
    let kl = kl_term(&probs_theta, &pi_half.distribution(), &samples, &idx, None);
    kl + coeff * cost
}

/// Analytic gradient of [`projection_objective`] with respect to the logits.
#[allow(clippy::too_many_arguments)]
pub fn projection_gradient(
    logits: &Array2<f64>,
    pi_k: &SoftmaxPolicy,
    pi_half: &SoftmaxPolicy,
    batch: &TrajectoryBatch,
    gae: &GaeTables,
    nu: f64,
    gamma: f64,
    lambda: f64,
) -> Array2<f64> {
    let samples = Samples::new(batch, gae);
    let idx: Vec<usize> = (0..samples.len()).collect();
    projection_grad_on(
        logits,
        &pi_k.distribution(),
        &pi_half.distribution(),
        &samples,
        &idx,
        nu * (1.0 - gamma * lambda) / (1.0 - gamma),
    )
    .1
}

fn projection_grad_on(
    logits: &Array2<f64>,
    probs_k: &Array2<f64>,
    probs_half: &Array2<f64>,
    samples: &Samples,
    idx: &[usize],
    coeff: f64,
) -> (f64, Array2<f64>) {
    let probs_theta = SoftmaxPolicy::distribution_of(logits);
    let mut cost_grad = Array2::zeros(logits.raw_dim());
    let cost = ratio_term(
        &probs_theta,
        probs_k,
        samples,
        idx,
        &samples.adv_cost,
        Some(&mut cost_grad),
    );
    let mut kl_grad = Array2::zeros(logits.raw_dim());
    let kl = kl_term(&probs_theta, probs_half, samples, idx, Some(&mut kl_grad));
    (kl + coeff * cost, kl_grad + &(cost_grad * coeff))
}

/// Outcome of one optimization step: the iterate actually adopted and
/// whether the optimizer fell back to its starting policy.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub policy: SoftmaxPolicy,
    pub fell_back: bool,
}

/// Performance-improvement step: minibatch gradient ascent on the
/// importance-weighted advantage surrogate with a √KL penalty. Guarantees
/// the adopted iterate does not decrease the full-batch surrogate; on any
/// decrease or non-finite loss the step falls back to `π_k`.
pub fn improvement_step(
    _cmdp: &Cmdp,
    pi_k: &SoftmaxPolicy,
    batch: &TrajectoryBatch,
    gae: &GaeTables,
    config: &CupConfig,
) -> StepOutcome {
    let samples = Samples::new(batch, gae);
    let all: Vec<usize> = (0..samples.len()).collect();
    let probs_k = pi_k.distribution();
    let mut theta = pi_k.logits.clone();
    let (initial, _) = improvement_grad_on(&theta, &probs_k, &samples, &all, config.alpha);
    for _ in 0..config.optimization_epochs {
        for chunk in all.chunks(config.minibatch) {
            let (_, grad) = improvement_grad_on(&theta, &probs_k, &samples, chunk, config.alpha);
            theta.zip_mut_with(&grad, |t, g| *t += config.policy_lr * g);
        }
        if theta.iter().any(|v| !v.is_finite()) {
            log::warn!("improvement step diverged to non-finite logits, keeping current policy");
            return StepOutcome {
                policy: pi_k.clone(),
                fell_back: true,
            };
        }
    }
    let (finished, _) = improvement_grad_on(&theta, &probs_k, &samples, &all, config.alpha);
    if !finished.is_finite() || finished < initial - 1e-12 {
        log::warn!(
            "improvement step regressed the surrogate ({initial} -> {finished}), keeping current policy"
        );
        return StepOutcome {
            policy: pi_k.clone(),
            fell_back: true,
        };
    }
    StepOutcome {
        policy: SoftmaxPolicy { logits: theta },
        fell_back: false,
    }
}

/// Projection step: the dual variable moves by `η(Ĵ^C − b)` clipped to
/// `[0, ν_max]`, then minibatch gradient descent pulls the policy toward
/// `π_{k+1/2}` in KL while the ν-weighted cost surrogate pushes it into the
/// feasible region. Returns the new policy and `ν_{k+1}`.
#[allow(clippy::too_many_arguments)]
pub fn projection_step(
    _cmdp: &Cmdp,
    pi_k: &SoftmaxPolicy,
    pi_half: &SoftmaxPolicy,
    batch: &TrajectoryBatch,
    gae: &GaeTables,
    jc_hat: f64,
    nu_k: f64,
    config: &CupConfig,
) -> (StepOutcome, f64) {
    let nu_next = (nu_k + config.nu_lr * (jc_hat - config.cost_limit)).clamp(0.0, config.nu_max);
    let samples = Samples::new(batch, gae);
    let all: Vec<usize> = (0..samples.len()).collect();
    let probs_k = pi_k.distribution();
    let probs_half = pi_half.distribution();
    let coeff = nu_next * (1.0 - config.gamma * config.lambda_gae) / (1.0 - config.gamma);
    let mut theta = pi_half.logits.clone();
    for _ in 0..config.optimization_epochs {
        for chunk in all.chunks(config.minibatch) {
            let (_, grad) =
                projection_grad_on(&theta, &probs_k, &probs_half, &samples, chunk, coeff);
            theta.zip_mut_with(&grad, |t, g| *t -= config.policy_lr * g);
        }
        if theta.iter().any(|v| !v.is_finite()) {
            log::warn!("projection step diverged to non-finite logits, keeping improvement iterate");
            return (
                StepOutcome {
                    policy: pi_half.clone(),
                    fell_back: true,
                },
                nu_next,
            );
        }
    }
    let (finished, _) = projection_grad_on(&theta, &probs_k, &probs_half, &samples, &all, coeff);
    if !finished.is_finite() {
        return (
            StepOutcome {
                policy: pi_half.clone(),
                fell_back: true,
            },
            nu_next,
        );
    }
    (
        StepOutcome {
            policy: SoftmaxPolicy { logits: theta },
            fell_back: false,
        },
        nu_next,
    )
}

/// Tabular least-squares critic fit: each state takes the mean of its
/// regression targets (the exact minimizer for a table); unvisited states
/// keep their previous value.
pub fn fit_critics(
    batch: &TrajectoryBatch,
    gae: &GaeTables,
    v_prev: &Array1<f64>,
    vc_prev: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let n = v_prev.len();
    let mut sums = vec![0.0f64; n];
    let mut sums_cost = vec![0.0f64; n];
    let mut counts = vec![0usize; n];
    for (i, ep) in batch.episodes.iter().enumerate() {
        for t in 0..batch.horizon {
            let s = ep.states[t];
            sums[s] += gae.v_target[[i, t]];
            sums_cost[s] += gae.v_target_cost[[i, t]];
            counts[s] += 1;
        }
    }
    let mut v = v_prev.clone();
    let mut vc = vc_prev.clone();
    for s in 0..n {
        if counts[s] > 0 {
            v[s] = sums[s] / counts[s] as f64;
            vc[s] = sums_cost[s] / counts[s] as f64;
        }
    }
    (v, vc)
}

#[derive(Default)]
struct ExactRowFields {
    j: Option<f64>,
    jc: Option<f64>,
    chi: Option<f64>,
    floor_ok: Option<bool>,
    ceiling_ok: Option<bool>,
    denom_flag: Option<bool>,
}

fn exact_row_fields(
    cmdp: &Cmdp,
    pi_k: &SoftmaxPolicy,
    pi_half: &SoftmaxPolicy,
    pi_next: &SoftmaxPolicy,
    config: &CupConfig,
) -> ExactRowFields {
    if cmdp.n_states * cmdp.n_actions > EXACT_LOG_LIMIT {
        return ExactRowFields::default();
    }
    let mut fields = ExactRowFields {
        j: objective(cmdp, pi_next, Signal::Reward).ok(),
        jc: objective(cmdp, pi_next, Signal::Cost).ok(),
        ..ExactRowFields::default()
    };
    if let Ok(UpdateGuarantee {
        chi,
        pass_improvement,
        pass_cost,
        denom_flag,
        ..
    }) = bounds::update_guarantees(
        cmdp,
        pi_k,
        pi_half,
        pi_next,
        config.alpha,
        config.beta,
        config.lambda_gae,
    ) {
        fields.chi = Some(chi);
        fields.floor_ok = Some(pass_improvement);
        fields.ceiling_ok = Some(pass_cost);
        fields.denom_flag = Some(denom_flag);
    }
    fields
}

/// Full training loop from the uniform policy; see [`train_cup_with_initial`].
pub fn train_cup(cmdp: &Cmdp, config: &CupConfig) -> Result<TrainLog, TrainError> {
    train_cup_with_initial(
        cmdp,
        config,
        SoftmaxPolicy::uniform(cmdp.n_states, cmdp.n_actions),
    )
}

/// K iterations of sample → fit critics → recompute GAE → improvement step
/// → projection step, with exact objective and per-update guarantee logging
/// whenever the model is small enough.
pub fn train_cup_with_initial(
    cmdp: &Cmdp,
    config: &CupConfig,
    initial: SoftmaxPolicy,
) -> Result<TrainLog, TrainError> {
    config.validate()?;
    let mut policy = initial;
    let mut v = Array1::zeros(cmdp.n_states);
    let mut vc = Array1::zeros(cmdp.n_states);
    let mut nu = config.nu_init;
    let mut rows = Vec::with_capacity(config.iterations);
    for k in 0..config.iterations {
        let batch = sample_trajectories(
            cmdp,
            &policy,
            config.horizon,
            config.episodes,
            mix_seed(config.seed, k as u64),
        );
        let j_hat = batch.mean_return();
        let jc_hat = batch.mean_cost_return();
        let fit_input = compute_gae(&batch, &v, &vc, config.gamma, config.lambda_gae)?;
        let (v_new, vc_new) = fit_critics(&batch, &fit_input, &v, &vc);
        v = v_new;
        vc = vc_new;
        let gae = compute_gae(&batch, &v, &vc, config.gamma, config.lambda_gae)?;

        let improved = improvement_step(cmdp, &policy, &batch, &gae, config);
        let (projected, nu_next) = projection_step(
            cmdp,
            &policy,
            &improved.policy,
            &batch,
            &gae,
            jc_hat,
            nu,
            config,
        );
        let kl_step1 = empirical_kl(&policy, &improved.policy, &batch);
        let kl_step2 = empirical_kl(&improved.policy, &projected.policy, &batch);
        let exact =
            exact_row_fields(cmdp, &policy, &improved.policy, &projected.policy, config);
        rows.push(TrainRow {
            iteration: k,
            j_hat,
            jc_hat,
            j_exact: exact.j,
            jc_exact: exact.jc,
            nu: nu_next,
            kl_step1,
            kl_step2,
            chi: exact.chi,
            improve_floor_ok: exact.floor_ok,
            cost_ceiling_ok: exact.ceiling_ok,
            denom_flag: exact.denom_flag,
            fallback: improved.fell_back || projected.fell_back,
        });
        policy = projected.policy;
        nu = nu_next;
    }
    Ok(TrainLog {
        rows,
        final_policy: policy,
    })
}

/// Primal-dual Lagrangian baseline: one combined ascent step per iteration
/// on `mean ratio·(Â − ν Â^C) − α√KL̂`, with the same ν update rule and the
/// same log schema (`kl_step2` is identically zero).
pub fn train_lagrangian_baseline(cmdp: &Cmdp, config: &CupConfig) -> Result<TrainLog, TrainError> {
    config.validate()?;
    let mut policy = SoftmaxPolicy::uniform(cmdp.n_states, cmdp.n_actions);
    let mut v = Array1::zeros(cmdp.n_states);
    let mut vc = Array1::zeros(cmdp.n_states);
    let mut nu = config.nu_init;
    let mut rows = Vec::with_capacity(config.iterations);
    for k in 0..config.iterations {
        let batch = sample_trajectories(
            cmdp,
            &policy,
            config.horizon,
            config.episodes,
            mix_seed(config.seed, k as u64),
        );
        let j_hat = batch.mean_return();
        let jc_hat = batch.mean_cost_return();
        let fit_input = compute_gae(&batch, &v, &vc, config.gamma, config.lambda_gae)?;
        let (v_new, vc_new) = fit_critics(&batch, &fit_input, &v, &vc);
        v = v_new;
        vc = vc_new;
        let mut gae = compute_gae(&batch, &v, &vc, config.gamma, config.lambda_gae)?;
        let nu_next = (nu + config.nu_lr * (jc_hat - config.cost_limit)).clamp(0.0, config.nu_max);
        // Fold the ν-weighted cost advantage into the gain so the combined
        // objective reuses the improvement machinery unchanged.
        gae.adv = &gae.adv - &(&gae.adv_cost * nu_next);
        let stepped = improvement_step(cmdp, &policy, &batch, &gae, config);
        let kl_step1 = empirical_kl(&policy, &stepped.policy, &batch);
        let (j_exact, jc_exact, chi, floor_ok, ceiling_ok, denom_flag) =
            exact_row_fields(cmdp, &policy, &stepped.policy, &stepped.policy, config);
        rows.push(TrainRow {
            iteration: k,
            j_hat,
            jc_hat,
            j_exact,
            jc_exact,
            nu: nu_next,
            kl_step1,
            kl_step2: 0.0,
            chi,
            improve_floor_ok: floor_ok,
            cost_ceiling_ok: ceiling_ok,
            denom_flag,
            fallback: stepped.fell_back,
        });
        policy = stepped.policy;
        nu = nu_next;
    }
    Ok(TrainLog {
        rows,
        final_policy: policy,
    })
}
