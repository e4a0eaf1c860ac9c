//! Trajectory simulation under a softmax policy and the sample-side
//! estimators: per-step TD errors, reward and cost GAE, value-regression
//! targets, and empirical discounted cost-returns.
//!
//! Sampling is reproducible: each episode owns its own counter-based
//! generator stream derived from `(seed, episode)`, so the batch is a pure
//! function of its arguments regardless of evaluation order.

use crate::cmdp::{Cmdp, SoftmaxPolicy};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("value table has length {got}, expected {expected}")]
    TableLength { expected: usize, got: usize },
    #[error("lambda must lie in [0,1], got {0}")]
    LambdaOutOfRange(f64),
}

/// One sampled episode of fixed horizon T: `states` has length T+1,
/// the other fields length T, with `rewards[t] = r(s_{t+1}|s_t,a_t)` and
/// `costs[t] = c(s_t,a_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub costs: Vec<f64>,
}

/// A batch of M fixed-horizon episodes with per-episode discounted
/// cost-returns and full seed provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBatch {
    pub episodes: Vec<Episode>,
    pub horizon: usize,
    pub gamma: f64,
    pub seed: u64,
    /// `Ĵ^C_i = Σ_t γ^t c_{i,t+1}` per episode.
    pub cost_returns: Vec<f64>,
}

fn sample_index(rng: &mut ChaCha8Rng, probs: impl Iterator<Item = f64>, len: usize) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    len - 1
}

/// Simulates `episodes` episodes of horizon `horizon` under the policy:
/// `s_0 ~ ρ0`, `a_t ~ π(·|s_t)`, `s_{t+1} ~ P(·|s_t,a_t)`.
pub fn sample_trajectories(
    cmdp: &Cmdp,
    policy: &SoftmaxPolicy,
    horizon: usize,
    episodes: usize,
    seed: u64,
) -> TrajectoryBatch {
    let probs = policy.distribution();
    let n = cmdp.n_states;
    let mut out = Vec::with_capacity(episodes);
    let mut cost_returns = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut states = Vec::with_capacity(horizon + 1);
        let mut actions = Vec::with_capacity(horizon);
        let mut rewards = Vec::with_capacity(horizon);
        let mut costs = Vec::with_capacity(horizon);
        let mut s = sample_index(&mut rng, cmdp.rho0.iter().cloned(), n);
        states.push(s);
        let mut cost_return = 0.0;
        let mut discount = 1.0;
        for _ in 0..horizon {
            let a = sample_index(&mut rng, probs.row(s).iter().cloned(), cmdp.n_actions);
            let s2 = sample_index(
                &mut rng,
                (0..n).map(|j| cmdp.transition[[s, a, j]]),
                n,
            );
            actions.push(a);
            rewards.push(cmdp.reward[[s, a, s2]]);
            costs.push(cmdp.cost[[s, a]]);
            cost_return += discount * cmdp.cost[[s, a]];
            discount *= cmdp.gamma;
            states.push(s2);
            s = s2;
        }
        out.push(Episode {
            states,
            actions,
            rewards,
            costs,
        });
        cost_returns.push(cost_return);
    }
    TrajectoryBatch {
        episodes: out,
        horizon,
        gamma: cmdp.gamma,
        seed,
        cost_returns,
    }
}

impl TrajectoryBatch {
    pub fn n_episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Mean discounted reward-return over the batch.
    pub fn mean_return(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .episodes
            .iter()
            .map(|ep| {
                let mut discount = 1.0;
                let mut ret = 0.0;
                for &r in &ep.rewards {
                    ret += discount * r;
                    discount *= self.gamma;
                }
                ret
            })
            .sum();
        total / self.episodes.len() as f64
    }

    /// Mean discounted cost-return over the batch.
    pub fn mean_cost_return(&self) -> f64 {
        if self.cost_returns.is_empty() {
            return 0.0;
        }
        self.cost_returns.iter().sum::<f64>() / self.cost_returns.len() as f64
    }

    /// Debug dump: one JSON document per line, one episode per line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for (i, ep) in self.episodes.iter().enumerate() {
            let line = serde_json::json!({
                "episode": i,
                "seed": self.seed,
                "states": ep.states,
                "actions": ep.actions,
                "rewards": ep.rewards,
                "costs": ep.costs,
                "cost_return": self.cost_returns[i],
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

/// Per-step TD errors, GAE advantages, and value-regression targets for
/// both signals, all M×T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaeTables {
    pub td: Array2<f64>,
    pub td_cost: Array2<f64>,
    pub adv: Array2<f64>,
    pub adv_cost: Array2<f64>,
    pub v_target: Array2<f64>,
    pub v_target_cost: Array2<f64>,
}

/// Computes TD errors `δ_t = r_{t+1} + γ v(s_{t+1}) − v(s_t)` (cost TD uses
/// the cost signal), GAE by the backward recursion
/// `adv_t = δ_t + γλ adv_{t+1}` truncated at the horizon, and targets
/// `v_target = adv + v(s_t)`.
pub fn compute_gae(
    batch: &TrajectoryBatch,
    v_table: &Array1<f64>,
    v_cost_table: &Array1<f64>,
    gamma: f64,
    lambda: f64,
) -> Result<GaeTables, SamplerError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(SamplerError::LambdaOutOfRange(lambda));
    }
    let m = batch.episodes.len();
    let t_len = batch.horizon;
    for ep in &batch.episodes {
        for &s in &ep.states {
            if s >= v_table.len() || s >= v_cost_table.len() {
                return Err(SamplerError::TableLength {
                    expected: s + 1,
                    got: v_table.len().min(v_cost_table.len()),
                });
            }
        }
    }
    let mut td = Array2::zeros((m, t_len));
    let mut td_cost = Array2::zeros((m, t_len));
    let mut adv = Array2::zeros((m, t_len));
    let mut adv_cost = Array2::zeros((m, t_len));
    let mut v_target = Array2::zeros((m, t_len));
    let mut v_target_cost = Array2::zeros((m, t_len));
    for (i, ep) in batch.episodes.iter().enumerate() {
        for t in 0..t_len {
            let s = ep.states[t];
            let s2 = ep.states[t + 1];
            td[[i, t]] = ep.rewards[t] + gamma * v_table[s2] - v_table[s];
            td_cost[[i, t]] = ep.costs[t] + gamma * v_cost_table[s2] - v_cost_table[s];
        }
        let mut acc = 0.0;
        let mut acc_cost = 0.0;
        for t in (0..t_len).rev() {
            acc = td[[i, t]] + gamma * lambda * acc;
            acc_cost = td_cost[[i, t]] + gamma * lambda * acc_cost;
            adv[[i, t]] = acc;
            adv_cost[[i, t]] = acc_cost;
            let s = ep.states[t];
            v_target[[i, t]] = acc + v_table[s];
            v_target_cost[[i, t]] = acc_cost + v_cost_table[s];
        }
    }
    Ok(GaeTables {
        td,
        td_cost,
        adv,
        adv_cost,
        v_target,
        v_target_cost,
    })
}
