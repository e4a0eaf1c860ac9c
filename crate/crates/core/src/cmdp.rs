//! The constrained-MDP data model, validation, built-in desk-scale
//! environments, and the tabular softmax policy.
//!
//! Conventions kept throughout the crate: rewards are transition-indexed
//! `r(s'|s,a)` while costs are state-action-indexed `c(s,a)`; a single cost
//! signal with limit `b`; discounting with `γ ∈ (0,1)`.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on probability normalization (row sums, initial distribution).
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CmdpError {
    #[error("gamma must lie in (0,1), got {0}")]
    GammaOutOfRange(f64),
    #[error("cost limit must be nonnegative, got {0}")]
    NegativeCostLimit(f64),
    #[error("cell ({0}, {1}) is outside a {2}x{3} grid")]
    CellOutOfGrid(usize, usize, usize, usize),
    #[error("goal cell ({0}, {1}) overlaps a hazard cell")]
    GoalOnHazard(usize, usize),
    #[error("grid must have at least one cell")]
    EmptyGrid,
    #[error("policy logits must be finite")]
    NonFiniteLogits,
    #[error("state/action counts must be at least 1")]
    EmptyModel,
}

/// A constrained Markov decision process over finite state and action sets.
///
/// `transition[[s, a, s']]` is `P(s'|s,a)`, `reward[[s, a, s']]` is the reward
/// observed on that transition, and `cost[[s, a]]` is the per-step cost of
/// playing `a` in `s`. `rho0` is the initial state distribution and
/// `cost_limit` is the budget `b` on the discounted cost-return.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cmdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Array3<f64>,
    pub reward: Array3<f64>,
    pub cost: Array2<f64>,
    pub rho0: Array1<f64>,
    pub gamma: f64,
    pub cost_limit: f64,
}

/// Outcome of [`validate_cmdp`]: one human-readable line per violated invariant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_valid() {
            write!(f, "valid")
        } else {
            write!(f, "{}", self.violations.join("; "))
        }
    }
}

/// Check every structural invariant of a [`Cmdp`]. Never aborts: all
/// violations are collected and reported together.
pub fn validate_cmdp(cmdp: &Cmdp) -> ValidationReport {
    let mut violations = Vec::new();
    for s in 0..cmdp.n_states {
        for a in 0..cmdp.n_actions {
            let mut row_sum = 0.0;
            for s2 in 0..cmdp.n_states {
                let p = cmdp.transition[[s, a, s2]];
                if !(p >= 0.0) {
                    violations.push(format!(
                        "negative transition probability {p} at (s{s},a{a},s{s2})"
                    ));
                }
                row_sum += p;
            }
            if (row_sum - 1.0).abs() > PROB_TOL {
                violations.push(format!("row sum {row_sum} at (s{s},a{a})"));
            }
        }
    }
    let mut rho_sum = 0.0;
    for s in 0..cmdp.n_states {
        let p = cmdp.rho0[s];
        if !(p >= 0.0) {
            violations.push(format!("negative initial probability {p} at s{s}"));
        }
        rho_sum += p;
    }
    if (rho_sum - 1.0).abs() > PROB_TOL {
        violations.push(format!("initial distribution sum {rho_sum}"));
    }
    if !(cmdp.gamma > 0.0 && cmdp.gamma < 1.0) {
        violations.push(format!("gamma out of (0,1): {}", cmdp.gamma));
    }
    if !(cmdp.cost_limit >= 0.0) {
        violations.push(format!("negative cost limit {}", cmdp.cost_limit));
    }
    ValidationReport { violations }
}

/// Action indices for the two-state environment.
pub mod two_state {
    pub const STAY: usize = 0;
    pub const FLIP: usize = 1;
}

/// Canonical two-state fixture: `stay` keeps the state, `flip` toggles it,
/// both deterministically. Reward 1 on any transition arriving at `s1`,
/// cost 1 for playing `flip`, start in `s0`.
pub fn build_two_state(gamma: f64, b: f64) -> Result<Cmdp, CmdpError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(CmdpError::GammaOutOfRange(gamma));
    }
    if !(b >= 0.0) {
        return Err(CmdpError::NegativeCostLimit(b));
    }
    let mut transition = Array3::zeros((2, 2, 2));
    let mut reward = Array3::zeros((2, 2, 2));
    let mut cost = Array2::zeros((2, 2));
    for s in 0..2 {
        transition[[s, two_state::STAY, s]] = 1.0;
        transition[[s, two_state::FLIP, 1 - s]] = 1.0;
        cost[[s, two_state::FLIP]] = 1.0;
        for a in 0..2 {
            reward[[s, a, 1]] = 1.0;
        }
    }
    let mut rho0 = Array1::zeros(2);
    rho0[0] = 1.0;
    Ok(Cmdp {
        n_states: 2,
        n_actions: 2,
        transition,
        reward,
        cost,
        rho0,
        gamma,
        cost_limit: b,
    })
}

/// Action indices for the gridworld environment.
pub mod grid {
    pub const NORTH: usize = 0;
    pub const EAST: usize = 1;
    pub const SOUTH: usize = 2;
    pub const WEST: usize = 3;
}

/// Desk-scale gridworld. Cells are `(x, y)` with `x` the column and `y` the
/// row; the state index is `y * width + x`. Moves slip: the intended
/// direction is taken with probability 0.9 and each perpendicular direction
/// with 0.05. Moves off the grid leave the agent in place. Entering a hazard
/// cell costs 1 in expectation (`c(s,a) = P(next cell is a hazard | s,a)`);
/// arriving at the goal pays reward 1 and the goal is absorbing with reward
/// 0 thereafter.
pub fn build_gridworld(
    width: usize,
    height: usize,
    hazard_cells: &[(usize, usize)],
    goal_cell: (usize, usize),
    gamma: f64,
    b: f64,
) -> Result<Cmdp, CmdpError> {
    if width == 0 || height == 0 {
        return Err(CmdpError::EmptyGrid);
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(CmdpError::GammaOutOfRange(gamma));
    }
    if !(b >= 0.0) {
        return Err(CmdpError::NegativeCostLimit(b));
    }
    let inside = |c: (usize, usize)| c.0 < width && c.1 < height;
    if !inside(goal_cell) {
        return Err(CmdpError::CellOutOfGrid(goal_cell.0, goal_cell.1, width, height));
    }
    for &h in hazard_cells {
        if !inside(h) {
            return Err(CmdpError::CellOutOfGrid(h.0, h.1, width, height));
        }
        if h == goal_cell {
            return Err(CmdpError::GoalOnHazard(h.0, h.1));
        }
    }
    let n_states = width * height;
    let n_actions = 4;
    let idx = |x: usize, y: usize| y * width + x;
    let goal = idx(goal_cell.0, goal_cell.1);
    let mut hazard = vec![false; n_states];
    for &(x, y) in hazard_cells {
        hazard[idx(x, y)] = true;
    }
    // (dx, dy) per action; NORTH decreases y.
    let moves: [(isize, isize); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
    let perpendicular: [[usize; 2]; 4] = [
        [grid::EAST, grid::WEST],
        [grid::NORTH, grid::SOUTH],
        [grid::EAST, grid::WEST],
        [grid::NORTH, grid::SOUTH],
    ];
    let step = |s: usize, dir: usize| -> usize {
        let x = (s % width) as isize;
        let y = (s / width) as isize;
        let (dx, dy) = moves[dir];
        let nx = x + dx;
        let ny = y + dy;
        if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
            s
        } else {
            idx(nx as usize, ny as usize)
        }
    };
    let mut transition = Array3::zeros((n_states, n_actions, n_states));
    let mut reward = Array3::zeros((n_states, n_actions, n_states));
    let mut cost = Array2::zeros((n_states, n_actions));
    for s in 0..n_states {
        for a in 0..n_actions {
            if s == goal {
                transition[[s, a, s]] = 1.0;
                continue;
            }
            transition[[s, a, step(s, a)]] += 0.9;
            for &side in &perpendicular[a] {
                transition[[s, a, step(s, side)]] += 0.05;
            }
            for s2 in 0..n_states {
                if transition[[s, a, s2]] > 0.0 {
                    if s2 == goal {
                        reward[[s, a, s2]] = 1.0;
                    }
                    if hazard[s2] {
                        cost[[s, a]] += transition[[s, a, s2]];
                    }
                }
            }
        }
    }
    let rho_mass = 1.0 / (n_states as f64);
    let rho0 = Array1::from_elem(n_states, rho_mass);
    Ok(Cmdp {
        n_states,
        n_actions,
        transition,
        reward,
        cost,
        rho0,
        gamma,
        cost_limit: b,
    })
}

/// Random CMDP fixture for bound campaigns. Transition rows are normalized
/// strictly-positive uniforms (so every policy is ergodic), rewards and costs
/// are uniform in [0,1), the initial distribution is uniform, `γ = 0.9`, and
/// the whole instance is a pure function of `(n_states, n_actions, seed)`.
pub fn build_random_cmdp(n_states: usize, n_actions: usize, seed: u64) -> Result<Cmdp, CmdpError> {
    if n_states == 0 || n_actions == 0 {
        return Err(CmdpError::EmptyModel);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transition = Array3::zeros((n_states, n_actions, n_states));
    for s in 0..n_states {
        for a in 0..n_actions {
            let mut total = 0.0;
            for s2 in 0..n_states {
                // 1 - u is in (0, 1], keeping every entry strictly positive.
                let w = 1.0 - rng.random::<f64>();
                transition[[s, a, s2]] = w;
                total += w;
            }
            for s2 in 0..n_states {
                transition[[s, a, s2]] /= total;
            }
        }
    }
    let mut reward = Array3::zeros((n_states, n_actions, n_states));
    for s in 0..n_states {
        for a in 0..n_actions {
            for s2 in 0..n_states {
                reward[[s, a, s2]] = rng.random::<f64>();
            }
        }
    }
    let mut cost = Array2::zeros((n_states, n_actions));
    for s in 0..n_states {
        for a in 0..n_actions {
            cost[[s, a]] = rng.random::<f64>();
        }
    }
    let rho0 = Array1::from_elem(n_states, 1.0 / n_states as f64);
    Ok(Cmdp {
        n_states,
        n_actions,
        transition,
        reward,
        cost,
        rho0,
        gamma: 0.9,
        cost_limit: 1.0,
    })
}

/// Tabular softmax policy: `π(a|s) = exp(θ[s,a]) / Σ_a' exp(θ[s,a'])`.
///
/// The induced distribution is strictly positive, so importance ratios and
/// KL divergences are always well defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    pub logits: Array2<f64>,
}

impl SoftmaxPolicy {
    pub fn new(logits: Array2<f64>) -> Result<Self, CmdpError> {
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(CmdpError::NonFiniteLogits);
        }
        Ok(Self { logits })
    }

    /// The uniform policy (all logits zero).
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            logits: Array2::zeros((n_states, n_actions)),
        }
    }

    pub fn n_states(&self) -> usize {
        self.logits.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.logits.ncols()
    }

    /// Row-stochastic action probability table `π(a|s)`.
    ///
    /// Each row is normalized after subtracting its max logit, so the result
    /// is invariant to per-row logit shifts.
    pub fn distribution(&self) -> Array2<f64> {
        Self::distribution_of(&self.logits)
    }

    /// Softmax of a raw logit table (used by optimizers iterating on logits).
    pub fn distribution_of(logits: &Array2<f64>) -> Array2<f64> {
        let (n_states, n_actions) = logits.dim();
        let mut probs = Array2::zeros((n_states, n_actions));
        for s in 0..n_states {
            let row = logits.row(s);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for a in 0..n_actions {
                let e = (row[a] - max).exp();
                probs[[s, a]] = e;
                total += e;
            }
            for a in 0..n_actions {
                probs[[s, a]] /= total;
            }
        }
        probs
    }
}
