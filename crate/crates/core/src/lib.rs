// `!(x >= 0.0)`-style guards are deliberate: they reject NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Constrained-MDP optimization laboratory.
//!
//! Small tabular CMDPs, a matrix-exact dynamic-programming oracle, the
//! generalized performance-difference bounds it verifies, trajectory
//! sampling with GAE estimators, and a conservative-update policy trainer
//! with a primal-dual projection onto the cost-feasible set.

pub mod bounds;
pub mod campaign;
pub mod cmdp;
pub mod cup;
pub mod dp;
pub mod envspec;
mod linalg;
pub mod sampler;

pub use cmdp::{
    build_gridworld, build_random_cmdp, build_two_state, validate_cmdp, Cmdp, CmdpError,
    SoftmaxPolicy, ValidationReport,
};
pub use dp::{objective, solve_policy, DpSolution, Signal};
pub use envspec::EnvSpec;

/// Formats a real with 17 significant digits, enough to round-trip any f64.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// SplitMix64 finalizer; the standard 64-bit avalanche mix.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a root seed and an index.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(1)))
}
