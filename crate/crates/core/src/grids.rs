//! Default verification grids. Changing any value here means bumping
//! [`GRID_VERSION`], so reports from different tool versions stay comparable.

use crate::rewards::RewardSpec;
use crate::scalar::{int, ratio, Rational};

pub const GRID_VERSION: &str = "v1";

/// Largest horizon of the exact optimality grid.
pub const OPTIMALITY_N_MAX: usize = 15;
/// Largest `n` and `i` of the inequality grid.
pub const INEQUALITY_N_MAX: usize = 10;
pub const INEQUALITY_I_MAX: u64 = 10;
/// Largest `n` for the reflection / time-reversal identities.
pub const IDENTITY_N_MAX: usize = 12;
/// Largest horizon handed to the exhaustive oracle.
pub const ORACLE_N_MAX: usize = 4;
/// Domain `{0..TABLE_UPPER}` of tabulated rewards; covers every argument
/// `i v M_n - S_n` reached above.
pub const TABLE_UPPER: u64 = 40;

pub const BM_TIMES: [f64; 3] = [0.5, 1.0, 2.0];
pub const BM_LEVELS: [f64; 4] = [0.0, 0.3, 0.6, 1.5];
pub const BM_DRIFTS: [f64; 3] = [0.0, 0.4, 1.0];

/// `1/10, 2/10, ..., 9/10`.
pub fn p_grid() -> Vec<Rational> {
    (1..=9).map(|k| ratio(k, 10)).collect()
}

/// Named convex nonincreasing rewards on `{0..TABLE_UPPER}` (or all of `N`).
pub fn discrete_families() -> Vec<(&'static str, RewardSpec)> {
    let upper = TABLE_UPPER as i64;
    let harmonic = (0..=upper).map(|k| ratio(1, k + 1)).collect();
    // Kinks at 4 and 5, flat from 5 on.
    let kinked: Vec<i64> = (0..=upper).map(|k| (10 - 2 * k).max(0) + (4 - k).max(0)).collect();
    let table = |f: RewardSpec| f.to_table(TABLE_UPPER).expect("family tabulates");
    vec![
        ("indicator_top", RewardSpec::indicator_top()),
        ("geometric(1/4)", RewardSpec::geometric(ratio(1, 4)).expect("valid")),
        ("geometric(1/2)", RewardSpec::geometric(ratio(1, 2)).expect("valid")),
        ("geometric(3/4)", RewardSpec::geometric(ratio(3, 4)).expect("valid")),
        ("exp_decay(1/2) table", table(RewardSpec::exp_decay(ratio(1, 2)).expect("valid"))),
        ("exp_decay(1) table", table(RewardSpec::exp_decay(int(1)).expect("valid"))),
        ("harmonic 1/(k+1)", RewardSpec::table(harmonic).expect("valid")),
        ("kinked max(0,10-2k)+max(0,4-k)", RewardSpec::table_i64(&kinked)),
    ]
}

/// Linear reward `N - k`, the boundary case of the uniqueness results.
pub fn linear_family() -> RewardSpec {
    RewardSpec::linear(int(TABLE_UPPER as i64))
}

/// `exp(-x)`, `exp(-2x)`, `max(0, 1 - x/2)` and the linear `1 - x`.
pub fn bm_families() -> Vec<RewardSpec> {
    vec![
        RewardSpec::exp_decay(int(1)).expect("valid"),
        RewardSpec::exp_decay(int(2)).expect("valid"),
        RewardSpec::custom_table(vec![(0.0, 1.0), (2.0, 0.0), (3.0, 0.0)]).expect("valid"),
        RewardSpec::linear(int(1)),
    ]
}
