//! Cycle-cancellation rounding under the multilinear extension, non-uniform
//! pipage rounding, and allocation solvers (Santa Claus, Nash social welfare,
//! maximin share) with brute-force reference oracles.

pub mod error;
pub mod instance;
pub mod matching;
pub mod mms;
pub mod multilinear;
pub mod nsw;
pub mod reference;
pub mod report;
pub mod rounding;
pub mod santa;
pub mod valuations;

pub use error::{Error, Result};
pub use instance::{generate, Family, GenConfig, Instance};
pub use matching::{max_weight_matching, Matching, WeightMatrix};
pub use mms::{single_good_reduction, solve_mms, uniform_point, MmsParams};
pub use multilinear::{EvalMode, Estimate};
pub use reference::{brute_opt_maxmin, brute_opt_nsw, mms_bruteforce, BruteLimits};
pub use nsw::{continuous_local_search, initial_matching, rematch, solve_nsw, NswParams};
pub use report::{nash_welfare, Certificates, Objective, RunReport};
pub use rounding::{
    cancel_all_cycles, cancel_one_cycle, nonuniform_pipage, pipage_round, randomized_round, CancelOptions,
    CycleStep, FractionalAllocation, IntegralAllocation,
};
pub use santa::{cg_feasibility, solve_santa, FeasibilityOutcome, SantaParams};
pub use valuations::{check_submodular, AgentId, Concave, GoodId, GoodSet, ValuationSpec};
