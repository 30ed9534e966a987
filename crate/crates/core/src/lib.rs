//! Binary contingency tables with block-structured margins.
//!
//! A binary contingency table is a 0/1 matrix with prescribed row sums `r`
//! and column sums `c`. This crate works with the family whose margins have
//! a small "heavy" block of rows/columns and a large "light" block, and
//! provides four layers of machinery:
//!
//! * [`margins`] — margin construction (block family and arbitrary vectors)
//!   and Gale–Ryser feasibility.
//! * [`entropy`] — the Bernoulli-entropy maximizer over the binary
//!   transportation polytope (the *typical table*), a two-variable block
//!   reduction, closed-form limits of the block means, and the
//!   entropy-based upper bound on the number of tables.
//! * [`oracle`] — exact counting, exact uniform sampling, and exact
//!   marginal/joint laws for small tables via dynamic programming over
//!   residual-margin multisets. This is the ground truth every statistical
//!   claim is checked against.
//! * [`mcmc`] — checkerboard-swap Markov chains and conditioned-Bernoulli
//!   rejection sampling for tables beyond oracle scale.
//! * [`analysis`] — statistical experiments: marginal convergence to
//!   Bernoulli laws, in-block joint independence, moment convergence, laws
//!   of large numbers, and convergence-rate fitting.
//!
//! The `binmargin` binary wires all of this into a command-line experiment
//! harness; see [`cli`].

pub mod analysis;
pub mod cli;
pub mod entropy;
pub mod margins;
pub mod mcmc;
pub mod oracle;
pub mod stats;

pub use analysis::{Block, RateFit, SamplerKind};
pub use entropy::{
    barvinok_upper_bound, entropy_g, limit_law, solve_block, solve_typical, BlockSolution,
    LimitLaw, TypicalTable,
};
pub use margins::{
    build_block_margins, check_feasible, classify_regime, BlockParams, MarginPair, Regime,
};
pub use mcmc::{bernoulli_rejection_sample, initial_table, run_chain, ChainConfig};
pub use oracle::{
    count_tables, enumerate_tables, exact_marginal, exact_sample, verify_barvinok_uniformity,
    BinaryTable, CountTable,
};
