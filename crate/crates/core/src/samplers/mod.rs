//! Metropolis-Hastings, two-stage delayed acceptance, slice sampling of the surrogate,
//! mixture starts, proposal tuning and parallel chain orchestration.

pub mod chains;
pub mod mixture;
pub mod slice;
pub mod step;
pub mod tune;

pub use chains::{
    chain_rng, postprocess, run_chains, total_stats, trimmed, ChainStats, MarkovChain, SamplingMode, DEFAULT_BURN_IN,
    DEFAULT_CHAINS, DEFAULT_THIN,
};
pub use mixture::{fit_mixture, MixtureInit, DEFAULT_COMPONENTS};
pub use slice::{slice_sample, slice_sample_surrogate};
pub use step::{
    mh_step, stage_one_probability, stage_two_probability, two_stage_step, ChainState, Level, Proposal, ProposalConfig,
    StepRecord,
};
pub use tune::{tune_proposal, tune_proposal_on, TunedProposal, DEFAULT_TARGET_RANGE};
