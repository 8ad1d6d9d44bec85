//! Reference learners: behavioural cloning and fitted-Q on a learned reward.

mod arl;
mod bc;

pub use arl::{arl_train, ArlOutcome, FittedQConfig};
pub use bc::{bc_train, bc_train_observed, BcConfig, BcOutcome};
