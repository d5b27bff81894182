//! Iterative image style transfer.
//!
//! One stage minimizes `lambda_c * |C(I) - C(sar)|^2 + (1 - lambda_c) * |S(I) - S(opt)|^2`
//! over the pixels of `I` with L-BFGS. Stage 0 runs under the base filter
//! bank starting from the SAR image; stage `k >= 1` re-extracts both targets
//! under a freshly perturbed bank and starts from the previous output.

mod config;
mod lbfgs;
mod loss;
mod run;
mod stage;

pub use config::{IistConfig, LbfgsParams};
pub use lbfgs::{lbfgs_minimize, Evaluation, LbfgsReport, Termination};
pub use loss::{loss_and_grad, loss_only, LossEval, LossTerms, Targets};
pub use run::{iist_run, iist_run_with, prepare_sar, write_trace, IistOutput, StageRecord, StopReason};
pub use stage::{ist_stage, StageResult};
