//! Losses, self-critical policy gradients, the optimizer and the training loop.

pub mod loss;
pub mod optim;
pub mod scst;
pub mod train;

pub use loss::{behavior_cloning_loss, kl_divergence, paragraph_xe_loss, xe_loss, Cloning, Expert, FUNCTION_WORDS, KL_EPS};
pub use optim::{Adam, LrSchedule};
pub use scst::{paragraph_scst_step, scst_step, ScstLevel, ScstOutcome, StepReport};
pub use train::{default_reward, evaluate, greedy_caption, mean_xe, train, train_to_dir, xe_item, EpochReport, Phase, PhaseConfig, Scores, TrainConfig};
