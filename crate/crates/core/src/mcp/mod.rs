//! Multilingual contrastive selection: probe conversion, the plausibility head and its
//! objective, and the shared trainer.

pub mod convert;
pub mod head;
pub mod train;

pub use convert::{build_mcp_dataset, convert_probe, convert_probe_traced, ConversionConfig, ConversionTrace};
pub use head::{argmax, head_gradient, mcp_forward, mcp_loss, softmax, HeadGradient, Loss, McpHead, PROB_FLOOR};
pub use train::{
    accuracy, choice_scores, encode_mcp_example, predict, train, write_log_csv, Backbone, Checkpoint,
    ChoiceSet, LogEntry, Optimizer, Task, TrainOutcome, TrainingConfig,
};
