mod build;
mod probe;
mod train;

use std::path::Path;

use mickey_core::data::{parse_language_list, LanguageCode};
use mickey_core::mcp::{Optimizer, Task, TrainingConfig};

pub use build::build;
pub use probe::{probe, stats};
pub use train::{eval, finetune, mcp_convert, mcp_train};

use crate::config::TrainingArgs;
use crate::failure::Failure;

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Infrastructure(format!("{}: {e}", path.display())))
}

fn languages(list: Option<&str>) -> Result<Vec<LanguageCode>, Failure> {
    Ok(parse_language_list(list.unwrap_or(""))?)
}

fn parse_task(task: Option<&str>) -> Result<Task, Failure> {
    let name = task.ok_or_else(|| Failure::Usage("missing required option --task".into()))?;
    Ok(name.parse()?)
}

/// Preset (when named) or `base`, then every explicitly given field on top.
fn training_config(args: &TrainingArgs, preset_task: Task, base: TrainingConfig, seed: u64) -> Result<TrainingConfig, Failure> {
    let mut cfg = match &args.preset {
        Some(name) => TrainingConfig::preset(name.parse()?, preset_task),
        None => base,
    };
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.warmup_steps {
        cfg.warmup_steps = v;
    }
    if let Some(v) = args.eval_interval {
        cfg.eval_interval = v;
    }
    if let Some(v) = args.max_steps {
        cfg.max_steps = Some(v);
    }
    if let Some(v) = args.max_seq_len {
        cfg.max_seq_len = v;
    }
    if let Some(o) = &args.optimizer {
        cfg.optimizer = match o.to_ascii_lowercase().as_str() {
            "adam" => Optimizer::Adam,
            "sgd" => Optimizer::Sgd,
            other => return Err(Failure::Usage(format!("unknown optimizer `{other}` (adam or sgd)"))),
        };
    }
    cfg.seed = args.seed.unwrap_or(seed);
    cfg.validate()?;
    Ok(cfg)
}
