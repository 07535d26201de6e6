//! Training, evaluation and the diagnostics run on trained models.

pub mod data;
pub mod eval;
pub mod train;

pub use data::{separable_halves, synthetic_shapes, Dataset, ShapesConfig};
pub use eval::{argmax, attention_entropy, class_token_entropy, evaluate, mc_inference, occlusion_eval, occlusion_keep, score, EvalResult, OcclusionRow};
pub use train::{dropkey_config, finetune_align, train, AdamW, FinetuneOutcome, MetricsLog, MetricsRecord, TrainConfig, TrainOutcome};
