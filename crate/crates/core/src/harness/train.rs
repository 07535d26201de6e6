use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::eval::evaluate;
use crate::masks::{DropConfig, Schedule};
use crate::numerics::{Gradients, ParamId, Tape, Tensor};
use crate::rng::StreamRng;
use crate::vit::{init_params, record_batch_loss, AttentionMode, ParamVars, TinyViTConfig, TinyViTParams};
use crate::{Error, Result};

pub const ADAM_BETAS: (f64, f64) = (0.9, 0.999);
pub const ADAM_EPS: f64 = 1e-8;
/// Training loss above which a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
/// Largest validation accuracy loss (as a fraction) finetuning may cause.
pub const FINETUNE_TOLERANCE: f64 = 0.005;

const SHUFFLE_TAG: u64 = 1;
const MASK_TAG: u64 = 2;
const FINETUNE_TAG: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub drop: DropConfig,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            lr: 1e-3,
            warmup_steps: 20,
            weight_decay: 0.05,
            seed: 0,
            drop: DropConfig::none(),
            finetune_epochs: 5,
            finetune_lr: 1e-5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr", "must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay", "must be non-negative"));
        }
        if self.finetune_epochs > 0 && !(self.finetune_lr > 0.0 && self.finetune_lr.is_finite()) {
            return Err(Error::invalid("finetune_lr", "must be positive when finetuning"));
        }
        self.drop.validate(None)?;
        Ok(())
    }

    /// Cosine decay to zero after a linear warmup.
    pub fn lr_at(&self, step: usize, total_steps: usize) -> f64 {
        if step < self.warmup_steps {
            return self.lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = total_steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        0.5 * self.lr * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// One logged value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub seed: u64,
    pub epoch: usize,
    pub step: usize,
    pub metric: String,
    pub value: f64,
    pub variant: String,
    pub ratio: f64,
    pub schedule: String,
}

/// Append-only metrics for one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub run_id: String,
    pub seed: u64,
    pub drop: DropConfig,
    pub records: Vec<MetricsRecord>,
}

impl MetricsLog {
    pub fn new(run_id: impl Into<String>, seed: u64, drop: &DropConfig) -> Self {
        Self {
            run_id: run_id.into(),
            seed,
            drop: drop.clone(),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, epoch: usize, step: usize, metric: &str, value: f64) {
        self.records.push(MetricsRecord {
            run_id: self.run_id.clone(),
            seed: self.seed,
            epoch,
            step,
            metric: metric.to_string(),
            value,
            variant: self.drop.variant.to_string(),
            ratio: self.drop.base_ratio,
            schedule: self.drop.schedule.to_string(),
        });
    }

    /// Values of `metric` in logging order.
    pub fn series(&self, metric: &str) -> Vec<f64> {
        self.records.iter().filter(|r| r.metric == metric).map(|r| r.value).collect()
    }

    pub fn extend(&mut self, other: MetricsLog) {
        self.records.extend(other.records);
    }
}

/// Decoupled weight decay Adam.
#[derive(Clone, Debug)]
pub struct AdamW {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    decay: Vec<bool>,
    weight_decay: f64,
    t: i32,
}

impl AdamW {
    /// Weight decay applies to projection and head matrices only.
    pub fn new(params: &TinyViTParams, weight_decay: f64) -> Self {
        let named = params.named();
        Self {
            m: named.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect(),
            v: named.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect(),
            decay: named.iter().map(|(n, _)| is_decayed(n)).collect(),
            weight_decay,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut TinyViTParams, grads: &Gradients, lr: f64) -> Result<()> {
        self.t += 1;
        let (b1, b2) = ADAM_BETAS;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (i, p) in params.tensors_mut().into_iter().enumerate() {
            let g = grads.get(ParamId(i))?;
            let decay = if self.decay[i] { self.weight_decay } else { 0.0 };
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (((pv, gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = b1 * *mv + (1.0 - b1) * gv;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                let update = (*mv / c1) / ((*vv / c2).sqrt() + ADAM_EPS);
                *pv -= lr * (update + decay * *pv);
            }
        }
        Ok(())
    }
}

fn is_decayed(name: &str) -> bool {
    ["weight", ".wq", ".wk", ".wv", ".wo", ".w1", ".w2"].iter().any(|s| name.ends_with(s))
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the epoch with the best validation accuracy.
    pub params: TinyViTParams,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub final_val_accuracy: f64,
    pub log: MetricsLog,
}

struct Phase<'a> {
    epochs: usize,
    drop: &'a DropConfig,
    lr: &'a dyn Fn(usize, usize) -> f64,
    weight_decay: f64,
    rng: StreamRng,
    batch_size: usize,
}

/// Runs `phase.epochs` epochs, calling `on_epoch` after each with the current
/// parameters and the global step count.
fn run_phase(
    params: &mut TinyViTParams,
    model: &TinyViTConfig,
    data: &Dataset,
    phase: Phase,
    log: &mut MetricsLog,
    mut on_epoch: impl FnMut(usize, &TinyViTParams, &mut MetricsLog) -> Result<()>,
) -> Result<()> {
    let steps_per_epoch = data.len().div_ceil(phase.batch_size);
    let total = phase.epochs * steps_per_epoch;
    let mut opt = AdamW::new(params, phase.weight_decay);
    let mode = AttentionMode::train(phase.drop);
    let mut step = 0;
    for epoch in 0..phase.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut phase.rng.fork(SHUFFLE_TAG).fork(epoch as u64));
        for batch in order.chunks(phase.batch_size) {
            let images: Vec<Tensor> = batch.iter().map(|&i| data.images[i].clone()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            let mut tape = Tape::new();
            let vars = ParamVars::register(&mut tape, params)?;
            let mask_rng = phase.rng.fork(MASK_TAG).fork(step as u64);
            let (loss, _) = record_batch_loss(&mut tape, &vars, model, &images, &labels, &mode, &mask_rng)?;
            let value = tape.value(loss).item();
            if !value.is_finite() || value > DIVERGENCE_LIMIT {
                return Err(Error::DivergedLoss { step, loss: value });
            }
            let grads = tape.backward(loss)?;
            let lr = (phase.lr)(step, total);
            opt.step(params, &grads, lr)?;
            log.push(epoch, step, "train_loss", value);
            step += 1;
        }
        on_epoch(epoch, params, log)?;
    }
    Ok(())
}

fn check_data(model: &TinyViTConfig, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if (data.height, data.width, data.channels) != (model.height, model.width, model.channels) {
        return Err(Error::invalid(
            "dataset",
            format!("images are {}x{}x{}, model expects {}x{}x{}", data.height, data.width, data.channels, model.height, model.width, model.channels),
        ));
    }
    if let Some(&label) = data.labels.iter().find(|&&l| l >= model.num_classes) {
        return Err(Error::LabelOutOfRange {
            label,
            classes: model.num_classes,
        });
    }
    Ok(())
}

/// Trains from a fresh initialization and returns the best-validation parameters.
pub fn train(model: &TinyViTConfig, cfg: &TrainConfig, train_set: &Dataset, val_set: &Dataset, run_id: &str) -> Result<TrainOutcome> {
    model.validate()?;
    cfg.validate()?;
    cfg.drop.validate(Some(model.grid()))?;
    check_data(model, train_set)?;
    check_data(model, val_set)?;
    let mut params = init_params(model, cfg.seed)?;
    let mut log = MetricsLog::new(run_id, cfg.seed, &cfg.drop);
    let mut best: Option<(f64, usize, TinyViTParams)> = None;
    let mut final_acc = 0.0;
    let schedule = |step: usize, total: usize| cfg.lr_at(step, total);
    let phase = Phase {
        epochs: cfg.epochs,
        drop: &cfg.drop,
        lr: &schedule,
        weight_decay: cfg.weight_decay,
        rng: StreamRng::new(cfg.seed),
        batch_size: cfg.batch_size,
    };
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    run_phase(&mut params, model, train_set, phase, &mut log, |epoch, p, log| {
        let eval = evaluate(p, model, val_set)?;
        let step = (epoch + 1) * steps_per_epoch - 1;
        log.push(epoch, step, "val_accuracy", eval.accuracy);
        log.push(epoch, step, "val_loss", eval.loss);
        final_acc = eval.accuracy;
        if best.as_ref().is_none_or(|(acc, _, _)| eval.accuracy > *acc) {
            best = Some((eval.accuracy, epoch, p.clone()));
        }
        Ok(())
    })?;
    let (best_val_accuracy, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        params,
        best_epoch,
        best_val_accuracy,
        final_val_accuracy: final_acc,
        log,
    })
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    pub params: TinyViTParams,
    pub before_accuracy: f64,
    pub after_accuracy: f64,
    /// Finetuning lowered validation accuracy too much; `params` is the input.
    pub kept_original: bool,
    pub log: MetricsLog,
}

/// Continues training with the drop disabled at a constant `finetune_lr`.
pub fn finetune_align(params: &TinyViTParams, model: &TinyViTConfig, cfg: &TrainConfig, train_set: &Dataset, val_set: &Dataset, run_id: &str) -> Result<FinetuneOutcome> {
    let none = DropConfig {
        seed: cfg.drop.seed,
        ..DropConfig::none()
    };
    let mut log = MetricsLog::new(run_id, cfg.seed, &none);
    if cfg.finetune_epochs == 0 {
        return Ok(FinetuneOutcome {
            params: params.clone(),
            before_accuracy: f64::NAN,
            after_accuracy: f64::NAN,
            kept_original: false,
            log,
        });
    }
    model.validate()?;
    cfg.validate()?;
    check_data(model, train_set)?;
    check_data(model, val_set)?;
    let before = evaluate(params, model, val_set)?.accuracy;
    let mut tuned = params.clone();
    let lr = cfg.finetune_lr;
    let constant = move |_: usize, _: usize| lr;
    let phase = Phase {
        epochs: cfg.finetune_epochs,
        drop: &none,
        lr: &constant,
        weight_decay: cfg.weight_decay,
        rng: StreamRng::new(cfg.seed).fork(FINETUNE_TAG),
        batch_size: cfg.batch_size,
    };
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    run_phase(&mut tuned, model, train_set, phase, &mut log, |epoch, p, log| {
        let eval = evaluate(p, model, val_set)?;
        log.push(epoch, (epoch + 1) * steps_per_epoch - 1, "finetune_val_accuracy", eval.accuracy);
        Ok(())
    })?;
    let after = evaluate(&tuned, model, val_set)?.accuracy;
    let kept_original = after < before - FINETUNE_TOLERANCE;
    Ok(FinetuneOutcome {
        params: if kept_original { params.clone() } else { tuned },
        before_accuracy: before,
        after_accuracy: after,
        kept_original,
        log,
    })
}

/// Convenience constructor for a DropKey training config.
pub fn dropkey_config(ratio: f64, schedule: Schedule) -> DropConfig {
    DropConfig::new(crate::masks::DropVariant::DropKey, ratio, schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::data::separable_halves;
    use crate::masks::DropVariant;

    fn model() -> TinyViTConfig {
        TinyViTConfig {
            height: 8,
            width: 8,
            channels: 1,
            patch_size: 4,
            embed_dim: 16,
            heads: 2,
            depth: 2,
            mlp_ratio: 2,
            num_classes: 2,
        }
    }

    fn quick(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 10,
            batch_size: 20,
            lr: 3e-3,
            warmup_steps: 5,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn schedule_warms_up_then_decays() {
        let cfg = TrainConfig {
            lr: 1.0,
            warmup_steps: 4,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.lr_at(0, 20), 0.25);
        assert_eq!(cfg.lr_at(3, 20), 1.0);
        assert_eq!(cfg.lr_at(4, 20), 1.0);
        assert!((cfg.lr_at(12, 20) - 0.5).abs() < 1e-12);
        assert!(cfg.lr_at(19, 20) < 0.01);
    }

    #[test]
    fn validation_rules() {
        assert!(TrainConfig { epochs: 0, ..quick(0) }.validate().is_err());
        assert!(TrainConfig {
            finetune_lr: 0.0,
            ..quick(0)
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            finetune_lr: 0.0,
            finetune_epochs: 0,
            ..quick(0)
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn learns_separable_halves() {
        let data = separable_halves(8, 200, 1).unwrap();
        let out = train(&model(), &quick(1), &data, &data, "t").unwrap();
        assert!(out.best_val_accuracy >= 0.95, "{}", out.best_val_accuracy);
        assert_eq!(out.log.series("train_loss").len(), 100);
        assert!(evaluate(&out.params, &model(), &data).unwrap().accuracy >= 0.95);
    }

    #[test]
    fn runs_are_reproducible_and_inactive_drop_is_identity() {
        let data = separable_halves(8, 40, 2).unwrap();
        let cfg = TrainConfig { epochs: 2, ..quick(4) };
        let a = train(&model(), &cfg, &data, &data, "a").unwrap();
        let b = train(&model(), &cfg, &data, &data, "a").unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.params, b.params);
        let zero = TrainConfig {
            drop: DropConfig::new(DropVariant::DropKey, 0.0, Schedule::Constant),
            ..cfg.clone()
        };
        let c = train(&model(), &zero, &data, &data, "a").unwrap();
        assert_eq!(a.log.series("train_loss"), c.log.series("train_loss"));
        assert_eq!(a.params, c.params);
        let keyed = TrainConfig {
            drop: dropkey_config(0.3, Schedule::Constant),
            ..cfg
        };
        let d = train(&model(), &keyed, &data, &data, "a").unwrap();
        assert_ne!(a.log.series("train_loss"), d.log.series("train_loss"));
    }

    #[test]
    fn empty_data_is_rejected() {
        let data = separable_halves(8, 0, 0).unwrap();
        assert!(matches!(train(&model(), &quick(0), &data, &data, "e"), Err(Error::EmptyDataset)));
    }

    #[test]
    fn zero_finetune_epochs_is_identity() {
        let params = init_params(&model(), 3).unwrap();
        let data = separable_halves(8, 10, 0).unwrap();
        let cfg = TrainConfig {
            finetune_epochs: 0,
            ..quick(0)
        };
        let out = finetune_align(&params, &model(), &cfg, &data, &data, "f").unwrap();
        assert_eq!(out.params, params);
        assert!(!out.kept_original);
    }

    #[test]
    fn finetune_keeps_shapes() {
        let params = init_params(&model(), 3).unwrap();
        let data = separable_halves(8, 20, 0).unwrap();
        let cfg = TrainConfig {
            finetune_epochs: 1,
            finetune_lr: 1e-3,
            ..quick(0)
        };
        let out = finetune_align(&params, &model(), &cfg, &data, &data, "f").unwrap();
        for ((n1, a), (n2, b)) in out.params.named().iter().zip(params.named()) {
            assert_eq!(n1, &n2);
            assert_eq!(a.shape(), b.shape());
        }
        assert!(out.after_accuracy >= out.before_accuracy - FINETUNE_TOLERANCE || out.kept_original);
    }
}
