use rand::seq::index::sample;
use serde::Serialize;

use super::data::Dataset;
use crate::masks::DropConfig;
use crate::numerics::Tensor;
use crate::rng::StreamRng;
use crate::theory::entropy;
use crate::vit::{forward, forward_with_keep, AttentionMode, ForwardOutput, TinyViTConfig, TinyViTParams};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub accuracy: f64,
    pub loss: f64,
}

/// Index of the largest logit, the first one on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Accuracy and mean cross-entropy of `logits` against `labels`.
pub fn score(logits: &Tensor, labels: &[usize]) -> EvalResult {
    let mut correct = 0;
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        if argmax(row) == label {
            correct += 1;
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
    }
    let n = labels.len().max(1) as f64;
    EvalResult {
        accuracy: correct as f64 / n,
        loss: loss / n,
    }
}

/// Deterministic inference accuracy.
pub fn evaluate(params: &TinyViTParams, model: &TinyViTConfig, data: &Dataset) -> Result<EvalResult> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let out = forward(params, model, &data.images, &AttentionMode::infer(), &StreamRng::new(0))?;
    Ok(score(&out.logits, &data.labels))
}

/// Inference where every attention layer averages `k` DropKey softmax
/// matrices drawn at that layer's ratio under `drop`.
pub fn mc_inference(params: &TinyViTParams, model: &TinyViTConfig, images: &[Tensor], drop: &DropConfig, k: usize, rng: &StreamRng) -> Result<ForwardOutput> {
    if k == 0 {
        return Err(Error::invalid("mc_k", "must be at least 1"));
    }
    let mode = AttentionMode::MonteCarlo {
        drop: drop.clone(),
        samples: k,
    };
    forward(params, model, images, &mode, rng)
}

/// Per layer, the natural-log entropy of the class-token attention row,
/// averaged over heads and then over images.
pub fn class_token_entropy(params: &TinyViTParams, model: &TinyViTConfig, images: &[Tensor]) -> Result<Vec<f64>> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let out = forward(params, model, images, &AttentionMode::infer(), &StreamRng::new(0))?;
    Ok(attention_entropy(&out.attention))
}

/// Class-token entropy from stored weights (`[image][layer]`, each `[heads, n, n]`).
pub fn attention_entropy(attention: &[Vec<Tensor>]) -> Vec<f64> {
    let layers = attention.first().map_or(0, Vec::len);
    let mut totals = vec![0.0; layers];
    for per_image in attention {
        for (layer, w) in per_image.iter().enumerate() {
            let (heads, n) = (w.shape()[0], w.shape()[2]);
            let head_mean: f64 = (0..heads)
                .map(|h| {
                    let start = h * w.shape()[1] * n;
                    entropy(&w.data()[start..start + n])
                })
                .sum::<f64>()
                / heads as f64;
            totals[layer] += head_mean;
        }
    }
    totals.iter().map(|t| t / attention.len() as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OcclusionRow {
    pub ratio: f64,
    pub removed: usize,
    pub mean_accuracy: f64,
    pub run_accuracies: Vec<f64>,
}

/// Patch indices that survive removing `round(ratio · n)` of `n` patches.
pub fn occlusion_keep(n: usize, ratio: f64, rng: &mut StreamRng) -> Vec<usize> {
    let removed = (ratio * n as f64).round() as usize;
    let mut keep = sample(rng, n, n - removed.min(n)).into_vec();
    keep.sort_unstable();
    keep
}

/// Accuracy when a random fraction of patch tokens is deleted before the
/// first block, averaged over `runs` random selections per ratio.
pub fn occlusion_eval(params: &TinyViTParams, model: &TinyViTConfig, data: &Dataset, ratios: &[f64], runs: usize, rng: &StreamRng) -> Result<Vec<OcclusionRow>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if runs == 0 {
        return Err(Error::invalid("runs", "must be at least 1"));
    }
    if let Some(bad) = ratios.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(Error::invalid("ratios", format!("{bad} is outside [0,1)")));
    }
    let n = model.num_patches();
    let mut rows = Vec::with_capacity(ratios.len());
    for (ri, &ratio) in ratios.iter().enumerate() {
        let removed = (ratio * n as f64).round() as usize;
        if removed == 0 {
            // nothing is removed, so every run is the standard accuracy
            let acc = evaluate(params, model, data)?.accuracy;
            rows.push(OcclusionRow {
                ratio,
                removed,
                mean_accuracy: acc,
                run_accuracies: vec![acc; runs],
            });
            continue;
        }
        let mut accs = Vec::with_capacity(runs);
        for run in 0..runs {
            let run_rng = rng.fork(ri as u64).fork(run as u64);
            let keep: Vec<Vec<usize>> = (0..data.len()).map(|i| occlusion_keep(n, ratio, &mut run_rng.fork(i as u64))).collect();
            let out = forward_with_keep(params, model, &data.images, Some(&keep), &AttentionMode::infer(), &StreamRng::new(0))?;
            accs.push(score(&out.logits, &data.labels).accuracy);
        }
        rows.push(OcclusionRow {
            ratio,
            removed,
            mean_accuracy: accs.iter().sum::<f64>() / runs as f64,
            run_accuracies: accs,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::data::{synthetic_shapes, ShapesConfig};
    use crate::masks::{DropVariant, Schedule};
    use crate::vit::init_params;

    fn model() -> TinyViTConfig {
        TinyViTConfig {
            height: 16,
            width: 16,
            channels: 1,
            patch_size: 4,
            embed_dim: 16,
            heads: 2,
            depth: 2,
            mlp_ratio: 2,
            num_classes: 4,
        }
    }

    fn spread(seed: u64) -> TinyViTParams {
        let mut p = init_params(&model(), seed).unwrap();
        let mut rng = StreamRng::new(seed + 99);
        for t in p.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += 0.4 * (rng.uniform() - 0.5));
        }
        p
    }

    fn data(count: usize) -> Dataset {
        synthetic_shapes(&ShapesConfig {
            count,
            ..ShapesConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn score_counts_hits() {
        let logits = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5]).unwrap();
        let r = score(&logits, &[0, 0, 0]);
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn entropy_extremes() {
        let n = 64;
        let uniform = Tensor::new(vec![1, 1, n], vec![1.0 / n as f64; n]).unwrap();
        assert!((attention_entropy(&[vec![uniform]])[0] - 4.15888).abs() < 1e-5);
        let mut one_hot = vec![0.0; n];
        one_hot[5] = 1.0;
        let one_hot = Tensor::new(vec![1, 1, n], one_hot).unwrap();
        assert_eq!(attention_entropy(&[vec![one_hot]])[0], 0.0);
    }

    #[test]
    fn entropy_is_bounded() {
        let d = data(4);
        let e = class_token_entropy(&spread(1), &model(), &d.images).unwrap();
        assert_eq!(e.len(), 2);
        let max = (model().num_tokens() as f64).ln();
        assert!(e.iter().all(|&x| (0.0..=max + 1e-12).contains(&x)));
    }

    #[test]
    fn monte_carlo_single_sample_without_drop_is_inference() {
        let d = data(3);
        let p = spread(2);
        let drop = DropConfig::new(DropVariant::DropKey, 0.0, Schedule::Constant);
        let mc = mc_inference(&p, &model(), &d.images, &drop, 1, &StreamRng::new(1)).unwrap();
        let plain = forward(&p, &model(), &d.images, &AttentionMode::infer(), &StreamRng::new(0)).unwrap();
        assert_eq!(mc, plain);
    }

    #[test]
    fn monte_carlo_rows_sum_to_one_and_variance_shrinks() {
        let d = data(2);
        let p = spread(3);
        let drop = DropConfig::new(DropVariant::DropKey, 0.3, Schedule::Constant);
        let spread_of = |k: usize| {
            let outs: Vec<Tensor> = (0..12)
                .map(|s| mc_inference(&p, &model(), &d.images, &drop, k, &StreamRng::new(s)).unwrap().logits)
                .collect();
            let n = outs.len() as f64;
            let len = outs[0].len();
            (0..len)
                .map(|i| {
                    let mean = outs.iter().map(|o| o.data()[i]).sum::<f64>() / n;
                    outs.iter().map(|o| (o.data()[i] - mean).powi(2)).sum::<f64>() / n
                })
                .sum::<f64>()
        };
        let out = mc_inference(&p, &model(), &d.images, &drop, 4, &StreamRng::new(0)).unwrap();
        for layer in out.attention.iter().flatten() {
            for row in layer.data().chunks(model().num_tokens()) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            }
        }
        assert!(spread_of(64) < spread_of(4));
    }

    #[test]
    fn occlusion_removes_rounded_count() {
        let mut rng = StreamRng::new(4);
        for (ratio, kept) in [(0.0, 16), (0.1, 14), (0.3, 11), (0.5, 8), (0.7, 5), (0.9, 2)] {
            let keep = occlusion_keep(16, ratio, &mut rng);
            assert_eq!(keep.len(), kept);
            assert!(keep.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn occlusion_table_is_reproducible() {
        let d = data(20);
        let p = spread(5);
        let ratios = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9];
        let a = occlusion_eval(&p, &model(), &d, &ratios, 2, &StreamRng::new(6)).unwrap();
        assert_eq!(a, occlusion_eval(&p, &model(), &d, &ratios, 2, &StreamRng::new(6)).unwrap());
        assert_eq!(a.len(), 6);
        assert_eq!(a[0].mean_accuracy.to_bits(), evaluate(&p, &model(), &d).unwrap().accuracy.to_bits());
        let five = occlusion_eval(&p, &model(), &d, &[0.0], 5, &StreamRng::new(6)).unwrap();
        assert_eq!(five[0].mean_accuracy.to_bits(), a[0].mean_accuracy.to_bits());
        assert!(occlusion_eval(&p, &model(), &d, &[1.0], 1, &StreamRng::new(0)).is_err());
    }
}
