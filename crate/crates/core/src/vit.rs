//! A small vision transformer: patch embedding, class token, learned
//! positional embeddings, pre-norm blocks and a linear head on the class token.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attention::{layer_drop, multi_head_tape, AttentionConfig, AttentionDrop, AttentionParams, AttentionVars, Mode};
use crate::cli::checkpoint::{Checkpoint, CheckpointError};
use crate::masks::{layer_ratio, sample_random_mask, DropConfig, KeyLayout, Structure};
use crate::numerics::{ParamId, Tape, Tensor, Var};
use crate::rng::StreamRng;
use crate::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-6;
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TinyViTConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub depth: usize,
    pub mlp_ratio: usize,
    pub num_classes: usize,
}

impl Default for TinyViTConfig {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            channels: 1,
            patch_size: 4,
            embed_dim: 64,
            heads: 4,
            depth: 4,
            mlp_ratio: 2,
            num_classes: 10,
        }
    }
}

impl TinyViTConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("height", self.height),
            ("width", self.width),
            ("channels", self.channels),
            ("patch_size", self.patch_size),
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("depth", self.depth),
            ("mlp_ratio", self.mlp_ratio),
            ("num_classes", self.num_classes),
        ];
        if let Some((field, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(field, "must be positive"));
        }
        if !self.height.is_multiple_of(self.patch_size) || !self.width.is_multiple_of(self.patch_size) {
            return Err(Error::NotDivisible {
                height: self.height,
                width: self.width,
                patch: self.patch_size,
            });
        }
        AttentionConfig::new(self.embed_dim, self.heads)?;
        Ok(())
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.height / self.patch_size, self.width / self.patch_size)
    }

    pub fn num_patches(&self) -> usize {
        let (h, w) = self.grid();
        h * w
    }

    /// Patches plus the class token.
    pub fn num_tokens(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn hidden_dim(&self) -> usize {
        self.embed_dim * self.mlp_ratio
    }

    pub fn layout(&self) -> KeyLayout {
        let (n_h, n_w) = self.grid();
        KeyLayout {
            class_tokens: 1,
            n_h,
            n_w,
        }
    }

    pub fn attention(&self) -> Result<AttentionConfig> {
        AttentionConfig::new(self.embed_dim, self.heads)
    }

    /// Trainable scalar count.
    pub fn param_count(&self) -> usize {
        let c = self.embed_dim;
        let hidden = self.hidden_dim();
        let embed = self.patch_dim() * c + c + c + self.num_tokens() * c;
        let block = 2 * c + 4 * c * c + c + 2 * c + c * hidden + hidden + hidden * c + c;
        embed + self.depth * block + 2 * c + c * self.num_classes + self.num_classes
    }

    pub fn image_len(&self) -> usize {
        self.height * self.width * self.channels
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub ln1_gamma: Tensor,
    pub ln1_beta: Tensor,
    pub attn: AttentionParams,
    pub ln2_gamma: Tensor,
    pub ln2_beta: Tensor,
    pub mlp_w1: Tensor,
    pub mlp_b1: Tensor,
    pub mlp_w2: Tensor,
    pub mlp_b2: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TinyViTParams {
    /// `[patch_dim, embed_dim]`
    pub patch_weight: Tensor,
    pub patch_bias: Tensor,
    pub class_token: Tensor,
    /// `[num_tokens, embed_dim]`, row 0 for the class token.
    pub pos_embed: Tensor,
    pub blocks: Vec<BlockParams>,
    pub norm_gamma: Tensor,
    pub norm_beta: Tensor,
    pub head_weight: Tensor,
    pub head_bias: Tensor,
}

const BLOCK_FIELDS: [&str; 13] = [
    "ln1.gamma",
    "ln1.beta",
    "attn.wq",
    "attn.wk",
    "attn.wv",
    "attn.wo",
    "attn.bo",
    "ln2.gamma",
    "ln2.beta",
    "mlp.w1",
    "mlp.b1",
    "mlp.w2",
    "mlp.b2",
];

impl TinyViTParams {
    /// Tensors in a fixed order with stable names; the position is the
    /// [`ParamId`] used on the tape.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("patch.weight".into(), &self.patch_weight),
            ("patch.bias".into(), &self.patch_bias),
            ("class_token".into(), &self.class_token),
            ("pos_embed".into(), &self.pos_embed),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            let fields = [
                &b.ln1_gamma,
                &b.ln1_beta,
                &b.attn.wq,
                &b.attn.wk,
                &b.attn.wv,
                &b.attn.wo,
                &b.attn.bo,
                &b.ln2_gamma,
                &b.ln2_beta,
                &b.mlp_w1,
                &b.mlp_b1,
                &b.mlp_w2,
                &b.mlp_b2,
            ];
            for (name, t) in BLOCK_FIELDS.iter().zip(fields) {
                out.push((format!("blocks.{i}.{name}"), t));
            }
        }
        out.push(("norm.gamma".into(), &self.norm_gamma));
        out.push(("norm.beta".into(), &self.norm_beta));
        out.push(("head.weight".into(), &self.head_weight));
        out.push(("head.bias".into(), &self.head_bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.patch_weight,
            &mut self.patch_bias,
            &mut self.class_token,
            &mut self.pos_embed,
        ];
        for b in self.blocks.iter_mut() {
            out.extend([
                &mut b.ln1_gamma,
                &mut b.ln1_beta,
                &mut b.attn.wq,
                &mut b.attn.wk,
                &mut b.attn.wv,
                &mut b.attn.wo,
                &mut b.attn.bo,
                &mut b.ln2_gamma,
                &mut b.ln2_beta,
                &mut b.mlp_w1,
                &mut b.mlp_b1,
                &mut b.mlp_w2,
                &mut b.mlp_b2,
            ]);
        }
        out.extend([
            &mut self.norm_gamma,
            &mut self.norm_beta,
            &mut self.head_weight,
            &mut self.head_bias,
        ]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.is_finite())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.named().into_iter().map(|(n, t)| (n, t.clone())).collect())
    }

    /// Rebuilds parameters for `cfg` from a checkpoint, checking every name and shape.
    pub fn from_checkpoint(cfg: &TinyViTConfig, ckpt: &Checkpoint) -> Result<Self> {
        let mut params = zeros(cfg)?;
        let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
        for (name, slot) in names.iter().zip(params.tensors_mut()) {
            let t = ckpt.get(name).ok_or_else(|| CheckpointError::Missing(name.clone()))?;
            if t.shape() != slot.shape() {
                return Err(CheckpointError::ShapeMismatch {
                    name: name.clone(),
                    expected: slot.shape().to_vec(),
                    found: t.shape().to_vec(),
                }
                .into());
            }
            *slot = t.clone();
        }
        Ok(params)
    }
}

fn zeros(cfg: &TinyViTConfig) -> Result<TinyViTParams> {
    cfg.validate()?;
    let c = cfg.embed_dim;
    let hidden = cfg.hidden_dim();
    let m = |r: usize, k: usize| Tensor::zeros(&[r, k]);
    let block = || BlockParams {
        ln1_gamma: m(1, c),
        ln1_beta: m(1, c),
        attn: AttentionParams {
            wq: m(c, c),
            wk: m(c, c),
            wv: m(c, c),
            wo: m(c, c),
            bo: m(1, c),
        },
        ln2_gamma: m(1, c),
        ln2_beta: m(1, c),
        mlp_w1: m(c, hidden),
        mlp_b1: m(1, hidden),
        mlp_w2: m(hidden, c),
        mlp_b2: m(1, c),
    };
    Ok(TinyViTParams {
        patch_weight: m(cfg.patch_dim(), c),
        patch_bias: m(1, c),
        class_token: m(1, c),
        pos_embed: m(cfg.num_tokens(), c),
        blocks: (0..cfg.depth).map(|_| block()).collect(),
        norm_gamma: m(1, c),
        norm_beta: m(1, c),
        head_weight: m(c, cfg.num_classes),
        head_bias: m(1, cfg.num_classes),
    })
}

/// Normal with standard deviation `std`, redrawn outside two standard deviations.
fn trunc_normal(t: &mut Tensor, std: f64, rng: &mut StreamRng) {
    for v in t.data_mut() {
        *v = loop {
            let x: f64 = StandardNormal.sample(rng);
            if x.abs() <= 2.0 {
                break x * std;
            }
        };
    }
}

/// Embeddings and projection matrices drawn from a truncated normal, biases
/// and layer-norm shifts zero, layer-norm scales one.
pub fn init_params(cfg: &TinyViTConfig, seed: u64) -> Result<TinyViTParams> {
    let mut params = zeros(cfg)?;
    let named: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    let root = StreamRng::new(seed);
    for (i, (name, t)) in named.iter().zip(params.tensors_mut()).enumerate() {
        if name.ends_with("gamma") {
            t.data_mut().fill(1.0);
        } else if !["bias", "beta", ".bo", ".b1", ".b2"].iter().any(|suffix| name.ends_with(suffix)) {
            trunc_normal(t, INIT_STD, &mut root.fork(i as u64));
        }
    }
    Ok(params)
}

/// Splits an `h × w × c` image (row-major, channels last) into row-major
/// patches of `patch_size² · c` values each.
pub fn patchify(image: &Tensor, patch_size: usize) -> Result<Tensor> {
    let (h, w, c) = image_dims(image)?;
    if patch_size == 0 || h % patch_size != 0 || w % patch_size != 0 {
        return Err(Error::NotDivisible {
            height: h,
            width: w,
            patch: patch_size,
        });
    }
    let (n_h, n_w) = (h / patch_size, w / patch_size);
    let p = patch_size;
    let data = image.data();
    let mut out = Vec::with_capacity(data.len());
    for ph in 0..n_h {
        for pw in 0..n_w {
            for y in 0..p {
                let start = ((ph * p + y) * w + pw * p) * c;
                out.extend_from_slice(&data[start..start + p * c]);
            }
        }
    }
    Ok(Tensor::matrix(n_h * n_w, p * p * c, out)?)
}

/// Inverse of [`patchify`].
pub fn unpatchify(patches: &Tensor, patch_size: usize, height: usize, width: usize, channels: usize) -> Result<Tensor> {
    let p = patch_size;
    if p == 0 || !height.is_multiple_of(p) || !width.is_multiple_of(p) {
        return Err(Error::NotDivisible { height, width, patch: p });
    }
    let (n_h, n_w) = (height / p, width / p);
    if patches.rank() != 2 || patches.rows() != n_h * n_w || patches.cols() != p * p * channels {
        return Err(Error::invalid("patches", format!("shape {:?} does not fit the image", patches.shape())));
    }
    let mut out = vec![0.0; height * width * channels];
    for ph in 0..n_h {
        for pw in 0..n_w {
            let row = patches.row(ph * n_w + pw);
            for y in 0..p {
                let start = ((ph * p + y) * width + pw * p) * channels;
                out[start..start + p * channels].copy_from_slice(&row[y * p * channels..(y + 1) * p * channels]);
            }
        }
    }
    Ok(Tensor::new(vec![height, width, channels], out)?)
}

fn image_dims(image: &Tensor) -> Result<(usize, usize, usize)> {
    match *image.shape() {
        [h, w, c] => Ok((h, w, c)),
        [h, w] => Ok((h, w, 1)),
        _ => Err(Error::invalid("image", format!("expected h x w x c, got {:?}", image.shape()))),
    }
}

/// How attention weights are formed at every layer.
#[derive(Clone, Debug, PartialEq)]
pub enum AttentionMode {
    /// Configured drop in training, nothing at inference.
    Standard { drop: DropConfig, mode: Mode },
    /// Average of `samples` DropKey softmax matrices per layer, with the
    /// layer ratio from `drop`.
    MonteCarlo { drop: DropConfig, samples: usize },
}

impl AttentionMode {
    pub fn infer() -> Self {
        AttentionMode::Standard {
            drop: DropConfig::none(),
            mode: Mode::Infer,
        }
    }

    pub fn train(drop: &DropConfig) -> Self {
        AttentionMode::Standard {
            drop: drop.clone(),
            mode: Mode::Train,
        }
    }
}

/// Tape handles for every parameter, indexed like [`TinyViTParams::named`].
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: Vec<Var>,
    depth: usize,
}

impl ParamVars {
    /// Registers every tensor as a differentiable parameter.
    pub fn register(tape: &mut Tape, params: &TinyViTParams) -> Result<Self> {
        let vars = params
            .named()
            .into_iter()
            .enumerate()
            .map(|(i, (_, t))| tape.param(ParamId(i), t.clone()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self {
            vars,
            depth: params.blocks.len(),
        })
    }

    /// Records every tensor as a constant.
    pub fn constants(tape: &mut Tape, params: &TinyViTParams) -> Self {
        let vars = params.named().into_iter().map(|(_, t)| tape.constant(t.clone())).collect();
        Self {
            vars,
            depth: params.blocks.len(),
        }
    }

    /// Wraps vars already on the tape, ordered like [`TinyViTParams::named`].
    pub fn from_vars(vars: Vec<Var>, depth: usize) -> Self {
        Self { vars, depth }
    }

    fn block(&self, i: usize) -> &[Var] {
        &self.vars[4 + 13 * i..4 + 13 * (i + 1)]
    }

    fn tail(&self) -> &[Var] {
        &self.vars[4 + 13 * self.depth..]
    }
}

/// Per-image forward result on the tape.
pub struct ImageForward {
    /// `[1, num_classes]`
    pub logits: Var,
    /// Per layer, per head `[n, n]` weights.
    pub attention: Vec<Vec<Var>>,
}

/// Records one image. `keep_patches`, when given, lists the patch indices
/// that survive occlusion; the others are removed before the first block and
/// the survivors keep their positional embeddings.
pub fn record_image(
    tape: &mut Tape,
    vars: &ParamVars,
    cfg: &TinyViTConfig,
    patches: &Tensor,
    keep_patches: Option<&[usize]>,
    attention: &AttentionMode,
    rng: &StreamRng,
) -> Result<ImageForward> {
    let attn_cfg = cfg.attention()?;
    let v = &vars.vars;
    let x = tape.constant(patches.clone());
    let emb = tape.matmul(x, v[0])?;
    let emb = tape.add_row(emb, v[1])?;
    let tokens = tape.concat_rows(&[v[2], emb])?;
    let mut x = tape.add(tokens, v[3])?;
    let mut layout = cfg.layout();
    if let Some(keep) = keep_patches {
        if let Some(&bad) = keep.iter().find(|&&k| k >= cfg.num_patches()) {
            return Err(Error::invalid("keep_patches", format!("patch {bad} out of range")));
        }
        let rows: Vec<usize> = std::iter::once(0).chain(keep.iter().map(|k| k + 1)).collect();
        x = tape.gather_rows(x, &rows)?;
        if keep.len() != cfg.num_patches() {
            // An occluded sequence has no grid; only unstructured masks apply.
            layout = KeyLayout {
                class_tokens: 1,
                n_h: 1,
                n_w: keep.len(),
            };
        }
    }
    let n = tape.value(x).rows();
    let mut weights = Vec::with_capacity(cfg.depth);
    for layer in 0..cfg.depth {
        let b = vars.block(layer);
        let layer_rng = rng.fork(layer as u64);
        let plan = match attention {
            AttentionMode::Standard { drop, mode } => {
                if layout != cfg.layout() && *mode == Mode::Train && !drop.is_inactive() && drop.structure != Structure::Random {
                    return Err(Error::invalid("structure", "structured masks need the full patch grid"));
                }
                layer_drop(drop, layer, cfg.depth, cfg.heads, n, layout, &layer_rng, *mode)?
            }
            AttentionMode::MonteCarlo { drop, samples } => monte_carlo_plan(drop, layer, cfg, n, *samples, &layer_rng)?,
        };
        let h = tape.layer_norm(x, b[0], b[1], LAYER_NORM_EPS)?;
        let attn_vars = AttentionVars {
            wq: b[2],
            wk: b[3],
            wv: b[4],
            wo: b[5],
            bo: b[6],
        };
        let (a, w) = multi_head_tape(tape, h, &attn_vars, &attn_cfg, &plan)?;
        x = tape.add(x, a)?;
        let h = tape.layer_norm(x, b[7], b[8], LAYER_NORM_EPS)?;
        let h = tape.matmul(h, b[9])?;
        let h = tape.add_row(h, b[10])?;
        let h = tape.gelu(h);
        let h = tape.matmul(h, b[11])?;
        let h = tape.add_row(h, b[12])?;
        x = tape.add(x, h)?;
        weights.push(w);
    }
    let t = vars.tail();
    let cls = tape.gather_rows(x, &[0])?;
    let cls = tape.layer_norm(cls, t[0], t[1], LAYER_NORM_EPS)?;
    let logits = tape.matmul(cls, t[2])?;
    let logits = tape.add_row(logits, t[3])?;
    Ok(ImageForward {
        logits,
        attention: weights,
    })
}

fn monte_carlo_plan(drop: &DropConfig, layer: usize, cfg: &TinyViTConfig, n: usize, samples: usize, rng: &StreamRng) -> Result<AttentionDrop> {
    if samples == 0 {
        return Err(Error::invalid("mc_samples", "must be at least 1"));
    }
    let ratio = layer_ratio(drop, layer, cfg.depth);
    if ratio == 0.0 {
        return Ok(AttentionDrop::Plain);
    }
    let samples = (0..cfg.heads)
        .map(|h| {
            let mut head_rng = rng.fork(h as u64);
            (0..samples)
                .map(|_| sample_random_mask(n, n, ratio, &mut head_rng))
                .collect::<std::result::Result<Vec<_>, _>>()
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(AttentionDrop::MonteCarlo { samples })
}

/// Logits and attention weights for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    /// `[batch, num_classes]`
    pub logits: Tensor,
    /// `attention[image][layer]` is `[heads, n, n]`.
    pub attention: Vec<Vec<Tensor>>,
}

/// Value-only forward over a batch of images. Image `i` draws its masks
/// from `rng.fork(i)`.
pub fn forward(params: &TinyViTParams, cfg: &TinyViTConfig, images: &[Tensor], attention: &AttentionMode, rng: &StreamRng) -> Result<ForwardOutput> {
    forward_with_keep(params, cfg, images, None, attention, rng)
}

/// [`forward`] with optional per-image surviving patch lists.
pub fn forward_with_keep(
    params: &TinyViTParams,
    cfg: &TinyViTConfig,
    images: &[Tensor],
    keep: Option<&[Vec<usize>]>,
    attention: &AttentionMode,
    rng: &StreamRng,
) -> Result<ForwardOutput> {
    let mut logits = Vec::with_capacity(images.len() * cfg.num_classes);
    let mut all_weights = Vec::with_capacity(images.len());
    for (i, image) in images.iter().enumerate() {
        let mut tape = Tape::new();
        let vars = ParamVars::constants(&mut tape, params);
        let patches = patchify(image, cfg.patch_size)?;
        let keep_i = keep.map(|k| k[i].as_slice());
        let out = record_image(&mut tape, &vars, cfg, &patches, keep_i, attention, &rng.fork(i as u64))?;
        logits.extend_from_slice(tape.value(out.logits).data());
        let layers = out
            .attention
            .iter()
            .map(|heads| crate::attention::stack_heads(&tape, heads))
            .collect::<Result<Vec<_>>>()?;
        all_weights.push(layers);
    }
    Ok(ForwardOutput {
        logits: Tensor::matrix(images.len(), cfg.num_classes, logits)?,
        attention: all_weights,
    })
}

/// Records a batch and its mean cross-entropy; returns the loss and logits.
pub fn record_batch_loss(
    tape: &mut Tape,
    vars: &ParamVars,
    cfg: &TinyViTConfig,
    images: &[Tensor],
    labels: &[usize],
    attention: &AttentionMode,
    rng: &StreamRng,
) -> Result<(Var, Var)> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rows = Vec::with_capacity(images.len());
    for (i, image) in images.iter().enumerate() {
        let patches = patchify(image, cfg.patch_size)?;
        rows.push(record_image(tape, vars, cfg, &patches, None, attention, &rng.fork(i as u64))?.logits);
    }
    let logits = tape.concat_rows(&rows)?;
    let loss = tape.cross_entropy(logits, labels)?;
    Ok((loss, logits))
}
