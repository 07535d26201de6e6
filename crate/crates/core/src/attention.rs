//! Multi-head scaled dot-product attention with four drop variants.
//!
//! All variants share one tape-recorded implementation ([`attend`]); the
//! tensor-level functions below run it on a scratch tape and return values
//! only. Masks enter the tape as constants, so gradients treat them as fixed.

use crate::masks::{layer_ratio, sample_mask, DropConfig, DropMask, DropVariant, KeyLayout};
use crate::numerics::{NumericsError, Tape, Tensor, Var};
use crate::rng::StreamRng;
use crate::{Error, Result};

/// Training applies the configured drop; inference never does.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttentionConfig {
    pub embed_dim: usize,
    pub heads: usize,
    /// Logit divisor, `sqrt(embed_dim / heads)`.
    pub scale: f64,
}

impl AttentionConfig {
    pub fn new(embed_dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || embed_dim == 0 || !embed_dim.is_multiple_of(heads) {
            return Err(Error::invalid(
                "heads",
                format!("embedding dimension {embed_dim} is not divisible by {heads} heads"),
            ));
        }
        Ok(Self {
            embed_dim,
            heads,
            scale: ((embed_dim / heads) as f64).sqrt(),
        })
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }
}

/// Attention result with the post-softmax weights of every head.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionOutput {
    /// `[n_q, embed_dim]`
    pub output: Tensor,
    /// `[heads, n_q, n_k]`
    pub weights: Tensor,
}

/// What happens to each head's attention weights.
#[derive(Clone, Debug)]
pub enum AttentionDrop {
    Plain,
    /// One mask per head.
    Masked {
        variant: DropVariant,
        ratio: f64,
        masks: Vec<DropMask>,
    },
    /// Per head, several DropKey masks whose softmax weights are averaged.
    MonteCarlo { samples: Vec<Vec<DropMask>> },
}

fn map_degenerate(head: usize) -> impl Fn(NumericsError) -> Error {
    move |e| match e {
        NumericsError::DegenerateRow { row } => Error::AllKeysDropped { head, row },
        other => other.into(),
    }
}

fn check_mask(mask: &DropMask, n_q: usize, n_k: usize) -> Result<()> {
    if mask.n_q() != n_q || mask.n_k() != n_k {
        return Err(NumericsError::ShapeMismatch {
            op: "attention mask",
            left: vec![mask.n_q(), mask.n_k()],
            right: vec![n_q, n_k],
        }
        .into());
    }
    Ok(())
}

/// Records attention over already-projected `q` (`[n_q, c]`), `k`, `v`
/// (`[n_k, c]`). Returns the concatenated head outputs and each head's weights.
pub fn attend(
    tape: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    cfg: &AttentionConfig,
    drop: &AttentionDrop,
) -> Result<(Var, Vec<Var>)> {
    let (n_q, c) = (tape.value(q).rows(), tape.value(q).cols());
    let n_k = tape.value(k).rows();
    if c != cfg.embed_dim || tape.value(k).cols() != c || tape.value(v).cols() != c || tape.value(v).rows() != n_k {
        return Err(NumericsError::ShapeMismatch {
            op: "attention",
            left: tape.value(q).shape().to_vec(),
            right: tape.value(k).shape().to_vec(),
        }
        .into());
    }
    match drop {
        AttentionDrop::Plain => {}
        AttentionDrop::Masked { masks, .. } => {
            if masks.len() != cfg.heads {
                return Err(Error::invalid("masks", format!("expected {} head masks, got {}", cfg.heads, masks.len())));
            }
            for m in masks {
                check_mask(m, n_q, n_k)?;
            }
        }
        AttentionDrop::MonteCarlo { samples } => {
            if samples.len() != cfg.heads || samples.iter().any(Vec::is_empty) {
                return Err(Error::invalid("masks", "need at least one sample per head"));
            }
            for m in samples.iter().flatten() {
                check_mask(m, n_q, n_k)?;
            }
        }
    }

    let hd = cfg.head_dim();
    let qs = tape.scale(q, 1.0 / cfg.scale);
    let mut outputs = Vec::with_capacity(cfg.heads);
    let mut weights = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = tape.slice_cols(qs, h * hd, hd)?;
        let kh = tape.slice_cols(k, h * hd, hd)?;
        let vh = tape.slice_cols(v, h * hd, hd)?;
        let logits = tape.matmul_nt(qh, kh)?;
        let w = match drop {
            AttentionDrop::Plain => tape.softmax_rows(logits)?,
            AttentionDrop::Masked { variant, ratio, masks } => {
                head_weights(tape, logits, *variant, *ratio, &masks[h]).map_err(map_degenerate(h))?
            }
            AttentionDrop::MonteCarlo { samples } => {
                let draws = &samples[h];
                let mut total: Option<Var> = None;
                for m in draws {
                    let masked = tape.add_const(logits, &m.logit_bias())?;
                    let s = tape.softmax_rows(masked).map_err(map_degenerate(h))?;
                    total = Some(match total {
                        None => s,
                        Some(t) => tape.add(t, s)?,
                    });
                }
                let total = total.expect("at least one sample");
                tape.scale(total, 1.0 / draws.len() as f64)
            }
        };
        outputs.push(tape.matmul(w, vh)?);
        weights.push(w);
    }
    let out = tape.concat_cols(&outputs)?;
    Ok((out, weights))
}

fn head_weights(
    tape: &mut Tape,
    logits: Var,
    variant: DropVariant,
    ratio: f64,
    mask: &DropMask,
) -> std::result::Result<Var, NumericsError> {
    if variant == DropVariant::None || mask.is_all_kept() {
        let s = tape.softmax_rows(logits)?;
        if variant == DropVariant::VanillaDropout && ratio > 0.0 {
            return tape.mul_const(s, Tensor::full(tape.value(s).shape(), 1.0 / (1.0 - ratio)));
        }
        return Ok(s);
    }
    match variant {
        DropVariant::DropKey => {
            let masked = tape.add_const(logits, &mask.logit_bias())?;
            tape.softmax_rows(masked)
        }
        DropVariant::DropAttentionRenorm => {
            let s = tape.softmax_rows(logits)?;
            let kept = tape.mul_const(s, mask.keep_tensor())?;
            tape.normalize_rows(kept)
        }
        DropVariant::VanillaDropout => {
            let s = tape.softmax_rows(logits)?;
            let factor = mask.keep_tensor().scale(1.0 / (1.0 - ratio));
            tape.mul_const(s, factor)
        }
        DropVariant::None => unreachable!(),
    }
}

fn run_detached(q: &Tensor, k: &Tensor, v: &Tensor, cfg: &AttentionConfig, drop: &AttentionDrop) -> Result<AttentionOutput> {
    let mut tape = Tape::new();
    let (qv, kv, vv) = (tape.constant(q.clone()), tape.constant(k.clone()), tape.constant(v.clone()));
    let (out, weights) = attend(&mut tape, qv, kv, vv, cfg, drop)?;
    Ok(AttentionOutput {
        output: tape.value(out).clone(),
        weights: stack_heads(&tape, &weights)?,
    })
}

pub(crate) fn stack_heads(tape: &Tape, weights: &[Var]) -> Result<Tensor> {
    let first = tape.value(weights[0]);
    let (n_q, n_k) = (first.rows(), first.cols());
    let data = weights.iter().flat_map(|&w| tape.value(w).data().iter().copied()).collect();
    Ok(Tensor::new(vec![weights.len(), n_q, n_k], data)?)
}

pub fn attention_plain(q: &Tensor, k: &Tensor, v: &Tensor, cfg: &AttentionConfig) -> Result<AttentionOutput> {
    run_detached(q, k, v, cfg, &AttentionDrop::Plain)
}

/// Dropped keys get the sentinel added to their logits before the softmax.
pub fn attention_dropkey(q: &Tensor, k: &Tensor, v: &Tensor, cfg: &AttentionConfig, masks: &[DropMask]) -> Result<AttentionOutput> {
    let drop = AttentionDrop::Masked {
        variant: DropVariant::DropKey,
        ratio: 0.0,
        masks: masks.to_vec(),
    };
    run_detached(q, k, v, cfg, &drop)
}

/// Softmax, zero the dropped weights, re-normalize each row.
pub fn attention_droprenorm(q: &Tensor, k: &Tensor, v: &Tensor, cfg: &AttentionConfig, masks: &[DropMask]) -> Result<AttentionOutput> {
    let drop = AttentionDrop::Masked {
        variant: DropVariant::DropAttentionRenorm,
        ratio: 0.0,
        masks: masks.to_vec(),
    };
    run_detached(q, k, v, cfg, &drop)
}

/// Softmax, zero the dropped weights, scale survivors by `1/(1-ratio)`.
/// Rows do not sum to one in general.
pub fn attention_vanilla_dropout(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    cfg: &AttentionConfig,
    masks: &[DropMask],
    ratio: f64,
) -> Result<AttentionOutput> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(crate::masks::MaskError::InvalidRatio(ratio).into());
    }
    let drop = AttentionDrop::Masked {
        variant: DropVariant::VanillaDropout,
        ratio,
        masks: masks.to_vec(),
    };
    run_detached(q, k, v, cfg, &drop)
}

/// Projection weights of one attention layer. Inputs are multiplied on the
/// right: `q = x · wq`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
}

/// Tape handles for [`AttentionParams`].
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub bo: Var,
}

/// Builds the drop applied at one layer. Each head draws from its own fork
/// of `rng`.
#[allow(clippy::too_many_arguments)]
pub fn layer_drop(
    drop: &DropConfig,
    layer: usize,
    num_layers: usize,
    heads: usize,
    n_q: usize,
    layout: KeyLayout,
    rng: &StreamRng,
    mode: Mode,
) -> Result<AttentionDrop> {
    if mode == Mode::Infer || drop.is_inactive() {
        return Ok(AttentionDrop::Plain);
    }
    let ratio = layer_ratio(drop, layer, num_layers);
    if ratio == 0.0 {
        return Ok(AttentionDrop::Plain);
    }
    let masks = (0..heads)
        .map(|h| sample_mask(drop.structure, drop.window, ratio, n_q, layout, &mut rng.fork(h as u64)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(AttentionDrop::Masked {
        variant: drop.variant,
        ratio,
        masks,
    })
}

/// Records a full attention layer: projections, the drop, head concat, output projection.
pub fn multi_head_tape(tape: &mut Tape, x: Var, params: &AttentionVars, cfg: &AttentionConfig, drop: &AttentionDrop) -> Result<(Var, Vec<Var>)> {
    let q = tape.matmul(x, params.wq)?;
    let k = tape.matmul(x, params.wk)?;
    let v = tape.matmul(x, params.wv)?;
    let (heads, weights) = attend(tape, q, k, v, cfg, drop)?;
    let projected = tape.matmul(heads, params.wo)?;
    let out = tape.add_row(projected, params.bo)?;
    Ok((out, weights))
}

/// One attention layer on token matrix `x` (`[n, embed_dim]`); keys follow `layout`.
#[allow(clippy::too_many_arguments)]
pub fn multi_head_forward(
    x: &Tensor,
    params: &AttentionParams,
    cfg: &AttentionConfig,
    drop: &DropConfig,
    layer: usize,
    num_layers: usize,
    layout: KeyLayout,
    rng: &StreamRng,
    mode: Mode,
) -> Result<AttentionOutput> {
    if x.rows() != layout.n_keys() {
        return Err(Error::invalid("layout", format!("{} tokens for {} keys", x.rows(), layout.n_keys())));
    }
    let plan = layer_drop(drop, layer, num_layers, cfg.heads, x.rows(), layout, rng, mode)?;
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let vars = AttentionVars {
        wq: tape.constant(params.wq.clone()),
        wk: tape.constant(params.wk.clone()),
        wv: tape.constant(params.wv.clone()),
        wo: tape.constant(params.wo.clone()),
        bo: tape.constant(params.bo.clone()),
    };
    let (out, weights) = multi_head_tape(&mut tape, xv, &vars, cfg, &plan)?;
    Ok(AttentionOutput {
        output: tape.value(out).clone(),
        weights: stack_heads(&tape, &weights)?,
    })
}
