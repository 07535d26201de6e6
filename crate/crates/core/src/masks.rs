//! Key-drop configuration, per-layer drop ratios, and mask sampling.
//!
//! A [`DropMask`] has one row per query and one column per key; `true` means
//! the key takes part in that query's softmax. Rows are drawn independently.
//! Structured masks (block, cross) act on the patch grid; the class-token key,
//! which has no grid position, is dropped independently at the layer ratio.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{Tensor, MASK_SENTINEL};
use crate::rng::StreamRng;

/// How many times an all-dropped row is redrawn before falling back to
/// keeping a single random key.
pub const MAX_ROW_RESAMPLES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("drop ratio {0} must be in [0,1)")]
    InvalidRatio(f64),
    #[error("window {window} must be between 1 and min({n_h}, {n_w})")]
    InvalidWindow { window: usize, n_h: usize, n_w: usize },
    #[error("seed ratio {0} is not below 1")]
    RatioOverflow(f64),
    #[error("{n_k} keys do not match a {n_h}x{n_w} grid with {class_tokens} class token(s)")]
    LayoutMismatch {
        n_k: usize,
        n_h: usize,
        n_w: usize,
        class_tokens: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropVariant {
    #[serde(rename = "none")]
    None,
    /// Post-softmax dropout with inverted `1/(1-d)` scaling.
    #[serde(rename = "dropout")]
    VanillaDropout,
    /// Post-softmax masking followed by explicit row re-normalization.
    #[serde(rename = "renorm")]
    DropAttentionRenorm,
    /// Sentinel added to dropped logits before the softmax.
    #[serde(rename = "dropkey")]
    DropKey,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    #[serde(rename = "const")]
    Constant,
    #[serde(rename = "up")]
    ScheduledUp,
    #[serde(rename = "down")]
    ScheduledDown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Structure {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "block")]
    Block,
    #[serde(rename = "cross")]
    Cross,
}

macro_rules! str_enum {
    ($ty:ident { $($name:literal => $variant:ident),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(format!(
                        "unknown {} '{}' (expected one of: {})",
                        stringify!($ty).to_lowercase(),
                        other,
                        [$($name),+].join(", ")
                    )),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name,)+ })
            }
        }
    };
}

str_enum!(DropVariant { "none" => None, "dropout" => VanillaDropout, "renorm" => DropAttentionRenorm, "dropkey" => DropKey });
str_enum!(Schedule { "const" => Constant, "up" => ScheduledUp, "down" => ScheduledDown });
str_enum!(Structure { "random" => Random, "block" => Block, "cross" => Cross });

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropConfig {
    pub variant: DropVariant,
    pub base_ratio: f64,
    pub schedule: Schedule,
    pub structure: Structure,
    pub window: usize,
    pub seed: u64,
}

impl Default for DropConfig {
    fn default() -> Self {
        Self::none()
    }
}

impl DropConfig {
    pub fn none() -> Self {
        Self {
            variant: DropVariant::None,
            base_ratio: 0.0,
            schedule: Schedule::Constant,
            structure: Structure::Random,
            window: 1,
            seed: 0,
        }
    }

    pub fn new(variant: DropVariant, base_ratio: f64, schedule: Schedule) -> Self {
        Self {
            variant,
            base_ratio,
            schedule,
            ..Self::none()
        }
    }

    pub fn with_structure(mut self, structure: Structure, window: usize) -> Self {
        self.structure = structure;
        self.window = window;
        self
    }

    /// Checks ratio range and, for structured masks, that the window fits `grid`.
    pub fn validate(&self, grid: Option<(usize, usize)>) -> Result<(), MaskError> {
        check_ratio(self.base_ratio)?;
        if self.window == 0 {
            return Err(MaskError::InvalidWindow {
                window: 0,
                n_h: grid.map_or(0, |g| g.0),
                n_w: grid.map_or(0, |g| g.1),
            });
        }
        if let (Structure::Block | Structure::Cross, Some((n_h, n_w))) = (self.structure, grid) {
            check_window(self.window, n_h, n_w)?;
        }
        Ok(())
    }

    /// True when no attention mask is ever applied.
    pub fn is_inactive(&self) -> bool {
        self.variant == DropVariant::None || self.base_ratio == 0.0
    }
}

fn check_ratio(d: f64) -> Result<(), MaskError> {
    if (0.0..1.0).contains(&d) {
        Ok(())
    } else {
        Err(MaskError::InvalidRatio(d))
    }
}

fn check_window(s: usize, n_h: usize, n_w: usize) -> Result<(), MaskError> {
    if s == 0 || s > n_h.min(n_w) {
        return Err(MaskError::InvalidWindow {
            window: s,
            n_h,
            n_w,
        });
    }
    Ok(())
}

/// Drop ratio used at `layer` (0-based) of a `num_layers`-deep stack.
///
/// Linear schedules run between `base_ratio` and 0: down starts at the base
/// ratio and reaches 0 at the last layer, up is the mirror image. A single
/// layer always uses the base ratio.
pub fn layer_ratio(cfg: &DropConfig, layer: usize, num_layers: usize) -> f64 {
    debug_assert!(layer < num_layers);
    let d = cfg.base_ratio;
    if num_layers <= 1 {
        return d;
    }
    let span = (num_layers - 1) as f64;
    match cfg.schedule {
        Schedule::Constant => d,
        Schedule::ScheduledDown => d * ((num_layers - 1 - layer) as f64 / span),
        Schedule::ScheduledUp => d * (layer as f64 / span),
    }
}

/// Binary key mask for one head: `n_q` rows of `n_k` keys.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DropMask {
    n_q: usize,
    n_k: usize,
    keep: Vec<bool>,
}

impl DropMask {
    pub fn all_kept(n_q: usize, n_k: usize) -> Self {
        Self {
            n_q,
            n_k,
            keep: vec![true; n_q * n_k],
        }
    }

    pub fn from_rows(rows: Vec<Vec<bool>>) -> Self {
        let n_q = rows.len();
        let n_k = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_k), "ragged mask rows");
        Self {
            n_q,
            n_k,
            keep: rows.concat(),
        }
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn n_k(&self) -> usize {
        self.n_k
    }

    pub fn is_kept(&self, q: usize, k: usize) -> bool {
        self.keep[q * self.n_k + k]
    }

    pub fn row(&self, q: usize) -> &[bool] {
        &self.keep[q * self.n_k..(q + 1) * self.n_k]
    }

    pub fn is_all_kept(&self) -> bool {
        self.keep.iter().all(|&k| k)
    }

    pub fn has_empty_row(&self) -> bool {
        (0..self.n_q).any(|q| self.row(q).iter().all(|&k| !k))
    }

    pub fn dropped_fraction(&self) -> f64 {
        self.keep.iter().filter(|&&k| !k).count() as f64 / self.keep.len() as f64
    }

    /// `1` where kept, `0` where dropped.
    pub fn keep_tensor(&self) -> Tensor {
        let data = self.keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect();
        Tensor::matrix(self.n_q, self.n_k, data).expect("mask dimensions are positive")
    }

    /// `0` where kept, the masking sentinel where dropped.
    pub fn logit_bias(&self) -> Tensor {
        let data = self
            .keep
            .iter()
            .map(|&k| if k { 0.0 } else { MASK_SENTINEL })
            .collect();
        Tensor::matrix(self.n_q, self.n_k, data).expect("mask dimensions are positive")
    }
}

/// Draws one row, redrawing if every key is dropped.
fn sample_row(
    n_k: usize,
    rng: &mut StreamRng,
    mut draw: impl FnMut(&mut StreamRng, &mut [bool]) -> Result<(), MaskError>,
) -> Result<Vec<bool>, MaskError> {
    let mut row = vec![true; n_k];
    for _ in 0..=MAX_ROW_RESAMPLES {
        draw(rng, &mut row)?;
        if row.iter().any(|&k| k) {
            return Ok(row);
        }
    }
    let survivor = rng.below(n_k);
    row[survivor] = true;
    Ok(row)
}

/// Independent Bernoulli mask: every key kept with probability `1 - ratio`.
pub fn sample_random_mask(
    n_q: usize,
    n_k: usize,
    ratio: f64,
    rng: &mut StreamRng,
) -> Result<DropMask, MaskError> {
    check_ratio(ratio)?;
    let mut keep = Vec::with_capacity(n_q * n_k);
    for _ in 0..n_q {
        let row = sample_row(n_k, rng, |rng, row| {
            row.iter_mut().for_each(|k| *k = !rng.bernoulli(ratio));
            Ok(())
        })?;
        keep.extend(row);
    }
    Ok(DropMask { n_q, n_k, keep })
}

fn valid_region(s: usize, n_h: usize, n_w: usize) -> (usize, usize) {
    (n_h - s + 1, n_w - s + 1)
}

/// Per-seed probability for square-window masks so that roughly a fraction
/// `d` of the grid is dropped (overlaps are ignored).
pub fn block_seed_ratio(d: f64, s: usize, n_h: usize, n_w: usize) -> Result<f64, MaskError> {
    check_ratio(d)?;
    check_window(s, n_h, n_w)?;
    let (vh, vw) = valid_region(s, n_h, n_w);
    let ratio = d / (s * s) as f64 * (n_h * n_w) as f64 / (vh * vw) as f64;
    if ratio >= 1.0 {
        return Err(MaskError::RatioOverflow(ratio));
    }
    Ok(ratio)
}

/// Per-seed probability for cross-window masks (an `s`-wide row stripe plus
/// an `s`-wide column stripe per seed).
pub fn cross_seed_ratio(d: f64, s: usize, n_h: usize, n_w: usize) -> Result<f64, MaskError> {
    check_ratio(d)?;
    check_window(s, n_h, n_w)?;
    let (vh, vw) = valid_region(s, n_h, n_w);
    let cross_area = (s * (n_h + n_w - s)) as f64;
    let ratio = d / cross_area * (n_h * n_w) as f64 / (vh * vw) as f64;
    if ratio >= 1.0 {
        return Err(MaskError::RatioOverflow(ratio));
    }
    Ok(ratio)
}

/// Marks the `s×s` squares anchored (top-left) at each seed as dropped.
pub fn apply_block_seeds(dropped: &mut [bool], n_h: usize, n_w: usize, s: usize, seeds: &[(usize, usize)]) {
    for &(i, j) in seeds {
        for r in i..(i + s).min(n_h) {
            for c in j..(j + s).min(n_w) {
                dropped[r * n_w + c] = true;
            }
        }
    }
}

/// Marks rows `i..i+s` and columns `j..j+s` of each seed as dropped.
pub fn apply_cross_seeds(dropped: &mut [bool], n_h: usize, n_w: usize, s: usize, seeds: &[(usize, usize)]) {
    for &(i, j) in seeds {
        for r in i..(i + s).min(n_h) {
            dropped[r * n_w..(r + 1) * n_w].iter_mut().for_each(|d| *d = true);
        }
        for r in 0..n_h {
            for c in j..(j + s).min(n_w) {
                dropped[r * n_w + c] = true;
            }
        }
    }
}

fn sample_seeds(p: f64, s: usize, n_h: usize, n_w: usize, rng: &mut StreamRng) -> Vec<(usize, usize)> {
    let (vh, vw) = valid_region(s, n_h, n_w);
    let mut seeds = Vec::new();
    for i in 0..vh {
        for j in 0..vw {
            if rng.bernoulli(p) {
                seeds.push((i, j));
            }
        }
    }
    seeds
}

/// One query's dropped-patch set (row-major over the grid) for square windows.
pub fn sample_block_mask(
    n_h: usize,
    n_w: usize,
    d: f64,
    s: usize,
    rng: &mut StreamRng,
) -> Result<Vec<bool>, MaskError> {
    let p = block_seed_ratio(d, s, n_h, n_w)?;
    let mut dropped = vec![false; n_h * n_w];
    apply_block_seeds(&mut dropped, n_h, n_w, s, &sample_seeds(p, s, n_h, n_w, rng));
    Ok(dropped)
}

/// One query's dropped-patch set (row-major over the grid) for cross windows.
pub fn sample_cross_mask(
    n_h: usize,
    n_w: usize,
    d: f64,
    s: usize,
    rng: &mut StreamRng,
) -> Result<Vec<bool>, MaskError> {
    let p = cross_seed_ratio(d, s, n_h, n_w)?;
    let mut dropped = vec![false; n_h * n_w];
    apply_cross_seeds(&mut dropped, n_h, n_w, s, &sample_seeds(p, s, n_h, n_w, rng));
    Ok(dropped)
}

/// Key positions of an attention layer: leading class tokens, then a patch grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyLayout {
    pub class_tokens: usize,
    pub n_h: usize,
    pub n_w: usize,
}

impl KeyLayout {
    pub fn n_keys(&self) -> usize {
        self.class_tokens + self.n_h * self.n_w
    }
}

/// Samples one head's mask according to `structure`.
pub fn sample_mask(
    structure: Structure,
    window: usize,
    ratio: f64,
    n_q: usize,
    layout: KeyLayout,
    rng: &mut StreamRng,
) -> Result<DropMask, MaskError> {
    let n_k = layout.n_keys();
    if structure == Structure::Random {
        return sample_random_mask(n_q, n_k, ratio, rng);
    }
    check_ratio(ratio)?;
    let KeyLayout {
        class_tokens,
        n_h,
        n_w,
    } = layout;
    // Fail early on bad windows even when ratio is 0.
    check_window(window, n_h, n_w)?;
    let mut keep = Vec::with_capacity(n_q * n_k);
    for _ in 0..n_q {
        let row = sample_row(n_k, rng, |rng, row| {
            for k in row[..class_tokens].iter_mut() {
                *k = !rng.bernoulli(ratio);
            }
            let grid = match structure {
                Structure::Block => sample_block_mask(n_h, n_w, ratio, window, rng)?,
                _ => sample_cross_mask(n_h, n_w, ratio, window, rng)?,
            };
            for (k, dropped) in row[class_tokens..].iter_mut().zip(grid) {
                *k = !dropped;
            }
            Ok(())
        })?;
        keep.extend(row);
    }
    Ok(DropMask { n_q, n_k, keep })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(d: f64, schedule: Schedule) -> DropConfig {
        DropConfig::new(DropVariant::DropKey, d, schedule)
    }

    #[test]
    fn constant_schedule() {
        for layer in 0..6 {
            assert_eq!(layer_ratio(&cfg(0.3, Schedule::Constant), layer, 6), 0.3);
        }
    }

    #[test]
    fn down_schedule_endpoints_and_interior() {
        let c = cfg(0.3, Schedule::ScheduledDown);
        assert_eq!(layer_ratio(&c, 0, 4), 0.3);
        assert_eq!(layer_ratio(&c, 3, 4), 0.0);
        // 0.3 * 2/3
        assert!((layer_ratio(&c, 1, 4) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn single_layer_uses_base_ratio() {
        for s in [Schedule::Constant, Schedule::ScheduledUp, Schedule::ScheduledDown] {
            assert_eq!(layer_ratio(&cfg(0.25, s), 0, 1), 0.25);
        }
    }

    #[test]
    fn zero_ratio_keeps_everything() {
        let mut rng = StreamRng::new(3);
        assert!(sample_random_mask(7, 9, 0.0, &mut rng).unwrap().is_all_kept());
    }

    #[test]
    fn random_mask_drop_fraction() {
        let mut rng = StreamRng::new(11);
        let m = sample_random_mask(10_000, 64, 0.3, &mut rng).unwrap();
        assert!((m.dropped_fraction() - 0.3).abs() <= 0.01, "{}", m.dropped_fraction());
    }

    #[test]
    fn random_mask_is_reproducible() {
        let a = sample_random_mask(32, 17, 0.4, &mut StreamRng::new(5)).unwrap();
        let b = sample_random_mask(32, 17, 0.4, &mut StreamRng::new(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_empty_rows_even_at_extreme_ratio() {
        let m = sample_random_mask(2000, 2, 0.95, &mut StreamRng::new(9)).unwrap();
        assert!(!m.has_empty_row());
    }

    #[test]
    fn invalid_ratio_rejected() {
        let mut rng = StreamRng::new(0);
        assert_eq!(
            sample_random_mask(1, 1, 1.0, &mut rng),
            Err(MaskError::InvalidRatio(1.0))
        );
        assert!(DropConfig::new(DropVariant::DropKey, 1.2, Schedule::Constant)
            .validate(None)
            .is_err());
    }

    #[test]
    fn block_seed_ratio_values() {
        let r = block_seed_ratio(0.3, 3, 8, 8).unwrap();
        // 0.3 / 9 * 64 / 36
        assert!((r - 0.3 / 9.0 * 64.0 / 36.0).abs() < 1e-15);
        assert!((r - 0.0592593).abs() < 1e-7);
        assert_eq!(block_seed_ratio(0.37, 1, 5, 9).unwrap(), 0.37);
    }

    #[test]
    fn block_seed_ratio_for_large_window_stays_below_one() {
        // 0.9 / 25 * 36 / 4; the square-window formula never exceeds d.
        let r = block_seed_ratio(0.9, 5, 6, 6).unwrap();
        assert!((r - 0.324).abs() < 1e-12);
    }

    #[test]
    fn cross_seed_ratio_values() {
        assert!((cross_seed_ratio(0.3, 1, 8, 8).unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(cross_seed_ratio(0.0, 2, 8, 8).unwrap(), 0.0);
        let r = cross_seed_ratio(0.3, 3, 8, 8).unwrap();
        assert!((r - 0.3 / 39.0 * 64.0 / 36.0).abs() < 1e-15);
        assert!((r - 0.0136752).abs() < 1e-7);
    }

    #[test]
    fn window_must_fit_grid() {
        assert!(matches!(
            block_seed_ratio(0.3, 9, 8, 8),
            Err(MaskError::InvalidWindow { .. })
        ));
        assert!(matches!(
            cross_seed_ratio(0.3, 0, 8, 8),
            Err(MaskError::InvalidWindow { .. })
        ));
        let c = cfg(0.3, Schedule::Constant).with_structure(Structure::Cross, 5);
        assert!(c.validate(Some((4, 4))).is_err());
        assert!(c.validate(Some((8, 8))).is_ok());
    }

    #[test]
    fn zero_ratio_structured_drops_nothing() {
        let mut rng = StreamRng::new(1);
        assert!(sample_block_mask(8, 8, 0.0, 3, &mut rng).unwrap().iter().all(|d| !d));
        assert!(sample_cross_mask(8, 8, 0.0, 2, &mut rng).unwrap().iter().all(|d| !d));
    }

    #[test]
    fn single_block_seed_drops_its_square() {
        let mut dropped = vec![false; 64];
        apply_block_seeds(&mut dropped, 8, 8, 3, &[(0, 0)]);
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(dropped[r * 8 + c], r < 3 && c < 3);
            }
        }
    }

    #[test]
    fn single_cross_seed_drops_row_and_column() {
        let mut dropped = vec![false; 64];
        apply_cross_seeds(&mut dropped, 8, 8, 1, &[(3, 3)]);
        assert_eq!(dropped.iter().filter(|&&d| d).count(), 15);
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(dropped[r * 8 + c], r == 3 || c == 3);
            }
        }
    }

    #[test]
    fn block_seed_coverage_ignoring_overlap_matches_ratio() {
        // Expected seeded area (seeds * s^2 / cells) equals d by construction.
        let (n, s, d) = (8, 3, 0.3);
        let p = block_seed_ratio(d, s, n, n).unwrap();
        let mut rng = StreamRng::new(21);
        let trials = 20_000;
        let seeds: usize = (0..trials).map(|_| sample_seeds(p, s, n, n, &mut rng).len()).sum();
        let coverage = seeds as f64 * (s * s) as f64 / (trials * n * n) as f64;
        assert!((coverage - d).abs() <= 0.03, "{coverage}");
    }

    #[test]
    fn structured_monte_carlo_fractions() {
        let mut rng = StreamRng::new(2024);
        let mut block = 0.0;
        let mut cross = 0.0;
        for _ in 0..1000 {
            let b = sample_block_mask(32, 32, 0.3, 3, &mut rng).unwrap();
            block += b.iter().filter(|&&x| x).count() as f64 / 1024.0;
            let c = sample_cross_mask(32, 32, 0.3, 1, &mut rng).unwrap();
            cross += c.iter().filter(|&&x| x).count() as f64 / 1024.0;
        }
        assert!((block / 1000.0 - 0.3).abs() <= 0.05, "{}", block / 1000.0);
        assert!((cross / 1000.0 - 0.3).abs() <= 0.05, "{}", cross / 1000.0);
    }

    #[test]
    fn structured_layer_mask_has_class_key_first() {
        let layout = KeyLayout {
            class_tokens: 1,
            n_h: 4,
            n_w: 4,
        };
        let m = sample_mask(Structure::Block, 2, 0.3, 17, layout, &mut StreamRng::new(4)).unwrap();
        assert_eq!((m.n_q(), m.n_k()), (17, 17));
        assert!(!m.has_empty_row());
    }

    #[test]
    fn logit_bias_and_keep_tensor() {
        let m = DropMask::from_rows(vec![vec![true, false], vec![false, true]]);
        assert_eq!(m.keep_tensor().data(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(m.logit_bias().data(), &[0.0, MASK_SENTINEL, MASK_SENTINEL, 0.0]);
    }

    proptest! {
        #[test]
        fn schedules_are_monotone(d in 0.0f64..0.99, layers in 1usize..12) {
            let down: Vec<f64> = (0..layers).map(|l| layer_ratio(&cfg(d, Schedule::ScheduledDown), l, layers)).collect();
            let up: Vec<f64> = (0..layers).map(|l| layer_ratio(&cfg(d, Schedule::ScheduledUp), l, layers)).collect();
            prop_assert!(down.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(up.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(down[0], d);
            if layers > 1 {
                prop_assert_eq!(down[layers - 1], 0.0);
                prop_assert_eq!(up[0], 0.0);
                prop_assert_eq!(up[layers - 1], d);
            }
        }

        #[test]
        fn block_drops_are_union_of_seeded_squares(
            seed in any::<u64>(), n_h in 3usize..10, n_w in 3usize..10, s in 1usize..4, d in 0.0f64..0.9
        ) {
            prop_assume!(s <= n_h.min(n_w));
            let p = block_seed_ratio(d, s, n_h, n_w).unwrap();
            let mut rng = StreamRng::new(seed);
            let seeds = sample_seeds(p, s, n_h, n_w, &mut rng);
            let mut dropped = vec![false; n_h * n_w];
            apply_block_seeds(&mut dropped, n_h, n_w, s, &seeds);
            for r in 0..n_h {
                for c in 0..n_w {
                    let covered = seeds.iter().any(|&(i, j)| (i..i + s).contains(&r) && (j..j + s).contains(&c));
                    prop_assert_eq!(dropped[r * n_w + c], covered);
                }
            }
        }
    }
}
