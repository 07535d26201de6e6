//! Python bindings for the `dropkey` crate.

use std::path::PathBuf;

use dropkey::attention::{attention_dropkey, attention_droprenorm, attention_plain, AttentionConfig, AttentionOutput};
use dropkey::cli::Checkpoint;
use dropkey::harness::{class_token_entropy, mc_inference};
use dropkey::masks::{layer_ratio, DropConfig, DropMask, DropVariant, Schedule, Structure};
use dropkey::numerics::Tensor;
use dropkey::rng::StreamRng;
use dropkey::theory::{self, DynamicsVariant, ToyConfig};
use dropkey::vit::{forward, init_params, AttentionMode, TinyViTConfig, TinyViTParams};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    Tensor::from_rows(&rows).map_err(err)
}

type Rows = Vec<Vec<f64>>;

fn rows(t: &Tensor) -> Rows {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// Exact smoothing coefficients `c` for probabilities `p` at drop ratio `d`.
#[pyfunction]
fn smoothing_coeffs(p: Vec<f64>, d: f64) -> PyResult<Vec<f64>> {
    Ok(theory::exact_smoothing_coeffs(&p, d).map_err(err)?.c)
}

/// Monte Carlo coefficients and their standard errors.
#[pyfunction]
#[pyo3(signature = (p, d, trials, seed=0))]
fn mc_smoothing_coeffs(p: Vec<f64>, d: f64, trials: usize, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let s = theory::mc_smoothing_coeffs(&p, d, trials, &mut StreamRng::new(seed)).map_err(err)?;
    Ok((s.c, s.std_err.unwrap_or_default()))
}

/// Drop ratio used at `layer` of `num_layers`.
#[pyfunction]
fn schedule_ratio(schedule: &str, ratio: f64, layer: usize, num_layers: usize) -> PyResult<f64> {
    let schedule: Schedule = schedule.parse().map_err(err)?;
    Ok(layer_ratio(&DropConfig::new(DropVariant::DropKey, ratio, schedule), layer, num_layers))
}

/// Single-head attention over `[n, dim]` lists. `keep` marks kept keys per
/// query; `variant` is "dropkey" or "renorm" when a mask is given.
#[pyfunction]
#[pyo3(signature = (q, k, v, keep=None, variant="dropkey"))]
fn attention(q: Vec<Vec<f64>>, k: Vec<Vec<f64>>, v: Vec<Vec<f64>>, keep: Option<Vec<Vec<bool>>>, variant: &str) -> PyResult<(Rows, Rows)> {
    let (q, k, v) = (matrix(q)?, matrix(k)?, matrix(v)?);
    let cfg = AttentionConfig::new(q.cols(), 1).map_err(err)?;
    let out: AttentionOutput = match keep {
        None => attention_plain(&q, &k, &v, &cfg),
        Some(keep) => {
            let masks = [DropMask::from_rows(keep)];
            match variant {
                "dropkey" => attention_dropkey(&q, &k, &v, &cfg, &masks),
                "renorm" => attention_droprenorm(&q, &k, &v, &cfg, &masks),
                other => return Err(err(format!("unknown variant {other}"))),
            }
        }
    }
    .map_err(err)?;
    let n_k = out.weights.shape()[2];
    let weights = out.weights.data().chunks(n_k).map(<[f64]>::to_vec).collect();
    Ok((rows(&out.output), weights))
}

/// Toy weighted-sum dynamics; returns the final `(p, loss)`.
#[pyfunction]
#[pyo3(signature = (d=None, terms=8, dim=4, target_norm=1.0, steps=2000, lr=0.05, seed=0))]
fn toy_dynamics(d: Option<f64>, terms: usize, dim: usize, target_norm: f64, steps: usize, lr: f64, seed: u64) -> PyResult<(Vec<f64>, f64)> {
    let variant = d.map_or(DynamicsVariant::Plain, DynamicsVariant::DropKey);
    let traj = theory::run_toy_dynamics(&ToyConfig::new(terms, dim, target_norm, steps, lr, variant, seed)).map_err(err)?;
    let last = traj.last();
    Ok((last.p.clone(), last.loss))
}

/// Key-drop settings for every attention layer.
#[pyclass(name = "DropConfig", frozen)]
#[derive(Clone)]
struct PyDropConfig {
    inner: DropConfig,
}

#[pymethods]
impl PyDropConfig {
    #[new]
    #[pyo3(signature = (variant="dropkey", ratio=0.1, schedule="down", structure="random", window=1, seed=0))]
    fn new(variant: &str, ratio: f64, schedule: &str, structure: &str, window: usize, seed: u64) -> PyResult<Self> {
        let mut inner = DropConfig::new(variant.parse().map_err(err)?, ratio, schedule.parse().map_err(err)?)
            .with_structure(structure.parse::<Structure>().map_err(err)?, window);
        inner.seed = seed;
        inner.validate(None).map_err(err)?;
        Ok(Self { inner })
    }

    /// Drop ratio at `layer` of `num_layers`.
    fn layer_ratio(&self, layer: usize, num_layers: usize) -> f64 {
        layer_ratio(&self.inner, layer, num_layers)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!("DropConfig(variant='{}', ratio={}, schedule='{}', structure='{}', window={})", c.variant, c.base_ratio, c.schedule, c.structure, c.window)
    }
}

#[pyclass(name = "TinyViTConfig", frozen)]
#[derive(Clone)]
struct PyTinyViTConfig {
    inner: TinyViTConfig,
}

#[pymethods]
impl PyTinyViTConfig {
    #[new]
    #[pyo3(signature = (height=32, width=32, channels=1, patch_size=4, embed_dim=64, heads=4, depth=4, mlp_ratio=2, num_classes=10))]
    #[allow(clippy::too_many_arguments)]
    fn new(height: usize, width: usize, channels: usize, patch_size: usize, embed_dim: usize, heads: usize, depth: usize, mlp_ratio: usize, num_classes: usize) -> PyResult<Self> {
        let inner = TinyViTConfig {
            height,
            width,
            channels,
            patch_size,
            embed_dim,
            heads,
            depth,
            mlp_ratio,
            num_classes,
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn num_tokens(&self) -> usize {
        self.inner.num_tokens()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }
}

/// Parameters of a tiny ViT. Images are flat lists in `h × w × c` order.
#[pyclass(name = "TinyViT")]
struct PyTinyViT {
    config: TinyViTConfig,
    params: TinyViTParams,
}

impl PyTinyViT {
    fn images(&self, images: Vec<Vec<f64>>) -> PyResult<Vec<Tensor>> {
        let c = &self.config;
        images
            .into_iter()
            .map(|data| Tensor::new(vec![c.height, c.width, c.channels], data).map_err(err))
            .collect()
    }
}

#[pymethods]
impl PyTinyViT {
    #[new]
    #[pyo3(signature = (config, seed=0))]
    fn new(config: &PyTinyViTConfig, seed: u64) -> PyResult<Self> {
        Ok(Self {
            config: config.inner.clone(),
            params: init_params(&config.inner, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(config: &PyTinyViTConfig, path: PathBuf) -> PyResult<Self> {
        let ckpt = Checkpoint::read(&path).map_err(err)?;
        Ok(Self {
            config: config.inner.clone(),
            params: TinyViTParams::from_checkpoint(&config.inner, &ckpt).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.params.to_checkpoint().write(&path).map_err(err)
    }

    /// Logits per image; with `drop` and `samples`, Monte Carlo attention.
    #[pyo3(signature = (images, drop=None, samples=64, seed=0))]
    fn logits(&self, images: Vec<Vec<f64>>, drop: Option<&PyDropConfig>, samples: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let images = self.images(images)?;
        let out = match drop {
            None => forward(&self.params, &self.config, &images, &AttentionMode::infer(), &StreamRng::new(seed)),
            Some(d) => mc_inference(&self.params, &self.config, &images, &d.inner, samples, &StreamRng::new(seed)),
        }
        .map_err(err)?;
        Ok(rows(&out.logits))
    }

    /// Class-token attention entropy per layer.
    fn class_token_entropy(&self, images: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        class_token_entropy(&self.params, &self.config, &self.images(images)?).map_err(err)
    }
}

/// Runs a `dklab` command line (without the program name); returns the exit code.
#[pyfunction]
fn run_command(args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("dklab".to_string()).chain(args).collect();
    dropkey::cli::run_command(&argv)
}

#[pymodule]
fn dropkey_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(smoothing_coeffs, m)?)?;
    m.add_function(wrap_pyfunction!(mc_smoothing_coeffs, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(attention, m)?)?;
    m.add_function(wrap_pyfunction!(toy_dynamics, m)?)?;
    m.add_class::<PyDropConfig>()?;
    m.add_class::<PyTinyViTConfig>()?;
    m.add_class::<PyTinyViT>()?;
    m.add_function(wrap_pyfunction!(run_command, m)?)?;
    Ok(())
}
