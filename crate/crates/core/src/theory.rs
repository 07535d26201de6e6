//! Numerical checks of the key-dropping smoothing effect and of the
//! weight/value co-adaptation dynamics on a toy objective.
//!
//! Expectations over drop masks are conditioned on at least one key
//! surviving, matching the resampling policy of [`crate::masks`].

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::numerics::{NumericsError, ParamId, Tape, Tensor, MASK_SENTINEL};
use crate::rng::StreamRng;

/// Largest probability vector handled by exhaustive enumeration.
pub const MAX_ENUMERATION_TERMS: usize = 20;

/// Loss value above which the toy dynamics are declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("{0} terms exceeds the enumeration limit of {MAX_ENUMERATION_TERMS}")]
    TooLarge(usize),
    #[error("not a strictly positive probability vector: {0}")]
    InvalidSimplex(String),
    #[error("drop ratio {0} must be in [0,1)")]
    InvalidRatio(f64),
    #[error("invalid toy setting: {0}")]
    InvalidSetting(String),
    #[error("loss diverged to {loss} at step {step}")]
    DivergedLoss { step: usize, loss: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Multipliers `c_j = E[d_j / Σ_k d_k p_k]` for a probability vector `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingCoeffs {
    pub p: Vec<f64>,
    pub d: f64,
    pub c: Vec<f64>,
    /// Per-coordinate standard error; `None` for exact values.
    pub std_err: Option<Vec<f64>>,
}

fn check_simplex(p: &[f64]) -> Result<(), TheoryError> {
    if p.is_empty() {
        return Err(TheoryError::InvalidSimplex("empty".into()));
    }
    if let Some(bad) = p.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(TheoryError::InvalidSimplex(format!("entry {bad} is not positive")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(TheoryError::InvalidSimplex(format!("entries sum to {total}")));
    }
    Ok(())
}

fn check_ratio(d: f64) -> Result<(), TheoryError> {
    if (0.0..1.0).contains(&d) {
        Ok(())
    } else {
        Err(TheoryError::InvalidRatio(d))
    }
}

/// Visits every keep pattern with at least one survivor, passing the bit
/// pattern and its probability conditioned on not dropping everything.
fn for_each_valid_mask(n: usize, d: f64, mut visit: impl FnMut(u32, f64)) {
    let keep_pow: Vec<f64> = (0..=n).map(|k| (1.0 - d).powi(k as i32)).collect();
    let drop_pow: Vec<f64> = (0..=n).map(|k| d.powi(k as i32)).collect();
    let valid_mass = 1.0 - d.powi(n as i32);
    for bits in 1u32..(1u32 << n) {
        let kept = bits.count_ones() as usize;
        visit(bits, keep_pow[kept] * drop_pow[n - kept] / valid_mass);
    }
}

/// Exact coefficients by enumerating all `2^N - 1` non-empty keep patterns.
pub fn exact_smoothing_coeffs(p: &[f64], d: f64) -> Result<SmoothingCoeffs, TheoryError> {
    if p.len() > MAX_ENUMERATION_TERMS {
        return Err(TheoryError::TooLarge(p.len()));
    }
    check_simplex(p)?;
    check_ratio(d)?;
    let n = p.len();
    let c = if d == 0.0 {
        vec![1.0; n]
    } else {
        let mut c = vec![0.0; n];
        for_each_valid_mask(n, d, |bits, prob| {
            let kept_mass: f64 = (0..n).filter(|j| bits >> j & 1 == 1).map(|j| p[j]).sum();
            let w = prob / kept_mass;
            for (j, cj) in c.iter_mut().enumerate() {
                if bits >> j & 1 == 1 {
                    *cj += w;
                }
            }
        });
        c
    };
    Ok(SmoothingCoeffs {
        p: p.to_vec(),
        d,
        c,
        std_err: None,
    })
}

/// Monte Carlo estimate of the same coefficients from `trials` valid draws.
pub fn mc_smoothing_coeffs(p: &[f64], d: f64, trials: usize, rng: &mut StreamRng) -> Result<SmoothingCoeffs, TheoryError> {
    check_simplex(p)?;
    check_ratio(d)?;
    if trials == 0 {
        return Err(TheoryError::InvalidSetting("trials must be at least 1".into()));
    }
    let n = p.len();
    if d == 0.0 {
        return Ok(SmoothingCoeffs {
            p: p.to_vec(),
            d,
            c: vec![1.0; n],
            std_err: Some(vec![0.0; n]),
        });
    }
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let mut keep = vec![false; n];
    for _ in 0..trials {
        loop {
            keep.iter_mut().for_each(|k| *k = !rng.bernoulli(d));
            if keep.iter().any(|&k| k) {
                break;
            }
        }
        let kept_mass: f64 = p.iter().zip(&keep).filter(|(_, &k)| k).map(|(x, _)| x).sum();
        for j in 0..n {
            let x = if keep[j] { 1.0 / kept_mass } else { 0.0 };
            sum[j] += x;
            sum_sq[j] += x * x;
        }
    }
    let t = trials as f64;
    let c: Vec<f64> = sum.iter().map(|s| s / t).collect();
    let std_err = sum_sq
        .iter()
        .zip(&c)
        .map(|(sq, mean)| {
            let var = if trials > 1 { (sq / t - mean * mean).max(0.0) * t / (t - 1.0) } else { 0.0 };
            (var / t).sqrt()
        })
        .collect();
    Ok(SmoothingCoeffs {
        p: p.to_vec(),
        d,
        c,
        std_err: Some(std_err),
    })
}

/// `Σ_j c_j p_j v_j`: the expected re-normalized output via the coefficients.
pub fn expected_output_from_coeffs(coeffs: &SmoothingCoeffs, values: &[Vec<f64>]) -> Vec<f64> {
    let dim = values.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dim];
    for ((c, p), v) in coeffs.c.iter().zip(&coeffs.p).zip(values) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += c * p * x;
        }
    }
    out
}

/// Expected re-normalized output by enumerating every valid keep pattern
/// directly, without forming coefficients.
pub fn expected_output_by_enumeration(p: &[f64], values: &[Vec<f64>], d: f64) -> Result<Vec<f64>, TheoryError> {
    if p.len() > MAX_ENUMERATION_TERMS {
        return Err(TheoryError::TooLarge(p.len()));
    }
    check_simplex(p)?;
    check_ratio(d)?;
    let n = p.len();
    let dim = values.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dim];
    for_each_valid_mask(n, d, |bits, prob| {
        let kept_mass: f64 = (0..n).filter(|j| bits >> j & 1 == 1).map(|j| p[j]).sum();
        for j in (0..n).filter(|j| bits >> j & 1 == 1) {
            let w = prob * p[j] / kept_mass;
            for (o, x) in out.iter_mut().zip(&values[j]) {
                *o += w * x;
            }
        }
    });
    Ok(out)
}

/// Number of ordered pairs `(s, t)` with `p_s > p_t` but `c_s >= c_t - margin`.
pub fn ordering_violations(coeffs: &SmoothingCoeffs, margin: f64) -> usize {
    let (p, c) = (&coeffs.p, &coeffs.c);
    let mut violations = 0;
    for s in 0..p.len() {
        for t in 0..p.len() {
            if p[s] > p[t] && c[t] - c[s] <= margin {
                violations += 1;
            }
        }
    }
    violations
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DynamicsVariant {
    Plain,
    /// Fresh Bernoulli key mask on the weight logits every step.
    DropKey(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyConfig {
    pub terms: usize,
    pub dim: usize,
    pub target_norm: f64,
    pub steps: usize,
    pub lr: f64,
    pub variant: DynamicsVariant,
    pub seed: u64,
}

impl ToyConfig {
    pub fn new(terms: usize, dim: usize, target_norm: f64, steps: usize, lr: f64, variant: DynamicsVariant, seed: u64) -> Self {
        Self {
            terms,
            dim,
            target_norm,
            steps,
            lr,
            variant,
            seed,
        }
    }
}

/// Loss, logit gradients and value gradients.
type LossAndGrads = (f64, Vec<f64>, Vec<Vec<f64>>);

/// `min ½‖Σ_j p_j v_j − y‖²` over the simplex, with `p = softmax(logits)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyObjective {
    pub logits: Vec<f64>,
    /// `terms` rows of `dim` values.
    pub values: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

impl ToyObjective {
    /// Uniform weights; values random with norm at most `0.01·‖y‖`; random target direction.
    pub fn init(terms: usize, dim: usize, target_norm: f64, rng: &mut StreamRng) -> Self {
        let direction = random_unit(dim, rng);
        let values = (0..terms)
            .map(|_| {
                let len = 0.01 * target_norm * (1.0 - rng.uniform());
                random_unit(dim, rng).into_iter().map(|x| x * len).collect()
            })
            .collect();
        Self {
            logits: vec![0.0; terms],
            values,
            target: direction.into_iter().map(|x| x * target_norm).collect(),
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    pub fn target_norm(&self) -> f64 {
        self.target.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn direction(&self) -> Vec<f64> {
        let m = self.target_norm();
        self.target.iter().map(|x| x / m).collect()
    }

    /// Splits each value into `β_j e + α_j` with `α_j ⊥ e`.
    pub fn decompose(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let e = self.direction();
        let betas: Vec<f64> = self.values.iter().map(|v| dot(v, &e)).collect();
        let alphas = self
            .values
            .iter()
            .zip(&betas)
            .map(|(v, b)| v.iter().zip(&e).map(|(x, ei)| x - b * ei).collect())
            .collect();
        (betas, alphas)
    }

    pub fn loss(&self) -> f64 {
        let p = self.weights();
        let mut res = self.target.iter().map(|y| -y).collect::<Vec<_>>();
        for (pj, v) in p.iter().zip(&self.values) {
            for (r, x) in res.iter_mut().zip(v) {
                *r += pj * x;
            }
        }
        0.5 * dot(&res, &res)
    }

    /// Records the loss with an optional logit bias (dropped terms) and returns
    /// `(loss, gradient of logits, gradient of values)`.
    fn loss_and_grads(&self, bias: Option<&[f64]>) -> Result<LossAndGrads, TheoryError> {
        let (n, r) = (self.values.len(), self.target.len());
        let mut tape = Tape::new();
        let z = tape.param(ParamId(0), Tensor::matrix(1, n, self.logits.clone())?)?;
        let v = tape.param(ParamId(1), Tensor::matrix(n, r, self.values.concat())?)?;
        let z = match bias {
            Some(b) => tape.add_const(z, &Tensor::matrix(1, n, b.to_vec())?)?,
            None => z,
        };
        let p = tape.softmax_rows(z)?;
        let o = tape.matmul(p, v)?;
        let y = tape.constant(Tensor::matrix(1, r, self.target.clone())?);
        let res = tape.sub(o, y)?;
        let sq = tape.mul(res, res)?;
        let s = tape.sum(sq);
        let loss = tape.scale(s, 0.5);
        let grads = tape.backward(loss)?;
        let gz = grads.get(ParamId(0))?.data().to_vec();
        let gv = grads.get(ParamId(1))?.data().chunks(r).map(<[f64]>::to_vec).collect();
        Ok((tape.value(loss).item(), gz, gv))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_unit(dim: usize, rng: &mut StreamRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub p: Vec<f64>,
    pub max_p: f64,
    pub entropy: f64,
    pub beta: Vec<f64>,
    /// Loss of the undropped objective.
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct DynamicsTrajectory {
    pub config: ToyConfig,
    /// One record per step, taken after the update.
    pub records: Vec<StepRecord>,
    pub initial: ToyObjective,
    pub final_state: ToyObjective,
}

impl DynamicsTrajectory {
    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("at least one step")
    }
}

/// Plain gradient descent on the toy objective, optionally with a fresh key
/// mask on the weight logits at every step.
pub fn run_toy_dynamics(cfg: &ToyConfig) -> Result<DynamicsTrajectory, TheoryError> {
    if cfg.terms == 0 || cfg.dim == 0 || cfg.steps == 0 {
        return Err(TheoryError::InvalidSetting("terms, dim and steps must be positive".into()));
    }
    if !(cfg.target_norm > 0.0 && cfg.lr > 0.0) {
        return Err(TheoryError::InvalidSetting("target norm and learning rate must be positive".into()));
    }
    if let DynamicsVariant::DropKey(d) = cfg.variant {
        check_ratio(d)?;
    }
    let root = StreamRng::new(cfg.seed);
    let mut state = ToyObjective::init(cfg.terms, cfg.dim, cfg.target_norm, &mut root.fork(0));
    let initial = state.clone();
    let mut mask_rng = root.fork(1);
    let mut records = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let bias = match cfg.variant {
            DynamicsVariant::Plain => None,
            DynamicsVariant::DropKey(d) => {
                let mask = crate::masks::sample_random_mask(1, cfg.terms, d, &mut mask_rng)
                    .map_err(|_| TheoryError::InvalidRatio(d))?;
                Some(
                    mask.row(0)
                        .iter()
                        .map(|&k| if k { 0.0 } else { MASK_SENTINEL })
                        .collect::<Vec<_>>(),
                )
            }
        };
        let (_, gz, gv) = state.loss_and_grads(bias.as_deref())?;
        for (z, g) in state.logits.iter_mut().zip(&gz) {
            *z -= cfg.lr * g;
        }
        for (v, g) in state.values.iter_mut().zip(&gv) {
            for (x, gx) in v.iter_mut().zip(g) {
                *x -= cfg.lr * gx;
            }
        }
        let loss = state.loss();
        if !loss.is_finite() || loss > DIVERGENCE_LIMIT {
            return Err(TheoryError::DivergedLoss { step, loss });
        }
        let p = state.weights();
        records.push(StepRecord {
            step,
            max_p: p.iter().copied().fold(0.0, f64::max),
            entropy: entropy(&p),
            beta: state.decompose().0,
            loss,
            p,
        });
    }
    Ok(DynamicsTrajectory {
        config: cfg.clone(),
        records,
        initial,
        final_state: state,
    })
}

/// Gradient of the loss along the target direction for every value vector.
#[derive(Clone, Debug)]
pub struct GradientOrderingReport {
    pub p: Vec<f64>,
    /// `p_j (Σ_k p_k β_k − M)`
    pub closed_form: Vec<f64>,
    /// `(∂L/∂v_j) · e` from the tape.
    pub from_tape: Vec<f64>,
    /// `Σ_k p_k β_k − M`
    pub residual: f64,
    /// Ordered pairs with `p_s > p_t` whose gradients are not ordered
    /// `∂L/∂β_s < ∂L/∂β_t` (or the reverse when the residual is positive).
    pub violations: usize,
    /// Whether every gradient has the sign of the residual.
    pub signs_match_residual: bool,
}

impl GradientOrderingReport {
    pub fn max_route_difference(&self) -> f64 {
        self.closed_form
            .iter()
            .zip(&self.from_tape)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Checks the ordering of `∂L/∂β_j` against the weights at the given state.
pub fn verify_gradient_ordering(state: &ToyObjective) -> Result<GradientOrderingReport, TheoryError> {
    let p = state.weights();
    let (betas, _) = state.decompose();
    let e = state.direction();
    let m = state.target_norm();
    let residual = dot(&p, &betas) - m;
    let closed_form: Vec<f64> = p.iter().map(|pj| pj * residual).collect();
    let (_, _, gv) = state.loss_and_grads(None)?;
    let from_tape: Vec<f64> = gv.iter().map(|g| dot(g, &e)).collect();
    let mut violations = 0;
    for s in 0..p.len() {
        for t in 0..p.len() {
            if p[s] > p[t] {
                let ordered = if residual < 0.0 {
                    from_tape[s] < from_tape[t]
                } else {
                    from_tape[s] > from_tape[t]
                };
                if !ordered {
                    violations += 1;
                }
            }
        }
    }
    let signs_match_residual = from_tape.iter().all(|g| g.signum() == residual.signum());
    Ok(GradientOrderingReport {
        p,
        closed_form,
        from_tape,
        residual,
        violations,
        signs_match_residual,
    })
}

/// A state near initialization: logits perturbed by `logit_scale`, value
/// norms at most `0.01·M`.
pub fn perturbed_initialization(terms: usize, dim: usize, target_norm: f64, logit_scale: f64, rng: &mut StreamRng) -> ToyObjective {
    let mut state = ToyObjective::init(terms, dim, target_norm, rng);
    for z in state.logits.iter_mut() {
        *z = logit_scale * Distribution::<f64>::sample(&StandardNormal, rng);
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_ratio_gives_unit_coefficients() {
        let c = exact_smoothing_coeffs(&[0.2, 0.5, 0.3], 0.0).unwrap();
        assert_eq!(c.c, vec![1.0; 3]);
        let mc = mc_smoothing_coeffs(&[0.2, 0.5, 0.3], 0.0, 10, &mut StreamRng::new(1)).unwrap();
        assert_eq!(mc.c, vec![1.0; 3]);
        assert_eq!(mc.std_err, Some(vec![0.0; 3]));
    }

    #[test]
    fn symmetric_pair() {
        let c = exact_smoothing_coeffs(&[0.5, 0.5], 0.3).unwrap();
        assert_eq!(c.c[0], c.c[1]);
    }

    #[test]
    fn worked_pair() {
        // Outcomes (1,1), (1,0), (0,1) with probabilities .49, .21, .21 over .91.
        let c = exact_smoothing_coeffs(&[0.7, 0.3], 0.3).unwrap();
        let c1 = (0.49 + 0.21 / 0.7) / 0.91;
        let c2 = (0.49 + 0.21 / 0.3) / 0.91;
        assert!((c.c[0] - c1).abs() < 1e-14);
        assert!((c.c[1] - c2).abs() < 1e-14);
        assert!((c.c[0] - 0.86813).abs() < 5e-6);
        assert!((c.c[1] - 1.30769).abs() < 5e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(exact_smoothing_coeffs(&[0.05; 21], 0.3), Err(TheoryError::TooLarge(21))));
        assert!(matches!(exact_smoothing_coeffs(&[0.6, 0.6], 0.3), Err(TheoryError::InvalidSimplex(_))));
        assert!(matches!(exact_smoothing_coeffs(&[1.0, 0.0], 0.3), Err(TheoryError::InvalidSimplex(_))));
        assert!(matches!(exact_smoothing_coeffs(&[0.5, 0.5], 1.0), Err(TheoryError::InvalidRatio(_))));
    }

    #[test]
    fn monte_carlo_agrees_with_enumeration() {
        let mut rng = StreamRng::new(77);
        let raw: Vec<f64> = (0..6).map(|_| 0.05 + rng.uniform()).collect();
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let exact = exact_smoothing_coeffs(&p, 0.3).unwrap();
        let mc = mc_smoothing_coeffs(&p, 0.3, 100_000, &mut rng).unwrap();
        for ((e, m), se) in exact.c.iter().zip(&mc.c).zip(mc.std_err.as_ref().unwrap()) {
            assert!((e - m).abs() <= 3.0 * se, "{e} vs {m} (se {se})");
        }
        let again = mc_smoothing_coeffs(&p, 0.3, 1000, &mut StreamRng::new(5)).unwrap();
        assert_eq!(again, mc_smoothing_coeffs(&p, 0.3, 1000, &mut StreamRng::new(5)).unwrap());
    }

    #[test]
    fn expected_output_two_routes() {
        let p = [0.1, 0.25, 0.4, 0.25];
        let values = vec![vec![1.0, -2.0], vec![0.5, 0.5], vec![-1.5, 3.0], vec![2.0, 0.0]];
        let coeffs = exact_smoothing_coeffs(&p, 0.3).unwrap();
        let a = expected_output_from_coeffs(&coeffs, &values);
        let b = expected_output_by_enumeration(&p, &values, 0.3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_term_dynamics_converge() {
        let cfg = ToyConfig::new(1, 4, 1.0, 400, 0.5, DynamicsVariant::Plain, 3);
        let traj = run_toy_dynamics(&cfg).unwrap();
        assert!(traj.records.iter().all(|r| r.p == vec![1.0]));
        assert!(traj.records.windows(2).all(|w| w[1].loss <= w[0].loss));
        assert!(traj.last().loss < 1e-10);
    }

    #[test]
    fn trajectory_keeps_simplex() {
        let cfg = ToyConfig::new(5, 3, 1.0, 200, 0.05, DynamicsVariant::DropKey(0.3), 8);
        let traj = run_toy_dynamics(&cfg).unwrap();
        assert_eq!(traj.records.len(), 200);
        for r in &traj.records {
            assert!((r.p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            assert!(r.loss.is_finite());
        }
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = ToyConfig::new(3, 2, 1e4, 50, 100.0, DynamicsVariant::Plain, 1);
        assert!(matches!(run_toy_dynamics(&cfg), Err(TheoryError::DivergedLoss { .. })));
    }

    #[test]
    fn decomposition_is_orthogonal() {
        let state = ToyObjective::init(6, 4, 1.0, &mut StreamRng::new(2));
        let (betas, alphas) = state.decompose();
        let e = state.direction();
        for ((b, a), v) in betas.iter().zip(&alphas).zip(&state.values) {
            assert!(dot(a, &e).abs() <= 1e-9);
            for ((x, ai), ei) in v.iter().zip(a).zip(&e) {
                assert!((x - (b * ei + ai)).abs() <= 1e-12);
            }
            assert!(dot(v, v).sqrt() <= 0.01);
        }
    }

    #[test]
    fn uniform_weights_give_equal_beta_gradients() {
        let state = ToyObjective::init(5, 3, 1.0, &mut StreamRng::new(4));
        let report = verify_gradient_ordering(&state).unwrap();
        let g0 = report.closed_form[0];
        assert!(report.closed_form.iter().all(|g| (g - g0).abs() < 1e-15));
        assert!(report.signs_match_residual);
    }

    #[test]
    fn largest_weight_gets_most_negative_gradient() {
        let mut state = ToyObjective::init(3, 4, 1.0, &mut StreamRng::new(6));
        // softmax of these logits is (0.4, 0.3, 0.3)
        state.logits = vec![(0.4f64 / 0.3).ln(), 0.0, 0.0];
        let report = verify_gradient_ordering(&state).unwrap();
        assert!((report.p[0] - 0.4).abs() < 1e-12);
        let min = report.from_tape.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(report.from_tape[0], min);
        assert!(report.from_tape[0] < report.from_tape[1]);
        assert_eq!(report.violations, 0);
        assert!(report.max_route_difference() < 1e-12);
        assert!(report.signs_match_residual);
    }
}
