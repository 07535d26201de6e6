//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;

use super::tape::{ParamId, Tape, Var};
use super::tensor::Tensor;
use super::NumericsError;
use crate::rng::StreamRng;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    /// At most this many coordinates are checked; sampled uniformly when the
    /// parameters hold more.
    pub max_coords: usize,
    pub seed: u64,
    /// A coordinate whose central differences at `step` and `step / 2`
    /// disagree by more than this (relative) is flagged as crossing a
    /// non-differentiable boundary and excluded.
    pub kink_tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords: 200,
            seed: 0,
            kink_tolerance: 1e-5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates excluded as unreliable, as `(parameter, flat index)`.
    pub unreliable: Vec<(ParamId, usize)>,
}

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<(Tape, Var), NumericsError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NumericsError>,
{
    let mut tape = Tape::new();
    let vars = params
        .iter()
        .enumerate()
        .map(|(i, p)| tape.param(ParamId(i), p.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let out = f(&mut tape, &vars)?;
    Ok((tape, out))
}

fn scalar_at<F>(f: &F, params: &mut [Tensor], coord: (usize, usize), delta: f64) -> Result<f64, NumericsError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NumericsError>,
{
    let (p, i) = coord;
    let original = params[p].data()[i];
    params[p].data_mut()[i] = original + delta;
    let result = evaluate(f, params).map(|(tape, out)| tape.value(out).item());
    params[p].data_mut()[i] = original;
    result
}

/// Compares tape gradients of `f` with central differences.
///
/// `f` records a scalar on the tape it is given, using one parameter var per
/// entry of `params` (registered as `ParamId(index)`). The error per coordinate
/// is `|analytic - numeric| / max(1, |numeric|)`.
pub fn finite_diff_check<F>(
    f: F,
    params: &[Tensor],
    config: &GradCheckConfig,
) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NumericsError>,
{
    assert!(config.step > 0.0, "finite-difference step must be positive");
    let (tape, out) = evaluate(&f, params)?;
    let first = tape.value(out).item();
    let (tape_again, out_again) = evaluate(&f, params)?;
    let second = tape_again.value(out_again).item();
    if first.to_bits() != second.to_bits() {
        return Err(NumericsError::NonDeterministicFunction { first, second });
    }
    let grads = tape.backward(out)?;

    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(p, t)| (0..t.len()).map(move |i| (p, i)))
        .collect();
    let chosen: Vec<(usize, usize)> = if coords.len() <= config.max_coords {
        coords
    } else {
        let mut rng = StreamRng::new(config.seed);
        let mut idx = sample(&mut rng, coords.len(), config.max_coords).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| coords[i]).collect()
    };

    let mut work = params.to_vec();
    let h = config.step;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        unreliable: Vec::new(),
    };
    for coord in chosen {
        let plus = scalar_at(&f, &mut work, coord, h)?;
        let minus = scalar_at(&f, &mut work, coord, -h)?;
        let numeric = (plus - minus) / (2.0 * h);
        let plus_half = scalar_at(&f, &mut work, coord, h / 2.0)?;
        let minus_half = scalar_at(&f, &mut work, coord, -h / 2.0)?;
        let numeric_half = (plus_half - minus_half) / h;
        if (numeric - numeric_half).abs() > config.kink_tolerance * numeric.abs().max(1.0) {
            report.unreliable.push((ParamId(coord.0), coord.1));
            continue;
        }
        let analytic = grads.get(ParamId(coord.0))?.data()[coord.1];
        let err = (analytic - numeric).abs() / numeric.abs().max(1.0);
        report.max_rel_error = report.max_rel_error.max(err);
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn quadratic_is_essentially_exact() {
        let p = Tensor::new(vec![4], vec![0.5, -1.25, 2.0, 3.0]).unwrap();
        let report = finite_diff_check(
            |tape, v| {
                let sq = tape.mul(v[0], v[0])?;
                let s = tape.sum(sq);
                Ok(tape.scale(s, 0.5))
            },
            &[p],
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(report.checked, 4);
        assert!(report.max_rel_error <= 1e-9, "{}", report.max_rel_error);
    }

    #[test]
    fn softmax_then_weighted_sum() {
        let p = Tensor::matrix(2, 3, vec![0.1, -0.4, 1.2, 2.0, 0.0, -1.0]).unwrap();
        let w = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 4.0]).unwrap();
        let report = finite_diff_check(
            |tape, v| {
                let s = tape.softmax_rows(v[0])?;
                let m = tape.mul_const(s, w.clone())?;
                Ok(tape.sum(m))
            },
            &[p],
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-6, "{}", report.max_rel_error);
    }

    #[test]
    fn hard_mask_boundary_is_flagged() {
        // f(x) = sum over positive entries; the first entry sits just above the kink.
        let p = Tensor::new(vec![2], vec![1e-6, 0.8]).unwrap();
        let report = finite_diff_check(
            |tape, v| {
                let keep = tape.value(v[0]).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                let m = tape.mul_const(v[0], keep)?;
                Ok(tape.sum(m))
            },
            &[p],
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(report.unreliable, vec![(ParamId(0), 0)]);
        assert_eq!(report.checked, 1);
        assert!(report.max_rel_error <= 1e-9);
    }

    #[test]
    fn nondeterminism_detected() {
        let counter = Cell::new(0.0);
        let result = finite_diff_check(
            |tape, v| {
                counter.set(counter.get() + 1.0);
                let c = tape.constant(Tensor::scalar(counter.get()));
                tape.add(v[0], c)
            },
            &[Tensor::scalar(1.0)],
            &GradCheckConfig::default(),
        );
        assert!(matches!(
            result,
            Err(NumericsError::NonDeterministicFunction { .. })
        ));
    }
}
