//! Finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::params::{Gradients, ParamSet};
use super::tensor::{Float, Precision};
use crate::error::{Error, Result};

/// One evaluation of a scalar objective.
pub struct Evaluation<T> {
    pub loss: T,
    /// Only requested for the unperturbed evaluation.
    pub gradients: Option<Gradients<T>>,
    /// See [`crate::numerics::Tape::kink_fingerprint`].
    pub kink_fingerprint: u64,
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Relative step: each coordinate is perturbed by `step * max(1, |θ|)`.
    pub step: f64,
    /// Checks every coordinate when `None`; otherwise a seeded sample of this many
    /// coordinates per tensor (tensors at or below the limit are checked in full).
    pub max_coords_per_tensor: Option<usize>,
    /// How many times the step is divided by ten when the perturbation crosses a
    /// ReLU kink or log clamp before the coordinate is skipped.
    pub kink_retries: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            max_coords_per_tensor: None,
            kink_retries: 2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub skipped_at_kinks: usize,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// `|a - b| / max(|a| + |b|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the reverse-mode gradient of `objective` at `params` against central
/// differences. Requires 64-bit parameters. The objective's second argument says
/// whether gradients are wanted.
pub fn grad_check<T, F>(params: &ParamSet<T>, objective: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    T: Float,
    F: Fn(&ParamSet<T>, bool) -> Result<Evaluation<T>>,
{
    if T::PRECISION != Precision::Verification {
        return Err(Error::Invalid(
            "gradient checks need verification (64-bit) precision".into(),
        ));
    }
    let base = objective(params, true)?;
    let gradients = base
        .gradients
        .as_ref()
        .ok_or_else(|| Error::Invalid("objective returned no gradients".into()))?;
    let mut work = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut tensors = Vec::with_capacity(params.len());

    for (id, name, tensor) in params.iter() {
        let len = tensor.len();
        let analytic = gradients.dense(id, len);
        let coords: Vec<usize> = match opts.max_coords_per_tensor {
            Some(k) if k < len => {
                let mut picked = sample(&mut rng, len, k).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..len).collect(),
        };

        let mut check = TensorCheck {
            name: name.to_string(),
            checked: 0,
            skipped_at_kinks: 0,
            max_rel_error: 0.0,
            worst_index: None,
        };
        for &c in &coords {
            let original = tensor.data()[c];
            let mut numeric = None;
            let mut step = opts.step;
            for _ in 0..=opts.kink_retries {
                let h = T::of(step) * original.abs().max(T::one());
                work.get_mut(id).data_mut()[c] = original + h;
                let plus = objective(&work, false)?;
                work.get_mut(id).data_mut()[c] = original - h;
                let minus = objective(&work, false)?;
                work.get_mut(id).data_mut()[c] = original;
                if plus.kink_fingerprint == base.kink_fingerprint
                    && minus.kink_fingerprint == base.kink_fingerprint
                {
                    // Use the realised step so rounding in θ ± h does not bias the quotient.
                    let span = ((original + h) - (original - h)).as_f64();
                    numeric = Some((plus.loss - minus.loss).as_f64() / span);
                    break;
                }
                step /= 10.0;
            }
            match numeric {
                Some(fd) => {
                    let err = relative_error(analytic[c].as_f64(), fd);
                    check.checked += 1;
                    if err > check.max_rel_error || check.worst_index.is_none() {
                        check.max_rel_error = check.max_rel_error.max(err);
                        check.worst_index = Some(c);
                    }
                }
                None => check.skipped_at_kinks += 1,
            }
        }
        tensors.push(check);
    }
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        tensors,
        max_rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Tape, Tensor};

    #[test]
    fn quadratic_is_exact() {
        let mut p = ParamSet::<f64>::new();
        let id = p.insert("theta", Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap()).unwrap();
        let objective = |ps: &ParamSet<f64>, with_gradients: bool| {
            let mut tape = Tape::new(ps);
            let v = tape.param(id);
            let sq = tape.mul(v, v)?;
            let loss = tape.sum(sq);
            Ok(Evaluation {
                loss: tape.value(loss).data()[0],
                gradients: if with_gradients { Some(tape.backward(loss)?) } else { None },
                kink_fingerprint: tape.kink_fingerprint(),
            })
        };
        let base = objective(&p, true).unwrap();
        assert_eq!(base.gradients.unwrap().dense(id, 2), vec![2.0, 4.0]);
        let report = grad_check(&p, objective, &GradCheckOptions::default()).unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
    }

    #[test]
    fn refuses_standard_precision() {
        let p = ParamSet::<f32>::new();
        let r = grad_check(
            &p,
            |_, _| -> Result<Evaluation<f32>> { unreachable!() },
            &GradCheckOptions::default(),
        );
        assert!(r.is_err());
    }
}
