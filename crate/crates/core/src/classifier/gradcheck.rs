use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{EncodedPatch, PointSetModel};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Initial central-difference step. It is divided by 4, at most
    /// `max_shrinks` times, until both probes stay in the linear region of
    /// the unperturbed parameters.
    pub step: f64,
    pub max_shrinks: usize,
    /// Check at most this many entries per weight/bias tensor, chosen at
    /// random; `None` checks every parameter.
    pub per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { step: 1e-4, max_shrinks: 8, per_tensor: None, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Entries left out because a probe crossed a ReLU or pooling switch
    /// at every step tried.
    pub at_kink: usize,
    /// True when every analytic gradient and difference quotient was finite.
    pub finite: bool,
}

/// Compares the analytic gradient of the single-patch loss with central
/// finite differences over every parameter and returns the largest
/// `|analytic - fd| / max(|analytic|, |fd|, 1e-8)`. A difference is only
/// taken inside one linear region of the network, where the loss is smooth.
pub fn backward_check(model: &PointSetModel, patch: &EncodedPatch, pd: bool) -> Result<f64> {
    Ok(backward_check_with(model, patch, pd, &GradCheckOptions::default())?.max_relative_error)
}

pub fn backward_check_with(
    model: &PointSetModel,
    patch: &EncodedPatch,
    pd: bool,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let (_, grads, _) = model.loss_and_gradients(&[patch], &[pd])?;
    let analytic: Vec<Vec<f64>> = grads
        .layers()
        .flat_map(|l| [l.weight.iter().copied().collect(), l.bias.to_vec()])
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = model.clone();
    let mut max_err = 0.0f64;
    let mut checked = 0;
    let mut finite = true;
    let mut at_kink = 0;
    let (_, region) = model.loss_and_region(patch, pd)?;
    for (t, grad) in analytic.iter().enumerate() {
        let indices: Vec<usize> = match opts.per_tensor {
            Some(k) if k < grad.len() => {
                let mut idx = sample(&mut rng, grad.len(), k).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..grad.len()).collect(),
        };
        for i in indices {
            let original = param(&mut probe, t, i);
            let mut step = opts.step;
            let mut fd = None;
            for _ in 0..=opts.max_shrinks {
                *param_mut(&mut probe, t, i) = original + step;
                let (plus, r_plus) = probe.loss_and_region(patch, pd)?;
                *param_mut(&mut probe, t, i) = original - step;
                let (minus, r_minus) = probe.loss_and_region(patch, pd)?;
                if r_plus == region && r_minus == region {
                    fd = Some((plus - minus) / (2.0 * step));
                    break;
                }
                step /= 4.0;
            }
            *param_mut(&mut probe, t, i) = original;

            let Some(fd) = fd else {
                at_kink += 1;
                continue;
            };
            let a = grad[i];
            finite &= fd.is_finite() && a.is_finite();
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            max_err = max_err.max(err);
            checked += 1;
        }
    }
    Ok(GradCheckReport { max_relative_error: max_err, checked, at_kink, finite })
}

fn param(model: &mut PointSetModel, tensor: usize, i: usize) -> f64 {
    *param_mut(model, tensor, i)
}

fn param_mut(model: &mut PointSetModel, tensor: usize, i: usize) -> &mut f64 {
    let layer = model.layers_mut().nth(tensor / 2).expect("tensor index");
    if tensor.is_multiple_of(2) {
        layer.weight.iter_mut().nth(i).expect("weight index")
    } else {
        &mut layer.bias[i]
    }
}
