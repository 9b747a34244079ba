use super::schedule::ClipPolicy;
use crate::error::{Error, Result};
use crate::model::params::{Gradients, ModelParams};
use crate::tensor::{clip_by_norm, sum_sq};

/// `params -= lr * clip(grads)`, then re-pins null columns. `grads` is
/// clipped in place.
pub fn sgd_step(params: &mut ModelParams, grads: &mut Gradients, lr: f64, clip: ClipPolicy) -> Result<()> {
    for ((name, _), g) in params.named().zip(grads.tensors()) {
        if !g.is_finite() {
            return Err(Error::NonFinite {
                what: format!("gradient of `{name}`"),
            });
        }
    }
    match clip {
        ClipPolicy::None => {}
        ClipPolicy::PerTensor(max) => {
            for g in grads.tensors_mut() {
                clip_by_norm(g.as_mut_slice(), max);
            }
        }
        ClipPolicy::Global(max) => {
            let norm = grads.tensors().iter().map(|g| sum_sq(g.as_slice())).sum::<f64>().sqrt();
            if norm > max {
                let factor = max / norm;
                grads.tensors_mut().iter_mut().for_each(|g| g.scale(factor));
            }
        }
    }
    params.add_scaled(grads, -lr);
    params.zero_null();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::{ModelConfig, Tying};
    use crate::model::params::ParamSet;
    use crate::tensor::seeded_rng;

    fn params() -> ModelParams {
        let cfg = ModelConfig {
            dim: 3,
            hops: 2,
            capacity: 4,
            tying: Tying::LayerWise,
            ..ModelConfig::qa()
        };
        ParamSet::gaussian(&cfg, 5, 4, 0.1, &mut seeded_rng(0, 0))
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let p0 = params();
        let mut p = p0.clone();
        let mut g = p.zeros_like();
        g.fill(3.0);
        sgd_step(&mut p, &mut g, 0.0, ClipPolicy::None).unwrap();
        assert_eq!(p, p0);
    }

    #[test]
    fn plain_step() {
        let mut p = params();
        let before = p.tensor(0)[(0, 0)];
        let mut g = p.zeros_like();
        g.tensor_mut(0)[(0, 0)] = 2.0;
        sgd_step(&mut p, &mut g, 0.1, ClipPolicy::None).unwrap();
        assert_eq!(p.tensor(0)[(0, 0)], before - 0.2);
    }

    #[test]
    fn per_tensor_clip_uses_norm_40() {
        let mut p = params();
        let p0 = p.clone();
        let mut g = p.zeros_like();
        // norm 80 on one tensor, norm 5 on another
        g.tensor_mut(0)[(0, 0)] = 48.0;
        g.tensor_mut(0)[(1, 1)] = 64.0;
        g.tensor_mut(1)[(0, 0)] = 3.0;
        g.tensor_mut(1)[(0, 1)] = 4.0;
        sgd_step(&mut p, &mut g, 1.0, ClipPolicy::PerTensor(40.0)).unwrap();
        assert!((p0.tensor(0)[(0, 0)] - p.tensor(0)[(0, 0)] - 24.0).abs() < 1e-12);
        assert!((p0.tensor(0)[(1, 1)] - p.tensor(0)[(1, 1)] - 32.0).abs() < 1e-12);
        assert!((p0.tensor(1)[(0, 1)] - p.tensor(1)[(0, 1)] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn global_clip_bounds_whole_update() {
        let mut p = params();
        let p0 = p.clone();
        let mut g = p.zeros_like();
        g.fill(10.0);
        sgd_step(&mut p, &mut g, 0.5, ClipPolicy::Global(50.0)).unwrap();
        let mut delta = p.clone();
        delta.add_scaled(&p0, -1.0);
        assert!(delta.norm() <= 0.5 * 50.0 * (1.0 + 1e-12));
    }

    #[test]
    fn null_columns_stay_zero_and_nan_aborts() {
        let mut p = params();
        let mut g = p.zeros_like();
        g.fill(1.0);
        sgd_step(&mut p, &mut g, 0.1, ClipPolicy::None).unwrap();
        assert!(p.input(0).column(4).iter().all(|&x| x == 0.0));
        g.tensor_mut(2)[(0, 0)] = f64::NAN;
        assert!(matches!(
            sgd_step(&mut p, &mut g, 0.1, ClipPolicy::None),
            Err(Error::NonFinite { .. })
        ));
    }
}
