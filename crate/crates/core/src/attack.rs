//! Projected gradient descent in raw pixel space under an L∞ budget.
//!
//! Each iterate takes a signed gradient step of size `alpha` on the
//! cross-entropy and is projected back onto the ε-ball around the clean image
//! intersected with `[0, 1]`.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::AttackError;
use crate::model::{argmax_rows, forward, loss_and_input_gradient, Classifier};
use crate::rng::rng_from_seed;
use crate::scalar::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct AttackConfig {
    /// L∞ budget in pixel units.
    pub epsilon: f64,
    /// Step size in pixel units.
    pub alpha: f64,
    pub steps: usize,
    /// Start from a uniform draw in the ε-ball instead of the clean image.
    pub random_start: bool,
    /// Descend the loss of the given labels instead of ascending it.
    pub targeted: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilon: 8.0 / 255.0,
            alpha: 2.0 / 255.0,
            steps: 10,
            random_start: false,
            targeted: false,
        }
    }
}

impl AttackConfig {
    /// `0 ≤ ε ≤ 1`, `α > 0`, `steps ≥ 1`. A zero budget is allowed and yields
    /// the identity attack.
    pub fn validate(&self) -> Result<(), AttackError> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(AttackError::Config(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(AttackError::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.steps == 0 {
            return Err(AttackError::Config("steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-sample distance between a clean and a perturbed image.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerturbationMetrics {
    pub linf: f64,
    pub l2: f64,
    /// `10·log10(1 / MSE)` with peak 1; `+∞` for identical images.
    pub psnr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackResult<T: Real = f32> {
    pub adversarial: Tensor<T>,
    pub metrics: Vec<PerturbationMetrics>,
    /// Per sample, the loss at every iterate `x_0 ..= x_steps`.
    pub loss_trajectory: Vec<Vec<f64>>,
    pub clean_predictions: Vec<usize>,
    pub adversarial_predictions: Vec<usize>,
    /// Adversarial prediction differs from the clean prediction.
    pub success: Vec<bool>,
}

fn check_same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(), AttackError> {
    if a.shape() != b.shape() {
        return Err(AttackError::Tensor(crate::TensorError::ShapeMismatch {
            op: "attack",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        }));
    }
    Ok(())
}

/// Clamps every pixel of `x` into `[x_orig − ε, x_orig + ε] ∩ [0, 1]`.
pub fn project<T: Real>(x: &Tensor<T>, x_orig: &Tensor<T>, epsilon: f64) -> Result<Tensor<T>, AttackError> {
    check_same_shape(x, x_orig)?;
    let eps = T::from_f64(epsilon);
    let data = x
        .data()
        .iter()
        .zip(x_orig.data())
        .map(|(&v, &o)| {
            let lo = (o - eps).max(T::ZERO);
            let hi = (o + eps).min(T::ONE);
            v.max(lo).min(hi)
        })
        .collect();
    Ok(Tensor::new(x.shape(), data)?)
}

/// `x ± α·sign(grad)` without projection; `sign(0) = 0`.
pub fn sign_step<T: Real>(x: &Tensor<T>, grad: &Tensor<T>, alpha: f64, descend: bool) -> Tensor<T> {
    let a = T::from_f64(if descend { -alpha } else { alpha });
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| v + a * g.sign())
        .collect();
    Tensor::new(x.shape(), data).expect("shape preserved")
}

/// L∞, L2 and PSNR per leading-axis sample.
pub fn perturbation_metrics<T: Real>(
    clean: &Tensor<T>,
    adv: &Tensor<T>,
) -> Result<Vec<PerturbationMetrics>, AttackError> {
    check_same_shape(clean, adv)?;
    let n = clean.shape()[0];
    let per = clean.numel() / n;
    Ok(clean
        .data()
        .chunks_exact(per)
        .zip(adv.data().chunks_exact(per))
        .map(|(c, a)| {
            let mut linf: f64 = 0.0;
            let mut sq = 0.0;
            for (&x, &y) in c.iter().zip(a) {
                let d = (y.to_f64() - x.to_f64()).abs();
                linf = linf.max(d);
                sq += d * d;
            }
            let mse = sq / per as f64;
            let psnr = if mse == 0.0 {
                f64::INFINITY
            } else {
                10.0 * libm::log10(1.0 / mse)
            };
            PerturbationMetrics {
                linf,
                l2: libm::sqrt(sq),
                psnr,
            }
        })
        .collect())
}

fn check_unit_range<T: Real>(x: &Tensor<T>) -> Result<(), AttackError> {
    if x.data().iter().all(|&v| v >= T::ZERO && v <= T::ONE) {
        Ok(())
    } else {
        Err(AttackError::PixelRange)
    }
}

/// Untargeted (or targeted) L∞ PGD against `model`. `seed` drives the random
/// start only. `labels` are true labels, or target labels when targeted.
pub fn pgd_attack<T: Real, C: Classifier<T> + ?Sized>(
    model: &C,
    images: &Tensor<T>,
    labels: &[usize],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<AttackResult<T>, AttackError> {
    cfg.validate()?;
    check_unit_range(images)?;
    let n = images.shape()[0];
    let per = images.numel() / n;

    let mut x = if cfg.random_start {
        let mut rng = rng_from_seed(seed);
        let data = images
            .data()
            .iter()
            .map(|&v| v + T::from_f64(cfg.epsilon * (2.0 * rng.random::<f64>() - 1.0)))
            .collect();
        let noisy = Tensor::new(images.shape(), data)?;
        project(&noisy, images, cfg.epsilon)?
    } else {
        images.clone()
    };

    let mut trajectory: Vec<Vec<f64>> = (0..n).map(|_| Vec::with_capacity(cfg.steps + 1)).collect();
    let mut clean_predictions = None;
    for step in 0..cfg.steps {
        let out = loss_and_input_gradient(model, &x, labels)?;
        for (t, &l) in trajectory.iter_mut().zip(&out.losses) {
            t.push(l.to_f64());
        }
        if step == 0 && !cfg.random_start {
            clean_predictions = Some(argmax_rows(&out.logits));
        }
        if let Some(bad) = out.grad.data().iter().position(|g| !g.is_finite()) {
            return Err(AttackError::NonFiniteGradient {
                step,
                sample: bad / per,
            });
        }
        let stepped = sign_step(&x, &out.grad, cfg.alpha, cfg.targeted);
        x = project(&stepped, images, cfg.epsilon)?;
    }

    let final_logits = forward(model, &x)?;
    let (final_losses, _) = crate::autodiff::cross_entropy_rows(&final_logits, labels)?;
    for (t, &l) in trajectory.iter_mut().zip(&final_losses) {
        t.push(l.to_f64());
    }
    let clean_predictions = match clean_predictions {
        Some(p) => p,
        None => argmax_rows(&forward(model, images)?),
    };
    let adversarial_predictions = argmax_rows(&final_logits);
    let success = clean_predictions
        .iter()
        .zip(&adversarial_predictions)
        .map(|(a, b)| a != b)
        .collect();
    Ok(AttackResult {
        metrics: perturbation_metrics(images, &x)?,
        adversarial: x,
        loss_trajectory: trajectory,
        clean_predictions,
        adversarial_predictions,
        success,
    })
}

/// `x + ε·s` with independent uniform signs `s ∈ {−1, +1}`, clamped to
/// `[0, 1]`: the random-direction baseline at the same L∞ budget.
pub fn sign_noise<T: Real>(images: &Tensor<T>, epsilon: f64, seed: u64) -> Tensor<T> {
    let mut rng = rng_from_seed(seed);
    let eps = T::from_f64(epsilon);
    let data = images
        .data()
        .iter()
        .map(|&v| {
            let s = if rng.random_bool(0.5) { eps } else { -eps };
            (v + s).max(T::ZERO).min(T::ONE)
        })
        .collect();
    Tensor::new(images.shape(), data).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Graph, Var};
    use crate::error::ModelError;
    use proptest::prelude::*;

    /// Two-pixel logistic model: logits `[0, w·x + b]`.
    struct Logistic {
        w: [f64; 2],
        b: f64,
    }

    impl<T: Real> Classifier<T> for Logistic {
        fn input_dims(&self) -> [usize; 3] {
            [1, 1, 2]
        }

        fn num_classes(&self) -> usize {
            2
        }

        fn logits(&self, g: &mut Graph<T>, images: Var) -> Result<Var, ModelError> {
            let n = g.shape(images)[0];
            let x = g.reshape(images, &[n, 2])?;
            let w = g.constant(Tensor::from_f64(&[2, 2], &[0.0, self.w[0], 0.0, self.w[1]])?);
            let b = g.constant(Tensor::from_f64(&[2], &[0.0, self.b])?);
            let z = g.matmul(x, w)?;
            Ok(g.add(z, b)?)
        }
    }

    fn pixels(v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(&[v.len() / 2, 1, 1, 2], v).unwrap()
    }

    #[test]
    fn project_examples() {
        let t = |v: f64| Tensor::<f64>::from_f64(&[1], &[v]).unwrap();
        assert_eq!(project(&t(0.6), &t(0.5), 0.03).unwrap().data()[0], 0.53);
        assert_eq!(project(&t(-0.2), &t(0.01), 0.05).unwrap().data()[0], 0.0);
        assert_eq!(project(&t(0.4), &t(0.4), 0.1).unwrap().data()[0], 0.4);
        assert!(project(&t(0.4), &Tensor::zeros(&[2]), 0.1).is_err());
    }

    #[test]
    fn metrics_examples() {
        let clean = Tensor::<f64>::zeros(&[2, 10]);
        let mut shifted = clean.clone();
        shifted.data_mut()[..10].iter_mut().for_each(|v| *v = 0.01);
        let m = perturbation_metrics(&clean, &shifted).unwrap();
        assert!((m[0].linf - 0.01).abs() < 1e-15);
        assert!((m[0].l2 - 0.01 * 10f64.sqrt()).abs() < 1e-15);
        // MSE = 1e-4 → 40 dB.
        assert!((m[0].psnr - 40.0).abs() < 1e-9);
        assert_eq!(m[1].linf, 0.0);
        assert_eq!(m[1].l2, 0.0);
        assert_eq!(m[1].psnr, f64::INFINITY);
    }

    #[test]
    fn config_validation() {
        assert!(AttackConfig::default().validate().is_ok());
        let bad = |f: fn(&mut AttackConfig)| {
            let mut c = AttackConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.epsilon = -0.1));
        assert!(bad(|c| c.epsilon = 1.5));
        assert!(bad(|c| c.alpha = 0.0));
        assert!(bad(|c| c.steps = 0));
    }

    /// Three PGD iterates on the logistic toy against a scalar hand
    /// computation. With label 1 the loss is `softplus(−z)`, whose pixel
    /// gradient has sign `−sign(w)`: pixel 0 walks down by α until the ε-ball
    /// stops it, pixel 1 walks up until the `[0, 1]` box stops it.
    #[test]
    fn three_iterates_match_hand_oracle() {
        let model = Logistic { w: [2.0, -1.0], b: 0.1 };
        let cfg = AttackConfig {
            epsilon: 0.1,
            alpha: 0.04,
            steps: 3,
            random_start: false,
            targeted: false,
        };
        let x0 = [0.3, 0.95];
        // x1 = (0.26, 0.99); x2 = (0.22, 1.0); x3 = (max(0.18, 0.2), 1.0).
        let expected = [[0.26, 0.99], [0.22, 1.0], [0.2, 1.0]];
        for (t, want) in expected.iter().enumerate() {
            let partial = AttackConfig { steps: t + 1, ..cfg };
            let got = pgd_attack(&model, &pixels(&x0), &[1], &partial, 0).unwrap().adversarial;
            for (c, (v, w)) in got.data().iter().zip(want).enumerate() {
                assert!((v - w).abs() < 1e-6, "iterate {} pixel {c}: {v}", t + 1);
            }
        }
        let full = pgd_attack(&model, &pixels(&x0), &[1], &cfg, 0).unwrap();
        // softplus(−z) at each iterate.
        let loss = |p: [f64; 2]| {
            let z = 2.0 * p[0] - p[1] + 0.1;
            (1.0 + (-z).exp()).ln()
        };
        let mut want = vec![loss(x0)];
        want.extend(expected.iter().map(|&p| loss(p)));
        for (g, w) in full.loss_trajectory[0].iter().zip(&want) {
            assert!((g - w).abs() < 1e-6);
        }
    }

    #[test]
    fn targeted_mode_descends_toward_the_target() {
        let model = Logistic { w: [2.0, -1.0], b: 0.1 };
        let cfg = AttackConfig {
            epsilon: 0.1,
            alpha: 0.04,
            steps: 1,
            random_start: false,
            targeted: true,
        };
        // Target 1: descend softplus(−z) → move along +sign(w).
        let r = pgd_attack(&model, &pixels(&[0.3, 0.5]), &[1], &cfg, 0).unwrap();
        assert!((r.adversarial.data()[0] - 0.34).abs() < 1e-12);
        assert!((r.adversarial.data()[1] - 0.46).abs() < 1e-12);
        assert!(r.loss_trajectory[0][1] < r.loss_trajectory[0][0]);
    }

    #[test]
    fn zero_budget_is_identity() {
        let model = Logistic { w: [3.0, 1.0], b: -2.0 };
        let x = pixels(&[0.1, 0.9, 0.5, 0.5, 1.0, 0.0]);
        let cfg = AttackConfig {
            epsilon: 0.0,
            random_start: true,
            ..AttackConfig::default()
        };
        let r = pgd_attack(&model, &x, &[0, 1, 1], &cfg, 7).unwrap();
        assert_eq!(r.adversarial, x);
        assert!(r.success.iter().all(|s| !s));
    }

    #[test]
    fn rejects_out_of_range_images() {
        let model = Logistic { w: [1.0, 1.0], b: 0.0 };
        let r = pgd_attack(&model, &pixels(&[0.5, 1.2]), &[0], &AttackConfig::default(), 0);
        assert!(matches!(r, Err(AttackError::PixelRange)));
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let model = Logistic { w: [f64::NAN, 1.0], b: 0.0 };
        // The NaN surfaces either in a checked forward op or in the gradient;
        // either way no NaN pixels are emitted.
        let r = pgd_attack(&model, &pixels(&[0.5, 0.5]), &[0], &AttackConfig::default(), 0);
        assert!(r.is_err());
    }

    #[test]
    fn single_step_equals_signed_gradient_method() {
        let model = Logistic { w: [0.7, -0.4], b: 0.3 };
        let x = pixels(&[0.2, 0.6, 0.9, 0.1]);
        let labels = [0, 1];
        let cfg = AttackConfig {
            epsilon: 0.05,
            alpha: 0.03,
            steps: 1,
            ..AttackConfig::default()
        };
        let r = pgd_attack(&model, &x, &labels, &cfg, 0).unwrap();
        let grad = crate::model::input_gradient(&model, &x, &labels).unwrap();
        let want = project(&sign_step(&x, &grad, 0.03, false), &x, 0.05).unwrap();
        assert_eq!(r.adversarial, want);
    }

    #[test]
    fn sign_noise_stays_in_budget() {
        let x = Tensor::<f32>::full(&[4, 3, 2, 2], 0.5);
        let y = sign_noise(&x, 0.03, 9);
        assert!(y
            .data()
            .iter()
            .all(|&v| (v - 0.5).abs() <= 0.03 + 1e-7 && (v - 0.5).abs() > 0.029));
        assert_eq!(y, sign_noise(&x, 0.03, 9));
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_contained(
            pairs in proptest::collection::vec((0f32..=1.0, -0.5f32..1.5), 1..64),
            eps in 0f64..0.5,
        ) {
            let orig = Tensor::new(&[pairs.len()], pairs.iter().map(|p| p.0).collect()).unwrap();
            let x = Tensor::new(&[pairs.len()], pairs.iter().map(|p| p.1).collect()).unwrap();
            let once = project(&x, &orig, eps).unwrap();
            let twice = project(&once, &orig, eps).unwrap();
            prop_assert_eq!(&once, &twice);
            for (&p, &o) in once.data().iter().zip(orig.data()) {
                prop_assert!((0.0..=1.0).contains(&p));
                prop_assert!(((p - o).abs() as f64) <= eps + 1e-6);
            }
        }

        #[test]
        fn sign_steps_move_by_alpha(
            vals in proptest::collection::vec((0f64..=1.0, -1f64..1.0), 1..32),
            alpha in 1e-3f64..0.1,
        ) {
            let x = Tensor::new(&[vals.len()], vals.iter().map(|v| v.0).collect()).unwrap();
            let g = Tensor::new(&[vals.len()], vals.iter().map(|v| if v.1.abs() < 0.2 { 0.0 } else { v.1 }).collect()).unwrap();
            let s = sign_step(&x, &g, alpha, false);
            for ((&a, &b), &gi) in s.data().iter().zip(x.data()).zip(g.data()) {
                let d = a - b;
                let want = if gi > 0.0 { alpha } else if gi < 0.0 { -alpha } else { 0.0 };
                prop_assert!((d - want).abs() < 1e-12);
            }
        }
    }
}
