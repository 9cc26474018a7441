//! Adam with bias correction.

use alloc::vec::Vec;

use crate::error::TrainError;
use crate::model::ParamStore;
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment estimates, one per parameter in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T: Real = f32> {
    /// Completed update count.
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    /// Zero moments shaped like `params`.
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros: Vec<Tensor<T>> = params.iter().map(|p| Tensor::zeros(p.tensor.shape())).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Checks that the moments line up with `params`.
    pub fn check(&self, params: &ParamStore<T>) -> Result<(), TrainError> {
        if self.m.len() != params.len() || self.v.len() != params.len() {
            return Err(TrainError::OptimizerState(alloc::format!(
                "{} parameters but {} / {} moment tensors",
                params.len(),
                self.m.len(),
                self.v.len()
            )));
        }
        for ((p, m), v) in params.iter().zip(&self.m).zip(&self.v) {
            if m.shape() != p.tensor.shape() || v.shape() != p.tensor.shape() {
                return Err(TrainError::OptimizerState(alloc::format!(
                    "moment shape mismatch for `{}`",
                    p.name
                )));
            }
        }
        Ok(())
    }

    /// One update of every parameter with learning rate `lr`. Nothing is
    /// modified when any gradient is non-finite.
    pub fn update(&mut self, params: &mut ParamStore<T>, grads: &[Tensor<T>], lr: f64) -> Result<(), TrainError> {
        self.check(params)?;
        if grads.len() != params.len() {
            return Err(TrainError::OptimizerState(alloc::format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if g.shape() != p.tensor.shape() {
                return Err(TrainError::OptimizerState(alloc::format!(
                    "gradient shape mismatch for `{}`",
                    p.name
                )));
            }
            if !g.all_finite() {
                return Err(TrainError::NonFiniteGradient(p.name.clone()));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let b1 = T::from_f64(BETA1);
        let b2 = T::from_f64(BETA2);
        let one_b1 = T::from_f64(1.0 - BETA1);
        let one_b2 = T::from_f64(1.0 - BETA2);
        let c1 = T::from_f64(1.0 / (1.0 - libm::pow(BETA1, t)));
        let c2 = T::from_f64(1.0 / (1.0 - libm::pow(BETA2, t)));
        let lr = T::from_f64(lr);
        let eps = T::from_f64(EPSILON);
        for (((p, g), m), v) in params.tensors_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((w, &gi), (mi, vi)) in it {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                let m_hat = *mi * c1;
                let v_hat = *vi * c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::from_f64(&[1], &[v]).unwrap()).unwrap();
        s
    }

    fn grad(v: f64) -> Vec<Tensor<f64>> {
        vec![Tensor::from_f64(&[1], &[v]).unwrap()]
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar_store(0.25);
        let mut opt = Adam::new(&p);
        for _ in 0..3 {
            opt.update(&mut p, &grad(0.0), 1e-2).unwrap();
        }
        assert_eq!(p.get("w").unwrap().data()[0], 0.25);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [1e-3, 0.5, -7.0, 300.0] {
            let mut p = scalar_store(1.0);
            let mut opt = Adam::new(&p);
            opt.update(&mut p, &grad(g), 1e-4).unwrap();
            let delta = p.get("w").unwrap().data()[0] - 1.0;
            assert!((delta.abs() - 1e-4).abs() < 1e-6, "g={g}: {delta}");
            assert_eq!(delta.signum(), -g.signum());
        }
    }

    /// Three steps with gradients 1, −2, 0.5 at lr 0.1 against the recurrences
    /// evaluated by hand:
    ///   m1 = 0.1,        v1 = 0.001,        Δ1 = −0.1/(1 + 1e-8)
    ///   m2 = −0.11,      v2 = 0.004999,     m̂2 = −0.11/0.19,  v̂2 = 0.004999/0.001999
    ///   m3 = −0.049,     v3 = 0.005244001,  m̂3 = −0.049/0.271, v̂3 = 0.005244001/0.002997001
    #[test]
    fn three_step_trace_matches_hand_recurrence() {
        let mut p = scalar_store(0.0);
        let mut opt = Adam::new(&p);
        let lr = 0.1;
        let expected_updates = [
            -lr * 1.0 / (1.0 + 1e-8),
            -lr * (-0.11 / 0.19) / ((0.004999f64 / 0.001999).sqrt() + 1e-8),
            -lr * (-0.049 / 0.271) / ((0.005244001f64 / 0.002997001).sqrt() + 1e-8),
        ];
        let mut want = 0.0;
        for (g, du) in [1.0, -2.0, 0.5].into_iter().zip(expected_updates) {
            opt.update(&mut p, &grad(g), lr).unwrap();
            want += du;
            let got = p.get("w").unwrap().data()[0];
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert_eq!(opt.step, 3);
        assert!((opt.m[0].data()[0] - -0.049).abs() < 1e-14);
        assert!((opt.v[0].data()[0] - 0.005244001).abs() < 1e-14);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_side_effects() {
        let mut p = scalar_store(0.5);
        let mut opt = Adam::new(&p);
        let before = (p.clone(), opt.clone());
        assert!(matches!(
            opt.update(&mut p, &grad(f64::NAN), 0.1),
            Err(TrainError::NonFiniteGradient(_))
        ));
        assert_eq!((p, opt), before);
    }
}
