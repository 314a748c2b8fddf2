//! 3-60-3 multilayer perceptron with logistic units, trained by online
//! backpropagation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::SampleSet;
use crate::scalar::Scalar;

pub const MLP_INPUTS: usize = 3;
pub const MLP_HIDDEN: usize = 60;
pub const MLP_OUTPUTS: usize = 3;

/// Sigmoid targets for the true class and the others.
pub const TARGET_ON: f64 = 0.9;
pub const TARGET_OFF: f64 = 0.1;

/// How the per-epoch training error compared against `target_error` is
/// computed from the squared output errors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMeasure {
    /// Root of the mean over samples and outputs.
    #[default]
    Rms,
    /// Mean over samples and outputs.
    Mse,
}

impl ErrorMeasure {
    fn of_mse(self, mse: f64) -> f64 {
        match self {
            ErrorMeasure::Rms => mse.sqrt(),
            ErrorMeasure::Mse => mse,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub eta0: f64,
    /// Epoch training error at which training stops.
    pub target_error: f64,
    #[serde(default)]
    pub error_measure: ErrorMeasure,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { eta0: 0.2, target_error: 0.05, error_measure: ErrorMeasure::Rms, max_epochs: 1000, seed: 1 }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0) {
            return Err(Error::InvalidValue(format!("MLP eta0 {} must be > 0", self.eta0)));
        }
        if !(self.target_error > 0.0 && self.target_error < 1.0) {
            return Err(Error::InvalidValue(format!(
                "MLP target error {} must lie in (0, 1)",
                self.target_error
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidValue("MLP max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel<T = f64> {
    /// Row `j` holds the three input weights of hidden unit `j`, then its bias.
    pub hidden_weights: Vec<[T; MLP_INPUTS + 1]>,
    /// Row `k` holds the 60 hidden weights of output `k`, then its bias.
    pub output_weights: Vec<Vec<T>>,
    /// Epochs actually run and the last epoch's mean squared error
    /// (over samples and outputs).
    pub epochs: usize,
    pub final_mse: Option<f64>,
}

/// Gradient of the per-sample loss `½·Σ (y − t)²`, laid out like the model.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGradient<T> {
    pub hidden: Vec<[T; MLP_INPUTS + 1]>,
    pub output: Vec<Vec<T>>,
}

fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

impl<T: Scalar> MlpModel<T> {
    /// Uniform initialization in `±1/sqrt(fan_in)` from a seeded generator.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rh = 1.0 / ((MLP_INPUTS + 1) as f64).sqrt();
        let ro = 1.0 / ((MLP_HIDDEN + 1) as f64).sqrt();
        let hidden_weights = (0..MLP_HIDDEN)
            .map(|_| std::array::from_fn(|_| T::lit(rng.random_range(-rh..rh))))
            .collect();
        let output_weights = (0..MLP_OUTPUTS)
            .map(|_| (0..=MLP_HIDDEN).map(|_| T::lit(rng.random_range(-ro..ro))).collect())
            .collect();
        MlpModel { hidden_weights, output_weights, epochs: 0, final_mse: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_weights.len() != MLP_HIDDEN
            || self.output_weights.len() != MLP_OUTPUTS
            || self.output_weights.iter().any(|r| r.len() != MLP_HIDDEN + 1)
        {
            return Err(Error::Dimension("MLP layers must be 3-60-3".into()));
        }
        let finite = self.hidden_weights.iter().flatten().chain(self.output_weights.iter().flatten()).all(|w| w.is_finite());
        if !finite {
            return Err(Error::Numerical("MLP weights must be finite".into()));
        }
        Ok(())
    }

    fn hidden_activations(&self, x: &[T], h: &mut [T; MLP_HIDDEN]) {
        for (a, w) in h.iter_mut().zip(&self.hidden_weights) {
            *a = sigmoid(w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + w[3]);
        }
    }

    fn outputs_from_hidden(&self, h: &[T; MLP_HIDDEN]) -> [T; MLP_OUTPUTS] {
        std::array::from_fn(|k| {
            let w = &self.output_weights[k];
            let z: T = w[..MLP_HIDDEN].iter().zip(h).map(|(a, b)| *a * *b).sum::<T>() + w[MLP_HIDDEN];
            sigmoid(z)
        })
    }

    /// Output activations for one input.
    pub fn forward(&self, x: &[T]) -> [T; MLP_OUTPUTS] {
        let mut h = [T::zero(); MLP_HIDDEN];
        self.hidden_activations(x, &mut h);
        self.outputs_from_hidden(&h)
    }

    /// `½·Σ_k (y_k − t_k)²`.
    pub fn loss(&self, x: &[T], target: &[T; MLP_OUTPUTS]) -> T {
        let y = self.forward(x);
        y.iter().zip(target).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<T>() * T::lit(0.5)
    }

    /// Backpropagated gradient of [`MlpModel::loss`].
    pub fn gradient(&self, x: &[T], target: &[T; MLP_OUTPUTS]) -> MlpGradient<T> {
        let mut h = [T::zero(); MLP_HIDDEN];
        self.hidden_activations(x, &mut h);
        let y = self.outputs_from_hidden(&h);
        let (dout, dhid) = self.deltas(&h, &y, target);
        let output = dout
            .iter()
            .map(|d| h.iter().map(|a| *d * *a).chain([*d]).collect())
            .collect();
        let hidden = dhid.iter().map(|d| [*d * x[0], *d * x[1], *d * x[2], *d]).collect();
        MlpGradient { hidden, output }
    }

    fn deltas(&self, h: &[T; MLP_HIDDEN], y: &[T; MLP_OUTPUTS], t: &[T; MLP_OUTPUTS]) -> ([T; MLP_OUTPUTS], [T; MLP_HIDDEN]) {
        let dout: [T; MLP_OUTPUTS] = std::array::from_fn(|k| (y[k] - t[k]) * y[k] * (T::one() - y[k]));
        let dhid: [T; MLP_HIDDEN] = std::array::from_fn(|j| {
            let back: T = (0..MLP_OUTPUTS).map(|k| dout[k] * self.output_weights[k][j]).sum();
            back * h[j] * (T::one() - h[j])
        });
        (dout, dhid)
    }

    /// One online step; returns the pre-update squared error summed over outputs.
    fn step(&mut self, x: &[T], t: &[T; MLP_OUTPUTS], eta: T) -> T {
        let mut h = [T::zero(); MLP_HIDDEN];
        self.hidden_activations(x, &mut h);
        let y = self.outputs_from_hidden(&h);
        let err: T = y.iter().zip(t).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
        let (dout, dhid) = self.deltas(&h, &y, t);
        for (k, row) in self.output_weights.iter_mut().enumerate() {
            let g = eta * dout[k];
            for (w, a) in row[..MLP_HIDDEN].iter_mut().zip(&h) {
                *w -= g * *a;
            }
            row[MLP_HIDDEN] -= g;
        }
        for (w, d) in self.hidden_weights.iter_mut().zip(&dhid) {
            let g = eta * *d;
            w[0] -= g * x[0];
            w[1] -= g * x[1];
            w[2] -= g * x[2];
            w[3] -= g;
        }
        err
    }

    pub fn scores(&self, x: &[T]) -> [T; MLP_OUTPUTS] {
        self.forward(x)
    }
}

/// One-hot sigmoid target for a class index.
pub fn target_for<T: Scalar>(class_index: usize) -> [T; MLP_OUTPUTS] {
    std::array::from_fn(|k| T::lit(if k == class_index { TARGET_ON } else { TARGET_OFF }))
}

/// Online backpropagation with a seeded per-epoch shuffle and learning rate
/// `eta0·(1 − epoch/max_epochs)`. Stops once an epoch's training error,
/// accumulated during the pass, reaches `target_error`.
pub fn train_mlp<T: Scalar>(samples: &SampleSet<T>, cfg: &MlpConfig) -> Result<MlpModel<T>> {
    cfg.validate()?;
    if samples.feature_dim() != MLP_INPUTS {
        return Err(Error::Arity { expected: MLP_INPUTS, found: samples.feature_dim() });
    }
    if samples.class_count() < 2 {
        return Err(Error::Degenerate("MLP training needs at least two classes".into()));
    }
    let mut model = MlpModel::<T>::random(cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let targets: Vec<[T; MLP_OUTPUTS]> = samples.labels().iter().map(|l| target_for(l.index())).collect();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let denom = T::lit((samples.len() * MLP_OUTPUTS) as f64);
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let eta = T::lit(cfg.eta0 * (1.0 - epoch as f64 / cfg.max_epochs as f64));
        let mut sse = T::zero();
        for &i in &order {
            sse += model.step(samples.sample(i), &targets[i], eta);
        }
        let mse = sse / denom;
        if !mse.is_finite() {
            return Err(Error::Training { epoch, detail: format!("epoch error is {mse}") });
        }
        model.epochs = epoch + 1;
        model.final_mse = Some(mse.as_f64());
        if cfg.error_measure.of_mse(mse.as_f64()) <= cfg.target_error {
            break;
        }
    }
    model.validate().map_err(|e| Error::Training { epoch: model.epochs, detail: e.to_string() })?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_init_is_seeded() {
        let a = MlpModel::<f64>::random(3);
        assert_eq!(a, MlpModel::random(3));
        assert_ne!(a, MlpModel::random(4));
        a.validate().unwrap();
    }

    #[test]
    fn output_bias_gradient_follows_error_sign() {
        let m = MlpModel::<f64>::random(1);
        let x = [0.2, 0.4, 0.1];
        let y = m.forward(&x);
        let t = target_for(0);
        let g = m.gradient(&x, &t);
        for k in 0..MLP_OUTPUTS {
            let bias_grad = g.output[k][MLP_HIDDEN];
            assert_eq!(bias_grad.signum(), (y[k] - t[k]).signum());
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(MlpConfig { eta0: 0.0, ..MlpConfig::default() }.validate().is_err());
        assert!(MlpConfig { target_error: 1.0, ..MlpConfig::default() }.validate().is_err());
        assert!(MlpConfig { max_epochs: 0, ..MlpConfig::default() }.validate().is_err());
    }
}
