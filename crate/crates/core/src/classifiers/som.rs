//! Kohonen self-organizing map with three neurons on a 1-D chain.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ClassLabel, SampleSet};
use crate::scalar::Scalar;

pub const SOM_NEURONS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SomConfig {
    pub eta0: f64,
    /// Passes over the training set.
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for SomConfig {
    fn default() -> Self {
        SomConfig { eta0: 0.1, max_iters: 200, seed: 1 }
    }
}

impl SomConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0) {
            return Err(Error::InvalidValue(format!("SOM eta0 {} must be > 0", self.eta0)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidValue("SOM max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SomModel<T = f64> {
    pub feature_dim: usize,
    pub neurons: Vec<Vec<T>>,
    /// Set by [`label_som`].
    pub class_of_neuron: Option<[ClassLabel; SOM_NEURONS]>,
}

impl<T: Scalar> SomModel<T> {
    pub fn new(neurons: Vec<Vec<T>>) -> Result<Self> {
        if neurons.len() != SOM_NEURONS {
            return Err(Error::Dimension(format!("SOM needs {SOM_NEURONS} neurons, got {}", neurons.len())));
        }
        let feature_dim = neurons[0].len();
        if feature_dim == 0 || neurons.iter().any(|n| n.len() != feature_dim) {
            return Err(Error::Dimension("SOM neurons must share a non-zero dimension".into()));
        }
        Ok(SomModel { feature_dim, neurons, class_of_neuron: None })
    }

    /// Index of the closest neuron (squared Euclidean distance, ties to the
    /// lower index).
    pub fn winner(&self, x: &[T]) -> usize {
        let mut best = 0;
        let mut best_d = T::infinity();
        for (j, w) in self.neurons.iter().enumerate() {
            let d: T = w.iter().zip(x).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        best
    }

    /// Moves every neuron towards `x` by `eta·h(|j − winner|)` where `h` is a
    /// Gaussian of width `radius` on the chain (only the winner when
    /// `radius == 0`).
    pub fn update(&mut self, x: &[T], eta: T, radius: T) {
        let win = self.winner(x);
        for (j, w) in self.neurons.iter_mut().enumerate() {
            let d = j.abs_diff(win);
            let h = if d == 0 {
                T::one()
            } else if radius > T::zero() {
                let d = T::lit(d as f64);
                (-(d * d) / (T::lit(2.0) * radius * radius)).exp()
            } else {
                continue;
            };
            let g = eta * h;
            for (wi, xi) in w.iter_mut().zip(x) {
                *wi += g * (*xi - *wi);
            }
        }
    }

    pub fn is_labeled(&self) -> bool {
        self.class_of_neuron.is_some()
    }

    /// Class of the nearest neuron; `None` before labeling.
    pub fn predict(&self, x: &[T]) -> Option<ClassLabel> {
        self.class_of_neuron.map(|c| c[self.winner(x)])
    }
}

/// Initializes the neurons at three distinct training samples chosen in a
/// seeded random order, then runs `max_iters` shuffled passes of
/// winner-take-all updates with `eta0·(1 − t/max_iters)` and a neighborhood
/// radius decaying linearly from 1 to 0.
pub fn train_som<T: Scalar>(samples: &SampleSet<T>, cfg: &SomConfig) -> Result<SomModel<T>> {
    cfg.validate()?;
    if samples.len() < SOM_NEURONS {
        return Err(Error::Degenerate(format!(
            "SOM needs at least {SOM_NEURONS} samples, got {}",
            samples.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let mut neurons: Vec<Vec<T>> = Vec::with_capacity(SOM_NEURONS);
    for &i in &order {
        let x = samples.sample(i);
        if neurons.iter().all(|n| n.as_slice() != x) {
            neurons.push(x.to_vec());
            if neurons.len() == SOM_NEURONS {
                break;
            }
        }
    }
    if neurons.len() < SOM_NEURONS {
        return Err(Error::Degenerate(format!(
            "SOM needs {SOM_NEURONS} distinct samples, found {}",
            neurons.len()
        )));
    }
    let mut model = SomModel::new(neurons)?;
    let total = cfg.max_iters as f64;
    for t in 0..cfg.max_iters {
        let frac = 1.0 - t as f64 / total;
        let eta = T::lit(cfg.eta0 * frac);
        let radius = T::lit(frac);
        order.shuffle(&mut rng);
        for &i in &order {
            model.update(samples.sample(i), eta, radius);
        }
    }
    Ok(model)
}

/// Labels each neuron with the majority class of the samples it wins (ties
/// go to the lower class code).
pub fn label_som<T: Scalar>(model: &SomModel<T>, samples: &SampleSet<T>) -> Result<SomModel<T>> {
    if samples.feature_dim() != model.feature_dim {
        return Err(Error::Arity { expected: model.feature_dim, found: samples.feature_dim() });
    }
    let mut votes = [[0u64; 3]; SOM_NEURONS];
    for (x, label) in samples.iter() {
        votes[model.winner(x)][label.index()] += 1;
    }
    let mut classes = [ClassLabel::Csf; SOM_NEURONS];
    for (j, v) in votes.iter().enumerate() {
        if v.iter().all(|c| *c == 0) {
            return Err(Error::Labeling { neuron: j });
        }
        let mut best = 0;
        for k in 1..3 {
            if v[k] > v[best] {
                best = k;
            }
        }
        classes[j] = ClassLabel::from_index(best).expect("index < 3");
    }
    let mut labeled = model.clone();
    labeled.class_of_neuron = Some(classes);
    Ok(labeled)
}
