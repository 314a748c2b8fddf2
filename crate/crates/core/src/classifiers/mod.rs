//! Pixel classifiers behind one train/classify contract.
//!
//! * `PO`: degree-2 polynomial network ([`poly`]), used to generate ground truth.
//! * `MLP`: 3-60-3 perceptron ([`mlp`]).
//! * `KO`: three-neuron Kohonen map on the multispectral pixel ([`som`]).
//! * `KO-ADC`: the same map on the scalar ADC value.
//!
//! Multispectral models see pixels scaled into `[0, 1]` by the 16-bit full
//! scale. Decisions pick the largest class score, ties going to the lower
//! class code.

pub mod mlp;
pub mod poly;
pub mod som;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adc::{adc_map, AdcConfig};
use crate::error::{Error, Result};
use crate::image::{pixel_features, Band, ClassLabel, LabelMap, SampleSet, SpectralStack};
use crate::scalar::Scalar;

pub use mlp::{train_mlp, ErrorMeasure, MlpConfig, MlpGradient, MlpModel};
pub use poly::{expand_quadratic, train_polynomial, PolyModel};
pub use som::{label_som, train_som, SomConfig, SomModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "PO")]
    Po,
    #[serde(rename = "MLP")]
    Mlp,
    #[serde(rename = "KO")]
    Ko,
    #[serde(rename = "KO-ADC")]
    KoAdc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Po, Method::Mlp, Method::Ko, Method::KoAdc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Po => "PO",
            Method::Mlp => "MLP",
            Method::Ko => "KO",
            Method::KoAdc => "KO-ADC",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "po" | "poly" => Ok(Method::Po),
            "mlp" => Ok(Method::Mlp),
            "ko" | "som" => Ok(Method::Ko),
            "ko-adc" => Ok(Method::KoAdc),
            other => Err(Error::InvalidValue(format!("unknown method {other:?} (po, mlp, ko, ko-adc)"))),
        }
    }
}

/// A trained classifier together with the configuration that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method")]
pub enum TrainedModel<T = f64> {
    #[serde(rename = "PO")]
    Poly { model: PolyModel<T> },
    #[serde(rename = "MLP")]
    Mlp { model: MlpModel<T>, config: MlpConfig },
    #[serde(rename = "KO")]
    Ko { model: SomModel<T>, config: SomConfig },
    #[serde(rename = "KO-ADC")]
    KoAdc { model: SomModel<T>, config: SomConfig, adc: AdcConfig<T> },
}

/// What a model is applied to.
#[derive(Clone, Copy, Debug)]
pub enum ModelInput<'a, T> {
    Stack(&'a SpectralStack<T>),
    Band(&'a Band<T>),
}

/// Largest score wins; ties go to the lower class code.
pub fn argmax_label<T: Scalar>(scores: &[T; 3]) -> ClassLabel {
    let mut best = 0;
    for k in 1..3 {
        if scores[k] > scores[best] {
            best = k;
        }
    }
    ClassLabel::from_index(best).expect("index < 3")
}

impl<T: Scalar> TrainedModel<T> {
    pub fn method(&self) -> Method {
        match self {
            TrainedModel::Poly { .. } => Method::Po,
            TrainedModel::Mlp { .. } => Method::Mlp,
            TrainedModel::Ko { .. } => Method::Ko,
            TrainedModel::KoAdc { .. } => Method::KoAdc,
        }
    }

    /// Number of features per pixel the model consumes.
    pub fn feature_dim(&self) -> usize {
        match self {
            TrainedModel::Poly { .. } => poly::POLY_INPUTS,
            TrainedModel::Mlp { .. } => mlp::MLP_INPUTS,
            TrainedModel::Ko { model, .. } | TrainedModel::KoAdc { model, .. } => model.feature_dim,
        }
    }

    /// Decision for one feature vector.
    pub fn predict(&self, x: &[T]) -> Result<ClassLabel> {
        match self {
            TrainedModel::Poly { model } => Ok(argmax_label(&model.scores(x))),
            TrainedModel::Mlp { model, .. } => Ok(argmax_label(&model.scores(x))),
            TrainedModel::Ko { model, .. } | TrainedModel::KoAdc { model, .. } => model
                .predict(x)
                .ok_or_else(|| Error::Config("SOM model has not been labeled".into())),
        }
    }

    /// Classifies a flat row-major feature matrix of dimension `dim`.
    pub fn classify_features(&self, features: &[T], dim: usize) -> Result<Vec<ClassLabel>> {
        if dim != self.feature_dim() {
            return Err(Error::Arity { expected: self.feature_dim(), found: dim });
        }
        if let TrainedModel::Ko { model, .. } | TrainedModel::KoAdc { model, .. } = self {
            if !model.is_labeled() {
                return Err(Error::Config("SOM model has not been labeled".into()));
            }
        }
        Ok(features
            .par_chunks_exact(dim)
            .with_min_len(1024)
            .map(|x| self.predict(x).expect("model validated above"))
            .collect())
    }
}

/// Per-pixel decisions. Multispectral models take a stack, KO-ADC takes an
/// ADC band.
pub fn classify<T: Scalar>(model: &TrainedModel<T>, input: ModelInput<'_, T>) -> Result<LabelMap> {
    match (model, input) {
        (TrainedModel::KoAdc { .. }, ModelInput::Band(band)) => {
            let labels = model.classify_features(band.data(), 1)?;
            LabelMap::new(band.width(), band.height(), labels)
        }
        (TrainedModel::KoAdc { .. }, ModelInput::Stack(s)) => {
            Err(Error::Arity { expected: 1, found: s.band_count() })
        }
        (_, ModelInput::Band(_)) => Err(Error::Arity { expected: model.feature_dim(), found: 1 }),
        (_, ModelInput::Stack(stack)) => {
            let labels = model.classify_features(&pixel_features(stack, true), stack.band_count())?;
            LabelMap::new(stack.width(), stack.height(), labels)
        }
    }
}

/// Classifies a stack, computing the ADC map first for KO-ADC models.
pub fn classify_stack<T: Scalar>(model: &TrainedModel<T>, stack: &SpectralStack<T>) -> Result<LabelMap> {
    match model {
        TrainedModel::KoAdc { adc, .. } => classify(model, ModelInput::Band(&adc_map(stack, adc)?)),
        _ => classify(model, ModelInput::Stack(stack)),
    }
}

/// Trains a SOM on scalar ADC samples and labels it from the same samples.
pub fn train_ko_adc<T: Scalar>(adc: &Band<T>, truth_samples: &SampleSet<T>, cfg: &SomConfig) -> Result<SomModel<T>> {
    if truth_samples.feature_dim() != 1 {
        return Err(Error::Arity { expected: 1, found: truth_samples.feature_dim() });
    }
    if truth_samples.len() != adc.len() {
        return Err(Error::Dimension(format!(
            "{} ADC samples for a {}-pixel map",
            truth_samples.len(),
            adc.len()
        )));
    }
    let model = train_som(truth_samples, cfg)?;
    label_som(&model, truth_samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_prefer_lower_code() {
        assert_eq!(argmax_label(&[1.0, 1.0, 0.0]), ClassLabel::Csf);
        assert_eq!(argmax_label(&[0.0, 2.0, 2.0]), ClassLabel::Matter);
        assert_eq!(argmax_label(&[0.0, 1.0, 2.0]), ClassLabel::Background);
    }

    #[test]
    fn constant_matter_poly_model() {
        let mut w = [[0.0; 10]; 3];
        w[1][0] = 1.0;
        let model = TrainedModel::Poly { model: PolyModel::new(w).unwrap() };
        let band = Band::new(2, 2, vec![0.0, 10.0, 2000.0, 65535.0], 0).unwrap();
        let stack = SpectralStack::new(vec![band.clone(), band.clone(), band], vec![0.0, 500.0, 1000.0]).unwrap();
        let map = classify(&model, ModelInput::Stack(&stack)).unwrap();
        assert!(map.labels().iter().all(|l| *l == ClassLabel::Matter));
    }

    #[test]
    fn arity_mismatch_is_reported() {
        let model = TrainedModel::Poly { model: PolyModel::new([[0.0; 10]; 3]).unwrap() };
        let band = Band::filled(2, 2, 1.0, 0).unwrap();
        assert!(matches!(classify(&model, ModelInput::Band(&band)), Err(Error::Arity { .. })));
        let stack = SpectralStack::new(vec![band.clone(), band], vec![0.0, 1000.0]).unwrap();
        assert!(matches!(classify(&model, ModelInput::Stack(&stack)), Err(Error::Arity { expected: 3, found: 2 })));
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("svm".parse::<Method>().is_err());
    }

    #[test]
    fn constant_adc_band_is_degenerate() {
        let adc = Band::filled(4, 4, 1e-3, 0).unwrap();
        let truth = LabelMap::filled(4, 4, ClassLabel::Matter);
        let s = crate::image::extract_band_samples(&adc, &truth).unwrap();
        assert!(matches!(train_ko_adc(&adc, &s, &SomConfig::default()), Err(Error::Degenerate(_))));
    }
}
