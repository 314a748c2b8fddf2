//! End-to-end experiments on a rendered phantom volume.
//!
//! Every classifier is trained once, on the noiseless training slice with the
//! phantom's own labels, and then applied to whole volumes: noiseless for the
//! baseline, and with additive Gaussian noise at each `(level, seed)` cell for
//! the sweep. Metrics always compare against the noiseless phantom truth.

mod plot;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adc::{adc_map, AdcConfig};
use crate::classifiers::{
    classify_stack, label_som, train_ko_adc, train_mlp, train_polynomial, train_som, Method, MlpConfig, SomConfig,
    TrainedModel,
};
use crate::error::{Error, Result, StageContext};
use crate::image::{extract_band_samples, extract_samples, read_json, save_label_map, write_json, LabelMap, SpectralStack};
use crate::metrics::{confusion_volume, volumes, ConfusionMatrix, MetricsReport, VolumeReport};
use crate::physics::{
    add_noise_to_stack, render_phantom, AcquisitionParams, NoiseConfig, Phantom, PhantomSpec, MAX_NOISE_LEVEL,
};

pub use plot::kappa_svg;

fn default_training_slice() -> u32 {
    13
}

/// 0.01, 0.02, …, 0.20.
pub fn default_noise_levels() -> Vec<f64> {
    (1..=20).map(|i| f64::from(i) / 100.0).collect()
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

fn default_classifiers() -> Vec<Method> {
    Method::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Phantom description file, relative to the config file. Takes
    /// precedence over `phantom`; the default phantom is used when both are absent.
    #[serde(default)]
    pub phantom_spec: Option<PathBuf>,
    #[serde(default)]
    pub phantom: Option<PhantomSpec>,
    #[serde(default)]
    pub acquisition: AcquisitionParams<f64>,
    /// 1-based slice used for training.
    #[serde(default = "default_training_slice")]
    pub training_slice: u32,
    #[serde(default = "default_noise_levels")]
    pub noise_levels: Vec<f64>,
    /// Noise realizations per level.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<Method>,
    #[serde(default)]
    pub mlp: MlpConfig,
    #[serde(default)]
    pub som: SomConfig,
    #[serde(default)]
    pub adc: AdcConfig<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            phantom_spec: None,
            phantom: None,
            acquisition: AcquisitionParams::default(),
            training_slice: default_training_slice(),
            noise_levels: default_noise_levels(),
            seeds: default_seeds(),
            classifiers: default_classifiers(),
            mlp: MlpConfig::default(),
            som: SomConfig::default(),
            adc: AdcConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a config and resolves `phantom_spec` against the config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: ExperimentConfig = read_json(path)?;
        if let Some(p) = cfg.phantom_spec.take() {
            let dir = path.parent().unwrap_or_else(|| Path::new("."));
            cfg.phantom_spec = Some(if p.is_absolute() { p } else { dir.join(p) });
        }
        Ok(cfg)
    }

    pub fn resolve_phantom(&self) -> Result<PhantomSpec> {
        match (&self.phantom_spec, &self.phantom) {
            (Some(p), _) => read_json(p),
            (None, Some(spec)) => Ok(spec.clone()),
            (None, None) => Ok(PhantomSpec::default()),
        }
    }

    /// Selected classifiers, sorted and without duplicates.
    pub fn methods(&self) -> Vec<Method> {
        let mut m = self.classifiers.clone();
        m.sort();
        m.dedup();
        m
    }

    pub fn validate(&self, spec: &PhantomSpec) -> Result<()> {
        if self.classifiers.is_empty() {
            return Err(Error::Config("no classifiers selected".into()));
        }
        if self.training_slice == 0 || self.training_slice > spec.slices {
            return Err(Error::Config(format!(
                "training slice {} outside 1..={}",
                self.training_slice, spec.slices
            )));
        }
        if let Some(l) = self.noise_levels.iter().find(|l| !(0.0..=MAX_NOISE_LEVEL).contains(*l)) {
            return Err(Error::Config(format!("noise level {l} outside [0, {MAX_NOISE_LEVEL}]")));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no noise seeds".into()));
        }
        self.mlp.validate()?;
        self.som.validate()?;
        self.adc.validate()?;
        self.acquisition.validate()?;
        spec.validate()
    }
}

/// Trains one model per selected method on the noiseless training slice.
pub fn train_models(cfg: &ExperimentConfig, phantom: &Phantom) -> Result<Vec<TrainedModel>> {
    let idx = cfg.training_slice as usize - 1;
    cfg.methods()
        .into_iter()
        .map(|method| train_model(method, &phantom.stacks[idx], &phantom.truth[idx], cfg))
        .collect()
}

/// Trains `method` on every pixel of `stack`, labeled by `truth`, using the
/// classifier settings of `cfg`.
pub fn train_model(method: Method, stack: &SpectralStack, truth: &LabelMap, cfg: &ExperimentConfig) -> Result<TrainedModel> {
    let stage = format!("training {method}");
    match method {
        Method::Po => {
            let s = extract_samples(stack, truth, true).stage(&stage)?;
            Ok(TrainedModel::Poly { model: train_polynomial(&s).stage(&stage)? })
        }
        Method::Mlp => {
            let s = extract_samples(stack, truth, true).stage(&stage)?;
            Ok(TrainedModel::Mlp { model: train_mlp(&s, &cfg.mlp).stage(&stage)?, config: cfg.mlp })
        }
        Method::Ko => {
            let s = extract_samples(stack, truth, true).stage(&stage)?;
            let som = train_som(&s, &cfg.som).and_then(|m| label_som(&m, &s)).stage(&stage)?;
            Ok(TrainedModel::Ko { model: som, config: cfg.som })
        }
        Method::KoAdc => {
            let adc = adc_map(stack, &cfg.adc).stage(&stage)?;
            let s = extract_band_samples(&adc, truth).stage(&stage)?;
            let som = train_ko_adc(&adc, &s, &cfg.som).stage(&stage)?;
            Ok(TrainedModel::KoAdc { model: som, config: cfg.som, adc: cfg.adc })
        }
    }
}

/// Classifies every slice of a volume.
pub fn classify_volume(model: &TrainedModel, stacks: &[SpectralStack]) -> Result<Vec<LabelMap>> {
    stacks.iter().map(|s| classify_stack(model, s)).collect()
}

fn evaluate(model: &TrainedModel, stacks: &[SpectralStack], truth: &[LabelMap]) -> Result<(MetricsReport, VolumeReport, Vec<LabelMap>)> {
    let preds = classify_volume(model, stacks)?;
    let cm = confusion_volume(&preds, truth)?;
    Ok((MetricsReport::from_matrix(cm)?, volumes(&preds)?, preds))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub classifier: Method,
    pub metrics: MetricsReport,
    pub volumes: VolumeReport,
}

#[derive(Clone, Debug)]
pub struct Baseline {
    pub rows: Vec<BaselineRow>,
    /// Volumes of the phantom truth itself.
    pub truth_volumes: VolumeReport,
    pub models: Vec<TrainedModel>,
    /// Ground-truth volume produced by the polynomial network, when selected.
    pub po_ground_truth: Option<Vec<LabelMap>>,
}

pub fn render(cfg: &ExperimentConfig) -> Result<Phantom> {
    let spec = cfg.resolve_phantom().stage("loading phantom")?;
    cfg.validate(&spec)?;
    render_phantom(&spec, &cfg.acquisition).stage("rendering phantom")
}

pub fn run_baseline(cfg: &ExperimentConfig) -> Result<Baseline> {
    let phantom = render(cfg)?;
    let models = train_models(cfg, &phantom)?;
    let mut rows = Vec::with_capacity(models.len());
    let mut po_ground_truth = None;
    for model in &models {
        let method = model.method();
        let (metrics, vols, preds) =
            evaluate(model, &phantom.stacks, &phantom.truth).stage(&format!("evaluating {method}"))?;
        if method == Method::Po {
            po_ground_truth = Some(preds);
        }
        rows.push(BaselineRow { classifier: method, metrics, volumes: vols });
    }
    Ok(Baseline { rows, truth_volumes: volumes(&phantom.truth)?, models, po_ground_truth })
}

#[derive(Serialize)]
struct BaselineFile<'a> {
    rows: &'a [BaselineRow],
    truth_volumes: &'a VolumeReport,
}

pub const BASELINE_CSV_HEADER: &str = "classifier,kappa,phi,v1,v2,v3,rate";

impl Baseline {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(BASELINE_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{},{}", r.classifier, crate::metrics::csv_row(&r.metrics, &r.volumes));
        }
        out
    }

    /// Writes `baseline.json`, `baseline.csv`, one model file per classifier
    /// under `models/` and the polynomial ground truth under `ground_truth/`.
    pub fn write(&self, out_dir: impl AsRef<Path>) -> Result<()> {
        let dir = out_dir.as_ref();
        create_dir(dir)?;
        write_json(&BaselineFile { rows: &self.rows, truth_volumes: &self.truth_volumes }, dir.join("baseline.json"))?;
        write_text(dir.join("baseline.csv"), &self.to_csv())?;
        let models = dir.join("models");
        create_dir(&models)?;
        for m in &self.models {
            write_json(m, models.join(format!("{}.json", m.method())))?;
        }
        if let Some(maps) = &self.po_ground_truth {
            let gt = dir.join("ground_truth");
            create_dir(&gt)?;
            for (i, m) in maps.iter().enumerate() {
                save_label_map(m, gt.join(format!("slice_{:02}.pgm", i + 1)))?;
            }
        }
        Ok(())
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub classifier: Method,
    pub xi_max: f64,
    pub seed: u64,
    pub kappa: f64,
    pub phi: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub rate: Option<f64>,
    pub matrix: ConfusionMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: &str = "classifier,xi_max,seed,kappa,phi,v1,v2,v3,rate";

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let phantom = render(cfg)?;
    let models = train_models(cfg, &phantom)?;
    sweep_with_models(cfg, &phantom, &models)
}

/// Applies already trained models to every `(level, seed)` noise cell.
pub fn sweep_with_models(cfg: &ExperimentConfig, phantom: &Phantom, models: &[TrainedModel]) -> Result<SweepResult> {
    if cfg.noise_levels.is_empty() {
        return Err(Error::Config("no noise levels".into()));
    }
    let cells: Vec<(f64, u64)> =
        cfg.noise_levels.iter().flat_map(|l| cfg.seeds.iter().map(move |s| (*l, *s))).collect();
    let per_cell = cells
        .par_iter()
        .map(|&(level, seed)| {
            let stage = format!("noise cell xi_max={level} seed={seed}");
            let noise = NoiseConfig::new(level, seed).stage(&stage)?;
            let noisy = phantom
                .stacks
                .iter()
                .map(|s| add_noise_to_stack(s, &noise))
                .collect::<Result<Vec<_>>>()
                .stage(&stage)?;
            models
                .iter()
                .map(|model| {
                    let (m, v, _) = evaluate(model, &noisy, &phantom.truth).stage(&stage)?;
                    Ok(SweepRow {
                        classifier: model.method(),
                        xi_max: level,
                        seed,
                        kappa: m.kappa,
                        phi: m.phi,
                        v1: v.v1,
                        v2: v.v2,
                        v3: v.v3,
                        rate: v.fluid_matter_rate,
                        matrix: m.matrix,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<SweepRow> = per_cell.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.classifier
            .cmp(&b.classifier)
            .then(a.xi_max.total_cmp(&b.xi_max))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(SweepResult { rows })
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

impl SweepResult {
    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<_> = self.rows.iter().map(|r| r.classifier).collect();
        m.dedup();
        m
    }

    pub fn levels(&self) -> Vec<f64> {
        let mut l: Vec<_> = self.rows.iter().map(|r| r.xi_max).collect();
        l.sort_by(f64::total_cmp);
        l.dedup();
        l
    }

    /// Median κ over seeds for one classifier and level.
    pub fn median_kappa(&self, method: Method, level: f64) -> Option<f64> {
        let mut k: Vec<f64> =
            self.rows.iter().filter(|r| r.classifier == method && r.xi_max == level).map(|r| r.kappa).collect();
        median(&mut k)
    }

    /// `(level, median κ)` in increasing level order.
    pub fn curve(&self, method: Method) -> Vec<(f64, f64)> {
        self.levels().into_iter().filter_map(|l| self.median_kappa(method, l).map(|k| (l, k))).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let rate = r.rate.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.classifier, r.xi_max, r.seed, r.kappa, r.phi, r.v1, r.v2, r.v3, rate
            );
        }
        out
    }

    /// Writes `sweep.csv`, `sweep.json` (rows with confusion matrices) and
    /// `kappa_vs_noise.svg`.
    pub fn write(&self, out_dir: impl AsRef<Path>) -> Result<()> {
        let dir = out_dir.as_ref();
        create_dir(dir)?;
        write_text(dir.join("sweep.csv"), &self.to_csv())?;
        write_json(self, dir.join("sweep.json"))?;
        write_text(dir.join("kappa_vs_noise.svg"), &kappa_svg(self))
    }
}

/// Number of places where a curve goes up from one level to the next.
pub fn count_increases(curve: &[(f64, f64)]) -> usize {
    curve.windows(2).filter(|w| w[1].1 > w[0].1).count()
}
