//! Spin-echo diffusion signal model, parametric brain phantoms and additive
//! Gaussian noise.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{validate_b_values, Band, ClassLabel, LabelMap, SpectralStack, FULL_SCALE};
use crate::scalar::Scalar;

/// Fraction of full scale that the brightest b=0 pixel of a rendered volume maps to.
pub const PHANTOM_PEAK_FRACTION: f64 = 0.6;

/// Largest supported noise level (fraction of full scale).
pub const MAX_NOISE_LEVEL: f64 = 0.20;

/// Diffusion weighting `γ²·G²·T_E³ / 3`.
pub fn b_value<T: Scalar>(gamma: T, gradient: T, te: T) -> T {
    gamma * gamma * gradient * gradient * te * te * te / T::lit(3.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TissueParams<T = f64> {
    /// Spin density, arbitrary units.
    pub rho: T,
    /// Transverse relaxation time, ms.
    pub t2: T,
    /// Diffusion coefficient, mm²/s.
    pub diffusion: T,
}

impl<T: Scalar> TissueParams<T> {
    pub fn new(rho: T, t2: T, diffusion: T) -> Result<Self> {
        let p = TissueParams { rho, t2, diffusion };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= T::zero()) || !self.rho.is_finite() {
            return Err(Error::InvalidValue(format!("tissue rho {} must be >= 0", self.rho)));
        }
        if !(self.t2 > T::zero()) {
            return Err(Error::InvalidValue(format!("tissue t2 {} must be > 0", self.t2)));
        }
        if !(self.diffusion >= T::zero()) || !self.diffusion.is_finite() {
            return Err(Error::InvalidValue(format!(
                "tissue diffusion {} must be >= 0",
                self.diffusion
            )));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> TissueParams<U> {
        TissueParams {
            rho: U::lit(self.rho.as_f64()),
            t2: U::lit(self.t2.as_f64()),
            diffusion: U::lit(self.diffusion.as_f64()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionParams<T = f64> {
    pub k_const: T,
    /// Echo time, ms.
    pub te: T,
    /// Diffusion exponents, s/mm².
    pub b_values: Vec<T>,
}

impl<T: Scalar> AcquisitionParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_const > T::zero()) {
            return Err(Error::InvalidValue(format!("K = {} must be > 0", self.k_const)));
        }
        if !(self.te > T::zero()) {
            return Err(Error::InvalidValue(format!("TE = {} must be > 0", self.te)));
        }
        validate_b_values(&self.b_values)
    }
}

impl Default for AcquisitionParams<f64> {
    fn default() -> Self {
        AcquisitionParams { k_const: 1.0, te: 100.0, b_values: vec![0.0, 500.0, 1000.0] }
    }
}

/// `K·ρ·exp(−TE/T2)·exp(−b_i·D)`.
pub fn signal<T: Scalar>(tissue: &TissueParams<T>, acq: &AcquisitionParams<T>, band_index: usize) -> T {
    let b = acq.b_values[band_index];
    acq.k_const * tissue.rho * (-acq.te / tissue.t2).exp() * (-b * tissue.diffusion).exp()
}

// ---------------------------------------------------------------------------
// Phantom geometry

/// Cross-section scale of a shape along the slice axis. A shape is treated as
/// an ellipsoid in z: at normalized slice position `z` its in-plane radii are
/// multiplied by `sqrt(1 − ((z − center)/half_width)²)`; outside it vanishes.
/// Without `half_width` the shape is constant across slices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceProfile {
    #[serde(default = "half")]
    pub center: f64,
    #[serde(default)]
    pub half_width: Option<f64>,
}

fn half() -> f64 {
    0.5
}

impl SliceProfile {
    pub fn scale(&self, z: f64) -> f64 {
        match self.half_width {
            None => 1.0,
            Some(w) => {
                let u = (z - self.center) / w;
                (1.0 - u * u).max(0.0).sqrt()
            }
        }
    }
}

/// In-plane geometry in normalized image coordinates: x and y both span
/// `[-1, 1]` across the image, y pointing down.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShapeKind {
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        #[serde(default)]
        angle_deg: f64,
    },
    /// Band of thickness `thickness` (fraction of the radii) just inside an
    /// ellipse outline, restricted to an angular range. Angles in degrees,
    /// measured from +x towards +y.
    Arc {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        thickness: f64,
        start_deg: f64,
        end_deg: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub label: ClassLabel,
    #[serde(flatten)]
    pub kind: ShapeKind,
    #[serde(default)]
    pub profile: SliceProfile,
}

impl Shape {
    fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        let s = self.profile.scale(z);
        if s <= 0.0 {
            return false;
        }
        match self.kind {
            ShapeKind::Ellipse { cx, cy, rx, ry, angle_deg } => {
                let (sin, cos) = angle_deg.to_radians().sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let u = (dx * cos + dy * sin) / (rx * s);
                let v = (-dx * sin + dy * cos) / (ry * s);
                u * u + v * v <= 1.0
            }
            ShapeKind::Arc { cx, cy, rx, ry, thickness, start_deg, end_deg } => {
                let (dx, dy) = (x - cx, y - cy);
                let u = dx / (rx * s);
                let v = dy / (ry * s);
                let r = (u * u + v * v).sqrt();
                if r > 1.0 || r < 1.0 - thickness {
                    return false;
                }
                let a = v.atan2(u).to_degrees().rem_euclid(360.0);
                let start = start_deg.rem_euclid(360.0);
                let span = (end_deg - start_deg).clamp(0.0, 360.0);
                (a - start).rem_euclid(360.0) <= span
            }
        }
    }

    fn check_bounds(&self) -> Result<()> {
        let (cx, cy, rx, ry) = match self.kind {
            ShapeKind::Ellipse { cx, cy, rx, ry, .. } | ShapeKind::Arc { cx, cy, rx, ry, .. } => (cx, cy, rx, ry),
        };
        if !(rx > 0.0 && ry > 0.0) {
            return Err(Error::Config(format!("shape radii ({rx}, {ry}) must be positive")));
        }
        let reach = rx.max(ry);
        if cx.abs() + reach > 1.0 + 1e-12 || cy.abs() + reach > 1.0 + 1e-12 {
            return Err(Error::Config(format!(
                "shape centred at ({cx}, {cy}) with radius {reach} leaves the image"
            )));
        }
        if let ShapeKind::Arc { thickness, .. } = self.kind {
            if !(thickness > 0.0 && thickness <= 1.0) {
                return Err(Error::Config(format!("arc thickness {thickness} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Parametric multi-slice brain phantom.
///
/// Pixels covered by several shapes take the highest-priority label
/// (CSF over matter over background); uncovered pixels take `fill`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub slices: u32,
    #[serde(default = "default_fill")]
    pub fill: ClassLabel,
    pub shapes: Vec<Shape>,
    pub tissue_table: BTreeMap<ClassLabel, TissueParams<f64>>,
}

fn default_fill() -> ClassLabel {
    ClassLabel::Background
}

/// Typical values for CSF and brain parenchyma at 1.5 T.
pub fn default_tissue_table() -> BTreeMap<ClassLabel, TissueParams<f64>> {
    BTreeMap::from([
        (ClassLabel::Csf, TissueParams { rho: 1.0, t2: 2000.0, diffusion: 3.0e-3 }),
        (ClassLabel::Matter, TissueParams { rho: 0.8, t2: 90.0, diffusion: 0.8e-3 }),
        (ClassLabel::Background, TissueParams { rho: 0.0, t2: 1.0, diffusion: 0.0 }),
    ])
}

impl Default for PhantomSpec {
    /// 128×128×20 axial head: scalp/skull ellipse, brain ellipse, two lateral
    /// ventricle lobes and six cortical sulci, all varying smoothly with slice.
    fn default() -> Self {
        use ClassLabel::*;
        let head = SliceProfile { center: 0.5, half_width: Some(0.7) };
        let brain = SliceProfile { center: 0.5, half_width: Some(0.62) };
        let ventricle = SliceProfile { center: 0.6, half_width: Some(0.38) };
        let (brx, bry) = (0.72, 0.86);
        let mut shapes = vec![
            Shape {
                label: Background,
                kind: ShapeKind::Ellipse { cx: 0.0, cy: 0.0, rx: 0.82, ry: 0.95, angle_deg: 0.0 },
                profile: head,
            },
            Shape {
                label: Matter,
                kind: ShapeKind::Ellipse { cx: 0.0, cy: 0.0, rx: brx, ry: bry, angle_deg: 0.0 },
                profile: brain,
            },
        ];
        for (cx, angle) in [(-0.14, 12.0), (0.14, -12.0)] {
            shapes.push(Shape {
                label: Csf,
                kind: ShapeKind::Ellipse { cx, cy: -0.02, rx: 0.07, ry: 0.3, angle_deg: angle },
                profile: ventricle,
            });
        }
        for start in [20.0, 85.0, 150.0, 200.0, 265.0, 330.0] {
            shapes.push(Shape {
                label: Csf,
                kind: ShapeKind::Arc {
                    cx: 0.0,
                    cy: 0.0,
                    rx: brx,
                    ry: bry,
                    thickness: 0.06,
                    start_deg: start,
                    end_deg: start + 22.0,
                },
                profile: brain,
            });
        }
        PhantomSpec {
            width: 128,
            height: 128,
            slices: 20,
            fill: Background,
            shapes,
            tissue_table: default_tissue_table(),
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.slices == 0 {
            return Err(Error::Config(format!(
                "phantom must be non-empty, got {}x{}x{}",
                self.width, self.height, self.slices
            )));
        }
        for s in &self.shapes {
            s.check_bounds()?;
        }
        for label in self.shapes.iter().map(|s| s.label).chain([self.fill]) {
            match self.tissue_table.get(&label) {
                None => {
                    return Err(Error::Config(format!("tissue table has no entry for {label:?}")))
                }
                Some(p) => p.validate()?,
            }
        }
        Ok(())
    }

    /// Normalized slice position in (0, 1) of a 1-based slice number.
    pub fn slice_position(&self, slice: u32) -> f64 {
        (f64::from(slice) - 0.5) / f64::from(self.slices)
    }

    /// Exact label rasterization of a 1-based slice.
    pub fn rasterize(&self, slice: u32) -> LabelMap {
        let z = self.slice_position(slice);
        let (w, h) = (self.width, self.height);
        let mut labels = Vec::with_capacity(w * h);
        for row in 0..h {
            let y = (row as f64 + 0.5) / h as f64 * 2.0 - 1.0;
            for col in 0..w {
                let x = (col as f64 + 0.5) / w as f64 * 2.0 - 1.0;
                let label = self
                    .shapes
                    .iter()
                    .filter(|s| s.contains(x, y, z))
                    .map(|s| s.label)
                    .min()
                    .unwrap_or(self.fill);
                labels.push(label);
            }
        }
        LabelMap::new(w, h, labels).expect("rasterized map has w*h labels")
    }
}

/// Rendered volume: one stack and one truth map per slice (slices numbered from 1).
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom<T = f64> {
    pub stacks: Vec<SpectralStack<T>>,
    pub truth: Vec<LabelMap>,
    /// Factor applied to every raw signal to place the b=0 peak at
    /// [`PHANTOM_PEAK_FRACTION`] of full scale.
    pub intensity_scale: T,
}

pub fn render_phantom<T: Scalar>(spec: &PhantomSpec, acq: &AcquisitionParams<T>) -> Result<Phantom<T>> {
    spec.validate()?;
    acq.validate()?;
    let truth: Vec<LabelMap> = (1..=spec.slices).into_par_iter().map(|s| spec.rasterize(s)).collect();

    let tissues: BTreeMap<ClassLabel, TissueParams<T>> =
        spec.tissue_table.iter().map(|(k, v)| (*k, v.cast())).collect();
    let nb = acq.b_values.len();
    // raw signal per class and band, zero for classes not in the table
    let mut table = vec![[T::zero(); 3]; nb];
    for (i, row) in table.iter_mut().enumerate() {
        for (label, p) in &tissues {
            row[label.index()] = signal(p, acq, i);
        }
    }
    let mut present = [false; 3];
    for map in &truth {
        for (k, c) in map.counts().iter().enumerate() {
            present[k] |= *c > 0;
        }
    }
    let peak = (0..3).filter(|k| present[*k]).map(|k| table[0][k]).fold(T::zero(), T::max);
    let scale = if peak > T::zero() { T::lit(PHANTOM_PEAK_FRACTION * FULL_SCALE) / peak } else { T::one() };

    let stacks = truth
        .par_iter()
        .enumerate()
        .map(|(s, map)| {
            let bands = (0..nb)
                .map(|i| {
                    let data = map.labels().iter().map(|l| table[i][l.index()] * scale).collect();
                    Band::new(spec.width, spec.height, data, s as u32 + 1)
                })
                .collect::<Result<Vec<_>>>()?;
            SpectralStack::new(bands, acq.b_values.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Phantom { stacks, truth, intensity_scale: scale })
}

// ---------------------------------------------------------------------------
// Noise

/// Additive zero-mean Gaussian noise with standard deviation
/// `xi_max · 65535`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub xi_max: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn new(xi_max: f64, seed: u64) -> Result<Self> {
        let c = NoiseConfig { xi_max, seed };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=MAX_NOISE_LEVEL).contains(&self.xi_max) {
            return Err(Error::InvalidValue(format!(
                "noise level {} outside [0, {MAX_NOISE_LEVEL}]",
                self.xi_max
            )));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.xi_max * FULL_SCALE
    }
}

/// Generator for one (seed, slice, band) cell, independent of evaluation order.
fn noise_rng(seed: u64, slice_index: u32, band_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(slice_index) << 32) | band_index as u64);
    rng
}

/// Noise for band 0 of the band's slice. See [`add_gaussian_noise_to_band`].
pub fn add_gaussian_noise<T: Scalar>(band: &Band<T>, cfg: &NoiseConfig) -> Result<Band<T>> {
    add_gaussian_noise_to_band(band, cfg, 0)
}

/// `clamp(input + n, 0, 65535)` with `n ~ Normal(0, σ)` drawn from a
/// generator keyed by `(seed, slice_index, band_index)`.
pub fn add_gaussian_noise_to_band<T: Scalar>(band: &Band<T>, cfg: &NoiseConfig, band_index: usize) -> Result<Band<T>> {
    cfg.validate()?;
    if cfg.xi_max == 0.0 {
        return Ok(band.clone());
    }
    let sigma = cfg.sigma();
    let mut rng = noise_rng(cfg.seed, band.slice_index(), band_index);
    let data = band
        .data()
        .iter()
        .map(|v| {
            let n: f64 = StandardNormal.sample(&mut rng);
            T::lit((v.as_f64() + sigma * n).clamp(0.0, FULL_SCALE))
        })
        .collect();
    Band::new(band.width(), band.height(), data, band.slice_index())
}

pub fn add_noise_to_stack<T: Scalar>(stack: &SpectralStack<T>, cfg: &NoiseConfig) -> Result<SpectralStack<T>> {
    stack.map_bands(|i, b| add_gaussian_noise_to_band(b, cfg, i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn acq() -> AcquisitionParams {
        AcquisitionParams::default()
    }

    #[test]
    fn b_value_examples() {
        assert_eq!(b_value(1.0, 0.0, 3.0), 0.0);
        // 1·4·27/3
        assert_eq!(b_value(1.0, 2.0, 3.0), 36.0);
        assert_eq!(b_value(2.0, 1.0, 3.0), 36.0);
        assert_eq!(b_value(2.0f32, 1.0, 3.0), 36.0);
    }

    #[test]
    fn signal_at_b0() {
        let t = TissueParams { rho: 100.0, t2: 100.0, diffusion: 1e-3 };
        let a = AcquisitionParams { k_const: 1.0, te: 100.0, b_values: vec![0.0, 1000.0] };
        assert_relative_eq!(signal(&t, &a, 0), 100.0 * (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(signal(&t, &a, 0), 36.787944117144235, max_relative = 1e-12);
    }

    #[test]
    fn zero_density_and_zero_diffusion() {
        let dead = TissueParams { rho: 0.0, t2: 80.0, diffusion: 2e-3 };
        let still = TissueParams { rho: 1.0, t2: 80.0, diffusion: 0.0 };
        for i in 0..3 {
            assert_eq!(signal(&dead, &acq(), i), 0.0);
            assert_eq!(signal(&still, &acq(), i), signal(&still, &acq(), 0));
        }
    }

    #[test]
    fn all_background_phantom_is_black() {
        let spec = PhantomSpec { slices: 2, width: 8, height: 8, shapes: vec![], ..PhantomSpec::default() };
        let p = render_phantom(&spec, &acq()).unwrap();
        for (stack, map) in p.stacks.iter().zip(&p.truth) {
            assert!(stack.bands().iter().all(|b| b.data().iter().all(|v| *v == 0.0)));
            assert!(map.labels().iter().all(|l| *l == ClassLabel::Background));
        }
    }

    #[test]
    fn single_tissue_phantom_is_constant() {
        let spec = PhantomSpec {
            slices: 1,
            width: 5,
            height: 4,
            shapes: vec![],
            fill: ClassLabel::Matter,
            ..PhantomSpec::default()
        };
        let p = render_phantom(&spec, &acq()).unwrap();
        let matter = spec.tissue_table[&ClassLabel::Matter];
        for (i, band) in p.stacks[0].bands().iter().enumerate() {
            let expected = signal(&matter, &acq(), i) * p.intensity_scale;
            assert!(band.data().iter().all(|v| *v == expected));
        }
        assert_relative_eq!(p.stacks[0].bands()[0].data()[0], 0.6 * 65535.0, max_relative = 1e-12);
    }

    #[test]
    fn missing_tissue_is_a_config_error() {
        let mut spec = PhantomSpec::default();
        spec.tissue_table.remove(&ClassLabel::Csf);
        assert!(matches!(render_phantom(&spec, &acq()), Err(Error::Config(_))));
    }

    #[test]
    fn out_of_bounds_shape_is_rejected() {
        let mut spec = PhantomSpec::default();
        spec.shapes.push(Shape {
            label: ClassLabel::Csf,
            kind: ShapeKind::Ellipse { cx: 0.9, cy: 0.0, rx: 0.2, ry: 0.2, angle_deg: 0.0 },
            profile: SliceProfile::default(),
        });
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn default_phantom_has_three_classes_on_training_slice() {
        let spec = PhantomSpec::default();
        let counts = spec.rasterize(13).counts();
        assert!(counts.iter().all(|c| *c > 0), "{counts:?}");
        // CSF a minority, background the majority
        assert!(counts[0] < counts[1] && counts[1] < counts[2], "{counts:?}");
    }

    #[test]
    fn csf_decay_factor_between_first_and_last_band() {
        let p = render_phantom(&PhantomSpec::default(), &acq()).unwrap();
        let map = &p.truth[12];
        let stack = &p.stacks[12];
        let mean = |band: &Band| {
            let v: Vec<f64> = map
                .labels()
                .iter()
                .zip(band.data())
                .filter(|(l, _)| **l == ClassLabel::Csf)
                .map(|(_, v)| *v)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let ratio = mean(&stack.bands()[2]) / mean(&stack.bands()[0]);
        assert_relative_eq!(ratio, (-3.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(ratio, 0.049787068367863944, max_relative = 1e-12);
    }

    #[test]
    fn zero_noise_is_identity() {
        let b = Band::new(3, 1, vec![1.0, 2.0, 3.0], 4).unwrap();
        assert_eq!(add_gaussian_noise(&b, &NoiseConfig::new(0.0, 9).unwrap()).unwrap(), b);
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let b = Band::filled(16, 16, 1000.0, 2).unwrap();
        let cfg = NoiseConfig::new(0.05, 42).unwrap();
        let a1 = add_gaussian_noise(&b, &cfg).unwrap();
        let a2 = add_gaussian_noise(&b, &cfg).unwrap();
        assert_eq!(a1, a2);
        let other = add_gaussian_noise_to_band(&b, &cfg, 1).unwrap();
        assert_ne!(a1, other);
    }

    #[test]
    fn noise_level_is_bounded() {
        assert!(NoiseConfig::new(0.21, 0).is_err());
        assert!(NoiseConfig::new(-0.01, 0).is_err());
    }

    #[test]
    fn noise_standard_deviation() {
        // 128*128 pixels, no clamping at 32768 ± 5σ
        let b = Band::filled(128, 128, 32768.0, 1).unwrap();
        let out = add_gaussian_noise(&b, &NoiseConfig::new(0.10, 7).unwrap()).unwrap();
        let d: Vec<f64> = out.data().iter().map(|v| v - 32768.0).collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 6553.5).abs() <= 0.05 * 6553.5, "sd = {sd}");
    }
}
