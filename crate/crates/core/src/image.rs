//! Image containers, label maps, sample extraction and on-disk formats.
//!
//! Bands are stored as 16-bit binary PGM (`P5`, maxval 65535, big-endian
//! samples). Label maps are 8-bit `P5` files whose pixel values are the
//! [`ClassLabel`] codes 1, 2 and 3. A spectral stack is a JSON manifest
//! pointing at one band file per diffusion exponent.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Full-scale value of a 16-bit band.
pub const FULL_SCALE: f64 = 65535.0;

/// Tissue class. The integer codes are part of the label-map file format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Csf = 1,
    Matter = 2,
    Background = 3,
}

impl ClassLabel {
    /// All classes in code order.
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Csf, ClassLabel::Matter, ClassLabel::Background];

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Zero-based position, usable as an index into per-class arrays.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ClassLabel::Csf),
            2 => Some(ClassLabel::Matter),
            3 => Some(ClassLabel::Background),
            _ => None,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

/// Single-slice scalar image for one diffusion exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band<T = f64> {
    width: usize,
    height: usize,
    data: Vec<T>,
    slice_index: u32,
}

impl<T: Scalar> Band<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>, slice_index: u32) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "band data has {} pixels, expected {width}x{height}",
                data.len()
            )));
        }
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < T::zero())
        {
            return Err(Error::InvalidValue(format!(
                "band intensity {v} at pixel {i} must be finite and non-negative"
            )));
        }
        Ok(Band { width, height, data, slice_index })
    }

    pub fn filled(width: usize, height: usize, value: T, slice_index: u32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], slice_index)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn slice_index(&self) -> u32 {
        self.slice_index
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn with_slice_index(mut self, slice_index: u32) -> Self {
        self.slice_index = slice_index;
        self
    }

    pub fn cast<U: Scalar>(&self) -> Band<U> {
        Band {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            slice_index: self.slice_index,
        }
    }

    pub fn max(&self) -> T {
        self.data.iter().copied().fold(T::zero(), T::max)
    }
}

/// Ordered bands of one slice with their diffusion exponents (s/mm²).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralStack<T = f64> {
    bands: Vec<Band<T>>,
    b_values: Vec<T>,
}

impl<T: Scalar> SpectralStack<T> {
    pub fn new(bands: Vec<Band<T>>, b_values: Vec<T>) -> Result<Self> {
        if bands.len() < 2 {
            return Err(Error::Arity { expected: 2, found: bands.len() });
        }
        if bands.len() != b_values.len() {
            return Err(Error::Dimension(format!(
                "{} bands but {} b-values",
                bands.len(),
                b_values.len()
            )));
        }
        let first = &bands[0];
        for (i, b) in bands.iter().enumerate().skip(1) {
            if b.width != first.width || b.height != first.height {
                return Err(Error::Dimension(format!(
                    "band {i} is {}x{}, band 0 is {}x{}",
                    b.width, b.height, first.width, first.height
                )));
            }
            if b.slice_index != first.slice_index {
                return Err(Error::Dimension(format!(
                    "band {i} belongs to slice {}, band 0 to slice {}",
                    b.slice_index, first.slice_index
                )));
            }
        }
        validate_b_values(&b_values)?;
        Ok(SpectralStack { bands, b_values })
    }

    pub fn bands(&self) -> &[Band<T>] {
        &self.bands
    }

    pub fn b_values(&self) -> &[T] {
        &self.b_values
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn width(&self) -> usize {
        self.bands[0].width
    }

    pub fn height(&self) -> usize {
        self.bands[0].height
    }

    pub fn pixel_count(&self) -> usize {
        self.bands[0].len()
    }

    pub fn slice_index(&self) -> u32 {
        self.bands[0].slice_index
    }

    /// Feature vector of pixel `i` written into `out`.
    pub fn pixel_into(&self, i: usize, out: &mut [T]) {
        for (o, b) in out.iter_mut().zip(&self.bands) {
            *o = b.data[i];
        }
    }

    /// Applies `f` to every band, keeping the b-values.
    pub fn map_bands<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, &Band<T>) -> Result<Band<T>>,
    {
        let bands = self
            .bands
            .iter()
            .enumerate()
            .map(|(i, b)| f(i, b))
            .collect::<Result<Vec<_>>>()?;
        SpectralStack::new(bands, self.b_values.clone())
    }
}

/// `b_values[0] == 0` and strictly increasing.
pub fn validate_b_values<T: Scalar>(b_values: &[T]) -> Result<()> {
    match b_values.first() {
        None => return Err(Error::Ordering("no b-values".into())),
        Some(b0) if *b0 != T::zero() => {
            return Err(Error::Ordering(format!("first b-value is {b0}, must be 0")))
        }
        _ => {}
    }
    if let Some(w) = b_values.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::Ordering(format!(
            "b-values must be strictly increasing, found {} then {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Per-pixel class assignment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<ClassLabel>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<ClassLabel>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Dimension(format!(
                "label map has {} pixels, expected {width}x{height}",
                labels.len()
            )));
        }
        Ok(LabelMap { width, height, labels })
    }

    pub fn filled(width: usize, height: usize, label: ClassLabel) -> Self {
        LabelMap { width, height, labels: vec![label; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> ClassLabel {
        self.labels[y * self.width + x]
    }

    /// Pixel counts per class, indexed by [`ClassLabel::index`].
    pub fn counts(&self) -> [u64; 3] {
        let mut c = [0u64; 3];
        for l in &self.labels {
            c[l.index()] += 1;
        }
        c
    }
}

/// Labeled feature vectors, stored row-major in a flat buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet<T = f64> {
    feature_dim: usize,
    features: Vec<T>,
    labels: Vec<ClassLabel>,
}

impl<T: Scalar> SampleSet<T> {
    pub fn new(feature_dim: usize, features: Vec<T>, labels: Vec<ClassLabel>) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::Arity { expected: 1, found: 0 });
        }
        if labels.is_empty() {
            return Err(Error::EmptySet("sample set has no samples".into()));
        }
        if features.len() != feature_dim * labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature values for {} samples of dimension {feature_dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(SampleSet { feature_dim, features, labels })
    }

    /// Builds a set from `(features, label)` pairs.
    pub fn from_pairs<I, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (V, ClassLabel)>,
        V: AsRef<[T]>,
    {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut dim = None;
        for (x, l) in pairs {
            let x = x.as_ref();
            match dim {
                None => dim = Some(x.len()),
                Some(d) if d != x.len() => return Err(Error::Arity { expected: d, found: x.len() }),
                _ => {}
            }
            features.extend_from_slice(x);
            labels.push(l);
        }
        match dim {
            Some(d) => Self::new(d, features, labels),
            None => Err(Error::EmptySet("sample set has no samples".into())),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn sample(&self, i: usize) -> &[T] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn label(&self, i: usize) -> ClassLabel {
        self.labels[i]
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], ClassLabel)> + '_ {
        self.features.chunks_exact(self.feature_dim).zip(self.labels.iter().copied())
    }

    /// Number of distinct classes that occur.
    pub fn class_count(&self) -> usize {
        let mut seen = [false; 3];
        for l in &self.labels {
            seen[l.index()] = true;
        }
        seen.iter().filter(|s| **s).count()
    }

    /// Concatenates two sets of the same dimension.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if other.feature_dim != self.feature_dim {
            return Err(Error::Arity { expected: self.feature_dim, found: other.feature_dim });
        }
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(self.feature_dim, features, labels)
    }
}

/// Flat row-major feature matrix of every pixel in a stack, optionally
/// scaled into `[0, 1]` by the 16-bit full scale.
pub fn pixel_features<T: Scalar>(stack: &SpectralStack<T>, normalize: bool) -> Vec<T> {
    let n = stack.band_count();
    let scale = if normalize { T::lit(FULL_SCALE).recip() } else { T::one() };
    let mut out = vec![T::zero(); n * stack.pixel_count()];
    for (i, px) in out.chunks_exact_mut(n).enumerate() {
        stack.pixel_into(i, px);
        if normalize {
            px.iter_mut().for_each(|v| *v *= scale);
        }
    }
    out
}

/// One sample per pixel in row-major order, labeled from `labels`.
pub fn extract_samples<T: Scalar>(
    stack: &SpectralStack<T>,
    labels: &LabelMap,
    normalize: bool,
) -> Result<SampleSet<T>> {
    if labels.is_empty() {
        return Err(Error::EmptySet("label map has no pixels".into()));
    }
    if labels.width != stack.width() || labels.height != stack.height() {
        return Err(Error::Dimension(format!(
            "label map is {}x{}, stack is {}x{}",
            labels.width,
            labels.height,
            stack.width(),
            stack.height()
        )));
    }
    SampleSet::new(stack.band_count(), pixel_features(stack, normalize), labels.labels.clone())
}

/// Scalar samples from a single band (e.g. an ADC map).
pub fn extract_band_samples<T: Scalar>(band: &Band<T>, labels: &LabelMap) -> Result<SampleSet<T>> {
    if labels.is_empty() {
        return Err(Error::EmptySet("label map has no pixels".into()));
    }
    if labels.width != band.width || labels.height != band.height {
        return Err(Error::Dimension(format!(
            "label map is {}x{}, band is {}x{}",
            labels.width, labels.height, band.width, band.height
        )));
    }
    SampleSet::new(1, band.data.clone(), labels.labels.clone())
}

// ---------------------------------------------------------------------------
// PGM

struct PgmHeader {
    width: usize,
    height: usize,
    maxval: u32,
    offset: usize,
}

fn parse_pgm_header(bytes: &[u8]) -> Result<PgmHeader> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(Error::Format { field: "magic", detail: format!("expected P5, found {found:?}") });
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    let names = ["width", "height", "maxval"];
    for (slot, name) in fields.iter_mut().zip(names) {
        // whitespace and comments before each field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|b| *b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format { field: name, detail: "missing or non-numeric".into() });
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *slot = text
            .parse()
            .map_err(|_| Error::Format { field: name, detail: format!("{text} out of range") })?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(Error::Format {
                field: "maxval",
                detail: "must be followed by a single whitespace byte".into(),
            })
        }
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::Format { field: "width", detail: format!("empty image {width}x{height}") });
    }
    Ok(PgmHeader {
        width: width as usize,
        height: height as usize,
        maxval: u32::try_from(maxval).unwrap_or(u32::MAX),
        offset: pos,
    })
}

fn pgm_header(width: usize, height: usize, maxval: u32) -> Vec<u8> {
    format!("P5\n{width} {height}\n{maxval}\n").into_bytes()
}

/// Decodes a 16-bit `P5` image.
pub fn decode_band<T: Scalar>(bytes: &[u8], slice_index: u32) -> Result<Band<T>> {
    let h = parse_pgm_header(bytes)?;
    if h.maxval != 65535 {
        return Err(Error::Format { field: "maxval", detail: format!("expected 65535, found {}", h.maxval) });
    }
    let n = h.width * h.height;
    let payload = &bytes[h.offset..];
    if payload.len() < 2 * n {
        return Err(Error::Format {
            field: "payload",
            detail: format!("truncated: {} bytes for {n} 16-bit pixels", payload.len()),
        });
    }
    let data = payload[..2 * n]
        .chunks_exact(2)
        .map(|c| T::lit(f64::from(u16::from_be_bytes([c[0], c[1]]))))
        .collect();
    Band::new(h.width, h.height, data, slice_index)
}

/// Encodes a band as 16-bit `P5`, rounding half-to-even. Values that round
/// outside `[0, 65535]` are rejected.
pub fn encode_band<T: Scalar>(band: &Band<T>) -> Result<Vec<u8>> {
    let mut out = pgm_header(band.width, band.height, 65535);
    out.reserve(2 * band.len());
    for (i, v) in band.data.iter().enumerate() {
        let r = v.as_f64().round_ties_even();
        if !(0.0..=FULL_SCALE).contains(&r) {
            return Err(Error::Range { index: i, value: v.as_f64() });
        }
        out.extend_from_slice(&(r as u16).to_be_bytes());
    }
    Ok(out)
}

pub fn load_band<T: Scalar>(path: impl AsRef<Path>) -> Result<Band<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_band(&bytes, 0)
}

pub fn save_band<T: Scalar>(band: &Band<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_band(band)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decodes an 8-bit `P5` label map with values 1..=3.
pub fn decode_label_map(bytes: &[u8]) -> Result<LabelMap> {
    let h = parse_pgm_header(bytes)?;
    if h.maxval == 0 || h.maxval > 255 {
        return Err(Error::Format { field: "maxval", detail: format!("expected 8-bit maxval, found {}", h.maxval) });
    }
    let n = h.width * h.height;
    let payload = &bytes[h.offset..];
    if payload.len() < n {
        return Err(Error::Format {
            field: "payload",
            detail: format!("truncated: {} bytes for {n} pixels", payload.len()),
        });
    }
    let labels = payload[..n]
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            ClassLabel::from_code(c).ok_or_else(|| Error::Format {
                field: "label",
                detail: format!("pixel {i} has code {c}, expected 1, 2 or 3"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LabelMap::new(h.width, h.height, labels)
}

pub fn encode_label_map(map: &LabelMap) -> Vec<u8> {
    let mut out = pgm_header(map.width, map.height, 255);
    out.extend(map.labels.iter().map(|l| l.code()));
    out
}

pub fn load_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_label_map(&bytes)
}

pub fn save_label_map(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_label_map(map)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Stack manifests

/// JSON manifest describing one spectral stack on disk. Band paths are
/// resolved relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackManifest {
    pub bands: Vec<PathBuf>,
    pub b_values: Vec<f64>,
    pub slice_index: u32,
}

pub fn read_json<D: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<D> {
    let path = path.as_ref();
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| Error::json(path, e))
}

pub fn write_json<S: Serialize>(value: &S, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push(b'\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_stack<T: Scalar>(manifest: impl AsRef<Path>) -> Result<SpectralStack<T>> {
    let manifest = manifest.as_ref();
    let m: StackManifest = read_json(manifest)?;
    if m.bands.len() != m.b_values.len() {
        return Err(Error::Dimension(format!(
            "manifest lists {} bands but {} b-values",
            m.bands.len(),
            m.b_values.len()
        )));
    }
    let b_values: Vec<T> = m.b_values.iter().map(|b| T::lit(*b)).collect();
    validate_b_values(&b_values)?;
    let dir = manifest.parent().unwrap_or_else(|| Path::new("."));
    let bands = m
        .bands
        .iter()
        .map(|p| load_band::<T>(dir.join(p)).map(|b| b.with_slice_index(m.slice_index)))
        .collect::<Result<Vec<_>>>()?;
    SpectralStack::new(bands, b_values)
}

/// Writes each band as `<stem>_b<value>.pgm` next to `<stem>.json` in `dir`
/// and returns the manifest path.
pub fn save_stack<T: Scalar>(stack: &SpectralStack<T>, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let mut names = Vec::with_capacity(stack.band_count());
    for (band, b) in stack.bands.iter().zip(&stack.b_values) {
        let name = format!("{stem}_b{:04}.pgm", b.as_f64().round() as i64);
        save_band(band, dir.join(&name))?;
        names.push(PathBuf::from(name));
    }
    let manifest = StackManifest {
        bands: names,
        b_values: stack.b_values.iter().map(|b| b.as_f64()).collect(),
        slice_index: stack.slice_index(),
    };
    let path = dir.join(format!("{stem}.json"));
    write_json(&manifest, &path)?;
    Ok(path)
}
