//! Apparent diffusion coefficient maps.
//!
//! For a stack with bands `f_1..f_n` (band 1 at b = 0) the map is
//!
//! ```text
//! ADC(u) = Σ_{i=2..n} (C / b_i) · ln(max(f_1(u), ε) / max(f_i(u), ε))
//! ```
//!
//! optionally divided by `n − 1`, in which case a noiseless pixel with a
//! single diffusion coefficient `D` yields exactly `C·D`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{save_band, write_json, Band, SpectralStack, FULL_SCALE};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig<T = f64> {
    pub c_const: T,
    pub normalize_by_terms: bool,
    /// Floor applied to each signal before the logarithm, intensity units.
    pub epsilon: T,
}

impl Default for AdcConfig<f64> {
    fn default() -> Self {
        AdcConfig { c_const: 1.0, normalize_by_terms: true, epsilon: 1.0 }
    }
}

impl<T: Scalar> AdcConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_const > T::zero()) {
            return Err(Error::InvalidValue(format!("C = {} must be > 0", self.c_const)));
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::InvalidValue(format!("epsilon = {} must be > 0", self.epsilon)));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> AdcConfig<U> {
        AdcConfig {
            c_const: U::lit(self.c_const.as_f64()),
            normalize_by_terms: self.normalize_by_terms,
            epsilon: U::lit(self.epsilon.as_f64()),
        }
    }
}

/// Unclamped ADC values; may be negative where noise inverts a ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct AdcRaw<T = f64> {
    pub width: usize,
    pub height: usize,
    pub slice_index: u32,
    pub values: Vec<T>,
}

impl<T: Scalar> AdcRaw<T> {
    /// Storable map with negative values set to zero.
    pub fn clamped(&self) -> Band<T> {
        let data = self.values.iter().map(|v| v.max(T::zero())).collect();
        Band::new(self.width, self.height, data, self.slice_index).expect("clamped ADC values are finite and non-negative")
    }
}

pub fn adc_map_raw<T: Scalar>(stack: &SpectralStack<T>, cfg: &AdcConfig<T>) -> Result<AdcRaw<T>> {
    cfg.validate()?;
    let n = stack.band_count();
    if n < 2 {
        return Err(Error::Arity { expected: 2, found: n });
    }
    let bands = stack.bands();
    let weights: Vec<T> = stack.b_values()[1..].iter().map(|b| cfg.c_const / *b).collect();
    let norm = if cfg.normalize_by_terms { T::lit((n - 1) as f64) } else { T::one() };
    let eps = cfg.epsilon;
    let values = (0..stack.pixel_count())
        .map(|p| {
            let ref_log = bands[0].data()[p].max(eps).ln();
            let sum: T = bands[1..]
                .iter()
                .zip(&weights)
                .map(|(b, w)| *w * (ref_log - b.data()[p].max(eps).ln()))
                .sum();
            sum / norm
        })
        .collect();
    Ok(AdcRaw { width: stack.width(), height: stack.height(), slice_index: stack.slice_index(), values })
}

/// ADC map with negatives clamped to zero.
pub fn adc_map<T: Scalar>(stack: &SpectralStack<T>, cfg: &AdcConfig<T>) -> Result<Band<T>> {
    adc_map_raw(stack, cfg).map(|r| r.clamped())
}

/// Sidecar describing the affine mapping of a 16-bit ADC image back to
/// ADC units: `adc = offset + pgm_value / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdcSidecar {
    pub width: usize,
    pub height: usize,
    pub slice_index: u32,
    pub scale: f64,
    pub offset: f64,
    pub max_adc: f64,
    pub raw_file: String,
}

/// Magic prefix of the raw ADC file.
pub const RAW_MAGIC: &[u8; 4] = b"ADC1";

/// Raw format: `ADC1`, width and height as little-endian u32, then
/// `width·height` little-endian f64 values in row-major order.
pub fn encode_raw<T: Scalar>(band: &Band<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * band.len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(band.width() as u32).to_le_bytes());
    out.extend_from_slice(&(band.height() as u32).to_le_bytes());
    for v in band.data() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<Band<f64>> {
    if bytes.len() < 12 || &bytes[..4] != RAW_MAGIC {
        return Err(Error::Format { field: "magic", detail: "not an ADC1 raw file".into() });
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let payload = &bytes[12..];
    if payload.len() != 8 * width * height {
        return Err(Error::Format {
            field: "payload",
            detail: format!("{} bytes for {width}x{height} f64 values", payload.len()),
        });
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Band::new(width, height, data, 0)
}

pub fn load_adc_raw(path: impl AsRef<Path>) -> Result<Band<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(&bytes)
}

/// Paths written by [`save_adc`].
#[derive(Clone, Debug)]
pub struct AdcFiles {
    pub pgm: PathBuf,
    pub sidecar: PathBuf,
    pub raw: PathBuf,
}

/// Writes `<base>.pgm` (rescaled so the maximum maps to 65535),
/// `<base>.json` (the rescale sidecar) and `<base>.f64` (exact values).
pub fn save_adc<T: Scalar>(band: &Band<T>, base: impl AsRef<Path>) -> Result<AdcFiles> {
    let base = base.as_ref();
    let with_ext = |ext: &str| {
        let mut p = base.as_os_str().to_owned();
        p.push(ext);
        PathBuf::from(p)
    };
    let files = AdcFiles { pgm: with_ext(".pgm"), sidecar: with_ext(".json"), raw: with_ext(".f64") };

    let max_adc = band.max().as_f64();
    let scale = if max_adc > 0.0 { FULL_SCALE / max_adc } else { 1.0 };
    let scaled: Vec<f64> = band.data().iter().map(|v| (v.as_f64() * scale).min(FULL_SCALE)).collect();
    save_band(&Band::new(band.width(), band.height(), scaled, band.slice_index())?, &files.pgm)?;

    fs::write(&files.raw, encode_raw(band)).map_err(|e| Error::io(&files.raw, e))?;
    let sidecar = AdcSidecar {
        width: band.width(),
        height: band.height(),
        slice_index: band.slice_index(),
        scale,
        offset: 0.0,
        max_adc,
        raw_file: files.raw.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    write_json(&sidecar, &files.sidecar)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn stack(px: &[[f64; 3]]) -> SpectralStack {
        let bands = (0..3)
            .map(|i| Band::new(px.len(), 1, px.iter().map(|p| p[i]).collect(), 0).unwrap())
            .collect();
        SpectralStack::new(bands, vec![0.0, 500.0, 1000.0]).unwrap()
    }

    #[test]
    fn equal_signals_give_zero() {
        let m = adc_map(&stack(&[[300.0, 300.0, 300.0]]), &AdcConfig::default()).unwrap();
        assert_eq!(m.data(), &[0.0]);
    }

    #[test]
    fn single_coefficient_pixel_recovers_diffusion() {
        let d: f64 = 3.0e-3;
        let s0 = 20000.0;
        let px = [s0, s0 * (-500.0 * d).exp(), s0 * (-1000.0 * d).exp()];
        let m = adc_map(&stack(&[px]), &AdcConfig::default()).unwrap();
        assert_relative_eq!(m.data()[0], d, max_relative = 1e-9);
        let summed = AdcConfig { normalize_by_terms: false, ..AdcConfig::default() };
        let m2 = adc_map(&stack(&[px]), &summed).unwrap();
        assert_relative_eq!(m2.data()[0], 2.0 * d, max_relative = 1e-9);
    }

    #[test]
    fn floor_pixel_is_clamped_to_zero() {
        let cfg = AdcConfig::default();
        let s = stack(&[[1.0, 50.0, 40.0]]);
        let raw = adc_map_raw(&s, &cfg).unwrap();
        assert!(raw.values[0] < 0.0);
        assert_eq!(adc_map(&s, &cfg).unwrap().data(), &[0.0]);
    }

    #[test]
    fn invariant_under_common_gain() {
        let s = stack(&[[5000.0, 3000.0, 2000.0], [100.0, 90.0, 10.0]]);
        let cfg = AdcConfig::default();
        let a = adc_map(&s, &cfg).unwrap();
        let g = s.map_bands(|_, b| Band::new(b.width(), b.height(), b.data().iter().map(|v| v * 3.5).collect(), 0)).unwrap();
        let b = adc_map(&g, &cfg).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_relative_eq!(*x, *y, max_relative = 1e-12);
        }
    }

    #[test]
    fn raw_round_trip() {
        let b = Band::new(2, 1, vec![3.0e-3, 0.00081234567], 0).unwrap();
        assert_eq!(decode_raw(&encode_raw(&b)).unwrap(), b);
        assert!(decode_raw(b"ADC0xxxxxxxx").is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let s = stack(&[[1.0, 1.0, 1.0]]);
        assert!(adc_map(&s, &AdcConfig { c_const: 0.0, ..AdcConfig::default() }).is_err());
        assert!(adc_map(&s, &AdcConfig { epsilon: 0.0, ..AdcConfig::default() }).is_err());
    }
}
