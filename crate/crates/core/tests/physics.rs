mod common;

use dwspectral::adc::{adc_map, adc_map_raw, AdcConfig};
use dwspectral::image::ClassLabel;
use dwspectral::physics::{
    add_noise_to_stack, default_tissue_table, render_phantom, signal, AcquisitionParams, NoiseConfig, PhantomSpec,
    TissueParams,
};

fn diffusion(label: ClassLabel) -> f64 {
    default_tissue_table()[&label].diffusion
}

#[test]
fn log_ratio_equals_b_times_diffusion_on_every_tissue_pixel() {
    let acq = AcquisitionParams::default();
    let phantom = render_phantom(&PhantomSpec::default(), &acq).unwrap();
    let mut checked = 0usize;
    for (stack, truth) in phantom.stacks.iter().zip(&phantom.truth) {
        for (p, label) in truth.labels().iter().enumerate() {
            if *label == ClassLabel::Background {
                continue;
            }
            let f1 = stack.bands()[0].data()[p];
            for i in 1..stack.band_count() {
                let expected = acq.b_values[i] * diffusion(*label);
                let got = (f1 / stack.bands()[i].data()[p]).ln();
                assert!((got - expected).abs() <= 1e-12 * expected, "pixel {p} band {i}: {got} vs {expected}");
            }
            checked += 1;
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn noiseless_adc_recovers_tissue_diffusion() {
    let phantom = render_phantom(&PhantomSpec::default(), &AcquisitionParams::<f64>::default()).unwrap();
    let cfg = AdcConfig::default();
    for (stack, truth) in phantom.stacks.iter().zip(&phantom.truth) {
        let adc = adc_map_raw(stack, &cfg).unwrap();
        for (v, label) in adc.values.iter().zip(truth.labels()) {
            match label {
                ClassLabel::Background => assert_eq!(*v, 0.0),
                l => {
                    let d = diffusion(*l);
                    assert!((v - d).abs() <= 1e-9 * d, "{l:?}: {v} vs {d}");
                }
            }
        }
    }
}

#[test]
fn signal_follows_relaxation_and_diffusion_terms() {
    let t = TissueParams { rho: 0.5, t2: 80.0, diffusion: 1e-3 };
    let acq = AcquisitionParams { k_const: 2.0, te: 100.0, b_values: vec![0.0, 500.0, 1000.0] };
    for (i, b) in acq.b_values.iter().enumerate() {
        let oracle: f64 = 2.0 * 0.5 * (-100.0f64 / 80.0).exp() * (-*b * 1e-3f64).exp();
        assert!((signal(&t, &acq, i) - oracle).abs() <= 1e-15);
    }
}

#[test]
fn background_noise_produces_spurious_high_diffusion() {
    let spec = PhantomSpec::default();
    let phantom = render_phantom(&spec, &AcquisitionParams::default()).unwrap();
    let cfg = AdcConfig::default();
    let slice = 12;
    let stack = &phantom.stacks[slice];
    let truth = &phantom.truth[slice];

    let mut tissue: Vec<f64> = adc_map(stack, &cfg)
        .unwrap()
        .data()
        .iter()
        .zip(truth.labels())
        .filter(|(_, l)| **l != ClassLabel::Background)
        .map(|(v, _)| *v)
        .collect();
    tissue.sort_by(f64::total_cmp);
    let p99 = tissue[(0.99 * (tissue.len() - 1) as f64).round() as usize];

    let noisy = add_noise_to_stack(stack, &NoiseConfig::new(0.10, 1).unwrap()).unwrap();
    let adc = adc_map(&noisy, &cfg).unwrap();
    let bg: Vec<f64> = adc
        .data()
        .iter()
        .zip(truth.labels())
        .filter(|(_, l)| **l == ClassLabel::Background)
        .map(|(v, _)| *v)
        .collect();
    let above = bg.iter().filter(|v| **v > p99).count() as f64 / bg.len() as f64;
    assert!(above >= 0.01, "only {:.3}% of background above {p99}", 100.0 * above);
}

#[test]
fn phantom_is_deterministic_and_peaks_at_sixty_percent() {
    let spec = common::small_phantom(48);
    let acq = AcquisitionParams::default();
    let a = render_phantom::<f64>(&spec, &acq).unwrap();
    assert_eq!(a, render_phantom(&spec, &acq).unwrap());
    let peak = a.stacks.iter().map(|s| s.bands()[0].max()).fold(0.0, f64::max);
    assert!((peak - 0.6 * 65535.0).abs() < 1e-9);
    assert_eq!(a.stacks.len(), 20);
    assert!(a.stacks.iter().enumerate().all(|(i, s)| s.slice_index() == i as u32 + 1));
}

#[test]
fn every_slice_has_all_three_classes() {
    let spec = PhantomSpec::default();
    for s in 1..=spec.slices {
        let counts = spec.rasterize(s).counts();
        assert!(counts.iter().all(|c| *c > 0), "slice {s}: {counts:?}");
    }
}

#[test]
fn noise_is_reproducible_and_level_dependent() {
    let phantom = render_phantom::<f64>(&common::small_phantom(32), &AcquisitionParams::default()).unwrap();
    let stack = &phantom.stacks[0];
    let a = add_noise_to_stack(stack, &NoiseConfig::new(0.05, 9).unwrap()).unwrap();
    assert_eq!(a, add_noise_to_stack(stack, &NoiseConfig::new(0.05, 9).unwrap()).unwrap());
    assert_ne!(a, add_noise_to_stack(stack, &NoiseConfig::new(0.05, 10).unwrap()).unwrap());
    assert_eq!(&add_noise_to_stack(stack, &NoiseConfig::new(0.0, 9).unwrap()).unwrap(), stack);
    assert!(NoiseConfig::new(0.25, 1).is_err());
}
