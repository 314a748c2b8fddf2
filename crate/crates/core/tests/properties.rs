use dwspectral::classifiers::{argmax_label, classify, ModelInput, PolyModel, TrainedModel};
use dwspectral::image::{
    decode_band, decode_label_map, encode_band, encode_label_map, pixel_features, Band, ClassLabel, LabelMap,
    SpectralStack,
};
use dwspectral::metrics::{kappa_exact, volumes, ConfusionMatrix};
use num_rational::Ratio;
use proptest::prelude::*;

fn label() -> impl Strategy<Value = ClassLabel> {
    prop_oneof![Just(ClassLabel::Csf), Just(ClassLabel::Matter), Just(ClassLabel::Background)]
}

fn label_map() -> impl Strategy<Value = LabelMap> {
    (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
        prop::collection::vec(label(), w * h).prop_map(move |l| LabelMap::new(w, h, l).unwrap())
    })
}

fn matrix() -> impl Strategy<Value = ConfusionMatrix> {
    prop::array::uniform3(prop::array::uniform3(0u64..200)).prop_map(ConfusionMatrix::new)
}

fn stack() -> impl Strategy<Value = SpectralStack> {
    (1usize..10, 1usize..10).prop_flat_map(|(w, h)| {
        prop::collection::vec(prop::collection::vec(0u16..=u16::MAX, w * h), 3).prop_map(move |bands| {
            let bands = bands
                .into_iter()
                .map(|d| Band::new(w, h, d.into_iter().map(f64::from).collect(), 4).unwrap())
                .collect();
            SpectralStack::new(bands, vec![0.0, 500.0, 1000.0]).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn pgm_round_trip(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
        let data: Vec<f64> = (0..w * h).map(|i| f64::from(((seed >> (i % 48)) as u16) ^ (i as u16).wrapping_mul(7919))).collect();
        let band = Band::new(w, h, data, 3).unwrap();
        let back: Band = decode_band(&encode_band(&band).unwrap(), 3).unwrap();
        prop_assert_eq!(back, band);
    }

    #[test]
    fn label_map_round_trip(map in label_map()) {
        prop_assert_eq!(decode_label_map(&encode_label_map(&map)).unwrap(), map);
    }

    #[test]
    fn kappa_is_scale_invariant_and_bounded(cm in matrix(), k in 1u64..50) {
        if let Ok(a) = kappa_exact(&cm) {
            let scaled = ConfusionMatrix::new(cm.counts.map(|r| r.map(|c| c * k)));
            prop_assert_eq!(kappa_exact(&scaled).unwrap(), a);
            prop_assert!(a <= Ratio::from_integer(1));
            prop_assert_eq!(kappa_exact(&cm.transpose()).unwrap(), a);
        }
    }

    #[test]
    fn volumes_sum_to_one_hundred(maps in prop::collection::vec(label_map(), 1..2)) {
        let v = volumes(&maps).unwrap();
        prop_assert!((v.v1 + v.v2 + v.v3 - 100.0).abs() < 1e-9);
    }

    #[test]
    fn normalized_features_lie_in_unit_interval(s in stack()) {
        prop_assert!(pixel_features(&s, true).iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn argmax_ignores_positive_scale_and_shift(s in prop::array::uniform3(-1e6f64..1e6), a in 1e-3f64..1e3, c in -1e3f64..1e3) {
        let t = s.map(|v| a * v + c);
        let distinct = (s[0] - s[1]).abs() > 1e-6 * s[0].abs().max(1.0)
            && (s[1] - s[2]).abs() > 1e-6 * s[1].abs().max(1.0)
            && (s[0] - s[2]).abs() > 1e-6 * s[0].abs().max(1.0);
        if distinct {
            prop_assert_eq!(argmax_label(&t), argmax_label(&s));
        }
    }

    #[test]
    fn classification_is_per_pixel(s in stack(), w in prop::array::uniform3(prop::array::uniform10(-5f64..5.0)), shift in 0usize..100) {
        let model = TrainedModel::Poly { model: PolyModel::new(w).unwrap() };
        let labels = classify(&model, ModelInput::Stack(&s)).unwrap();
        let n = s.pixel_count();
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let permuted = s
            .map_bands(|_, b| Band::new(b.width(), b.height(), perm.iter().map(|p| b.data()[*p]).collect(), b.slice_index()))
            .unwrap();
        let plabels = classify(&model, ModelInput::Stack(&permuted)).unwrap();
        for (i, p) in perm.iter().enumerate() {
            prop_assert_eq!(plabels.labels()[i], labels.labels()[*p]);
        }
    }
}
