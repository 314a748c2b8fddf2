//! Synthetic datasets and independent oracles shared by the integration tests.

#![allow(dead_code)]

use dwspectral::classifiers::mlp::{MlpModel, MLP_HIDDEN, MLP_INPUTS};
use dwspectral::image::{ClassLabel, SampleSet};
use dwspectral::physics::PhantomSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Isotropic Gaussian blobs, `per_class` samples around each center.
pub fn blobs(centers: &[([f64; 3], ClassLabel)], per_class: usize, sd: f64, seed: u64) -> SampleSet<f64> {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, sd).unwrap();
    let mut pairs = Vec::new();
    for _ in 0..per_class {
        for (c, l) in centers {
            let x: [f64; 3] = std::array::from_fn(|k| c[k] + normal.sample(&mut r));
            pairs.push((x, *l));
        }
    }
    SampleSet::from_pairs(pairs).unwrap()
}

/// Accuracy of assigning each sample to the class of the nearest class mean.
pub fn nearest_centroid_accuracy(s: &SampleSet<f64>) -> f64 {
    let d = s.feature_dim();
    let mut sums = vec![vec![0.0; d]; 3];
    let mut counts = [0usize; 3];
    for (x, l) in s.iter() {
        counts[l.index()] += 1;
        for k in 0..d {
            sums[l.index()][k] += x[k];
        }
    }
    let means: Vec<Option<Vec<f64>>> = (0..3)
        .map(|c| (counts[c] > 0).then(|| sums[c].iter().map(|v| v / counts[c] as f64).collect()))
        .collect();
    let correct = s
        .iter()
        .filter(|(x, l)| {
            let best = (0..3)
                .filter_map(|c| means[c].as_ref().map(|m| (c, m.iter().zip(*x).map(|(a, b)| (a - b).powi(2)).sum::<f64>())))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0;
            best == l.index()
        })
        .count();
    correct as f64 / s.len() as f64
}

/// Disc of radius 0.5 (CSF) inside a ring 0.7..1.0 (matter), equal counts
/// and uniform in area. The third feature is zero.
pub fn annulus(per_class: usize, seed: u64) -> SampleSet<f64> {
    let mut r = rng(seed);
    let mut pairs = Vec::new();
    let point = |r: &mut ChaCha8Rng, lo: f64, hi: f64| {
        let rad = (lo * lo + (hi * hi - lo * lo) * r.random::<f64>()).sqrt();
        let t = std::f64::consts::TAU * r.random::<f64>();
        [rad * t.cos(), rad * t.sin(), 0.0]
    };
    for _ in 0..per_class {
        pairs.push((point(&mut r, 0.0, 0.5), ClassLabel::Csf));
        pairs.push((point(&mut r, 0.7, 1.0), ClassLabel::Matter));
    }
    SampleSet::from_pairs(pairs).unwrap()
}

/// Best accuracy of any half-plane rule on the first two features, found by
/// sweeping `angles` directions over the full circle and every threshold.
pub fn best_linear_accuracy(s: &SampleSet<f64>, positive: ClassLabel, angles: usize) -> f64 {
    let n = s.len();
    let pos_total = s.labels().iter().filter(|l| **l == positive).count();
    let mut best = 0.0f64;
    let mut proj: Vec<(f64, bool)> = Vec::with_capacity(n);
    for a in 0..angles {
        let t = std::f64::consts::TAU * a as f64 / angles as f64;
        let (c, sn) = (t.cos(), t.sin());
        proj.clear();
        proj.extend(s.iter().map(|(x, l)| (x[0] * c + x[1] * sn, l == positive)));
        proj.sort_by(|a, b| a.0.total_cmp(&b.0));
        // rule: projection > threshold means positive; start with everything positive
        let mut correct = pos_total;
        best = best.max(correct as f64 / n as f64);
        let mut i = 0;
        while i < n {
            let v = proj[i].0;
            while i < n && proj[i].0 == v {
                if proj[i].1 {
                    correct -= 1;
                } else {
                    correct += 1;
                }
                i += 1;
            }
            best = best.max(correct as f64 / n as f64);
        }
    }
    best
}

#[derive(Clone, Copy)]
enum Coord {
    Hidden(usize, usize),
    Output(usize, usize),
}

fn weight_mut(m: &mut MlpModel<f64>, c: Coord) -> &mut f64 {
    match c {
        Coord::Hidden(j, i) => &mut m.hidden_weights[j][i],
        Coord::Output(k, j) => &mut m.output_weights[k][j],
    }
}

/// Largest relative disagreement between backprop and central differences
/// over `coords` random weight coordinates of a random 3-60-3 network.
pub fn mlp_gradient_check(seed: u64, coords: usize, step: f64) -> f64 {
    let mut model = MlpModel::<f64>::random(seed);
    let mut r = rng(seed ^ 0x9e37_79b9);
    let x: [f64; 3] = std::array::from_fn(|_| r.random_range(0.0..1.0));
    let target = [0.9, 0.1, 0.1];
    let grad = model.gradient(&x, &target);
    let hidden_count = MLP_HIDDEN * (MLP_INPUTS + 1);
    let total = hidden_count + 3 * (MLP_HIDDEN + 1);
    let mut worst = 0.0f64;
    for _ in 0..coords {
        let idx = r.random_range(0..total);
        let (coord, analytic) = if idx < hidden_count {
            let (j, i) = (idx / (MLP_INPUTS + 1), idx % (MLP_INPUTS + 1));
            (Coord::Hidden(j, i), grad.hidden[j][i])
        } else {
            let o = idx - hidden_count;
            let (k, j) = (o / (MLP_HIDDEN + 1), o % (MLP_HIDDEN + 1));
            (Coord::Output(k, j), grad.output[k][j])
        };
        let w0 = *weight_mut(&mut model, coord);
        *weight_mut(&mut model, coord) = w0 + step;
        let up = model.loss(&x, &target);
        *weight_mut(&mut model, coord) = w0 - step;
        let down = model.loss(&x, &target);
        *weight_mut(&mut model, coord) = w0;
        let numeric = (up - down) / (2.0 * step);
        let scale = analytic.abs().max(numeric.abs());
        if scale > 1e-10 {
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    worst
}

/// Default phantom geometry at a reduced in-plane size.
pub fn small_phantom(size: usize) -> PhantomSpec {
    PhantomSpec { width: size, height: size, ..PhantomSpec::default() }
}
