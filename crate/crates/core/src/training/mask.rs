use crate::instances::Bag;
use crate::numerics::Tensor;
use rand::seq::index;
use rand::Rng;

/// Number of instances kept at masking ratio `m`.
///
/// `(1 - m) N` is rounded stochastically (up with probability equal to its
/// fractional part), so the expected count is exactly `(1 - m) N` and each
/// index is kept with probability `1 - m`. Integral values are exact.
/// At least one instance always survives.
pub fn unmasked_count<R: Rng + ?Sized>(n: usize, m: f64, rng: &mut R) -> usize {
    let x = (1.0 - m) * n as f64;
    let floor = x.floor();
    let frac = x - floor;
    let mut k = floor as usize;
    if frac > 1e-12 && rng.random::<f64>() < frac {
        k += 1;
    }
    k.clamp(1, n.max(1))
}

/// Uniform sample without replacement, returned in ascending order.
pub fn mask_indices<R: Rng + ?Sized>(n: usize, m: f64, rng: &mut R) -> Vec<usize> {
    let k = unmasked_count(n, m, rng);
    if k == n {
        return (0..n).collect();
    }
    let mut idx = index::sample(rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Read access to instance labels one index at a time.
pub trait LabelSource {
    fn label(&self, i: usize) -> usize;
}

impl LabelSource for [usize] {
    fn label(&self, i: usize) -> usize {
        self[i]
    }
}

impl LabelSource for Vec<usize> {
    fn label(&self, i: usize) -> usize {
        self[i]
    }
}

/// The visible part of a bag for one training pass.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedBag {
    pub indices: Vec<usize>,
    pub features: Tensor,
    pub centroids: Vec<(f64, f64)>,
    pub labels: Option<Vec<usize>>,
}

/// Labels of the selected indices only; nothing else is read.
pub fn gather_labels<L: LabelSource + ?Sized>(source: &L, indices: &[usize]) -> Vec<usize> {
    indices.iter().map(|&i| source.label(i)).collect()
}

fn gather_rows(features: &Tensor, indices: &[usize]) -> Tensor {
    let d = features.shape()[1];
    let mut data = Vec::with_capacity(indices.len() * d);
    for &i in indices {
        data.extend_from_slice(features.row(i));
    }
    Tensor::new(vec![indices.len(), d], data).expect("gathered rows keep their width")
}

/// Drops a random fraction `m` of the bag's instances.
pub fn random_mask<R: Rng + ?Sized>(bag: &Bag, m: f64, rng: &mut R) -> MaskedBag {
    let indices = mask_indices(bag.len(), m, rng);
    MaskedBag {
        features: gather_rows(&bag.features, &indices),
        centroids: indices.iter().map(|&i| bag.centroids[i]).collect(),
        labels: bag.instance_labels.as_ref().map(|l| gather_labels(l, &indices)),
        indices,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng as ChaCha;
    use rand::SeedableRng;
    use std::cell::RefCell;

    fn bag(n: usize) -> Bag {
        let features = Tensor::new(vec![n, 2], (0..2 * n).map(|v| v as f64).collect()).unwrap();
        let centroids = (0..n).map(|i| (i as f64, 0.0)).collect();
        let labels = (0..n).map(|i| i % 4).collect();
        Bag::new(
            "s",
            "p",
            features,
            centroids,
            Some(labels),
            vec![1, 1, 1, 1],
            (0..n as u32).collect(),
        )
        .unwrap()
    }

    #[test]
    fn half_of_a_hundred() {
        let mut rng = ChaCha::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(unmasked_count(100, 0.5, &mut rng), 50);
        }
    }

    #[test]
    fn zero_ratio_is_identity() {
        let mut rng = ChaCha::seed_from_u64(1);
        let b = bag(7);
        let m = random_mask(&b, 0.0, &mut rng);
        assert_eq!(m.indices, (0..7).collect::<Vec<_>>());
        assert_eq!(m.features, b.features);
        assert_eq!(m.labels, b.instance_labels);
    }

    #[test]
    fn at_least_one_survives() {
        let mut rng = ChaCha::seed_from_u64(2);
        assert_eq!(unmasked_count(1, 0.9, &mut rng), 1);
        assert_eq!(unmasked_count(3, 0.99, &mut rng), 1);
    }

    #[test]
    fn selection_is_sorted_and_consistent() {
        let mut rng = ChaCha::seed_from_u64(3);
        let b = bag(20);
        let m = random_mask(&b, 0.5, &mut rng);
        assert_eq!(m.indices.len(), 10);
        assert!(m.indices.windows(2).all(|w| w[0] < w[1]));
        for (k, &i) in m.indices.iter().enumerate() {
            assert_eq!(m.features.row(k), b.features.row(i));
            assert_eq!(m.centroids[k], b.centroids[i]);
            assert_eq!(m.labels.as_ref().unwrap()[k], i % 4);
        }
    }

    #[test]
    fn fractional_count_has_exact_mean() {
        let mut rng = ChaCha::seed_from_u64(4);
        let trials = 40_000;
        let total: usize = (0..trials).map(|_| unmasked_count(10, 0.25, &mut rng)).sum();
        let mean = total as f64 / trials as f64;
        // counts are 7 or 8 with equal odds: sd of the mean is 0.5 / sqrt(trials)
        assert!((mean - 7.5).abs() < 3.0 * 0.5 / (trials as f64).sqrt(), "{mean}");
    }

    struct Probe {
        labels: Vec<usize>,
        seen: RefCell<Vec<usize>>,
    }

    impl LabelSource for Probe {
        fn label(&self, i: usize) -> usize {
            self.seen.borrow_mut().push(i);
            self.labels[i]
        }
    }

    #[test]
    fn masked_labels_are_never_read() {
        let mut rng = ChaCha::seed_from_u64(5);
        let probe = Probe {
            labels: (0..30).collect(),
            seen: RefCell::new(Vec::new()),
        };
        let idx = mask_indices(30, 0.6, &mut rng);
        let got = gather_labels(&probe, &idx);
        assert_eq!(got, idx);
        assert_eq!(*probe.seen.borrow(), idx);
    }
}
