//! Patient-level stratified folds.

use crate::error::{Error, Result};
use crate::instances::Bag;
use crate::Rng;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand::SeedableRng;
use std::collections::BTreeMap;

/// Slide label of a patient's most severe slide: the one with the highest
/// positive class index, ties broken by the larger bit pattern.
fn most_severe(labels: &[&[u8]]) -> Vec<u8> {
    let severity = |l: &[u8]| (l.iter().rposition(|&v| v != 0), l.to_vec());
    labels
        .iter()
        .map(|l| severity(l))
        .max()
        .map(|(_, l)| l)
        .unwrap_or_default()
}

/// Splits patients into `k` folds. `slides` pairs each slide's patient id
/// with its multi-hot label.
///
/// Patients are grouped by the label pattern of their most severe slide,
/// rarest pattern first, shuffled within each group. Each patient then goes
/// to the fold where adding their slides most reduces the squared,
/// target-normalised deviation of per-class slide counts and fold size from
/// an even share. Folds are returned as sorted patient-id lists.
pub fn stratified_kfold(slides: &[(String, Vec<u8>)], k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let classes = slides.first().map_or(0, |s| s.1.len());
    let mut by_patient: BTreeMap<&str, Vec<&[u8]>> = BTreeMap::new();
    for (patient, label) in slides {
        if label.len() != classes {
            return Err(Error::Argument(format!(
                "slide labels of length {} and {classes}",
                label.len()
            )));
        }
        by_patient.entry(patient).or_default().push(label);
    }
    if by_patient.len() < k {
        return Err(Error::Config(format!(
            "{} patients cannot fill {k} folds",
            by_patient.len()
        )));
    }
    let mut groups: BTreeMap<Vec<u8>, Vec<&str>> = BTreeMap::new();
    for (patient, labels) in &by_patient {
        groups.entry(most_severe(labels)).or_default().push(patient);
    }

    // per-patient counts: slides, then slides per class
    let counts = |patient: &str| -> Vec<f64> {
        let labels = &by_patient[patient];
        let mut v = vec![labels.len() as f64];
        v.extend((0..classes).map(|c| labels.iter().filter(|l| l[c] != 0).count() as f64));
        v
    };
    let mut target = vec![0.0; classes + 1];
    for p in by_patient.keys() {
        for (t, c) in target.iter_mut().zip(counts(p)) {
            *t += c / k as f64;
        }
    }

    let mut rng = Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut load = vec![vec![0.0; classes + 1]; k];
    let mut ordered: Vec<(Vec<u8>, Vec<&str>)> = groups.into_iter().collect();
    ordered.sort_by_key(|(_, members)| members.len());
    for (_, mut members) in ordered {
        members.shuffle(&mut rng);
        for patient in members {
            let add = counts(patient);
            let start = rng.random_range(0..k);
            let cost = |f: usize| -> f64 {
                (0..=classes)
                    .filter(|&j| target[j] > 0.0)
                    .map(|j| add[j] * (2.0 * (load[f][j] - target[j]) + add[j]) / target[j])
                    .sum()
            };
            let best = (0..k)
                .map(|o| (start + o) % k)
                .min_by(|&a, &b| cost(a).total_cmp(&cost(b)))
                .expect("k >= 2");
            for (l, a) in load[best].iter_mut().zip(&add) {
                *l += a;
            }
            folds[best].push(patient.to_string());
        }
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(folds)
}

/// Patient ids for training, validation and test.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Test set is fold `fold` of a `k`-fold split; validation is one fold of a
/// 5-fold split of the remainder. With `k = 4` this yields 60 : 15 : 25.
pub fn train_val_test_split(slides: &[(String, Vec<u8>)], k: usize, fold: usize, seed: u64) -> Result<Split> {
    let outer = stratified_kfold(slides, k, seed)?;
    if fold >= k {
        return Err(Error::Config(format!("fold {fold} out of range for {k} folds")));
    }
    let test = outer[fold].clone();
    let rest: Vec<(String, Vec<u8>)> = slides.iter().filter(|(p, _)| !test.contains(p)).cloned().collect();
    let inner = stratified_kfold(&rest, 5, seed.wrapping_add(fold as u64 + 1))?;
    let val = inner[0].clone();
    let train = inner[1..].concat();
    let mut train = train;
    train.sort();
    Ok(Split { train, val, test })
}

/// `(patient_id, slide_label)` per bag, the input to the split functions.
pub fn patient_keys(bags: &[Bag]) -> Vec<(String, Vec<u8>)> {
    bags.iter()
        .map(|b| (b.patient_id.clone(), b.slide_label.clone()))
        .collect()
}

impl Split {
    /// Bags for training, validation and test, each in input order.
    pub fn partition(&self, bags: &[Bag]) -> (Vec<Bag>, Vec<Bag>, Vec<Bag>) {
        let pick = |ids: &[String]| -> Vec<Bag> {
            bags.iter()
                .filter(|b| ids.binary_search(&b.patient_id).is_ok())
                .cloned()
                .collect()
        };
        (pick(&self.train), pick(&self.val), pick(&self.test))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_slide_each(labels: &[Vec<u8>]) -> Vec<(String, Vec<u8>)> {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("p{i:03}"), l.clone()))
            .collect()
    }

    #[test]
    fn forced_balance() {
        let mut labels = vec![vec![0, 0, 1, 0]; 4];
        labels.extend(vec![vec![1, 0, 0, 0]; 4]);
        let slides = one_slide_each(&labels);
        let folds = stratified_kfold(&slides, 4, 9).unwrap();
        for f in &folds {
            let gg4 = f
                .iter()
                .filter(|p| slides.iter().any(|(q, l)| q == *p && l[2] == 1))
                .count();
            assert_eq!((f.len(), gg4), (2, 1));
        }
    }

    #[test]
    fn patients_stay_together() {
        let mut slides = one_slide_each(&vec![vec![1, 0, 0, 0]; 10]);
        for l in [vec![0, 1, 0, 0], vec![0, 0, 1, 1], vec![1, 0, 0, 0]] {
            slides.push(("p003".into(), l));
        }
        let folds = stratified_kfold(&slides, 4, 0).unwrap();
        let all: Vec<&String> = folds.iter().flatten().collect();
        assert_eq!(all.len(), 10);
        assert_eq!(folds.iter().filter(|f| f.contains(&"p003".to_string())).count(), 1);
    }

    #[test]
    fn too_few_patients() {
        let slides = one_slide_each(&vec![vec![1, 0]; 3]);
        assert!(matches!(stratified_kfold(&slides, 4, 0), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let labels: Vec<Vec<u8>> = (0..40).map(|i| vec![(i % 2) as u8, 1 - (i % 2) as u8]).collect();
        let slides = one_slide_each(&labels);
        assert_eq!(
            stratified_kfold(&slides, 4, 3).unwrap(),
            stratified_kfold(&slides, 4, 3).unwrap()
        );
        assert_ne!(
            stratified_kfold(&slides, 4, 3).unwrap(),
            stratified_kfold(&slides, 4, 4).unwrap()
        );
    }

    #[test]
    fn sixty_fifteen_twenty_five() {
        let labels: Vec<Vec<u8>> = (0..100).map(|i| vec![(i % 3 == 0) as u8, (i % 3 != 0) as u8]).collect();
        let slides = one_slide_each(&labels);
        let s = train_val_test_split(&slides, 4, 2, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (60, 15, 25));
        let mut all: Vec<_> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn partition_keeps_patient_slides_together() {
        use crate::numerics::Tensor;
        let bags: Vec<Bag> = (0..40)
            .map(|i| {
                let label = vec![(i % 2) as u8, 1 - (i % 2) as u8];
                Bag::new(
                    format!("s{i}"),
                    format!("p{:02}", i / 2),
                    Tensor::ones(&[1, 2]),
                    vec![(0.0, 0.0)],
                    None,
                    label,
                    vec![0],
                )
                .unwrap()
            })
            .collect();
        let split = train_val_test_split(&patient_keys(&bags), 4, 1, 3).unwrap();
        let (tr, va, te) = split.partition(&bags);
        assert_eq!(tr.len() + va.len() + te.len(), 40);
        for (part, ids) in [(&tr, &split.train), (&va, &split.val), (&te, &split.test)] {
            assert_eq!(part.len(), 2 * ids.len());
            assert!(part.iter().all(|b| ids.contains(&b.patient_id)));
        }
    }

    /// 155 slides over 95 patients with class counts 36 / 40 / 64 / 15.
    fn sicap_like() -> Vec<(String, Vec<u8>)> {
        let mut rng = Rng::seed_from_u64(17);
        let mut labels: Vec<Vec<u8>> = Vec::new();
        for (c, count) in [36, 40, 64, 15].into_iter().enumerate() {
            for _ in 0..count {
                let mut l = vec![0u8; 4];
                l[c] = 1;
                labels.push(l);
            }
        }
        labels.shuffle(&mut rng);
        labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let patient = if i < 120 { i / 2 } else { i - 60 };
                (format!("p{patient:03}"), l)
            })
            .collect()
    }

    #[test]
    fn sicap_like_fold_proportions() {
        let slides = sicap_like();
        let total = slides.len() as f64;
        for seed in 0..20 {
            let folds = stratified_kfold(&slides, 4, seed).unwrap();
            for c in 0..4 {
                let positives = slides.iter().filter(|s| s.1[c] == 1).count() as f64;
                let global = positives / total;
                // patients are indivisible, so the even share is only reachable
                // up to the largest block of class-c slides one patient holds
                let granule = slides
                    .iter()
                    .map(|(p, _)| slides.iter().filter(|(q, l)| q == p && l[c] == 1).count())
                    .max()
                    .unwrap()
                    .max(1) as f64;
                for f in &folds {
                    let in_fold: Vec<_> = slides.iter().filter(|s| f.contains(&s.0)).collect();
                    let count = in_fold.iter().filter(|s| s.1[c] == 1).count() as f64;
                    assert!(
                        (count - positives / 4.0).abs() <= granule,
                        "seed {seed} class {c}: {count}"
                    );
                    // one slide moves the share by under 10% only above ten per fold
                    if positives / 4.0 > 10.0 {
                        let share = count / in_fold.len() as f64;
                        assert!(
                            (share - global).abs() / global <= 0.10,
                            "seed {seed} class {c}: {share}"
                        );
                    }
                }
            }
        }
    }
}
