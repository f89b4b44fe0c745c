use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One-vs-rest ROC AUC from the Mann-Whitney rank statistic, ties given
/// their midrank. `None` when only one label value is present.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let midrank = (i + j + 2) as f64 / 2.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    /// `None` marks a class whose labels are all equal.
    pub per_class: Vec<Option<f64>>,
    pub macro_auc: f64,
}

impl AucSummary {
    pub fn undefined_classes(&self) -> Vec<usize> {
        (0..self.per_class.len())
            .filter(|&c| self.per_class[c].is_none())
            .collect()
    }
}

/// Mean of the defined per-class AUCs. `scores[s][c]` and `labels[s][c]`
/// are indexed by slide then class.
pub fn macro_auc(scores: &[Vec<f64>], labels: &[Vec<u8>]) -> Result<AucSummary> {
    if scores.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} score rows, {} label rows",
            scores.len(),
            labels.len()
        )));
    }
    if scores.len() < 2 {
        return Err(Error::UndefinedMetric("macro AUC needs at least two slides".into()));
    }
    let classes = labels[0].len();
    if scores.iter().any(|r| r.len() != classes) || labels.iter().any(|r| r.len() != classes) {
        return Err(Error::Argument("ragged score or label rows".into()));
    }
    let per_class: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let l: Vec<bool> = labels.iter().map(|r| r[c] != 0).collect();
            roc_auc(&s, &l)
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::UndefinedMetric("every class has a single label value".into()));
    }
    Ok(AucSummary {
        macro_auc: defined.iter().sum::<f64>() / defined.len() as f64,
        per_class,
    })
}

#[cfg(test)]
fn brute_force_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let (mut num, mut pairs) = (0.0, 0usize);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1;
                num += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    (pairs > 0).then(|| num / pairs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_examples() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Some(1.0));
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]), Some(0.75));
        assert_eq!(roc_auc(&[0.3; 5], &[true, false, true, false, false]), Some(0.5));
        assert_eq!(roc_auc(&[0.1, 0.2], &[true, true]), None);
    }

    #[test]
    fn degenerate_classes_are_flagged() {
        let scores = vec![vec![0.2, 0.9], vec![0.7, 0.1], vec![0.4, 0.5]];
        let labels = vec![vec![0, 1], vec![1, 1], vec![0, 1]];
        let s = macro_auc(&scores, &labels).unwrap();
        assert_eq!(s.per_class, vec![Some(1.0), None]);
        assert_eq!(s.macro_auc, 1.0);
        assert_eq!(s.undefined_classes(), vec![1]);

        let all_pos = vec![vec![1, 1], vec![1, 1], vec![1, 1]];
        assert!(matches!(macro_auc(&scores, &all_pos), Err(Error::UndefinedMetric(_))));
        assert!(matches!(
            macro_auc(&scores[..1], &labels[..1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    proptest! {
        #[test]
        fn rank_statistic_equals_pair_counting(
            rows in proptest::collection::vec((0u8..6, any::<bool>()), 2..20)
        ) {
            // coarse scores force plenty of ties
            let scores: Vec<f64> = rows.iter().map(|r| r.0 as f64 / 5.0).collect();
            let labels: Vec<bool> = rows.iter().map(|r| r.1).collect();
            let fast = roc_auc(&scores, &labels);
            let slow = brute_force_auc(&scores, &labels);
            prop_assert_eq!(fast.is_some(), slow.is_some());
            if let (Some(a), Some(b)) = (fast, slow) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
