use crate::error::{Error, Result};

/// Scores paired with ground truth; `true` marks the positive (abnormal)
/// class.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} scores for {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.is_empty() {
            return Err(Error::UndefinedMetric("empty scored set".into()));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::UndefinedMetric("NaN score".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| **l).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.len() - self.positives()
    }

    /// `(threshold, positives, negatives)` per distinct score, highest first.
    fn grouped(&self) -> Vec<(f64, usize, usize)> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut groups: Vec<(f64, usize, usize)> = Vec::new();
        for i in order {
            let s = self.scores[i];
            let (p, n) = if self.labels[i] { (1, 0) } else { (0, 1) };
            match groups.last_mut() {
                Some(g) if g.0 == s => {
                    g.1 += p;
                    g.2 += n;
                }
                _ => groups.push((s, p, n)),
            }
        }
        groups
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// ROC points from `(0, 0)` through each distinct threshold, where a
/// sample is flagged when its score is `>=` the threshold.
pub fn roc_curve(set: &ScoredSet) -> Result<Vec<RocPoint>> {
    let (pos, neg) = (set.positives(), set.negatives());
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("ROC needs both classes".into()));
    }
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (threshold, p, n) in set.grouped() {
        tp += p;
        fp += n;
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(points)
}

/// Trapezoidal area under the ROC curve. Tied scores form one step, which
/// gives ties half credit.
pub fn roc_auc(set: &ScoredSet) -> Result<f64> {
    let points = roc_curve(set)?;
    Ok(points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum())
}

pub fn pr_curve(set: &ScoredSet) -> Result<Vec<PrPoint>> {
    let pos = set.positives();
    if pos == 0 {
        return Err(Error::UndefinedMetric(
            "precision-recall needs at least one positive".into(),
        ));
    }
    let (mut tp, mut flagged) = (0usize, 0usize);
    Ok(set
        .grouped()
        .into_iter()
        .map(|(threshold, p, n)| {
            tp += p;
            flagged += p + n;
            PrPoint {
                threshold,
                recall: tp as f64 / pos as f64,
                precision: tp as f64 / flagged as f64,
            }
        })
        .collect())
}

/// Step-interpolated area under the precision-recall curve:
/// `sum_k (R_k - R_{k-1}) * P_k` over distinct thresholds.
pub fn pr_auc(set: &ScoredSet) -> Result<f64> {
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for p in pr_curve(set)? {
        area += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    Ok(area)
}

pub fn mse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Contract("mse of an empty list".into()));
    }
    let total: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(total / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(scores: &[f64], labels: &[bool]) -> ScoredSet {
        ScoredSet::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn perfect_separation() {
        let s = set(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]);
        assert_eq!(roc_auc(&s).unwrap(), 1.0);
        assert_eq!(pr_auc(&s).unwrap(), 1.0);
    }

    #[test]
    fn all_tied_is_half() {
        let s = set(&[0.5; 6], &[true, false, true, false, false, true]);
        assert_eq!(roc_auc(&s).unwrap(), 0.5);
    }

    #[test]
    fn single_positive_ranked_last() {
        let s = set(&[0.9, 0.8, 0.7, 0.1], &[false, false, false, true]);
        assert_eq!(pr_auc(&s).unwrap(), 0.25);
    }

    #[test]
    fn duplicated_set_has_same_pr_auc() {
        let scores = [0.3, 0.9, 0.1, 0.5, 0.5, 0.7];
        let labels = [true, false, false, true, false, true];
        let doubled = set(&[scores, scores].concat(), &[labels, labels].concat());
        assert_eq!(pr_auc(&set(&scores, &labels)).unwrap(), pr_auc(&doubled).unwrap());
    }

    #[test]
    fn undefined_cases() {
        let one_class = set(&[0.1, 0.2], &[false, false]);
        assert!(matches!(roc_auc(&one_class), Err(Error::UndefinedMetric(_))));
        assert!(matches!(pr_auc(&one_class), Err(Error::UndefinedMetric(_))));
        // Positives only: PR is defined, ROC is not.
        let positives = set(&[0.1, 0.2], &[true, true]);
        assert_eq!(pr_auc(&positives).unwrap(), 1.0);
        assert!(roc_auc(&positives).is_err());
    }

    #[test]
    fn mse_basics() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 2.5);
        assert!(matches!(mse(&[1.0], &[1.0, 2.0]), Err(Error::Contract(_))));
    }
}
