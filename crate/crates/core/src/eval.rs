//! Ranking metrics for DSAT scores: AUC, ROC and PR curves, precision-targeted
//! operating points, per-slice AUC and the CTR-bucket rating table.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::quantile_sorted;

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::InvalidValue(format!("score {bad}")));
    }
    let pos = labels.iter().filter(|l| **l).count();
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by descending score; ties keep input order.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
    order
}

/// Mann-Whitney AUC with midranks: P(pos > neg) + P(pos == neg) / 2.
/// `labels[i]` is true for the positive (DSAT) class.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Ranks start..end (1-based start+1..=end) share their mean.
        let midrank = (start + 1 + end) as f64 / 2.0;
        let pos_in_run = order[start..end].iter().filter(|i| labels[**i]).count();
        rank_sum += midrank * pos_in_run as f64;
        start = end;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores at or above this value are flagged; `None` for the origin.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub threshold: f64,
}

/// Cumulative (true positives, false positives, threshold) at each distinct
/// score, highest first.
fn confusion_steps(scores: &[f64], labels: &[bool]) -> Vec<(usize, usize, f64)> {
    let order = descending(scores);
    let mut steps = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (k, i) in order.iter().enumerate() {
        if labels[*i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_run = order.get(k + 1).is_none_or(|j| scores[*j] != scores[*i]);
        if last_of_run {
            steps.push((tp, fp, scores[*i]));
        }
    }
    steps
}

pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: None,
    }];
    points.extend(confusion_steps(scores, labels).into_iter().map(|(tp, fp, t)| RocPoint {
        fpr: fp as f64 / n_neg as f64,
        tpr: tp as f64 / n_pos as f64,
        threshold: Some(t),
    }));
    Ok(points)
}

/// Trapezoidal area under a ROC point list.
pub fn roc_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<PrPoint>> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    Ok(confusion_steps(scores, labels)
        .into_iter()
        .map(|(tp, fp, t)| PrPoint {
            recall: tp as f64 / n_pos as f64,
            precision: tp as f64 / (tp + fp) as f64,
            threshold: t,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Highest-recall threshold (flag when `score >= threshold`) whose precision
/// meets `target_precision`. Among equal recalls the higher threshold wins.
pub fn operating_point(scores: &[f64], labels: &[bool], target_precision: f64) -> Result<OperatingPoint> {
    if !(target_precision > 0.0 && target_precision <= 1.0) {
        return Err(Error::Config(format!(
            "target precision {target_precision} outside (0, 1]"
        )));
    }
    let (n_pos, _) = check_inputs(scores, labels)?;
    let mut best: Option<OperatingPoint> = None;
    let mut max_precision: f64 = 0.0;
    if n_pos > 0 {
        for (tp, fp, threshold) in confusion_steps(scores, labels) {
            let precision = tp as f64 / (tp + fp) as f64;
            max_precision = max_precision.max(precision);
            let recall = tp as f64 / n_pos as f64;
            if precision >= target_precision && best.is_none_or(|b| recall > b.recall) {
                best = Some(OperatingPoint {
                    threshold,
                    precision,
                    recall,
                });
            }
        }
    }
    best.ok_or(Error::PrecisionUnattainable {
        target: target_precision,
        max_precision,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceAuc {
    /// `None` when the slice lacks one of the classes.
    pub auc: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

pub fn slice_auc<K: Ord + Clone>(scores: &[f64], labels: &[bool], keys: &[K]) -> Result<BTreeMap<K, SliceAuc>> {
    check_inputs(scores, labels)?;
    if keys.len() != scores.len() {
        return Err(Error::Shape {
            expected: scores.len(),
            got: keys.len(),
        });
    }
    let mut groups: BTreeMap<K, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for ((s, l), k) in scores.iter().zip(labels).zip(keys) {
        let slot = groups.entry(k.clone()).or_default();
        slot.0.push(*s);
        slot.1.push(*l);
    }
    groups
        .into_iter()
        .map(|(k, (s, l))| {
            let n_pos = l.iter().filter(|v| **v).count();
            let result = match auc(&s, &l) {
                Ok(a) => Some(a),
                Err(Error::UndefinedAuc) => None,
                Err(e) => return Err(e),
            };
            Ok((
                k,
                SliceAuc {
                    auc: result,
                    n_pos,
                    n_neg: l.len() - n_pos,
                },
            ))
        })
        .collect()
}

/// Rating distribution per CTR quintile bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtrBucketTable {
    /// 20th, 40th, 60th and 80th percentile of the CTR values.
    pub cuts: [f64; 4],
    pub counts: [usize; 5],
    /// `fractions[b][r - 1]`: share of bucket `b` rated `r`. Empty buckets are
    /// all zero.
    pub fractions: [[f64; 5]; 5],
}

impl CtrBucketTable {
    pub fn bucket_of(&self, ctr: f64) -> usize {
        self.cuts.partition_point(|c| *c < ctr)
    }

    /// Share of each bucket rated at most `rating`.
    pub fn fraction_at_most(&self, rating: u8) -> [f64; 5] {
        self.fractions.map(|row| row.iter().take(usize::from(rating)).sum())
    }
}

pub fn ctr_bucket_analysis(ctrs: &[f64], ratings: &[u8]) -> Result<CtrBucketTable> {
    if ctrs.len() != ratings.len() {
        return Err(Error::Shape {
            expected: ctrs.len(),
            got: ratings.len(),
        });
    }
    if ctrs.len() < 5 {
        return Err(Error::InvalidValue(format!(
            "{} labeled queries; need at least 5",
            ctrs.len()
        )));
    }
    if let Some(r) = ratings.iter().find(|r| !(1..=5).contains(*r)) {
        return Err(Error::InvalidRating(i64::from(*r)));
    }
    if let Some(bad) = ctrs.iter().find(|c| !c.is_finite()) {
        return Err(Error::InvalidValue(format!("ctr {bad}")));
    }
    let mut sorted = ctrs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts = [0.2, 0.4, 0.6, 0.8].map(|p| quantile_sorted(&sorted, p));
    let mut table = CtrBucketTable {
        cuts,
        counts: [0; 5],
        fractions: [[0.0; 5]; 5],
    };
    let mut tallies = [[0usize; 5]; 5];
    for (ctr, rating) in ctrs.iter().zip(ratings) {
        let b = table.bucket_of(*ctr);
        tallies[b][usize::from(*rating) - 1] += 1;
        table.counts[b] += 1;
    }
    for ((row, tally), count) in table.fractions.iter_mut().zip(tallies).zip(table.counts) {
        if count > 0 {
            *row = tally.map(|t| t as f64 / count as f64);
        }
    }
    Ok(table)
}

pub fn write_roc_csv<W: Write>(writer: W, points: &[RocPoint]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["fpr", "tpr", "threshold"])?;
    for p in points {
        csv.write_record([
            p.fpr.to_string(),
            p.tpr.to_string(),
            p.threshold.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_pr_csv<W: Write>(writer: W, points: &[PrPoint]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["recall", "precision", "threshold"])?;
    for p in points {
        csv.write_record([p.recall.to_string(), p.precision.to_string(), p.threshold.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_ctr_csv<W: Write>(writer: W, table: &CtrBucketTable) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record([
        "bucket",
        "upper_cut",
        "count",
        "rating_1",
        "rating_2",
        "rating_3",
        "rating_4",
        "rating_5",
    ])?;
    for b in 0..5 {
        let mut row = vec![
            (b + 1).to_string(),
            table.cuts.get(b).map(|c| c.to_string()).unwrap_or_default(),
            table.counts[b].to_string(),
        ];
        row.extend(table.fractions[b].iter().map(|f| f.to_string()));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (sp, _) in scores.iter().zip(labels).filter(|(_, l)| **l) {
            for (sn, _) in scores.iter().zip(labels).filter(|(_, l)| !**l) {
                pairs += 1.0;
                if sp > sn {
                    wins += 1.0;
                } else if sp == sn {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_examples() {
        let labels = [true, true, false, false];
        assert_eq!(auc(&[0.9, 0.8, 0.7, 0.1], &labels).unwrap(), 1.0);
        assert_eq!(auc(&[0.8, 0.4, 0.6, 0.2], &labels).unwrap(), 0.75);
        assert_eq!(auc(&[0.3; 4], &labels).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedAuc)));
        assert!(matches!(auc(&[0.1], &[true, false]), Err(Error::Shape { .. })));
    }

    #[test]
    fn roc_examples() {
        let labels = [true, true, false, false];
        let roc = roc_curve(&[0.9, 0.8, 0.7, 0.1], &labels).unwrap();
        assert!(roc.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!((roc[0].fpr, roc[0].tpr), (0.0, 0.0));
        let last = roc.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));

        let flat = roc_curve(&[0.5; 4], &labels).unwrap();
        assert_eq!(flat.len(), 2);
        assert_eq!(roc_area(&flat), 0.5);
    }

    #[test]
    fn pr_points_follow_thresholds() {
        let pr = pr_curve(&[0.9, 0.8, 0.7, 0.1], &[true, false, true, false]).unwrap();
        let got: Vec<(f64, f64)> = pr.iter().map(|p| (p.recall, p.precision)).collect();
        assert_eq!(got, vec![(0.5, 1.0), (0.5, 0.5), (1.0, 2.0 / 3.0), (1.0, 0.5)]);
    }

    #[test]
    fn operating_point_examples() {
        let labels = [true, true, false, false];
        let op = operating_point(&[0.9, 0.8, 0.7, 0.1], &labels, 0.85).unwrap();
        assert_eq!((op.recall, op.precision, op.threshold), (1.0, 1.0, 0.8));

        let mut base = vec![false; 100];
        base[..37].iter_mut().for_each(|l| *l = true);
        match operating_point(&[0.4; 100], &base, 0.85) {
            Err(Error::PrecisionUnattainable { max_precision, .. }) => assert!((max_precision - 0.37).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert!(operating_point(&[0.4; 4], &labels, 0.0).is_err());
    }

    #[test]
    fn slices() {
        let scores = [0.9, 0.1, 0.8, 0.7];
        let labels = [true, false, true, true];
        let one = slice_auc(&scores, &labels, &["x"; 4]).unwrap();
        assert_eq!(one["x"].auc, Some(auc(&scores, &labels).unwrap()));
        let split = slice_auc(&scores, &labels, &["a", "a", "b", "b"]).unwrap();
        assert_eq!(split["a"].auc, Some(1.0));
        assert_eq!(
            split["b"],
            SliceAuc {
                auc: None,
                n_pos: 2,
                n_neg: 0
            }
        );
    }

    #[test]
    fn ctr_buckets() {
        let ctrs: Vec<f64> = (0..50).map(|i| f64::from(i) / 50.0).collect();
        let table = ctr_bucket_analysis(&ctrs, &[3; 50]).unwrap();
        for (b, row) in table.fractions.iter().enumerate() {
            assert_eq!(*row, [0.0, 0.0, 1.0, 0.0, 0.0], "bucket {b}");
        }
        assert_eq!(table.counts, [10; 5]);

        let ratings: Vec<u8> = (0..50).map(|i| (i % 5 + 1) as u8).collect();
        let table = ctr_bucket_analysis(&ctrs, &ratings).unwrap();
        for row in table.fractions {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(ctr_bucket_analysis(&ctrs[..4], &ratings[..4]).is_err());
        assert!(matches!(
            ctr_bucket_analysis(&ctrs[..5], &[1, 2, 3, 4, 6]),
            Err(Error::InvalidRating(6))
        ));
    }

    fn scored_set() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..120)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec(prop_oneof![(0u8..8).prop_map(f64::from), -5.0f64..5.0], n),
                    prop::collection::vec(any::<bool>(), n),
                )
            })
            .prop_filter("both classes", |(_, l)| l.iter().any(|v| *v) && l.iter().any(|v| !*v))
    }

    proptest! {
        #[test]
        fn rank_auc_matches_pairs((scores, labels) in scored_set()) {
            let a = auc(&scores, &labels).unwrap();
            prop_assert!((a - pairwise_auc(&scores, &labels)).abs() < 1e-12);
            let roc = roc_curve(&scores, &labels).unwrap();
            prop_assert!((roc_area(&roc) - a).abs() < 1e-9);
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            prop_assert!((a + auc(&scores, &flipped).unwrap() - 1.0).abs() < 1e-12);
            let squashed: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp()).collect();
            prop_assert!((auc(&squashed, &labels).unwrap() - a).abs() < 1e-12);
        }

        #[test]
        fn operating_point_meets_target((scores, labels) in scored_set(), target in 0.05f64..=1.0) {
            match operating_point(&scores, &labels, target) {
                Ok(op) => {
                    let flagged: Vec<bool> = labels.iter().zip(&scores).filter(|(_, s)| **s >= op.threshold).map(|(l, _)| *l).collect();
                    let precision = flagged.iter().filter(|l| **l).count() as f64 / flagged.len() as f64;
                    prop_assert!(precision >= target);
                    prop_assert_eq!(precision, op.precision);
                }
                Err(Error::PrecisionUnattainable { max_precision, .. }) => {
                    prop_assert!(max_precision < target);
                    let best = pr_curve(&scores, &labels).unwrap().iter().map(|p| p.precision).fold(0.0, f64::max);
                    prop_assert_eq!(best, max_precision);
                }
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
