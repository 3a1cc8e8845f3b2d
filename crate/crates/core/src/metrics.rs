//! Ranking metrics for binary scores.

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};

fn validate(scores: &[f64], labels: &[f64]) -> Result<(usize, usize)> {
    check_dim("labels", scores.len(), labels.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    let mut pos = 0;
    for &y in labels {
        if y == 1.0 {
            pos += 1;
        } else if y != 0.0 {
            return Err(Error::InvalidArgument(alloc::format!("label {y} is not binary")));
        }
    }
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by score, descending, grouped into runs of equal score.
fn tie_groups(scores: &[f64]) -> Vec<core::ops::Range<usize>> {
    let mut groups = Vec::new();
    let order = sorted_desc(scores);
    let mut start = 0;
    for i in 1..=order.len() {
        if i == order.len() || scores[order[i]] != scores[order[start]] {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

fn sorted_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Area under the ROC curve: `P(s+ > s-) + P(s+ = s-) / 2`, from average ranks.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    let (pos, neg) = validate(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let order = sorted_desc(scores);
    let n = scores.len();
    // Ascending rank of the run [start, end) in descending order is n - start .. n - end + 1.
    let mut rank_sum_pos = 0.0;
    for g in tie_groups(scores) {
        let avg_rank = (2 * n - g.start - g.end + 1) as f64 / 2.0;
        let in_group = order[g].iter().filter(|&&i| labels[i] == 1.0).count();
        rank_sum_pos += avg_rank * in_group as f64;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Average precision: `sum_i (R_i - R_{i-1}) P_i` over descending thresholds,
/// tied scores forming a single threshold.
pub fn auprc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    let (pos, _) = validate(scores, labels)?;
    if pos == 0 {
        return Err(Error::NoPositives);
    }
    let order = sorted_desc(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    for g in tie_groups(scores) {
        let hits = order[g.clone()].iter().filter(|&&i| labels[i] == 1.0).count();
        tp += hits;
        fp += g.len() - hits;
        if hits > 0 {
            ap += (hits as f64 / pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(ap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[1.0, 1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!((auroc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(auroc(&[0.5; 4], &[0.0, 1.0, 0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.5, 0.1], &[1.0, 1.0]).unwrap_err(), Error::SingleClass);
    }

    #[test]
    fn auprc_examples() {
        assert_eq!(auprc(&[0.9, 0.8, 0.1], &[1.0, 1.0, 0.0]).unwrap(), 1.0);
        assert!((auprc(&[0.3; 20], &[1.0, 0.0, 0.0, 0.0, 0.0].repeat(4)).unwrap() - 0.2).abs() < 1e-15);
        let v = auprc(&[0.9, 0.8, 0.7, 0.6], &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((v - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(auprc(&[0.1, 0.2], &[0.0, 0.0]).unwrap_err(), Error::NoPositives);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(auroc(&[f64::NAN, 0.1], &[0.0, 1.0]).is_err());
        assert!(auprc(&[0.1, 0.2], &[2.0, 1.0]).is_err());
        assert!(auroc(&[0.1], &[0.0, 1.0]).is_err());
    }
}
