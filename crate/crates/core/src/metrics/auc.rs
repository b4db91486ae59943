use crate::error::{Error, Result};

/// Probability that a random positive outscores a random negative, ties
/// counted as one half (rank-sum form with averaged tie ranks).
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::data("auc: length mismatch"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::data("auc: NaN score"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::data("auc needs at least one positive and one negative"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean
        let mean_rank = (i + j + 2) as f64 / 2.0;
        rank_sum += mean_rank * order[i..=j].iter().filter(|&&x| labels[x]).count() as f64;
        i = j + 1;
    }
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairwise(labels: &[bool], scores: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0.0;
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    total += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Equal => 0.5,
                        std::cmp::Ordering::Less => 0.0,
                    };
                }
            }
        }
        total / pairs
    }

    #[test]
    fn hand_cases() {
        assert_eq!(auc(&[true, false], &[0.9, 0.1]).unwrap(), 1.0);
        assert_eq!(auc(&[true, false, true, false], &[0.5; 4]).unwrap(), 0.5);
        let v = auc(&[true, false, true, false], &[0.8, 0.7, 0.6, 0.5]).unwrap();
        assert!((v - 0.75).abs() < 1e-12);
        assert!(auc(&[true, true], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn matches_pairwise_count_with_ties() {
        let labels = [true, false, true, false, false, true, false];
        let scores = [0.3, 0.3, 0.9, 0.1, 0.9, 0.5, 0.5];
        assert!((auc(&labels, &scores).unwrap() - pairwise(&labels, &scores)).abs() < 1e-12);
    }
}
