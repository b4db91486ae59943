//! Training objectives: pointwise logloss, logit distillation (mean squared
//! error between teacher and student logits) and pairwise RankNet over
//! chunk labels.

use crate::error::{Error, Result};
use crate::world::sigmoid;

pub const PROB_CLAMP: f64 = 1e-12;

/// Binary cross-entropy with the probability clamped to `[1e-12, 1 - 1e-12]`.
pub fn logloss(prob: f64, label: f64) -> f64 {
    let p = prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// Logloss of `sigmoid(logit)` and its derivative with respect to the logit.
pub fn logloss_logit(logit: f64, label: f64) -> (f64, f64) {
    let p = sigmoid(logit);
    (logloss(p, label), p - label)
}

/// `(1/N) * sum (teacher - student)^2` and its gradient with respect to the
/// student logits. Teacher logits are constants.
pub fn distill_loss(teacher: &[f64], student: &[f64]) -> Result<(f64, Vec<f64>)> {
    if teacher.len() != student.len() {
        return Err(Error::data(format!(
            "distill: {} teacher logits vs {} student logits",
            teacher.len(),
            student.len()
        )));
    }
    if teacher.is_empty() {
        return Err(Error::data("distill: empty logit vectors"));
    }
    let n = teacher.len() as f64;
    let mut loss = 0.0;
    let grad = teacher
        .iter()
        .zip(student)
        .map(|(t, s)| {
            let diff = t - s;
            loss += diff * diff;
            -2.0 * diff / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Pairwise RankNet loss summed over ordered pairs with `y_i > y_j`:
/// `sum log(1 + exp(-(s_i - s_j)))`, with its gradient over `scores`.
pub fn ranknet_loss(scores: &[f64], labels: &[u32]) -> Result<(f64, Vec<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::data(format!(
            "ranknet: {} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; scores.len()];
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] > labels[j] {
                let diff = scores[i] - scores[j];
                loss += softplus(-diff);
                let g = sigmoid(-diff);
                grad[i] -= g;
                grad[j] += g;
            }
        }
    }
    Ok((loss, grad))
}

/// How a teacher-ordered list is cut into chunks for RankNet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkScheme {
    /// Two chunks: the first `boundary` positions (the exposed win set) are
    /// positives, the rest negatives.
    Boundary(usize),
    /// `chunks` contiguous near-equal chunks.
    Even(usize),
}

impl ChunkScheme {
    /// Two chunks split at the win-set size, otherwise an even split.
    pub fn for_chunks(chunks: usize, win_size: usize) -> Self {
        if chunks == 2 {
            ChunkScheme::Boundary(win_size)
        } else {
            ChunkScheme::Even(chunks)
        }
    }

    pub fn labels(self, len: usize) -> Result<Vec<u32>> {
        match self {
            ChunkScheme::Boundary(boundary) => assign_boundary(len, boundary),
            ChunkScheme::Even(chunks) => assign_chunks(len, chunks),
        }
    }
}

/// Labels for `len` items in teacher rank order, split into `chunks`
/// contiguous chunks. The best chunk gets label `chunks`, the worst `1`.
/// On uneven splits the extra items go to the bottom chunks.
pub fn assign_chunks(len: usize, chunks: usize) -> Result<Vec<u32>> {
    if chunks == 0 {
        return Err(Error::config("train.chunks", "must be at least 1"));
    }
    if chunks > len {
        return Err(Error::data(format!("{chunks} chunks for a list of {len} items")));
    }
    let base = len / chunks;
    let extra = len % chunks;
    let mut labels = Vec::with_capacity(len);
    for c in 0..chunks {
        // chunks counted from the top; the last `extra` are one larger
        let size = base + usize::from(c >= chunks - extra);
        labels.extend(std::iter::repeat_n((chunks - c) as u32, size));
    }
    Ok(labels)
}

/// `2` for the first `boundary` positions, `1` after.
pub fn assign_boundary(len: usize, boundary: usize) -> Result<Vec<u32>> {
    if boundary == 0 || boundary >= len {
        return Err(Error::data(format!(
            "chunk boundary {boundary} leaves an empty chunk in a list of {len}"
        )));
    }
    Ok((0..len).map(|i| if i < boundary { 2 } else { 1 }).collect())
}

/// Target the LTR model's ordering is fitted to: `rank_prob * opt_bid / init_bid`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LtrTarget(pub f64);

pub fn ltr_target(rank_prob: f64, opt_bid: f64, init_bid: f64) -> Result<LtrTarget> {
    if !(opt_bid > 0.0 && init_bid > 0.0) {
        return Err(Error::data(format!(
            "bids must be positive (opt {opt_bid}, init {init_bid})"
        )));
    }
    let t = rank_prob * opt_bid / init_bid;
    if !t.is_finite() {
        return Err(Error::data("non-finite LTR target"));
    }
    Ok(LtrTarget(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logloss_values() {
        assert!((logloss(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(logloss(1.0 - 1e-15, 1.0) < 1e-11);
        assert!((logloss(0.9, 0.0) - std::f64::consts::LN_10).abs() < 1e-9);
        assert!(logloss(0.0, 1.0).is_finite());
        assert!(logloss(1.0, 0.0).is_finite());
    }

    #[test]
    fn distill_values() {
        let (l, _) = distill_loss(&[0.3, -1.2], &[0.3, -1.2]).unwrap();
        assert_eq!(l, 0.0);
        let (l, g) = distill_loss(&[1.0, -1.0], &[0.0, 0.0]).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        assert_eq!(g, vec![-1.0, 1.0]);
        assert!(distill_loss(&[], &[]).is_err());
        assert!(distill_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ranknet_values() {
        let (l, g) = ranknet_loss(&[0.2, 0.7, -1.0], &[1, 1, 1]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        let (l, _) = ranknet_loss(&[0.0, 0.0], &[2, 1]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let (l, g) = ranknet_loss(&[1.0, 0.0], &[2, 1]).unwrap();
        assert!((l - 0.313_261_687_518_222_8).abs() < 1e-12);
        assert!((g[0] + g[1]).abs() < 1e-15);
        assert!(g[0] < 0.0);
        assert!(ranknet_loss(&[1.0], &[1, 2]).is_err());
        assert!(softplus(800.0).is_finite() && softplus(-800.0) >= 0.0);
    }

    #[test]
    fn ranknet_is_translation_invariant() {
        let s = [0.4, -0.3, 1.7, 0.0];
        let y = [3, 1, 2, 1];
        let shifted: Vec<f64> = s.iter().map(|v| v + 2.5).collect();
        let a = ranknet_loss(&s, &y).unwrap().0;
        let b = ranknet_loss(&shifted, &y).unwrap().0;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn chunk_assignment() {
        assert_eq!(assign_chunks(4, 2).unwrap(), vec![2, 2, 1, 1]);
        assert_eq!(assign_chunks(5, 5).unwrap(), vec![5, 4, 3, 2, 1]);
        assert_eq!(assign_chunks(5, 2).unwrap(), vec![2, 2, 1, 1, 1]);
        assert_eq!(assign_chunks(7, 3).unwrap(), vec![3, 3, 2, 2, 1, 1, 1]);
        assert!(assign_chunks(2, 3).is_err());
        assert_eq!(assign_boundary(5, 1).unwrap(), vec![2, 1, 1, 1, 1]);
        assert!(assign_boundary(3, 3).is_err());
        assert_eq!(ChunkScheme::for_chunks(2, 3), ChunkScheme::Boundary(3));
        assert_eq!(ChunkScheme::for_chunks(4, 3), ChunkScheme::Even(4));
    }

    #[test]
    fn chunk_pairs_match_enumeration() {
        // ordered pairs (i, j) with y_i > y_j, counted by brute force
        for len in 1..=9 {
            for chunks in 1..=len {
                let y = assign_chunks(len, chunks).unwrap();
                let mut pairs = 0;
                for i in 0..len {
                    for j in 0..len {
                        if y[i] > y[j] {
                            pairs += 1;
                        }
                    }
                }
                let mut sizes = vec![0usize; chunks + 1];
                for &v in &y {
                    sizes[v as usize] += 1;
                }
                let total: usize = sizes.iter().sum();
                let same: usize = sizes.iter().map(|s| s * s).sum();
                assert_eq!(pairs, (total * total - same) / 2);
                // contiguity: labels never increase down the list
                assert!(y.windows(2).all(|w| w[0] >= w[1]));
                assert!(sizes[1..].iter().all(|&s| s == len / chunks || s == len / chunks + 1));
            }
        }
        let y = assign_chunks(5, 2).unwrap();
        let pairs = (0..5)
            .flat_map(|i| (0..5).map(move |j| (i, j)))
            .filter(|&(i, j)| y[i] > y[j])
            .count();
        assert_eq!(pairs, 6);
    }

    #[test]
    fn ltr_target_values() {
        assert_eq!(ltr_target(0.3, 4.0, 4.0).unwrap().0, 0.3);
        assert!((ltr_target(0.2, 10.0, 4.0).unwrap().0 - 0.5).abs() < 1e-15);
        assert!(ltr_target(0.2, 0.0, 4.0).is_err());
        let probs = [0.1, 0.7, 0.3];
        let mut by_target: Vec<usize> = (0..3).collect();
        by_target.sort_by(|&a, &b| {
            let ta = ltr_target(probs[a], 2.0, 2.0).unwrap();
            let tb = ltr_target(probs[b], 2.0, 2.0).unwrap();
            tb.partial_cmp(&ta).unwrap()
        });
        assert_eq!(by_target, vec![1, 2, 0]);
    }
}
