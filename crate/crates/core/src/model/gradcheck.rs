use super::predictor::Predictor;
use super::train::{dataset_gradient, dataset_loss, Dataset, FeatureTable, LossKind};
use crate::error::Result;

/// Largest relative disagreement between the analytic gradient and central
/// differences, `|g_fd - g_an| / max(1e-8, |g_fd| + |g_an|)`, over all
/// parameters.
pub fn finite_diff_check(
    p: &Predictor,
    kind: LossKind,
    table: &FeatureTable,
    data: &Dataset,
    eps: f64,
) -> Result<f64> {
    let (_, analytic) = dataset_gradient(p, table, data, kind)?;
    let mut probe = p.clone();
    let mut worst: f64 = 0.0;
    for (idx, &g_an) in analytic.iter().enumerate() {
        let orig = probe.params()[idx];
        probe.params_mut()[idx] = orig + eps;
        let up = dataset_loss(&probe, table, data, kind)?;
        probe.params_mut()[idx] = orig - eps;
        let down = dataset_loss(&probe, table, data, kind)?;
        probe.params_mut()[idx] = orig;
        let g_fd = (up - down) / (2.0 * eps);
        let rel = (g_fd - g_an).abs() / (g_fd.abs() + g_an.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
