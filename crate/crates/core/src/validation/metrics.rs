use serde::{Deserialize, Serialize};

use super::campaign::{CampaignResult, OutcomeCounts};
use crate::error::{Error, Result};
use crate::vigor::{Category, VulnerabilityFactors};

/// Truth metrics of one campaign. Percentages are `None` when their
/// denominator is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub layer: usize,
    pub faults: u64,
    /// Masked share of non-critical faults.
    pub true_non_critical_pct: Option<f64>,
    /// Misclassified share of critical faults.
    pub true_critical_pct: Option<f64>,
    pub non_critical_fraction: f64,
    pub critical_fraction: f64,
    pub semi_fraction: f64,
    pub non_critical: OutcomeCounts,
    pub critical: OutcomeCounts,
    pub semi: OutcomeCounts,
    /// Truth metrics with semi faults folded into the non-critical side.
    pub true_non_critical_pct_semi_as_non_critical: Option<f64>,
    /// Truth metrics with semi faults folded into the critical side.
    pub true_critical_pct_semi_as_critical: Option<f64>,
    pub accuracy_golden: f64,
    pub accuracy_faulty: f64,
    pub accuracy_loss_pct: f64,
}

fn share(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

pub fn validate(campaign: &CampaignResult) -> ValidationMetrics {
    let nc = campaign.counts(Category::NonCritical);
    let cr = campaign.counts(Category::Critical);
    let semi = campaign.counts(Category::SemiCritical);
    let total = campaign.faults.len() as u64;
    let frac = |c: &OutcomeCounts| {
        if total > 0 {
            100.0 * c.total() as f64 / total as f64
        } else {
            0.0
        }
    };
    let (accuracy_golden, accuracy_faulty) = if total > 0 { campaign.accuracies() } else { (0.0, 0.0) };
    ValidationMetrics {
        layer: campaign.layer,
        faults: total,
        true_non_critical_pct: share(nc.masked, nc.total()),
        true_critical_pct: share(cr.misclassified, cr.total()),
        non_critical_fraction: frac(&nc),
        critical_fraction: frac(&cr),
        semi_fraction: frac(&semi),
        non_critical: nc,
        critical: cr,
        semi,
        true_non_critical_pct_semi_as_non_critical: share(nc.masked + semi.masked, nc.total() + semi.total()),
        true_critical_pct_semi_as_critical: share(cr.misclassified + semi.misclassified, cr.total() + semi.total()),
        accuracy_golden: 100.0 * accuracy_golden,
        accuracy_faulty: 100.0 * accuracy_faulty,
        accuracy_loss_pct: 100.0 * (accuracy_golden - accuracy_faulty),
    }
}

/// Average ranks, 1-based; ties share the mean of their positions.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// `None` when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "spearman over vectors of different length");
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Spearman correlation between each layer's LVF and the accuracy loss of
/// its campaign. Campaigns are matched to factor layers by layer index.
pub fn lvf_accuracy_correlation(factors: &VulnerabilityFactors, campaigns: &[CampaignResult]) -> Result<Option<f64>> {
    if factors.layers.len() < 3 {
        return Err(Error::Config(format!(
            "correlation needs at least 3 layers, got {}",
            factors.layers.len()
        )));
    }
    let mut lvf = Vec::new();
    let mut loss = Vec::new();
    for l in &factors.layers {
        let c = campaigns
            .iter()
            .find(|c| c.layer == l.layer)
            .ok_or_else(|| Error::Config(format!("no campaign for layer {}", l.layer)))?;
        lvf.push(factors.lvf(l));
        loss.push(c.accuracy_loss_pct());
    }
    Ok(spearman(&lvf, &loss))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_extremes() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&a, &[0.1, 0.5, 0.9, 10.0]), Some(1.0));
        assert_eq!(spearman(&a, &[4.0, 3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&a, &[1.0; 4]), None);
    }

    #[test]
    fn spearman_with_ties_matches_reference() {
        // scipy.stats.spearmanr([1, 2, 2, 3], [1, 3, 2, 4]).statistic
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.9486832980505138).abs() < 1e-12, "{r}");
    }
}
