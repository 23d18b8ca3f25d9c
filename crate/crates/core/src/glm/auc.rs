use super::GlmError;

/// Area under the ROC curve via the rank-sum statistic with midranks for
/// tied scores: `(concordant + 0.5 * tied) / (n_pos * n_neg)`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, GlmError> {
    if scores.len() != labels.len() {
        return Err(GlmError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(GlmError::NonFiniteScore);
    }
    let n_pos = labels.iter().filter(|&&b| b).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(GlmError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // sum of doubled midranks of positives keeps everything integral
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1, doubled midrank = i + j + 2
        let doubled_mid = (i + j + 2) as u128;
        let positives = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        doubled_rank_sum += positives * doubled_mid;
        i = j + 1;
    }
    let n_pos = n_pos as u128;
    let doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    Ok(doubled_u as f64 / (2 * n_pos * n_neg as u128) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_ranking() {
        assert_eq!(auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap(), 1.0);
    }

    #[test]
    fn half_concordant() {
        assert_eq!(auc(&[0.8, 0.3, 0.6], &[true, true, false]).unwrap(), 0.5);
    }

    #[test]
    fn all_ties() {
        assert_eq!(auc(&[0.4; 5], &[true, false, true, false, false]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_rejected() {
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), Err(GlmError::SingleClass));
        assert_eq!(auc(&[f64::NAN, 0.2], &[true, false]), Err(GlmError::NonFiniteScore));
    }
}
