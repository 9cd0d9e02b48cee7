use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Returns `-log softmax(logits)[label]` and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((log_sum - logits[label], grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_classes() {
        let (loss, grad) = cross_entropy(&[0.3; 4], 2).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        assert!(grad.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn confident_correct_prediction_has_no_loss() {
        let (loss, _) = cross_entropy(&[0.0, 1e6, 0.0], 1).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn gradient_rows_sum_to_zero_and_match_differences() {
        let logits = [0.5, -1.25, 2.0, 0.1];
        let (_, grad) = cross_entropy(&logits, 0).unwrap();
        assert!(grad.iter().sum::<f64>().abs() < 1e-15);
        let h = 1e-5;
        for i in 0..4 {
            let mut p = logits;
            let mut m = logits;
            p[i] += h;
            m[i] -= h;
            let num = (cross_entropy(&p, 0).unwrap().0 - cross_entropy(&m, 0).unwrap().0) / (2.0 * h);
            assert!((num - grad[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            cross_entropy(&[0.0, 0.0], 2),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }
}
