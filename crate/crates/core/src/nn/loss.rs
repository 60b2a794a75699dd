use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean token cross-entropy over the rows that carry a target.
#[derive(Clone, Debug)]
pub struct CrossEntropy {
    pub loss: f64,
    /// Row-wise softmax of the logits.
    pub probs: Tensor,
    targets: Vec<Option<usize>>,
}

impl CrossEntropy {
    pub fn count(&self) -> usize {
        self.targets.iter().flatten().count()
    }

    /// Gradient of `upstream * loss` with respect to the logits.
    pub fn backward(&self, upstream: f64) -> Tensor {
        let mut grad = Tensor::zeros(self.probs.shape());
        let count = self.count();
        if count == 0 {
            return grad;
        }
        let scale = upstream / count as f64;
        for (t, target) in self.targets.iter().enumerate() {
            let Some(target) = *target else { continue };
            let row = grad.row_mut(t);
            row.copy_from_slice(self.probs.row(t));
            row[target] -= 1.0;
            for g in row.iter_mut() {
                *g *= scale;
            }
        }
        grad
    }
}

pub fn softmax_cross_entropy(logits: &Tensor, targets: &[Option<usize>]) -> Result<CrossEntropy> {
    let k = logits.cols();
    if logits.rows() != targets.len() {
        return Err(crate::error::shape_mismatch(
            "cross-entropy targets",
            &[logits.rows()],
            &[targets.len()],
        ));
    }
    let mut probs = logits.clone();
    let mut total = 0.0;
    let mut count = 0usize;
    for (t, target) in targets.iter().enumerate() {
        let row = logits.row(t);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row {
            sum += (v - max).exp();
        }
        let log_z = max + sum.ln();
        for (p, v) in probs.row_mut(t).iter_mut().zip(row) {
            *p = (v - log_z).exp();
        }
        if let Some(target) = *target {
            if target >= k {
                return Err(Error::TokenOutOfRange { id: target, size: k });
            }
            total += log_z - row[target];
            count += 1;
        }
    }
    let loss = if count == 0 { 0.0 } else { total / count as f64 };
    Ok(CrossEntropy {
        loss,
        probs,
        targets: targets.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let logits = Tensor::zeros(&[3, 4]);
        let ce = softmax_cross_entropy(&logits, &[Some(0), None, Some(3)]).unwrap();
        for p in ce.probs.data() {
            assert!((p - 0.25).abs() < 1e-15);
        }
        assert!((ce.loss - 4f64.ln()).abs() < 1e-12);
        assert_eq!(ce.count(), 2);
        let g = ce.backward(1.0);
        assert!(g.row(1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn no_targets_means_zero_loss() {
        let ce = softmax_cross_entropy(&Tensor::zeros(&[2, 3]), &[None, None]).unwrap();
        assert_eq!(ce.loss, 0.0);
        assert!(ce.backward(1.0).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn target_out_of_range() {
        assert!(softmax_cross_entropy(&Tensor::zeros(&[1, 3]), &[Some(3)]).is_err());
    }
}
