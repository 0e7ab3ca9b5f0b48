use alloc::format;
use alloc::vec;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Per-pixel softmax over the channel axis.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let s = logits.shape();
    let plane = s.plane();
    let mut out = Tensor::zeros(s);
    let mut col = vec![T::zero(); s.c];
    for n in 0..s.n {
        let base = n * s.c * plane;
        for p in 0..plane {
            let mut max = T::neg_infinity();
            for (c, v) in col.iter_mut().enumerate() {
                *v = logits.data()[base + c * plane + p];
                max = max.max(*v);
            }
            let mut denom = T::zero();
            for v in col.iter_mut() {
                *v = (*v - max).exp();
                denom += *v;
            }
            for (c, v) in col.iter().enumerate() {
                out.data_mut()[base + c * plane + p] = *v / denom;
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    /// Mean negative log-likelihood over the counted pixels.
    pub loss: T,
    /// Gradient of `loss` with respect to the logits.
    pub grad: Tensor<T>,
    /// Pixels that contributed (not ignored).
    pub counted: usize,
}

/// Mean per-pixel softmax cross-entropy.
///
/// `targets` holds one class index per pixel in (N, H, W) order. Pixels whose
/// target equals `ignore_class` contribute neither loss nor gradient; if all
/// are ignored the loss is zero.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[u8],
    ignore_class: Option<u8>,
) -> Result<LossOutput<T>> {
    let s = logits.shape();
    let plane = s.plane();
    if targets.len() != s.n * plane {
        return Err(Error::dim(
            "softmax_cross_entropy",
            format!("{} targets for logits {s}", targets.len()),
        ));
    }
    if let Some(bad) = targets.iter().position(|&t| t as usize >= s.c) {
        return Err(Error::Data(format!(
            "target class {} at pixel {bad} outside 0..{}",
            targets[bad],
            s.c - 1
        )));
    }
    let counted = targets
        .iter()
        .filter(|&&t| Some(t) != ignore_class)
        .count();
    let mut grad = softmax(logits);
    if counted == 0 {
        return Ok(LossOutput {
            loss: T::zero(),
            grad: Tensor::zeros(s),
            counted,
        });
    }
    let scale = T::one() / T::of_usize(counted);
    let mut total = T::zero();
    for n in 0..s.n {
        let base = n * s.c * plane;
        for p in 0..plane {
            let t = targets[n * plane + p];
            if Some(t) == ignore_class {
                for c in 0..s.c {
                    grad.data_mut()[base + c * plane + p] = T::zero();
                }
                continue;
            }
            // log-sum-exp for the loss itself; the softmax is reused for the gradient
            let mut max = T::neg_infinity();
            for c in 0..s.c {
                max = max.max(logits.data()[base + c * plane + p]);
            }
            let mut denom = T::zero();
            for c in 0..s.c {
                denom += (logits.data()[base + c * plane + p] - max).exp();
            }
            let target_logit = logits.data()[base + t as usize * plane + p];
            total += denom.ln() + max - target_logit;
            for c in 0..s.c {
                let g = &mut grad.data_mut()[base + c * plane + p];
                if c == t as usize {
                    *g -= T::one();
                }
                *g *= scale;
            }
        }
    }
    Ok(LossOutput {
        loss: total * scale,
        grad,
        counted,
    })
}
