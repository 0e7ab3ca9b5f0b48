use alloc::format;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the gradient where the forward input was strictly positive.
/// The subgradient at exactly zero is zero.
pub fn relu_backward<T: Scalar>(output_grad: &Tensor<T>, saved_input: &Tensor<T>) -> Result<Tensor<T>> {
    if output_grad.shape() != saved_input.shape() {
        return Err(Error::dim(
            "relu_backward",
            format!("{} vs {}", output_grad.shape(), saved_input.shape()),
        ));
    }
    let mut grad = output_grad.clone();
    for (g, &x) in grad.data_mut().iter_mut().zip(saved_input.data()) {
        if x <= T::zero() {
            *g = T::zero();
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn sign_cases() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 3), alloc::vec![-1.0f32, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let pos = Tensor::from_vec(Shape::new(1, 1, 1, 3), alloc::vec![0.5f32, 1.0, 7.0]).unwrap();
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn gradient_at_kink_is_zero() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 3), alloc::vec![-0.5f64, 0.0, 0.5]).unwrap();
        let g = Tensor::full(x.shape(), 1.0);
        assert_eq!(relu_backward(&g, &x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }
}
