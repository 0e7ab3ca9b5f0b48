use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

#[derive(Debug, Clone)]
pub struct MaxPoolOutput<T> {
    pub output: Tensor<T>,
    /// Flat input index of the winning element for each output element.
    pub argmax: Vec<usize>,
}

/// Max pooling without padding. Ties go to the first maximum in row-major
/// scan order.
pub fn maxpool2d<T: Scalar>(input: &Tensor<T>, window: usize, stride: usize) -> Result<MaxPoolOutput<T>> {
    if window == 0 || stride == 0 {
        return Err(Error::Parameter("pool window and stride must be positive".into()));
    }
    let s = input.shape();
    if window > s.h || window > s.w {
        return Err(Error::Parameter(format!(
            "pool window {window} larger than input {}x{}",
            s.h, s.w
        )));
    }
    let oh = (s.h - window) / stride + 1;
    let ow = (s.w - window) / stride + 1;
    let out_shape = Shape::new(s.n, s.c, oh, ow);
    let mut out = Vec::with_capacity(out_shape.len());
    let mut argmax = Vec::with_capacity(out_shape.len());
    let data = input.data();
    for n in 0..s.n {
        for c in 0..s.c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = s.index(n, c, oy * stride, ox * stride);
                    for y in oy * stride..oy * stride + window {
                        for x in ox * stride..ox * stride + window {
                            let i = s.index(n, c, y, x);
                            if data[i] > data[best] {
                                best = i;
                            }
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
    }
    Ok(MaxPoolOutput {
        output: Tensor::from_vec(out_shape, out)?,
        argmax,
    })
}

pub fn maxpool2d_backward<T: Scalar>(
    output_grad: &Tensor<T>,
    argmax: &[usize],
    input_shape: Shape,
) -> Result<Tensor<T>> {
    if output_grad.data().len() != argmax.len() {
        return Err(Error::dim(
            "maxpool2d_backward",
            format!(
                "{} gradients for {} pooled outputs",
                output_grad.data().len(),
                argmax.len()
            ),
        ));
    }
    let mut grad = Tensor::zeros(input_shape);
    for (&g, &i) in output_grad.data().iter().zip(argmax) {
        grad.data_mut()[i] += g;
    }
    Ok(grad)
}

/// Mean over each channel plane, giving shape (N, C, 1, 1).
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.h == 0 || s.w == 0 {
        return Err(Error::dim("global_avg_pool", format!("empty spatial extent {s}")));
    }
    let count = T::of_usize(s.plane());
    let mut out = Vec::with_capacity(s.n * s.c);
    for n in 0..s.n {
        for c in 0..s.c {
            let sum = input.plane(n, c).iter().fold(T::zero(), |a, &v| a + v);
            out.push(sum / count);
        }
    }
    Tensor::from_vec(Shape::new(s.n, s.c, 1, 1), out)
}

pub fn global_avg_pool_backward<T: Scalar>(output_grad: &Tensor<T>, input_shape: Shape) -> Result<Tensor<T>> {
    let gs = output_grad.shape();
    if gs != Shape::new(input_shape.n, input_shape.c, 1, 1) {
        return Err(Error::dim(
            "global_avg_pool_backward",
            format!("gradient {gs} does not match pooled {input_shape}"),
        ));
    }
    let count = T::of_usize(input_shape.plane());
    let mut grad = Tensor::zeros(input_shape);
    for n in 0..input_shape.n {
        for c in 0..input_shape.c {
            let v = output_grad.at(n, c, 0, 0) / count;
            grad.plane_mut(n, c).fill(v);
        }
    }
    Ok(grad)
}
