use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Source taps for one output coordinate: `(lo, hi, frac)` meaning
/// `(1 - frac) * src[lo] + frac * src[hi]`.
fn axis_taps<T: Scalar>(input: usize, output: usize) -> Vec<(usize, usize, T)> {
    (0..output)
        .map(|o| {
            if input == 1 || output == 1 {
                return (0, 0, T::zero());
            }
            // Corner-aligned: output 0 maps to input 0, output end to input end.
            let num = o * (input - 1);
            let den = output - 1;
            let lo = num / den;
            let rem = num % den;
            if rem == 0 {
                (lo, lo, T::zero())
            } else {
                (lo, lo + 1, T::of_usize(rem) / T::of_usize(den))
            }
        })
        .collect()
}

/// Corner-aligned bilinear resize to `out_h × out_w`. A 1×1 input broadcasts.
pub fn bilinear_resize<T: Scalar>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.h == 0 || s.w == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::dim(
            "bilinear_resize",
            format!("cannot resize {s} to {out_h}x{out_w}"),
        ));
    }
    let ys = axis_taps::<T>(s.h, out_h);
    let xs = axis_taps::<T>(s.w, out_w);
    let one = T::one();
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, out_h, out_w));
    for n in 0..s.n {
        for c in 0..s.c {
            let src = input.plane(n, c);
            let dst = out.plane_mut(n, c);
            for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                let r0 = &src[y0 * s.w..(y0 + 1) * s.w];
                let r1 = &src[y1 * s.w..(y1 + 1) * s.w];
                for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let top = if fx == T::zero() { r0[x0] } else { (one - fx) * r0[x0] + fx * r0[x1] };
                    let v = if fy == T::zero() {
                        top
                    } else {
                        let bottom = if fx == T::zero() { r1[x0] } else { (one - fx) * r1[x0] + fx * r1[x1] };
                        (one - fy) * top + fy * bottom
                    };
                    dst[oy * out_w + ox] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`bilinear_resize`].
pub fn bilinear_resize_backward<T: Scalar>(output_grad: &Tensor<T>, input_shape: Shape) -> Result<Tensor<T>> {
    let gs = output_grad.shape();
    if (gs.n, gs.c) != (input_shape.n, input_shape.c) || input_shape.h == 0 || input_shape.w == 0 {
        return Err(Error::dim(
            "bilinear_resize_backward",
            format!("gradient {gs} does not match input {input_shape}"),
        ));
    }
    let ys = axis_taps::<T>(input_shape.h, gs.h);
    let xs = axis_taps::<T>(input_shape.w, gs.w);
    let one = T::one();
    let w = input_shape.w;
    let mut grad = Tensor::zeros(input_shape);
    for n in 0..gs.n {
        for c in 0..gs.c {
            let g = output_grad.plane(n, c);
            let dst = grad.plane_mut(n, c);
            for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let v = g[oy * gs.w + ox];
                    let top = (one - fy) * v;
                    let bottom = fy * v;
                    dst[y0 * w + x0] += (one - fx) * top;
                    dst[y0 * w + x1] += fx * top;
                    dst[y1 * w + x0] += (one - fx) * bottom;
                    dst[y1 * w + x1] += fx * bottom;
                }
            }
        }
    }
    Ok(grad)
}

pub fn bilinear_upsample<T: Scalar>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(Error::Parameter("upsample factor must be positive".into()));
    }
    let s = input.shape();
    bilinear_resize(input, s.h * factor, s.w * factor)
}

pub fn bilinear_upsample_backward<T: Scalar>(output_grad: &Tensor<T>, input_shape: Shape) -> Result<Tensor<T>> {
    bilinear_resize_backward(output_grad, input_shape)
}
