use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Footprint width of a `k`-tap kernel with `r - 1` zeros between taps.
pub const fn effective_extent(k: usize, r: usize) -> usize {
    k + (k - 1) * (r - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding so that the output has `ceil(input / stride)` pixels per
    /// axis. Odd totals put the extra pixel on the bottom/right.
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub kernel_size: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: Padding,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvParams {
    pub fn new(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        ConvParams {
            kernel_size,
            stride: 1,
            dilation: 1,
            padding: Padding::Same,
            in_channels,
            out_channels,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn extent(&self) -> usize {
        effective_extent(self.kernel_size, self.dilation)
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(
            self.out_channels,
            self.in_channels,
            self.kernel_size,
            self.kernel_size,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 {
            return Err(Error::Parameter("kernel size must be positive".into()));
        }
        if self.stride == 0 {
            return Err(Error::Parameter("stride must be positive".into()));
        }
        if self.dilation == 0 {
            return Err(Error::Parameter("dilation rate must be positive".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Parameter("channel counts must be positive".into()));
        }
        Ok(())
    }

    /// Padding before, padding after and output size along one axis.
    fn axis(&self, input: usize) -> Result<(usize, usize, usize)> {
        let extent = self.extent();
        match self.padding {
            Padding::Valid => {
                if input < extent {
                    return Err(Error::Parameter(format!(
                        "valid convolution needs input extent >= {extent}, got {input}"
                    )));
                }
                Ok((0, 0, (input - extent) / self.stride + 1))
            }
            Padding::Same => {
                let out = input.div_ceil(self.stride);
                let total = ((out - 1) * self.stride + extent).saturating_sub(input);
                let before = total / 2;
                Ok((before, total - before, out))
            }
        }
    }

    /// Output shape for an input of the given shape.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.validate()?;
        if input.c != self.in_channels {
            return Err(Error::dim(
                "conv2d",
                format!(
                    "input has {} channels, weights expect {}",
                    input.c, self.in_channels
                ),
            ));
        }
        let (_, _, oh) = self.axis(input.h)?;
        let (_, _, ow) = self.axis(input.w)?;
        Ok(Shape::new(input.n, self.out_channels, oh, ow))
    }
}

/// Output indices `o` in `[lo, hi)` for which `o * stride + offset` lands
/// inside `0..input`.
fn valid_range(offset: isize, stride: usize, input: usize, output: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { (-offset + s - 1) / s };
    let room = input as isize - offset;
    let hi = if room <= 0 { 0 } else { (room + s - 1) / s };
    let hi = (hi as usize).min(output);
    let lo = lo as usize;
    (lo, hi.max(lo))
}

struct Geometry {
    input: Shape,
    output: Shape,
    pad_top: usize,
    pad_left: usize,
}

fn check(input: &Tensor<impl Scalar>, weights_shape: Shape, params: &ConvParams) -> Result<Geometry> {
    params.validate()?;
    if weights_shape != params.weight_shape() {
        return Err(Error::dim(
            "conv2d",
            format!(
                "weights have shape {weights_shape}, params imply {}",
                params.weight_shape()
            ),
        ));
    }
    let input_shape = input.shape();
    let output = params.output_shape(input_shape)?;
    let (pad_top, _, _) = params.axis(input_shape.h)?;
    let (pad_left, _, _) = params.axis(input_shape.w)?;
    Ok(Geometry {
        input: input_shape,
        output,
        pad_top,
        pad_left,
    })
}

/// 2-D convolution (cross-correlation) with dilated taps.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
    params: &ConvParams,
) -> Result<Tensor<T>> {
    let g = check(input, weights.shape(), params)?;
    if bias.len() != params.out_channels {
        return Err(Error::dim(
            "conv2d",
            format!(
                "bias has {} entries, expected {}",
                bias.len(),
                params.out_channels
            ),
        ));
    }
    let (ih, iw) = (g.input.h, g.input.w);
    let (oh, ow) = (g.output.h, g.output.w);
    let (k, s, r) = (params.kernel_size, params.stride, params.dilation);
    let w = weights.data();
    let mut out = Tensor::zeros(g.output);

    for n in 0..g.input.n {
        for oc in 0..params.out_channels {
            let mut plane = vec![bias[oc]; oh * ow];
            for ic in 0..params.in_channels {
                let src = input.plane(n, ic);
                for ky in 0..k {
                    let dy = (ky * r) as isize - g.pad_top as isize;
                    let (y0, y1) = valid_range(dy, s, ih, oh);
                    for kx in 0..k {
                        let dx = (kx * r) as isize - g.pad_left as isize;
                        let (x0, x1) = valid_range(dx, s, iw, ow);
                        if x0 >= x1 {
                            continue;
                        }
                        let wv = w[((oc * params.in_channels + ic) * k + ky) * k + kx];
                        for oy in y0..y1 {
                            let iy = (oy * s) as isize + dy;
                            let row = &src[iy as usize * iw..(iy as usize + 1) * iw];
                            let dst = &mut plane[oy * ow + x0..oy * ow + x1];
                            let first = ((x0 * s) as isize + dx) as usize;
                            if s == 1 {
                                for (o, &v) in dst.iter_mut().zip(&row[first..first + (x1 - x0)]) {
                                    *o += wv * v;
                                }
                            } else {
                                for (j, o) in dst.iter_mut().enumerate() {
                                    *o += wv * row[first + j * s];
                                }
                            }
                        }
                    }
                }
            }
            out.plane_mut(n, oc).copy_from_slice(&plane);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

/// Gradients of a convolution with respect to its input, weights and bias,
/// given the gradient of the loss with respect to its output.
pub fn conv2d_backward<T: Scalar>(
    output_grad: &Tensor<T>,
    saved_input: &Tensor<T>,
    weights: &Tensor<T>,
    params: &ConvParams,
) -> Result<ConvGrads<T>> {
    let (input, weight, bias) =
        conv2d_backward_select(output_grad, saved_input, weights, params, true)?;
    Ok(ConvGrads {
        input: input.expect("input gradient requested"),
        weight,
        bias,
    })
}

/// Input, weight and bias gradients; the input part only when requested.
pub(crate) type SelectedGrads<T> = (Option<Tensor<T>>, Tensor<T>, Vec<T>);

/// Like [`conv2d_backward`], optionally skipping the input gradient (first
/// layers of a network do not need it).
#[allow(clippy::needless_range_loop)]
pub(crate) fn conv2d_backward_select<T: Scalar>(
    output_grad: &Tensor<T>,
    saved_input: &Tensor<T>,
    weights: &Tensor<T>,
    params: &ConvParams,
    want_input: bool,
) -> Result<SelectedGrads<T>> {
    let g = check(saved_input, weights.shape(), params)?;
    if output_grad.shape() != g.output {
        return Err(Error::dim(
            "conv2d_backward",
            format!(
                "output gradient has shape {}, forward output was {}",
                output_grad.shape(),
                g.output
            ),
        ));
    }
    let (ih, iw) = (g.input.h, g.input.w);
    let (oh, ow) = (g.output.h, g.output.w);
    let (k, s, r) = (params.kernel_size, params.stride, params.dilation);
    let w = weights.data();
    let mut input_grad = want_input.then(|| Tensor::zeros(g.input));
    let mut weight_grad = Tensor::zeros(weights.shape());
    let mut bias_grad = vec![T::zero(); params.out_channels];

    for n in 0..g.input.n {
        for oc in 0..params.out_channels {
            let go = output_grad.plane(n, oc);
            bias_grad[oc] += go.iter().fold(T::zero(), |a, &v| a + v);
            for ic in 0..params.in_channels {
                let src = saved_input.plane(n, ic);
                for ky in 0..k {
                    let dy = (ky * r) as isize - g.pad_top as isize;
                    let (y0, y1) = valid_range(dy, s, ih, oh);
                    for kx in 0..k {
                        let dx = (kx * r) as isize - g.pad_left as isize;
                        let (x0, x1) = valid_range(dx, s, iw, ow);
                        if x0 >= x1 {
                            continue;
                        }
                        let widx = ((oc * params.in_channels + ic) * k + ky) * k + kx;
                        let wv = w[widx];
                        let first = ((x0 * s) as isize + dx) as usize;
                        let mut acc = T::zero();
                        for oy in y0..y1 {
                            let iy = ((oy * s) as isize + dy) as usize;
                            let grow = &go[oy * ow + x0..oy * ow + x1];
                            let row = &src[iy * iw..(iy + 1) * iw];
                            if s == 1 {
                                for (&gv, &v) in grow.iter().zip(&row[first..first + (x1 - x0)]) {
                                    acc += gv * v;
                                }
                            } else {
                                for (j, &gv) in grow.iter().enumerate() {
                                    acc += gv * row[first + j * s];
                                }
                            }
                            if let Some(ig) = input_grad.as_mut() {
                                let dst = &mut ig.plane_mut(n, ic)[iy * iw..(iy + 1) * iw];
                                if s == 1 {
                                    for (d, &gv) in dst[first..first + (x1 - x0)].iter_mut().zip(grow) {
                                        *d += wv * gv;
                                    }
                                } else {
                                    for (j, &gv) in grow.iter().enumerate() {
                                        dst[first + j * s] += wv * gv;
                                    }
                                }
                            }
                        }
                        weight_grad.data_mut()[widx] += acc;
                    }
                }
            }
        }
    }
    Ok((input_grad, weight_grad, bias_grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Shape, v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn effective_extent_values() {
        assert_eq!(effective_extent(3, 1), 3);
        assert_eq!(effective_extent(3, 2), 5);
        assert_eq!(effective_extent(3, 6), 13);
        assert_eq!(effective_extent(1, 12), 1);
    }

    #[test]
    fn ones_kernel_center_sums_all_pixels() {
        let input = t(Shape::new(1, 1, 3, 3), &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let w = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let out = conv2d(&input, &w, &[0.0], &ConvParams::new(1, 1, 3)).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 1, 3, 3));
        assert_eq!(out.at(0, 0, 1, 1), 45.0);
        // corner sees the 2x2 block only
        assert_eq!(out.at(0, 0, 0, 0), 1. + 2. + 4. + 5.);
    }

    #[test]
    fn identity_kernel() {
        let input = Tensor::from_fn(Shape::new(2, 1, 4, 5), |n, _, y, x| (n * 100 + y * 7 + x) as f64);
        let w = Tensor::full(Shape::new(1, 1, 1, 1), 1.0);
        let out = conv2d(&input, &w, &[0.0], &ConvParams::new(1, 1, 1)).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn same_padding_even_extent_pads_bottom_right() {
        // k=2: extent 2, one pixel of padding after.
        let input = t(Shape::new(1, 1, 2, 2), &[1., 2., 3., 4.]);
        let w = Tensor::full(Shape::new(1, 1, 2, 2), 1.0);
        let out = conv2d(&input, &w, &[0.0], &ConvParams::new(1, 1, 2)).unwrap();
        assert_eq!(out.data(), &[10., 6., 7., 4.]);
    }

    #[test]
    fn strided_same_halves() {
        let p = ConvParams::new(3, 4, 3).with_stride(2);
        assert_eq!(
            p.output_shape(Shape::new(1, 3, 64, 64)).unwrap(),
            Shape::new(1, 4, 32, 32)
        );
        assert_eq!(
            p.output_shape(Shape::new(1, 3, 7, 5)).unwrap(),
            Shape::new(1, 4, 4, 3)
        );
    }

    #[test]
    fn valid_output_size() {
        let p = ConvParams::new(1, 1, 3)
            .with_dilation(2)
            .with_padding(Padding::Valid);
        assert_eq!(
            p.output_shape(Shape::new(1, 1, 5, 5)).unwrap(),
            Shape::new(1, 1, 1, 1)
        );
        assert!(matches!(
            p.output_shape(Shape::new(1, 1, 4, 5)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn rejects_bad_params_and_shapes() {
        let input = Tensor::<f32>::zeros(Shape::new(1, 2, 4, 4));
        let w = Tensor::zeros(Shape::new(1, 3, 3, 3));
        assert!(matches!(
            conv2d(&input, &w, &[0.0], &ConvParams::new(3, 1, 3)),
            Err(Error::Dimension { .. })
        ));
        let w = Tensor::zeros(Shape::new(1, 2, 3, 3));
        for p in [
            ConvParams::new(2, 1, 3).with_stride(0),
            ConvParams::new(2, 1, 3).with_dilation(0),
        ] {
            assert!(matches!(conv2d(&input, &w, &[0.0], &p), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let input = Tensor::from_fn(Shape::new(1, 2, 5, 5), |_, c, y, x| (c + y * x) as f64 * 0.1);
        let w = Tensor::from_fn(Shape::new(3, 2, 3, 3), |o, i, y, x| (o + i + y + x) as f64 * 0.01);
        let p = ConvParams::new(2, 3, 3).with_dilation(2);
        let og = Tensor::zeros(Shape::new(1, 3, 5, 5));
        let g = conv2d_backward(&og, &input, &w, &p).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.weight.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_by_one_kernel_input_grad_is_scaled() {
        let input = Tensor::from_fn(Shape::new(1, 1, 3, 4), |_, _, y, x| (y + x) as f64);
        let w = Tensor::full(Shape::new(1, 1, 1, 1), 2.5);
        let og = Tensor::from_fn(Shape::new(1, 1, 3, 4), |_, _, y, x| (y * 4 + x) as f64 - 3.0);
        let g = conv2d_backward(&og, &input, &w, &ConvParams::new(1, 1, 1)).unwrap();
        let expected: Vec<f64> = og.data().iter().map(|v| v * 2.5).collect();
        assert_eq!(g.input.data(), &expected[..]);
    }

    #[test]
    fn backward_rejects_wrong_output_grad_shape() {
        let input = Tensor::<f64>::zeros(Shape::new(1, 1, 4, 4));
        let w = Tensor::zeros(Shape::new(1, 1, 3, 3));
        let og = Tensor::zeros(Shape::new(1, 1, 3, 3));
        assert!(matches!(
            conv2d_backward(&og, &input, &w, &ConvParams::new(1, 1, 3)),
            Err(Error::Dimension { .. })
        ));
    }
}
