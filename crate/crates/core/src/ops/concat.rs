use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Joins two tensors along the channel axis, `a`'s channels first.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
        return Err(Error::dim("concat_channels", format!("{sa} vs {sb}")));
    }
    let shape = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
    let (ia, ib) = (sa.c * sa.plane(), sb.c * sb.plane());
    let mut data = Vec::with_capacity(shape.len());
    for n in 0..sa.n {
        data.extend_from_slice(&a.data()[n * ia..(n + 1) * ia]);
        data.extend_from_slice(&b.data()[n * ib..(n + 1) * ib]);
    }
    Tensor::from_vec(shape, data)
}

/// Inverse of [`concat_channels`]: the first `channels` channels and the rest.
/// Also the backward pass of concatenation.
pub fn split_channels<T: Scalar>(t: &Tensor<T>, channels: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = t.shape();
    if channels > s.c {
        return Err(Error::dim(
            "split_channels",
            format!("cannot take {channels} channels from {s}"),
        ));
    }
    let sa = Shape::new(s.n, channels, s.h, s.w);
    let sb = Shape::new(s.n, s.c - channels, s.h, s.w);
    let item = s.c * s.plane();
    let cut = channels * s.plane();
    let mut a = Vec::with_capacity(sa.len());
    let mut b = Vec::with_capacity(sb.len());
    for n in 0..s.n {
        let chunk = &t.data()[n * item..(n + 1) * item];
        a.extend_from_slice(&chunk[..cut]);
        b.extend_from_slice(&chunk[cut..]);
    }
    Ok((Tensor::from_vec(sa, a)?, Tensor::from_vec(sb, b)?))
}
