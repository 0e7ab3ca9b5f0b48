use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

/// Interleaved 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        RgbImage { width, height, data }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::dim(
                "rgb image",
                format!(
                    "{width}x{height} needs {} bytes, got {}",
                    width * height * 3,
                    data.len()
                ),
            ));
        }
        Ok(RgbImage { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<Self> {
        if x + width > self.width || y + height > self.height {
            return Err(Error::dim(
                "crop",
                format!(
                    "{width}x{height} at ({x}, {y}) exceeds {}x{}",
                    self.width, self.height
                ),
            ));
        }
        let mut data = Vec::with_capacity(width * height * 3);
        for row in y..y + height {
            let start = (row * self.width + x) * 3;
            data.extend_from_slice(&self.data[start..start + width * 3]);
        }
        Ok(RgbImage { width, height, data })
    }

    /// Planar (1, 3, H, W) tensor with bytes scaled to [-1, 1].
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let scale = T::of_f64(1.0 / 127.5);
        let one = T::one();
        Tensor::from_fn(Shape::new(1, 3, self.height, self.width), |_, c, y, x| {
            T::of_usize(self.data[(y * self.width + x) * 3 + c] as usize) * scale - one
        })
    }
}

/// Stacks equally sized images into an (N, 3, H, W) network input.
pub fn images_to_tensor<T: Scalar>(images: &[&RgbImage]) -> Result<Tensor<T>> {
    let parts: Vec<Tensor<T>> = images.iter().map(|im| im.to_tensor()).collect();
    Tensor::stack(&parts)
}
