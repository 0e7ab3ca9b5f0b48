//! Raster files. Scenes may be PNG or JPEG; everything written is PNG.

use std::path::Path;

use image::{ImageFormat, RgbImage as ImgRgb};
use landseg_core::mask::{decode_mask, encode_mask, DecodedMask};
use landseg_core::{ClassPalette, LabelMask, RgbImage};

use crate::error::{Error, Result};
use crate::store::write_atomic;

/// Reads a PNG or JPEG as 8-bit RGB. Alpha is dropped and grey is expanded.
pub fn read_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    let img = image::load_from_memory(&bytes)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(RgbImage::from_raw(w, h, img.into_raw())?)
}

pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>> {
    let buf = ImgRgb::from_raw(image.width() as u32, image.height() as u32, image.as_raw().to_vec())
        .expect("raster length matches its dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).map_err(|source| Error::Image {
        path: "<memory>".into(),
        source,
    })?;
    Ok(out.into_inner())
}

pub fn write_rgb(path: impl AsRef<Path>, image: &RgbImage) -> Result<()> {
    write_atomic(path, &encode_png(image)?)
}

pub fn read_mask(path: impl AsRef<Path>, palette: &ClassPalette, strict: bool) -> Result<DecodedMask> {
    let path = path.as_ref();
    decode_mask(&read_rgb(path)?, palette, strict).map_err(Error::file(path))
}

pub fn write_mask(path: impl AsRef<Path>, mask: &LabelMask, palette: &ClassPalette) -> Result<()> {
    write_rgb(path, &encode_mask(mask, palette))
}
