//! Sample archives: a header followed by length-prefixed tile records.
//!
//! ```text
//! "LSAR" | u32 version | u32 sample count | u32 tile size
//! per record:
//!   u32 byte length of the rest of the record
//!   u32 + bytes  source id (UTF-8)
//!   u32 x | u32 y | u32 width | u32 height
//!   width*height*3 RGB bytes | width*height class bytes
//! ```
//!
//! All integers are little-endian.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mask::LabelMask;
use crate::raster::RgbImage;
use crate::tiling::{tile_image, tile_mask};
use crate::wire::{put_len, put_str, put_u32, Reader};

pub const ARCHIVE_MAGIC: [u8; 4] = *b"LSAR";
pub const ARCHIVE_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

/// An image tile with its ground-truth mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePair {
    pub image: RgbImage,
    pub mask: LabelMask,
    pub source_id: String,
    /// Offset of the tile within its source scene.
    pub tile_origin: (u32, u32),
}

impl SamplePair {
    pub fn new(image: RgbImage, mask: LabelMask, source_id: String, tile_origin: (u32, u32)) -> Result<Self> {
        if (image.width(), image.height()) != (mask.width(), mask.height()) {
            return Err(Error::dim(
                "sample pair",
                format!(
                    "image is {}x{}, mask is {}x{}",
                    image.width(),
                    image.height(),
                    mask.width(),
                    mask.height()
                ),
            ));
        }
        Ok(SamplePair {
            image,
            mask,
            source_id,
            tile_origin,
        })
    }
}

/// Cuts a scene and its mask into tile pairs on the even grid.
pub fn tile_scene(image: &RgbImage, mask: &LabelMask, tile: usize, source_id: &str) -> Result<Vec<SamplePair>> {
    if (image.width(), image.height()) != (mask.width(), mask.height()) {
        return Err(Error::dim(
            "tile_scene",
            format!(
                "{source_id}: image is {}x{}, mask is {}x{}",
                image.width(),
                image.height(),
                mask.width(),
                mask.height()
            ),
        ));
    }
    let images = tile_image(image, tile)?;
    let masks = tile_mask(mask, tile)?;
    images
        .into_iter()
        .zip(masks)
        .map(|((im, (x, y)), (m, _))| {
            SamplePair::new(im, m, source_id.into(), (x as u32, y as u32))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchiveHeader {
    pub version: u32,
    pub count: u32,
    pub tile_size: u32,
}

impl ArchiveHeader {
    pub fn new(count: usize, tile_size: usize) -> Result<Self> {
        let fit = |v: usize, what: &str| {
            u32::try_from(v).map_err(|_| Error::Parameter(format!("{what} {v} exceeds u32")))
        };
        Ok(ArchiveHeader {
            version: ARCHIVE_VERSION,
            count: fit(count, "sample count")?,
            tile_size: fit(tile_size, "tile size")?,
        })
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..4].copy_from_slice(&ARCHIVE_MAGIC);
        out[4..8].copy_from_slice(&self.version.to_le_bytes());
        out[8..12].copy_from_slice(&self.count.to_le_bytes());
        out[12..].copy_from_slice(&self.tile_size.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.array4("archive magic")?;
        if magic != ARCHIVE_MAGIC {
            return Err(Error::BadMagic {
                expected: ARCHIVE_MAGIC,
                found: magic,
            });
        }
        let version = r.u32("archive version")?;
        if version != ARCHIVE_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: ARCHIVE_VERSION,
            });
        }
        Ok(ArchiveHeader {
            version,
            count: r.u32("sample count")?,
            tile_size: r.u32("tile size")?,
        })
    }
}

/// One record including its leading byte-length field.
pub fn encode_record(pair: &SamplePair) -> Result<Vec<u8>> {
    let mut body = Vec::with_capacity(pair.image.as_raw().len() + pair.mask.len() + 64);
    put_str(&mut body, &pair.source_id)?;
    put_u32(&mut body, pair.tile_origin.0);
    put_u32(&mut body, pair.tile_origin.1);
    put_len(&mut body, pair.image.width())?;
    put_len(&mut body, pair.image.height())?;
    body.extend_from_slice(pair.image.as_raw());
    body.extend_from_slice(pair.mask.classes());
    let mut out = Vec::with_capacity(body.len() + 4);
    put_len(&mut out, body.len())?;
    out.extend_from_slice(&body);
    Ok(out)
}

/// Decodes a record body (everything after the byte-length field).
pub fn decode_record(body: &[u8]) -> Result<SamplePair> {
    let mut r = Reader::new(body);
    let source_id = r.string("source id")?;
    let x = r.u32("tile x")?;
    let y = r.u32("tile y")?;
    let width = r.u32("tile width")? as usize;
    let height = r.u32("tile height")? as usize;
    let pixels = width
        .checked_mul(height)
        .ok_or_else(|| Error::Corrupt(format!("tile {width}x{height} is too large")))?;
    if r.remaining() != pixels * 4 {
        return Err(Error::Corrupt(format!(
            "record `{source_id}` declares {width}x{height} but carries {} pixel bytes",
            r.remaining()
        )));
    }
    let rgb = r.take(pixels * 3, "rgb bytes")?.to_vec();
    let classes = r.take(pixels, "class bytes")?.to_vec();
    let image = RgbImage::from_raw(width, height, rgb)?;
    let mask = LabelMask::new(width, height, classes)
        .map_err(|e| Error::Corrupt(format!("record `{source_id}`: {e}")))?;
    SamplePair::new(image, mask, source_id, (x, y))
}

pub fn encode_archive(pairs: &[SamplePair], tile_size: usize) -> Result<Vec<u8>> {
    let mut out = ArchiveHeader::new(pairs.len(), tile_size)?.encode().to_vec();
    for p in pairs {
        out.extend_from_slice(&encode_record(p)?);
    }
    Ok(out)
}

/// Decodes a whole in-memory archive, checking the record count both ways.
pub fn decode_archive(bytes: &[u8]) -> Result<(ArchiveHeader, Vec<SamplePair>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corrupt(format!(
            "archive header needs {HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    let header = ArchiveHeader::decode(&bytes[..HEADER_LEN])?;
    let mut r = Reader::new(&bytes[HEADER_LEN..]);
    let mut pairs = Vec::new();
    for read in 0..header.count {
        let truncated = Error::Truncated {
            declared: header.count,
            read,
        };
        if r.remaining() < 4 {
            return Err(truncated);
        }
        let len = r.u32("record length")? as usize;
        let body = r.take(len, "record").map_err(|_| truncated)?;
        pairs.push(decode_record(body)?);
    }
    if r.remaining() != 0 {
        return Err(Error::CountMismatch {
            declared: header.count,
        });
    }
    Ok((header, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class::LandCover;

    fn pair(i: u8) -> SamplePair {
        let mut image = RgbImage::new(3, 2);
        image.put_pixel(1, 1, [i, 2, 3]);
        let mut mask = LabelMask::filled(3, 2, LandCover::Water);
        mask.set(0, 1, LandCover::Barren);
        SamplePair::new(image, mask, alloc::format!("scene{i}"), (i as u32, 7)).unwrap()
    }

    #[test]
    fn roundtrip() {
        let pairs: Vec<_> = (0..3).map(pair).collect();
        let bytes = encode_archive(&pairs, 2).unwrap();
        let (h, back) = decode_archive(&bytes).unwrap();
        assert_eq!(h.count, 3);
        assert_eq!(h.tile_size, 2);
        assert_eq!(back, pairs);
    }

    #[test]
    fn empty_archive_is_valid() {
        let bytes = encode_archive(&[], 512).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert!(decode_archive(&bytes).unwrap().1.is_empty());
    }

    #[test]
    fn distinct_errors() {
        let pairs: Vec<_> = (0..5).map(pair).collect();
        let bytes = encode_archive(&pairs, 2).unwrap();

        // header says 5 but only 4 records present
        let four = encode_archive(&pairs[..4], 2).unwrap();
        let mut lying = four.clone();
        lying[8..12].copy_from_slice(&5u32.to_le_bytes());
        assert_eq!(
            decode_archive(&lying).unwrap_err(),
            Error::Truncated { declared: 5, read: 4 }
        );
        // cut mid-record
        assert!(matches!(
            decode_archive(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated { declared: 5, read: 4 })
        ));
        // header says 4 but 5 records present
        let mut extra = bytes.clone();
        extra[8..12].copy_from_slice(&4u32.to_le_bytes());
        assert_eq!(decode_archive(&extra).unwrap_err(), Error::CountMismatch { declared: 4 });

        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(decode_archive(&magic), Err(Error::BadMagic { .. })));
        let mut version = bytes;
        version[4] = 9;
        assert!(matches!(decode_archive(&version), Err(Error::VersionMismatch { found: 9, .. })));
    }

    #[test]
    fn tile_scene_keeps_pairs_aligned() {
        let image = RgbImage::filled(130, 128, [1, 2, 3]);
        let mask = LabelMask::filled(130, 128, LandCover::Forest);
        let tiles = tile_scene(&image, &mask, 64, "s").unwrap();
        assert_eq!(tiles.len(), 6);
        assert_eq!(tiles[2].tile_origin, (66, 0));
        assert!(tile_scene(&image, &LabelMask::filled(128, 128, LandCover::Forest), 64, "s").is_err());
    }
}
