//! Label masks and the palette codec that maps them to and from color images.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::class::{LandCover, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::raster::RgbImage;

/// One class index (0..=6) per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    classes: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, classes: Vec<u8>) -> Result<Self> {
        if classes.len() != width * height {
            return Err(Error::dim(
                "label mask",
                format!(
                    "{width}x{height} needs {} entries, got {}",
                    width * height,
                    classes.len()
                ),
            ));
        }
        if let Some(i) = classes.iter().position(|&c| c as usize >= NUM_CLASSES) {
            return Err(Error::Data(format!(
                "class index {} at pixel ({}, {}) outside 0..{}",
                classes[i],
                i % width.max(1),
                i / width.max(1),
                NUM_CLASSES - 1
            )));
        }
        Ok(LabelMask {
            width,
            height,
            classes,
        })
    }

    pub fn filled(width: usize, height: usize, class: LandCover) -> Self {
        LabelMask {
            width,
            height,
            classes: vec![class as u8; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    pub fn into_classes(self) -> Vec<u8> {
        self.classes
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.classes[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, class: LandCover) {
        self.classes[y * self.width + x] = class as u8;
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
        let mut classes = Vec::with_capacity(width * height);
        for row in y..y + height {
            let start = row * self.width + x;
            classes.extend_from_slice(&self.classes[start..start + width]);
        }
        Ok(LabelMask {
            width,
            height,
            classes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaletteEntry {
    pub name: String,
    pub rgb: [u8; 3],
}

/// Bijective class ↔ color table, indexed by class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPalette {
    entries: [PaletteEntry; NUM_CLASSES],
}

impl Default for ClassPalette {
    /// The DeepGlobe land-cover colors.
    fn default() -> Self {
        const COLORS: [[u8; 3]; NUM_CLASSES] = [
            [0, 255, 255],
            [255, 255, 0],
            [255, 0, 255],
            [0, 255, 0],
            [0, 0, 255],
            [255, 255, 255],
            [0, 0, 0],
        ];
        ClassPalette {
            entries: core::array::from_fn(|i| PaletteEntry {
                name: LandCover::ALL[i].key().to_string(),
                rgb: COLORS[i],
            }),
        }
    }
}

impl ClassPalette {
    pub fn new(entries: [PaletteEntry; NUM_CLASSES]) -> Result<Self> {
        for i in 0..NUM_CLASSES {
            for j in i + 1..NUM_CLASSES {
                if entries[i].rgb == entries[j].rgb {
                    return Err(Error::Parameter(format!(
                        "palette classes {i} and {j} share color {:?}",
                        entries[i].rgb
                    )));
                }
            }
        }
        Ok(ClassPalette { entries })
    }

    pub fn entries(&self) -> &[PaletteEntry; NUM_CLASSES] {
        &self.entries
    }

    pub fn color(&self, class: LandCover) -> [u8; 3] {
        self.entries[class.index()].rgb
    }

    pub fn class_of(&self, rgb: [u8; 3]) -> Option<LandCover> {
        self.entries
            .iter()
            .position(|e| e.rgb == rgb)
            .and_then(LandCover::from_index)
    }

    /// Applies `class_index name R G B` lines on top of the default palette.
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = ClassPalette::default().entries;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |why: &str| Error::Parameter(format!("palette line {}: {why}", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(bad("expected `class_index name R G B`"));
            }
            let index: usize = fields[0].parse().map_err(|_| bad("class index is not an integer"))?;
            let class = LandCover::from_index(index).ok_or_else(|| bad("class index outside 0..6"))?;
            let named: LandCover = fields[1].parse().map_err(|_| bad("unknown class name"))?;
            if named != class {
                return Err(bad("class name does not match its index"));
            }
            let mut rgb = [0u8; 3];
            for (dst, src) in rgb.iter_mut().zip(&fields[2..]) {
                *dst = src.parse().map_err(|_| bad("color channel is not in 0..255"))?;
            }
            entries[index] = PaletteEntry {
                name: fields[1].to_string(),
                rgb,
            };
        }
        ClassPalette::new(entries)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, e) in self.entries.iter().enumerate() {
            let [r, g, b] = e.rgb;
            let _ = writeln!(out, "{i} {} {r} {g} {b}", e.name);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedMask {
    pub mask: LabelMask,
    /// Pixels whose color was not in the palette (mapped to `Unknown`).
    pub off_palette: usize,
}

/// Maps each pixel color to its class. In strict mode an off-palette color is
/// an error; otherwise it becomes [`LandCover::Unknown`] and is counted.
pub fn decode_mask(image: &RgbImage, palette: &ClassPalette, strict: bool) -> Result<DecodedMask> {
    let mut classes = Vec::with_capacity(image.width() * image.height());
    let mut off_palette = 0;
    let mut last: Option<([u8; 3], u8)> = None;
    for (i, rgb) in image.pixels().enumerate() {
        let class = match last {
            Some((c, k)) if c == rgb => k,
            _ => {
                let k = match palette.class_of(rgb) {
                    Some(class) => class as u8,
                    None if strict => {
                        return Err(Error::Data(format!(
                            "pixel ({}, {}) has color {:?}, which is not in the palette",
                            i % image.width(),
                            i / image.width(),
                            rgb
                        )))
                    }
                    None => {
                        off_palette += 1;
                        classes.push(LandCover::Unknown as u8);
                        continue;
                    }
                };
                last = Some((rgb, k));
                k
            }
        };
        classes.push(class);
    }
    Ok(DecodedMask {
        mask: LabelMask::new(image.width(), image.height(), classes)?,
        off_palette,
    })
}

pub fn encode_mask(mask: &LabelMask, palette: &ClassPalette) -> RgbImage {
    let mut data = Vec::with_capacity(mask.len() * 3);
    for &c in mask.classes() {
        data.extend_from_slice(&palette.entries[c as usize].rgb);
    }
    RgbImage::from_raw(mask.width(), mask.height(), data).expect("mask and image sizes agree")
}
