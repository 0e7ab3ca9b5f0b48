//! Land-cover change between two co-located images.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use core::fmt::Write;

use crate::class::{LandCover, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::mask::LabelMask;
use crate::metrics::{class_percentages, format_tenths, round_ratio, ClassPercentages};
use crate::model::SegNet;
use crate::raster::RgbImage;
use crate::tiling::tile_grid;

/// Segments an image of any size at least `tile × tile` by running the
/// network on each tile of the even grid. Where tiles overlap the logits are
/// averaged before the per-pixel argmax (ties to the lowest class index).
pub fn tiled_inference(image: &RgbImage, net: &SegNet<f32>, tile: usize) -> Result<LabelMask> {
    let os = net.config().output_stride;
    if tile == 0 || !tile.is_multiple_of(os) {
        return Err(Error::Parameter(format!(
            "tile size {tile} must be a positive multiple of the output stride {os}"
        )));
    }
    let (w, h) = (image.width(), image.height());
    if w < tile || h < tile {
        return Err(Error::Parameter(format!(
            "image {w}x{h} is smaller than the {tile}x{tile} inference tile; resize or pad it first"
        )));
    }
    let classes = net.config().num_classes;
    let mut sums = vec![0f32; classes * w * h];
    let mut counts = vec![0u32; w * h];
    for (x0, y0) in tile_grid(w, h, tile)? {
        let logits = net.forward(&image.crop(x0, y0, tile, tile)?.to_tensor::<f32>())?;
        for c in 0..classes {
            let src = logits.plane(0, c);
            let dst = &mut sums[c * w * h..(c + 1) * w * h];
            for ty in 0..tile {
                let row = (y0 + ty) * w + x0;
                for (d, &v) in dst[row..row + tile].iter_mut().zip(&src[ty * tile..(ty + 1) * tile]) {
                    *d += v;
                }
            }
        }
        for ty in 0..tile {
            let row = (y0 + ty) * w + x0;
            for n in &mut counts[row..row + tile] {
                *n += 1;
            }
        }
    }
    let mut out = vec![0u8; w * h];
    for (p, label) in out.iter_mut().enumerate() {
        let n = counts[p] as f32;
        let mut best = sums[p] / n;
        for c in 1..classes {
            let v = sums[c * w * h + p] / n;
            if v > best {
                best = v;
                *label = c as u8;
            }
        }
    }
    LabelMask::new(w, h, out)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChangeLabels {
    pub location: String,
    pub t1: String,
    pub t2: String,
}

impl ChangeLabels {
    pub fn new(location: impl Into<String>, t1: impl Into<String>, t2: impl Into<String>) -> Self {
        ChangeLabels {
            location: location.into(),
            t1: t1.into(),
            t2: t2.into(),
        }
    }
}

/// Per-class area shares at two times and their differences.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeReport {
    pub labels: ChangeLabels,
    pub t1: ClassPercentages,
    pub t2: ClassPercentages,
    /// `t2 − t1` as fractions, per class.
    pub deltas: [f64; NUM_CLASSES],
}

impl ChangeReport {
    pub fn new(labels: ChangeLabels, t1: ClassPercentages, t2: ClassPercentages) -> Self {
        let (f1, f2) = (t1.fractions(), t2.fractions());
        ChangeReport {
            labels,
            t1,
            t2,
            deltas: core::array::from_fn(|c| f2[c] - f1[c]),
        }
    }

    pub fn from_masks(labels: ChangeLabels, t1: &LabelMask, t2: &LabelMask) -> Result<Self> {
        Ok(Self::new(labels, class_percentages(t1)?, class_percentages(t2)?))
    }

    /// Change in tenths of a percentage point, rounded from the exact
    /// rational difference.
    pub fn delta_tenths(&self, class: LandCover) -> i64 {
        let c = class.index();
        let (n1, d1) = (self.t1.counts()[c] as i128, self.t1.total() as i128);
        let (n2, d2) = (self.t2.counts()[c] as i128, self.t2.total() as i128);
        round_ratio((n2 * d1 - n1 * d2) * 1000, d1 * d2)
    }
}

#[derive(Debug, Clone)]
pub struct ChangeOutcome {
    pub report: ChangeReport,
    pub mask_t1: LabelMask,
    pub mask_t2: LabelMask,
}

/// Segments both images and compares their class shares. The images may
/// differ in size.
pub fn detect_change(
    image_t1: &RgbImage,
    image_t2: &RgbImage,
    net: &SegNet<f32>,
    labels: ChangeLabels,
    tile: usize,
) -> Result<ChangeOutcome> {
    let mask_t1 = tiled_inference(image_t1, net, tile)
        .map_err(|e| e.in_stage(format!("T1 ({}) inference", labels.t1)))?;
    let mask_t2 = tiled_inference(image_t2, net, tile)
        .map_err(|e| e.in_stage(format!("T2 ({}) inference", labels.t2)))?;
    Ok(ChangeOutcome {
        report: ChangeReport::from_masks(labels, &mask_t1, &mask_t2)?,
        mask_t1,
        mask_t2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Markdown,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RenderOptions {
    /// Drop classes that cover nothing at either time.
    pub hide_absent: bool,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        String::from(s)
    }
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

fn signed(tenths: i64) -> String {
    if tenths < 0 {
        format_tenths(tenths)
    } else {
        format!("+{}", format_tenths(tenths))
    }
}

/// Table of class shares at T1 and T2 and the change in percentage points,
/// one decimal place throughout.
pub fn render_report(report: &ChangeReport, format: ReportFormat, options: RenderOptions) -> String {
    let rows = LandCover::ALL.into_iter().filter(|&c| {
        !options.hide_absent || report.t1.counts()[c.index()] > 0 || report.t2.counts()[c.index()] > 0
    });
    let l = &report.labels;
    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            let _ = writeln!(out, "## {}\n", md_cell(&l.location));
            let _ = writeln!(
                out,
                "| Land cover type | {} | {} | Change (points) |",
                md_cell(&l.t1),
                md_cell(&l.t2)
            );
            out.push_str("|---|---:|---:|---:|\n");
            for c in rows {
                let _ = writeln!(
                    out,
                    "| {} | {}% | {}% | {} |",
                    c.title(),
                    format_tenths(report.t1.percent_tenths(c)),
                    format_tenths(report.t2.percent_tenths(c)),
                    signed(report.delta_tenths(c))
                );
            }
        }
        ReportFormat::Csv => {
            out.push_str("location,t1,t2,class,t1_percent,t2_percent,delta\n");
            let prefix = format!(
                "{},{},{}",
                csv_field(&l.location),
                csv_field(&l.t1),
                csv_field(&l.t2)
            );
            for c in rows {
                let _ = writeln!(
                    out,
                    "{prefix},{},{},{},{}",
                    c.key(),
                    format_tenths(report.t1.percent_tenths(c)),
                    format_tenths(report.t2.percent_tenths(c)),
                    signed(report.delta_tenths(c))
                );
            }
        }
    }
    out
}
