mod common;

use common::rng;
use landseg_core::change::*;
use landseg_core::model::{ModelConfig, SegNet};
use landseg_core::{Error, LandCover, RgbImage};
use rand::Rng;

fn net() -> SegNet<f32> {
    SegNet::new(ModelConfig {
        output_stride: 8,
        encoder_channels: vec![4, 6, 6, 6],
        aspp_rates: vec![2, 3],
        aspp_out_channels: 4,
        decoder_low_level_channels: 3,
        seed: 21,
        ..ModelConfig::default()
    })
    .unwrap()
}

fn noise(w: usize, h: usize, seed: u64) -> RgbImage {
    let mut r = rng(seed);
    RgbImage::from_raw(w, h, (0..w * h * 3).map(|_| r.gen()).collect()).unwrap()
}

#[test]
fn single_tile_equals_direct_prediction() {
    let (net, img) = (net(), noise(32, 32, 1));
    let direct = net.predict(&img.to_tensor()).unwrap().remove(0);
    assert_eq!(tiled_inference(&img, &net, 32).unwrap(), direct);
}

#[test]
fn exact_multiple_equals_stitched_tiles() {
    let (net, img) = (net(), noise(48, 32, 2));
    let tiled = tiled_inference(&img, &net, 16).unwrap();
    for ty in 0..2 {
        for tx in 0..3 {
            let crop = img.crop(tx * 16, ty * 16, 16, 16).unwrap();
            let want = net.predict(&crop.to_tensor()).unwrap().remove(0);
            assert_eq!(tiled.crop(tx * 16, ty * 16, 16, 16).unwrap(), want, "tile ({tx}, {ty})");
        }
    }
}

#[test]
fn spatially_constant_logits_survive_averaging() {
    // Only the classifier bias is non-zero, so every pixel of every tile has
    // the same logits regardless of border padding.
    let mut net = net();
    for layer in net.layers_mut() {
        layer.weight.data_mut().fill(0.0);
        layer.bias.fill(0.0);
    }
    net.layer_mut("decoder.classifier").unwrap().bias[LandCover::Water.index()] = 1.0;
    let mask = tiled_inference(&noise(40, 40, 3), &net, 16).unwrap();
    assert!(mask.classes().iter().all(|&c| c == LandCover::Water as u8));
}

#[test]
fn overlaps_take_the_mean_of_tile_logits() {
    let (net, img) = (net(), noise(40, 24, 11));
    let (w, h, tile) = (40, 24, 16);
    let mut sum = vec![[0f32; 7]; w * h];
    let mut hits = vec![0u32; w * h];
    for &y0 in &[0, 8] {
        for &x0 in &[0, 12, 24] {
            let logits = net.forward(&img.crop(x0, y0, tile, tile).unwrap().to_tensor()).unwrap();
            for y in 0..tile {
                for x in 0..tile {
                    let p = (y0 + y) * w + x0 + x;
                    hits[p] += 1;
                    for (c, acc) in sum[p].iter_mut().enumerate() {
                        *acc += logits.at(0, c, y, x);
                    }
                }
            }
        }
    }
    let want: Vec<u8> = sum
        .iter()
        .zip(&hits)
        .map(|(s, &n)| {
            let mean = s.map(|v| v / n as f32);
            (1..7).fold(0, |best, c| if mean[c] > mean[best] { c } else { best }) as u8
        })
        .collect();
    assert_eq!(tiled_inference(&img, &net, tile).unwrap().classes(), &want[..]);
}

#[test]
fn undersized_images_are_rejected() {
    let e = tiled_inference(&noise(20, 40, 3), &net(), 32).unwrap_err();
    assert!(matches!(e, Error::Parameter(ref m) if m.contains("resize or pad")), "{e}");
}

#[test]
fn self_comparison_has_no_change() {
    let (net, img) = (net(), noise(40, 24, 4));
    let out = detect_change(&img, &img, &net, ChangeLabels::default(), 16).unwrap();
    assert!(out.report.deltas.iter().all(|&d| d == 0.0));
    assert_eq!(out.mask_t1, out.mask_t2);
    let md = render_report(&out.report, ReportFormat::Markdown, RenderOptions::default());
    assert_eq!(md.matches("| +0.0 |").count(), 7);
}

#[test]
fn images_of_different_size_compare() {
    let net = net();
    let out = detect_change(&noise(16, 16, 5), &noise(48, 32, 6), &net, ChangeLabels::default(), 16).unwrap();
    assert!(out.report.deltas.iter().sum::<f64>().abs() < 1e-9);
    assert_eq!(out.mask_t2.width(), 48);
}

#[test]
fn failures_name_the_timestamp() {
    let labels = ChangeLabels::new("here", "May 2010", "May 2020");
    let e = detect_change(&noise(32, 32, 7), &noise(8, 8, 8), &net(), labels, 16).unwrap_err();
    let Error::Stage { stage, .. } = &e else { panic!("{e:?}") };
    assert!(stage.contains("T2") && stage.contains("May 2020"), "{stage}");
}

#[test]
fn renderings_agree_on_numbers() {
    let (net, a, b) = (net(), noise(32, 32, 9), noise(32, 32, 10));
    let out = detect_change(&a, &b, &net, ChangeLabels::new("x", "a", "b"), 16).unwrap();
    let md = render_report(&out.report, ReportFormat::Markdown, RenderOptions::default());
    let csv = render_report(&out.report, ReportFormat::Csv, RenderOptions::default());
    let md_rows: Vec<Vec<String>> = md
        .lines()
        .skip(4)
        .map(|l| l.split('|').map(|c| c.trim().trim_end_matches('%').to_string()).filter(|c| !c.is_empty()).skip(1).collect())
        .collect();
    let csv_rows: Vec<Vec<String>> = csv.lines().skip(1).map(|l| l.split(',').skip(4).map(String::from).collect()).collect();
    assert_eq!(md_rows, csv_rows);
    for (row, class) in csv_rows.iter().zip(LandCover::ALL) {
        let t1: f64 = row[0].parse().unwrap();
        assert!((t1 / 100.0 - out.report.t1.fraction(class)).abs() <= 0.0005 + 1e-12);
    }
}
