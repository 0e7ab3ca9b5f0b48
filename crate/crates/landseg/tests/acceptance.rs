//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Run with `cargo test -p landseg --test acceptance`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::*;
use landseg::archive::{read_archive, write_archive};
use landseg::raster::write_rgb;
use landseg::store::{load_checkpoint, save_checkpoint};
use landseg::training::{evaluate_archive, train_loop, LAST_CHECKPOINT, TRAIN_LOG};
use landseg_core::archive::{tile_scene, SamplePair};
use landseg_core::change::{render_report, tiled_inference, ChangeLabels, ChangeReport, RenderOptions, ReportFormat};
use landseg_core::metrics::{class_percentages, confusion, format_tenths, iou_per_class, mean_iou};
use landseg_core::model::{ModelConfig, SegNet};
use landseg_core::ops::*;
use landseg_core::split::split_dataset;
use landseg_core::synth::{synth_generate, ClassMix};
use landseg_core::tiling::{tile_grid, tile_offsets};
use landseg_core::train::{EvalOptions, TrainConfig};
use landseg_core::{LabelMask, LandCover, RgbImage, Shape, Tensor, NUM_CLASSES};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn grad_err(analytic: &[f64], f: impl Fn(&[f64]) -> f64, at: &[f64]) -> f64 {
    max_rel_err(analytic, &numeric_grad(at, f))
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut r = rng(100);

    for rate in [1, 2, 6] {
        for stride in [1, 2] {
            let input = Shape::new(1, 2, 14, 13);
            let p = ConvParams::new(2, 2, 3).with_dilation(rate).with_stride(stride);
            let x = uniform(input, &mut r);
            let w = uniform(p.weight_shape(), &mut r);
            let b = vec![0.3, -0.2];
            let probe = uniform(p.output_shape(input).unwrap(), &mut r);
            let g = conv2d_backward(&probe, &x, &w, &p).unwrap();
            let ex = grad_err(
                g.input.data(),
                |v| dot(&conv2d(&Tensor::from_vec(input, v.to_vec()).unwrap(), &w, &b, &p).unwrap(), &probe),
                x.data(),
            );
            let ew = grad_err(
                g.weight.data(),
                |v| dot(&conv2d(&x, &Tensor::from_vec(w.shape(), v.to_vec()).unwrap(), &b, &p).unwrap(), &probe),
                w.data(),
            );
            let eb = grad_err(&g.bias, |v| dot(&conv2d(&x, &w, v, &p).unwrap(), &probe), &b);
            worst.push((format!("conv2d r{rate} s{stride}"), ex.max(ew).max(eb)));
        }
    }

    let x = uniform(Shape::new(2, 3, 6, 6), &mut r);
    let probe = uniform(x.shape(), &mut r);
    let e = grad_err(
        relu_backward(&probe, &x).unwrap().data(),
        |v| dot(&relu(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap()), &probe),
        x.data(),
    );
    worst.push(("relu".into(), e));

    let pooled = maxpool2d(&x, 2, 2).unwrap();
    let probe = uniform(pooled.output.shape(), &mut r);
    let e = grad_err(
        maxpool2d_backward(&probe, &pooled.argmax, x.shape()).unwrap().data(),
        |v| dot(&maxpool2d(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap(), 2, 2).unwrap().output, &probe),
        x.data(),
    );
    worst.push(("maxpool2d".into(), e));

    let probe = uniform(Shape::new(2, 3, 1, 1), &mut r);
    let e = grad_err(
        global_avg_pool_backward(&probe, x.shape()).unwrap().data(),
        |v| dot(&global_avg_pool(&Tensor::from_vec(x.shape(), v.to_vec()).unwrap()).unwrap(), &probe),
        x.data(),
    );
    worst.push(("global_avg_pool".into(), e));

    for factor in [2, 4] {
        let small = uniform(Shape::new(1, 2, 3, 4), &mut r);
        let probe = uniform(Shape::new(1, 2, 3 * factor, 4 * factor), &mut r);
        let e = grad_err(
            bilinear_upsample_backward(&probe, small.shape()).unwrap().data(),
            |v| dot(&bilinear_upsample(&Tensor::from_vec(small.shape(), v.to_vec()).unwrap(), factor).unwrap(), &probe),
            small.data(),
        );
        worst.push((format!("bilinear_upsample x{factor}"), e));
    }

    let logits = uniform(Shape::new(2, 7, 3, 3), &mut r);
    let targets: Vec<u8> = (0..18).map(|i| (i * 5 % 7) as u8).collect();
    for ignore in [None, Some(6)] {
        let out = softmax_cross_entropy(&logits, &targets, ignore).unwrap();
        let e = grad_err(
            out.grad.data(),
            |v| softmax_cross_entropy(&Tensor::from_vec(logits.shape(), v.to_vec()).unwrap(), &targets, ignore).unwrap().loss,
            logits.data(),
        );
        worst.push((format!("softmax_cross_entropy ignore={ignore:?}"), e));
    }

    let mut net = SegNet::<f64>::new(ModelConfig {
        output_stride: 8,
        encoder_channels: vec![3, 4, 4, 4],
        aspp_rates: vec![2, 3],
        aspp_out_channels: 3,
        decoder_low_level_channels: 2,
        seed: 5,
        ..ModelConfig::default()
    })
    .unwrap();
    // keep pre-activations off the ReLU kink at zero
    for layer in net.layers_mut() {
        layer.bias.iter_mut().for_each(|b| *b = r.gen_range(-0.5..0.5));
    }
    let image = uniform(Shape::new(1, 3, 16, 16), &mut r);
    let targets: Vec<u8> = (0..256).map(|i| ((i * 3 + i / 16) % 7) as u8).collect();
    let (logits, trace) = net.forward_traced(&image).unwrap();
    let out = softmax_cross_entropy(&logits, &targets, None).unwrap();
    let analytic = net.backward(&trace, &out.grad).unwrap().flatten();
    let e = grad_err(
        &analytic,
        |v| {
            let mut probe = net.clone();
            for (i, &p) in v.iter().enumerate() {
                *probe.parameter_mut(i).unwrap() = p;
            }
            softmax_cross_entropy(&probe.forward(&image).unwrap(), &targets, None).unwrap().loss
        },
        &net.parameters(),
    );
    worst.push(("end-to-end model loss".into(), e));

    let elapsed = start.elapsed();
    let (name, max) = worst.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    check(max < FD_TOL, || format!("{name}: relative error {max:.3e}"))?;
    check(elapsed < Duration::from_secs(30), || format!("took {elapsed:.1?}"))?;
    Ok(format!("{} checks, max rel err {max:.1e} ({name}), {elapsed:.1?}", worst.len()))
}

fn zero_inserted(w: &Tensor<f64>, rate: usize) -> Tensor<f64> {
    let s = w.shape();
    let k = s.h + (s.h - 1) * (rate - 1);
    Tensor::from_fn(Shape::new(s.n, s.c, k, k), |o, i, y, x| {
        if y % rate == 0 && x % rate == 0 {
            w.at(o, i, y / rate, x / rate)
        } else {
            0.0
        }
    })
}

fn dilation() -> Outcome {
    for (k, r, e) in [(3, 1, 3), (3, 2, 5), (3, 6, 13)] {
        check(effective_extent(k, r) == e, || format!("extent({k}, {r}) = {}", effective_extent(k, r)))?;
    }
    let mut rg = rng(200);
    let mut worst = 0f64;
    for case in 0..100 {
        let k = rg.gen_range(1..=4);
        let rate = rg.gen_range(1..=6);
        let (h, w) = (rg.gen_range(4..=20), rg.gen_range(4..=20));
        let p = ConvParams::new(2, 2, k).with_dilation(rate).with_stride(rg.gen_range(1..=2));
        let dense = ConvParams::new(2, 2, p.extent()).with_stride(p.stride);
        let x = uniform(Shape::new(1, 2, h, w), &mut rg);
        let wt = uniform(p.weight_shape(), &mut rg);
        let a = conv2d(&x, &wt, &[0.1, -0.1], &p).unwrap();
        let b = conv2d(&x, &zero_inserted(&wt, rate), &[0.1, -0.1], &dense).unwrap();
        check(a.shape() == b.shape(), || format!("case {case}: shapes differ"))?;
        worst = a.data().iter().zip(b.data()).map(|(u, v)| (u - v).abs()).fold(worst, f64::max);
    }
    check(worst <= 1e-12, || format!("max abs difference {worst:e}"))?;
    Ok(format!("100 cases, max abs difference {worst:.1e}"))
}

fn random_mask(rg: &mut impl Rng, w: usize, h: usize) -> LabelMask {
    LabelMask::new(w, h, (0..w * h).map(|_| rg.gen_range(0..7)).collect()).unwrap()
}

fn iou() -> Outcome {
    let mut rg = rng(300);
    for case in 0..1000 {
        let pred = random_mask(&mut rg, 16, 16);
        let gt = random_mask(&mut rg, 16, 16);
        let got = iou_per_class(&confusion(&pred, &gt).unwrap());
        for c in 0..NUM_CLASSES as u8 {
            let p: HashSet<usize> = (0..256).filter(|&i| pred.classes()[i] == c).collect();
            let g: HashSet<usize> = (0..256).filter(|&i| gt.classes()[i] == c).collect();
            let union = p.union(&g).count();
            let want = (union > 0).then(|| p.intersection(&g).count() as f64 / union as f64);
            check(got[c as usize] == want, || format!("case {case}, class {c}: {:?} vs {want:?}", got[c as usize]))?;
        }
    }
    let m = random_mask(&mut rg, 16, 16);
    let perfect = mean_iou(&iou_per_class(&confusion(&m, &m).unwrap())).unwrap();
    check(perfect == 1.0, || format!("perfect prediction gives {perfect}"))?;
    Ok("1000 pairs exact, perfect prediction mIoU = 1.0".into())
}

fn mask_of(counts: &[(LandCover, usize)]) -> LabelMask {
    let v: Vec<u8> = counts.iter().flat_map(|&(c, n)| std::iter::repeat_n(c as u8, n)).collect();
    LabelMask::new(25, v.len() / 25, v).unwrap()
}

fn report_fixtures() -> Outcome {
    use LandCover::*;
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let sites = [
        ("morgan_hill", "Morgan Hill area, California", "November 2004", "May 2018", Agriculture, Urban, [(528, 472), (62, 938)]),
        ("star", "Star area, Idaho", "June 2003", "July 2018", Agriculture, Urban, [(986, 14), (336, 664)]),
        ("orlando", "Orlando area, Florida", "December 2004", "November 2011", Forest, Urban, [(1000, 0), (0, 1000)]),
    ];
    let published = ["52.8/47.2", "6.2/93.8", "98.6/1.4", "33.6/66.4", "100.0/0.0", "0.0/100.0"];
    let mut i = 0;
    for (file, location, t1, t2, a, b, counts) in sites {
        let masks: Vec<_> = counts.iter().map(|&(na, nb)| mask_of(&[(a, na), (b, nb)])).collect();
        for m in &masks {
            let p = class_percentages(m).unwrap();
            let shown = format!("{}/{}", format_tenths(p.percent_tenths(a)), format_tenths(p.percent_tenths(b)));
            check(shown == published[i], || format!("{file}: {shown} != {}", published[i]))?;
            i += 1;
        }
        let report = ChangeReport::from_masks(ChangeLabels::new(location, t1, t2), &masks[0], &masks[1]).unwrap();
        check(report.deltas.iter().sum::<f64>().abs() < 1e-9, || format!("{file}: deltas do not cancel"))?;
        for (ext, format, hide_absent) in [("md", ReportFormat::Markdown, false), ("csv", ReportFormat::Csv, true)] {
            let rendered = render_report(&report, format, RenderOptions { hide_absent });
            let want = std::fs::read_to_string(golden.join(format!("{file}.{ext}"))).map_err(|e| e.to_string())?;
            check(rendered == want, || format!("{file}.{ext} differs:\n{rendered}"))?;
        }
    }
    Ok("6 masks match the published percentages, 6 golden reports identical".into())
}

fn tiling() -> Outcome {
    let offsets = tile_offsets(2448, 512).map_err(|e| e.to_string())?;
    check(offsets == [0, 484, 968, 1452, 1936], || format!("offsets {offsets:?}"))?;
    let grid = tile_grid(2448, 2448, 512).map_err(|e| e.to_string())?;
    check(grid.len() == 25, || format!("{} tiles", grid.len()))?;
    let mut hits = vec![0u8; 2448 * 2448];
    for &(x0, y0) in &grid {
        for y in y0..y0 + 512 {
            hits[y * 2448 + x0..y * 2448 + x0 + 512].iter_mut().for_each(|h| *h += 1);
        }
    }
    let missed = hits.iter().filter(|&&h| h == 0).count();
    check(missed == 0, || format!("{missed} pixels uncovered"))?;
    let (train, eval) = split_dataset((0..803).collect::<Vec<u32>>(), 0.9, 7).map_err(|e| e.to_string())?;
    check((train.len(), eval.len()) == (722, 81), || format!("split {}/{}", train.len(), eval.len()))?;
    Ok("25 tiles at {0,484,968,1452,1936}, every pixel covered, 803 -> 722/81".into())
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenes = synth_generate(42, 64, 8, &ClassMix::default()).map_err(|e| e.to_string())?;
    let pairs: Vec<SamplePair> = scenes
        .iter()
        .enumerate()
        .flat_map(|(i, (img, mask))| tile_scene(img, mask, 64, &format!("scene_{i:03}")).unwrap())
        .collect();
    let archive = dir.path().join("train.lsar");
    write_archive(&archive, &pairs, 64).map_err(|e| e.to_string())?;
    let config = TrainConfig::default();
    let out = train_loop(&archive, &archive, &ModelConfig::default(), &config, dir.path()).map_err(|e| e.to_string())?;
    let report = evaluate_archive(&out.checkpoint, &archive, EvalOptions::default()).map_err(|e| e.to_string())?;
    let log = std::fs::read_to_string(dir.path().join(TRAIN_LOG)).map_err(|e| e.to_string())?;
    let losses: Vec<f64> = log.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    let (first, last) = (losses[0], *losses.last().unwrap());
    let elapsed = start.elapsed();
    let summary = format!(
        "{} steps, accuracy {:.3}, mIoU {:.3}, loss {first:.3} -> {last:.3}, {elapsed:.1?}",
        losses.len(),
        report.pixel_accuracy,
        report.miou
    );
    check(losses.len() == 500, || format!("{summary}: wrong step count"))?;
    check(report.pixel_accuracy >= 0.95, || format!("{summary}: accuracy too low"))?;
    check(report.miou >= 0.90, || format!("{summary}: mIoU too low"))?;
    check(last < 0.1 * first, || format!("{summary}: loss did not fall tenfold"))?;
    check(elapsed < Duration::from_secs(300), || format!("{summary}: too slow"))?;
    Ok(summary)
}

fn serialization() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let mut rg = rng(700);
    for case in 0..50 {
        let config = ModelConfig {
            output_stride: [4, 8, 16][case % 3],
            encoder_channels: vec![rg.gen_range(2..6); 3 + case % 3 + 1],
            aspp_rates: vec![1, rg.gen_range(2..5)],
            aspp_out_channels: rg.gen_range(2..6),
            decoder_low_level_channels: rg.gen_range(1..4),
            seed: rg.gen(),
            ..ModelConfig::default()
        };
        let net = SegNet::<f32>::new(config).map_err(|e| format!("case {case}: {e}"))?;
        let (a, b) = (d.join("a.lseg"), d.join("b.lseg"));
        save_checkpoint(&net.to_checkpoint(rg.gen_range(0..10_000)), &a).map_err(|e| e.to_string())?;
        let loaded = load_checkpoint(&a).map_err(|e| e.to_string())?;
        save_checkpoint(&loaded, &b).map_err(|e| e.to_string())?;
        check(std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap(), || format!("checkpoint case {case} not byte-identical"))?;
        let image = uniform(Shape::new(1, 3, 16, 16), &mut rg).cast::<f32>();
        let before = net.forward(&image).unwrap();
        let after = SegNet::<f32>::from_checkpoint(&loaded).unwrap().forward(&image).unwrap();
        let same = before.data().iter().zip(after.data()).all(|(x, y)| x.to_bits() == y.to_bits());
        check(same, || format!("case {case}: inference changed after reload"))?;

        let side = rg.gen_range(1..12);
        let pairs: Vec<SamplePair> = (0..rg.gen_range(0..5))
            .map(|i| {
                let img = RgbImage::from_raw(side, side, (0..side * side * 3).map(|_| rg.gen()).collect()).unwrap();
                SamplePair::new(img, random_mask(&mut rg, side, side), format!("s{case}_{i}"), (rg.gen(), rg.gen())).unwrap()
            })
            .collect();
        let (a, b) = (d.join("a.lsar"), d.join("b.lsar"));
        write_archive(&a, &pairs, side).map_err(|e| e.to_string())?;
        let (_, back) = read_archive(&a).map_err(|e| e.to_string())?;
        check(back == pairs, || format!("archive case {case} lost data"))?;
        write_archive(&b, &back, side).map_err(|e| e.to_string())?;
        check(std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap(), || format!("archive case {case} not byte-identical"))?;
    }
    Ok("50 checkpoints and 50 archives byte-identical, inference bit-identical".into())
}

fn change_identity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let net = SegNet::<f32>::new(ModelConfig { seed: 3, ..ModelConfig::default() }).unwrap();
    save_checkpoint(&net.to_checkpoint(0), d.join(LAST_CHECKPOINT)).map_err(|e| e.to_string())?;
    let mut rg = rng(800);
    let image = RgbImage::from_raw(96, 64, (0..96 * 64 * 3).map(|_| rg.gen()).collect()).unwrap();
    write_rgb(d.join("scene.png"), &image).map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_landseg"))
        .current_dir(d)
        .args(["--log-level", "warn", "change", "scene.png", "scene.png", "--checkpoint", LAST_CHECKPOINT])
        .args(["--tile", "32", "--format", "csv", "--mask-dir", "masks"])
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let csv = String::from_utf8(out.stdout).unwrap();
    let deltas: Vec<&str> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    check(deltas == ["+0.0"; 7], || format!("deltas {deltas:?}"))?;

    let tiled = tiled_inference(&image, &net, 32).map_err(|e| e.to_string())?;
    for (x0, y0) in tile_grid(96, 64, 32).unwrap() {
        let tile = image.crop(x0, y0, 32, 32).unwrap();
        let alone = net.predict(&tile.to_tensor()).unwrap().remove(0);
        check(tiled.crop(x0, y0, 32, 32).unwrap() == alone, || format!("tile at ({x0}, {y0}) differs"))?;
    }
    Ok("self-change deltas all +0.0, 6 stitched tiles bit-exact".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("gradient suite", gradients),
        ("dilation oracle", dilation),
        ("IoU oracle", iou),
        ("land cover report fixtures", report_fixtures),
        ("tiling and split", tiling),
        ("overfit run", overfit),
        ("serialization", serialization),
        ("change-detection identity", change_identity),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS  {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {}. {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
