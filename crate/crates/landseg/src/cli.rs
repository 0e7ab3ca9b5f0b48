//! The `landseg` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use landseg_core::archive::tile_scene;
use landseg_core::change::{detect_change, render_report, tiled_inference, ChangeLabels, RenderOptions, ReportFormat};
use landseg_core::metrics::iou_per_class;
use landseg_core::model::layer_summary;
use landseg_core::split::split_dataset;
use landseg_core::synth::{synth_generate, ClassMix};
use landseg_core::tiling::DEFAULT_TILE_SIZE;
use landseg_core::train::{EvalOptions, StepDecay, TrainConfig};
use landseg_core::{ClassPalette, LandCover, SegNet};

use crate::archive::ArchiveWriter;
use crate::config::FileConfig;
use crate::error::{Error, Result};
use crate::raster::{read_mask, read_rgb, write_mask, write_rgb};
use crate::store::{load_checkpoint, write_atomic};
use crate::training::{evaluate_archive, train_loop};

#[derive(Debug, Parser)]
#[command(name = "landseg", version, about = "Land-cover segmentation of satellite imagery and change detection")]
pub struct Cli {
    /// Seed for every random choice (model init, shuffling, splits, synthetic data).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,

    /// Settings file with model defaults and mask palette overrides.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tile paired scenes and masks into train and eval archives.
    Prepare(PrepareArgs),
    /// Write synthetic scenes and masks in the layout `prepare` expects.
    Synth(SynthArgs),
    /// Train a model from scratch.
    Train(TrainArgs),
    /// Score a checkpoint on an archive.
    Eval(EvalArgs),
    /// Segment one image into a palette-coloured mask.
    Infer(InferArgs),
    /// Compare the land cover of two images of the same place.
    Change(ChangeArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub masks: PathBuf,
    /// Output prefix; writes PREFIX.train.lsar and PREFIX.eval.lsar.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TILE_SIZE)]
    pub tile: usize,
    /// Fraction of scenes used for training.
    #[arg(long, default_value_t = landseg_core::split::DEFAULT_TRAIN_FRACTION)]
    pub split: f64,
    /// Map off-palette mask colours to `unknown` instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub scenes: usize,
    /// Side length in pixels, a multiple of 16.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Target class shares, e.g. `forest:50,urban:30,water:20`.
    #[arg(long)]
    pub mix: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub eval: PathBuf,
    /// Directory for checkpoints and the loss log.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub steps: u64,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    /// Defaults to 100, or the step count if smaller.
    #[arg(long)]
    pub eval_interval: Option<u64>,
    /// Leave `unknown` pixels out of the loss.
    #[arg(long)]
    pub ignore_unknown: bool,
    /// Multiply the learning rate by --decay-factor every N steps.
    #[arg(long, value_name = "N")]
    pub decay_every: Option<u64>,
    #[arg(long, default_value_t = 0.1, requires = "decay_every")]
    pub decay_factor: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub archive: PathBuf,
    /// Leave `unknown` pixels out of the reported loss.
    #[arg(long)]
    pub ignore_unknown: bool,
    /// Leave the `unknown` class out of the mIoU average.
    #[arg(long)]
    pub exclude_unknown: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Output mask PNG.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TILE_SIZE)]
    pub tile: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Markdown,
    Csv,
}

#[derive(Debug, Args)]
pub struct ChangeArgs {
    /// Earlier image.
    pub t1: PathBuf,
    /// Later image of the same place.
    pub t2: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "Land cover change")]
    pub location: String,
    /// Label for the earlier image; defaults to its file stem.
    #[arg(long)]
    pub t1_label: Option<String>,
    #[arg(long)]
    pub t2_label: Option<String>,
    #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
    pub format: FormatArg,
    /// Omit classes absent from both images.
    #[arg(long)]
    pub hide_absent: bool,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for t1_mask.png and t2_mask.png.
    #[arg(long, default_value = ".")]
    pub mask_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TILE_SIZE)]
    pub tile: usize,
}

/// Parses `args` (program name first), runs the command and maps the outcome
/// to an exit status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .try_init()
        .ok();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            ExitCode::from(e.exit_code())
        }
    }
}

fn error_chain(e: &dyn std::error::Error) -> String {
    let mut msg = e.to_string();
    let mut cur = e.source();
    while let Some(s) = cur {
        let part = s.to_string();
        if !msg.contains(&part) {
            msg.push_str(": ");
            msg.push_str(&part);
        }
        cur = s.source();
    }
    msg
}

/// Key-value listing of the settings a command will run with.
#[derive(Default)]
struct Resolved(BTreeMap<String, String>);

impl Resolved {
    fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.0.insert(key.to_string(), value.to_string());
        self
    }

    fn set_block(&mut self, prefix: &str, text: &str) -> &mut Self {
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.set(&format!("{prefix}.{}", k.trim()), v.trim());
            }
        }
        self
    }

    fn palette(&mut self, palette: &ClassPalette) -> &mut Self {
        for class in LandCover::ALL {
            let [r, g, b] = palette.color(class);
            self.set(&format!("palette.{}", class.key()), format!("{r} {g} {b}"));
        }
        self
    }

    fn print(&self, command: &str) {
        eprintln!("landseg {command}, resolved configuration:");
        for (k, v) in &self.0 {
            eprintln!("  {k} = {v}");
        }
    }
}

fn path_with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(cli: &Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.unwrap_or(file.model.seed);
    let mut resolved = Resolved::default();
    if matches!(cli.command, Command::Prepare(_) | Command::Synth(_) | Command::Train(_)) {
        resolved.set("seed", seed);
    }
    if let Some(p) = &cli.config {
        resolved.set("config", p.display());
    }
    match &cli.command {
        Command::Prepare(a) => prepare(a, seed, &file, resolved),
        Command::Synth(a) => synth(a, seed, &file, resolved),
        Command::Train(a) => train(a, seed, &file, resolved),
        Command::Eval(a) => eval(a, resolved),
        Command::Infer(a) => infer(a, &file, resolved),
        Command::Change(a) => change(a, &file, resolved),
    }
}

const RASTER_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Raster files in `dir` keyed by file stem with `strip` removed from the end.
fn list_rasters(dir: &Path, strip: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(Error::io(dir))? {
        let path = entry.map_err(Error::io(dir))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !path.is_file() || !ext.is_some_and(|e| RASTER_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let key = stem.strip_suffix(strip).unwrap_or(stem).to_string();
        if let Some(prev) = out.insert(key.clone(), path.clone()) {
            return Err(Error::Usage(format!(
                "{} and {} both map to scene `{key}`",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

fn prepare(a: &PrepareArgs, seed: u64, file: &FileConfig, mut resolved: Resolved) -> Result<()> {
    resolved
        .set("images", a.images.display())
        .set("masks", a.masks.display())
        .set("out", a.out.display())
        .set("tile", a.tile)
        .set("split", a.split)
        .set("lenient", a.lenient)
        .palette(&file.palette);
    resolved.print("prepare");

    let images = list_rasters(&a.images, "_sat")?;
    let masks = list_rasters(&a.masks, "_mask")?;
    if images.is_empty() {
        return Err(Error::Usage(format!("no images found in {}", a.images.display())));
    }
    let mut unpaired: Vec<String> = images
        .iter()
        .filter(|(k, _)| !masks.contains_key(*k))
        .map(|(_, p)| format!("  image without mask: {}", p.display()))
        .collect();
    unpaired.extend(
        masks
            .iter()
            .filter(|(k, _)| !images.contains_key(*k))
            .map(|(_, p)| format!("  mask without image: {}", p.display())),
    );
    if !unpaired.is_empty() {
        return Err(Error::Usage(format!("unpaired files:\n{}", unpaired.join("\n"))));
    }

    let scenes: Vec<&String> = images.keys().collect();
    let (train, eval) = if scenes.len() == 1 {
        log::warn!("only one scene; it goes entirely to the training archive");
        (scenes, Vec::new())
    } else {
        split_dataset(scenes, a.split, seed)?
    };

    for (name, keys) in [("train", &train), ("eval", &eval)] {
        let path = path_with_suffix(&a.out, &format!(".{name}.lsar"));
        let mut writer = ArchiveWriter::create(&path, a.tile)?;
        for key in keys.iter() {
            let image_path = &images[*key];
            let mask_path = &masks[*key];
            let image = read_rgb(image_path)?;
            let decoded = read_mask(mask_path, &file.palette, !a.lenient)?;
            if decoded.off_palette > 0 {
                log::warn!(
                    "{}: {} off-palette pixels mapped to unknown",
                    mask_path.display(),
                    decoded.off_palette
                );
            }
            let tiles = tile_scene(&image, &decoded.mask, a.tile, key).map_err(Error::file(image_path))?;
            for t in &tiles {
                writer.push(t)?;
            }
        }
        println!("{name}: {} scenes, {} tiles -> {}", keys.len(), writer.count(), path.display());
        writer.finish()?;
    }
    Ok(())
}

fn synth(a: &SynthArgs, seed: u64, file: &FileConfig, mut resolved: Resolved) -> Result<()> {
    let mix = match &a.mix {
        Some(spec) => ClassMix::parse(spec)?,
        None => ClassMix::default(),
    };
    let shares = LandCover::ALL
        .iter()
        .filter(|c| mix.share(**c) > 0.0)
        .map(|c| format!("{}:{}", c.key(), mix.share(*c) * 100.0))
        .collect::<Vec<_>>()
        .join(",");
    resolved
        .set("out", a.out.display())
        .set("scenes", a.scenes)
        .set("size", a.size)
        .set("mix", shares)
        .palette(&file.palette);
    resolved.print("synth");

    let scenes = synth_generate(seed, a.size, a.scenes, &mix)?;
    let (img_dir, mask_dir) = (a.out.join("images"), a.out.join("masks"));
    for d in [&img_dir, &mask_dir] {
        std::fs::create_dir_all(d).map_err(Error::io(d))?;
    }
    for (i, (image, mask)) in scenes.iter().enumerate() {
        let name = format!("scene_{i:03}.png");
        write_rgb(img_dir.join(&name), image)?;
        write_mask(mask_dir.join(&name), mask, &file.palette)?;
    }
    println!("wrote {} scenes of {}x{} to {}", scenes.len(), a.size, a.size, a.out.display());
    Ok(())
}

fn train(a: &TrainArgs, seed: u64, file: &FileConfig, mut resolved: Resolved) -> Result<()> {
    let mut model = file.model.clone();
    model.seed = seed;
    let config = TrainConfig {
        learning_rate: a.lr,
        momentum: a.momentum,
        batch_size: a.batch_size,
        max_steps: a.steps,
        eval_interval: a.eval_interval.unwrap_or(a.steps.clamp(1, 100)),
        seed,
        ignore_unknown_in_loss: a.ignore_unknown,
        lr_decay: a.decay_every.map(|every| StepDecay {
            every,
            factor: a.decay_factor,
        }),
    };
    config.validate().map_err(|e| Error::Usage(e.to_string()))?;
    model.validate().map_err(|e| Error::Usage(e.to_string()))?;
    resolved
        .set("train", a.train.display())
        .set("eval", a.eval.display())
        .set("out", a.out.display())
        .set("steps", config.max_steps)
        .set("lr", config.learning_rate)
        .set("momentum", config.momentum)
        .set("batch_size", config.batch_size)
        .set("eval_interval", config.eval_interval)
        .set("ignore_unknown", config.ignore_unknown_in_loss)
        .set(
            "lr_decay",
            config.lr_decay.map_or("none".to_string(), |d| format!("x{} every {} steps", d.factor, d.every)),
        )
        .set_block("model", &model.to_text());
    resolved.print("train");
    log::debug!("layers:\n{}", layer_summary(&model));

    let outcome = train_loop(&a.train, &a.eval, &model, &config, &a.out)?;
    println!(
        "trained {} steps, {} parameters",
        outcome.checkpoint.training_step,
        SegNet::<f32>::new(model)?.num_parameters()
    );
    if let Some(loss) = outcome.final_loss {
        println!("final loss {loss:.4}");
    }
    if let Some(best) = outcome.best_miou {
        println!("best eval mIoU {best:.3}");
    }
    println!("checkpoints in {}", a.out.display());
    Ok(())
}

fn eval(a: &EvalArgs, mut resolved: Resolved) -> Result<()> {
    let checkpoint = load_checkpoint(&a.checkpoint)?;
    let options = EvalOptions {
        ignore_unknown_in_loss: a.ignore_unknown,
        exclude_unknown_from_miou: a.exclude_unknown,
    };
    resolved
        .set("checkpoint", a.checkpoint.display())
        .set("archive", a.archive.display())
        .set("ignore_unknown", a.ignore_unknown)
        .set("exclude_unknown", a.exclude_unknown)
        .set_block("model", &checkpoint.config.to_text());
    resolved.print("eval");

    let report = evaluate_archive(&checkpoint, &a.archive, options)?;
    debug_assert_eq!(report.per_class, iou_per_class(&report.confusion));
    println!("{:<12} {:>6}", "class", "IoU");
    for class in LandCover::ALL {
        let iou = report.per_class[class.index()].map_or("-".to_string(), |v| format!("{v:.3}"));
        println!("{:<12} {iou:>6}", class.key());
    }
    println!("tiles {}", report.samples);
    println!("pixel accuracy {:.3}", report.pixel_accuracy);
    println!("loss {:.4}", report.loss);
    println!("mIoU {:.3}", report.miou);
    Ok(())
}

fn infer(a: &InferArgs, file: &FileConfig, mut resolved: Resolved) -> Result<()> {
    let checkpoint = load_checkpoint(&a.checkpoint)?;
    resolved
        .set("checkpoint", a.checkpoint.display())
        .set("image", a.image.display())
        .set("out", a.out.display())
        .set("tile", a.tile)
        .set_block("model", &checkpoint.config.to_text())
        .palette(&file.palette);
    resolved.print("infer");

    let net = SegNet::<f32>::from_checkpoint(&checkpoint).map_err(Error::file(&a.checkpoint))?;
    let image = read_rgb(&a.image)?;
    let mask = tiled_inference(&image, &net, a.tile).map_err(Error::file(&a.image))?;
    write_mask(&a.out, &mask, &file.palette)?;
    println!("{}x{} mask -> {}", mask.width(), mask.height(), a.out.display());
    Ok(())
}

fn stem_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn change(a: &ChangeArgs, file: &FileConfig, mut resolved: Resolved) -> Result<()> {
    let checkpoint = load_checkpoint(&a.checkpoint)?;
    let labels = ChangeLabels::new(
        a.location.clone(),
        a.t1_label.clone().unwrap_or_else(|| stem_label(&a.t1)),
        a.t2_label.clone().unwrap_or_else(|| stem_label(&a.t2)),
    );
    let format = match a.format {
        FormatArg::Markdown => ReportFormat::Markdown,
        FormatArg::Csv => ReportFormat::Csv,
    };
    resolved
        .set("checkpoint", a.checkpoint.display())
        .set("t1", a.t1.display())
        .set("t2", a.t2.display())
        .set("location", &labels.location)
        .set("t1_label", &labels.t1)
        .set("t2_label", &labels.t2)
        .set("format", format!("{format:?}").to_lowercase())
        .set("hide_absent", a.hide_absent)
        .set("mask_dir", a.mask_dir.display())
        .set("tile", a.tile)
        .set_block("model", &checkpoint.config.to_text())
        .palette(&file.palette);
    if let Some(out) = &a.out {
        resolved.set("out", out.display());
    }
    resolved.print("change");

    let net = SegNet::<f32>::from_checkpoint(&checkpoint).map_err(Error::file(&a.checkpoint))?;
    let image_t1 = read_rgb(&a.t1)?;
    let image_t2 = read_rgb(&a.t2)?;
    let outcome = detect_change(&image_t1, &image_t2, &net, labels, a.tile)?;

    std::fs::create_dir_all(&a.mask_dir).map_err(Error::io(&a.mask_dir))?;
    write_mask(a.mask_dir.join("t1_mask.png"), &outcome.mask_t1, &file.palette)?;
    write_mask(a.mask_dir.join("t2_mask.png"), &outcome.mask_t2, &file.palette)?;

    let text = render_report(
        &outcome.report,
        format,
        RenderOptions {
            hide_absent: a.hide_absent,
        },
    );
    match &a.out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}
