//! Training and evaluation over archives on disk.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use landseg_core::checkpoint::ModelCheckpoint;
use landseg_core::train::{train_step, EpochSampler, EvalOptions, EvalReport, Evaluator, TrainConfig, TrainState};
use landseg_core::{ModelConfig, SegNet};

use crate::archive::{open_archive, read_archive};
use crate::error::{Error, Result};
use crate::store::save_checkpoint;

pub const LAST_CHECKPOINT: &str = "last.lseg";
pub const BEST_CHECKPOINT: &str = "best.lseg";
pub const TRAIN_LOG: &str = "train_log.csv";

/// Scores a checkpoint on an archive, streaming one record at a time.
pub fn evaluate_archive(
    checkpoint: &ModelCheckpoint,
    archive: impl AsRef<Path>,
    options: EvalOptions,
) -> Result<EvalReport> {
    let net = SegNet::<f32>::from_checkpoint(checkpoint)?;
    evaluate_net(&net, archive.as_ref(), options)
}

fn evaluate_net(net: &SegNet<f32>, archive: &Path, options: EvalOptions) -> Result<EvalReport> {
    let mut ev = Evaluator::new(net, options);
    for pair in open_archive(archive)? {
        ev.add(&pair?)?;
    }
    ev.finish().map_err(Error::file(archive))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub final_loss: Option<f64>,
    pub last_eval: Option<EvalReport>,
    pub best_miou: Option<f64>,
}

/// Trains from scratch. Every `eval_interval` steps, and after the last
/// step, the eval archive is scored and `last.lseg` rewritten; `best.lseg`
/// follows the highest eval mIoU. An empty eval archive disables scoring.
pub fn train_loop(
    train_archive: impl AsRef<Path>,
    eval_archive: impl AsRef<Path>,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    out_dir: impl AsRef<Path>,
) -> Result<TrainOutcome> {
    let (train_archive, eval_archive, out_dir) = (train_archive.as_ref(), eval_archive.as_ref(), out_dir.as_ref());
    train_config.validate()?;
    let (_, samples) = read_archive(train_archive)?;
    if samples.is_empty() {
        return Err(Error::Usage(format!("{}: training archive is empty", train_archive.display())));
    }
    let eval_count = open_archive(eval_archive)?.header().count;
    if eval_count == 0 {
        log::warn!("{}: eval archive is empty, skipping evaluation", eval_archive.display());
    }
    std::fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;

    let log_path = out_dir.join(TRAIN_LOG);
    let mut log_file = BufWriter::new(File::create(&log_path).map_err(Error::io(&log_path))?);
    writeln!(log_file, "step,loss,eval_miou").map_err(Error::io(&log_path))?;

    let mut state = TrainState::new(SegNet::<f32>::new(model_config.clone())?);
    let mut sampler = EpochSampler::new(samples.len(), train_config.seed);
    let options = EvalOptions {
        ignore_unknown_in_loss: train_config.ignore_unknown_in_loss,
        exclude_unknown_from_miou: false,
    };
    let mut outcome = TrainOutcome {
        checkpoint: state.checkpoint(),
        final_loss: None,
        last_eval: None,
        best_miou: None,
    };

    while state.step < train_config.max_steps {
        let batch: Vec<_> = sampler
            .next_batch(train_config.batch_size)
            .into_iter()
            .map(|i| &samples[i])
            .collect();
        let loss = train_step(&mut state, &batch, train_config)?;
        outcome.final_loss = Some(loss);
        let step = state.step;
        let mut miou = String::new();
        if step % train_config.eval_interval == 0 || step == train_config.max_steps {
            if eval_count > 0 {
                let report = evaluate_net(&state.net, eval_archive, options)?;
                miou = format!("{:.6}", report.miou);
                log::info!(
                    "step {step}: loss {loss:.4}, eval mIoU {:.4}, pixel accuracy {:.4}",
                    report.miou,
                    report.pixel_accuracy
                );
                if state.best_miou.is_none_or(|b| report.miou > b) {
                    state.best_miou = Some(report.miou);
                    save_checkpoint(&state.checkpoint(), out_dir.join(BEST_CHECKPOINT))?;
                }
                outcome.last_eval = Some(report);
            } else {
                log::info!("step {step}: loss {loss:.4}");
            }
            save_checkpoint(&state.checkpoint(), out_dir.join(LAST_CHECKPOINT))?;
        } else {
            log::debug!("step {step}: loss {loss:.4}");
        }
        writeln!(log_file, "{step},{loss:.6},{miou}").map_err(Error::io(&log_path))?;
    }
    log_file.flush().map_err(Error::io(&log_path))?;

    outcome.checkpoint = state.checkpoint();
    outcome.best_miou = state.best_miou;
    if train_config.max_steps == 0 {
        save_checkpoint(&outcome.checkpoint, out_dir.join(LAST_CHECKPOINT))?;
    }
    Ok(outcome)
}
