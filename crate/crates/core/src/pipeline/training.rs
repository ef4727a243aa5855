use crate::error::{Error, Result};
use crate::nn::{
    train, write_models, FeedbackConfig, FeedbackModel, ModelBundle, SegNet, SegNetConfig,
    TrainConfig,
};
use crate::prefilter::{read_corpus, Label};

use super::config::PipelineConfig;
use super::meta::{ensure_parent, require_files, write_sidecar, StageOutput};

pub fn train_config(cfg: &PipelineConfig, epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: cfg.learning_rate,
        epochs,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        init_scale: cfg.init_scale,
        momentum: cfg.momentum,
        optimizer: cfg.optimizer,
    }
}

/// Train the patch classifier and the feedback segmenter on the labelled
/// corpus and write both into one weights file. Training is single-threaded
/// so the weights depend only on the corpus and the config.
pub fn run_train(cfg: &PipelineConfig) -> Result<StageOutput> {
    let mut out = StageOutput::new("train");
    let dir = cfg.resolve(&cfg.corpus_dir);
    require_files([dir.join("manifest.csv").as_path()])?;
    let corpus = read_corpus(&dir)?;
    if corpus.size != crate::prefilter::CLASSIFY_PATCH {
        return Err(Error::Validation(format!(
            "corpus patches are {0}x{0}, the classifier needs {1}x{1}",
            corpus.size,
            crate::prefilter::CLASSIFY_PATCH
        )));
    }
    let pos = corpus.count_label(Label::Building);
    let neg = corpus.count_label(Label::NoBuilding);

    let mut segnet = SegNet::new(&SegNetConfig::default(), cfg.init_scale, cfg.seed)?;
    let seg_report = train(&mut segnet, &corpus, &train_config(cfg, cfg.epochs))?;
    let mut feedback = FeedbackModel::new(
        &FeedbackConfig::default(),
        cfg.init_scale,
        cfg.seed.wrapping_add(1),
    )?;
    let fb_report = train(&mut feedback, &corpus, &train_config(cfg, cfg.feedback_epochs))?;
    for w in seg_report.warnings.iter().chain(&fb_report.warnings) {
        out.note(w.clone());
    }

    let model = cfg.resolve(&cfg.model_file);
    ensure_parent(&model)?;
    write_models(
        &ModelBundle {
            segnet: Some(segnet),
            feedback: Some(feedback),
        },
        &model,
    )?;
    write_sidecar(&model, "train", cfg)?;
    out.files.push(model);

    let mut csv = String::from("model,epoch,loss\n");
    for (name, trace) in [("segnet", &seg_report.loss_trace), ("feedback", &fb_report.loss_trace)] {
        for (e, l) in trace.iter().enumerate() {
            csv.push_str(&format!("{name},{},{l}\n", e + 1));
        }
    }
    out.write_text(cfg.stage_dir("train").join("loss.csv"), csv)?;
    out.note(format!(
        "trained on {pos} building / {neg} background patches; final loss segnet {:.4}, feedback {:.4}",
        seg_report.loss_trace.last().copied().unwrap_or(f64::NAN),
        fb_report.loss_trace.last().copied().unwrap_or(f64::NAN)
    ));
    Ok(out)
}
