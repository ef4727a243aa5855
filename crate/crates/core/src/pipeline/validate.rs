use std::path::Path;

use crate::error::Result;
use crate::geo::{read_grid_ascii, read_points_csv, Binary, Raster};
use crate::validation::{
    cross_compare, household_coincidence, raster_precision_recall, region_recall,
    ValidationSummary,
};

use super::config::PipelineConfig;
use super::meta::{require_files, StageOutput};

fn read_mask(path: &Path) -> Result<Binary> {
    Ok(Raster::mask_from(&read_grid_ascii(path)?, |v| v > 0.0))
}

/// Score the Method I raster against the reference: precision and recall,
/// region recall at the configured factor, three-way agreement with the
/// comparison layers and household coincidence. An analysis whose inputs
/// are absent or inconsistent is skipped with a note; the rest still run.
pub fn run_validate(cfg: &PipelineConfig) -> Result<(StageOutput, ValidationSummary)> {
    let mut out = StageOutput::new("validate");
    let pred_path = cfg.stage_dir("detect").join("built.asc");
    let truth_path = cfg.resolve(&cfg.truth_built);
    require_files([pred_path.as_path(), truth_path.as_path()])?;
    let pred = read_mask(&pred_path)?;
    let truth = read_mask(&truth_path)?;
    let mut summary = ValidationSummary::default();

    match raster_precision_recall(&pred, &truth) {
        Ok(pr) => {
            summary.pr = pr.precision;
            summary.re = pr.recall;
            if pr.precision.is_none() || pr.recall.is_none() {
                summary.notes.push("precision or recall undefined (no positives)".into());
            }
        }
        Err(e) => summary.notes.push(format!("precision_recall: {e}")),
    }
    match region_recall(&pred, &truth, cfg.validation_factor) {
        Ok(r) => summary.region_recall = r,
        Err(e) => summary.notes.push(format!("region_recall: {e}")),
    }

    let third: Vec<_> = [&cfg.compare_b, &cfg.compare_c]
        .into_iter()
        .map(|p| p.as_ref().map(|p| cfg.resolve(p)).filter(|p| p.exists()))
        .collect();
    match (&third[0], &third[1]) {
        (Some(b), Some(c)) => {
            match read_mask(b).and_then(|b| Ok((b, read_mask(c)?))).and_then(|(b, c)| cross_compare(&pred, &b, &c)) {
                Ok(cmp) => {
                    summary.set_agreement(&cmp.table);
                    summary.notes.push(format!(
                        "cross_compare: {} disagreement regions",
                        cmp.disagreements.len()
                    ));
                }
                Err(e) => summary.notes.push(format!("cross_compare: {e}")),
            }
        }
        _ => summary
            .notes
            .push("cross_compare skipped: compare_b and compare_c must both be present".into()),
    }

    let hh = cfg.resolve(&cfg.households_csv);
    if hh.exists() {
        match read_points_csv(&hh).and_then(|p| household_coincidence(&p, &pred, cfg.household_radius_m)) {
            Ok(c) => summary.coincidence_fraction = Some(c.fraction),
            Err(e) => summary.notes.push(format!("household_coincidence: {e}")),
        }
    } else {
        summary
            .notes
            .push(format!("household_coincidence skipped: {} not found", hh.display()));
    }

    for n in &summary.notes {
        log::info!("validate: {n}");
    }
    out.notes = summary.notes.clone();
    let path = cfg.stage_dir("validate").join("summary.json");
    out.write_text(path, summary.to_json() + "\n")?;
    Ok((out, summary))
}
