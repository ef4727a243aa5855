use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::compare::AgreementTable;
use crate::error::{Error, Result};

/// JSON summary of a validation run. Analyses that were skipped or failed
/// leave their field empty and add a note.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub pr: Option<f64>,
    pub re: Option<f64>,
    pub agreement_histogram: Option<BTreeMap<String, u64>>,
    pub coincidence_fraction: Option<f64>,
    pub region_recall: Option<f64>,
    pub notes: Vec<String>,
}

impl ValidationSummary {
    pub fn set_agreement(&mut self, table: &AgreementTable) {
        self.agreement_histogram = Some(
            table
                .counts
                .iter()
                .enumerate()
                .map(|(code, &n)| (AgreementTable::code_label(code), n))
                .collect(),
        );
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialises")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}
