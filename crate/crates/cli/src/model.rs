use std::collections::BTreeMap;
use std::path::Path;

use asag_core::features::MinMax;
use asag_core::regression::RegressionModel;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MODEL_FORMAT: &str = "asag-model/1";

/// Everything `grade` needs: how to embed, how to rescale the similarity,
/// the fitted regressors and each question's desired answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDump {
    pub format: String,
    pub seed: u64,
    /// Provider spec used for training, e.g. `static:vectors.txt`.
    pub provider: String,
    pub normalization: MinMax,
    /// In the order requested; `grade` uses the first unless told otherwise.
    pub models: Vec<RegressionModel>,
    pub questions: BTreeMap<String, String>,
}

impl ModelDump {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read model `{}`: {e}", path.display())))?;
        let dump: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("model `{}`: {e}", path.display())))?;
        if dump.format != MODEL_FORMAT {
            return Err(CliError::Usage(format!(
                "model `{}` has format `{}`, expected `{MODEL_FORMAT}`",
                path.display(),
                dump.format
            )));
        }
        if dump.models.is_empty() {
            return Err(CliError::Usage(format!("model `{}` contains no regressors", path.display())));
        }
        Ok(dump)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn model(&self, label: Option<&str>) -> Result<&RegressionModel, CliError> {
        match label {
            None => Ok(&self.models[0]),
            Some(l) => self.models.iter().find(|m| m.label() == l).ok_or_else(|| {
                let have: Vec<_> = self.models.iter().map(|m| m.label()).collect();
                CliError::Usage(format!("model has no `{l}` regressor (has {})", have.join(", ")))
            }),
        }
    }
}
