use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::amse::PrelimMode;
use crate::dataframe::ModelFrame;
use crate::error::{Error, Result};
use crate::estimators::EstimationResult;

/// Machine-readable mirror of a fit. Keys serialize in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredResults {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub rmse: f64,
    /// Preliminary estimator: "mallows" or "onestep".
    pub estimator: String,
    pub cmd: String,
    pub depvar: String,
    pub cmdline: String,
    pub k_opt: Option<usize>,
    pub b: IndexMap<String, f64>,
    #[serde(rename = "V")]
    pub v: IndexMap<String, IndexMap<String, f64>>,
}

impl StoredResults {
    pub fn new(
        result: &EstimationResult,
        frame: &ModelFrame,
        prelim: PrelimMode,
        cmdline: &str,
    ) -> Self {
        let names = &result.names;
        let b = names
            .iter()
            .cloned()
            .zip(result.b.iter().copied())
            .collect();
        let v = names
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cols = names
                    .iter()
                    .enumerate()
                    .map(|(j, c)| (c.clone(), result.v[(i, j)]))
                    .collect();
                (row.clone(), cols)
            })
            .collect();
        StoredResults {
            n: result.n,
            k: frame.num_instruments(),
            rmse: result.rmse,
            estimator: prelim.as_str().to_string(),
            cmd: "csa2sls".into(),
            depvar: frame.dep_name.clone(),
            cmdline: cmdline.to_string(),
            k_opt: result.k_opt,
            b,
            v,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("stored results serialize");
        s.push('\n');
        s
    }
}

pub fn emit_json(stored: &StoredResults, path: &Path) -> Result<()> {
    std::fs::write(path, stored.to_json()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
