//! Progression-free survival models and their evaluation.

mod cindex;
mod cox;
mod cv;
mod likelihood;
mod mlp;
mod rsf;
mod ttest;

pub use cindex::concordance_index;
pub use cox::{cox_risk, fit_coxph, CoxModel, CoxParams};
pub use cv::{cross_validate, kfold_cv, FoldScore};
pub use likelihood::{neg_log_partial_likelihood, nll_and_gradient};
pub use mlp::{fit_mlp_cox, MlpCoxModel, MlpParams};
pub use rsf::{fit_rsf, nelson_aalen, rsf_risk, RsfModel, RsfParams, SurvivalTree, TreeNode};
pub use ttest::{corrected_paired_ttest, TTestResult};

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version stamped into persisted models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    pub x: DMatrix<f64>,
    pub time: Vec<f64>,
    pub event: Vec<bool>,
    pub names: Vec<String>,
}

impl SurvivalDataset {
    pub fn new(x: DMatrix<f64>, time: Vec<f64>, event: Vec<bool>, names: Vec<String>) -> Result<Self> {
        let n = x.nrows();
        if time.len() != n || event.len() != n || names.len() != x.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "X {}x{}, {} times, {} events, {} names",
                n,
                x.ncols(),
                time.len(),
                event.len(),
                names.len()
            )));
        }
        if let Some(t) = time.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidParameter(format!("survival times must be positive, got {t}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite covariate".into()));
        }
        Ok(Self { x, time, event, names })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    pub fn require_events(&self) -> Result<()> {
        if self.events() == 0 {
            return Err(Error::Degenerate("dataset has no events".into()));
        }
        Ok(())
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            time: rows.iter().map(|&i| self.time[i]).collect(),
            event: rows.iter().map(|&i| self.event[i]).collect(),
            names: self.names.clone(),
        }
    }
}

pub(crate) fn check_width(expected: usize, x: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::ShapeMismatch(format!(
            "model expects {expected} features, got {}",
            x.ncols()
        )));
    }
    Ok(())
}

/// Which model family to fit, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Coxph(CoxParams),
    Rsf(RsfParams),
    Mlpcox(MlpParams),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Coxph(_) => "coxph",
            ModelSpec::Rsf(_) => "rsf",
            ModelSpec::Mlpcox(_) => "mlpcox",
        }
    }

    pub fn fit(&self, data: &SurvivalDataset) -> Result<SurvivalModel> {
        Ok(match self {
            ModelSpec::Coxph(p) => SurvivalModel::Coxph(fit_coxph(data, p)?),
            ModelSpec::Rsf(p) => SurvivalModel::Rsf(fit_rsf(data, p)?),
            ModelSpec::Mlpcox(p) => SurvivalModel::Mlpcox(fit_mlp_cox(data, p)?),
        })
    }
}

/// A fitted model in its persisted form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum SurvivalModel {
    Coxph(CoxModel),
    Rsf(RsfModel),
    Mlpcox(MlpCoxModel),
}

#[derive(Serialize, Deserialize)]
struct Persisted {
    format_version: u32,
    #[serde(flatten)]
    model: SurvivalModel,
}

impl SurvivalModel {
    pub fn risk(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        match self {
            SurvivalModel::Coxph(m) => cox_risk(m, x),
            SurvivalModel::Rsf(m) => rsf_risk(m, x),
            SurvivalModel::Mlpcox(m) => m.predict(x),
        }
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            SurvivalModel::Coxph(m) => &m.names,
            SurvivalModel::Rsf(m) => &m.names,
            SurvivalModel::Mlpcox(m) => &m.names,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Persisted {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Persisted = serde_json::from_str(s)?;
        if p.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "model format version {} not supported (expected {MODEL_FORMAT_VERSION})",
                p.format_version
            )));
        }
        Ok(p.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s).map_err(|e| e.context(format!("loading model {}", path.display())))
    }
}
