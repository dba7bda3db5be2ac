use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crf::CrfParams;
use crate::error::{Error, Result};
use crate::radiomics::RadiomicsConfig;
use crate::survival::{CoxParams, MlpParams, RsfParams};
use crate::tabular::{ImputeParams, LassoSettings};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Preprocess,
    Ensemble,
    Crf,
    Metrics,
    Radiomics,
    Impute,
    Select,
    Fit,
    Eval,
    Compare,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Preprocess,
        Stage::Ensemble,
        Stage::Crf,
        Stage::Metrics,
        Stage::Radiomics,
        Stage::Impute,
        Stage::Select,
        Stage::Fit,
        Stage::Eval,
        Stage::Compare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::Ensemble => "ensemble",
            Stage::Crf => "crf",
            Stage::Metrics => "metrics",
            Stage::Radiomics => "radiomics",
            Stage::Impute => "impute",
            Stage::Select => "select",
            Stage::Fit => "fit",
            Stage::Eval => "eval",
            Stage::Compare => "compare",
        }
    }

    /// Stages that must also be listed for this one to run.
    pub fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Compare => &[Stage::Eval],
            _ => &[],
        }
    }

    /// Stages reading the per-patient segmentation chain.
    pub fn is_imaging(self) -> bool {
        self <= Stage::Radiomics
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub manifest: Option<PathBuf>,
    pub clinical: Option<PathBuf>,
    pub deep_features: Option<PathBuf>,
    pub bounding_boxes: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub target_spacing: Option<[f64; 3]>,
    pub ct_clip: [f64; 2],
    pub ct_prescale: Option<f64>,
    pub pet_zscore: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_spacing: None,
            ct_clip: [-1.0, 1.0],
            ct_prescale: Some(crate::volume::DEFAULT_CT_PRESCALE),
            pet_zscore: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub threshold: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrfStageConfig {
    pub threshold: f64,
    pub params: CrfParams,
}

impl Default for CrfStageConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            params: CrfParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    /// Refined mask when the CRF ran, else the thresholded ensemble.
    #[default]
    Prediction,
    Truth,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadiomicsStageConfig {
    pub mask_source: MaskSource,
    pub features: RadiomicsConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LassoResponse {
    /// log(PFS days) over patients with an observed event.
    #[default]
    LogEventTime,
    /// Martingale residuals of a covariate-free Cox model, all patients.
    MartingaleResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectOrder {
    #[default]
    SpearmanFirst,
    LassoFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    pub spearman_threshold: f64,
    pub lasso_enabled: bool,
    pub response: LassoResponse,
    pub order: SelectOrder,
    pub lasso: LassoSettings,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            spearman_threshold: 0.8,
            lasso_enabled: true,
            response: LassoResponse::default(),
            order: SelectOrder::default(),
            lasso: LassoSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Coxph,
    Rsf,
    Mlpcox,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Coxph => "coxph",
            ModelFamily::Rsf => "rsf",
            ModelFamily::Mlpcox => "mlpcox",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurvivalConfig {
    pub models: Vec<ModelFamily>,
    pub folds: usize,
    pub stratify: bool,
    pub coxph: CoxParams,
    pub rsf: RsfParams,
    pub mlpcox: MlpParams,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        Self {
            models: vec![ModelFamily::Coxph, ModelFamily::Rsf, ModelFamily::Mlpcox],
            folds: 5,
            stratify: true,
            coxph: CoxParams {
                ridge: 1e-2,
                ..Default::default()
            },
            rsf: RsfParams::default(),
            mlpcox: MlpParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub seed: u64,
    pub output: PathBuf,
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub crf: CrfStageConfig,
    #[serde(default)]
    pub radiomics: RadiomicsStageConfig,
    #[serde(default)]
    pub impute: ImputeParams,
    #[serde(default)]
    pub select: SelectConfig,
    #[serde(default)]
    pub survival: SurvivalConfig,
}

impl PipelineConfig {
    /// Parses TOML; relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        abs(&mut cfg.output);
        for p in [
            &mut cfg.inputs.manifest,
            &mut cfg.inputs.clinical,
            &mut cfg.inputs.deep_features,
            &mut cfg.inputs.bounding_boxes,
        ]
        .into_iter()
        .flatten()
        {
            abs(p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn has(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Every problem found, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.version != CONFIG_VERSION {
            out.push(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        let mut seen = BTreeSet::new();
        for s in &self.stages {
            if !seen.insert(*s) {
                out.push(format!("stage {} listed twice", s.name()));
            }
            for r in s.requires() {
                if !self.has(*r) {
                    out.push(format!("stage {} requires stage {}", s.name(), r.name()));
                }
            }
        }
        if self.stages.is_empty() {
            out.push("no stages listed".into());
        }
        let imaging = self.stages.iter().any(|s| s.is_imaging());
        let tabular = self.stages.iter().any(|s| !s.is_imaging());
        if imaging && self.inputs.manifest.is_none() {
            out.push("imaging stages need inputs.manifest".into());
        }
        if tabular && self.inputs.clinical.is_none() {
            out.push("survival stages need inputs.clinical".into());
        }
        for p in [
            &self.inputs.manifest,
            &self.inputs.clinical,
            &self.inputs.deep_features,
            &self.inputs.bounding_boxes,
        ]
        .into_iter()
        .flatten()
        {
            if !p.is_file() {
                out.push(format!("missing input file {}", p.display()));
            }
        }
        let mut check = |what: &str, r: Result<()>| {
            if let Err(e) = r {
                out.push(format!("{what}: {e}"));
            }
        };
        check("crf", self.crf.params.validate());
        check("impute", self.impute.validate());
        if !(0.0..=1.0).contains(&self.ensemble.threshold) {
            out.push(format!("ensemble.threshold {} outside [0, 1]", self.ensemble.threshold));
        }
        if !(0.0..=1.0).contains(&self.crf.threshold) {
            out.push(format!("crf.threshold {} outside [0, 1]", self.crf.threshold));
        }
        let [lo, hi] = self.preprocess.ct_clip;
        if !(lo < hi) {
            out.push(format!("preprocess.ct_clip [{lo}, {hi}] is empty"));
        }
        if let Some(s) = self.preprocess.target_spacing {
            if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                out.push(format!("preprocess.target_spacing {s:?} must be positive"));
            }
        }
        if self.survival.models.is_empty() && self.stages.iter().any(|s| *s >= Stage::Fit) {
            out.push("survival.models is empty".into());
        }
        if self.survival.folds < 2 {
            out.push(format!("survival.folds {} < 2", self.survival.folds));
        }
        out
    }
}
