use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{LassoResponse, MaskSource, ModelFamily, PipelineConfig, SelectOrder, Stage};
use super::manifest::{CohortManifest, ManifestEntry};
use super::{sha256_hex, sub_seed};
use crate::crf::refine_mask;
use crate::error::{Error, Result, ResultExt};
use crate::metrics::{score_pair, SegScore};
use crate::radiomics::{extract_all, FeatureVector};
use crate::survival::{
    concordance_index, corrected_paired_ttest, cross_validate, kfold_cv, nelson_aalen, FoldScore, ModelSpec,
    SurvivalDataset, TTestResult,
};
use crate::tabular::{
    encode_dummies, iterative_impute, lasso_select, spearman_filter, ClinicalData, Column, FeatureTable,
    SelectionReport, ID_COLUMN,
};
use crate::volume::{
    clip_intensities, crop_to_box, ensemble_mean, load_bounding_boxes, load_volume, raw_payload_path,
    resample_trilinear, save_volume, threshold_map, zscore_normalize, BoundingBox, Mask3D, ProbMap3D, Volume3D,
    VolumeFormat,
};

pub const REPORT_FILE: &str = "report.json";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Abort on the first failing patient instead of recording it.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub center_id: String,
    pub ok: bool,
    pub error: Option<String>,
    pub ensemble: Option<SegScore>,
    pub refined: Option<SegScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationSummary {
    pub scored: usize,
    pub ensemble_mean: SegScore,
    pub refined_mean: Option<SegScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub patients: usize,
    pub events: usize,
    pub features: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub apparent_c_index: Option<f64>,
    pub cv: Vec<FoldScore>,
    pub cv_mean_c_index: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub test: TTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub seed: u64,
    pub stages: Vec<Stage>,
    pub patients: BTreeMap<String, PatientRecord>,
    pub succeeded: usize,
    pub failed: usize,
    pub segmentation: Option<SegmentationSummary>,
    pub cohort: Option<CohortSummary>,
    pub selection: Option<SelectionReport>,
    pub survival: BTreeMap<String, ModelSummary>,
    pub comparisons: Vec<Comparison>,
    pub cohort_errors: Vec<String>,
    /// Relative artifact path to SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

impl RunReport {
    pub fn has_failures(&self) -> bool {
        self.failed > 0 || !self.cohort_errors.is_empty()
    }
}

/// Files written during a run, hashed into the report at the end.
struct Artifacts {
    root: PathBuf,
    written: Mutex<BTreeSet<PathBuf>>,
}

impl Artifacts {
    fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(p)
    }

    fn record(&self, p: PathBuf) {
        self.written.lock().expect("artifact lock").insert(p);
    }

    fn volume(&self, rel: &str, vol: &Volume3D) -> Result<()> {
        let p = self.path(rel)?;
        save_volume(vol, &p, VolumeFormat::RawJson)?;
        self.record(raw_payload_path(&p));
        self.record(p);
        Ok(())
    }

    fn text(&self, rel: &str, text: &str) -> Result<()> {
        let p = self.path(rel)?;
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        self.record(p);
        Ok(())
    }

    fn table(&self, rel: &str, t: &FeatureTable) -> Result<()> {
        let p = self.path(rel)?;
        t.write_csv(&p, ID_COLUMN)?;
        self.record(p);
        Ok(())
    }

    fn hashes(&self) -> Result<BTreeMap<String, String>> {
        let written = self.written.lock().expect("artifact lock");
        written
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
                let rel = p.strip_prefix(&self.root).unwrap_or(p);
                let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                Ok((key, sha256_hex(&bytes)))
            })
            .collect()
    }
}

fn to_csv<R: AsRef<[u8]>>(header: &[&str], rows: impl IntoIterator<Item = Vec<R>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Default)]
struct PatientOutput {
    ensemble: Option<SegScore>,
    refined: Option<SegScore>,
    radiomics: Option<FeatureVector>,
}

fn load(path: &Path) -> Result<Volume3D> {
    load_volume(path, VolumeFormat::from_path(path)?)
}

fn process_patient(
    cfg: &PipelineConfig,
    e: &ManifestEntry,
    bbox: Option<&BoundingBox>,
    art: &Artifacts,
) -> Result<PatientOutput> {
    let id = &e.patient_id;
    let ct = load(&e.ct_path)?;
    let pet = load(&e.pet_path)?;
    let maps = e
        .probmap_paths
        .iter()
        .map(|p| ProbMap3D::from_volume(load(p)?).context(|| format!("probability map {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let truth = e
        .truth_mask_path
        .as_ref()
        .map(|p| Mask3D::from_volume(&load(p)?).context(|| format!("truth mask {}", p.display())))
        .transpose()?;
    let grid = *ct.geometry();
    let same = |g: &crate::volume::Geometry, what: &str| {
        if g.same_grid(&grid) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!("{what} grid differs from the CT grid")))
        }
    };
    same(pet.geometry(), "PET")?;
    for m in &maps {
        same(m.geometry(), "probability map")?;
    }
    if let Some(t) = &truth {
        same(t.geometry(), "truth mask")?;
    }

    // Geometry first (crop, resample), shared by every volume.
    let pp = &cfg.preprocess;
    let geo = |v: &Volume3D| -> Result<Volume3D> {
        let v = match bbox {
            Some(b) => crop_to_box(v, b)?,
            None => v.clone(),
        };
        match pp.target_spacing {
            Some(s) => resample_trilinear(&v, s),
            None => Ok(v),
        }
    };
    let ct_geo = geo(&ct)?;
    let pet_geo = geo(&pet)?;
    let maps = maps
        .iter()
        .map(|m| ProbMap3D::from_volume(geo(m.as_volume())?.map(|v| v.clamp(0.0, 1.0))))
        .collect::<Result<Vec<_>>>()?;
    let truth = truth
        .map(|t| geo(&t.to_volume()).map(|v| v.map(|x| x >= 0.5)))
        .transpose()?;

    let (ct_n, pet_n) = if cfg.has(Stage::Preprocess) {
        let [lo, hi] = pp.ct_clip;
        let c = clip_intensities(&ct_geo, lo, hi, pp.ct_prescale)?;
        let p = if pp.pet_zscore { zscore_normalize(&pet_geo)? } else { pet_geo.clone() };
        art.volume(&format!("preprocessed/{id}_ct.json"), &c)?;
        art.volume(&format!("preprocessed/{id}_pet.json"), &p)?;
        (c, p)
    } else {
        (ct_geo.clone(), pet_geo.clone())
    };

    let ens = ensemble_mean(&maps)?;
    let ens_mask = threshold_map(&ens, cfg.ensemble.threshold)?;
    if cfg.has(Stage::Ensemble) {
        art.volume(&format!("ensemble/{id}_prob.json"), ens.as_volume())?;
        art.volume(&format!("ensemble/{id}_mask.json"), &ens_mask.to_volume())?;
    }
    let refined = if cfg.has(Stage::Crf) {
        let (mask, marginal) = refine_mask(&ens, &ct_n, &pet_n, &cfg.crf.params, cfg.crf.threshold)?;
        art.volume(&format!("crf/{id}_prob.json"), marginal.as_volume())?;
        art.volume(&format!("crf/{id}_mask.json"), &mask.to_volume())?;
        Some(mask)
    } else {
        None
    };

    let mut out = PatientOutput::default();
    if cfg.has(Stage::Metrics) {
        let t = truth
            .as_ref()
            .ok_or_else(|| Error::Config("metrics stage needs a truth mask".into()))?;
        out.ensemble = Some(score_pair(&ens_mask, t).context(|| "ensemble metrics".into())?);
        if let Some(r) = &refined {
            out.refined = Some(score_pair(r, t).context(|| "refined metrics".into())?);
        }
    }
    if cfg.has(Stage::Radiomics) {
        let mask = match cfg.radiomics.mask_source {
            MaskSource::Truth => truth
                .as_ref()
                .ok_or_else(|| Error::Config("radiomics on truth needs a truth mask".into()))?,
            MaskSource::Prediction => refined.as_ref().unwrap_or(&ens_mask),
        };
        out.radiomics = Some(extract_all(&ct_geo, &pet_geo, mask, &cfg.radiomics.features)?);
    }
    Ok(out)
}

fn mean_score(scores: &[SegScore]) -> SegScore {
    let n = scores.len() as f64;
    SegScore {
        dsc: scores.iter().map(|s| s.dsc).sum::<f64>() / n,
        avg_hd: scores.iter().map(|s| s.avg_hd).sum::<f64>() / n,
        hd95: scores.iter().map(|s| s.hd95).sum::<f64>() / n,
    }
}

/// Validates everything up front, listing all problems.
fn validate(cfg: &PipelineConfig) -> Result<(Option<CohortManifest>, BTreeMap<String, BoundingBox>)> {
    let mut problems = cfg.problems();
    let imaging = cfg.stages.iter().any(|s| s.is_imaging());
    let mut manifest = None;
    let mut boxes = BTreeMap::new();
    if imaging {
        if let Some(p) = cfg.inputs.manifest.as_ref().filter(|p| p.is_file()) {
            match CohortManifest::read_csv(p) {
                Ok(m) => {
                    problems.extend(m.missing_files());
                    manifest = Some(m);
                }
                Err(e) => problems.push(e.to_string()),
            }
        }
        if let Some(p) = cfg.inputs.bounding_boxes.as_ref().filter(|p| p.is_file()) {
            match load_bounding_boxes(p) {
                Ok(b) => boxes = b,
                Err(e) => problems.push(e.to_string()),
            }
        }
    }
    if problems.is_empty() {
        Ok((manifest, boxes))
    } else {
        Err(Error::Config(format!(
            "{} problem(s):\n  {}",
            problems.len(),
            problems.join("\n  ")
        )))
    }
}

/// Runs the configured stages and writes `report.json` under the output
/// directory. Per-patient failures are recorded rather than raised unless
/// `options.strict` is set.
pub fn run_pipeline(cfg: &PipelineConfig, options: RunOptions) -> Result<RunReport> {
    let (manifest, boxes) = validate(cfg)?;
    std::fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    let art = Artifacts {
        root: cfg.output.clone(),
        written: Mutex::new(BTreeSet::new()),
    };
    let mut report = RunReport {
        version: REPORT_VERSION,
        seed: cfg.seed,
        stages: {
            let mut s = cfg.stages.clone();
            s.sort();
            s
        },
        patients: BTreeMap::new(),
        succeeded: 0,
        failed: 0,
        segmentation: None,
        cohort: None,
        selection: None,
        survival: BTreeMap::new(),
        comparisons: Vec::new(),
        cohort_errors: Vec::new(),
        artifacts: BTreeMap::new(),
    };

    let mut radiomics_rows: Vec<(String, FeatureVector)> = Vec::new();
    if let Some(m) = &manifest {
        let results: Vec<Result<PatientOutput>> = m
            .entries
            .par_iter()
            .map(|e| {
                process_patient(cfg, e, boxes.get(&e.patient_id), &art)
                    .map_err(|err| err.context(format!("patient {}", e.patient_id)))
            })
            .collect();
        let mut ens_scores = Vec::new();
        let mut ref_scores = Vec::new();
        let mut metric_rows = Vec::new();
        for (idx, (e, r)) in m.entries.iter().zip(results).enumerate() {
            let rec = match r {
                Ok(out) => {
                    report.succeeded += 1;
                    for (variant, s) in [("ensemble", out.ensemble), ("refined", out.refined)] {
                        if let Some(s) = s {
                            metric_rows.push(vec![
                                e.patient_id.clone(),
                                variant.to_owned(),
                                s.dsc.to_string(),
                                s.avg_hd.to_string(),
                                s.hd95.to_string(),
                            ]);
                        }
                    }
                    ens_scores.extend(out.ensemble);
                    ref_scores.extend(out.refined);
                    if let Some(f) = out.radiomics {
                        radiomics_rows.push((e.patient_id.clone(), f));
                    }
                    PatientRecord {
                        center_id: e.center_id.clone(),
                        ok: true,
                        error: None,
                        ensemble: out.ensemble,
                        refined: out.refined,
                    }
                }
                Err(err) => {
                    if options.strict {
                        return Err(Error::Case {
                            index: idx,
                            source: Box::new(err),
                        });
                    }
                    log::error!("{err}");
                    report.failed += 1;
                    PatientRecord {
                        center_id: e.center_id.clone(),
                        ok: false,
                        error: Some(err.to_string()),
                        ensemble: None,
                        refined: None,
                    }
                }
            };
            report.patients.insert(e.patient_id.clone(), rec);
        }
        if cfg.has(Stage::Metrics) {
            art.text(
                "metrics.csv",
                &to_csv(&["patient_id", "variant", "dsc", "avg_hd", "hd95"], metric_rows)?,
            )?;
            if !ens_scores.is_empty() {
                report.segmentation = Some(SegmentationSummary {
                    scored: ens_scores.len(),
                    ensemble_mean: mean_score(&ens_scores),
                    refined_mean: (!ref_scores.is_empty()).then(|| mean_score(&ref_scores)),
                });
            }
        }
    }

    let radiomics = if cfg.has(Stage::Radiomics) {
        let t = radiomics_table(radiomics_rows)?;
        art.table("radiomics.csv", &t)?;
        Some(t)
    } else {
        None
    };

    if cfg.stages.iter().any(|s| !s.is_imaging()) {
        if let Err(e) = cohort_stages(cfg, radiomics, &art, &mut report) {
            log::error!("{e}");
            report.cohort_errors.push(e.to_string());
        }
    }

    report.artifacts = art.hashes()?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    let p = cfg.output.join(REPORT_FILE);
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    Ok(report)
}

fn radiomics_table(rows: Vec<(String, FeatureVector)>) -> Result<FeatureTable> {
    let names: Vec<String> = rows.first().map(|(_, f)| f.names().map(String::from).collect()).unwrap_or_default();
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(rows.len()); names.len()];
    let mut ids = Vec::with_capacity(rows.len());
    for (id, f) in rows {
        if f.names().ne(names.iter().map(String::as_str)) {
            return Err(Error::ShapeMismatch(format!("patient {id} has a different radiomics layout")));
        }
        for (c, v) in cols.iter_mut().zip(f.values()) {
            c.push(Some(v));
        }
        ids.push(id);
    }
    FeatureTable::new(ids, names.into_iter().zip(cols).map(|(n, v)| Column::continuous(n, v)).collect())
}

fn lasso_response(cfg: &PipelineConfig, time: &[f64], event: &[bool]) -> (Vec<usize>, Vec<f64>) {
    match cfg.select.response {
        LassoResponse::LogEventTime => {
            let rows: Vec<usize> = (0..time.len()).filter(|&i| event[i]).collect();
            let y = rows.iter().map(|&i| time[i].ln()).collect();
            (rows, y)
        }
        LassoResponse::MartingaleResidual => {
            let h = nelson_aalen(time, event);
            let y = (0..time.len())
                .map(|i| {
                    let k = h.partition_point(|&(t, _)| t <= time[i]);
                    let cum = if k == 0 { 0.0 } else { h[k - 1].1 };
                    f64::from(u8::from(event[i])) - cum
                })
                .collect();
            ((0..time.len()).collect(), y)
        }
    }
}

fn select_features(
    cfg: &PipelineConfig,
    table: &FeatureTable,
    time: &[f64],
    event: &[bool],
) -> Result<(FeatureTable, SelectionReport)> {
    let sc = &cfg.select;
    let lasso = |t: &FeatureTable| -> Result<(FeatureTable, SelectionReport)> {
        let (rows, y) = lasso_response(cfg, time, event);
        let x = t.to_matrix()?.select_rows(&rows);
        let mut settings = sc.lasso.clone();
        settings.seed = sub_seed(cfg.seed, "select", "lasso");
        let names = t.column_names();
        let (kept, rep) = lasso_select(&x, &names, &y, &settings)?;
        let kept: Vec<String> = kept.into_iter().map(|j| names[j].clone()).collect();
        Ok((t.select_columns(&kept)?, rep))
    };
    let before = table.n_cols();
    let (out, mut a, b) = match sc.order {
        SelectOrder::SpearmanFirst => {
            let (t1, r1) = spearman_filter(table, sc.spearman_threshold)?;
            if sc.lasso_enabled {
                let (t2, r2) = lasso(&t1)?;
                (t2, r1, Some(r2))
            } else {
                (t1, r1, None)
            }
        }
        SelectOrder::LassoFirst => {
            let (t1, r1) = if sc.lasso_enabled {
                lasso(table)?
            } else {
                (table.clone(), SelectionReport::default())
            };
            let (t2, r2) = spearman_filter(&t1, sc.spearman_threshold)?;
            (t2, r2, sc.lasso_enabled.then_some(r1))
        }
    };
    if let Some(b) = b {
        a.dropped_by_lasso = b.dropped_by_lasso;
        a.dropped_zero_variance = b.dropped_zero_variance;
        a.lasso = b.lasso;
    }
    a.kept = out.column_names();
    a.count_before = before;
    a.count_after = out.n_cols();
    if out.n_cols() == 0 {
        return Err(Error::Degenerate("feature selection kept no features".into()));
    }
    Ok((out, a))
}

fn model_spec(cfg: &PipelineConfig, family: ModelFamily) -> ModelSpec {
    let s = &cfg.survival;
    let seed = sub_seed(cfg.seed, "survival", family.name());
    match family {
        ModelFamily::Coxph => ModelSpec::Coxph(s.coxph.clone()),
        ModelFamily::Rsf => ModelSpec::Rsf(crate::survival::RsfParams { seed, ..s.rsf.clone() }),
        ModelFamily::Mlpcox => ModelSpec::Mlpcox(crate::survival::MlpParams { seed, ..s.mlpcox.clone() }),
    }
}

fn cohort_stages(
    cfg: &PipelineConfig,
    radiomics: Option<FeatureTable>,
    art: &Artifacts,
    report: &mut RunReport,
) -> Result<()> {
    let clinical_path = cfg
        .inputs
        .clinical
        .as_ref()
        .ok_or_else(|| Error::Config("no clinical input".into()))?;
    let clin = ClinicalData::read_csv(clinical_path)?;
    let outcome: HashMap<&str, (f64, bool)> = clin
        .table
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), (clin.time[i], clin.event[i])))
        .collect();
    let mut table = encode_dummies(&clin.table)?;
    if let Some(r) = &radiomics {
        table = table.inner_join(r)?;
    }
    if let Some(p) = &cfg.inputs.deep_features {
        let deep = FeatureTable::read_csv(p, ID_COLUMN, &[], &[])?;
        table = table.inner_join(&deep)?;
    }
    if table.n_rows() == 0 {
        return Err(Error::Degenerate("no patient has clinical, imaging and deep features".into()));
    }
    if cfg.has(Stage::Impute) {
        table = iterative_impute(&table, cfg.impute).context(|| "impute".into())?;
        art.table("features_imputed.csv", &table)?;
    } else if table.missing_count() > 0 {
        return Err(Error::Config(format!(
            "{} missing feature cells; add the impute stage",
            table.missing_count()
        )));
    }
    let time: Vec<f64> = table.ids().iter().map(|id| outcome[id.as_str()].0).collect();
    let event: Vec<bool> = table.ids().iter().map(|id| outcome[id.as_str()].1).collect();

    if cfg.has(Stage::Select) {
        let (t, rep) = select_features(cfg, &table, &time, &event).context(|| "select".into())?;
        art.table("features_selected.csv", &t)?;
        art.text("selection.json", &(rep.to_json()? + "\n"))?;
        report.selection = Some(rep);
        table = t;
    }
    let data = SurvivalDataset::new(table.to_matrix()?, time, event, table.column_names())?;
    report.cohort = Some(CohortSummary {
        patients: data.n(),
        events: data.events(),
        features: data.p(),
    });

    let mut families = cfg.survival.models.clone();
    families.sort();
    families.dedup();
    if cfg.has(Stage::Fit) {
        for &f in &families {
            let spec = model_spec(cfg, f);
            let fitted = spec.fit(&data).and_then(|m| {
                let risk = m.risk(&data.x)?;
                let c = concordance_index(&risk, &data.time, &data.event)?;
                art.text(&format!("models/{}.json", f.name()), &(m.to_json()? + "\n"))?;
                let rows = data
                    .x
                    .row_iter()
                    .enumerate()
                    .map(|(i, _)| vec![table.ids()[i].clone(), risk[i].to_string()]);
                art.text(&format!("risks/{}.csv", f.name()), &to_csv(&["PatientID", "risk"], rows)?)?;
                Ok(c)
            });
            match fitted {
                Ok(c) => report.survival.entry(f.name().into()).or_default().apparent_c_index = Some(c),
                Err(e) => report.cohort_errors.push(format!("fit {}: {}", f.name(), e)),
            }
        }
    }
    if cfg.has(Stage::Eval) {
        let splits = kfold_cv(
            &data.event,
            cfg.survival.folds,
            cfg.survival.stratify,
            sub_seed(cfg.seed, "eval", "folds"),
        )?;
        let mut rows = Vec::new();
        for &f in &families {
            match cross_validate(&data, &model_spec(cfg, f), &splits) {
                Ok(scores) => {
                    for s in &scores {
                        rows.push(vec![
                            f.name().to_owned(),
                            s.fold.to_string(),
                            s.c_index.to_string(),
                            s.n_train.to_string(),
                            s.n_test.to_string(),
                        ]);
                    }
                    let entry = report.survival.entry(f.name().into()).or_default();
                    entry.cv_mean_c_index = Some(scores.iter().map(|s| s.c_index).sum::<f64>() / scores.len() as f64);
                    entry.cv = scores;
                }
                Err(e) => report.cohort_errors.push(format!("eval {}: {}", f.name(), e)),
            }
        }
        art.text(
            "cv_scores.csv",
            &to_csv(&["model", "fold", "c_index", "n_train", "n_test"], rows)?,
        )?;
    }
    if cfg.has(Stage::Compare) {
        let scored: Vec<(&String, &ModelSummary)> =
            report.survival.iter().filter(|(_, m)| !m.cv.is_empty()).collect();
        let mut comparisons = Vec::new();
        for (i, (na, ma)) in scored.iter().enumerate() {
            for (nb, mb) in &scored[i + 1..] {
                let a: Vec<f64> = ma.cv.iter().map(|s| s.c_index).collect();
                let b: Vec<f64> = mb.cv.iter().map(|s| s.c_index).collect();
                let k = ma.cv.len();
                let n_test = ma.cv.iter().map(|s| s.n_test).sum::<usize>() / k;
                let n_train = ma.cv.iter().map(|s| s.n_train).sum::<usize>() / k;
                match corrected_paired_ttest(&a, &b, n_train, n_test) {
                    Ok(test) => comparisons.push(Comparison {
                        a: na.to_string(),
                        b: nb.to_string(),
                        test,
                    }),
                    Err(e) => report.cohort_errors.push(format!("compare {na} vs {nb}: {e}")),
                }
            }
        }
        art.text("comparisons.json", &(serde_json::to_string_pretty(&comparisons)? + "\n"))?;
        report.comparisons = comparisons;
    }
    Ok(())
}
