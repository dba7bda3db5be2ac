use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use oncopipe::crf::refine_mask;
use oncopipe::losses::{loss_value, LossKind, LossParams};
use oncopipe::metrics::{evaluate_batch, SegScore};
use oncopipe::pipeline::config::{LassoResponse, ModelFamily, PipelineConfig, CONFIG_VERSION};
use oncopipe::pipeline::synth::{synth_cohort, CohortSpec};
use oncopipe::pipeline::{run_pipeline, sub_seed, RunOptions, Stage};
use oncopipe::survival::{
    concordance_index, corrected_paired_ttest, cross_validate, kfold_cv, nelson_aalen, ModelSpec, SurvivalDataset,
    SurvivalModel,
};
use oncopipe::tabular::{
    iterative_impute, lasso_select, spearman_filter, Column, FeatureTable, CLINICAL_CATEGORICAL, EVENT_COLUMN,
    ID_COLUMN, TIME_COLUMN,
};
use oncopipe::volume::{
    clip_intensities, ensemble_mean, load_volume, save_volume, threshold_map, zscore_normalize, Mask3D, ProbMap3D,
    Volume3D, VolumeFormat,
};
use oncopipe::{Error, Result};

#[derive(Parser)]
#[command(name = "oncopipe", version, about = "PET/CT segmentation post-processing, radiomics and survival modelling")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path; a directory for `run` and `synth`, a file elsewhere.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "ONCOPIPE_THREADS")]
    threads: Option<usize>,
    /// Stop at the first failing patient.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Normalise one CT or PET volume.
    Preprocess {
        input: PathBuf,
        #[arg(long, value_enum)]
        modality: Modality,
    },
    /// Average probability maps and threshold the mean.
    Ensemble {
        #[arg(required = true)]
        maps: Vec<PathBuf>,
        /// Where to write the thresholded mask.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// CRF refinement of a probability map.
    Refine {
        #[arg(long)]
        prob: PathBuf,
        #[arg(long)]
        ct: PathBuf,
        #[arg(long)]
        pet: PathBuf,
        /// Where to write the refined foreground marginal.
        #[arg(long)]
        marginal: Option<PathBuf>,
    },
    /// DSC, average HD and HD95 for the cases of a CSV (patient_id,pred_path,truth_path).
    Metrics { cases: PathBuf },
    /// Radiomics for the cases of a CSV (patient_id,ct_path,pet_path,mask_path).
    Radiomics { cases: PathBuf },
    /// Iterative imputation of a feature CSV.
    Impute { features: PathBuf },
    /// Spearman filtering and Lasso selection of a feature CSV.
    Select {
        features: PathBuf,
        /// CSV with PFS_days and Progression, if the features lack them.
        #[arg(long)]
        outcomes: Option<PathBuf>,
        /// Where to write the selection report (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Survival model fitting, evaluation and comparison.
    #[command(subcommand)]
    Survival(SurvivalCommand),
    /// Evaluate a segmentation loss on {"y": [...], "p": [...]} JSON.
    LossEval {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "log-cosh-dice-focal")]
        kind: Loss,
    },
    /// Write a seeded synthetic cohort with a ready-to-run config.toml.
    Synth {
        #[arg(long, default_value_t = 60)]
        patients: usize,
        #[arg(long, value_enum, default_value = "raw-json")]
        format: Format,
    },
    /// Execute every configured stage.
    Run,
}

#[derive(Subcommand)]
enum SurvivalCommand {
    Fit {
        #[arg(long, value_enum)]
        model: Family,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        outcomes: Option<PathBuf>,
    },
    /// Risks CSV for a fitted model; prints the C-index when outcomes are known.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        outcomes: Option<PathBuf>,
    },
    /// Cross-validated fold scores on shared folds.
    Cv {
        #[arg(long, value_enum, required = true, num_args = 1..)]
        model: Vec<Family>,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        outcomes: Option<PathBuf>,
    },
    /// Corrected paired t-test between two fold-score CSVs (column c_index).
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        n_train: usize,
        #[arg(long)]
        n_test: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Modality {
    Ct,
    Pet,
}

#[derive(Clone, Copy, ValueEnum)]
enum Loss {
    Dice,
    Focal,
    LogCoshDiceFocal,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    RawJson,
    Nifti,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Coxph,
    Rsf,
    Mlpcox,
}

impl From<Family> for ModelFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Coxph => ModelFamily::Coxph,
            Family::Rsf => ModelFamily::Rsf,
            Family::Mlpcox => ModelFamily::Mlpcox,
        }
    }
}

struct Ctx {
    cfg: PipelineConfig,
    output: Option<PathBuf>,
    strict: bool,
}

impl Ctx {
    fn output(&self) -> Result<&Path> {
        self.output
            .as_deref()
            .ok_or_else(|| Error::Config("--output is required for this command".into()))
    }

    /// Writes to `--output` or stdout.
    fn emit(&self, text: &str) -> Result<()> {
        match &self.output {
            Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
            None => {
                std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))?;
                Ok(())
            }
        }
    }
}

fn default_config(seed: u64) -> PipelineConfig {
    PipelineConfig {
        version: CONFIG_VERSION,
        seed,
        output: PathBuf::from("run"),
        stages: Stage::ALL.to_vec(),
        inputs: Default::default(),
        preprocess: Default::default(),
        ensemble: Default::default(),
        crf: Default::default(),
        radiomics: Default::default(),
        impute: Default::default(),
        select: Default::default(),
        survival: Default::default(),
    }
}

fn load(path: &Path) -> Result<Volume3D> {
    load_volume(path, VolumeFormat::from_path(path)?)
}

fn save(vol: &Volume3D, path: &Path) -> Result<()> {
    save_volume(vol, path, VolumeFormat::from_path(path)?)
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

/// Features plus outcomes, taken from the feature CSV itself or `outcomes`.
fn survival_table(features: &Path, outcomes: Option<&Path>) -> Result<(FeatureTable, Vec<f64>, Vec<bool>)> {
    let table = FeatureTable::read_csv(features, ID_COLUMN, &[], &[])?;
    let (source, table) = if table.column(TIME_COLUMN).is_some() && table.column(EVENT_COLUMN).is_some() {
        let rest: Vec<String> = table
            .column_names()
            .into_iter()
            .filter(|n| n != TIME_COLUMN && n != EVENT_COLUMN)
            .collect();
        let t = table.select_columns(&rest)?;
        (table, t)
    } else {
        let p = outcomes.ok_or_else(|| {
            Error::Config(format!(
                "{} has no {TIME_COLUMN}/{EVENT_COLUMN} columns; pass --outcomes",
                features.display()
            ))
        })?;
        (FeatureTable::read_csv(p, ID_COLUMN, &CLINICAL_CATEGORICAL, &[])?, table)
    };
    let col = |name: &str| -> Result<HashMap<String, f64>> {
        let c = source
            .column(name)
            .and_then(Column::numeric)
            .ok_or_else(|| Error::Config(format!("outcome column {name} missing or not numeric")))?;
        source
            .ids()
            .iter()
            .zip(c)
            .map(|(id, v)| {
                v.map(|v| (id.clone(), v))
                    .ok_or_else(|| Error::Config(format!("patient {id}: {name} is empty")))
            })
            .collect()
    };
    let times = col(TIME_COLUMN)?;
    let events = col(EVENT_COLUMN)?;
    let keep: Vec<String> = table.ids().iter().filter(|id| times.contains_key(*id)).cloned().collect();
    if keep.len() < table.n_rows() {
        log::warn!("{} patients without outcomes skipped", table.n_rows() - keep.len());
    }
    let table = table.select_rows(&keep)?;
    let time = keep.iter().map(|id| times[id]).collect();
    let event = keep.iter().map(|id| events[id] != 0.0).collect();
    Ok((table, time, event))
}

fn dataset(features: &Path, outcomes: Option<&Path>) -> Result<(SurvivalDataset, Vec<String>)> {
    let (t, time, event) = survival_table(features, outcomes)?;
    let ids = t.ids().to_vec();
    Ok((SurvivalDataset::new(t.to_matrix()?, time, event, t.column_names())?, ids))
}

fn model_spec(cfg: &PipelineConfig, family: ModelFamily) -> ModelSpec {
    let s = &cfg.survival;
    let seed = sub_seed(cfg.seed, "survival", family.name());
    match family {
        ModelFamily::Coxph => ModelSpec::Coxph(s.coxph.clone()),
        ModelFamily::Rsf => ModelSpec::Rsf(oncopipe::survival::RsfParams { seed, ..s.rsf.clone() }),
        ModelFamily::Mlpcox => ModelSpec::Mlpcox(oncopipe::survival::MlpParams { seed, ..s.mlpcox.clone() }),
    }
}

fn score_row(id: &str, s: &SegScore) -> Vec<String> {
    vec![id.to_owned(), s.dsc.to_string(), s.avg_hd.to_string(), s.hd95.to_string()]
}

fn execute(cmd: Command, ctx: &Ctx) -> Result<bool> {
    let cfg = &ctx.cfg;
    match cmd {
        Command::Preprocess { input, modality } => {
            let v = load(&input)?;
            let p = &cfg.preprocess;
            let out = match modality {
                Modality::Ct => clip_intensities(&v, p.ct_clip[0], p.ct_clip[1], p.ct_prescale)?,
                Modality::Pet if p.pet_zscore => zscore_normalize(&v)?,
                Modality::Pet => v,
            };
            save(&out, ctx.output()?)?;
        }
        Command::Ensemble { maps, mask } => {
            let maps = maps
                .iter()
                .map(|p| ProbMap3D::from_volume(load(p)?))
                .collect::<Result<Vec<_>>>()?;
            let mean = ensemble_mean(&maps)?;
            save(mean.as_volume(), ctx.output()?)?;
            if let Some(m) = mask {
                save(&threshold_map(&mean, cfg.ensemble.threshold)?.to_volume(), &m)?;
            }
        }
        Command::Refine { prob, ct, pet, marginal } => {
            let map = ProbMap3D::from_volume(load(&prob)?)?;
            let (mask, q) = refine_mask(&map, &load(&ct)?, &load(&pet)?, &cfg.crf.params, cfg.crf.threshold)?;
            save(&mask.to_volume(), ctx.output()?)?;
            if let Some(m) = marginal {
                save(q.as_volume(), &m)?;
            }
        }
        Command::Metrics { cases } => {
            #[derive(Deserialize)]
            struct Row {
                patient_id: String,
                pred_path: PathBuf,
                truth_path: PathBuf,
            }
            let base = cases.parent().unwrap_or(Path::new(".")).to_path_buf();
            let rows: Vec<Row> = read_rows(&cases)?;
            let pairs = rows
                .iter()
                .map(|r| {
                    Ok((
                        Mask3D::from_volume(&load(&resolve(&base, &r.pred_path))?)?,
                        Mask3D::from_volume(&load(&resolve(&base, &r.truth_path))?)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let batch = evaluate_batch(&pairs)?;
            let mut out: Vec<Vec<String>> =
                rows.iter().zip(&batch.cases).map(|(r, s)| score_row(&r.patient_id, s)).collect();
            out.push(score_row("mean", &batch.mean));
            ctx.emit(&csv_text(&["patient_id", "dsc", "avg_hd", "hd95"], &out)?)?;
        }
        Command::Radiomics { cases } => {
            #[derive(Deserialize)]
            struct Row {
                patient_id: String,
                ct_path: PathBuf,
                pet_path: PathBuf,
                mask_path: PathBuf,
            }
            let base = cases.parent().unwrap_or(Path::new(".")).to_path_buf();
            let rows: Vec<Row> = read_rows(&cases)?;
            let mut header: Option<Vec<String>> = None;
            let mut out = Vec::new();
            let mut ok = true;
            for r in &rows {
                let f = (|| {
                    let mask = Mask3D::from_volume(&load(&resolve(&base, &r.mask_path))?)?;
                    oncopipe::radiomics::extract_all(
                        &load(&resolve(&base, &r.ct_path))?,
                        &load(&resolve(&base, &r.pet_path))?,
                        &mask,
                        &cfg.radiomics.features,
                    )
                })();
                match f {
                    Ok(f) => {
                        let names: Vec<String> = f.names().map(String::from).collect();
                        header.get_or_insert(names);
                        let mut row = vec![r.patient_id.clone()];
                        row.extend(f.values().map(|v| v.to_string()));
                        out.push(row);
                    }
                    Err(e) if !ctx.strict => {
                        log::error!("patient {}: {e}", r.patient_id);
                        ok = false;
                    }
                    Err(e) => return Err(e.context(format!("patient {}", r.patient_id))),
                }
            }
            let mut h = vec![ID_COLUMN.to_owned()];
            h.extend(header.unwrap_or_default());
            let h: Vec<&str> = h.iter().map(String::as_str).collect();
            ctx.emit(&csv_text(&h, &out)?)?;
            return Ok(ok);
        }
        Command::Impute { features } => {
            let t = FeatureTable::read_csv(&features, ID_COLUMN, &[], &[])?;
            iterative_impute(&t, cfg.impute)?.write_csv(ctx.output()?, ID_COLUMN)?;
        }
        Command::Select { features, outcomes, report } => {
            let (t, time, event) = survival_table(&features, outcomes.as_deref())?;
            let (t, mut rep) = spearman_filter(&t, cfg.select.spearman_threshold)?;
            let t = if cfg.select.lasso_enabled {
                let rows: Vec<usize>;
                let y: Vec<f64>;
                match cfg.select.response {
                    LassoResponse::LogEventTime => {
                        rows = (0..time.len()).filter(|&i| event[i]).collect();
                        y = rows.iter().map(|&i| time[i].ln()).collect();
                    }
                    LassoResponse::MartingaleResidual => {
                        let h = nelson_aalen(&time, &event);
                        rows = (0..time.len()).collect();
                        y = (0..time.len())
                            .map(|i| {
                                let k = h.partition_point(|&(s, _)| s <= time[i]);
                                f64::from(u8::from(event[i])) - if k == 0 { 0.0 } else { h[k - 1].1 }
                            })
                            .collect();
                    }
                }
                let names = t.column_names();
                let mut settings = cfg.select.lasso.clone();
                settings.seed = sub_seed(cfg.seed, "select", "lasso");
                let (kept, lr) = lasso_select(&t.to_matrix()?.select_rows(&rows), &names, &y, &settings)?;
                let kept: Vec<String> = kept.into_iter().map(|j| names[j].clone()).collect();
                rep.dropped_by_lasso = lr.dropped_by_lasso;
                rep.dropped_zero_variance = lr.dropped_zero_variance;
                rep.lasso = lr.lasso;
                rep.kept = kept.clone();
                rep.count_after = kept.len();
                t.select_columns(&kept)?
            } else {
                t
            };
            t.write_csv(ctx.output()?, ID_COLUMN)?;
            if let Some(r) = report {
                std::fs::write(&r, rep.to_json()? + "\n").map_err(|e| Error::io(&r, e))?;
            }
        }
        Command::Survival(sc) => return survival(sc, ctx),
        Command::LossEval { input, kind } => {
            #[derive(Deserialize)]
            struct Pair {
                y: Vec<f64>,
                p: Vec<f64>,
            }
            let text = std::fs::read_to_string(&input).map_err(|e| Error::io(&input, e))?;
            let pair: Pair = serde_json::from_str(&text)?;
            let kind = match kind {
                Loss::Dice => LossKind::Dice,
                Loss::Focal => LossKind::Focal,
                Loss::LogCoshDiceFocal => LossKind::LogCoshDiceFocal,
            };
            let v = loss_value(kind, &pair.y, &pair.p, &LossParams::default())?;
            ctx.emit(&format!("{v}\n"))?;
        }
        Command::Synth { patients, format } => {
            let spec = CohortSpec {
                patients,
                format: match format {
                    Format::RawJson => VolumeFormat::RawJson,
                    Format::Nifti => VolumeFormat::Nifti1,
                },
                ..Default::default()
            };
            let out = ctx.output()?;
            synth_cohort(&spec, cfg.seed, out)?;
            eprintln!("cohort written to {}; run with --config {}", out.display(), out.join("config.toml").display());
        }
        Command::Run => {
            let report = run_pipeline(cfg, RunOptions { strict: ctx.strict })?;
            eprintln!(
                "{} patients ok, {} failed, {} cohort errors; report in {}",
                report.succeeded,
                report.failed,
                report.cohort_errors.len(),
                cfg.output.join(oncopipe::pipeline::REPORT_FILE).display()
            );
            for e in &report.cohort_errors {
                eprintln!("  {e}");
            }
            return Ok(!report.has_failures());
        }
    }
    Ok(true)
}

fn survival(cmd: SurvivalCommand, ctx: &Ctx) -> Result<bool> {
    let cfg = &ctx.cfg;
    match cmd {
        SurvivalCommand::Fit { model, features, outcomes } => {
            let (data, _) = dataset(&features, outcomes.as_deref())?;
            let m = model_spec(cfg, model.into()).fit(&data)?;
            m.save(ctx.output()?)?;
        }
        SurvivalCommand::Eval { model, features, outcomes } => {
            let m = SurvivalModel::load(&model)?;
            let raw = FeatureTable::read_csv(&features, ID_COLUMN, &[], &[])?;
            let (t, known) = if outcomes.is_some() || raw.column(TIME_COLUMN).is_some() {
                let (t, time, event) = survival_table(&features, outcomes.as_deref())?;
                (t, Some((time, event)))
            } else {
                (raw, None)
            };
            let risk = m.risk(&t.select_columns(m.feature_names())?.to_matrix()?)?;
            let rows: Vec<Vec<String>> =
                t.ids().iter().zip(&risk).map(|(id, r)| vec![id.clone(), r.to_string()]).collect();
            ctx.emit(&csv_text(&[ID_COLUMN, "risk"], &rows)?)?;
            if let Some((time, event)) = known {
                eprintln!("c_index={}", concordance_index(&risk, &time, &event)?);
            }
        }
        SurvivalCommand::Cv { model, features, outcomes } => {
            let (data, _) = dataset(&features, outcomes.as_deref())?;
            let splits = kfold_cv(
                &data.event,
                cfg.survival.folds,
                cfg.survival.stratify,
                sub_seed(cfg.seed, "eval", "folds"),
            )?;
            let mut rows = Vec::new();
            for f in model {
                let f: ModelFamily = f.into();
                for s in cross_validate(&data, &model_spec(cfg, f), &splits)? {
                    rows.push(vec![
                        f.name().to_owned(),
                        s.fold.to_string(),
                        s.c_index.to_string(),
                        s.n_train.to_string(),
                        s.n_test.to_string(),
                    ]);
                }
            }
            ctx.emit(&csv_text(&["model", "fold", "c_index", "n_train", "n_test"], &rows)?)?;
        }
        SurvivalCommand::Compare { a, b, n_train, n_test } => {
            #[derive(Deserialize)]
            struct Score {
                c_index: f64,
            }
            let read = |p: &Path| -> Result<Vec<f64>> {
                Ok(read_rows::<Score>(p)?.into_iter().map(|s| s.c_index).collect())
            };
            let r = corrected_paired_ttest(&read(&a)?, &read(&b)?, n_train, n_test)?;
            ctx.emit(&(serde_json::to_string_pretty(&r)? + "\n"))?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let g = cli.global;
    if let Some(n) = g.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let mut cfg = match &g.config {
        Some(p) => match PipelineConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => {
            if matches!(cli.command, Command::Run) {
                eprintln!("error: run needs --config");
                return ExitCode::from(2);
            }
            default_config(0)
        }
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if matches!(cli.command, Command::Run) {
        if let Some(o) = &g.output {
            cfg.output = o.clone();
        }
    }
    let ctx = Ctx {
        cfg,
        output: g.output,
        strict: g.strict,
    };
    match execute(cli.command, &ctx) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
