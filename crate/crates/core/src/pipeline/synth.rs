//! Seeded synthetic cohorts: phantom spheres for the imaging chain and
//! exponential-hazard survival outcomes for the tabular chain.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::{PipelineConfig, Inputs, Stage, CONFIG_VERSION};
use super::manifest::{CohortManifest, ManifestEntry};
use super::sub_seed;
use crate::error::{Error, Result};
use crate::survival::SurvivalDataset;
use crate::volume::{save_volume, Geometry, Mask3D, ProbMap3D, Volume3D, VolumeFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Tumour radius range, mm.
    pub radius_range: [f64; 2],
    /// Width of the probability ramp at the tumour edge, mm.
    pub softness: f64,
    /// Standard deviation of the additive noise on each probability map.
    pub noise: f64,
    pub models: usize,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: [24, 24, 24],
            spacing: [2.0, 2.0, 2.0],
            radius_range: [6.0, 12.0],
            softness: 1.5,
            noise: 0.3,
            models: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub ct: Volume3D,
    pub pet: Volume3D,
    pub probmaps: Vec<ProbMap3D>,
    pub truth: Mask3D,
    /// Tumour centre, mm.
    pub center: [f64; 3],
    pub radius: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A sphere of raised PET uptake and slightly denser CT, with `models`
/// noisy probability maps around it. With zero noise the maps threshold
/// at 0.5 to exactly the rasterised sphere.
pub fn phantom(spec: &PhantomSpec, seed: u64) -> Result<Phantom> {
    let [r0, r1] = spec.radius_range;
    if !(r0 > 0.0 && r0 <= r1) || spec.models == 0 || !(spec.noise >= 0.0) || !(spec.softness > 0.0) {
        return Err(Error::InvalidParameter(format!("degenerate phantom spec {spec:?}")));
    }
    let geom = Geometry::new(spec.dims, spec.spacing, [0.0; 3])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = if r1 > r0 { rng.random_range(r0..=r1) } else { r0 };
    let mut center = [0.0; 3];
    for a in 0..3 {
        let extent = spec.dims[a] as f64 * spec.spacing[a];
        let margin = (radius + spec.spacing[a]).min(extent / 2.0);
        center[a] = if extent - margin > margin {
            rng.random_range(margin..extent - margin)
        } else {
            extent / 2.0
        };
    }
    let dist = |c: [usize; 3]| {
        let p = geom.position(c);
        ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) + (p[2] - center[2]).powi(2)).sqrt()
    };
    let truth = Mask3D::from_fn(geom, |c| dist(c) <= radius);
    let noise = |rng: &mut ChaCha8Rng, sd: f64| -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        z * sd
    };
    let ct = Volume3D::from_fn(geom, |c| {
        let base = if dist(c) <= radius { 60.0 } else { 20.0 };
        base + noise(&mut rng, 15.0)
    });
    let pet = Volume3D::from_fn(geom, |c| {
        let base = if dist(c) <= radius { 8.0 } else { 1.5 };
        (base + noise(&mut rng, 0.6)).max(0.0)
    });
    let probmaps = (0..spec.models)
        .map(|_| {
            let data = (0..geom.len())
                .map(|idx| {
                    let p = sigmoid((radius - dist(geom.coords(idx))) / spec.softness);
                    let p = if spec.noise > 0.0 { p + noise(&mut rng, spec.noise) } else { p };
                    p.clamp(0.0, 1.0)
                })
                .collect();
            ProbMap3D::new(geom, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Phantom {
        ct,
        pet,
        probmaps,
        truth,
        center,
        radius,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurvivalSim {
    pub n: usize,
    /// Log hazard ratio per standard-normal covariate.
    pub beta: Vec<f64>,
    /// Events per day at zero covariates.
    pub baseline_rate: f64,
    /// Censoring times are uniform on (0, censor_max) days.
    pub censor_max: f64,
}

impl Default for SurvivalSim {
    fn default() -> Self {
        Self {
            n: 500,
            beta: vec![1.0, 0.0, 0.0],
            baseline_rate: 1e-3,
            censor_max: 3000.0,
        }
    }
}

fn exponential_time(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    -u.ln() / rate
}

/// Standard-normal covariates with exponential event times.
pub fn simulate_survival(sim: &SurvivalSim, seed: u64) -> Result<SurvivalDataset> {
    if sim.n == 0 || sim.beta.is_empty() || !(sim.baseline_rate > 0.0) || !(sim.censor_max > 0.0) {
        return Err(Error::InvalidParameter(format!("degenerate survival spec {sim:?}")));
    }
    let p = sim.beta.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(sim.n, p, |_, _| StandardNormal.sample(&mut rng));
    let mut time = Vec::with_capacity(sim.n);
    let mut event = Vec::with_capacity(sim.n);
    for i in 0..sim.n {
        let lp: f64 = (0..p).map(|j| x[(i, j)] * sim.beta[j]).sum();
        let t = exponential_time(&mut rng, sim.baseline_rate * lp.exp());
        let c = rng.random_range(0.0..sim.censor_max).max(1e-6);
        time.push(t.min(c));
        event.push(t <= c);
    }
    SurvivalDataset::new(x, time, event, (0..p).map(|j| format!("x{j}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub patients: usize,
    pub centers: Vec<String>,
    pub phantom: PhantomSpec,
    pub deep_features: usize,
    /// Chance that an optional clinical cell is left empty.
    pub missing_rate: f64,
    pub baseline_rate: f64,
    pub censor_max: f64,
    /// Log hazard ratios of the standardised tumour radius, HPV positivity
    /// and the first deep feature.
    pub radius_log_hr: f64,
    pub hpv_log_hr: f64,
    pub deep_log_hr: f64,
    pub format: VolumeFormat,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            patients: 60,
            centers: ["CHGJ", "CHMR", "CHUS", "CHUP", "CHUM"].map(String::from).to_vec(),
            phantom: PhantomSpec::default(),
            deep_features: 8,
            missing_rate: 0.05,
            baseline_rate: 1.0 / 900.0,
            censor_max: 2500.0,
            radius_log_hr: 0.8,
            hpv_log_hr: -0.7,
            deep_log_hr: 0.5,
            format: VolumeFormat::RawJson,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientTruth {
    pub patient_id: String,
    pub center_id: String,
    pub tumour_center_mm: [f64; 3],
    pub radius_mm: f64,
    pub hpv: bool,
    pub log_hazard: f64,
    pub pfs_days: f64,
    pub progression: bool,
}

/// Generating parameters, written next to the cohort as `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTruth {
    pub seed: u64,
    pub spec: CohortSpec,
    pub patients: Vec<PatientTruth>,
}

fn ext(format: VolumeFormat) -> &'static str {
    match format {
        VolumeFormat::RawJson => "json",
        VolumeFormat::Nifti1 => "nii.gz",
    }
}

/// Writes a cohort under `out`: images/, manifest.csv, clinical.csv,
/// deep_features.csv, truth.json and a config.toml running every stage.
pub fn synth_cohort(spec: &CohortSpec, seed: u64, out: &Path) -> Result<CohortTruth> {
    if spec.patients == 0 || spec.centers.is_empty() {
        return Err(Error::InvalidParameter("cohort needs patients and centers".into()));
    }
    if !(0.0..1.0).contains(&spec.missing_rate) {
        return Err(Error::InvalidParameter(format!("missing_rate {} outside [0, 1)", spec.missing_rate)));
    }
    let img = out.join("images");
    std::fs::create_dir_all(&img).map_err(|e| Error::io(&img, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "synth", "cohort"));
    let [r0, r1] = spec.phantom.radius_range;
    let r_mid = (r0 + r1) / 2.0;
    let r_sd = ((r1 - r0) / 12f64.sqrt()).max(1e-9);

    let mut entries = Vec::new();
    let mut truths = Vec::new();
    let mut clinical = csv::Writer::from_path(out.join("clinical.csv"))?;
    clinical.write_record([
        "PatientID", "CenterID", "Age", "Gender", "T", "N", "M", "TNMgroup", "TNMedition", "Tobacco",
        "Alcohol", "Performance", "HPV", "Chemotherapy", "Progression", "PFS_days",
    ])?;
    let mut deep = csv::Writer::from_path(out.join("deep_features.csv"))?;
    let mut header = vec!["PatientID".to_owned()];
    header.extend((0..spec.deep_features).map(|k| format!("dl_{k:03}")));
    deep.write_record(&header)?;

    let age_dist = Normal::<f64>::new(62.0, 9.0).expect("valid normal");
    for i in 0..spec.patients {
        let center = &spec.centers[i % spec.centers.len()];
        let pid = format!("{center}-{:03}", i / spec.centers.len() + 1);
        let ph = phantom(&spec.phantom, sub_seed(seed, "phantom", &pid))?;
        let path = |kind: &str| img.join(format!("{pid}_{kind}.{}", ext(spec.format)));
        save_volume(&ph.ct, &path("ct"), spec.format)?;
        save_volume(&ph.pet, &path("pet"), spec.format)?;
        save_volume(&ph.truth.to_volume(), &path("gt"), spec.format)?;
        let mut maps = Vec::new();
        for (m, pm) in ph.probmaps.iter().enumerate() {
            let p = path(&format!("prob{m}"));
            save_volume(pm.as_volume(), &p, spec.format)?;
            maps.push(p);
        }
        entries.push(ManifestEntry {
            patient_id: pid.clone(),
            ct_path: path("ct"),
            pet_path: path("pet"),
            probmap_paths: maps,
            truth_mask_path: Some(path("gt")),
            center_id: center.clone(),
        });

        let hpv = rng.random_bool(0.5);
        let dl: Vec<f64> = (0..spec.deep_features).map(|_| StandardNormal.sample(&mut rng)).collect();
        let log_hazard = spec.radius_log_hr * (ph.radius - r_mid) / r_sd
            + if hpv { spec.hpv_log_hr } else { 0.0 }
            + dl.first().map_or(0.0, |v| v * spec.deep_log_hr);
        let t = exponential_time(&mut rng, spec.baseline_rate * log_hazard.exp());
        let c = rng.random_range(1.0..spec.censor_max);
        let progression = t <= c;
        let pfs_days = t.min(c).ceil().max(1.0);

        let miss = |rng: &mut ChaCha8Rng, s: String| {
            if rng.random_bool(spec.missing_rate) {
                String::new()
            } else {
                s
            }
        };
        let age = age_dist.sample(&mut rng).round();
        let t_stage = 1 + ((ph.radius - r0) / (r1 - r0).max(1e-9) * 3.0).floor().min(3.0) as usize;
        let n_stage = rng.random_range(0..3usize);
        let group = ["I", "II", "III", "IV"][(t_stage + n_stage).saturating_sub(1).min(3)];
        let record = [
            pid.clone(),
            center.clone(),
            miss(&mut rng, format!("{age}")),
            if rng.random_bool(0.8) { "M" } else { "F" }.to_owned(),
            format!("T{t_stage}"),
            format!("N{n_stage}"),
            "M0".to_owned(),
            group.to_owned(),
            if rng.random_bool(0.5) { "7" } else { "8" }.to_owned(),
            {
                let v = rng.random_range(0..2u8);
                miss(&mut rng, v.to_string())
            },
            {
                let v = rng.random_range(0..2u8);
                miss(&mut rng, v.to_string())
            },
            {
                let v = rng.random_range(0..3u8);
                miss(&mut rng, v.to_string())
            },
            miss(&mut rng, (hpv as u8).to_string()),
            format!("{}", rng.random_range(0..2u8)),
            format!("{}", progression as u8),
            format!("{pfs_days}"),
        ];
        clinical.write_record(&record)?;
        let mut row = vec![pid.clone()];
        row.extend(dl.iter().map(|v| v.to_string()));
        deep.write_record(&row)?;

        truths.push(PatientTruth {
            patient_id: pid,
            center_id: center.clone(),
            tumour_center_mm: ph.center,
            radius_mm: ph.radius,
            hpv,
            log_hazard,
            pfs_days,
            progression,
        });
    }
    clinical.flush().map_err(|e| Error::io(out.join("clinical.csv"), e))?;
    deep.flush().map_err(|e| Error::io(out.join("deep_features.csv"), e))?;
    CohortManifest::new(entries)?.write_csv(&out.join("manifest.csv"), out)?;

    let truth = CohortTruth {
        seed,
        spec: spec.clone(),
        patients: truths,
    };
    let tp = out.join("truth.json");
    std::fs::write(&tp, serde_json::to_string_pretty(&truth)?).map_err(|e| Error::io(&tp, e))?;
    let cp = out.join("config.toml");
    std::fs::write(&cp, default_cohort_config(seed).to_toml()?).map_err(|e| Error::io(&cp, e))?;
    Ok(truth)
}

/// Every stage, with settings sized for a desk-scale synthetic cohort.
pub fn default_cohort_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        version: CONFIG_VERSION,
        seed,
        output: PathBuf::from("run"),
        stages: Stage::ALL.to_vec(),
        inputs: Inputs {
            manifest: Some("manifest.csv".into()),
            clinical: Some("clinical.csv".into()),
            deep_features: Some("deep_features.csv".into()),
            bounding_boxes: None,
        },
        preprocess: Default::default(),
        ensemble: Default::default(),
        crf: Default::default(),
        radiomics: Default::default(),
        impute: Default::default(),
        select: Default::default(),
        survival: Default::default(),
    };
    cfg.crf.params.neighborhood_radius = 3;
    cfg.survival.coxph.ridge = 0.1;
    cfg.survival.rsf.n_trees = 50;
    cfg.survival.mlpcox.epochs = 100;
    cfg
}
