//! The experiment protocols behind each subcommand.
//!
//! Repetition `r` draws everything from `Rng::new(seed).child(r)`: its split
//! (random permutation or isolation forest) from `child(0)` and its ensemble
//! from `child(1)`. Losses compared within one repetition therefore see the
//! same split and the same member seeds. Repetitions run in parallel; the
//! results are collected in order, so the thread count never changes a
//! number.

use std::fs;
use std::path::{Path, PathBuf};

use bvmreg::data::{
    load_csv, outlier_split, random_split, synthetic, Dataset, ForestParams, NormalizationMeta, SplitIndices, StatDiff,
    TargetScaling,
};
use bvmreg::ensemble::{train_ensemble, EnsembleModel, GaussianPrediction};
use bvmreg::eval::{CalibrationCurve, EvalReport, MeanStdErr, REPORT_SCHEMA_VERSION};
use bvmreg::nn::Architecture;
use bvmreg::numerics::Rng;
use bvmreg::LossKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Generator, SplitMode};
use crate::error::CliError;

/// Stream tag for generated datasets, away from the repetition tags.
const DATA_STREAM: u64 = 1 << 40;

/// A run fails when more than this share of its repetitions abort.
pub const MAX_ABORTED_FRACTION: f64 = 0.1;

pub fn generate(c: &ExperimentConfig, rng: &mut Rng) -> Result<Dataset<f64>, CliError> {
    let g = c
        .generator
        .ok_or_else(|| CliError::Usage("no generator configured".into()))?;
    let d = match g {
        Generator::ToyCubic => synthetic::toy_cubic(c.rows, c.x_min, c.x_max, c.noise_sd, rng)?,
        Generator::Heteroscedastic => synthetic::heteroscedastic(c.rows, rng)?,
        Generator::Blob => synthetic::gaussian_blob(c.rows, c.blob_dim, c.planted, rng)?,
    };
    Ok(d)
}

/// The configured CSV file, or the configured generator seeded from the
/// master seed.
pub fn load_dataset(c: &ExperimentConfig) -> Result<Dataset<f64>, CliError> {
    match (&c.dataset, c.generator) {
        (Some(path), _) => {
            let r = load_csv(path, c.target.as_deref())?;
            if r.rejected > 0 {
                log::warn!("{}: {} malformed rows skipped", path.display(), r.rejected);
            }
            Ok(r.dataset)
        }
        (None, Some(_)) => generate(c, &mut Rng::new(c.seed).child(DATA_STREAM)),
        (None, None) => Err(CliError::Usage("set `dataset` or `generator`".into())),
    }
}

fn dataset_label(c: &ExperimentConfig) -> String {
    match (&c.dataset, c.generator) {
        (Some(p), _) => p.display().to_string(),
        (None, Some(g)) => g.as_str().into(),
        (None, None) => String::new(),
    }
}

/// One audited train/test partition with its scaling.
pub struct PreparedSplit {
    pub split: SplitIndices,
    pub stat_diff: Option<StatDiff>,
    pub norm: NormalizationMeta,
    /// Training rows in scaled units.
    pub train: Dataset<f64>,
    /// Test rows with scaled features and original targets.
    pub test: Dataset<f64>,
}

pub fn make_split(
    c: &ExperimentConfig,
    data: &Dataset<f64>,
    rng: &Rng,
) -> Result<(SplitIndices, Option<StatDiff>), CliError> {
    let (split, diff) = match c.split {
        SplitMode::Random => (random_split(data.len(), c.test_fraction, &mut rng.clone())?, None),
        SplitMode::Outlier => {
            let (s, d) = outlier_split(data, c.test_fraction, ForestParams::default(), rng)?;
            (s, Some(d))
        }
    };
    split.audit()?;
    Ok((split, diff))
}

pub fn prepare(c: &ExperimentConfig, data: &Dataset<f64>, rep: &Rng) -> Result<PreparedSplit, CliError> {
    let (split, stat_diff) = make_split(c, data, &rep.child(0))?;
    let (train_raw, test_raw) = split.apply(data)?;
    let norm = if c.normalize {
        NormalizationMeta::fit(&train_raw)?
    } else {
        NormalizationMeta::fit_with(&train_raw, false, TargetScaling::Identity)?
    };
    let train = norm.apply(&train_raw)?;
    let mut test_x = Vec::with_capacity(test_raw.features().len());
    for x in test_raw.rows() {
        test_x.extend(norm.normalize_features(x)?);
    }
    let test = Dataset::new(
        test_x,
        test_raw.targets().to_vec(),
        test_raw.feature_names.clone(),
        test_raw.target_name.clone(),
    )?;
    Ok(PreparedSplit {
        split,
        stat_diff,
        norm,
        train,
        test,
    })
}

pub fn architecture(c: &ExperimentConfig, input_dim: usize, kind: LossKind) -> Architecture {
    Architecture::new(input_dim, c.hidden.clone(), kind.output_dim(), c.head)
}

pub fn train(
    c: &ExperimentConfig,
    kind: LossKind,
    train: &Dataset<f64>,
    rep: &Rng,
) -> Result<EnsembleModel<f64>, CliError> {
    let arch = architecture(c, train.dim(), kind);
    Ok(train_ensemble(
        c.ensemble_size,
        &arch,
        train,
        &c.loss_spec_for(kind),
        &c.schedule(),
        &rep.child(1),
        true,
    )?)
}

pub fn evaluate(
    c: &ExperimentConfig,
    kind: LossKind,
    model: &EnsembleModel<f64>,
    prep: &PreparedSplit,
) -> Result<EvalReport, CliError> {
    let preds: Vec<GaussianPrediction<f64>> = model.predict_dataset(&prep.test, &prep.norm)?;
    Ok(EvalReport::evaluate(
        &preds,
        prep.test.targets(),
        prep.stat_diff,
        c.run_metadata(kind),
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortedRep {
    pub rep: usize,
    pub error: String,
}

type RepOutcomes<R> = (Vec<(usize, R)>, Vec<AbortedRep>);

/// Runs `f` for every repetition in parallel and enforces the abort budget.
fn run_reps<R: Send>(
    c: &ExperimentConfig,
    f: impl Fn(usize, &Rng) -> Result<R, CliError> + Sync,
) -> Result<RepOutcomes<R>, CliError> {
    let master = Rng::new(c.seed);
    let work = || {
        (0..c.repetitions)
            .into_par_iter()
            .map(|r| (r, f(r, &master.child(r as u64))))
            .collect::<Vec<_>>()
    };
    let results = if c.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(c.threads)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(work)
    } else {
        work()
    };
    let mut done = Vec::new();
    let mut aborted = Vec::new();
    let mut first_err = None;
    for (r, res) in results {
        match res {
            Ok(v) => done.push((r, v)),
            Err(e) => {
                log::error!("repetition {r} aborted: {e}");
                aborted.push(AbortedRep {
                    rep: r,
                    error: e.to_string(),
                });
                first_err.get_or_insert(e);
            }
        }
    }
    if aborted.len() as f64 > MAX_ABORTED_FRACTION * c.repetitions as f64 {
        let e = first_err.expect("aborted implies an error");
        let msg = format!("{} of {} repetitions aborted; first: {e}", aborted.len(), c.repetitions);
        return Err(match e {
            CliError::Numerical(_) => CliError::Numerical(msg),
            CliError::Usage(_) => CliError::Usage(msg),
            CliError::Data(_) => CliError::Data(msg),
        });
    }
    Ok((done, aborted))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn write_config(c: &ExperimentConfig) -> Result<(), CliError> {
    write_text(&c.out.join("config.toml"), &c.to_toml())
}

fn manifest_path(out: &Path, rep: usize) -> PathBuf {
    out.join("manifests").join(format!("rep_{rep:03}.txt"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepReport {
    pub rep: usize,
    pub manifest: PathBuf,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub schema_version: u32,
    pub dataset: String,
    pub loss: LossKind,
    pub completed: usize,
    pub aborted: Vec<AbortedRep>,
    pub rmse: MeanStdErr,
    pub nll: MeanStdErr,
    pub calibration: CalibrationCurve,
    pub reports: Vec<RepReport>,
}

/// Split, scale, train and evaluate once per repetition, then summarize.
pub fn benchmark(c: &ExperimentConfig) -> Result<BenchmarkSummary, CliError> {
    let data = load_dataset(c)?;
    write_config(c)?;
    let (done, aborted) = run_reps(c, |r, rep| {
        let prep = prepare(c, &data, rep)?;
        let manifest = manifest_path(&c.out, r);
        write_text(&manifest, &prep.split.to_manifest())?;
        let model = train(c, c.loss, &prep.train, rep)?;
        let report = evaluate(c, c.loss, &model, &prep)?;
        log::info!("rep {r}: rmse {:.4} nll {:.4}", report.rmse, report.nll);
        Ok(RepReport {
            rep: r,
            manifest,
            report,
        })
    })?;
    let reports: Vec<RepReport> = done.into_iter().map(|(_, v)| v).collect();
    let rmse: Vec<f64> = reports.iter().map(|r| r.report.rmse).collect();
    let nll: Vec<f64> = reports.iter().map(|r| r.report.nll).collect();
    let curves: Vec<CalibrationCurve> = reports.iter().map(|r| r.report.calibration.clone()).collect();
    let summary = BenchmarkSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset: dataset_label(c),
        loss: c.loss,
        completed: reports.len(),
        aborted,
        rmse: MeanStdErr::of(&rmse)?,
        nll: MeanStdErr::of(&nll)?,
        calibration: CalibrationCurve::average(&curves)?,
        reports,
    };
    write_json(&c.out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodPair {
    pub rep: usize,
    pub manifest: PathBuf,
    pub stat_diff: Option<StatDiff>,
    pub nll_ensemble: EvalReport,
    pub bvm_ensemble: EvalReport,
}

impl OodPair {
    pub fn bvm_better(&self) -> bool {
        self.bvm_ensemble.nll < self.nll_ensemble.nll
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodSummary {
    pub schema_version: u32,
    pub dataset: String,
    pub completed: usize,
    pub aborted: Vec<AbortedRep>,
    pub bvm_wins: usize,
    pub nll_ensemble_nll: MeanStdErr,
    pub bvm_ensemble_nll: MeanStdErr,
    pub pairs: Vec<OodPair>,
}

/// NLL-trained against BVM-trained ensembles on identical splits and seeds.
pub fn ood_benchmark(c: &ExperimentConfig) -> Result<OodSummary, CliError> {
    if c.split != SplitMode::Outlier {
        log::warn!("ood-benchmark with a random split");
    }
    let data = load_dataset(c)?;
    write_config(c)?;
    let (done, aborted) = run_reps(c, |r, rep| {
        let prep = prepare(c, &data, rep)?;
        let manifest = manifest_path(&c.out, r);
        write_text(&manifest, &prep.split.to_manifest())?;
        let nll_model = train(c, LossKind::Nll, &prep.train, rep)?;
        let nll = evaluate(c, LossKind::Nll, &nll_model, &prep)?;
        let bvm_model = train(c, LossKind::Bvm, &prep.train, rep)?;
        let bvm = evaluate(c, LossKind::Bvm, &bvm_model, &prep)?;
        log::info!("rep {r}: nll-ensemble {:.4} bvm-ensemble {:.4}", nll.nll, bvm.nll);
        Ok(OodPair {
            rep: r,
            manifest,
            stat_diff: prep.stat_diff,
            nll_ensemble: nll,
            bvm_ensemble: bvm,
        })
    })?;
    let pairs: Vec<OodPair> = done.into_iter().map(|(_, v)| v).collect();
    let a: Vec<f64> = pairs.iter().map(|p| p.nll_ensemble.nll).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.bvm_ensemble.nll).collect();
    let mut csv = String::from("rep,mean_diff,var_diff,nll_ensemble_nll,bvm_ensemble_nll\n");
    for p in &pairs {
        let (m, v) = p.stat_diff.map_or((f64::NAN, f64::NAN), |d| (d.mean_diff, d.var_diff));
        csv.push_str(&format!(
            "{},{m},{v},{},{}\n",
            p.rep, p.nll_ensemble.nll, p.bvm_ensemble.nll
        ));
    }
    write_text(&c.out.join("ood.csv"), &csv)?;
    let summary = OodSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset: dataset_label(c),
        completed: pairs.len(),
        aborted,
        bvm_wins: pairs.iter().filter(|p| p.bvm_better()).count(),
        nll_ensemble_nll: MeanStdErr::of(&a)?,
        bvm_ensemble_nll: MeanStdErr::of(&b)?,
        pairs,
    };
    write_json(&c.out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub schema_version: u32,
    pub dataset: String,
    pub completed: usize,
    pub aborted: Vec<AbortedRep>,
    pub mse: CalibrationCurve,
    pub nll: CalibrationCurve,
    pub bvm: CalibrationCurve,
}

impl CalibrationSummary {
    pub fn curve(&self, kind: LossKind) -> &CalibrationCurve {
        match kind {
            LossKind::Mse => &self.mse,
            LossKind::Nll => &self.nll,
            LossKind::Bvm => &self.bvm,
        }
    }
}

const CALIBRATION_LOSSES: [LossKind; 3] = [LossKind::Mse, LossKind::Nll, LossKind::Bvm];

/// Reliability curves of MSE-, NLL- and BVM-trained ensembles, averaged over
/// the repetitions.
pub fn calibrate(c: &ExperimentConfig) -> Result<CalibrationSummary, CliError> {
    let data = load_dataset(c)?;
    write_config(c)?;
    let (done, aborted) = run_reps(c, |r, rep| {
        let prep = prepare(c, &data, rep)?;
        write_text(&manifest_path(&c.out, r), &prep.split.to_manifest())?;
        CALIBRATION_LOSSES
            .iter()
            .map(|&k| {
                let model = train(c, k, &prep.train, rep)?;
                Ok(evaluate(c, k, &model, &prep)?.calibration)
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let per_loss: Vec<CalibrationCurve> = (0..CALIBRATION_LOSSES.len())
        .map(|i| {
            let curves: Vec<_> = done.iter().map(|(_, v)| v[i].clone()).collect();
            CalibrationCurve::average(&curves)
        })
        .collect::<Result<_, _>>()?;
    for (k, curve) in CALIBRATION_LOSSES.iter().zip(&per_loss) {
        write_text(&c.out.join(format!("calibration_{}.csv", k.as_str())), &curve.to_csv())?;
    }
    let [mse, nll, bvm]: [CalibrationCurve; 3] = per_loss.try_into().expect("three losses");
    let summary = CalibrationSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset: dataset_label(c),
        completed: done.len(),
        aborted,
        mse,
        nll,
        bvm,
    };
    write_json(&c.out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub rep: usize,
    pub manifest: PathBuf,
    pub train_rows: usize,
    pub test_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stat_diff: Option<StatDiff>,
}

/// Writes the manifests a benchmark with the same config would use.
pub fn split(c: &ExperimentConfig) -> Result<Vec<SplitRecord>, CliError> {
    let data = load_dataset(c)?;
    write_config(c)?;
    let (done, _) = run_reps(c, |r, rep| {
        let (s, diff) = make_split(c, &data, &rep.child(0))?;
        let manifest = manifest_path(&c.out, r);
        write_text(&manifest, &s.to_manifest())?;
        Ok(SplitRecord {
            rep: r,
            manifest,
            train_rows: s.train.len(),
            test_rows: s.test.len(),
            stat_diff: diff,
        })
    })?;
    let records: Vec<SplitRecord> = done.into_iter().map(|(_, v)| v).collect();
    write_json(&c.out.join("splits.json"), &records)?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: Generator,
    pub rows: usize,
    pub seed: u64,
    pub params: String,
}

/// Writes a generated dataset and a `.provenance.json` sidecar; returns the
/// CSV path.
pub fn generate_file(c: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let g = c
        .generator
        .ok_or_else(|| CliError::Usage("generate needs a generator".into()))?;
    let path = if c.out.extension().is_some() {
        c.out.clone()
    } else {
        c.out.join(format!("{}.csv", g.as_str()))
    };
    let d = generate(c, &mut Rng::new(c.seed))?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    d.write_csv(&path)?;
    let prov = Provenance {
        generator: g,
        rows: d.len(),
        seed: c.seed,
        params: d.provenance.clone(),
    };
    let mut side = path.clone().into_os_string();
    side.push(".provenance.json");
    write_json(Path::new(&side), &prov)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRep {
    pub rep: usize,
    /// Mean predicted σ over the training input range.
    pub sigma_inside: f64,
    /// Mean predicted σ over `[x_max + 2, x_max + 4]`.
    pub sigma_outside: f64,
    /// Share of noiseless `x³` on the training range inside `μ ± 3σ`.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySummary {
    pub schema_version: u32,
    pub reps: Vec<ToyRep>,
    pub envelope_grows: usize,
    pub coverage: f64,
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

/// Trains on fresh cubic data every repetition (data from `child(0)`,
/// ensemble from `child(1)`) and probes the predictive envelope inside and
/// beyond the training range. No test split is made.
pub fn toy(c: &ExperimentConfig) -> Result<ToySummary, CliError> {
    if c.generator != Some(Generator::ToyCubic) {
        return Err(CliError::Usage("toy needs generator = \"toy-cubic\"".into()));
    }
    write_config(c)?;
    let (done, _) = run_reps(c, |r, rep| {
        let raw = generate(c, &mut rep.child(0))?;
        let norm = if c.normalize {
            NormalizationMeta::fit(&raw)?
        } else {
            NormalizationMeta::identity(1)
        };
        let model = train(c, c.loss, &norm.apply(&raw)?, rep)?;
        let predict = |x: f64| -> Result<GaussianPrediction<f64>, CliError> {
            Ok(model.predict(&norm.normalize_features(&[x])?, &norm)?)
        };
        let inside = grid(c.x_min, c.x_max, 0.1);
        let outside = grid(c.x_max + 2.0, c.x_max + 4.0, 0.1);
        let mut covered = 0;
        let mut s_in = 0.0;
        for &x in &inside {
            let p = predict(x)?;
            s_in += p.sigma();
            if (x * x * x - p.mu).abs() <= 3.0 * p.sigma() {
                covered += 1;
            }
        }
        let mut s_out = 0.0;
        for &x in &outside {
            s_out += predict(x)?.sigma();
        }
        let span = c.x_max - c.x_min;
        let mut csv = String::from("x,mu,sigma\n");
        for x in grid(c.x_min - span / 2.0, c.x_max + span / 2.0, 0.1) {
            let p = predict(x)?;
            csv.push_str(&format!("{x},{},{}\n", p.mu, p.sigma()));
        }
        write_text(&c.out.join("curves").join(format!("rep_{r:03}.csv")), &csv)?;
        raw.write_csv(c.out.join("curves").join(format!("data_{r:03}.csv")))?;
        Ok(ToyRep {
            rep: r,
            sigma_inside: s_in / inside.len() as f64,
            sigma_outside: s_out / outside.len() as f64,
            coverage: covered as f64 / inside.len() as f64,
        })
    })?;
    let reps: Vec<ToyRep> = done.into_iter().map(|(_, v)| v).collect();
    let summary = ToySummary {
        schema_version: REPORT_SCHEMA_VERSION,
        envelope_grows: reps.iter().filter(|t| t.sigma_outside > t.sigma_inside).count(),
        coverage: reps.iter().map(|t| t.coverage).sum::<f64>() / reps.len().max(1) as f64,
        reps,
    };
    write_json(&c.out.join("summary.json"), &summary)?;
    Ok(summary)
}
