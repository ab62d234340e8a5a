//! Evaluation harnesses: stratified repeated splits over simulated data, and
//! leave-one-out cross-validation with nested value masking.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_mtgp, fit_sgp, BaselineConfig, BaselineModel};
use crate::error::{MagicError, Result};
use crate::math::TimeGrid;
use crate::metrics::{auc, imputation_mse, mean_sd};
use crate::model::{fit, AlignedSample, FittedModel, MagicConfig, SampleSeries};
use crate::predict::{meta_combine, Imputation, Predictor};
use crate::sim::{apply_missingness, derive_seed, rng_from, SimDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sgp,
    Mtgp,
    Magic,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sgp, Method::Mtgp, Method::Magic];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sgp => "sgp",
            Method::Mtgp => "mtgp",
            Method::Magic => "magic",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = MagicError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgp" => Ok(Method::Sgp),
            "mtgp" => Ok(Method::Mtgp),
            "magic" => Ok(Method::Magic),
            other => Err(MagicError::InvalidParameter(format!(
                "unknown method '{other}' (expected magic, sgp or mtgp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    RepeatedSplit,
    /// Leave-one-out AUC only.
    Loocv,
    /// Leave-one-out AUC plus leave-one-value-out imputation error.
    NestedMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub kind: ProtocolKind,
    pub train_fraction: f64,
    pub repetitions: usize,
    pub alphas: Vec<f64>,
    pub seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            kind: ProtocolKind::RepeatedSplit,
            train_fraction: 0.7,
            repetitions: 50,
            alphas: vec![0.5, 0.6, 0.7, 0.8],
            seed: 0,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(MagicError::InvalidParameter(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.repetitions == 0 {
            return Err(MagicError::InvalidParameter("repetitions must be at least 1".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..1.0).contains(*a)) {
            return Err(MagicError::InvalidParameter(format!(
                "missing ratio must lie in [0, 1), got {a}"
            )));
        }
        Ok(())
    }
}

/// Settings shared by every method so comparisons use the same basis and λ.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub magic: MagicConfig,
    pub baseline: BaselineConfig,
}

/// One table row: a (feature, method, missing ratio) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub alpha: Option<f64>,
    pub auc_mean: Option<f64>,
    pub auc_sd: Option<f64>,
    pub mse_mean: Option<f64>,
    pub mse_sd: Option<f64>,
    pub n_reps: usize,
    pub n_failures: usize,
    pub feature: String,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub protocol: ProtocolKind,
    pub seed: u64,
    /// JSON echo of the settings that produced the report.
    pub config: String,
    pub rows: Vec<ReportRow>,
    /// One line per failed (method, repetition) or fold.
    pub failures: Vec<String>,
}

impl BenchmarkReport {
    pub fn row(&self, feature: &str, method: Method, alpha: Option<f64>) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.feature == feature && r.method == method.name() && r.alpha == alpha)
    }

    /// Copy with wall-clock fields zeroed, for reproducibility comparisons.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for row in &mut r.rows {
            row.runtime_secs = 0.0;
        }
        r
    }
}

/// Per-class random split; each class contributes `round(f·n_c)` training
/// samples, clamped so both sides keep at least one when `n_c ≥ 2`.
pub fn stratified_split(labels: &[u8], train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(MagicError::InvalidParameter(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = rng_from(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..=1u8 {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut k = (train_fraction * n as f64).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        }
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// A trained pipeline of any method.
#[derive(Debug, Clone)]
pub enum Trained {
    Magic(FittedModel),
    Baseline(BaselineModel),
}

impl Trained {
    pub fn fit(
        method: Method,
        grid: &TimeGrid,
        train: &[SampleSeries],
        prior_means: &[DVector<f64>; 2],
        config: &EvalConfig,
    ) -> Result<Self> {
        Ok(match method {
            Method::Magic => {
                Trained::Magic(fit(grid, train, prior_means.clone(), &config.magic)?.model)
            }
            Method::Sgp => Trained::Baseline(fit_sgp(grid, train, &config.magic, &config.baseline)?),
            Method::Mtgp => {
                let common = (&prior_means[0] + &prior_means[1]) * 0.5;
                Trained::Baseline(fit_mtgp(grid, train, common, &config.magic, &config.baseline)?)
            }
        })
    }

    /// Probability of class 1 and the completed curve.
    pub fn predict(&self, sample: &SampleSeries) -> Result<(f64, Imputation)> {
        match self {
            Trained::Magic(m) => {
                let r = Predictor::new(m)?.predict(sample)?;
                Ok((r.probability, r.imputation))
            }
            Trained::Baseline(b) => b.predict(sample),
        }
    }
}

fn masked_indices(sparse: &SampleSeries, grid: &TimeGrid) -> Result<Vec<usize>> {
    Ok(AlignedSample::align(sparse, grid)?.unobserved)
}

struct RepOutcome {
    auc: f64,
    mse: f64,
}

fn run_rep(
    method: Method,
    data: &SimDataset,
    sparse: &[SampleSeries],
    train: &[usize],
    test: &[usize],
    config: &EvalConfig,
) -> Result<RepOutcome> {
    let train_set: Vec<SampleSeries> = train.iter().map(|&i| sparse[i].clone()).collect();
    let model = Trained::fit(method, &data.grid, &train_set, &data.prior_means, config)?;
    let mut scores = Vec::with_capacity(test.len());
    let mut labels = Vec::with_capacity(test.len());
    let mut mses = Vec::new();
    for &i in test {
        let (p, imp) = model.predict(&strip_label(&sparse[i]))?;
        scores.push(p);
        labels.push(data.samples[i].label.unwrap_or(0));
        let masked = masked_indices(&sparse[i], &data.grid)?;
        if !masked.is_empty() {
            let truth = &data.samples[i].values;
            mses.push(imputation_mse(imp.curve.as_slice(), truth, &masked)?);
        }
    }
    let mse = mean_sd(&mses).map_or(0.0, |(m, _)| m);
    Ok(RepOutcome {
        auc: auc(&scores, &labels)?,
        mse,
    })
}

fn strip_label(s: &SampleSeries) -> SampleSeries {
    SampleSeries {
        label: None,
        ..s.clone()
    }
}

/// Repeated stratified splits over a simulated dataset. For each missing
/// ratio and repetition every series is thinned once and all methods see
/// the same split and masks; AUC is scored on test probabilities and MSE on
/// masked test points against the complete series. A failed method is
/// dropped from that repetition's aggregate and listed in `failures`.
pub fn run_benchmark(
    protocol: &EvalProtocol,
    methods: &[Method],
    data: &SimDataset,
    config: &EvalConfig,
) -> Result<BenchmarkReport> {
    protocol.validate()?;
    if protocol.kind != ProtocolKind::RepeatedSplit {
        return Err(MagicError::InvalidParameter(
            "the benchmark harness runs repeated splits; use the LOOCV harness otherwise".into(),
        ));
    }
    if methods.is_empty() {
        return Err(MagicError::InvalidParameter("no methods selected".into()));
    }
    let labels = data
        .samples
        .iter()
        .map(|s| s.label.ok_or_else(|| MagicError::InvalidInput(format!("sample {} has no label", s.id))))
        .collect::<Result<Vec<u8>>>()?;

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (ai, &alpha) in protocol.alphas.iter().enumerate() {
        let mut aucs = vec![Vec::new(); methods.len()];
        let mut mses = vec![Vec::new(); methods.len()];
        let mut fails = vec![0usize; methods.len()];
        let mut secs = vec![0.0; methods.len()];
        for rep in 0..protocol.repetitions {
            let rep_seed = derive_seed(protocol.seed, ((ai as u64) << 32) | rep as u64);
            let (train, test) = stratified_split(&labels, protocol.train_fraction, derive_seed(rep_seed, 0))?;
            let sparse = data
                .samples
                .iter()
                .enumerate()
                .map(|(i, s)| apply_missingness(s, alpha, derive_seed(rep_seed, 1 + i as u64)))
                .collect::<Result<Vec<_>>>()?;
            for (mi, &method) in methods.iter().enumerate() {
                let start = Instant::now();
                match run_rep(method, data, &sparse, &train, &test, config) {
                    Ok(o) => {
                        aucs[mi].push(o.auc);
                        mses[mi].push(o.mse);
                    }
                    Err(e) => {
                        fails[mi] += 1;
                        failures.push(format!("{method} alpha={alpha} rep={rep}: {e}"));
                    }
                }
                secs[mi] += start.elapsed().as_secs_f64();
            }
        }
        for (mi, &method) in methods.iter().enumerate() {
            let a = mean_sd(&aucs[mi]);
            let m = mean_sd(&mses[mi]);
            rows.push(ReportRow {
                method: method.name().into(),
                alpha: Some(alpha),
                auc_mean: a.map(|x| x.0),
                auc_sd: a.map(|x| x.1),
                mse_mean: m.map(|x| x.0),
                mse_sd: m.map(|x| x.1),
                n_reps: aucs[mi].len(),
                n_failures: fails[mi],
                feature: "simulated".into(),
                runtime_secs: secs[mi],
            });
        }
    }
    Ok(BenchmarkReport {
        protocol: protocol.kind,
        seed: protocol.seed,
        config: echo(config),
        rows,
        failures,
    })
}

fn echo(config: &EvalConfig) -> String {
    serde_json::to_string(config).unwrap_or_default()
}

/// One time-series feature measured on a shared cohort.
#[derive(Debug, Clone)]
pub struct Feature {
    pub name: String,
    pub grid: TimeGrid,
    pub samples: Vec<SampleSeries>,
    pub prior_means: [DVector<f64>; 2],
}

impl Feature {
    /// Fraction of grid cells without an observation, over all samples.
    pub fn missing_ratio(&self) -> f64 {
        let cells = (self.grid.len() * self.samples.len()) as f64;
        let seen: usize = self.samples.iter().map(|s| s.len()).sum();
        1.0 - seen as f64 / cells
    }
}

fn drop_index(s: &SampleSeries, j: usize) -> SampleSeries {
    let mut out = strip_label(s);
    out.times.remove(j);
    out.values.remove(j);
    out
}

/// Per-sample nested error: mask each observed value in turn, impute it
/// from the rest, and average the squared errors.
fn nested_mse(model: &Trained, sample: &SampleSeries, grid: &TimeGrid) -> Result<Option<f64>> {
    if sample.len() < 2 {
        return Ok(None);
    }
    let mut total = 0.0;
    for j in 0..sample.len() {
        let held = drop_index(sample, j);
        let (_, imp) = model.predict(&held)?;
        let gi = grid.locate(sample.times[j], crate::model::GRID_TOLERANCE).ok_or(
            MagicError::Domain {
                t: sample.times[j],
                lo: grid.start(),
                hi: grid.end(),
            },
        )?;
        let d = imp.curve[gi] - sample.values[j];
        total += d * d;
    }
    Ok(Some(total / sample.len() as f64))
}

/// Leave-one-out evaluation of `method` on each feature, plus a `combined`
/// row whose AUC uses the average of the per-feature probabilities. Samples
/// are matched across features by position and must agree on labels.
pub fn run_loocv(
    features: &[Feature],
    method: Method,
    kind: ProtocolKind,
    config: &EvalConfig,
) -> Result<BenchmarkReport> {
    if kind == ProtocolKind::RepeatedSplit {
        return Err(MagicError::InvalidParameter(
            "the LOOCV harness runs leave-one-out protocols only".into(),
        ));
    }
    let first = features
        .first()
        .ok_or_else(|| MagicError::InvalidInput("no features to evaluate".into()))?;
    let labels = first
        .samples
        .iter()
        .map(|s| s.label.ok_or_else(|| MagicError::InvalidInput(format!("sample {} has no label", s.id))))
        .collect::<Result<Vec<u8>>>()?;
    for c in 0..=1u8 {
        if labels.iter().filter(|&&l| l == c).count() < 2 {
            return Err(MagicError::InvalidInput(format!(
                "leave-one-out needs at least 2 samples of class {c}"
            )));
        }
    }
    for f in features {
        let l: Vec<Option<u8>> = f.samples.iter().map(|s| s.label).collect();
        if l.len() != labels.len() || l.iter().zip(&labels).any(|(a, b)| *a != Some(*b)) {
            return Err(MagicError::InvalidInput(format!(
                "feature {} does not list the same labelled samples",
                f.name
            )));
        }
    }

    let n = labels.len();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut per_feature: Vec<Vec<Option<f64>>> = Vec::new();
    for f in features {
        let start = Instant::now();
        let mut probs = vec![None; n];
        let mut sample_mse = Vec::new();
        let mut fails = 0;
        for i in 0..n {
            let train: Vec<SampleSeries> = f
                .samples
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, s)| s.clone())
                .collect();
            let fold = Trained::fit(method, &f.grid, &train, &f.prior_means, config).and_then(|m| {
                let (p, _) = m.predict(&strip_label(&f.samples[i]))?;
                let mse = if kind == ProtocolKind::NestedMask {
                    nested_mse(&m, &f.samples[i], &f.grid)?
                } else {
                    None
                };
                Ok((p, mse))
            });
            match fold {
                Ok((p, mse)) => {
                    probs[i] = Some(p);
                    sample_mse.extend(mse);
                }
                Err(e) => {
                    fails += 1;
                    failures.push(format!("{method} feature={} fold={i}: {e}", f.name));
                }
            }
        }
        let a = scored_auc(&probs, &labels);
        let m = mean_sd(&sample_mse);
        rows.push(ReportRow {
            method: method.name().into(),
            alpha: Some(f.missing_ratio()),
            auc_mean: a,
            auc_sd: None,
            mse_mean: m.map(|x| x.0),
            mse_sd: m.map(|x| x.1),
            n_reps: n - fails,
            n_failures: fails,
            feature: f.name.clone(),
            runtime_secs: start.elapsed().as_secs_f64(),
        });
        per_feature.push(probs);
    }
    if features.len() > 1 {
        let combined: Vec<Option<f64>> = (0..n)
            .map(|i| {
                let ps: Option<Vec<f64>> = per_feature.iter().map(|p| p[i]).collect();
                ps.and_then(|ps| meta_combine(&ps).ok())
            })
            .collect();
        let ok = combined.iter().filter(|p| p.is_some()).count();
        rows.push(ReportRow {
            method: method.name().into(),
            alpha: None,
            auc_mean: scored_auc(&combined, &labels),
            auc_sd: None,
            mse_mean: None,
            mse_sd: None,
            n_reps: ok,
            n_failures: n - ok,
            feature: "combined".into(),
            runtime_secs: 0.0,
        });
    }
    Ok(BenchmarkReport {
        protocol: kind,
        seed: 0,
        config: echo(config),
        rows,
        failures,
    })
}

/// AUC over the folds that produced a probability.
fn scored_auc(probs: &[Option<f64>], labels: &[u8]) -> Option<f64> {
    let (s, l): (Vec<f64>, Vec<u8>) = probs
        .iter()
        .zip(labels)
        .filter_map(|(p, &l)| p.map(|p| (p, l)))
        .unzip();
    auc(&s, &l).ok()
}

/// Merges single-method reports into one table (rows in argument order).
pub fn merge_reports(reports: Vec<BenchmarkReport>) -> Result<BenchmarkReport> {
    let mut it = reports.into_iter();
    let mut out = it
        .next()
        .ok_or_else(|| MagicError::InvalidInput("no reports to merge".into()))?;
    for r in it {
        out.rows.extend(r.rows);
        out.failures.extend(r.failures);
    }
    Ok(out)
}
