//! Experiment orchestration: dataset assembly, cross-validation, the crisis
//! split, the bottleneck sweep and report emission.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{evaluate_baselines, PredictionSet, Series};
use crate::error::{Error, Result};
use crate::features::{build_gradients, build_labels, GradientMatrix, LabeledExample, NormalizationParams};
use crate::market_data::{
    fill_missing, parse_ticks, select_consistent_stocks, PriceField, PriceMatrix, SessionWindow, TimeGrid, Timestamp,
};
use crate::neural::{Example, NetworkConfig, NetworkModel};
use crate::stats::{box_stats, mean, welch_upper_tail, BoxStats, WelchResult};
use crate::synth::{generate, SyntheticConfig};

pub const N_FOLDS: usize = 5;
/// Share of each training portion held out for early stopping.
pub const VALIDATION_FRACTION: f64 = 0.25;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    CrossValidated,
    Crisis,
    BottleneckSweep,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross" | "cross_validated" => Ok(Mode::CrossValidated),
            "crisis" => Ok(Mode::Crisis),
            "bottleneck" | "bottleneck_sweep" => Ok(Mode::BottleneckSweep),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// Where prices come from when the source is not synthetic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Tick CSV; needs the grid fields below.
    pub ticks: Option<PathBuf>,
    /// Price-matrix CSV.
    pub prices: Option<PathBuf>,
    pub price_field: PriceField,
    pub grid_start: Option<Timestamp>,
    pub grid_step_ms: Option<i64>,
    pub grid_count: Option<usize>,
    /// Trading sessions as `HH:MM-HH:MM`; empty means round the clock.
    pub sessions: Vec<String>,
    pub min_observed_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            ticks: None,
            prices: None,
            price_field: PriceField::Average,
            grid_start: None,
            grid_step_ms: None,
            grid_count: None,
            sessions: Vec::new(),
            min_observed_fraction: 0.95,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub step_size: usize,
    pub bottleneck_widths: Vec<usize>,
    pub crisis_start: Option<Timestamp>,
    pub crisis_end: Option<Timestamp>,
    /// Target stocks to evaluate; all stocks still serve as inputs.
    pub stocks: Option<Vec<String>>,
    pub jobs: usize,
    pub out: PathBuf,
    pub seed: u64,
    /// Fold a seeded permutation of the examples instead of contiguous blocks.
    pub shuffled_folds: bool,
    pub alpha: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::CrossValidated,
            step_size: 16,
            bottleneck_widths: vec![1, 3, 5, 10],
            crisis_start: None,
            crisis_end: None,
            stocks: None,
            jobs: 1,
            out: PathBuf::from("out"),
            seed: 0,
            shuffled_folds: false,
            alpha: 0.001,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    /// `input_dim` is set from the data and `rng_seed` per stock and fold.
    pub network: NetworkConfig,
    pub experiment: RunConfig,
    pub synthetic: Option<SyntheticConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let sources = usize::from(self.data.ticks.is_some())
            + usize::from(self.data.prices.is_some())
            + usize::from(self.synthetic.is_some());
        if sources != 1 {
            return Err(Error::Config(format!(
                "exactly one data source (ticks, prices or [synthetic]) is required, found {sources}"
            )));
        }
        if self.data.ticks.is_some()
            && (self.data.grid_start.is_none() || self.data.grid_step_ms.is_none() || self.data.grid_count.is_none())
        {
            return Err(Error::Config(
                "tick input needs grid_start, grid_step_ms and grid_count".into(),
            ));
        }
        let run = &self.experiment;
        if run.step_size < 2 {
            return Err(Error::Config("step_size must be at least 2".into()));
        }
        if run.jobs == 0 {
            return Err(Error::Config("jobs must be positive".into()));
        }
        if !(run.alpha > 0.0 && run.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        if run.mode == Mode::Crisis {
            match (run.crisis_start, run.crisis_end) {
                (Some(a), Some(b)) if a <= b => {}
                (Some(_), Some(_)) => return Err(Error::Config("crisis_end precedes crisis_start".into())),
                _ => return Err(Error::Config("crisis mode requires crisis_start and crisis_end".into())),
            }
        }
        if run.mode == Mode::BottleneckSweep && run.bottleneck_widths.contains(&0) {
            return Err(Error::Config("bottleneck widths must be positive".into()));
        }
        if let Some(s) = &self.synthetic {
            s.validate()?;
        }
        self.network.validate()
    }
}

/// Loads the configured data source as a price matrix ready for `step_size`.
pub fn load_prices(config: &ExperimentConfig) -> Result<PriceMatrix> {
    let data = &config.data;
    let step = config.experiment.step_size;
    let raw = if let Some(synth) = &config.synthetic {
        generate(synth)?
    } else if let Some(path) = &data.prices {
        PriceMatrix::read_csv(fs::File::open(path)?)?
    } else if let Some(path) = &data.ticks {
        let table = parse_ticks(fs::File::open(path)?)?;
        let sessions = data
            .sessions
            .iter()
            .map(|s| s.parse::<SessionWindow>())
            .collect::<Result<Vec<_>>>()?;
        let grid = TimeGrid::new(
            data.grid_start.expect("validated"),
            data.grid_step_ms.expect("validated"),
            data.grid_count.expect("validated"),
            sessions,
        )?;
        fill_missing(&table, &grid, data.price_field)?.matrix
    } else {
        return Err(Error::Config("no data source configured".into()));
    };
    select_consistent_stocks(&raw, data.min_observed_fraction, step)
}

fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one stock's experiment; independent of scheduling order.
pub fn stock_seed(master_seed: u64, stock_id: &str) -> u64 {
    splitmix(fnv1a(
        stock_id.as_bytes(),
        fnv1a(&master_seed.to_le_bytes(), FNV_OFFSET),
    ))
}

/// Test-set example indices of each fold. Contiguous blocks unless a
/// permutation seed is given.
pub fn fold_partition(n: usize, shuffle_seed: Option<u64>) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    (0..N_FOLDS)
        .map(|k| {
            let mut fold = order[k * n / N_FOLDS..(k + 1) * n / N_FOLDS].to_vec();
            fold.sort_unstable();
            fold
        })
        .collect()
}

/// Splits a chronologically ordered training portion into fit and
/// validation parts, the validation part being the most recent quarter.
pub fn split_validation(train: &[usize]) -> (&[usize], &[usize]) {
    let n_val = (train.len() as f64 * VALIDATION_FRACTION).round() as usize;
    train.split_at(train.len() - n_val)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StockResult {
    pub stock_id: String,
    pub n_examples: usize,
    pub model: f64,
    pub randomized: f64,
    pub class1: f64,
    pub class2: f64,
    pub bestof: f64,
    pub fold_accuracies: Vec<f64>,
}

impl StockResult {
    pub fn accuracy(&self, series: Series) -> f64 {
        match series {
            Series::Model => self.model,
            Series::Randomized => self.randomized,
            Series::Class1 => self.class1,
            Series::Class2 => self.class2,
            Series::BestOf => self.bestof,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedStock {
    pub stock_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub series: Series,
    pub mean: f64,
    pub box_stats: Option<BoxStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineTest {
    pub baseline: Series,
    pub welch: Option<WelchResult>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub series: Vec<SeriesSummary>,
    pub tests: Vec<BaselineTest>,
    pub max_model_accuracy: f64,
}

impl Aggregate {
    pub fn mean(&self, series: Series) -> f64 {
        self.series
            .iter()
            .find(|s| s.series == series)
            .map(|s| s.mean)
            .expect("every series is summarized")
    }

    pub fn test(&self, baseline: Series) -> Option<&WelchResult> {
        self.tests
            .iter()
            .find(|t| t.baseline == baseline)
            .and_then(|t| t.welch.as_ref())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub stock_seeds: Vec<(String, u64)>,
    pub library_version: String,
    pub wall_clock_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub mode: Mode,
    pub step_size: usize,
    pub bottleneck: Option<usize>,
    pub stocks: Vec<StockResult>,
    pub skipped: Vec<SkippedStock>,
    pub aggregate: Aggregate,
    /// Digest of every stock's fold assignment.
    pub fold_hash: String,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json<R: Read>(source: R) -> Result<Self> {
        Ok(serde_json::from_reader(source)?)
    }

    /// JSON with the wall-clock field zeroed, for reproducibility checks.
    pub fn canonical_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.provenance.wall_clock_seconds = 0.0;
        copy.to_json()
    }
}

/// Recomputes every aggregate from per-stock records.
pub fn aggregate(stocks: &[StockResult], alpha: f64) -> Aggregate {
    let sample = |series: Series| stocks.iter().map(|s| s.accuracy(series)).collect::<Vec<_>>();
    let model = sample(Series::Model);
    let series = Series::ALL
        .iter()
        .map(|&series| {
            let xs = sample(series);
            SeriesSummary {
                series,
                mean: mean(&xs),
                box_stats: box_stats(&xs).ok(),
            }
        })
        .collect();
    let tests = Series::BASELINES
        .iter()
        .map(|&baseline| match welch_upper_tail(&model, &sample(baseline), alpha) {
            Ok(w) if w.t_statistic.is_finite() => BaselineTest {
                baseline,
                welch: Some(w),
                note: None,
            },
            Ok(_) => BaselineTest {
                baseline,
                welch: None,
                note: Some("both samples are constant".into()),
            },
            Err(e) => BaselineTest {
                baseline,
                welch: None,
                note: Some(e.to_string()),
            },
        })
        .collect();
    Aggregate {
        series,
        tests,
        max_model_accuracy: model.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

struct Dataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<[f64; 2]>,
    examples: Vec<LabeledExample>,
}

fn assemble(gradients: &GradientMatrix, target: &str) -> Result<Dataset> {
    let set = build_labels(gradients, target)?;
    if set.input_ids.iter().any(|id| id == target) || set.input_ids.len() + 1 != gradients.cols() {
        return Err(Error::Dimension(format!(
            "inputs of `{target}` are not exactly the other stocks"
        )));
    }
    Ok(Dataset {
        inputs: set.examples.iter().map(|e| e.inputs.clone()).collect(),
        targets: set.examples.iter().map(|e| e.target.one_hot()).collect(),
        examples: set.examples,
    })
}

/// Trains on `train` (fit part plus chronological validation tail) and
/// predicts `test`.
fn fit_and_predict(
    data: &Dataset,
    network: &NetworkConfig,
    train: &[usize],
    test: &[usize],
    seed: u64,
) -> Result<Vec<crate::features::Direction>> {
    let (fit, val) = split_validation(train);
    if val.is_empty() || fit.len() < network.batch_size {
        return Err(Error::EmptySplit(format!(
            "{} training and {} validation examples for batch size {}",
            fit.len(),
            val.len(),
            network.batch_size
        )));
    }
    if test.is_empty() {
        return Err(Error::EmptySplit("empty test set".into()));
    }
    let norm = NormalizationParams::fit(fit.iter().map(|&i| data.inputs[i].as_slice()))?;
    let scaled: Vec<Vec<f64>> = data.inputs.iter().map(|x| norm.apply(x)).collect();
    let examples = |idx: &[usize]| -> Vec<Example<'_>> {
        idx.iter()
            .map(|&i| Example {
                input: &scaled[i],
                target: &data.targets[i],
            })
            .collect()
    };
    let config = NetworkConfig {
        input_dim: scaled[0].len(),
        output_dim: 2,
        rng_seed: seed,
        ..network.clone()
    };
    let mut model = NetworkModel::init(&config)?;
    model.train(&examples(fit), &examples(val))?;
    model.predict_all(test.iter().map(|&i| scaled[i].as_slice()))
}

struct StockOutcome {
    result: std::result::Result<StockResult, SkippedStock>,
    fold_digest: u64,
}

fn finish_stock(
    stock_id: &str,
    n_examples: usize,
    fold_accuracies: Vec<f64>,
    predicted: Vec<crate::features::Direction>,
    truth: Vec<crate::features::Direction>,
    seed: u64,
) -> Result<StockResult> {
    let model_set = PredictionSet::new(stock_id, Series::Model, predicted, truth)?;
    let b = evaluate_baselines(&model_set, splitmix(seed ^ 0x5eed))?;
    Ok(StockResult {
        stock_id: stock_id.to_string(),
        n_examples,
        model: mean(&fold_accuracies),
        randomized: b.randomized,
        class1: b.class1,
        class2: b.class2,
        bestof: b.bestof,
        fold_accuracies,
    })
}

fn cross_validate_stock(
    gradients: &GradientMatrix,
    stock_id: &str,
    network: &NetworkConfig,
    run: &RunConfig,
) -> Result<StockOutcome> {
    let seed = stock_seed(run.seed, stock_id);
    let data = assemble(gradients, stock_id)?;
    let n = data.examples.len();
    let folds = fold_partition(n, run.shuffled_folds.then(|| splitmix(seed)));
    let mut digest = fnv1a(stock_id.as_bytes(), FNV_OFFSET);
    for fold in &folds {
        digest = fnv1a(&(fold.len() as u64).to_le_bytes(), digest);
        for i in fold {
            digest = fnv1a(&(*i as u64).to_le_bytes(), digest);
        }
    }

    let mut fold_accuracies = Vec::with_capacity(N_FOLDS);
    let mut predicted = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for (k, test) in folds.iter().enumerate() {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let preds = match fit_and_predict(&data, network, &train, test, splitmix(seed.wrapping_add(k as u64))) {
            Ok(p) => p,
            Err(Error::EmptySplit(reason)) => {
                return Ok(StockOutcome {
                    result: Err(SkippedStock {
                        stock_id: stock_id.to_string(),
                        reason: format!("too few examples ({n}): {reason}"),
                    }),
                    fold_digest: digest,
                })
            }
            Err(e) => return Err(e),
        };
        let labels: Vec<_> = test.iter().map(|&i| data.examples[i].target).collect();
        let hits = preds.iter().zip(&labels).filter(|(p, t)| p == t).count();
        fold_accuracies.push(hits as f64 / labels.len() as f64);
        predicted.extend(preds);
        truth.extend(labels);
    }
    Ok(StockOutcome {
        result: Ok(finish_stock(stock_id, n, fold_accuracies, predicted, truth, seed)?),
        fold_digest: digest,
    })
}

fn crisis_stock(
    gradients: &GradientMatrix,
    stock_id: &str,
    network: &NetworkConfig,
    run: &RunConfig,
) -> Result<StockOutcome> {
    let (start, end) = match (run.crisis_start, run.crisis_end) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Config("crisis mode requires crisis_start and crisis_end".into())),
    };
    let seed = stock_seed(run.seed, stock_id);
    let data = assemble(gradients, stock_id)?;
    let train: Vec<usize> = (0..data.examples.len())
        .filter(|&i| data.examples[i].timestamp < start)
        .collect();
    let test: Vec<usize> = (0..data.examples.len())
        .filter(|&i| (start..=end).contains(&data.examples[i].timestamp))
        .collect();
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptySplit(format!(
            "crisis split of `{stock_id}` leaves {} training and {} test examples",
            train.len(),
            test.len()
        )));
    }
    let last_train = data.examples[*train.last().expect("non-empty")].timestamp;
    let first_test = data.examples[test[0]].timestamp;
    if last_train >= first_test {
        return Err(Error::Dimension("crisis training data overlaps the test period".into()));
    }
    let mut digest = fnv1a(stock_id.as_bytes(), FNV_OFFSET);
    for i in train.iter().chain(&test) {
        digest = fnv1a(&(*i as u64).to_le_bytes(), digest);
    }
    let predicted = fit_and_predict(&data, network, &train, &test, splitmix(seed))?;
    let truth: Vec<_> = test.iter().map(|&i| data.examples[i].target).collect();
    let hits = predicted.iter().zip(&truth).filter(|(p, t)| p == t).count();
    let acc = hits as f64 / truth.len() as f64;
    Ok(StockOutcome {
        result: Ok(finish_stock(stock_id, test.len(), vec![acc], predicted, truth, seed)?),
        fold_digest: digest,
    })
}

fn target_stocks(gradients: &GradientMatrix, run: &RunConfig) -> Result<Vec<String>> {
    match &run.stocks {
        None => Ok(gradients.stock_ids().to_vec()),
        Some(list) => {
            for id in list {
                if gradients.stock_index(id).is_none() {
                    return Err(Error::Config(format!("stock `{id}` is not in the data")));
                }
            }
            Ok(list.clone())
        }
    }
}

fn run_mode(
    config: &ExperimentConfig,
    prices: &PriceMatrix,
    mode: Mode,
    bottleneck: Option<usize>,
) -> Result<ExperimentReport> {
    let started = Instant::now();
    let run = &config.experiment;
    let network = NetworkConfig {
        bottleneck,
        ..config.network.clone()
    };
    let gradients = build_gradients(prices, run.step_size)?;
    let targets = target_stocks(&gradients, run)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run.jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let outcomes: Vec<StockOutcome> = pool.install(|| {
        targets
            .par_iter()
            .map(|id| match mode {
                Mode::Crisis => crisis_stock(&gradients, id, &network, run),
                _ => cross_validate_stock(&gradients, id, &network, run),
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut fold_hash = FNV_OFFSET;
    let mut stocks = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        fold_hash = fnv1a(&o.fold_digest.to_le_bytes(), fold_hash);
        match o.result {
            Ok(r) => stocks.push(r),
            Err(s) => skipped.push(s),
        }
    }
    if stocks.is_empty() {
        return Err(Error::EmptySplit("no stock has enough examples".into()));
    }
    Ok(ExperimentReport {
        mode,
        step_size: run.step_size,
        bottleneck,
        aggregate: aggregate(&stocks, run.alpha),
        stocks,
        skipped,
        fold_hash: format!("{fold_hash:016x}"),
        provenance: Provenance {
            config: config.clone(),
            master_seed: run.seed,
            stock_seeds: targets
                .iter()
                .map(|id| (id.clone(), stock_seed(run.seed, id)))
                .collect(),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
    })
}

pub fn run_cross_validated(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let prices = load_prices(config)?;
    run_mode(config, &prices, Mode::CrossValidated, config.network.bottleneck)
}

pub fn run_crisis(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut config = config.clone();
    config.experiment.mode = Mode::Crisis;
    config.validate()?;
    let prices = load_prices(&config)?;
    run_mode(&config, &prices, Mode::Crisis, config.network.bottleneck)
}

/// One cross-validated report per bottleneck width, then one without.
pub fn run_bottleneck_sweep(config: &ExperimentConfig) -> Result<Vec<ExperimentReport>> {
    config.validate()?;
    let prices = load_prices(config)?;
    let widths = config
        .experiment
        .bottleneck_widths
        .iter()
        .map(|w| Some(*w))
        .chain([None]);
    widths
        .map(|b| run_mode(config, &prices, Mode::BottleneckSweep, b))
        .collect()
}

/// Runs whatever `experiment.mode` asks for.
pub fn run(config: &ExperimentConfig) -> Result<Vec<ExperimentReport>> {
    match config.experiment.mode {
        Mode::CrossValidated => Ok(vec![run_cross_validated(config)?]),
        Mode::Crisis => Ok(vec![run_crisis(config)?]),
        Mode::BottleneckSweep => run_bottleneck_sweep(config),
    }
}

/// File stem of a report inside the output directory.
pub fn report_stem(report: &ExperimentReport) -> String {
    match (report.mode, report.bottleneck) {
        (Mode::BottleneckSweep, Some(b)) => format!("report_b{b}"),
        (Mode::BottleneckSweep, None) => "report_none".into(),
        _ => "report".into(),
    }
}

/// Per-stock rows in long format: `stock_id,series,accuracy`.
pub fn write_stock_csv<W: Write>(report: &ExperimentReport, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["stock_id", "series", "accuracy"])?;
    for s in &report.stocks {
        for series in Series::ALL {
            w.write_record([s.stock_id.as_str(), series.name(), &s.accuracy(series).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Box-plot statistics, one row per series.
pub fn write_boxplot_csv<W: Write>(report: &ExperimentReport, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "series",
        "n",
        "mean",
        "median",
        "q1",
        "q3",
        "lower_whisker",
        "upper_whisker",
        "notch_low",
        "notch_high",
        "outliers",
    ])?;
    for s in &report.aggregate.series {
        let mut row = vec![s.series.name().to_string()];
        match &s.box_stats {
            Some(b) => {
                let (lo, hi) = b.notch();
                row.push(b.n.to_string());
                row.push(s.mean.to_string());
                for v in [b.median, b.q1, b.q3, b.lower_whisker, b.upper_whisker, lo, hi] {
                    row.push(v.to_string());
                }
                row.push(b.outliers.iter().map(f64::to_string).collect::<Vec<_>>().join(";"));
            }
            None => {
                row.push(report.stocks.len().to_string());
                row.push(s.mean.to_string());
                row.extend(std::iter::repeat_n(String::new(), 8));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Writes `<stem>.json`, or `<stem>.csv` plus `<stem>_boxplot.csv`, into
/// `dir`. Returns the written paths.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = report_stem(report);
    match format {
        ReportFormat::Json => {
            let path = dir.join(format!("{stem}.json"));
            fs::write(&path, report.to_json()?)?;
            Ok(vec![path])
        }
        ReportFormat::Csv => {
            let rows = dir.join(format!("{stem}.csv"));
            write_stock_csv(report, fs::File::create(&rows)?)?;
            let boxes = dir.join(format!("{stem}_boxplot.csv"));
            write_boxplot_csv(report, fs::File::create(&boxes)?)?;
            Ok(vec![rows, boxes])
        }
    }
}
