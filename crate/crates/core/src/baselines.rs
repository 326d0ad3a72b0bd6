//! Mock predictors used to check that a model learned more than the label
//! distribution: shuffled model predictions, the two constant classes, and
//! the per-stock best of those three.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Direction;

/// Which predictor produced a set of predictions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    Model,
    Randomized,
    /// Always predicts a downward change.
    Class1,
    /// Always predicts an upward change.
    Class2,
    BestOf,
}

impl Series {
    pub const ALL: [Series; 5] = [
        Series::Model,
        Series::Randomized,
        Series::Class1,
        Series::Class2,
        Series::BestOf,
    ];
    pub const BASELINES: [Series; 4] = [Series::Randomized, Series::Class1, Series::Class2, Series::BestOf];

    pub fn name(self) -> &'static str {
        match self {
            Series::Model => "model",
            Series::Randomized => "randomized",
            Series::Class1 => "class1",
            Series::Class2 => "class2",
            Series::BestOf => "bestof",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub stock_id: String,
    pub source: Series,
    pub predicted: Vec<Direction>,
    pub truth: Vec<Direction>,
}

impl PredictionSet {
    pub fn new(stock_id: &str, source: Series, predicted: Vec<Direction>, truth: Vec<Direction>) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::Dimension(format!(
                "{} predictions for {} labels",
                predicted.len(),
                truth.len()
            )));
        }
        Ok(PredictionSet {
            stock_id: stock_id.to_string(),
            source,
            predicted,
            truth,
        })
    }

    pub fn accuracy(&self) -> Result<f64> {
        accuracy(self)
    }

    pub fn up_fraction(&self) -> f64 {
        up_fraction(&self.predicted)
    }
}

pub fn up_fraction(labels: &[Direction]) -> f64 {
    labels.iter().filter(|d| **d == Direction::Up).count() as f64 / labels.len() as f64
}

pub fn accuracy(pred: &PredictionSet) -> Result<f64> {
    if pred.truth.is_empty() {
        return Err(Error::EmptySplit("accuracy of an empty prediction set".into()));
    }
    let hits = pred.predicted.iter().zip(&pred.truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.truth.len() as f64)
}

/// The model's own predictions in a seeded random order.
pub fn randomized_baseline(model: &PredictionSet, seed: u64) -> Result<PredictionSet> {
    if model.predicted.is_empty() {
        return Err(Error::EmptySplit("no predictions to shuffle".into()));
    }
    let mut predicted = model.predicted.clone();
    predicted.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    PredictionSet::new(&model.stock_id, Series::Randomized, predicted, model.truth.clone())
}

/// Mean accuracy over `shuffles` independent shuffles.
pub fn randomized_mean_accuracy(model: &PredictionSet, shuffles: usize, seed: u64) -> Result<f64> {
    if model.predicted.is_empty() || shuffles == 0 {
        return Err(Error::EmptySplit("no predictions to shuffle".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut predicted = model.predicted.clone();
    let mut total = 0.0;
    for _ in 0..shuffles {
        predicted.shuffle(&mut rng);
        let hits = predicted.iter().zip(&model.truth).filter(|(p, t)| p == t).count();
        total += hits as f64 / predicted.len() as f64;
    }
    Ok(total / shuffles as f64)
}

/// Constant predictor: class 1 is "down", class 2 is "up".
pub fn class_baseline(stock_id: &str, truth: &[Direction], class_index: u8) -> Result<PredictionSet> {
    if truth.is_empty() {
        return Err(Error::EmptySplit("class baseline over no labels".into()));
    }
    let (dir, source) = match class_index {
        1 => (Direction::Down, Series::Class1),
        2 => (Direction::Up, Series::Class2),
        other => return Err(Error::Config(format!("class index {other} is not 1 or 2"))),
    };
    PredictionSet::new(stock_id, source, vec![dir; truth.len()], truth.to_vec())
}

/// Highest accuracy among the three mock predictors of one stock.
pub fn bestof_baseline(randomized: &PredictionSet, class1: &PredictionSet, class2: &PredictionSet) -> Result<f64> {
    if randomized.truth != class1.truth || class1.truth != class2.truth {
        return Err(Error::Dimension("baselines were computed on different labels".into()));
    }
    Ok(accuracy(randomized)?.max(accuracy(class1)?).max(accuracy(class2)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineAccuracies {
    pub randomized: f64,
    pub class1: f64,
    pub class2: f64,
    pub bestof: f64,
}

/// Scores every baseline against the labels of `model`.
pub fn evaluate_baselines(model: &PredictionSet, seed: u64) -> Result<BaselineAccuracies> {
    let randomized = randomized_baseline(model, seed)?;
    let class1 = class_baseline(&model.stock_id, &model.truth, 1)?;
    let class2 = class_baseline(&model.stock_id, &model.truth, 2)?;
    Ok(BaselineAccuracies {
        randomized: accuracy(&randomized)?,
        class1: accuracy(&class1)?,
        class2: accuracy(&class2)?,
        bestof: bestof_baseline(&randomized, &class1, &class2)?,
    })
}
