//! Trend gradients, direction-change labels and min-max normalization.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{read_grid_csv, write_grid_csv, PriceMatrix, Timestamp};

/// Least-squares line `price ≈ intercept + slope * x` over abscissae `0..n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegressionFit {
    pub intercept: f64,
    pub slope: f64,
}

impl RegressionFit {
    /// Residual sum of squares of the fit over `prices`.
    pub fn residual_sum_of_squares(&self, prices: &[f64]) -> f64 {
        prices
            .iter()
            .enumerate()
            .map(|(x, y)| {
                let r = y - self.intercept - self.slope * x as f64;
                r * r
            })
            .sum()
    }
}

pub fn fit_trend(prices: &[f64]) -> Result<RegressionFit> {
    let n = prices.len();
    if n < 2 {
        return Err(Error::InvalidWindow(format!("{n} prices, need at least 2")));
    }
    let nf = n as f64;
    let x_mean = (nf - 1.0) / 2.0;
    let y_mean = prices.iter().sum::<f64>() / nf;
    let sxy: f64 = prices
        .iter()
        .enumerate()
        .map(|(x, y)| (x as f64 - x_mean) * (y - y_mean))
        .sum();
    let sxx = nf * (nf * nf - 1.0) / 12.0;
    let slope = sxy / sxx;
    Ok(RegressionFit {
        intercept: y_mean - slope * x_mean,
        slope,
    })
}

/// Per-interval slopes, rows are disjoint windows of `step_size` price rows.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMatrix {
    pub step_size: usize,
    stock_ids: Vec<String>,
    values: Vec<f64>,
    interval_timestamps: Vec<Timestamp>,
}

impl GradientMatrix {
    pub fn new(
        step_size: usize,
        stock_ids: Vec<String>,
        values: Vec<f64>,
        interval_timestamps: Vec<Timestamp>,
    ) -> Result<Self> {
        if values.len() != stock_ids.len() * interval_timestamps.len() {
            return Err(Error::Dimension("gradient values disagree with shape".into()));
        }
        Ok(GradientMatrix {
            step_size,
            stock_ids,
            values,
            interval_timestamps,
        })
    }

    pub fn rows(&self) -> usize {
        self.interval_timestamps.len()
    }

    pub fn cols(&self) -> usize {
        self.stock_ids.len()
    }

    pub fn stock_ids(&self) -> &[String] {
        &self.stock_ids
    }

    /// Timestamp of the last price row in each interval.
    pub fn interval_timestamps(&self) -> &[Timestamp] {
        &self.interval_timestamps
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.values[row * c..(row + 1) * c]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn stock_index(&self, stock_id: &str) -> Option<usize> {
        self.stock_ids.iter().position(|s| s == stock_id)
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        write_grid_csv(&self.interval_timestamps, &self.stock_ids, &self.values, sink)
    }

    pub fn read_csv<R: Read>(source: R, step_size: usize) -> Result<Self> {
        let (ts, ids, values) = read_grid_csv(source)?;
        GradientMatrix::new(step_size, ids, values, ts)
    }
}

pub fn build_gradients(matrix: &PriceMatrix, step_size: usize) -> Result<GradientMatrix> {
    let n = matrix.rows();
    if step_size < 2 {
        return Err(Error::InvalidWindow(format!("step size {step_size} below 2")));
    }
    if !n.is_multiple_of(step_size) {
        return Err(Error::Dimension(format!(
            "{n} price rows are not divisible by step size {step_size}"
        )));
    }
    let intervals = n / step_size;
    let cols = matrix.cols();
    let mut values = vec![0.0; intervals * cols];
    let mut window = vec![0.0; step_size];
    for c in 0..cols {
        for k in 0..intervals {
            for (i, w) in window.iter_mut().enumerate() {
                *w = matrix.get(k * step_size + i, c);
            }
            values[k * cols + c] = fit_trend(&window)?.slope;
        }
    }
    let instants = matrix.grid().instants();
    let stamps = (0..intervals).map(|k| instants[(k + 1) * step_size - 1]).collect();
    GradientMatrix::new(step_size, matrix.stock_ids().to_vec(), values, stamps)
}

/// Direction of a gradient move between consecutive intervals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Down,
    Up,
}

impl Direction {
    /// Ties (`current == previous`) count as down.
    pub fn of_change(previous: f64, current: f64) -> Self {
        if current > previous {
            Direction::Up
        } else {
            Direction::Down
        }
    }

    pub fn index(self) -> usize {
        match self {
            Direction::Down => 0,
            Direction::Up => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Direction::Down
        } else {
            Direction::Up
        }
    }

    pub fn one_hot(self) -> [f64; 2] {
        match self {
            Direction::Down => [1.0, 0.0],
            Direction::Up => [0.0, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    /// Gradients of every non-target stock at `interval_index - 1`.
    pub inputs: Vec<f64>,
    pub target: Direction,
    pub interval_index: usize,
    pub timestamp: Timestamp,
}

/// All examples for one target stock.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub target_stock: String,
    /// Stock behind each input position.
    pub input_ids: Vec<String>,
    pub examples: Vec<LabeledExample>,
}

pub fn build_labels(gradients: &GradientMatrix, target_stock: &str) -> Result<LabeledSet> {
    let target = gradients
        .stock_index(target_stock)
        .ok_or_else(|| Error::Config(format!("unknown target stock `{target_stock}`")))?;
    if gradients.rows() < 2 {
        return Err(Error::Dimension("labels need at least two gradient rows".into()));
    }
    let input_ids = gradients
        .stock_ids()
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != target)
        .map(|(_, id)| id.clone())
        .collect();
    let examples = (1..gradients.rows())
        .map(|t| {
            let prev = gradients.row(t - 1);
            let inputs = prev
                .iter()
                .enumerate()
                .filter(|(c, _)| *c != target)
                .map(|(_, g)| *g)
                .collect();
            LabeledExample {
                inputs,
                target: Direction::of_change(prev[target], gradients.get(t, target)),
                interval_index: t,
                timestamp: gradients.interval_timestamps()[t],
            }
        })
        .collect();
    Ok(LabeledSet {
        target_stock: target_stock.to_string(),
        input_ids,
        examples,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationParams {
    pub fn fit<'a, I>(inputs: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = inputs.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::EmptySplit("cannot fit normalization on no examples".into()))?;
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for x in iter {
            if x.len() != min.len() {
                return Err(Error::Dimension("ragged normalization inputs".into()));
            }
            for (i, v) in x.iter().enumerate() {
                min[i] = min[i].min(*v);
                max[i] = max[i].max(*v);
            }
        }
        Ok(NormalizationParams { min, max })
    }

    /// Constant features map to 0.5; unseen values are not clipped.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::TimeGrid;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn matrix(columns: &[Vec<f64>]) -> PriceMatrix {
        let grid = TimeGrid::new(
            chrono::Utc.with_ymd_and_hms(2011, 4, 1, 9, 30, 0).unwrap(),
            60_000,
            columns[0].len(),
            vec![],
        )
        .unwrap();
        let ids = (0..columns.len()).map(|i| format!("S{i}")).collect();
        PriceMatrix::from_columns(grid, ids, columns).unwrap()
    }

    #[test]
    fn exact_line_and_constant() {
        let fit = fit_trend(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((fit.slope, fit.intercept), (1.0, 1.0));
        assert_eq!(fit_trend(&[5.0, 5.0, 5.0]).unwrap().slope, 0.0);
        assert!(matches!(fit_trend(&[1.0]), Err(Error::InvalidWindow(_))));
    }

    #[test]
    fn hand_computed_fit() {
        // Σ(x-x̄)(y-ȳ) = 5.5, Σ(x-x̄)² = 5
        let fit = fit_trend(&[1.0, 3.0, 2.0, 5.0]).unwrap();
        assert!((fit.slope - 1.1).abs() < 1e-12);
        assert!((fit.intercept - 1.1).abs() < 1e-12);
    }

    #[test]
    fn gradients_over_disjoint_windows() {
        let m = matrix(&[vec![1.0, 2.0, 3.0, 4.0, 8.0, 10.0, 12.0, 14.0]]);
        let g = build_gradients(&m, 4).unwrap();
        assert_eq!(g.column(0), vec![1.0, 2.0]);
        assert_eq!(g.interval_timestamps()[0], m.grid().instants()[3]);
        assert_eq!(build_gradients(&m, 8).unwrap().rows(), 1);
        assert!(matches!(build_gradients(&m, 3), Err(Error::Dimension(_))));
        let flat = build_gradients(&matrix(&[vec![7.0; 6], vec![2.0; 6]]), 3).unwrap();
        assert!(flat.values.iter().all(|v| *v == 0.0));
    }

    fn gradient_matrix(columns: &[Vec<f64>]) -> GradientMatrix {
        let rows = columns[0].len();
        let cols = columns.len();
        let mut values = vec![0.0; rows * cols];
        for (c, col) in columns.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                values[r * cols + c] = *v;
            }
        }
        let t0 = chrono::Utc.with_ymd_and_hms(2011, 4, 1, 0, 0, 0).unwrap();
        let stamps = (0..rows).map(|r| t0 + chrono::Duration::days(r as i64)).collect();
        GradientMatrix::new(2, (0..cols).map(|i| format!("S{i}")).collect(), values, stamps).unwrap()
    }

    #[test]
    fn labels_follow_sign_of_change() {
        let g = gradient_matrix(&[vec![0.5, 0.7, 0.6], vec![1.0, 2.0, 3.0]]);
        let set = build_labels(&g, "S0").unwrap();
        let dirs: Vec<_> = set.examples.iter().map(|e| e.target).collect();
        assert_eq!(dirs, vec![Direction::Up, Direction::Down]);
        assert_eq!(set.examples[0].inputs, vec![1.0]);
        assert_eq!(set.examples[1].inputs, vec![2.0]);
        assert_eq!(set.input_ids, vec!["S1".to_string()]);
    }

    #[test]
    fn tie_is_down() {
        assert_eq!(Direction::of_change(0.3, 0.3), Direction::Down);
        assert_eq!(Direction::Down.one_hot(), [1.0, 0.0]);
    }

    #[test]
    fn wide_universe_drops_one_input() {
        let cols: Vec<Vec<f64>> = (0..449).map(|i| vec![i as f64, -(i as f64)]).collect();
        let set = build_labels(&gradient_matrix(&cols), "S17").unwrap();
        assert_eq!(set.examples[0].inputs.len(), 448);
        assert!(!set.input_ids.contains(&"S17".to_string()));
    }

    #[test]
    fn normalization_examples() {
        let rows = [vec![2.0, 3.0], vec![4.0, 3.0], vec![6.0, 3.0]];
        let p = NormalizationParams::fit(rows.iter().map(Vec::as_slice)).unwrap();
        let out: Vec<Vec<f64>> = rows.iter().map(|r| p.apply(r)).collect();
        assert_eq!(out, vec![vec![0.0, 0.5], vec![0.5, 0.5], vec![1.0, 0.5]]);
        // unseen values are not clipped
        assert_eq!(p.apply(&[8.0, 3.0])[0], 1.5);
        assert!(NormalizationParams::fit(std::iter::empty()).is_err());
    }

    #[test]
    fn gradient_csv_layout() {
        let g = gradient_matrix(&[vec![0.5, -0.25]]);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "timestamp,S0\n2011-04-01T00:00:00.000Z,0.5\n2011-04-02T00:00:00.000Z,-0.25\n"
        );
        assert_eq!(GradientMatrix::read_csv(buf.as_slice(), 2).unwrap(), g);
    }

    proptest! {
        #[test]
        fn slope_scale_and_shift(w in prop::collection::vec(-50.0f64..50.0, 2..20), c in 0.1f64..10.0, k in -100.0f64..100.0) {
            let base = fit_trend(&w).unwrap().slope;
            let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
            let shifted: Vec<f64> = w.iter().map(|v| v + k).collect();
            prop_assert!((fit_trend(&scaled).unwrap().slope - c * base).abs() < 1e-9 * (1.0 + base.abs() * c));
            prop_assert!((fit_trend(&shifted).unwrap().slope - base).abs() < 1e-9);
        }

        #[test]
        fn residuals_are_minimal(w in prop::collection::vec(-5.0f64..5.0, 2..8), eps in 1e-4f64..1e-1) {
            let fit = fit_trend(&w).unwrap();
            let q = fit.residual_sum_of_squares(&w);
            for (db0, db1) in [(eps, 0.0), (-eps, 0.0), (0.0, eps), (0.0, -eps), (eps, -eps)] {
                let moved = RegressionFit { intercept: fit.intercept + db0, slope: fit.slope + db1 };
                prop_assert!(moved.residual_sum_of_squares(&w) >= q - 1e-12);
            }
        }

        #[test]
        fn labels_partition_and_leave_target_out(cols in prop::collection::vec(prop::collection::vec(-3i32..3, 6), 2..6), target in 0usize..6) {
            let cols: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().map(|v| *v as f64).collect()).collect();
            let target = target % cols.len();
            let g = gradient_matrix(&cols);
            let set = build_labels(&g, &format!("S{target}")).unwrap();
            let ups = set.examples.iter().filter(|e| e.target == Direction::Up).count();
            let downs = set.examples.len() - ups;
            prop_assert_eq!(ups + downs, g.rows() - 1);
            for e in &set.examples {
                for (pos, id) in set.input_ids.iter().enumerate() {
                    let c = g.stock_index(id).unwrap();
                    prop_assert!(c != target);
                    prop_assert_eq!(e.inputs[pos], g.get(e.interval_index - 1, c));
                }
            }
        }

        #[test]
        fn renormalizing_yields_unit_range(rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 2..30)) {
            let p = NormalizationParams::fit(rows.iter().map(Vec::as_slice)).unwrap();
            let normed: Vec<Vec<f64>> = rows.iter().map(|r| p.apply(r)).collect();
            let q = NormalizationParams::fit(normed.iter().map(Vec::as_slice)).unwrap();
            for i in 0..3 {
                if p.max[i] > p.min[i] {
                    prop_assert_eq!(q.min[i], 0.0);
                    prop_assert_eq!(q.max[i], 1.0);
                }
            }
        }
    }
}
