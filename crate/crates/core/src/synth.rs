//! Synthetic multi-stock panels with planted lag-1 cross-stock structure.
//!
//! Every stock carries a latent per-step trend `r` (log-return per step).
//! Each step the trend moves by an increment
//!
//! ```text
//! Δraw_j = drift + s·A·tanh(gain · Σ_i C_ji z_i) + (1 - s)·σ·ε_j
//! ```
//!
//! where `z_i` is stock `i`'s least-squares trend over the previous step's
//! ticks (in units of the trend bound), `s` the signal strength and `C` a
//! zero-diagonal coupling matrix. The increment is squashed and applied with a
//! soft reflection that keeps `r` inside `(-R, R)` while preserving its sign,
//! so the direction of the trend change equals `sign(Δraw)`. Within a step the
//! log-price moves linearly by `r` across `ticks_per_step` ticks and every
//! tick adds independent micro-noise, which makes short regression windows
//! noisier than long ones.

use chrono::{Duration, TimeZone};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_gradients, fit_trend, Direction};
use crate::market_data::{PriceMatrix, TickRecord, TimeGrid, Timestamp};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSwitch {
    pub switch_step: usize,
    pub crisis_drift: f64,
    pub crisis_sigma_multiplier: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_stocks: usize,
    pub n_steps: usize,
    pub ticks_per_step: usize,
    /// Share of the trend increment driven by other stocks' previous trends.
    pub signal_strength: f64,
    /// Row `j` weights the stocks driving stock `j`. When absent a random
    /// antisymmetric matrix is drawn from `seed`.
    pub coupling_matrix: Option<Vec<Vec<f64>>>,
    pub coupling_gain: f64,
    pub signal_scale: f64,
    pub noise_sigma: f64,
    pub trend_bound: f64,
    pub micro_sigma: f64,
    /// Mean trend increment per step.
    pub drift: f64,
    /// Pull of the log-price back to its base level, per step.
    pub level_reversion: f64,
    pub base_price: f64,
    pub regime_switch: Option<RegimeSwitch>,
    pub start: Timestamp,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_stocks: 20,
            n_steps: 3000,
            ticks_per_step: 16,
            signal_strength: 0.5,
            coupling_matrix: None,
            coupling_gain: 2.0,
            signal_scale: 0.01,
            noise_sigma: 0.01,
            trend_bound: 0.01,
            micro_sigma: 0.001,
            drift: 0.0,
            level_reversion: 0.005,
            base_price: 100.0,
            regime_switch: None,
            start: chrono::Utc.with_ymd_and_hms(2003, 1, 1, 0, 0, 0).unwrap(),
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("synthetic: {what}")))
            }
        };
        check(self.n_stocks >= 2, "n_stocks must be at least 2")?;
        check(self.n_steps >= 2, "n_steps must be at least 2")?;
        check(self.ticks_per_step >= 2, "ticks_per_step must be at least 2")?;
        check(
            (0.0..=1.0).contains(&self.signal_strength),
            "signal_strength must lie in [0, 1]",
        )?;
        check(
            self.noise_sigma >= 0.0 && self.micro_sigma >= 0.0,
            "noise scales must be non-negative",
        )?;
        check(self.signal_scale >= 0.0, "signal_scale must be non-negative")?;
        check(self.trend_bound > 0.0, "trend_bound must be positive")?;
        check(
            (0.0..1.0).contains(&self.level_reversion),
            "level_reversion must lie in [0, 1)",
        )?;
        check(self.base_price > 0.0, "base_price must be positive")?;
        check(86_400_000 / self.ticks_per_step as i64 > 0, "ticks_per_step too large")?;
        if let Some(rs) = &self.regime_switch {
            check(
                rs.crisis_sigma_multiplier >= 0.0,
                "crisis_sigma_multiplier must be non-negative",
            )?;
        }
        if let Some(c) = &self.coupling_matrix {
            check(
                c.len() == self.n_stocks && c.iter().all(|row| row.len() == self.n_stocks),
                "coupling_matrix must be n_stocks x n_stocks",
            )?;
            check(
                c.iter().enumerate().all(|(j, row)| row[j] == 0.0),
                "coupling_matrix diagonal must be zero",
            )?;
        }
        Ok(())
    }

    pub fn stock_ids(&self) -> Vec<String> {
        let width = self.n_stocks.to_string().len();
        (0..self.n_stocks).map(|i| format!("SYN{i:0width$}")).collect()
    }

    /// Milliseconds between ticks; one step spans a calendar day.
    pub fn tick_ms(&self) -> i64 {
        86_400_000 / self.ticks_per_step as i64
    }

    /// Timestamp of the first tick of `step`.
    pub fn step_start(&self, step: usize) -> Timestamp {
        self.start + Duration::milliseconds(self.tick_ms() * (step * self.ticks_per_step) as i64)
    }

    fn regime(&self, step: usize) -> (f64, f64) {
        match &self.regime_switch {
            Some(rs) if step >= rs.switch_step => (rs.crisis_drift, self.noise_sigma * rs.crisis_sigma_multiplier),
            _ => (self.drift, self.noise_sigma),
        }
    }
}

/// Coupling and base prices, drawn independently of the path length.
/// The default coupling is scaled to unit mean squared row norm.
fn static_draws(config: &SyntheticConfig) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(7);
    let n = config.n_stocks;
    let coupling = match &config.coupling_matrix {
        Some(c) => c.clone(),
        None => {
            let g: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            let mut c: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| g[j][i] - g[i][j]).collect()).collect();
            let scale = (c.iter().flatten().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
            c.iter_mut().flatten().for_each(|v| *v /= scale);
            c
        }
    };
    let base = (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            config.base_price * (0.3 * v).exp()
        })
        .collect();
    (coupling, base)
}

/// A generated panel plus the generator's conditional expectations.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub matrix: PriceMatrix,
    /// `drift + s·A·f` per step (row) and stock (column): the mean of the
    /// trend increment given the previous step's trends.
    pub expected_increment: Vec<f64>,
    pub coupling: Vec<Vec<f64>>,
}

pub fn simulate(config: &SyntheticConfig) -> Result<Simulation> {
    config.validate()?;
    let n = config.n_stocks;
    let ticks = config.ticks_per_step;
    let (coupling, base) = static_draws(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let bound = config.trend_bound;
    let s = config.signal_strength;
    let base_log: Vec<f64> = base.iter().map(|p| p.ln()).collect();
    let mut level = base_log.clone();
    let mut trend = vec![0.0; n];
    // normalized trend estimates of the previous step
    let mut z: Option<Vec<f64>> = None;

    let rows = config.n_steps * ticks;
    let mut values = vec![0.0; rows * n];
    let mut expected = vec![0.0; config.n_steps * n];
    let mut window = vec![0.0; ticks];
    for step in 0..config.n_steps {
        let (drift, sigma) = config.regime(step);
        for j in 0..n {
            let signal = match &z {
                Some(z) => {
                    let x: f64 = coupling[j].iter().zip(z).map(|(c, v)| c * v).sum();
                    (config.coupling_gain * x).tanh()
                }
                None => 0.0,
            };
            let mean_inc = drift + s * config.signal_scale * signal;
            expected[step * n + j] = mean_inc;
            let eps: f64 = StandardNormal.sample(&mut rng);
            let raw = mean_inc + (1.0 - s) * sigma * eps;
            let inc = bound * (raw / bound).tanh();
            trend[j] += inc * (1.0 - trend[j] * inc.signum() / bound);
        }

        let mut next_z = vec![0.0; n];
        for j in 0..n {
            for (m, w) in window.iter_mut().enumerate() {
                let eta: f64 = StandardNormal.sample(&mut rng);
                let log_p = level[j] + trend[j] * (m + 1) as f64 / ticks as f64 + config.micro_sigma * eta;
                *w = log_p.exp();
                values[(step * ticks + m) * n + j] = *w;
            }
            let mean_price = window.iter().sum::<f64>() / ticks as f64;
            let slope = fit_trend(&window)?.slope;
            next_z[j] = slope * ticks as f64 / mean_price / bound;
            level[j] += trend[j] - config.level_reversion * (level[j] - base_log[j]);
        }
        z = Some(next_z);
    }

    let grid = TimeGrid::new(config.start, config.tick_ms(), rows, vec![])?;
    let matrix = PriceMatrix::new(grid, config.stock_ids(), values, vec![false; rows * n])?;
    Ok(Simulation {
        matrix,
        expected_increment: expected,
        coupling,
    })
}

pub fn generate(config: &SyntheticConfig) -> Result<PriceMatrix> {
    Ok(simulate(config)?.matrix)
}

/// The panel as tick rows for the CSV ingestion path. `avg_price` carries
/// the panel price exactly; bid/ask straddle it.
pub fn generate_ticks(config: &SyntheticConfig) -> Result<Vec<TickRecord>> {
    let matrix = generate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(11);
    let mut ticks = matrix.to_ticks();
    for t in &mut ticks {
        let p = t.avg_price.expect("panel tick has a price");
        t.bid = Some(p * 0.9995);
        t.ask = Some(p * 1.0005);
        t.volume = Some(rng.gen_range(100..5000) as f64);
    }
    Ok(ticks)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleBound {
    pub stock_ids: Vec<String>,
    pub per_stock: Vec<f64>,
    pub monte_carlo_error: Vec<f64>,
    pub mean: f64,
    /// Standard error of `mean`.
    pub mean_error: f64,
}

/// Monte-Carlo accuracy of the rule-aware predictor that calls "up" exactly
/// when the expected trend increment is positive. Runs the generator for at
/// least `n_mc` labelled steps, keeping any regime switch at the same
/// relative position.
pub fn oracle_accuracy(config: &SyntheticConfig, n_mc: usize) -> Result<OracleBound> {
    if n_mc < 10_000 {
        return Err(Error::Config(format!("oracle needs n_mc >= 10000, got {n_mc}")));
    }
    let mut long = config.clone();
    long.n_steps = config.n_steps.max(n_mc + 1);
    if let Some(rs) = &mut long.regime_switch {
        rs.switch_step = (rs.switch_step as f64 * long.n_steps as f64 / config.n_steps as f64).round() as usize;
    }
    let sim = simulate(&long)?;
    let gradients = build_gradients(&sim.matrix, long.ticks_per_step)?;
    let n = long.n_stocks;
    let labels = gradients.rows() - 1;

    let mut per_stock = Vec::with_capacity(n);
    let mut errors = Vec::with_capacity(n);
    for j in 0..n {
        let hits = (1..gradients.rows())
            .filter(|&t| {
                let truth = Direction::of_change(gradients.get(t - 1, j), gradients.get(t, j));
                let call = Direction::of_change(0.0, sim.expected_increment[t * n + j]);
                truth == call
            })
            .count();
        let p = hits as f64 / labels as f64;
        per_stock.push(p);
        errors.push((p * (1.0 - p) / labels as f64).sqrt().max(0.5 / labels as f64));
    }
    let mean = per_stock.iter().sum::<f64>() / n as f64;
    let mean_error = errors.iter().map(|e| e * e).sum::<f64>().sqrt() / n as f64;
    Ok(OracleBound {
        stock_ids: long.stock_ids(),
        per_stock,
        monte_carlo_error: errors,
        mean,
        mean_error,
    })
}
