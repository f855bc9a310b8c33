//! Seeded multi-trial experiments: recovery sweeps over `(n, N/n)` grids,
//! single recurrence runs, and concentration-scaling campaigns.
//!
//! Every trial draws its instance from `derive_seed(master, [n, N, trial])`,
//! so a cell's results do not depend on which other cells are in the grid or
//! on how trials are scheduled across threads.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    check_ergodic_recovery, check_last_iterate_recovery, concentration_sup, Probe,
    MAX_EXHAUSTIVE_DIM,
};
use crate::error::{Error, Result};
use crate::model::{synthesize_dataset, NetworkSpec, NoiseSpec};
use crate::optimizer::{run, InitSpec, StepSchedule};
use crate::record::RunRecord;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessKind {
    Ergodic,
    LastIterate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub m: usize,
    pub dims: Vec<usize>,
    /// `N/n` multipliers; each cell uses `N = round(ratio·n)`.
    pub ratios: Vec<f64>,
    pub trials_per_cell: usize,
    pub iterations: usize,
    pub noise: NoiseSpec,
    pub schedule: StepSchedule,
    /// For `BoundedUniform` the seed is replaced by the per-trial seed.
    pub init: InitSpec,
    pub master_seed: u64,
    pub success_kind: SuccessKind,
    pub max_cells: usize,
    /// Ceiling on `trials·T·N·m·n·2` per cell.
    pub max_cell_flops: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            m: 128,
            dims: vec![10, 25, 50],
            ratios: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            trials_per_cell: 100,
            iterations: 500,
            noise: NoiseSpec::None,
            schedule: StepSchedule::default(),
            init: InitSpec::Zero,
            master_seed: 0,
            success_kind: SuccessKind::Ergodic,
            max_cells: 1000,
            max_cell_flops: 1e13,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.trials_per_cell == 0 || self.iterations == 0 {
            return Err(Error::invalid("m, trials_per_cell and T must be >= 1"));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::invalid(
                "dims must be a non-empty list of positive integers",
            ));
        }
        if self.ratios.is_empty() || self.ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::invalid(
                "ratios must be a non-empty list of positive numbers",
            ));
        }
        self.schedule.validate()
    }

    /// Grid cells `(n, N)` in row-major `dims × ratios` order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.dims
            .iter()
            .flat_map(|&n| {
                self.ratios
                    .iter()
                    .map(move |&r| (n, ((r * n as f64).round() as usize).max(1)))
            })
            .collect()
    }

    pub fn cell_flops(&self, n: usize, n_samples: usize) -> f64 {
        2.0 * self.trials_per_cell as f64
            * self.iterations as f64
            * n_samples as f64
            * self.m as f64
            * n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub n: usize,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub trials: usize,
    pub ergodic_successes: usize,
    pub last_iterate_successes: usize,
    pub success_kind: SuccessKind,
}

impl CellResult {
    pub fn successes(&self) -> usize {
        self.successes_for(self.success_kind)
    }

    pub fn successes_for(&self, kind: SuccessKind) -> usize {
        match kind {
            SuccessKind::Ergodic => self.ergodic_successes,
            SuccessKind::LastIterate => self.last_iterate_successes,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate_for(self.success_kind)
    }

    pub fn rate_for(&self, kind: SuccessKind) -> f64 {
        self.successes_for(kind) as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub config: SweepConfig,
    pub cells: Vec<CellResult>,
    pub wall_time_secs: f64,
}

impl RecoveryReport {
    pub fn cell(&self, n: usize, n_samples: usize) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.n == n && c.n_samples == n_samples)
    }

    /// Smallest `N` in the grid for dimension `n` whose rate reaches `level`.
    pub fn min_samples_reaching(&self, n: usize, kind: SuccessKind, level: f64) -> Option<usize> {
        self.cells
            .iter()
            .filter(|c| c.n == n && c.rate_for(kind) >= level)
            .map(|c| c.n_samples)
            .min()
    }
}

/// Seed shared by every random draw of one trial.
pub fn trial_seed(master: u64, n: usize, n_samples: usize, trial: usize) -> u64 {
    rng::derive_seed(master, &[n as u64, n_samples as u64, trial as u64])
}

fn trial_init(init: &InitSpec, seed: u64) -> InitSpec {
    match *init {
        InitSpec::Zero => InitSpec::Zero,
        InitSpec::BoundedUniform { c0, .. } => InitSpec::BoundedUniform { c0, seed },
    }
}

/// Draws a fresh instance `(v, w*, Z, ξ)` for one trial.
pub fn draw_trial(
    m: usize,
    n: usize,
    n_samples: usize,
    noise: NoiseSpec,
    seed: u64,
) -> Result<crate::Dataset> {
    let spec = NetworkSpec::random(m, n, &mut rng::stream(seed, &[rng::tag::INSTANCE]))?;
    synthesize_dataset(&spec, n_samples, noise, seed)
}

fn run_cell(config: &SweepConfig, n: usize, n_samples: usize) -> Result<CellResult> {
    let outcomes: Vec<(bool, bool)> = (0..config.trials_per_cell)
        .into_par_iter()
        .map(|k| {
            let seed = trial_seed(config.master_seed, n, n_samples, k);
            let data = draw_trial(config.m, n, n_samples, config.noise, seed)?;
            let rec = run(
                &data,
                config.schedule,
                &trial_init(&config.init, seed),
                config.iterations,
                &mut (),
            )?;
            Ok((
                check_ergodic_recovery(&rec, config.iterations)?,
                check_last_iterate_recovery(&rec, config.iterations)?,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(CellResult {
        n,
        n_samples,
        trials: outcomes.len(),
        ergodic_successes: outcomes.iter().filter(|o| o.0).count(),
        last_iterate_successes: outcomes.iter().filter(|o| o.1).count(),
        success_kind: config.success_kind,
    })
}

/// Runs every grid cell and aggregates recovery rates for both success
/// criteria; `success_kind` selects the one reported by `successes()`.
pub fn run_sweep(config: &SweepConfig) -> Result<RecoveryReport> {
    config.validate()?;
    let cells = config.cells();
    if cells.len() > config.max_cells {
        return Err(Error::BudgetExceeded {
            what: "sweep grid cells".into(),
            requested: cells.len() as f64,
            limit: config.max_cells as f64,
        });
    }
    for &(n, big_n) in &cells {
        let flops = config.cell_flops(n, big_n);
        if flops > config.max_cell_flops {
            return Err(Error::BudgetExceeded {
                what: format!("cell n={n} N={big_n} flops"),
                requested: flops,
                limit: config.max_cell_flops,
            });
        }
    }
    let start = Instant::now();
    let results = cells
        .iter()
        .map(|&(n, big_n)| run_cell(config, n, big_n))
        .collect::<Result<Vec<_>>>()?;
    Ok(RecoveryReport {
        config: config.clone(),
        cells: results,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// One training run on a freshly drawn instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSetup {
    pub m: usize,
    pub n: usize,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub noise: NoiseSpec,
    pub iterations: usize,
    pub schedule: StepSchedule,
    pub init: InitSpec,
    pub seed: u64,
}

impl RunSetup {
    /// Noisy recurrence setting: `m = 128, n = 25, N = 140`, unit-variance
    /// label noise, `T = 2000`.
    pub fn recurrence(sigma: f64, seed: u64) -> Self {
        Self {
            m: 128,
            n: 25,
            n_samples: 140,
            noise: NoiseSpec::Gaussian { sigma },
            iterations: 2000,
            schedule: StepSchedule::default(),
            init: InitSpec::Zero,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceSummary {
    pub visits: usize,
    pub escapes: usize,
    pub first_visit: Option<usize>,
    /// Fraction of iterations `1..=T` spent exactly at `w*`.
    pub time_at_optimum: f64,
    /// Escapes per visit.
    pub escape_frequency: f64,
    pub final_hamming: u32,
}

impl RecurrenceSummary {
    pub fn from_record(record: &RunRecord) -> Self {
        let at = record.hamming().iter().filter(|&&h| h == 0).count();
        let visits = record.visits().len();
        let escapes = record.escapes().len();
        Self {
            visits,
            escapes,
            first_visit: record.visits().first().copied(),
            time_at_optimum: at as f64 / record.len().max(1) as f64,
            escape_frequency: if visits == 0 {
                0.0
            } else {
                escapes as f64 / visits as f64
            },
            final_hamming: record.hamming().last().copied().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub setup: RunSetup,
    pub spec: NetworkSpec,
    pub record: RunRecord,
    pub summary: RecurrenceSummary,
}

/// Draws one instance from `setup.seed` and runs it, returning the per-iteration
/// distance and loss series with the visit/escape summary.
pub fn run_recurrence_experiment(setup: &RunSetup) -> Result<RunOutcome> {
    if setup.m == 0 || setup.n == 0 || setup.n_samples == 0 {
        return Err(Error::invalid("m, n and N must be >= 1"));
    }
    if setup.noise.sigma() < 0.0 {
        return Err(Error::invalid("sigma must be >= 0"));
    }
    let data = draw_trial(setup.m, setup.n, setup.n_samples, setup.noise, setup.seed)?;
    let init = trial_init(&setup.init, setup.seed);
    let record = run(&data, setup.schedule, &init, setup.iterations, &mut ())?;
    Ok(RunOutcome {
        setup: setup.clone(),
        spec: data.spec().clone(),
        summary: RecurrenceSummary::from_record(&record),
        record,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VSpec {
    /// i.i.d. standard Gaussian entries drawn from the campaign seed.
    Gaussian,
    Explicit {
        v: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub deltas: Vec<f64>,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub median_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationTable {
    pub spec: NetworkSpec,
    pub rows: Vec<ConcentrationRow>,
    /// Least-squares slope of `ln(median δ)` against `ln N`.
    pub slope: Option<f64>,
}

/// Linear-interpolation quantile of an ascending slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Least-squares slope of `y` on `x`; `None` with fewer than two distinct `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if x.len() < 2 || sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

/// For each `N`, draws `repeats` fresh datasets for one fixed network and
/// measures the exhaustive sup-norm drift deviation.
pub fn run_concentration_campaign(
    n: usize,
    m: usize,
    v_spec: &VSpec,
    n_list: &[usize],
    repeats: usize,
    noise: NoiseSpec,
    seed: u64,
) -> Result<ConcentrationTable> {
    if n > MAX_EXHAUSTIVE_DIM {
        return Err(Error::BudgetExceeded {
            what: "exhaustive hypercube probe".into(),
            requested: 2f64.powi(n as i32),
            limit: 2f64.powi(MAX_EXHAUSTIVE_DIM as i32),
        });
    }
    if n_list.is_empty() || n_list.contains(&0) || repeats == 0 {
        return Err(Error::invalid(
            "need a non-empty N list of positive values and repeats >= 1",
        ));
    }
    let mut r = rng::stream(seed, &[rng::tag::INSTANCE]);
    let random = NetworkSpec::random(m, n, &mut r)?;
    let spec = match v_spec {
        VSpec::Gaussian => random,
        VSpec::Explicit { v } => {
            if v.len() != m {
                return Err(Error::invalid(format!(
                    "explicit v has length {}, expected m = {m}",
                    v.len()
                )));
            }
            NetworkSpec::new(v.clone(), random.w_star().to_vec())?
        }
    };
    let mut rows = Vec::with_capacity(n_list.len());
    for &big_n in n_list {
        let diags: Vec<_> = (0..repeats)
            .into_par_iter()
            .map(|k| {
                let s = rng::derive_seed(seed, &[big_n as u64, k as u64]);
                let data = synthesize_dataset(&spec, big_n, noise, s)?;
                concentration_sup(&data, Probe::Exhaustive)
            })
            .collect::<Result<_>>()?;
        let deltas: Vec<f64> = diags.iter().map(|d| d.delta_emp).collect();
        let mut sorted = deltas.clone();
        sorted.sort_by(f64::total_cmp);
        let median = quantile(&sorted, 0.5);
        rows.push(ConcentrationRow {
            n_samples: big_n,
            median,
            q10: quantile(&sorted, 0.1),
            q90: quantile(&sorted, 0.9),
            median_rho: median / diags[0].drift_magnitude,
            deltas,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n_samples as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.median.ln()).collect();
    Ok(ConcentrationTable {
        spec,
        slope: fit_slope(&xs, &ys),
        rows,
    })
}
