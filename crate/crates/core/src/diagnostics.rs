//! Measurement apparatus: ergodic averages and recovery checks, recurrence
//! events, per-coordinate occupation statistics, and empirical checks of the
//! linear drift approximation of the surrogate gradient.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, quantize, synthesize_dataset, unit, Dataset, NetworkSpec, NoiseSpec};
use crate::optimizer::StepSchedule;
use crate::record::RunRecord;
use crate::rng;

/// Largest dimension for which the whole hypercube is enumerated.
pub const MAX_EXHAUSTIVE_DIM: usize = 16;

/// `τ = 2√(2π)`.
pub fn tau() -> f64 {
    2.0 * (2.0 * PI).sqrt()
}

fn check_horizon(record: &RunRecord, horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::invalid("horizon T must be >= 1"));
    }
    if horizon > record.len() {
        return Err(Error::invalid(format!(
            "horizon T = {horizon} exceeds recorded length {}",
            record.len()
        )));
    }
    Ok(())
}

/// `(1/T)·Σ_{t=1..T} wᵗ`, computed from sign counts.
pub fn ergodic_average(record: &RunRecord, horizon: usize) -> Result<Vec<f64>> {
    check_horizon(record, horizon)?;
    let n = record.n();
    let u = unit(n);
    let mut balance = vec![0i64; n];
    for t in 1..=horizon {
        for (j, b) in balance.iter_mut().enumerate() {
            *b += if record.positive(t, j) { 1 } else { -1 };
        }
    }
    Ok(balance
        .into_iter()
        .map(|b| b as f64 * u / horizon as f64)
        .collect())
}

pub fn check_ergodic_recovery(record: &RunRecord, horizon: usize) -> Result<bool> {
    let avg = ergodic_average(record, horizon)?;
    Ok(quantize(&avg) == record.w_star())
}

pub fn check_last_iterate_recovery(record: &RunRecord, horizon: usize) -> Result<bool> {
    check_horizon(record, horizon)?;
    Ok(record.hamming()[horizon - 1] == 0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurrenceEvents {
    pub visits: Vec<usize>,
    pub escapes: Vec<usize>,
}

impl RecurrenceEvents {
    pub fn visit_count(&self) -> usize {
        self.visits.len()
    }

    pub fn escape_count(&self) -> usize {
        self.escapes.len()
    }
}

pub fn recurrence_events(record: &RunRecord) -> RecurrenceEvents {
    RecurrenceEvents {
        visits: record.visits().to_vec(),
        escapes: record.escapes().to_vec(),
    }
}

/// Sign-phase structure of one coordinate over `t = 1..T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateOccupation {
    pub incorrect_phases: Vec<usize>,
    pub correct_phases: Vec<usize>,
    pub incorrect_time: usize,
    pub correct_time: usize,
    pub incorrect_fraction: f64,
    /// First `t` with `η_{t+1}/η_t ≥ 0.9` at which the coordinate has already
    /// changed sign at least once; `None` if it never does.
    pub burn_in: Option<usize>,
    /// Longest incorrect phase starting at or after burn-in.
    pub max_incorrect_after_burn_in: Option<usize>,
    /// Shortest complete correct phase (bounded by incorrect phases on both
    /// sides) starting at or after burn-in.
    pub min_correct_after_burn_in: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationStats {
    pub rho: f64,
    /// `L = ceil((1 − 2ρ)/ρ)` when `0 < ρ < 1/2`.
    pub min_correct_bound: Option<usize>,
    pub coordinates: Vec<CoordinateOccupation>,
    pub incorrect_histogram: BTreeMap<usize, usize>,
    pub correct_histogram: BTreeMap<usize, usize>,
}

impl OccupationStats {
    pub fn max_incorrect_after_burn_in(&self) -> Option<usize> {
        self.coordinates
            .iter()
            .filter_map(|c| c.max_incorrect_after_burn_in)
            .max()
    }

    pub fn min_correct_after_burn_in(&self) -> Option<usize> {
        self.coordinates
            .iter()
            .filter_map(|c| c.min_correct_after_burn_in)
            .min()
    }
}

fn burn_in_ready(schedule: &StepSchedule, t: usize) -> bool {
    schedule.eta(t + 1) / schedule.eta(t) >= 0.9
}

fn coordinate_occupation(record: &RunRecord, j: usize) -> CoordinateOccupation {
    let horizon = record.len();
    let target = record.w_star()[j] > 0.0;
    let schedule = record.schedule();
    let correct = |t: usize| record.positive(t, j) == target;

    // phases as (start, length, correct)
    let mut phases: Vec<(usize, usize, bool)> = Vec::new();
    let mut burn_in = None;
    let mut crossed = false;
    for t in 1..=horizon {
        let c = correct(t);
        if c != correct(t - 1) {
            crossed = true;
        }
        if burn_in.is_none() && crossed && burn_in_ready(&schedule, t) {
            burn_in = Some(t);
        }
        match phases.last_mut() {
            Some((_, len, pc)) if *pc == c => *len += 1,
            _ => phases.push((t, 1, c)),
        }
    }

    let mut max_incorrect = None;
    let mut min_correct: Option<usize> = None;
    if let Some(b) = burn_in {
        for (k, &(start, len, c)) in phases.iter().enumerate() {
            if start < b {
                continue;
            }
            if !c {
                max_incorrect = max_incorrect.max(Some(len));
            } else if k > 0 && k + 1 < phases.len() {
                min_correct = Some(min_correct.map_or(len, |m| m.min(len)));
            }
        }
    }

    let incorrect_phases: Vec<usize> = phases.iter().filter(|p| !p.2).map(|p| p.1).collect();
    let correct_phases: Vec<usize> = phases.iter().filter(|p| p.2).map(|p| p.1).collect();
    let incorrect_time: usize = incorrect_phases.iter().sum();
    let correct_time: usize = correct_phases.iter().sum();
    CoordinateOccupation {
        incorrect_fraction: incorrect_time as f64 / horizon.max(1) as f64,
        incorrect_phases,
        correct_phases,
        incorrect_time,
        correct_time,
        burn_in,
        max_incorrect_after_burn_in: max_incorrect,
        min_correct_after_burn_in: min_correct,
    }
}

/// Segments each coordinate's sign history into incorrect/correct phases and
/// reports them against the one-step-reset and minimum-cycle comparators.
pub fn occupation_stats(record: &RunRecord, rho_emp: f64) -> OccupationStats {
    let coordinates: Vec<CoordinateOccupation> = (0..record.n())
        .map(|j| coordinate_occupation(record, j))
        .collect();
    let mut incorrect_histogram = BTreeMap::new();
    let mut correct_histogram = BTreeMap::new();
    for c in &coordinates {
        for &l in &c.incorrect_phases {
            *incorrect_histogram.entry(l).or_insert(0) += 1;
        }
        for &l in &c.correct_phases {
            *correct_histogram.entry(l).or_insert(0) += 1;
        }
    }
    let min_correct_bound =
        (rho_emp > 0.0 && rho_emp < 0.5).then(|| ((1.0 - 2.0 * rho_emp) / rho_emp).ceil() as usize);
    OccupationStats {
        rho: rho_emp,
        min_correct_bound,
        coordinates,
        incorrect_histogram,
        correct_histogram,
    }
}

/// Perturbation `(‖v‖²/τ)(w − w*) − ∇̃L(w)`.
pub fn drift_residual(w: &[f64], data: &Dataset) -> Result<Vec<f64>> {
    let spec = data.spec();
    let g = crate::optimizer::ste_gradient(w, data)?;
    let scale = spec.v_norm_sq() / tau();
    Ok(w.iter()
        .zip(spec.w_star())
        .zip(&g)
        .map(|((wi, si), gi)| scale * (wi - si) - gi)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Probe {
    /// All `2ⁿ` hypercube points; requires `n ≤ 16`.
    Exhaustive,
    /// `count` uniformly drawn hypercube points.
    Sampled { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftDiagnostics {
    pub tau: f64,
    /// Per-coordinate drift strength `2‖v‖²/(τ√n)`.
    pub drift_magnitude: f64,
    /// `max_w ‖drift_residual(w)‖∞` over the probed points.
    pub delta_emp: f64,
    pub rho_emp: f64,
    pub probes: usize,
    pub occupation: Option<OccupationStats>,
}

fn hypercube_point(bits: u64, n: usize) -> Vec<f64> {
    let u = unit(n);
    (0..n)
        .map(|j| if bits >> j & 1 == 1 { u } else { -u })
        .collect()
}

/// Empirical sup-norm deviation of the surrogate gradient from its linear
/// drift over the probed hypercube points.
pub fn concentration_sup(data: &Dataset, probe: Probe) -> Result<DriftDiagnostics> {
    let n = data.spec().n();
    let points: Vec<Vec<f64>> = match probe {
        Probe::Exhaustive => {
            if n > MAX_EXHAUSTIVE_DIM {
                return Err(Error::BudgetExceeded {
                    what: "exhaustive hypercube probe".into(),
                    requested: 2f64.powi(n as i32),
                    limit: 2f64.powi(MAX_EXHAUSTIVE_DIM as i32),
                });
            }
            (0..1u64 << n).map(|b| hypercube_point(b, n)).collect()
        }
        Probe::Sampled { count, seed } => {
            if count == 0 {
                return Err(Error::invalid("sampled probe needs count >= 1"));
            }
            let mut r = rng::stream(seed, &[rng::tag::PROBE]);
            let u = unit(n);
            (0..count)
                .map(|_| {
                    (0..n)
                        .map(|_| if r.gen::<bool>() { u } else { -u })
                        .collect()
                })
                .collect()
        }
    };
    let mut delta = 0.0f64;
    for w in &points {
        let r = drift_residual(w, data)?;
        delta = r.iter().fold(delta, |acc, x| acc.max(x.abs()));
    }
    let t = tau();
    let drift_magnitude = 2.0 * data.spec().v_norm_sq() / (t * (n as f64).sqrt());
    Ok(DriftDiagnostics {
        tau: t,
        drift_magnitude,
        delta_emp: delta,
        rho_emp: delta / drift_magnitude,
        probes: points.len(),
        occupation: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationCheck {
    pub estimate: Vec<f64>,
    /// `(w − w*)/τ`.
    pub target: Vec<f64>,
    /// `‖estimate − target‖∞`.
    pub deviation: f64,
}

/// Monte-Carlo estimate of `E[(1{zᵀw>0} − 1{zᵀw*>0})·1{zᵀw>0}·z]` for
/// `z ~ N(0, Iₙ)`, compared with `(w − w*)/τ`.
pub fn expectation_identity_check(
    w: &[f64],
    w_star: &[f64],
    draws: usize,
    seed: u64,
) -> Result<ExpectationCheck> {
    let n = w.len();
    if n == 0 || w_star.len() != n {
        return Err(Error::invalid(
            "w and w_star must be non-empty and equal length",
        ));
    }
    if !model::in_hypercube(w) || !model::in_hypercube(w_star) {
        return Err(Error::invalid(
            "w and w_star must lie on the scaled hypercube",
        ));
    }
    if draws == 0 {
        return Err(Error::invalid("need at least one Monte-Carlo draw"));
    }
    let mut r = rng::stream(seed, &[rng::tag::PROBE]);
    let mut z = vec![0.0; n];
    let mut acc = vec![0.0; n];
    for _ in 0..draws {
        for zi in z.iter_mut() {
            *zi = r.sample(StandardNormal);
        }
        // D·1{zᵀw>0} is nonzero only when zᵀw > 0 and zᵀw* ≤ 0, where it equals 1
        if model::dot(&z, w) > 0.0 && model::dot(&z, w_star) <= 0.0 {
            for (a, zi) in acc.iter_mut().zip(&z) {
                *a += zi;
            }
        }
    }
    let t = tau();
    let estimate: Vec<f64> = acc.iter().map(|a| a / draws as f64).collect();
    let target: Vec<f64> = w.iter().zip(w_star).map(|(a, b)| (a - b) / t).collect();
    let deviation = estimate
        .iter()
        .zip(&target)
        .fold(0.0f64, |m, (e, g)| m.max((e - g).abs()));
    Ok(ExpectationCheck {
        estimate,
        target,
        deviation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub trials: usize,
    /// Per coordinate, fraction of trials with `G_p > 0`.
    pub positive_frequency: Vec<f64>,
    /// Per coordinate, fraction of trials with `G_p = 0` exactly.
    pub zero_frequency: Vec<f64>,
    /// Trials where every coordinate of `G` was exactly zero.
    pub all_zero_trials: usize,
}

/// Draws `trials` independent datasets for a fixed network and tallies the
/// signs of `G = −∇̃L(w*)`.
pub fn gradient_symmetry_check(
    spec: &NetworkSpec,
    noise: NoiseSpec,
    n_samples: usize,
    trials: usize,
    seed: u64,
) -> Result<SymmetryReport> {
    if trials == 0 {
        return Err(Error::invalid("symmetry check needs trials >= 1"));
    }
    let n = spec.n();
    let per_trial: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|k| -> Result<Vec<f64>> {
            let data = synthesize_dataset(spec, n_samples, noise, rng::derive_seed(seed, &[k]))?;
            let g = crate::optimizer::ste_gradient(spec.w_star(), &data)?;
            Ok(g.into_iter().map(|x| -x).collect())
        })
        .collect::<Result<_>>()?;
    let mut positive = vec![0usize; n];
    let mut zero = vec![0usize; n];
    let mut all_zero_trials = 0;
    for g in &per_trial {
        for (p, &x) in g.iter().enumerate() {
            positive[p] += usize::from(x > 0.0);
            zero[p] += usize::from(x == 0.0);
        }
        all_zero_trials += usize::from(g.iter().all(|&x| x == 0.0));
    }
    let freq = |c: Vec<usize>| c.into_iter().map(|x| x as f64 / trials as f64).collect();
    Ok(SymmetryReport {
        trials,
        positive_frequency: freq(positive),
        zero_frequency: freq(zero),
        all_zero_trials,
    })
}
