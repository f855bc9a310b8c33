//! Dual-STE surrogate gradient and the STE-gradient iteration.
//!
//! The latent weights `x` take full gradient steps; the gradient itself is
//! evaluated at the quantized point `w = quantize(x)`, with the activation's
//! zero derivative replaced by the ReLU derivative `1{· ≥ 0}`.

use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, quantize, unit, Dataset, Evaluation};
use crate::record::{pack_signs, RunRecord, RunRecorder};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant {
        eta0: f64,
    },
    /// `η_t = eta0 · t^(−p)`, `p ∈ (0, 1]`.
    PowerDecay {
        eta0: f64,
        p: f64,
    },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Constant { eta0: 1.0 }
    }
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Constant { eta0 } if eta0 > 0.0 && eta0.is_finite() => Ok(()),
            StepSchedule::PowerDecay { eta0, p }
                if eta0 > 0.0 && eta0.is_finite() && p > 0.0 && p <= 1.0 =>
            {
                Ok(())
            }
            other => Err(Error::invalid(format!("invalid step schedule {other:?}"))),
        }
    }

    /// Step size for iteration `t ≥ 1`.
    pub fn eta(&self, t: usize) -> f64 {
        debug_assert!(t >= 1);
        match *self {
            StepSchedule::Constant { eta0 } => eta0,
            StepSchedule::PowerDecay { eta0, p } => eta0 * (t as f64).powf(-p),
        }
    }

    pub fn eta0(&self) -> f64 {
        match *self {
            StepSchedule::Constant { eta0 } | StepSchedule::PowerDecay { eta0, .. } => eta0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    #[default]
    Zero,
    /// `x⁰` uniform on `[−c0/√n, c0/√n]ⁿ`, drawn from the stream keyed by `seed`.
    BoundedUniform { c0: f64, seed: u64 },
}

impl InitSpec {
    pub fn latent(&self, n: usize) -> Vec<f64> {
        match *self {
            InitSpec::Zero => vec![0.0; n],
            InitSpec::BoundedUniform { c0, seed } => {
                let half = c0 * unit(n);
                if half == 0.0 {
                    return vec![0.0; n];
                }
                let mut r = rng::stream(seed, &[rng::tag::INIT]);
                (0..n).map(|_| r.gen_range(-half..=half)).collect()
            }
        }
    }
}

/// Latent weights, their quantization, and the number of completed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub t: usize,
    pub schedule: StepSchedule,
}

impl TrainState {
    pub fn new(x: Vec<f64>, schedule: StepSchedule) -> Self {
        let w = quantize(&x);
        Self {
            x,
            w,
            t: 0,
            schedule,
        }
    }

    pub fn from_init(init: &InitSpec, n: usize, schedule: StepSchedule) -> Self {
        Self::new(init.latent(n), schedule)
    }
}

fn check_dims(len: usize, data: &Dataset, what: &str) -> Result<()> {
    if len != data.spec().n() {
        return Err(Error::invalid(format!(
            "{what}: length {len}, dataset has n = {}",
            data.spec().n()
        )));
    }
    Ok(())
}

/// Surrogate gradient `(1/N)·Σᵢ Z⁽ⁱ⁾ᵀ(1{Z⁽ⁱ⁾w ≥ 0}⊙v)·(vᵀθ(Z⁽ⁱ⁾w) − y⁽ⁱ⁾)`,
/// accumulated in sample order.
pub fn ste_gradient(w: &[f64], data: &Dataset) -> Result<Vec<f64>> {
    check_dims(w.len(), data, "ste_gradient")?;
    Ok(model::evaluate(w, data, true).gradient)
}

/// Two-step update: `x' = x − η_{t+1}·∇̃L(w)`, `w' = quantize(x')`.
pub fn step(state: &TrainState, data: &Dataset) -> Result<TrainState> {
    let g = ste_gradient(&state.w, data)?;
    Ok(advance(state, &g))
}

fn advance(state: &TrainState, gradient: &[f64]) -> TrainState {
    let t = state.t + 1;
    let eta = state.schedule.eta(t);
    let x: Vec<f64> = state
        .x
        .iter()
        .zip(gradient)
        .map(|(xi, gi)| xi - eta * gi)
        .collect();
    let w = quantize(&x);
    TrainState {
        x,
        w,
        t,
        schedule: state.schedule,
    }
}

/// Single-step form: `x − η_{t+1}·∇̃L(quantize(x))`.
pub fn step_single(
    x: &[f64],
    t: usize,
    schedule: &StepSchedule,
    data: &Dataset,
) -> Result<Vec<f64>> {
    let g = ste_gradient(&quantize(x), data)?;
    let eta = schedule.eta(t + 1);
    Ok(x.iter().zip(&g).map(|(xi, gi)| xi - eta * gi).collect())
}

/// Per-iteration observer invoked by [`run`] after each step.
pub trait Recorder {
    fn observe(&mut self, t: usize, x: &[f64], w: &[f64]);
}

impl Recorder for () {
    fn observe(&mut self, _: usize, _: &[f64], _: &[f64]) {}
}

impl<F: FnMut(usize, &[f64], &[f64])> Recorder for F {
    fn observe(&mut self, t: usize, x: &[f64], w: &[f64]) {
        self(t, x, w)
    }
}

/// Memoizes loss and gradient by sign pattern. Evaluation is a pure function
/// of `w`, so a hit returns bit-identical values to a fresh computation.
pub(crate) struct EvalCache<'a> {
    data: &'a Dataset,
    entries: HashMap<Vec<u64>, Rc<Evaluation>>,
    capacity: usize,
}

impl<'a> EvalCache<'a> {
    pub(crate) fn new(data: &'a Dataset, capacity: usize) -> Self {
        Self {
            data,
            entries: HashMap::new(),
            capacity,
        }
    }

    pub(crate) fn get(&mut self, w: &[f64]) -> Rc<Evaluation> {
        let key = pack_signs(w);
        if let Some(e) = self.entries.get(&key) {
            return Rc::clone(e);
        }
        let e = Rc::new(model::evaluate(w, self.data, true));
        if self.entries.len() >= self.capacity {
            self.entries.clear();
        }
        self.entries.insert(key, Rc::clone(&e));
        e
    }
}

const CACHE_CAPACITY: usize = 256;

/// Runs `iterations` steps of the STE-gradient method from `init`, calling
/// `recorder` after every step and returning the full trajectory record.
pub fn run<R: Recorder + ?Sized>(
    data: &Dataset,
    schedule: StepSchedule,
    init: &InitSpec,
    iterations: usize,
    recorder: &mut R,
) -> Result<RunRecord> {
    if iterations == 0 {
        return Err(Error::invalid("run needs T >= 1"));
    }
    schedule.validate()?;
    let spec = data.spec();
    let mut state = TrainState::from_init(init, spec.n(), schedule);
    let mut cache = EvalCache::new(data, CACHE_CAPACITY);
    let mut rec = RunRecorder::new(spec.w_star(), &state.w, schedule, iterations);
    let mut current = cache.get(&state.w);
    for _ in 0..iterations {
        state = advance(&state, &current.gradient);
        current = cache.get(&state.w);
        rec.push(&state.w, current.loss);
        recorder.observe(state.t, &state.x, &state.w);
    }
    Ok(rec.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synthesize_dataset, NetworkSpec, NoiseSpec};

    fn instance(m: usize, n: usize, big_n: usize, sigma: f64, seed: u64) -> Dataset {
        let spec =
            NetworkSpec::random(m, n, &mut rng::stream(seed, &[rng::tag::INSTANCE])).unwrap();
        let noise = if sigma > 0.0 {
            NoiseSpec::Gaussian { sigma }
        } else {
            NoiseSpec::None
        };
        synthesize_dataset(&spec, big_n, noise, seed).unwrap()
    }

    #[test]
    fn schedule_values() {
        let c = StepSchedule::Constant { eta0: 0.5 };
        assert_eq!(c.eta(1), 0.5);
        assert_eq!(c.eta(100), 0.5);
        let p = StepSchedule::PowerDecay { eta0: 2.0, p: 0.5 };
        assert_eq!(p.eta(1), 2.0);
        assert!((p.eta(4) - 1.0).abs() < 1e-15);
        assert!(p.eta(10) <= p.eta(9));
        assert!(StepSchedule::PowerDecay { eta0: 1.0, p: 1.5 }
            .validate()
            .is_err());
        assert!(StepSchedule::Constant { eta0: 0.0 }.validate().is_err());
    }

    #[test]
    fn zero_init_is_exact() {
        assert_eq!(InitSpec::Zero.latent(3), vec![0.0; 3]);
        let x = InitSpec::BoundedUniform { c0: 1.0, seed: 1 }.latent(16);
        assert!(x.iter().all(|v| v.abs() <= 0.25));
        assert_eq!(x, InitSpec::BoundedUniform { c0: 1.0, seed: 1 }.latent(16));
    }

    #[test]
    fn single_row_gradient() {
        let spec = NetworkSpec::new(vec![1.0], vec![0.5, -0.5, 0.5, 0.5]).unwrap();
        let z = vec![0.3, -1.0, 2.0, 0.1];
        // w = all positive gives z·w ≥ 0; the label is forced to 0 via noise
        let y_star = model::forward(spec.w_star(), &z, spec.v()).unwrap();
        let d = Dataset::from_parts(spec, z.clone(), vec![-y_star]).unwrap();
        let g = ste_gradient(&[0.5; 4], &d).unwrap();
        assert_eq!(g, z);
    }

    #[test]
    fn fixed_point_at_truth() {
        let d = instance(5, 6, 30, 0.0, 3);
        let w_star = d.spec().w_star().to_vec();
        assert!(ste_gradient(&w_star, &d).unwrap().iter().all(|&g| g == 0.0));
        let s = TrainState {
            x: w_star.iter().map(|w| w * 3.0).collect(),
            w: w_star.clone(),
            t: 4,
            schedule: StepSchedule::default(),
        };
        let next = step(&s, &d).unwrap();
        assert_eq!(next.x, s.x);
        assert_eq!(next.w, s.w);
        assert_eq!(step_single(&s.x, 4, &s.schedule, &d).unwrap(), s.x);
    }

    #[test]
    fn first_step_from_zero() {
        let d = instance(3, 4, 10, 0.0, 8);
        let sched = StepSchedule::Constant { eta0: 0.7 };
        let s0 = TrainState::new(vec![0.0; 4], sched);
        let s1 = step(&s0, &d).unwrap();
        let g = ste_gradient(&quantize(&[0.0; 4]), &d).unwrap();
        let want: Vec<f64> = g.iter().map(|gi| 0.0 - 0.7 * gi).collect();
        assert_eq!(s1.x, want);
        assert_eq!(s1.t, 1);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let d = instance(3, 4, 10, 0.0, 8);
        assert!(ste_gradient(&[0.5; 3], &d).is_err());
    }

    #[test]
    fn run_matches_manual_steps() {
        let d = instance(6, 5, 12, 0.5, 21);
        let sched = StepSchedule::PowerDecay { eta0: 0.3, p: 0.7 };
        let init = InitSpec::BoundedUniform { c0: 1.0, seed: 4 };
        let mut seen = Vec::new();
        let rec = run(
            &d,
            sched,
            &init,
            40,
            &mut |t: usize, _: &[f64], w: &[f64]| seen.push((t, w.to_vec())),
        )
        .unwrap();
        let mut s = TrainState::from_init(&init, 5, sched);
        for (t, w) in &seen {
            s = step(&s, &d).unwrap();
            assert_eq!(s.t, *t);
            assert_eq!(&s.w, w);
            assert_eq!(rec.loss()[t - 1], model::empirical_loss(&s.w, &d).unwrap());
        }
        assert_eq!(seen.len(), 40);
        assert_eq!(rec.len(), 40);
    }

    #[test]
    fn one_iteration_is_one_step() {
        let d = instance(4, 3, 9, 0.0, 2);
        let rec = run(&d, StepSchedule::default(), &InitSpec::Zero, 1, &mut ()).unwrap();
        let s = step(&TrainState::new(vec![0.0; 3], StepSchedule::default()), &d).unwrap();
        assert_eq!(rec.w_at(1), s.w);
        assert!(run(&d, StepSchedule::default(), &InitSpec::Zero, 0, &mut ()).is_err());
    }
}
