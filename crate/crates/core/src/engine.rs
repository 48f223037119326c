//! Stochastic quantum-jump integrator.
//!
//! At every grid time `t_n = n·Δt` the engine
//! 1. evaluates the collapse probability `p = ⟨Ψ|C†C|Ψ⟩ Δt` on the
//!    (normalized) state,
//! 2. draws one uniform `r_n ∈ [0, 1)`,
//! 3. collapses `Ψ → CΨ/‖CΨ‖` if `p > r_n`, otherwise advances the state with
//!    the non-Hermitian effective Hamiltonian over one step and renormalizes.
//!
//! Observables are recorded after the step, at `t_{n+1}` (plus the initial
//! state at `t = 0`).

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{Model, Observable};
use crate::statevec::{normalize_in_place, StateVector};

/// Jump probabilities above this make the first-order splitting error visible.
pub const JUMP_PROBABILITY_WARNING: f64 = 0.1;

/// Upper bound on recorded points per trajectory; longer runs are decimated.
pub const MAX_OUTPUT_POINTS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// First-order `(1 − i H_eff Δt)` step.
    #[default]
    Euler,
    /// Classical fixed-step fourth-order Runge–Kutta.
    Rk4,
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Integrator::Euler => "euler",
            Integrator::Rk4 => "rk4",
        })
    }
}

impl FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Integrator::Euler),
            "rk4" => Ok(Integrator::Rk4),
            _ => Err(Error::InvalidParameter(format!("unknown integrator `{s}`"))),
        }
    }
}

/// Reproducible uniform stream: same `(master_seed, stream_id)`, same numbers,
/// on every platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    /// Grid time `t_{n+1}` at which the collapsed state is assigned.
    pub time: f64,
    /// Step index `n + 1` of `time`.
    pub step: usize,
    /// Detector-excited weight `⟨C†C⟩/Γ` of the pre-jump state.
    pub pre_jump_norm: f64,
    pub trajectory_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationParams {
    pub dt: f64,
    pub t_max: f64,
    pub integrator: Integrator,
    pub observables: Vec<Observable>,
    /// Record every `decimation`-th step (at least; see [`Self::stride`]).
    pub decimation: usize,
}

impl SimulationParams {
    pub fn new(dt: f64, t_max: f64, observables: Vec<Observable>) -> Self {
        Self {
            dt,
            t_max,
            integrator: Integrator::Euler,
            observables,
            decimation: 1,
        }
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    /// Recording stride: the requested decimation, raised so that at most
    /// [`MAX_OUTPUT_POINTS`] steps are recorded.
    pub fn stride(&self) -> usize {
        let needed = self.n_steps().div_ceil(MAX_OUTPUT_POINTS);
        self.decimation.max(needed).max(1)
    }

    /// Recorded times `0, s·Δt, 2s·Δt, …`.
    pub fn record_times(&self) -> Vec<f64> {
        let stride = self.stride();
        (0..=self.n_steps() / stride)
            .map(|i| (i * stride) as f64 * self.dt)
            .collect()
    }

    pub fn validate(&self, model: &Model) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.t_max >= self.dt && self.t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_max = {} must be >= dt = {}",
                self.t_max, self.dt
            )));
        }
        if self.decimation < 1 {
            return Err(Error::InvalidParameter("decimation must be >= 1".into()));
        }
        if let Some(o) = self.observables.iter().find(|o| !model.supports(**o)) {
            return Err(Error::InvalidParameter(format!(
                "observable `{o}` is not defined for the {} model",
                model.spec().kind()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub trajectory_id: u64,
    pub times: Vec<f64>,
    pub observables: Vec<Observable>,
    /// `values[j][i]` is observable `j` at `times[i]`.
    pub values: Vec<Vec<f64>>,
    pub jumps: Vec<JumpEvent>,
    pub seed_used: u64,
    pub stride: usize,
}

impl TrajectoryRecord {
    pub fn series(&self, obs: Observable) -> Option<&[f64]> {
        self.observables
            .iter()
            .position(|o| *o == obs)
            .map(|j| self.values[j].as_slice())
    }

    pub fn first_jump(&self) -> Option<f64> {
        self.jumps.first().map(|j| j.time)
    }

    /// Per recorded point: did at least one jump happen since the previous
    /// recorded point?
    pub fn jump_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.times.len()];
        for j in &self.jumps {
            let idx = j.step.div_ceil(self.stride);
            if idx < flags.len() {
                flags[idx] = true;
            }
        }
        flags
    }
}

/// Scratch buffers for the deterministic (no-jump) step.
pub(crate) struct Stepper {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Stepper {
    pub(crate) fn new(dim: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); dim];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    /// Advances `c` from `t` to `t + dt` without renormalizing.
    pub(crate) fn advance(
        &mut self,
        model: &Model,
        integrator: Integrator,
        t: f64,
        dt: f64,
        c: &mut [Complex64],
    ) {
        match integrator {
            Integrator::Euler => {
                model.derivative(t, c, &mut self.k1);
                for (x, k) in c.iter_mut().zip(&self.k1) {
                    *x += dt * k;
                }
            }
            Integrator::Rk4 => {
                let h = 0.5 * dt;
                model.derivative(t, c, &mut self.k1);
                for ((y, x), k) in self.tmp.iter_mut().zip(c.iter()).zip(&self.k1) {
                    *y = x + h * k;
                }
                model.derivative(t + h, &self.tmp, &mut self.k2);
                for ((y, x), k) in self.tmp.iter_mut().zip(c.iter()).zip(&self.k2) {
                    *y = x + h * k;
                }
                model.derivative(t + h, &self.tmp, &mut self.k3);
                for ((y, x), k) in self.tmp.iter_mut().zip(c.iter()).zip(&self.k3) {
                    *y = x + dt * k;
                }
                model.derivative(t + dt, &self.tmp, &mut self.k4);
                let w = dt / 6.0;
                for (i, x) in c.iter_mut().enumerate() {
                    *x += w * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
                }
            }
        }
    }
}

/// `p_jump = Γ Δt ⟨C†C⟩/(Γ⟨Ψ|Ψ⟩)`.
pub fn jump_probability(state: &StateVector, model: &Model, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
    }
    let n2 = state.norm_squared();
    if !(n2 > crate::statevec::UNDERFLOW_NORM_SQUARED) {
        return Err(Error::ZeroNorm { time: state.time });
    }
    let p = model.jump_rate() * dt * model.detector_excited_weight(&state.amplitudes) / n2;
    check_probability(p, state.time)?;
    Ok(p)
}

fn check_probability(p: f64, time: f64) -> Result<()> {
    if p > 1.0 + 1e-12 || !p.is_finite() {
        return Err(Error::ProbabilityOverflow {
            probability: p,
            time,
        });
    }
    Ok(())
}

#[inline]
fn jump_occurs(probability: f64, r: f64) -> bool {
    probability > r
}

/// One no-jump step from `state.time` to `state.time + dt`, renormalized.
pub fn deterministic_step(
    state: &StateVector,
    model: &Model,
    dt: f64,
    integrator: Integrator,
) -> Result<StateVector> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
    }
    let mut out = state.clone();
    Stepper::new(state.dim()).advance(model, integrator, state.time, dt, &mut out.amplitudes);
    out.time = state.time + dt;
    normalize_in_place(&mut out.amplitudes, out.time)?;
    Ok(out)
}

/// Post-jump state `CΨ/‖CΨ‖`.
pub fn collapse(state: &StateVector, model: &Model) -> Result<StateVector> {
    let mut out = state.clone();
    model.apply_lowering(&mut out.amplitudes);
    normalize_in_place(&mut out.amplitudes, state.time)?;
    Ok(out)
}

/// Runs one trajectory from the model's default initial state.
pub fn run_trajectory(
    model: &Model,
    sim: &SimulationParams,
    stream: RngStream,
) -> Result<TrajectoryRecord> {
    run_trajectory_from(model, sim, stream, &model.initial_state())
}

pub fn run_trajectory_from(
    model: &Model,
    sim: &SimulationParams,
    stream: RngStream,
    initial: &StateVector,
) -> Result<TrajectoryRecord> {
    sim.validate(model)?;
    if initial.dim() != model.dim() {
        return Err(Error::InvalidParameter(format!(
            "initial state has dimension {}, model needs {}",
            initial.dim(),
            model.dim()
        )));
    }
    let dt = sim.dt;
    let n_steps = sim.n_steps();
    let stride = sim.stride();
    let n_records = n_steps / stride + 1;
    let gamma = model.jump_rate();

    let mut rng = stream.generator();
    let mut stepper = Stepper::new(model.dim());
    let mut c = initial.amplitudes.clone();
    normalize_in_place(&mut c, 0.0)?;

    let mut times = Vec::with_capacity(n_records);
    let mut values: Vec<Vec<f64>> = sim
        .observables
        .iter()
        .map(|_| Vec::with_capacity(n_records))
        .collect();
    let mut record = |t: f64, c: &[Complex64], times: &mut Vec<f64>| {
        times.push(t);
        for (obs, v) in sim.observables.iter().zip(values.iter_mut()) {
            v.push(model.observable(*obs, c));
        }
    };
    record(0.0, &c, &mut times);

    let mut jumps = Vec::new();
    let mut warned = false;
    for n in 0..n_steps {
        let t = n as f64 * dt;
        let t_next = (n + 1) as f64 * dt;
        let weight = model.detector_excited_weight(&c);
        let p = gamma * dt * weight;
        check_probability(p, t)?;
        if p > JUMP_PROBABILITY_WARNING && !warned {
            log::warn!(
                "trajectory {}: jump probability {p:.3} at t = {t} exceeds {JUMP_PROBABILITY_WARNING}",
                stream.stream_id
            );
            warned = true;
        }
        let r: f64 = rng.random();
        if jump_occurs(p, r) {
            model.apply_lowering(&mut c);
            normalize_in_place(&mut c, t_next)?;
            jumps.push(JumpEvent {
                time: t_next,
                step: n + 1,
                pre_jump_norm: weight,
                trajectory_id: stream.stream_id,
            });
        } else {
            stepper.advance(model, sim.integrator, t, dt, &mut c);
            normalize_in_place(&mut c, t_next)?;
        }
        if (n + 1) % stride == 0 {
            record(t_next, &c, &mut times);
        }
    }

    Ok(TrajectoryRecord {
        trajectory_id: stream.stream_id,
        times,
        observables: sim.observables.clone(),
        values,
        jumps,
        seed_used: stream.master_seed,
        stride,
    })
}
