//! The four physical models: a measured (unperturbed) two-level system, a
//! driven two-level system under measurement, a two-level system decaying into
//! a discretized reservoir, and the same decaying system under measurement.
//!
//! Every model supplies the non-Hermitian effective-Hamiltonian derivative
//! `ċ = −i H_eff c` as a matrix-free action on the amplitude array. The
//! detector is a two-level atom (|a⟩ excited, |b⟩ ground) whose decay is the
//! only jump channel, `C = √Γ σ₋`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::statevec::{
    Basis, BasisLabel, DetectorLevel, Reservoir, StateVector, SystemLevel,
};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Which system level the detector interaction `λ|n⟩⟨n|(σ₊+σ₋)` monitors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouplingTarget {
    #[default]
    Ground,
    Excited,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// Detector decay rate Γ.
    pub gamma: f64,
    /// System-detector coupling λ.
    pub lambda: f64,
    /// Detector level splitting Ω_D.
    pub omega_d: f64,
    pub coupling_target: CouplingTarget,
}

impl DetectorParams {
    pub fn new(gamma: f64, lambda: f64, omega_d: f64) -> Self {
        Self {
            gamma,
            lambda,
            omega_d,
            coupling_target: CouplingTarget::Ground,
        }
    }

    pub fn with_target(mut self, target: CouplingTarget) -> Self {
        self.coupling_target = target;
        self
    }

    /// Characteristic measurement duration τ_M = Γ/(2λ²).
    pub fn measurement_time(&self) -> Option<f64> {
        crate::oracles::measurement_time(self.gamma, self.lambda).ok()
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("detector gamma = {}", self.gamma)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("detector lambda = {}", self.lambda)));
        }
        if !self.omega_d.is_finite() {
            return Err(Error::InvalidParameter("detector omega_d is not finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveParams {
    /// Rabi frequency Ω_R.
    pub omega_r: f64,
    /// Detuning Δω = ω_A − Ω.
    pub detuning: f64,
}

/// Discretized reservoir: `n_modes` equally spaced frequencies spanning
/// `[ω_A − Λ, ω_A + Λ]` with coupling `g(ω) = g0 (1 + (a/Λ)(ω − ω_A))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReservoirSpec {
    pub n_modes: usize,
    /// Half-width Λ of the band.
    pub half_width: f64,
    pub g0: f64,
    /// Dimensionless coupling slope `a`.
    pub slope: f64,
    pub omega_a: f64,
}

impl ReservoirSpec {
    pub fn new(n_modes: usize, half_width: f64, g0: f64, slope: f64, omega_a: f64) -> Result<Self> {
        let spec = Self {
            n_modes,
            half_width,
            g0,
            slope,
            omega_a,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Chooses `g0` so that the golden-rule rate `2π g0²/Δω` equals `gamma0`.
    pub fn with_golden_rate(
        n_modes: usize,
        half_width: f64,
        gamma0: f64,
        slope: f64,
        omega_a: f64,
    ) -> Result<Self> {
        if n_modes < 2 || !(half_width > 0.0) || !(gamma0 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "reservoir n_modes = {n_modes}, half_width = {half_width}, gamma0 = {gamma0}"
            )));
        }
        let spacing = 2.0 * half_width / (n_modes - 1) as f64;
        let g0 = (gamma0 * spacing / (2.0 * PI)).sqrt();
        Self::new(n_modes, half_width, g0, slope, omega_a)
    }

    /// Same band and golden-rule rate on a different number of modes
    /// (`g0` scaled by `√(Δω_new/Δω_old)`).
    pub fn rescaled(&self, n_modes: usize) -> Result<Self> {
        if n_modes < 2 {
            return Err(Error::InvalidParameter(format!("n_modes = {n_modes}")));
        }
        let new_spacing = 2.0 * self.half_width / (n_modes - 1) as f64;
        let g0 = self.g0 * (new_spacing / self.spacing()).sqrt();
        Self::new(n_modes, self.half_width, g0, self.slope, self.omega_a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_modes < 2 {
            return Err(Error::InvalidParameter(format!(
                "reservoir needs at least 2 modes, got {}",
                self.n_modes
            )));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "reservoir half_width = {}",
                self.half_width
            )));
        }
        if !(self.g0.is_finite() && self.slope.is_finite() && self.omega_a.is_finite()) {
            return Err(Error::InvalidParameter("non-finite reservoir parameter".into()));
        }
        Ok(())
    }

    /// Mode spacing Δω = 2Λ/(N−1).
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n_modes - 1) as f64
    }

    /// Density of states ρ₀ = 1/Δω.
    pub fn density_of_states(&self) -> f64 {
        1.0 / self.spacing()
    }

    /// `ω_k − ω_A`. Antisymmetric about the band centre bit for bit.
    pub fn mode_offset(&self, k: usize) -> f64 {
        let n = self.n_modes;
        debug_assert!(k < n);
        let mirror = n - 1 - k;
        if 2 * k == n - 1 {
            0.0
        } else if k < mirror {
            -self.half_width + k as f64 * self.spacing()
        } else {
            -(-self.half_width + mirror as f64 * self.spacing())
        }
    }

    pub fn mode_frequency(&self, k: usize) -> f64 {
        self.omega_a + self.mode_offset(k)
    }

    /// `g(ω)` evaluated at offset `x = ω − ω_A`.
    pub fn coupling_at_offset(&self, x: f64) -> f64 {
        self.g0 * (1.0 + self.slope / self.half_width * x)
    }

    pub fn coupling(&self, omega: f64) -> f64 {
        self.coupling_at_offset(omega - self.omega_a)
    }

    pub fn grid(&self) -> ReservoirGrid {
        let detuning: Vec<f64> = (0..self.n_modes).map(|k| -self.mode_offset(k)).collect();
        let coupling = (0..self.n_modes)
            .map(|k| self.coupling_at_offset(self.mode_offset(k)))
            .collect();
        ReservoirGrid {
            detuning,
            coupling,
            spacing: self.spacing(),
        }
    }
}

/// Precomputed per-mode detunings `δ_k = ω_A − ω_k` and couplings `g(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirGrid {
    pub detuning: Vec<f64>,
    pub coupling: Vec<f64>,
    spacing: f64,
}

/// How often the phase recurrence is re-anchored with an exact `sin_cos`.
const PHASE_ANCHOR: usize = 64;

impl ReservoirGrid {
    pub fn len(&self) -> usize {
        self.detuning.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detuning.is_empty()
    }

    /// Iterator over `e^{i δ_k t}`, computed from the absolute time `t`.
    ///
    /// Consecutive modes differ by the constant factor `e^{−iΔω t}`; the
    /// product is re-anchored every `PHASE_ANCHOR` modes.
    pub fn phases(&self, t: f64) -> impl Iterator<Item = Complex64> + '_ {
        let (s, c) = (-self.spacing * t).sin_cos();
        let step = Complex64::new(c, s);
        let mut current = Complex64::new(0.0, 0.0);
        self.detuning.iter().enumerate().map(move |(k, &d)| {
            if k % PHASE_ANCHOR == 0 {
                let (s, c) = (d * t).sin_cos();
                current = Complex64::new(c, s);
            } else {
                current *= step;
            }
            current
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialSystem {
    Excited,
    Ground,
    /// `(|e⟩ + |g⟩)/√2`.
    #[default]
    Superposition,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// Unperturbed two-level system monitored by the detector.
    DetectorMeasurement {
        detector: DetectorParams,
        omega_a: f64,
        initial: InitialSystem,
    },
    /// Driven two-level system (rotating frame) monitored by the detector.
    RabiMeasured {
        detector: DetectorParams,
        drive: DriveParams,
        initial: InitialSystem,
    },
    /// Two-level system decaying into a discretized reservoir.
    FreeDecay { reservoir: ReservoirSpec },
    /// Decaying system monitored by the detector.
    MeasuredDecay {
        reservoir: ReservoirSpec,
        detector: DetectorParams,
    },
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::DetectorMeasurement { .. } => "detector-measurement",
            ModelSpec::RabiMeasured { .. } => "rabi-measured",
            ModelSpec::FreeDecay { .. } => "free-decay",
            ModelSpec::MeasuredDecay { .. } => "measured-decay",
        }
    }

    pub fn detector(&self) -> Option<&DetectorParams> {
        match self {
            ModelSpec::DetectorMeasurement { detector, .. }
            | ModelSpec::RabiMeasured { detector, .. }
            | ModelSpec::MeasuredDecay { detector, .. } => Some(detector),
            ModelSpec::FreeDecay { .. } => None,
        }
    }

    pub fn reservoir(&self) -> Option<&ReservoirSpec> {
        match self {
            ModelSpec::FreeDecay { reservoir } | ModelSpec::MeasuredDecay { reservoir, .. } => {
                Some(reservoir)
            }
            _ => None,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::DetectorMeasurement { .. } | ModelSpec::RabiMeasured { .. } => 4,
            ModelSpec::FreeDecay { reservoir } => reservoir.n_modes + 1,
            ModelSpec::MeasuredDecay { reservoir, .. } => 2 * (reservoir.n_modes + 1),
        }
    }
}

/// Named scalar observables extracted from a trajectory state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Observable {
    /// Probability of the excited system level.
    RhoEe,
    /// Probability of the ground system level.
    RhoGg,
    /// Probability of the excited detector level |a⟩.
    RhoAa,
    /// Probability of the ground detector level |b⟩.
    RhoBb,
    /// Real part of the system coherence ρ_eg (two-level models only).
    CoherenceRe,
    /// Imaginary part of ρ_eg.
    CoherenceIm,
}

impl Observable {
    pub const ALL: [Observable; 6] = [
        Observable::RhoEe,
        Observable::RhoGg,
        Observable::RhoAa,
        Observable::RhoBb,
        Observable::CoherenceRe,
        Observable::CoherenceIm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Observable::RhoEe => "rho_ee",
            Observable::RhoGg => "rho_gg",
            Observable::RhoAa => "rho_aa",
            Observable::RhoBb => "rho_bb",
            Observable::CoherenceRe => "rho_eg_re",
            Observable::CoherenceIm => "rho_eg_im",
        }
    }

    pub fn is_probability(&self) -> bool {
        !matches!(self, Observable::CoherenceRe | Observable::CoherenceIm)
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Observable::ALL
            .iter()
            .copied()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown observable `{s}`")))
    }
}

// Two-level-system ⊗ detector layout.
const EA: usize = 0;
const EB: usize = 1;
const GA: usize = 2;
const GB: usize = 3;

/// Amplitude equations of the measured, unperturbed two-level system (`V = 0`), including the
/// free `ω_A` phase on the excited row.
pub fn derivative_detector(
    c: &[Complex64],
    params: &DetectorParams,
    omega_a: f64,
    out: &mut [Complex64],
) {
    let half_d = 0.5 * params.omega_d;
    let half_g = 0.5 * params.gamma;
    let lam = params.lambda;
    // Same operation order as `derivative_rabi_measured`, so the two agree
    // bit for bit at Ω_R = 0, ω_A = 0.
    out[EA] = -I * half_d * c[EA] - half_g * c[EA] - I * omega_a * c[EA];
    out[EB] = I * half_d * c[EB] - I * omega_a * c[EB];
    out[GA] = -I * half_d * c[GA] - half_g * c[GA];
    out[GB] = I * half_d * c[GB];
    match params.coupling_target {
        CouplingTarget::Ground => {
            out[GA] += -I * lam * c[GB];
            out[GB] += -I * lam * c[GA];
        }
        CouplingTarget::Excited => {
            out[EA] += -I * lam * c[EB];
            out[EB] += -I * lam * c[EA];
        }
    }
}

/// Driven, measured two-level system in the interaction picture of `H_A`
/// with the rotating-wave drive `−(Ω_R/2)(e^{iΔωt}|e⟩⟨g| + h.c.)`.
pub fn derivative_rabi_measured(
    t: f64,
    c: &[Complex64],
    det: &DetectorParams,
    drive: &DriveParams,
    out: &mut [Complex64],
) {
    let half_d = 0.5 * det.omega_d;
    let half_g = 0.5 * det.gamma;
    let half_r = 0.5 * drive.omega_r;
    let lam = det.lambda;
    let (s, co) = (drive.detuning * t).sin_cos();
    let up = Complex64::new(co, s) * (I * half_r);
    let down = Complex64::new(co, -s) * (I * half_r);

    out[EA] = up * c[GA] - I * half_d * c[EA] - half_g * c[EA];
    out[EB] = up * c[GB] + I * half_d * c[EB];
    out[GA] = down * c[EA] - I * half_d * c[GA] - half_g * c[GA];
    out[GB] = down * c[EB] + I * half_d * c[GB];
    match det.coupling_target {
        CouplingTarget::Ground => {
            out[GA] += -I * lam * c[GB];
            out[GB] += -I * lam * c[GA];
        }
        CouplingTarget::Excited => {
            out[EA] += -I * lam * c[EB];
            out[EB] += -I * lam * c[EA];
        }
    }
}

/// Decay into the discretized reservoir, interaction picture. Layout:
/// `[c_e, c_0, …, c_{N−1}]`.
pub fn derivative_free_decay(t: f64, c: &[Complex64], grid: &ReservoirGrid, out: &mut [Complex64]) {
    let ce = c[0];
    let mut sum = Complex64::new(0.0, 0.0);
    for (k, (phase, &g)) in grid.phases(t).zip(&grid.coupling).enumerate() {
        let ck = c[k + 1];
        sum += g * phase * ck;
        out[k + 1] = -I * g * phase.conj() * ce;
    }
    out[0] = -I * sum;
}

/// Measured decaying system. Layout: `[c_ea, c_eb, c_0a, c_0b, c_1a, …]`.
pub fn derivative_measured_decay(
    t: f64,
    c: &[Complex64],
    grid: &ReservoirGrid,
    det: &DetectorParams,
    out: &mut [Complex64],
) {
    let half_d = 0.5 * det.omega_d;
    let half_g = 0.5 * det.gamma;
    let lam = det.lambda;
    let ground_coupled = det.coupling_target == CouplingTarget::Ground;
    let lam_k = if ground_coupled { lam } else { 0.0 };
    let lam_e = if ground_coupled { 0.0 } else { lam };

    let (cea, ceb) = (c[0], c[1]);
    // Common diagonal factors.
    let diag_a = Complex64::new(-half_g, -half_d);
    let diag_b = Complex64::new(0.0, half_d);

    let mut sum_a = Complex64::new(0.0, 0.0);
    let mut sum_b = Complex64::new(0.0, 0.0);
    for (k, (phase, &g)) in grid.phases(t).zip(&grid.coupling).enumerate() {
        let ia = 2 + 2 * k;
        let (cka, ckb) = (c[ia], c[ia + 1]);
        let gp = g * phase;
        sum_a += gp * cka;
        sum_b += gp * ckb;
        let gpc = -I * gp.conj();
        out[ia] = gpc * cea - I * lam_k * ckb + diag_a * cka;
        out[ia + 1] = gpc * ceb - I * lam_k * cka + diag_b * ckb;
    }
    out[0] = -I * sum_a + diag_a * cea - I * lam_e * ceb;
    out[1] = -I * sum_b + diag_b * ceb - I * lam_e * cea;
}

/// A [`ModelSpec`] with its basis and reservoir grid built once.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    basis: Basis,
    grid: Option<Arc<ReservoirGrid>>,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Model> {
        match &spec {
            ModelSpec::DetectorMeasurement {
                detector, omega_a, ..
            } => {
                detector.validate()?;
                if !omega_a.is_finite() {
                    return Err(Error::InvalidParameter("omega_a is not finite".into()));
                }
            }
            ModelSpec::RabiMeasured { detector, drive, .. } => {
                detector.validate()?;
                if !(drive.omega_r >= 0.0 && drive.omega_r.is_finite() && drive.detuning.is_finite())
                {
                    return Err(Error::InvalidParameter(format!("drive {drive:?}")));
                }
            }
            ModelSpec::FreeDecay { reservoir } => reservoir.validate()?,
            ModelSpec::MeasuredDecay {
                reservoir,
                detector,
            } => {
                reservoir.validate()?;
                detector.validate()?;
            }
        }
        let basis = build_basis(&spec);
        let grid = spec.reservoir().map(|r| Arc::new(r.grid()));
        Ok(Model { spec, basis, grid })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn detector(&self) -> Option<&DetectorParams> {
        self.spec.detector()
    }

    pub fn grid(&self) -> Option<&ReservoirGrid> {
        self.grid.as_deref()
    }

    /// `out = −i H_eff(t) c`.
    pub fn derivative(&self, t: f64, c: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(c.len(), self.dim());
        match &self.spec {
            ModelSpec::DetectorMeasurement {
                detector, omega_a, ..
            } => derivative_detector(c, detector, *omega_a, out),
            ModelSpec::RabiMeasured { detector, drive, .. } => {
                derivative_rabi_measured(t, c, detector, drive, out)
            }
            ModelSpec::FreeDecay { .. } => {
                derivative_free_decay(t, c, self.grid.as_ref().unwrap(), out)
            }
            ModelSpec::MeasuredDecay { detector, .. } => {
                derivative_measured_decay(t, c, self.grid.as_ref().unwrap(), detector, out)
            }
        }
    }

    /// Γ, or zero for models without a detector.
    pub fn jump_rate(&self) -> f64 {
        self.detector().map_or(0.0, |d| d.gamma)
    }

    /// Weight of the detector-excited (|a⟩) subspace, `⟨C†C⟩/Γ`.
    pub fn detector_excited_weight(&self, c: &[Complex64]) -> f64 {
        if self.detector().is_none() {
            return 0.0;
        }
        c.iter().step_by(2).map(|z| z.norm_sqr()).sum()
    }

    /// Unnormalized `σ₋` action: every |a⟩ amplitude moves to the matching
    /// |b⟩ slot, previous |b⟩ amplitudes are discarded.
    pub(crate) fn apply_lowering(&self, c: &mut [Complex64]) {
        if self.detector().is_none() {
            c.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            return;
        }
        for pair in c.chunks_exact_mut(2) {
            pair[1] = pair[0];
            pair[0] = Complex64::new(0.0, 0.0);
        }
    }

    /// The default initial state of the model (detector in |b⟩).
    pub fn initial_state(&self) -> StateVector {
        let dim = self.dim();
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        match &self.spec {
            ModelSpec::DetectorMeasurement { initial, .. }
            | ModelSpec::RabiMeasured { initial, .. } => {
                let (ce, cg) = match initial {
                    InitialSystem::Excited => (1.0, 0.0),
                    InitialSystem::Ground => (0.0, 1.0),
                    InitialSystem::Superposition => {
                        (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2)
                    }
                };
                amps[EB] = Complex64::new(ce, 0.0);
                amps[GB] = Complex64::new(cg, 0.0);
            }
            ModelSpec::FreeDecay { .. } => amps[0] = Complex64::new(1.0, 0.0),
            ModelSpec::MeasuredDecay { .. } => amps[1] = Complex64::new(1.0, 0.0),
        }
        StateVector {
            amplitudes: amps,
            basis: self.basis.clone(),
            time: 0.0,
        }
    }

    pub fn supports(&self, obs: Observable) -> bool {
        match obs {
            Observable::RhoEe | Observable::RhoGg => true,
            Observable::RhoAa | Observable::RhoBb => self.detector().is_some(),
            Observable::CoherenceRe | Observable::CoherenceIm => self.dim() == 4,
        }
    }

    /// Observable value for a normalized amplitude array.
    pub fn observable(&self, obs: Observable, c: &[Complex64]) -> f64 {
        match obs {
            Observable::RhoEe => match self.spec {
                ModelSpec::FreeDecay { .. } => c[0].norm_sqr(),
                _ => c[0].norm_sqr() + c[1].norm_sqr(),
            },
            Observable::RhoGg => match self.spec {
                ModelSpec::FreeDecay { .. } => c[1..].iter().map(|z| z.norm_sqr()).sum(),
                _ => c[2..].iter().map(|z| z.norm_sqr()).sum(),
            },
            Observable::RhoAa => self.detector_excited_weight(c),
            Observable::RhoBb => {
                if self.detector().is_some() {
                    c.iter().skip(1).step_by(2).map(|z| z.norm_sqr()).sum()
                } else {
                    f64::NAN
                }
            }
            Observable::CoherenceRe => self.coherence(c).map_or(f64::NAN, |z| z.re),
            Observable::CoherenceIm => self.coherence(c).map_or(f64::NAN, |z| z.im),
        }
    }

    /// ρ_eg = Σ_d c_{e,d} c*_{g,d} of the reduced system state (two-level models).
    pub fn coherence(&self, c: &[Complex64]) -> Option<Complex64> {
        (self.dim() == 4).then(|| c[EA] * c[GA].conj() + c[EB] * c[GB].conj())
    }
}

/// Default initial state for `spec`.
pub fn initial_state(spec: &ModelSpec) -> Result<StateVector> {
    Ok(Model::new(spec.clone())?.initial_state())
}

fn build_basis(spec: &ModelSpec) -> Basis {
    let dets = [DetectorLevel::Excited, DetectorLevel::Ground];
    let mut labels = Vec::with_capacity(spec.dim());
    match spec {
        ModelSpec::DetectorMeasurement { .. } | ModelSpec::RabiMeasured { .. } => {
            for s in [SystemLevel::Excited, SystemLevel::Ground] {
                for d in dets {
                    labels.push(BasisLabel::new(s, None, Some(d)));
                }
            }
        }
        ModelSpec::FreeDecay { reservoir } => {
            labels.push(BasisLabel::new(
                SystemLevel::Excited,
                Some(Reservoir::Vacuum),
                None,
            ));
            for k in 0..reservoir.n_modes {
                labels.push(BasisLabel::new(
                    SystemLevel::Ground,
                    Some(Reservoir::Mode(k)),
                    None,
                ));
            }
        }
        ModelSpec::MeasuredDecay { reservoir, .. } => {
            for d in dets {
                labels.push(BasisLabel::new(
                    SystemLevel::Excited,
                    Some(Reservoir::Vacuum),
                    Some(d),
                ));
            }
            for k in 0..reservoir.n_modes {
                for d in dets {
                    labels.push(BasisLabel::new(
                        SystemLevel::Ground,
                        Some(Reservoir::Mode(k)),
                        Some(d),
                    ));
                }
            }
        }
    }
    labels.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn standard_detector() -> DetectorParams {
        DetectorParams::new(10.0, 1.0, 1.0)
    }

    fn norm_rate(c: &[Complex64], d: &[Complex64]) -> f64 {
        // d/dt |c|² = 2 Re(c* ċ)
        c.iter().zip(d).map(|(a, b)| 2.0 * (a.conj() * b).re).sum()
    }

    #[test]
    fn detector_without_coupling_or_decay_is_pure_phase() {
        let p = DetectorParams::new(0.0, 0.0, 1.3);
        let amps = [c(0.3, 0.1), c(-0.2, 0.5), c(0.4, -0.4), c(0.1, 0.2)];
        let mut out = [c(0.0, 0.0); 4];
        derivative_detector(&amps, &p, 1.0, &mut out);
        for (a, d) in amps.iter().zip(&out) {
            assert!((2.0 * (a.conj() * d).re).abs() < 1e-15);
        }
    }

    #[test]
    fn detector_coupling_drives_ga_from_gb() {
        let amps = [c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        let mut out = [c(0.0, 0.0); 4];
        derivative_detector(&amps, &standard_detector(), 1.0, &mut out);
        assert_eq!(out[GA], c(0.0, -1.0));
        assert_eq!(out[EA], c(0.0, 0.0));
        assert_eq!(out[EB], c(0.0, 0.0));
        assert_eq!(out[GB], c(0.0, 0.5));
    }

    #[test]
    fn excited_detector_level_decays_at_gamma() {
        let amps = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let mut out = [c(0.0, 0.0); 4];
        derivative_detector(&amps, &standard_detector(), 1.0, &mut out);
        // d|c_ea|²/dt = -Γ |c_ea|²
        assert!((norm_rate(&amps, &out) + 10.0).abs() < 1e-14);
    }

    #[test]
    fn excited_target_moves_lambda_to_e_rows() {
        let p = standard_detector().with_target(CouplingTarget::Excited);
        let amps = [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let mut out = [c(0.0, 0.0); 4];
        derivative_detector(&amps, &p, 0.0, &mut out);
        assert_eq!(out[EA], c(0.0, -1.0));
        assert_eq!(out[GA], c(0.0, 0.0));
    }

    #[test]
    fn rabi_reduces_to_detector_without_drive() {
        let det = standard_detector();
        let drive = DriveParams {
            omega_r: 0.0,
            detuning: 0.7,
        };
        let amps = [c(0.3, 0.1), c(-0.2, 0.5), c(0.4, -0.4), c(0.1, 0.2)];
        for target in [CouplingTarget::Ground, CouplingTarget::Excited] {
            let det = det.with_target(target);
            let mut a = [c(0.0, 0.0); 4];
            let mut b = [c(0.0, 0.0); 4];
            derivative_rabi_measured(3.7, &amps, &det, &drive, &mut a);
            derivative_detector(&amps, &det, 0.0, &mut b);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn mode_grid_spans_band_symmetrically() {
        let r = ReservoirSpec::new(1001, 0.5, 0.001262, 0.0, 1.0).unwrap();
        assert!((r.spacing() - 0.001).abs() < 1e-15);
        assert_eq!(r.mode_frequency(0), 0.5);
        assert_eq!(r.mode_frequency(1000), 1.5);
        assert_eq!(r.mode_offset(500), 0.0);
        for k in 0..r.n_modes {
            assert_eq!(r.mode_offset(k), -r.mode_offset(r.n_modes - 1 - k));
            let s = r.mode_frequency(k) + r.mode_frequency(r.n_modes - 1 - k);
            assert!((s - 2.0 * r.omega_a).abs() <= 4.0 * f64::EPSILON);
        }
        for k in 1..r.n_modes {
            let d = r.mode_offset(k) - r.mode_offset(k - 1);
            assert!((d - r.spacing()).abs() < 1e-13);
        }
    }

    #[test]
    fn flat_coupling_is_constant() {
        let r = ReservoirSpec::new(101, 0.5, 0.002, 0.0, 3.0).unwrap();
        let g = r.grid();
        assert!(g.coupling.iter().all(|&x| x == 0.002));
    }

    #[test]
    fn sloped_coupling_is_linear() {
        let r = ReservoirSpec::new(11, 0.5, 1.0, 2.0, 1.0).unwrap();
        assert!((r.coupling(0.5) + 1.0).abs() < 1e-15);
        assert!((r.coupling(1.0) - 1.0).abs() < 1e-15);
        assert!((r.coupling(1.5) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn reservoir_validation() {
        assert!(ReservoirSpec::new(1, 0.5, 0.1, 0.0, 1.0).is_err());
        assert!(ReservoirSpec::new(10, 0.0, 0.1, 0.0, 1.0).is_err());
        assert!(ReservoirSpec::new(10, 0.5, f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn rescaling_keeps_golden_rule_rate() {
        let r = ReservoirSpec::new(1001, 0.5, 0.001262, 0.0, 1.0).unwrap();
        let small = r.rescaled(201).unwrap();
        let rate = |r: &ReservoirSpec| 2.0 * PI * r.g0 * r.g0 / r.spacing();
        assert!((rate(&r) - rate(&small)).abs() < 1e-15);
        let r = ReservoirSpec::with_golden_rate(1001, 0.5, 0.01, 0.0, 1.0).unwrap();
        assert!((rate(&r) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn phases_match_direct_evaluation() {
        let r = ReservoirSpec::new(1001, 0.5, 0.001, 0.0, 1.0).unwrap();
        let g = r.grid();
        for &t in &[0.0, 0.1, 12.3, 299.9, 2500.0] {
            for (k, p) in g.phases(t).enumerate() {
                let (s, co) = (g.detuning[k] * t).sin_cos();
                assert!((p - c(co, s)).norm() < 1e-12, "t = {t}, k = {k}");
            }
        }
    }

    #[test]
    fn free_decay_with_zero_coupling_is_static() {
        let r = ReservoirSpec::new(5, 0.5, 0.0, 0.0, 1.0).unwrap();
        let g = r.grid();
        let amps: Vec<_> = (0..6).map(|k| c(k as f64, 1.0)).collect();
        let mut out = vec![c(1.0, 1.0); 6];
        derivative_free_decay(2.0, &amps, &g, &mut out);
        assert!(out.iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn measured_decay_limits() {
        let r = ReservoirSpec::new(7, 0.5, 0.05, 1.5, 1.0).unwrap();
        let g = r.grid();
        let n = r.n_modes;
        let amps: Vec<_> = (0..2 * (n + 1))
            .map(|k| c((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos()))
            .collect();

        // λ = 0, Γ = 0, Ω_D = 0: the b-sector follows free decay, a-sector likewise.
        let det = DetectorParams::new(0.0, 0.0, 0.0);
        let mut out = vec![c(0.0, 0.0); amps.len()];
        derivative_measured_decay(1.3, &amps, &g, &det, &mut out);
        let b: Vec<_> = amps.iter().skip(1).step_by(2).copied().collect();
        let mut fb = vec![c(0.0, 0.0); n + 1];
        derivative_free_decay(1.3, &b, &g, &mut fb);
        for (x, y) in out.iter().skip(1).step_by(2).zip(&fb) {
            assert!((x - y).norm() < 1e-15);
        }

        // g0 = 0: every mode block follows the detector equations (ω_A = 0).
        let r0 = ReservoirSpec::new(7, 0.5, 0.0, 0.0, 1.0).unwrap();
        let g0 = r0.grid();
        for target in [CouplingTarget::Ground, CouplingTarget::Excited] {
            let det = standard_detector().with_target(target);
            derivative_measured_decay(0.4, &amps, &g0, &det, &mut out);
            for k in 0..n {
                let ia = 2 + 2 * k;
                let block = [amps[0], amps[1], amps[ia], amps[ia + 1]];
                let mut d = [c(0.0, 0.0); 4];
                derivative_detector(&block, &det, 0.0, &mut d);
                assert!((out[ia] - d[GA]).norm() < 1e-15);
                assert!((out[ia + 1] - d[GB]).norm() < 1e-15);
                assert!((out[0] - d[EA]).norm() < 1e-15);
                assert!((out[1] - d[EB]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn initial_states() {
        let m = Model::new(ModelSpec::DetectorMeasurement {
            detector: standard_detector(),
            omega_a: 1.0,
            initial: InitialSystem::Superposition,
        })
        .unwrap();
        let s = m.initial_state();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(s.amplitudes, vec![c(0.0, 0.0), c(h, 0.0), c(0.0, 0.0), c(h, 0.0)]);

        let m = Model::new(ModelSpec::RabiMeasured {
            detector: standard_detector(),
            drive: DriveParams {
                omega_r: 0.1,
                detuning: 0.0,
            },
            initial: InitialSystem::Ground,
        })
        .unwrap();
        assert_eq!(m.initial_state().amplitudes[GB], c(1.0, 0.0));
        assert_eq!(m.initial_state().norm_squared(), 1.0);

        let r = ReservoirSpec::new(3, 0.5, 0.01, 0.0, 1.0).unwrap();
        let m = Model::new(ModelSpec::MeasuredDecay {
            reservoir: r,
            detector: standard_detector(),
        })
        .unwrap();
        let s = m.initial_state();
        assert_eq!(s.dim(), 8);
        let label = s.basis[1];
        assert_eq!(label.system, SystemLevel::Excited);
        assert_eq!(label.reservoir, Some(Reservoir::Vacuum));
        assert_eq!(label.detector, Some(DetectorLevel::Ground));
        assert_eq!(s.amplitudes[1], c(1.0, 0.0));
        assert_eq!(s.norm_squared(), 1.0);

        let m = Model::new(ModelSpec::FreeDecay { reservoir: r }).unwrap();
        assert_eq!(m.dim(), 4);
        assert_eq!(m.initial_state().amplitudes[0], c(1.0, 0.0));
    }

    #[test]
    fn observables_on_detector_basis() {
        let m = Model::new(ModelSpec::DetectorMeasurement {
            detector: standard_detector(),
            omega_a: 1.0,
            initial: InitialSystem::Superposition,
        })
        .unwrap();
        let amps = [c(0.1f64.sqrt(), 0.0), c(0.5f64.sqrt(), 0.0), c(0.2f64.sqrt(), 0.0), c(0.0, 0.2f64.sqrt())];
        assert!((m.observable(Observable::RhoEe, &amps) - 0.6).abs() < 1e-15);
        assert!((m.observable(Observable::RhoGg, &amps) - 0.4).abs() < 1e-15);
        assert!((m.observable(Observable::RhoAa, &amps) - 0.3).abs() < 1e-15);
        assert!((m.observable(Observable::RhoBb, &amps) - 0.7).abs() < 1e-15);
        let coh = amps[0] * amps[2].conj() + amps[1] * amps[3].conj();
        assert_eq!(m.observable(Observable::CoherenceRe, &amps), coh.re);
        assert_eq!(m.observable(Observable::CoherenceIm, &amps), coh.im);
        assert_eq!("rho_eg_im".parse::<Observable>().unwrap(), Observable::CoherenceIm);
        assert!("rho_xx".parse::<Observable>().is_err());
    }

    fn arb_state(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
            .prop_map(|v| v.into_iter().map(|(r, i)| c(r, i)).collect())
    }

    proptest! {
        // Γ = 0: the generator is anti-Hermitian, the norm is stationary.
        #[test]
        fn lossless_models_conserve_norm(
            amps in arb_state(2 * 6),
            t in 0.0f64..100.0,
            lam in 0.0f64..2.0,
            od in -2.0f64..2.0,
            slope in -3.0f64..3.0,
            excited in any::<bool>(),
        ) {
            let target = if excited { CouplingTarget::Excited } else { CouplingTarget::Ground };
            let det = DetectorParams::new(0.0, lam, od).with_target(target);
            let r = ReservoirSpec::new(5, 0.5, 0.03, slope, 1.0).unwrap();
            let mut out = vec![c(0.0, 0.0); amps.len()];
            derivative_measured_decay(t, &amps, &r.grid(), &det, &mut out);
            prop_assert!(norm_rate(&amps, &out).abs() < 1e-13);

            let mut out4 = [c(0.0, 0.0); 4];
            let drive = DriveParams { omega_r: 0.3, detuning: 0.2 };
            derivative_rabi_measured(t, &amps[..4], &det, &drive, &mut out4);
            prop_assert!(norm_rate(&amps[..4], &out4).abs() < 1e-13);

            let mut outf = vec![c(0.0, 0.0); 6];
            derivative_free_decay(t, &amps[..6], &r.grid(), &mut outf);
            prop_assert!(norm_rate(&amps[..6], &outf).abs() < 1e-13);
        }

        // Γ > 0: d|c|²/dt = −Γ · (detector-excited weight).
        #[test]
        fn norm_loss_equals_gamma_times_excited_weight(
            amps in arb_state(2 * 6),
            t in 0.0f64..100.0,
            gamma in 0.1f64..20.0,
            excited in any::<bool>(),
        ) {
            let target = if excited { CouplingTarget::Excited } else { CouplingTarget::Ground };
            let det = DetectorParams::new(gamma, 1.0, 1.0).with_target(target);
            let r = ReservoirSpec::new(5, 0.5, 0.03, 2.0, 1.0).unwrap();
            let m = Model::new(ModelSpec::MeasuredDecay { reservoir: r, detector: det }).unwrap();
            let mut out = vec![c(0.0, 0.0); amps.len()];
            m.derivative(t, &amps, &mut out);
            let expected = -gamma * m.detector_excited_weight(&amps);
            prop_assert!((norm_rate(&amps, &out) - expected).abs() < 1e-12 * (1.0 + expected.abs()));

            let m4 = Model::new(ModelSpec::DetectorMeasurement {
                detector: det, omega_a: 1.0, initial: InitialSystem::Superposition,
            }).unwrap();
            let mut out4 = [c(0.0, 0.0); 4];
            m4.derivative(t, &amps[..4], &mut out4);
            let expected = -gamma * m4.detector_excited_weight(&amps[..4]);
            prop_assert!((norm_rate(&amps[..4], &out4) - expected).abs() < 1e-12 * (1.0 + expected.abs()));
        }

        #[test]
        fn rabi_without_drive_matches_detector_exactly(
            amps in arb_state(4),
            t in 0.0f64..1000.0,
            gamma in 0.0f64..20.0,
            lam in 0.0f64..3.0,
            det_w in -0.5f64..0.5,
        ) {
            let det = DetectorParams::new(gamma, lam, 1.0);
            let drive = DriveParams { omega_r: 0.0, detuning: det_w };
            let mut a = [c(0.0, 0.0); 4];
            let mut b = [c(0.0, 0.0); 4];
            derivative_rabi_measured(t, &amps, &det, &drive, &mut a);
            derivative_detector(&amps, &det, 0.0, &mut b);
            prop_assert_eq!(a, b);
        }
    }
}
