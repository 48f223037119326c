//! Deterministic density-matrix integrators used as references for the
//! trajectory ensembles.
//!
//! The 4-level master equation is assembled from Kronecker products of 2×2
//! operators rather than from the trajectory derivatives, so the two code
//! paths share only the parameter structs.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::models::{CouplingTarget, DetectorParams, ModelSpec, Observable, ReservoirSpec};
use crate::statevec::StateVector;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Internal RK4 substeps per output step.
pub const SUBSTEPS: usize = 10;

pub const HERMITICITY_TOLERANCE: f64 = 1e-10;
pub const TRACE_TOLERANCE: f64 = 1e-10;
pub const EIGENVALUE_FLOOR: f64 = -1e-8;

/// Hermiticity drift that aborts an integration.
const HERMITICITY_ABORT: f64 = 1e-8;
/// Allowed trace drift per unit time in the master equation.
const TRACE_DRIFT_RATE: f64 = 1e-9;
/// Allowed absolute trace drift in the reservoir integration.
const RESERVOIR_TRACE_DRIFT: f64 = 1e-7;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::InvalidParameter(format!(
                "density matrix must be square, got {}×{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(Self { entries })
    }

    /// `|ψ⟩⟨ψ|` of the normalized state.
    pub fn from_state(state: &StateVector) -> Result<Self> {
        let psi = state.normalize()?;
        let v = nalgebra::DVector::from_vec(psi.amplitudes);
        Self::new(&v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    /// `max |ρ_ij − ρ_ji*|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.entries + self.entries.adjoint()) * c(0.5, 0.0);
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Checks Hermiticity, unit trace and positivity.
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > HERMITICITY_TOLERANCE {
            return Err(Error::ToleranceExceeded(format!("hermiticity error {herm:e}")));
        }
        let tr = self.trace();
        if (tr - 1.0).norm() > TRACE_TOLERANCE {
            return Err(Error::ToleranceExceeded(format!("trace {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < EIGENVALUE_FLOOR {
            return Err(Error::ToleranceExceeded(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// Reduced observables of the 4-level (system ⊗ detector) models.
    pub fn observable(&self, obs: Observable) -> Option<f64> {
        if self.dim() != 4 {
            return None;
        }
        let d = |i: usize| self.entries[(i, i)].re;
        Some(match obs {
            Observable::RhoEe => d(0) + d(1),
            Observable::RhoGg => d(2) + d(3),
            Observable::RhoAa => d(0) + d(2),
            Observable::RhoBb => d(1) + d(3),
            Observable::CoherenceRe => self.coherence()?.re,
            Observable::CoherenceIm => self.coherence()?.im,
        })
    }

    /// System coherence `ρ_eg = Σ_d ⟨e,d|ρ|g,d⟩`.
    pub fn coherence(&self) -> Option<Complex64> {
        (self.dim() == 4).then(|| self.entries[(0, 2)] + self.entries[(1, 3)])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmSeries {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl DmSeries {
    pub fn observable(&self, obs: Observable) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| s.observable(obs).unwrap_or(f64::NAN))
            .collect()
    }
}

struct Lindblad {
    static_h: Matrix4<Complex64>,
    /// `|e⟩⟨g| ⊗ 1`; drive term is `−(Ω_R/2)(e^{iΔωt} up + h.c.)`.
    up: Matrix4<Complex64>,
    half_r: f64,
    detuning: f64,
    jump: Matrix4<Complex64>,
    jump_dag: Matrix4<Complex64>,
    anti: Matrix4<Complex64>,
}

impl Lindblad {
    fn new(spec: &ModelSpec) -> Result<Self> {
        let zero = c(0.0, 0.0);
        let one = c(1.0, 0.0);
        let id2 = Matrix2::<Complex64>::identity();
        let p_e = Matrix2::new(one, zero, zero, zero);
        let p_g = Matrix2::new(zero, zero, zero, one);
        let raise = Matrix2::new(zero, one, zero, zero);
        let sz = Matrix2::new(one, zero, zero, -one);
        let sx = Matrix2::new(zero, one, one, zero);
        let lower = Matrix2::new(zero, zero, one, zero);

        let (det, omega_a, drive) = match spec {
            ModelSpec::DetectorMeasurement {
                detector, omega_a, ..
            } => (detector, *omega_a, None),
            ModelSpec::RabiMeasured { detector, drive, .. } => (detector, 0.0, Some(*drive)),
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "master equation needs a two-level model, got {}",
                    spec.kind()
                )))
            }
        };
        let target = match det.coupling_target {
            CouplingTarget::Ground => p_g,
            CouplingTarget::Excited => p_e,
        };
        let kron = |a: &Matrix2<Complex64>, b: &Matrix2<Complex64>| -> Matrix4<Complex64> {
            let k = a.kronecker(b);
            Matrix4::from_fn(|i, j| k[(i, j)])
        };
        let static_h = kron(&p_e, &id2) * c(omega_a, 0.0)
            + kron(&id2, &sz) * c(0.5 * det.omega_d, 0.0)
            + kron(&target, &sx) * c(det.lambda, 0.0);
        let jump = kron(&id2, &lower) * c(det.gamma.sqrt(), 0.0);
        let jump_dag = jump.adjoint();
        let anti = jump_dag * jump * c(0.5, 0.0);
        Ok(Self {
            static_h,
            up: kron(&raise, &id2),
            half_r: drive.map_or(0.0, |d| 0.5 * d.omega_r),
            detuning: drive.map_or(0.0, |d| d.detuning),
            jump,
            jump_dag,
            anti,
        })
    }

    fn hamiltonian(&self, t: f64) -> Matrix4<Complex64> {
        if self.half_r == 0.0 {
            return self.static_h;
        }
        let phase = Complex64::from_polar(1.0, self.detuning * t);
        let drive = self.up * phase;
        self.static_h - (drive + drive.adjoint()) * c(self.half_r, 0.0)
    }

    fn rhs(&self, t: f64, rho: &Matrix4<Complex64>) -> Matrix4<Complex64> {
        let h = self.hamiltonian(t);
        (h * rho - rho * h) * (-I) + self.jump * rho * self.jump_dag
            - (self.anti * rho + rho * self.anti)
    }
}

/// Integrates the full 4-level master equation with RK4 at `dt / SUBSTEPS`,
/// returning `ρ` every `dt` from 0 to `t_max`.
pub fn evolve_master_detector(rho0: &DensityMatrix, spec: &ModelSpec, t_max: f64, dt: f64) -> Result<DmSeries> {
    if rho0.dim() != 4 {
        return Err(Error::InvalidParameter(format!("expected a 4×4 density matrix, got {}", rho0.dim())));
    }
    check_grid(t_max, dt)?;
    let lind = Lindblad::new(spec)?;
    let n_out = (t_max / dt).round() as usize;
    let h = dt / SUBSTEPS as f64;
    let mut rho = Matrix4::from_fn(|i, j| rho0.entries[(i, j)]);
    let mut times = Vec::with_capacity(n_out + 1);
    let mut states = Vec::with_capacity(n_out + 1);
    let to_dm = |m: &Matrix4<Complex64>| DensityMatrix {
        entries: DMatrix::from_fn(4, 4, |i, j| m[(i, j)]),
    };
    times.push(0.0);
    states.push(to_dm(&rho));
    let tr0 = rho.trace();
    for n in 0..n_out {
        for s in 0..SUBSTEPS {
            let t = n as f64 * dt + s as f64 * h;
            let k1 = lind.rhs(t, &rho);
            let k2 = lind.rhs(t + 0.5 * h, &(rho + k1 * c(0.5 * h, 0.0)));
            let k3 = lind.rhs(t + 0.5 * h, &(rho + k2 * c(0.5 * h, 0.0)));
            let k4 = lind.rhs(t + h, &(rho + k3 * c(h, 0.0)));
            rho += (k1 + (k2 + k3) * c(2.0, 0.0) + k4) * c(h / 6.0, 0.0);
        }
        let t = (n + 1) as f64 * dt;
        let dm = to_dm(&rho);
        let herm = dm.hermiticity_error();
        if herm > HERMITICITY_ABORT {
            return Err(Error::ToleranceExceeded(format!("hermiticity drift {herm:e} at t = {t}")));
        }
        let drift = (dm.trace() - tr0).norm();
        if drift > TRACE_DRIFT_RATE * t.max(1.0) {
            return Err(Error::ToleranceExceeded(format!("trace drift {drift:e} at t = {t}")));
        }
        times.push(t);
        states.push(dm);
    }
    Ok(DmSeries { times, states })
}

fn check_grid(t_max: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_max >= dt && t_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("need 0 < dt <= t_max, got dt = {dt}, t_max = {t_max}")));
    }
    Ok(())
}

/// Detector matrix elements evolved by the reduced four-equation system
/// (detector driven only on the monitored branch).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorElements {
    pub t: f64,
    pub aa: Complex64,
    pub bb: Complex64,
    pub ab: Complex64,
    pub ba: Complex64,
}

pub fn detector_reduced_odes(t_max: f64, dt: f64, params: &DetectorParams) -> Result<Vec<DetectorElements>> {
    check_grid(t_max, dt)?;
    let (g, l, od) = (params.gamma, params.lambda, params.omega_d);
    let rhs = |y: [Complex64; 4]| -> [Complex64; 4] {
        let [aa, bb, ab, ba] = y;
        [
            I * l * ab - g * aa,
            I * l * ba + g * aa,
            -I * od * ab + I * l * aa - 0.5 * g * ab,
            I * od * ba + I * l * bb - 0.5 * g * ba,
        ]
    };
    let axpy = |y: &[Complex64; 4], k: &[Complex64; 4], h: f64| -> [Complex64; 4] {
        std::array::from_fn(|i| y[i] + h * k[i])
    };
    let n_out = (t_max / dt).round() as usize;
    let h = dt / SUBSTEPS as f64;
    let zero = c(0.0, 0.0);
    let mut y = [zero, c(1.0, 0.0), zero, zero];
    let mut out = Vec::with_capacity(n_out + 1);
    let push = |t: f64, y: &[Complex64; 4], out: &mut Vec<DetectorElements>| {
        out.push(DetectorElements {
            t,
            aa: y[0],
            bb: y[1],
            ab: y[2],
            ba: y[3],
        })
    };
    push(0.0, &y, &mut out);
    for n in 0..n_out {
        for _ in 0..SUBSTEPS {
            let k1 = rhs(y);
            let k2 = rhs(axpy(&y, &k1, 0.5 * h));
            let k3 = rhs(axpy(&y, &k2, 0.5 * h));
            let k4 = rhs(axpy(&y, &k3, h));
            for i in 0..4 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
            }
        }
        push((n + 1) as f64 * dt, &y, &mut out);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// Dense `(N+1)×(N+1)` density matrix over `{|e,0⟩, |g,k⟩}` evolved by the
/// von Neumann equation with the `e`–`g` coherences damped at `1/τ_M`
/// (`τ_M = ∞` switches the damping off). Returns `ρ_{e0,e0}` every `dt`.
///
/// Frequencies are measured from `ω_A`; the populations do not depend on it.
pub fn evolve_measured_decay_dm(res: &ReservoirSpec, tau_m: f64, t_max: f64, dt: f64) -> Result<PopulationSeries> {
    res.validate()?;
    if !(tau_m > 0.0) {
        return Err(Error::InvalidParameter(format!("tau_m = {tau_m} must be > 0")));
    }
    check_grid(t_max, dt)?;
    let n = res.n_modes;
    let dim = n + 1;
    let offsets: Vec<f64> = std::iter::once(0.0).chain((0..n).map(|k| res.mode_offset(k))).collect();
    let coupling: Vec<f64> = (0..n).map(|k| res.coupling_at_offset(res.mode_offset(k))).collect();
    let damping = 1.0 / tau_m;

    // dρ/dt = −i(Hρ − ρH) − γ(e–g block), H = diag(offsets) + g(|e⟩⟨k| + h.c.)
    let rhs = |rho: &[Complex64], out: &mut [Complex64]| {
        // Hρ and ρH share the same structure; row 0 / column 0 carry the
        // couplings, everything else is diagonal.
        let mut h_row0 = vec![c(0.0, 0.0); dim]; // (Hρ)_{0j}
        for j in 0..dim {
            let mut s = c(0.0, 0.0);
            for k in 0..n {
                s += coupling[k] * rho[(k + 1) * dim + j];
            }
            h_row0[j] = s;
        }
        let mut h_col0 = vec![c(0.0, 0.0); dim]; // (ρH)_{i0}
        for i in 0..dim {
            let row = &rho[i * dim..(i + 1) * dim];
            let mut s = c(0.0, 0.0);
            for k in 0..n {
                s += row[k + 1] * coupling[k];
            }
            h_col0[i] = s;
        }
        for i in 0..dim {
            for j in 0..dim {
                let r = rho[i * dim + j];
                // (Hρ)_ij
                let mut hr = offsets[i] * r;
                if i == 0 {
                    hr += h_row0[j];
                } else {
                    hr += coupling[i - 1] * rho[j];
                }
                // (ρH)_ij
                let mut rh = r * offsets[j];
                if j == 0 {
                    rh += h_col0[i];
                } else {
                    rh += rho[i * dim] * coupling[j - 1];
                }
                let mut d = -I * (hr - rh);
                if (i == 0) != (j == 0) {
                    d -= damping * r;
                }
                out[i * dim + j] = d;
            }
        }
    };

    let size = dim * dim;
    let mut rho = vec![c(0.0, 0.0); size];
    rho[0] = c(1.0, 0.0);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![c(0.0, 0.0); size],
        vec![c(0.0, 0.0); size],
        vec![c(0.0, 0.0); size],
        vec![c(0.0, 0.0); size],
        vec![c(0.0, 0.0); size],
    );
    let n_out = (t_max / dt).round() as usize;
    let h = dt / SUBSTEPS as f64;
    let mut times = vec![0.0];
    let mut values = vec![1.0];
    for step in 0..n_out {
        for _ in 0..SUBSTEPS {
            rhs(&rho, &mut k1);
            for i in 0..size {
                tmp[i] = rho[i] + 0.5 * h * k1[i];
            }
            rhs(&tmp, &mut k2);
            for i in 0..size {
                tmp[i] = rho[i] + 0.5 * h * k2[i];
            }
            rhs(&tmp, &mut k3);
            for i in 0..size {
                tmp[i] = rho[i] + h * k3[i];
            }
            rhs(&tmp, &mut k4);
            for i in 0..size {
                rho[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
            }
        }
        let t = (step + 1) as f64 * dt;
        let trace: f64 = (0..dim).map(|i| rho[i * dim + i].re).sum();
        if (trace - 1.0).abs() > RESERVOIR_TRACE_DRIFT {
            return Err(Error::ToleranceExceeded(format!("trace drift {:e} at t = {t}", trace - 1.0)));
        }
        times.push(t);
        values.push(rho[0].re);
    }
    Ok(PopulationSeries { times, values })
}
