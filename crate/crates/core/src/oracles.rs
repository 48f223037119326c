//! Closed-form and semi-analytic rate predictions.
//!
//! Everything here is a pure function of its parameters. The numeric roots
//! (`resolvent_root`, `laplace_root`) use an undamped Newton iteration with a
//! forward-difference derivative, seeded at `z = −Γ⁰/2`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::models::{DriveParams, ReservoirSpec};
use crate::quadrature::{integrate, Tolerance};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `Λτ_M` below which the measured-decay series is flagged invalid.
pub const SERIES_INVALID_BELOW: f64 = 2.0;
/// `Λτ_M` below which the series is flagged marginal.
pub const SERIES_MARGINAL_BELOW: f64 = 5.0;
/// `Γ⁰/(πΛ)` above which first-order band corrections are not small.
pub const BAND_CORRECTION_LIMIT: f64 = 0.1;

/// Relative tolerance of the outer Laplace-residual integral.
pub const LAPLACE_RELATIVE_TOLERANCE: f64 = 1e-9;

const NEWTON_MAX_ITERATIONS: usize = 60;
const NEWTON_RESIDUAL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormulaId {
    GoldenRule,
    CorrectedFree,
    ZenoTwoLevel,
    MeasuredDecayArctan,
    MeasuredDecaySeries,
    AntiZenoDecay,
}

impl FormulaId {
    pub const ALL: [FormulaId; 6] = [
        FormulaId::GoldenRule,
        FormulaId::CorrectedFree,
        FormulaId::ZenoTwoLevel,
        FormulaId::MeasuredDecayArctan,
        FormulaId::MeasuredDecaySeries,
        FormulaId::AntiZenoDecay,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FormulaId::GoldenRule => "golden_rule",
            FormulaId::CorrectedFree => "corrected_free",
            FormulaId::ZenoTwoLevel => "zeno_two_level",
            FormulaId::MeasuredDecayArctan => "measured_decay_arctan",
            FormulaId::MeasuredDecaySeries => "measured_decay_series",
            FormulaId::AntiZenoDecay => "anti_zeno_decay",
        }
    }

    /// Human-readable form of the expression being evaluated.
    pub fn expression(&self) -> &'static str {
        match self {
            FormulaId::GoldenRule => "Γ0 = 2π ρ0 g0²",
            FormulaId::CorrectedFree => "Γ0 (1 − Γ0 (5a² − 1)/(πΛ))",
            FormulaId::ZenoTwoLevel => "(Ω_R²/2) τ_M / (1 + (τ_M Δω)²)",
            FormulaId::MeasuredDecayArctan => "Γ0 (2/π) arctan(Λ τ_M)",
            FormulaId::MeasuredDecaySeries => "Γ0 (1 − (2/π)/(Λ τ_M))",
            FormulaId::AntiZenoDecay => "Γ0 (1 − Γ0 (5a² − 1)/(πΛ)) + Γ0 (2/π)(a² − 1)/(Λ τ_M)",
        }
    }
}

impl fmt::Display for FormulaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FormulaId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FormulaId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown formula `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatePrediction {
    pub rate: f64,
    pub formula: FormulaId,
    pub validity_note: String,
    /// False when the parameters violate the expansion's stated validity range.
    pub valid: bool,
}

impl RatePrediction {
    fn new(rate: f64, formula: FormulaId, validity_note: impl Into<String>, valid: bool) -> Self {
        Self {
            rate,
            formula,
            validity_note: validity_note.into(),
            valid,
        }
    }
}

fn require_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {value} must be > 0")))
    }
}

/// τ_M = Γ/(2λ²).
pub fn measurement_time(gamma: f64, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Err(Error::DivisionByZero("lambda = 0: the measurement never completes"));
    }
    require_positive("gamma", gamma)?;
    require_positive("lambda", lambda.abs())?;
    Ok(gamma / (2.0 * lambda * lambda))
}

/// Predicted `|ρ_eg(t)/ρ_eg(0)| = e^{−t/τ_M}` of the monitored system.
pub fn coherence_factor(t: f64, tau_m: f64) -> f64 {
    (-t / tau_m).exp()
}

/// Ground amplitude of an unmeasured driven two-level atom started in |g⟩.
pub fn rabi_amplitude(t: f64, drive: DriveParams) -> Complex64 {
    let dw = drive.detuning;
    let w = (dw * dw + drive.omega_r * drive.omega_r).sqrt();
    if w == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let (s, c) = (0.5 * w * t).sin_cos();
    let envelope = Complex64::from_polar(1.0, -0.5 * t * dw);
    envelope * Complex64::new(c, dw / w * s)
}

/// Transition rate of a driven two-level atom under continuous measurement.
pub fn zeno_transition_rate(drive: DriveParams, tau_m: f64) -> Result<RatePrediction> {
    require_positive("tau_m", tau_m)?;
    let x = tau_m * drive.detuning;
    let rate = 0.5 * drive.omega_r * drive.omega_r * tau_m / (1.0 + x * x);
    Ok(RatePrediction::new(
        rate,
        FormulaId::ZenoTwoLevel,
        "rate-equation estimate; up and down rates taken equal",
        true,
    ))
}

/// `ρ_gg(t) = ½(1 + e^{−2·rate·t})` for equal up and down rates.
pub fn rate_equation_population(t: f64, rate: f64) -> f64 {
    0.5 * (1.0 + (-2.0 * rate * t).exp())
}

/// Γ⁰ = 2π ρ₀ |g(ω_A)|².
pub fn golden_rule_rate(res: &ReservoirSpec) -> RatePrediction {
    let rate = 2.0 * PI * res.g0 * res.g0 / res.spacing();
    let ratio = rate / (PI * res.half_width);
    let valid = ratio < BAND_CORRECTION_LIMIT;
    let note = if valid {
        "band much wider than the decay rate"
    } else {
        "band corrections not small: Γ0/(πΛ) ≥ 0.1"
    };
    RatePrediction::new(rate, FormulaId::GoldenRule, note, valid)
}

fn golden(res: &ReservoirSpec) -> f64 {
    golden_rule_rate(res).rate
}

/// First-order band correction to the free decay rate for a sloped coupling.
pub fn corrected_free_decay_rate(res: &ReservoirSpec) -> RatePrediction {
    let g = golden(res);
    let a = res.slope;
    let eps = g / (PI * res.half_width);
    let rate = g * (1.0 - eps * (5.0 * a * a - 1.0));
    let valid = eps < BAND_CORRECTION_LIMIT;
    let note = if valid {
        format!("first order in Γ0/(πΛ) = {eps:.3e}")
    } else {
        format!("requires Γ0/(πΛ) ≪ 1, got {eps:.3}")
    };
    RatePrediction::new(rate, FormulaId::CorrectedFree, note, valid)
}

fn series_validity(band_tau: f64) -> (bool, String) {
    if band_tau < SERIES_INVALID_BELOW {
        (false, format!("requires Λτ_M ≫ 1, got Λτ_M={band_tau}"))
    } else if band_tau < SERIES_MARGINAL_BELOW {
        (true, format!("Λτ_M={band_tau}, series marginal"))
    } else {
        (true, format!("Λτ_M={band_tau}"))
    }
}

fn require_flat(res: &ReservoirSpec) -> Result<()> {
    if res.slope != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "constant coupling (a = 0) required, got a = {}",
            res.slope
        )));
    }
    Ok(())
}

/// Γ⁰ (2/π) arctan(Λτ_M) for a flat coupling.
pub fn measured_decay_rate(res: &ReservoirSpec, tau_m: f64) -> Result<RatePrediction> {
    require_positive("tau_m", tau_m)?;
    require_flat(res)?;
    let band_tau = res.half_width * tau_m;
    let rate = golden(res) * 2.0 / PI * band_tau.atan();
    Ok(RatePrediction::new(
        rate,
        FormulaId::MeasuredDecayArctan,
        format!("flat coupling, Λτ_M={band_tau}"),
        true,
    ))
}

/// Large-`Λτ_M` expansion of [`measured_decay_rate`].
pub fn measured_decay_series(res: &ReservoirSpec, tau_m: f64) -> Result<RatePrediction> {
    require_positive("tau_m", tau_m)?;
    require_flat(res)?;
    let band_tau = res.half_width * tau_m;
    let rate = golden(res) * (1.0 - 2.0 / PI / band_tau);
    let (valid, note) = series_validity(band_tau);
    Ok(RatePrediction::new(rate.max(0.0), FormulaId::MeasuredDecaySeries, note, valid))
}

/// Measurement-modified decay rate for a sloped coupling.
pub fn anti_zeno_rate(res: &ReservoirSpec, tau_m: f64) -> Result<RatePrediction> {
    require_positive("tau_m", tau_m)?;
    let g = golden(res);
    let a = res.slope;
    let band_tau = res.half_width * tau_m;
    let free = corrected_free_decay_rate(res);
    let rate = free.rate + g * 2.0 / PI * (a * a - 1.0) / band_tau;
    let (valid, note) = series_validity(band_tau);
    Ok(RatePrediction::new(
        rate.max(0.0),
        FormulaId::AntiZenoDecay,
        note,
        valid && free.valid,
    ))
}

/// Closed-form resolvent `H(z)` of the continuum with linear coupling.
pub fn resolvent(z: Complex64, res: &ReservoirSpec) -> Result<Complex64> {
    let lam = res.half_width;
    let w = z / lam;
    if (w - I).norm() < 1e-12 || (w + I).norm() < 1e-12 {
        return Err(Error::Domain(format!("resolvent branch point at z = {z}")));
    }
    let a = res.slope;
    let prefactor = PI * res.density_of_states() * res.g0 * res.g0;
    let at = w.atan();
    let two_pi = 2.0 / PI;
    let bracket = 1.0 - two_pi * at
        + (a * a * w - 2.0 * a * I) * (two_pi - w + two_pi * w * at);
    Ok(z + prefactor * bracket)
}

/// Root of `H(z)` near `−Γ⁰/2`; the amplitude decays as `e^{z t}`.
pub fn resolvent_root(res: &ReservoirSpec) -> Result<Complex64> {
    let seed = Complex64::new(-0.5 * golden(res), 0.0);
    newton(|z| resolvent(z, res), seed, golden(res).max(1e-300))
}

/// Population decay rate `−2 Re z*` from the resolvent root.
pub fn resolvent_decay_rate(res: &ReservoirSpec) -> Result<f64> {
    Ok(-2.0 * resolvent_root(res)?.re)
}

/// `1/ρ̃_{e0,e0}(z)` of the reservoir model with coherences damped at `1/τ_M`.
///
/// The inner integral is continued analytically to `Re z < 0` by adding the
/// residue of the `1/(z + i(x − y))` pole once it has crossed the real axis.
pub fn laplace_rate_equation_residual(z: Complex64, res: &ReservoirSpec, tau_m: f64) -> Result<Complex64> {
    require_positive("tau_m", tau_m)?;
    if res.g0 == 0.0 {
        return Ok(z);
    }
    let lam = res.half_width;
    let gam = 1.0 / tau_m;
    let rho0 = res.density_of_states();
    let big_g = |x: Complex64| -> Complex64 {
        let g = res.g0 * (1.0 + res.slope / lam * x);
        rho0 * g * g
    };
    let a_of = |x: f64| 1.0 / (z + I * x + gam);
    let b_of = |y: f64| 1.0 / (z - I * y + gam);
    let outer_tol = Tolerance::relative(LAPLACE_RELATIVE_TOLERANCE);
    let inner_tol = Tolerance::relative(LAPLACE_RELATIVE_TOLERANCE * 1e-2);

    let single = integrate(
        |x| big_g(Complex64::new(x, 0.0)) * (a_of(x) + b_of(x)),
        -lam,
        lam,
        &[0.0],
        outer_tol,
    )?;

    let mut inner_error = None;
    let double = integrate(
        |x| {
            let ax = a_of(x);
            let pole = x + z.im;
            let inner = integrate(
                |y| {
                    let s = ax + b_of(y);
                    big_g(Complex64::new(y, 0.0)) * s * s / (z + I * (x - y))
                },
                -lam,
                lam,
                &[0.0, pole],
                inner_tol,
            );
            let mut value = match inner {
                Ok(v) => v.value,
                Err(e) => {
                    inner_error.get_or_insert(e);
                    Complex64::new(0.0, 0.0)
                }
            };
            if z.re < 0.0 && pole > -lam && pole < lam {
                let ys = Complex64::new(x, 0.0) - I * z;
                let s = ax + 1.0 / (gam - I * x);
                value += 2.0 * PI * big_g(ys) * s * s;
            }
            big_g(Complex64::new(x, 0.0)) * value
        },
        -lam,
        lam,
        &[0.0, -lam - z.im, lam - z.im],
        outer_tol,
    )?;
    if let Some(e) = inner_error {
        return Err(e);
    }
    Ok(z + single.value - double.value)
}

/// Root of [`laplace_rate_equation_residual`] seeded at `−Γ⁰/2`.
pub fn laplace_root(res: &ReservoirSpec, tau_m: f64) -> Result<Complex64> {
    require_positive("tau_m", tau_m)?;
    let seed = Complex64::new(-0.5 * golden(res), 0.0);
    newton(
        |z| laplace_rate_equation_residual(z, res, tau_m),
        seed,
        golden(res).max(1e-300),
    )
}

/// Population decay rate `−Re z*` from the Laplace-domain root.
pub fn laplace_decay_rate(res: &ReservoirSpec, tau_m: f64) -> Result<f64> {
    Ok(-laplace_root(res, tau_m)?.re)
}

/// Newton iteration with a forward-difference derivative. `scale` sets the
/// difference step and the step-size stopping rule.
fn newton<F>(mut f: F, seed: Complex64, scale: f64) -> Result<Complex64>
where
    F: FnMut(Complex64) -> Result<Complex64>,
{
    let h = 1e-6 * scale;
    let mut z = seed;
    let mut fz = f(z)?;
    for _ in 0..NEWTON_MAX_ITERATIONS {
        if fz.norm() < NEWTON_RESIDUAL {
            return Ok(z);
        }
        let derivative = (f(z + h)? - fz) / h;
        if derivative.norm() == 0.0 || !derivative.is_finite() {
            return Err(Error::NoConvergence {
                iterations: 0,
                residual: fz.norm(),
            });
        }
        let step = fz / derivative;
        z -= step;
        fz = f(z)?;
        if step.norm() < 1e-12 * scale {
            return Ok(z);
        }
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITERATIONS,
        residual: fz.norm(),
    })
}
