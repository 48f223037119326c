//! Dense complex state vectors over a labelled product basis
//! (system level ⊗ reservoir occupation ⊗ detector level).
//!
//! Amplitudes are stored contiguously in the order
//! (system level, reservoir mode, detector level); the Hamiltonian action is
//! applied matrix-free by the models, so no operator type lives here.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Squared norms at or below this value mark a numerically dead trajectory.
pub const UNDERFLOW_NORM_SQUARED: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemLevel {
    Excited,
    Ground,
}

/// Detector level: `Excited` is |a⟩, `Ground` is |b⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorLevel {
    Excited,
    Ground,
}

/// Reservoir part of a single-excitation basis state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reservoir {
    Vacuum,
    Mode(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisLabel {
    pub system: SystemLevel,
    pub reservoir: Option<Reservoir>,
    pub detector: Option<DetectorLevel>,
}

impl BasisLabel {
    pub fn new(
        system: SystemLevel,
        reservoir: Option<Reservoir>,
        detector: Option<DetectorLevel>,
    ) -> Self {
        Self {
            system,
            reservoir,
            detector,
        }
    }
}

/// Shared, immutable basis. Cloning a state only bumps the reference count.
pub type Basis = Arc<[BasisLabel]>;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<Complex64>,
    pub basis: Basis,
    pub time: f64,
}

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>, basis: Basis, time: f64) -> Result<Self> {
        if amplitudes.len() != basis.len() {
            return Err(Error::InvalidParameter(format!(
                "{} amplitudes for a basis of dimension {}",
                amplitudes.len(),
                basis.len()
            )));
        }
        Ok(Self {
            amplitudes,
            basis,
            time,
        })
    }

    /// The basis state `label` with unit amplitude.
    pub fn basis_state(basis: Basis, label: BasisLabel, time: f64) -> Result<Self> {
        let idx = basis
            .iter()
            .position(|l| *l == label)
            .ok_or_else(|| Error::InvalidParameter(format!("{label:?} not in basis")))?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.len()];
        amplitudes[idx] = Complex64::new(1.0, 0.0);
        Ok(Self {
            amplitudes,
            basis,
            time,
        })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_squared(&self) -> f64 {
        norm_squared(&self.amplitudes)
    }

    pub fn normalize(&self) -> Result<StateVector> {
        let mut out = self.clone();
        normalize_in_place(&mut out.amplitudes, self.time)?;
        Ok(out)
    }

    pub fn subspace_probability<P>(&self, predicate: P) -> f64
    where
        P: Fn(&BasisLabel) -> bool,
    {
        self.amplitudes
            .iter()
            .zip(self.basis.iter())
            .filter(|(_, label)| predicate(label))
            .map(|(c, _)| c.norm_sqr())
            .sum()
    }
}

pub fn norm_squared(amplitudes: &[Complex64]) -> f64 {
    amplitudes.iter().map(|c| c.norm_sqr()).sum()
}

/// Rescales `amplitudes` to unit norm by a single positive real factor.
pub(crate) fn normalize_in_place(amplitudes: &mut [Complex64], time: f64) -> Result<()> {
    let n2 = norm_squared(amplitudes);
    if !(n2 > UNDERFLOW_NORM_SQUARED) || !n2.is_finite() {
        return Err(Error::ZeroNorm { time });
    }
    let scale = 1.0 / n2.sqrt();
    for c in amplitudes.iter_mut() {
        *c *= scale;
    }
    Ok(())
}
