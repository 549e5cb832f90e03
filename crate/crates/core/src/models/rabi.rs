//! A qubit driven at Rabi frequency `Ω` (`H = Ωσ_x`) and damped at unit rate
//! through `σ₋ = |0⟩⟨1|`, measured projectively every `τ`.
//!
//! The Liouvillian eigenvalues are `0`, `−1/2` and `−3/4 ± ¼√(1 − 64Ω²)`, so
//! the spectrum turns complex above `Ω = 1/8`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chain::{stationary, transition_matrix, TransitionMatrix};
use crate::channels::{MeasureEvolveStep, ProjectiveBasis};
use crate::error::{Error, Result};
use crate::fisher::{chain_fisher, ChainModel, FisherReport, ParamSpec};
use crate::qcore::{liouvillian, qubit, spectrum, HamiltonianSpec, Superoperator, C64};

/// Imaginary parts below this count as a real spectrum.
pub const REAL_SPECTRUM_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RabiBasis {
    Computational,
    SigmaX,
    SigmaY,
    /// Basis `{|n⟩, |−n⟩}` for the Bloch direction `n(polar, azimuth)`.
    Bloch { polar: f64, azimuth: f64 },
}

impl RabiBasis {
    pub fn angles(&self) -> (f64, f64) {
        match *self {
            RabiBasis::Computational => (0.0, 0.0),
            RabiBasis::SigmaX => (FRAC_PI_2, 0.0),
            RabiBasis::SigmaY => (FRAC_PI_2, FRAC_PI_2),
            RabiBasis::Bloch { polar, azimuth } => (polar, azimuth),
        }
    }

    pub fn basis(&self) -> Result<ProjectiveBasis> {
        match self {
            RabiBasis::Computational => Ok(ProjectiveBasis::computational(2)),
            _ => {
                let (polar, azimuth) = self.angles();
                ProjectiveBasis::bloch(polar, azimuth)
            }
        }
    }
}

impl fmt::Display for RabiBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RabiBasis::Computational => write!(f, "z"),
            RabiBasis::SigmaX => write!(f, "x"),
            RabiBasis::SigmaY => write!(f, "y"),
            RabiBasis::Bloch { polar, azimuth } => write!(f, "bloch:{polar},{azimuth}"),
        }
    }
}

/// Accepts `z`/`computational`, `x`, `y`, or `bloch:<polar>,<azimuth>`.
impl FromStr for RabiBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "z" | "computational" => Ok(RabiBasis::Computational),
            "x" | "sigma-x" => Ok(RabiBasis::SigmaX),
            "y" | "sigma-y" => Ok(RabiBasis::SigmaY),
            other => {
                let bad = || Error::InvalidArgument(format!("unknown basis '{s}'"));
                let angles = other.strip_prefix("bloch:").ok_or_else(bad)?;
                let (a, b) = angles.split_once(',').ok_or_else(bad)?;
                let polar: f64 = a.trim().parse().map_err(|_| bad())?;
                let azimuth: f64 = b.trim().parse().map_err(|_| bad())?;
                if !polar.is_finite() || !azimuth.is_finite() {
                    return Err(bad());
                }
                Ok(RabiBasis::Bloch { polar, azimuth })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiModel {
    omega: f64,
    basis: RabiBasis,
    tau: f64,
}

pub fn rabi_lindbladian(omega: f64) -> Result<Superoperator> {
    if !omega.is_finite() {
        return Err(Error::NonFinite(format!("Rabi frequency {omega}")));
    }
    let h = HamiltonianSpec::new(qubit::sigma_x() * C64::new(omega, 0.0))?;
    liouvillian(&h, &[(1.0, qubit::sigma_minus())])
}

/// Liouvillian eigenvalues at Rabi frequency `omega`.
pub fn rabi_spectrum(omega: f64) -> Result<Vec<C64>> {
    spectrum(&rabi_lindbladian(omega)?)
}

pub fn spectrum_is_real(omega: f64) -> Result<bool> {
    Ok(rabi_spectrum(omega)?
        .iter()
        .all(|z| z.im.abs() <= REAL_SPECTRUM_TOL))
}

/// Bisects `[lo, hi]` for the Rabi frequency where the spectrum turns
/// complex. `lo` must give a real spectrum and `hi` a complex one.
pub fn critical_omega(lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("bad bracket [{lo}, {hi}]")));
    }
    if !spectrum_is_real(lo)? || spectrum_is_real(hi)? {
        return Err(Error::InvalidArgument(format!(
            "[{lo}, {hi}] does not bracket the spectral transition"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if spectrum_is_real(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((a, b))
}

impl RabiModel {
    pub fn new(omega: f64, basis: RabiBasis, tau: f64) -> Result<Self> {
        if !(omega >= 0.0 && omega.is_finite()) {
            return Err(Error::InvalidArgument(format!("Rabi frequency must be >= 0, got {omega}")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("waiting time must be > 0, got {tau}")));
        }
        basis.basis()?;
        Ok(Self { omega, basis, tau })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn basis(&self) -> RabiBasis {
        self.basis
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.omega, self.basis, tau)
    }

    /// `P(k|k') = ⟨k| exp(𝕃τ)(|k'⟩⟨k'|) |k⟩` at Rabi frequency `omega`.
    /// Negative `omega` is allowed here so derivatives can straddle zero.
    pub fn transition_at(&self, omega: f64) -> Result<TransitionMatrix> {
        let step = MeasureEvolveStep::uniform(self.basis.basis()?.into(), &rabi_lindbladian(omega)?, self.tau)?;
        transition_matrix(&step)
    }

    pub fn transition(&self) -> Result<TransitionMatrix> {
        self.transition_at(self.omega)
    }

    /// Fisher report for `Ω` by central differences on the propagator.
    pub fn fisher(&self) -> Result<FisherReport> {
        chain_fisher(self, &ParamSpec::new("omega", self.omega)?)
    }
}

/// `θ = Ω` at fixed basis and waiting time, stationary start.
impl ChainModel for RabiModel {
    fn chain(&self, theta: f64) -> Result<(TransitionMatrix, Vec<f64>)> {
        let tm = self.transition_at(theta)?;
        let q = stationary(&tm)?.into_vec();
        Ok((tm, q))
    }
}
