//! Barotropic pressure laws and the entropy functions ψ and Π.

use std::fmt;
use std::sync::Arc;

use quadrature::double_exponential;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EosError {
    #[error("density must be positive (got {0})")]
    NonPositiveDensity(f64),
    #[error("gamma must be >= 1 (got {0})")]
    BadGamma(f64),
    #[error("pressure law must satisfy p'(1) > 0 (got {0})")]
    NotIncreasing(f64),
    #[error("threshold R must exceed 2 (got {0})")]
    BadThreshold(f64),
}

type Law = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Pressure law: either ρ^γ or a user-supplied increasing function.
#[derive(Clone)]
pub enum Eos {
    Power { gamma: f64 },
    General { law: Law },
}

impl fmt::Debug for Eos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Eos::Power { gamma } => write!(f, "Eos::Power {{ gamma: {gamma} }}"),
            Eos::General { .. } => write!(f, "Eos::General"),
        }
    }
}

const QUAD_TOL: f64 = 1e-12;

impl Eos {
    pub fn power(gamma: f64) -> Result<Self, EosError> {
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(EosError::BadGamma(gamma));
        }
        Ok(Eos::Power { gamma })
    }

    pub fn general(law: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self, EosError> {
        let eos = Eos::General { law: Arc::new(law) };
        let d = eos.dpressure(1.0);
        if !(d > 0.0) {
            return Err(EosError::NotIncreasing(d));
        }
        Ok(eos)
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            Eos::Power { gamma } => Some(*gamma),
            Eos::General { .. } => None,
        }
    }

    pub fn pressure(&self, rho: f64) -> f64 {
        match self {
            Eos::Power { gamma } => rho.powf(*gamma),
            Eos::General { law } => law(rho),
        }
    }

    pub fn dpressure(&self, rho: f64) -> f64 {
        match self {
            Eos::Power { gamma } => gamma * rho.powf(gamma - 1.0),
            Eos::General { law } => {
                let h = 1e-6 * rho.max(1e-3);
                (law(rho + h) - law(rho - h)) / (2.0 * h)
            }
        }
    }

    /// Pressure of every cell; rejects nonpositive densities.
    pub fn pressure_field(&self, rho: &[f64]) -> Result<Vec<f64>, EosError> {
        rho.iter().map(|&r| check(r).map(|r| self.pressure(r))).collect()
    }

    pub fn psi(&self, rho: f64) -> f64 {
        match self {
            Eos::Power { gamma } if *gamma == 1.0 => rho * rho.ln(),
            Eos::Power { gamma } => rho.powf(*gamma) / (gamma - 1.0),
            Eos::General { law } => rho * integral(|s| law(s) / (s * s), 1.0, rho),
        }
    }

    pub fn dpsi(&self, rho: f64) -> f64 {
        match self {
            Eos::Power { gamma } if *gamma == 1.0 => rho.ln() + 1.0,
            Eos::Power { gamma } => gamma * rho.powf(gamma - 1.0) / (gamma - 1.0),
            Eos::General { law } => integral(|s| law(s) / (s * s), 1.0, rho) + law(rho) / rho,
        }
    }

    pub fn d2psi(&self, rho: f64) -> f64 {
        match self {
            Eos::Power { gamma } => gamma * rho.powf(gamma - 2.0),
            Eos::General { .. } => self.dpressure(rho) / rho,
        }
    }

    /// Π(ρ) = ψ(ρ) − ψ(1) − ψ'(1)(ρ − 1), evaluated without cancellation near ρ = 1.
    pub fn pi(&self, rho: f64) -> f64 {
        let x = rho - 1.0;
        match self {
            Eos::Power { gamma } => pi_power(rho, *gamma),
            Eos::General { law } => {
                if x.abs() < 1e-3 {
                    x * x * integral(|s| self.dpressure(1.0 + s * x) / (1.0 + s * x) * (1.0 - s), 0.0, 1.0)
                } else {
                    integral(|s| rho * law(s) / (s * s) - law(1.0), 1.0, rho)
                }
            }
        }
    }
}

fn check(rho: f64) -> Result<f64, EosError> {
    if rho > 0.0 {
        Ok(rho)
    } else {
        Err(EosError::NonPositiveDensity(rho))
    }
}

fn integral(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    double_exponential::integrate(f, a, b, QUAD_TOL).integral
}

fn pi_power(rho: f64, gamma: f64) -> f64 {
    let x = rho - 1.0;
    if x.abs() < 0.1 {
        // Σ_{k≥2} c_k x^k with c_k = binom(γ, k) / (γ − 1) (γ = 1 is the limit of the same recurrence)
        let mut coef = 0.5 * gamma;
        let mut xk = x * x;
        let mut sum = coef * xk;
        for k in 2..80 {
            coef *= (gamma - k as f64) / (k + 1) as f64;
            xk *= x;
            let term = coef * xk;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else if gamma == 1.0 {
        rho * rho.ln() - rho + 1.0
    } else {
        (rho.powf(gamma) - 1.0 - gamma * x) / (gamma - 1.0)
    }
}

/// ψ_γ(ρ) for the power law.
pub fn psi(rho: f64, gamma: f64) -> Result<f64, EosError> {
    Ok(Eos::power(gamma)?.psi(check(rho)?))
}

/// Π_γ(ρ) for the power law.
pub fn pi_entropy(rho: f64, gamma: f64) -> Result<f64, EosError> {
    Ok(Eos::power(gamma)?.pi(check(rho)?))
}

/// Constants of the quadratic/power bounds on Π_γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiBounds {
    /// Π ≥ lower_small (ρ−1)² on (0, R) (on (0, ∞) when γ ≥ 2).
    pub lower_small: f64,
    /// Π ≥ lower_tail |ρ−1|^γ on [R, ∞).
    pub lower_tail: f64,
    /// Π ≤ upper (ρ−1)² on (0, 2).
    pub upper: f64,
}

pub fn pi_bound_constants(gamma: f64, r: f64) -> Result<PiBounds, EosError> {
    Eos::power(gamma)?;
    if !(r > 2.0) {
        return Err(EosError::BadThreshold(r));
    }
    if gamma >= 2.0 {
        Ok(PiBounds {
            lower_small: 1.0,
            lower_tail: gamma * integral(|s| s.powf(gamma - 2.0) * (1.0 - s), 0.0, 1.0),
            upper: gamma * integral(|s| (1.0 + s).powf(gamma - 2.0) * (1.0 - s), 0.0, 1.0),
        })
    } else {
        let c = gamma * integral(|s| (1.0 - s) / (1.0 + s * (r - 1.0)).powf(2.0 - gamma), 0.0, 1.0);
        Ok(PiBounds { lower_small: c, lower_tail: c, upper: 1.0 })
    }
}
