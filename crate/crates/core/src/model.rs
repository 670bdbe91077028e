use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("inverse temperature must be positive (got {0})")]
    Beta(f64),
    #[error("field strength must be positive (got {0})")]
    FieldStrength(f64),
}

/// Inverse temperature `beta` and field strength `h` of the Hamiltonian
/// `-H(sigma) = beta * sum_<xy> sigma_x sigma_y + h * sum_x g_x sigma_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: f64,
    pub h: f64,
}

impl ModelParams {
    pub fn new(beta: f64, h: f64) -> Result<Self, ParamsError> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(ParamsError::Beta(beta));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(ParamsError::FieldStrength(h));
        }
        Ok(Self { beta, h })
    }

    /// Coupling switched off (`beta = 0`). Only meant for factorization checks.
    pub fn decoupled(h: f64) -> Self {
        Self { beta: 0.0, h }
    }

    pub fn with_h(self, h: f64) -> Self {
        Self { h, ..self }
    }
}
