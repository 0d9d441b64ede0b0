use crate::error::{Error, Result};

/// Penalty and stopping rule of the outer ADMM loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmParams {
    pub rho: f64,
    pub eps_p: f64,
    pub eps_d: f64,
    pub max_iter: usize,
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self { rho: 1.0, eps_p: 1e-4, eps_d: 1e-4, max_iter: 5000 }
    }
}

impl AdmmParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.rho) || !positive(self.eps_p) || !positive(self.eps_d) || self.max_iter == 0 {
            return Err(Error::Config(format!("ADMM parameters must be positive: {self:?}")));
        }
        Ok(())
    }
}
