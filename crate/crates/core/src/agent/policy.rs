//! Dirichlet policy over the portfolio simplex.
//!
//! The actor's softmax output is the distribution mean; a concentration `κ`
//! sets how tightly samples cluster around it (`α = κ · mean`).

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

use super::{AgentError, Result};
use crate::portfolio::WeightVector;

/// Smallest mean entry used to parametrize the distribution.
pub const MEAN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDistribution {
    mean: Vec<f64>,
    kappa: f64,
}

/// One draw from the policy. `log_action` holds `ln a_i` computed in log
/// space, so it stays finite even when `a_i` underflows to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub action: WeightVector,
    pub log_action: Vec<f64>,
    pub log_prob: f64,
}

/// Mixes `mean` with a uniform floor so every entry is at least
/// [`MEAN_FLOOR`] while the sum stays 1.
pub fn floor_mean(mean: &[f64]) -> Vec<f64> {
    let k = mean.len() as f64;
    mean.iter().map(|p| (1.0 - k * MEAN_FLOOR) * p + MEAN_FLOOR).collect()
}

impl PolicyDistribution {
    pub fn new(mean: &WeightVector, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(AgentError::InvalidConfig(format!(
                "concentration must be positive, got {kappa}"
            )));
        }
        Ok(Self {
            mean: floor_mean(mean.as_slice()),
            kappa,
        })
    }

    /// Mean of the distribution (the floored actor output).
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.mean.iter().map(|p| self.kappa * p).collect()
    }

    /// Per-coordinate variance `p(1 − p)/(κ + 1)`.
    pub fn variance(&self) -> Vec<f64> {
        self.mean
            .iter()
            .map(|p| p * (1.0 - p) / (self.kappa + 1.0))
            .collect()
    }

    /// Log-density at the point whose coordinate logs are `log_action`.
    pub fn log_density(&self, log_action: &[f64]) -> Result<f64> {
        if log_action.len() != self.mean.len() {
            return Err(AgentError::Shape(format!(
                "action of length {} for a distribution over {}",
                log_action.len(),
                self.mean.len()
            )));
        }
        let alpha = self.alpha();
        let mut lp = ln_gamma(self.kappa);
        for (a, la) in alpha.iter().zip(log_action) {
            lp += (a - 1.0) * la - ln_gamma(*a);
        }
        Ok(lp)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<Sample> {
        let log_g: Vec<f64> = self
            .alpha()
            .into_iter()
            .map(|a| log_gamma_variate(a, rng))
            .collect::<Result<_>>()?;
        let top = log_g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = top + log_g.iter().map(|g| (g - top).exp()).sum::<f64>().ln();
        let log_action: Vec<f64> = log_g.iter().map(|g| g - lse).collect();
        let raw: Vec<f64> = log_action.iter().map(|l| l.exp()).collect();
        let total: f64 = raw.iter().sum();
        let action = WeightVector::new(raw.iter().map(|v| v / total).collect())?;
        let log_prob = self.log_density(&log_action)?;
        Ok(Sample {
            action,
            log_action,
            log_prob,
        })
    }
}

/// `ln G` for `G ~ Gamma(shape, 1)`. Small shapes use
/// `G = G' · U^{1/shape}` with `G' ~ Gamma(shape + 1, 1)`, evaluated in logs so
/// the draw never rounds to zero.
fn log_gamma_variate(shape: f64, rng: &mut impl Rng) -> Result<f64> {
    let bad = |e: rand_distr::GammaError| AgentError::InvalidConfig(format!("gamma({shape}): {e}"));
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).map_err(bad)?.sample(rng);
        return Ok(g.ln());
    }
    let g: f64 = Gamma::new(shape + 1.0, 1.0).map_err(bad)?.sample(rng);
    // U in (0, 1]
    let u: f64 = 1.0 - rng.random::<f64>();
    Ok(g.ln() + u.ln() / shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_dirichlet_density_is_constant() {
        // Dirichlet(1,1,1) has density Γ(3) = 2 everywhere on the simplex
        let d = PolicyDistribution::new(&WeightVector::uniform(2), 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let s = d.sample(&mut rng).unwrap();
            assert!((s.log_prob - 2f64.ln()).abs() < 1e-6, "{}", s.log_prob);
        }
    }

    #[test]
    fn zero_mean_entries_are_floored() {
        let w = WeightVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        let d = PolicyDistribution::new(&w, 50.0).unwrap();
        assert!(d.mean().iter().all(|p| *p >= MEAN_FLOOR));
        assert!((d.mean().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = d.sample(&mut rng).unwrap();
        assert!(s.log_prob.is_finite());
        assert!(s.log_action.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn rejects_bad_concentration() {
        assert!(PolicyDistribution::new(&WeightVector::uniform(1), 0.0).is_err());
        assert!(PolicyDistribution::new(&WeightVector::uniform(1), f64::NAN).is_err());
    }
}
