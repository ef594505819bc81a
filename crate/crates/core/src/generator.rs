//! Seeded random instances of the two-stage game.
//!
//! Draw order from one ChaCha8 stream: `a`, `c`, `β̄`, `h̄` (length `J`
//! each), then `γ̄`, `ᾱ`, then `ξ_1, ..., ξ_ν`. Uniforms use the top 53 bits
//! of `next_u64`, so instances are reproducible across platforms.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{FirstStageParams, ScenarioData, TwoStageGame};

/// Lower end of the `γ̄` draw. Keeps `γ > 0`.
pub const GAMMA_BAR_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(rename = "J")]
    pub agents: usize,
    pub nu: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(agents: usize, nu: usize, seed: u64) -> Result<Self> {
        let spec = Self { agents, nu, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 {
            return Err(Error::invalid("J must be at least 1"));
        }
        if self.nu == 0 {
            return Err(Error::invalid("nu must be at least 1"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.agents * (2 * self.nu + 1)
    }
}

struct Uniform(ChaCha8Rng);

impl Uniform {
    fn draw(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        lo + (hi - lo) * u
    }

    fn vec(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.draw(lo, hi)).collect()
    }
}

/// First-stage data: `r = ½e`, `a ~ U[0,1]^J` and
/// `C_ii = 10 + c_i + r'e + (J - 2) r_i` with `c ~ U[0,1]^J`. The stored
/// cost coefficient is `C_ii - r_i` so that `diag(c + r)` reproduces `C`.
/// Scenario `ℓ` scales `β̄, h̄, γ̄, ᾱ` by `ξ_ℓ ~ U[1,2]` and sets
/// `ρ = -αe + β`.
pub fn generate_instance(spec: &GeneratorSpec) -> Result<TwoStageGame> {
    spec.validate()?;
    let j = spec.agents;
    let jf = j as f64;
    let mut u = Uniform(ChaCha8Rng::seed_from_u64(spec.seed));

    let a = u.vec(j, 0.0, 1.0);
    let c_raw = u.vec(j, 0.0, 1.0);
    let beta_bar = u.vec(j, 0.0, 1.0);
    let h_bar = u.vec(j, 2.0, 3.0);
    let gamma_bar = u.draw(GAMMA_BAR_MIN, 0.5);
    let alpha_bar = u.draw(5.0, 10.0);
    let xi = u.vec(spec.nu, 1.0, 2.0);

    let r = vec![0.5; j];
    let c: Vec<f64> = c_raw
        .iter()
        .map(|ci| 10.0 + ci + 0.5 * jf + 0.5 * (jf - 2.0) - 0.5)
        .collect();
    let first = FirstStageParams::new(c, a, r)?;

    let scenarios = xi
        .iter()
        .map(|&x| {
            let h = h_bar.iter().map(|v| x * v).collect();
            let beta: Vec<f64> = beta_bar.iter().map(|v| x * v).collect();
            ScenarioData::from_prices(h, x * gamma_bar, x * alpha_bar, &beta)
        })
        .collect::<Result<Vec<_>>>()?;
    TwoStageGame::new(first, scenarios)
}

/// `β(ξ_ℓ)` for each scenario of a generated instance, needed to evaluate
/// profits. Replays the same stream as [`generate_instance`].
pub fn generated_beta(spec: &GeneratorSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let j = spec.agents;
    let mut u = Uniform(ChaCha8Rng::seed_from_u64(spec.seed));
    let _a = u.vec(j, 0.0, 1.0);
    let _c = u.vec(j, 0.0, 1.0);
    let beta_bar = u.vec(j, 0.0, 1.0);
    let _h = u.vec(j, 2.0, 3.0);
    let _g = u.draw(GAMMA_BAR_MIN, 0.5);
    let _al = u.draw(5.0, 10.0);
    Ok(u.vec(spec.nu, 1.0, 2.0)
        .into_iter()
        .map(|x| beta_bar.iter().map(|b| x * b).collect())
        .collect())
}
