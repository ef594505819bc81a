use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::TwoStageGame;

const EXHAUSTIVE_MAX_DIM: usize = 10;
const SAMPLED_SUBSETS: usize = 256;
const MAX_SCENARIOS: usize = 64;

/// Local contraction estimate `‖C₂⁻¹‖² σ̂` for the alternating scheme, where
/// `C₂'C₂ = C + ½(re' + er')` and `σ̂` averages over scenarios the largest
/// `‖M(ξ)_K⁻¹‖` over nonsingular principal submatrices.
///
/// Above `2J = 10` the subsets are sampled, so `sigma_hat` and `value` are
/// lower estimates of the exact quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub c2_inv_norm_sq: f64,
    pub sigma_hat: f64,
    pub value: f64,
    pub exhaustive: bool,
    pub subsets_per_scenario: usize,
    pub scenarios_used: usize,
}

fn inverse_norm(m: &DMatrix<f64>) -> Option<f64> {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    (min > 1e-12 * max.max(1.0)).then(|| 1.0 / min)
}

fn principal(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

pub fn contraction_diagnostic(g: &TwoStageGame, seed: u64) -> Result<ContractionReport> {
    let sym = g.first_stage().symmetric_part();
    let lambda_min = sym.symmetric_eigenvalues().min();
    if !(lambda_min > 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "C + ½(re' + er') has smallest eigenvalue {lambda_min:.3e}"
        )));
    }
    let c2_inv_norm_sq = 1.0 / lambda_min;

    let n = 2 * g.agents();
    let nu = g.num_scenarios();
    let exhaustive = n <= EXHAUSTIVE_MAX_DIM;
    let chosen: Vec<usize> = if nu <= MAX_SCENARIOS {
        (0..nu).collect()
    } else {
        (0..MAX_SCENARIOS).map(|k| k * nu / MAX_SCENARIOS).collect()
    };

    let subsets: Vec<Vec<usize>> = if exhaustive {
        (1u32..(1u32 << n))
            .map(|mask| (0..n).filter(|&i| mask & (1 << i) != 0).collect())
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = vec![(0..n).collect::<Vec<_>>(), (0..n / 2).collect()];
        while out.len() < SAMPLED_SUBSETS {
            let k: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
            if !k.is_empty() {
                out.push(k);
            }
        }
        out
    };

    let mut total = 0.0;
    for &l in &chosen {
        let m = g.scenarios()[l].lcp_matrix();
        let sigma = subsets
            .iter()
            .filter_map(|k| inverse_norm(&principal(&m, k)))
            .fold(0.0f64, f64::max);
        total += sigma;
    }
    let sigma_hat = total / chosen.len() as f64;
    Ok(ContractionReport {
        c2_inv_norm_sq,
        sigma_hat,
        value: c2_inv_norm_sq * sigma_hat,
        exhaustive,
        subsets_per_scenario: subsets.len(),
        scenarios_used: chosen.len(),
    })
}
