//! Circular moving-block bootstrap for quantile regression coefficients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_lqr, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub block_length: usize,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn with_defaults(n: usize, seed: u64) -> Self {
        Self {
            replications: 999,
            block_length: default_block_length(n),
            seed,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.replications < 100 {
            return Err(Error::InvalidArgument("bootstrap needs >= 100 replications".into()));
        }
        if self.block_length == 0 || self.block_length > n {
            return Err(Error::InvalidArgument(format!(
                "block length {} outside [1, {n}]",
                self.block_length
            )));
        }
        Ok(())
    }
}

/// `ceil(n^(1/3))`.
pub fn default_block_length(n: usize) -> usize {
    let mut b = (n as f64).cbrt().ceil() as usize;
    // guard against cbrt rounding up a perfect cube
    if b > 1 && (b - 1).pow(3) >= n {
        b -= 1;
    }
    b.max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub beta: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    pub tstats: Vec<f64>,
    pub failed: usize,
    pub replications: usize,
    /// Set when every coefficient's bootstrap variance is numerically zero.
    pub near_zero_variance: bool,
}

/// Row indices of one circular block resample.
pub fn circular_block_indices<R: Rng>(rng: &mut R, n: usize, block: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(n);
    while idx.len() < n {
        let start = rng.random_range(0..n);
        for j in 0..block {
            if idx.len() == n {
                break;
            }
            idx.push((start + j) % n);
        }
    }
    idx
}

fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64 + 1);
    rng
}

/// Bootstrap covariance of `beta(alpha)`; deterministic given the seed.
pub fn mbb_covariance(data: &Dataset, alpha: f64, cfg: &BootstrapConfig) -> Result<BootstrapResult> {
    let n = data.n();
    let p = data.p();
    cfg.validate(n)?;
    let full = fit_lqr(data, alpha)?;

    let draws: Vec<Option<Vec<f64>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(cfg.seed, rep);
            let rows = circular_block_indices(&mut rng, n, cfg.block_length);
            fit_lqr(&data.select_rows(&rows), alpha).ok().map(|f| f.beta)
        })
        .collect();

    let ok: Vec<&Vec<f64>> = draws.iter().flatten().collect();
    let failed = cfg.replications - ok.len();
    if failed * 20 > cfg.replications || ok.len() < 2 {
        return Err(Error::BootstrapFailure {
            failed,
            total: cfg.replications,
        });
    }
    let m = ok.len() as f64;
    let mean: Vec<f64> = (0..p).map(|j| ok.iter().map(|b| b[j]).sum::<f64>() / m).collect();
    let mut cov = vec![vec![0.0; p]; p];
    for b in &ok {
        for j in 0..p {
            for k in 0..p {
                cov[j][k] += (b[j] - mean[j]) * (b[k] - mean[k]) / (m - 1.0);
            }
        }
    }
    let std_errors: Vec<f64> = (0..p).map(|j| cov[j][j].max(0.0).sqrt()).collect();
    let near_zero_variance = std_errors
        .iter()
        .zip(&full.beta)
        .all(|(se, b)| *se <= 1e-9 * (1.0 + b.abs()));
    if near_zero_variance {
        log::warn!("bootstrap variance is numerically zero; block length {} likely too long", cfg.block_length);
    }
    let tstats = full
        .beta
        .iter()
        .zip(&std_errors)
        .map(|(b, se)| if *se > 0.0 { b / se } else { f64::NAN })
        .collect();
    Ok(BootstrapResult {
        beta: full.beta,
        cov,
        std_errors,
        tstats,
        failed,
        replications: cfg.replications,
        near_zero_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_length_default() {
        assert_eq!(default_block_length(1000), 10);
        assert_eq!(default_block_length(1001), 11);
        assert_eq!(default_block_length(1), 1);
    }

    #[test]
    fn indices_wrap_and_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let idx = circular_block_indices(&mut rng, 10, 4);
        assert_eq!(idx.len(), 10);
        assert!(idx.iter().all(|&i| i < 10));
        // blocks of consecutive indices modulo n
        assert_eq!((idx[0] + 1) % 10, idx[1]);
    }

    #[test]
    fn full_length_block_is_a_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let idx = circular_block_indices(&mut rng, 7, 7);
        let mut sorted = idx.clone();
        sorted.sort();
        assert_eq!(sorted, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn config_validation() {
        let cfg = BootstrapConfig {
            replications: 50,
            block_length: 3,
            seed: 0,
        };
        assert!(cfg.validate(100).is_err());
        let cfg = BootstrapConfig {
            replications: 100,
            block_length: 101,
            seed: 0,
        };
        assert!(cfg.validate(100).is_err());
    }
}
