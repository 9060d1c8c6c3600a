//! Monte Carlo mixed moments `E[∏ Y_k^{h_k}]` from Gibbs draws of the
//! transformed vector.

use serde::Serialize;

use super::BceDistribution;
use crate::boxcox::inverse1;
use crate::error::{check_dim, domain, Error, Result};
use crate::truncated::{gibbs_sample, GibbsConfig};

const BATCHES: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub estimate: f64,
    /// Batch-means standard error.
    pub std_error: f64,
    pub n: usize,
    /// Set when the sample variance of the summand moved by more than 10%
    /// between the first half of the draws and all of them, the usual sign
    /// of an infinite moment.
    pub diverging: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceEstimate {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub n: usize,
}

fn sample_ratios(dist: &BceDistribution, n_mc: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n_mc < 2 * BATCHES {
        return domain(format!(
            "need at least {} Monte Carlo draws, got {n_mc}",
            2 * BATCHES
        ));
    }
    let ws = gibbs_sample(&dist.transformed(), n_mc, &GibbsConfig::with_seed(seed))?;
    let lambda = dist.lambda();
    Ok(ws
        .into_iter()
        .map(|w| {
            w.iter()
                .zip(lambda)
                .map(|(&wk, &l)| inverse1(1.0, l, wk).unwrap_or(0.0))
                .collect()
        })
        .collect())
}

fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
}

fn batch_se(x: &[f64]) -> f64 {
    let size = x.len() / BATCHES;
    let means: Vec<f64> = x
        .chunks_exact(size)
        .take(BATCHES)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    (variance(&means) / BATCHES as f64).sqrt()
}

impl BceDistribution {
    /// `E[∏ Y_k^{h_k}] = ∏ μ_k^{h_k} E[∏ (1 + λ_k W_k)^{h_k/λ_k}]`,
    /// estimated from `n_mc` Gibbs draws of `W`.
    pub fn mixed_moment(&self, h: &[f64], n_mc: usize, seed: u64) -> Result<MomentEstimate> {
        check_dim(self.dim(), h.len())?;
        let us = sample_ratios(self, n_mc, seed)?;
        let scale: f64 = self.mu().iter().zip(h).map(|(m, e)| m.powf(*e)).product();
        let terms: Vec<f64> = us
            .iter()
            .map(|u| scale * u.iter().zip(h).map(|(v, e)| v.powf(*e)).product::<f64>())
            .collect();
        let estimate = terms.iter().sum::<f64>() / n_mc as f64;
        if !estimate.is_finite() {
            return Err(Error::Divergent(format!(
                "moment of order {h:?} is not finite in the sample"
            )));
        }
        let v_half = variance(&terms[..n_mc / 2]);
        let v_full = variance(&terms);
        let diverging = !v_full.is_finite() || (v_full - v_half).abs() > 0.1 * v_half;
        Ok(MomentEstimate {
            estimate,
            std_error: batch_se(&terms),
            n: n_mc,
            diverging,
        })
    }

    /// Mean vector and covariance matrix of `Y` from one set of draws.
    pub fn covariance(&self, n_mc: usize, seed: u64) -> Result<CovarianceEstimate> {
        let us = sample_ratios(self, n_mc, seed)?;
        let p = self.dim();
        let ys: Vec<Vec<f64>> = us
            .iter()
            .map(|u| u.iter().zip(self.mu()).map(|(v, m)| v * m).collect())
            .collect();
        let n = n_mc as f64;
        let mean: Vec<f64> = (0..p)
            .map(|k| ys.iter().map(|y| y[k]).sum::<f64>() / n)
            .collect();
        let covariance: Vec<Vec<f64>> = (0..p)
            .map(|i| {
                (0..p)
                    .map(|j| {
                        ys.iter()
                            .map(|y| (y[i] - mean[i]) * (y[j] - mean[j]))
                            .sum::<f64>()
                            / (n - 1.0)
                    })
                    .collect()
            })
            .collect();
        if covariance.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Divergent("sample covariance is not finite".into()));
        }
        Ok(CovarianceEstimate {
            mean,
            covariance,
            n: n_mc,
        })
    }
}

pub fn mixed_moment(
    dist: &BceDistribution,
    h: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    dist.mixed_moment(h, n_mc, seed)
}
