//! The Box-Cox elliptical law: `Y` such that `T_{λ,μ}(Y) ~ TE_p(0, Σ; R(λ); g)`.

mod marginal;
mod moments;

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use serde::Serialize;

pub use marginal::{cv_quantile, marginal_block, marginal_pdf_1d, quantile};
pub use marginal::{MarginalBlock, MarginalEvaluator, QuantileAux};
pub use moments::{mixed_moment, CovarianceEstimate, MomentEstimate};

use crate::boxcox::{self, forward1, inverse1, rectangle_of, BoxCoxParams, Rectangle};
use crate::dgf::DgfFamily;
use crate::error::{check_dim, domain, Error, Result};
use crate::integrate::{rectangle_integral_kernel, IntegrationOptions};
use crate::kernel::Kernel;
use crate::linalg::{select, PdMatrix};
use crate::truncated::{gibbs_sample, GibbsConfig, TruncatedElliptical};

#[derive(Clone, Debug)]
pub struct BceDistribution {
    params: BoxCoxParams,
    sigma: PdMatrix,
    kernel: Kernel,
    rect: Rectangle,
    ln_norm: f64,
    aux: Arc<Vec<OnceLock<Arc<QuantileAux>>>>,
}

impl BceDistribution {
    pub fn new(params: BoxCoxParams, sigma: PdMatrix, kernel: impl Into<Kernel>) -> Result<Self> {
        Self::with_options(params, sigma, kernel, &IntegrationOptions::default())
    }

    /// As [`BceDistribution::new`], with explicit options for the
    /// normalizing integral.
    pub fn with_options(
        params: BoxCoxParams,
        sigma: PdMatrix,
        kernel: impl Into<Kernel>,
        opts: &IntegrationOptions,
    ) -> Result<Self> {
        check_dim(params.dim(), sigma.dim())?;
        let kernel = kernel.into();
        let rect = rectangle_of(params.lambda());
        let ln_norm = rectangle_integral_kernel(&kernel, &sigma, &rect, opts)?.ln_value;
        if !ln_norm.is_finite() {
            return domain(format!(
                "normalizing integral is not finite and positive (log value {ln_norm})"
            ));
        }
        Ok(Self::from_parts(params, sigma, kernel, ln_norm))
    }

    pub(crate) fn from_parts(
        params: BoxCoxParams,
        sigma: PdMatrix,
        kernel: Kernel,
        ln_norm: f64,
    ) -> Self {
        let p = params.dim();
        Self {
            rect: rectangle_of(params.lambda()),
            params,
            sigma,
            kernel,
            ln_norm,
            aux: Arc::new((0..p).map(|_| OnceLock::new()).collect()),
        }
    }

    pub fn params(&self) -> &BoxCoxParams {
        &self.params
    }

    pub fn mu(&self) -> &[f64] {
        self.params.mu()
    }

    pub fn lambda(&self) -> &[f64] {
        self.params.lambda()
    }

    pub fn sigma(&self) -> &PdMatrix {
        &self.sigma
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn family(&self) -> Option<&DgfFamily> {
        self.kernel.family()
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    /// `R(λ)`, the support of `T_{λ,μ}(Y)`.
    pub fn rect(&self) -> &Rectangle {
        &self.rect
    }

    /// `K = ∫_{R(λ)} g(w'Σ^{-1}w) dw`.
    pub fn norm_const(&self) -> f64 {
        self.ln_norm.exp()
    }

    pub fn ln_norm_const(&self) -> f64 {
        self.ln_norm
    }

    /// The law of `T_{λ,μ}(Y)`.
    pub fn transformed(&self) -> TruncatedElliptical {
        TruncatedElliptical::from_parts(
            vec![0.0; self.dim()],
            self.sigma.clone(),
            self.rect.clone(),
            self.kernel.clone(),
            self.ln_norm,
        )
    }

    pub fn ln_pdf(&self, y: &[f64]) -> Result<f64> {
        let w = boxcox::forward(&self.params, y)?;
        if !self.rect.contains(&w) {
            return Ok(f64::NEG_INFINITY);
        }
        let q = self.sigma.quad_form_unchecked(&w);
        Ok(
            self.kernel.ln_eval(q) + boxcox::log_jacobian_unchecked(self.mu(), self.lambda(), y)
                - self.ln_norm,
        )
    }

    pub fn pdf(&self, y: &[f64]) -> Result<f64> {
        Ok(self.ln_pdf(y)?.exp())
    }

    /// Gibbs draws of `T_{λ,μ}(Y)` mapped back through the inverse transform.
    pub fn sample(&self, n: usize, config: &GibbsConfig) -> Result<Vec<Vec<f64>>> {
        let ws = gibbs_sample(&self.transformed(), n, config)?;
        ws.iter()
            .map(|w| boxcox::inverse(&self.params, w))
            .collect()
    }

    /// Law of `Y_1 | Y_2 = y2` where `given` lists the (0-based) coordinates
    /// of `Y_2`.
    pub fn conditional(&self, given: &[usize], y2: &[f64]) -> Result<ConditionalBce> {
        check_dim(given.len(), y2.len())?;
        let (idx1, idx2) = split_indices(self.dim(), given)?;
        let mu = self.mu();
        let lambda = self.lambda();
        let w2: Vec<f64> = idx2
            .iter()
            .zip(y2)
            .map(|(&k, &y)| {
                if y.is_finite() && y > 0.0 {
                    Ok(forward1(mu[k], lambda[k], y))
                } else {
                    domain(format!(
                        "conditioning value for coordinate {k} must be positive, got {y}"
                    ))
                }
            })
            .collect::<Result<_>>()?;
        let a = self.sigma.matrix();
        let s22 = self.sigma.submatrix(&idx2)?;
        let s12 = select(a, &idx1, &idx2);
        let s11 = select(a, &idx1, &idx1);
        let s22_inv_w2 = s22.solve(&w2);
        let mu1_w2: Vec<f64> = (0..idx1.len())
            .map(|i| (0..idx2.len()).map(|j| s12[(i, j)] * s22_inv_w2[j]).sum())
            .collect();
        let lambda1: Vec<f64> = idx1.iter().map(|&k| lambda[k]).collect();
        let mu1: Vec<f64> = idx1.iter().map(|&k| mu[k]).collect();
        if !rectangle_of(&lambda1).contains(&mu1_w2) {
            return Err(Error::HypothesisViolated(format!(
                "conditional location Σ12 Σ22^-1 w2 = {mu1_w2:?} lies outside R(λ1) for λ1 = {lambda1:?}"
            )));
        }
        let alpha: Vec<f64> = lambda1
            .iter()
            .zip(&mu1_w2)
            .map(|(l, m)| 1.0 + l * m)
            .collect();
        if alpha.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::HypothesisViolated(format!(
                "α(w2) = {alpha:?} has a nonpositive component"
            )));
        }
        let delta1: Vec<f64> = (0..idx1.len())
            .map(|i| inverse1(mu1[i], lambda1[i], mu1_w2[i]))
            .collect::<Option<_>>()
            .ok_or_else(|| {
                Error::HypothesisViolated("conditional location has no preimage".into())
            })?;
        // Σ11·2 = Σ11 - Σ12 Σ22^{-1} Σ21
        let mut s11_2 = s11.clone();
        for j in 0..idx1.len() {
            let col: Vec<f64> = (0..idx2.len()).map(|m| s12[(j, m)]).collect();
            let x = s22.solve(&col);
            for i in 0..idx1.len() {
                s11_2[(i, j)] -= (0..idx2.len()).map(|m| s12[(i, m)] * x[m]).sum::<f64>();
            }
        }
        let s11_2 = DMatrix::from_fn(idx1.len(), idx1.len(), |i, j| {
            0.5 * (s11_2[(i, j)] + s11_2[(j, i)])
        });
        let sigma_cond = PdMatrix::new(DMatrix::from_fn(idx1.len(), idx1.len(), |i, j| {
            s11_2[(i, j)] / (alpha[i] * alpha[j])
        }))?;
        let q_w2 = s22.quad_form_unchecked(&w2);
        let distribution = BceDistribution::new(
            BoxCoxParams::new(delta1.clone(), lambda1.clone())?,
            sigma_cond.clone(),
            self.kernel.shifted(q_w2),
        )?;
        Ok(ConditionalBce {
            indices: idx1,
            delta1,
            lambda1,
            sigma_cond,
            alpha_w2: alpha,
            mu1_w2,
            q_w2,
            distribution,
        })
    }
}

/// Splits `0..p` into the complement of `given` and `given` itself.
fn split_indices(p: usize, given: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut seen = vec![false; p];
    for &k in given {
        if k >= p {
            return domain(format!(
                "coordinate index {k} out of range for dimension {p}"
            ));
        }
        if seen[k] {
            return domain(format!("coordinate index {k} listed twice"));
        }
        seen[k] = true;
    }
    if given.is_empty() || given.len() == p {
        return domain("index set must be a nonempty proper subset of the coordinates");
    }
    let rest = (0..p).filter(|&k| !seen[k]).collect();
    Ok((rest, given.to_vec()))
}

/// `Y_1 | Y_2 = y_2`, itself Box-Cox elliptical with scale `δ_1`, the same
/// powers, dispersion `D_α^{-1} Σ_{11·2} D_α^{-1}` and kernel shifted by
/// `q(w_2)`.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionalBce {
    /// Coordinates of `Y_1` in the joint vector.
    pub indices: Vec<usize>,
    pub delta1: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub sigma_cond: PdMatrix,
    pub alpha_w2: Vec<f64>,
    pub mu1_w2: Vec<f64>,
    pub q_w2: f64,
    #[serde(skip)]
    pub distribution: BceDistribution,
}

impl ConditionalBce {
    pub fn pdf(&self, y1: &[f64]) -> Result<f64> {
        self.distribution.pdf(y1)
    }

    pub fn ln_pdf(&self, y1: &[f64]) -> Result<f64> {
        self.distribution.ln_pdf(y1)
    }
}

pub fn bce_pdf(dist: &BceDistribution, y: &[f64]) -> Result<f64> {
    dist.pdf(y)
}

pub fn bce_logpdf(dist: &BceDistribution, y: &[f64]) -> Result<f64> {
    dist.ln_pdf(y)
}
