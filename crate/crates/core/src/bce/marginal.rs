//! Univariate marginals through the auxiliary variable `U_k`, quantiles,
//! and block marginals.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{split_indices, BceDistribution};
use crate::boxcox::{
    forward, forward1, interval_of, log_jacobian_unchecked, rectangle_of, BoxCoxParams, Rectangle,
    LAMBDA_ZERO,
};
use crate::error::{check_dim, domain, Result};
use crate::integrate::{rectangle_integral_kernel, IntegrationOptions};
use crate::kernel::{Kernel, TruncatedLaw, Univariate};
use crate::linalg::{inv_sqrt_spectral, select, PdMatrix};
use crate::quadrature::CdfTable;

type LnG = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Ingredients of the marginal law of `Y_k`.
///
/// With `Δ = diag(√σ_11, …, √σ_pp)`, `S_k = T_{λ_k,μ_k}(Y_k)/√σ_kk` has
/// density proportional to `g_Υ(s)` on `I(λ_k √σ_kk)`, where
/// `g_Υ(s) = ∫_{R(Δ_{-k}λ_{-k})} g((1+ΥΥ')s² - 2ΥΩ s w + w'Ω'Ωw) dw`.
/// `U_k` is the variable on the whole line with density proportional to
/// `g_Υ`, so `S_k` is `U_k` truncated to `I(λ_k √σ_kk)`.
pub struct QuantileAux {
    k: usize,
    delta_diag: Vec<f64>,
    omega_k: DMatrix<f64>,
    upsilon_k: Vec<f64>,
    ln_g: LnG,
    /// `ln g_Υ` minus this is what the law of `U_k` was built from.
    ln_scale: f64,
    law: Univariate,
    truncated: TruncatedLaw,
    interval: (f64, f64),
}

impl fmt::Debug for QuantileAux {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuantileAux")
            .field("k", &self.k)
            .field("delta_diag", &self.delta_diag)
            .field("omega_k", &self.omega_k)
            .field("upsilon_k", &self.upsilon_k)
            .field("law", &self.law)
            .field("interval", &self.interval)
            .finish()
    }
}

impl QuantileAux {
    pub(super) fn build(dist: &BceDistribution, k: usize) -> Result<Self> {
        let p = dist.dim();
        let sigma = dist.sigma();
        let delta_diag: Vec<f64> = (0..p).map(|j| sigma.get(j, j).sqrt()).collect();
        let sd_k = delta_diag[k];
        let interval = interval_of(dist.lambda()[k] * sd_k);
        let kernel = dist.kernel().clone();
        if p == 1 {
            let law = kernel.univariate();
            let truncated = TruncatedLaw::new(law.clone(), interval.0, interval.1);
            return Ok(Self {
                k,
                delta_diag,
                omega_k: DMatrix::zeros(0, 0),
                upsilon_k: Vec::new(),
                ln_g: Arc::new(move |s: f64| kernel.ln_eval(s * s)),
                ln_scale: 0.0,
                law,
                truncated,
                interval,
            });
        }
        let others: Vec<usize> = (0..p).filter(|&j| j != k).collect();
        let a = sigma.matrix();
        let s_oo = select(a, &others, &others);
        let s_ok = select(a, &others, &[k]);
        let skk = a[(k, k)];
        let schur = &s_oo - &s_ok * s_ok.transpose() / skk;
        let d_o = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            others.len(),
            others.iter().map(|&j| delta_diag[j]),
        ));
        let omega_k = inv_sqrt_spectral(&schur)? * &d_o;
        let d_o_inv = d_o.map(|v| if v != 0.0 { 1.0 / v } else { 0.0 });
        let ups = s_ok.transpose() * &omega_k * d_o_inv / sd_k;
        let upsilon_k: Vec<f64> = ups.iter().copied().collect();

        // Ω'Ω is the inverse of the correlation Schur complement M and
        // ΥΩ = ρ_{k,-k} M^{-1}, so with e = w - ρ_{-k,k} s the integrand is
        // g(s² + e'M^{-1}e) over R(Δ_{-k}λ_{-k}) translated by -ρ_{-k,k} s.
        let rho: Vec<f64> = others
            .iter()
            .map(|&j| a[(j, k)] / (delta_diag[j] * sd_k))
            .collect();
        let m = PdMatrix::new(DMatrix::from_fn(others.len(), others.len(), |i, j| {
            let (oi, oj) = (others[i], others[j]);
            a[(oi, oj)] / (delta_diag[oi] * delta_diag[oj]) - rho[i] * rho[j]
        }))?;
        let scaled_lambda: Vec<f64> = others
            .iter()
            .map(|&j| dist.lambda()[j] * delta_diag[j])
            .collect();
        let rect = rectangle_of(&scaled_lambda);
        let opts = IntegrationOptions {
            fixed_points: Some(if others.len() == 2 { 64 } else { 1024 }),
            ..Default::default()
        };
        let symmetric = rect.is_full() || rho.iter().all(|r| *r == 0.0);
        let ln_g: LnG = Arc::new(move |s: f64| {
            let c: Vec<f64> = rho.iter().map(|r| r * s).collect();
            match rectangle_integral_kernel(&kernel.shifted(s * s), &m, &rect.shifted(&c), &opts) {
                Ok(r) => r.ln_value,
                Err(_) => f64::NEG_INFINITY,
            }
        });
        let ln_scale = ln_g(0.0);
        let g = ln_g.clone();
        let table_tol = if others.len() == 1 { 1e-12 } else { 1e-8 };
        let table = CdfTable::build_with_tol(
            Arc::new(move |s: f64| (g(s) - ln_scale).exp()),
            0.0,
            1.0,
            symmetric,
            table_tol,
        );
        let law = Univariate::Table(Arc::new(table));
        let truncated = TruncatedLaw::new(law.clone(), interval.0, interval.1);
        Ok(Self {
            k,
            delta_diag,
            omega_k,
            upsilon_k,
            ln_g,
            ln_scale,
            law,
            truncated,
            interval,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn delta_diag(&self) -> &[f64] {
        &self.delta_diag
    }

    /// `Ω_k = (Σ_{-k,-k} - σ_kk^{-1} Σ_{-k,k} Σ_{k,-k})^{-1/2} Δ_{-k,-k}`,
    /// with the symmetric square root.
    pub fn omega_k(&self) -> &DMatrix<f64> {
        &self.omega_k
    }

    /// `Υ_k = σ_kk^{-1/2} Σ_{k,-k} Ω_k Δ_{-k,-k}^{-1}`.
    pub fn upsilon_k(&self) -> &[f64] {
        &self.upsilon_k
    }

    /// `ln g_Υ(s)`.
    pub fn ln_g(&self, s: f64) -> f64 {
        (self.ln_g)(s)
    }

    /// `I(λ_k √σ_kk)`, the support of `S_k`.
    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    /// `F_{U_k}`.
    pub fn cdf_u(&self, u: f64) -> f64 {
        self.law.cdf(u)
    }

    pub fn quantile_u(&self, p: f64) -> f64 {
        self.law.quantile(p)
    }

    /// `ln ∫_{I(λ_k √σ_kk)} g_Υ`.
    pub fn ln_mass(&self) -> f64 {
        self.truncated.ln_mass() + self.ln_scale
    }

    /// CDF of `S_k`: `(F_U(s) - F_U(a)) / (F_U(b) - F_U(a))` on `(a, b)`.
    pub fn cdf_s(&self, s: f64) -> f64 {
        self.truncated.cdf(s)
    }

    /// `F_U^{-1}(F_U(a) + α (F_U(b) - F_U(a)))` on `I(λ_k √σ_kk) = (a, b)`,
    /// that is `F_U^{-1}(α + (1-α) F_U(c))` for `λ_k > 0`,
    /// `F_U^{-1}(α F_U(c))` for `λ_k < 0` and `F_U^{-1}(α)` for `λ_k = 0`,
    /// with `c = -1/(λ_k √σ_kk)`.
    pub fn quantile_s(&self, alpha: f64) -> f64 {
        self.truncated.quantile(alpha)
    }
}

impl BceDistribution {
    /// The (cached) marginal ingredients of coordinate `k` (0-based).
    pub fn quantile_aux(&self, k: usize) -> Result<Arc<QuantileAux>> {
        if k >= self.dim() {
            return domain(format!(
                "coordinate index {k} out of range for dimension {}",
                self.dim()
            ));
        }
        if let Some(a) = self.aux[k].get() {
            return Ok(a.clone());
        }
        let built = Arc::new(QuantileAux::build(self, k)?);
        Ok(self.aux[k].get_or_init(|| built).clone())
    }

    pub fn marginal_ln_pdf_1d(&self, k: usize, y: f64) -> Result<f64> {
        if !(y.is_finite() && y > 0.0) {
            return domain(format!(
                "marginal density needs a positive argument, got {y}"
            ));
        }
        let aux = self.quantile_aux(k)?;
        let (mu, lambda) = (self.mu()[k], self.lambda()[k]);
        let sd = aux.delta_diag[k];
        let s = forward1(mu, lambda, y) / sd;
        let (a, b) = aux.interval;
        if !(s > a && s < b) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(aux.ln_g(s) + (lambda - 1.0) * y.ln() - lambda * mu.ln() - sd.ln() - aux.ln_mass())
    }

    /// Density of `Y_k` (0-based `k`).
    pub fn marginal_pdf_1d(&self, k: usize, y: f64) -> Result<f64> {
        Ok(self.marginal_ln_pdf_1d(k, y)?.exp())
    }

    /// CDF of `Y_k`.
    pub fn marginal_cdf_1d(&self, k: usize, y: f64) -> Result<f64> {
        if y.is_nan() {
            return domain("marginal CDF argument is NaN");
        }
        if y <= 0.0 {
            return Ok(0.0);
        }
        let aux = self.quantile_aux(k)?;
        let s = forward1(self.mu()[k], self.lambda()[k], y) / aux.delta_diag[k];
        Ok(aux.cdf_s(s))
    }

    /// The `α`-quantile of `Y_k`: `μ_k (1 + λ_k √σ_kk s_α)^{1/λ_k}`, or
    /// `μ_k exp(√σ_kk s_α)` for `λ_k = 0`, with `s_α` the quantile of `S_k`.
    pub fn quantile(&self, k: usize, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return domain(format!("probability must lie in (0, 1), got {alpha}"));
        }
        let aux = self.quantile_aux(k)?;
        let s = aux.quantile_s(alpha);
        let (mu, lambda) = (self.mu()[k], self.lambda()[k]);
        let x = aux.delta_diag[k] * s;
        Ok(if lambda.abs() < LAMBDA_ZERO {
            mu * x.exp()
        } else {
            mu * ((lambda * x).ln_1p() / lambda).exp()
        })
    }

    /// `0.75 (y_{3/4} - y_{1/4}) / y_{1/2}`.
    pub fn cv_quantile(&self, k: usize) -> Result<f64> {
        let q1 = self.quantile(k, 0.25)?;
        let q2 = self.quantile(k, 0.5)?;
        let q3 = self.quantile(k, 0.75)?;
        Ok(0.75 * (q3 - q1) / q2)
    }

    /// Marginal law of the coordinates `indices` (0-based, in that order).
    /// With a zero off-diagonal block this is again Box-Cox elliptical with
    /// the projected kernel `u ↦ ∫_{R(λ_2)} g(u + s'Σ_22^{-1}s) ds`;
    /// otherwise a pointwise density evaluator.
    pub fn marginal_block(&self, indices: &[usize]) -> Result<MarginalBlock> {
        let (rest, idx1) = split_indices(self.dim(), indices)?;
        let a = self.sigma().matrix();
        let params1 = BoxCoxParams::new(
            idx1.iter().map(|&k| self.mu()[k]).collect(),
            idx1.iter().map(|&k| self.lambda()[k]).collect(),
        )?;
        let sigma11 = self.sigma().submatrix(&idx1)?;
        let sigma22 = self.sigma().submatrix(&rest)?;
        let lambda2: Vec<f64> = rest.iter().map(|&k| self.lambda()[k]).collect();
        let rect2 = rectangle_of(&lambda2);
        let s21 = select(a, &rest, &idx1);
        if s21.iter().all(|v| *v == 0.0) {
            let kernel = Kernel::projected(self.kernel().clone(), sigma22, rect2);
            // the normalizing integral of the marginal is the joint one
            return Ok(MarginalBlock::Bce(BceDistribution::from_parts(
                params1,
                sigma11,
                kernel,
                self.ln_norm_const(),
            )));
        }
        // Σ_21 Σ_11^{-1} and Σ_22·1 = Σ_22 - Σ_21 Σ_11^{-1} Σ_12
        let b = s21.clone() * sigma11.inverse();
        let s22_1 = sigma22.matrix() - &b * s21.transpose();
        let n2 = rest.len();
        let s22_1 = PdMatrix::new(DMatrix::from_fn(n2, n2, |i, j| {
            0.5 * (s22_1[(i, j)] + s22_1[(j, i)])
        }))?;
        Ok(MarginalBlock::Evaluator(MarginalEvaluator {
            indices: idx1,
            params: params1,
            sigma11,
            b,
            sigma22_1: s22_1,
            rect2,
            kernel: self.kernel().clone(),
            ln_norm: self.ln_norm_const(),
        }))
    }
}

/// Density of a block `Y_1` without Box-Cox elliptical structure:
/// `∫_{R(λ_2)} g(w'Σ^{-1}w) dw_2 · J(y_1) / K`.
#[derive(Clone, Debug)]
pub struct MarginalEvaluator {
    indices: Vec<usize>,
    params: BoxCoxParams,
    sigma11: PdMatrix,
    b: DMatrix<f64>,
    sigma22_1: PdMatrix,
    rect2: Rectangle,
    kernel: Kernel,
    ln_norm: f64,
}

impl MarginalEvaluator {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn ln_pdf(&self, y1: &[f64]) -> Result<f64> {
        check_dim(self.indices.len(), y1.len())?;
        let w1 = forward(&self.params, y1)?;
        if !rectangle_of(self.params.lambda()).contains(&w1) {
            return Ok(f64::NEG_INFINITY);
        }
        let q1 = self.sigma11.quad_form_unchecked(&w1);
        let c: Vec<f64> = (0..self.b.nrows())
            .map(|i| (0..w1.len()).map(|j| self.b[(i, j)] * w1[j]).sum())
            .collect();
        let inner = rectangle_integral_kernel(
            &self.kernel.shifted(q1),
            &self.sigma22_1,
            &self.rect2.shifted(&c),
            &IntegrationOptions::default(),
        )?;
        Ok(
            inner.ln_value + log_jacobian_unchecked(self.params.mu(), self.params.lambda(), y1)
                - self.ln_norm,
        )
    }

    pub fn pdf(&self, y1: &[f64]) -> Result<f64> {
        Ok(self.ln_pdf(y1)?.exp())
    }
}

#[derive(Clone, Debug)]
pub enum MarginalBlock {
    Bce(BceDistribution),
    Evaluator(MarginalEvaluator),
}

impl MarginalBlock {
    pub fn ln_pdf(&self, y1: &[f64]) -> Result<f64> {
        match self {
            MarginalBlock::Bce(d) => d.ln_pdf(y1),
            MarginalBlock::Evaluator(e) => e.ln_pdf(y1),
        }
    }

    pub fn pdf(&self, y1: &[f64]) -> Result<f64> {
        Ok(self.ln_pdf(y1)?.exp())
    }
}

pub fn marginal_pdf_1d(dist: &BceDistribution, k: usize, y: f64) -> Result<f64> {
    dist.marginal_pdf_1d(k, y)
}

pub fn marginal_block(dist: &BceDistribution, indices: &[usize]) -> Result<MarginalBlock> {
    dist.marginal_block(indices)
}

pub fn quantile(dist: &BceDistribution, k: usize, alpha: f64) -> Result<f64> {
    dist.quantile(k, alpha)
}

pub fn cv_quantile(dist: &BceDistribution, k: usize) -> Result<f64> {
    dist.cv_quantile(k)
}
