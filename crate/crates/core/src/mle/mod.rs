//! Maximum-likelihood fitting of Box-Cox elliptical models, with standard
//! errors from the observed information and AIC comparisons.

mod init;
mod optim;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use init::{initial_values, profile_tau};

use crate::bce::BceDistribution;
use crate::boxcox::{rectangle_of, BoxCoxParams, LAMBDA_ZERO};
use crate::dgf::{DgfFamily, DgfKind};
use crate::error::{check_dim, domain, Error, Result};
use crate::integrate::{rectangle_integral_kernel, IntegrationOptions};
use crate::linalg::PdMatrix;

/// A full parameter set; also the interchange format for parameter files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub family: DgfKind,
    #[serde(default)]
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

impl ParamPoint {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn params(&self) -> Result<BoxCoxParams> {
        BoxCoxParams::new(self.mu.clone(), self.lambda.clone())
    }

    pub fn sigma_matrix(&self) -> Result<PdMatrix> {
        check_dim(self.dim(), self.sigma.len())?;
        PdMatrix::from_rows(&self.sigma)
    }

    pub fn dgf(&self) -> Result<DgfFamily> {
        DgfFamily::new(self.family, &self.eta, self.dim())
    }

    /// Checks every component, reporting the first failure.
    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.sigma_matrix()?;
        self.dgf()?;
        Ok(())
    }

    pub fn distribution(&self) -> Result<BceDistribution> {
        BceDistribution::new(self.params()?, self.sigma_matrix()?, self.dgf()?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaConstraint {
    Free,
    FixedAtZero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub family: DgfKind,
    /// Extra parameters held at these values instead of estimated.
    pub fixed_eta: Option<Vec<f64>>,
    /// One constraint per coordinate, or a single one for all of them.
    pub lambda: Vec<LambdaConstraint>,
    /// Fit each coordinate separately and multiply the univariate models.
    pub independence: bool,
    /// Gradient-norm tolerance on the mean log-likelihood.
    pub tol: f64,
    pub max_iter: usize,
    pub multistart: usize,
    pub compute_se: bool,
    /// Points per axis of the fixed rule used for the normalizing integral
    /// during optimization; 128 for `p <= 2` and 4096 QMC points otherwise
    /// when unset.
    pub integration_points: Option<usize>,
    pub seed: u64,
}

impl FitSpec {
    pub fn new(family: DgfKind, lambda: LambdaConstraint) -> Self {
        Self {
            family,
            fixed_eta: None,
            lambda: vec![lambda],
            independence: false,
            tol: 1e-6,
            max_iter: 500,
            multistart: 1,
            compute_se: true,
            integration_points: None,
            seed: 0,
        }
    }

    pub fn independent(mut self) -> Self {
        self.independence = true;
        self
    }

    pub fn without_se(mut self) -> Self {
        self.compute_se = false;
        self
    }

    fn constraint(&self, k: usize) -> LambdaConstraint {
        if self.lambda.len() == 1 {
            self.lambda[0]
        } else {
            self.lambda[k]
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || self.multistart == 0 {
            return domain("tolerance, iteration limit and start count must be positive");
        }
        if self.lambda.len() != 1 && self.lambda.len() != p {
            return domain(format!(
                "{} λ constraints for dimension {p}",
                self.lambda.len()
            ));
        }
        if let Some(eta) = &self.fixed_eta {
            DgfFamily::new(self.family, eta, p)?;
        }
        Ok(())
    }

    /// Short model name such as `MBT2`, `MLN2` or `Ind-MBT2`.
    pub fn label(&self, p: usize) -> String {
        let all_zero = (0..p).all(|k| self.constraint(k) == LambdaConstraint::FixedAtZero);
        let fam = match self.family {
            DgfKind::Normal => "N",
            DgfKind::StudentT => "T",
            DgfKind::PowerExponential => "PE",
            DgfKind::Slash => "S",
        };
        let base = format!("M{}{fam}{p}", if all_zero { "L" } else { "B" });
        if self.independence {
            format!("Ind-{base}")
        } else {
            base
        }
    }
}

/// Standard errors in the shape of [`ParamPoint`]; `None` marks parameters
/// held fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSe {
    pub mu: Vec<f64>,
    pub lambda: Vec<Option<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub eta: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    /// For independence fits `sigma` is diagonal and `eta` lists the extra
    /// parameters of each coordinate in turn.
    pub estimates: ParamPoint,
    pub standard_errors: Option<ParamSe>,
    pub loglik: f64,
    pub aic: f64,
    pub n_params: usize,
    pub n_obs: usize,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<FitResult>,
}

pub(crate) fn check_data(data: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = data.first() else {
        return Err(Error::Input("data set has no rows".into()));
    };
    let p = first.len();
    if p == 0 {
        return Err(Error::Input("data set has no columns".into()));
    }
    for (i, row) in data.iter().enumerate() {
        if row.len() != p {
            return Err(Error::Input(format!(
                "row {i} has {} values, expected {p}",
                row.len()
            )));
        }
        if let Some((k, v)) = row
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::Input(format!(
                "row {i}, column {k}: value {v} is not positive"
            )));
        }
    }
    Ok(p)
}

fn ln_rows(data: &[Vec<f64>]) -> Vec<Vec<f64>> {
    data.iter()
        .map(|r| r.iter().map(|v| v.ln()).collect())
        .collect()
}

/// `Σ_i [ln g(w_i'Σ^{-1}w_i) + ln J(y_i)] - n ln K`. With every `λ_k = 0`
/// and `general` unset, `K = √det Σ ∫ g(x'x) dx` in closed form.
fn loglik_ln(
    family: &DgfFamily,
    mu: &[f64],
    lambda: &[f64],
    sigma: &PdMatrix,
    ln_y: &[Vec<f64>],
    opts: &IntegrationOptions,
    general: bool,
) -> Result<f64> {
    let p = mu.len();
    let ln_mu: Vec<f64> = mu.iter().map(|m| m.ln()).collect();
    let mut w = vec![0.0; p];
    let mut total = 0.0;
    for row in ln_y {
        let mut jac = 0.0;
        for k in 0..p {
            let l = row[k] - ln_mu[k];
            w[k] = if lambda[k].abs() < LAMBDA_ZERO {
                l
            } else {
                (lambda[k] * l).exp_m1() / lambda[k]
            };
            jac += (lambda[k] - 1.0) * row[k] - lambda[k] * ln_mu[k];
        }
        total += family.ln_kernel(sigma.quad_form_unchecked(&w)) + jac;
    }
    let ln_k = if !general && lambda.iter().all(|l| l.abs() < LAMBDA_ZERO) {
        0.5 * sigma.ln_det() + family.ln_full_integral(p)
    } else {
        rectangle_integral_kernel(&family.clone().into(), sigma, &rectangle_of(lambda), opts)?
            .ln_value
    };
    Ok(total - ln_y.len() as f64 * ln_k)
}

/// Log-likelihood of `theta` on the rows of `data`.
pub fn loglik(theta: &ParamPoint, data: &[Vec<f64>]) -> Result<f64> {
    loglik_with_options(theta, data, &IntegrationOptions::default())
}

pub fn loglik_with_options(
    theta: &ParamPoint,
    data: &[Vec<f64>],
    opts: &IntegrationOptions,
) -> Result<f64> {
    loglik_path(theta, data, opts, false)
}

/// As [`loglik`] but always through the normalizing integral, even when
/// every `λ_k` is zero.
pub fn loglik_general(
    theta: &ParamPoint,
    data: &[Vec<f64>],
    opts: &IntegrationOptions,
) -> Result<f64> {
    loglik_path(theta, data, opts, true)
}

fn loglik_path(
    theta: &ParamPoint,
    data: &[Vec<f64>],
    opts: &IntegrationOptions,
    general: bool,
) -> Result<f64> {
    let p = check_data(data)?;
    check_dim(theta.dim(), p)?;
    theta.params()?;
    let sigma = theta.sigma_matrix()?;
    let family = theta.dgf()?;
    loglik_ln(
        &family,
        &theta.mu,
        &theta.lambda,
        &sigma,
        &ln_rows(data),
        opts,
        general,
    )
}

/// Maps between parameter points and the unconstrained vector
/// `[ln μ, free λ, Cholesky factor with log diagonal, ln η]`.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    p: usize,
    kind: DgfKind,
    free: Vec<bool>,
    fixed_eta: Option<Vec<f64>>,
}

impl Layout {
    pub(crate) fn new(spec: &FitSpec, p: usize) -> Self {
        Self {
            p,
            kind: spec.family,
            free: (0..p)
                .map(|k| spec.constraint(k) == LambdaConstraint::Free)
                .collect(),
            fixed_eta: spec.fixed_eta.clone(),
        }
    }

    fn n_eta(&self) -> usize {
        if self.fixed_eta.is_some() {
            0
        } else {
            self.kind.n_extra()
        }
    }

    pub(crate) fn n_params(&self) -> usize {
        let p = self.p;
        p + self.free.iter().filter(|f| **f).count() + p * (p + 1) / 2 + self.n_eta()
    }

    pub(crate) fn to_theta(&self, pt: &ParamPoint) -> Result<Vec<f64>> {
        let sigma = pt.sigma_matrix()?;
        let l = sigma.chol();
        let mut th: Vec<f64> = pt.mu.iter().map(|m| m.ln()).collect();
        th.extend((0..self.p).filter(|&k| self.free[k]).map(|k| pt.lambda[k]));
        for i in 0..self.p {
            for j in 0..=i {
                th.push(if i == j { l[(i, i)].ln() } else { l[(i, j)] });
            }
        }
        if self.n_eta() > 0 {
            th.extend(pt.eta.iter().map(|e| e.ln()));
        }
        Ok(th)
    }

    pub(crate) fn point_from_theta(&self, th: &[f64]) -> ParamPoint {
        let p = self.p;
        let mu: Vec<f64> = th[..p].iter().map(|v| v.exp()).collect();
        let mut at = p;
        let lambda: Vec<f64> = (0..p)
            .map(|k| {
                if self.free[k] {
                    at += 1;
                    th[at - 1]
                } else {
                    0.0
                }
            })
            .collect();
        let mut l = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..=i {
                l[(i, j)] = if i == j { th[at].exp() } else { th[at] };
                at += 1;
            }
        }
        let s = &l * l.transpose();
        let eta = match &self.fixed_eta {
            Some(e) => e.clone(),
            None => th[at..].iter().map(|v| v.exp()).collect(),
        };
        ParamPoint {
            family: self.kind,
            eta,
            mu,
            lambda,
            sigma: (0..p)
                .map(|i| (0..p).map(|j| s[(i, j)]).collect())
                .collect(),
        }
    }

    /// `[μ, free λ, σ_ij (i <= j), η]`.
    fn to_natural(&self, pt: &ParamPoint) -> Vec<f64> {
        let mut v = pt.mu.clone();
        v.extend((0..self.p).filter(|&k| self.free[k]).map(|k| pt.lambda[k]));
        for i in 0..self.p {
            for j in i..self.p {
                v.push(pt.sigma[i][j]);
            }
        }
        if self.n_eta() > 0 {
            v.extend(&pt.eta);
        }
        v
    }

    fn point_from_natural(&self, v: &[f64]) -> ParamPoint {
        let p = self.p;
        let mu = v[..p].to_vec();
        let mut at = p;
        let lambda = (0..p)
            .map(|k| {
                if self.free[k] {
                    at += 1;
                    v[at - 1]
                } else {
                    0.0
                }
            })
            .collect();
        let mut sigma = vec![vec![0.0; p]; p];
        for i in 0..p {
            for j in i..p {
                sigma[i][j] = v[at];
                sigma[j][i] = v[at];
                at += 1;
            }
        }
        let eta = match &self.fixed_eta {
            Some(e) => e.clone(),
            None => v[at..].to_vec(),
        };
        ParamPoint {
            family: self.kind,
            eta,
            mu,
            lambda,
            sigma,
        }
    }

    fn se_shape(&self, se: &[f64]) -> ParamSe {
        let p = self.p;
        let mu = se[..p].to_vec();
        let mut at = p;
        let lambda = (0..p)
            .map(|k| {
                if self.free[k] {
                    at += 1;
                    Some(se[at - 1])
                } else {
                    None
                }
            })
            .collect();
        let mut sigma = vec![vec![0.0; p]; p];
        for i in 0..p {
            for j in i..p {
                sigma[i][j] = se[at];
                sigma[j][i] = se[at];
                at += 1;
            }
        }
        let eta = match &self.fixed_eta {
            Some(e) => vec![None; e.len()],
            None => se[at..].iter().map(|v| Some(*v)).collect(),
        };
        ParamSe {
            mu,
            lambda,
            sigma,
            eta,
        }
    }
}

/// The data and integration rule shared by every likelihood evaluation of
/// one fit.
pub(crate) struct Objective<'a> {
    ln_y: &'a [Vec<f64>],
    opts: IntegrationOptions,
}

impl<'a> Objective<'a> {
    pub(crate) fn new(ln_y: &'a [Vec<f64>], spec: &FitSpec, p: usize) -> Self {
        let points = spec
            .integration_points
            .unwrap_or(if p <= 2 { 128 } else { 4096 });
        Self {
            ln_y,
            opts: IntegrationOptions {
                fixed_points: Some(points),
                seed: spec.seed,
                ..Default::default()
            },
        }
    }

    pub(crate) fn loglik(&self, pt: &ParamPoint) -> f64 {
        let eval = || -> Result<f64> {
            let sigma = pt.sigma_matrix()?;
            let family = pt.dgf()?;
            loglik_ln(
                &family, &pt.mu, &pt.lambda, &sigma, self.ln_y, &self.opts, false,
            )
        };
        match eval() {
            Ok(v) if v.is_finite() => v,
            _ => f64::NEG_INFINITY,
        }
    }
}

pub(crate) struct Optimum {
    pub point: ParamPoint,
    pub loglik: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

pub(crate) fn maximize(
    objective: &Objective,
    layout: &Layout,
    start: &ParamPoint,
    spec: &FitSpec,
) -> Result<Optimum> {
    let n = objective.ln_y.len() as f64;
    let theta0 = layout.to_theta(start)?;
    let f = |th: &[f64]| {
        let v = objective.loglik(&layout.point_from_theta(th));
        if v.is_finite() {
            -v / n
        } else {
            f64::INFINITY
        }
    };
    let m = optim::bfgs(f, &theta0, spec.tol, spec.max_iter);
    if !m.value.is_finite() {
        return Err(Error::Initialization(
            "log-likelihood is not finite at the starting point".into(),
        ));
    }
    Ok(Optimum {
        point: layout.point_from_theta(&m.x),
        loglik: -m.value * n,
        iterations: m.iterations,
        grad_norm: m.grad_norm,
        converged: m.converged,
    })
}

fn standard_errors(objective: &Objective, layout: &Layout, at: &ParamPoint) -> Option<ParamSe> {
    let psi = layout.to_natural(at);
    let f = |v: &[f64]| objective.loglik(&layout.point_from_natural(v));
    let h = optim::hessian(&f, &psi, 1e-4);
    let k = psi.len();
    let neg = DMatrix::from_fn(k, k, |i, j| -h[i][j]);
    if neg.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let cov = neg.cholesky()?.inverse();
    let se: Vec<f64> = (0..k).map(|i| cov[(i, i)].sqrt()).collect();
    if se.iter().all(|v| v.is_finite()) {
        Some(layout.se_shape(&se))
    } else {
        None
    }
}

fn jittered_starts(start: &ParamPoint, layout: &Layout, count: usize) -> Vec<ParamPoint> {
    const JITTER: [(f64, f64); 4] = [(0.5, 0.5), (-0.5, 2.0), (0.5, 2.0), (-0.5, 0.5)];
    (0..count)
        .map(|i| {
            let mut s = start.clone();
            if i > 0 {
                let (dl, fe) = JITTER[(i - 1) % JITTER.len()];
                for k in 0..layout.p {
                    if layout.free[k] {
                        s.lambda[k] += dl;
                    }
                }
                if layout.n_eta() > 0 {
                    s.eta.iter_mut().for_each(|e| *e *= fe);
                }
            }
            s
        })
        .collect()
}

fn lambda_norm(pt: &ParamPoint) -> f64 {
    pt.lambda.iter().map(|l| l * l).sum::<f64>()
}

/// Maximum-likelihood fit of the model described by `spec` to the rows of
/// `data`.
pub fn fit(data: &[Vec<f64>], spec: &FitSpec) -> Result<FitResult> {
    let p = check_data(data)?;
    spec.validate(p)?;
    if spec.independence {
        return fit_independent(data, spec);
    }
    let start = initial_values(data, spec)?;
    fit_from(data, spec, &start)
}

/// As [`fit`] without the independence branch, from a given start.
pub fn fit_from(data: &[Vec<f64>], spec: &FitSpec, start: &ParamPoint) -> Result<FitResult> {
    let p = check_data(data)?;
    spec.validate(p)?;
    check_dim(p, start.dim())?;
    let layout = Layout::new(spec, p);
    let ln_y = ln_rows(data);
    let objective = Objective::new(&ln_y, spec, p);
    let starts = jittered_starts(start, &layout, spec.multistart);
    let runs: Vec<Result<Optimum>> = if starts.len() > 1 {
        starts
            .par_iter()
            .map(|s| maximize(&objective, &layout, s, spec))
            .collect()
    } else {
        starts
            .iter()
            .map(|s| maximize(&objective, &layout, s, spec))
            .collect()
    };
    let mut best: Option<Optimum> = None;
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(o) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        o.loglik > b.loglik + 1e-6
                            || ((o.loglik - b.loglik).abs() <= 1e-6
                                && lambda_norm(&o.point) < lambda_norm(&b.point))
                    }
                };
                if better {
                    best = Some(o);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some(best) = best else {
        return Err(first_err.unwrap_or_else(|| Error::Initialization("no start succeeded".into())));
    };
    let standard_errors = if spec.compute_se {
        standard_errors(&objective, &layout, &best.point)
    } else {
        None
    };
    let n_params = layout.n_params();
    Ok(FitResult {
        model: spec.label(p),
        estimates: best.point,
        standard_errors,
        loglik: best.loglik,
        aic: 2.0 * n_params as f64 - 2.0 * best.loglik,
        n_params,
        n_obs: data.len(),
        converged: best.converged,
        iterations: best.iterations,
        grad_norm: best.grad_norm,
        components: Vec::new(),
    })
}

fn fit_independent(data: &[Vec<f64>], spec: &FitSpec) -> Result<FitResult> {
    let p = data[0].len();
    let components: Vec<FitResult> = (0..p)
        .map(|k| {
            let col: Vec<Vec<f64>> = data.iter().map(|r| vec![r[k]]).collect();
            let mut s = spec.clone();
            s.independence = false;
            s.lambda = vec![spec.constraint(k)];
            s.seed = crate::truncated::split_seed(spec.seed, k as u64);
            fit(&col, &s)
        })
        .collect::<Result<_>>()?;
    let mut sigma = vec![vec![0.0; p]; p];
    for (k, c) in components.iter().enumerate() {
        sigma[k][k] = c.estimates.sigma[0][0];
    }
    let estimates = ParamPoint {
        family: spec.family,
        eta: components
            .iter()
            .flat_map(|c| c.estimates.eta.clone())
            .collect(),
        mu: components.iter().map(|c| c.estimates.mu[0]).collect(),
        lambda: components.iter().map(|c| c.estimates.lambda[0]).collect(),
        sigma,
    };
    let standard_errors = components
        .iter()
        .map(|c| c.standard_errors.clone())
        .collect::<Option<Vec<_>>>()
        .map(|ses| {
            let mut sigma = vec![vec![0.0; p]; p];
            for (k, s) in ses.iter().enumerate() {
                sigma[k][k] = s.sigma[0][0];
            }
            ParamSe {
                mu: ses.iter().map(|s| s.mu[0]).collect(),
                lambda: ses.iter().map(|s| s.lambda[0]).collect(),
                sigma,
                eta: ses.iter().flat_map(|s| s.eta.clone()).collect(),
            }
        });
    let loglik = components.iter().map(|c| c.loglik).sum();
    let n_params = components.iter().map(|c| c.n_params).sum();
    Ok(FitResult {
        model: spec.label(p),
        estimates,
        standard_errors,
        loglik,
        aic: components.iter().map(|c| c.aic).sum(),
        n_params,
        n_obs: data.len(),
        converged: components.iter().all(|c| c.converged),
        iterations: components.iter().map(|c| c.iterations).sum(),
        grad_norm: components.iter().map(|c| c.grad_norm).fold(0.0, f64::max),
        components,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AicEntry {
    pub model: String,
    pub result: Option<FitResult>,
    pub error: Option<String>,
    /// 1 for the smallest AIC among successful fits.
    pub rank: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AicTable {
    pub entries: Vec<AicEntry>,
}

impl AicTable {
    /// The model with the smallest AIC.
    pub fn best(&self) -> Option<&AicEntry> {
        self.entries.iter().find(|e| e.rank == Some(1))
    }

    pub fn get(&self, model: &str) -> Option<&AicEntry> {
        self.entries.iter().find(|e| e.model == model)
    }
}

/// Fits every spec to `data`; a failed fit is recorded in its entry rather
/// than aborting the table.
pub fn aic_table(data: &[Vec<f64>], specs: &[FitSpec]) -> Result<AicTable> {
    if specs.len() < 2 {
        return domain("an AIC comparison needs at least two models");
    }
    let p = check_data(data)?;
    let results: Vec<Result<FitResult>> = specs.par_iter().map(|s| fit(data, s)).collect();
    let mut entries: Vec<AicEntry> = specs
        .iter()
        .zip(results)
        .map(|(s, r)| match r {
            Ok(f) => AicEntry {
                model: s.label(p),
                result: Some(f),
                error: None,
                rank: None,
            },
            Err(e) => AicEntry {
                model: s.label(p),
                result: None,
                error: Some(e.to_string()),
                rank: None,
            },
        })
        .collect();
    let mut order: Vec<usize> = (0..entries.len())
        .filter(|&i| entries[i].result.is_some())
        .collect();
    order.sort_by(|&a, &b| {
        let aic = |i: usize| entries[i].result.as_ref().map_or(f64::INFINITY, |r| r.aic);
        aic(a).total_cmp(&aic(b))
    });
    for (r, i) in order.into_iter().enumerate() {
        entries[i].rank = Some(r + 1);
    }
    Ok(AicTable { entries })
}

#[cfg(test)]
mod tests;
