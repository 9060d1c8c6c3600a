//! The normalizing integral `∫_R g(w'Σ^{-1}w) dw` over a rectangle.
//!
//! Dispatch:
//! - one dimension: exact for normal/t kernels (CDF differences), adaptive
//!   quadrature otherwise;
//! - two dimensions: for normal/t kernels, adaptive quadrature over `w_1`
//!   of the closed-form conditional mass in `w_2`; otherwise (and for fixed
//!   rules) tensor Gauss-Legendre after the per-axis map
//!   `w = √σ_kk tan(π(t - 1/2))`, doubling the panel count until two
//!   successive rules agree;
//! - three or more: separation of variables through the Cholesky factor for
//!   normal/t kernels, compactified quasi-Monte Carlo otherwise, both with
//!   random digital shifts and the standard error across shifts as the
//!   error estimate.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::RwLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::boxcox::Rectangle;
use crate::dgf::DgfFamily;
use crate::error::{check_dim, Error, Result};
use crate::kernel::{Kernel, SovForm, TruncatedLaw};
use crate::linalg::PdMatrix;
use crate::qmc::{to_unit, Sobol, MAX_DIM};
use crate::quadrature::{gauss_legendre, integrate_interval};
use crate::special::{norm_cdf, norm_quantile, t_cdf, t_quantile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    TensorQuadrature,
    SeparationOfVariables,
    QmcGeneric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RectangleIntegralResult {
    pub value: f64,
    /// `ln value`, finite even when `value` underflows.
    pub ln_value: f64,
    pub est_error: f64,
    pub n_points: usize,
    pub method: Method,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrationOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Point budget for the adaptive rules.
    pub max_points: usize,
    /// Seed of the random digital shifts.
    pub seed: u64,
    pub randomizations: usize,
    /// Force a method instead of the default dispatch.
    pub method: Option<Method>,
    /// Use a fixed rule: nodes per axis for tensor quadrature, points per
    /// randomization for quasi-Monte Carlo. The result is then a smooth
    /// deterministic function of the inputs; `est_error` is reported as 0.
    pub fixed_points: Option<usize>,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            rel_tol: 1e-6,
            max_points: 1 << 20,
            seed: 0x0bce_5eed,
            randomizations: 8,
            method: None,
            fixed_points: None,
        }
    }
}

impl IntegrationOptions {
    fn tol(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// `∫_rect g(w'Σ^{-1}w) dw` with default options.
pub fn rectangle_integral(
    family: &DgfFamily,
    sigma: &PdMatrix,
    rect: &Rectangle,
) -> Result<RectangleIntegralResult> {
    rectangle_integral_kernel(
        &Kernel::from(family),
        sigma,
        rect,
        &IntegrationOptions::default(),
    )
}

/// `∫_rect k(w'Σ^{-1}w) dw` for any kernel.
pub fn rectangle_integral_kernel(
    kernel: &Kernel,
    sigma: &PdMatrix,
    rect: &Rectangle,
    opts: &IntegrationOptions,
) -> Result<RectangleIntegralResult> {
    check_dim(sigma.dim(), rect.dim())?;
    let d = rect.dim();
    if d > MAX_DIM {
        return Err(Error::Domain(format!(
            "integration dimension {d} exceeds the supported {MAX_DIM}"
        )));
    }
    if d == 1 {
        return Ok(univariate(kernel, sigma, rect));
    }
    let sov = kernel.sov_form();
    if d == 2 && sov.is_some() && opts.method.is_none() && opts.fixed_points.is_none() {
        return Ok(nested_bivariate(kernel, sigma, rect, opts));
    }
    let method = opts.method.unwrap_or(if d == 2 {
        Method::TensorQuadrature
    } else if sov.is_some() {
        Method::SeparationOfVariables
    } else {
        Method::QmcGeneric
    });
    match method {
        Method::TensorQuadrature => tensor(kernel, sigma, rect, opts),
        Method::SeparationOfVariables => match sov {
            Some(form) => separation_of_variables(form, sigma, rect, opts),
            None => Err(Error::Domain(
                "separation of variables needs a normal or Student-t kernel".into(),
            )),
        },
        Method::QmcGeneric => qmc_generic(kernel, sigma, rect, opts),
    }
}

fn univariate(kernel: &Kernel, sigma: &PdMatrix, rect: &Rectangle) -> RectangleIntegralResult {
    let s = sigma.get(0, 0).sqrt();
    let (a, b) = rect.interval(0);
    let law = TruncatedLaw::new(kernel.univariate(), a / s, b / s);
    let ln_value = law.ln_mass() + s.ln();
    let method = if kernel.sov_form().is_some() {
        Method::SeparationOfVariables
    } else {
        Method::TensorQuadrature
    };
    RectangleIntegralResult {
        value: ln_value.exp(),
        ln_value,
        est_error: 0.0,
        n_points: 1,
        method,
    }
}

/// `∫_{a1}^{b1} ∫_{a2}^{b2} k(w'Σ^{-1}w) dw_2 dw_1` with the inner integral
/// in closed form: given `w_1`, the quadratic form is
/// `w_1²/σ_11 + (w_2 - β w_1)²/s²`, so the inner integral is a truncated
/// mass of the kernel shifted by `w_1²/σ_11`.
fn nested_bivariate(
    kernel: &Kernel,
    sigma: &PdMatrix,
    rect: &Rectangle,
    opts: &IntegrationOptions,
) -> RectangleIntegralResult {
    let s11 = sigma.get(0, 0);
    let beta = sigma.get(0, 1) / s11;
    let s = (sigma.get(1, 1) - sigma.get(0, 1) * beta).sqrt();
    let (a1, b1) = rect.interval(0);
    let (a2, b2) = rect.interval(1);
    let ln_inner = |w1: f64| {
        let law = TruncatedLaw::new(
            kernel.shifted(w1 * w1 / s11).univariate(),
            (a2 - beta * w1) / s,
            (b2 - beta * w1) / s,
        );
        law.ln_mass() + s.ln()
    };
    let ln_ref = ln_inner(0f64.clamp(a1, b1));
    let rel_tol = (opts.rel_tol * 1e-3).max(1e-13);
    let value = integrate_interval(
        |w1| {
            let v = (ln_inner(w1) - ln_ref).exp();
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        a1,
        b1,
        s11.sqrt(),
        0.0,
        rel_tol,
    );
    let ln_value = ln_ref + value.ln();
    RectangleIntegralResult {
        value: ln_value.exp(),
        ln_value,
        est_error: rel_tol * ln_value.exp(),
        n_points: 0,
        method: Method::SeparationOfVariables,
    }
}

/// Per-axis compactification `w = c tan(π(t - 1/2))` on `[t_lo, t_hi]`.
struct AxisMap {
    c: f64,
    t_lo: f64,
    t_hi: f64,
}

impl AxisMap {
    fn new(sigma_kk: f64, a: f64, b: f64) -> Self {
        let c = sigma_kk.sqrt();
        Self {
            c,
            t_lo: 0.5 + (a / c).atan() / PI,
            t_hi: 0.5 + (b / c).atan() / PI,
        }
    }

    /// `(w, dw/dt)` at `t`.
    #[inline]
    fn map(&self, t: f64) -> (f64, f64) {
        let x = (PI * (t - 0.5)).tan();
        (self.c * x, self.c * PI * (1.0 + x * x))
    }
}

fn axis_maps(sigma: &PdMatrix, rect: &Rectangle) -> Vec<AxisMap> {
    (0..rect.dim())
        .map(|k| {
            let (a, b) = rect.interval(k);
            AxisMap::new(sigma.get(k, k), a, b)
        })
        .collect()
}

fn finish(
    ln_ref: f64,
    value: f64,
    err: f64,
    n_points: usize,
    method: Method,
) -> RectangleIntegralResult {
    let ln_value = ln_ref + value.ln();
    RectangleIntegralResult {
        value: ln_value.exp(),
        ln_value,
        est_error: err * ln_ref.exp(),
        n_points,
        method,
    }
}

fn tensor(
    kernel: &Kernel,
    sigma: &PdMatrix,
    rect: &Rectangle,
    opts: &IntegrationOptions,
) -> Result<RectangleIntegralResult> {
    let d = rect.dim();
    let maps = axis_maps(sigma, rect);
    let prec = sigma.inverse();
    let ln_ref = kernel.ln_eval(0.0);
    let rule = gauss_legendre(64);
    // (node, weight) lists per axis for a given panel count
    let nodes = |panels: usize| -> Vec<Vec<(f64, f64)>> {
        maps.iter()
            .map(|m| {
                let h = (m.t_hi - m.t_lo) / panels as f64;
                let mut out = Vec::with_capacity(64 * panels);
                for p in 0..panels {
                    let mid = m.t_lo + (p as f64 + 0.5) * h;
                    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                        let (wv, jac) = m.map(mid + 0.5 * h * x);
                        out.push((wv, 0.5 * h * w * jac));
                    }
                }
                out
            })
            .collect()
    };
    let eval = |panels: usize| -> f64 {
        let ax = nodes(panels);
        let mut idx = vec![0usize; d];
        let mut w = vec![0.0; d];
        let n = ax[0].len();
        let total = n.pow(d as u32);
        let mut acc = 0.0;
        for _ in 0..total {
            let mut weight = 1.0;
            for k in 0..d {
                let (wv, wt) = ax[k][idx[k]];
                w[k] = wv;
                weight *= wt;
            }
            if weight > 0.0 && w.iter().all(|v| v.is_finite()) {
                let mut q = 0.0;
                for i in 0..d {
                    let mut row = 0.0;
                    for j in 0..d {
                        row += prec[(i, j)] * w[j];
                    }
                    q += w[i] * row;
                }
                let g = (kernel.ln_eval(q) - ln_ref).exp();
                acc += weight * g;
            }
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
            }
        }
        acc
    };
    let points = |panels: usize| (64 * panels).pow(d as u32);
    if let Some(n) = opts.fixed_points {
        let panels = (n / 64).max(1);
        let v = eval(panels);
        return Ok(finish(
            ln_ref,
            v,
            0.0,
            points(panels),
            Method::TensorQuadrature,
        ));
    }
    let mut panels = 1;
    let mut prev = eval(panels);
    let mut used = points(1);
    loop {
        let next_panels = panels * 2;
        if used + points(next_panels) > opts.max_points.max(2 * points(1)) {
            let est = finish(ln_ref, prev, f64::INFINITY, used, Method::TensorQuadrature);
            return Err(Error::ToleranceNotMet {
                estimate: est.value,
                est_error: est.est_error,
                n_points: used,
            });
        }
        let cur = eval(next_panels);
        used += points(next_panels);
        let err = (cur - prev).abs();
        let scaled = ln_ref.exp();
        if err * scaled <= opts.tol(cur * scaled) || err <= 1e-13 * cur.abs() {
            return Ok(finish(ln_ref, cur, err, used, Method::TensorQuadrature));
        }
        panels = next_panels;
        prev = cur;
    }
}

/// Runs `per_point` over `randomizations` digitally shifted Sobol' point
/// sets, doubling the points until the standard error across shifts meets
/// the tolerance. Returns `(mean, standard error, points used)`.
fn randomized_qmc<F>(
    dim: usize,
    opts: &IntegrationOptions,
    scale: f64,
    mut per_point: F,
) -> Result<(f64, f64, usize)>
where
    F: FnMut(&[f64]) -> f64,
{
    let r = opts.randomizations.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let shifts: Vec<Vec<u32>> = (0..r)
        .map(|_| (0..dim.max(1)).map(|_| rng.random()).collect())
        .collect();
    let mut sums = vec![0.0; r];
    let mut generators: Vec<Sobol> = (0..r).map(|_| Sobol::new(dim.max(1))).collect();
    let mut n = 0usize;
    let mut target = opts.fixed_points.unwrap_or(1024);
    let mut raw = vec![0u32; dim.max(1)];
    let mut u = vec![0.0; dim];
    loop {
        for (s, (gen, shift)) in sums.iter_mut().zip(generators.iter_mut().zip(&shifts)) {
            for _ in n..target {
                gen.next_into(&mut raw);
                for k in 0..dim {
                    u[k] = to_unit(raw[k], shift[k]);
                }
                *s += per_point(&u);
            }
        }
        n = target;
        let means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        let mean = means.iter().sum::<f64>() / r as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
        let se = (var / r as f64).sqrt();
        let used = n * r;
        if opts.fixed_points.is_some() {
            return Ok((mean, 0.0, used));
        }
        if se * scale <= opts.tol(mean * scale) {
            return Ok((mean, se, used));
        }
        if 2 * used > opts.max_points {
            return Err(Error::ToleranceNotMet {
                estimate: mean * scale,
                est_error: se * scale,
                n_points: used,
            });
        }
        target *= 2;
    }
}

fn qmc_generic(
    kernel: &Kernel,
    sigma: &PdMatrix,
    rect: &Rectangle,
    opts: &IntegrationOptions,
) -> Result<RectangleIntegralResult> {
    let d = rect.dim();
    let maps = axis_maps(sigma, rect);
    let ln_ref = kernel.ln_eval(0.0);
    let vol: f64 = maps.iter().map(|m| m.t_hi - m.t_lo).product();
    let mut w = vec![0.0; d];
    let per_point = |u: &[f64]| -> f64 {
        let mut jac = vol;
        for k in 0..d {
            let m = &maps[k];
            let (wv, j) = m.map(m.t_lo + u[k] * (m.t_hi - m.t_lo));
            w[k] = wv;
            jac *= j;
        }
        if !(jac.is_finite() && w.iter().all(|v| v.is_finite())) {
            return 0.0;
        }
        let q = sigma.quad_form_unchecked(&w);
        jac * (kernel.ln_eval(q) - ln_ref).exp()
    };
    let (mean, se, used) = randomized_qmc(d, opts, ln_ref.exp(), per_point)?;
    Ok(finish(ln_ref, mean, se, used, Method::QmcGeneric))
}

/// Mass of a standardized normal or t law on `(a, b)` and the point at
/// probability `u` within it; upper-half intervals are reflected so CDF
/// differences are taken in the lower tail.
#[inline]
fn truncated_step<C, Q>(cdf: C, quantile: Q, a: f64, b: f64, u: Option<f64>) -> (f64, f64)
where
    C: Fn(f64) -> f64,
    Q: Fn(f64) -> f64,
{
    let flip = a > 0.0;
    let (lo, hi) = if flip { (-b, -a) } else { (a, b) };
    let f_lo = cdf(lo);
    let mass = cdf(hi) - f_lo;
    let z = match u {
        Some(u) if mass > 0.0 => {
            let u = if flip { 1.0 - u } else { u };
            let z = quantile(f_lo + u * mass).clamp(lo, hi);
            if z.is_finite() {
                z
            } else if lo.is_finite() {
                lo
            } else {
                hi
            }
        }
        _ => 0.0,
    };
    (mass.max(0.0), if flip { -z } else { z })
}

fn separation_of_variables(
    form: SovForm,
    sigma: &PdMatrix,
    rect: &Rectangle,
    opts: &IntegrationOptions,
) -> Result<RectangleIntegralResult> {
    let d = rect.dim();
    let df = d as f64;
    // most constrained variables first
    let mut order: Vec<usize> = (0..d).collect();
    let mass = |i: usize| {
        let sd = sigma.get(i, i).sqrt();
        norm_cdf(rect.upper()[i] / sd) - norm_cdf(rect.lower()[i] / sd)
    };
    order.sort_by(|&i, &j| mass(i).total_cmp(&mass(j)));
    let permuted;
    let (sigma, rect) = if order.iter().enumerate().all(|(i, &k)| i == k) {
        (sigma, rect)
    } else {
        permuted = (sigma.submatrix(&order)?, rect.select(&order));
        (&permuted.0, &permuted.1)
    };
    let (ln_const, chol, nu) = match form {
        SovForm::Gaussian { ln_factor } => (
            ln_factor + 0.5 * df * (2.0 * PI).ln() + 0.5 * sigma.ln_det(),
            sigma.chol().clone(),
            None,
        ),
        SovForm::StudentT { ln_factor, s, m } => {
            let nu = 2.0 * m - df;
            let c = s / nu;
            (
                ln_factor
                    + 0.5 * (sigma.ln_det() + df * c.ln())
                    + 0.5 * df * (nu * PI).ln()
                    + ln_gamma(0.5 * nu)
                    - ln_gamma(m),
                sigma.chol() * c.sqrt(),
                Some(nu),
            )
        }
    };
    let lower = rect.lower();
    let upper = rect.upper();
    let mut y = vec![0.0; d];
    let per_point = |u: &[f64]| -> f64 {
        let mut prod = 1.0;
        let mut ss = 0.0;
        for i in 0..d {
            let mut shift = 0.0;
            for j in 0..i {
                shift += chol[(i, j)] * y[j];
            }
            let lii = chol[(i, i)];
            let a = (lower[i] - shift) / lii;
            let b = (upper[i] - shift) / lii;
            let ui = if i + 1 < d { Some(u[i]) } else { None };
            let (mass, z) = match nu {
                None => truncated_step(norm_cdf, norm_quantile, a, b, ui),
                Some(nu) => {
                    let dfi = nu + i as f64;
                    let sc = ((nu + ss) / dfi).sqrt();
                    let (mass, z) = truncated_step(
                        |x| t_cdf(x, dfi),
                        |p| t_quantile(p, dfi),
                        a / sc,
                        b / sc,
                        ui,
                    );
                    (mass, z * sc)
                }
            };
            prod *= mass;
            if prod == 0.0 {
                return 0.0;
            }
            y[i] = z;
            ss += z * z;
        }
        prod
    };
    let scale = ln_const.exp();
    let (mean, se, used) = randomized_qmc(d - 1, opts, scale, per_point)?;
    Ok(finish(
        ln_const,
        mean,
        se,
        used,
        Method::SeparationOfVariables,
    ))
}

/// Memo of rectangle integrals keyed on kernel, rectangle, options and the
/// Cholesky factor rounded to 12 significant digits. Safe for concurrent
/// readers; inserts take the write lock.
#[derive(Debug, Default)]
pub struct IntegralCache {
    map: RwLock<HashMap<String, RectangleIntegralResult>>,
}

impl IntegralCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn integral(
        &self,
        kernel: &Kernel,
        sigma: &PdMatrix,
        rect: &Rectangle,
        opts: &IntegrationOptions,
    ) -> Result<RectangleIntegralResult> {
        let Some(kkey) = kernel.cache_key() else {
            return rectangle_integral_kernel(kernel, sigma, rect, opts);
        };
        let mut key = kkey;
        for v in rect
            .lower()
            .iter()
            .chain(rect.upper())
            .chain(sigma.chol().iter())
        {
            key.push_str(&format!("|{v:.11e}"));
        }
        key.push_str(&format!(
            "|{:?}|{:?}|{}",
            opts.method, opts.fixed_points, opts.seed
        ));
        if let Some(hit) = self.map.read().ok().and_then(|m| m.get(&key).copied()) {
            return Ok(hit);
        }
        let res = rectangle_integral_kernel(kernel, sigma, rect, opts)?;
        if let Ok(mut m) = self.map.write() {
            m.insert(key, res);
        }
        Ok(res)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxcox::rectangle_of;

    #[test]
    fn normal_examples() {
        let n1 = DgfFamily::normal(1).unwrap();
        let r = rectangle_integral(&n1, &PdMatrix::identity(1), &Rectangle::full(1)).unwrap();
        assert!((r.value - (2.0 * PI).sqrt()).abs() < 1e-12);
        let n2 = DgfFamily::normal(2).unwrap();
        let r = rectangle_integral(&n2, &PdMatrix::identity(2), &Rectangle::positive_orthant(2))
            .unwrap();
        assert!((r.value - PI / 2.0).abs() < 1e-10);
        assert_eq!(r.method, Method::SeparationOfVariables);
    }

    #[test]
    fn full_space_matches_determinant_formula() {
        let sigmas = [
            PdMatrix::from_rows(&[vec![1.7]]).unwrap(),
            PdMatrix::from_rows(&[vec![0.5, -0.2], vec![-0.2, 0.3]]).unwrap(),
            PdMatrix::from_rows(&[
                vec![1.0, 0.3, 0.1],
                vec![0.3, 2.0, -0.4],
                vec![0.1, -0.4, 0.8],
            ])
            .unwrap(),
        ];
        for s in &sigmas {
            let p = s.dim();
            let fam = DgfFamily::normal(p).unwrap();
            let r = rectangle_integral(&fam, s, &Rectangle::full(p)).unwrap();
            let exact = (0.5 * p as f64 * (2.0 * PI).ln() + 0.5 * s.ln_det()).exp();
            assert!(((r.value - exact) / exact).abs() < 1e-6, "p={p}");
        }
    }

    #[test]
    fn student_t_reference_parameters_against_fine_grid() {
        let fam = DgfFamily::student_t(3.0, 2).unwrap();
        let s = PdMatrix::from_rows(&[vec![0.5, -0.2], vec![-0.2, 0.3]]).unwrap();
        let rect = rectangle_of(&[-1.0, 1.5]);
        let r = rectangle_integral(&fam, &s, &rect).unwrap();
        // independent oracle: inner integral over w2 in closed form (shifted
        // t kernel in one dimension), outer adaptive quadrature over w1
        let prec = s.inverse();
        let inner = |w1: f64| {
            // q = P11 w1² + 2 P12 w1 w2 + P22 w2² = P22 (w2 + P12 w1/P22)² + w1²/σ11
            let c = w1 * w1 / s.get(0, 0);
            let m = -prec[(0, 1)] * w1 / prec[(1, 1)];
            let sd = (1.0 / prec[(1, 1)]).sqrt();
            let k = Kernel::from(&fam).shifted(c);
            let law = TruncatedLaw::new(k.univariate(), (-2.0 / 3.0 - m) / sd, f64::INFINITY);
            (law.ln_mass() + sd.ln()).exp()
        };
        let oracle =
            crate::quadrature::integrate_interval(inner, f64::NEG_INFINITY, 1.0, 1.0, 1e-14, 1e-12);
        assert!(
            ((r.value - oracle) / oracle).abs() < 1e-8,
            "{} vs {oracle}",
            r.value
        );
    }

    #[test]
    fn one_dimensional_paths_are_exact() {
        let s = PdMatrix::from_rows(&[vec![2.0]]).unwrap();
        let rect = Rectangle::new(vec![0.5], vec![3.0]).unwrap();
        let n = rectangle_integral(&DgfFamily::normal(1).unwrap(), &s, &rect).unwrap();
        let exact =
            (2.0 * PI * 2.0).sqrt() * (norm_cdf(3.0 / 2f64.sqrt()) - norm_cdf(0.5 / 2f64.sqrt()));
        assert!(((n.value - exact) / exact).abs() < 1e-13);
        let t = rectangle_integral(
            &DgfFamily::student_t(1.0, 1).unwrap(),
            &PdMatrix::identity(1),
            &Rectangle::positive_orthant(1),
        )
        .unwrap();
        assert!((t.value - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn qmc_paths_agree_with_sov() {
        let s = PdMatrix::from_rows(&[
            vec![1.0, 0.4, 0.2],
            vec![0.4, 1.5, -0.3],
            vec![0.2, -0.3, 0.7],
        ])
        .unwrap();
        let rect = Rectangle::new(
            vec![-0.5, f64::NEG_INFINITY, 0.1],
            vec![f64::INFINITY, 1.2, 2.0],
        )
        .unwrap();
        for fam in [
            DgfFamily::normal(3).unwrap(),
            DgfFamily::student_t(4.0, 3).unwrap(),
        ] {
            let k = Kernel::from(&fam);
            let sov =
                rectangle_integral_kernel(&k, &s, &rect, &IntegrationOptions::default()).unwrap();
            assert_eq!(sov.method, Method::SeparationOfVariables);
            let opts = IntegrationOptions {
                method: Some(Method::QmcGeneric),
                rel_tol: 1e-4,
                ..Default::default()
            };
            let gen = rectangle_integral_kernel(&k, &s, &rect, &opts).unwrap();
            assert!(
                ((sov.value - gen.value) / sov.value).abs() < 5e-4,
                "{:?}: {} vs {}",
                fam.kind(),
                sov.value,
                gen.value
            );
        }
    }

    #[test]
    fn fixed_rule_is_deterministic_and_cached() {
        let fam = DgfFamily::student_t(5.0, 2).unwrap();
        let s = PdMatrix::from_rows(&[vec![0.5, -0.2], vec![-0.2, 0.3]]).unwrap();
        let rect = rectangle_of(&[0.4, -0.7]);
        let opts = IntegrationOptions {
            fixed_points: Some(128),
            ..Default::default()
        };
        let cache = IntegralCache::new();
        let k = Kernel::from(&fam);
        let a = cache.integral(&k, &s, &rect, &opts).unwrap();
        let b = cache.integral(&k, &s, &rect, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(cache.len(), 1);
        let adaptive = rectangle_integral(&fam, &s, &rect).unwrap();
        assert!(((a.value - adaptive.value) / a.value).abs() < 1e-10);
    }
}
