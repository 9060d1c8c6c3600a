//! Starting values: univariate fits per coordinate, zero covariances and a
//! profile fit of τ on the transformed data.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use super::{
    check_data, ln_rows, maximize, FitSpec, LambdaConstraint, Layout, Objective, ParamPoint,
};
use crate::boxcox::forward1;
use crate::dgf::DgfKind;
use crate::error::{Error, Result};

const TAU_GRID: [f64; 8] = [2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 20.0, 40.0];

fn provisional_eta(kind: DgfKind) -> Vec<f64> {
    match kind {
        DgfKind::Normal => vec![],
        DgfKind::StudentT => vec![8.0],
        DgfKind::PowerExponential => vec![1.0],
        DgfKind::Slash => vec![2.0],
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Univariate fit of column `k` with the extra parameters held at `eta`.
fn univariate_start(
    data: &[Vec<f64>],
    k: usize,
    spec: &FitSpec,
    eta: &[f64],
) -> Result<ParamPoint> {
    let col: Vec<Vec<f64>> = data.iter().map(|r| vec![r[k]]).collect();
    let mut logs: Vec<f64> = col.iter().map(|r| r[0].ln()).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    if !(hi - lo > 1e-12 * hi.abs().max(1.0)) {
        return Err(Error::Initialization(format!("column {k} is constant")));
    }
    let base = ParamPoint {
        family: spec.family,
        eta: eta.to_vec(),
        mu: vec![median(&mut logs).exp()],
        lambda: vec![0.0],
        sigma: vec![vec![var]],
    };
    let mut uni = spec.clone();
    uni.fixed_eta = Some(eta.to_vec());
    uni.lambda = vec![spec.constraint(k)];
    uni.independence = false;
    let ln_y = ln_rows(&col);
    let objective = Objective::new(&ln_y, &uni, 1);
    let layout = Layout::new(&uni, 1);
    let lambdas: &[f64] = if spec.constraint(k) == LambdaConstraint::Free {
        &[0.0, -1.0, 1.0]
    } else {
        &[0.0]
    };
    let (y_lo, y_hi) = (lo.exp(), hi.exp());
    let mut best: Option<(f64, ParamPoint)> = None;
    for &l in lambdas {
        let mut start = base.clone();
        start.lambda[0] = l;
        let Ok(opt) = maximize(&objective, &layout, &start, &uni) else {
            continue;
        };
        let pt = opt.point;
        let interior = pt.mu[0] >= y_lo && pt.mu[0] <= y_hi && pt.sigma[0][0] < 1e4;
        if interior && best.as_ref().is_none_or(|(v, _)| opt.loglik > *v) {
            best = Some((opt.loglik, pt));
        }
    }
    Ok(best.map_or(base, |(_, pt)| pt))
}

/// Starting point for [`super::fit`]: each coordinate's `μ_k`, `λ_k` and
/// `σ_kk` from a univariate fit with provisional extra parameters (τ = 8,
/// β = 1, q = 2), zero covariances, and for Student-t kernels τ from
/// [`profile_tau`] on the transformed data.
pub fn initial_values(data: &[Vec<f64>], spec: &FitSpec) -> Result<ParamPoint> {
    let p = check_data(data)?;
    spec.validate(p)?;
    if data.len() < p + 2 {
        return Err(Error::Initialization(format!(
            "need at least {} observations for {p} coordinates, got {}",
            p + 2,
            data.len()
        )));
    }
    let eta0 = spec
        .fixed_eta
        .clone()
        .unwrap_or_else(|| provisional_eta(spec.family));
    let unis: Vec<ParamPoint> = (0..p)
        .map(|k| univariate_start(data, k, spec, &eta0))
        .collect::<Result<_>>()?;
    let mu: Vec<f64> = unis.iter().map(|u| u.mu[0]).collect();
    let lambda: Vec<f64> = unis.iter().map(|u| u.lambda[0]).collect();
    let mut sigma = vec![vec![0.0; p]; p];
    for k in 0..p {
        sigma[k][k] = unis[k].sigma[0][0];
    }
    let eta = if spec.family == DgfKind::StudentT && spec.fixed_eta.is_none() {
        let x: Vec<Vec<f64>> = data
            .iter()
            .map(|r| (0..p).map(|k| forward1(mu[k], lambda[k], r[k])).collect())
            .collect();
        vec![profile_tau(&x)?]
    } else {
        eta0
    };
    Ok(ParamPoint {
        family: spec.family,
        eta,
        mu,
        lambda,
        sigma,
    })
}

/// Log-likelihood of a centered multivariate t with `tau` degrees of
/// freedom, with the scatter matrix at its EM fixed point.
fn mvt_profile(x: &[Vec<f64>], tau: f64) -> f64 {
    let p = x[0].len();
    let n = x.len() as f64;
    let pts: Vec<DVector<f64>> = x.iter().map(|r| DVector::from_column_slice(r)).collect();
    let mut s = pts
        .iter()
        .fold(DMatrix::zeros(p, p), |acc, v| acc + v * v.transpose())
        / n;
    let quad = |s: &DMatrix<f64>| -> Option<(Vec<f64>, f64)> {
        let c = s.clone().cholesky()?;
        let ln_det = 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Some((pts.iter().map(|v| v.dot(&c.solve(v))).collect(), ln_det))
    };
    for _ in 0..200 {
        let Some((q, _)) = quad(&s) else {
            return f64::NEG_INFINITY;
        };
        let next = pts
            .iter()
            .zip(&q)
            .fold(DMatrix::zeros(p, p), |acc, (v, qi)| {
                acc + v * v.transpose() * ((tau + p as f64) / (tau + qi))
            })
            / n;
        let change = (&next - &s).norm() / s.norm();
        s = next;
        if change < 1e-10 {
            break;
        }
    }
    let Some((q, ln_det)) = quad(&s) else {
        return f64::NEG_INFINITY;
    };
    let pf = p as f64;
    let c = ln_gamma(0.5 * (tau + pf))
        - ln_gamma(0.5 * tau)
        - 0.5 * pf * (std::f64::consts::PI * tau).ln()
        - 0.5 * ln_det;
    q.iter()
        .map(|qi| c - 0.5 * (tau + pf) * (qi / tau).ln_1p())
        .sum()
}

/// Degrees of freedom maximizing the centered multivariate-t profile
/// likelihood of `x`: a grid search over {2, 3, 4, 6, 8, 12, 20, 40}
/// refined by golden-section search in `ln τ`.
pub fn profile_tau(x: &[Vec<f64>]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Initialization("no data for the τ profile".into()));
    }
    let vals: Vec<f64> = TAU_GRID.iter().map(|&t| mvt_profile(x, t)).collect();
    let best = (0..TAU_GRID.len())
        .max_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .filter(|&i| vals[i].is_finite())
        .ok_or_else(|| Error::Initialization("τ profile likelihood is not finite".into()))?;
    let mut a = TAU_GRID[best.saturating_sub(1)].ln();
    let mut b = TAU_GRID[(best + 1).min(TAU_GRID.len() - 1)].ln();
    let f = |lt: f64| mvt_profile(x, lt.exp());
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..40 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let t = (0.5 * (a + b)).exp();
    Ok(if f(t.ln()) >= vals[best] {
        t
    } else {
        TAU_GRID[best]
    })
}
