//! The extended Box-Cox transformation `T_{λ,μ}`, its inverse and Jacobian,
//! and the rectangles `R(λ)` it maps onto.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, Result};

/// Below this magnitude a power is treated as exactly zero (log branch).
pub const LAMBDA_ZERO: f64 = 1e-8;

/// A product of open intervals; bounds may be infinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Rectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return domain("rectangle must have at least one side");
        }
        for (k, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if a.is_nan() || b.is_nan() || a >= b || *a == f64::INFINITY || *b == f64::NEG_INFINITY
            {
                return domain(format!("rectangle side {k} is empty: ({a}, {b})"));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn full(p: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; p],
            upper: vec![f64::INFINITY; p],
        }
    }

    pub fn positive_orthant(p: usize) -> Self {
        Self {
            lower: vec![0.0; p],
            upper: vec![f64::INFINITY; p],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn interval(&self, k: usize) -> (f64, f64) {
        (self.lower[k], self.upper[k])
    }

    pub fn is_full(&self) -> bool {
        self.lower.iter().all(|v| *v == f64::NEG_INFINITY)
            && self.upper.iter().all(|v| *v == f64::INFINITY)
    }

    /// Whether `w` lies in the open rectangle.
    pub fn contains(&self, w: &[f64]) -> bool {
        w.len() == self.dim()
            && w.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (a, b))| x > a && x < b)
    }

    /// The rectangle translated by `-c`.
    pub fn shifted(&self, c: &[f64]) -> Self {
        Self {
            lower: self.lower.iter().zip(c).map(|(a, c)| a - c).collect(),
            upper: self.upper.iter().zip(c).map(|(b, c)| b - c).collect(),
        }
    }

    /// The sub-rectangle on coordinates `idx`.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            lower: idx.iter().map(|&i| self.lower[i]).collect(),
            upper: idx.iter().map(|&i| self.upper[i]).collect(),
        }
    }

    /// Each side multiplied by a positive factor.
    pub fn scaled(&self, d: &[f64]) -> Self {
        Self {
            lower: self.lower.iter().zip(d).map(|(a, d)| a * d).collect(),
            upper: self.upper.iter().zip(d).map(|(b, d)| b * d).collect(),
        }
    }
}

/// The interval `I(ξ)`: `(-1/ξ, ∞)` for `ξ > 0`, `(-∞, -1/ξ)` for `ξ < 0`,
/// the whole line for `ξ = 0`.
pub fn interval_of(xi: f64) -> (f64, f64) {
    if xi.abs() < LAMBDA_ZERO {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else if xi > 0.0 {
        (-1.0 / xi, f64::INFINITY)
    } else {
        (f64::NEG_INFINITY, -1.0 / xi)
    }
}

/// `R(λ) = I(λ_1) × … × I(λ_p)`.
pub fn rectangle_of(lambda: &[f64]) -> Rectangle {
    let (lower, upper) = lambda.iter().map(|&l| interval_of(l)).unzip();
    Rectangle { lower, upper }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxCoxParams {
    mu: Vec<f64>,
    lambda: Vec<f64>,
}

impl BoxCoxParams {
    pub fn new(mu: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        check_dim(mu.len(), lambda.len())?;
        if mu.is_empty() {
            return domain("Box-Cox parameters need at least one component");
        }
        if let Some(m) = mu.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return domain(format!("scale parameters must be positive, got {m}"));
        }
        if let Some(l) = lambda.iter().find(|l| !l.is_finite()) {
            return domain(format!("power parameters must be finite, got {l}"));
        }
        Ok(Self { mu, lambda })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Scalar transform `((y/μ)^λ - 1)/λ`, or `log(y/μ)` for `λ = 0`.
pub fn forward1(mu: f64, lambda: f64, y: f64) -> f64 {
    let l = (y / mu).ln();
    if lambda.abs() < LAMBDA_ZERO {
        l
    } else {
        (lambda * l).exp_m1() / lambda
    }
}

/// Scalar inverse `μ (1 + λ w)^{1/λ}`; `None` outside the open interval.
pub fn inverse1(mu: f64, lambda: f64, w: f64) -> Option<f64> {
    if lambda.abs() < LAMBDA_ZERO {
        return if w.is_finite() {
            Some(mu * w.exp())
        } else {
            None
        };
    }
    let base = lambda * w;
    if !(base > -1.0) || !w.is_finite() {
        return None;
    }
    Some(mu * (base.ln_1p() / lambda).exp())
}

pub fn forward(params: &BoxCoxParams, y: &[f64]) -> Result<Vec<f64>> {
    check_dim(params.dim(), y.len())?;
    if let Some((k, v)) = y
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return domain(format!(
            "Box-Cox input must be positive, component {k} is {v}"
        ));
    }
    Ok((0..y.len())
        .map(|k| forward1(params.mu[k], params.lambda[k], y[k]))
        .collect())
}

pub fn inverse(params: &BoxCoxParams, w: &[f64]) -> Result<Vec<f64>> {
    check_dim(params.dim(), w.len())?;
    (0..w.len())
        .map(|k| {
            inverse1(params.mu[k], params.lambda[k], w[k]).ok_or_else(|| {
                crate::error::Error::Domain(format!(
                    "component {k} value {} is outside the open interval I({})",
                    w[k], params.lambda[k]
                ))
            })
        })
        .collect()
}

/// `Σ_k [(λ_k - 1) log y_k - λ_k log μ_k]`.
pub fn log_jacobian(params: &BoxCoxParams, y: &[f64]) -> Result<f64> {
    check_dim(params.dim(), y.len())?;
    if let Some((k, v)) = y
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return domain(format!(
            "Box-Cox input must be positive, component {k} is {v}"
        ));
    }
    Ok(log_jacobian_unchecked(&params.mu, &params.lambda, y))
}

pub(crate) fn log_jacobian_unchecked(mu: &[f64], lambda: &[f64], y: &[f64]) -> f64 {
    (0..y.len())
        .map(|k| (lambda[k] - 1.0) * y[k].ln() - lambda[k] * mu[k].ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(mu: &[f64], lambda: &[f64]) -> BoxCoxParams {
        BoxCoxParams::new(mu.to_vec(), lambda.to_vec()).unwrap()
    }

    #[test]
    fn rectangle_examples() {
        assert!(rectangle_of(&[0.0, 0.0]).is_full());
        assert_eq!(rectangle_of(&[2.0]).interval(0), (-0.5, f64::INFINITY));
        let r = rectangle_of(&[-1.0, 1.5]);
        assert_eq!(r.interval(0), (f64::NEG_INFINITY, 1.0));
        assert_eq!(r.interval(1), (-1.0 / 1.5, f64::INFINITY));
    }

    #[test]
    fn forward_examples() {
        assert!((forward(&params(&[4.0], &[2.0]), &[8.0]).unwrap()[0] - 1.5).abs() < 1e-15);
        let w = forward(&params(&[3.0, 0.7], &[-0.4, 1.3]), &[3.0, 0.7]).unwrap();
        assert_eq!(w, vec![0.0, 0.0]);
        assert!(
            (forward(&params(&[1.0], &[0.0]), &[std::f64::consts::E]).unwrap()[0] - 1.0).abs()
                < 1e-15
        );
        assert!(forward(&params(&[1.0], &[0.0]), &[0.0]).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert!((inverse(&params(&[4.0], &[2.0]), &[1.5]).unwrap()[0] - 8.0).abs() < 1e-14);
        assert_eq!(inverse(&params(&[7.0], &[0.0]), &[0.0]).unwrap()[0], 7.0);
        assert!((inverse(&params(&[5.0], &[-1.0]), &[0.5]).unwrap()[0] - 10.0).abs() < 1e-14);
        // closed boundary rejected
        assert!(inverse(&params(&[5.0], &[-1.0]), &[1.0]).is_err());
        assert!(inverse(&params(&[5.0], &[2.0]), &[-0.5]).is_err());
    }

    #[test]
    fn log_jacobian_examples() {
        assert_eq!(
            log_jacobian(&params(&[1.0, 1.0], &[0.3, -2.0]), &[1.0, 1.0]).unwrap(),
            0.0
        );
        assert!((log_jacobian(&params(&[1.0], &[0.0]), &[2.0]).unwrap() + 2f64.ln()).abs() < 1e-15);
        let v = log_jacobian(&params(&[5.0, 4.0], &[-1.0, 1.5]), &[5.0, 4.0]).unwrap();
        let oracle = -2.0 * 5f64.ln() + 5f64.ln() + 0.5 * 4f64.ln() - 1.5 * 4f64.ln();
        assert!((v - oracle).abs() < 1e-14);
        assert!((v + 2.995732273553991).abs() < 1e-12);
    }
}
