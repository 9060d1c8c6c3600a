//! Small dense positive-definite matrices and the conditional decomposition
//! `q(w) = ((w_k - μ_{k.-k}) / σ_{k.-k})² + q(w_{-k})`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Serialize, Serializer};

use crate::error::{check_dim, domain, Error, Result};

/// A symmetric positive-definite matrix together with its lower Cholesky
/// factor.
#[derive(Clone, Debug, PartialEq)]
pub struct PdMatrix {
    a: DMatrix<f64>,
    chol: DMatrix<f64>,
    ln_det: f64,
}

impl Serialize for PdMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl PdMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let p = a.nrows();
        if p == 0 || a.ncols() != p {
            return domain(format!(
                "matrix must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            ));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return domain("matrix has non-finite entries");
        }
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..p {
            for j in 0..i {
                let diff = (a[(i, j)] - a[(j, i)]).abs();
                if diff > 1e-12 * scale {
                    return Err(Error::NotSymmetric {
                        row: i,
                        col: j,
                        diff,
                    });
                }
            }
        }
        let a = (&a + a.transpose()) * 0.5;
        let chol = cholesky(&a)?;
        let diag: Vec<f64> = (0..p).map(|i| chol[(i, i)]).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < 1e-10 * max {
            return Err(Error::IllConditioned { ratio: min / max });
        }
        let ln_det = 2.0 * diag.iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self { a, chol, ln_det })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if rows.iter().any(|r| r.len() != p) {
            return domain("matrix rows must all have length equal to the number of rows");
        }
        Self::new(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
    }

    pub fn identity(p: usize) -> Self {
        Self::new(DMatrix::identity(p, p)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[(i, j)]
    }

    pub fn ln_det(&self) -> f64 {
        self.ln_det
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.a[(i, j)]).collect())
            .collect()
    }

    /// `L^{-1} v` by forward substitution.
    pub fn solve_lower(&self, v: &[f64]) -> Vec<f64> {
        let p = self.dim();
        let mut x = vec![0.0; p];
        for i in 0..p {
            let mut s = v[i];
            for j in 0..i {
                s -= self.chol[(i, j)] * x[j];
            }
            x[i] = s / self.chol[(i, i)];
        }
        x
    }

    /// `Σ^{-1} v` through two triangular solves.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        let p = self.dim();
        let mut x = self.solve_lower(v);
        for i in (0..p).rev() {
            let mut s = x[i];
            for j in i + 1..p {
                s -= self.chol[(j, i)] * x[j];
            }
            x[i] = s / self.chol[(i, i)];
        }
        x
    }

    /// `v' Σ^{-1} v`.
    pub fn quad_form(&self, v: &[f64]) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        Ok(self.quad_form_unchecked(v))
    }

    pub(crate) fn quad_form_unchecked(&self, v: &[f64]) -> f64 {
        self.solve_lower(v).iter().map(|x| x * x).sum()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let p = self.dim();
        let mut inv = DMatrix::zeros(p, p);
        let mut e = vec![0.0; p];
        for j in 0..p {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..p {
                inv[(i, j)] = col[i];
            }
        }
        (&inv + inv.transpose()) * 0.5
    }

    /// Principal submatrix on `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> Result<PdMatrix> {
        PdMatrix::new(select(&self.a, idx, idx))
    }

    /// `D Σ D` for a diagonal `D = diag(d)`.
    pub fn scale_diag(&self, d: &[f64]) -> Result<PdMatrix> {
        check_dim(self.dim(), d.len())?;
        PdMatrix::new(DMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            d[i] * self.a[(i, j)] * d[j]
        }))
    }

    pub fn scaled(&self, c: f64) -> Result<PdMatrix> {
        PdMatrix::new(&self.a * c)
    }
}

fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    let mut l = DMatrix::zeros(p, p);
    for j in 0..p {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..p {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

pub(crate) fn select(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// Inverse of the symmetric (spectral) square root of a positive-definite
/// matrix.
pub fn inv_sqrt_spectral(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    if eig.eigenvalues.iter().any(|&v| !(v > 0.0)) {
        return domain("matrix square root requires a positive-definite argument");
    }
    let d = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|v| 1.0 / v.sqrt()),
    );
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&d) * v.transpose())
}

pub fn quad_form(sigma: &PdMatrix, v: &[f64]) -> Result<f64> {
    sigma.quad_form(v)
}

/// Location, scale and residual quadratic form of coordinate `k` given the
/// others.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionalSlice {
    pub mu_cond: f64,
    pub sigma2_cond: f64,
    pub q_rest: f64,
}

/// Precision-matrix rows used to form conditional slices repeatedly.
#[derive(Clone, Debug)]
pub(crate) struct ConditionalPlan {
    precision: DMatrix<f64>,
}

impl ConditionalPlan {
    pub fn new(sigma: &PdMatrix) -> Self {
        Self {
            precision: sigma.inverse(),
        }
    }

    /// Slice for coordinate `k` at the point `w` (0-based `k`).
    pub fn slice(&self, mu: &[f64], w: &[f64], k: usize) -> ConditionalSlice {
        let p = mu.len();
        let pk = &self.precision;
        let pkk = pk[(k, k)];
        let mut shift = 0.0;
        let mut total = 0.0;
        for i in 0..p {
            let di = w[i] - mu[i];
            let mut row = 0.0;
            for j in 0..p {
                row += pk[(i, j)] * (w[j] - mu[j]);
            }
            total += di * row;
            if i != k {
                shift += pk[(k, i)] * di;
            }
        }
        let mu_cond = mu[k] - shift / pkk;
        let sigma2_cond = 1.0 / pkk;
        let z = w[k] - mu_cond;
        let q_rest = (total - z * z * pkk).max(0.0);
        ConditionalSlice {
            mu_cond,
            sigma2_cond,
            q_rest,
        }
    }
}

/// Conditional slice of coordinate `k` (0-based).
pub fn conditional_slice(
    sigma: &PdMatrix,
    mu: &[f64],
    w: &[f64],
    k: usize,
) -> Result<ConditionalSlice> {
    check_dim(sigma.dim(), mu.len())?;
    check_dim(sigma.dim(), w.len())?;
    if k >= sigma.dim() {
        return domain(format!(
            "coordinate index {k} out of range for dimension {}",
            sigma.dim()
        ));
    }
    Ok(ConditionalPlan::new(sigma).slice(mu, w, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1a() -> PdMatrix {
        PdMatrix::from_rows(&[vec![0.5, -0.2], vec![-0.2, 0.3]]).unwrap()
    }

    #[test]
    fn quad_form_examples() {
        assert_eq!(
            quad_form(&PdMatrix::identity(2), &[3.0, 4.0]).unwrap(),
            25.0
        );
        let s = PdMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert!((quad_form(&s, &[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        let q = quad_form(&fig1a(), &[1.0, 0.0]).unwrap();
        // explicit 2x2 inverse: (Σ^{-1})_{11} = σ22 / det
        let det = 0.5 * 0.3 - 0.04;
        assert!((q - 0.3 / det).abs() < 1e-13);
        assert!((q - 2.727272727272727).abs() < 1e-12);
        assert!(quad_form(&fig1a(), &[1.0]).is_err());
    }

    #[test]
    fn conditional_slice_examples() {
        let c = conditional_slice(&PdMatrix::identity(2), &[0.0, 0.0], &[0.5, 2.0], 0).unwrap();
        assert!(
            c.mu_cond.abs() < 1e-15
                && (c.sigma2_cond - 1.0).abs() < 1e-15
                && (c.q_rest - 4.0).abs() < 1e-14
        );
        let s = PdMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let c = conditional_slice(&s, &[0.0, 0.0], &[0.3, 1.0], 0).unwrap();
        assert!((c.mu_cond - 0.5).abs() < 1e-14);
        assert!((c.sigma2_cond - 0.75).abs() < 1e-14);
        let s1 = PdMatrix::from_rows(&[vec![2.5]]).unwrap();
        let c = conditional_slice(&s1, &[1.5], &[0.2], 0).unwrap();
        assert_eq!((c.mu_cond, c.q_rest), (1.5, 0.0));
        assert!((c.sigma2_cond - 2.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(matches!(
            PdMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]),
            Err(Error::NotPositiveDefinite { index: 1, .. })
        ));
        assert!(matches!(
            PdMatrix::from_rows(&[vec![1.0, 0.1], vec![0.2, 1.0]]),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(matches!(
            PdMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0 + 1e-22]]),
            Err(Error::IllConditioned { .. }) | Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn spectral_inverse_sqrt() {
        let a = fig1a();
        let r = inv_sqrt_spectral(a.matrix()).unwrap();
        let back = &r * a.matrix() * &r;
        assert!((back - DMatrix::identity(2, 2)).amax() < 1e-13);
        assert!((&r - r.transpose()).amax() < 1e-15);
    }
}
