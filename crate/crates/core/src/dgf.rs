//! Density generating functions: the radial kernels `g` of the normal,
//! Student-t, power exponential and slash elliptical families.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::kernel::Univariate;
use crate::quadrature::{gauss_legendre, CdfTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DgfKind {
    #[serde(rename = "normal")]
    Normal,
    #[serde(rename = "t")]
    StudentT,
    #[serde(rename = "pexp")]
    PowerExponential,
    #[serde(rename = "slash")]
    Slash,
}

impl DgfKind {
    /// Number of extra parameters (τ, β or q).
    pub fn n_extra(self) -> usize {
        match self {
            DgfKind::Normal => 0,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DgfKind::Normal => "normal",
            DgfKind::StudentT => "t",
            DgfKind::PowerExponential => "pexp",
            DgfKind::Slash => "slash",
        }
    }
}

impl fmt::Display for DgfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DgfKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(DgfKind::Normal),
            "t" | "student-t" | "studentt" => Ok(DgfKind::StudentT),
            "pexp" | "power-exponential" => Ok(DgfKind::PowerExponential),
            "slash" => Ok(DgfKind::Slash),
            other => Err(Error::Input(format!("unknown family '{other}'"))),
        }
    }
}

/// A density generating function with its extra parameters, evaluated in
/// dimension `dim`. Kernels are unnormalized:
///
/// | family | `g(u)` |
/// |---|---|
/// | normal | `exp(-u/2)` |
/// | Student-t | `(1 + u/τ)^(-(τ+p)/2)` |
/// | power exponential | `exp(-u^β / 2)` |
/// | slash | `∫_0^1 t^(p+q-1) exp(-u t²/2) dt` |
#[derive(Clone)]
pub struct DgfFamily {
    kind: DgfKind,
    eta: Vec<f64>,
    dim: usize,
    table: Arc<OnceLock<Arc<CdfTable>>>,
}

impl fmt::Debug for DgfFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DgfFamily")
            .field("kind", &self.kind)
            .field("eta", &self.eta)
            .field("dim", &self.dim)
            .finish()
    }
}

impl PartialEq for DgfFamily {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.eta == other.eta && self.dim == other.dim
    }
}

impl DgfFamily {
    pub fn new(kind: DgfKind, eta: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 {
            return domain("kernel dimension must be at least 1");
        }
        if eta.len() != kind.n_extra() {
            return domain(format!(
                "{kind} family takes {} extra parameter(s), got {}",
                kind.n_extra(),
                eta.len()
            ));
        }
        if let Some(&v) = eta.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return domain(format!(
                "{kind} extra parameter must be positive and finite, got {v}"
            ));
        }
        Ok(Self {
            kind,
            eta: eta.to_vec(),
            dim,
            table: Arc::new(OnceLock::new()),
        })
    }

    pub fn normal(dim: usize) -> Result<Self> {
        Self::new(DgfKind::Normal, &[], dim)
    }

    pub fn student_t(tau: f64, dim: usize) -> Result<Self> {
        Self::new(DgfKind::StudentT, &[tau], dim)
    }

    pub fn power_exponential(beta: f64, dim: usize) -> Result<Self> {
        Self::new(DgfKind::PowerExponential, &[beta], dim)
    }

    pub fn slash(q: f64, dim: usize) -> Result<Self> {
        Self::new(DgfKind::Slash, &[q], dim)
    }

    pub fn kind(&self) -> DgfKind {
        self.kind
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The same family evaluated in another dimension.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Self::new(self.kind, &self.eta, dim)
    }

    pub fn kernel(&self, u: f64) -> f64 {
        match self.kind {
            DgfKind::Slash => slash_kernel(self.dim as f64 + self.eta[0], u),
            _ => self.ln_kernel(u).exp(),
        }
    }

    pub fn ln_kernel(&self, u: f64) -> f64 {
        match self.kind {
            DgfKind::Normal => -0.5 * u,
            DgfKind::StudentT => {
                let tau = self.eta[0];
                -0.5 * (tau + self.dim as f64) * (u / tau).ln_1p()
            }
            DgfKind::PowerExponential => -0.5 * u.powf(self.eta[0]),
            DgfKind::Slash => slash_kernel(self.dim as f64 + self.eta[0], u).ln(),
        }
    }

    /// `ln ∫_{R^d} g(x'x) dx` for `d <= dim`.
    pub fn ln_full_integral(&self, d: usize) -> f64 {
        let df = d as f64;
        let p = self.dim as f64;
        match self.kind {
            DgfKind::Normal => 0.5 * df * (2.0 * PI).ln(),
            DgfKind::StudentT => {
                let tau = self.eta[0];
                let m = 0.5 * (tau + p);
                0.5 * df * (PI * tau).ln() + ln_gamma(m - 0.5 * df) - ln_gamma(m)
            }
            DgfKind::PowerExponential => {
                let beta = self.eta[0];
                0.5 * df * PI.ln() + df / (2.0 * beta) * 2f64.ln() + ln_gamma(df / (2.0 * beta))
                    - ln_gamma(0.5 * df)
                    - beta.ln()
            }
            DgfKind::Slash => 0.5 * df * (2.0 * PI).ln() - (p + self.eta[0] - df).ln(),
        }
    }

    /// Tabulated CDF of the density proportional to `g(z²)` on the real line,
    /// built on first use.
    pub(crate) fn cdf_table(&self) -> Arc<CdfTable> {
        self.table
            .get_or_init(|| {
                let fam = self.clone_without_table();
                Arc::new(CdfTable::build(
                    Arc::new(move |z: f64| fam.kernel(z * z)),
                    0.0,
                    1.0,
                    true,
                ))
            })
            .clone()
    }

    fn clone_without_table(&self) -> Self {
        Self {
            kind: self.kind,
            eta: self.eta.clone(),
            dim: self.dim,
            table: Arc::new(OnceLock::new()),
        }
    }

    /// CDF of the univariate law with density proportional to `g(z²)`; for a
    /// family of dimension 1 this is the standard symmetric CDF `F_Z`.
    pub fn std_symmetric_cdf(&self, z: f64) -> f64 {
        Univariate::of_family(self).cdf(z)
    }

    pub fn std_symmetric_pdf(&self, z: f64) -> f64 {
        Univariate::of_family(self).pdf(z)
    }

    pub fn std_symmetric_quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return domain(format!("probability must lie in (0, 1), got {p}"));
        }
        Ok(Univariate::of_family(self).quantile(p))
    }
}

/// `∫_0^1 t^(a-1) exp(-u t²/2) dt`. The stretch `[0, h]` with `u h²/2 <= 1`
/// holding the `t^(a-1)` singularity is summed as a power series; the
/// smooth remainder uses adaptive 32-point Gauss-Legendre.
fn slash_kernel(a: f64, u: f64) -> f64 {
    // beyond this point the integrand is below e^{-(a+50)} of its peak
    let end = (2.0 * (a + 50.0) / u).sqrt().min(1.0);
    let h = (2.0 / u).sqrt().min(end);
    let x = -0.5 * u * h * h;
    let mut head = 0.0;
    let mut term = h.powf(a);
    for n in 0..60 {
        let c = term / (a + 2.0 * n as f64);
        head += c;
        if c.abs() <= 1e-17 * head.abs() {
            break;
        }
        term *= x / (n + 1) as f64;
    }
    if h >= end {
        return head;
    }
    let rule = gauss_legendre(32);
    let f = |t: f64| t.powf(a - 1.0) * (-0.5 * u * t * t).exp();
    let whole = rule.integrate(h, end, f);
    let budget = 1e-12 * (head + whole) / (end - h);
    let mut stack = vec![(h, end, whole, 0u32)];
    let mut tail = 0.0;
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = rule.integrate(lo, mid, f);
        let right = rule.integrate(mid, hi, f);
        let sum = left + right;
        if (sum - whole).abs() <= budget * (hi - lo) || depth >= 30 {
            tail += sum;
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    head + tail
}

pub fn kernel(family: &DgfFamily, u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return domain(format!("kernel argument must be nonnegative, got {u}"));
    }
    Ok(family.kernel(u))
}

pub fn std_symmetric_cdf(family: &DgfFamily, z: f64) -> f64 {
    family.std_symmetric_cdf(z)
}

pub fn std_symmetric_quantile(family: &DgfFamily, p: f64) -> Result<f64> {
    family.std_symmetric_quantile(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma_lr;

    fn slash_closed_form(a: f64, u: f64) -> f64 {
        let s = 0.5 * a;
        0.5 * (2.0 / u).powf(s) * gamma_lr(s, 0.5 * u) * ln_gamma(s).exp()
    }

    #[test]
    fn kernel_reference_values() {
        assert_eq!(DgfFamily::normal(1).unwrap().kernel(0.0), 1.0);
        let t = DgfFamily::student_t(3.0, 2).unwrap();
        assert!((t.kernel(3.0) - 0.1767766953).abs() < 1e-10);
        let s = DgfFamily::slash(1.0, 1).unwrap();
        assert!((s.kernel(0.0) - 0.5).abs() < 1e-15);
        let pe = DgfFamily::power_exponential(1.0, 3).unwrap();
        assert!((pe.kernel(4.0) - (-2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn slash_kernel_matches_incomplete_gamma() {
        for &(p, q) in &[(1.0, 1.0), (2.0, 0.7), (3.0, 4.0)] {
            let fam = DgfFamily::slash(q, p as usize).unwrap();
            for &u in &[1e-3, 0.5, 3.0, 40.0, 900.0, 1e6, 1e12] {
                let exact = slash_closed_form(p + q, u);
                assert!(
                    ((fam.kernel(u) - exact) / exact).abs() < 1e-9,
                    "p={p} q={q} u={u}"
                );
            }
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(DgfFamily::student_t(0.0, 1).is_err());
        assert!(DgfFamily::slash(-1.0, 1).is_err());
        assert!(DgfFamily::new(DgfKind::Normal, &[1.0], 1).is_err());
        assert!(DgfFamily::normal(0).is_err());
        assert!(kernel(&DgfFamily::normal(1).unwrap(), -1.0).is_err());
    }

    #[test]
    fn std_cdf_reference_values() {
        let n = DgfFamily::normal(1).unwrap();
        assert_eq!(n.std_symmetric_cdf(0.0), 0.5);
        let c = DgfFamily::student_t(1.0, 1).unwrap();
        assert!((c.std_symmetric_cdf(1.0) - 0.75).abs() < 1e-14);
        let pe = DgfFamily::power_exponential(1.0, 1).unwrap();
        assert!((pe.std_symmetric_cdf(1.959963984540054) - 0.975).abs() < 1e-11);
    }

    #[test]
    fn std_quantile_reference_values() {
        let n = DgfFamily::normal(1).unwrap();
        assert_eq!(n.std_symmetric_quantile(0.5).unwrap(), 0.0);
        assert!((n.std_symmetric_quantile(0.975).unwrap() - 1.959963984540054).abs() < 1e-10);
        let c = DgfFamily::student_t(1.0, 1).unwrap();
        assert!((c.std_symmetric_quantile(0.75).unwrap() - 1.0).abs() < 1e-10);
        assert!(n.std_symmetric_quantile(1.0).is_err());
        assert!(n.std_symmetric_quantile(0.0).is_err());
    }

    #[test]
    fn power_exponential_cdf_matches_gamma_form() {
        // |Z|^(2β)/2 ~ Gamma(1/(2β), 1)
        for &beta in &[0.5, 0.8, 2.0] {
            let fam = DgfFamily::power_exponential(beta, 1).unwrap();
            for &z in &[0.2f64, 1.0, 2.5, 6.0] {
                let exact = 0.5 + 0.5 * gamma_lr(0.5 / beta, 0.5 * z.powf(2.0 * beta));
                assert!(
                    (fam.std_symmetric_cdf(z) - exact).abs() < 1e-10,
                    "beta={beta} z={z}"
                );
                assert!((fam.std_symmetric_cdf(-z) - (1.0 - exact)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn full_integrals_match_quadrature() {
        use crate::quadrature::integrate_adaptive;
        let fams = [
            DgfFamily::normal(2).unwrap(),
            DgfFamily::student_t(2.5, 2).unwrap(),
            DgfFamily::power_exponential(0.7, 2).unwrap(),
            DgfFamily::slash(1.5, 2).unwrap(),
        ];
        for fam in &fams {
            for d in 1..=2usize {
                // radial form: 2 π^{d/2} / Γ(d/2) ∫ r^{d-1} g(r²) dr, the tail
                // [1, ∞) mapped by r = v^{-2} so that heavy tails become smooth
                let f = |r: f64| r.powi(d as i32 - 1) * fam.kernel(r * r);
                let (head, _) = integrate_adaptive(f, 0.0, 1.0, 1e-15, 1e-12);
                let (tail, _) = integrate_adaptive(
                    |v: f64| {
                        if v > 0.0 {
                            2.0 * f(v.powi(-2)) / v.powi(3)
                        } else {
                            0.0
                        }
                    },
                    0.0,
                    1.0,
                    1e-15,
                    1e-12,
                );
                let radial = head + tail;
                let surface = 2.0 * PI.powf(0.5 * d as f64) / ln_gamma(0.5 * d as f64).exp();
                let expect = (surface * radial).ln();
                assert!(
                    (fam.ln_full_integral(d) - expect).abs() < 1e-8,
                    "{fam:?} d={d} {} {expect}",
                    fam.ln_full_integral(d)
                );
            }
        }
    }
}
