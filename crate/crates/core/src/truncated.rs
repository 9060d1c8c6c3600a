//! Truncated elliptical laws on rectangles: density, univariate CDF and
//! quantile, full conditionals and the Gibbs sampler.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boxcox::Rectangle;
use crate::dgf::DgfFamily;
use crate::error::{check_dim, domain, Error, Result};
use crate::integrate::{rectangle_integral_kernel, IntegrationOptions};
use crate::kernel::{clamp_open, Kernel, TruncatedLaw};
use crate::linalg::{conditional_slice, ConditionalPlan, PdMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Starting point; defaults to the rectangle center.
    pub init: Option<Vec<f64>>,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            thin: 1,
            seed: 0,
            init: None,
        }
    }
}

impl GibbsConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Default::default()
        }
    }
}

/// Seed of the `i`-th stream derived from a master seed: `master ⊕ i`
/// passed through the splitmix64 finalizer.
pub fn split_seed(master: u64, i: u64) -> u64 {
    let mut z = (master ^ i).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The law with density `g((w-μ)'Σ^{-1}(w-μ)) / ∫_B g(…)` on the open
/// rectangle `B`.
#[derive(Clone, Debug)]
pub struct TruncatedElliptical {
    mu: Vec<f64>,
    sigma: PdMatrix,
    support: Rectangle,
    kernel: Kernel,
    ln_norm: f64,
}

impl TruncatedElliptical {
    pub fn new(
        mu: Vec<f64>,
        sigma: PdMatrix,
        support: Rectangle,
        kernel: impl Into<Kernel>,
    ) -> Result<Self> {
        check_dim(sigma.dim(), mu.len())?;
        check_dim(sigma.dim(), support.dim())?;
        if mu.iter().any(|m| !m.is_finite()) {
            return domain("location must be finite");
        }
        let kernel = kernel.into();
        let ln_norm = rectangle_integral_kernel(
            &kernel,
            &sigma,
            &support.shifted(&mu),
            &IntegrationOptions::default(),
        )?
        .ln_value;
        if !ln_norm.is_finite() {
            return domain(format!(
                "normalizing integral is not finite and positive (log value {ln_norm})"
            ));
        }
        Ok(Self {
            mu,
            sigma,
            support,
            kernel,
            ln_norm,
        })
    }

    /// Assembles a law whose normalizing integral is already known.
    pub(crate) fn from_parts(
        mu: Vec<f64>,
        sigma: PdMatrix,
        support: Rectangle,
        kernel: Kernel,
        ln_norm: f64,
    ) -> Self {
        Self {
            mu,
            sigma,
            support,
            kernel,
            ln_norm,
        }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &PdMatrix {
        &self.sigma
    }

    pub fn support(&self) -> &Rectangle {
        &self.support
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// The generating family, unless the kernel is a projected one.
    pub fn family(&self) -> Option<&DgfFamily> {
        self.kernel.family()
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn norm_const(&self) -> f64 {
        self.ln_norm.exp()
    }

    pub fn ln_norm_const(&self) -> f64 {
        self.ln_norm
    }

    /// Log density; `-∞` off the open support.
    pub fn ln_pdf(&self, w: &[f64]) -> Result<f64> {
        check_dim(self.dim(), w.len())?;
        if !self.support.contains(w) {
            return Ok(f64::NEG_INFINITY);
        }
        let d: Vec<f64> = w.iter().zip(&self.mu).map(|(a, b)| a - b).collect();
        Ok(self.kernel.ln_eval(self.sigma.quad_form_unchecked(&d)) - self.ln_norm)
    }

    pub fn pdf(&self, w: &[f64]) -> Result<f64> {
        Ok(self.ln_pdf(w)?.exp())
    }

    /// For `p = 1`: the standardized truncated law and the scale.
    fn univariate_law(&self) -> Result<(TruncatedLaw, f64)> {
        if self.dim() != 1 {
            return domain(format!(
                "univariate operation on a {}-dimensional law",
                self.dim()
            ));
        }
        let s = self.sigma.get(0, 0).sqrt();
        let (a, b) = self.support.interval(0);
        let law = TruncatedLaw::new(
            self.kernel.univariate(),
            (a - self.mu[0]) / s,
            (b - self.mu[0]) / s,
        );
        Ok((law, s))
    }

    /// CDF of a univariate law; 0 at or below the lower bound, 1 at or above
    /// the upper one.
    pub fn cdf(&self, w: f64) -> Result<f64> {
        let (law, s) = self.univariate_law()?;
        let (a, b) = self.support.interval(0);
        if w <= a {
            return Ok(0.0);
        }
        if w >= b {
            return Ok(1.0);
        }
        Ok(law.cdf((w - self.mu[0]) / s))
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return domain(format!("probability must lie in (0, 1), got {p}"));
        }
        let (law, s) = self.univariate_law()?;
        let (a, b) = self.support.interval(0);
        Ok(clamp_open(self.mu[0] + s * law.quantile(p), a, b))
    }

    /// Law of coordinate `k` (0-based) given the others at `w`: same side of
    /// the rectangle, conditional location and scale, kernel shifted by the
    /// residual quadratic form.
    pub fn full_conditional(&self, w: &[f64], k: usize) -> Result<TruncatedElliptical> {
        check_dim(self.dim(), w.len())?;
        if k >= self.dim() {
            return domain(format!(
                "coordinate index {k} out of range for dimension {}",
                self.dim()
            ));
        }
        if self.dim() == 1 {
            return Ok(self.clone());
        }
        let slice = conditional_slice(&self.sigma, &self.mu, w, k)?;
        TruncatedElliptical::new(
            vec![slice.mu_cond],
            PdMatrix::from_rows(&[vec![slice.sigma2_cond]])?,
            self.support.select(&[k]),
            self.kernel.shifted(slice.q_rest),
        )
    }

    /// `n` draws by coordinate-wise inverse-CDF Gibbs sweeps, one fresh
    /// uniform per coordinate per sweep.
    pub fn sample(&self, n: usize, config: &GibbsConfig) -> Result<Vec<Vec<f64>>> {
        gibbs_sample(self, n, config)
    }
}

pub fn te_pdf(dist: &TruncatedElliptical, w: &[f64]) -> Result<f64> {
    dist.pdf(w)
}

pub fn te1_cdf(dist: &TruncatedElliptical, w: f64) -> Result<f64> {
    dist.cdf(w)
}

pub fn te1_quantile(dist: &TruncatedElliptical, p: f64) -> Result<f64> {
    dist.quantile(p)
}

pub fn full_conditional(
    dist: &TruncatedElliptical,
    w: &[f64],
    k: usize,
) -> Result<TruncatedElliptical> {
    dist.full_conditional(w, k)
}

/// Midpoint of finite sides, one unit inside half-infinite sides, the
/// location on the full line.
fn default_start(dist: &TruncatedElliptical) -> Vec<f64> {
    (0..dist.dim())
        .map(|k| {
            let (a, b) = dist.support.interval(k);
            match (a.is_finite(), b.is_finite()) {
                (true, true) => 0.5 * (a + b),
                (true, false) => a + 1.0,
                (false, true) => b - 1.0,
                (false, false) => dist.mu[k],
            }
        })
        .collect()
}

pub fn gibbs_sample(
    dist: &TruncatedElliptical,
    n: usize,
    config: &GibbsConfig,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return domain("sample size must be positive");
    }
    if config.thin == 0 {
        return domain("thinning interval must be at least 1");
    }
    let p = dist.dim();
    let mut w = match &config.init {
        Some(init) => {
            check_dim(p, init.len())?;
            if !dist.support.contains(init) {
                return Err(Error::Domain(format!(
                    "starting point {init:?} is not inside the support"
                )));
            }
            init.clone()
        }
        None => default_start(dist),
    };
    let plan = ConditionalPlan::new(&dist.sigma);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(n);
    let sweeps = config.burn_in + n * config.thin;
    for sweep in 0..sweeps {
        for k in 0..p {
            let slice = plan.slice(&dist.mu, &w, k);
            let s = slice.sigma2_cond.sqrt();
            let (a, b) = dist.support.interval(k);
            let law = TruncatedLaw::new(
                dist.kernel.shifted(slice.q_rest).univariate(),
                (a - slice.mu_cond) / s,
                (b - slice.mu_cond) / s,
            );
            let u: f64 = rng.sample(Open01);
            w[k] = clamp_open(slice.mu_cond + s * law.quantile(u), a, b);
        }
        if sweep >= config.burn_in && (sweep - config.burn_in + 1).is_multiple_of(config.thin) {
            out.push(w.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxcox::Rectangle;
    use crate::special::{norm_cdf, norm_pdf, t_cdf};
    use proptest::prelude::*;

    fn uni(family: DgfFamily, mu: f64, s2: f64, a: f64, b: f64) -> TruncatedElliptical {
        TruncatedElliptical::new(
            vec![mu],
            PdMatrix::from_rows(&[vec![s2]]).unwrap(),
            Rectangle::new(vec![a], vec![b]).unwrap(),
            family,
        )
        .unwrap()
    }

    fn normal1() -> DgfFamily {
        DgfFamily::normal(1).unwrap()
    }

    #[test]
    fn density_examples() {
        let full = uni(normal1(), 0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY);
        assert!((full.pdf(&[0.0]).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-14);
        let half = uni(normal1(), 0.0, 1.0, 0.0, f64::INFINITY);
        let oracle = norm_pdf(1.0) / (1.0 - norm_cdf(0.0));
        assert!((half.pdf(&[1.0]).unwrap() - oracle).abs() < 1e-14);
        assert!((oracle - 0.4839414).abs() < 1e-7);
        assert_eq!(half.pdf(&[0.0]).unwrap(), 0.0);
        assert_eq!(half.pdf(&[-1.0]).unwrap(), 0.0);
    }

    #[test]
    fn cdf_examples() {
        let full = uni(normal1(), 0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY);
        assert!((full.cdf(0.0).unwrap() - 0.5).abs() < 1e-15);
        let half = uni(normal1(), 0.0, 1.0, 0.0, f64::INFINITY);
        let oracle = (norm_cdf(1.0) - 0.5) / 0.5;
        assert!((half.cdf(1.0).unwrap() - oracle).abs() < 1e-14);
        assert!((oracle - 0.6826895).abs() < 1e-7);
        let cauchy = uni(
            DgfFamily::student_t(1.0, 1).unwrap(),
            0.0,
            1.0,
            0.0,
            f64::INFINITY,
        );
        assert!((cauchy.cdf(1.0).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(half.cdf(-3.0).unwrap(), 0.0);
        assert_eq!(half.cdf(0.0).unwrap(), 0.0);
    }

    #[test]
    fn quantile_examples() {
        let sym = uni(
            DgfFamily::power_exponential(0.6, 1).unwrap(),
            0.0,
            2.0,
            -1.5,
            1.5,
        );
        assert!(sym.quantile(0.5).unwrap().abs() < 1e-10);
        let half = uni(normal1(), 0.0, 1.0, 0.0, f64::INFINITY);
        let p = (norm_cdf(1.0) - 0.5) / 0.5;
        assert!((half.quantile(p).unwrap() - 1.0).abs() < 1e-10);
        let cauchy = uni(
            DgfFamily::student_t(1.0, 1).unwrap(),
            0.0,
            1.0,
            0.0,
            f64::INFINITY,
        );
        assert!((cauchy.quantile(0.5).unwrap() - 1.0).abs() < 1e-10);
        assert!(half.quantile(0.0).is_err());
        assert!(half.quantile(1.0).is_err());
    }

    #[test]
    fn quantile_inverts_cdf_for_all_families() {
        let fams = [
            normal1(),
            DgfFamily::student_t(2.5, 1).unwrap(),
            DgfFamily::power_exponential(0.5, 1).unwrap(),
            DgfFamily::slash(1.5, 1).unwrap(),
        ];
        for fam in fams {
            for &(mu, a, b) in &[
                (0.3, f64::NEG_INFINITY, 1.0),
                (0.0, 2.0, f64::INFINITY),
                (-1.0, 0.5, 3.0),
            ] {
                let d = uni(fam.clone(), mu, 1.7, a, b);
                for &p in &[0.01, 0.3, 0.5, 0.9, 0.999] {
                    let w = d.quantile(p).unwrap();
                    assert!(w > a && w < b);
                    assert!(
                        (d.cdf(w).unwrap() - p).abs() < 1e-9,
                        "{fam:?} ({a},{b}) p={p}"
                    );
                }
            }
        }
    }

    #[test]
    fn far_tail_interval_is_handled() {
        // almost all mass of the parent lies outside the interval
        let d = uni(normal1(), 0.0, 1.0, 30.0, 31.0);
        let m = d.quantile(0.5).unwrap();
        assert!(m > 30.0 && m < 30.1);
        assert!((d.cdf(m).unwrap() - 0.5).abs() < 1e-9);
        let mass: f64 = (0..2000)
            .map(|i| {
                let x = 30.0 + (i as f64 + 0.5) / 2000.0;
                d.pdf(&[x]).unwrap() / 2000.0
            })
            .sum();
        assert!((mass - 1.0).abs() < 1e-4);
    }

    #[test]
    fn full_conditional_examples() {
        let d = TruncatedElliptical::new(
            vec![0.0, 0.0],
            PdMatrix::identity(2),
            Rectangle::positive_orthant(2),
            DgfFamily::normal(2).unwrap(),
        )
        .unwrap();
        let reference = uni(normal1(), 0.0, 1.0, 0.0, f64::INFINITY);
        for w2 in [0.1, 2.0, 7.0] {
            let c = d.full_conditional(&[0.5, w2], 0).unwrap();
            for x in [0.2, 1.0, 2.5] {
                assert!((c.cdf(x).unwrap() - reference.cdf(x).unwrap()).abs() < 1e-13);
            }
        }
        // multivariate t conditional: t with df 4 and scale √((3+1)/4)
        let t = TruncatedElliptical::new(
            vec![0.0, 0.0],
            PdMatrix::identity(2),
            Rectangle::full(2),
            DgfFamily::student_t(3.0, 2).unwrap(),
        )
        .unwrap();
        let c = t.full_conditional(&[0.0, 1.0], 0).unwrap();
        assert_eq!(c.mu(), &[0.0]);
        for x in [-2.0, -0.3, 0.8, 4.0] {
            assert!((c.cdf(x).unwrap() - t_cdf(x, 4.0)).abs() < 1e-12);
        }
        let one = uni(normal1(), 0.2, 1.0, 0.0, 1.0);
        let same = one.full_conditional(&[0.5], 0).unwrap();
        assert_eq!(same.mu(), one.mu());
        assert_eq!(same.support(), one.support());
    }

    #[test]
    fn gibbs_half_normal_mean() {
        let d = uni(normal1(), 0.0, 1.0, 0.0, f64::INFINITY);
        let n = 100_000;
        let xs = d.sample(n, &GibbsConfig::with_seed(11)).unwrap();
        let mean = xs.iter().map(|r| r[0]).sum::<f64>() / n as f64;
        let exact = (2.0 / std::f64::consts::PI).sqrt();
        let se = ((1.0 - 2.0 / std::f64::consts::PI) / n as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * se, "{mean}");
        assert!(xs.iter().all(|r| r[0] > 0.0));
    }

    #[test]
    fn gibbs_untruncated_covariance() {
        let sigma = PdMatrix::from_rows(&[vec![1.0, 0.6], vec![0.6, 2.0]]).unwrap();
        let d = TruncatedElliptical::new(
            vec![1.0, -1.0],
            sigma.clone(),
            Rectangle::full(2),
            DgfFamily::normal(2).unwrap(),
        )
        .unwrap();
        let n = 50_000;
        let xs = d.sample(n, &GibbsConfig::with_seed(3)).unwrap();
        let m: Vec<f64> = (0..2)
            .map(|k| xs.iter().map(|r| r[k]).sum::<f64>() / n as f64)
            .collect();
        for i in 0..2 {
            for j in 0..2 {
                let c = xs
                    .iter()
                    .map(|r| (r[i] - m[i]) * (r[j] - m[j]))
                    .sum::<f64>()
                    / (n - 1) as f64;
                // Gibbs draws are autocorrelated; allow a generous band
                let se = ((sigma.get(i, i) * sigma.get(j, j) + sigma.get(i, j).powi(2)) / n as f64)
                    .sqrt();
                assert!((c - sigma.get(i, j)).abs() < 6.0 * se, "({i},{j}) {c}");
            }
        }
    }

    #[test]
    fn gibbs_is_reproducible_and_checks_start() {
        let d = TruncatedElliptical::new(
            vec![0.0, 0.0],
            PdMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap(),
            Rectangle::new(vec![0.0, -1.0], vec![2.0, f64::INFINITY]).unwrap(),
            DgfFamily::student_t(3.0, 2).unwrap(),
        )
        .unwrap();
        let cfg = GibbsConfig {
            burn_in: 10,
            thin: 3,
            seed: 99,
            init: None,
        };
        let a = d.sample(200, &cfg).unwrap();
        let b = d.sample(200, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 200);
        assert!(a.iter().all(|r| d.support().contains(r)));
        let bad = GibbsConfig {
            init: Some(vec![3.0, 0.0]),
            ..cfg
        };
        assert!(d.sample(10, &bad).is_err());
    }

    #[test]
    fn split_seeds_differ() {
        let s: Vec<u64> = (0..100).map(|i| split_seed(42, i)).collect();
        let mut u = s.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), s.len());
        assert_eq!(split_seed(42, 7), split_seed(42, 7));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn cdf_is_monotone_onto_unit_interval(
            mu in -2.0f64..2.0,
            s2 in 0.2f64..3.0,
            a in -3.0f64..1.0,
            width in 0.2f64..4.0,
            x in 0.0f64..1.0,
            y in 0.0f64..1.0,
        ) {
            let d = uni(DgfFamily::student_t(3.0, 1).unwrap(), mu, s2, a, a + width);
            let (lo, hi) = if x < y { (x, y) } else { (y, x) };
            let f1 = d.cdf(a + lo * width).unwrap();
            let f2 = d.cdf(a + hi * width).unwrap();
            prop_assert!((0.0..=1.0).contains(&f1) && (0.0..=1.0).contains(&f2));
            prop_assert!(f1 <= f2 + 1e-15);
        }
    }
}
