//! Kernels derived from a density generating function: shifted kernels
//! `u ↦ g(u + c)` (conditional laws) and projected kernels
//! `u ↦ ∫_B g(u + v'Σ^{-1}v) dv` (block marginals), together with the
//! univariate laws they induce.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use statrs::function::gamma::ln_gamma;

use crate::boxcox::Rectangle;
use crate::dgf::{DgfFamily, DgfKind};
use crate::integrate::{rectangle_integral_kernel, IntegrationOptions};
use crate::linalg::PdMatrix;
use crate::quadrature::{integrate_interval, CdfTable};
use crate::special::{invert_cdf, norm_cdf, norm_pdf, norm_quantile, t_cdf, t_pdf, t_quantile};

#[derive(Clone, Debug)]
enum Base {
    Family(DgfFamily),
    Projected(Arc<Projection>),
}

#[derive(Debug)]
struct Projection {
    kernel: Kernel,
    sigma: PdMatrix,
    rect: Rectangle,
}

/// A radial kernel `u ↦ base(u + shift)`.
#[derive(Clone)]
pub struct Kernel {
    base: Base,
    shift: f64,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.base {
            Base::Family(fam) => write!(f, "Kernel({fam:?}, shift={})", self.shift),
            Base::Projected(p) => write!(
                f,
                "Kernel(projected {:?} over {} dims, shift={})",
                p.kernel,
                p.rect.dim(),
                self.shift
            ),
        }
    }
}

impl From<DgfFamily> for Kernel {
    fn from(family: DgfFamily) -> Self {
        Self {
            base: Base::Family(family),
            shift: 0.0,
        }
    }
}

impl From<&DgfFamily> for Kernel {
    fn from(family: &DgfFamily) -> Self {
        family.clone().into()
    }
}

/// Closed forms the separation-of-variables integrator understands:
/// `exp(ln_factor) exp(-u/2)` or `exp(ln_factor) (1 + u/s)^{-m}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum SovForm {
    Gaussian { ln_factor: f64 },
    StudentT { ln_factor: f64, s: f64, m: f64 },
}

impl Kernel {
    /// `u ↦ ∫_rect k(u + v'Σ^{-1}v) dv`.
    pub fn projected(kernel: impl Into<Kernel>, sigma: PdMatrix, rect: Rectangle) -> Self {
        Self {
            base: Base::Projected(Arc::new(Projection {
                kernel: kernel.into(),
                sigma,
                rect,
            })),
            shift: 0.0,
        }
    }

    pub fn family(&self) -> Option<&DgfFamily> {
        match &self.base {
            Base::Family(f) => Some(f),
            Base::Projected(_) => None,
        }
    }

    /// The family the kernel is built from.
    pub fn root_family(&self) -> &DgfFamily {
        match &self.base {
            Base::Family(f) => f,
            Base::Projected(p) => p.kernel.root_family(),
        }
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `u ↦ self(u + c)`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            base: self.base.clone(),
            shift: self.shift + c,
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match &self.base {
            Base::Family(f) => f.kernel(u + self.shift),
            Base::Projected(_) => self.ln_eval(u).exp(),
        }
    }

    pub fn ln_eval(&self, u: f64) -> f64 {
        match &self.base {
            Base::Family(f) => f.ln_kernel(u + self.shift),
            Base::Projected(p) => {
                let k = p.kernel.shifted(u + self.shift);
                match rectangle_integral_kernel(
                    &k,
                    &p.sigma,
                    &p.rect,
                    &IntegrationOptions::default(),
                ) {
                    Ok(r) => r.value.ln(),
                    Err(crate::error::Error::ToleranceNotMet { estimate, .. }) => estimate.ln(),
                    Err(_) => f64::NEG_INFINITY,
                }
            }
        }
    }

    pub(crate) fn sov_form(&self) -> Option<SovForm> {
        let Base::Family(f) = &self.base else {
            return None;
        };
        match f.kind() {
            DgfKind::Normal => Some(SovForm::Gaussian {
                ln_factor: -0.5 * self.shift,
            }),
            DgfKind::StudentT => {
                let tau = f.eta()[0];
                let m = 0.5 * (tau + f.dim() as f64);
                Some(SovForm::StudentT {
                    ln_factor: -m * (self.shift / tau).ln_1p(),
                    s: tau + self.shift,
                    m,
                })
            }
            _ => None,
        }
    }

    /// Key identifying the kernel for memoization; `None` for projected
    /// kernels.
    pub(crate) fn cache_key(&self) -> Option<String> {
        let Base::Family(f) = &self.base else {
            return None;
        };
        Some(format!(
            "{}|{:?}|{}|{:.11e}",
            f.kind(),
            f.eta(),
            f.dim(),
            self.shift
        ))
    }

    /// The univariate law with density proportional to `self(z²)`.
    pub(crate) fn univariate(&self) -> Univariate {
        match self.sov_form() {
            Some(SovForm::Gaussian { ln_factor }) => Univariate::Normal { ln_factor },
            Some(SovForm::StudentT { ln_factor, s, m }) => {
                let nu = 2.0 * m - 1.0;
                Univariate::T {
                    nu,
                    scale: (s / nu).sqrt(),
                    ln_factor,
                }
            }
            None => match &self.base {
                Base::Family(f) if self.shift == 0.0 => Univariate::Table(f.cdf_table()),
                _ => Univariate::Quad(self.clone()),
            },
        }
    }
}

/// A univariate law: symmetric with density proportional to `k(z²)`, or a
/// general tabulated one.
#[derive(Clone, Debug)]
pub(crate) enum Univariate {
    Normal {
        ln_factor: f64,
    },
    T {
        nu: f64,
        scale: f64,
        ln_factor: f64,
    },
    Table(Arc<CdfTable>),
    /// No closed form or table: handled by direct quadrature.
    Quad(Kernel),
}

impl Univariate {
    pub fn of_family(f: &DgfFamily) -> Self {
        Kernel::from(f).univariate()
    }

    /// Symmetric about zero.
    pub fn is_symmetric(&self) -> bool {
        match self {
            Univariate::Table(t) => t.is_symmetric() && t.center() == 0.0,
            _ => true,
        }
    }

    /// `∫_R k(z²) dz`, the normalizer of the law.
    pub fn ln_total(&self) -> f64 {
        match self {
            Univariate::Normal { ln_factor } => ln_factor + 0.5 * (2.0 * PI).ln(),
            Univariate::T {
                nu,
                scale,
                ln_factor,
            } => {
                ln_factor + scale.ln() + 0.5 * (nu * PI).ln() + ln_gamma(0.5 * nu)
                    - ln_gamma(0.5 * (nu + 1.0))
            }
            Univariate::Table(t) => t.total().ln(),
            Univariate::Quad(k) => {
                let k0 = k.ln_eval(0.0);
                let f = |z: f64| (k.ln_eval(z * z) - k0).exp();
                k0 + (2.0 * integrate_interval(f, 0.0, f64::INFINITY, 1.0, 1e-300, 1e-11)).ln()
            }
        }
    }

    /// CDF; for `Quad` laws this integrates numerically on every call.
    pub fn cdf(&self, z: f64) -> f64 {
        match self {
            Univariate::Normal { .. } => norm_cdf(z),
            Univariate::T { nu, scale, .. } => t_cdf(z / scale, *nu),
            Univariate::Table(t) => t.cdf(z),
            Univariate::Quad(_) => {
                let tl = TruncatedLaw::new(self.clone(), f64::NEG_INFINITY, f64::INFINITY);
                tl.cdf(z)
            }
        }
    }

    pub fn pdf(&self, z: f64) -> f64 {
        match self {
            Univariate::Normal { .. } => norm_pdf(z),
            Univariate::T { nu, scale, .. } => t_pdf(z / scale, *nu) / scale,
            Univariate::Table(t) => t.pdf(z),
            Univariate::Quad(k) => (k.ln_eval(z * z) - self.ln_total()).exp(),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            Univariate::Normal { .. } => norm_quantile(p),
            Univariate::T { nu, scale, .. } => scale * t_quantile(p, *nu),
            Univariate::Table(t) => {
                let z = t.quantile(p);
                // polish against the interpolant's residual
                if z.is_finite() && p > 1e-300 && p < 1.0 - 1e-16 {
                    invert_cdf(|x| t.cdf(x), |x| t.pdf(x), p, z, 1e-14)
                } else {
                    z
                }
            }
            Univariate::Quad(_) => {
                TruncatedLaw::new(self.clone(), f64::NEG_INFINITY, f64::INFINITY).quantile(p)
            }
        }
    }
}

type LnDensity = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A univariate law truncated to `(lo, hi)`. Intervals in the upper half
/// are reflected so that CDF differences are taken in the lower tail.
#[derive(Clone)]
pub(crate) struct TruncatedLaw {
    law: Univariate,
    lo: f64,
    hi: f64,
    flip: bool,
    mode: Mode,
}

impl fmt::Debug for TruncatedLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TruncatedLaw")
            .field("law", &self.law)
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("flip", &self.flip)
            .finish()
    }
}

#[derive(Clone)]
enum Mode {
    /// Differences of the law's CDF.
    Closed { f_lo: f64, mass: f64 },
    /// Direct quadrature of the unnormalized density divided by its value at
    /// the interval point nearest the mode.
    Quad {
        ln_dens: LnDensity,
        ln_ref: f64,
        mass: f64,
    },
}

impl TruncatedLaw {
    pub fn new(law: Univariate, lo: f64, hi: f64) -> Self {
        let flip = lo > 0.0 && law.is_symmetric();
        let (lo, hi) = if flip { (-hi, -lo) } else { (lo, hi) };
        let mode = match &law {
            Univariate::Quad(_) => Self::quad_mode(&law, lo, hi),
            _ => {
                let f_lo = law.cdf(lo);
                let f_hi = law.cdf(hi);
                let mass = f_hi - f_lo;
                // tables are accurate in absolute terms only
                let floor = if matches!(law, Univariate::Table(_)) {
                    1e-6
                } else {
                    1e-8 * f_hi
                };
                if mass > 0.0 && mass > floor {
                    Mode::Closed { f_lo, mass }
                } else {
                    Self::quad_mode(&law, lo, hi)
                }
            }
        };
        Self {
            law,
            lo,
            hi,
            flip,
            mode,
        }
    }

    fn quad_mode(law: &Univariate, lo: f64, hi: f64) -> Mode {
        let ln_dens: LnDensity = match law.clone() {
            Univariate::Normal { ln_factor } => Arc::new(move |z: f64| ln_factor - 0.5 * z * z),
            Univariate::T {
                nu,
                scale,
                ln_factor,
            } => {
                let s = nu * scale * scale;
                Arc::new(move |z: f64| ln_factor - 0.5 * (nu + 1.0) * (z * z / s).ln_1p())
            }
            Univariate::Table(t) => {
                let ln_total = t.total().ln();
                Arc::new(move |z: f64| t.pdf(z).ln() + ln_total)
            }
            Univariate::Quad(k) => Arc::new(move |z: f64| k.ln_eval(z * z)),
        };
        // the point of the interval nearest 0, the mode of symmetric laws
        let zref = hi.min(0.0).max(lo);
        let ln_ref = ln_dens(zref);
        let f = |z: f64| (ln_dens(z) - ln_ref).exp();
        let scale = if zref.abs() > 1.0 {
            1.0 / zref.abs()
        } else {
            1.0
        };
        let mass = integrate_interval(f, lo, hi, scale, 1e-300, 1e-12);
        Mode::Quad {
            ln_dens,
            ln_ref,
            mass,
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        let z = if self.flip { -z } else { z };
        let below = if z <= self.lo {
            0.0
        } else if z >= self.hi {
            1.0
        } else {
            match &self.mode {
                Mode::Closed { f_lo, mass } => ((self.law.cdf(z) - f_lo) / mass).clamp(0.0, 1.0),
                Mode::Quad {
                    ln_dens,
                    ln_ref,
                    mass,
                } => {
                    let f = |x: f64| (ln_dens(x) - ln_ref).exp();
                    (integrate_interval(f, self.lo, z, 1.0, 1e-300, 1e-12) / mass).clamp(0.0, 1.0)
                }
            }
        };
        if self.flip {
            1.0 - below
        } else {
            below
        }
    }

    /// `ln ∫_lo^hi k(z²) dz`.
    pub fn ln_mass(&self) -> f64 {
        match &self.mode {
            Mode::Closed { mass, .. } => mass.ln() + self.law.ln_total(),
            Mode::Quad { ln_ref, mass, .. } => mass.ln() + ln_ref,
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let u = if self.flip { 1.0 - u } else { u };
        let z = match &self.mode {
            Mode::Closed { f_lo, mass } => self.law.quantile(f_lo + u * mass),
            Mode::Quad {
                ln_dens,
                ln_ref,
                mass,
            } => self.quad_quantile(ln_dens, *ln_ref, *mass, u),
        };
        let z = clamp_open(z, self.lo, self.hi);
        if self.flip {
            -z
        } else {
            z
        }
    }

    /// Newton iteration on the running integral, integrating only between
    /// successive iterates.
    fn quad_quantile(&self, ln_dens: &LnDensity, ln_ref: f64, mass: f64, u: f64) -> f64 {
        let target = u * mass;
        let dens = |x: f64| (ln_dens(x) - ln_ref).exp();
        let seg = |a: f64, b: f64| {
            if a <= b {
                integrate_interval(dens, a, b, 1.0, 1e-300, 1e-12)
            } else {
                -integrate_interval(dens, b, a, 1.0, 1e-300, 1e-12)
            }
        };
        let (mut lo, mut hi) = (self.lo, self.hi);
        let mut z = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0,
            (false, true) => hi.min(0.0) - 0.5,
            (false, false) => 0.0,
        };
        let mut cum = integrate_interval(dens, self.lo, z, 1.0, 1e-300, 1e-12);
        for _ in 0..200 {
            let f = cum - target;
            if f.abs() <= 1e-12 * mass {
                break;
            }
            if f > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let d = dens(z);
            let mut next = if d > 0.0 { z - f / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = match (lo.is_finite(), hi.is_finite()) {
                    (true, true) => 0.5 * (lo + hi),
                    (true, false) => z + 2.0 * (1.0 + (z - lo).abs()),
                    (false, true) => z - 2.0 * (1.0 + (hi - z).abs()),
                    (false, false) => 0.0,
                };
            }
            if (next - z).abs() <= 1e-14 * (1.0 + z.abs()) {
                z = next;
                break;
            }
            cum += seg(z, next);
            z = next;
        }
        z
    }
}

/// Moves `z` strictly inside `(lo, hi)`.
pub(crate) fn clamp_open(z: f64, lo: f64, hi: f64) -> f64 {
    if z.is_nan() {
        return if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            lo.max(hi.min(0.0))
        };
    }
    let mut z = z;
    if z <= lo {
        z = lo.next_up();
    }
    if z >= hi {
        z = hi.next_down();
    }
    if z <= lo {
        z = 0.5 * (lo + hi);
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use statrs::function::erf::erfc;

    #[test]
    fn shifted_t_kernel_is_a_scaled_t_law() {
        let (tau, c) = (3.0, 1.7);
        let k = Kernel::from(DgfFamily::student_t(tau, 2).unwrap()).shifted(c);
        let law = k.univariate();
        let oracle = StudentsT::new(0.0, ((tau + c) / (tau + 1.0)).sqrt(), tau + 1.0).unwrap();
        for z in [-4.0, -1.0, 0.0, 0.3, 2.5] {
            assert!((law.cdf(z) - oracle.cdf(z)).abs() < 1e-12, "z = {z}");
        }
        let f = |z: f64| (k.ln_eval(z * z)).exp();
        let total = integrate_interval(f, f64::NEG_INFINITY, f64::INFINITY, 1.0, 1e-300, 1e-12);
        assert!((law.ln_total() - total.ln()).abs() < 1e-9);
    }

    #[test]
    fn far_tail_interval_uses_quadrature() {
        let law = Univariate::of_family(&DgfFamily::normal(1).unwrap());
        let (a, b) = (9.0, 10.0);
        let tl = TruncatedLaw::new(law, a, b);
        let q = |x: f64| erfc(x / 2f64.sqrt());
        for z in [9.01, 9.2, 9.5, 9.9] {
            let expected = (q(a) - q(z)) / (q(a) - q(b));
            assert!((tl.cdf(z) - expected).abs() < 1e-10, "z = {z}");
        }
        let ln_mass = (0.5 * (q(a) - q(b))).ln() + 0.5 * (2.0 * PI).ln();
        assert!((tl.ln_mass() - ln_mass).abs() < 1e-9);
    }

    #[test]
    fn tabulated_and_projected_laws_invert() {
        let slash = Univariate::of_family(&DgfFamily::slash(2.0, 1).unwrap());
        let projected = Kernel::projected(
            DgfFamily::student_t(4.0, 2).unwrap(),
            PdMatrix::identity(1),
            Rectangle::new(vec![-0.5], vec![2.0]).unwrap(),
        )
        .univariate();
        for law in [slash, projected] {
            let tl = TruncatedLaw::new(law, -1.0, 3.0);
            for u in [0.01, 0.3, 0.5, 0.9, 0.999] {
                assert!((tl.cdf(tl.quantile(u)) - u).abs() < 1e-8, "u = {u}");
            }
        }
    }

    proptest! {
        #[test]
        fn truncated_cdf_is_monotone(lo in -8.0f64..6.0, width in 0.05f64..6.0, tau in 0.5f64..30.0) {
            let law = Univariate::of_family(&DgfFamily::student_t(tau, 1).unwrap());
            let tl = TruncatedLaw::new(law, lo, lo + width);
            let mut last = 0.0;
            for i in 1..20 {
                let v = tl.cdf(lo + width * i as f64 / 20.0);
                prop_assert!((0.0..=1.0).contains(&v) && v >= last);
                last = v;
            }
            let z = tl.quantile(0.37);
            prop_assert!(z > lo && z < lo + width);
            prop_assert!((tl.cdf(z) - 0.37).abs() < 1e-7);
        }
    }
}
