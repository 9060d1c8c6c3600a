//! One-dimensional quadrature: Gauss-Legendre rules, adaptive bisection
//! integration, and monotone CDF tables built from a density.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    fn compute(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const MAX_SPLITS: usize = 1 << 14;

static RULES: [OnceLock<GaussLegendre>; 8] = [
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
    OnceLock::new(),
];

/// Cached rule with `n` nodes; `n` must be a power of two between 4 and 512.
pub fn gauss_legendre(n: usize) -> &'static GaussLegendre {
    assert!(
        n.is_power_of_two() && (4..=512).contains(&n),
        "unsupported rule size {n}"
    );
    let slot = n.trailing_zeros() as usize - 2;
    RULES[slot].get_or_init(|| GaussLegendre::compute(n))
}

/// Adaptive bisection with a 16-point rule; a panel is accepted when it
/// agrees with the sum of its halves to `max(abs_tol, rel_tol * |total|)`,
/// or when the split budget is spent.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> (f64, f64) {
    let rule = gauss_legendre(16);
    let whole = rule.integrate(a, b, &f);
    let mut total_err = 0.0;
    let mut stack = vec![(a, b, whole, 0u32)];
    let mut total = 0.0;
    let scale = whole.abs();
    let mut splits = 0usize;
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = rule.integrate(lo, mid, &f);
        let right = rule.integrate(mid, hi, &f);
        let err = (left + right - est).abs();
        let tol = abs_tol.max(rel_tol * scale) * ((hi - lo) / (b - a)).sqrt().max(1e-3);
        let noise = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        if err <= tol.max(noise) || depth >= 40 || splits >= MAX_SPLITS {
            total += left + right;
            total_err += err;
        } else {
            splits += 1;
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    (total, total_err)
}

/// `∫_a^∞ f(x) dx` through `x = a + s t / (1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    scale: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    integrate_mapped(f, a, f64::INFINITY, scale, abs_tol, rel_tol)
}

/// `∫_a^{a+len} f(x) dx` through `x = a + s t / (1 - t)`; `len` may be infinite.
fn integrate_mapped<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    len: f64,
    scale: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    let g = |t: f64| {
        let one_minus = 1.0 - t;
        if one_minus <= 0.0 {
            return 0.0;
        }
        let x = a + scale * t / one_minus;
        let v = f(x) * scale / (one_minus * one_minus);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let t_end = if len.is_finite() {
        len / (len + scale)
    } else {
        1.0
    };
    integrate_adaptive(g, 0.0, t_end, abs_tol, rel_tol).0
}

/// `∫_a^b f(x) dx` where either end may be infinite; infinite sides are
/// mapped to finite ones with `x = c ± scale * t / (1 - t)`, split at 0
/// when it lies inside.
pub fn integrate_interval<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    scale: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    if a >= b {
        return 0.0;
    }
    let reflected = |x: f64| f(-x);
    match (a.is_finite(), b.is_finite()) {
        (true, true) => integrate_adaptive(&f, a, b, abs_tol, rel_tol).0,
        _ if a < 0.0 && b > 0.0 => {
            integrate_mapped(&f, 0.0, b, scale, abs_tol, rel_tol)
                + integrate_mapped(reflected, 0.0, -a, scale, abs_tol, rel_tol)
        }
        (true, false) => integrate_to_infinity(&f, a, scale, abs_tol, rel_tol),
        _ => integrate_to_infinity(reflected, -b, scale, abs_tol, rel_tol),
    }
}

/// A tabulated CDF over the real line, built from an unnormalized density by
/// adaptive quadrature in the compact variable `t`, where
/// `x = center + scale * tan(pi (t - 1/2))`. Between nodes the tabulated
/// function is a cubic Hermite interpolant in `t` using the exact density as
/// slope.
///
/// Asymmetric tables store the CDF accumulated from the left. Symmetric
/// tables cover `x >= center` only and store the upper-tail probability
/// accumulated from the right, so both tails keep relative accuracy and
/// `cdf(center) = 1/2`, `quantile(1/2) = center` hold exactly.
#[derive(Clone)]
pub struct CdfTable {
    center: f64,
    scale: f64,
    symmetric: bool,
    t: Vec<f64>,
    /// `F` at each node (asymmetric) or the upper-tail probability (symmetric).
    val: Vec<f64>,
    /// Derivative of `val` with respect to `t`.
    slope: Vec<f64>,
    total: f64,
    density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for CdfTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CdfTable")
            .field("center", &self.center)
            .field("scale", &self.scale)
            .field("symmetric", &self.symmetric)
            .field("nodes", &self.t.len())
            .field("total", &self.total)
            .finish()
    }
}

impl CdfTable {
    pub fn build(
        density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        center: f64,
        scale: f64,
        symmetric: bool,
    ) -> Self {
        Self::build_with_tol(density, center, scale, symmetric, 1e-14)
    }

    pub fn build_with_tol(
        density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        center: f64,
        scale: f64,
        symmetric: bool,
        rel_tol: f64,
    ) -> Self {
        let dens_t = |t: f64| -> f64 {
            if t <= 0.0 || t >= 1.0 {
                return 0.0;
            }
            let u = (PI * (t - 0.5)).tan();
            let v = density(center + scale * u) * PI * scale * (1.0 + u * u);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        let (t0, t1) = if symmetric { (0.5, 1.0) } else { (0.0, 1.0) };
        let rule = gauss_legendre(16);
        let n_init = 64;
        let h = (t1 - t0) / n_init as f64;
        let coarse: f64 = (0..n_init)
            .map(|i| rule.integrate(t0 + i as f64 * h, t0 + (i + 1) as f64 * h, dens_t))
            .sum();
        let tol = rel_tol * coarse.abs().max(f64::MIN_POSITIVE);

        let mut ts = vec![t0];
        let mut dens = vec![dens_t(t0)];
        let mut mass = Vec::new();
        for i in 0..n_init {
            let a = t0 + i as f64 * h;
            let b = if i + 1 == n_init {
                t1
            } else {
                t0 + (i + 1) as f64 * h
            };
            // depth-first, left half first, so nodes come out ordered
            let mut stack = vec![(a, b, 0u32)];
            while let Some((lo, hi, depth)) = stack.pop() {
                let mid = 0.5 * (lo + hi);
                let whole = rule.integrate(lo, hi, dens_t);
                let left = rule.integrate(lo, mid, dens_t);
                let right = rule.integrate(mid, hi, dens_t);
                let d0 = *dens.last().unwrap();
                let d1 = dens_t(hi);
                let width = hi - lo;
                let herm_mid = 0.5 * (left + right) + width * (d0 - d1) / 8.0;
                let local_tol = tol * (width / (t1 - t0)).sqrt().max(1e-4);
                let ok = (left + right - whole).abs() <= local_tol
                    && (herm_mid - left).abs() <= local_tol;
                if ok || depth >= 30 {
                    ts.push(hi);
                    dens.push(d1);
                    mass.push(left + right);
                } else {
                    stack.push((mid, hi, depth + 1));
                    stack.push((lo, mid, depth + 1));
                }
            }
        }
        let n = ts.len();
        let (val, slope, total) = if symmetric {
            let mut tail = vec![0.0; n];
            for i in (0..n - 1).rev() {
                tail[i] = tail[i + 1] + mass[i];
            }
            let total = 2.0 * tail[0];
            let val = tail.iter().map(|v| v / total).collect();
            let slope = dens.iter().map(|d| -d / total).collect();
            (val, slope, total)
        } else {
            let mut cum = vec![0.0; n];
            for i in 1..n {
                cum[i] = cum[i - 1] + mass[i - 1];
            }
            let total = cum[n - 1];
            let val = cum.iter().map(|v| v / total).collect();
            let slope = dens.iter().map(|d| d / total).collect();
            (val, slope, total)
        };
        Self {
            center,
            scale,
            symmetric,
            t: ts,
            val,
            slope,
            total,
            density,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    /// Integral of the unnormalized density over the real line.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn pdf(&self, x: f64) -> f64 {
        (self.density)(x) / self.total
    }

    fn to_t(&self, x: f64) -> f64 {
        0.5 + ((x - self.center) / self.scale).atan() / PI
    }

    fn to_x(&self, t: f64) -> f64 {
        if t <= 0.0 {
            f64::NEG_INFINITY
        } else if t >= 1.0 {
            f64::INFINITY
        } else {
            self.center + self.scale * (PI * (t - 0.5)).tan()
        }
    }

    fn eval_t(&self, t: f64) -> f64 {
        let n = self.t.len();
        if t <= self.t[0] {
            return self.val[0];
        }
        if t >= self.t[n - 1] {
            return self.val[n - 1];
        }
        let i = self.t.partition_point(|&v| v <= t) - 1;
        self.hermite(i, t)
    }

    fn hermite(&self, i: usize, t: f64) -> f64 {
        let h = self.t[i + 1] - self.t[i];
        let s = (t - self.t[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.val[i]
            + h10 * h * self.slope[i]
            + h01 * self.val[i + 1]
            + h11 * h * self.slope[i + 1]
    }

    fn hermite_deriv(&self, i: usize, t: f64) -> f64 {
        let h = self.t[i + 1] - self.t[i];
        let s = (t - self.t[i]) / h;
        (6.0 * s * s - 6.0 * s) / h * (self.val[i] - self.val[i + 1])
            + (3.0 * s * s - 4.0 * s + 1.0) * self.slope[i]
            + (3.0 * s * s - 2.0 * s) * self.slope[i + 1]
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if self.symmetric {
            if x < self.center {
                self.eval_t(self.to_t(2.0 * self.center - x))
                    .clamp(0.0, 0.5)
            } else {
                (1.0 - self.eval_t(self.to_t(x))).clamp(0.5, 1.0)
            }
        } else {
            self.eval_t(self.to_t(x)).clamp(0.0, 1.0)
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        if self.symmetric {
            if p == 0.5 {
                return self.center;
            }
            if p < 0.5 {
                return 2.0 * self.center - self.to_x(self.solve_t(p));
            }
            return self.to_x(self.solve_t(1.0 - p));
        }
        self.to_x(self.solve_t(p))
    }

    /// Finds `t` with `val(t) = target` inside the bracketing segment.
    fn solve_t(&self, target: f64) -> f64 {
        let n = self.t.len();
        let i = if self.symmetric {
            self.val.partition_point(|&v| v > target)
        } else {
            self.val.partition_point(|&v| v < target)
        }
        .clamp(1, n - 1)
            - 1;
        let sign = if self.symmetric { -1.0 } else { 1.0 };
        let (mut lo, mut hi) = (self.t[i], self.t[i + 1]);
        let span = self.val[i + 1] - self.val[i];
        let frac = if span != 0.0 {
            (target - self.val[i]) / span
        } else {
            0.5
        };
        let mut t = lo + (hi - lo) * frac.clamp(0.0, 1.0);
        for _ in 0..100 {
            let f = sign * (self.hermite(i, t) - target);
            if f > 0.0 {
                hi = t;
            } else if f < 0.0 {
                lo = t;
            } else {
                return t;
            }
            let d = sign * self.hermite_deriv(i, t);
            let mut next = if d > 0.0 { t - f / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let done = (next - t).abs() < 1e-16 || hi - lo < 1e-16;
            t = next;
            if done {
                break;
            }
        }
        t
    }
}
