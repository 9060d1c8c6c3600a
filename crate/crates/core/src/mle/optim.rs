//! BFGS with backtracking line search on central-difference gradients, and
//! a central-difference Hessian.

#[derive(Clone, Debug)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn step_size(x: f64) -> f64 {
    6e-6 * x.abs().max(1.0)
}

pub(crate) fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step_size(x[i]);
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let down = f(&xp);
            xp[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` from `x0`; converged iff the gradient norm drops below
/// `tol`. Non-finite values count as infeasible and are backtracked from.
pub(crate) fn bfgs<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], tol: f64, max_iter: usize) -> Minimum {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = gradient(&f, &x);
    let identity = |n: usize| {
        let mut h = vec![vec![0.0; n]; n];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        h
    };
    let mut h = identity(n);
    let mut fresh = true;
    let mut iterations = 0;
    while iterations < max_iter {
        if norm(&g) < tol || !fx.is_finite() {
            break;
        }
        iterations += 1;
        let mut d: Vec<f64> = h.iter().map(|row| -dot(row, &g)).collect();
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            h = identity(n);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        if fresh {
            let len = norm(&d);
            if len > 1.0 {
                d.iter_mut().for_each(|v| *v /= len);
                slope /= len;
            }
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let fnew = f(&xn);
            if fnew.is_finite() && fnew <= fx + 1e-4 * alpha * slope {
                accepted = Some((xn, fnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if fresh {
                break;
            }
            h = identity(n);
            fresh = true;
            continue;
        };
        let gn = gradient(&f, &xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if fresh {
                let scale = sy / dot(&y, &y);
                h = identity(n);
                h.iter_mut()
                    .for_each(|row| row.iter_mut().for_each(|v| *v *= scale));
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = h.iter().map(|row| dot(row, &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            fresh = false;
        }
        x = xn;
        fx = fnew;
        g = gn;
    }
    let grad_norm = norm(&g);
    Minimum {
        converged: grad_norm < tol && fx.is_finite(),
        x,
        value: fx,
        grad_norm,
        iterations,
    }
}

/// Central-difference Hessian with steps `h_i = rel * max(|x_i|, 1)`.
pub(crate) fn hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], rel: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let hs: Vec<f64> = x.iter().map(|v| rel * v.abs().max(1.0)).collect();
    let f0 = f(x);
    let mut xp = x.to_vec();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        xp[i] = x[i] + hs[i];
        let up = f(&xp);
        xp[i] = x[i] - hs[i];
        let down = f(&xp);
        xp[i] = x[i];
        out[i][i] = (up - 2.0 * f0 + down) / (hs[i] * hs[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                xp[i] = x[i] + si * hs[i];
                xp[j] = x[j] + sj * hs[j];
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * hs[i] * hs[j]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}
