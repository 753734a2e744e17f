//! Derivative-free simplex search with a gradient polish stage.
//!
//! Fits in this crate minimize an empirical objective whose analytic gradient
//! (the estimating-equation residual, sign-flipped) is cheap; the driver runs
//! Nelder-Mead from the supplied start to select a basin, then quasi-Newton
//! (BFGS with backtracking) and, if that stalls on a flat ridge, damped Newton
//! on the gradient system with a finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct OptimOptions {
    pub max_iter: usize,
    pub step_tol: f64,
    pub f_tol: f64,
    pub grad_tol: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            step_tol: 1e-8,
            f_tol: 1e-13,
            grad_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder-Mead simplex minimization.
pub fn nelder_mead<F: Fn(&DVector<f64>) -> f64>(
    f: &F,
    x0: &DVector<f64>,
    scale: f64,
    opts: &OptimOptions,
) -> OptimResult {
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut simplex: Vec<DVector<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.clone());
    for i in 0..n {
        let mut v = x0.clone();
        let delta = if v[i].abs() < 1e-12 {
            scale.max(0.00025)
        } else {
            scale.max(0.05) * v[i].abs().max(0.05)
        };
        v[i] += delta;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(f).collect();
    let mut iterations = 0;
    loop {
        // order best -> worst
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();

        let diam = (1..=n)
            .map(|i| (&simplex[i] - &simplex[0]).norm())
            .fold(0.0f64, f64::max);
        let spread = (values[n] - values[0]).abs();
        if (spread < opts.f_tol && diam < opts.step_tol) || iterations >= opts.max_iter {
            return OptimResult {
                x: simplex[0].clone(),
                value: values[0],
                iterations,
                converged: iterations < opts.max_iter,
            };
        }
        iterations += 1;

        let centroid: DVector<f64> = simplex[..n]
            .iter()
            .fold(DVector::zeros(n), |acc, v| acc + v)
            / n as f64;
        let reflected = &centroid + (&centroid - &simplex[n]) * alpha;
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = &centroid + (&reflected - &centroid) * gamma;
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let contracted = if fr < values[n] {
                &centroid + (&reflected - &centroid) * rho
            } else {
                &centroid + (&simplex[n] - &centroid) * rho
            };
            let fc = f(&contracted);
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = &simplex[0] + (&simplex[i] - &simplex[0]) * sigma;
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
}

/// BFGS with Armijo backtracking; `grad` is the analytic gradient.
pub fn bfgs<F, G>(f: &F, grad: &G, x0: &DVector<f64>, opts: &OptimOptions) -> OptimResult
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x0.len();
    let mut x = x0.clone();
    let mut fx = f(&x);
    let mut g = grad(&x);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        if g.norm() < opts.grad_tol {
            converged = true;
            break;
        }
        let mut dir = -(&h * &g);
        if dir.dot(&g) >= 0.0 {
            h = DMatrix::identity(n, n);
            dir = -g.clone();
        }
        // Armijo backtracking
        let mut step = 1.0;
        let slope = g.dot(&dir);
        let mut x_new = &x + &dir * step;
        let mut f_new = f(&x_new);
        let mut ls = 0;
        while !(f_new.is_finite() && f_new <= fx + 1e-4 * step * slope) && ls < 40 {
            step *= 0.5;
            x_new = &x + &dir * step;
            f_new = f(&x_new);
            ls += 1;
        }
        if ls == 40 {
            converged = g.norm() < 1e3 * opts.grad_tol;
            break;
        }
        let g_new = grad(&x_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // BFGS inverse-Hessian update
            h = &h + (&s * s.transpose()) * ((sy + yhy) / (sy * sy))
                - (&hy * s.transpose() + &s * hy.transpose()) / sy;
        }
        let moved = s.norm();
        x = x_new;
        fx = f_new;
        g = g_new;
        if moved < opts.step_tol {
            converged = true;
            break;
        }
    }
    OptimResult {
        x,
        value: fx,
        iterations,
        converged,
    }
}

/// Damped Newton iteration on `grad(x) = 0` with finite-difference Jacobian
/// and monotone line search on the residual norm. Used to finish off flat
/// ridges where BFGS makes no progress.
pub fn newton_on_gradient<G>(grad: &G, x0: &DVector<f64>, opts: &OptimOptions) -> OptimResult
where
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x0.len();
    let mut x = x0.clone();
    let mut g = grad(&x);
    let mut iterations = 0;
    let mut converged = g.norm() < opts.grad_tol;
    while iterations < opts.max_iter && !converged {
        iterations += 1;
        // FD Jacobian of the gradient (Hessian estimate)
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-6 * x[j].abs().max(1e-3);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (grad(&xp) - grad(&xm)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        // Levenberg damping until the step decreases |g|
        let mut lambda = 0.0;
        let mut accepted = false;
        for _ in 0..12 {
            let mut damped = jac.clone();
            for d in 0..n {
                damped[(d, d)] += lambda;
            }
            if let Some(step) = damped.lu().solve(&g) {
                let x_new = &x - &step;
                let g_new = grad(&x_new);
                if g_new.norm() < g.norm() && g_new.iter().all(|v| v.is_finite()) {
                    let moved = step.norm();
                    x = x_new;
                    g = g_new;
                    accepted = true;
                    if moved < opts.step_tol || g.norm() < opts.grad_tol {
                        converged = true;
                    }
                    break;
                }
            }
            lambda = if lambda == 0.0 {
                1e-6 * (jac.abs().max() + 1.0)
            } else {
                lambda * 10.0
            };
        }
        if !accepted {
            break;
        }
    }
    OptimResult {
        x,
        value: g.norm(),
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rosenbrock(x: &DVector<f64>) -> f64 {
        let (a, b) = (x[0], x[1]);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    fn rosenbrock_grad(x: &DVector<f64>) -> DVector<f64> {
        let (a, b) = (x[0], x[1]);
        DVector::from_vec(vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ])
    }

    #[test]
    fn nelder_mead_then_bfgs_solves_rosenbrock() {
        let opts = OptimOptions {
            max_iter: 2000,
            ..Default::default()
        };
        let start = DVector::from_vec(vec![-1.2, 1.0]);
        let nm = nelder_mead(&rosenbrock, &start, 0.1, &opts);
        let r = bfgs(&rosenbrock, &rosenbrock_grad, &nm.x, &opts);
        assert!(r.converged);
        assert_relative_eq!(r.x[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(r.x[1], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn newton_polish_reaches_tight_stationarity() {
        let opts = OptimOptions::default();
        let start = DVector::from_vec(vec![0.8, 0.7]);
        let r = newton_on_gradient(&rosenbrock_grad, &start, &opts);
        assert!(r.converged);
        assert!(rosenbrock_grad(&r.x).norm() < 1e-9);
    }

    #[test]
    fn quadratic_bowl_exact() {
        let opts = OptimOptions::default();
        let f = |x: &DVector<f64>| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2);
        let g = |x: &DVector<f64>| {
            DVector::from_vec(vec![2.0 * (x[0] - 3.0), 4.0 * (x[1] + 1.0)])
        };
        let r = bfgs(&f, &g, &DVector::from_vec(vec![0.0, 0.0]), &opts);
        assert!(r.converged);
        assert_relative_eq!(r.x[0], 3.0, epsilon = 1e-8);
        assert_relative_eq!(r.x[1], -1.0, epsilon = 1e-8);
    }
}
