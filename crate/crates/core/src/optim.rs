//! Minimisers shared by every model fit.
//!
//! [`minimize`] is a box-projected BFGS with backtracking line search. If the
//! line search fails twice it hands over to [`nelder_mead`] from the last
//! accepted point. Objectives signal infeasible points by returning a
//! non-finite value.

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub max_iter: usize,
    /// Converged once the projected gradient norm drops below this.
    pub grad_tol: f64,
    /// ...or once an accepted step moves every coordinate less than this.
    pub step_tol: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            max_iter: 500,
            grad_tol: 1e-6,
            step_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub used_simplex: bool,
}

/// Per-coordinate box. Use infinities for unbounded sides.
#[derive(Debug, Clone)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Bounds {
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn projected(x: &[f64], g: &[f64], b: &Bounds) -> Vec<f64> {
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (&xi, &gi))| {
            if (xi <= b.lower[i] && gi > 0.0) || (xi >= b.upper[i] && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

/// Minimise `f`, which returns the value and its gradient.
pub fn minimize<F>(f: F, x0: &[f64], bounds: &Bounds, opts: &Options) -> Outcome
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.clamp(&mut x);
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() {
        return Outcome {
            grad_norm: f64::NAN,
            x,
            value: fx,
            converged: false,
            iterations: 0,
            used_simplex: false,
        };
    }

    let identity = |scale: f64| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { scale } else { 0.0 }).collect())
            .collect()
    };
    let initial_scale = |g: &[f64]| 1.0 / norm(g).max(1.0);
    let mut h = identity(initial_scale(&g));
    let mut fresh = true;
    let mut failures = 0;

    for iter in 1..=opts.max_iter {
        let pg = projected(&x, &g, bounds);
        let gnorm = norm(&pg);
        if gnorm < opts.grad_tol {
            return Outcome {
                x,
                value: fx,
                grad_norm: gnorm,
                converged: true,
                iterations: iter - 1,
                used_simplex: false,
            };
        }

        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i], &pg)).collect();
        for i in 0..n {
            if (x[i] <= bounds.lower[i] && d[i] < 0.0) || (x[i] >= bounds.upper[i] && d[i] > 0.0) {
                d[i] = 0.0;
            }
        }
        if dot(&pg, &d) >= 0.0 {
            h = identity(initial_scale(&pg));
            fresh = true;
            d = pg.iter().map(|v| -v * initial_scale(&pg)).collect();
        }

        let slack = 8.0 * f64::EPSILON * (1.0 + fx.abs());
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            bounds.clamp(&mut trial);
            let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * dot(&g, &moved) + slack {
                accepted = Some((trial, ft, gt, moved));
                break;
            }
            alpha *= 0.5;
        }

        let Some((xn, fnew, gn, s)) = accepted else {
            failures += 1;
            if failures >= 2 {
                let nm = nelder_mead(
                    |p| f(p).0,
                    &x,
                    bounds,
                    &SimplexOptions {
                        max_iter: 200 * n.max(1) * 10,
                        ..SimplexOptions::default()
                    },
                );
                let (value, grad) = f(&nm.x);
                let grad_norm = norm(&projected(&nm.x, &grad, bounds));
                return Outcome {
                    converged: grad_norm < opts.grad_tol || nm.converged,
                    x: nm.x,
                    value,
                    grad_norm,
                    iterations: iter + nm.iterations,
                    used_simplex: true,
                };
            }
            h = identity(initial_scale(&pg));
            fresh = true;
            continue;
        };

        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let step = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        x = xn;
        fx = fnew;
        g = gn;
        if step < opts.step_tol {
            return Outcome {
                grad_norm: norm(&projected(&x, &g, bounds)),
                x,
                value: fx,
                converged: true,
                iterations: iter,
                used_simplex: false,
            };
        }

        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if fresh {
                h = identity(sy / dot(&y, &y));
                fresh = false;
            }
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
    }

    Outcome {
        grad_norm: norm(&projected(&x, &g, bounds)),
        x,
        value: fx,
        converged: false,
        iterations: opts.max_iter,
        used_simplex: false,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iter: usize,
    /// Converged when the simplex diameter falls below this...
    pub x_tol: f64,
    /// ...or the value spread falls below `f_tol * (1 + |f_best|)` with the
    /// diameter under `sqrt(x_tol)`.
    pub f_tol: f64,
    /// Initial simplex edge, relative to `|x0_i|` (absolute when `x0_i = 0`).
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_iter: 5000,
            x_tol: 1e-9,
            f_tol: 1e-13,
            initial_step: 0.1,
        }
    }
}

/// Derivative-free Nelder–Mead with one restart at the reported minimum.
pub fn nelder_mead<F>(f: F, x0: &[f64], bounds: &Bounds, opts: &SimplexOptions) -> Outcome
where
    F: Fn(&[f64]) -> f64,
{
    let first = simplex_run(&f, x0, bounds, opts);
    let second = simplex_run(&f, &first.x, bounds, opts);
    let best = if second.value <= first.value { second } else { first.clone() };
    Outcome {
        iterations: first.iterations + best.iterations,
        ..best
    }
}

fn simplex_run<F>(f: &F, x0: &[f64], bounds: &Bounds, opts: &SimplexOptions) -> Outcome
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let eval = |p: &[f64]| -> (Vec<f64>, f64) {
        let mut q = p.to_vec();
        bounds.clamp(&mut q);
        let v = f(&q);
        (q, if v.is_finite() { v } else { f64::INFINITY })
    };
    let mut pts: Vec<(Vec<f64>, f64)> = vec![eval(x0)];
    for i in 0..n {
        let mut p = pts[0].0.clone();
        let h = if p[i] != 0.0 { opts.initial_step * p[i].abs() } else { opts.initial_step };
        p[i] += h;
        let mut e = eval(&p);
        if e.0 == pts[0].0 {
            p[i] -= 2.0 * h;
            e = eval(&p);
        }
        pts.push(e);
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = pts[0].1;
        let worst = pts[n].1;
        let diameter = pts[1..]
            .iter()
            .map(|(p, _)| p.iter().zip(&pts[0].0).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
            .fold(0.0f64, f64::max);
        let spread = worst - best;
        if diameter < opts.x_tol
            || (spread.is_finite()
                && spread <= opts.f_tol * (1.0 + best.abs())
                && diameter < opts.x_tol.sqrt())
        {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| pts[..n].iter().map(|(p, _)| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let r = eval(&along(alpha));
        if r.1 < pts[0].1 {
            let e = eval(&along(gamma));
            pts[n] = if e.1 < r.1 { e } else { r };
        } else if r.1 < pts[n - 1].1 {
            pts[n] = r;
        } else {
            let c = if r.1 < pts[n].1 { eval(&along(rho)) } else { eval(&along(-rho)) };
            if c.1 < pts[n].1.min(r.1) {
                pts[n] = c;
            } else {
                let x_best = pts[0].0.clone();
                for item in pts.iter_mut().skip(1) {
                    let shrunk: Vec<f64> = x_best
                        .iter()
                        .zip(&item.0)
                        .map(|(b, p)| b + sigma * (p - b))
                        .collect();
                    *item = eval(&shrunk);
                }
            }
        }
    }
    pts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = pts.swap_remove(0);
    Outcome {
        x,
        value,
        grad_norm: f64::NAN,
        converged,
        iterations,
        used_simplex: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        (v, g)
    }

    #[test]
    fn bfgs_solves_rosenbrock() {
        let out = minimize(rosenbrock, &[-1.2, 1.0], &Bounds::unbounded(2), &Options::default());
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6, "{:?}", out.x);
    }

    #[test]
    fn bounds_are_respected() {
        let f = |x: &[f64]| ((x[0] + 3.0).powi(2), vec![2.0 * (x[0] + 3.0)]);
        let b = Bounds {
            lower: vec![-1.0],
            upper: vec![5.0],
        };
        let out = minimize(f, &[2.0], &b, &Options::default());
        assert!(out.converged);
        assert_eq!(out.x[0], -1.0);
    }

    #[test]
    fn simplex_solves_rosenbrock() {
        let out = nelder_mead(
            |x| rosenbrock(x).0,
            &[-1.2, 1.0],
            &Bounds::unbounded(2),
            &SimplexOptions::default(),
        );
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-4, "{:?}", out.x);
    }

    #[test]
    fn infeasible_region_is_avoided() {
        // log barrier: undefined for x <= 0
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                (f64::INFINITY, vec![0.0])
            } else {
                (x[0] - 2.0 * x[0].ln(), vec![1.0 - 2.0 / x[0]])
            }
        };
        let out = minimize(f, &[10.0], &Bounds::unbounded(1), &Options::default());
        assert!(out.converged);
        assert!((out.x[0] - 2.0).abs() < 1e-6);
    }
}
