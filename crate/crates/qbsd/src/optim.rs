//! Derivative-free simplex minimization and the smooth reparameterizations
//! used to keep constrained fits feasible at every iterate.
//!
//! Check-loss and pseudo-likelihood objectives in this crate are non-smooth,
//! so every estimator runs Nelder-Mead searches from a small grid of starting
//! points and keeps the best result.

/// Stopping rule and iteration cap for a simplex search.
#[derive(Debug, Clone, Copy)]
pub struct NmOptions {
    /// Stop when the largest coordinate range of the simplex falls below this.
    pub tol_diameter: f64,
    pub max_iter: usize,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self {
            tol_diameter: 1e-8,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` by the Nelder-Mead method starting from `x0`.
///
/// `steps` sets the initial simplex edge along each coordinate. Standard
/// reflection/expansion/contraction/shrink coefficients (1, 2, 1/2, 1/2);
/// fully deterministic.
pub fn nelder_mead<F>(f: F, x0: &[f64], steps: &[f64], opts: NmOptions) -> NmResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n > 0, "empty parameter vector");
    assert_eq!(steps.len(), n);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += if steps[i] != 0.0 { steps[i] } else { 0.1 };
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;

        // Order vertices by objective; track best/worst.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fvals[a].total_cmp(&fvals[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        if diameter(&simplex) < opts.tol_diameter {
            converged = true;
            break;
        }

        // Centroid of all vertices except the worst.
        let mut centroid = vec![0.0; n];
        for (idx, v) in simplex.iter().enumerate() {
            if idx == worst {
                continue;
            }
            for k in 0..n {
                centroid[k] += v[k];
            }
        }
        for c in centroid.iter_mut() {
            *c /= n as f64;
        }

        let reflected: Vec<f64> = (0..n)
            .map(|k| centroid[k] + (centroid[k] - simplex[worst][k]))
            .collect();
        let f_reflected = f(&reflected);

        if f_reflected < fvals[best] {
            let expanded: Vec<f64> = (0..n)
                .map(|k| centroid[k] + 2.0 * (centroid[k] - simplex[worst][k]))
                .collect();
            let f_expanded = f(&expanded);
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                fvals[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                fvals[worst] = f_reflected;
            }
        } else if f_reflected < fvals[second_worst] {
            simplex[worst] = reflected;
            fvals[worst] = f_reflected;
        } else {
            // Contract toward the better of the worst vertex and its reflection.
            let (target, f_target) = if f_reflected < fvals[worst] {
                (&reflected, f_reflected)
            } else {
                (&simplex[worst].clone(), fvals[worst])
            };
            let contracted: Vec<f64> = (0..n)
                .map(|k| centroid[k] + 0.5 * (target[k] - centroid[k]))
                .collect();
            let f_contracted = f(&contracted);
            if f_contracted < f_target {
                simplex[worst] = contracted;
                fvals[worst] = f_contracted;
            } else {
                // Shrink everything toward the best vertex.
                let best_point = simplex[best].clone();
                for (idx, v) in simplex.iter_mut().enumerate() {
                    if idx == best {
                        continue;
                    }
                    for k in 0..n {
                        v[k] = best_point[k] + 0.5 * (v[k] - best_point[k]);
                    }
                    fvals[idx] = f(v);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if fvals[i] < fvals[best] {
            best = i;
        }
    }
    NmResult {
        x: simplex[best].clone(),
        fx: fvals[best],
        iterations,
        converged,
    }
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let n = simplex[0].len();
    let mut diam = 0.0_f64;
    for k in 0..n {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in simplex {
            lo = lo.min(v[k]);
            hi = hi.max(v[k]);
        }
        diam = diam.max(hi - lo);
    }
    diam
}

/// Runs `nelder_mead` from every start and returns the best result.
///
/// Ties on the objective are broken by `tie_key` (smaller wins), which lets
/// callers implement rules like "ties broken by smallest β".
pub fn multi_start<F, K>(
    f: F,
    starts: &[Vec<f64>],
    steps: &[f64],
    opts: NmOptions,
    tie_key: K,
) -> Option<NmResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
    K: Fn(&[f64]) -> f64,
{
    let mut best: Option<NmResult> = None;
    for start in starts {
        let res = nelder_mead(&f, start, steps, opts);
        if !res.fx.is_finite() {
            continue;
        }
        best = match best {
            None => Some(res),
            Some(cur) => {
                if res.fx < cur.fx || (res.fx == cur.fx && tie_key(&res.x) < tie_key(&cur.x)) {
                    Some(res)
                } else {
                    Some(cur)
                }
            }
        };
    }
    best
}

/// Objective value used to reject infeasible or non-finite evaluations.
pub const PENALTY: f64 = 1e300;

/// Smooth map for nonnegative parameters: softplus(x) = ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`]; `y` must be positive.
pub fn softplus_inv(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    // ln(e^y - 1) = y + ln(1 - e^{-y})
    y + (-(-y).exp()).ln_1p()
}

/// Smooth map onto (0, 1).
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse of [`sigmoid`]; `y` must lie in (0, 1).
pub fn logit(y: f64) -> f64 {
    debug_assert!(y > 0.0 && y < 1.0);
    (y / (1.0 - y)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2);
        let res = nelder_mead(f, &[0.0, 0.0], &[0.5, 0.5], NmOptions::default());
        assert!(res.converged);
        assert!((res.x[0] - 3.0).abs() < 1e-6, "x0 = {}", res.x[0]);
        assert!((res.x[1] + 1.0).abs() < 1e-6, "x1 = {}", res.x[1]);
    }

    #[test]
    fn minimizes_nonsmooth_check_style_objective() {
        // |x - 1| + |y + 2| has a kink at the optimum.
        let f = |x: &[f64]| (x[0] - 1.0).abs() + (x[1] + 2.0).abs();
        let res = nelder_mead(f, &[4.0, 4.0], &[1.0, 1.0], NmOptions::default());
        assert!((res.x[0] - 1.0).abs() < 1e-6);
        assert!((res.x[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn multi_start_picks_best_basin() {
        // Double well: minima near -1 (depth 0) and +1 (depth 0.5).
        let f = |x: &[f64]| {
            let d0 = (x[0] + 1.0).powi(2);
            let d1 = (x[0] - 1.0).powi(2) + 0.5;
            d0.min(d1)
        };
        let starts = vec![vec![1.2], vec![-1.2]];
        let res = multi_start(f, &starts, &[0.1], NmOptions::default(), |_| 0.0).unwrap();
        assert!((res.x[0] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn softplus_round_trip() {
        for y in [1e-6, 0.05, 0.7, 3.0, 40.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-12 * y.max(1.0));
        }
    }

    #[test]
    fn sigmoid_round_trip() {
        for y in [1e-8, 0.3, 0.5, 0.97] {
            assert!((sigmoid(logit(y)) - y).abs() < 1e-12);
        }
    }
}
