//! Check-loss primitives, empirical quantiles, and the first-order quantile
//! autoregression used as an optional dynamic conditional median.

use crate::error::{Error, Result};
use crate::optim::{multi_start, NmOptions};

/// Quantile-regression check loss `ρ_k(u) = u (k - 1{u ≤ 0})`.
pub fn check_loss(u: f64, k: f64) -> Result<f64> {
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::invalid(format!("k must be in (0,1), got {k}")));
    }
    Ok(check_loss_unchecked(u, k))
}

/// [`check_loss`] without the level check, for hot loops where the level is
/// validated once up front.
#[inline]
pub(crate) fn check_loss_unchecked(u: f64, k: f64) -> f64 {
    u * (k - if u <= 0.0 { 1.0 } else { 0.0 })
}

/// Linear-interpolation order-statistic quantile at position `h = (n-1)u + 1`
/// (the "type 7" convention), on a pre-sorted slice.
pub fn quantile_from_sorted(sorted: &[f64], u: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * u;
    let i = (h.floor() as usize).min(n - 2);
    let frac = h - i as f64;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

/// Empirical quantile of an unsorted sample at probability `u`.
pub fn empirical_quantile(sample: &[f64], u: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::invalid("empty sample"));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::invalid(format!("u must be in (0,1), got {u}")));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_from_sorted(&sorted, u))
}

pub(crate) fn sample_median(sample: &[f64]) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_from_sorted(&sorted, 0.5)
}

/// First-order quantile autoregression for the conditional median:
/// `Q(0.5 | I_{t-1}) = μ + φ r_{t-1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QarParams {
    /// Baseline median, in return units.
    pub mu: f64,
    /// First-lag coefficient.
    pub phi: f64,
}

/// Choice of conditional location for the returns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocationSpec {
    Zero,
    ConstantMedian,
    Qar1(QarParams),
}

/// Fitted location path `μ_t` for `t = 1..T` plus the one-step-ahead value.
#[derive(Debug, Clone)]
pub struct LocationPath {
    pub path: Vec<f64>,
    pub next: f64,
}

/// Fits the QAR(1) median by minimizing the summed check loss at k = 0.5
/// over `t = 2..T`.
///
/// Simplex search multi-started from `(median, 0)` and `(median, ±0.2)`;
/// a constant series short-circuits to `(value, 0)`.
pub fn fit_qar_median(returns: &[f64]) -> Result<QarParams> {
    if returns.len() < 30 {
        return Err(Error::invalid(format!(
            "QAR fit needs at least 30 observations, got {}",
            returns.len()
        )));
    }
    let med = sample_median(returns);
    if returns.iter().all(|r| *r == returns[0]) {
        return Ok(QarParams {
            mu: returns[0],
            phi: 0.0,
        });
    }

    let objective = |z: &[f64]| -> f64 {
        let (mu, phi) = (z[0], z[1]);
        let mut acc = 0.0;
        for t in 1..returns.len() {
            acc += check_loss_unchecked(returns[t] - mu - phi * returns[t - 1], 0.5);
        }
        if acc.is_finite() {
            acc
        } else {
            crate::optim::PENALTY
        }
    };

    let starts = vec![vec![med, 0.0], vec![med, 0.2], vec![med, -0.2]];
    let scale = returns.iter().fold(0.0_f64, |m, r| m.max(r.abs())).max(0.1);
    let opts = NmOptions {
        tol_diameter: 1e-8,
        max_iter: 2000,
    };
    let best = multi_start(objective, &starts, &[0.1 * scale, 0.1], opts, |_| 0.0)
        .ok_or_else(|| Error::estimation("QAR median fit failed from every start"))?;
    Ok(QarParams {
        mu: best.x[0],
        phi: best.x[1],
    })
}

/// Location path implied by a spec over an observed return series.
///
/// `Zero` gives zeros; `ConstantMedian` the sample median everywhere; `Qar1`
/// gives `μ + φ r_{t-1}` from `t = 2`, with `μ_1` set to the sample median
/// (the recursion needs a presample value).
pub fn location_path(spec: &LocationSpec, returns: &[f64]) -> Result<LocationPath> {
    if returns.is_empty() {
        return Err(Error::invalid("empty return series"));
    }
    match spec {
        LocationSpec::Zero => Ok(LocationPath {
            path: vec![0.0; returns.len()],
            next: 0.0,
        }),
        LocationSpec::ConstantMedian => {
            let med = sample_median(returns);
            Ok(LocationPath {
                path: vec![med; returns.len()],
                next: med,
            })
        }
        LocationSpec::Qar1(p) => {
            let mut path = Vec::with_capacity(returns.len());
            path.push(sample_median(returns));
            for t in 1..returns.len() {
                path.push(p.mu + p.phi * returns[t - 1]);
            }
            Ok(LocationPath {
                path,
                next: p.mu + p.phi * returns[returns.len() - 1],
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{dist_quantile, InnovationDist, SkewedTParams};
    use crate::sim::sample_skewt;

    #[test]
    fn check_loss_branches() {
        assert!((check_loss(1.0, 0.05).unwrap() - 0.05).abs() < 1e-15);
        assert!((check_loss(-1.0, 0.05).unwrap() - 0.95).abs() < 1e-15);
        assert_eq!(check_loss(0.0, 0.3).unwrap(), 0.0);
        assert!(check_loss(1.0, 0.0).is_err());
        assert!(check_loss(1.0, 1.0).is_err());
    }

    #[test]
    fn check_loss_reflection_and_complement_identities() {
        // ρ_k(u) = ρ_{1−k}(−u) and ρ_k(u) + ρ_{1−k}(u) = |u|; together these
        // give ρ_k(u) + ρ_k(−u) = |u|.
        for (u, k) in [(2.5, 0.05), (-1.2, 0.3), (0.0, 0.9), (7.0, 0.5)] {
            let reflected = check_loss(-u, 1.0 - k).unwrap();
            assert!((check_loss(u, k).unwrap() - reflected).abs() < 1e-12, "u={u} k={k}");
            let complement = check_loss(u, k).unwrap() + check_loss(u, 1.0 - k).unwrap();
            assert!((complement - u.abs()).abs() < 1e-12, "u={u} k={k}");
            let split = check_loss(u, k).unwrap() + check_loss(-u, k).unwrap();
            assert!((split - u.abs()).abs() < 1e-12, "u={u} k={k}");
        }
    }

    #[test]
    fn quantile_small_sample_values() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(empirical_quantile(&s, 0.5).unwrap(), 3.0);
        assert_eq!(empirical_quantile(&s, 0.25).unwrap(), 2.0);
        assert!(empirical_quantile(&[], 0.5).is_err());
        assert!(empirical_quantile(&s, 0.0).is_err());
    }

    #[test]
    fn quantile_monotone_in_u() {
        let mut rng = crate::rng::rng_from_seed(3);
        let sample: Vec<f64> = (0..257).map(|_| crate::rng::open_unit(&mut rng) * 10.0 - 5.0).collect();
        let mut sorted = sample.clone();
        sorted.sort_by(f64::total_cmp);
        let mut prev = f64::NEG_INFINITY;
        for i in 1..100 {
            let q = quantile_from_sorted(&sorted, i as f64 / 100.0);
            assert!(q >= prev);
            assert!(q >= sorted[0] && q <= sorted[sorted.len() - 1]);
            prev = q;
        }
    }

    #[test]
    fn quantile_of_student_sample_near_truth() {
        // Monte-Carlo oracle: draws from the standardized t(5).
        let p = SkewedTParams::new(5.0, 0.0).unwrap();
        let draws = sample_skewt(2000, &p, 987);
        let est = empirical_quantile(&draws, 0.05).unwrap();
        let truth = dist_quantile(0.05, &InnovationDist::student_t(5.0).unwrap()).unwrap();
        assert!((est - truth).abs() < 0.08, "est={est} truth={truth}");
    }

    #[test]
    fn qar_constant_series() {
        let r = vec![3.0; 100];
        let p = fit_qar_median(&r).unwrap();
        assert_eq!(p.mu, 3.0);
        assert_eq!(p.phi, 0.0);
    }

    #[test]
    fn qar_recovers_zero_on_iid_noise() {
        let p = SkewedTParams::new(6.0, 0.0).unwrap();
        let r = sample_skewt(5000, &p, 44);
        let fit = fit_qar_median(&r).unwrap();
        assert!(fit.mu.abs() < 0.05, "mu={}", fit.mu);
        assert!(fit.phi.abs() < 0.05, "phi={}", fit.phi);
    }

    #[test]
    fn qar_recovers_ar_coefficient() {
        let p = SkewedTParams::new(6.0, 0.0).unwrap();
        let noise = sample_skewt(5000, &p, 45);
        let mut r = vec![0.0; 5000];
        for t in 1..5000 {
            r[t] = 0.3 * r[t - 1] + noise[t];
        }
        let fit = fit_qar_median(&r).unwrap();
        assert!((fit.phi - 0.3).abs() < 0.05, "phi={}", fit.phi);
    }

    #[test]
    fn qar_fit_is_local_minimum_of_check_loss() {
        let sum_loss = |r: &[f64], mu: f64, phi: f64| -> f64 {
            (1..r.len())
                .map(|t| check_loss_unchecked(r[t] - mu - phi * r[t - 1], 0.5))
                .sum()
        };
        for seed in 0..20 {
            let p = SkewedTParams::new(5.0, -0.3).unwrap();
            let noise = sample_skewt(600, &p, 100 + seed);
            let mut r = vec![0.0; 600];
            for t in 1..600 {
                r[t] = 0.05 + 0.2 * r[t - 1] + noise[t];
            }
            let fit = fit_qar_median(&r).unwrap();
            let at_fit = sum_loss(&r, fit.mu, fit.phi);
            let budget = 1e-6 * r.len() as f64;
            for (dm, dp) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)] {
                let perturbed = sum_loss(&r, fit.mu + dm, fit.phi + dp);
                assert!(
                    perturbed >= at_fit - budget,
                    "seed {seed}: perturbation ({dm},{dp}) lowered loss by {}",
                    at_fit - perturbed
                );
            }
        }
    }

    #[test]
    fn location_paths() {
        let r = [1.0, 2.0, -1.0, 0.5];
        let zero = location_path(&LocationSpec::Zero, &r).unwrap();
        assert!(zero.path.iter().all(|m| *m == 0.0) && zero.next == 0.0);

        let degenerate = location_path(
            &LocationSpec::Qar1(QarParams { mu: 0.0, phi: 0.0 }),
            &r,
        )
        .unwrap();
        assert!(degenerate.path[1..].iter().all(|m| *m == 0.0));
        assert_eq!(degenerate.next, 0.0);

        let qar = location_path(
            &LocationSpec::Qar1(QarParams { mu: 0.1, phi: 0.5 }),
            &[0.0, 0.0, 2.0],
        )
        .unwrap();
        assert!((qar.next - 1.1).abs() < 1e-15);

        let med = location_path(&LocationSpec::ConstantMedian, &r).unwrap();
        assert!(med.path.iter().all(|m| (*m - 0.75).abs() < 1e-15));
    }
}
