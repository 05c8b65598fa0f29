//! Asymmetric power ARCH data-generating process with skewed-t innovations,
//! plus the closed-form true one-step VaR and ES it implies.

use rand_chacha::rand_core::SeedableRng;

use crate::dist::{skewt_es, skewt_quantile, SkewedTParams};
use crate::error::{Error, Result};
use crate::rng::{open_unit, Rng};

/// Coefficients of the APARCH recursion
/// `σ_t^δ = ω + β σ_{t-1}^δ + γ (|r_{t-1}| - θ r_{t-1})^δ`
/// with skewed-t innovations.
#[derive(Debug, Clone)]
pub struct AparchParams {
    omega: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    theta: f64,
    innovation: SkewedTParams,
    /// `E(|ε| - θ ε)^δ`, estimated once at construction; used only to start
    /// the recursion at its unconditional level.
    power_moment: f64,
}

/// Draw count and seed for the moment estimate; fixed so identical
/// parameters always produce identical paths.
const MOMENT_DRAWS: usize = 1_000_000;
const MOMENT_SEED: u64 = 0x5eed_a9a2_c4e1_770f;

impl AparchParams {
    pub fn new(
        omega: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
        theta: f64,
        innovation: SkewedTParams,
    ) -> Result<Self> {
        for (name, val) in [
            ("omega", omega),
            ("beta", beta),
            ("gamma", gamma),
            ("delta", delta),
        ] {
            if !(val > 0.0) || !val.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {val}")));
            }
        }
        if !(theta > -1.0 && theta < 1.0) {
            return Err(Error::invalid(format!("theta must lie in (-1,1), got {theta}")));
        }
        let mut rng = Rng::seed_from_u64(MOMENT_SEED);
        let mut acc = 0.0;
        for _ in 0..MOMENT_DRAWS {
            let eps = skewt_quantile(open_unit(&mut rng), &innovation)?;
            acc += (eps.abs() - theta * eps).powf(delta);
        }
        Ok(Self {
            omega,
            beta,
            gamma,
            delta,
            theta,
            innovation,
            power_moment: acc / MOMENT_DRAWS as f64,
        })
    }

    pub fn innovation(&self) -> &SkewedTParams {
        &self.innovation
    }

    pub fn coefficients(&self) -> (f64, f64, f64, f64, f64) {
        (self.omega, self.beta, self.gamma, self.delta, self.theta)
    }

    /// Unconditional level of `σ^δ` when the recursion is stable, else `ω`.
    fn start_level(&self) -> f64 {
        let denom = 1.0 - self.beta - self.gamma * self.power_moment;
        if denom > 0.0 {
            self.omega / denom
        } else {
            self.omega
        }
    }
}

/// A realized APARCH path. `sigma` has one more element than `returns`: the
/// final entry is `σ_{T+1}`, the input to the true one-step risk measures.
#[derive(Debug, Clone)]
pub struct SimulatedPath {
    pub returns: Vec<f64>,
    pub sigma: Vec<f64>,
    pub seed: u64,
    pub params: AparchParams,
}

/// Inverse-transform sample from Hansen's skewed-t; deterministic per seed.
pub fn sample_skewt(n: usize, params: &SkewedTParams, seed: u64) -> Vec<f64> {
    let mut rng = Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            skewt_quantile(open_unit(&mut rng), params)
                .expect("open-interval u is always admissible")
        })
        .collect()
}

/// Simulates APARCH returns of length `T` after discarding `burn_in` steps.
///
/// The recursion starts at the unconditional level of `σ^δ` (see
/// [`AparchParams::new`]); identical `(params, T, burn_in, seed)` give
/// identical paths.
pub fn simulate_aparch(
    params: &AparchParams,
    t_len: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SimulatedPath> {
    if t_len == 0 {
        return Err(Error::invalid("T must be at least 1"));
    }
    let (omega, beta, gamma, delta, theta) = params.coefficients();
    let total = t_len + burn_in;
    let mut rng = Rng::seed_from_u64(seed);

    let mut sigma_pow = params.start_level();
    let mut returns = Vec::with_capacity(t_len);
    let mut sigmas = Vec::with_capacity(t_len + 1);
    for step in 0..=total {
        if !sigma_pow.is_finite() || sigma_pow <= 0.0 {
            return Err(Error::Simulation(format!(
                "sigma^delta left the representable range at step {step}"
            )));
        }
        let sigma = sigma_pow.powf(1.0 / delta);
        if step >= burn_in {
            sigmas.push(sigma);
        }
        if step == total {
            break;
        }
        let eps = skewt_quantile(open_unit(&mut rng), &params.innovation)?;
        let r = sigma * eps;
        if step >= burn_in {
            returns.push(r);
        }
        sigma_pow = omega + beta * sigma_pow + gamma * (r.abs() - theta * r).powf(delta);
    }

    Ok(SimulatedPath {
        returns,
        sigma: sigmas,
        seed,
        params: params.clone(),
    })
}

/// True one-step `(VaR, ES)` for a known `σ_{T+1}`: both risk measures are
/// proportional to the conditional scale.
pub fn true_var_es(sigma_next: f64, alpha: f64, params: &SkewedTParams) -> Result<(f64, f64)> {
    if !(sigma_next > 0.0) {
        return Err(Error::invalid(format!(
            "sigma_next must be positive, got {sigma_next}"
        )));
    }
    Ok((
        sigma_next * skewt_quantile(alpha, params)?,
        sigma_next * skewt_es(alpha, params)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{dist_quantile, InnovationDist};

    fn skt(v: f64, lam: f64) -> SkewedTParams {
        SkewedTParams::new(v, lam).unwrap()
    }

    #[test]
    fn sample_moments_match_construction() {
        let draws = sample_skewt(1_000_000, &skt(20.0, 0.0), 7);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01, "mean={mean}");
        assert!((var - 1.0).abs() < 0.02, "var={var}");
        let skew = draws.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n / var.powf(1.5);
        assert!(skew.abs() < 0.05, "skew={skew}");
    }

    #[test]
    fn sample_tail_quantile_matches_inverse_transform() {
        let p = skt(5.0, -0.5);
        let mut draws = sample_skewt(1_000_000, &p, 11);
        draws.sort_by(f64::total_cmp);
        let emp = crate::quantile::quantile_from_sorted(&draws, 0.01);
        let truth = skewt_quantile(0.01, &p).unwrap();
        assert!((emp - truth).abs() < 0.05, "emp={emp} truth={truth}");
    }

    #[test]
    fn degenerate_recursion_is_constant() {
        // With beta and gamma pushed to the smallest positive values the
        // recursion is numerically sigma^delta = omega.
        let p = AparchParams::new(0.09, 1e-300, 1e-300, 2.0, 0.0, skt(8.0, 0.0)).unwrap();
        let path = simulate_aparch(&p, 50, 10, 3).unwrap();
        for s in path.sigma {
            assert!((s - 0.3).abs() < 1e-10);
        }
    }

    #[test]
    fn recursion_identity_holds_on_path() {
        let p = AparchParams::new(0.05, 0.85, 0.10, 1.5, 0.5, skt(5.0, -0.5)).unwrap();
        let path = simulate_aparch(&p, 400, 500, 99).unwrap();
        assert_eq!(path.sigma.len(), path.returns.len() + 1);
        let (omega, beta, gamma, delta, theta) = p.coefficients();
        for t in 1..path.sigma.len() {
            let r = path.returns[t - 1];
            let lhs = path.sigma[t].powf(delta);
            let rhs =
                omega + beta * path.sigma[t - 1].powf(delta) + gamma * (r.abs() - theta * r).powf(delta);
            assert!((lhs - rhs).abs() < 1e-10, "t={t}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn seed_determinism() {
        let p = AparchParams::new(0.05, 0.85, 0.10, 1.5, 0.0, skt(20.0, 0.0)).unwrap();
        let a = simulate_aparch(&p, 100, 50, 42).unwrap();
        let b = simulate_aparch(&p, 100, 50, 42).unwrap();
        assert_eq!(a.returns, b.returns);
        assert_eq!(a.sigma, b.sigma);
        let c = simulate_aparch(&p, 100, 50, 43).unwrap();
        assert_ne!(a.returns, c.returns);
    }

    #[test]
    fn nested_garch_case_matches_direct_filter() {
        // theta=0, delta=2 is a plain GARCH recursion on squared returns.
        let p = AparchParams::new(0.05, 0.85, 0.10, 2.0, 0.0, skt(8.0, 0.0)).unwrap();
        let path = simulate_aparch(&p, 300, 200, 5).unwrap();
        let mut var = path.sigma[0] * path.sigma[0];
        for t in 1..path.sigma.len() {
            var = 0.05 + 0.85 * var + 0.10 * path.returns[t - 1] * path.returns[t - 1];
            assert!((var.sqrt() - path.sigma[t]).abs() < 1e-8);
        }
    }

    #[test]
    fn long_run_sigma_level() {
        // Average sigma across seeds should sit near the level of a long
        // pre-run with the same parameters.
        let p = AparchParams::new(0.05, 0.85, 0.10, 1.5, 0.5, skt(20.0, -0.5)).unwrap();
        let long = simulate_aparch(&p, 200_000, 500, 1).unwrap();
        let long_mean = long.sigma.iter().sum::<f64>() / long.sigma.len() as f64;
        let mut acc = 0.0;
        let reps = 100;
        for rep in 0..reps {
            let path = simulate_aparch(&p, 1250, 500, 1000 + rep).unwrap();
            acc += path.sigma.iter().sum::<f64>() / path.sigma.len() as f64;
        }
        let short_mean = acc / reps as f64;
        assert!(
            (short_mean - long_mean).abs() / long_mean < 0.2,
            "short={short_mean} long={long_mean}"
        );
    }

    #[test]
    fn true_values_scale_with_sigma() {
        let p = skt(5.0, -0.5);
        let (v1, e1) = true_var_es(1.0, 0.025, &p).unwrap();
        let (v3, e3) = true_var_es(3.0, 0.025, &p).unwrap();
        assert!((v3 - 3.0 * v1).abs() < 1e-12);
        assert!((e3 - 3.0 * e1).abs() < 1e-12);
        assert!(e1 <= v1 && v1 < 0.0);
        assert!(true_var_es(0.0, 0.025, &p).is_err());
    }

    #[test]
    fn unit_scale_reduces_to_distribution_values() {
        let p = skt(20.0, 0.0);
        let (v, _) = true_var_es(1.0, 0.05, &p).unwrap();
        let q = dist_quantile(0.05, &InnovationDist::SkewedT(p)).unwrap();
        assert!((v - q).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(AparchParams::new(0.0, 0.8, 0.1, 1.5, 0.0, skt(5.0, 0.0)).is_err());
        assert!(AparchParams::new(0.05, 0.8, 0.1, 1.5, 1.0, skt(5.0, 0.0)).is_err());
        let p = AparchParams::new(0.05, 0.8, 0.1, 1.5, 0.0, skt(5.0, 0.0)).unwrap();
        assert!(simulate_aparch(&p, 0, 0, 1).is_err());
    }
}
