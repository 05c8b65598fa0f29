//! Maximum-likelihood volatility models: GARCH(1,1), GJR-GARCH(1,1), and
//! EGARCH(1,1) under normal, standardized Student-t, or skewed-t
//! innovations, with zero or AR(1) conditional mean.
//!
//! Risk forecasts are `μ_{T+1} + σ_{T+1} F⁻¹(α)` and
//! `μ_{T+1} + σ_{T+1} ES_ε(α)` with the fitted innovation distribution.

use crate::caviar::RiskForecast;
use crate::dist::{dist_es, dist_quantile, InnovationDist};
use crate::error::{Error, Result};
use crate::optim::{logit, multi_start, sigmoid, NmOptions, PENALTY};

/// Volatility recursion family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GarchFamily {
    Garch,
    GjrGarch,
    Egarch,
}

/// Innovation law whose shape parameters, if any, are estimated by MLE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnovationKind {
    Normal,
    StudentT,
    SkewedT,
}

/// Conditional-mean choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanSpec {
    Zero,
    Ar1,
}

/// A model to estimate: family × innovation law × mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GarchModelSpec {
    pub family: GarchFamily,
    pub dist: InnovationKind,
    pub mean: MeanSpec,
}

impl GarchModelSpec {
    /// EGARCH is restricted to normal innovations; the exponential recursion
    /// is unstable under heavy-tailed errors.
    pub fn new(family: GarchFamily, dist: InnovationKind, mean: MeanSpec) -> Result<Self> {
        if family == GarchFamily::Egarch && dist != InnovationKind::Normal {
            return Err(Error::invalid(
                "EGARCH is only supported with normal innovations",
            ));
        }
        Ok(Self { family, dist, mean })
    }
}

/// Variance-recursion coefficients, one layout per family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceCoeffs {
    /// `σ²_t = ω + β σ²_{t-1} + γ y²_{t-1}`
    Garch { omega: f64, beta: f64, gamma: f64 },
    /// `σ²_t = ω + β σ²_{t-1} + (γ + thr·1{y_{t-1}<0}) y²_{t-1}`
    Gjr {
        omega: f64,
        beta: f64,
        gamma: f64,
        threshold: f64,
    },
    /// `ln σ²_t = ω + β ln σ²_{t-1} + mag (|z_{t-1}| - √(2/π)) + sign z_{t-1}`
    Egarch {
        omega: f64,
        beta: f64,
        mag: f64,
        sign: f64,
    },
}

/// Estimated innovation shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeParams {
    Normal,
    StudentT { v: f64 },
    SkewedT { v: f64, lambda: f64 },
}

/// Full parameter set of a fitted model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchParams {
    /// `(c, φ)` when the mean is AR(1).
    pub mean: Option<(f64, f64)>,
    pub variance: VarianceCoeffs,
    pub shape: ShapeParams,
}

const STATIONARITY_MARGIN: f64 = 1e-6;

impl GarchParams {
    pub fn validate(&self) -> Result<()> {
        match self.variance {
            VarianceCoeffs::Garch { omega, beta, gamma } => {
                if !(omega > 0.0) || beta < 0.0 || gamma < 0.0 {
                    return Err(Error::invalid("variance coefficients out of range"));
                }
                if beta + gamma >= 1.0 - STATIONARITY_MARGIN {
                    return Err(Error::invalid("covariance stationarity violated"));
                }
            }
            VarianceCoeffs::Gjr {
                omega,
                beta,
                gamma,
                threshold,
            } => {
                if !(omega > 0.0) || beta < 0.0 || gamma < 0.0 || threshold < 0.0 {
                    return Err(Error::invalid("variance coefficients out of range"));
                }
                if beta + gamma + 0.5 * threshold >= 1.0 - STATIONARITY_MARGIN {
                    return Err(Error::invalid("covariance stationarity violated"));
                }
            }
            VarianceCoeffs::Egarch { beta, .. } => {
                if beta.abs() >= 1.0 {
                    return Err(Error::invalid("EGARCH persistence must satisfy |beta| < 1"));
                }
            }
        }
        match self.shape {
            ShapeParams::Normal => {}
            ShapeParams::StudentT { v } => {
                if !(v > 2.0) {
                    return Err(Error::invalid("degrees of freedom must exceed 2"));
                }
            }
            ShapeParams::SkewedT { v, lambda } => {
                if !(v > 2.0) || !(lambda > -1.0 && lambda < 1.0) {
                    return Err(Error::invalid("shape parameters out of range"));
                }
            }
        }
        Ok(())
    }

    pub fn innovation_dist(&self) -> Result<InnovationDist> {
        match self.shape {
            ShapeParams::Normal => Ok(InnovationDist::Normal),
            ShapeParams::StudentT { v } => InnovationDist::student_t(v),
            ShapeParams::SkewedT { v, lambda } => InnovationDist::skewed_t(v, lambda),
        }
    }
}

fn mean_adjusted(params: &GarchParams, returns: &[f64]) -> Vec<f64> {
    match params.mean {
        None => returns.to_vec(),
        // Conditional on the first observation; residuals start at t = 2.
        Some((c, phi)) => (1..returns.len())
            .map(|t| returns[t] - c - phi * returns[t - 1])
            .collect(),
    }
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Filters the conditional variance path over `y` and appends the one-step-
/// ahead value, so the output has length `y.len() + 1`.
fn filter_variance(variance: &VarianceCoeffs, y: &[f64]) -> Option<Vec<f64>> {
    let start = sample_variance(y);
    if !(start > 0.0) || !start.is_finite() {
        return None;
    }
    let mut out = Vec::with_capacity(y.len() + 1);
    match *variance {
        VarianceCoeffs::Garch { omega, beta, gamma } => {
            let mut var = start;
            for t in 0..=y.len() {
                if !(var.is_finite() && var > 0.0) {
                    return None;
                }
                out.push(var);
                if t == y.len() {
                    break;
                }
                var = omega + beta * var + gamma * y[t] * y[t];
            }
        }
        VarianceCoeffs::Gjr {
            omega,
            beta,
            gamma,
            threshold,
        } => {
            let mut var = start;
            for t in 0..=y.len() {
                if !(var.is_finite() && var > 0.0) {
                    return None;
                }
                out.push(var);
                if t == y.len() {
                    break;
                }
                let arch = gamma + if y[t] < 0.0 { threshold } else { 0.0 };
                var = omega + beta * var + arch * y[t] * y[t];
            }
        }
        VarianceCoeffs::Egarch {
            omega,
            beta,
            mag,
            sign,
        } => {
            let expected_abs = (2.0 / std::f64::consts::PI).sqrt();
            let mut log_var = start.ln();
            for t in 0..=y.len() {
                let var = log_var.exp();
                if !(var.is_finite() && var > 0.0) {
                    return None;
                }
                out.push(var);
                if t == y.len() {
                    break;
                }
                let z = y[t] / var.sqrt();
                log_var = omega + beta * log_var + mag * (z.abs() - expected_abs) + sign * z;
            }
        }
    }
    Some(out)
}

/// Negative log-likelihood of the model on `returns`.
///
/// The variance recursion starts at the sample variance of the mean-adjusted
/// series; a collapsing or exploding path returns a large penalty.
pub fn garch_nll(params: &GarchParams, spec: &GarchModelSpec, returns: &[f64]) -> f64 {
    debug_assert!(matches!(
        (spec.mean, params.mean),
        (MeanSpec::Zero, None) | (MeanSpec::Ar1, Some(_))
    ));
    let y = mean_adjusted(params, returns);
    if y.len() < 2 {
        return PENALTY;
    }
    let Some(variance) = filter_variance(&params.variance, &y) else {
        return PENALTY;
    };
    let Ok(dist) = params.innovation_dist() else {
        return PENALTY;
    };
    let mut nll = 0.0;
    for t in 0..y.len() {
        let sigma = variance[t].sqrt();
        nll += sigma.ln() - dist.ln_pdf(y[t] / sigma);
    }
    if nll.is_finite() {
        nll
    } else {
        PENALTY
    }
}

struct Surrogate {
    spec: GarchModelSpec,
}

impl Surrogate {
    fn dim(&self) -> usize {
        let mean = if self.spec.mean == MeanSpec::Ar1 { 2 } else { 0 };
        let variance = match self.spec.family {
            GarchFamily::Garch => 3,
            GarchFamily::GjrGarch | GarchFamily::Egarch => 4,
        };
        let shape = match self.spec.dist {
            InnovationKind::Normal => 0,
            InnovationKind::StudentT => 1,
            InnovationKind::SkewedT => 2,
        };
        mean + variance + shape
    }

    /// Unconstrained surrogate -> feasible parameters, total-persistence
    /// split keeps stationarity at every iterate.
    fn decode(&self, z: &[f64]) -> GarchParams {
        let mut i = 0;
        let mean = if self.spec.mean == MeanSpec::Ar1 {
            let m = Some((z[0], z[1]));
            i = 2;
            m
        } else {
            None
        };
        let variance = match self.spec.family {
            GarchFamily::Garch => {
                let omega = z[i].exp();
                let total = (1.0 - STATIONARITY_MARGIN) * sigmoid(z[i + 1]);
                let share = sigmoid(z[i + 2]);
                VarianceCoeffs::Garch {
                    omega,
                    beta: total * share,
                    gamma: total * (1.0 - share),
                }
            }
            GarchFamily::GjrGarch => {
                let omega = z[i].exp();
                let total = (1.0 - STATIONARITY_MARGIN) * sigmoid(z[i + 1]);
                let share_beta = sigmoid(z[i + 2]);
                let share_arch = sigmoid(z[i + 3]);
                let rest = total * (1.0 - share_beta);
                VarianceCoeffs::Gjr {
                    omega,
                    beta: total * share_beta,
                    gamma: rest * share_arch,
                    threshold: 2.0 * rest * (1.0 - share_arch),
                }
            }
            GarchFamily::Egarch => VarianceCoeffs::Egarch {
                omega: z[i],
                beta: (1.0 - STATIONARITY_MARGIN) * z[i + 1].tanh(),
                mag: z[i + 2],
                sign: z[i + 3],
            },
        };
        i += match self.spec.family {
            GarchFamily::Garch => 3,
            _ => 4,
        };
        let shape = match self.spec.dist {
            InnovationKind::Normal => ShapeParams::Normal,
            InnovationKind::StudentT => ShapeParams::StudentT {
                v: 2.0 + z[i].exp(),
            },
            InnovationKind::SkewedT => ShapeParams::SkewedT {
                v: 2.0 + z[i].exp(),
                lambda: z[i + 1].tanh(),
            },
        };
        GarchParams {
            mean,
            variance,
            shape,
        }
    }

    fn encode_start(
        &self,
        mean0: Option<(f64, f64)>,
        var0: &VarianceCoeffs,
        shape0: &ShapeParams,
    ) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        if let Some((c, phi)) = mean0 {
            z.push(c);
            z.push(phi);
        }
        match *var0 {
            VarianceCoeffs::Garch { omega, beta, gamma } => {
                z.push(omega.ln());
                let total = beta + gamma;
                z.push(logit(total / (1.0 - STATIONARITY_MARGIN)));
                z.push(logit(beta / total));
            }
            VarianceCoeffs::Gjr {
                omega,
                beta,
                gamma,
                threshold,
            } => {
                z.push(omega.ln());
                let total = beta + gamma + 0.5 * threshold;
                z.push(logit(total / (1.0 - STATIONARITY_MARGIN)));
                z.push(logit(beta / total));
                z.push(logit(gamma / (gamma + 0.5 * threshold)));
            }
            VarianceCoeffs::Egarch {
                omega,
                beta,
                mag,
                sign,
            } => {
                z.push(omega);
                z.push((beta / (1.0 - STATIONARITY_MARGIN)).atanh());
                z.push(mag);
                z.push(sign);
            }
        }
        match *shape0 {
            ShapeParams::Normal => {}
            ShapeParams::StudentT { v } => z.push((v - 2.0).ln().clamp(-20.0, 20.0)),
            ShapeParams::SkewedT { v, lambda } => {
                z.push((v - 2.0).ln().clamp(-20.0, 20.0));
                z.push(lambda.atanh());
            }
        }
        z
    }
}

/// Fits a model by MLE with the same surrogate-mapping and multi-start
/// simplex machinery the scale-dynamics estimator uses.
///
/// `extra_starts` warm-starts the search (used by the rolling engine to
/// carry parameters between refits); they are tried alongside the grid.
pub fn fit_garch_with_starts(
    returns: &[f64],
    spec: &GarchModelSpec,
    extra_starts: &[GarchParams],
) -> Result<GarchParams> {
    if returns.len() < 250 {
        return Err(Error::invalid(format!(
            "MLE fit needs at least 250 observations, got {}",
            returns.len()
        )));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    let raw_var = sample_variance(returns);
    if raw_var < 1e-12 {
        return Err(Error::estimation(
            "degenerate series: sample variance is numerically zero",
        ));
    }

    let surrogate = Surrogate { spec: *spec };

    let mean0 = match spec.mean {
        MeanSpec::Zero => None,
        MeanSpec::Ar1 => Some(ar1_least_squares(returns)),
    };
    let shape0 = match spec.dist {
        InnovationKind::Normal => ShapeParams::Normal,
        InnovationKind::StudentT => ShapeParams::StudentT { v: 8.0 },
        InnovationKind::SkewedT => ShapeParams::SkewedT {
            v: 8.0,
            lambda: 0.0,
        },
    };
    let mut starts = Vec::new();
    for (beta0, arch0) in [(0.85, 0.10), (0.90, 0.05), (0.60, 0.20)] {
        let var0 = match spec.family {
            GarchFamily::Garch => VarianceCoeffs::Garch {
                omega: raw_var * (1.0 - beta0 - arch0),
                beta: beta0,
                gamma: arch0,
            },
            GarchFamily::GjrGarch => VarianceCoeffs::Gjr {
                omega: raw_var * (1.0 - beta0 - arch0),
                beta: beta0,
                gamma: arch0 / 2.0,
                threshold: arch0,
            },
            GarchFamily::Egarch => VarianceCoeffs::Egarch {
                omega: (1.0 - beta0) * raw_var.ln(),
                beta: beta0,
                mag: 2.0 * arch0,
                sign: -0.05,
            },
        };
        starts.push(surrogate.encode_start(mean0, &var0, &shape0));
    }
    for warm in extra_starts {
        if warm.validate().is_ok() {
            starts.push(surrogate.encode_start(warm.mean, &warm.variance, &warm.shape));
        }
    }

    let objective = |z: &[f64]| -> f64 {
        let params = surrogate.decode(z);
        garch_nll(&params, spec, returns)
    };
    let steps = vec![0.25; surrogate.dim()];
    let opts = NmOptions {
        tol_diameter: 1e-8,
        max_iter: 5000,
    };
    let best = multi_start(&objective, &starts, &steps, opts, |_| 0.0)
        .ok_or_else(|| Error::estimation("likelihood non-finite from every start"))?;
    if best.fx >= PENALTY {
        return Err(Error::estimation(
            "likelihood non-finite from every start (variance collapse)",
        ));
    }
    let params = surrogate.decode(&best.x);
    params.validate()?;
    Ok(params)
}

/// [`fit_garch_with_starts`] from the default grid only.
pub fn fit_garch(returns: &[f64], spec: &GarchModelSpec) -> Result<GarchParams> {
    fit_garch_with_starts(returns, spec, &[])
}

/// Least-squares AR(1) coefficients `(c, φ)`.
pub(crate) fn ar1_least_squares(returns: &[f64]) -> (f64, f64) {
    let n = returns.len();
    let x = &returns[..n - 1];
    let y = &returns[1..];
    let m = (n - 1) as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n - 1 {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    let phi = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - phi * mx, phi)
}

/// One-step `(VaR, ES)` from fitted parameters.
pub fn garch_forecast(
    params: &GarchParams,
    spec: &GarchModelSpec,
    returns: &[f64],
    alpha: f64,
) -> Result<RiskForecast> {
    params.validate()?;
    let y = mean_adjusted(params, returns);
    let variance = filter_variance(&params.variance, &y)
        .ok_or_else(|| Error::estimation("variance filter left the representable range"))?;
    let sigma_next = variance.last().expect("filter output nonempty").sqrt();
    let mu_next = match params.mean {
        None => 0.0,
        Some((c, phi)) => c + phi * returns[returns.len() - 1],
    };
    let dist = params.innovation_dist()?;
    let forecast = RiskForecast {
        var: mu_next + sigma_next * dist_quantile(alpha, &dist)?,
        es: mu_next + sigma_next * dist_es(alpha, &dist)?,
        alpha,
        model_id: model_id(spec),
        window_index: 0,
    };
    forecast.validate()?;
    Ok(forecast)
}

/// Canonical model label, e.g. "GJR-GARCH-skew-t" or "AR-EGARCH".
pub fn model_id(spec: &GarchModelSpec) -> String {
    let family = match spec.family {
        GarchFamily::Garch => "GARCH",
        GarchFamily::GjrGarch => "GJR-GARCH",
        GarchFamily::Egarch => "EGARCH",
    };
    let dist = match spec.dist {
        InnovationKind::Normal => {
            if spec.family == GarchFamily::Egarch {
                String::new()
            } else {
                "-normal".to_string()
            }
        }
        InnovationKind::StudentT => "-t".to_string(),
        InnovationKind::SkewedT => "-skew-t".to_string(),
    };
    let prefix = match spec.mean {
        MeanSpec::Zero => "",
        MeanSpec::Ar1 => "AR-",
    };
    format!("{prefix}{family}{dist}")
}
