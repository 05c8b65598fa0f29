//! Joint VaR-ES benchmark families: pseudo-maximum-likelihood models built
//! on the asymmetric Laplace density with autoregressive VaR dynamics, and
//! the one-factor generalized autoregressive score model driven by the FZ0
//! loss.

use crate::caviar::RiskForecast;
use crate::error::{Error, Result};
use crate::garch::ar1_least_squares;
use crate::optim::{logit, multi_start, sigmoid, softplus, softplus_inv, NmOptions, PENALTY};
use crate::quantile::empirical_quantile;

/// VaR recursion choice for the AL models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlVarDynamics {
    /// `Q_t = ω + β Q_{t-1} + γ |y_{t-1}|`
    Sav,
    /// Slope switches on the sign of `y_{t-1}`.
    As,
}

/// ES linkage choice for the AL models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlEsLink {
    /// `ES_t = (1 + exp(γ0)) VaR_t`
    Multiplicative,
    /// `ES_t = VaR_t − x_t` with `x_t` updated on exceedances.
    Autoregressive,
}

/// Mean handling shared by the AL and GAS families: `Ar1` coefficients are
/// pre-estimated by least squares and the model is fitted to residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JointMean {
    Zero,
    Ar1 { c: f64, phi: f64 },
}

impl JointMean {
    fn residuals(&self, returns: &[f64]) -> Vec<f64> {
        match self {
            JointMean::Zero => returns.to_vec(),
            JointMean::Ar1 { c, phi } => (1..returns.len())
                .map(|t| returns[t] - c - phi * returns[t - 1])
                .collect(),
        }
    }

    fn next(&self, returns: &[f64]) -> f64 {
        match self {
            JointMean::Zero => 0.0,
            JointMean::Ar1 { c, phi } => c + phi * returns[returns.len() - 1],
        }
    }
}

/// VaR-dynamics coefficients; unconstrained reals, as in the plain
/// single-level recursion they come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlVarCoeffs {
    Sav { omega: f64, beta: f64, gamma: f64 },
    As {
        omega: f64,
        beta: f64,
        gamma_plus: f64,
        gamma_minus: f64,
    },
}

/// ES-link coefficients. The autoregressive link keeps `γ0, γ1 ≥ 0` and
/// `γ2 ∈ [0, 1)` so the exceedance magnitude `x_t` stays nonnegative and
/// `ES_t` stays below `VaR_t` mechanically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlEsCoeffs {
    Multiplicative { gamma0: f64 },
    Autoregressive { gamma0: f64, gamma1: f64, gamma2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlModelParams {
    pub var_coeffs: AlVarCoeffs,
    pub es_coeffs: AlEsCoeffs,
    pub mean: JointMean,
}

/// Filtered VaR/ES paths over `y`, each of length `y.len() + 1` (the final
/// entries are the one-step-ahead forecasts).
#[derive(Debug, Clone)]
pub struct AlPaths {
    pub var: Vec<f64>,
    pub es: Vec<f64>,
}

fn al_var_step(coeffs: &AlVarCoeffs, q_prev: f64, y_prev: f64) -> f64 {
    match *coeffs {
        AlVarCoeffs::Sav { omega, beta, gamma } => omega + beta * q_prev + gamma * y_prev.abs(),
        AlVarCoeffs::As {
            omega,
            beta,
            gamma_plus,
            gamma_minus,
        } => {
            let slope = if y_prev > 0.0 { gamma_plus } else { gamma_minus };
            omega + beta * q_prev + slope * y_prev.abs()
        }
    }
}

/// Filters the AL model's VaR and ES paths. `q1` is the initial VaR and
/// `x1` the initial exceedance magnitude for the autoregressive link.
fn al_filter(params: &AlModelParams, y: &[f64], alpha: f64, q1: f64, x1: f64) -> AlPaths {
    let t_len = y.len();
    let mut var = Vec::with_capacity(t_len + 1);
    let mut es = Vec::with_capacity(t_len + 1);
    var.push(q1);
    let mut x = x1;
    let es_of = |v: f64, x: f64, coeffs: &AlEsCoeffs| match *coeffs {
        AlEsCoeffs::Multiplicative { gamma0 } => (1.0 + gamma0.exp()) * v,
        AlEsCoeffs::Autoregressive { .. } => v - x,
    };
    es.push(es_of(q1, x, &params.es_coeffs));
    let _ = alpha;
    for t in 1..=t_len {
        let q = al_var_step(&params.var_coeffs, var[t - 1], y[t - 1]);
        if let AlEsCoeffs::Autoregressive { gamma0, gamma1, gamma2 } = params.es_coeffs {
            if y[t - 1] <= var[t - 1] {
                x = gamma0 + gamma1 * (var[t - 1] - y[t - 1]) + gamma2 * x;
            }
        }
        var.push(q);
        es.push(es_of(q, x, &params.es_coeffs));
    }
    AlPaths { var, es }
}

/// Negative log pseudo-likelihood under the asymmetric Laplace density with
/// the model's filtered VaR/ES paths. Any nonnegative filtered ES makes the
/// density undefined and returns a penalty.
pub fn al_neg_loglik(params: &AlModelParams, returns: &[f64], alpha: f64) -> f64 {
    let y = params.mean.residuals(returns);
    if y.len() < 2 {
        return PENALTY;
    }
    let (q1, x1) = match al_initials(&y, alpha) {
        Ok(v) => v,
        Err(_) => return PENALTY,
    };
    let paths = al_filter(params, &y, alpha, q1, x1);
    al_nll_of_paths(&y, &paths, alpha)
}

fn al_nll_of_paths(y: &[f64], paths: &AlPaths, alpha: f64) -> f64 {
    let mut nll = 0.0;
    for t in 0..y.len() {
        let es = paths.es[t];
        if !(es < 0.0) {
            return PENALTY;
        }
        let var = paths.var[t];
        let score = (y[t] - var) * (alpha - if y[t] <= var { 1.0 } else { 0.0 });
        nll += -((1.0 - alpha) / -es).ln() + score / (alpha * -es);
    }
    if nll.is_finite() {
        nll
    } else {
        PENALTY
    }
}

/// Sample α-quantile and mean exceedance magnitude beyond it; the filter's
/// initial values.
fn al_initials(y: &[f64], alpha: f64) -> Result<(f64, f64)> {
    let q1 = empirical_quantile(y, alpha)?;
    let exceedances: Vec<f64> = y.iter().filter(|v| **v <= q1).map(|v| q1 - v).collect();
    let x1 = if exceedances.is_empty() {
        0.0
    } else {
        exceedances.iter().sum::<f64>() / exceedances.len() as f64
    };
    Ok((q1, x1))
}

struct AlSurrogate {
    var_spec: AlVarDynamics,
    es_spec: AlEsLink,
}

impl AlSurrogate {
    fn dim(&self) -> usize {
        let v = match self.var_spec {
            AlVarDynamics::Sav => 3,
            AlVarDynamics::As => 4,
        };
        let e = match self.es_spec {
            AlEsLink::Multiplicative => 1,
            AlEsLink::Autoregressive => 3,
        };
        v + e
    }

    /// Surrogate coordinates of explicit coefficients, for warm starts; fails
    /// on a variant mismatch.
    fn encode(&self, params: &AlModelParams) -> Option<Vec<f64>> {
        let mut z = match (self.var_spec, params.var_coeffs) {
            (AlVarDynamics::Sav, AlVarCoeffs::Sav { omega, beta, gamma }) => {
                vec![omega, beta, gamma]
            }
            (
                AlVarDynamics::As,
                AlVarCoeffs::As {
                    omega,
                    beta,
                    gamma_plus,
                    gamma_minus,
                },
            ) => vec![omega, beta, gamma_plus, gamma_minus],
            _ => return None,
        };
        match (self.es_spec, params.es_coeffs) {
            (AlEsLink::Multiplicative, AlEsCoeffs::Multiplicative { gamma0 }) => z.push(gamma0),
            (
                AlEsLink::Autoregressive,
                AlEsCoeffs::Autoregressive {
                    gamma0,
                    gamma1,
                    gamma2,
                },
            ) => {
                z.push(softplus_inv(gamma0.max(1e-8)));
                z.push(softplus_inv(gamma1.max(1e-8)));
                z.push(logit(gamma2.clamp(1e-8, 1.0 - 1e-8)));
            }
            _ => return None,
        }
        Some(z)
    }

    fn decode(&self, z: &[f64], mean: JointMean) -> AlModelParams {
        let (var_coeffs, i) = match self.var_spec {
            AlVarDynamics::Sav => (
                AlVarCoeffs::Sav {
                    omega: z[0],
                    beta: z[1],
                    gamma: z[2],
                },
                3,
            ),
            AlVarDynamics::As => (
                AlVarCoeffs::As {
                    omega: z[0],
                    beta: z[1],
                    gamma_plus: z[2],
                    gamma_minus: z[3],
                },
                4,
            ),
        };
        let es_coeffs = match self.es_spec {
            AlEsLink::Multiplicative => AlEsCoeffs::Multiplicative { gamma0: z[i] },
            AlEsLink::Autoregressive => AlEsCoeffs::Autoregressive {
                gamma0: softplus(z[i]),
                gamma1: softplus(z[i + 1]),
                gamma2: sigmoid(z[i + 2]),
            },
        };
        AlModelParams {
            var_coeffs,
            es_coeffs,
            mean,
        }
    }
}

/// Fits an AL joint VaR-ES model by minimizing the negative log
/// pseudo-likelihood with multi-start simplex search.
pub fn fit_al_model(
    returns: &[f64],
    alpha: f64,
    var_spec: AlVarDynamics,
    es_spec: AlEsLink,
    mean_spec: AlMeanSpec,
) -> Result<AlModelParams> {
    fit_al_model_impl(returns, alpha, var_spec, es_spec, mean_spec, None)
}

/// Warm-started variant for rolling refits.
pub fn fit_al_model_warm(
    returns: &[f64],
    alpha: f64,
    var_spec: AlVarDynamics,
    es_spec: AlEsLink,
    mean_spec: AlMeanSpec,
    warm: &AlModelParams,
) -> Result<AlModelParams> {
    fit_al_model_impl(returns, alpha, var_spec, es_spec, mean_spec, Some(warm))
}

fn fit_al_model_impl(
    returns: &[f64],
    alpha: f64,
    var_spec: AlVarDynamics,
    es_spec: AlEsLink,
    mean_spec: AlMeanSpec,
    warm: Option<&AlModelParams>,
) -> Result<AlModelParams> {
    if returns.len() < 250 {
        return Err(Error::invalid(format!(
            "AL fit needs at least 250 observations, got {}",
            returns.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::invalid(format!("alpha must be in (0, 0.5), got {alpha}")));
    }
    let mean = match mean_spec {
        AlMeanSpec::Zero => JointMean::Zero,
        AlMeanSpec::Ar1 => {
            let (c, phi) = ar1_least_squares(returns);
            JointMean::Ar1 { c, phi }
        }
    };
    let y = mean.residuals(returns);
    let (q1, x1) = al_initials(&y, alpha)?;
    if !(q1 < 0.0) {
        return Err(Error::estimation(
            "sample alpha-quantile is nonnegative; AL density undefined",
        ));
    }
    let mean_abs = y.iter().map(|v| v.abs()).sum::<f64>() / y.len() as f64;
    let es_sample: Vec<f64> = y.iter().filter(|v| **v <= q1).copied().collect();
    let e1 = if es_sample.is_empty() {
        1.5 * q1
    } else {
        es_sample.iter().sum::<f64>() / es_sample.len() as f64
    };

    let surrogate = AlSurrogate { var_spec, es_spec };
    let mut starts = Vec::new();
    if let Some(w) = warm {
        if let Some(z) = surrogate.encode(w) {
            starts.push(z);
        }
    }
    let betas: &[f64] = if warm.is_some() { &[0.9] } else { &[0.8, 0.9, 0.95] };
    for &beta0 in betas {
        let level = 0.5 * q1 * (1.0 - beta0);
        let slope = 0.5 * q1 * (1.0 - beta0) / mean_abs.max(1e-8);
        let mut z = match var_spec {
            AlVarDynamics::Sav => vec![level, beta0, slope],
            AlVarDynamics::As => vec![level, beta0, slope, slope],
        };
        match es_spec {
            AlEsLink::Multiplicative => {
                let ratio = (e1 / q1 - 1.0).max(0.05);
                z.push(ratio.ln());
            }
            AlEsLink::Autoregressive => {
                z.push(softplus_inv((x1 * 0.1).max(1e-4)));
                z.push(softplus_inv(0.1));
                z.push(logit(0.9));
            }
        }
        starts.push(z);
    }

    let objective = |z: &[f64]| -> f64 {
        let params = surrogate.decode(z, mean);
        let paths = al_filter(&params, &y, alpha, q1, x1);
        al_nll_of_paths(&y, &paths, alpha)
    };
    let mut steps = vec![0.2; surrogate.dim()];
    steps[0] = 0.1 * q1.abs().max(0.1);
    let opts = NmOptions {
        tol_diameter: 1e-8,
        max_iter: 5000,
    };
    let best = multi_start(&objective, &starts, &steps, opts, |_| 0.0)
        .ok_or_else(|| Error::estimation("AL likelihood non-finite from every start"))?;
    if best.fx >= PENALTY {
        return Err(Error::estimation(
            "AL likelihood infeasible from every start (filtered ES not negative)",
        ));
    }
    Ok(surrogate.decode(&best.x, mean))
}

/// Mean choice passed to the AL and GAS fitters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlMeanSpec {
    Zero,
    Ar1,
}

/// One-step `(VaR, ES)` from a fitted AL model.
pub fn al_forecast(
    params: &AlModelParams,
    returns: &[f64],
    alpha: f64,
    model_id: String,
) -> Result<RiskForecast> {
    let y = params.mean.residuals(returns);
    let (q1, x1) = al_initials(&y, alpha)?;
    let paths = al_filter(params, &y, alpha, q1, x1);
    let mu_next = params.mean.next(returns);
    let forecast = RiskForecast {
        var: mu_next + paths.var[y.len()],
        es: mu_next + paths.es[y.len()],
        alpha,
        model_id,
        window_index: 0,
    };
    forecast.validate()?;
    Ok(forecast)
}

/// Strictly consistent scoring function for the `(VaR, ES)` pair.
pub fn fz0_loss(r: f64, var: f64, es: f64, alpha: f64) -> Result<f64> {
    if !(es < 0.0) {
        return Err(Error::invalid(format!("FZ0 requires es < 0, got {es}")));
    }
    let hit = if r <= var { 1.0 } else { 0.0 };
    Ok(-hit * (var - r) / (alpha * es) + var / es + (-es).ln() - 1.0)
}

/// One-factor score-driven model: `VaR_t = ζ e^{κ_t}`, `ES_t = ξ e^{κ_t}`
/// with `ξ < ζ < 0` and `κ` updated by the FZ0 score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasParams {
    pub zeta: f64,
    pub xi: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa0: f64,
    pub mean: JointMean,
}

impl GasParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi < self.zeta && self.zeta < 0.0) {
            return Err(Error::invalid(format!(
                "loadings must satisfy xi < zeta < 0, got xi={} zeta={}",
                self.xi, self.zeta
            )));
        }
        Ok(())
    }
}

/// Filtered factor and risk paths; `kappa`, `var`, `es` have length
/// `y.len() + 1` with one-step-ahead values last.
#[derive(Debug, Clone)]
pub struct GasFilterOutput {
    pub kappa: Vec<f64>,
    pub var: Vec<f64>,
    pub es: Vec<f64>,
    pub mean_fz0: f64,
    pub diverged: bool,
}

const KAPPA_LIMIT: f64 = 50.0;

/// Runs the score recursion `κ_t = β κ_{t-1} + γ g_{t-1}` (intercept fixed
/// at zero for identification) over the mean residuals of `returns`.
pub fn gas_filter(params: &GasParams, returns: &[f64], alpha: f64) -> Result<GasFilterOutput> {
    params.validate()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must be in (0,1), got {alpha}")));
    }
    let y = params.mean.residuals(returns);
    let t_len = y.len();
    let mut kappa = Vec::with_capacity(t_len + 1);
    let mut var = Vec::with_capacity(t_len + 1);
    let mut es = Vec::with_capacity(t_len + 1);
    let mut loss_acc = 0.0;
    let mut diverged = false;

    let mut k = params.kappa0;
    for t in 0..=t_len {
        if !k.is_finite() || k.abs() > KAPPA_LIMIT {
            diverged = true;
            break;
        }
        let scale = k.exp();
        let v = params.zeta * scale;
        let e = params.xi * scale;
        kappa.push(k);
        var.push(v);
        es.push(e);
        if t == t_len {
            break;
        }
        loss_acc += fz0_loss(y[t], v, e, alpha)?;
        // Score of the FZ0 loss with unit scaling.
        let hit = if y[t] <= v { 1.0 } else { 0.0 };
        let g = -(1.0 / e) * (hit * y[t] / alpha - e);
        k = params.beta * k + params.gamma * g;
    }

    let mean_fz0 = if diverged {
        f64::INFINITY
    } else {
        loss_acc / t_len as f64
    };
    Ok(GasFilterOutput {
        kappa,
        var,
        es,
        mean_fz0,
        diverged,
    })
}

/// Fits the one-factor model by minimizing the average FZ0 loss, with
/// `κ_0 = 0` and the loadings kept ordered through a smooth surrogate.
pub fn fit_gas_fz0(returns: &[f64], alpha: f64, mean_spec: AlMeanSpec) -> Result<GasParams> {
    fit_gas_fz0_impl(returns, alpha, mean_spec, None)
}

/// Warm-started variant for rolling refits.
pub fn fit_gas_fz0_warm(
    returns: &[f64],
    alpha: f64,
    mean_spec: AlMeanSpec,
    warm: &GasParams,
) -> Result<GasParams> {
    fit_gas_fz0_impl(returns, alpha, mean_spec, Some(warm))
}

fn fit_gas_fz0_impl(
    returns: &[f64],
    alpha: f64,
    mean_spec: AlMeanSpec,
    warm: Option<&GasParams>,
) -> Result<GasParams> {
    if returns.len() < 250 {
        return Err(Error::invalid(format!(
            "GAS fit needs at least 250 observations, got {}",
            returns.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::invalid(format!("alpha must be in (0, 0.5), got {alpha}")));
    }
    let mean = match mean_spec {
        AlMeanSpec::Zero => JointMean::Zero,
        AlMeanSpec::Ar1 => {
            let (c, phi) = ar1_least_squares(returns);
            JointMean::Ar1 { c, phi }
        }
    };
    let y = mean.residuals(returns);
    let q1 = empirical_quantile(&y, alpha)?;
    if !(q1 < 0.0) {
        return Err(Error::estimation(
            "sample alpha-quantile is nonnegative; loadings cannot be ordered",
        ));
    }
    let tail: Vec<f64> = y.iter().filter(|v| **v <= q1).copied().collect();
    let e1 = if tail.is_empty() {
        1.5 * q1
    } else {
        (tail.iter().sum::<f64>() / tail.len() as f64).min(q1 - 1e-6)
    };

    // Surrogate: zeta = -exp(z0), xi = zeta - exp(z1), beta = sigmoid(z2),
    // gamma = z3.
    let decode = |z: &[f64]| GasParams {
        zeta: -z[0].exp(),
        xi: -z[0].exp() - z[1].exp(),
        beta: sigmoid(z[2]),
        gamma: z[3],
        kappa0: 0.0,
        mean,
    };
    let objective = |z: &[f64]| -> f64 {
        let params = decode(z);
        match gas_filter(&params, returns, alpha) {
            Ok(out) if out.mean_fz0.is_finite() => out.mean_fz0,
            _ => PENALTY,
        }
    };
    let mut starts = Vec::new();
    if let Some(w) = warm {
        if w.validate().is_ok() {
            starts.push(vec![
                (-w.zeta).ln(),
                (w.zeta - w.xi).max(1e-8).ln(),
                logit(w.beta.clamp(1e-6, 1.0 - 1e-6)),
                w.gamma,
            ]);
        }
    }
    let grid: &[(f64, f64)] = if warm.is_some() {
        &[(0.95, -0.05)]
    } else {
        &[(0.95, -0.05), (0.95, -0.01), (0.9, -0.05), (0.9, -0.01)]
    };
    for &(beta0, gamma0) in grid {
        starts.push(vec![
            (-q1).ln(),
            (q1 - e1).max(1e-6).ln(),
            logit(beta0),
            gamma0,
        ]);
    }
    let opts = NmOptions {
        tol_diameter: 1e-8,
        max_iter: 5000,
    };
    let best = multi_start(&objective, &starts, &[0.2, 0.2, 0.3, 0.05], opts, |_| 0.0)
        .ok_or_else(|| Error::estimation("FZ0 loss non-finite from every start"))?;
    if best.fx >= PENALTY {
        return Err(Error::estimation("FZ0 minimization infeasible from every start"));
    }
    let params = decode(&best.x);
    params.validate()?;
    Ok(params)
}

/// One-step `(VaR, ES)` from a fitted GAS model.
pub fn gas_forecast(
    params: &GasParams,
    returns: &[f64],
    alpha: f64,
    model_id: String,
) -> Result<RiskForecast> {
    let out = gas_filter(params, returns, alpha)?;
    if out.diverged {
        return Err(Error::estimation("GAS factor diverged while filtering"));
    }
    let mu_next = params.mean.next(returns);
    let n = out.var.len() - 1;
    let forecast = RiskForecast {
        var: mu_next + out.var[n],
        es: mu_next + out.es[n],
        alpha,
        model_id,
        window_index: 0,
    };
    forecast.validate()?;
    Ok(forecast)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{skewt_es, skewt_quantile, SkewedTParams};
    use crate::sim::{sample_skewt, simulate_aparch, AparchParams};

    #[test]
    fn al_density_residual_zero_case() {
        // Constant paths with r_t = VaR_t: only the log term contributes.
        let alpha = 0.05;
        let v = -1.0;
        let e = -2.0;
        let y = vec![v; 300];
        let paths = AlPaths {
            var: vec![v; 301],
            es: vec![e; 301],
        };
        let nll = al_nll_of_paths(&y, &paths, alpha);
        let expected = 300.0 * -((alpha - 1.0_f64) / e).ln();
        assert!((nll - expected).abs() < 1e-9, "nll={nll} expected={expected}");
    }

    #[test]
    fn multiplicative_link_identity() {
        let params = AlModelParams {
            var_coeffs: AlVarCoeffs::Sav {
                omega: -0.1,
                beta: 0.9,
                gamma: -0.05,
            },
            es_coeffs: AlEsCoeffs::Multiplicative { gamma0: 0.0 },
            mean: JointMean::Zero,
        };
        let y = sample_skewt(300, &SkewedTParams::new(5.0, 0.0).unwrap(), 1);
        let paths = al_filter(&params, &y, 0.05, -1.5, 0.5);
        for t in 0..paths.var.len() {
            // exp(0) = 1 makes ES exactly twice VaR.
            assert!((paths.es[t] - 2.0 * paths.var[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn autoregressive_link_degenerate_updating() {
        // gamma1 = gamma2 = 0 pins x_t at gamma0 after the first exceedance.
        let params = AlModelParams {
            var_coeffs: AlVarCoeffs::Sav {
                omega: -0.1,
                beta: 0.9,
                gamma: -0.05,
            },
            es_coeffs: AlEsCoeffs::Autoregressive {
                gamma0: 0.7,
                gamma1: 0.0,
                gamma2: 0.0,
            },
            mean: JointMean::Zero,
        };
        let y = sample_skewt(400, &SkewedTParams::new(5.0, 0.0).unwrap(), 2);
        let paths = al_filter(&params, &y, 0.05, -1.5, 0.7);
        for t in 0..paths.var.len() {
            assert!((paths.var[t] - paths.es[t] - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn al_as_with_equal_slopes_matches_sav() {
        let y = sample_skewt(500, &SkewedTParams::new(5.0, -0.3).unwrap(), 3);
        let sav = AlModelParams {
            var_coeffs: AlVarCoeffs::Sav {
                omega: -0.08,
                beta: 0.85,
                gamma: -0.12,
            },
            es_coeffs: AlEsCoeffs::Multiplicative { gamma0: -1.2 },
            mean: JointMean::Zero,
        };
        let asym = AlModelParams {
            var_coeffs: AlVarCoeffs::As {
                omega: -0.08,
                beta: 0.85,
                gamma_plus: -0.12,
                gamma_minus: -0.12,
            },
            ..sav
        };
        let a = al_filter(&sav, &y, 0.05, -1.5, 0.5);
        let b = al_filter(&asym, &y, 0.05, -1.5, 0.5);
        assert_eq!(a.var, b.var);
        assert_eq!(a.es, b.es);
    }

    #[test]
    fn al_nll_prefers_true_quantile_path_to_shifts() {
        // Scoring-consistency oracle: with known conditional quantiles, the
        // AL score at the true path beats vertically shifted paths.
        let dist = SkewedTParams::new(5.0, 0.0).unwrap();
        let dgp = AparchParams::new(0.10, 0.85, 0.10, 1.0, 0.0, dist).unwrap();
        let path = simulate_aparch(&dgp, 4000, 500, 17).unwrap();
        let alpha = 0.05;
        let q = skewt_quantile(alpha, &dist).unwrap();
        let es_ratio = skewt_es(alpha, &dist).unwrap();
        let truth = AlPaths {
            var: path.sigma.iter().map(|s| s * q).collect(),
            es: path.sigma.iter().map(|s| s * es_ratio).collect(),
        };
        let base = al_nll_of_paths(&path.returns, &truth, alpha);
        for shift in [0.1, -0.1] {
            let shifted = AlPaths {
                var: truth.var.iter().map(|v| v + shift).collect(),
                es: truth.es.iter().map(|e| e + shift).collect(),
            };
            let worse = al_nll_of_paths(&path.returns, &shifted, alpha);
            assert!(worse > base, "shift {shift}: {worse} vs {base}");
        }
    }

    #[test]
    fn fit_al_hits_iid_quantile() {
        let dist = SkewedTParams::new(5.0, 0.0).unwrap();
        let alpha = 0.05;
        let truth = skewt_quantile(alpha, &dist).unwrap();
        let mut err_acc = 0.0;
        let seeds = 20;
        for seed in 0..seeds {
            let y = sample_skewt(2000, &dist, 600 + seed);
            let params = fit_al_model(
                &y,
                alpha,
                AlVarDynamics::Sav,
                AlEsLink::Multiplicative,
                AlMeanSpec::Zero,
            )
            .unwrap();
            let f = al_forecast(&params, &y, alpha, "AL_Mult-SAV".into()).unwrap();
            err_acc += (f.var - truth).abs();
            // Link identity holds exactly on the forecast.
            let AlEsCoeffs::Multiplicative { gamma0 } = params.es_coeffs else {
                panic!()
            };
            assert!((f.es - (1.0 + gamma0.exp()) * f.var).abs() < 1e-10);
        }
        let mae = err_acc / seeds as f64;
        assert!(mae < 0.2, "VaR MAE vs iid truth = {mae}");
    }

    #[test]
    fn fz0_loss_values() {
        let l = fz0_loss(0.0, -1.0, -2.0, 0.05).unwrap();
        assert!((l - (0.5 + 2.0_f64.ln() - 1.0)).abs() < 1e-12);
        // Zero exceedance magnitude at r = var gives the same value.
        let l2 = fz0_loss(-1.0, -1.0, -2.0, 0.3).unwrap();
        assert!((l2 - (0.5 + 2.0_f64.ln() - 1.0)).abs() < 1e-12);
        assert!(fz0_loss(0.0, -1.0, 0.0, 0.05).is_err());
    }

    #[test]
    fn fz0_grid_minimum_at_truth() {
        // Consistency: over a coarse grid, mean FZ0 on a large iid sample is
        // minimized within one step of the true (VaR, ES).
        let dist = SkewedTParams::new(5.0, 0.0).unwrap();
        let alpha = 0.05;
        let y = sample_skewt(100_000, &dist, 9);
        let tv = skewt_quantile(alpha, &dist).unwrap();
        let te = skewt_es(alpha, &dist).unwrap();
        let step_v = 0.05 * tv.abs();
        let step_e = 0.05 * te.abs();
        let mut best = (f64::INFINITY, 0i32, 0i32);
        for i in -3..=3 {
            for j in -3..=3 {
                let v = tv + i as f64 * step_v;
                let e = te + j as f64 * step_e;
                if e >= v {
                    continue;
                }
                let mean: f64 = y
                    .iter()
                    .map(|r| fz0_loss(*r, v, e, alpha).unwrap())
                    .sum::<f64>()
                    / y.len() as f64;
                if mean < best.0 {
                    best = (mean, i, j);
                }
            }
        }
        assert!(best.1.abs() <= 1 && best.2.abs() <= 1, "minimizer at {best:?}");
    }

    #[test]
    fn gas_static_factor() {
        let params = GasParams {
            zeta: -1.5,
            xi: -2.0,
            beta: 0.9,
            gamma: 0.0,
            kappa0: 0.0,
            mean: JointMean::Zero,
        };
        let y = sample_skewt(200, &SkewedTParams::new(5.0, 0.0).unwrap(), 4);
        let out = gas_filter(&params, &y, 0.05).unwrap();
        assert!(out.kappa.iter().all(|k| *k == 0.0));
        assert!(out.var.iter().all(|v| *v == -1.5));
        assert!(out.es.iter().all(|e| *e == -2.0));
    }

    #[test]
    fn gas_score_is_one_without_exceedance() {
        let params = GasParams {
            zeta: -1.5,
            xi: -2.0,
            beta: 0.5,
            gamma: 0.1,
            kappa0: 0.0,
            mean: JointMean::Zero,
        };
        // A single observation above VaR: kappa_2 = beta*0 + gamma*1.
        let out = gas_filter(&params, &[0.3, 0.0], 0.05).unwrap();
        assert!((out.kappa[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn gas_fit_orders_loadings_and_hits_iid_values() {
        let dist = SkewedTParams::new(5.0, 0.0).unwrap();
        let alpha = 0.05;
        let tv = skewt_quantile(alpha, &dist).unwrap();
        let te = skewt_es(alpha, &dist).unwrap();
        let mut verr = 0.0;
        let mut eerr = 0.0;
        let seeds = 20;
        for seed in 0..seeds {
            let y = sample_skewt(2000, &dist, 800 + seed);
            let params = fit_gas_fz0(&y, alpha, AlMeanSpec::Zero).unwrap();
            assert!(params.xi < params.zeta && params.zeta < 0.0);
            let f = gas_forecast(&params, &y, alpha, "GAS".into()).unwrap();
            verr += (f.var - tv).abs();
            eerr += (f.es - te).abs();
        }
        assert!(verr / (seeds as f64) < 0.2, "VaR MAE {}", verr / seeds as f64);
        assert!(eerr / (seeds as f64) < 0.25, "ES MAE {}", eerr / seeds as f64);
    }

    #[test]
    fn gas_loss_at_fit_beats_perturbations() {
        let dist = SkewedTParams::new(8.0, 0.0).unwrap();
        let dgp = AparchParams::new(0.05, 0.85, 0.10, 2.0, 0.0, dist).unwrap();
        let y = simulate_aparch(&dgp, 1500, 500, 23).unwrap().returns;
        let alpha = 0.05;
        let fitted = fit_gas_fz0(&y, alpha, AlMeanSpec::Zero).unwrap();
        let base = gas_filter(&fitted, &y, alpha).unwrap().mean_fz0;
        for scale in [0.9, 1.1] {
            let cand = GasParams {
                zeta: fitted.zeta * scale,
                xi: fitted.xi * scale,
                beta: (fitted.beta * scale).min(0.999),
                gamma: fitted.gamma * scale,
                ..fitted
            };
            if cand.validate().is_err() {
                continue;
            }
            let loss = gas_filter(&cand, &y, alpha).unwrap().mean_fz0;
            assert!(loss >= base - 1e-9, "scale {scale}: {loss} vs {base}");
        }
    }

    #[test]
    fn gas_forecasts_scale_with_returns() {
        // FZ0 loss differences are scale-invariant, so fitted forecasts on
        // c*y should be c times the fitted forecasts on y.
        let dist = SkewedTParams::new(8.0, 0.0).unwrap();
        let dgp = AparchParams::new(0.05, 0.85, 0.10, 2.0, 0.0, dist).unwrap();
        let y = simulate_aparch(&dgp, 1500, 500, 29).unwrap().returns;
        let alpha = 0.05;
        let c = 3.0;
        let scaled: Vec<f64> = y.iter().map(|v| c * v).collect();
        let f1 = {
            let p = fit_gas_fz0(&y, alpha, AlMeanSpec::Zero).unwrap();
            gas_forecast(&p, &y, alpha, "GAS".into()).unwrap()
        };
        let f2 = {
            let p = fit_gas_fz0(&scaled, alpha, AlMeanSpec::Zero).unwrap();
            gas_forecast(&p, &scaled, alpha, "GAS".into()).unwrap()
        };
        assert!(
            ((f2.var - c * f1.var) / (c * f1.var)).abs() < 0.05,
            "{} vs {}",
            f2.var,
            c * f1.var
        );
        assert!(
            ((f2.es - c * f1.es) / (c * f1.es)).abs() < 0.05,
            "{} vs {}",
            f2.es,
            c * f1.es
        );
    }

    #[test]
    fn filtered_paths_stay_ordered_on_feasible_fits() {
        let dist = SkewedTParams::new(5.0, -0.5).unwrap();
        let dgp = AparchParams::new(0.05, 0.85, 0.10, 1.5, 0.5, dist).unwrap();
        let y = simulate_aparch(&dgp, 1000, 500, 41).unwrap().returns;
        let alpha = 0.025;
        let al = fit_al_model(
            &y,
            alpha,
            AlVarDynamics::As,
            AlEsLink::Autoregressive,
            AlMeanSpec::Zero,
        )
        .unwrap();
        let (q1, x1) = al_initials(&y, alpha).unwrap();
        let paths = al_filter(&al, &y, alpha, q1, x1);
        for t in 0..paths.var.len() {
            assert!(paths.es[t] <= paths.var[t]);
            assert!(paths.es[t] < 0.0);
        }
        let gas = fit_gas_fz0(&y, alpha, AlMeanSpec::Zero).unwrap();
        let out = gas_filter(&gas, &y, alpha).unwrap();
        for t in 0..out.var.len() {
            assert!(out.es[t] < out.var[t] && out.var[t] < 0.0);
        }
    }

    #[test]
    fn gas_filter_is_deterministic() {
        let y = sample_skewt(500, &SkewedTParams::new(5.0, 0.0).unwrap(), 50);
        let params = GasParams {
            zeta: -1.4,
            xi: -1.9,
            beta: 0.95,
            gamma: -0.03,
            kappa0: 0.0,
            mean: JointMean::Zero,
        };
        let a = gas_filter(&params, &y, 0.05).unwrap();
        let b = gas_filter(&params, &y, 0.05).unwrap();
        assert_eq!(a.kappa, b.kappa);
    }
}
