//! Conditional scale dynamics from restricted quantile-pair regressions.
//!
//! The scale of a return series is modeled as the spread between the
//! conditional quantiles at levels `p` and `1-p`. Both quantiles follow one
//! recursion with shared persistence parameters and level-specific
//! intercepts, so the pair can never cross and the spread stays positive by
//! construction. Left-tail VaR comes from the empirical quantile of the
//! rescaled residuals multiplied by the one-step-ahead spread, and ES from a
//! Riemann average of such quantiles below the VaR level; both are computed
//! per `p` over a set of spread-defining levels and then aggregated.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optim::{multi_start, softplus, softplus_inv, NmOptions, PENALTY};
use crate::quantile::{
    check_loss_unchecked, fit_qar_median, location_path, quantile_from_sorted, LocationPath,
    LocationSpec,
};

/// Which recursion drives the quantile pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaviarVariant {
    /// Symmetric absolute-value dynamics: one slope on `|ε*_{t-1}|`.
    GlobalSav,
    /// Asymmetric slopes keyed to the sign of the previous observation.
    GlobalAs,
}

/// A spread-defining quantile level together with the recursion variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaviarSpec {
    pub variant: CaviarVariant,
    pub p: f64,
}

impl CaviarSpec {
    pub fn new(variant: CaviarVariant, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 0.5) {
            return Err(Error::invalid(format!("p must lie in (0, 0.5), got {p}")));
        }
        Ok(Self { variant, p })
    }
}

/// Slope coefficients on `|ε*_{t-1}|`; asymmetric slopes switch on the sign
/// of the previous observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CaviarSlopes {
    Symmetric(f64),
    Asymmetric { plus: f64, minus: f64 },
}

/// Coefficients of a fitted quantile-pair recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaviarParams {
    /// Intercept at level `p`.
    pub omega_lo: f64,
    /// Intercept at level `1-p`; must exceed `omega_lo`.
    pub omega_hi: f64,
    /// Autoregressive persistence, nonnegative.
    pub beta: f64,
    pub slopes: CaviarSlopes,
}

impl CaviarParams {
    pub fn validate(&self, variant: CaviarVariant) -> Result<()> {
        if !(self.omega_lo < self.omega_hi) {
            return Err(Error::invalid(format!(
                "omega_lo must be strictly below omega_hi, got {} vs {}",
                self.omega_lo, self.omega_hi
            )));
        }
        if self.beta < 0.0 {
            return Err(Error::invalid("beta must be nonnegative"));
        }
        match (variant, self.slopes) {
            (CaviarVariant::GlobalSav, CaviarSlopes::Symmetric(g)) => {
                if g < 0.0 {
                    return Err(Error::invalid("gamma must be nonnegative"));
                }
            }
            (CaviarVariant::GlobalAs, CaviarSlopes::Asymmetric { plus, minus }) => {
                if plus < 0.0 || minus < 0.0 {
                    return Err(Error::invalid("gamma_plus and gamma_minus must be nonnegative"));
                }
            }
            _ => {
                return Err(Error::invalid(
                    "slope kind does not match the recursion variant",
                ))
            }
        }
        Ok(())
    }

    #[inline]
    fn slope_for(&self, y_prev: f64) -> f64 {
        match self.slopes {
            CaviarSlopes::Symmetric(g) => g,
            CaviarSlopes::Asymmetric { plus, minus } => {
                if y_prev > 0.0 {
                    plus
                } else {
                    minus
                }
            }
        }
    }
}

/// Guard for the division by the previous spread; the spread is positive by
/// construction but can underflow in extreme parameter corners during
/// optimization.
const SPREAD_FLOOR: f64 = 1e-10;

/// Quantile-pair paths from one pass of the recursion.
///
/// `q_lo`, `q_hi`, `s_star` have length `T+1`: the final entry is the
/// one-step-ahead value. `eps_star` has length `T`.
#[derive(Debug, Clone)]
pub struct CaviarPaths {
    pub q_lo: Vec<f64>,
    pub q_hi: Vec<f64>,
    pub s_star: Vec<f64>,
    pub eps_star: Vec<f64>,
}

/// Runs the quantile-pair recursion over `y`, starting from `(q0_lo, q0_hi)`
/// and emitting one step beyond the sample.
pub fn caviar_recursion(
    params: &CaviarParams,
    spec: &CaviarSpec,
    y: &[f64],
    q0_lo: f64,
    q0_hi: f64,
) -> Result<CaviarPaths> {
    params.validate(spec.variant)?;
    if !(q0_lo < q0_hi) {
        return Err(Error::invalid(format!(
            "initial quantiles must satisfy q0_lo < q0_hi, got {q0_lo} vs {q0_hi}"
        )));
    }
    let t_len = y.len();
    let mut q_lo = Vec::with_capacity(t_len + 1);
    let mut q_hi = Vec::with_capacity(t_len + 1);
    let mut s_star = Vec::with_capacity(t_len + 1);
    let mut eps_star = Vec::with_capacity(t_len);

    q_lo.push(q0_lo);
    q_hi.push(q0_hi);
    s_star.push(q0_hi - q0_lo);

    for t in 1..=t_len {
        let prev = t - 1;
        let spread = s_star[prev].max(SPREAD_FLOOR);
        let aeps = (y[prev] / spread).abs();
        let mult = params.beta + params.slope_for(y[prev]) * aeps;
        let lo = params.omega_lo + mult * q_lo[prev];
        let hi = params.omega_hi + mult * q_hi[prev];
        q_lo.push(lo);
        q_hi.push(hi);
        s_star.push(hi - lo);
    }
    for t in 0..t_len {
        eps_star.push(y[t] / s_star[t].max(SPREAD_FLOOR));
    }
    Ok(CaviarPaths {
        q_lo,
        q_hi,
        s_star,
        eps_star,
    })
}

/// A fitted quantile-pair recursion at one spread level, with its in-sample
/// paths, rescaled residuals, and summed two-level check loss.
#[derive(Debug, Clone)]
pub struct CaviarFit {
    pub spec: CaviarSpec,
    pub params: CaviarParams,
    pub q_lo: Vec<f64>,
    pub q_hi: Vec<f64>,
    pub s_star: Vec<f64>,
    pub eps_star: Vec<f64>,
    pub objective: f64,
    eps_sorted: Vec<f64>,
}

impl CaviarFit {
    /// Assembles a fit from recursion paths, checking the non-crossing
    /// invariants.
    pub fn from_paths(
        spec: CaviarSpec,
        params: CaviarParams,
        paths: CaviarPaths,
        objective: f64,
    ) -> Result<Self> {
        for t in 0..paths.s_star.len() {
            if !(paths.q_lo[t] < paths.q_hi[t]) || !(paths.s_star[t] > 0.0) {
                return Err(Error::estimation(format!(
                    "quantile ordering violated at step {t}"
                )));
            }
        }
        let mut eps_sorted = paths.eps_star.clone();
        eps_sorted.sort_by(f64::total_cmp);
        Ok(Self {
            spec,
            params,
            q_lo: paths.q_lo,
            q_hi: paths.q_hi,
            s_star: paths.s_star,
            eps_star: paths.eps_star,
            objective,
            eps_sorted,
        })
    }

    /// One-step-ahead spread `s*_{T+1}`.
    pub fn spread_next(&self) -> f64 {
        *self.s_star.last().expect("paths are nonempty")
    }

    /// Empirical quantile of the in-sample rescaled residuals.
    pub fn rescaled_quantile(&self, tau: f64) -> f64 {
        quantile_from_sorted(&self.eps_sorted, tau)
    }
}

/// Summed check loss of the recursion at both levels, evaluated without
/// allocating paths. Non-finite evaluations return [`PENALTY`].
fn objective_value(params: &CaviarParams, p: f64, y: &[f64], q0_lo: f64, q0_hi: f64) -> f64 {
    let mut lo = q0_lo;
    let mut hi = q0_hi;
    let mut acc = check_loss_unchecked(y[0] - lo, p) + check_loss_unchecked(y[0] - hi, 1.0 - p);
    for t in 1..y.len() {
        let spread = (hi - lo).max(SPREAD_FLOOR);
        let aeps = (y[t - 1] / spread).abs();
        let mult = params.beta + params.slope_for(y[t - 1]) * aeps;
        lo = params.omega_lo + mult * lo;
        hi = params.omega_hi + mult * hi;
        acc += check_loss_unchecked(y[t] - lo, p) + check_loss_unchecked(y[t] - hi, 1.0 - p);
    }
    if acc.is_finite() {
        acc
    } else {
        PENALTY
    }
}

fn params_from_surrogate(z: &[f64], variant: CaviarVariant) -> CaviarParams {
    let omega_lo = z[0];
    let omega_hi = z[0] + softplus(z[1]);
    let beta = softplus(z[2]);
    let slopes = match variant {
        CaviarVariant::GlobalSav => CaviarSlopes::Symmetric(softplus(z[3])),
        CaviarVariant::GlobalAs => CaviarSlopes::Asymmetric {
            plus: softplus(z[3]),
            minus: softplus(z[4]),
        },
    };
    CaviarParams {
        omega_lo,
        omega_hi,
        beta,
        slopes,
    }
}

fn surrogate_from_params(params: &CaviarParams) -> Vec<f64> {
    let mut z = vec![
        params.omega_lo,
        softplus_inv((params.omega_hi - params.omega_lo).max(1e-8)),
        softplus_inv(params.beta.max(1e-8)),
    ];
    match params.slopes {
        CaviarSlopes::Symmetric(g) => z.push(softplus_inv(g.max(1e-8))),
        CaviarSlopes::Asymmetric { plus, minus } => {
            z.push(softplus_inv(plus.max(1e-8)));
            z.push(softplus_inv(minus.max(1e-8)));
        }
    }
    z
}

/// Fits the constrained quantile-pair recursion by minimizing the summed
/// check loss at levels `p` and `1-p`.
///
/// The initial quantiles are fixed at the sample quantiles of `y`.
/// Constraints are kept feasible at every iterate by optimizing a smooth
/// surrogate (intercept gap and slopes pass through softplus). Six starting
/// points; best objective wins, ties broken by smallest persistence.
pub fn fit_global_caviar(y: &[f64], spec: &CaviarSpec) -> Result<CaviarFit> {
    fit_global_caviar_impl(y, spec, None)
}

/// Warm-started variant for rolling refits: searches from the carried
/// coefficients plus a trimmed grid instead of the full six-point grid.
pub fn fit_global_caviar_warm(
    y: &[f64],
    spec: &CaviarSpec,
    warm: &CaviarParams,
) -> Result<CaviarFit> {
    fit_global_caviar_impl(y, spec, Some(warm))
}

fn fit_global_caviar_impl(
    y: &[f64],
    spec: &CaviarSpec,
    warm: Option<&CaviarParams>,
) -> Result<CaviarFit> {
    if y.len() < 100 {
        return Err(Error::invalid(format!(
            "global recursion fit needs at least 100 observations, got {}",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q0_lo = quantile_from_sorted(&sorted, spec.p);
    let q0_hi = quantile_from_sorted(&sorted, 1.0 - spec.p);
    if !(q0_lo < q0_hi) {
        return Err(Error::estimation(format!(
            "degenerate series: sample quantiles at p={} and 1-p coincide",
            spec.p
        )));
    }
    let width = q0_hi - q0_lo;

    let variant = spec.variant;
    let p = spec.p;
    let objective = move |z: &[f64]| -> f64 {
        let params = params_from_surrogate(z, variant);
        objective_value(&params, p, y, q0_lo, q0_hi)
    };

    // Starts: intercepts proportional to the sample quantiles (scale factors
    // 0.05 and 0.2 of the way to the unconditional fixed point), persistence
    // and slope pairs spanning the usual range. A warm start replaces most of
    // the grid.
    let grid: &[(f64, f64, f64)] = if warm.is_some() {
        &[(0.05, 0.9, 0.05), (0.2, 0.7, 0.1)]
    } else {
        &[
            (0.05, 0.7, 0.05),
            (0.05, 0.7, 0.15),
            (0.05, 0.9, 0.05),
            (0.05, 0.9, 0.15),
            (0.2, 0.7, 0.1),
            (0.2, 0.9, 0.1),
        ]
    };
    let mut starts = Vec::new();
    if let Some(w) = warm {
        if w.validate(variant).is_ok() {
            starts.push(surrogate_from_params(w));
        }
    }
    for (c, b0, g0) in grid {
        let (w_lo, w_hi) = if q0_lo < 0.0 && q0_hi > 0.0 {
            (c * q0_lo, c * q0_hi)
        } else {
            (-c * width / 2.0, c * width / 2.0)
        };
        let mut z = vec![
            w_lo,
            softplus_inv(w_hi - w_lo),
            softplus_inv(*b0),
            softplus_inv(*g0),
        ];
        if variant == CaviarVariant::GlobalAs {
            z.push(softplus_inv(*g0));
        }
        starts.push(z);
    }

    let dim = starts[0].len();
    let mut steps = vec![0.3; dim];
    steps[0] = 0.1 * width.max(0.1);
    let opts = NmOptions {
        tol_diameter: 1e-8,
        max_iter: 5000,
    };
    let best = multi_start(&objective, &starts, &steps, opts, |z| softplus(z[2]))
        .ok_or_else(|| {
            Error::estimation(format!(
                "quantile-pair fit failed from every start at p={p} (non-finite objective)"
            ))
        })?;

    let params = params_from_surrogate(&best.x, variant);
    let paths = caviar_recursion(&params, spec, y, q0_lo, q0_hi)?;
    CaviarFit::from_paths(*spec, params, paths, best.fx)
}

/// How the per-`p` forecasts collapse to one number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aggregation {
    MeanOverP,
    MedianOverP,
    SingleP(f64),
}

/// Spread levels, aggregation mode, and the adaptive-ES controls.
#[derive(Debug, Clone)]
pub struct QbsdForecastConfig {
    pub p_set: Vec<f64>,
    pub aggregation: Aggregation,
    pub es_tolerance: f64,
    pub es_n_init: usize,
    pub es_n_max: usize,
}

impl Default for QbsdForecastConfig {
    fn default() -> Self {
        Self {
            p_set: vec![0.05, 0.10, 0.15, 0.20, 0.25],
            aggregation: Aggregation::MeanOverP,
            es_tolerance: 1e-4,
            es_n_init: 4,
            es_n_max: 10_000,
        }
    }
}

impl QbsdForecastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_set.is_empty() {
            return Err(Error::invalid("p_set must be nonempty"));
        }
        for p in &self.p_set {
            if !(*p > 0.0 && *p < 0.5) {
                return Err(Error::invalid(format!("each p must lie in (0, 0.5), got {p}")));
            }
        }
        if !(self.es_tolerance > 0.0) {
            return Err(Error::invalid("es_tolerance must be positive"));
        }
        if self.es_n_init < 2 {
            return Err(Error::invalid("es_n_init must be at least 2"));
        }
        if self.es_n_max <= self.es_n_init {
            return Err(Error::invalid("es_n_max must exceed es_n_init"));
        }
        if let Aggregation::SingleP(p) = self.aggregation {
            if !self.p_set.contains(&p) {
                return Err(Error::invalid(format!(
                    "SingleP({p}) is not a member of p_set"
                )));
            }
        }
        Ok(())
    }
}

/// One `(VaR, ES)` forecast with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskForecast {
    pub var: f64,
    pub es: f64,
    pub alpha: f64,
    pub model_id: String,
    pub window_index: usize,
}

impl RiskForecast {
    /// Hard ordering check; ES may never exceed VaR.
    pub fn validate(&self) -> Result<()> {
        if self.es > self.var {
            return Err(Error::invalid(format!(
                "ES {} exceeds VaR {} at alpha {}",
                self.es, self.var, self.alpha
            )));
        }
        Ok(())
    }

    /// Soft plausibility check: a left-tail VaR at `alpha <= 0.05` normally
    /// sits below the location forecast. Worth a warning, never an error.
    pub fn penetrates_location(&self, mu_next: f64) -> bool {
        self.alpha <= 0.05 && self.var >= mu_next
    }
}

fn aggregate(values: &[f64], p_levels: &[f64], how: Aggregation) -> Result<f64> {
    debug_assert_eq!(values.len(), p_levels.len());
    match how {
        Aggregation::MeanOverP => Ok(values.iter().sum::<f64>() / values.len() as f64),
        Aggregation::MedianOverP => {
            let mut v = values.to_vec();
            v.sort_by(f64::total_cmp);
            Ok(quantile_from_sorted(&v, 0.5))
        }
        Aggregation::SingleP(p) => p_levels
            .iter()
            .position(|x| *x == p)
            .map(|i| values[i])
            .ok_or_else(|| {
                Error::invalid(format!("SingleP({p}) not present among the fitted levels"))
            }),
    }
}

fn check_alpha(alpha: f64, fits: &[CaviarFit]) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 0.05) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 0.05], got {alpha}"
        )));
    }
    let min_p = fits.iter().map(|f| f.spec.p).fold(f64::INFINITY, f64::min);
    if alpha > min_p {
        return Err(Error::invalid(format!(
            "alpha {alpha} exceeds the smallest spread level {min_p}; the rescaled-residual \
             quantile must sit inside the estimated left tail"
        )));
    }
    Ok(())
}

/// Aggregated one-step VaR at level `alpha`, plus the per-`p` components.
pub fn qbsd_var(
    fits: &[CaviarFit],
    location: &LocationPath,
    alpha: f64,
    config: &QbsdForecastConfig,
) -> Result<(f64, Vec<f64>)> {
    config.validate()?;
    if fits.is_empty() {
        return Err(Error::invalid("no fitted spread levels"));
    }
    check_alpha(alpha, fits)?;
    let per_p: Vec<f64> = fits
        .iter()
        .map(|f| location.next + f.spread_next() * f.rescaled_quantile(alpha))
        .collect();
    let levels: Vec<f64> = fits.iter().map(|f| f.spec.p).collect();
    Ok((aggregate(&per_p, &levels, config.aggregation)?, per_p))
}

/// Adaptive Riemann ES and its convergence record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsEstimate {
    pub value: f64,
    /// Number of subdivisions at which the iteration stopped.
    pub n_final: usize,
    pub converged: bool,
}

/// Aggregated one-step ES at level `alpha` by adaptive Riemann averaging of
/// forecast quantiles below `alpha`.
///
/// For each candidate `N` the integral over `τ` is approximated per `p`
/// first (`τ_i = iα/N`), and only then aggregated across `p`; that order
/// keeps each approximation internally coherent. `N` grows geometrically
/// from `es_n_init` until two successive aggregates differ by less than
/// `es_tolerance` or `es_n_max` is reached, in which case the last value is
/// flagged as non-converged.
pub fn qbsd_es(
    fits: &[CaviarFit],
    location: &LocationPath,
    alpha: f64,
    config: &QbsdForecastConfig,
) -> Result<EsEstimate> {
    config.validate()?;
    if fits.is_empty() {
        return Err(Error::invalid("no fitted spread levels"));
    }
    check_alpha(alpha, fits)?;
    let levels: Vec<f64> = fits.iter().map(|f| f.spec.p).collect();

    let es_bar = |n: usize| -> Result<f64> {
        let per_p: Vec<f64> = fits
            .iter()
            .map(|f| {
                let mut acc = 0.0;
                for i in 1..=n {
                    let tau = i as f64 * alpha / n as f64;
                    acc += location.next + f.spread_next() * f.rescaled_quantile(tau);
                }
                acc / n as f64
            })
            .collect();
        aggregate(&per_p, &levels, config.aggregation)
    };

    let mut n = config.es_n_init;
    let mut prev = es_bar(n)?;
    loop {
        let n_next = (2 * n).min(config.es_n_max);
        let cur = es_bar(n_next)?;
        if (cur - prev).abs() < config.es_tolerance {
            return Ok(EsEstimate {
                value: cur,
                n_final: n_next,
                converged: true,
            });
        }
        if n_next >= config.es_n_max {
            return Ok(EsEstimate {
                value: cur,
                n_final: n_next,
                converged: false,
            });
        }
        n = n_next;
        prev = cur;
    }
}

/// Location choice for the full forecasting pipeline; fitted internally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocationChoice {
    Zero,
    ConstantMedian,
    Qar1,
}

/// Output of [`qbsd_forecast`]: the forecasts plus everything needed to
/// audit them.
#[derive(Debug, Clone)]
pub struct QbsdOutcome {
    pub forecasts: Vec<RiskForecast>,
    /// Fits that survived, one per successful `p`.
    pub fits: Vec<CaviarFit>,
    pub location: LocationPath,
    /// Spread levels whose fits failed; forecasts aggregate over the rest.
    pub failed_p: Vec<f64>,
    pub es_converged: bool,
}

pub fn model_id(variant: CaviarVariant, location: LocationChoice) -> String {
    let base = match variant {
        CaviarVariant::GlobalSav => "QbSD-gSAV",
        CaviarVariant::GlobalAs => "QbSD-gAS",
    };
    match location {
        LocationChoice::Zero => base.to_string(),
        LocationChoice::Qar1 => format!("QAR-{base}"),
        LocationChoice::ConstantMedian => format!("MED-{base}"),
    }
}

/// Carried coefficients for warm refits in a rolling backtest.
#[derive(Debug, Clone)]
pub struct QbsdState {
    pub location: Option<crate::quantile::QarParams>,
    /// `(p, coefficients)` per spread level.
    pub params: Vec<(f64, CaviarParams)>,
}

/// Sequential pipeline: fit the location, fit one quantile-pair recursion
/// per spread level on the demeaned series, and emit `(VaR, ES)` per
/// requested level.
///
/// Fits for distinct `p` run concurrently. If some levels fail to fit, the
/// forecasts aggregate over the surviving subset and the failures are
/// reported in the outcome; only a full wipeout is an error.
pub fn qbsd_forecast(
    returns: &[f64],
    variant: CaviarVariant,
    location_choice: LocationChoice,
    alphas: &[f64],
    config: &QbsdForecastConfig,
) -> Result<QbsdOutcome> {
    qbsd_forecast_rolling(returns, variant, location_choice, alphas, config, None, true)
        .map(|(outcome, _)| outcome)
}

/// [`qbsd_forecast`] with carried state for rolling windows.
///
/// With `refit = true` each spread level refits, warm-started from the state
/// when available; with `refit = false` the carried coefficients are merely
/// refiltered on the new window (initial quantiles still come from the
/// window's sample quantiles). The returned state feeds the next window.
pub fn qbsd_forecast_rolling(
    returns: &[f64],
    variant: CaviarVariant,
    location_choice: LocationChoice,
    alphas: &[f64],
    config: &QbsdForecastConfig,
    state: Option<&QbsdState>,
    refit: bool,
) -> Result<(QbsdOutcome, QbsdState)> {
    if returns.len() < 100 {
        return Err(Error::invalid(format!(
            "pipeline needs at least 100 observations, got {}",
            returns.len()
        )));
    }
    config.validate()?;

    let refit = refit || state.is_none();
    let qar_params = match location_choice {
        LocationChoice::Qar1 => Some(match (refit, state.and_then(|s| s.location)) {
            (false, Some(carried)) => carried,
            _ => fit_qar_median(returns)?,
        }),
        _ => None,
    };
    let spec = match location_choice {
        LocationChoice::Zero => LocationSpec::Zero,
        LocationChoice::ConstantMedian => LocationSpec::ConstantMedian,
        LocationChoice::Qar1 => LocationSpec::Qar1(qar_params.expect("set above")),
    };
    let location = location_path(&spec, returns)?;
    let y: Vec<f64> = returns
        .iter()
        .zip(&location.path)
        .map(|(r, m)| r - m)
        .collect();

    let warm_for = |p: f64| -> Option<CaviarParams> {
        state.and_then(|s| {
            s.params
                .iter()
                .find(|(sp, _)| *sp == p)
                .map(|(_, params)| *params)
        })
    };
    let attempts: Vec<(f64, Result<CaviarFit>)> = config
        .p_set
        .par_iter()
        .map(|p| {
            let fit = CaviarSpec::new(variant, *p).and_then(|s| {
                match (refit, warm_for(*p)) {
                    (true, Some(w)) => fit_global_caviar_warm(&y, &s, &w),
                    (true, None) => fit_global_caviar(&y, &s),
                    (false, Some(w)) => refilter(&y, &s, &w),
                    (false, None) => fit_global_caviar(&y, &s),
                }
            });
            (*p, fit)
        })
        .collect();

    let mut fits = Vec::new();
    let mut failed_p = Vec::new();
    let mut first_err = None;
    for (p, attempt) in attempts {
        match attempt {
            Ok(f) => fits.push(f),
            Err(e) => {
                failed_p.push(p);
                first_err.get_or_insert(e);
            }
        }
    }
    if fits.is_empty() {
        return Err(first_err.unwrap_or_else(|| Error::estimation("all spread levels failed")));
    }

    let id = model_id(variant, location_choice);
    let mut forecasts = Vec::with_capacity(alphas.len());
    let mut es_converged = true;
    for alpha in alphas {
        let (var, _) = qbsd_var(&fits, &location, *alpha, config)?;
        let es = qbsd_es(&fits, &location, *alpha, config)?;
        es_converged &= es.converged;
        let forecast = RiskForecast {
            var,
            es: es.value,
            alpha: *alpha,
            model_id: id.clone(),
            window_index: 0,
        };
        forecast.validate()?;
        forecasts.push(forecast);
    }

    let next_state = QbsdState {
        location: qar_params,
        params: fits.iter().map(|f| (f.spec.p, f.params)).collect(),
    };
    Ok((
        QbsdOutcome {
            forecasts,
            fits,
            location,
            failed_p,
            es_converged,
        },
        next_state,
    ))
}

/// Re-runs carried coefficients on a new window without re-optimizing.
fn refilter(y: &[f64], spec: &CaviarSpec, params: &CaviarParams) -> Result<CaviarFit> {
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q0_lo = quantile_from_sorted(&sorted, spec.p);
    let q0_hi = quantile_from_sorted(&sorted, 1.0 - spec.p);
    if !(q0_lo < q0_hi) {
        return Err(Error::estimation("degenerate window quantiles"));
    }
    let paths = caviar_recursion(params, spec, y, q0_lo, q0_hi)?;
    let objective = objective_value(params, spec.p, y, q0_lo, q0_hi);
    CaviarFit::from_paths(*spec, *params, paths, objective)
}
