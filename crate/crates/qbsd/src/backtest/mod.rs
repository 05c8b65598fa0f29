//! Rolling-window backtesting engine: price ingestion, the model registry,
//! per-date forecast persistence, scoring, and the simulation-study driver.

pub mod io;
pub mod registry;
mod simstudy;

pub use chrono::NaiveDate;
use rayon::prelude::*;

use crate::caviar::QbsdForecastConfig;
use crate::error::{Error, Result};
use crate::eval::{al_log_score, mcs, quantile_score, BootstrapConfig, LossPanel, McsResult, ScoreKind};
use registry::{drive_model, FitFlag, ModelState, RegistryModel};

pub use simstudy::{run_simulation_study, SimStudyGrid, SimStudyRow, SimStudyTable};

/// Percent log returns with their calendar dates.
#[derive(Debug, Clone)]
pub struct ReturnSeries {
    pub symbol: String,
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(symbol: String, dates: Vec<NaiveDate>, returns: Vec<f64>) -> Result<Self> {
        if dates.len() != returns.len() {
            return Err(Error::invalid("dates and returns must align"));
        }
        if returns.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("returns must be finite"));
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid("dates must be strictly increasing"));
            }
        }
        Ok(Self {
            symbol,
            dates,
            returns,
        })
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// Engine controls for one backtest run.
#[derive(Debug, Clone)]
pub struct BacktestConfig {
    /// Estimation-window length R.
    pub window: usize,
    pub alphas: Vec<f64>,
    pub models: Vec<RegistryModel>,
    /// Refit cadence in days; parameters are carried between refits.
    pub refit_every: usize,
    pub seed: u64,
    /// Spread levels and adaptive-ES controls for the scale-dynamics models.
    pub qbsd: QbsdForecastConfig,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window: 1250,
            alphas: vec![0.01, 0.025, 0.05],
            models: RegistryModel::all(),
            refit_every: 1,
            seed: 0,
            qbsd: QbsdForecastConfig::default(),
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 250 {
            return Err(Error::invalid("window must be at least 250"));
        }
        if self.alphas.is_empty() {
            return Err(Error::invalid("alphas must be nonempty"));
        }
        for a in &self.alphas {
            if !(*a > 0.0 && *a <= 0.05) {
                return Err(Error::invalid(format!("alpha must lie in (0, 0.05], got {a}")));
            }
        }
        if self.refit_every == 0 {
            return Err(Error::invalid("refit_every must be at least 1"));
        }
        if self.models.is_empty() {
            return Err(Error::invalid("model list must be nonempty"));
        }
        self.qbsd.validate()
    }
}

/// Row status in a forecast table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    Ok,
    /// Fit failed; the previous window's forecast was carried forward.
    Carried,
    /// Some spread levels failed; aggregates cover the surviving subset.
    Fallback,
    /// Adaptive ES stopped at its subdivision cap without stabilizing.
    EsMax,
}

impl Flag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Flag::Ok => "ok",
            Flag::Carried => "carried",
            Flag::Fallback => "fallback",
            Flag::EsMax => "es_max",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(Flag::Ok),
            "carried" => Some(Flag::Carried),
            "fallback" => Some(Flag::Fallback),
            "es_max" => Some(Flag::EsMax),
            _ => None,
        }
    }
}

/// One `(date, model, alpha)` forecast record.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub date: NaiveDate,
    pub model: String,
    pub alpha: f64,
    pub var: f64,
    pub es: f64,
    pub realized: f64,
    pub window: usize,
    pub flag: Flag,
}

impl ForecastRow {
    /// Soft plausibility check: a left-tail VaR at `alpha ≤ 0.05` normally
    /// sits below zero on return data. Worth a warning, never an error.
    pub fn penetrates_location_zero(&self) -> bool {
        self.alpha <= 0.05 && self.var >= 0.0
    }
}

/// Forecasts plus the fits that produced nothing (no earlier forecast to
/// carry); row count is `T_out × |models| × |alphas| − skipped`.
#[derive(Debug, Clone, Default)]
pub struct ForecastTable {
    pub rows: Vec<ForecastRow>,
    /// `(window, model, reason)` for windows that produced no row.
    pub skipped: Vec<(usize, String, String)>,
}

/// Runs every model through the rolling windows.
///
/// Each out-of-sample date `t` is forecast from the `window` most recent
/// returns; models refit on the configured cadence and carry parameters in
/// between. A failed fit reuses the previous window's forecast and flags the
/// row; a failure with nothing to carry is recorded in `skipped`. Models fan
/// out to the worker pool; each model walks its windows sequentially, so
/// output is independent of scheduling and rows sort by `(date, model, α)`.
pub fn run_rolling(series: &ReturnSeries, config: &BacktestConfig) -> Result<ForecastTable> {
    config.validate()?;
    let t_total = series.len();
    if t_total <= config.window {
        return Err(Error::invalid(format!(
            "series length {t_total} must exceed the window {}",
            config.window
        )));
    }
    let t_out = t_total - config.window;

    let per_model: Vec<(Vec<ForecastRow>, Vec<(usize, String, String)>)> = config
        .models
        .par_iter()
        .map(|model| {
            let id = model.id();
            let mut rows = Vec::with_capacity(t_out * config.alphas.len());
            let mut skipped = Vec::new();
            let mut state = ModelState::Empty;
            let mut fitted_once = false;
            let mut last_good: Option<Vec<(f64, f64, f64)>> = None; // (alpha, var, es)
            for w in 0..t_out {
                let slice = &series.returns[w..w + config.window];
                let refit = !fitted_once || w % config.refit_every == 0;
                let date = series.dates[w + config.window];
                let realized = series.returns[w + config.window];
                match drive_model(
                    model,
                    slice,
                    &config.alphas,
                    &config.qbsd,
                    std::mem::take(&mut state),
                    refit,
                ) {
                    Ok((forecasts, next_state, fit_flag)) => {
                        state = next_state;
                        fitted_once = true;
                        let flag = match fit_flag {
                            FitFlag::Clean => Flag::Ok,
                            FitFlag::PartialLevels => Flag::Fallback,
                            FitFlag::EsUnconverged => Flag::EsMax,
                        };
                        last_good = Some(
                            forecasts
                                .iter()
                                .map(|f| (f.alpha, f.var, f.es))
                                .collect(),
                        );
                        for f in forecasts {
                            rows.push(ForecastRow {
                                date,
                                model: id.clone(),
                                alpha: f.alpha,
                                var: f.var,
                                es: f.es,
                                realized,
                                window: w,
                                flag,
                            });
                        }
                    }
                    Err(e) => match &last_good {
                        Some(previous) => {
                            for (alpha, var, es) in previous {
                                rows.push(ForecastRow {
                                    date,
                                    model: id.clone(),
                                    alpha: *alpha,
                                    var: *var,
                                    es: *es,
                                    realized,
                                    window: w,
                                    flag: Flag::Carried,
                                });
                            }
                        }
                        None => skipped.push((w, id.clone(), e.to_string())),
                    },
                }
            }
            (rows, skipped)
        })
        .collect();

    let mut table = ForecastTable::default();
    for (rows, skipped) in per_model {
        table.rows.extend(rows);
        table.skipped.extend(skipped);
    }
    table.rows.sort_by(|a, b| {
        a.date
            .cmp(&b.date)
            .then_with(|| a.model.cmp(&b.model))
            .then_with(|| a.alpha.total_cmp(&b.alpha))
    });
    table
        .skipped
        .sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    Ok(table)
}

/// Scoring and confidence-set evaluation of a persisted forecast table at
/// one probability level.
///
/// Losses are computed on the dates every model covers (the intersection);
/// the joint score treats the conditional mean as zero, which matches every
/// zero-location model in the registry. Returns the loss panel, the
/// confidence-set result, and per-model mean scores.
pub fn evaluate_run(
    table: &ForecastTable,
    score: ScoreKind,
    alpha: f64,
    confidence: f64,
    bootstrap: &BootstrapConfig,
) -> Result<(LossPanel, McsResult, Vec<(String, f64)>)> {
    let mut models: Vec<String> = table
        .rows
        .iter()
        .filter(|r| (r.alpha - alpha).abs() < 1e-9)
        .map(|r| r.model.clone())
        .collect();
    models.sort();
    models.dedup();
    if models.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least two models with forecasts at alpha {alpha}"
        )));
    }

    // date -> per-model (var, es, realized)
    let mut by_model: Vec<std::collections::BTreeMap<NaiveDate, (f64, f64, f64)>> =
        vec![Default::default(); models.len()];
    for r in &table.rows {
        if (r.alpha - alpha).abs() >= 1e-9 {
            continue;
        }
        let j = models.binary_search(&r.model).expect("collected above");
        by_model[j].insert(r.date, (r.var, r.es, r.realized));
    }
    let mut common: Vec<NaiveDate> = by_model[0].keys().copied().collect();
    for m in &by_model[1..] {
        common.retain(|d| m.contains_key(d));
    }
    if common.is_empty() {
        return Err(Error::invalid(
            "models share no common forecast dates at this level",
        ));
    }

    let mut losses = Vec::with_capacity(common.len());
    for date in &common {
        let mut row = Vec::with_capacity(models.len());
        for m in &by_model {
            let (var, es, realized) = m[date];
            let loss = match score {
                ScoreKind::QuantileScore => quantile_score(realized, var, alpha),
                ScoreKind::AlLogScore => al_log_score(realized, 0.0, var, es, alpha)?,
            };
            row.push(loss);
        }
        losses.push(row);
    }
    let dates: Vec<String> = common.iter().map(|d| d.format("%Y-%m-%d").to_string()).collect();
    let panel = LossPanel::new(models.clone(), dates, losses, score)?;

    let result = mcs(&panel, confidence, bootstrap)?;
    let mean_scores: Vec<(String, f64)> = models
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let mean = panel.losses.iter().map(|r| r[j]).sum::<f64>() / panel.n_dates() as f64;
            (m.clone(), mean)
        })
        .collect();
    Ok((panel, result, mean_scores))
}
