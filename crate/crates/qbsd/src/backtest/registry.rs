//! The 28-model registry: canonical ids, parsing, and a uniform
//! fit-and-forecast driver with carried state for rolling refits.

use crate::caviar::{
    qbsd_forecast_rolling, CaviarVariant, LocationChoice, QbsdForecastConfig, QbsdState,
    RiskForecast,
};
use crate::error::{Error, Result};
use crate::garch::{
    self, fit_garch_with_starts, garch_forecast, GarchFamily, GarchModelSpec, GarchParams,
    InnovationKind, MeanSpec,
};
use crate::joint_ves::{
    al_forecast, fit_al_model, fit_al_model_warm, fit_gas_fz0, fit_gas_fz0_warm, gas_forecast,
    AlEsLink, AlMeanSpec, AlModelParams, AlVarDynamics, GasParams,
};

/// A model the backtesting engine can run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegistryModel {
    Qbsd {
        variant: CaviarVariant,
        qar_median: bool,
    },
    Garch(GarchModelSpec),
    Al {
        var_dyn: AlVarDynamics,
        es_link: AlEsLink,
        mean: AlMeanSpec,
    },
    Gas {
        mean: AlMeanSpec,
    },
}

impl RegistryModel {
    /// Canonical id, matching the naming used in forecast tables.
    pub fn id(&self) -> String {
        match self {
            RegistryModel::Qbsd {
                variant,
                qar_median,
            } => {
                let choice = if *qar_median {
                    LocationChoice::Qar1
                } else {
                    LocationChoice::Zero
                };
                crate::caviar::model_id(*variant, choice)
            }
            RegistryModel::Garch(spec) => garch::model_id(spec),
            RegistryModel::Al {
                var_dyn,
                es_link,
                mean,
            } => {
                let link = match es_link {
                    AlEsLink::Multiplicative => "Mult",
                    AlEsLink::Autoregressive => "AR",
                };
                let dynamics = match var_dyn {
                    AlVarDynamics::Sav => "SAV",
                    AlVarDynamics::As => "AS",
                };
                let prefix = if *mean == AlMeanSpec::Ar1 { "AR-" } else { "" };
                format!("{prefix}AL_{link}-{dynamics}")
            }
            RegistryModel::Gas { mean } => {
                if *mean == AlMeanSpec::Ar1 {
                    "AR-GAS".to_string()
                } else {
                    "GAS".to_string()
                }
            }
        }
    }

    pub fn parse(id: &str) -> Result<Self> {
        Self::all()
            .into_iter()
            .find(|m| m.id() == id)
            .ok_or_else(|| Error::invalid(format!("unknown model id '{id}'")))
    }

    /// Every registered model, in the order the forecast-comparison tables
    /// list them.
    pub fn all() -> Vec<RegistryModel> {
        let mut out = Vec::with_capacity(28);
        for mean in [MeanSpec::Zero, MeanSpec::Ar1] {
            for family in [GarchFamily::Garch, GarchFamily::GjrGarch] {
                for dist in [
                    InnovationKind::Normal,
                    InnovationKind::StudentT,
                    InnovationKind::SkewedT,
                ] {
                    out.push(RegistryModel::Garch(
                        GarchModelSpec::new(family, dist, mean).expect("valid combination"),
                    ));
                }
            }
            out.push(RegistryModel::Garch(
                GarchModelSpec::new(GarchFamily::Egarch, InnovationKind::Normal, mean)
                    .expect("valid combination"),
            ));
        }
        for mean in [AlMeanSpec::Zero, AlMeanSpec::Ar1] {
            out.push(RegistryModel::Gas { mean });
        }
        for mean in [AlMeanSpec::Zero, AlMeanSpec::Ar1] {
            for es_link in [AlEsLink::Multiplicative, AlEsLink::Autoregressive] {
                for var_dyn in [AlVarDynamics::Sav, AlVarDynamics::As] {
                    out.push(RegistryModel::Al {
                        var_dyn,
                        es_link,
                        mean,
                    });
                }
            }
        }
        for qar_median in [false, true] {
            for variant in [CaviarVariant::GlobalSav, CaviarVariant::GlobalAs] {
                out.push(RegistryModel::Qbsd {
                    variant,
                    qar_median,
                });
            }
        }
        out
    }
}

/// Carried coefficients between refits, one variant per family.
#[derive(Debug, Clone, Default)]
pub enum ModelState {
    #[default]
    Empty,
    Qbsd(QbsdState),
    Garch(GarchParams),
    /// One fit per requested level, keyed by the level's bits.
    Al(Vec<(u64, AlModelParams)>),
    Gas(Vec<(u64, GasParams)>),
}

/// Whether a window's forecasts needed any fallback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitFlag {
    Clean,
    /// Some spread levels failed; aggregates cover the rest.
    PartialLevels,
    /// The adaptive ES hit its subdivision cap without stabilizing.
    EsUnconverged,
}

/// Fits (or refilters) one model on a window and forecasts every level.
///
/// State is consumed and replaced so rolling windows can carry parameters;
/// pass `ModelState::Empty` and `refit = true` for a standalone fit.
pub fn drive_model(
    model: &RegistryModel,
    returns: &[f64],
    alphas: &[f64],
    config: &QbsdForecastConfig,
    state: ModelState,
    refit: bool,
) -> Result<(Vec<RiskForecast>, ModelState, FitFlag)> {
    match model {
        RegistryModel::Qbsd {
            variant,
            qar_median,
        } => {
            let choice = if *qar_median {
                LocationChoice::Qar1
            } else {
                LocationChoice::Zero
            };
            let carried = match &state {
                ModelState::Qbsd(s) => Some(s),
                _ => None,
            };
            let (outcome, next) =
                qbsd_forecast_rolling(returns, *variant, choice, alphas, config, carried, refit)?;
            let flag = if !outcome.failed_p.is_empty() {
                FitFlag::PartialLevels
            } else if !outcome.es_converged {
                FitFlag::EsUnconverged
            } else {
                FitFlag::Clean
            };
            Ok((outcome.forecasts, ModelState::Qbsd(next), flag))
        }
        RegistryModel::Garch(spec) => {
            let carried = match state {
                ModelState::Garch(p) => Some(p),
                _ => None,
            };
            let params = match (refit, carried) {
                (false, Some(p)) => p,
                (_, carried) => {
                    let warm: Vec<GarchParams> = carried.into_iter().collect();
                    fit_garch_with_starts(returns, spec, &warm)?
                }
            };
            let forecasts = alphas
                .iter()
                .map(|a| garch_forecast(&params, spec, returns, *a))
                .collect::<Result<Vec<_>>>()?;
            Ok((forecasts, ModelState::Garch(params), FitFlag::Clean))
        }
        RegistryModel::Al {
            var_dyn,
            es_link,
            mean,
        } => {
            let carried = match state {
                ModelState::Al(v) => v,
                _ => Vec::new(),
            };
            let id = model.id();
            let mut forecasts = Vec::with_capacity(alphas.len());
            let mut next = Vec::with_capacity(alphas.len());
            for alpha in alphas {
                let key = alpha.to_bits();
                let warm = carried.iter().find(|(k, _)| *k == key).map(|(_, p)| p);
                let params = match (refit, warm) {
                    (false, Some(p)) => *p,
                    (true, Some(p)) => {
                        fit_al_model_warm(returns, *alpha, *var_dyn, *es_link, *mean, p)?
                    }
                    (_, None) => fit_al_model(returns, *alpha, *var_dyn, *es_link, *mean)?,
                };
                forecasts.push(al_forecast(&params, returns, *alpha, id.clone())?);
                next.push((key, params));
            }
            Ok((forecasts, ModelState::Al(next), FitFlag::Clean))
        }
        RegistryModel::Gas { mean } => {
            let carried = match state {
                ModelState::Gas(v) => v,
                _ => Vec::new(),
            };
            let id = model.id();
            let mut forecasts = Vec::with_capacity(alphas.len());
            let mut next = Vec::with_capacity(alphas.len());
            for alpha in alphas {
                let key = alpha.to_bits();
                let warm = carried.iter().find(|(k, _)| *k == key).map(|(_, p)| p);
                let params = match (refit, warm) {
                    (false, Some(p)) => *p,
                    (true, Some(p)) => fit_gas_fz0_warm(returns, *alpha, *mean, p)?,
                    (_, None) => fit_gas_fz0(returns, *alpha, *mean)?,
                };
                forecasts.push(gas_forecast(&params, returns, *alpha, id.clone())?);
                next.push((key, params));
            }
            Ok((forecasts, ModelState::Gas(next), FitFlag::Clean))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_28_unique_ids() {
        let models = RegistryModel::all();
        assert_eq!(models.len(), 28);
        let mut ids: Vec<String> = models.iter().map(|m| m.id()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 28, "duplicate ids in the registry");
    }

    #[test]
    fn expected_ids_present() {
        let ids: Vec<String> = RegistryModel::all().iter().map(|m| m.id()).collect();
        for expected in [
            "QbSD-gSAV",
            "QbSD-gAS",
            "QAR-QbSD-gSAV",
            "QAR-QbSD-gAS",
            "GARCH-normal",
            "GARCH-t",
            "GARCH-skew-t",
            "GJR-GARCH-skew-t",
            "EGARCH",
            "AR-EGARCH",
            "AR-GJR-GARCH-skew-t",
            "GAS",
            "AR-GAS",
            "AL_Mult-SAV",
            "AL_Mult-AS",
            "AL_AR-SAV",
            "AL_AR-AS",
            "AR-AL_Mult-AS",
        ] {
            assert!(ids.iter().any(|i| i == expected), "missing {expected}");
        }
    }

    #[test]
    fn parse_round_trips() {
        for model in RegistryModel::all() {
            let parsed = RegistryModel::parse(&model.id()).unwrap();
            assert_eq!(parsed.id(), model.id());
        }
        assert!(RegistryModel::parse("GARCH-cauchy").is_err());
    }
}
