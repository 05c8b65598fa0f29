//! Forecast scoring and the bootstrap model confidence set.
//!
//! Scores: the quantile (check) score for VaR, the asymmetric-Laplace log
//! score for joint (VaR, ES), and MAE/RMSE against known truths. The
//! confidence-set procedure iteratively eliminates the model with the
//! largest studentized average loss difference until the range statistic's
//! bootstrap p-value clears the confidence level.

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, substream};

/// Quantile score `(r - var)(α - 1{r ≤ var})`; nonnegative, zero only when
/// the forecast equals the realization.
pub fn quantile_score(r: f64, var: f64, alpha: f64) -> f64 {
    (r - var) * (alpha - if r <= var { 1.0 } else { 0.0 })
}

/// Asymmetric-Laplace log score for a joint `(VaR, ES)` forecast with
/// conditional mean `mu`; requires `es < mu`.
pub fn al_log_score(r: f64, mu: f64, var: f64, es: f64, alpha: f64) -> Result<f64> {
    if !(es < mu) {
        return Err(Error::invalid(format!(
            "AL log score requires es < mu, got es={es} mu={mu}"
        )));
    }
    let spread = es - mu;
    Ok(-((alpha - 1.0) / spread).ln() - (r - var) * (alpha - if r <= var { 1.0 } else { 0.0 })
        / (alpha * spread))
}

/// Mean absolute error and root mean squared error of `forecasts` against
/// `truths`.
pub fn mae_rmse(forecasts: &[f64], truths: &[f64]) -> Result<(f64, f64)> {
    if forecasts.len() != truths.len() || forecasts.is_empty() {
        return Err(Error::invalid("series must have equal nonzero length"));
    }
    let n = forecasts.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (f, t) in forecasts.iter().zip(truths) {
        let e = f - t;
        abs += e.abs();
        sq += e * e;
    }
    Ok((abs / n, (sq / n).sqrt()))
}

/// Which score filled a loss panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    QuantileScore,
    AlLogScore,
}

impl ScoreKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreKind::QuantileScore => "qs",
            ScoreKind::AlLogScore => "als",
        }
    }
}

/// Per-date losses for a set of models on a common date grid.
#[derive(Debug, Clone)]
pub struct LossPanel {
    pub model_ids: Vec<String>,
    pub dates: Vec<String>,
    /// Row-major `T_out × M`.
    pub losses: Vec<Vec<f64>>,
    pub kind: ScoreKind,
}

impl LossPanel {
    pub fn new(
        model_ids: Vec<String>,
        dates: Vec<String>,
        losses: Vec<Vec<f64>>,
        kind: ScoreKind,
    ) -> Result<Self> {
        if model_ids.len() < 2 {
            return Err(Error::invalid("a loss panel needs at least two models"));
        }
        if losses.len() != dates.len() {
            return Err(Error::invalid("loss rows must match the date grid"));
        }
        for row in &losses {
            if row.len() != model_ids.len() {
                return Err(Error::invalid("ragged loss panel"));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("loss panel contains non-finite entries"));
            }
        }
        Ok(Self {
            model_ids,
            dates,
            losses,
            kind,
        })
    }

    pub fn n_dates(&self) -> usize {
        self.losses.len()
    }

    pub fn n_models(&self) -> usize {
        self.model_ids.len()
    }

    fn column_mean(&self, j: usize, rows: Option<&[usize]>) -> f64 {
        match rows {
            None => self.losses.iter().map(|r| r[j]).sum::<f64>() / self.n_dates() as f64,
            Some(idx) => idx.iter().map(|i| self.losses[*i][j]).sum::<f64>() / idx.len() as f64,
        }
    }
}

/// Bootstrap controls for the confidence-set procedure.
#[derive(Debug, Clone, Copy)]
pub struct BootstrapConfig {
    pub iterations: usize,
    /// Moving-block length; 0 picks the default `ceil(T_out^{1/3})`.
    pub block_length: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            block_length: 0,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    fn resolve_block(&self, t_out: usize) -> Result<usize> {
        let block = if self.block_length == 0 {
            (t_out as f64).powf(1.0 / 3.0).ceil() as usize
        } else {
            self.block_length
        };
        if self.iterations < 100 {
            return Err(Error::invalid("bootstrap needs at least 100 iterations"));
        }
        if block == 0 || block > t_out {
            return Err(Error::invalid(format!(
                "block length {block} incompatible with {t_out} dates"
            )));
        }
        Ok(block)
    }
}

/// Per-model record in a confidence-set result.
#[derive(Debug, Clone)]
pub struct McsEntry {
    pub model_id: String,
    /// Elimination p-value after the standard monotonization.
    pub p_value: f64,
    pub survives: bool,
    /// Survivors are ranked 1..S by their final studentized statistic;
    /// eliminated models are all assigned rank M, the panel width.
    pub rank: usize,
}

/// Output of the elimination procedure.
#[derive(Debug, Clone)]
pub struct McsResult {
    pub entries: Vec<McsEntry>,
    /// Model ids in the order they were eliminated (survivors excluded).
    pub elimination_order: Vec<String>,
    pub confidence: f64,
}

impl McsResult {
    pub fn survivors(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.survives)
            .map(|e| e.model_id.as_str())
            .collect()
    }
}

/// Studentized value with the zero-variance conventions that make degenerate
/// panels behave: zero difference with zero spread counts as exactly tied,
/// a nonzero constant difference as infinitely significant.
fn studentize(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else if diff > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

/// Moving-block resample of `0..t_out`, `t_out` indices long.
fn block_indices(rng: &mut crate::rng::Rng, t_out: usize, block: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(t_out);
    while idx.len() < t_out {
        let start = rng.random_range(0..=(t_out - block));
        for k in 0..block {
            if idx.len() == t_out {
                break;
            }
            idx.push(start + k);
        }
    }
    idx
}

/// Model confidence set by iterative elimination.
///
/// Pairwise mean-loss-difference t-statistics are studentized with
/// moving-block-bootstrap standard errors; the range statistic is the
/// largest absolute pairwise t. Its null distribution comes from the same
/// bootstrap draws with recentered differences. While the p-value falls
/// short of `1 - confidence`, the model with the largest studentized average
/// loss difference versus the others leaves the set. Elimination p-values
/// are monotonized along the sequence, so survivor sets grow with the
/// confidence level on identical draws.
pub fn mcs(panel: &LossPanel, confidence: f64, config: &BootstrapConfig) -> Result<McsResult> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid(format!(
            "confidence must be in (0,1), got {confidence}"
        )));
    }
    let m = panel.n_models();
    let t_out = panel.n_dates();
    if m < 2 {
        return Err(Error::invalid("confidence set needs at least two models"));
    }
    let block = config.resolve_block(t_out)?;

    // Bootstrap column means, drawn once and reused across elimination
    // rounds; iteration-indexed substreams keep the reduction deterministic.
    let full_means: Vec<f64> = (0..m).map(|j| panel.column_mean(j, None)).collect();
    let boot_means: Vec<Vec<f64>> = (0..config.iterations)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_from_seed(substream(config.seed, "mcs-bootstrap", b as u64));
            let idx = block_indices(&mut rng, t_out, block);
            (0..m).map(|j| panel.column_mean(j, Some(&idx))).collect()
        })
        .collect();

    // Bootstrap standard error of the mean-loss difference for a pair.
    let pair_se = |i: usize, j: usize| -> f64 {
        let d = full_means[i] - full_means[j];
        let var = boot_means
            .iter()
            .map(|bm| {
                let dev = (bm[i] - bm[j]) - d;
                dev * dev
            })
            .sum::<f64>()
            / boot_means.len() as f64;
        var.sqrt()
    };

    let mut active: Vec<usize> = (0..m).collect();
    let mut elimination: Vec<(usize, f64)> = Vec::new(); // (model index, raw p)

    while active.len() > 1 {
        // Range statistic over the active set.
        let mut t_range = 0.0_f64;
        let mut ses = vec![vec![0.0; active.len()]; active.len()];
        for a in 0..active.len() {
            for b in (a + 1)..active.len() {
                let (i, j) = (active[a], active[b]);
                let se = pair_se(i, j);
                ses[a][b] = se;
                let t = studentize(full_means[i] - full_means[j], se).abs();
                t_range = t_range.max(t);
            }
        }
        // Null distribution under recentered differences.
        let mut exceed = 0usize;
        for bm in &boot_means {
            let mut t_star = 0.0_f64;
            for a in 0..active.len() {
                for b in (a + 1)..active.len() {
                    let (i, j) = (active[a], active[b]);
                    let recentered = (bm[i] - bm[j]) - (full_means[i] - full_means[j]);
                    let t = studentize(recentered, ses[a][b]).abs();
                    t_star = t_star.max(t);
                }
            }
            if t_star >= t_range {
                exceed += 1;
            }
        }
        let p = exceed as f64 / boot_means.len() as f64;

        // Studentized average loss difference of each model versus the rest.
        let avg_stats: Vec<f64> = active
            .iter()
            .map(|&i| {
                let others: Vec<usize> = active.iter().copied().filter(|&j| j != i).collect();
                let d_full = full_means[i]
                    - others.iter().map(|&j| full_means[j]).sum::<f64>() / others.len() as f64;
                let var = boot_means
                    .iter()
                    .map(|bm| {
                        let d_b = bm[i]
                            - others.iter().map(|&j| bm[j]).sum::<f64>() / others.len() as f64;
                        let dev = d_b - d_full;
                        dev * dev
                    })
                    .sum::<f64>()
                    / boot_means.len() as f64;
                studentize(d_full, var.sqrt())
            })
            .collect();

        let worst_pos = avg_stats
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(pos, _)| pos)
            .expect("active set nonempty");

        elimination.push((active[worst_pos], p));
        active.remove(worst_pos);
    }

    // Monotonized p-values: a model's confidence-set p-value is the largest
    // elimination p-value up to and including its own round; the final
    // survivor gets 1.
    let mut p_values = vec![1.0_f64; m];
    let mut running = 0.0_f64;
    for (idx, p) in &elimination {
        running = running.max(*p);
        p_values[*idx] = running;
    }

    let threshold = 1.0 - confidence;
    let survives: Vec<bool> = (0..m).map(|i| p_values[i] >= threshold).collect();

    // Rank survivors by the studentized average statistic computed on the
    // survivor set itself.
    let survivor_idx: Vec<usize> = (0..m).filter(|i| survives[*i]).collect();
    let mut survivor_stats: Vec<(usize, f64)> = if survivor_idx.len() == 1 {
        vec![(survivor_idx[0], 0.0)]
    } else {
        survivor_idx
            .iter()
            .map(|&i| {
                let others: Vec<usize> =
                    survivor_idx.iter().copied().filter(|&j| j != i).collect();
                let d_full = full_means[i]
                    - others.iter().map(|&j| full_means[j]).sum::<f64>() / others.len() as f64;
                let var = boot_means
                    .iter()
                    .map(|bm| {
                        let d_b = bm[i]
                            - others.iter().map(|&j| bm[j]).sum::<f64>() / others.len() as f64;
                        let dev = d_b - d_full;
                        dev * dev
                    })
                    .sum::<f64>()
                    / boot_means.len() as f64;
                (i, studentize(d_full, var.sqrt()))
            })
            .collect()
    };
    survivor_stats.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut ranks = vec![m; m];
    for (pos, (i, _)) in survivor_stats.iter().enumerate() {
        ranks[*i] = pos + 1;
    }

    let entries = (0..m)
        .map(|i| McsEntry {
            model_id: panel.model_ids[i].clone(),
            p_value: p_values[i],
            survives: survives[i],
            rank: ranks[i],
        })
        .collect();
    let elimination_order = elimination
        .iter()
        .map(|(i, _)| panel.model_ids[*i].clone())
        .collect();
    Ok(McsResult {
        entries,
        elimination_order,
        confidence,
    })
}
