//! File formats: price CSV in, forecast/loss/report CSV out, and the
//! key = value config format.
//!
//! Floats are written with 10 significant digits through [`fmt_sig`], so
//! identical runs produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;

use crate::backtest::{BacktestConfig, Flag, ForecastRow, ForecastTable, ReturnSeries};
use crate::backtest::registry::RegistryModel;
use crate::error::{Error, Result};
use crate::eval::{LossPanel, McsResult};

/// Decimal rendering with 10 significant digits, in the style of C's
/// `%.10g`: fixed notation for moderate exponents, scientific otherwise,
/// trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.9e}", x); // d.ddddddddde<exp>
    let (mantissa, exp_str) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp_str.parse().expect("valid exponent");
    let neg = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), 10);

    let body = if (-4..10).contains(&exp) {
        if exp >= 0 {
            let split = (exp + 1) as usize;
            let int_part = &digits[..split];
            let frac = digits[split..].trim_end_matches('0');
            if frac.is_empty() {
                int_part.to_string()
            } else {
                format!("{int_part}.{frac}")
            }
        } else {
            let zeros = "0".repeat((-exp - 1) as usize);
            let frac = format!("{zeros}{digits}");
            let frac = frac.trim_end_matches('0');
            format!("0.{frac}")
        }
    } else {
        let frac = digits[1..].trim_end_matches('0');
        if frac.is_empty() {
            format!("{}e{}", &digits[..1], exp)
        } else {
            format!("{}.{}e{}", &digits[..1], frac, exp)
        }
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Reads a `date,adj_close` price file and converts it to percent log
/// returns; the leading price is consumed by the differencing.
pub fn load_prices(path: &Path) -> Result<ReturnSeries> {
    let text = std::fs::read_to_string(path)?;
    let symbol = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".to_string());

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut prices: Vec<f64> = Vec::new();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != "date,adj_close" {
                return Err(parse_err(
                    line_no,
                    format!("expected header 'date,adj_close', found '{line}'"),
                ));
            }
            saw_header = true;
            continue;
        }
        let Some((date_str, price_str)) = line.split_once(',') else {
            return Err(parse_err(line_no, "expected two comma-separated fields"));
        };
        if price_str.contains(',') {
            return Err(parse_err(line_no, "expected exactly two fields"));
        }
        let date = NaiveDate::parse_from_str(date_str, "%Y-%m-%d")
            .map_err(|e| parse_err(line_no, format!("bad date '{date_str}': {e}")))?;
        let price: f64 = price_str
            .parse()
            .map_err(|e| parse_err(line_no, format!("bad price '{price_str}': {e}")))?;
        if !(price > 0.0) || !price.is_finite() {
            return Err(parse_err(line_no, format!("non-positive price {price}")));
        }
        if let Some(last) = dates.last() {
            if date <= *last {
                return Err(parse_err(
                    line_no,
                    format!("dates must be strictly increasing ({last} then {date})"),
                ));
            }
        }
        dates.push(date);
        prices.push(price);
    }
    if !saw_header {
        return Err(parse_err(1, "empty file"));
    }
    if prices.len() < 2 {
        return Err(parse_err(prices.len() + 1, "need at least two prices"));
    }
    let returns: Vec<f64> = (1..prices.len())
        .map(|t| 100.0 * (prices[t] / prices[t - 1]).ln())
        .collect();
    ReturnSeries::new(symbol, dates[1..].to_vec(), returns)
}

/// Writes the forecast table with the fixed column schema.
pub fn forecast_table_to_csv(table: &ForecastTable) -> String {
    let mut out = String::from("date,model,alpha,var,es,realized,window,flag\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.date.format("%Y-%m-%d"),
            r.model,
            fmt_sig(r.alpha),
            fmt_sig(r.var),
            fmt_sig(r.es),
            fmt_sig(r.realized),
            r.window,
            r.flag.as_str()
        );
    }
    out
}

/// Reads a forecast table produced by [`forecast_table_to_csv`].
pub fn forecast_table_from_csv(text: &str) -> Result<ForecastTable> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != "date,model,alpha,var,es,realized,window,flag" {
                return Err(parse_err(line_no, "unexpected forecast-table header"));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(parse_err(line_no, "expected 8 fields"));
        }
        let date = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d")
            .map_err(|e| parse_err(line_no, format!("bad date: {e}")))?;
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| parse_err(line_no, format!("bad {what} '{s}': {e}")))
        };
        rows.push(ForecastRow {
            date,
            model: fields[1].to_string(),
            alpha: parse_f(fields[2], "alpha")?,
            var: parse_f(fields[3], "var")?,
            es: parse_f(fields[4], "es")?,
            realized: parse_f(fields[5], "realized")?,
            window: fields[6]
                .parse()
                .map_err(|e| parse_err(line_no, format!("bad window: {e}")))?,
            flag: Flag::parse(fields[7])
                .ok_or_else(|| parse_err(line_no, format!("bad flag '{}'", fields[7])))?,
        });
    }
    if !saw_header {
        return Err(parse_err(1, "empty forecast table"));
    }
    Ok(ForecastTable {
        rows,
        skipped: Vec::new(),
    })
}

/// `date,model,loss` rows of a loss panel.
pub fn loss_panel_to_csv(panel: &LossPanel) -> String {
    let mut out = String::from("date,model,loss\n");
    for (t, date) in panel.dates.iter().enumerate() {
        for (j, model) in panel.model_ids.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", date, model, fmt_sig(panel.losses[t][j]));
        }
    }
    out
}

/// `model,rank,pvalue,survives` report of a confidence-set result.
pub fn mcs_report_to_csv(result: &McsResult) -> String {
    let mut entries = result.entries.clone();
    entries.sort_by(|a, b| a.rank.cmp(&b.rank).then(a.model_id.cmp(&b.model_id)));
    let mut out = String::from("model,rank,pvalue,survives\n");
    for e in &entries {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            e.model_id,
            e.rank,
            fmt_sig(e.p_value),
            if e.survives { "true" } else { "false" }
        );
    }
    out
}

/// `model,mean_score` summary, sorted by score.
pub fn mean_scores_to_csv(scores: &[(String, f64)]) -> String {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut out = String::from("model,mean_score\n");
    for (model, score) in &sorted {
        let _ = writeln!(out, "{},{}", model, fmt_sig(*score));
    }
    out
}

/// Parses the `key = value` config format (`#` starts a comment; unknown
/// keys are errors) into a [`BacktestConfig`].
pub fn parse_backtest_config(text: &str) -> Result<BacktestConfig> {
    let mut config = BacktestConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        let line = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(parse_err(line_no, "expected 'key = value'"));
        };
        let key = key.trim();
        let value = value.trim();
        match key {
            "window" => {
                config.window = value
                    .parse()
                    .map_err(|e| parse_err(line_no, format!("bad window: {e}")))?;
            }
            "alphas" => {
                config.alphas = parse_float_list(value, line_no)?;
            }
            "models" => {
                config.models = value
                    .split(',')
                    .map(|s| RegistryModel::parse(s.trim()))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| parse_err(line_no, e.to_string()))?;
            }
            "refit_every" => {
                config.refit_every = value
                    .parse()
                    .map_err(|e| parse_err(line_no, format!("bad refit_every: {e}")))?;
            }
            "seed" => {
                config.seed = value
                    .parse()
                    .map_err(|e| parse_err(line_no, format!("bad seed: {e}")))?;
            }
            other => {
                return Err(parse_err(line_no, format!("unknown key '{other}'")));
            }
        }
    }
    config.validate()?;
    Ok(config)
}

pub(crate) fn parse_float_list(value: &str, line_no: usize) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| parse_err(line_no, format!("bad number '{}': {e}", s.trim())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn sig_format_cases() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(0.025), "0.025");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(100.0), "100");
        assert_eq!(fmt_sig(0.9950330853), "0.9950330853");
        assert_eq!(fmt_sig(-2.345678901234), "-2.345678901");
        assert_eq!(fmt_sig(1e-5), "1e-5");
        assert_eq!(fmt_sig(1.25e12), "1.25e12");
        assert_eq!(fmt_sig(1234567890.12), "1234567890");
        // Round-trips through parse at 10 significant digits.
        for x in [0.1, -123.456, 3.0e-7, 2.0 / 3.0] {
            let back: f64 = fmt_sig(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-9, "{x} -> {}", fmt_sig(x));
        }
    }

    fn write_temp(content: &str) -> std::path::PathBuf {
        let mut path = std::env::temp_dir();
        path.push(format!(
            "qbsd-io-test-{}-{}.csv",
            std::process::id(),
            content.len()
        ));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn loads_prices_and_differences() {
        let path = write_temp("date,adj_close\n2020-01-01,100\n2020-01-02,101\n");
        let series = load_prices(&path).unwrap();
        assert_eq!(series.returns.len(), 1);
        assert!((series.returns[0] - 100.0 * (1.01_f64).ln()).abs() < 1e-12);
        std::fs::remove_file(path).unwrap();
    }

    #[test]
    fn constant_prices_give_zero_returns() {
        let path = write_temp("date,adj_close\n2020-01-01,5\n2020-01-02,5\n2020-01-03,5\n");
        let series = load_prices(&path).unwrap();
        assert!(series.returns.iter().all(|r| *r == 0.0));
        std::fs::remove_file(path).unwrap();
    }

    #[test]
    fn crlf_accepted() {
        let path = write_temp("date,adj_close\r\n2020-01-01,100\r\n2020-01-02,101\r\n");
        assert!(load_prices(&path).is_ok());
        std::fs::remove_file(path).unwrap();
    }

    #[test]
    fn parse_errors_name_the_line() {
        for (content, bad_line) in [
            ("date,px\n2020-01-01,100\n", 1),
            ("date,adj_close\n2020-01-01,100\n2020-01-01,101\n", 3),
            ("date,adj_close\n2020-01-01,100\n2020-01-02,-3\n", 3),
            ("date,adj_close\n2020-01-01,100\nnot-a-date,101\n", 3),
            ("date,adj_close\n2020-01-01,100,extra\n", 2),
        ] {
            let path = write_temp(content);
            match load_prices(&path) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, bad_line, "{content:?}"),
                other => panic!("expected parse error for {content:?}, got {other:?}"),
            }
            std::fs::remove_file(path).unwrap();
        }
    }

    #[test]
    fn config_parsing() {
        let text = "\
# sample config
window = 1250
alphas = 0.01, 0.025, 0.05
models = GARCH-normal, QbSD-gSAV
refit_every = 5
seed = 42
";
        let config = parse_backtest_config(text).unwrap();
        assert_eq!(config.window, 1250);
        assert_eq!(config.alphas, vec![0.01, 0.025, 0.05]);
        assert_eq!(config.models.len(), 2);
        assert_eq!(config.refit_every, 5);
        assert_eq!(config.seed, 42);

        assert!(parse_backtest_config("unknown_key = 3\n").is_err());
        assert!(parse_backtest_config("models = NOT-A-MODEL\n").is_err());
        assert!(parse_backtest_config("window = ten\n").is_err());
    }

    #[test]
    fn forecast_table_round_trip() {
        let table = ForecastTable {
            rows: vec![ForecastRow {
                date: NaiveDate::from_ymd_opt(2021, 3, 4).unwrap(),
                model: "GARCH-t".into(),
                alpha: 0.025,
                var: -2.3456789012345,
                es: -3.0001,
                realized: 0.75,
                window: 17,
                flag: Flag::Ok,
            }],
            skipped: Vec::new(),
        };
        let csv = forecast_table_to_csv(&table);
        let back = forecast_table_from_csv(&csv).unwrap();
        assert_eq!(back.rows.len(), 1);
        assert_eq!(back.rows[0].model, "GARCH-t");
        assert_eq!(back.rows[0].window, 17);
        assert!((back.rows[0].var - table.rows[0].var).abs() < 1e-9);
        // Serialization is idempotent once through the formatter.
        let csv2 = forecast_table_to_csv(&back);
        assert_eq!(csv, csv2);
    }
}
