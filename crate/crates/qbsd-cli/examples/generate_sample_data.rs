//! Regenerates the bundled sample inputs under `data/`.
//!
//! The price series is a seeded volatility-clustered simulation turned into
//! price levels on a synthetic weekday calendar: 1,600 prices, so 1,599
//! returns and 349 out-of-sample forecasts at the default 1,250-day window.

use std::fmt::Write as _;

use qbsd::backtest::NaiveDate;
use qbsd::dist::SkewedTParams;
use qbsd::sim::{simulate_aparch, AparchParams};

const N_PRICES: usize = 1600;
const SEED: u64 = 20240214;

fn main() {
    let innovation = SkewedTParams::new(7.0, -0.3).expect("valid shape");
    let params = AparchParams::new(0.04, 0.88, 0.08, 1.5, 0.4, innovation).expect("valid DGP");
    let path = simulate_aparch(&params, N_PRICES - 1, 500, SEED).expect("simulation");

    let mut date = NaiveDate::from_ymd_opt(2005, 1, 3).unwrap();
    let mut next_weekday = move || {
        loop {
            let current = date;
            date = date.succ_opt().unwrap();
            let weekday: u8 = current.format("%u").to_string().parse().unwrap();
            if weekday <= 5 {
                return current;
            }
        }
    };

    let mut csv = String::from("date,adj_close\n");
    let mut price = 100.0_f64;
    let _ = writeln!(csv, "{},{:.6}", next_weekday(), price);
    for r in &path.returns {
        price *= (r / 100.0).exp();
        let _ = writeln!(csv, "{},{:.6}", next_weekday(), price);
    }
    std::fs::create_dir_all("data").expect("create data dir");
    std::fs::write("data/sample_prices.csv", csv).expect("write prices");

    let config = "\
# Sample backtest: three model families, three levels, weekly refits.
window = 1250
alphas = 0.01, 0.025, 0.05
models = GARCH-normal, QbSD-gSAV, GAS
refit_every = 5
seed = 7
";
    std::fs::write("data/sample_backtest.cfg", config).expect("write config");

    let grid = "\
# Sample simulation grid: one no-leverage configuration at desk scale.
thetas = 0
dfs = 20
lambdas = 0
t = 1250
alphas = 0.01
models = QbSD-gSAV, GARCH-t
";
    std::fs::write("data/sample_grid.cfg", grid).expect("write grid");
    println!(
        "wrote data/sample_prices.csv ({} prices), data/sample_backtest.cfg, data/sample_grid.cfg",
        N_PRICES
    );
}
