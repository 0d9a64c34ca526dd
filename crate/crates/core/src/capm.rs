//! Market-effect removal by per-asset OLS against an index return series.
//!
//! Each asset return series is regressed on the market series over the same
//! rows; the abnormal return is the OLS residual. Fits are per calling
//! window, so slicing a panel to a period and residualizing there yields
//! period-local coefficients.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::panel::ReturnPanel;

/// OLS fit of one asset against the market.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CapmFit {
    pub alpha: f64,
    pub beta: f64,
    /// Mean squared residual of the fit.
    pub resid_var: f64,
}

/// Simple-regression OLS: beta = cov(stock, market) / var(market),
/// alpha = mean(stock) - beta * mean(market).
pub fn ols_fit(stock: &[f64], market: &[f64]) -> Result<CapmFit> {
    if stock.len() != market.len() {
        return Err(Error::Contract(format!(
            "stock has {} rows, market has {}",
            stock.len(),
            market.len()
        )));
    }
    if stock.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 observations for OLS, found {}",
            stock.len()
        )));
    }
    let n = stock.len() as f64;
    let ms = stock.iter().sum::<f64>() / n;
    let mm = market.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (&s, &m) in stock.iter().zip(market) {
        cov += (s - ms) * (m - mm);
        var += (m - mm) * (m - mm);
    }
    // A constant series leaves var at pure rounding noise, so compare against
    // the accumulation error bound for n squared terms at the series scale.
    let scale = market.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
    let tol = n * (8.0 * f64::EPSILON * scale).powi(2);
    if var <= tol {
        return Err(Error::DegenerateRegressor(
            "market series has zero variance".into(),
        ));
    }
    let beta = cov / var;
    let alpha = ms - beta * mm;
    let resid_var = stock
        .iter()
        .zip(market)
        .map(|(&s, &m)| {
            let r = s - alpha - beta * m;
            r * r
        })
        .sum::<f64>()
        / n;
    Ok(CapmFit {
        alpha,
        beta,
        resid_var,
    })
}

/// Residualizes every asset in the panel against `market`, which must be
/// aligned row-for-row with the panel. Returns the abnormal-return panel and
/// the per-asset fits in asset order.
pub fn abnormal_returns(
    panel: &ReturnPanel,
    market: &[f64],
) -> Result<(ReturnPanel, Vec<CapmFit>)> {
    if market.len() != panel.n_days() {
        return Err(Error::Contract(format!(
            "market series has {} rows, panel has {}",
            market.len(),
            panel.n_days()
        )));
    }
    let mut fits = Vec::with_capacity(panel.n_assets());
    let mut ar = Array2::zeros((panel.n_days(), panel.n_assets()));
    for a in 0..panel.n_assets() {
        let stock: Vec<f64> = panel.column(a).to_vec();
        let fit = ols_fit(&stock, market).map_err(|e| match e {
            Error::DegenerateRegressor(msg) => Error::DegenerateRegressor(format!(
                "{msg} (fitting `{}`)",
                panel.assets()[a]
            )),
            other => other,
        })?;
        for t in 0..panel.n_days() {
            ar[[t, a]] = stock[t] - fit.alpha - fit.beta * market[t];
        }
        fits.push(fit);
    }
    let panel = ReturnPanel::from_parts(panel.dates().to_vec(), panel.assets().to_vec(), ar)?;
    Ok((panel, fits))
}
