use serde::Serialize;

use super::Trace;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpFit {
    pub kappa: f64,
    /// `M̂` in `‖e(t)‖ ≈ M̂·e^{−κ̂(t − t₀)}·‖e(t₀)‖`.
    pub prefactor: f64,
    pub r2: f64,
}

/// Least-squares line through `(t, ln e)`; non-positive samples are skipped.
pub fn fit_exponential(t: &[f64], e: &[f64]) -> Result<ExpFit> {
    if t.len() != e.len() {
        return Err(Error::dim("time and error series differ in length"));
    }
    let pts: Vec<(f64, f64)> = t.iter().zip(e).filter(|(_, &v)| v > 0.0).map(|(&t, &v)| (t, v.ln())).collect();
    if pts.len() < 2 {
        return Err(Error::InvalidParameter("fewer than two positive samples".into()));
    }
    let t0 = pts[0].0;
    let e0 = e.iter().copied().find(|&v| v > 0.0).unwrap_or(1.0);
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0 - t0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - t0 - mt).powi(2)).sum();
    let stl: f64 = pts.iter().map(|p| (p.0 - t0 - mt) * (p.1 - ml)).sum();
    let sll: f64 = pts.iter().map(|p| (p.1 - ml).powi(2)).sum();
    if stt == 0.0 {
        return Err(Error::InvalidParameter("degenerate time window".into()));
    }
    let slope = stl / stt;
    let intercept = ml - slope * mt;
    let r2 = if sll == 0.0 { 1.0 } else { (stl * stl) / (stt * sll) };
    Ok(ExpFit { kappa: -slope, prefactor: intercept.exp() / e0, r2 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub label: String,
    pub window: [f64; 2],
    /// Per plant state.
    pub rmse: Vec<f64>,
    /// Per extended state, absolute and relative to the RMS of the truth.
    pub ext_rmse: Vec<f64>,
    pub ext_rel_rmse: Vec<f64>,
    /// Largest `‖x − x̂‖₂` in the window.
    pub peak_error: f64,
    /// First time after which `‖x − x̂‖₂` stays within 2% of its initial value.
    pub convergence_time: Option<f64>,
    pub fit: Option<ExpFit>,
}

/// Metrics of observer `k` over `window` (whole trace if `None`).
pub fn metrics(trace: &Trace, k: usize, window: Option<[f64; 2]>) -> Result<Metrics> {
    let obs = trace
        .observers
        .get(k)
        .ok_or_else(|| Error::InvalidParameter(format!("no observer with index {k}")))?;
    let n = trace.len().min(obs.xhat.len());
    if n == 0 {
        return Err(Error::InvalidParameter("empty trace".into()));
    }
    let win = window.unwrap_or([trace.t[0], trace.t[n - 1]]);
    if !(win[1] >= win[0]) || win[0] < trace.t[0] - 1e-12 || win[1] > trace.t[n - 1] + 1e-9 {
        return Err(Error::InvalidParameter("window outside the trace".into()));
    }
    let idx: Vec<usize> = (0..n).filter(|&i| trace.t[i] >= win[0] - 1e-12 && trace.t[i] <= win[1] + 1e-12).collect();
    if idx.is_empty() {
        return Err(Error::InvalidParameter("empty window".into()));
    }
    let cnt = idx.len() as f64;
    let ns = obs.xhat[0].len();
    let err: Vec<_> = (0..n).map(|i| &trace.x[i] - &obs.xhat[i]).collect();
    let rmse = (0..ns)
        .map(|j| (idx.iter().map(|&i| err[i][j].powi(2)).sum::<f64>() / cnt).sqrt())
        .collect();
    let ne = obs.ext_hat[0].len().min(trace.ext_truth[0].len());
    let mut ext_rmse = Vec::with_capacity(ne);
    let mut ext_rel_rmse = Vec::with_capacity(ne);
    for j in 0..ne {
        let r = (idx.iter().map(|&i| (trace.ext_truth[i][j] - obs.ext_hat[i][j]).powi(2)).sum::<f64>() / cnt).sqrt();
        let rms = (idx.iter().map(|&i| trace.ext_truth[i][j].powi(2)).sum::<f64>() / cnt).sqrt();
        ext_rmse.push(r);
        ext_rel_rmse.push(if rms > 0.0 { r / rms } else { f64::INFINITY });
    }
    let norms: Vec<f64> = err.iter().map(|e| e.norm()).collect();
    let peak_error = idx.iter().map(|&i| norms[i]).fold(0.0, f64::max);
    let band = 0.02 * norms[idx[0]];
    let convergence_time = match idx.iter().rposition(|&i| norms[i] > band) {
        None => Some(trace.t[idx[0]]),
        Some(p) if p + 1 < idx.len() => Some(trace.t[idx[p + 1]]),
        Some(_) => None,
    };
    let ts: Vec<f64> = idx.iter().map(|&i| trace.t[i]).collect();
    let es: Vec<f64> = idx.iter().map(|&i| norms[i]).collect();
    Ok(Metrics {
        label: obs.label.clone(),
        window: win,
        rmse,
        ext_rmse,
        ext_rel_rmse,
        peak_error,
        convergence_time,
        fit: fit_exponential(&ts, &es).ok(),
    })
}
