use serde::Serialize;

use super::{simulate, Scenario};
use crate::observers::PlantModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub dt: f64,
    /// Sup of `|xᵢ − x̂ᵢ|` over the final 20% of the horizon, plant states first.
    pub sup_error: Vec<f64>,
    pub ext_sup_error: Vec<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// `sup(ε_k) / sup(ε_{k+1})` per plant state.
    pub ratios: Vec<Vec<f64>>,
    pub ext_ratios: Vec<Vec<f64>>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let ns = self.rows.first().map_or(0, |r| r.sup_error.len());
        let ne = self.rows.first().map_or(0, |r| r.ext_sup_error.len());
        let mut s = String::from("eps,dt");
        for i in 1..=ns {
            s.push_str(&format!(",sup_e_{i}"));
        }
        for i in 1..=ne {
            s.push_str(&format!(",sup_ext_{i}"));
        }
        for i in 1..=ns {
            s.push_str(&format!(",ratio_e_{i}"));
        }
        for i in 1..=ne {
            s.push_str(&format!(",ratio_ext_{i}"));
        }
        s.push_str(",failed\n");
        for (k, r) in self.rows.iter().enumerate() {
            s.push_str(&format!("{:e},{:e}", r.eps, r.dt));
            for v in r.sup_error.iter().chain(&r.ext_sup_error) {
                s.push_str(&format!(",{v:e}"));
            }
            let ratio = k.checked_sub(1).map(|p| (&self.ratios[p], &self.ext_ratios[p]));
            for i in 0..ns {
                match ratio {
                    Some((r, _)) => s.push_str(&format!(",{:e}", r[i])),
                    None => s.push(','),
                }
            }
            for i in 0..ne {
                match ratio {
                    Some((_, r)) => s.push_str(&format!(",{:e}", r[i])),
                    None => s.push(','),
                }
            }
            s.push_str(if r.failure.is_some() { ",1\n" } else { ",0\n" });
        }
        s
    }
}

fn run_one(base: &Scenario, eps: f64) -> Result<SweepRow> {
    let mut sc = base.clone();
    for o in &mut sc.observers {
        o.set_eps(eps);
    }
    // Stiffness guard for small gains.
    if eps < 0.05 && sc.dt > eps / 100.0 {
        sc.dt = eps / 100.0;
    }
    let tr = simulate(&sc)?;
    let ns = sc.plant.state_dim();
    let ne = sc.plant.ext_dim();
    let [t0, t1] = sc.t_span;
    let start = t1 - 0.2 * (t1 - t0);
    let mut sup = vec![0.0f64; ns];
    let mut ext = vec![0.0f64; ne];
    let obs = &tr.observers[0];
    for k in 0..tr.len() {
        if tr.t[k] < start - 1e-12 {
            continue;
        }
        for i in 0..ns {
            sup[i] = sup[i].max((tr.x[k][i] - obs.xhat[k][i]).abs());
        }
        for i in 0..ne.min(obs.ext_hat[k].len()) {
            ext[i] = ext[i].max((tr.ext_truth[k][i] - obs.ext_hat[k][i]).abs());
        }
    }
    if tr.failure.is_some() {
        sup.iter_mut().chain(ext.iter_mut()).for_each(|v| *v = f64::INFINITY);
    }
    Ok(SweepRow { eps, dt: sc.dt, sup_error: sup, ext_sup_error: ext, failure: tr.failure })
}

/// Steady-state sup errors of the first observer for each `ε`, run on up to `threads` workers.
pub fn epsilon_sweep(sc: &Scenario, eps: &[f64], threads: usize) -> Result<SweepTable> {
    if !matches!(sc.plant, PlantModel::Chain { .. } | PlantModel::Mimo { .. }) {
        return Err(Error::InvalidParameter("ε-sweeps need a chain or MIMO plant".into()));
    }
    if sc.observers.first().and_then(|o| o.eps()).is_none() {
        return Err(Error::InvalidParameter("the first observer has no ε gain".into()));
    }
    if eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidParameter("ε values must be positive".into()));
    }
    let threads = threads.max(1).min(eps.len().max(1));
    let mut rows: Vec<Option<Result<SweepRow>>> = (0..eps.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (chunk_idx, chunk) in rows.chunks_mut(eps.len().div_ceil(threads).max(1)).enumerate() {
            let start = chunk_idx * eps.len().div_ceil(threads).max(1);
            scope.spawn(move || {
                for (j, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(run_one(sc, eps[start + j]));
                }
            });
        }
    });
    let rows = rows.into_iter().map(|r| r.expect("every slot filled")).collect::<Result<Vec<_>>>()?;
    let ratio = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x / y).collect::<Vec<_>>();
    let ratios = rows.windows(2).map(|w| ratio(&w[0].sup_error, &w[1].sup_error)).collect();
    let ext_ratios = rows.windows(2).map(|w| ratio(&w[0].ext_sup_error, &w[1].ext_sup_error)).collect();
    Ok(SweepTable { rows, ratios, ext_ratios })
}
