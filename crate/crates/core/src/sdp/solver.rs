//! Phase-I barrier method for dense LMI feasibility.
//!
//! Every constraint is sign-normalised to `G_j(y) = s_j F_j(y) + μ_j I ⪯ 0` and
//! the solver minimises `t` subject to `G_j(y) ⪯ tI`, with a log-det barrier,
//! damped Newton steps and backtracking. A bounding ball `‖y‖ < R` keeps the
//! iterates finite on homogeneous instances.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use super::eig::eig_sym;
use crate::linalg::{Mat, Vector};
use crate::qc::{LmiInstance, Sign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Feasible,
    InfeasibleSuspected,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub status: Status,
    pub y: Vec<f64>,
    /// Smallest signed slack per constraint (`−λ_max` for `≺ 0`, `λ_min` for `≻ 0`).
    pub margins: Vec<f64>,
    pub iterations: usize,
    pub final_t: f64,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// A point is accepted once `t < −tol` (normalised units) and it verifies.
    pub tol: f64,
    pub newton_tol: f64,
    pub backtrack_beta: f64,
    pub backtrack_alpha: f64,
    /// Barrier weight update: `1/s ← factor · 1/s`.
    pub barrier_factor: f64,
    pub radius: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            tol: 1e-9,
            newton_tol: 1e-10,
            backtrack_beta: 0.5,
            backtrack_alpha: 0.01,
            barrier_factor: 0.5,
            radius: 1e12,
        }
    }
}

pub fn solve_feasibility(inst: &LmiInstance, max_iter: usize, tol: f64) -> Certificate {
    solve_with(
        inst,
        &SolverOptions {
            max_iter,
            tol,
            ..SolverOptions::default()
        },
    )
}

/// Normalised constraint data: `G_j(y) = g0_j + Σ y_i g_ij`.
struct Normalised {
    g0: Vec<Mat>,
    gi: Vec<Vec<Mat>>,
    n: usize,
}

impl Normalised {
    fn new(inst: &LmiInstance) -> Self {
        let scale = inst.scale().max(f64::MIN_POSITIVE);
        let mut g0 = Vec::new();
        let mut gi = Vec::new();
        for c in &inst.constraints {
            let s = match c.sign {
                Sign::Neg => 1.0,
                Sign::Pos => -1.0,
            } / scale;
            let m = c.f0.nrows();
            g0.push(&c.f0 * s + Mat::identity(m, m) * (c.margin / scale));
            gi.push(c.fi.iter().map(|f| f * s).collect());
        }
        Self {
            g0,
            gi,
            n: inst.n_vars(),
        }
    }

    fn eval(&self, j: usize, y: &[f64]) -> Mat {
        let mut g = self.g0[j].clone();
        for (yi, f) in y.iter().zip(&self.gi[j]) {
            if *yi != 0.0 {
                g += f * *yi;
            }
        }
        g
    }

    fn total_dim(&self) -> usize {
        self.g0.iter().map(|g| g.nrows()).sum()
    }
}

struct Point {
    y: Vec<f64>,
    t: f64,
}

struct Eval {
    value: f64,
    grad: Vector,
    hess: Mat,
}

/// Barrier value only; `None` outside the domain.
fn barrier_value(nz: &Normalised, p: &Point, s: f64, r2: f64) -> Option<f64> {
    let ball = r2 - p.y.iter().map(|v| v * v).sum::<f64>();
    if ball <= 0.0 {
        return None;
    }
    let mut v = s * p.t - ball.ln();
    for j in 0..nz.g0.len() {
        let g = nz.eval(j, &p.y);
        let m = g.nrows();
        let slack = Mat::identity(m, m) * p.t - g;
        let chol = Cholesky::new(slack)?;
        let logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        v -= logdet;
    }
    v.is_finite().then_some(v)
}

fn barrier_eval(nz: &Normalised, p: &Point, s: f64, r2: f64) -> Option<Eval> {
    let n = nz.n;
    let value = barrier_value(nz, p, s, r2)?;
    let mut grad = Vector::zeros(n + 1);
    let mut hess = Mat::zeros(n + 1, n + 1);
    grad[n] = s;

    for j in 0..nz.g0.len() {
        let g = nz.eval(j, &p.y);
        let m = g.nrows();
        let slack = Mat::identity(m, m) * p.t - g;
        let sinv = Cholesky::new(slack)?.inverse();
        // U_i = S⁻¹ A_i with A_i = ∂G/∂y_i; the t-direction has A_t = −I.
        let us: Vec<Option<Mat>> = nz.gi[j]
            .iter()
            .map(|a| (a.iter().any(|v| *v != 0.0)).then(|| &sinv * a))
            .collect();
        for i in 0..n {
            if let Some(u) = &us[i] {
                grad[i] += u.trace();
            }
        }
        grad[n] -= sinv.trace();
        let sinv2 = &sinv * &sinv;
        hess[(n, n)] += sinv2.trace();
        for i in 0..n {
            let Some(ui) = &us[i] else { continue };
            // tr(S⁻¹A_i S⁻¹(−I)) = −tr(U_i S⁻¹)
            hess[(i, n)] -= ui.component_mul(&sinv.transpose()).sum();
            for k in i..n {
                let Some(uk) = &us[k] else { continue };
                let v = ui.component_mul(&uk.transpose()).sum();
                hess[(i, k)] += v;
            }
        }
    }
    for i in 0..n {
        hess[(n, i)] = hess[(i, n)];
        for k in 0..i {
            hess[(i, k)] = hess[(k, i)];
        }
    }
    let yy: f64 = p.y.iter().map(|v| v * v).sum();
    let ball = r2 - yy;
    for i in 0..n {
        grad[i] += 2.0 * p.y[i] / ball;
        hess[(i, i)] += 2.0 / ball;
        for k in 0..n {
            hess[(i, k)] += 4.0 * p.y[i] * p.y[k] / (ball * ball);
        }
    }
    Some(Eval { value, grad, hess })
}

fn newton_direction(e: &Eval) -> Option<Vector> {
    let n = e.hess.nrows();
    let diag_scale = (0..n).map(|i| e.hess[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut damping = 0.0;
    for _ in 0..12 {
        let h = &e.hess + Mat::identity(n, n) * damping;
        if let Some(ch) = Cholesky::new(h) {
            let d = ch.solve(&(-&e.grad));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        damping = if damping == 0.0 { 1e-12 * diag_scale } else { damping * 100.0 };
    }
    None
}

pub fn solve_with(inst: &LmiInstance, opts: &SolverOptions) -> Certificate {
    let nz = Normalised::new(inst);
    let n = nz.n;
    let r2 = opts.radius * opts.radius;
    let m_total = (nz.total_dim() + 1) as f64;

    let y0 = match &inst.start {
        Some(y) if y.len() == n && y.iter().map(|v| v * v).sum::<f64>() < 0.25 * r2 => y.clone(),
        _ => vec![0.0; n],
    };
    let m0 = (0..nz.g0.len())
        .map(|j| {
            eig_sym(&nz.eval(j, &y0), 1e-14)
                .map(|e| e.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .unwrap_or(f64::INFINITY)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    // max(2m, m+1) is strictly above m whatever its sign.
    let t0 = (2.0 * m0).max(m0 + 1.0);
    let mut p = Point { y: y0, t: t0 };
    let mut s = 1.0;
    let mut iterations = 0;

    let finish = |status: Status, p: &Point, iterations: usize| {
        let mut cert = Certificate {
            status,
            y: p.y.clone(),
            margins: Vec::new(),
            iterations,
            final_t: p.t,
        };
        let report = verify_certificate(inst, &cert);
        cert.margins = report.constraints.iter().map(|c| c.min_slack).collect();
        if status == Status::Feasible && !report.pass {
            cert.status = Status::MaxIter;
        }
        cert
    };

    let try_accept = |p: &Point| -> bool {
        if p.t >= -opts.tol {
            return false;
        }
        let cert = Certificate {
            status: Status::Feasible,
            y: p.y.clone(),
            margins: Vec::new(),
            iterations: 0,
            final_t: p.t,
        };
        verify_certificate(inst, &cert).pass
    };

    if try_accept(&p) {
        return finish(Status::Feasible, &p, 0);
    }

    while iterations < opts.max_iter {
        // Centering at the current barrier weight.
        let mut centred = false;
        while iterations < opts.max_iter {
            let Some(e) = barrier_eval(&nz, &p, s, r2) else {
                return finish(Status::MaxIter, &p, iterations);
            };
            let Some(d) = newton_direction(&e) else {
                return finish(Status::MaxIter, &p, iterations);
            };
            iterations += 1;
            let slope = e.grad.dot(&d);
            if -slope / 2.0 <= opts.newton_tol {
                centred = true;
                break;
            }
            let mut step = 1.0;
            let mut accepted = None;
            while step > 1e-14 {
                let cand = Point {
                    y: (0..n).map(|i| p.y[i] + step * d[i]).collect(),
                    t: p.t + step * d[n],
                };
                if let Some(v) = barrier_value(&nz, &cand, s, r2) {
                    if v <= e.value + opts.backtrack_alpha * step * slope {
                        accepted = Some(cand);
                        break;
                    }
                }
                step *= opts.backtrack_beta;
            }
            match accepted {
                Some(c) => p = c,
                None => {
                    centred = true;
                    break;
                }
            }
            if try_accept(&p) {
                return finish(Status::Feasible, &p, iterations);
            }
        }
        if !centred {
            break;
        }
        // Duality-gap bound: t* ≥ t − m/s at the central point.
        if p.t - m_total / s >= 0.0 {
            return finish(Status::InfeasibleSuspected, &p, iterations);
        }
        s /= opts.barrier_factor;
    }
    finish(Status::MaxIter, &p, iterations)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub sign: Sign,
    pub margin: f64,
    /// Signed slacks, ascending: `−eig(F)` for `≺ 0`, `eig(F)` for `≻ 0`.
    pub slacks: Vec<f64>,
    pub min_slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub constraints: Vec<ConstraintReport>,
    pub pass: bool,
}

/// Re-evaluates every constraint at `cert.y` and checks its sign with the instance margins.
pub fn verify_certificate(inst: &LmiInstance, cert: &Certificate) -> VerificationReport {
    let mut constraints = Vec::new();
    for (j, c) in inst.constraints.iter().enumerate() {
        let f = inst.eval_constraint(j, &cert.y);
        let slacks: Vec<f64> = match (f, cert.y.len() == inst.n_vars()) {
            (Ok(f), true) => match eig_sym(&f, 1e-14) {
                Ok(e) => {
                    let mut v: Vec<f64> = match c.sign {
                        Sign::Neg => e.iter().map(|v| -v).collect(),
                        Sign::Pos => e.iter().copied().collect(),
                    };
                    v.sort_by(f64::total_cmp);
                    v
                }
                Err(_) => vec![f64::NEG_INFINITY],
            },
            _ => vec![f64::NEG_INFINITY],
        };
        let min_slack = slacks.iter().copied().fold(f64::INFINITY, f64::min);
        let pass = slacks.is_empty() || (min_slack.is_finite() && min_slack - c.margin >= 0.0);
        constraints.push(ConstraintReport {
            sign: c.sign,
            margin: c.margin,
            slacks,
            min_slack,
            pass,
        });
    }
    let pass = constraints.iter().all(|c| c.pass);
    VerificationReport { constraints, pass }
}
