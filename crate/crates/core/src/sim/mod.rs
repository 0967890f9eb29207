//! Fixed-step simulation of plant, observers and controller.

mod metrics;
mod presets;
mod sweep;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{max_abs, Mat, Vector};
use crate::nn::NeuralNet;
use crate::observers::{
    control_eval, disturbance_eval, kalman_rhs, neural_chain_rhs, neural_lti_rhs, neural_mimo_rhs, ChainNets,
    Controller, Luenberger, PlantModel, Term, UioRealization,
};
use crate::sdp::eig_sym_vectors;
use crate::{Error, Result};

pub use metrics::{fit_exponential, metrics, ExpFit, Metrics};
pub use presets::{scenario_pendulum, scenario_vehicle, scenario_x29, PendulumConfig, VehicleConfig, X29Config};
pub use sweep::{epsilon_sweep, SweepRow, SweepTable};

/// States above this norm abort the run.
pub const BLOW_UP: f64 = 1e9;

/// Classical RK4 step; `f` sees inputs that are held over the step.
pub fn rk4_step<F>(mut f: F, t: f64, x: &Vector, dt: f64) -> Result<Vector>
where
    F: FnMut(f64, &Vector) -> Result<Vector>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let k1 = f(t, x)?;
    let k2 = f(t + dt / 2.0, &(x + &k1 * (dt / 2.0)))?;
    let k3 = f(t + dt / 2.0, &(x + &k2 * (dt / 2.0)))?;
    let k4 = f(t + dt, &(x + &k3 * dt))?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence(format!("non-finite state after step at t = {t}")));
    }
    Ok(next)
}

/// Sum of sinusoid terms plus optional Gaussian sample-and-hold noises.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    /// Scalar `w(t)` entering the chain plant.
    #[serde(default)]
    pub terms: Vec<Term>,
    /// Covariance of the additive state noise, held over each step.
    #[serde(default, with = "crate::linalg::serde_rows_opt", skip_serializing_if = "Option::is_none")]
    pub process_noise: Option<Mat>,
    #[serde(default, with = "crate::linalg::serde_rows_opt", skip_serializing_if = "Option::is_none")]
    pub measurement_noise: Option<Mat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObserverSpec {
    /// Net in the certificate convention; the observer injects `π(Cx̂ − y)`.
    NeuralLti { label: String, net: NeuralNet, x0: Vec<f64> },
    /// States `x̂₁ … x̂ₙ₊₁`.
    NeuralChain { label: String, eps: f64, nets: ChainNets, x0: Vec<f64> },
    /// States `[x̂₁; x̂₂]`.
    NeuralMimo { label: String, eps: f64, net1: NeuralNet, net2: NeuralNet, x0: Vec<f64> },
    Kalman {
        label: String,
        #[serde(with = "crate::linalg::serde_rows")]
        gain: Mat,
        x0: Vec<f64>,
    },
    Luenberger { label: String, observer: Luenberger, x0: Vec<f64> },
    Uio { label: String, realization: UioRealization, z0: Vec<f64> },
}

impl ObserverSpec {
    pub fn label(&self) -> &str {
        match self {
            ObserverSpec::NeuralLti { label, .. }
            | ObserverSpec::NeuralChain { label, .. }
            | ObserverSpec::NeuralMimo { label, .. }
            | ObserverSpec::Kalman { label, .. }
            | ObserverSpec::Luenberger { label, .. }
            | ObserverSpec::Uio { label, .. } => label,
        }
    }

    fn initial(&self) -> &[f64] {
        match self {
            ObserverSpec::NeuralLti { x0, .. }
            | ObserverSpec::NeuralChain { x0, .. }
            | ObserverSpec::NeuralMimo { x0, .. }
            | ObserverSpec::Kalman { x0, .. }
            | ObserverSpec::Luenberger { x0, .. } => x0,
            ObserverSpec::Uio { z0, .. } => z0,
        }
    }

    /// Replaces the high-gain parameter of chain and MIMO observers.
    pub fn set_eps(&mut self, value: f64) {
        match self {
            ObserverSpec::NeuralChain { eps, .. } | ObserverSpec::NeuralMimo { eps, .. } => *eps = value,
            _ => {}
        }
    }

    pub fn eps(&self) -> Option<f64> {
        match self {
            ObserverSpec::NeuralChain { eps, .. } | ObserverSpec::NeuralMimo { eps, .. } => Some(*eps),
            _ => None,
        }
    }

    /// Number of extended-state estimates.
    pub fn ext_dim(&self, plant: &PlantModel) -> usize {
        match self {
            ObserverSpec::NeuralChain { .. } | ObserverSpec::NeuralMimo { .. } => plant.ext_dim(),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantModel,
    pub observers: Vec<ObserverSpec>,
    pub controller: Controller,
    #[serde(default)]
    pub disturbance: Disturbance,
    pub t_span: [f64; 2],
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    pub x0: Vec<f64>,
}

/// A scenario file holds either a full scenario or a preset name with its config.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ScenarioFile {
    Preset {
        preset: String,
        #[serde(default)]
        config: Option<serde_json::Value>,
    },
    Full(Box<Scenario>),
}

/// Parses a scenario JSON document, expanding presets.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let sc = match file {
        ScenarioFile::Full(sc) => *sc,
        ScenarioFile::Preset { preset, config } => {
            let parse = |v: Option<serde_json::Value>| -> Result<serde_json::Value> {
                v.ok_or_else(|| Error::Schema(format!("preset `{preset}` needs a `config` object")))
            };
            match preset.as_str() {
                "pendulum" => {
                    let cfg: PendulumConfig = match config {
                        Some(v) => serde_json::from_value(v).map_err(|e| Error::Schema(e.to_string()))?,
                        None => PendulumConfig::default(),
                    };
                    scenario_pendulum(&cfg)?
                }
                "x29" => {
                    let cfg: X29Config =
                        serde_json::from_value(parse(config)?).map_err(|e| Error::Schema(e.to_string()))?;
                    scenario_x29(&cfg)?
                }
                "vehicle" => {
                    let cfg: VehicleConfig =
                        serde_json::from_value(parse(config)?).map_err(|e| Error::Schema(e.to_string()))?;
                    scenario_vehicle(&cfg)?
                }
                other => return Err(Error::Schema(format!("unknown preset `{other}`"))),
            }
        }
    };
    sc.validate()?;
    Ok(sc)
}

fn check_cov(m: &Mat, n: usize, what: &str) -> Result<()> {
    if m.shape() != (n, n) {
        return Err(Error::dim(format!("{what} covariance must be {n}x{n}")));
    }
    if max_abs(&(m - m.transpose())) > 1e-12 * max_abs(m).max(1.0) {
        return Err(Error::NotSymmetric { residual: max_abs(&(m - m.transpose())) });
    }
    let (vals, _) = eig_sym_vectors(m, 1e-14)?;
    if vals.iter().any(|&v| v < -1e-12 * max_abs(m).max(1.0)) {
        return Err(Error::InvalidParameter(format!("{what} covariance is not PSD")));
    }
    Ok(())
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.controller.validate()?;
        let [t0, t1] = self.t_span;
        if !(self.dt > 0.0) || !(t1 > t0) {
            return Err(Error::InvalidParameter("need dt > 0 and t1 > t0".into()));
        }
        let ns = self.plant.state_dim();
        let no = self.plant.output_dim();
        if self.x0.len() != ns {
            return Err(Error::dim(format!("x0 must have length {ns}")));
        }
        if let Some(m) = &self.disturbance.process_noise {
            check_cov(m, ns, "process")?;
        }
        if let Some(m) = &self.disturbance.measurement_noise {
            check_cov(m, no, "measurement")?;
        }
        for obs in &self.observers {
            let want = match (obs, &self.plant) {
                (ObserverSpec::NeuralLti { net, .. }, PlantModel::Lti { .. }) => {
                    if net.input_dim() != no || net.output_dim() != ns {
                        return Err(Error::dim("LTI observer net does not match the plant"));
                    }
                    ns
                }
                (ObserverSpec::NeuralChain { nets, eps, .. }, PlantModel::Chain { n, .. }) => {
                    if nets.count() != n + 1 || !(*eps > 0.0) {
                        return Err(Error::dim("chain observer needs n + 1 nets and eps > 0"));
                    }
                    n + 1
                }
                (ObserverSpec::NeuralMimo { net1, net2, eps, .. }, PlantModel::Mimo { b_w, .. }) => {
                    if net1.input_dim() != no || net1.output_dim() != ns || net2.input_dim() != no || net2.output_dim() != b_w.ncols() || !(*eps > 0.0) {
                        return Err(Error::dim("MIMO observer nets do not match the plant"));
                    }
                    ns + b_w.ncols()
                }
                (ObserverSpec::Kalman { gain, .. }, PlantModel::Lti { .. }) => {
                    if gain.shape() != (ns, no) {
                        return Err(Error::dim("Kalman gain does not match the plant"));
                    }
                    ns
                }
                (ObserverSpec::Luenberger { observer, .. }, _) => {
                    if observer.a.nrows() != ns || observer.c.nrows() != no || observer.b.ncols() != self.plant.input_dim() {
                        return Err(Error::dim("Luenberger observer does not match the plant"));
                    }
                    ns
                }
                (ObserverSpec::Uio { realization, .. }, PlantModel::Mimo { .. } | PlantModel::Lti { .. }) => {
                    if realization.n.nrows() != ns || realization.l.ncols() != no {
                        return Err(Error::dim("UIO does not match the plant"));
                    }
                    ns
                }
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "observer `{}` does not fit this plant kind",
                        obs.label()
                    )))
                }
            };
            if obs.initial().len() != want {
                return Err(Error::dim(format!("observer `{}` needs {want} initial values", obs.label())));
            }
        }
        if matches!(self.controller, Controller::NnFeedback { .. } | Controller::SatAdrc { .. }) && self.observers.is_empty() {
            return Err(Error::InvalidParameter("observer-based controller needs an observer".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.t_span[1] - self.t_span[0]) / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverTrace {
    pub label: String,
    pub xhat: Vec<Vector>,
    /// Empty vectors for observers without extended states.
    pub ext_hat: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub t: Vec<f64>,
    pub x: Vec<Vector>,
    pub u: Vec<Vector>,
    pub y: Vec<Vector>,
    pub ext_truth: Vec<Vector>,
    pub observers: Vec<ObserverTrace>,
    /// Set when the run stopped early.
    pub failure: Option<String>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn observer(&self, label: &str) -> Option<&ObserverTrace> {
        self.observers.iter().find(|o| o.label == label)
    }

    /// Estimation error `x − x̂` of observer `k`.
    pub fn errors(&self, k: usize) -> Vec<Vector> {
        self.x.iter().zip(&self.observers[k].xhat).map(|(x, xh)| x - xh).collect()
    }

    /// Writes the trace as CSV with a header row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let width = |v: &[Vector]| v.first().map_or(0, |x| x.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=width(&self.x)).map(|i| format!("x_{i}")));
        for o in &self.observers {
            header.extend((1..=width(&o.xhat)).map(|i| format!("xhat_{}_{i}", o.label)));
        }
        header.extend((1..=width(&self.u)).map(|i| format!("u_{i}")));
        header.extend((1..=width(&self.y)).map(|i| format!("y_{i}")));
        header.extend((1..=width(&self.ext_truth)).map(|i| format!("ext_truth_{i}")));
        for o in &self.observers {
            header.extend((1..=width(&o.ext_hat)).map(|i| format!("ext_hat_{}_{i}", o.label)));
        }
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![format!("{:e}", self.t[k])];
            let mut push = |v: &Vector| row.extend(v.iter().map(|x| format!("{x:e}")));
            push(&self.x[k]);
            for o in &self.observers {
                push(&o.xhat[k]);
            }
            push(&self.u[k]);
            push(&self.y[k]);
            push(&self.ext_truth[k]);
            for o in &self.observers {
                push(&o.ext_hat[k]);
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Observer with derived quantities cached for the inner loop.
enum Prepared<'a> {
    Lti { inj: NeuralNet, a: &'a Mat, b: &'a Mat, c: &'a Mat },
    Chain { n: usize, b: f64, eps: f64, nets: &'a ChainNets },
    Mimo { a: &'a Mat, b: &'a Mat, b_w: &'a Mat, c: &'a Mat, eps: f64, net1: &'a NeuralNet, net2: &'a NeuralNet },
    Kalman { a: &'a Mat, b: &'a Mat, c: &'a Mat, gain: &'a Mat },
    Luenberger(&'a Luenberger),
    Uio(&'a UioRealization),
}

impl<'a> Prepared<'a> {
    fn new(spec: &'a ObserverSpec, plant: &'a PlantModel) -> Result<Self> {
        Ok(match (spec, plant) {
            (ObserverSpec::NeuralLti { net, .. }, PlantModel::Lti { a, b, c }) => {
                Prepared::Lti { inj: net.input_negated(), a, b, c }
            }
            (ObserverSpec::NeuralChain { eps, nets, .. }, PlantModel::Chain { n, b, .. }) => {
                Prepared::Chain { n: *n, b: *b, eps: *eps, nets }
            }
            (ObserverSpec::NeuralMimo { eps, net1, net2, .. }, PlantModel::Mimo { a, b, b_w, c, .. }) => {
                Prepared::Mimo { a, b, b_w, c, eps: *eps, net1, net2 }
            }
            (ObserverSpec::Kalman { gain, .. }, PlantModel::Lti { a, b, c }) => Prepared::Kalman { a, b, c, gain },
            (ObserverSpec::Luenberger { observer, .. }, _) => Prepared::Luenberger(observer),
            (ObserverSpec::Uio { realization, .. }, _) => Prepared::Uio(realization),
            _ => return Err(Error::InvalidParameter(format!("observer `{}` does not fit the plant", spec.label()))),
        })
    }

    fn rhs(&self, z: &Vector, u: &Vector, y: &Vector) -> Result<Vector> {
        match self {
            Prepared::Lti { inj, a, b, c } => neural_lti_rhs(a, b, c, inj, z, u, y),
            Prepared::Chain { n, b, eps, nets } => neural_chain_rhs(*n, *b, *eps, nets, z, u[0], y[0]),
            Prepared::Mimo { a, b, b_w, c, eps, net1, net2 } => {
                let ns = a.nrows();
                let x1 = z.rows(0, ns).clone_owned();
                let x2 = z.rows(ns, z.len() - ns).clone_owned();
                let (d1, d2) = neural_mimo_rhs(a, b, b_w, c, *eps, net1, net2, &x1, &x2, u, y)?;
                Ok(Vector::from_iterator(z.len(), d1.iter().chain(d2.iter()).copied()))
            }
            Prepared::Kalman { a, b, c, gain } => Ok(kalman_rhs(a, b, c, gain, z, u, y)),
            Prepared::Luenberger(l) => Ok(l.rhs(z, u, y)),
            Prepared::Uio(r) => Ok(r.rhs(z, u, y)),
        }
    }

    /// `(x̂, extended estimate)`.
    fn estimate(&self, z: &Vector, y: &Vector, ns: usize) -> (Vector, Vector) {
        match self {
            Prepared::Chain { .. } | Prepared::Mimo { .. } => (
                z.rows(0, ns).clone_owned(),
                z.rows(ns, z.len() - ns).clone_owned(),
            ),
            Prepared::Uio(r) => (r.estimate(z, y), Vector::zeros(0)),
            _ => (z.clone(), Vector::zeros(0)),
        }
    }

    /// The vector an observer-based controller reads.
    fn control_view(&self, z: &Vector, y: &Vector) -> Vector {
        match self {
            Prepared::Chain { .. } => z.clone(),
            Prepared::Uio(r) => r.estimate(z, y),
            Prepared::Mimo { a, .. } => z.rows(0, a.nrows()).clone_owned(),
            _ => z.clone(),
        }
    }
}

/// Cholesky-free square root `V·diag(√λ)` of a PSD covariance.
fn cov_sqrt(m: &Mat) -> Result<Mat> {
    let (vals, vecs) = eig_sym_vectors(m, 1e-14)?;
    let d = Vector::from_iterator(vals.len(), vals.iter().map(|v| v.max(0.0).sqrt()));
    Ok(vecs * Mat::from_diagonal(&d))
}

fn gaussian(rng: &mut ChaCha8Rng, root: &Mat) -> Vector {
    let z = Vector::from_iterator(root.ncols(), (0..root.ncols()).map(|_| StandardNormal.sample(rng)));
    root * z
}

struct Loop<'a> {
    sc: &'a Scenario,
    obs: Vec<Prepared<'a>>,
    offsets: Vec<usize>,
    ns: usize,
}

impl<'a> Loop<'a> {
    fn split(&self, s: &Vector, k: usize) -> Vector {
        let end = self.offsets.get(k + 1).copied().unwrap_or(s.len());
        s.rows(self.offsets[k], end - self.offsets[k]).clone_owned()
    }

    fn output(&self, x: &Vector, v: Option<&Vector>) -> Vector {
        let y = self.sc.plant.output(x);
        match v {
            Some(v) => y + v,
            None => y,
        }
    }

    fn control(&self, t: f64, s: &Vector, y: &Vector) -> Result<Vector> {
        let m = self.sc.plant.input_dim();
        match &self.sc.controller {
            Controller::NnFeedback { .. } | Controller::SatAdrc { .. } => {
                let view = self.obs[0].control_view(&self.split(s, 0), y);
                control_eval(&self.sc.controller, t, &view, y, m)
            }
            other => control_eval(other, t, &Vector::zeros(0), y, m),
        }
    }

    fn rhs(&self, t: f64, s: &Vector, p: Option<&Vector>, v: Option<&Vector>) -> Result<Vector> {
        let x = s.rows(0, self.ns).clone_owned();
        let y = self.output(&x, v);
        let u = self.control(t, s, &y)?;
        let w = disturbance_eval(&self.sc.disturbance.terms, t);
        let mut out = Vector::zeros(s.len());
        out.rows_mut(0, self.ns).copy_from(&self.sc.plant.rhs(t, &x, &u, w, p));
        for (k, o) in self.obs.iter().enumerate() {
            let d = o.rhs(&self.split(s, k), &u, &y)?;
            out.rows_mut(self.offsets[k], d.len()).copy_from(&d);
        }
        Ok(out)
    }
}

/// Runs the scenario on its uniform grid. Deterministic per `(scenario, seed)`.
pub fn simulate(sc: &Scenario) -> Result<Trace> {
    sc.validate()?;
    let ns = sc.plant.state_dim();
    let obs = sc
        .observers
        .iter()
        .map(|o| Prepared::new(o, &sc.plant))
        .collect::<Result<Vec<_>>>()?;
    let mut offsets = Vec::with_capacity(obs.len());
    let mut state: Vec<f64> = sc.x0.clone();
    for o in &sc.observers {
        offsets.push(state.len());
        state.extend_from_slice(o.initial());
    }
    let lp = Loop { sc, obs, offsets, ns };
    let mut s = Vector::from_vec(state);

    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let p_root = sc.disturbance.process_noise.as_ref().map(cov_sqrt).transpose()?;
    let v_root = sc.disturbance.measurement_noise.as_ref().map(cov_sqrt).transpose()?;

    let steps = sc.steps();
    let mut tr = Trace {
        t: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        ext_truth: Vec::with_capacity(steps + 1),
        observers: sc
            .observers
            .iter()
            .map(|o| ObserverTrace { label: o.label().to_string(), xhat: Vec::new(), ext_hat: Vec::new() })
            .collect(),
        failure: None,
    };

    for k in 0..=steps {
        let t = sc.t_span[0] + k as f64 * sc.dt;
        let p = p_root.as_ref().map(|r| gaussian(&mut rng, r));
        let v = v_root.as_ref().map(|r| gaussian(&mut rng, r));
        let x = s.rows(0, ns).clone_owned();
        let y = lp.output(&x, v.as_ref());
        let u = lp.control(t, &s, &y)?;
        let w = disturbance_eval(&sc.disturbance.terms, t);
        tr.t.push(t);
        tr.ext_truth.push(sc.plant.uncertainty(t, &x, &u, w));
        for (i, o) in lp.obs.iter().enumerate() {
            let (xh, ext) = o.estimate(&lp.split(&s, i), &y, ns);
            tr.observers[i].xhat.push(xh);
            tr.observers[i].ext_hat.push(ext);
        }
        tr.x.push(x);
        tr.u.push(u);
        tr.y.push(y);
        if k == steps {
            break;
        }
        match rk4_step(|tt, ss| lp.rhs(tt, ss, p.as_ref(), v.as_ref()), t, &s, sc.dt) {
            Ok(next) if next.norm() <= BLOW_UP => s = next,
            Ok(_) => {
                tr.failure = Some(format!("state norm exceeded {BLOW_UP:e} at t = {}", t + sc.dt));
                break;
            }
            Err(e) => {
                tr.failure = Some(e.to_string());
                break;
            }
        }
    }
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_scalar_decay() {
        let x = rk4_step(|_, x| Ok(-x), 0.0, &Vector::from_element(1, 1.0), 0.1).unwrap();
        // Fourth-order Taylor polynomial of e^{-0.1}.
        let h: f64 = 0.1;
        let taylor = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((x[0] - taylor).abs() < 1e-15);
        assert!((x[0] - 0.904_837_5).abs() < 1e-8);
        let still = rk4_step(|_, x| Ok(x * 0.0), 0.0, &Vector::from_element(2, 3.0), 0.1).unwrap();
        assert_eq!(still, Vector::from_element(2, 3.0));
        assert!(rk4_step(|_, x| Ok(-x), 0.0, &Vector::zeros(1), 0.0).is_err());
        assert!(rk4_step(|_, x| Ok(x * f64::INFINITY), 0.0, &Vector::from_element(1, 1.0), 0.1).is_err());
    }

    #[test]
    fn rk4_rotation_local_error() {
        // ẋ = [[0,1],[-1,0]]x has the exact flow of a rotation.
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let x0 = Vector::from_vec(vec![1.0, 0.0]);
        for h in [0.1, 0.05] {
            let x = rk4_step(|_, x| Ok(&a * x), 0.0, &x0, h).unwrap();
            let exact = Vector::from_vec(vec![h.cos(), -h.sin()]);
            assert!((x - exact).norm() < h.powi(5) / 60.0);
        }
    }

    #[test]
    fn covariance_root_reproduces() {
        let m = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = cov_sqrt(&m).unwrap();
        assert!(max_abs(&(&r * r.transpose() - m)) < 1e-12);
    }
}
