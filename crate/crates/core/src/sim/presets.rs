//! Ready-made scenarios: X-29A output feedback, inverted pendulum, four-wheel steering vehicle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Disturbance, ObserverSpec, Scenario};
use crate::linalg::{from_rows, Mat, Vector};
use crate::nn::Activation;
use crate::observers::{gslo_build, uio_build, ChainModel, ChainNets, Controller, MimoModel, PendulumParams, PlantModel, Term};
use crate::synthesis::{
    extending_observable, riccati_gain, stabilizing_state_feedback, synthesize_chain, synthesize_mimo,
    synthesize_output_feedback, Architecture, SynthesisOptions, RANK_TOL,
};
use crate::{Error, Result};

fn zeros(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

/// X-29A style LTI loop; the matrices come from the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct X29Config {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    #[serde(default = "X29Config::default_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "X29Config::default_noise")]
    pub noise_variance: f64,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "X29Config::default_t_span")]
    pub t_span: [f64; 2],
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Bass shift used for both gains; `None` picks the library default.
    #[serde(default)]
    pub shift: Option<f64>,
}

impl X29Config {
    fn default_activation() -> Activation {
        Activation::Relu
    }
    fn default_noise() -> f64 {
        0.1
    }
    fn default_t_span() -> [f64; 2] {
        [0.0, 20.0]
    }
}

fn default_dt() -> f64 {
    1e-3
}

pub fn scenario_x29(cfg: &X29Config) -> Result<Scenario> {
    let a = from_rows(&cfg.a)?;
    let b = from_rows(&cfg.b)?;
    let c = from_rows(&cfg.c)?;
    let ns = a.nrows();
    if !matches!(cfg.activation, Activation::Relu | Activation::Tanh) {
        return Err(Error::InvalidParameter("X-29 nets use relu or tanh".into()));
    }
    let arch = Architecture::new(vec![3, 3, 3], cfg.activation)?;
    let opts = SynthesisOptions { shift: cfg.shift, ..Default::default() };
    let syn = synthesize_output_feedback(&a, &b, &c, &arch, &arch, cfg.seed, &opts)?;
    let cov_w = Mat::identity(ns, ns) * cfg.noise_variance;
    let cov_v = Mat::identity(c.nrows(), c.nrows()) * cfg.noise_variance;
    let kf = riccati_gain(&a, &c, &cov_w, &cov_v)?.gain;
    let x0 = cfg.x0.clone().unwrap_or_else(|| vec![0.1; ns]);
    Ok(Scenario {
        name: "x29".into(),
        plant: PlantModel::Lti { a, b, c },
        observers: vec![
            ObserverSpec::NeuralLti { label: "neural".into(), net: syn.nets[1].clone(), x0: zeros(ns) },
            ObserverSpec::Kalman { label: "kalman".into(), gain: kf, x0: zeros(ns) },
        ],
        controller: Controller::NnFeedback { net: syn.nets[0].clone() },
        disturbance: Disturbance { terms: Vec::new(), process_noise: Some(cov_w), measurement_noise: Some(cov_v) },
        t_span: cfg.t_span,
        dt: cfg.dt,
        seed: cfg.seed,
        x0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PendulumConfig {
    /// Perturbations acting on the plant; the observer never sees them.
    pub delta_m: f64,
    pub delta_l: f64,
    pub eps: f64,
    /// Bass shift of the chain injection gains, in the rescaled time `t/ε`.
    pub observer_shift: f64,
    /// Design perturbation of the gain-scheduled Luenberger baseline.
    pub gslo_delta: f64,
    pub seed: u64,
    pub x0: [f64; 2],
    pub t_span: [f64; 2],
    pub dt: f64,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            delta_m: 0.05,
            delta_l: 0.05,
            eps: 0.1,
            observer_shift: 30.0,
            gslo_delta: 0.1,
            seed: 7,
            x0: [0.2, 0.0],
            t_span: [0.0, 10.0],
            dt: 1e-3,
        }
    }
}

pub fn pendulum_disturbance() -> Vec<Term> {
    vec![
        Term::Sin { a: 0.1, b: 4.0 * PI, phi: 0.0 },
        Term::Cos { a: 0.2, b: 2.0 * PI, phi: 0.0 },
        Term::Sin { a: 0.2, b: 3.0 * PI, phi: -PI / 7.0 },
    ]
}

pub fn scenario_pendulum(cfg: &PendulumConfig) -> Result<Scenario> {
    if cfg.delta_m.abs() > 0.1 || cfg.delta_l.abs() > 0.1 {
        return Err(Error::InvalidParameter("pendulum perturbations must satisfy |δ| ≤ 0.1".into()));
    }
    let params = PendulumParams { m0: 1.0, l0: 1.0, friction: 0.5, delta_m: cfg.delta_m, delta_l: cfg.delta_l, g: 9.81 };
    let arch = Architecture::new(vec![3, 2], Activation::Tanh)?;
    let opts = SynthesisOptions { shift: Some(cfg.observer_shift), ..Default::default() };
    let syn = synthesize_chain(2, &arch, cfg.seed, &opts)?;
    let gslo = gslo_build(&params, cfg.gslo_delta, None)?;
    Ok(Scenario {
        name: "pendulum".into(),
        plant: PlantModel::Chain { n: 2, b: params.nominal_b(), model: ChainModel::Pendulum(params) },
        observers: vec![
            ObserverSpec::NeuralChain {
                label: "neural".into(),
                eps: cfg.eps,
                nets: ChainNets::Separate { nets: syn.nets },
                x0: zeros(3),
            },
            ObserverSpec::Luenberger { label: "gslo".into(), observer: gslo, x0: zeros(2) },
        ],
        controller: Controller::SatAdrc { rho: 1.0, k: vec![-25.0, -10.0], m: vec![10.0; 3], b: params.nominal_b() },
        disturbance: Disturbance { terms: pendulum_disturbance(), ..Default::default() },
        t_span: cfg.t_span,
        dt: cfg.dt,
        seed: cfg.seed,
        x0: cfg.x0.to_vec(),
    })
}

/// Lateral vehicle dynamics; the physical parameters come from the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleConfig {
    /// Front and rear cornering stiffness (N/rad).
    pub c_af: f64,
    pub c_ar: f64,
    pub mass: f64,
    /// Longitudinal speed (m/s).
    pub speed: f64,
    pub inertia: f64,
    /// Distances from the center of gravity to the front and rear axle (m).
    pub a: f64,
    pub b: f64,
    #[serde(default = "VehicleConfig::default_rho")]
    pub rho_c: f64,
    #[serde(default = "VehicleConfig::default_eps")]
    pub eps: f64,
    /// Scales the oscillating part of the unknown input.
    #[serde(default = "VehicleConfig::default_factor")]
    pub disturbance_factor: f64,
    #[serde(default)]
    pub observer_shift: Option<f64>,
    #[serde(default)]
    pub uio_shift: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "VehicleConfig::default_x0")]
    pub x0: [f64; 4],
    #[serde(default = "VehicleConfig::default_t_span")]
    pub t_span: [f64; 2],
    #[serde(default = "default_dt")]
    pub dt: f64,
}

impl VehicleConfig {
    fn default_rho() -> f64 {
        400.0
    }
    fn default_eps() -> f64 {
        0.1
    }
    fn default_factor() -> f64 {
        1.0
    }
    fn default_x0() -> [f64; 4] {
        [0.5, 0.0, 0.1, 0.0]
    }
    fn default_t_span() -> [f64; 2] {
        [0.0, 10.0]
    }

    /// `(A, B, B_w)` of the lateral model.
    pub fn matrices(&self) -> (Mat, Mat, Mat) {
        let (cf, cr, m, u, iz, a, b) = (self.c_af, self.c_ar, self.mass, self.speed, self.inertia, self.a, self.b);
        let am = Mat::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0,
                0.0, (cf + cr) / (m * u), -(cf + cr) / m, (a * cf - b * cr) / (m * u),
                0.0, 0.0, 0.0, 1.0,
                0.0, (a * cf - b * cr) / (iz * u), -(a * cf - b * cr) / iz, (a * a * cf + b * b * cr) / (iz * u),
            ],
        );
        let bm = Mat::from_row_slice(4, 2, &[0.0, 0.0, -cf / m, -cr / m, 0.0, 0.0, -a * cf / iz, b * cf / iz]);
        let bw = Mat::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        (am, bm, bw)
    }

    pub fn unknown_input(&self) -> MimoModel {
        let (cf, cr, m, u, iz, a, b) = (self.c_af, self.c_ar, self.mass, self.speed, self.inertia, self.a, self.b);
        let road1 = (a * cf - b * cr - m * u * u) / (m * self.rho_c);
        let road2 = (a * a * cf + b * b * cr) / (iz * self.rho_c);
        MimoModel {
            channels: vec![
                vec![
                    Term::Sin { a: 0.1, b: 4.0, phi: 0.0 },
                    Term::Cos { a: 0.3, b: 2.0 * PI, phi: 0.0 },
                    Term::Const { a: road1 },
                ],
                vec![
                    Term::Cos { a: 0.2, b: 5.0, phi: 0.0 },
                    Term::Cos { a: 0.1, b: 6.0 * PI, phi: 0.0 },
                    Term::Const { a: road2 },
                ],
            ],
        }
        .with_amplitude_factor(self.disturbance_factor)
    }
}

pub fn scenario_vehicle(cfg: &VehicleConfig) -> Result<Scenario> {
    for (name, v) in [("c_af", cfg.c_af), ("c_ar", cfg.c_ar), ("mass", cfg.mass), ("speed", cfg.speed), ("inertia", cfg.inertia), ("rho_c", cfg.rho_c)] {
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive")));
        }
    }
    let (a, b, bw) = cfg.matrices();
    let c = Mat::identity(4, 4);
    if !extending_observable(&a, &c, &bw, RANK_TOL) {
        return Err(Error::Unobservable { rank: 0, n: 6 });
    }
    let arch = Architecture::new(vec![3, 3, 3], Activation::LeakyRelu { slope: 0.01 })?;
    let opts = SynthesisOptions { shift: cfg.observer_shift, ..Default::default() };
    let syn = synthesize_mimo(&a, &bw, &c, cfg.eps, &arch, &arch, cfg.seed, &opts)?;
    let g = stabilizing_state_feedback(&a, &b)?;
    let uio = uio_build(&a, &b, &bw, &c, cfg.uio_shift)?;
    let x0 = Vector::from_row_slice(&cfg.x0);
    Ok(Scenario {
        name: "vehicle".into(),
        plant: PlantModel::Mimo { a, b, b_w: bw, c, model: cfg.unknown_input() },
        observers: vec![
            ObserverSpec::NeuralMimo {
                label: "neural".into(),
                eps: cfg.eps,
                net1: syn.nets[0].clone(),
                net2: syn.nets[1].clone(),
                x0: zeros(6),
            },
            ObserverSpec::Uio { label: "uio".into(), realization: uio, z0: zeros(4) },
        ],
        controller: Controller::OutputFeedback { g },
        disturbance: Disturbance::default(),
        t_span: cfg.t_span,
        dt: cfg.dt,
        seed: cfg.seed,
        x0: x0.iter().copied().collect(),
    })
}
