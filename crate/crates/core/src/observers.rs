//! Plant models, observer and controller right-hand sides, and baselines.
//!
//! Sign conventions: LTI observer nets are stored in the certificate
//! convention, where the error `e = x̂ − x` obeys `ė = Ae + π(Ce)`; the observer
//! therefore injects `π(ŷ − y)`. Chain and MIMO nets are used literally on
//! `y − ŷ`, matching their `−P` certificates.

use serde::{Deserialize, Serialize};

use crate::linalg::{max_abs, pinv_full_column, rank, Mat, Vector};
use crate::nn::NeuralNet;
use crate::sdp::hurwitz_check;
use crate::synthesis::{output_injection_with_shift, stabilizing_output_injection, RANK_TOL};
use crate::{Error, Result};

/// One additive signal term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    /// `a·sin(b·t + phi)`
    Sin {
        a: f64,
        b: f64,
        #[serde(default)]
        phi: f64,
    },
    /// `a·cos(b·t + phi)`
    Cos {
        a: f64,
        b: f64,
        #[serde(default)]
        phi: f64,
    },
    Const { a: f64 },
}

impl Term {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Term::Sin { a, b, phi } => a * (b * t + phi).sin(),
            Term::Cos { a, b, phi } => a * (b * t + phi).cos(),
            Term::Const { a } => a,
        }
    }

    /// Scales oscillating terms only.
    pub fn with_amplitude_factor(self, k: f64) -> Self {
        match self {
            Term::Sin { a, b, phi } => Term::Sin { a: a * k, b, phi },
            Term::Cos { a, b, phi } => Term::Cos { a: a * k, b, phi },
            c => c,
        }
    }
}

pub fn disturbance_eval(terms: &[Term], t: f64) -> f64 {
    terms.iter().map(|term| term.eval(t)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub m0: f64,
    pub l0: f64,
    pub friction: f64,
    /// Relative mass perturbation acting on the plant.
    pub delta_m: f64,
    /// Relative length perturbation acting on the plant.
    pub delta_l: f64,
    #[serde(default = "default_gravity")]
    pub g: f64,
}

fn default_gravity() -> f64 {
    9.81
}

impl PendulumParams {
    pub fn mass(&self) -> f64 {
        self.m0 * (1.0 + self.delta_m)
    }

    pub fn length(&self) -> f64 {
        self.l0 * (1.0 + self.delta_l)
    }

    /// Nominal input gain `1/(m₀l₀²)`.
    pub fn nominal_b(&self) -> f64 {
        1.0 / (self.m0 * self.l0 * self.l0)
    }

    /// `ẍ = (mgl·sin x₁ − ς x₂ + u + w) / (ml²)`.
    pub fn acceleration(&self, x: &[f64], u: f64, w: f64) -> f64 {
        let (m, l) = (self.mass(), self.length());
        (m * self.g * l * x[0].sin() - self.friction * x[1] + u + w) / (m * l * l)
    }
}

/// Lumped uncertainty of an integrator chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChainModel {
    /// Inverted pendulum with perturbed parameters; requires `n = 2`.
    Pendulum(PendulumParams),
    /// `ℱ = w(t) + Σ terms(t)`, independent of the state.
    Terms { terms: Vec<Term> },
}

/// Unknown input `𝒦` of a MIMO plant, one term list per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimoModel {
    pub channels: Vec<Vec<Term>>,
}

impl MimoModel {
    pub fn eval(&self, t: f64) -> Vector {
        Vector::from_iterator(self.channels.len(), self.channels.iter().map(|c| disturbance_eval(c, t)))
    }

    pub fn with_amplitude_factor(&self, k: f64) -> Self {
        Self {
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|t| t.with_amplitude_factor(k)).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantModel {
    Lti {
        #[serde(with = "crate::linalg::serde_rows")]
        a: Mat,
        #[serde(with = "crate::linalg::serde_rows")]
        b: Mat,
        #[serde(with = "crate::linalg::serde_rows")]
        c: Mat,
    },
    /// `x⁽ⁿ⁾ = ℱ + b·u`, measured `y = x₁`.
    Chain { n: usize, b: f64, model: ChainModel },
    Mimo {
        #[serde(with = "crate::linalg::serde_rows")]
        a: Mat,
        #[serde(with = "crate::linalg::serde_rows")]
        b: Mat,
        #[serde(with = "crate::linalg::serde_rows")]
        b_w: Mat,
        #[serde(with = "crate::linalg::serde_rows")]
        c: Mat,
        model: MimoModel,
    },
}

impl PlantModel {
    pub fn state_dim(&self) -> usize {
        match self {
            PlantModel::Lti { a, .. } | PlantModel::Mimo { a, .. } => a.nrows(),
            PlantModel::Chain { n, .. } => *n,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            PlantModel::Lti { b, .. } | PlantModel::Mimo { b, .. } => b.ncols(),
            PlantModel::Chain { .. } => 1,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            PlantModel::Lti { c, .. } | PlantModel::Mimo { c, .. } => c.nrows(),
            PlantModel::Chain { .. } => 1,
        }
    }

    /// Dimension of the lumped uncertainty (0 for LTI).
    pub fn ext_dim(&self) -> usize {
        match self {
            PlantModel::Lti { .. } => 0,
            PlantModel::Chain { .. } => 1,
            PlantModel::Mimo { b_w, .. } => b_w.ncols(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PlantModel::Lti { a, b, c } => {
                if !a.is_square() || b.nrows() != a.nrows() || c.ncols() != a.nrows() {
                    return Err(Error::dim("LTI plant: A, B, C do not conform"));
                }
            }
            PlantModel::Chain { n, model, .. } => {
                if *n == 0 {
                    return Err(Error::InvalidParameter("chain order must be positive".into()));
                }
                if matches!(model, ChainModel::Pendulum(_)) && *n != 2 {
                    return Err(Error::InvalidParameter("the pendulum model has order 2".into()));
                }
            }
            PlantModel::Mimo { a, b, b_w, c, model } => {
                if !a.is_square()
                    || b.nrows() != a.nrows()
                    || b_w.nrows() != a.nrows()
                    || c.ncols() != a.nrows()
                    || model.channels.len() != b_w.ncols()
                {
                    return Err(Error::dim("MIMO plant: A, B, B_w, C, 𝒦 do not conform"));
                }
            }
        }
        Ok(())
    }

    /// Lumped uncertainty: `ℱ = ẋₙ − b·u` (chain) or `𝒦(t)` (MIMO).
    pub fn uncertainty(&self, t: f64, x: &Vector, u: &Vector, w: f64) -> Vector {
        match self {
            PlantModel::Lti { .. } => Vector::zeros(0),
            PlantModel::Chain { b, model, .. } => {
                let f = match model {
                    ChainModel::Pendulum(p) => p.acceleration(x.as_slice(), u[0], w) - b * u[0],
                    ChainModel::Terms { terms } => w + disturbance_eval(terms, t),
                };
                Vector::from_element(1, f)
            }
            PlantModel::Mimo { model, .. } => model.eval(t),
        }
    }

    /// `ẋ` given the input, the scalar disturbance `w` and process noise.
    pub fn rhs(&self, t: f64, x: &Vector, u: &Vector, w: f64, process: Option<&Vector>) -> Vector {
        let mut dx = match self {
            PlantModel::Lti { a, b, .. } => a * x + b * u,
            PlantModel::Chain { n, b, .. } => {
                let mut dx = Vector::zeros(*n);
                for i in 0..n - 1 {
                    dx[i] = x[i + 1];
                }
                dx[n - 1] = self.uncertainty(t, x, u, w)[0] + b * u[0];
                dx
            }
            PlantModel::Mimo { a, b, b_w, .. } => a * x + b * u + b_w * self.uncertainty(t, x, u, w),
        };
        if let Some(p) = process {
            dx += p;
        }
        dx
    }

    pub fn output(&self, x: &Vector) -> Vector {
        match self {
            PlantModel::Lti { c, .. } | PlantModel::Mimo { c, .. } => c * x,
            PlantModel::Chain { .. } => Vector::from_element(1, x[0]),
        }
    }
}

/// `Ax̂ + Bu + π(y − Cx̂)`, with `net` applied literally to the innovation.
pub fn neural_lti_rhs(a: &Mat, b: &Mat, c: &Mat, net: &NeuralNet, xhat: &Vector, u: &Vector, y: &Vector) -> Result<Vector> {
    if xhat.len() != a.nrows() || u.len() != b.ncols() || y.len() != c.nrows() {
        return Err(Error::dim("observer state, input or output has the wrong length"));
    }
    Ok(a * xhat + b * u + net.forward(&(y - c * xhat))?)
}

/// Injection nets of a chain observer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChainNets {
    /// One net per observer state.
    Separate { nets: Vec<NeuralNet> },
    /// `πᵢ = bᵢ·π` for a single shared net.
    Shared {
        net: NeuralNet,
        #[serde(with = "crate::linalg::serde_vec")]
        gains: Vector,
    },
}

impl ChainNets {
    pub fn count(&self) -> usize {
        match self {
            ChainNets::Separate { nets } => nets.len(),
            ChainNets::Shared { gains, .. } => gains.len(),
        }
    }

    fn eval_all(&self, z: f64) -> Result<Vec<f64>> {
        let zin = Vector::from_element(1, z);
        match self {
            ChainNets::Separate { nets } => nets
                .iter()
                .map(|n| n.forward(&zin).map(|v| v[0]))
                .collect(),
            ChainNets::Shared { net, gains } => {
                let v = net.forward(&zin)?[0];
                Ok(gains.iter().map(|g| g * v).collect())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |n: &NeuralNet| n.input_dim() == 1 && n.output_dim() == 1;
        let good = match self {
            ChainNets::Separate { nets } => nets.iter().all(ok),
            ChainNets::Shared { net, .. } => ok(net),
        };
        if !good {
            return Err(Error::dim("chain nets must be scalar-in, scalar-out"));
        }
        Ok(())
    }
}

/// Chain observer of order `n` with states `x̂₁ … x̂ₙ₊₁`.
pub fn neural_chain_rhs(n: usize, b: f64, eps: f64, nets: &ChainNets, xhat: &Vector, u: f64, y: f64) -> Result<Vector> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")));
    }
    if xhat.len() != n + 1 || nets.count() != n + 1 {
        return Err(Error::dim(format!("chain observer of order {n} needs {} states and nets", n + 1)));
    }
    nets.validate()?;
    let z = (y - xhat[0]) / eps.powi(n as i32);
    let pis = nets.eval_all(z)?;
    let mut dx = Vector::zeros(n + 1);
    for i in 0..=n {
        // ε^{n−i} for 1-based i; the last state gets ε^{−1}.
        let gain = eps.powi(n as i32 - (i as i32 + 1));
        let next = if i < n { xhat[i + 1] } else { 0.0 };
        dx[i] = next + gain * pis[i];
    }
    dx[n - 1] += b * u;
    Ok(dx)
}

/// MIMO observer `(dx̂₁, dx̂₂)`.
#[allow(clippy::too_many_arguments)]
pub fn neural_mimo_rhs(
    a: &Mat,
    b: &Mat,
    b_w: &Mat,
    c: &Mat,
    eps: f64,
    net1: &NeuralNet,
    net2: &NeuralNet,
    x1: &Vector,
    x2: &Vector,
    u: &Vector,
    y: &Vector,
) -> Result<(Vector, Vector)> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")));
    }
    if x1.len() != a.nrows() || x2.len() != b_w.ncols() || y.len() != c.nrows() || u.len() != b.ncols() {
        return Err(Error::dim("MIMO observer signals have the wrong length"));
    }
    let z = (y - c * x1) / eps;
    let d1 = b_w * x2 + a * x1 + b * u + net1.forward(&z)?;
    let d2 = net2.forward(&z)? / eps;
    Ok((d1, d2))
}

pub fn sat(m: f64, v: f64) -> f64 {
    v.clamp(-m, m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Controller {
    /// `u = π(x̂)`.
    NnFeedback { net: NeuralNet },
    /// Saturated linear law on a chain observer state `x̂₁ … x̂ₙ₊₁`.
    SatAdrc { rho: f64, k: Vec<f64>, m: Vec<f64>, b: f64 },
    /// `u = G·y`.
    OutputFeedback {
        #[serde(with = "crate::linalg::serde_rows")]
        g: Mat,
    },
    /// Open loop `u(t)`, one term list per input (empty means zero input).
    None {
        #[serde(default)]
        profile: Vec<Vec<Term>>,
    },
}

impl Controller {
    pub fn validate(&self) -> Result<()> {
        if let Controller::SatAdrc { k, m, b, .. } = self {
            if m.len() != k.len() + 1 || m.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidParameter("sat bounds must be positive, one more than gains".into()));
            }
            if *b == 0.0 {
                return Err(Error::InvalidParameter("input gain b must be nonzero".into()));
            }
        }
        Ok(())
    }

    /// Bound on `|u|` for the saturated law.
    pub fn sat_bound(&self) -> Option<f64> {
        match self {
            Controller::SatAdrc { rho, k, m, b } => {
                let s: f64 = k.iter().zip(m).map(|(ki, mi)| ki.abs() * mi).sum();
                Some((rho.abs() * s + m[k.len()]) / b.abs())
            }
            _ => None,
        }
    }
}

pub fn control_eval(ctrl: &Controller, t: f64, xhat: &Vector, y: &Vector, n_inputs: usize) -> Result<Vector> {
    match ctrl {
        Controller::NnFeedback { net } => net.forward(xhat),
        Controller::SatAdrc { rho, k, m, b } => {
            let n = k.len();
            if xhat.len() != n + 1 {
                return Err(Error::dim(format!("saturated law needs {} observer states", n + 1)));
            }
            let mut acc = 0.0;
            for i in 0..n {
                acc += k[i] * sat(m[i], rho.powi((n - i - 1) as i32) * xhat[i]);
            }
            Ok(Vector::from_element(1, (rho * acc - sat(m[n], xhat[n])) / b))
        }
        Controller::OutputFeedback { g } => {
            if g.ncols() != y.len() {
                return Err(Error::dim("output-feedback gain does not match the output"));
            }
            Ok(g * y)
        }
        Controller::None { profile } => {
            let mut u = Vector::zeros(n_inputs);
            for (i, terms) in profile.iter().enumerate().take(n_inputs) {
                u[i] = disturbance_eval(terms, t);
            }
            Ok(u)
        }
    }
}

/// Steady-state Kalman-Bucy flow `Ax̂ + Bu + K_f(y − Cx̂)`.
pub fn kalman_rhs(a: &Mat, b: &Mat, c: &Mat, kf: &Mat, xhat: &Vector, u: &Vector, y: &Vector) -> Vector {
    a * xhat + b * u + kf * (y - c * xhat)
}

/// Linear observer `x̂' = Ax̂ + Bu + L(y − Cx̂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Luenberger {
    #[serde(with = "crate::linalg::serde_rows")]
    pub a: Mat,
    #[serde(with = "crate::linalg::serde_rows")]
    pub b: Mat,
    #[serde(with = "crate::linalg::serde_rows")]
    pub c: Mat,
    #[serde(with = "crate::linalg::serde_rows")]
    pub l: Mat,
}

impl Luenberger {
    pub fn rhs(&self, xhat: &Vector, u: &Vector, y: &Vector) -> Vector {
        kalman_rhs(&self.a, &self.b, &self.c, &self.l, xhat, u, y)
    }

    pub fn observer_matrix(&self) -> Mat {
        &self.a - &self.l * &self.c
    }
}

/// Luenberger observer for the pendulum linearized upright at the perturbed design point.
pub fn gslo_build(params: &PendulumParams, delta: f64, shift: Option<f64>) -> Result<Luenberger> {
    let m = params.m0 * (1.0 + delta);
    let l = params.l0 * (1.0 + delta);
    let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, params.g / l, -params.friction / (m * l * l)]);
    let b = Mat::from_row_slice(2, 1, &[0.0, 1.0 / (m * l * l)]);
    let c = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
    let w = match shift {
        Some(s) => output_injection_with_shift(&a, &c, s)?,
        None => stabilizing_output_injection(&a, &c)?,
    };
    Ok(Luenberger { a, b, c, l: -w })
}

/// Unknown-input observer `ż = Nz + Ly + Gu`, `x̂ = z − Ey`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UioRealization {
    #[serde(with = "crate::linalg::serde_rows")]
    pub n: Mat,
    #[serde(with = "crate::linalg::serde_rows")]
    pub l: Mat,
    #[serde(with = "crate::linalg::serde_rows")]
    pub g: Mat,
    #[serde(with = "crate::linalg::serde_rows")]
    pub e: Mat,
    #[serde(with = "crate::linalg::serde_rows")]
    pub t: Mat,
    /// Stabilizing part of `L`: `N = TA − K₁C`, `L = K₁ − NE`.
    #[serde(with = "crate::linalg::serde_rows")]
    pub k1: Mat,
}

impl UioRealization {
    pub fn rhs(&self, z: &Vector, u: &Vector, y: &Vector) -> Vector {
        &self.n * z + &self.l * y + &self.g * u
    }

    pub fn estimate(&self, z: &Vector, y: &Vector) -> Vector {
        z - &self.e * y
    }
}

pub fn uio_build(a: &Mat, b: &Mat, b_w: &Mat, c: &Mat, shift: Option<f64>) -> Result<UioRealization> {
    let ns = a.nrows();
    if b.nrows() != ns || b_w.nrows() != ns || c.ncols() != ns {
        return Err(Error::dim("A, B, B_w and C do not conform"));
    }
    let cbw = c * b_w;
    let r_bw = rank(b_w, RANK_TOL);
    if rank(&cbw, RANK_TOL) != r_bw {
        return Err(Error::InvalidParameter("rank(C·B_w) differs from rank(B_w)".into()));
    }
    if r_bw != b_w.ncols() {
        return Err(Error::InvalidParameter("B_w must have full column rank".into()));
    }
    let e = -(b_w * pinv_full_column(&cbw)?);
    let t = Mat::identity(ns, ns) + &e * c;
    if max_abs(&(&t * b_w)) > 1e-10 * max_abs(b_w).max(1.0) {
        return Err(Error::NoConvergence("decoupling condition T·B_w = 0 not met".into()));
    }
    let ta = &t * a;
    let shift = shift.unwrap_or_else(|| crate::linalg::inf_norm(&ta) + 1.0);
    let k1 = -output_injection_with_shift(&ta, c, shift)?;
    let n = &ta - &k1 * c;
    if !hurwitz_check(&n, 0.0) {
        return Err(Error::NotHurwitz);
    }
    let l = &k1 - &n * &e;
    let g = &t * b;
    Ok(UioRealization { n, l, g, e, t, k1 })
}
