//! Residual feed-forward networks and their isolation into block-matrix form.
//!
//! A network with `L` hidden layers computes
//! `π(x) = W^{L+1} σ(W^L σ(… σ(W¹ x))) + W^{L+2} x`, where `W^{L+2}` is the
//! shortcut. Stacking every pre-activation into `ξ` and every post-activation
//! into `w` turns the network into linear maps around the elementwise
//! nonlinearity `w = σ(ξ)`; [`isolate`] and [`isolate_vector`] build them.

use serde::{Deserialize, Serialize};

use crate::linalg::{block_diag, from_rows, hstack, to_rows, vstack, Mat, Vector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    LeakyRelu { slope: f64 },
    Fal { gamma: f64, delta: f64 },
}

impl Activation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::LeakyRelu { slope } if !(slope > 0.0 && slope < 1.0) => Err(
                Error::InvalidParameter(format!("leaky_relu slope {slope} outside (0, 1)")),
            ),
            Activation::Fal { gamma, delta } if !(gamma > 0.0 && gamma < 1.0) || !(delta > 0.0) => {
                Err(Error::InvalidParameter(format!(
                    "fal requires 0 < gamma < 1 and delta > 0 (got {gamma}, {delta})"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            Activation::Relu => s.max(0.0),
            Activation::Tanh => s.tanh(),
            Activation::LeakyRelu { slope } => {
                if s >= 0.0 {
                    s
                } else {
                    slope * s
                }
            }
            Activation::Fal { gamma, delta } => {
                if s.abs() > delta {
                    s.abs().powf(gamma) * s.signum()
                } else {
                    s / delta.powf(1.0 - gamma)
                }
            }
        }
    }

    pub fn sector(&self) -> (f64, f64) {
        sector_of(*self)
    }
}

/// Tightest global sector `(α, β)` of an activation.
pub fn sector_of(kind: Activation) -> (f64, f64) {
    match kind {
        Activation::Relu | Activation::Tanh => (0.0, 1.0),
        Activation::LeakyRelu { slope } => (slope, 1.0),
        Activation::Fal { gamma, delta } => (0.0, delta.powf(gamma - 1.0)),
    }
}

/// Pre- and post-activation signals stacked layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalStack {
    pub xi: Vector,
    pub w: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralNet {
    weights: Vec<Mat>,
    activation: Activation,
    alpha: Vector,
    beta: Vector,
}

impl NeuralNet {
    /// `weights` holds `W¹ … W^{L+1}` followed by the shortcut `W^{L+2}`.
    pub fn new(weights: Vec<Mat>, activation: Activation) -> Result<Self> {
        activation.validate()?;
        if weights.len() < 3 {
            return Err(Error::dim("a net needs at least one hidden layer (L >= 1)"));
        }
        let l = weights.len() - 2;
        for k in 1..=l {
            if weights[k].ncols() != weights[k - 1].nrows() {
                return Err(Error::dim(format!(
                    "W{} has {} columns but W{} has {} rows",
                    k + 1,
                    weights[k].ncols(),
                    k,
                    weights[k - 1].nrows()
                )));
            }
        }
        let short = &weights[l + 1];
        if short.ncols() != weights[0].ncols() || short.nrows() != weights[l].nrows() {
            return Err(Error::dim(format!(
                "shortcut is {}x{}, expected {}x{}",
                short.nrows(),
                short.ncols(),
                weights[l].nrows(),
                weights[0].ncols()
            )));
        }
        let n_sigma: usize = weights[..l].iter().map(|w| w.nrows()).sum();
        let (a, b) = activation.sector();
        Ok(Self {
            weights,
            activation,
            alpha: Vector::from_element(n_sigma, a),
            beta: Vector::from_element(n_sigma, b),
        })
    }

    /// Replaces the default sector. The override must contain the activation's slope range.
    pub fn with_sector(mut self, alpha: Vector, beta: Vector) -> Result<Self> {
        let n = self.n_sigma();
        if alpha.len() != n || beta.len() != n {
            return Err(Error::dim(format!("sector vectors must have length {n}")));
        }
        let (a0, b0) = self.activation.sector();
        for i in 0..n {
            if alpha[i] > beta[i] {
                return Err(Error::InvalidParameter(format!("alpha[{i}] > beta[{i}]")));
            }
            if alpha[i] > a0 || beta[i] < b0 {
                return Err(Error::InvalidParameter(format!(
                    "sector [{}, {}] at neuron {i} does not contain [{a0}, {b0}]",
                    alpha[i], beta[i]
                )));
            }
        }
        self.alpha = alpha;
        self.beta = beta;
        Ok(self)
    }

    pub fn hidden_layers(&self) -> usize {
        self.weights.len() - 2
    }

    /// `n₀ … n_{L+1}`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.weights[0].ncols()];
        w.extend(self.weights[..=self.hidden_layers()].iter().map(|m| m.nrows()));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.shortcut().nrows()
    }

    pub fn n_sigma(&self) -> usize {
        self.weights[..self.hidden_layers()].iter().map(|w| w.nrows()).sum()
    }

    /// `W^l` for `l = 1 … L+2`.
    pub fn weight(&self, l: usize) -> &Mat {
        &self.weights[l - 1]
    }

    pub fn weights(&self) -> &[Mat] {
        &self.weights
    }

    pub fn shortcut(&self) -> &Mat {
        &self.weights[self.weights.len() - 1]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn alpha(&self) -> &Vector {
        &self.alpha
    }

    pub fn beta(&self) -> &Vector {
        &self.beta
    }

    /// The net `x ↦ π(−x)`: first layer and shortcut negated, sector unchanged.
    pub fn input_negated(&self) -> Self {
        let mut out = self.clone();
        out.weights[0] = -&out.weights[0];
        let last = out.weights.len() - 1;
        out.weights[last] = -&out.weights[last];
        out
    }

    /// The net `x ↦ c·π(x)`: output layer and shortcut scaled.
    pub fn output_scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        let l = out.hidden_layers();
        out.weights[l] *= c;
        out.weights[l + 1] *= c;
        out
    }

    fn check_input(&self, x: &Vector) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::dim(format!(
                "net input has length {}, expected {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Vector) -> Result<Vector> {
        self.check_input(x)?;
        let l = self.hidden_layers();
        let mut h = x.clone();
        for w in &self.weights[..l] {
            h = (w * h).map(|s| self.activation.eval(s));
        }
        Ok(&self.weights[l] * h + self.shortcut() * x)
    }

    pub fn collect_signals(&self, x: &Vector) -> Result<SignalStack> {
        self.check_input(x)?;
        let l = self.hidden_layers();
        let n = self.n_sigma();
        let mut xi = Vector::zeros(n);
        let mut w = Vector::zeros(n);
        let mut h = x.clone();
        let mut off = 0;
        for layer in &self.weights[..l] {
            let pre = layer * &h;
            let post = pre.map(|s| self.activation.eval(s));
            xi.rows_mut(off, pre.len()).copy_from(&pre);
            w.rows_mut(off, post.len()).copy_from(&post);
            off += pre.len();
            h = post;
        }
        Ok(SignalStack { xi, w })
    }
}

/// Wire format of a [`NeuralNet`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetFile {
    #[serde(rename = "L")]
    pub l: usize,
    pub widths: Vec<usize>,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
}

impl TryFrom<NetFile> for NeuralNet {
    type Error = Error;

    fn try_from(f: NetFile) -> Result<Self> {
        if f.weights.len() != f.l + 2 {
            return Err(Error::Schema(format!(
                "L = {} requires {} weight matrices, found {}",
                f.l,
                f.l + 2,
                f.weights.len()
            )));
        }
        let weights = f
            .weights
            .iter()
            .map(|w| from_rows(w))
            .collect::<Result<Vec<_>>>()?;
        let net = NeuralNet::new(weights, f.activation)?;
        if net.widths() != f.widths {
            return Err(Error::Schema(format!(
                "declared widths {:?} disagree with weights {:?}",
                f.widths,
                net.widths()
            )));
        }
        match (f.alpha, f.beta) {
            (None, None) => Ok(net),
            (a, b) => {
                let a = a.map(Vector::from_vec).unwrap_or_else(|| net.alpha.clone());
                let b = b.map(Vector::from_vec).unwrap_or_else(|| net.beta.clone());
                net.with_sector(a, b)
            }
        }
    }
}

impl From<&NeuralNet> for NetFile {
    fn from(net: &NeuralNet) -> Self {
        let (a0, b0) = net.activation.sector();
        let default_sector =
            net.alpha.iter().all(|&a| a == a0) && net.beta.iter().all(|&b| b == b0);
        NetFile {
            l: net.hidden_layers(),
            widths: net.widths(),
            weights: net.weights.iter().map(to_rows).collect(),
            activation: net.activation,
            alpha: (!default_sector).then(|| net.alpha.iter().copied().collect()),
            beta: (!default_sector).then(|| net.beta.iter().copied().collect()),
        }
    }
}

impl Serialize for NeuralNet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for NeuralNet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        NeuralNet::try_from(NetFile::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// A net embedded in a larger signal space: input `T¹ x`, output `T² π(T¹ x)`.
#[derive(Debug, Clone)]
pub struct ShapedNN<'a> {
    pub net: &'a NeuralNet,
    pub t1: Mat,
    pub t2: Mat,
}

impl<'a> ShapedNN<'a> {
    pub fn new(net: &'a NeuralNet, t1: Mat, t2: Mat) -> Result<Self> {
        if t1.nrows() != net.input_dim() {
            return Err(Error::dim(format!(
                "T1 has {} rows, net input is {}",
                t1.nrows(),
                net.input_dim()
            )));
        }
        if t2.ncols() != net.output_dim() {
            return Err(Error::dim(format!(
                "T2 has {} columns, net output is {}",
                t2.ncols(),
                net.output_dim()
            )));
        }
        Ok(Self { net, t1, t2 })
    }

    /// Identity shaping.
    pub fn plain(net: &'a NeuralNet) -> Self {
        Self {
            net,
            t1: Mat::identity(net.input_dim(), net.input_dim()),
            t2: Mat::identity(net.output_dim(), net.output_dim()),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.t1.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.t2.nrows()
    }

    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        Ok(&self.t2 * self.net.forward(&(&self.t1 * x))?)
    }
}

/// Linear maps around the stacked activations of one net or a stack of nets.
#[derive(Debug, Clone)]
pub struct IsolationForm {
    pub n_pi_x: Mat,
    pub n_pi_w: Mat,
    pub n_xi_x: Mat,
    pub n_xi_w: Mat,
    /// `[[I, O], [N_πx, N_πw]]`.
    pub r_pi: Mat,
    /// `[[N_ξx, N_ξw], [O, I]]`.
    pub r_xi: Mat,
    pub n_sigma: usize,
    pub alpha: Vector,
    pub beta: Vector,
    /// Activation count of each stacked net.
    pub blocks: Vec<usize>,
}

impl IsolationForm {
    pub fn ambient_dim(&self) -> usize {
        self.n_pi_x.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.n_pi_x.nrows()
    }
}

struct NetBlocks {
    pi_x: Mat,
    pi_w: Mat,
    xi_x: Mat,
    xi_w: Mat,
}

fn net_blocks(snn: &ShapedNN) -> NetBlocks {
    let net = snn.net;
    let l = net.hidden_layers();
    let widths = net.widths();
    let n_sigma = net.n_sigma();
    let nx = snn.ambient_dim();
    let p = snn.output_dim();

    let pi_x = &snn.t2 * net.shortcut() * &snn.t1;

    let mut pi_w = Mat::zeros(p, n_sigma);
    let last = widths[l];
    pi_w.view_mut((0, n_sigma - last), (p, last))
        .copy_from(&(&snn.t2 * net.weight(l + 1)));

    let mut xi_x = Mat::zeros(n_sigma, nx);
    xi_x.view_mut((0, 0), (widths[1], nx))
        .copy_from(&(net.weight(1) * &snn.t1));

    let mut xi_w = Mat::zeros(n_sigma, n_sigma);
    let mut row = widths[1];
    let mut col = 0;
    for k in 2..=l {
        let w = net.weight(k);
        xi_w.view_mut((row, col), w.shape()).copy_from(w);
        col += widths[k - 1];
        row += widths[k];
    }
    NetBlocks { pi_x, pi_w, xi_x, xi_w }
}

/// Isolation of a single shaped net.
pub fn isolate(snn: &ShapedNN) -> Result<IsolationForm> {
    isolate_vector(std::slice::from_ref(snn))
}

/// Isolation of a stack of shaped nets sharing one ambient signal.
pub fn isolate_vector(snns: &[ShapedNN]) -> Result<IsolationForm> {
    let first = snns.first().ok_or_else(|| Error::dim("empty net stack"))?;
    let nx = first.ambient_dim();
    if snns.iter().any(|s| s.ambient_dim() != nx) {
        return Err(Error::dim("stacked nets disagree on the ambient dimension"));
    }
    let parts: Vec<NetBlocks> = snns.iter().map(net_blocks).collect();
    let n_pi_x = vstack(&parts.iter().map(|p| p.pi_x.clone()).collect::<Vec<_>>())?;
    let n_pi_w = block_diag(&parts.iter().map(|p| p.pi_w.clone()).collect::<Vec<_>>());
    let n_xi_x = vstack(&parts.iter().map(|p| p.xi_x.clone()).collect::<Vec<_>>())?;
    let n_xi_w = block_diag(&parts.iter().map(|p| p.xi_w.clone()).collect::<Vec<_>>());
    let n_sigma = n_xi_w.nrows();
    let p = n_pi_x.nrows();

    let r_pi = vstack(&[
        hstack(&[Mat::identity(nx, nx), Mat::zeros(nx, n_sigma)])?,
        hstack(&[n_pi_x.clone(), n_pi_w.clone()])?,
    ])?;
    let r_xi = vstack(&[
        hstack(&[n_xi_x.clone(), n_xi_w.clone()])?,
        hstack(&[Mat::zeros(n_sigma, nx), Mat::identity(n_sigma, n_sigma)])?,
    ])?;
    debug_assert_eq!(r_pi.nrows(), nx + p);

    let mut alpha = Vector::zeros(n_sigma);
    let mut beta = Vector::zeros(n_sigma);
    let mut off = 0;
    for s in snns {
        let n = s.net.n_sigma();
        alpha.rows_mut(off, n).copy_from(s.net.alpha());
        beta.rows_mut(off, n).copy_from(s.net.beta());
        off += n;
    }
    Ok(IsolationForm {
        n_pi_x,
        n_pi_w,
        n_xi_x,
        n_xi_w,
        r_pi,
        r_xi,
        n_sigma,
        alpha,
        beta,
        blocks: snns.iter().map(|s| s.net.n_sigma()).collect(),
    })
}

/// Signals of a shaped stack at ambient point `x`, concatenated net by net.
pub fn collect_stack_signals(snns: &[ShapedNN], x: &Vector) -> Result<SignalStack> {
    let mut xi = Vec::new();
    let mut w = Vec::new();
    for s in snns {
        let sig = s.net.collect_signals(&(&s.t1 * x))?;
        xi.extend(sig.xi.iter());
        w.extend(sig.w.iter());
    }
    Ok(SignalStack {
        xi: Vector::from_vec(xi),
        w: Vector::from_vec(w),
    })
}

/// Stacked shaped output `[T²₁π₁(T¹₁x); …]`.
pub fn stack_output(snns: &[ShapedNN], x: &Vector) -> Result<Vector> {
    let mut out = Vec::new();
    for s in snns {
        out.extend(s.eval(x)?.iter());
    }
    Ok(Vector::from_vec(out))
}
