//! Sector quadratic constraints and the observer LMIs as affine feasibility instances.
//!
//! Every instance is homogeneous in the decision vector `y = (vec_sym(P), λ)`:
//! the upper triangle of `P` in row-major order followed by the QC multipliers.

use serde::{Deserialize, Serialize};

use crate::linalg::{block_diag, hstack, max_abs, symmetrize, vstack, Mat, Vector};
use crate::sdp::{lambda_max, lambda_min, lyapunov_solve};
use crate::nn::{isolate_vector, IsolationForm, NeuralNet, ShapedNN, SignalStack};
use crate::{Error, Result};

/// `Ψ` together with the sector it encodes; `M(λ)` is produced on demand.
#[derive(Debug, Clone)]
pub struct QcData {
    pub psi: Mat,
    pub alpha: Vector,
    pub beta: Vector,
}

impl QcData {
    pub fn n_sigma(&self) -> usize {
        self.alpha.len()
    }

    /// `M(λ) = [[O, diag λ], [diag λ, O]]`.
    pub fn m(&self, lambda: &Vector) -> Result<Mat> {
        let n = self.n_sigma();
        if lambda.len() != n {
            return Err(Error::dim(format!("lambda has length {}, expected {n}", lambda.len())));
        }
        let d = Mat::from_diagonal(lambda);
        let mut m = Mat::zeros(2 * n, 2 * n);
        m.view_mut((0, n), (n, n)).copy_from(&d);
        m.view_mut((n, 0), (n, n)).copy_from(&d);
        Ok(m)
    }

    /// `[ξ; w]ᵀ Ψᵀ M(λ) Ψ [ξ; w]`.
    pub fn form(&self, xi: &Vector, w: &Vector, lambda: &Vector) -> Result<f64> {
        let n = self.n_sigma();
        if xi.len() != n || w.len() != n {
            return Err(Error::dim("signal length differs from the sector length"));
        }
        let mut z = Vector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(xi);
        z.rows_mut(n, n).copy_from(w);
        let pz = &self.psi * z;
        Ok(pz.dot(&(self.m(lambda)? * &pz)))
    }
}

/// `Ψ = [[diag β, −I], [−diag α, I]]`.
pub fn qc_matrices(alpha: &Vector, beta: &Vector) -> Result<QcData> {
    let n = alpha.len();
    if beta.len() != n {
        return Err(Error::dim("alpha and beta lengths differ"));
    }
    if let Some(i) = (0..n).find(|&i| alpha[i] > beta[i]) {
        return Err(Error::InvalidParameter(format!("alpha > beta at index {i}")));
    }
    let eye = Mat::identity(n, n);
    let psi = vstack(&[
        hstack(&[Mat::from_diagonal(beta), -&eye])?,
        hstack(&[-Mat::from_diagonal(alpha), eye])?,
    ])?;
    Ok(QcData {
        psi,
        alpha: alpha.clone(),
        beta: beta.clone(),
    })
}

/// The expanded sum `2 Σ λᵢ (wᵢ − αᵢξᵢ)(βᵢξᵢ − wᵢ)`.
pub fn qc_expanded(alpha: &Vector, beta: &Vector, xi: &Vector, w: &Vector, lambda: &Vector) -> f64 {
    (0..alpha.len())
        .map(|i| 2.0 * lambda[i] * (w[i] - alpha[i] * xi[i]) * (beta[i] * xi[i] - w[i]))
        .sum()
}

/// Quadratic-constraint value of a signal stack under the sector of `iso`.
pub fn qc_value(iso: &IsolationForm, stack: &SignalStack, lambda: &Vector) -> Result<f64> {
    if lambda.len() != iso.n_sigma {
        return Err(Error::dim("lambda length differs from the stack size"));
    }
    qc_matrices(&iso.alpha, &iso.beta)?.form(&stack.xi, &stack.w, lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    /// `F(y) ≺ 0`
    Neg,
    /// `F(y) ≻ 0`
    Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Theorem1,
    Theorem2,
    Theorem3,
    Corollary2,
    Theorem4,
    Custom,
}

/// One affine constraint `F(y) = F0 + Σ yᵢ Fᵢ` with a required sign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Constraint {
    pub sign: Sign,
    /// Required slack: `F + margin·I ⪯ 0` or `F − margin·I ⪰ 0`.
    pub margin: f64,
    #[serde(rename = "F0", with = "crate::linalg::serde_rows")]
    pub f0: Mat,
    #[serde(rename = "Fi", with = "crate::linalg::serde_rows_vec")]
    pub fi: Vec<Mat>,
}

impl Constraint {
    pub fn new(sign: Sign, margin: f64, f0: Mat, fi: Vec<Mat>) -> Result<Self> {
        let m = f0.nrows();
        let all = std::iter::once(&f0).chain(fi.iter());
        for f in all {
            if f.shape() != (m, m) {
                return Err(Error::dim("constraint matrices must share one square shape"));
            }
            if max_abs(&(f - f.transpose())) != 0.0 {
                return Err(Error::NotSymmetric {
                    residual: max_abs(&(f - f.transpose())),
                });
            }
        }
        Ok(Self { sign, margin, f0, fi })
    }

    pub fn eval(&self, y: &[f64]) -> Mat {
        let mut f = self.f0.clone();
        for (yi, fi) in y.iter().zip(&self.fi) {
            if *yi != 0.0 {
                f += fi * *yi;
            }
        }
        f
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmiInstance {
    #[serde(rename = "m_P")]
    pub p_size: usize,
    pub n_lambda: usize,
    pub constraints: Vec<Constraint>,
    pub provenance: Provenance,
    /// Optional initial point for the solver; never trusted by the verifier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
}

impl LmiInstance {
    pub fn new(p_size: usize, n_lambda: usize, constraints: Vec<Constraint>, provenance: Provenance) -> Result<Self> {
        let inst = Self {
            p_size,
            n_lambda,
            constraints,
            provenance,
            start: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        for (j, c) in self.constraints.iter().enumerate() {
            if c.fi.len() != n {
                return Err(Error::Schema(format!(
                    "constraint {j} has {} coefficient matrices, expected {n}",
                    c.fi.len()
                )));
            }
            if self.start.as_ref().is_some_and(|y| y.len() != n) {
                return Err(Error::Schema(format!("start point must have length {n}")));
            }
            Constraint::new(c.sign, c.margin, c.f0.clone(), c.fi.clone())?;
            if !(c.margin >= 0.0) {
                return Err(Error::Schema(format!("constraint {j} has a negative margin")));
            }
        }
        Ok(())
    }

    pub fn n_p_vars(&self) -> usize {
        self.p_size * (self.p_size + 1) / 2
    }

    pub fn n_vars(&self) -> usize {
        self.n_p_vars() + self.n_lambda
    }

    pub fn eval_constraint(&self, j: usize, y: &[f64]) -> Result<Mat> {
        if y.len() != self.n_vars() {
            return Err(Error::dim(format!(
                "decision vector has length {}, expected {}",
                y.len(),
                self.n_vars()
            )));
        }
        Ok(self.constraints[j].eval(y))
    }

    /// Largest coefficient magnitude over all constraints.
    pub fn scale(&self) -> f64 {
        self.constraints
            .iter()
            .flat_map(|c| std::iter::once(&c.f0).chain(c.fi.iter()))
            .map(max_abs)
            .fold(0.0, f64::max)
    }

    /// Re-derives strict margins as `rel · scale`; non-strict constraints (zero margin) stay.
    pub fn with_margin_rel(mut self, rel: f64) -> Self {
        let mu = rel * self.scale();
        for c in &mut self.constraints {
            if c.margin > 0.0 {
                c.margin = mu;
            }
        }
        self
    }

    pub fn pack(&self, p: &Mat, lambda: &Vector) -> Result<Vec<f64>> {
        if p.shape() != (self.p_size, self.p_size) || lambda.len() != self.n_lambda {
            return Err(Error::dim("pack: P or lambda has the wrong size"));
        }
        let mut y = Vec::with_capacity(self.n_vars());
        for i in 0..self.p_size {
            for j in i..self.p_size {
                y.push(p[(i, j)]);
            }
        }
        y.extend(lambda.iter());
        Ok(y)
    }

    pub fn unpack(&self, y: &[f64]) -> Result<(Mat, Vector)> {
        if y.len() != self.n_vars() {
            return Err(Error::dim("unpack: decision vector has the wrong length"));
        }
        let n = self.p_size;
        let mut p = Mat::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                p[(i, j)] = y[k];
                p[(j, i)] = y[k];
                k += 1;
            }
        }
        Ok((p, Vector::from_column_slice(&y[k..])))
    }

    /// The main (first) constraint evaluated at `(P, λ)`.
    pub fn main_at(&self, p: &Mat, lambda: &Vector) -> Result<Mat> {
        self.eval_constraint(0, &self.pack(p, lambda)?)
    }
}

fn sym_basis(n: usize) -> Vec<Mat> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            let mut e = Mat::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            out.push(e);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum OffSign {
    Plus,
    Minus,
}

/// `R_πᵀ [[ĀᵀP + PĀ, ±P g], [±gᵀP, O]] R_π + R_ξᵀ Ψᵀ M(λ) Ψ R_ξ ≺ 0`, plus `P ≻ 0`, `λ ≥ 0`.
fn assemble(a_bar: &Mat, off: OffSign, g: &Mat, iso: &IsolationForm, provenance: Provenance) -> Result<LmiInstance> {
    let n = a_bar.nrows();
    let q = iso.output_dim();
    if !a_bar.is_square() || iso.ambient_dim() != n {
        return Err(Error::dim(format!(
            "system order {n} differs from the shaped ambient dimension {}",
            iso.ambient_dim()
        )));
    }
    if g.shape() != (n, q) {
        return Err(Error::dim(format!(
            "net stack output dimension {q} does not match the coupling {}x{}",
            g.nrows(),
            g.ncols()
        )));
    }
    let ns = iso.n_sigma;
    let dim = n + ns;
    let sgn = if off == OffSign::Plus { 1.0 } else { -1.0 };

    let mut fi = Vec::new();
    for e in sym_basis(n) {
        let tl = a_bar.transpose() * &e + &e * a_bar;
        let tr = &e * g * sgn;
        let x = vstack(&[
            hstack(&[tl, tr.clone()])?,
            hstack(&[tr.transpose(), Mat::zeros(q, q)])?,
        ])?;
        fi.push(symmetrize(&(iso.r_pi.transpose() * x * &iso.r_pi)));
    }
    let qc = qc_matrices(&iso.alpha, &iso.beta)?;
    let psi_r = &qc.psi * &iso.r_xi;
    for k in 0..ns {
        let u = psi_r.row(k).transpose();
        let v = psi_r.row(ns + k).transpose();
        let f = &u * v.transpose() + &v * u.transpose();
        fi.push(symmetrize(&f));
    }
    let main = Constraint::new(Sign::Neg, 0.0, Mat::zeros(dim, dim), fi)?;

    let np = n * (n + 1) / 2;
    let mut p_fi = sym_basis(n);
    p_fi.extend((0..ns).map(|_| Mat::zeros(n, n)));
    let pos_p = Constraint::new(Sign::Pos, 0.0, Mat::zeros(n, n), p_fi)?;

    let mut constraints = vec![main, pos_p];
    if ns > 0 {
        let mut l_fi: Vec<Mat> = (0..np).map(|_| Mat::zeros(ns, ns)).collect();
        for k in 0..ns {
            let mut e = Mat::zeros(ns, ns);
            e[(k, k)] = 1.0;
            l_fi.push(e);
        }
        constraints.push(Constraint::new(Sign::Pos, 0.0, Mat::zeros(ns, ns), l_fi)?);
    }
    let mut inst = LmiInstance::new(n, ns, constraints, provenance)?;
    let mu = DEFAULT_MARGIN_REL * inst.scale();
    inst.constraints[0].margin = mu;
    inst.constraints[1].margin = mu;
    let a_tilde = a_bar + g * &iso.n_pi_x * sgn;
    inst.start = lyapunov_start(&inst, &a_tilde);
    Ok(inst)
}

/// `P₀` solving `ÃᵀP₀ + P₀Ã = −I` with the best uniform `λ` on a log grid, scaled past the margins.
fn lyapunov_start(inst: &LmiInstance, a_tilde: &Mat) -> Option<Vec<f64>> {
    let n = a_tilde.nrows();
    let p0 = lyapunov_solve(a_tilde, &Mat::identity(n, n)).ok()?;
    let p0 = &p0 / max_abs(&p0);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in -12..=12 {
        let lambda = Vector::from_element(inst.n_lambda, 10f64.powi(k));
        let y = inst.pack(&p0, &lambda).ok()?;
        let lmax = lambda_max(&inst.constraints[0].eval(&y)).ok()?;
        if best.as_ref().map_or(true, |(b, _)| lmax < *b) {
            best = Some((lmax, y));
        }
        if inst.n_lambda == 0 {
            break;
        }
    }
    let (lmax, y) = best?;
    let pmin = lambda_min(&p0).ok()?;
    let slack = (-lmax).min(pmin);
    let need = 4.0 * inst.constraints[0].margin.max(inst.constraints[1].margin);
    let k = if slack > 0.0 && slack < need { need / slack } else { 1.0 };
    Some(y.iter().map(|v| v * k).collect())
}

/// Default strictness margin relative to the instance scale.
pub const DEFAULT_MARGIN_REL: f64 = 1e-6;

/// Shift matrix of order `n + 1` and `c̃ = [1, 0, …, 0]`.
pub fn chain_matrices(n: usize) -> (Mat, Mat) {
    let m = n + 1;
    let a = Mat::from_fn(m, m, |i, j| if j == i + 1 { 1.0 } else { 0.0 });
    let mut c = Mat::zeros(1, m);
    c[(0, 0)] = 1.0;
    (a, c)
}

/// `𝐀_ε = [[εA, B_w], [O, O]]` and `𝐂 = [C, O]`.
pub fn extended_matrices(a: &Mat, b_w: &Mat, c: &Mat, eps: f64) -> Result<(Mat, Mat)> {
    let ns = a.nrows();
    let nq = b_w.ncols();
    if b_w.nrows() != ns || c.ncols() != ns || !a.is_square() {
        return Err(Error::dim("A, B_w and C do not conform"));
    }
    let ae = vstack(&[
        hstack(&[a * eps, b_w.clone()])?,
        Mat::zeros(nq, ns + nq),
    ])?;
    let ce = hstack(&[c.clone(), Mat::zeros(c.nrows(), nq)])?;
    Ok((ae, ce))
}

pub fn assemble_theorem1(a: &Mat, c: &Mat, net: &NeuralNet) -> Result<LmiInstance> {
    let ns = a.nrows();
    if c.ncols() != ns || net.input_dim() != c.nrows() || net.output_dim() != ns {
        return Err(Error::dim(format!(
            "net must map {} outputs to {ns} states (got {} -> {})",
            c.nrows(),
            net.input_dim(),
            net.output_dim()
        )));
    }
    let snn = ShapedNN::new(net, c.clone(), Mat::identity(ns, ns))?;
    let iso = isolate_vector(&[snn])?;
    assemble(a, OffSign::Plus, &Mat::identity(ns, ns), &iso, Provenance::Theorem1)
}

/// Closed loop `[x; x̂ − x]`: controller `net1` reads `x̂ = [I, I]·z` and acts through `B`;
/// observer `net2` reads `C(x̂ − x) = [O, C]·z`.
pub fn assemble_theorem2(a: &Mat, b: &Mat, c: &Mat, net1: &NeuralNet, net2: &NeuralNet) -> Result<LmiInstance> {
    let ns = a.nrows();
    if b.nrows() != ns || c.ncols() != ns {
        return Err(Error::dim("A, B and C do not conform"));
    }
    if net1.input_dim() != ns || net1.output_dim() != b.ncols() {
        return Err(Error::dim("controller net must map states to inputs"));
    }
    if net2.input_dim() != c.nrows() || net2.output_dim() != ns {
        return Err(Error::dim("observer net must map outputs to states"));
    }
    let eye = Mat::identity(ns, ns);
    let t11 = hstack(&[eye.clone(), eye.clone()])?;
    let t12 = hstack(&[Mat::zeros(c.nrows(), ns), c.clone()])?;
    let stack = [
        ShapedNN::new(net1, t11, b.clone())?,
        ShapedNN::new(net2, t12, eye)?,
    ];
    let iso = isolate_vector(&stack)?;
    let a_hat = block_diag(&[a.clone(), a.clone()]);
    assemble(&a_hat, OffSign::Plus, &Mat::identity(2 * ns, 2 * ns), &iso, Provenance::Theorem2)
}

fn check_scalar_net(net: &NeuralNet) -> Result<()> {
    if net.input_dim() != 1 || net.output_dim() != 1 {
        return Err(Error::dim("chain nets must be scalar-in, scalar-out"));
    }
    Ok(())
}

pub fn assemble_theorem3(n: usize, nets: &[&NeuralNet]) -> Result<LmiInstance> {
    if nets.len() != n + 1 {
        return Err(Error::dim(format!("order {n} needs {} nets, got {}", n + 1, nets.len())));
    }
    let (a, c) = chain_matrices(n);
    let mut stack = Vec::new();
    for net in nets {
        check_scalar_net(net)?;
        stack.push(ShapedNN::new(net, c.clone(), Mat::identity(1, 1))?);
    }
    let iso = isolate_vector(&stack)?;
    assemble(&a, OffSign::Minus, &Mat::identity(n + 1, n + 1), &iso, Provenance::Theorem3)
}

pub fn assemble_corollary2(n: usize, net: &NeuralNet, b_gains: &Vector) -> Result<LmiInstance> {
    check_scalar_net(net)?;
    if b_gains.len() != n + 1 {
        return Err(Error::dim(format!("gain vector needs length {}", n + 1)));
    }
    let (a, c) = chain_matrices(n);
    let iso = isolate_vector(&[ShapedNN::new(net, c, Mat::identity(1, 1))?])?;
    let g = Mat::from_column_slice(n + 1, 1, b_gains.as_slice());
    assemble(&a, OffSign::Minus, &g, &iso, Provenance::Corollary2)
}

pub fn assemble_theorem4(
    a: &Mat,
    b_w: &Mat,
    c: &Mat,
    eps: f64,
    net1: &NeuralNet,
    net2: &NeuralNet,
) -> Result<LmiInstance> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")));
    }
    let (ae, ce) = extended_matrices(a, b_w, c, eps)?;
    let ns = a.nrows();
    let nq = b_w.ncols();
    if net1.input_dim() != c.nrows() || net2.input_dim() != c.nrows() {
        return Err(Error::dim("both nets must read the measured output"));
    }
    if net1.output_dim() != ns || net2.output_dim() != nq {
        return Err(Error::dim(format!("net outputs must be {ns} and {nq}")));
    }
    let stack = [
        ShapedNN::new(net1, ce.clone(), Mat::identity(ns, ns))?,
        ShapedNN::new(net2, ce, Mat::identity(nq, nq))?,
    ];
    let iso = isolate_vector(&stack)?;
    assemble(&ae, OffSign::Minus, &Mat::identity(ns + nq, ns + nq), &iso, Provenance::Theorem4)
}
