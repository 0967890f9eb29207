//! Rank tests, stabilizing gains, diagonal-dominance checks and constructive synthesis.
//!
//! Synthesis fixes the shortcut of every net to a stabilizing injection gain,
//! draws the inner weights from a seeded uniform distribution and shrinks them
//! by halving until the LMI holds at an explicitly constructed `(P, λ)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linalg::{block_diag, hstack, inf_norm, max_abs, rank, symmetrize, vstack, Mat, Vector};
use crate::nn::{isolate_vector, Activation, NeuralNet, ShapedNN};
use crate::qc::{
    assemble_corollary2, assemble_theorem1, assemble_theorem2, assemble_theorem3, assemble_theorem4,
    chain_matrices, extended_matrices, LmiInstance,
};
use crate::sdp::{hurwitz_check, lambda_max, lambda_min, lyapunov_solve, lyapunov_solve_unchecked};
use crate::{Error, Result};

pub const RANK_TOL: f64 = 1e-9;

/// `[C; CA; …; CA^{n−1}]`.
pub fn obsv_matrix(c: &Mat, a: &Mat) -> Mat {
    let n = a.nrows();
    let mut blocks = Vec::with_capacity(n);
    let mut cur = c.clone();
    for _ in 0..n {
        blocks.push(cur.clone());
        cur = &cur * a;
    }
    vstack(&blocks).expect("blocks share the column count")
}

pub fn observability_rank(c: &Mat, a: &Mat, tol: f64) -> usize {
    rank(&obsv_matrix(c, a), tol)
}

pub fn observable(c: &Mat, a: &Mat, tol: f64) -> bool {
    a.is_square() && c.ncols() == a.nrows() && observability_rank(c, a, tol) == a.nrows()
}

pub fn controllable(a: &Mat, b: &Mat, tol: f64) -> bool {
    b.nrows() == a.nrows() && observable(&b.transpose(), &a.transpose(), tol)
}

fn require_observable(c: &Mat, a: &Mat) -> Result<()> {
    if !a.is_square() || c.ncols() != a.nrows() {
        return Err(Error::dim("C and A do not conform"));
    }
    let r = observability_rank(c, a, RANK_TOL);
    if r < a.nrows() {
        return Err(Error::Unobservable { rank: r, n: a.nrows() });
    }
    Ok(())
}

fn require_controllable(a: &Mat, b: &Mat) -> Result<()> {
    if b.nrows() != a.nrows() {
        return Err(Error::dim("A and B do not conform"));
    }
    let r = observability_rank(&b.transpose(), &a.transpose(), RANK_TOL);
    if r < a.nrows() {
        return Err(Error::Uncontrollable { rank: r, n: a.nrows() });
    }
    Ok(())
}

/// The augmented pair `(𝐂, 𝐀)` of a plant with unknown input channel `B_w`.
#[derive(Debug, Clone)]
pub struct ExtendedPair {
    pub a: Mat,
    pub b_w: Mat,
    pub c: Mat,
}

impl ExtendedPair {
    pub fn new(a: &Mat, c: &Mat, b_w: &Mat) -> Result<Self> {
        extended_matrices(a, b_w, c, 1.0)?;
        Ok(Self {
            a: a.clone(),
            b_w: b_w.clone(),
            c: c.clone(),
        })
    }

    /// `(𝐂, 𝐀_ε)`; `ε = 1` gives the unscaled pair.
    pub fn matrices(&self, eps: f64) -> (Mat, Mat) {
        let (ae, ce) = extended_matrices(&self.a, &self.b_w, &self.c, eps).expect("validated");
        (ce, ae)
    }

    pub fn rank(&self, eps: f64, tol: f64) -> usize {
        let (ce, ae) = self.matrices(eps);
        observability_rank(&ce, &ae, tol)
    }

    pub fn order(&self) -> usize {
        self.a.nrows() + self.b_w.ncols()
    }
}

pub fn extending_observable(a: &Mat, c: &Mat, b_w: &Mat, tol: f64) -> bool {
    match ExtendedPair::new(a, c, b_w) {
        Ok(p) => p.rank(1.0, tol) == p.order(),
        Err(_) => false,
    }
}

/// Bass gain `K = −BᵀS⁻¹` with `(A + βI)S + S(A + βI)ᵀ = 2BBᵀ`.
///
/// Every eigenvalue of `A + BK` then has real part exactly `−β`.
pub fn bass_feedback(a: &Mat, b: &Mat, shift: f64) -> Result<Mat> {
    let n = a.nrows();
    let shifted = -(a + Mat::identity(n, n) * shift).transpose();
    if !hurwitz_check(&shifted, 0.0) {
        return Err(Error::InvalidParameter(format!(
            "shift {shift} does not dominate the spectrum of A"
        )));
    }
    let s = lyapunov_solve_unchecked(&shifted, &(b * b.transpose() * 2.0))?;
    let s_inv = s.try_inverse().ok_or(Error::Singular)?;
    Ok(-(b.transpose() * s_inv))
}

/// Default Bass shift `‖A‖_∞ + 1`.
pub fn default_shift(a: &Mat) -> f64 {
    inf_norm(a) + 1.0
}

/// `K` with `A + BK` Hurwitz; `K = 0` when `A` already is.
pub fn stabilizing_state_feedback(a: &Mat, b: &Mat) -> Result<Mat> {
    require_controllable(a, b)?;
    if hurwitz_check(a, 0.0) {
        return Ok(Mat::zeros(b.ncols(), a.nrows()));
    }
    state_feedback_with_shift(a, b, default_shift(a))
}

/// Bass feedback at an explicit shift, verified Hurwitz.
pub fn state_feedback_with_shift(a: &Mat, b: &Mat, shift: f64) -> Result<Mat> {
    require_controllable(a, b)?;
    let k = bass_feedback(a, b, shift)?;
    if !hurwitz_check(&(a + b * &k), 0.0) {
        return Err(Error::NotHurwitz);
    }
    Ok(k)
}

/// `W` with `A + WC` Hurwitz (dual of [`stabilizing_state_feedback`]).
pub fn stabilizing_output_injection(a: &Mat, c: &Mat) -> Result<Mat> {
    require_observable(c, a)?;
    Ok(stabilizing_state_feedback(&a.transpose(), &c.transpose())?.transpose())
}

pub fn output_injection_with_shift(a: &Mat, c: &Mat, shift: f64) -> Result<Mat> {
    require_observable(c, a)?;
    Ok(state_feedback_with_shift(&a.transpose(), &c.transpose(), shift)?.transpose())
}

/// Diagonal-dominance data of one LMI evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct PropCheckReport {
    #[serde(with = "crate::linalg::serde_rows")]
    pub m1: Mat,
    #[serde(with = "crate::linalg::serde_rows")]
    pub m2: Mat,
    #[serde(with = "crate::linalg::serde_rows_opt")]
    pub m3: Option<Mat>,
    pub norm_m1: f64,
    pub norm_m1t: f64,
    pub norm_m2: f64,
    pub norm_m3: Option<f64>,
    pub q_min: f64,
    pub two_lambda_min: f64,
    /// `‖M₁‖ (+ ‖M₃‖) ≤ min q`.
    pub pass_state_rows: bool,
    /// `‖M₁ᵀ‖ + ‖M₂‖ ≤ 2 min λ`.
    pub pass_signal_rows: bool,
    #[serde(with = "crate::linalg::serde_rows")]
    pub p: Mat,
    #[serde(with = "crate::linalg::serde_vec")]
    pub lambda: Vector,
    /// `λ_max` of the assembled LMI at `(P, λ)`.
    pub lmi_lambda_max: f64,
    pub lmi_margin: f64,
    pub lmi_pass: bool,
}

impl PropCheckReport {
    pub fn pass(&self) -> bool {
        self.pass_state_rows && self.pass_signal_rows
    }
}

fn check_alpha_zero(net: &NeuralNet) -> Result<()> {
    if net.alpha().iter().any(|&a| a != 0.0) {
        return Err(Error::InvalidParameter(
            "diagonal-dominance checks require a zero lower sector".into(),
        ));
    }
    Ok(())
}

fn lmi_cross_check(inst: &LmiInstance, p: &Mat, lambda: &Vector) -> Result<(f64, f64, bool)> {
    let f = inst.main_at(p, lambda)?;
    let lmax = lambda_max(&f)?;
    let mu = inst.constraints[0].margin;
    let pmin = lambda_min(p)?;
    // The LMI is homogeneous in (P, λ); margins are restored by rescaling afterwards.
    Ok((lmax, mu, lmax < 0.0 && pmin > 0.0))
}

fn r1(alpha_beta: &Vector, lambda: &Vector) -> Mat {
    Mat::from_diagonal(&lambda.component_mul(alpha_beta))
}

pub fn prop2_check(a: &Mat, c: &Mat, net: &NeuralNet, q: &Vector, lambda: &Vector) -> Result<PropCheckReport> {
    check_alpha_zero(net)?;
    let ns = a.nrows();
    if q.len() != ns || lambda.len() != net.n_sigma() {
        return Err(Error::dim("Q or lambda has the wrong length"));
    }
    let inst = assemble_theorem1(a, c, net)?;
    let a_tilde = a + net.shortcut() * c;
    let p = lyapunov_solve(&a_tilde, &Mat::from_diagonal(q))?;
    let iso = isolate_vector(&[ShapedNN::new(net, c.clone(), Mat::identity(ns, ns))?])?;
    let r1 = r1(&iso.beta, lambda);
    let m1 = -(&p * &iso.n_pi_w) - iso.n_xi_x.transpose() * &r1;
    let m2 = &r1 * &iso.n_xi_w + iso.n_xi_w.transpose() * &r1;
    let (lmax, mu, lmi_pass) = lmi_cross_check(&inst, &p, lambda)?;
    let q_min = q.min();
    let two_lambda_min = 2.0 * lambda.min();
    let norm_m1 = inf_norm(&m1);
    let norm_m1t = inf_norm(&m1.transpose());
    let norm_m2 = inf_norm(&m2);
    Ok(PropCheckReport {
        pass_state_rows: norm_m1 <= q_min,
        pass_signal_rows: norm_m1t + norm_m2 <= two_lambda_min,
        m1,
        m2,
        m3: None,
        norm_m1,
        norm_m1t,
        norm_m2,
        norm_m3: None,
        q_min,
        two_lambda_min,
        p,
        lambda: lambda.clone(),
        lmi_lambda_max: lmax,
        lmi_margin: mu,
        lmi_pass,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn prop3_check(
    a: &Mat,
    b: &Mat,
    c: &Mat,
    net1: &NeuralNet,
    net2: &NeuralNet,
    q1: &Vector,
    q2: &Vector,
    lambda: &Vector,
) -> Result<PropCheckReport> {
    check_alpha_zero(net1)?;
    check_alpha_zero(net2)?;
    let ns = a.nrows();
    if q1.len() != ns || q2.len() != ns || lambda.len() != net1.n_sigma() + net2.n_sigma() {
        return Err(Error::dim("Q1, Q2 or lambda has the wrong length"));
    }
    let inst = assemble_theorem2(a, b, c, net1, net2)?;
    let bk = b * net1.shortcut();
    let p1 = lyapunov_solve(&(a + &bk), &Mat::from_diagonal(q1))?;
    let p2 = lyapunov_solve(&(a + net2.shortcut() * c), &Mat::from_diagonal(q2))?;
    let p = block_diag(&[p1.clone(), p2]);
    let eye = Mat::identity(ns, ns);
    let stack = [
        ShapedNN::new(net1, hstack(&[eye.clone(), eye.clone()])?, b.clone())?,
        ShapedNN::new(net2, hstack(&[Mat::zeros(c.nrows(), ns), c.clone()])?, eye)?,
    ];
    let iso = isolate_vector(&stack)?;
    let r1 = r1(&iso.beta, lambda);
    let m1 = -(&p * &iso.n_pi_w) - iso.n_xi_x.transpose() * &r1;
    let m2 = &r1 * &iso.n_xi_w + iso.n_xi_w.transpose() * &r1;
    let coupling = &p1 * &bk;
    let mut m3 = Mat::zeros(2 * ns, 2 * ns);
    m3.view_mut((0, ns), (ns, ns)).copy_from(&coupling);
    m3.view_mut((ns, 0), (ns, ns)).copy_from(&coupling.transpose());
    let (lmax, mu, lmi_pass) = lmi_cross_check(&inst, &p, lambda)?;
    let q_min = q1.min().min(q2.min());
    let two_lambda_min = 2.0 * lambda.min();
    let norm_m1 = inf_norm(&m1);
    let norm_m1t = inf_norm(&m1.transpose());
    let norm_m2 = inf_norm(&m2);
    let norm_m3 = inf_norm(&m3);
    Ok(PropCheckReport {
        pass_state_rows: norm_m1 + norm_m3 <= q_min,
        pass_signal_rows: norm_m1t + norm_m2 <= two_lambda_min,
        m1,
        m2,
        m3: Some(m3),
        norm_m1,
        norm_m1t,
        norm_m2,
        norm_m3: Some(norm_m3),
        q_min,
        two_lambda_min,
        p,
        lambda: lambda.clone(),
        lmi_lambda_max: lmax,
        lmi_margin: mu,
        lmi_pass,
    })
}

/// Same quantities read off an assembled LMI at `(P, λ)` whose state block is `−Q`.
///
/// Used for the chain and MIMO observers, where the LMI has the same
/// `−[[Q, M₁], [M₁ᵀ, 2Λ − M₂]]` layout.
pub fn dominance_report(inst: &LmiInstance, p: &Mat, lambda: &Vector) -> Result<PropCheckReport> {
    let f = inst.main_at(p, lambda)?;
    let n = inst.p_size;
    let ns = inst.n_lambda;
    let q = -f.view((0, 0), (n, n)).clone_owned();
    let m1 = -f.view((0, n), (n, ns)).clone_owned();
    let m2 = f.view((n, n), (ns, ns)).clone_owned() + Mat::from_diagonal(lambda) * 2.0;
    let offdiag_q = {
        let mut o = q.clone();
        o.fill_diagonal(0.0);
        o
    };
    let q_min = q.diagonal().min();
    let norm_m1 = inf_norm(&m1) + inf_norm(&offdiag_q);
    let norm_m1t = inf_norm(&m1.transpose());
    let norm_m2 = inf_norm(&m2);
    let (lmax, mu, lmi_pass) = lmi_cross_check(inst, p, lambda)?;
    Ok(PropCheckReport {
        pass_state_rows: norm_m1 <= q_min,
        pass_signal_rows: norm_m1t + norm_m2 <= 2.0 * lambda.min(),
        m1,
        m2,
        m3: None,
        norm_m1,
        norm_m1t,
        norm_m2,
        norm_m3: None,
        q_min,
        two_lambda_min: 2.0 * lambda.min(),
        p: p.clone(),
        lambda: lambda.clone(),
        lmi_lambda_max: lmax,
        lmi_margin: mu,
        lmi_pass,
    })
}

/// Hidden widths and activation of a synthesized net.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(hidden: Vec<usize>, activation: Activation) -> Result<Self> {
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::InvalidParameter("need at least one non-empty hidden layer".into()));
        }
        activation.validate()?;
        Ok(Self { hidden, activation })
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    /// Bass shift for the injection gains; `None` uses `‖A‖_∞ + 1` (or zero gain if already Hurwitz).
    pub shift: Option<f64>,
    pub max_halvings: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            shift: None,
            max_halvings: 80,
        }
    }
}

fn draw_inner(arch: &Architecture, n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Vec<Mat> {
    let mut dims = vec![n_in];
    dims.extend(&arch.hidden);
    dims.push(n_out);
    dims.windows(2)
        .map(|w| Mat::from_fn(w[1], w[0], |_, _| rng.gen_range(-1.0..1.0)))
        .collect()
}

/// Net with inner weights `s·inner`, the given shortcut and a zero lower sector.
fn build_net(inner: &[Mat], s: f64, shortcut: &Mat, activation: Activation) -> Result<NeuralNet> {
    let mut weights: Vec<Mat> = inner.iter().map(|w| w * s).collect();
    weights.push(shortcut.clone());
    let net = NeuralNet::new(weights, activation)?;
    let n = net.n_sigma();
    let beta = net.beta().clone();
    net.with_sector(Vector::zeros(n), beta)
}

/// Rescales `(P, λ)` so that the strict margins of `inst` hold with room to spare.
fn rescale_for_margins(inst: &LmiInstance, p: &Mat, lambda: &Vector) -> Result<(Mat, Vector)> {
    let f = inst.main_at(p, lambda)?;
    let slack = (-lambda_max(&f)?).min(lambda_min(p)?);
    let need = 4.0 * inst.constraints[0].margin.max(inst.constraints[1].margin);
    let k = if slack > 0.0 && slack < need { need / slack } else { 1.0 };
    Ok((p * k, lambda * k))
}

#[derive(Debug, Clone)]
pub struct Synthesized {
    pub nets: Vec<NeuralNet>,
    pub instance: LmiInstance,
    pub p: Mat,
    pub lambda: Vector,
    /// Final inner-weight scale.
    pub scale: f64,
    pub halvings: usize,
    pub report: PropCheckReport,
    /// For output-feedback pairs: whether the diagonal-dominance conditions
    /// hold at `P̂ = diag(P₁, P₂)`, or a weighted `diag(P₁, κP₂)` was needed.
    pub cascade_weight: f64,
}

impl Synthesized {
    pub fn certificate_point(&self) -> Vec<f64> {
        self.instance.pack(&self.p, &self.lambda).expect("sizes fixed at synthesis")
    }
}

pub fn synthesize_observer_nn(a: &Mat, c: &Mat, arch: &Architecture, seed: u64) -> Result<NeuralNet> {
    Ok(synthesize_observer(a, c, arch, seed, &SynthesisOptions::default())?
        .nets
        .remove(0))
}

/// Observer net in the certificate convention (error `e = x̂ − x`, `ė = Ae + π(Ce)`).
pub fn synthesize_observer(
    a: &Mat,
    c: &Mat,
    arch: &Architecture,
    seed: u64,
    opts: &SynthesisOptions,
) -> Result<Synthesized> {
    require_observable(c, a)?;
    let ns = a.nrows();
    let w = match opts.shift {
        Some(s) => output_injection_with_shift(a, c, s)?,
        None => stabilizing_output_injection(a, c)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner = draw_inner(arch, c.nrows(), ns, &mut rng);
    let q = Vector::from_element(ns, 1.0);

    let probe = build_net(&inner, 1.0, &w, arch.activation)?;
    let ones = Vector::from_element(probe.n_sigma(), 1.0);
    let r0 = prop2_check(a, c, &probe, &q, &ones)?;
    let lambda0 = (r0.norm_m1t + r0.norm_m2).max(1.0);
    let lambda = Vector::from_element(probe.n_sigma(), lambda0);

    let mut s = 1.0;
    for halvings in 0..=opts.max_halvings {
        let net = build_net(&inner, s, &w, arch.activation)?;
        let report = prop2_check(a, c, &net, &q, &lambda)?;
        if report.pass() && report.lmi_pass {
            let instance = assemble_theorem1(a, c, &net)?;
            let (p, lambda) = rescale_for_margins(&instance, &report.p, &lambda)?;
            return Ok(Synthesized {
                nets: vec![net],
                instance,
                p,
                lambda,
                scale: s,
                halvings,
                report,
                cascade_weight: 1.0,
            });
        }
        s *= 0.5;
    }
    Err(Error::NoConvergence("inner-weight halving did not reach a certificate".into()))
}

/// Candidate controller gains for the output-feedback pair, best coupling first.
fn controller_candidates(a: &Mat, b: &Mat, opts: &SynthesisOptions) -> Result<Vec<Mat>> {
    let mut out = Vec::new();
    if let Some(s) = opts.shift {
        out.push(state_feedback_with_shift(a, b, s)?);
        return Ok(out);
    }
    if hurwitz_check(a, 0.0) {
        out.push(Mat::zeros(b.ncols(), a.nrows()));
    }
    let base = default_shift(a);
    for f in [1.0, 1.5, 2.0, 3.0, 5.0] {
        if let Ok(k) = state_feedback_with_shift(a, b, base * f) {
            out.push(k);
        }
    }
    if out.is_empty() {
        return Err(Error::NotHurwitz);
    }
    Ok(out)
}

/// Ratio `‖P₁BK‖_∞ / min q₁` with `Q₁ = I`; below one the state-row condition can hold.
pub fn coupling_ratio(a: &Mat, b: &Mat, k: &Mat) -> Result<f64> {
    let bk = b * k;
    let p1 = lyapunov_solve(&(a + &bk), &Mat::identity(a.nrows(), a.nrows()))?;
    Ok(inf_norm(&(p1 * bk)))
}

/// Output-feedback pair: controller `net1` (state feedback on `x̂`) and observer `net2`.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_output_feedback(
    a: &Mat,
    b: &Mat,
    c: &Mat,
    arch1: &Architecture,
    arch2: &Architecture,
    seed: u64,
    opts: &SynthesisOptions,
) -> Result<Synthesized> {
    require_controllable(a, b)?;
    require_observable(c, a)?;
    let ns = a.nrows();
    let mut best: Option<(f64, Mat)> = None;
    for k in controller_candidates(a, b, opts)? {
        let r = coupling_ratio(a, b, &k)?;
        if best.as_ref().map_or(true, |(br, _)| r < *br) {
            best = Some((r, k));
        }
    }
    let (_, k) = best.expect("at least one candidate");
    let w = match opts.shift {
        Some(s) => output_injection_with_shift(a, c, s)?,
        None => stabilizing_output_injection(a, c)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner1 = draw_inner(arch1, ns, b.ncols(), &mut rng);
    let inner2 = draw_inner(arch2, c.nrows(), ns, &mut rng);
    let q = Vector::from_element(ns, 1.0);

    let n1 = build_net(&inner1, 1.0, &k, arch1.activation)?;
    let n2 = build_net(&inner2, 1.0, &w, arch2.activation)?;
    let ones = Vector::from_element(n1.n_sigma() + n2.n_sigma(), 1.0);
    let r0 = prop3_check(a, b, c, &n1, &n2, &q, &q, &ones)?;
    let lambda0 = (r0.norm_m1t + r0.norm_m2).max(1.0);
    let lambda = Vector::from_element(ones.len(), lambda0);

    // When ‖M₃‖ alone exceeds min q the diagonal-dominance route is closed for
    // every inner scale; fall back to P̂ = diag(P₁, κP₂), whose state block is
    // negative definite once κ > ‖P₁BK‖₂².
    let norm_m3 = r0.norm_m3.unwrap_or(0.0);
    let coupling = r0.m3.as_ref().map(|m| m.view((0, ns), (ns, ns)).clone_owned()).unwrap();
    let blocked = norm_m3 > r0.q_min;
    let kappa = if blocked {
        (4.0 * inf_norm(&coupling) * inf_norm(&coupling.transpose())).max(1.0)
    } else {
        1.0
    };

    let mut s = 1.0;
    for halvings in 0..=opts.max_halvings {
        let net1 = build_net(&inner1, s, &k, arch1.activation)?;
        let net2 = build_net(&inner2, s, &w, arch2.activation)?;
        let report = prop3_check(a, b, c, &net1, &net2, &q, &q, &lambda)?;
        let instance = assemble_theorem2(a, b, c, &net1, &net2)?;
        let done = if blocked {
            let mut p = report.p.clone();
            let mut lower = p.view_mut((ns, ns), (ns, ns));
            lower *= kappa;
            let (lmax, mu, ok) = lmi_cross_check(&instance, &p, &lambda)?;
            let _ = (lmax, mu);
            ok.then_some(p)
        } else {
            (report.pass() && report.lmi_pass).then(|| report.p.clone())
        };
        if let Some(p) = done {
            let (p, lambda) = rescale_for_margins(&instance, &p, &lambda)?;
            return Ok(Synthesized {
                nets: vec![net1, net2],
                instance,
                p,
                lambda,
                scale: s,
                halvings,
                report,
                cascade_weight: kappa,
            });
        }
        s *= 0.5;
    }
    Err(Error::NoConvergence("inner-weight halving did not reach a certificate".into()))
}

/// Generic halving loop for the `−P` (chain / MIMO) families.
fn shrink_until_certified<F>(
    p: &Mat,
    n_sigma: usize,
    opts: &SynthesisOptions,
    mut build: F,
) -> Result<(Vec<NeuralNet>, LmiInstance, Vector, f64, usize, PropCheckReport)>
where
    F: FnMut(f64) -> Result<(Vec<NeuralNet>, LmiInstance)>,
{
    let (_, probe) = build(1.0)?;
    let ones = Vector::from_element(n_sigma, 1.0);
    let r0 = dominance_report(&probe, p, &ones)?;
    let lambda0 = (r0.norm_m1t + r0.norm_m2).max(1.0);
    let lambda = Vector::from_element(n_sigma, lambda0);
    let mut s = 1.0;
    for halvings in 0..=opts.max_halvings {
        let (nets, inst) = build(s)?;
        let report = dominance_report(&inst, p, &lambda)?;
        if report.pass() && report.lmi_pass {
            return Ok((nets, inst, lambda, s, halvings, report));
        }
        s *= 0.5;
    }
    Err(Error::NoConvergence("inner-weight halving did not reach a certificate".into()))
}

/// Gains `w` with `Ã − w c̃` Hurwitz for the order-`n` chain.
pub fn chain_gains(n: usize, shift: Option<f64>) -> Result<Vector> {
    let (a, c) = chain_matrices(n);
    let w = match shift {
        Some(s) => output_injection_with_shift(&a, &c, s)?,
        None => stabilizing_output_injection(&a, &c)?,
    };
    Ok(-w.column(0).clone_owned())
}

/// `n + 1` scalar nets for the chain observer.
pub fn synthesize_chain(n: usize, arch: &Architecture, seed: u64, opts: &SynthesisOptions) -> Result<Synthesized> {
    let (a, c) = chain_matrices(n);
    let w = chain_gains(n, opts.shift)?;
    let a_cl = &a - Mat::from_column_slice(n + 1, 1, w.as_slice()) * &c;
    let p = lyapunov_solve(&a_cl, &Mat::identity(n + 1, n + 1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inners: Vec<Vec<Mat>> = (0..=n).map(|_| draw_inner(arch, 1, 1, &mut rng)).collect();
    let n_sigma = (n + 1) * arch.hidden.iter().sum::<usize>();
    let (nets, instance, lambda, scale, halvings, report) =
        shrink_until_certified(&p, n_sigma, opts, |s| {
            let nets = inners
                .iter()
                .enumerate()
                .map(|(i, inner)| build_net(inner, s, &Mat::from_element(1, 1, w[i]), arch.activation))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&NeuralNet> = nets.iter().collect();
            let inst = assemble_theorem3(n, &refs)?;
            Ok((nets, inst))
        })?;
    let (p, lambda) = rescale_for_margins(&instance, &p, &lambda)?;
    Ok(Synthesized {
        nets,
        instance,
        p,
        lambda,
        scale,
        halvings,
        report,
        cascade_weight: 1.0,
    })
}

/// One shared scalar net with unit shortcut and output gains `b`.
pub fn synthesize_chain_shared(
    n: usize,
    arch: &Architecture,
    seed: u64,
    opts: &SynthesisOptions,
) -> Result<(Synthesized, Vector)> {
    let (a, c) = chain_matrices(n);
    let b = chain_gains(n, opts.shift)?;
    let a_cl = &a - Mat::from_column_slice(n + 1, 1, b.as_slice()) * &c;
    let p = lyapunov_solve(&a_cl, &Mat::identity(n + 1, n + 1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner = draw_inner(arch, 1, 1, &mut rng);
    let n_sigma = arch.hidden.iter().sum::<usize>();
    let (nets, instance, lambda, scale, halvings, report) =
        shrink_until_certified(&p, n_sigma, opts, |s| {
            let net = build_net(&inner, s, &Mat::from_element(1, 1, 1.0), arch.activation)?;
            let inst = assemble_corollary2(n, &net, &b)?;
            Ok((vec![net], inst))
        })?;
    let (p, lambda) = rescale_for_margins(&instance, &p, &lambda)?;
    Ok((
        Synthesized {
            nets,
            instance,
            p,
            lambda,
            scale,
            halvings,
            report,
            cascade_weight: 1.0,
        },
        b,
    ))
}

/// Gains `W = [W₁; W₂]` with `𝐀_ε − W𝐂` Hurwitz.
pub fn mimo_gains(a: &Mat, b_w: &Mat, c: &Mat, eps: f64, shift: Option<f64>) -> Result<Mat> {
    let (ae, ce) = extended_matrices(a, b_w, c, eps)?;
    let w = match shift {
        Some(s) => output_injection_with_shift(&ae, &ce, s)?,
        None => stabilizing_output_injection(&ae, &ce)?,
    };
    Ok(-w)
}

/// The two nets of the MIMO observer at gain `eps`.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_mimo(
    a: &Mat,
    b_w: &Mat,
    c: &Mat,
    eps: f64,
    arch1: &Architecture,
    arch2: &Architecture,
    seed: u64,
    opts: &SynthesisOptions,
) -> Result<Synthesized> {
    let pair = ExtendedPair::new(a, c, b_w)?;
    let r = pair.rank(1.0, RANK_TOL);
    if r < pair.order() {
        return Err(Error::Unobservable { rank: r, n: pair.order() });
    }
    let ns = a.nrows();
    let nq = b_w.ncols();
    let no = c.nrows();
    let w = mimo_gains(a, b_w, c, eps, opts.shift)?;
    let (ae, ce) = extended_matrices(a, b_w, c, eps)?;
    let p = lyapunov_solve(&(&ae - &w * &ce), &Mat::identity(ns + nq, ns + nq))?;
    let w1 = w.rows(0, ns).clone_owned();
    let w2 = w.rows(ns, nq).clone_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner1 = draw_inner(arch1, no, ns, &mut rng);
    let inner2 = draw_inner(arch2, no, nq, &mut rng);
    let n_sigma = arch1.hidden.iter().sum::<usize>() + arch2.hidden.iter().sum::<usize>();
    let (nets, instance, lambda, scale, halvings, report) =
        shrink_until_certified(&p, n_sigma, opts, |s| {
            let n1 = build_net(&inner1, s, &w1, arch1.activation)?;
            let n2 = build_net(&inner2, s, &w2, arch2.activation)?;
            let inst = assemble_theorem4(a, b_w, c, eps, &n1, &n2)?;
            Ok((vec![n1, n2], inst))
        })?;
    let (p, lambda) = rescale_for_margins(&instance, &p, &lambda)?;
    Ok(Synthesized {
        nets,
        instance,
        p,
        lambda,
        scale,
        halvings,
        report,
        cascade_weight: 1.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RiccatiSolution {
    #[serde(with = "crate::linalg::serde_rows")]
    pub gain: Mat,
    #[serde(with = "crate::linalg::serde_rows")]
    pub sigma: Mat,
    pub residual: f64,
    pub iterations: usize,
}

/// Filter ARE residual `AΣ + ΣAᵀ − ΣCᵀV⁻¹CΣ + W`.
pub fn riccati_residual(a: &Mat, c: &Mat, w_n: &Mat, v_inv: &Mat, sigma: &Mat) -> f64 {
    max_abs(&(a * sigma + sigma * a.transpose() - sigma * c.transpose() * v_inv * c * sigma + w_n))
}

/// Steady-state Kalman gain by Kleinman iterations from a Bass-stabilized injection.
pub fn riccati_gain(a: &Mat, c: &Mat, w_n: &Mat, v_n: &Mat) -> Result<RiccatiSolution> {
    require_observable(c, a)?;
    let no = c.nrows();
    if v_n.shape() != (no, no) || w_n.shape() != a.shape() {
        return Err(Error::dim("noise covariances do not match the system"));
    }
    if nalgebra::Cholesky::new(symmetrize(v_n)).is_none() {
        return Err(Error::InvalidParameter("measurement covariance must be positive definite".into()));
    }
    let v_inv = v_n.clone().try_inverse().ok_or(Error::Singular)?;
    let mut l = -stabilizing_output_injection(a, c)?;
    let mut sigma = Mat::zeros(a.nrows(), a.nrows());
    let accept = 1e-8 * max_abs(w_n).max(1.0);
    let mut best: Option<RiccatiSolution> = None;
    for it in 1..=100 {
        let a_cl = a - &l * c;
        let rhs = symmetrize(&(w_n + &l * v_n * l.transpose()));
        let next = lyapunov_solve(&a_cl.transpose(), &rhs)?;
        let change = max_abs(&(&next - &sigma));
        sigma = next;
        l = &sigma * c.transpose() * &v_inv;
        let residual = riccati_residual(a, c, w_n, &v_inv, &sigma);
        if best.as_ref().map_or(true, |b| residual < b.residual) {
            best = Some(RiccatiSolution { gain: l.clone(), sigma: sigma.clone(), residual, iterations: it });
        }
        // Quadratic convergence ends at round-off; stop once the update is that small.
        if change <= 1e-13 * max_abs(&sigma).max(1.0) {
            break;
        }
    }
    match best {
        Some(b) if b.residual <= accept => Ok(b),
        _ => Err(Error::NoConvergence("Kleinman iteration stalled".into())),
    }
}
