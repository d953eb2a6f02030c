//! Co-design of the consensus gains `K_i` and the transmission threshold `φ`.
//!
//! One semidefinite program is assembled on the reduced system: the
//! Lyapunov matrix `𝒫`, the gain surrogates `Θ_i = 𝒫 B_i K_i`, the
//! S-procedure multipliers `τ₁, τ₂, τ₃` and the cost scalars `γ, μ, υ_i`.
//! Gains and threshold are then read back as `K_i = B_i⁺ 𝒫⁻¹ Θ_i` and
//! `φ = √(τ₃/γ)`.
//!
//! When `B_i` is not square, `K_i ↦ 𝒫 B_i K_i` is not onto, so the
//! recovered gains need not reproduce `Θ_i`. The certificate is therefore
//! re-checked with the actual gains ([`verify_closed_loop`]) and the outcome
//! is reported rather than assumed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::{solve, AffineBlock, LmiProblem, LmiSolution, Sense, SolveStatus, SolverOptions};
use crate::matkit::{is_positive_definite, kron, pinv, rank, sym_eig_extremes, Mat, DEFAULT_TOL};
use crate::topology::LaplacianBundle;

/// Margin the re-verification must clear on the largest eigenvalue.
pub const EPS_VERIFY: f64 = 1e-8;

/// Smallest threshold the certified-φ search will consider.
pub const PHI_FLOOR: f64 = 1e-4;

/// `ẋ_i = A x_i + B_i u_i`: shared dynamics, per-agent input matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Plant {
    pub a: Mat,
    pub b: Vec<Mat>,
}

impl Plant {
    pub fn new(a: Mat, b: Vec<Mat>) -> Result<Self> {
        let p = Plant { a, b };
        p.validate()?;
        Ok(p)
    }

    /// Second-order agents `ẍ = b_i u`, i.e. `A = [[0, 1], [0, 0]]`,
    /// `B_i = [0, b_i]ᵀ`.
    pub fn double_integrator(b: &[f64]) -> Result<Self> {
        let a = Mat::from_rows(&[[0.0, 1.0], [0.0, 0.0]])?;
        let bs = b
            .iter()
            .map(|&bi| Mat::column(&[0.0, bi]))
            .collect::<Result<Vec<_>>>()?;
        Plant::new(a, bs)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_square() || self.a.rows() == 0 {
            return Err(Error::Plant(format!("A must be square, got {:?}", self.a.shape())));
        }
        if self.b.is_empty() {
            return Err(Error::Plant("no agents".into()));
        }
        let n = self.n();
        let m = self.b[0].cols();
        for (i, bi) in self.b.iter().enumerate() {
            if bi.shape() != (n, m) || m == 0 {
                return Err(Error::Plant(format!(
                    "B_{} has shape {:?}, expected ({n}, {m})",
                    i + 1,
                    bi.shape()
                )));
            }
            if rank(&controllability_matrix(&self.a, bi), DEFAULT_TOL) != n {
                return Err(Error::Plant(format!("(A, B_{}) is not controllable", i + 1)));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.b[0].cols()
    }

    pub fn n_agents(&self) -> usize {
        self.b.len()
    }

    /// `blockdiag(B_1, …, B_N)`.
    pub fn b_stacked(&self) -> Mat {
        block_diag(&self.b)
    }
}

/// `[B, AB, …, Aⁿ⁻¹B]`.
pub fn controllability_matrix(a: &Mat, b: &Mat) -> Mat {
    let n = a.rows();
    let m = b.cols();
    let mut out = Mat::zeros(n, n * m);
    let mut power = b.clone();
    for k in 0..n {
        out.set_block(0, k * m, &power);
        power = a * &power;
    }
    out
}

pub fn block_diag(blocks: &[Mat]) -> Mat {
    let rows = blocks.iter().map(Mat::rows).sum();
    let cols = blocks.iter().map(Mat::cols).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.set_block(r, c, b);
        r += b.rows();
        c += b.cols();
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthesisSpec {
    /// Decay rate of the certified exponential envelope, 1/s.
    pub zeta: f64,
    /// Bound on the additive gain perturbation `‖ΔK_i‖_F`.
    pub delta: f64,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl SynthesisSpec {
    pub fn new(zeta: f64, delta: f64) -> Self {
        SynthesisSpec {
            zeta,
            delta,
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0) || !self.zeta.is_finite() {
            return Err(Error::Config(format!("zeta must be positive, got {}", self.zeta)));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::Config(format!("delta must be nonnegative, got {}", self.delta)));
        }
        Ok(())
    }
}

/// Where each scalar decision variable lives in the solver's vector.
///
/// Order: upper triangle of `𝒫` (row-wise), `Θ_1 … Θ_N` (row-major each),
/// `τ₁, τ₂, τ₃, γ, μ`, `υ_1 … υ_N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarLayout {
    pub n: usize,
    pub agents: usize,
}

impl VarLayout {
    pub fn new(n: usize, agents: usize) -> Self {
        VarLayout { n, agents }
    }

    fn p_count(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn p(&self, r: usize, c: usize) -> usize {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        // Rows before r hold n + (n−1) + … + (n−r+1) entries.
        r * self.n - r * r.saturating_sub(1) / 2 + (c - r)
    }

    pub fn theta(&self, agent: usize, r: usize, c: usize) -> usize {
        self.p_count() + agent * self.n * self.n + r * self.n + c
    }

    fn scalars(&self) -> usize {
        self.p_count() + self.agents * self.n * self.n
    }

    pub fn tau(&self, k: usize) -> usize {
        self.scalars() + k
    }

    pub fn gamma(&self) -> usize {
        self.scalars() + 3
    }

    pub fn mu(&self) -> usize {
        self.scalars() + 4
    }

    pub fn upsilon(&self, agent: usize) -> usize {
        self.scalars() + 5 + agent
    }

    pub fn count(&self) -> usize {
        self.scalars() + 5 + self.agents
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.count()];
        for r in 0..self.n {
            for c in r..self.n {
                names[self.p(r, c)] = format!("P[{}][{}]", r + 1, c + 1);
            }
        }
        for i in 0..self.agents {
            for r in 0..self.n {
                for c in 0..self.n {
                    names[self.theta(i, r, c)] = format!("Theta{}[{}][{}]", i + 1, r + 1, c + 1);
                }
            }
        }
        for k in 0..3 {
            names[self.tau(k)] = format!("tau{}", k + 1);
        }
        names[self.gamma()] = "gamma".into();
        names[self.mu()] = "mu".into();
        for i in 0..self.agents {
            names[self.upsilon(i)] = format!("upsilon{}", i + 1);
        }
        names
    }

    pub fn unpack(&self, y: &[f64]) -> Vars {
        let n = self.n;
        Vars {
            p: Mat::from_fn(n, n, |r, c| y[self.p(r, c)]),
            theta: (0..self.agents)
                .map(|i| Mat::from_fn(n, n, |r, c| y[self.theta(i, r, c)]))
                .collect(),
            tau: [y[self.tau(0)], y[self.tau(1)], y[self.tau(2)]],
            gamma: y[self.gamma()],
            mu: y[self.mu()],
            upsilon: (0..self.agents).map(|i| y[self.upsilon(i)]).collect(),
        }
    }

    pub fn pack(&self, v: &Vars) -> Vec<f64> {
        let mut y = vec![0.0; self.count()];
        for r in 0..self.n {
            for c in r..self.n {
                y[self.p(r, c)] = v.p[(r, c)];
            }
        }
        for (i, th) in v.theta.iter().enumerate() {
            for r in 0..self.n {
                for c in 0..self.n {
                    y[self.theta(i, r, c)] = th[(r, c)];
                }
            }
        }
        for k in 0..3 {
            y[self.tau(k)] = v.tau[k];
        }
        y[self.gamma()] = v.gamma;
        y[self.mu()] = v.mu;
        for (i, u) in v.upsilon.iter().enumerate() {
            y[self.upsilon(i)] = *u;
        }
        y
    }
}

/// The decision variables in matrix form.
#[derive(Clone, Debug)]
pub struct Vars {
    pub p: Mat,
    pub theta: Vec<Mat>,
    pub tau: [f64; 3],
    pub gamma: f64,
    pub mu: f64,
    pub upsilon: Vec<f64>,
}

/// Problem data shared by assembly and verification.
struct Reduced {
    n: usize,
    d: usize,
    nm: usize,
    a_red: Mat,
    lift: Mat,
    lift_gram: Mat,
    l_hat_n: Mat,
    b: Mat,
    m_n: Mat,
    l_hat: Mat,
}

impl Reduced {
    fn new(plant: &Plant, bundle: &LaplacianBundle) -> Result<Self> {
        let n = plant.n();
        let agents = plant.n_agents();
        if bundle.n_agents() != agents {
            return Err(Error::dim(
                "assemble_lmis",
                format!("graph has {} agents, plant has {agents}", bundle.n_agents()),
            ));
        }
        if bundle.n != n {
            return Err(Error::dim(
                "assemble_lmis",
                format!("bundle built for n = {}, plant has n = {n}", bundle.n),
            ));
        }
        let lift = bundle.lift.clone();
        Ok(Reduced {
            n,
            d: (agents - 1) * n,
            nm: agents * plant.m(),
            a_red: kron(&Mat::identity(agents - 1), &plant.a),
            lift_gram: &lift.transpose() * &lift,
            lift,
            l_hat_n: bundle.l_hat_n(),
            b: plant.b_stacked(),
            m_n: bundle.m_n(),
            l_hat: bundle.l_hat.clone(),
        })
    }

    /// The main block, ordered `[x_r, e_r, σ₁, σ₂, last]`. `coupling` is
    /// `P𝔸` (or its surrogate `Ξ𝕃`); the last column carries `off·M_⟨n⟩ᵀ`
    /// and the last diagonal block is `last·I`.
    #[allow(clippy::too_many_arguments)]
    fn main_block(
        &self,
        spec: &SynthesisSpec,
        p_script: &Mat,
        coupling: &Mat,
        tau: [f64; 3],
        off: f64,
        last: f64,
    ) -> Mat {
        let d = self.d;
        let nm = self.nm;
        let p = kron_eye_left(p_script, self.d / self.n);
        let d2 = spec.delta * spec.delta;
        let pa = &p * &self.a_red;
        let mut pi11 = &(&pa.transpose() + &pa) + &p.scale(2.0 * spec.zeta);
        if d2 * tau[0] != 0.0 {
            pi11 = &pi11 + &self.lift_gram.scale(tau[0] * d2);
        }
        pi11 = &(&pi11 + coupling) + &coupling.transpose();
        let mut pi22 = Mat::identity(d).scale(-tau[2]);
        if d2 * tau[1] != 0.0 {
            pi22 = &pi22 + &self.lift_gram.scale(tau[1] * d2);
        }
        let plb = &(&p * &self.l_hat_n) * &self.b;
        let mt = self.m_n.transpose().scale(off);

        let (o_x, o_e, o_s1, o_s2, o_l) = (0, d, 2 * d, 2 * d + nm, 2 * d + 2 * nm);
        let mut out = Mat::zeros(3 * d + 2 * nm, 3 * d + 2 * nm);
        out.set_block(o_x, o_x, &pi11.symmetrized());
        out.set_block_sym(o_x, o_e, coupling);
        out.set_block(o_e, o_e, &pi22.symmetrized());
        out.set_block_sym(o_x, o_s1, &plb);
        out.set_block_sym(o_x, o_s2, &plb);
        out.set_block_sym(o_x, o_l, &mt);
        out.set_block_sym(o_e, o_l, &mt);
        out.set_block(o_s1, o_s1, &Mat::identity(nm).scale(-tau[0]));
        out.set_block(o_s2, o_s2, &Mat::identity(nm).scale(-tau[1]));
        out.set_block(o_l, o_l, &Mat::identity(d).scale(last));
        out
    }

    /// `Ξ = L̂_⟨n⟩ · blockdiag(Θ_j)`: block `(i, j)` is `l̂_ij Θ_j`.
    fn xi(&self, theta: &[Mat]) -> Mat {
        let n = self.n;
        let mut xi = Mat::zeros(self.l_hat.rows() * n, self.l_hat.cols() * n);
        for i in 0..self.l_hat.rows() {
            for (j, th) in theta.iter().enumerate() {
                let l = self.l_hat[(i, j)];
                if l != 0.0 {
                    xi.set_block(i * n, j * n, &th.scale(l));
                }
            }
        }
        xi
    }
}

/// `I_k ⊗ 𝒫`.
fn kron_eye_left(p: &Mat, k: usize) -> Mat {
    kron(&Mat::identity(k), p)
}

fn mu_block(n: usize, v: &Vars) -> Mat {
    let mut out = Mat::zeros(2 * n, 2 * n);
    out.set_block(0, 0, &Mat::identity(n).scale(v.mu));
    out.set_block_sym(0, n, &Mat::identity(n));
    out.set_block(n, n, &v.p);
    out
}

fn upsilon_block(n: usize, v: &Vars) -> Mat {
    let agents = v.theta.len();
    let big = agents * n;
    let mut out = Mat::zeros(2 * big, 2 * big);
    for (i, u) in v.upsilon.iter().enumerate() {
        out.set_block(i * n, i * n, &Mat::identity(n).scale(-u));
        out.set_block_sym(i * n, big + i * n, &v.theta[i].transpose());
    }
    out.set_block(big, big, &Mat::identity(big).scale(-1.0));
    out
}

/// Decomposes an affine matrix function of `y` into `F₀` and the nonzero
/// `F_j`, by evaluating at zero and at each unit vector.
fn affine_parts(count: usize, f: impl Fn(&[f64]) -> Mat) -> (Mat, Vec<(usize, Mat)>) {
    let mut y = vec![0.0; count];
    let f0 = f(&y);
    let mut terms = Vec::new();
    for j in 0..count {
        y[j] = 1.0;
        let fj = &f(&y) - &f0;
        y[j] = 0.0;
        if fj.max_abs() != 0.0 {
            terms.push((j, fj.symmetrized()));
        }
    }
    (f0.symmetrized(), terms)
}

/// The three constraint blocks and the objective `γ + μ + Σ υ_i`.
pub fn assemble_lmis(
    plant: &Plant,
    bundle: &LaplacianBundle,
    spec: &SynthesisSpec,
) -> Result<LmiProblem> {
    spec.validate()?;
    let red = Reduced::new(plant, bundle)?;
    let layout = VarLayout::new(plant.n(), plant.n_agents());
    let count = layout.count();

    let (f0, terms) = affine_parts(count, |y| {
        let v = layout.unpack(y);
        let coupling = &red.xi(&v.theta) * &red.lift;
        red.main_block(spec, &v.p, &coupling, v.tau, v.tau[2], -v.gamma)
    });
    let main = AffineBlock {
        name: "main".into(),
        sense: Sense::NegativeDefinite,
        f0,
        terms,
    };
    let (f0, terms) = affine_parts(count, |y| mu_block(plant.n(), &layout.unpack(y)));
    let mu = AffineBlock {
        name: "inverse-bound".into(),
        sense: Sense::PositiveDefinite,
        f0,
        terms,
    };
    let (f0, terms) = affine_parts(count, |y| upsilon_block(plant.n(), &layout.unpack(y)));
    let ups = AffineBlock {
        name: "gain-bound".into(),
        sense: Sense::NegativeDefinite,
        f0,
        terms,
    };

    let mut objective = vec![0.0; count];
    objective[layout.gamma()] = 1.0;
    objective[layout.mu()] = 1.0;
    for i in 0..plant.n_agents() {
        objective[layout.upsilon(i)] = 1.0;
    }
    Ok(LmiProblem {
        var_names: layout.names(),
        objective,
        blocks: vec![main, mu, ups],
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverReport {
    pub status: SolveStatus,
    pub objective: f64,
    pub margins: Vec<f64>,
    pub gap: f64,
    pub newton_steps: usize,
}

impl From<&LmiSolution> for SolverReport {
    fn from(s: &LmiSolution) -> Self {
        SolverReport {
            status: s.status,
            objective: s.objective_value,
            margins: s.min_margins.clone(),
            gap: s.gap,
            newton_steps: s.newton_steps,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub zeta: f64,
    pub delta: f64,
    pub p_script: Mat,
    pub theta: Vec<Mat>,
    pub tau: [f64; 3],
    pub gamma: f64,
    pub mu: f64,
    pub upsilon: Vec<f64>,
    /// `√(τ₃/γ)`.
    pub phi: f64,
    pub k: Vec<Mat>,
    /// `√(λ_max(𝒫)/λ_min(𝒫))`.
    pub c: f64,
    /// `‖𝒫B_iK_i − Θ_i‖_F / ‖Θ_i‖_F` per agent.
    pub recon_residual: Vec<f64>,
    /// The closed-loop certificate holds with the recovered gains at `phi`.
    pub verified: bool,
    /// `−λ_max` of the closed-loop certificate matrix at `phi`.
    pub verify_margin: f64,
    /// Largest threshold (down to [`PHI_FLOOR`]) at which the certificate
    /// holds with the recovered gains, when `phi` itself fails.
    pub phi_certified: Option<f64>,
    pub solver: SolverReport,
}

impl SynthesisResult {
    pub fn vars(&self) -> Vars {
        Vars {
            p: self.p_script.clone(),
            theta: self.theta.clone(),
            tau: self.tau,
            gamma: self.gamma,
            mu: self.mu,
            upsilon: self.upsilon.clone(),
        }
    }

    /// The threshold the certificate actually covers: `phi` when verified,
    /// else the certified fallback if one exists.
    pub fn phi_in_force(&self) -> Option<f64> {
        if self.verified {
            Some(self.phi)
        } else {
            self.phi_certified
        }
    }
}

pub fn synthesize(
    plant: &Plant,
    bundle: &LaplacianBundle,
    spec: &SynthesisSpec,
) -> Result<SynthesisResult> {
    let problem = assemble_lmis(plant, bundle, spec)?;
    let sol = solve(&problem, &spec.solver)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible {
                zeta: spec.zeta,
                delta: spec.delta,
            })
        }
        other => {
            return Err(Error::Solver(format!(
                "{other:?} after {} Newton steps (gap {:e})",
                sol.newton_steps, sol.gap
            )))
        }
    }
    let layout = VarLayout::new(plant.n(), plant.n_agents());
    let v = layout.unpack(&sol.y);
    let p_inv = v.p.inverse()?;
    let k: Vec<Mat> = plant
        .b
        .iter()
        .zip(&v.theta)
        .map(|(b, th)| &(&pinv(b, DEFAULT_TOL) * &p_inv) * th)
        .collect();
    let recon_residual = plant
        .b
        .iter()
        .zip(&k)
        .zip(&v.theta)
        .map(|((b, ki), th)| {
            let r = (&(&(&v.p * b) * ki) - th).frobenius_norm();
            let scale = th.frobenius_norm();
            if scale > 0.0 {
                r / scale
            } else {
                r
            }
        })
        .collect();
    let (lo, hi) = sym_eig_extremes(&v.p)?;
    let mut result = SynthesisResult {
        zeta: spec.zeta,
        delta: spec.delta,
        phi: (v.tau[2] / v.gamma).sqrt(),
        c: (hi / lo).sqrt(),
        p_script: v.p,
        theta: v.theta,
        tau: v.tau,
        gamma: v.gamma,
        mu: v.mu,
        upsilon: v.upsilon,
        k,
        recon_residual,
        verified: false,
        verify_margin: f64::NAN,
        phi_certified: None,
        solver: SolverReport::from(&sol),
    };
    let (ok, margin) = verify_closed_loop(plant, bundle, spec, &result)?;
    result.verified = ok;
    result.verify_margin = margin;
    if !ok {
        result.phi_certified = certified_phi(plant, bundle, spec, &result)?;
    }
    Ok(result)
}

/// Closed-loop certificate with the recovered gains substituted for `Θ_i`:
/// the main block with `P𝔸 = P L̂_⟨n⟩ B K 𝕃` in place of `Ξ𝕃` and
/// `−τ₃/φ²` on the last diagonal block. Returns `(ok, −λ_max)`.
pub fn verify_closed_loop(
    plant: &Plant,
    bundle: &LaplacianBundle,
    spec: &SynthesisSpec,
    result: &SynthesisResult,
) -> Result<(bool, f64)> {
    verify_at(plant, bundle, spec, result, &result.k, result.phi)
}

/// As [`verify_closed_loop`], for arbitrary gains and threshold.
pub fn verify_at(
    plant: &Plant,
    bundle: &LaplacianBundle,
    spec: &SynthesisSpec,
    result: &SynthesisResult,
    gains: &[Mat],
    phi: f64,
) -> Result<(bool, f64)> {
    let red = Reduced::new(plant, bundle)?;
    if gains.len() != plant.n_agents() {
        return Err(Error::dim("verify_closed_loop", "one gain per agent required"));
    }
    let p = kron_eye_left(&result.p_script, plant.n_agents() - 1);
    let k = block_diag(gains);
    let coupling = &(&(&(&p * &red.l_hat_n) * &red.b) * &k) * &red.lift;
    let t3 = result.tau[2];
    // For φ > 0 this is congruent to the φ-scaled form below; the unscaled
    // form coincides with the synthesized block when Θ is reproduced exactly.
    let block = if phi > 0.0 {
        red.main_block(spec, &result.p_script, &coupling, result.tau, t3, -t3 / (phi * phi))
    } else {
        red.main_block(spec, &result.p_script, &coupling, result.tau, 0.0, -t3)
    };
    let (_, hi) = sym_eig_extremes(&block.symmetrized())?;
    Ok((hi < -EPS_VERIFY, -hi))
}

/// Largest `φ ∈ [PHI_FLOOR, result.phi]` passing [`verify_at`] with the
/// recovered gains, by bisection.
fn certified_phi(
    plant: &Plant,
    bundle: &LaplacianBundle,
    spec: &SynthesisSpec,
    result: &SynthesisResult,
) -> Result<Option<f64>> {
    let passes = |phi: f64| verify_at(plant, bundle, spec, result, &result.k, phi).map(|r| r.0);
    if !passes(PHI_FLOOR)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (PHI_FLOOR, result.phi);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Independent re-check of the stored variables against the three blocks
/// and the scalar side conditions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificates {
    /// Margins of the three assembled blocks (positive = satisfied).
    pub block_margins: Vec<f64>,
    /// Round-off allowance per block (see [`crate::lmi::margin_slack`]).
    pub block_slacks: Vec<f64>,
    pub p_positive_definite: bool,
    /// `λ_min(μI − 𝒫⁻¹)`.
    pub mu_margin: f64,
    /// `λ_min(υ_i I − Θ_iᵀΘ_i)` per agent.
    pub upsilon_margins: Vec<f64>,
    pub multipliers_positive: bool,
    /// `|φ² − τ₃/γ|`.
    pub phi_identity_error: f64,
    pub c_consistent: bool,
}

impl Certificates {
    pub fn all_hold(&self, eps: f64) -> bool {
        self.block_margins
            .iter()
            .zip(&self.block_slacks)
            .all(|(&m, &sl)| m >= eps - sl)
            && self.p_positive_definite
            && self.mu_margin > 0.0
            && self.upsilon_margins.iter().all(|&m| m > 0.0)
            && self.multipliers_positive
            && self.phi_identity_error <= 1e-12 * (1.0 + self.phi_identity_error.abs())
            && self.c_consistent
    }
}

pub fn check_certificates(
    plant: &Plant,
    bundle: &LaplacianBundle,
    spec: &SynthesisSpec,
    result: &SynthesisResult,
) -> Result<Certificates> {
    let problem = assemble_lmis(plant, bundle, spec)?;
    let layout = VarLayout::new(plant.n(), plant.n_agents());
    let y = layout.pack(&result.vars());
    let block_margins = problem.margins(&y)?;
    let block_slacks = problem.margin_slacks(&y, spec.solver.eps_strict);
    let n = plant.n();
    let p_inv = result.p_script.inverse()?;
    let (mu_margin, _) =
        sym_eig_extremes(&(&Mat::identity(n).scale(result.mu) - &p_inv).symmetrized())?;
    let upsilon_margins = result
        .theta
        .iter()
        .zip(&result.upsilon)
        .map(|(th, &u)| {
            let g = &Mat::identity(n).scale(u) - &(&th.transpose() * th);
            sym_eig_extremes(&g.symmetrized()).map(|(lo, _)| lo)
        })
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = sym_eig_extremes(&result.p_script)?;
    let c = (hi / lo).sqrt();
    Ok(Certificates {
        block_margins,
        block_slacks,
        p_positive_definite: is_positive_definite(&result.p_script)?,
        mu_margin,
        upsilon_margins,
        multipliers_positive: result.tau.iter().all(|&t| t > 0.0)
            && result.gamma > 0.0
            && result.mu > 0.0
            && result.upsilon.iter().all(|&u| u > 0.0),
        phi_identity_error: (result.phi * result.phi - result.tau[2] / result.gamma).abs(),
        c_consistent: (c - result.c).abs() <= 1e-9 * c && result.c >= 1.0,
    })
}

/// Lower bound on agent `i`'s next inter-event time:
/// `(1/‖A‖) · ln(φ‖A‖‖X̂_i(t_k)‖ / F̄ + 1)`.
///
/// Degenerate cases: no disagreement or `φ = 0` gives 0; no motion
/// (`F̄ = 0`) with positive disagreement gives `+∞`; `‖A‖ = 0` gives the
/// limit `φ‖X̂‖/F̄`.
pub fn zeno_lower_bound(phi: f64, a_norm: f64, xhat_norm: f64, f_bar: f64) -> f64 {
    let num = phi * xhat_norm;
    if num <= 0.0 {
        return 0.0;
    }
    if f_bar <= 0.0 {
        return f64::INFINITY;
    }
    if a_norm <= 0.0 {
        return num / f_bar;
    }
    (num * a_norm / f_bar).ln_1p() / a_norm
}
