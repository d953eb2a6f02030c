//! A small semidefinite-program solver:
//!
//! ```text
//! minimize cᵀy  subject to  F₀ᵏ + Σ_j y_j F_jᵏ ≺ 0  (or ≻ 0),  k = 1..K
//! ```
//!
//! Strict inequalities are enforced with an absolute margin `ε_strict`: every
//! block is shifted into `s_k(F₀ᵏ + Σ y_j F_jᵏ) − ε I ⪰ 0` (`s_k = −1` for `≺`,
//! `+1` for `≻`) and handled by a log-det barrier method. Phase I minimizes a
//! uniform slack to find a strictly feasible point; Phase II follows the
//! central path with damped Newton steps.
//!
//! Each `F_jᵏ` is stored sparsely. The Hessian entry `tr(W F_j W F_l)` only
//! touches the columns where `F_j` and `F_l` are nonzero, which keeps the
//! per-step cost well below a dense evaluation for the structured blocks
//! produced by `synthesis`.
//!
//! The feasible sets met in practice can be unbounded (a multiplier with no
//! cost that only appears on the "good" side of a block), so the iterates are
//! confined to a ball `‖y‖ < R` by one more barrier term. Reaching the ball's
//! edge while the objective keeps decreasing is reported as
//! [`SolveStatus::Unbounded`].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkit::{sym_eig_extremes, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    NegativeDefinite,
    PositiveDefinite,
}

impl Sense {
    fn sign(self) -> f64 {
        match self {
            Sense::NegativeDefinite => -1.0,
            Sense::PositiveDefinite => 1.0,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Sense::NegativeDefinite => "ND",
            Sense::PositiveDefinite => "PD",
        }
    }
}

/// `F₀ + Σ y_j F_j` with a definiteness requirement.
#[derive(Clone, Debug)]
pub struct AffineBlock {
    pub name: String,
    pub sense: Sense,
    pub f0: Mat,
    /// `(variable index, F_j)`; variables that do not appear are omitted.
    pub terms: Vec<(usize, Mat)>,
}

impl AffineBlock {
    pub fn dim(&self) -> usize {
        self.f0.rows()
    }

    pub fn evaluate(&self, y: &[f64]) -> Mat {
        let mut out = self.f0.clone();
        for (j, f) in &self.terms {
            if y[*j] != 0.0 {
                out = &out + &f.scale(y[*j]);
            }
        }
        out
    }

    /// Distance from the definiteness boundary: `λ_min` for `≻ 0`,
    /// `−λ_max` for `≺ 0`. Positive means the constraint holds.
    pub fn margin(&self, y: &[f64]) -> Result<f64> {
        let (lo, hi) = sym_eig_extremes(&self.evaluate(y).symmetrized())?;
        Ok(match self.sense {
            Sense::NegativeDefinite => -hi,
            Sense::PositiveDefinite => lo,
        })
    }
}

#[derive(Clone, Debug)]
pub struct LmiProblem {
    pub var_names: Vec<String>,
    pub objective: Vec<f64>,
    pub blocks: Vec<AffineBlock>,
}

impl LmiProblem {
    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.n_vars();
        if self.objective.len() != nv {
            return Err(Error::dim(
                "LmiProblem",
                format!("objective has {} entries for {nv} variables", self.objective.len()),
            ));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LmiProblem objective"));
        }
        for b in &self.blocks {
            let d = b.dim();
            if !b.f0.is_square() || !b.f0.is_symmetric() {
                return Err(Error::Domain {
                    op: "LmiProblem",
                    detail: format!("block {}: F0 is not square symmetric", b.name),
                });
            }
            for (j, f) in &b.terms {
                if *j >= nv {
                    return Err(Error::dim(
                        "LmiProblem",
                        format!("block {}: variable index {j} out of range", b.name),
                    ));
                }
                if f.shape() != (d, d) || !f.is_symmetric() {
                    return Err(Error::Domain {
                        op: "LmiProblem",
                        detail: format!(
                            "block {}: F for {} is not a symmetric {d}x{d} matrix",
                            b.name, self.var_names[*j]
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn evaluate_block(&self, k: usize, y: &[f64]) -> Mat {
        self.blocks[k].evaluate(y)
    }

    /// Independent eigenvalue check of every block at `y`.
    pub fn margins(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.blocks.iter().map(|b| b.margin(y)).collect()
    }

    /// Per block, how far below `eps` a computed margin may fall and still
    /// count: [`margin_slack`] at the block's size and scale at `y`.
    pub fn margin_slacks(&self, y: &[f64], eps: f64) -> Vec<f64> {
        (0..self.blocks.len())
            .map(|k| margin_slack(eps, self.blocks[k].dim(), self.evaluate_block(k, y).max_abs()))
            .collect()
    }

    pub fn objective_at(&self, y: &[f64]) -> f64 {
        self.objective.iter().zip(y).map(|(c, v)| c * v).sum()
    }

    /// Plain-text dump for cross-checking with external SDP tools: the
    /// variable list, the objective, then per block `F0` and each `F_j` as
    /// upper-triangle `row col value` triplets (0-based).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vars {}", self.n_vars());
        for (j, name) in self.var_names.iter().enumerate() {
            let _ = writeln!(s, "{j} {name}");
        }
        let _ = writeln!(s, "objective");
        for (j, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = writeln!(s, "{j} {c:.17e}");
            }
        }
        let _ = writeln!(s, "blocks {}", self.blocks.len());
        for (k, b) in self.blocks.iter().enumerate() {
            let _ = writeln!(
                s,
                "block {k} {} {} dim {} terms {}",
                b.name,
                b.sense.tag(),
                b.dim(),
                b.terms.len()
            );
            let _ = writeln!(s, "F0");
            write_triplets(&mut s, &b.f0);
            for (j, f) in &b.terms {
                let _ = writeln!(s, "F {j}");
                write_triplets(&mut s, f);
            }
        }
        s
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn write_triplets(s: &mut String, m: &Mat) {
    for i in 0..m.rows() {
        for j in i..m.cols() {
            let v = m[(i, j)];
            if v != 0.0 {
                let _ = writeln!(s, "{i} {j} {v:.17e}");
            }
        }
    }
    let _ = writeln!(s, "end");
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Absolute margin realizing the strict inequalities.
    pub eps_strict: f64,
    /// Newton-step budget for each phase.
    pub max_newton: usize,
    /// Relative duality-gap target: stop when `m/t ≤ tol·(1 + |cᵀy|)`.
    pub tol: f64,
    /// Radius of the ball confining the iterates.
    pub radius: f64,
    /// Barrier-parameter growth per outer iteration.
    pub t_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            eps_strict: 1e-6,
            max_newton: 200,
            tol: 1e-7,
            radius: 1e6,
            t_factor: 5.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
    Unbounded,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LmiSolution {
    pub y: Vec<f64>,
    pub status: SolveStatus,
    pub objective_value: f64,
    /// Per block, from an independent eigenvalue evaluation.
    pub min_margins: Vec<f64>,
    /// Optimal: the duality-gap bound `m/t`. Infeasible: the Phase-I slack
    /// that could not be driven below zero.
    pub gap: f64,
    pub newton_steps: usize,
}

/// `[[Q, S], [Sᵀ, R]]`.
pub fn schur_embed(q: &Mat, s: &Mat, r: &Mat) -> Result<Mat> {
    if !q.is_square() || !r.is_square() || s.rows() != q.rows() || s.cols() != r.rows() {
        return Err(Error::dim(
            "schur_embed",
            format!("Q {:?}, S {:?}, R {:?}", q.shape(), s.shape(), r.shape()),
        ));
    }
    let (a, b) = (q.rows(), r.rows());
    let mut out = Mat::zeros(a + b, a + b);
    out.set_block(0, 0, q);
    out.set_block_sym(0, a, s);
    out.set_block(a, a, r);
    Ok(out)
}

/// Symmetric sparse matrix, stored by its nonzero columns.
#[derive(Clone, Debug)]
struct SparseSym {
    cols: Vec<usize>,
    /// For each support column: `(row, value)` pairs.
    entries: Vec<Vec<(usize, f64)>>,
}

impl SparseSym {
    fn from_mat(m: &Mat) -> Self {
        let mut cols = Vec::new();
        let mut entries = Vec::new();
        for j in 0..m.cols() {
            let col: Vec<(usize, f64)> = (0..m.rows())
                .filter_map(|i| {
                    let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                    (v != 0.0).then_some((i, v))
                })
                .collect();
            if !col.is_empty() {
                cols.push(j);
                entries.push(col);
            }
        }
        SparseSym { cols, entries }
    }

    fn identity(n: usize) -> Self {
        SparseSym {
            cols: (0..n).collect(),
            entries: (0..n).map(|i| vec![(i, 1.0)]).collect(),
        }
    }

    fn scale(&mut self, s: f64) {
        for col in &mut self.entries {
            for e in col {
                e.1 *= s;
            }
        }
    }

    fn add_to(&self, out: &mut DMatrix<f64>, a: f64) {
        for (c, col) in self.cols.iter().zip(&self.entries) {
            for &(r, v) in col {
                out[(r, *c)] += a * v;
            }
        }
    }

    /// Columns `cols` of `W·F`, each of length `dim`, concatenated.
    fn w_times(&self, w: &DMatrix<f64>) -> Vec<f64> {
        let dim = w.nrows();
        let wd = w.as_slice();
        let mut out = vec![0.0; dim * self.cols.len()];
        for (qi, col) in self.entries.iter().enumerate() {
            let dst = &mut out[qi * dim..(qi + 1) * dim];
            for &(r, v) in col {
                // W is symmetric, so column r is row r.
                for (d, wr) in dst.iter_mut().zip(&wd[r * dim..(r + 1) * dim]) {
                    *d += v * wr;
                }
            }
        }
        out
    }

    /// [`Self::w_times`] output re-laid row-major (`(q, pi)` is
    /// `(W·F)[q, cols[pi]]`) so the trace loop reads contiguously.
    fn transpose_support(&self, wf: &[f64], dim: usize) -> Vec<f64> {
        let k = self.cols.len();
        let mut out = vec![0.0; dim * k];
        for pi in 0..k {
            for (q, v) in wf[pi * dim..(pi + 1) * dim].iter().enumerate() {
                out[q * k + pi] = *v;
            }
        }
        out
    }
}

/// One shifted block `G(y) = G0 + Σ y_j G_j ⪰ 0`.
struct Cone {
    dim: usize,
    g0: DMatrix<f64>,
    terms: Vec<(usize, SparseSym)>,
}

impl Cone {
    fn assemble(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut g = self.g0.clone();
        for (j, f) in &self.terms {
            if y[*j] != 0.0 {
                f.add_to(&mut g, y[*j]);
            }
        }
        g
    }
}

struct Barrier {
    cones: Vec<Cone>,
    n: usize,
    /// The first `ball_vars` variables are confined to `‖·‖² < r2`.
    ball_vars: usize,
    r2: f64,
}

enum Centering {
    Done,
    Stopped,
    Budget,
}

impl Barrier {
    fn degree(&self) -> f64 {
        self.cones.iter().map(|c| c.dim).sum::<usize>() as f64 + 1.0
    }

    fn ball_slack(&self, y: &DVector<f64>) -> f64 {
        self.r2 - y.rows(0, self.ball_vars).norm_squared()
    }

    /// `−Σ log det G_k − log(R² − ‖y‖²)`, or `None` outside the domain.
    fn value(&self, y: &DVector<f64>) -> Option<f64> {
        let slack = self.ball_slack(y);
        if slack <= 0.0 {
            return None;
        }
        let mut v = -slack.ln();
        for cone in &self.cones {
            let chol = cone.assemble(y).cholesky()?;
            v -= 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        }
        v.is_finite().then_some(v)
    }

    fn grad_hess(&self, y: &DVector<f64>) -> Option<(DVector<f64>, Hessian)> {
        let n = self.n;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for cone in &self.cones {
            let w = cone.assemble(y).cholesky()?.inverse();
            let dim = cone.dim;
            let wf: Vec<Vec<f64>> = cone.terms.iter().map(|(_, f)| f.w_times(&w)).collect();
            let wft: Vec<Vec<f64>> = cone
                .terms
                .iter()
                .zip(&wf)
                .map(|((_, f), v)| f.transpose_support(v, dim))
                .collect();
            for (a, (ja, fa)) in cone.terms.iter().enumerate() {
                let wa = &wf[a];
                g[*ja] -= fa
                    .cols
                    .iter()
                    .enumerate()
                    .map(|(qi, &q)| wa[qi * dim + q])
                    .sum::<f64>();
                for (b, (jb, fb)) in cone.terms.iter().enumerate().skip(a) {
                    let wbt = &wft[b];
                    let kb = fb.cols.len();
                    // tr(W F_a W F_b) = Σ_{q ∈ cols_a, p ∈ cols_b} (WF_a)[p,q] (WF_b)[q,p]
                    let mut s = 0.0;
                    for (qi, &q) in fa.cols.iter().enumerate() {
                        let col_a = &wa[qi * dim..(qi + 1) * dim];
                        let row_b = &wbt[q * kb..(q + 1) * kb];
                        s += fb.cols.iter().zip(row_b).map(|(&p, &v)| col_a[p] * v).sum::<f64>();
                    }
                    h[(*ja, *jb)] += s;
                    if ja != jb {
                        h[(*jb, *ja)] += s;
                    }
                }
            }
        }
        let slack = self.ball_slack(y);
        if slack <= 0.0 {
            return None;
        }
        let mut u = DVector::zeros(n);
        for j in 0..self.ball_vars {
            g[j] += 2.0 * y[j] / slack;
            h[(j, j)] += 2.0 / slack;
            u[j] = y[j];
        }
        Some((
            g,
            Hessian {
                h0: h,
                u,
                beta: 4.0 / (slack * slack),
            },
        ))
    }

    /// Smallest eigenvalue over all cones at `y`.
    fn min_eig(&self, y: &DVector<f64>) -> f64 {
        self.cones
            .iter()
            .map(|c| c.assemble(y).symmetric_eigenvalues().min())
            .fold(f64::INFINITY, f64::min)
    }

    /// Damped Newton on `t·cᵀy + barrier(y)` until the Newton decrement is
    /// small, `stop(y)` fires, or the step budget runs out.
    fn center(
        &self,
        c: &DVector<f64>,
        t: f64,
        y: &mut DVector<f64>,
        steps: &mut usize,
        budget: usize,
        stop: &dyn Fn(&DVector<f64>) -> bool,
    ) -> Centering {
        const DECREMENT_TOL: f64 = 1e-9;
        const ARMIJO: f64 = 0.25;
        let mut phi = match self.value(y) {
            Some(v) => v,
            None => return Centering::Budget,
        };
        loop {
            if stop(y) {
                return Centering::Stopped;
            }
            if *steps >= budget {
                return Centering::Budget;
            }
            let Some((gb, h)) = self.grad_hess(y) else {
                return Centering::Budget;
            };
            let grad = c * t + gb;
            let Some(dy) = h.solve(&grad).map(|d| -d) else {
                return Centering::Budget;
            };
            let slope = grad.dot(&dy);
            if -slope / 2.0 <= DECREMENT_TOL {
                return Centering::Done;
            }
            *steps += 1;
            let lin = t * c.dot(&dy);
            let mut s = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &*y + &dy * s;
                if let Some(v) = self.value(&trial) {
                    // Linear and barrier parts are differenced separately to
                    // keep t·cᵀy's magnitude from swamping the barrier change.
                    if s * lin + (v - phi) <= ARMIJO * s * slope {
                        *y = trial;
                        phi = v;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !accepted {
                // No progress possible at working precision: treat as centred.
                return Centering::Done;
            }
        }
    }
}

/// `H0 + β u uᵀ`. Near the ball's edge the rank-one term dwarfs the rest,
/// so it is kept apart and applied by Sherman–Morrison.
struct Hessian {
    h0: DMatrix<f64>,
    u: DVector<f64>,
    beta: f64,
}

impl Hessian {
    /// `H⁻¹ r`.
    fn solve(&self, r: &DVector<f64>) -> Option<DVector<f64>> {
        let h0r = solve_spd(&self.h0, r)?;
        if self.beta == 0.0 || self.u.iter().all(|&v| v == 0.0) {
            return Some(h0r);
        }
        let h0u = solve_spd(&self.h0, &self.u)?;
        let coef = self.beta * self.u.dot(&h0r) / (1.0 + self.beta * self.u.dot(&h0u));
        let out = h0r - h0u * coef;
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

fn solve_spd(h: &DMatrix<f64>, r: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(chol) = h.clone().cholesky() {
        let d = chol.solve(r);
        if d.iter().all(|v| v.is_finite()) {
            return Some(d);
        }
    }
    let scale = h.diagonal().amax().max(1e-300);
    let mut reg = h.clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += 1e-12 * scale;
    }
    let d = reg.lu().solve(r)?;
    d.iter().all(|v| v.is_finite()).then_some(d)
}

fn shifted_cones(p: &LmiProblem, eps: f64) -> Vec<Cone> {
    p.blocks
        .iter()
        .map(|b| {
            let s = b.sense.sign();
            let dim = b.dim();
            let mut g0 = b.f0.symmetrized().to_na() * s;
            for i in 0..dim {
                g0[(i, i)] -= eps;
            }
            let terms = b
                .terms
                .iter()
                .map(|(j, f)| {
                    let mut sp = SparseSym::from_mat(f);
                    sp.scale(s);
                    (*j, sp)
                })
                .filter(|(_, sp)| !sp.cols.is_empty())
                .collect();
            Cone { dim, g0, terms }
        })
        .collect()
}

/// Barrier-parameter start that best balances the objective against the
/// barrier gradient at `y` (least squares in the Newton metric).
fn initial_t(bar: &Barrier, c: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let fallback = 1.0;
    let Some((g, h)) = bar.grad_hess(y) else {
        return fallback;
    };
    let Some(hc) = h.solve(c) else {
        return fallback;
    };
    let Some(hg) = h.solve(&g) else {
        return fallback;
    };
    let t = -c.dot(&hg) / c.dot(&hc);
    if t.is_finite() && t > 0.0 {
        t.clamp(1e-6, 1e6)
    } else {
        fallback
    }
}

/// Round-off allowance for an eigenvalue margin of a `dim`-square block
/// with largest entry `scale`: a relative `1e-6` of `eps` plus a few ulps of
/// the block. Cholesky succeeding on `F(y) − εI` and a symmetric eigen
/// solver agreeing on `λ_min ≥ ε` only coincide up to this much.
pub fn margin_slack(eps: f64, dim: usize, scale: f64) -> f64 {
    1e-6 * eps + 8.0 * dim as f64 * f64::EPSILON * scale
}

/// Initial Phase-I ball radius.
const PHASE1_RADIUS: f64 = 100.0;

pub fn solve(p: &LmiProblem, opts: &SolverOptions) -> Result<LmiSolution> {
    p.validate()?;
    if !(opts.eps_strict > 0.0) || !(opts.tol > 0.0) || !(opts.radius > 0.0) || opts.t_factor <= 1.0
    {
        return Err(Error::Config(format!("invalid solver options {opts:?}")));
    }
    let n = p.n_vars();
    let r2 = opts.radius * opts.radius;
    let mut steps = 0usize;

    // Phase I: minimize σ subject to G_k(y) + σI ⪰ 0. Directions that carry
    // no cost here (a multiplier that only helps) drift to the ball's edge,
    // and Phase II would then crawl back along it. So Phase I starts in a
    // small ball and widens it only while infeasibility is certified inside.
    let mut cones1 = shifted_cones(p, opts.eps_strict);
    for cone in &mut cones1 {
        cone.terms.push((n, SparseSym::identity(cone.dim)));
    }
    let mut phase1 = Barrier {
        cones: cones1,
        n: n + 1,
        ball_vars: n,
        r2: PHASE1_RADIUS.min(opts.radius).powi(2),
    };
    let phase2 = Barrier {
        cones: shifted_cones(p, opts.eps_strict),
        n,
        ball_vars: n,
        r2,
    };

    let mut y = DVector::zeros(n);
    let strictly_feasible = |y: &DVector<f64>| phase2.value(y).is_some();
    if !strictly_feasible(&y) {
        let mut z = DVector::zeros(n + 1);
        z[n] = (-phase1.min_eig(&z)).max(0.0) + 1.0;
        let mut c1 = DVector::zeros(n + 1);
        c1[n] = 1.0;
        let stop = |z: &DVector<f64>| z[n] < 0.0 && strictly_feasible(&z.rows(0, n).into_owned());
        let mut t = initial_t(&phase1, &c1, &z);
        let m1 = phase1.degree();
        let mut p1_steps = 0usize;
        let outcome = loop {
            match phase1.center(&c1, t, &mut z, &mut p1_steps, opts.max_newton, &stop) {
                Centering::Stopped => break None,
                Centering::Budget => break Some(SolveStatus::MaxIter),
                Centering::Done => {}
            }
            let sigma = z[n];
            let gap = m1 / t;
            if sigma - gap > 0.0 || (gap <= opts.tol * (1.0 + sigma.abs()) && sigma >= 0.0) {
                if phase1.r2 < r2 {
                    phase1.r2 = (phase1.r2 * 100.0).min(r2);
                    t = initial_t(&phase1, &c1, &z);
                    continue;
                }
                break Some(SolveStatus::Infeasible);
            }
            t *= opts.t_factor;
        };
        steps += p1_steps;
        let y1: Vec<f64> = z.rows(0, n).iter().copied().collect();
        if let Some(status) = outcome {
            return Ok(LmiSolution {
                objective_value: p.objective_at(&y1),
                min_margins: p.margins(&y1)?,
                y: y1,
                status,
                gap: z[n],
                newton_steps: steps,
            });
        }
        y = z.rows(0, n).into_owned();
    }

    // Phase II: central path from the strictly feasible point.
    let c = DVector::from_column_slice(&p.objective);
    let m = phase2.degree();
    let mut t = initial_t(&phase2, &c, &y);
    let mut p2_steps = 0usize;
    let never = |_: &DVector<f64>| false;
    let status = loop {
        match phase2.center(&c, t, &mut y, &mut p2_steps, opts.max_newton, &never) {
            Centering::Budget => break SolveStatus::MaxIter,
            Centering::Stopped | Centering::Done => {}
        }
        let obj = c.dot(&y);
        let norm = y.norm();
        if norm >= 0.999 * opts.radius && c.dot(&y) / norm < -1e-9 * c.norm() {
            break SolveStatus::Unbounded;
        }
        if m / t <= opts.tol * (1.0 + obj.abs()) {
            break SolveStatus::Optimal;
        }
        t *= opts.t_factor;
    };
    steps += p2_steps;
    let y: Vec<f64> = y.iter().copied().collect();
    let min_margins = p.margins(&y)?;
    let slacks = p.margin_slacks(&y, opts.eps_strict);
    let status = if status == SolveStatus::Optimal
        && min_margins
            .iter()
            .zip(&slacks)
            .any(|(&mg, &sl)| mg < opts.eps_strict - sl)
    {
        SolveStatus::MaxIter
    } else {
        status
    };
    Ok(LmiSolution {
        objective_value: p.objective_at(&y),
        min_margins,
        y,
        status,
        gap: m / t,
        newton_steps: steps,
    })
}
