#![allow(dead_code)]

use hetcons::matkit::Mat;
use hetcons::synthesis::Plant;
use hetcons::topology::{reduce, LaplacianBundle};
use rand::Rng;

pub const INPUT_GAINS: [f64; 6] = [0.9, 1.0, 1.1, 1.2, 1.3, 1.4];

pub fn six_agent_laplacian() -> Mat {
    Mat::from_rows(&[
        [3.0, 0.0, 0.0, -1.0, -1.0, -1.0],
        [0.0, 2.0, 0.0, 0.0, -1.0, -1.0],
        [0.0, 0.0, 2.0, -1.0, 0.0, -1.0],
        [0.0, -1.0, 0.0, 2.0, 0.0, -1.0],
        [-1.0, -1.0, 0.0, -1.0, 3.0, 0.0],
        [-1.0, -1.0, -1.0, 0.0, 0.0, 3.0],
    ])
    .unwrap()
}

pub fn six_agent_plant() -> Plant {
    Plant::double_integrator(&INPUT_GAINS).unwrap()
}

pub fn six_agent_bundle() -> LaplacianBundle {
    reduce(&six_agent_laplacian(), 5, 2).unwrap()
}

/// `x_i(0) = [i + 5, i − 2]`, agents numbered from 1.
pub fn six_agent_initial_state() -> Vec<f64> {
    (1..=6).flat_map(|i| [i as f64 + 5.0, i as f64 - 2.0]).collect()
}

/// A random weighted rooted digraph (N ∈ 2..=8, n ∈ 1..=3) reduced at a
/// random admissible row, plus the rng for drawing test vectors.
pub fn random_bundle(seed: u64) -> (LaplacianBundle, rand_chacha::ChaCha8Rng) {
    use hetcons::topology::{admissible_rows, build_laplacian, Digraph};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let agents = rng.random_range(2..=8);
    let n = rng.random_range(1..=3);
    let p = rng.random_range(0.0..0.6);
    let g = Digraph::random_rooted(agents, p, &mut rng).unwrap();
    let w = g.weights().clone();
    let w = Mat::from_fn(agents, agents, |i, j| {
        if w[(i, j)] > 0.0 {
            rng.random_range(0.2..3.0)
        } else {
            0.0
        }
    });
    let l = build_laplacian(&Digraph::from_adjacency(w).unwrap());
    let rows = admissible_rows(&l);
    let row = rows[rng.random_range(0..rows.len())];
    (reduce(&l, row, n).unwrap(), rng)
}

pub fn random_vec(rng: &mut impl rand::Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Residuals of the structural identities on one instance.
#[derive(Debug)]
pub struct IdentityResiduals {
    /// `‖L̂_⟨n⟩(1 ⊗ c)‖∞` for random `c`.
    pub consensus_in_null: f64,
    /// For random `x` in the null space of `L̂_⟨n⟩`: `‖L̂_⟨n⟩x‖∞` and the
    /// largest spread between agent blocks.
    pub null_residual: f64,
    pub null_spread: f64,
    /// `‖L̂_⟨n⟩(I_N ⊗ A) − (I_{N−1} ⊗ A)L̂_⟨n⟩‖max` for random `A`.
    pub commutation: f64,
    /// `‖L̂_⟨n⟩(L_⟨n⟩x̂) − M_⟨n⟩(L̂_⟨n⟩x̂)‖∞` for random `x̂`.
    pub substitution: f64,
    /// `‖𝕃L̂_⟨n⟩ − L_⟨n⟩‖max`.
    pub lift: f64,
}

impl IdentityResiduals {
    pub fn within_tolerance(&self) -> bool {
        self.consensus_in_null <= 1e-12
            && self.null_residual <= 1e-9
            && self.null_spread <= 1e-9
            && self.commutation <= 1e-12
            && self.substitution <= 1e-9
            && self.lift <= 1e-9
    }
}

pub fn identity_residuals(seed: u64) -> IdentityResiduals {
    use hetcons::matkit::{kron, kron_eye, sym_eig};
    use hetcons::topology::disagreement;
    let (b, mut rng) = random_bundle(seed);
    let (agents, n) = (b.n_agents(), b.n);
    let lh = b.l_hat_n();

    let c = random_vec(&mut rng, n);
    let ones_c: Vec<f64> = (0..agents).flat_map(|_| c.clone()).collect();
    let consensus_in_null = max_abs(&lh.mul_vec(&ones_c).unwrap());

    // The n smallest eigenvectors of L̂ᵀL̂ span its null space.
    let (_, v) = sym_eig(&(&lh.transpose() * &lh).symmetrized()).unwrap();
    let w = random_vec(&mut rng, n);
    let mut x = vec![0.0; agents * n];
    for (k, wk) in w.iter().enumerate() {
        for (r, xr) in x.iter_mut().enumerate() {
            *xr += wk * v[(r, k)];
        }
    }
    let null_residual = max_abs(&lh.mul_vec(&x).unwrap());
    let null_spread = (0..agents)
        .flat_map(|i| (0..n).map(move |d| (i, d)))
        .map(|(i, d)| (x[i * n + d] - x[d]).abs())
        .fold(0.0, f64::max);

    let a = Mat::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
    let left = &lh * &kron(&Mat::identity(agents), &a);
    let right = &kron(&Mat::identity(agents - 1), &a) * &lh;
    let commutation = (&left - &right).max_abs();

    let xhat = random_vec(&mut rng, agents * n);
    let full = disagreement(&b.l, n, &xhat).unwrap();
    let lhs = lh.mul_vec(&full).unwrap();
    let rhs = b.m_n().mul_vec(&lh.mul_vec(&xhat).unwrap()).unwrap();
    let substitution = lhs.iter().zip(&rhs).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);

    let lift = (&(&b.lift * &lh) - &kron_eye(&b.l, n)).max_abs();

    IdentityResiduals {
        consensus_in_null,
        null_residual,
        null_spread,
        commutation,
        substitution,
        lift,
    }
}
