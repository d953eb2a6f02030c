//! Communication graphs and the reduced-Laplacian machinery.
//!
//! Convention: `a_ij > 0` means agent `i` receives agent `j`'s broadcasts, so
//! row `i` of the Laplacian collects agent `i`'s in-neighbours. Information
//! therefore flows along `j → i`, and a spanning tree exists when some root
//! reaches every agent along those arrows.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkit::{kron_eye, pinv, rank, Mat, DEFAULT_TOL};

/// Tolerance on `‖l_r − α·L̂‖` after computing α by pseudo-inverse.
const ALPHA_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Digraph {
    weights: Mat,
}

impl Digraph {
    pub fn from_adjacency(weights: Mat) -> Result<Self> {
        if !weights.is_square() || weights.rows() == 0 {
            return Err(Error::Graph(format!(
                "adjacency must be square and non-empty, got {:?}",
                weights.shape()
            )));
        }
        let n = weights.rows();
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::Graph(format!("self-loop on agent {}", i + 1)));
            }
            for j in 0..n {
                if weights[(i, j)] < 0.0 {
                    return Err(Error::Graph(format!(
                        "negative weight a[{}][{}] = {}",
                        i + 1,
                        j + 1,
                        weights[(i, j)]
                    )));
                }
            }
        }
        Ok(Digraph { weights })
    }

    /// Recovers the adjacency from `L = D − A`. Off-diagonal entries must be
    /// nonpositive and rows must sum to zero.
    pub fn from_laplacian(l: &Mat) -> Result<Self> {
        if !l.is_square() {
            return Err(Error::Graph(format!("Laplacian shape {:?}", l.shape())));
        }
        let n = l.rows();
        for i in 0..n {
            let sum: f64 = l.row(i).iter().sum();
            if sum.abs() > 1e-9 * l.row(i).iter().map(|v| v.abs()).sum::<f64>().max(1.0) {
                return Err(Error::Graph(format!("Laplacian row {} sums to {sum}", i + 1)));
            }
        }
        Digraph::from_adjacency(Mat::from_fn(n, n, |i, j| if i == j { 0.0 } else { -l[(i, j)] }))
    }

    /// `edges` holds 0-based `(receiver, sender, weight)` triples.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = Mat::zeros(n, n);
        for &(i, j, a) in edges {
            if i >= n || j >= n {
                return Err(Error::Graph(format!("edge ({i}, {j}) out of range for N = {n}")));
            }
            if !a.is_finite() {
                return Err(Error::NonFinite("Digraph::from_edges"));
            }
            w[(i, j)] = a;
        }
        Digraph::from_adjacency(w)
    }

    /// Reads a graph file. Two layouts are accepted (`#` starts a comment):
    ///
    /// ```text
    /// 3            edges 3
    /// 0 1 1        1 2
    /// 0 0 1        2 3 0.5
    /// 1 0 0        3 1
    /// ```
    ///
    /// Dense: N, then N rows of N weights. Edge list: `edges N`, then one
    /// `receiver sender [weight]` line per edge, agents numbered from 1.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Digraph::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Graph("empty graph description".into()))?;
        let num = |tok: &str| -> Result<f64> {
            tok.parse::<f64>()
                .map_err(|_| Error::Graph(format!("cannot parse number {tok:?}")))
        };
        let mut head = header.split_whitespace();
        let first = head.next().unwrap_or("");
        if first == "edges" {
            let n: usize = head
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Graph("expected `edges N`".into()))?;
            let mut edges = Vec::new();
            for line in lines {
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() < 2 || toks.len() > 3 {
                    return Err(Error::Graph(format!("bad edge line {line:?}")));
                }
                let idx = |t: &str| -> Result<usize> {
                    match t.parse::<usize>() {
                        Ok(k) if k >= 1 => Ok(k - 1),
                        _ => Err(Error::Graph(format!("bad agent index {t:?}"))),
                    }
                };
                let w = if toks.len() == 3 { num(toks[2])? } else { 1.0 };
                edges.push((idx(toks[0])?, idx(toks[1])?, w));
            }
            return Digraph::from_edges(n, &edges);
        }
        let n: usize = first
            .parse()
            .map_err(|_| Error::Graph(format!("expected agent count, got {first:?}")))?;
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split_whitespace().map(num).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        if rows.len() != n {
            return Err(Error::Graph(format!("expected {n} rows, found {}", rows.len())));
        }
        Digraph::from_adjacency(Mat::from_rows(&rows)?)
    }

    /// Uniform random rooted labelled tree (edges oriented away from the root)
    /// plus every other ordered pair independently with probability `p`. All
    /// weights are 1, so a spanning tree exists by construction.
    pub fn random_rooted<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Self> {
        if n < 2 {
            return Err(Error::Graph("random graphs need N >= 2".into()));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Graph(format!("edge probability {p} outside [0, 1]")));
        }
        let tree = random_tree_edges(n, rng);
        let root = rng.random_range(0..n);
        let mut w = Mat::zeros(n, n);
        // Orient the undirected tree away from the root: the child receives
        // from its parent.
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &tree {
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    w[(v, u)] = 1.0;
                    queue.push_back(v);
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && w[(i, j)] == 0.0 && rng.random_bool(p) {
                    w[(i, j)] = 1.0;
                }
            }
        }
        Digraph::from_adjacency(w)
    }

    pub fn n_agents(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Mat {
        &self.weights
    }

    /// True when every weight is 0 or 1. The controller's neighbour sum and
    /// the Laplacian-weighted disagreement coincide only in that case.
    pub fn is_binary(&self) -> bool {
        self.weights.data().iter().all(|&w| w == 0.0 || w == 1.0)
    }

    /// Agents that can reach every other agent.
    pub fn roots(&self) -> Vec<usize> {
        (0..self.n_agents())
            .filter(|&r| self.reach_count(r) == self.n_agents())
            .collect()
    }

    fn reach_count(&self, root: usize) -> usize {
        let n = self.n_agents();
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut stack = vec![root];
        let mut count = 1;
        while let Some(j) = stack.pop() {
            for i in 0..n {
                if !seen[i] && self.weights[(i, j)] > 0.0 {
                    seen[i] = true;
                    count += 1;
                    stack.push(i);
                }
            }
        }
        count
    }
}

/// Prüfer decoding: a uniformly random labelled tree on `n` nodes.
fn random_tree_edges<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    if n == 2 {
        return vec![(0, 1)];
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &s in &seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &s in &seq {
        let leaf = (0..n).find(|&k| degree[k] == 1).expect("a leaf always exists");
        edges.push((leaf, s));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let mut last = (0..n).filter(|&k| degree[k] == 1);
    let (u, v) = (last.next().unwrap(), last.next().unwrap());
    edges.push((u, v));
    // Shuffle so edge order carries no information about the decoding.
    edges.shuffle(rng);
    edges
}

/// `L = D − A`, `D` the diagonal of row sums.
pub fn build_laplacian(g: &Digraph) -> Mat {
    let a = g.weights();
    let n = g.n_agents();
    let mut l = -a;
    for i in 0..n {
        l[(i, i)] = a.row(i).iter().sum();
    }
    l
}

/// Rank test `rank(L) = N − 1` cross-checked by a reachability search.
/// Disagreement between the two is reported as an error rather than guessed.
pub fn has_spanning_tree(g: &Digraph) -> Result<bool> {
    let n = g.n_agents();
    let by_rank = rank(&build_laplacian(g), DEFAULT_TOL) == n - 1;
    let by_reach = !g.roots().is_empty();
    if by_rank != by_reach {
        return Err(Error::SpanningTreeDiagnostics {
            rank_says: by_rank,
            reach_says: by_reach,
        });
    }
    Ok(by_rank)
}

/// Rows of `L` whose removal keeps `rank(L̂) = N − 1`. These are exactly
/// the rows belonging to the root component.
pub fn admissible_rows(l: &Mat) -> Vec<usize> {
    let n = l.rows();
    (0..n)
        .filter(|&r| rank(&l.remove_row(r), DEFAULT_TOL) == n - 1)
        .collect()
}

/// Everything derived from one choice of dropped row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LaplacianBundle {
    pub l: Mat,
    pub l_hat: Mat,
    pub dropped_row: usize,
    /// `l_(r,•) = α · L̂`.
    pub alpha: Vec<f64>,
    /// Correlation matrix: `m_ij = l̂_(i, kept_j) + α_j · l̂_(i, r)`.
    pub m: Mat,
    /// State dimension the lift was built for.
    pub n: usize,
    /// `𝕃 = L_⟨n⟩ · L̂_⟨n⟩⁺`, size `Nn × (N−1)n`.
    pub lift: Mat,
}

impl LaplacianBundle {
    pub fn n_agents(&self) -> usize {
        self.l.rows()
    }

    /// Original agent indices of the rows kept in `L̂`, in order.
    pub fn kept_rows(&self) -> Vec<usize> {
        (0..self.n_agents()).filter(|&i| i != self.dropped_row).collect()
    }

    pub fn l_hat_n(&self) -> Mat {
        kron_eye(&self.l_hat, self.n)
    }

    pub fn m_n(&self) -> Mat {
        kron_eye(&self.m, self.n)
    }

    /// `x_r = L̂_⟨n⟩ x`.
    pub fn reduced_state(&self, x: &[f64]) -> Result<Vec<f64>> {
        let all = disagreement(&self.l, self.n, x)?;
        let n = self.n;
        Ok(self
            .kept_rows()
            .into_iter()
            .flat_map(|i| all[i * n..(i + 1) * n].to_vec())
            .collect())
    }
}

/// Drops row `dropped_row` of `L` and builds α, M and the lift for state
/// dimension `n`.
pub fn reduce(l: &Mat, dropped_row: usize, n: usize) -> Result<LaplacianBundle> {
    if !l.is_square() {
        return Err(Error::dim("reduce", format!("Laplacian shape {:?}", l.shape())));
    }
    let big_n = l.rows();
    if big_n < 2 {
        return Err(Error::Graph("consensus needs at least two agents".into()));
    }
    if n == 0 {
        return Err(Error::dim("reduce", "state dimension must be positive"));
    }
    if dropped_row >= big_n {
        return Err(Error::dim(
            "reduce",
            format!("dropped row {dropped_row} out of range for N = {big_n}"),
        ));
    }
    let r = rank(l, DEFAULT_TOL);
    if r != big_n - 1 {
        return Err(Error::NoSpanningTree(format!(
            "rank(L) = {r}, expected {}",
            big_n - 1
        )));
    }
    let l_hat = l.remove_row(dropped_row);
    if rank(&l_hat, DEFAULT_TOL) != big_n - 1 {
        return Err(Error::Graph(format!(
            "row {} lies outside the root component; admissible rows: {:?}",
            dropped_row + 1,
            admissible_rows(l).iter().map(|k| k + 1).collect::<Vec<_>>()
        )));
    }
    let l_hat_pinv = pinv(&l_hat, DEFAULT_TOL);
    let l_r = Mat::row_vector(l.row(dropped_row))?;
    let alpha_m = &l_r * &l_hat_pinv;
    let alpha: Vec<f64> = alpha_m.row(0).to_vec();
    let resid = (&(&alpha_m * &l_hat) - &l_r).frobenius_norm();
    if resid > ALPHA_RESIDUAL_TOL * l_r.frobenius_norm().max(1.0) {
        return Err(Error::Domain {
            op: "reduce",
            detail: format!("dropped row is not in the row space of L̂ (residual {resid:e})"),
        });
    }
    let kept: Vec<usize> = (0..big_n).filter(|&i| i != dropped_row).collect();
    let m = Mat::from_fn(big_n - 1, big_n - 1, |i, j| {
        l_hat[(i, kept[j])] + alpha[j] * l_hat[(i, dropped_row)]
    });
    // (L ⊗ I)(L̂ ⊗ I)⁺ = (L L̂⁺) ⊗ I.
    let lift = kron_eye(&(l * &l_hat_pinv), n);
    Ok(LaplacianBundle {
        l: l.clone(),
        l_hat,
        dropped_row,
        alpha,
        m,
        n,
        lift,
    })
}

/// `X̂_i = l_(i,•)⟨n⟩ · x̂` for every agent, stacked.
pub fn disagreement(l: &Mat, n: usize, xhat: &[f64]) -> Result<Vec<f64>> {
    let big_n = l.rows();
    if xhat.len() != big_n * n {
        return Err(Error::dim(
            "disagreement",
            format!("state length {} for N = {big_n}, n = {n}", xhat.len()),
        ));
    }
    let mut out = vec![0.0; big_n * n];
    for i in 0..big_n {
        let dst = &mut out[i * n..(i + 1) * n];
        for (j, &lij) in l.row(i).iter().enumerate() {
            if lij == 0.0 {
                continue;
            }
            for (d, x) in dst.iter_mut().zip(&xhat[j * n..(j + 1) * n]) {
                *d += lij * x;
            }
        }
    }
    Ok(out)
}
