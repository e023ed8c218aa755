//! Weighted digraphs and the Laplacian matrices built from them.
//!
//! `a[(i, j)] > 0` means agent `i` receives information from agent `j`, i.e.
//! the graph has an edge `j → i`. Indices are 0-based here; the scenario
//! format is 1-based and converts on parse.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numlin::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    weights: Matrix,
}

impl CommGraph {
    pub fn from_adjacency(weights: Matrix) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::dim("CommGraph", format!("adjacency is {}x{}", n, weights.ncols())));
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::contract("CommGraph", format!("weight a[{i},{j}] = {w} is not a finite nonnegative number")));
                }
            }
            if weights[(i, i)] != 0.0 {
                return Err(Error::contract("CommGraph", format!("self-loop at node {i}")));
            }
        }
        Ok(CommGraph { weights })
    }

    /// Builds a graph from `(from, to, weight)` edges. Repeated edges add up.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut w = Matrix::zeros(n, n);
        for &(from, to, weight) in edges {
            if from >= n || to >= n {
                return Err(Error::contract("CommGraph", format!("edge {from} -> {to} outside {n} nodes")));
            }
            w[(to, from)] += weight;
        }
        Self::from_adjacency(w)
    }

    pub fn n_agents(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    /// Same graph with nodes relabeled: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_agents();
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                w[(perm[i], perm[j])] = self.weights[(i, j)];
            }
        }
        Self::from_adjacency(w)
    }

    fn out_neighbors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_agents()).filter(move |&i| self.weights[(i, j)] > 0.0)
    }
}

/// Agents with direct access to the reference, and their `ι` flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RootSet {
    members: Vec<usize>,
    iota: Vec<bool>,
}

impl RootSet {
    pub fn new(n: usize, members: &[usize]) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::contract("RootSet", "root set is empty"));
        }
        let mut iota = vec![false; n];
        for &m in members {
            if m >= n {
                return Err(Error::contract("RootSet", format!("member {m} outside {n} nodes")));
            }
            iota[m] = true;
        }
        let members = (0..n).filter(|&i| iota[i]).collect();
        Ok(RootSet { members, iota })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn iota(&self) -> &[bool] {
        &self.iota
    }

    pub fn n_agents(&self) -> usize {
        self.iota.len()
    }
}

/// `ℓᵢᵢ = Σₖ aᵢₖ`, `ℓᵢⱼ = −aᵢⱼ`.
pub fn laplacian(g: &CommGraph) -> Matrix {
    let n = g.n_agents();
    let a = g.weights();
    let mut l = -a.clone();
    for i in 0..n {
        l[(i, i)] = a.row(i).sum();
    }
    l
}

fn reached_from(g: &CommGraph, sources: &[usize]) -> Vec<bool> {
    let mut seen = vec![false; g.n_agents()];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &s in sources {
        if !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(j) = queue.pop_front() {
        for i in g.out_neighbors(j) {
            if !seen[i] {
                seen[i] = true;
                queue.push_back(i);
            }
        }
    }
    seen
}

/// True iff some node reaches every node along directed edges.
pub fn has_spanning_tree(g: &CommGraph) -> bool {
    let n = g.n_agents();
    n > 0 && (0..n).any(|r| reached_from(g, &[r]).iter().all(|&s| s))
}

/// `ℓ̂ᵢⱼ = ℓᵢⱼ − ℓ_Nⱼ` for `i, j < N`.
pub fn reduced_laplacian(l: &Matrix) -> Result<Matrix> {
    let n = l.nrows();
    if n < 2 || l.ncols() != n {
        return Err(Error::dim("reduced_laplacian", format!("need a square Laplacian with N >= 2, got {}x{}", n, l.ncols())));
    }
    Ok(Matrix::from_fn(n - 1, n - 1, |i, j| l[(i, j)] - l[(n - 1, j)]))
}

/// `L̄ = L + diag(ιᵢ)`.
pub fn expanded_laplacian(l: &Matrix, root: &RootSet) -> Result<Matrix> {
    let n = l.nrows();
    if root.n_agents() != n {
        return Err(Error::dim("expanded_laplacian", format!("root set over {} nodes, Laplacian is {n}x{n}", root.n_agents())));
    }
    let mut out = l.clone();
    for (i, &flag) in root.iota().iter().enumerate() {
        if flag {
            out[(i, i)] += 1.0;
        }
    }
    Ok(out)
}

/// True iff every node is reachable from some member of the root set.
pub fn root_set_covers(g: &CommGraph, root: &RootSet) -> Result<bool> {
    if root.members().is_empty() {
        return Err(Error::contract("root_set_covers", "root set is empty"));
    }
    if root.n_agents() != g.n_agents() {
        return Err(Error::dim("root_set_covers", "root set and graph sizes differ"));
    }
    Ok(reached_from(g, root.members()).iter().all(|&s| s))
}

/// Random weighted digraph on `n` nodes that contains a directed spanning
/// tree: a random tree rooted at a random node, plus extra random edges.
pub fn random_spanning_tree_graph<R: Rng>(n: usize, extra_edges: usize, rng: &mut R) -> CommGraph {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut w = Matrix::zeros(n, n);
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        w[(order[k], parent)] = rng.random_range(0.5..2.0);
    }
    for _ in 0..extra_edges {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if i != j {
            w[(i, j)] = rng.random_range(0.5..2.0);
        }
    }
    CommGraph::from_adjacency(w).expect("generated weights are valid")
}
