//! Anderson Hamiltonians `H = Δ + λV` on a ball, their restrictions, and
//! the hopping-difference operators `T_Ω`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::tree::{Region, TreeBall, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaplacianKind {
    /// Plain adjacency operator, no diagonal.
    Adjacency,
    /// Adjacency minus the vertex degree on the diagonal.
    Graph,
}

impl std::str::FromStr for LaplacianKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adjacency" => Ok(Self::Adjacency),
            "graph" => Ok(Self::Graph),
            other => invalid(format!("unknown laplacian kind {other:?} (adjacency|graph)")),
        }
    }
}

impl std::fmt::Display for LaplacianKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Adjacency => "adjacency",
            Self::Graph => "graph",
        })
    }
}

/// Single-site distribution of the random potential. All variants have a
/// bounded density and a finite `η`-moment for some `η > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Distribution {
    Uniform { a: f64, b: f64 },
    Gaussian { mean: f64, sd: f64 },
    Cauchy { location: f64, scale: f64 },
}

impl Default for Distribution {
    fn default() -> Self {
        Self::Uniform { a: -0.5, b: 0.5 }
    }
}

impl Distribution {
    /// Build from a name and its numeric parameters.
    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        let name = name.trim().to_ascii_lowercase();
        let dist = match (name.as_str(), params) {
            ("uniform", []) => Self::default(),
            ("uniform", [a, b]) => Self::Uniform { a: *a, b: *b },
            ("gaussian" | "normal", []) => Self::Gaussian { mean: 0.0, sd: 1.0 },
            ("gaussian" | "normal", [mean, sd]) => Self::Gaussian { mean: *mean, sd: *sd },
            ("cauchy", []) => Self::Cauchy { location: 0.0, scale: 1.0 },
            ("cauchy", [location, scale]) => Self::Cauchy { location: *location, scale: *scale },
            ("bernoulli", _) => {
                return invalid(
                    "bernoulli disorder has no bounded density; localization for the \
                     Anderson-Bernoulli model on these trees is an open problem and it is not supported",
                )
            }
            ("uniform" | "gaussian" | "normal" | "cauchy", _) => {
                return invalid(format!("distribution {name} takes exactly two parameters"))
            }
            _ => return invalid(format!("unknown distribution {name:?} (uniform|gaussian|cauchy)")),
        };
        dist.validate()?;
        Ok(dist)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Uniform { a, b } => a.is_finite() && b.is_finite() && a < b,
            Self::Gaussian { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            Self::Cauchy { location, scale } => {
                location.is_finite() && scale.is_finite() && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("degenerate distribution parameters: {self:?}"))
        }
    }

    /// Sup norm of the density.
    pub fn density_sup(&self) -> f64 {
        match *self {
            Self::Uniform { a, b } => 1.0 / (b - a),
            Self::Gaussian { sd, .. } => 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt()),
            Self::Cauchy { scale, .. } => 1.0 / (std::f64::consts::PI * scale),
        }
    }

    /// Map two independent 64-bit words to one draw. Every variant consumes
    /// exactly two words so that each site owns a fixed slot of the stream.
    fn draw(&self, w0: u64, w1: u64) -> f64 {
        match *self {
            Self::Uniform { a, b } => a + (b - a) * unit_closed_open(w0),
            Self::Gaussian { mean, sd } => {
                let u1 = unit_open_closed(w0);
                let u2 = unit_closed_open(w1);
                let r = (-2.0 * u1.ln()).sqrt();
                mean + sd * r * (std::f64::consts::TAU * u2).cos()
            }
            Self::Cauchy { location, scale } => {
                let u = unit_open(w0);
                location + scale * (std::f64::consts::PI * (u - 0.5)).tan()
            }
        }
    }
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

fn unit_closed_open(w: u64) -> f64 {
    (w >> 11) as f64 * TWO_POW_M53
}

fn unit_open_closed(w: u64) -> f64 {
    ((w >> 11) + 1) as f64 * TWO_POW_M53
}

fn unit_open(w: u64) -> f64 {
    ((w >> 11) as f64 + 0.5) * TWO_POW_M53
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    pub distribution: Distribution,
    pub lambda: f64,
    pub master_seed: u64,
}

impl Default for DisorderSpec {
    fn default() -> Self {
        Self { distribution: Distribution::default(), lambda: 1.0, master_seed: 0 }
    }
}

impl DisorderSpec {
    pub fn new(distribution: Distribution, lambda: f64, master_seed: u64) -> Result<Self> {
        let spec = Self { distribution, lambda, master_seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return invalid(format!("coupling lambda must be > 0, got {}", self.lambda));
        }
        Ok(())
    }

    /// Stream for one realization: ChaCha8 keyed by the master seed, with the
    /// realization index selecting the 64-bit stream id. Site `v` owns words
    /// `4v..4v+4` of that stream.
    fn stream(&self, realization: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(realization);
        rng
    }

    /// Raw `V(x)` for sites `0..n` of one realization (not scaled by λ).
    pub fn sample_sites(&self, n: usize, realization: u64) -> Vec<f64> {
        let mut rng = self.stream(realization);
        (0..n)
            .map(|_| {
                let w0 = rng.next_u64();
                let w1 = rng.next_u64();
                self.distribution.draw(w0, w1)
            })
            .collect()
    }

    /// Random access to a single site; equals `sample_sites(..)[site]`.
    pub fn site_value(&self, realization: u64, site: usize) -> f64 {
        let mut rng = self.stream(realization);
        rng.set_word_pos(4 * site as u128);
        let w0 = rng.next_u64();
        let w1 = rng.next_u64();
        self.distribution.draw(w0, w1)
    }
}

/// One i.i.d. draw per vertex of the ball, keyed by
/// `(master_seed, realization, vertex)`.
pub fn sample_potential(spec: &DisorderSpec, ball: &TreeBall, realization: u64) -> Vec<f64> {
    spec.sample_sites(ball.len(), realization)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bond {
    pub a: VertexId,
    pub b: VertexId,
    pub value: f64,
}

impl Bond {
    fn canonical(a: VertexId, b: VertexId, value: f64) -> Self {
        if a < b {
            Self { a, b, value }
        } else {
            Self { a: b, b: a, value }
        }
    }

    fn key(&self) -> (VertexId, VertexId) {
        (self.a, self.b)
    }

    /// Exactly one endpoint in `omega`.
    fn crosses(&self, omega: &Region) -> bool {
        omega.contains(self.a) != omega.contains(self.b)
    }
}

/// Real symmetric matrix stored as a diagonal plus upper-triangle bonds
/// (sorted, no duplicates).
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricSparse {
    diagonal: Vec<f64>,
    bonds: Vec<Bond>,
}

impl SymmetricSparse {
    pub fn new(diagonal: Vec<f64>, bonds: impl IntoIterator<Item = Bond>) -> Result<Self> {
        let n = diagonal.len();
        let mut bonds: Vec<Bond> =
            bonds.into_iter().map(|b| Bond::canonical(b.a, b.b, b.value)).collect();
        bonds.sort_by_key(Bond::key);
        for w in bonds.windows(2) {
            if w[0].key() == w[1].key() {
                return invalid(format!("duplicate bond {:?}", w[0].key()));
            }
        }
        if let Some(b) = bonds.iter().find(|b| b.a == b.b || b.b >= n) {
            return invalid(format!("bond ({}, {}) is a loop or out of range", b.a, b.b));
        }
        Ok(Self { diagonal, bonds })
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn entry(&self, i: VertexId, j: VertexId) -> f64 {
        if i == j {
            return self.diagonal[i];
        }
        let key = if i < j { (i, j) } else { (j, i) };
        self.bonds
            .binary_search_by_key(&key, Bond::key)
            .map(|idx| self.bonds[idx].value)
            .unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.diagonal.iter().filter(|d| **d != 0.0).count()
            + 2 * self.bonds.iter().filter(|b| b.value != 0.0).count()
    }

    /// Entrywise sum; the two operands must have equal dimension.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return invalid("dimension mismatch in sparse sum");
        }
        let diagonal = self.diagonal.iter().zip(&other.diagonal).map(|(a, b)| a + b).collect();
        let mut merged: std::collections::BTreeMap<(usize, usize), f64> =
            self.bonds.iter().map(|b| (b.key(), b.value)).collect();
        for b in &other.bonds {
            *merged.entry(b.key()).or_insert(0.0) += b.value;
        }
        Self::new(diagonal, merged.into_iter().map(|((a, b), value)| Bond { a, b, value }))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut m = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(
            &self.diagonal,
        ));
        debug_assert_eq!(m.nrows(), n);
        for b in &self.bonds {
            m[(b.a, b.b)] = b.value;
            m[(b.b, b.a)] = b.value;
        }
        m
    }
}

/// `H = Δ + λV` (or a restriction of it) with a neighbour table for the
/// active bonds.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix {
    kind: LaplacianKind,
    matrix: SymmetricSparse,
    offsets: Vec<usize>,
    neighbors: Vec<(VertexId, f64)>,
}

impl HamiltonianMatrix {
    pub fn from_sparse(kind: LaplacianKind, matrix: SymmetricSparse) -> Self {
        let n = matrix.dim();
        let mut degree = vec![0usize; n + 1];
        for b in &matrix.bonds {
            degree[b.a + 1] += 1;
            degree[b.b + 1] += 1;
        }
        for i in 0..n {
            degree[i + 1] += degree[i];
        }
        let offsets = degree;
        let mut fill = offsets.clone();
        let mut neighbors = vec![(0usize, 0.0f64); offsets[n]];
        for b in &matrix.bonds {
            neighbors[fill[b.a]] = (b.b, b.value);
            fill[b.a] += 1;
            neighbors[fill[b.b]] = (b.a, b.value);
            fill[b.b] += 1;
        }
        Self { kind, matrix, offsets, neighbors }
    }

    /// Open chain `0 - 1 - ... - (n-1)` with unit hopping and the given
    /// diagonal.
    pub fn chain(kind: LaplacianKind, diagonal: Vec<f64>) -> Self {
        let n = diagonal.len();
        let bonds = (1..n).map(|i| Bond { a: i - 1, b: i, value: 1.0 });
        let matrix = SymmetricSparse::new(diagonal, bonds).expect("chain bonds are valid");
        Self::from_sparse(kind, matrix)
    }

    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn diagonal(&self) -> &[f64] {
        self.matrix.diagonal()
    }

    pub fn bonds(&self) -> &[Bond] {
        self.matrix.bonds()
    }

    pub fn as_sparse(&self) -> &SymmetricSparse {
        &self.matrix
    }

    pub fn entry(&self, i: VertexId, j: VertexId) -> f64 {
        self.matrix.entry(i, j)
    }

    pub fn neighbors(&self, v: VertexId) -> &[(VertexId, f64)] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        self.matrix.to_dense()
    }

    fn check_region(&self, omega: &Region) -> Result<()> {
        match omega.members().last() {
            Some(&v) if v >= self.dim() => {
                invalid(format!("region vertex {v} outside operator of dimension {}", self.dim()))
            }
            _ => Ok(()),
        }
    }

    fn keep_bonds(&self, keep: impl Fn(&Bond) -> bool) -> Self {
        let bonds = self.matrix.bonds.iter().copied().filter(|b| keep(b)).collect();
        let matrix = SymmetricSparse { diagonal: self.matrix.diagonal.clone(), bonds };
        Self::from_sparse(self.kind, matrix)
    }
}

/// `H^{B(r)}`: unit hopping on every tree edge of the ball; diagonal `λV`
/// for the adjacency kind and `λV − deg_Γ` for the graph kind, where the
/// degree is taken in the infinite tree.
pub fn assemble(
    ball: &TreeBall,
    kind: LaplacianKind,
    potential: &[f64],
    lambda: f64,
) -> Result<HamiltonianMatrix> {
    if potential.len() != ball.len() {
        return invalid(format!(
            "potential has {} entries but the ball has {} vertices",
            potential.len(),
            ball.len()
        ));
    }
    let diagonal = potential
        .iter()
        .enumerate()
        .map(|(v, &p)| match kind {
            LaplacianKind::Adjacency => lambda * p,
            LaplacianKind::Graph => lambda * p - ball.full_degree(v) as f64,
        })
        .collect();
    // Edges arrive ordered by child id with parent < child, already canonical
    // and sorted by (parent, child) because BFS children are contiguous.
    let mut bonds: Vec<Bond> = ball.edges().map(|(a, b)| Bond { a, b, value: 1.0 }).collect();
    bonds.sort_by_key(Bond::key);
    let matrix = SymmetricSparse { diagonal, bonds };
    Ok(HamiltonianMatrix::from_sparse(kind, matrix))
}

/// `H_Ω`: hopping across `Θ(Ω)` removed, diagonal untouched.
pub fn restrict_dirichlet(h: &HamiltonianMatrix, omega: &Region) -> Result<HamiltonianMatrix> {
    h.check_region(omega)?;
    Ok(h.keep_bonds(|b| !b.crosses(omega)))
}

/// `H^Ω`: only bonds with both endpoints in `Ω` survive, diagonal untouched.
pub fn restrict_outside(h: &HamiltonianMatrix, omega: &Region) -> Result<HamiltonianMatrix> {
    h.check_region(omega)?;
    Ok(h.keep_bonds(|b| omega.contains(b.a) && omega.contains(b.b)))
}

/// `T_Ω = H − H_Ω`: the hopping terms of `H` across `Θ(Ω)`.
pub fn hopping_difference(h: &HamiltonianMatrix, omega: &Region) -> Result<SymmetricSparse> {
    h.check_region(omega)?;
    let bonds = h.bonds().iter().copied().filter(|b| b.crosses(omega)).collect();
    Ok(SymmetricSparse { diagonal: vec![0.0; h.dim()], bonds })
}
