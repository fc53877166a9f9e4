//! Resolvent entries `G(x, y; z) = ⟨δ_x, (H − z)⁻¹ δ_y⟩` for operators
//! whose bond graph is a forest.
//!
//! A column is obtained by rooting the component of `y` at `y` and
//! eliminating vertices leaves-first. Each elimination folds a child's
//! effective denominator into its parent, so no fill-in ever appears and a
//! column costs `O(size of the component)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operator::{hopping_difference, restrict_dirichlet, HamiltonianMatrix};
use crate::tree::{expand, path, theta, TreeBall, VertexId};

/// Smallest accepted `Im z`.
pub const ETA_FLOOR: f64 = 1e-8;

/// Largest dimension accepted by the dense routines.
pub const DENSE_GUARD: usize = 2000;

/// `z = E + iη` in the open upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub energy: f64,
    pub eta: f64,
}

impl SpectralPoint {
    pub fn new(energy: f64, eta: f64) -> Result<Self> {
        let z = Self { energy, eta };
        z.validate()?;
        Ok(z)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.energy.is_finite() {
            return invalid("energy must be finite");
        }
        if !(self.eta.is_finite() && self.eta >= ETA_FLOOR) {
            return invalid(format!(
                "eta must be >= {ETA_FLOOR:e} (upper half-plane), got {}",
                self.eta
            ));
        }
        Ok(())
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.energy, self.eta)
    }
}

/// Reusable buffers for repeated column solves on operators of one size.
#[derive(Debug, Default, Clone)]
pub struct ForestSolver {
    order: Vec<VertexId>,
    up: Vec<usize>,
    hop: Vec<f64>,
    pivot: Vec<Complex64>,
    mark: Vec<u32>,
    epoch: u32,
}

const UNSET: usize = usize::MAX;

impl ForestSolver {
    pub fn new() -> Self {
        Self::default()
    }

    fn reset(&mut self, n: usize) {
        if self.mark.len() != n {
            self.mark = vec![0; n];
            self.up = vec![UNSET; n];
            self.hop = vec![0.0; n];
            self.pivot = vec![Complex64::new(0.0, 0.0); n];
            self.epoch = 0;
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.mark.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
        self.order.clear();
    }

    /// Writes `G(·, y; z)` into `out` (resized to `h.dim()`). Entries outside
    /// the component of `y` are zero.
    pub fn column_into(
        &mut self,
        h: &HamiltonianMatrix,
        y: VertexId,
        z: &SpectralPoint,
        out: &mut Vec<Complex64>,
    ) -> Result<()> {
        z.validate()?;
        let n = h.dim();
        if y >= n {
            return invalid(format!("source {y} outside operator of dimension {n}"));
        }
        self.reset(n);
        let zc = z.z();
        let epoch = self.epoch;

        // Breadth-first from y: every vertex appears after its parent.
        self.mark[y] = epoch;
        self.up[y] = UNSET;
        self.order.push(y);
        let mut head = 0;
        while head < self.order.len() {
            let v = self.order[head];
            head += 1;
            let parent = self.up[v];
            let mut saw_parent = false;
            for &(u, t) in h.neighbors(v) {
                if u == parent && !saw_parent {
                    saw_parent = true;
                    continue;
                }
                if self.mark[u] == epoch {
                    return Err(Error::NotAForest(u));
                }
                self.mark[u] = epoch;
                self.up[u] = v;
                self.hop[u] = t;
                self.order.push(u);
            }
        }

        // Leaves first: fold each child's Schur complement into its parent.
        let diag = h.diagonal();
        for &v in &self.order {
            self.pivot[v] = Complex64::new(diag[v], 0.0) - zc;
        }
        for &v in self.order[1..].iter().rev() {
            let t = self.hop[v];
            let folded = t * t / self.pivot[v];
            self.pivot[self.up[v]] -= folded;
        }

        out.clear();
        out.resize(n, Complex64::new(0.0, 0.0));
        out[y] = self.pivot[y].inv();
        for &v in &self.order[1..] {
            out[v] = -self.hop[v] * out[self.up[v]] / self.pivot[v];
        }
        Ok(())
    }

    pub fn column(
        &mut self,
        h: &HamiltonianMatrix,
        y: VertexId,
        z: &SpectralPoint,
    ) -> Result<Vec<Complex64>> {
        let mut out = Vec::new();
        self.column_into(h, y, z, &mut out)?;
        Ok(out)
    }
}

/// `G(·, y; z)` by leaf elimination.
pub fn resolvent_column(
    h: &HamiltonianMatrix,
    y: VertexId,
    z: &SpectralPoint,
) -> Result<Vec<Complex64>> {
    ForestSolver::new().column(h, y, z)
}

pub fn green_entry(
    h: &HamiltonianMatrix,
    x: VertexId,
    y: VertexId,
    z: &SpectralPoint,
) -> Result<Complex64> {
    if x >= h.dim() {
        return invalid(format!("target {x} outside operator of dimension {}", h.dim()));
    }
    Ok(resolvent_column(h, y, z)?[x])
}

fn shifted_dense(h: &HamiltonianMatrix, z: &SpectralPoint) -> Result<DMatrix<Complex64>> {
    z.validate()?;
    if h.dim() > DENSE_GUARD {
        return Err(Error::DenseGuard { dim: h.dim(), guard: DENSE_GUARD });
    }
    let zc = z.z();
    let real = h.to_dense();
    let n = real.nrows();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let x = Complex64::new(real[(i, j)], 0.0);
        if i == j {
            x - zc
        } else {
            x
        }
    }))
}

/// Full `(H − z)⁻¹` by dense LU. Verification only.
pub fn dense_oracle(h: &HamiltonianMatrix, z: &SpectralPoint) -> Result<DMatrix<Complex64>> {
    shifted_dense(h, z)?.lu().try_inverse().ok_or(Error::Singular)
}

/// One column of [`dense_oracle`] without forming the inverse.
pub fn dense_column(
    h: &HamiltonianMatrix,
    y: VertexId,
    z: &SpectralPoint,
) -> Result<Vec<Complex64>> {
    if y >= h.dim() {
        return invalid(format!("source {y} outside operator of dimension {}", h.dim()));
    }
    let m = shifted_dense(h, z)?;
    let mut rhs = nalgebra::DVector::from_element(h.dim(), Complex64::new(0.0, 0.0));
    rhs[y] = Complex64::new(1.0, 0.0);
    let sol = m.lu().solve(&rhs).ok_or(Error::Singular)?;
    Ok(sol.iter().copied().collect())
}

/// Both sides of the double resolvent expansion of `G(x, w; z)` through
/// `ℒ = ℒ(x, y)` and its 2-fattening `ℒ⁺⁺`:
///
/// `G(x,w) = Σ_{(u,u')∈Θ(ℒ)} Σ_{(v,v')∈Θ(ℒ⁺⁺)} G_ℒ(x,u) T_ℒ(u,u') G(u',v) T_ℒ⁺⁺(v,v') G_ℒ⁺⁺(v',w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolventIdentityCheck {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub residual: f64,
    pub inner_bonds: usize,
    pub outer_bonds: usize,
    /// Outer bonds `(v, v')` with `G_ℒ⁺⁺(v', w) ≠ 0`.
    pub contributing_outer_bonds: usize,
}

/// Evaluates the expansion for an operator `h` living on `ball`. Every
/// restricted operator is rebuilt from `h` on each call.
pub fn check_resolvent_identity(
    ball: &TreeBall,
    h: &HamiltonianMatrix,
    x: VertexId,
    y: VertexId,
    w: VertexId,
    z: &SpectralPoint,
) -> Result<ResolventIdentityCheck> {
    z.validate()?;
    if h.dim() != ball.len() {
        return invalid("operator dimension differs from the ball size");
    }
    let xw = path(ball, x, w)?;
    if xw.position(y).is_none() {
        return Err(Error::Precondition(format!(
            "y = {y} is not on the path L(x = {x}, w = {w})"
        )));
    }
    let line = path(ball, x, y)?.to_region(ball)?;
    let fat = expand(ball, &line, 2);
    if fat.contains(w) {
        let gap = line.members().iter().map(|&u| ball.distance(u, w)).min().unwrap_or(0);
        return Err(Error::Precondition(format!(
            "w = {w} lies inside L(x, y)++ (distance {gap} from the path, need > 2)"
        )));
    }

    let h_line = restrict_dirichlet(h, &line)?;
    let h_fat = restrict_dirichlet(h, &fat)?;
    let t_line = hopping_difference(h, &line)?;
    let t_fat = hopping_difference(h, &fat)?;
    let inner = theta(ball, &line);
    let outer = theta(ball, &fat);

    let mut solver = ForestSolver::new();
    let lhs = solver.column(h, w, z)?[x];
    let g_line_x = solver.column(&h_line, x, z)?;
    let g_fat_w = solver.column(&h_fat, w, z)?;

    let zero = Complex64::new(0.0, 0.0);
    let mut rhs = zero;
    let mut contributing = 0;
    for &(v, v_out) in &outer {
        let tail = t_fat.entry(v, v_out) * g_fat_w[v_out];
        if tail != zero {
            contributing += 1;
        } else {
            continue;
        }
        let g_full_v = solver.column(h, v, z)?;
        for &(u, u_out) in &inner {
            rhs += g_line_x[u] * t_line.entry(u, u_out) * g_full_v[u_out] * tail;
        }
    }
    Ok(ResolventIdentityCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).norm(),
        inner_bonds: inner.len(),
        outer_bonds: outer.len(),
        contributing_outer_bonds: contributing,
    })
}
