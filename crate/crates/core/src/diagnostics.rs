//! Finite-volume spectral diagnostics: dense eigen-decomposition,
//! participation ratios, eigenvector decay, spectral measures of `δ_x` and
//! level-spacing statistics.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{fit_decay_points, DecayFit};
use crate::operator::HamiltonianMatrix;
use crate::tree::{TreeBall, VertexId};

/// Largest dimension for a decomposition with eigenvectors.
pub const EIGEN_GUARD: usize = 6000;
/// Largest dimension for [`eigenvalues_only`].
pub const EIGENVALUE_GUARD: usize = 10_000;
/// Number of consecutive spacings averaged when unfolding.
pub const UNFOLD_WINDOW: usize = 21;
/// Shell maxima below this fraction of the peak are left out of decay fits.
const SHELL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `n` belongs to `eigenvalues[n]`; `None` for eigenvalues only.
    pub eigenvectors: Option<DMatrix<f64>>,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    fn vectors(&self) -> Result<&DMatrix<f64>> {
        self.eigenvectors
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("decomposition was computed without eigenvectors".into()))
    }

    /// `max_n ‖Hψ_n − E_n ψ_n‖ / ‖H‖`, with `‖H‖ = max |E_n|`.
    pub fn relative_residual(&self, h: &HamiltonianMatrix) -> Result<f64> {
        let vecs = self.vectors()?;
        let dense = h.to_dense();
        let scale = self.eigenvalues.iter().fold(0.0f64, |m, e| m.max(e.abs())).max(f64::MIN_POSITIVE);
        let hv = &dense * vecs;
        let mut worst = 0.0f64;
        for (n, &e) in self.eigenvalues.iter().enumerate() {
            let r = (hv.column(n) - vecs.column(n) * e).norm();
            worst = worst.max(r);
        }
        Ok(worst / scale)
    }

    /// `max_n |‖ψ_n‖ − 1|`.
    pub fn norm_defect(&self) -> Result<f64> {
        let vecs = self.vectors()?;
        Ok(vecs.column_iter().map(|c| (c.norm() - 1.0).abs()).fold(0.0, f64::max))
    }

    /// `|Σ E_n − tr H| / max(1, |tr H|)`.
    pub fn trace_defect(&self, h: &HamiltonianMatrix) -> f64 {
        let sum: f64 = self.eigenvalues.iter().sum();
        let tr = h.trace();
        (sum - tr).abs() / tr.abs().max(1.0)
    }
}

fn guard(h: &HamiltonianMatrix, limit: usize) -> Result<()> {
    if h.dim() > limit {
        return Err(Error::DenseGuard { dim: h.dim(), guard: limit });
    }
    Ok(())
}

/// Full symmetric eigen-decomposition, eigenvalues ascending. Dimensions
/// above [`EIGEN_GUARD`] are refused; use [`eigenvalues_only`] there.
pub fn spectrum_full(h: &HamiltonianMatrix) -> Result<SpectralDecomposition> {
    guard(h, EIGEN_GUARD)?;
    let eig = h.to_dense().symmetric_eigen();
    let mut order: Vec<usize> = (0..h.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(h.dim(), h.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SpectralDecomposition { eigenvalues, eigenvectors: Some(vectors) })
}

pub fn eigenvalues_only(h: &HamiltonianMatrix) -> Result<SpectralDecomposition> {
    guard(h, EIGENVALUE_GUARD)?;
    let mut eigenvalues: Vec<f64> = h.to_dense().symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    Ok(SpectralDecomposition { eigenvalues, eigenvectors: None })
}

/// `Σ_x ψ(x)⁴` for a unit vector.
pub fn ipr(psi: &[f64]) -> f64 {
    psi.iter().map(|a| a.powi(4)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationMetrics {
    pub index: usize,
    pub energy: f64,
    pub ipr: f64,
    pub center: VertexId,
    /// Fit of per-shell maxima of `|ψ|` against distance from the center;
    /// `None` when fewer than three shells carry weight.
    pub decay: Option<DecayFit>,
}

/// Tree distance from `center` to every ball vertex.
pub fn distances_from(ball: &TreeBall, center: VertexId) -> Vec<u64> {
    let mut dist = vec![u64::MAX; ball.len()];
    let mut queue = std::collections::VecDeque::from([center]);
    dist[center] = 0;
    while let Some(v) = queue.pop_front() {
        for u in ball.neighbors(v) {
            if dist[u] == u64::MAX {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    dist
}

/// Localization metrics of a single vector living on `ball`.
pub fn vector_metrics(ball: &TreeBall, psi: &[f64]) -> (f64, VertexId, Option<DecayFit>) {
    let center = psi
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map_or(0, |(i, _)| i);
    let dist = distances_from(ball, center);
    let mut shells: Vec<f64> = Vec::new();
    for (v, &d) in dist.iter().enumerate() {
        let d = d as usize;
        if shells.len() <= d {
            shells.resize(d + 1, 0.0);
        }
        shells[d] = shells[d].max(psi[v].abs());
    }
    let peak = psi[center].abs();
    let points: Vec<(f64, f64)> = shells
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > SHELL_FLOOR * peak)
        .map(|(d, &m)| (d as f64, m))
        .collect();
    (ipr(psi), center, fit_decay_points(&points).ok())
}

pub fn eigen_metrics(dec: &SpectralDecomposition, ball: &TreeBall) -> Result<Vec<LocalizationMetrics>> {
    let vecs = dec.vectors()?;
    if vecs.nrows() != ball.len() {
        return Err(Error::InvalidArgument(format!(
            "eigenvectors have {} entries, ball has {} vertices",
            vecs.nrows(),
            ball.len()
        )));
    }
    Ok((0..dec.len())
        .into_par_iter()
        .map(|n| {
            let psi: Vec<f64> = vecs.column(n).iter().copied().collect();
            let (ipr, center, decay) = vector_metrics(ball, &psi);
            LocalizationMetrics { index: n, energy: dec.eigenvalues[n], ipr, center, decay }
        })
        .collect())
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralAtom {
    pub energy: f64,
    pub weight: f64,
}

/// Atoms `(E_n, ψ_n(x)²)` of the finite-volume spectral measure of `δ_x`.
pub fn spectral_measure(dec: &SpectralDecomposition, x: VertexId) -> Result<Vec<SpectralAtom>> {
    let vecs = dec.vectors()?;
    if x >= vecs.nrows() {
        return Err(Error::InvalidArgument(format!("vertex {x} outside decomposition of size {}", vecs.nrows())));
    }
    Ok(dec
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(n, &energy)| SpectralAtom { energy, weight: vecs[(x, n)].powi(2) })
        .collect())
}

/// `Σ_n w_n / (E_n − z)`.
pub fn stieltjes(atoms: &[SpectralAtom], z: Complex64) -> Complex64 {
    atoms.iter().map(|a| a.weight / (Complex64::new(a.energy, 0.0) - z)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingStatistics {
    /// Unfolded nearest-neighbour spacings, mean one.
    pub spacings: Vec<f64>,
    /// Kolmogorov–Smirnov distance to the unit exponential law.
    pub ks_distance: f64,
}

/// Unfolds ascending levels by the local mean spacing over
/// [`UNFOLD_WINDOW`] neighbouring spacings (reflected at the spectrum
/// edges), rescales to mean one and compares with `Exp(1)`.
pub fn spacing_statistics(levels: &[f64]) -> Result<SpacingStatistics> {
    if levels.len() < 50 {
        return Err(Error::InsufficientData(format!(
            "spacing statistics need >= 50 levels, got {}",
            levels.len()
        )));
    }
    if levels.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidArgument("levels must be finite".into()));
    }
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    let raw: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).collect();
    let m = raw.len() as isize;
    let reflect = |i: isize| -> usize {
        let mut j = i;
        while j < 0 || j >= m {
            j = if j < 0 { -j - 1 } else { 2 * m - j - 1 };
        }
        j as usize
    };
    let half = (UNFOLD_WINDOW / 2) as isize;
    let mut unfolded = Vec::with_capacity(raw.len());
    for i in 0..m {
        let local = (i - half..=i + half).map(|j| raw[reflect(j)]).sum::<f64>() / UNFOLD_WINDOW as f64;
        if local <= 0.0 {
            return Err(Error::InsufficientData(format!(
                "levels are degenerate around index {i}; local mean spacing is zero"
            )));
        }
        unfolded.push(raw[i as usize] / local);
    }
    let mean = unfolded.iter().sum::<f64>() / unfolded.len() as f64;
    unfolded.iter_mut().for_each(|s| *s /= mean);
    let ks_distance = ks_exponential(&unfolded);
    Ok(SpacingStatistics { spacings: unfolded, ks_distance })
}

/// `sup_t |F_n(t) − (1 − e^{−t})|`.
pub fn ks_exponential(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-x.max(0.0)).exp();
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Applies `H` to a vector; used to cross-check decompositions without
/// forming the dense matrix.
pub fn apply(h: &HamiltonianMatrix, psi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(h.dim(), |v, _| {
        h.diagonal()[v] * psi[v] + h.neighbors(v).iter().map(|&(u, t)| t * psi[u]).sum::<f64>()
    })
}
