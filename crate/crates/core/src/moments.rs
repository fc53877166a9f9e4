//! Disorder averages of fractional moments `⟨|G(x, y; z)|^s⟩`.
//!
//! Realizations are independent work items. Each worker evaluates whole
//! realizations; the per-realization values are gathered by realization
//! index and reduced sequentially, so the estimates are bit-identical for
//! any worker count.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::green::{ForestSolver, SpectralPoint};
use crate::operator::{assemble, Bond, DisorderSpec, HamiltonianMatrix, LaplacianKind, SymmetricSparse};
use crate::tree::{build_ball, TreeBall, TreeParams, VertexId};

/// Realizations evaluated per parallel batch before sequential reduction.
const BATCH: usize = 512;

/// Ratio threshold used by [`bound_probe`] to call the moments bounded.
pub const BOUNDED_RATIO: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRequest {
    pub tree: TreeParams,
    pub kind: LaplacianKind,
    pub disorder: DisorderSpec,
    pub source: VertexId,
    pub targets: Vec<VertexId>,
    pub z: SpectralPoint,
    pub s: f64,
    pub samples: usize,
}

impl MomentRequest {
    pub fn validate(&self) -> Result<()> {
        self.tree.validate()?;
        self.disorder.validate()?;
        self.z.validate()?;
        validate_exponent(self.s)?;
        if self.samples == 0 {
            return invalid("samples M must be >= 1");
        }
        if self.targets.is_empty() {
            return invalid("at least one target is required");
        }
        Ok(())
    }
}

pub fn validate_exponent(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        invalid(format!("fractional exponent s must lie in (0, 1), got {s}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub target: VertexId,
    pub distance: u64,
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// One-pass mean/variance (Welford) with a compensated total for the mean.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStats {
    count: usize,
    mean: f64,
    m2: f64,
    total: CompensatedSum,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        self.total.add(x);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total.value() / self.count as f64
        }
    }

    /// Sample standard deviation divided by `√M`; zero for a single sample.
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let var = self.m2 / (self.count - 1) as f64;
        (var / self.count as f64).sqrt()
    }
}

fn available_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Runs `eval(m)` for `m in 0..samples` on `workers` threads and folds the
/// returned rows into one [`RunningStats`] per column, in realization order.
fn monte_carlo<F>(samples: usize, width: usize, workers: usize, eval: F) -> Result<Vec<RunningStats>>
where
    F: Fn(&mut ForestSolver, u64) -> Result<Vec<f64>> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let mut stats = vec![RunningStats::default(); width];
    let mut start = 0usize;
    while start < samples {
        let end = (start + BATCH).min(samples);
        let rows: Vec<Result<Vec<f64>>> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map_init(ForestSolver::new, |solver, m| eval(solver, m as u64))
                .collect()
        });
        for row in rows {
            for (acc, x) in stats.iter_mut().zip(row?) {
                acc.push(x);
            }
        }
        start = end;
    }
    Ok(stats)
}

/// `⟨|G^r(x₀, v; z)|^s⟩` for every target `v`, using the ball operator
/// `H^{B(r)}` and one resolvent column per realization.
pub fn fractional_moment(req: &MomentRequest) -> Result<Vec<MomentEstimate>> {
    fractional_moment_with_workers(req, available_workers())
}

pub fn fractional_moment_with_workers(
    req: &MomentRequest,
    workers: usize,
) -> Result<Vec<MomentEstimate>> {
    req.validate()?;
    let ball = build_ball(&req.tree)?;
    ball.check(req.source)?;
    for &t in &req.targets {
        if !ball.contains(t) {
            return invalid(format!("target {t} lies outside the ball of radius {}", req.tree.radius));
        }
    }
    let n = ball.len();
    let stats = monte_carlo(req.samples, req.targets.len(), workers, |solver, m| {
        let potential = req.disorder.sample_sites(n, m);
        let h = assemble(&ball, req.kind, &potential, req.disorder.lambda)?;
        let col = solver.column(&h, req.source, &req.z)?;
        Ok(req.targets.iter().map(|&v| col[v].norm().powf(req.s)).collect())
    })?;
    Ok(req
        .targets
        .iter()
        .zip(stats)
        .map(|(&target, st)| MomentEstimate {
            target,
            distance: ball.distance(req.source, target),
            mean: st.mean(),
            stderr: st.stderr(),
            samples: st.count(),
        })
        .collect())
}

/// Descending ray of `length` steps from `source` (excluding the source),
/// always following the first child.
pub fn ray_targets(ball: &TreeBall, source: VertexId, length: usize) -> Result<Vec<VertexId>> {
    ball.check(source)?;
    let ray = ball.leftmost_ray(source, length);
    if ray.len() <= length {
        return invalid(format!(
            "ray from {source} reaches only {} steps inside the ball, {length} requested",
            ray.len() - 1
        ));
    }
    Ok(ray[1..].to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `q` in `A e^{-q d}`.
    pub rate: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub points_used: usize,
    /// Points dropped because their mean was not positive.
    pub excluded: usize,
    pub no_decay: bool,
}

/// Least squares of `ln mean` against distance.
pub fn fit_decay(points: &[MomentEstimate]) -> Result<DecayFit> {
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.distance as f64, p.mean)).collect();
    fit_decay_points(&pairs)
}

pub fn fit_decay_points(points: &[(f64, f64)]) -> Result<DecayFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, m)| *m > 0.0 && m.is_finite())
        .map(|&(d, m)| (d, m.ln()))
        .collect();
    let excluded = points.len() - usable.len();
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "decay fit needs >= 3 points with positive mean, got {} ({excluded} excluded)",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = usable.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all fit points share one distance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = usable.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 0.0 };
    let lo = usable.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = usable.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let rate = -slope;
    Ok(DecayFit {
        rate,
        prefactor: intercept.exp(),
        r_squared,
        window: (lo, hi),
        points_used: usable.len(),
        excluded,
        no_decay: rate.is_nan() || rate <= 0.0 || syy == 0.0,
    })
}

/// `ln 2 / (6 L₀)`: the decay rate guaranteed by the segmentation argument
/// once `L₀` is fixed. A comparison baseline for measured rates.
pub fn segmentation_rate_baseline(l0: u64) -> f64 {
    std::f64::consts::LN_2 / (6.0 * l0 as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinamiScan {
    /// Entry `n` holds `⟨|G_{[0,n]}(0, n; z)|^s⟩` with `distance = n`.
    pub estimates: Vec<MomentEstimate>,
    /// Fit over `n = 1..=length`.
    pub fit: DecayFit,
}

/// `|G_{[0,n]}(0, n; z)|` for every `n`, on the chain with diagonal `diag`
/// and unit hopping, by forward elimination: the pivots `b_n = a_n − 1/b_{n−1}`
/// give `|G_{[0,n]}(0, n)| = Π_{i≤n} |b_i|⁻¹`.
pub fn chain_end_to_end(diag: &[f64], z: Complex64) -> Vec<f64> {
    let mut out = Vec::with_capacity(diag.len());
    let mut pivot = Complex64::new(0.0, 0.0);
    let mut log_mag = 0.0f64;
    for (i, &d) in diag.iter().enumerate() {
        let a = Complex64::new(d, 0.0) - z;
        pivot = if i == 0 { a } else { a - pivot.inv() };
        log_mag -= pivot.norm().ln();
        out.push(log_mag.exp());
    }
    out
}

/// Moments of the end-to-end Green function of random segments
/// `[0, n] ⊂ ℤ`, `n = 0..=length`, with the second endpoint on the
/// segment boundary. Adjacency Laplacian of `ℤ`.
pub fn minami_scan(
    length: usize,
    disorder: &DisorderSpec,
    s: f64,
    z: &SpectralPoint,
    samples: usize,
) -> Result<MinamiScan> {
    minami_scan_with_workers(length, disorder, s, z, samples, available_workers())
}

pub fn minami_scan_with_workers(
    length: usize,
    disorder: &DisorderSpec,
    s: f64,
    z: &SpectralPoint,
    samples: usize,
    workers: usize,
) -> Result<MinamiScan> {
    if length < 3 {
        return invalid(format!("segment length must be >= 3, got {length}"));
    }
    let estimates = chain_moments(length, disorder, s, z, samples, workers)?;
    let fit = fit_decay(&estimates[1..])?;
    Ok(MinamiScan { estimates, fit })
}

/// Per-`n` moments without the fit; any `length >= 0`.
pub fn chain_moments(
    length: usize,
    disorder: &DisorderSpec,
    s: f64,
    z: &SpectralPoint,
    samples: usize,
    workers: usize,
) -> Result<Vec<MomentEstimate>> {
    disorder.validate()?;
    z.validate()?;
    validate_exponent(s)?;
    if samples == 0 {
        return invalid("samples M must be >= 1");
    }
    let zc = z.z();
    let stats = monte_carlo(samples, length + 1, workers, |_, m| {
        let diag: Vec<f64> = disorder
            .sample_sites(length + 1, m)
            .into_iter()
            .map(|v| disorder.lambda * v)
            .collect();
        Ok(chain_end_to_end(&diag, zc).into_iter().map(|g| g.powf(s)).collect())
    })?;
    Ok(stats
        .into_iter()
        .enumerate()
        .map(|(n, st)| MomentEstimate {
            target: n,
            distance: n as u64,
            mean: st.mean(),
            stderr: st.stderr(),
            samples: st.count(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRequest {
    pub region_size: usize,
    pub kind: LaplacianKind,
    pub disorder: DisorderSpec,
    pub s: f64,
    pub energy: f64,
    /// Positive and strictly decreasing.
    pub etas: Vec<f64>,
    pub samples: usize,
    /// Number of random `(x, y)` pairs in the region.
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub eta: f64,
    /// One estimate per `(x, y)` pair; `target` is the pair index.
    pub estimates: Vec<MomentEstimate>,
    pub max_mean: f64,
    pub max_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Region vertices as ids of the ambient `(2, 2)` ball.
    pub region: Vec<VertexId>,
    pub pairs: Vec<(VertexId, VertexId)>,
    pub points: Vec<ProbePoint>,
    /// Largest moment at the smallest `η` over the one at the largest `η`.
    pub ratio: f64,
    pub bounded: bool,
}

/// Stream id reserved for region geometry so it never collides with a
/// realization index.
const GEOMETRY_STREAM: u64 = u64::MAX;

/// Connected region of `size` vertices grown at random from the root of a
/// `(2, 2)` ball.
fn random_region(size: usize, seed: u64) -> Result<(TreeBall, Vec<VertexId>)> {
    let ball = build_ball(&TreeParams::new(2, 2.0, size as u64)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(GEOMETRY_STREAM);
    let mut inside = vec![false; ball.len()];
    let mut region = vec![ball.root()];
    inside[ball.root()] = true;
    let mut frontier: Vec<VertexId> = ball.children(ball.root()).collect();
    while region.len() < size {
        let pick = frontier.swap_remove(rng.random_range(0..frontier.len()));
        inside[pick] = true;
        region.push(pick);
        frontier.extend(ball.children(pick));
    }
    region.sort_unstable();
    Ok((ball, region))
}

/// Bounds on `⟨|G_Ω(x, y; E + iη)|^s⟩` that do not degrade as `η ↓ 0`.
///
/// The region operator is `H_Ω` restricted to `ℓ²(Ω)`; the same potential
/// realizations are reused for every `η`.
pub fn bound_probe(req: &ProbeRequest) -> Result<ProbeReport> {
    bound_probe_with_workers(req, available_workers())
}

pub fn bound_probe_with_workers(req: &ProbeRequest, workers: usize) -> Result<ProbeReport> {
    req.disorder.validate()?;
    validate_exponent(req.s)?;
    if req.region_size == 0 || req.pairs == 0 || req.samples == 0 {
        return invalid("region size, pair count and samples must all be >= 1");
    }
    if req.etas.is_empty() || req.etas.iter().any(|e| e.is_nan() || *e <= 0.0) {
        return invalid("eta list must be non-empty and positive");
    }
    if req.etas.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("eta list must be strictly descending");
    }
    let (ball, region) = random_region(req.region_size, req.disorder.master_seed)?;
    let local = |v: VertexId| region.binary_search(&v).ok();
    let bonds: Vec<Bond> = region
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| {
            let p = ball.parent(v)?;
            local(p).map(|j| Bond { a: j, b: i, value: 1.0 })
        })
        .collect();
    let degree_shift: Vec<f64> = region
        .iter()
        .map(|&v| match req.kind {
            LaplacianKind::Adjacency => 0.0,
            LaplacianKind::Graph => -(ball.full_degree(v) as f64),
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(req.disorder.master_seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(GEOMETRY_STREAM);
    let n = region.len();
    let local_pairs: Vec<(usize, usize)> =
        (0..req.pairs).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
    let mut sources: Vec<usize> = local_pairs.iter().map(|p| p.1).collect();
    sources.sort_unstable();
    sources.dedup();

    let mut points = Vec::with_capacity(req.etas.len());
    for &eta in &req.etas {
        let z = SpectralPoint::new(req.energy, eta)?;
        let stats = monte_carlo(req.samples, local_pairs.len(), workers, |solver, m| {
            let diag: Vec<f64> = req
                .disorder
                .sample_sites(n, m)
                .iter()
                .zip(&degree_shift)
                .map(|(v, shift)| req.disorder.lambda * v + shift)
                .collect();
            let h = HamiltonianMatrix::from_sparse(req.kind, SymmetricSparse::new(diag, bonds.clone())?);
            let mut cols = Vec::with_capacity(sources.len());
            for &y in &sources {
                cols.push(solver.column(&h, y, &z)?);
            }
            Ok(local_pairs
                .iter()
                .map(|&(x, y)| {
                    let col = &cols[sources.binary_search(&y).expect("source listed")];
                    col[x].norm().powf(req.s)
                })
                .collect())
        })?;
        let estimates: Vec<MomentEstimate> = stats
            .iter()
            .enumerate()
            .map(|(i, st)| {
                let (x, y) = local_pairs[i];
                MomentEstimate {
                    target: i,
                    distance: ball.distance(region[x], region[y]),
                    mean: st.mean(),
                    stderr: st.stderr(),
                    samples: st.count(),
                }
            })
            .collect();
        let top = estimates
            .iter()
            .max_by(|a, b| a.mean.total_cmp(&b.mean))
            .expect("at least one pair");
        points.push(ProbePoint { eta, max_mean: top.mean, max_stderr: top.stderr, estimates });
    }
    let first = points.first().expect("non-empty eta list").max_mean;
    let last = points.last().expect("non-empty eta list").max_mean;
    let ratio = last / first;
    Ok(ProbeReport {
        pairs: local_pairs.iter().map(|&(x, y)| (region[x], region[y])).collect(),
        region,
        ratio,
        bounded: ratio.is_finite() && ratio <= BOUNDED_RATIO,
        points,
    })
}
