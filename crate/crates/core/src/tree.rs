//! Finite balls of the stretched Bethe tree `Γ(k, γ)`.
//!
//! The tree is rooted at `O`. A vertex at depth `R_N = Σ_{j=1..N} ⌊γ^j⌋`
//! (or the root) is a *junction* and has `k` forward neighbours; every
//! other vertex has exactly one. With `γ = 1` every vertex is a junction
//! and the ball is a piece of the Bethe lattice.
//!
//! Vertices of a [`TreeBall`] carry dense breadth-first ids: the root is
//! `0` and the children of a vertex occupy a contiguous id range, so the
//! whole structure is a pure function of its [`TreeParams`].

use std::collections::VecDeque;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type VertexId = usize;

const NO_PARENT: u32 = u32::MAX;

/// Default vertex cap for [`build_ball`].
pub const DEFAULT_VERTEX_CAP: u128 = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub k: u32,
    pub gamma: f64,
    pub radius: u64,
}

impl TreeParams {
    pub fn new(k: u32, gamma: f64, radius: u64) -> Result<Self> {
        let params = Self { k, gamma, radius };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return invalid(format!("branching number k must be >= 2, got {}", self.k));
        }
        if !self.gamma.is_finite() || self.gamma < 1.0 {
            return invalid(format!("stretch factor gamma must be >= 1, got {}", self.gamma));
        }
        if self.radius > u32::MAX as u64 / 2 {
            return invalid(format!("radius {} is out of range", self.radius));
        }
        Ok(())
    }

    pub fn with_radius(self, radius: u64) -> Self {
        Self { radius, ..self }
    }
}

/// `⌊γ^j⌋`, snapping to the nearest integer when `γ^j` lies within `1e-9`
/// (relative to its magnitude) of it so that shell radii do not depend on
/// the last bits of `powi`.
pub fn stretch_length(gamma: f64, j: u32) -> u64 {
    let p = gamma.powi(j as i32);
    if !p.is_finite() || p >= u64::MAX as f64 {
        return u64::MAX;
    }
    let nearest = p.round();
    if (p - nearest).abs() <= 1e-9 * p.max(1.0) {
        nearest as u64
    } else {
        p.floor() as u64
    }
}

/// `R_n = Σ_{j=1..n} ⌊γ^j⌋` for `n >= 1`.
pub fn shell_radius(params: &TreeParams, n: u32) -> Result<u64> {
    params.validate()?;
    if n < 1 {
        return invalid("shell index n must be >= 1");
    }
    Ok((1..=n).fold(0u64, |acc, j| acc.saturating_add(stretch_length(params.gamma, j))))
}

/// The junction depths `0 = R_0 < R_1 < R_2 < ...` of a tree, materialised
/// up to a maximum depth, plus the first radius beyond it.
#[derive(Debug, Clone, PartialEq)]
pub struct JunctionSchedule {
    gamma: f64,
    /// All `R_N <= max_depth`, starting with `R_0 = 0`.
    radii: Vec<u64>,
    /// The first `R_N > max_depth`.
    next: u64,
}

impl JunctionSchedule {
    pub fn new(gamma: f64, max_depth: u64) -> Self {
        let mut radii = vec![0u64];
        let mut current = 0u64;
        let mut j = 1u32;
        let next = loop {
            current = current.saturating_add(stretch_length(gamma, j));
            if current > max_depth || current == u64::MAX {
                break current;
            }
            radii.push(current);
            j += 1;
        };
        Self { gamma, radii, next }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `R_0, R_1, ...` up to the schedule's maximum depth.
    pub fn radii(&self) -> &[u64] {
        &self.radii
    }

    pub fn max_depth_covered(&self) -> u64 {
        self.next - 1
    }

    pub fn is_junction(&self, depth: u64) -> bool {
        debug_assert!(depth < self.next, "depth {depth} beyond schedule");
        self.radii.binary_search(&depth).is_ok()
    }
}

/// Closed-form `#B(r)`; never materialises the tree.
///
/// Between consecutive junction depths `R_N < d <= R_{N+1}` a shell holds
/// `k^{N+1}` vertices.
pub fn ball_size_exact(params: &TreeParams, r: u64) -> Result<u128> {
    params.validate()?;
    if r == 0 {
        return Ok(1);
    }
    let schedule = JunctionSchedule::new(params.gamma, r);
    let overflow = || Error::CountOverflow { k: params.k, radius: r };
    let mut total: u128 = 1;
    let radii = schedule.radii();
    for (n, &lo) in radii.iter().enumerate() {
        if lo >= r {
            break;
        }
        let hi = radii.get(n + 1).copied().unwrap_or(schedule.next).min(r);
        let shell = (params.k as u128).checked_pow(n as u32 + 1).ok_or_else(overflow)?;
        let width = (hi - lo) as u128;
        total = shell
            .checked_mul(width)
            .and_then(|s| total.checked_add(s))
            .ok_or_else(overflow)?;
    }
    Ok(total)
}

/// `log #B(r) / log r`. Tends to `1 + log k / log γ` as `r → ∞`.
pub fn dimension_estimate(params: &TreeParams, r: u64) -> Result<f64> {
    if params.gamma <= 1.0 {
        return invalid("dimension is undefined for gamma = 1 (Bethe lattice)");
    }
    if r < 2 {
        return invalid("dimension estimate needs r >= 2");
    }
    let size = ball_size_exact(params, r)?;
    Ok((size as f64).ln() / (r as f64).ln())
}

/// The limiting value `1 + log k / log γ` of [`dimension_estimate`].
pub fn dimension_limit(k: u32, gamma: f64) -> Result<f64> {
    if gamma <= 1.0 {
        return invalid("dimension is undefined for gamma = 1 (Bethe lattice)");
    }
    Ok(1.0 + (k as f64).ln() / gamma.ln())
}

/// An explicit ball `B(r)` around the root.
#[derive(Debug, Clone)]
pub struct TreeBall {
    params: TreeParams,
    schedule: JunctionSchedule,
    depth: Vec<u32>,
    parent: Vec<u32>,
    first_child: Vec<u32>,
    child_count: Vec<u32>,
}

pub fn build_ball(params: &TreeParams) -> Result<TreeBall> {
    build_ball_with_cap(params, DEFAULT_VERTEX_CAP)
}

pub fn build_ball_with_cap(params: &TreeParams, cap: u128) -> Result<TreeBall> {
    params.validate()?;
    let projected = ball_size_exact(params, params.radius)?;
    if projected > cap {
        return Err(Error::TooLarge { projected, cap });
    }
    let n = projected as usize;
    let schedule = JunctionSchedule::new(params.gamma, params.radius);
    let mut depth = Vec::with_capacity(n);
    let mut parent = Vec::with_capacity(n);
    let mut first_child = vec![0u32; n];
    let mut child_count = vec![0u32; n];
    depth.push(0u32);
    parent.push(NO_PARENT);

    // Breadth-first: vertices are appended in id order, so the children of
    // `v` are exactly the ids pushed while `v` is being expanded.
    let mut cursor = 0usize;
    while cursor < depth.len() {
        let d = depth[cursor] as u64;
        if d < params.radius {
            let fanout = if schedule.is_junction(d) { params.k } else { 1 };
            first_child[cursor] = depth.len() as u32;
            child_count[cursor] = fanout;
            for _ in 0..fanout {
                depth.push(d as u32 + 1);
                parent.push(cursor as u32);
            }
        }
        cursor += 1;
    }
    debug_assert_eq!(depth.len(), n);
    Ok(TreeBall { params: *params, schedule, depth, parent, first_child, child_count })
}

impl TreeBall {
    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn schedule(&self) -> &JunctionSchedule {
        &self.schedule
    }

    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    pub fn root(&self) -> VertexId {
        0
    }

    pub fn contains(&self, v: VertexId) -> bool {
        v < self.len()
    }

    pub fn check(&self, v: VertexId) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            invalid(format!("vertex {v} is not in a ball of {} vertices", self.len()))
        }
    }

    pub fn depth(&self, v: VertexId) -> u64 {
        self.depth[v] as u64
    }

    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        match self.parent[v] {
            NO_PARENT => None,
            p => Some(p as usize),
        }
    }

    pub fn children(&self, v: VertexId) -> Range<VertexId> {
        let start = self.first_child[v] as usize;
        start..start + self.child_count[v] as usize
    }

    pub fn is_junction(&self, v: VertexId) -> bool {
        self.schedule.is_junction(self.depth(v))
    }

    /// Neighbours inside the ball: parent first, then children in id order.
    pub fn neighbors(&self, v: VertexId) -> impl Iterator<Item = VertexId> + '_ {
        self.parent(v).into_iter().chain(self.children(v))
    }

    /// Degree in the infinite tree, regardless of truncation at the ball edge.
    pub fn full_degree(&self, v: VertexId) -> u32 {
        let forward = if self.is_junction(v) { self.params.k } else { 1 };
        forward + u32::from(self.parent(v).is_some())
    }

    /// Every tree edge of the ball as `(parent, child)`, in child id order.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        (1..self.len()).map(move |c| (self.parent[c] as usize, c))
    }

    pub fn junction_depths(&self) -> Vec<u64> {
        self.schedule.radii().to_vec()
    }

    /// Number of vertices at each depth `0..=radius`.
    pub fn depth_histogram(&self) -> Vec<u64> {
        let mut hist = vec![0u64; self.params.radius as usize + 1];
        for &d in &self.depth {
            hist[d as usize] += 1;
        }
        hist
    }

    /// The descending ray from `from` that always takes the first child,
    /// up to `length` steps or the ball edge. Includes `from`.
    pub fn leftmost_ray(&self, from: VertexId, length: usize) -> Vec<VertexId> {
        let mut ray = vec![from];
        let mut v = from;
        while ray.len() <= length {
            let kids = self.children(v);
            if kids.is_empty() {
                break;
            }
            v = kids.start;
            ray.push(v);
        }
        ray
    }

    /// Leftmost and rightmost vertices at a given depth.
    pub fn depth_extremes(&self, depth: u64) -> Option<(VertexId, VertexId)> {
        let lo = self.depth.partition_point(|&d| (d as u64) < depth);
        let hi = self.depth.partition_point(|&d| (d as u64) <= depth);
        (lo < hi).then(|| (lo, hi - 1))
    }

    pub fn lca(&self, x: VertexId, y: VertexId) -> VertexId {
        let (mut a, mut b) = (x, y);
        while self.depth[a] > self.depth[b] {
            a = self.parent[a] as usize;
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b] as usize;
        }
        while a != b {
            a = self.parent[a] as usize;
            b = self.parent[b] as usize;
        }
        a
    }

    pub fn distance(&self, x: VertexId, y: VertexId) -> u64 {
        let l = self.lca(x, y);
        self.depth(x) + self.depth(y) - 2 * self.depth(l)
    }
}

/// The unique path `ℒ(x, y)` as an ordered vertex list from `x` to `y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSegment(Vec<VertexId>);

impl PathSegment {
    pub fn vertices(&self) -> &[VertexId] {
        &self.0
    }

    /// Number of edges, `d(x, y)`.
    pub fn length(&self) -> usize {
        self.0.len() - 1
    }

    pub fn start(&self) -> VertexId {
        self.0[0]
    }

    pub fn end(&self) -> VertexId {
        *self.0.last().expect("paths are never empty")
    }

    pub fn position(&self, v: VertexId) -> Option<usize> {
        self.0.iter().position(|&u| u == v)
    }

    pub fn to_region(&self, ball: &TreeBall) -> Result<Region> {
        Region::new(ball, self.0.iter().copied())
    }
}

/// Ascends from both ends to the lowest common ancestor.
pub fn path(ball: &TreeBall, x: VertexId, y: VertexId) -> Result<PathSegment> {
    ball.check(x)?;
    ball.check(y)?;
    let mut up = Vec::new();
    let mut down = Vec::new();
    let (mut a, mut b) = (x, y);
    while ball.depth(a) > ball.depth(b) {
        up.push(a);
        a = ball.parent[a] as usize;
    }
    while ball.depth(b) > ball.depth(a) {
        down.push(b);
        b = ball.parent[b] as usize;
    }
    while a != b {
        up.push(a);
        down.push(b);
        a = ball.parent[a] as usize;
        b = ball.parent[b] as usize;
    }
    up.push(a);
    up.extend(down.into_iter().rev());
    Ok(PathSegment(up))
}

/// `𝒥(x)`: distance from `x` to the nearest junction on `ℒ(x, v)`, where
/// `x` itself counts. `None` when the path holds no junction.
pub fn junction_distance(ball: &TreeBall, x: VertexId, v: VertexId) -> Result<Option<usize>> {
    let p = path(ball, x, v)?;
    Ok(p.vertices().iter().position(|&u| ball.is_junction(u)))
}

/// A vertex set `Ω` inside an ambient ball, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    members: Vec<VertexId>,
}

impl Region {
    pub fn new(ball: &TreeBall, ids: impl IntoIterator<Item = VertexId>) -> Result<Self> {
        let mut members: Vec<VertexId> = ids.into_iter().collect();
        if let Some(&bad) = members.iter().find(|&&v| !ball.contains(v)) {
            return invalid(format!("region member {bad} is not in the ball"));
        }
        members.sort_unstable();
        members.dedup();
        Ok(Self { members })
    }

    pub fn empty() -> Self {
        Self { members: Vec::new() }
    }

    pub fn whole(ball: &TreeBall) -> Self {
        Self { members: (0..ball.len()).collect() }
    }

    pub fn members(&self) -> &[VertexId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.members.binary_search(&v).is_ok()
    }
}

/// `Θ(Ω)`: ordered bonds `(x, x')` with `x ∈ Ω`, `x' ∉ Ω`, `d(x, x') = 1`.
///
/// Only bonds inside the ambient ball are produced, i.e. bonds leaving
/// `B(r)` itself are dropped.
pub fn theta(ball: &TreeBall, omega: &Region) -> Vec<(VertexId, VertexId)> {
    omega
        .members()
        .iter()
        .flat_map(|&x| ball.neighbors(x).filter(|&y| !omega.contains(y)).map(move |y| (x, y)))
        .collect()
}

/// `Ω` fattened by `steps` (so `Ω⁺` for 1 and `Ω⁺⁺` for 2).
pub fn expand(ball: &TreeBall, omega: &Region, steps: usize) -> Region {
    let mut dist: std::collections::HashMap<VertexId, usize> =
        omega.members().iter().map(|&v| (v, 0)).collect();
    let mut queue: VecDeque<VertexId> = omega.members().iter().copied().collect();
    while let Some(v) = queue.pop_front() {
        let dv = dist[&v];
        if dv == steps {
            continue;
        }
        for u in ball.neighbors(v) {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(u) {
                e.insert(dv + 1);
                queue.push_back(u);
            }
        }
    }
    let mut members: Vec<VertexId> = dist.into_keys().collect();
    members.sort_unstable();
    Region { members }
}

/// `𝔅(Ω)`: members of `Ω` adjacent to a ball vertex outside `Ω`.
pub fn boundary_vertices(ball: &TreeBall, omega: &Region) -> Vec<VertexId> {
    omega
        .members()
        .iter()
        .copied()
        .filter(|&x| ball.neighbors(x).any(|y| !omega.contains(y)))
        .collect()
}
