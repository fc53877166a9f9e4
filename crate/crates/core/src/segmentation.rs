//! Splitting a path `ℒ(x₁, v)` into vertex pairs `(x_j, v_j)` and checking
//! the four properties the moment-contraction step relies on.
//!
//! Everything is computed on a [`PathProfile`]: the path length and the
//! offsets (from `x₁`) of the junctions it passes. A profile can be read off
//! a materialised ball or generated from depths alone, which allows paths
//! far deeper than any ball that fits in memory.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tree::{path, stretch_length, JunctionSchedule, TreeBall, VertexId};

/// Smallest `L₀` accepted on a real tree (`L₀ = L + 5`, `L ≥ 0`).
pub const MIN_L0: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathProfile {
    length: u64,
    junctions: Vec<u64>,
}

impl PathProfile {
    pub fn new(length: u64, mut junctions: Vec<u64>) -> Result<Self> {
        junctions.sort_unstable();
        junctions.dedup();
        if junctions.last().is_some_and(|&o| o > length) {
            return invalid(format!("junction offset beyond path length {length}"));
        }
        Ok(Self { length, junctions })
    }

    /// Profile of `ℒ(x, v)` in a materialised ball, plus its vertex ids.
    pub fn from_ball(ball: &TreeBall, x: VertexId, v: VertexId) -> Result<(Self, Vec<VertexId>)> {
        let p = path(ball, x, v)?;
        let ids = p.vertices().to_vec();
        let junctions = ids
            .iter()
            .enumerate()
            .filter(|(_, &u)| ball.is_junction(u))
            .map(|(i, _)| i as u64)
            .collect();
        Ok((Self { length: p.length() as u64, junctions }, ids))
    }

    /// Profile of the path that climbs from depth `depth_x` to a common
    /// ancestor at depth `apex`, then descends to depth `depth_v`. Unless one
    /// endpoint lies on the ancestor line of the other, the turning vertex
    /// has two forward neighbours and must be a junction.
    pub fn from_depths(schedule: &JunctionSchedule, depth_x: u64, apex: u64, depth_v: u64) -> Result<Self> {
        if apex > depth_x || apex > depth_v {
            return invalid(format!(
                "apex depth {apex} must not exceed endpoint depths {depth_x} and {depth_v}"
            ));
        }
        let deepest = depth_x.max(depth_v);
        if deepest > schedule.max_depth_covered() {
            return invalid(format!(
                "junction schedule covers depth {} only, path reaches {deepest}",
                schedule.max_depth_covered()
            ));
        }
        let bends = apex < depth_x && apex < depth_v;
        if bends && !schedule.is_junction(apex) {
            return invalid(format!("turning depth {apex} is not a junction depth"));
        }
        let up = depth_x - apex;
        let radii = schedule.radii();
        let in_range = |lo: u64, hi: u64| {
            let a = radii.partition_point(|&r| r < lo);
            let b = radii.partition_point(|&r| r <= hi);
            radii[a..b].iter().copied()
        };
        let mut junctions: Vec<u64> = in_range(apex, depth_x).map(|r| depth_x - r).collect();
        junctions.extend(in_range(apex + 1, depth_v).map(|r| up + (r - apex)));
        Self::new(up + (depth_v - apex), junctions)
    }

    pub fn length(&self) -> u64 {
        self.length
    }

    pub fn junctions(&self) -> &[u64] {
        &self.junctions
    }

    /// `𝒥` at `offset`: distance to the nearest junction at or beyond it,
    /// towards the far end. `None` when there is none.
    pub fn junction_distance(&self, offset: u64) -> Option<u64> {
        let i = self.junctions.partition_point(|&o| o < offset);
        self.junctions.get(i).map(|&o| o - offset)
    }

    /// Junction offsets inside `[from, to]`.
    pub fn junctions_between(&self, from: u64, to: u64) -> &[u64] {
        let a = self.junctions.partition_point(|&o| o < from);
        let b = self.junctions.partition_point(|&o| o <= to);
        &self.junctions[a..b]
    }

    /// Smallest gap between consecutive junctions, if there are two.
    pub fn min_junction_gap(&self) -> Option<u64> {
        self.junctions.windows(2).map(|w| w[1] - w[0]).min()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPair {
    pub x_offset: u64,
    pub v_offset: u64,
    pub x: Option<VertexId>,
    pub v: Option<VertexId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub l0: u64,
    pub path_length: u64,
    pub pairs: Vec<SegmentPair>,
}

impl SegmentationResult {
    /// The pair count `l`.
    pub fn l(&self) -> usize {
        self.pairs.len()
    }

    pub fn offsets(&self) -> Vec<(u64, u64)> {
        self.pairs.iter().map(|p| (p.x_offset, p.v_offset)).collect()
    }
}

fn check_preconditions(profile: &PathProfile, l0: u64) -> Result<()> {
    let d = profile.length();
    if d <= 7 * l0 {
        return Err(Error::Precondition(format!(
            "d(x1, v) = {d} must exceed 7 L0 = {}",
            7 * l0
        )));
    }
    if let Some(j) = profile.junction_distance(0) {
        if j <= l0 {
            return Err(Error::Precondition(format!(
                "J(x1) = {j} must exceed L0 = {l0}"
            )));
        }
    }
    if let Some(gap) = profile.min_junction_gap() {
        if gap <= 8 * l0 {
            return Err(Error::Precondition(format!(
                "junction gap {gap} on the path must exceed 8 L0 = {}",
                8 * l0
            )));
        }
    }
    Ok(())
}

/// Runs the pairing rules on a profile. Accepts any `L₀ ≥ 1`; the tree
/// entry point [`segment_path`] insists on `L₀ ≥ 5`.
pub fn segment_profile(profile: &PathProfile, l0: u64) -> Result<SegmentationResult> {
    if l0 == 0 {
        return invalid("L0 must be >= 1");
    }
    check_preconditions(profile, l0)?;
    let end = profile.length();
    let mut pairs = Vec::new();
    let mut x = 0u64;
    loop {
        let far = profile.junction_distance(x).is_none_or(|j| j >= 3 * l0);
        let v = x + if far { l0 } else { 5 * l0 };
        pairs.push(SegmentPair { x_offset: x, v_offset: v, x: None, v: None });
        let next = v + 3;
        // d(x, v) > 7 L0 >= 5 L0 + 3 keeps `next` on the path.
        debug_assert!(next <= end);
        if end - next <= 7 * l0 {
            pairs.push(SegmentPair { x_offset: next, v_offset: end, x: None, v: None });
            break;
        }
        x = next;
    }
    Ok(SegmentationResult { l0, path_length: end, pairs })
}

/// Segments `ℒ(x₁, v)` inside a ball and attaches vertex ids to every pair.
pub fn segment_path(ball: &TreeBall, x1: VertexId, v: VertexId, l0: u64) -> Result<SegmentationResult> {
    if l0 < MIN_L0 {
        return invalid(format!("L0 must be >= {MIN_L0}, got {l0}"));
    }
    let (profile, ids) = PathProfile::from_ball(ball, x1, v)?;
    let mut res = segment_profile(&profile, l0)?;
    for p in &mut res.pairs {
        p.x = Some(ids[p.x_offset as usize]);
        p.v = Some(ids[p.v_offset as usize]);
    }
    Ok(res)
}

/// A pair that breaks a property, with the measured and required values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub pair: usize,
    pub measured: f64,
    pub required: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub witnesses: Vec<Witness>,
}

impl PropertyCheck {
    fn from_witnesses(name: &str, witnesses: Vec<Witness>) -> Self {
        Self { name: name.to_string(), passed: witnesses.is_empty(), witnesses }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    /// The four properties, in order.
    pub properties: Vec<PropertyCheck>,
    /// Each `ℒ(x_j, v_j)` holds at most one junction.
    pub single_junction: PropertyCheck,
    /// `l ≤ d(x₁, v)/(L₀ + 3) + 1`.
    pub count_upper: PropertyCheck,
    /// `l ≥ (d(x₁, v) − 7 L₀)/(5 L₀ + 3) + 1`: every pair but the last spans
    /// at most `5 L₀ + 3` and the last at most `7 L₀`. Unlike property 4 this
    /// accounts for the long final pair.
    pub count_lower_sharp: PropertyCheck,
    /// Pairs ordered along the path, `x₁` at offset 0, `x_{j+1} = v_j + 3`,
    /// `v_l = v`.
    pub structure: PropertyCheck,
}

impl SegmentationReport {
    pub fn properties_pass(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn all_pass(&self) -> bool {
        self.properties_pass() && self.supplementary_pass()
    }

    /// Everything except the four properties.
    pub fn supplementary_pass(&self) -> bool {
        self.single_junction.passed && self.count_upper.passed && self.count_lower_sharp.passed && self.structure.passed
    }
}

/// Checks a result against the profile it claims to segment. Failures are
/// reported, never raised.
pub fn verify_segmentation(profile: &PathProfile, res: &SegmentationResult) -> SegmentationReport {
    let l0 = res.l0;
    let lf = l0 as f64;
    let d = profile.length();
    let mut p1 = Vec::new();
    let mut p2 = Vec::new();
    let mut p3 = Vec::new();
    let mut single = Vec::new();
    let mut structure = Vec::new();

    for (j, p) in res.pairs.iter().enumerate() {
        let (x, v) = (p.x_offset, p.v_offset);
        if let Some(jd) = profile.junction_distance(x) {
            if jd < l0 {
                p1.push(Witness { pair: j, measured: jd as f64, required: lf });
            }
        }
        if v < x || v > d {
            structure.push(Witness { pair: j, measured: v as f64, required: x as f64 });
            continue;
        }
        let inside = profile.junctions_between(x, v);
        if inside.len() > 1 {
            single.push(Witness { pair: j, measured: inside.len() as f64, required: 1.0 });
        }
        for &o in inside {
            if v - o < l0 {
                p2.push(Witness { pair: j, measured: (v - o) as f64, required: lf });
            }
        }
        if v - x < l0 {
            p3.push(Witness { pair: j, measured: (v - x) as f64, required: lf });
        }
        if let Some(next) = res.pairs.get(j + 1) {
            if next.x_offset != v + 3 {
                structure.push(Witness { pair: j + 1, measured: next.x_offset as f64, required: (v + 3) as f64 });
            }
        }
    }
    match (res.pairs.first(), res.pairs.last()) {
        (Some(first), Some(last)) => {
            if first.x_offset != 0 {
                structure.push(Witness { pair: 0, measured: first.x_offset as f64, required: 0.0 });
            }
            if last.v_offset != d {
                structure.push(Witness { pair: res.l() - 1, measured: last.v_offset as f64, required: d as f64 });
            }
        }
        _ => structure.push(Witness { pair: 0, measured: 0.0, required: 1.0 }),
    }
    if res.path_length != d || res.l0 == 0 {
        structure.push(Witness { pair: 0, measured: res.path_length as f64, required: d as f64 });
    }

    let l = res.l() as f64;
    let lower = d as f64 / (5.0 * lf + 3.0);
    let p4 = if l >= lower { vec![] } else { vec![Witness { pair: res.l(), measured: l, required: lower }] };
    let upper = d as f64 / (lf + 3.0) + 1.0;
    let count = if l <= upper { vec![] } else { vec![Witness { pair: res.l(), measured: l, required: upper }] };
    let sharp = (d as f64 - 7.0 * lf) / (5.0 * lf + 3.0) + 1.0;
    let count_sharp = if l >= sharp { vec![] } else { vec![Witness { pair: res.l(), measured: l, required: sharp }] };

    SegmentationReport {
        properties: vec![
            PropertyCheck::from_witnesses("J(x_j) >= L0", p1),
            PropertyCheck::from_witnesses("junction on L(x_j, v_j) at distance >= L0 from v_j", p2),
            PropertyCheck::from_witnesses("d(x_j, v_j) >= L0", p3),
            PropertyCheck::from_witnesses("l >= d(x1, v) / (5 L0 + 3)", p4),
        ],
        single_junction: PropertyCheck::from_witnesses("at most one junction per segment", single),
        count_upper: PropertyCheck::from_witnesses("l <= d(x1, v) / (L0 + 3) + 1", count),
        count_lower_sharp: PropertyCheck::from_witnesses("l >= (d(x1, v) - 7 L0) / (5 L0 + 3) + 1", count_sharp),
        structure: PropertyCheck::from_witnesses("pairs tile L(x1, v)", structure),
    }
}

/// [`verify_segmentation`] for a result produced by [`segment_path`]; also
/// checks that every recorded id sits at its recorded offset.
pub fn verify_path_segmentation(
    ball: &TreeBall,
    res: &SegmentationResult,
    x1: VertexId,
    v: VertexId,
) -> Result<SegmentationReport> {
    let (profile, ids) = PathProfile::from_ball(ball, x1, v)?;
    let mut report = verify_segmentation(&profile, res);
    for (j, p) in res.pairs.iter().enumerate() {
        for (offset, id) in [(p.x_offset, p.x), (p.v_offset, p.v)] {
            let expected = ids.get(offset as usize).copied();
            if id.is_some() && id != expected {
                report.structure.witnesses.push(Witness {
                    pair: j,
                    measured: id.unwrap_or(0) as f64,
                    required: expected.map_or(-1.0, |e| e as f64),
                });
            }
        }
    }
    report.structure.passed = report.structure.witnesses.is_empty();
    Ok(report)
}

/// A random path satisfying every precondition of [`segment_profile`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleInstance {
    pub k: u32,
    pub gamma: f64,
    pub l0: u64,
    pub depth_x: u64,
    pub apex: u64,
    pub depth_v: u64,
    pub profile: PathProfile,
}

/// Draws `k ∈ {2, 3, 4}`, `γ ∈ [1.3, 3]`, `L₀ ∈ [5, 12]` and a path in
/// `Γ(k, γ)` deep enough that all junction gaps on it exceed `8 L₀`, then
/// rejects until `d > 7 L₀` and `𝒥(x₁) > L₀`.
///
/// Paths with a junction closer than `L₀` to `v` are also rejected: the
/// last pair ends at `v` itself, so such a junction would break the spacing
/// property for that pair regardless of how the earlier pairs were chosen.
pub fn sample_admissible<R: Rng + ?Sized>(rng: &mut R) -> AdmissibleInstance {
    loop {
        let k = rng.random_range(2..=4u32);
        let gamma = rng.random_range(1.3..=3.0);
        let l0 = rng.random_range(MIN_L0..=12);
        let mut n0 = 1u32;
        while stretch_length(gamma, n0) <= 8 * l0 {
            n0 += 1;
        }
        let schedule = JunctionSchedule::new(gamma, u64::MAX / 4);
        let radii = schedule.radii();
        let shallow = radii[n0 as usize - 1];
        let deep = radii[n0 as usize + 3];
        let (depth_x, apex, depth_v) = match rng.random_range(0..3) {
            0 => {
                let x = rng.random_range(shallow..deep);
                (x, x, rng.random_range(x..=deep))
            }
            1 => {
                let v = rng.random_range(shallow..deep);
                (rng.random_range(v..=deep), v, v)
            }
            _ => {
                let apex = radii[rng.random_range(n0 as usize - 1..n0 as usize + 3)];
                (rng.random_range(apex + 1..=deep), apex, rng.random_range(apex + 1..=deep))
            }
        };
        let Ok(profile) = PathProfile::from_depths(&schedule, depth_x, apex, depth_v) else {
            continue;
        };
        let d = profile.length();
        let clean_end = profile.junctions_between(d.saturating_sub(l0 - 1), d).is_empty();
        if clean_end && check_preconditions(&profile, l0).is_ok() {
            return AdmissibleInstance { k, gamma, l0, depth_x, apex, depth_v, profile };
        }
    }
}
