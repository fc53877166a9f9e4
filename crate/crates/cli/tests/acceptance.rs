//! Acceptance suite. Each criterion is checked against an oracle written
//! here, independent of the library code path it exercises, and reports one
//! PASS/FAIL line.
//!
//! Runs without the libtest harness so the lines always reach stdout. The
//! process exits non-zero on any failure except the documented one: the
//! pair-count bound of the segmentation lemma is false for paths whose final
//! pair is longer than `5 L0 + 3`, and such failures are reported as FAIL
//! but tolerated after their explanation has been checked.

use std::collections::VecDeque;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treeloc::diagnostics::spectrum_full;
use treeloc::green::{check_resolvent_identity, green_entry, ForestSolver, SpectralPoint};
use treeloc::moments::{
    bound_probe_with_workers, chain_end_to_end, fit_decay, fractional_moment_with_workers, minami_scan_with_workers,
    segmentation_rate_baseline, MomentEstimate, ProbeRequest,
};
use treeloc::operator::{assemble, sample_potential, DisorderSpec, Distribution, LaplacianKind};
use treeloc::segmentation::{sample_admissible, segment_profile, verify_segmentation};
use treeloc::tree::{ball_size_exact, build_ball, dimension_estimate, TreeBall, TreeParams};
use treeloc_cli::verify::decay_request;

type Check = Result<(bool, String), String>;

struct Row {
    id: u8,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- geometry

/// Junction depths up to `r` for a rational stretch factor `num / den`,
/// with exact integer floors.
fn junction_depths_rational(num: u128, den: u128, r: u64) -> Vec<bool> {
    let mut set = vec![false; r as usize + 1];
    set[0] = true;
    let mut acc = 0u128;
    let (mut p, mut q) = (1u128, 1u128);
    loop {
        p *= num;
        q *= den;
        acc += p / q;
        if acc > r as u128 {
            break;
        }
        set[acc as usize] = true;
    }
    set
}

/// Junction depths up to `r` for a floating stretch factor.
fn junction_depths_float(gamma: f64, r: u64) -> Vec<bool> {
    let mut set = vec![false; r as usize + 1];
    set[0] = true;
    let mut acc = 0u64;
    for j in 1.. {
        acc += gamma.powi(j).floor() as u64;
        if acc > r {
            break;
        }
        set[acc as usize] = true;
    }
    set
}

/// Vertex count per depth by walking the tree breadth first.
fn bfs_shells(k: u32, junction: &[bool]) -> Vec<u128> {
    let r = junction.len() - 1;
    let mut shells = vec![0u128; r + 1];
    let mut queue = VecDeque::from([0usize]);
    while let Some(d) = queue.pop_front() {
        shells[d] += 1;
        if d < r {
            for _ in 0..if junction[d] { k } else { 1 } {
                queue.push_back(d + 1);
            }
        }
    }
    shells
}

/// Parent-linked view of a ball built from its public accessors only.
struct Geometry {
    parent: Vec<Option<usize>>,
    depth: Vec<u64>,
    adj: Vec<Vec<usize>>,
    degree: Vec<f64>,
}

impl Geometry {
    fn new(ball: &TreeBall) -> Self {
        let n = ball.len();
        let p = ball.params();
        let junction = junction_depths_float(p.gamma, p.radius);
        let parent: Vec<Option<usize>> = (0..n).map(|v| ball.parent(v)).collect();
        let depth: Vec<u64> = (0..n).map(|v| ball.depth(v)).collect();
        let mut adj = vec![Vec::new(); n];
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                adj[v].push(p);
                adj[p].push(v);
            }
        }
        let degree = (0..n)
            .map(|v| {
                let forward = if junction[depth[v] as usize] { p.k } else { 1 };
                (forward + u32::from(parent[v].is_some())) as f64
            })
            .collect();
        Self { parent, depth, adj, degree }
    }

    fn path(&self, mut a: usize, mut b: usize) -> Vec<usize> {
        let (mut front, mut back) = (Vec::new(), Vec::new());
        while self.depth[a] > self.depth[b] {
            front.push(a);
            a = self.parent[a].unwrap();
        }
        while self.depth[b] > self.depth[a] {
            back.push(b);
            b = self.parent[b].unwrap();
        }
        while a != b {
            front.push(a);
            back.push(b);
            a = self.parent[a].unwrap();
            b = self.parent[b].unwrap();
        }
        front.push(a);
        front.extend(back.into_iter().rev());
        front
    }

    /// Vertices within `steps` of `set`.
    fn fatten(&self, set: &[bool], steps: u32) -> Vec<bool> {
        let mut dist = vec![u32::MAX; set.len()];
        let mut queue = VecDeque::new();
        for (v, &inside) in set.iter().enumerate() {
            if inside {
                dist[v] = 0;
                queue.push_back(v);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &u in &self.adj[v] {
                if dist[u] == u32::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        dist.iter().map(|&d| d <= steps).collect()
    }

    /// `H = Δ + λV` as a dense real matrix.
    fn dense(&self, kind: LaplacianKind, lambda: f64, potential: &[f64]) -> DMatrix<f64> {
        let n = self.parent.len();
        let mut m = DMatrix::zeros(n, n);
        for v in 0..n {
            m[(v, v)] = lambda * potential[v]
                - match kind {
                    LaplacianKind::Adjacency => 0.0,
                    LaplacianKind::Graph => self.degree[v],
                };
            if let Some(p) = self.parent[v] {
                m[(v, p)] = 1.0;
                m[(p, v)] = 1.0;
            }
        }
        m
    }
}

fn shifted(h: &DMatrix<f64>, z: Complex64) -> DMatrix<Complex64> {
    let mut m = h.map(|x| Complex64::new(x, 0.0));
    for i in 0..m.nrows() {
        m[(i, i)] -= z;
    }
    m
}

/// `H` with every bond leaving `inside` removed.
fn cut(h: &DMatrix<f64>, inside: &[bool]) -> DMatrix<f64> {
    let mut m = h.clone();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if inside[i] != inside[j] {
                m[(i, j)] = 0.0;
            }
        }
    }
    m
}

fn unit(n: usize, i: usize) -> DMatrix<Complex64> {
    let mut e = DMatrix::zeros(n, 1);
    e[(i, 0)] = Complex64::new(1.0, 0.0);
    e
}

fn random_ball(rng: &mut ChaCha8Rng, max_vertices: f64) -> Result<TreeBall, String> {
    let k = rng.random_range(2..=4u32);
    let gamma = rng.random_range(1.0..3.0);
    let target = max_vertices.powf(rng.random_range(0.4..=1.0)) as u128;
    let mut radius = 1;
    let params = |r| TreeParams::new(k, gamma, r).map_err(err);
    while ball_size_exact(&params(radius + 1)?, radius + 1).map_err(err)? <= target.max(3) {
        radius += 1;
    }
    build_ball(&params(radius)?).map_err(err)
}

fn random_disorder(rng: &mut ChaCha8Rng) -> Result<DisorderSpec, String> {
    DisorderSpec::new(Distribution::default(), rng.random_range(0.5..5.0), rng.random()).map_err(err)
}

fn random_z(rng: &mut ChaCha8Rng) -> Result<SpectralPoint, String> {
    SpectralPoint::new(rng.random_range(-3.0..3.0), 10f64.powf(rng.random_range(-3.0..=0.0))).map_err(err)
}

/// Least squares of `ln mean` on distance; returns `(rate, r²)`.
fn log_linear_fit(points: &[MomentEstimate]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.mean > 0.0)
        .map(|p| (p.distance as f64, p.mean.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    (-slope, 1.0 - ss_res / syy)
}

// ---------------------------------------------------------------- criteria

fn counting() -> Check {
    let mut radii = 0;
    for (k, num, den) in [(2u32, 2u128, 1u128), (2, 3, 2), (3, 2, 1), (4, 3, 1)] {
        let gamma = num as f64 / den as f64;
        let junction = junction_depths_rational(num, den, 300);
        let shells = bfs_shells(k, &junction);
        let params = TreeParams::new(k, gamma, 300).map_err(err)?;
        let built = build_ball(&params).map_err(err)?;
        if built.len() as u128 != shells.iter().sum::<u128>() {
            return Ok((false, format!("({k}, {gamma}): built ball has {} vertices", built.len())));
        }
        let mut total = 0u128;
        for (r, s) in shells.iter().enumerate() {
            total += s;
            let closed = ball_size_exact(&params, r as u64).map_err(err)?;
            if closed != total {
                return Ok((false, format!("({k}, {gamma}) r = {r}: closed form {closed}, BFS {total}")));
            }
            radii += 1;
        }
    }
    Ok((true, format!("{radii} (parameters, radius) cases equal the BFS count")))
}

fn dimension() -> Check {
    let params = TreeParams::new(2, 2.0, 0).map_err(err)?;
    let mut values = Vec::new();
    for r in [1_000u64, 10_000, 100_000, 1_000_000] {
        let d = dimension_estimate(&params, r).map_err(err)?;
        // ln |B(r)| / ln r from the shell recursion, exact in u128.
        let junction = junction_depths_rational(2, 1, r);
        let (mut shell, mut size) = (1u128, 1u128);
        for j in &junction[..r as usize] {
            if *j {
                shell *= 2;
            }
            size += shell;
        }
        let oracle = (size as f64).ln() / (r as f64).ln();
        if (d - oracle).abs() > 1e-12 {
            return Ok((false, format!("r = {r}: estimate {d}, oracle {oracle}")));
        }
        values.push(d);
    }
    let increasing = values.windows(2).all(|w| w[1] > w[0]);
    let close = (values[3] - 2.0).abs() <= 0.1;
    Ok((increasing && close, format!("estimates {values:.4?}; increasing = {increasing}")))
}

fn green_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut solver = ForestSolver::new();
    let (mut worst, mut largest) = (0.0f64, 0);
    for i in 0..100 {
        let ball = random_ball(&mut rng, 2000.0)?;
        largest = largest.max(ball.len());
        let geo = Geometry::new(&ball);
        let kind = if i % 2 == 0 { LaplacianKind::Adjacency } else { LaplacianKind::Graph };
        let disorder = random_disorder(&mut rng)?;
        let potential = sample_potential(&disorder, &ball, i);
        let h = assemble(&ball, kind, &potential, disorder.lambda).map_err(err)?;
        let z = random_z(&mut rng)?;
        let y = rng.random_range(0..ball.len());
        let fast = solver.column(&h, y, &z).map_err(err)?;
        let dense = shifted(&geo.dense(kind, disorder.lambda, &potential), z.z())
            .lu()
            .solve(&unit(ball.len(), y))
            .ok_or("dense matrix singular")?;
        for (a, b) in fast.iter().zip(dense.iter()) {
            worst = worst.max((a - b).norm());
        }
    }
    Ok((worst <= 1e-8, format!("100 instances up to {largest} vertices; max |fast - dense| = {worst:.2e}")))
}

fn expansion_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let (mut worst_oracle, mut worst_lib, mut worst_gap) = (0.0f64, 0.0f64, 0.0f64);
    let mut done = 0;
    while done < 100 {
        let ball = random_ball(&mut rng, 300.0)?;
        let n = ball.len();
        let geo = Geometry::new(&ball);
        let (x, w) = (rng.random_range(0..n), rng.random_range(0..n));
        let xw = geo.path(x, w);
        if xw.len() < 4 {
            continue;
        }
        let y = xw[rng.random_range(0..=xw.len() - 4)];
        let mut line = vec![false; n];
        for &u in &geo.path(x, y) {
            line[u] = true;
        }
        let fat = geo.fatten(&line, 2);
        if fat[w] {
            return Ok((false, format!("w = {w} inside the fattened path; instance generator is wrong")));
        }
        let kind = if done % 2 == 0 { LaplacianKind::Adjacency } else { LaplacianKind::Graph };
        let disorder = random_disorder(&mut rng)?;
        let potential = sample_potential(&disorder, &ball, 0);
        let z = random_z(&mut rng)?;
        let hr = geo.dense(kind, disorder.lambda, &potential);

        let full = shifted(&hr, z.z()).lu();
        let g_line_x = shifted(&cut(&hr, &line), z.z()).lu().solve(&unit(n, x)).ok_or("singular")?;
        let g_fat_w = shifted(&cut(&hr, &fat), z.z()).lu().solve(&unit(n, w)).ok_or("singular")?;
        let lhs = full.solve(&unit(n, w)).ok_or("singular")?[(x, 0)];
        let mut rhs = Complex64::new(0.0, 0.0);
        for u in (0..n).filter(|&u| line[u]) {
            for &u_out in geo.adj[u].iter().filter(|&&a| !line[a]) {
                let g_from = full.solve(&unit(n, u_out)).ok_or("singular")?;
                for v in (0..n).filter(|&v| fat[v]) {
                    for &v_out in geo.adj[v].iter().filter(|&&a| !fat[a]) {
                        rhs += g_line_x[(u, 0)] * hr[(u, u_out)] * g_from[(v, 0)] * hr[(v, v_out)] * g_fat_w[(v_out, 0)];
                    }
                }
            }
        }
        let h = assemble(&ball, kind, &potential, disorder.lambda).map_err(err)?;
        let lib = check_resolvent_identity(&ball, &h, x, y, w, &z).map_err(err)?;
        worst_oracle = worst_oracle.max((lhs - rhs).norm());
        worst_lib = worst_lib.max(lib.residual);
        worst_gap = worst_gap.max((lib.lhs - lhs).norm()).max((lib.rhs - rhs).norm());
        done += 1;
    }
    let passed = worst_oracle <= 1e-9 && worst_lib <= 1e-9 && worst_gap <= 1e-9;
    Ok((
        passed,
        format!(
            "100 instances; dense residual {worst_oracle:.2e}, library residual {worst_lib:.2e}, library vs dense {worst_gap:.2e}"
        ),
    ))
}

/// Outcome of the segmentation criterion, kept for the final verdict.
#[derive(Default)]
struct SegmentationTally {
    failures: [usize; 4],
    /// Property 4 failures whose final pair is longer than `5 L0 + 3`.
    explained: usize,
    mismatches: usize,
}

fn segmentation(tally: &mut SegmentationTally) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..1000 {
        let inst = sample_admissible(&mut rng);
        let l0 = inst.l0;
        // Junction offsets along the path, from the depths alone.
        let up = inst.depth_x - inst.apex;
        let d = up + inst.depth_v - inst.apex;
        let junction = junction_depths_float(inst.gamma, inst.depth_x.max(inst.depth_v));
        let on_path: Vec<bool> = (0..=d)
            .map(|i| junction[if i <= up { inst.depth_x - i } else { inst.apex + i - up } as usize])
            .collect();
        let ours: Vec<u64> = (0..=d).filter(|&i| on_path[i as usize]).collect();
        if ours != inst.profile.junctions() {
            tally.mismatches += 1;
            continue;
        }
        let j_at = |x: u64| (x..=d).find(|&i| on_path[i as usize]).map(|i| i - x);

        // The pairing rules.
        let mut pairs = Vec::new();
        let mut x = 0;
        loop {
            let step = if j_at(x).is_none_or(|j| j >= 3 * l0) { l0 } else { 5 * l0 };
            pairs.push((x, x + step));
            x += step + 3;
            if d - x <= 7 * l0 {
                pairs.push((x, d));
                break;
            }
        }
        let res = segment_profile(&inst.profile, l0).map_err(err)?;
        if res.offsets() != pairs {
            tally.mismatches += 1;
            continue;
        }

        let p1 = pairs.iter().all(|&(x, _)| j_at(x).is_none_or(|j| j >= l0));
        let p2 = pairs
            .iter()
            .all(|&(x, v)| (x..=v).filter(|&i| on_path[i as usize]).all(|i| v - i >= l0));
        let p3 = pairs.iter().all(|&(x, v)| v - x >= l0);
        let p4 = pairs.len() as u64 * (5 * l0 + 3) >= d;
        for (i, ok) in [p1, p2, p3, p4].into_iter().enumerate() {
            tally.failures[i] += usize::from(!ok);
        }
        let (last_x, last_v) = *pairs.last().unwrap();
        if !p4 && last_v - last_x > 5 * l0 + 3 {
            tally.explained += 1;
        }
        let report = verify_segmentation(&inst.profile, &res);
        let lib = report.properties.iter().map(|p| p.passed).collect::<Vec<_>>();
        if lib != [p1, p2, p3, p4] || !report.supplementary_pass() {
            tally.mismatches += 1;
        }
    }
    let passed = tally.failures.iter().all(|&f| f == 0) && tally.mismatches == 0;
    Ok((
        passed,
        format!(
            "1000 instances; failures per property {:?}; {} explained by a final pair longer than 5 L0 + 3; {} disagreements with the library",
            tally.failures, tally.explained, tally.mismatches
        ),
    ))
}

fn moment_decay() -> Check {
    let req = decay_request(2000).map_err(err)?;
    let est = fractional_moment_with_workers(&req, workers()).map_err(err)?;
    let (q, r2) = log_linear_fit(&est);
    let fit = fit_decay(&est).map_err(err)?;
    let agree = (fit.rate - q).abs() <= 1e-9 && (fit.r_squared - r2).abs() <= 1e-9;
    Ok((
        q > 0.05 && r2 >= 0.9 && agree,
        format!(
            "graph kind, {} targets: q = {q:.4}, r2 = {r2:.4}; reference rate ln2/(6 L0) at L0 = 5 is {:.4}",
            est.len(),
            segmentation_rate_baseline(5)
        ),
    ))
}

fn chain_decay() -> Check {
    let disorder = DisorderSpec::new(Distribution::default(), 2.0, 2024).map_err(err)?;
    let z = SpectralPoint::new(0.0, 1e-3).map_err(err)?;
    // Elimination against a dense solve on a few realizations.
    let mut worst = 0.0f64;
    for m in 0..5 {
        let diag: Vec<f64> = disorder.sample_sites(61, m).iter().map(|v| 2.0 * v).collect();
        let fast = chain_end_to_end(&diag, z.z());
        for n in 1..=60 {
            let mut h = DMatrix::<f64>::zeros(n + 1, n + 1);
            for i in 0..=n {
                h[(i, i)] = diag[i];
                if i < n {
                    h[(i, i + 1)] = 1.0;
                    h[(i + 1, i)] = 1.0;
                }
            }
            let g = shifted(&h, z.z()).lu().solve(&unit(n + 1, n)).ok_or("singular")?[(0, 0)].norm();
            worst = worst.max((fast[n] - g).abs() / g);
        }
    }
    let scan = minami_scan_with_workers(60, &disorder, 0.5, &z, 2000, workers()).map_err(err)?;
    let (m, r2) = log_linear_fit(&scan.estimates[1..]);
    Ok((
        m > 0.0 && r2 >= 0.9 && worst <= 1e-8,
        format!("m = {m:.4}, r2 = {r2:.4}; elimination vs dense relative error {worst:.2e}"),
    ))
}

/// `E|G|^{1/2}` for one site with uniform(-1/2, 1/2) potential at `E = 0`:
/// the integral of `(v² + η²)^{-1/4}` over the interval, after `v = t²`.
fn single_site_exact(eta: f64) -> f64 {
    let top = 0.5f64.sqrt();
    let f = |t: f64| 4.0 * t * (t.powi(4) + eta * eta).powf(-0.25);
    let n = 200_000;
    let h = top / n as f64;
    let mut s = f(0.0) + f(top);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn eta_bound() -> Check {
    let etas = vec![1e-1, 1e-2, 1e-3, 1e-4];
    let probe = |region_size| ProbeRequest {
        region_size,
        kind: LaplacianKind::Adjacency,
        disorder: DisorderSpec { distribution: Distribution::default(), lambda: 1.0, master_seed: 77 },
        s: 0.5,
        energy: 0.0,
        etas: etas.clone(),
        samples: 5000,
        pairs: 5,
    };
    let region = bound_probe_with_workers(&probe(20), workers()).map_err(err)?;
    let single = bound_probe_with_workers(&probe(1), workers()).map_err(err)?;
    let ratio = region.points.last().unwrap().max_mean / region.points[0].max_mean;
    let bound = 2.0 * 2f64.sqrt();
    let mut single_ok = true;
    let mut worst_sigma = 0.0f64;
    for p in &single.points {
        single_ok &= p.max_mean <= bound + 3.0 * p.max_stderr;
        worst_sigma = worst_sigma.max((p.max_mean - single_site_exact(p.eta)).abs() / p.max_stderr);
    }
    Ok((
        ratio <= 5.0 && single_ok && worst_sigma <= 5.0,
        format!(
            "region of 20: ratio {ratio:.3}; single site within 2 sqrt 2 + 3 stderr = {single_ok}, worst deviation from the exact integral {worst_sigma:.2} stderr"
        ),
    ))
}

fn localization() -> Check {
    let ball = build_ball(&TreeParams::new(2, 2.0, 88).map_err(err)?).map_err(err)?;
    let disorder = DisorderSpec::new(Distribution::default(), 5.0, 2024).map_err(err)?;
    let h = assemble(&ball, LaplacianKind::Adjacency, &sample_potential(&disorder, &ball, 0), 5.0).map_err(err)?;
    let dec = spectrum_full(&h).map_err(err)?;
    let vecs = dec.eigenvectors.as_ref().ok_or("no eigenvectors")?;
    let mut iprs: Vec<f64> = vecs.column_iter().map(|c| c.iter().map(|a| a.powi(4)).sum()).collect();
    iprs.sort_by(f64::total_cmp);
    let n = iprs.len();
    let median = if n % 2 == 1 { iprs[n / 2] } else { 0.5 * (iprs[n / 2 - 1] + iprs[n / 2]) };
    let z = SpectralPoint::new(0.0, 1.0).map_err(err)?;
    let mut worst = 0.0f64;
    for x in 0..ball.len() {
        let s: Complex64 = dec
            .eigenvalues
            .iter()
            .zip(vecs.row(x).iter())
            .map(|(&e, &a)| a * a / (e - z.z()))
            .sum();
        worst = worst.max((s - green_entry(&h, x, x, &z).map_err(err)?).norm());
    }
    Ok((
        median >= 0.01 && worst <= 1e-8,
        format!("{} vertices: median IPR {median:.4}, Stieltjes deviation {worst:.2e}", ball.len()),
    ))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut bodies = Vec::new();
    for w in [1, 8] {
        let out = dir.path().join(format!("w{w}.jsonl"));
        let status = Command::new(env!("CARGO_BIN_EXE_treeloc"))
            .args(["moments", "--radius", "30", "--laplacian", "graph", "--lambda", "3"])
            .args(["--samples", "2000", "--seed", "99", "--workers", &w.to_string()])
            .arg("--output")
            .arg(&out)
            .status()
            .map_err(err)?;
        if !status.success() {
            return Ok((false, format!("moments with {w} workers exited with {status}")));
        }
        bodies.push(std::fs::read(&out).map_err(err)?);
    }
    let same = bodies[0] == bodies[1] && !bodies[0].is_empty();
    Ok((same, format!("workers 1 vs 8: {} bytes each, byte-identical = {same}", bodies[0].len())))
}

fn main() {
    let mut tally = SegmentationTally::default();
    let mut rows = Vec::new();
    let criteria: [(&str, u64); 10] = [
        ("counting exactness", 10),
        ("dimension formula", 1),
        ("green oracle equivalence", 60),
        ("resolvent expansion identity", 60),
        ("segmentation lemma", 30),
        ("fractional-moment decay", 600),
        ("chain end-to-end decay", 300),
        ("boundedness in eta", 300),
        ("localization diagnostic", 300),
        ("determinism", 120),
    ];
    for (i, (name, budget)) in criteria.into_iter().enumerate() {
        let id = i as u8 + 1;
        let t = Instant::now();
        let result = match id {
            1 => counting(),
            2 => dimension(),
            3 => green_oracle(),
            4 => expansion_identity(),
            5 => segmentation(&mut tally),
            6 => moment_decay(),
            7 => chain_decay(),
            8 => eta_bound(),
            9 => localization(),
            _ => determinism(),
        };
        let elapsed = t.elapsed();
        let (mut passed, mut detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
        if elapsed > Duration::from_secs(budget) {
            passed = false;
            detail.push_str("; over time budget");
        }
        println!(
            "[{}] {id:>2} {name} ({:.1}s / {budget}s): {detail}",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        rows.push(Row { id, name, passed, detail });
    }

    let failed: Vec<&Row> = rows.iter().filter(|r| !r.passed).collect();
    println!("{} of 10 criteria passed", 10 - failed.len());
    let documented = |r: &Row| {
        r.id == 5
            && tally.mismatches == 0
            && tally.failures[..3].iter().all(|&f| f == 0)
            && tally.explained == tally.failures[3]
            && !r.detail.contains("over time budget")
    };
    let mut unexplained = 0;
    for r in &failed {
        if documented(r) {
            println!(
                "known failure: {} ({}): the count bound l >= d / (5 L0 + 3) does not hold when the final pair spans more than 5 L0 + 3; all {} failing instances are of that kind",
                r.id, r.name, tally.explained
            );
        } else {
            unexplained += 1;
        }
    }
    if unexplained > 0 {
        println!("{unexplained} unexplained failure(s)");
        std::process::exit(1);
    }
}
