//! One function per subcommand. Each turns a resolved configuration into
//! result records.

use serde_json::json;
use treeloc::diagnostics::{eigen_metrics, median, spacing_statistics, spectral_measure, spectrum_full, stieltjes};
use treeloc::green::{dense_column, green_entry, DENSE_GUARD};
use treeloc::moments::{
    bound_probe_with_workers, fit_decay, fractional_moment_with_workers, minami_scan_with_workers,
    ray_targets, segmentation_rate_baseline, MomentEstimate, MomentRequest, ProbeRequest,
};
use treeloc::operator::{assemble, sample_potential, HamiltonianMatrix};
use treeloc::segmentation::{
    segment_path, segment_profile, verify_path_segmentation, verify_segmentation, PathProfile,
    SegmentationReport, MIN_L0,
};
use treeloc::tree::{
    ball_size_exact, build_ball, dimension_estimate, dimension_limit, JunctionSchedule, TreeBall,
    DEFAULT_VERTEX_CAP,
};

use crate::config::{ExperimentConfig, TargetSelection};
use crate::output::{Csv, Outcome};
use crate::CliError;

fn ball_and_operator(cfg: &ExperimentConfig) -> Result<(TreeBall, HamiltonianMatrix), CliError> {
    let ball = build_ball(&cfg.tree())?;
    let disorder = cfg.disorder();
    let potential = sample_potential(&disorder, &ball, cfg.realization);
    let h = assemble(&ball, cfg.laplacian, &potential, cfg.lambda)?;
    Ok((ball, h))
}

pub fn tree(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let params = cfg.tree();
    let vertices = ball_size_exact(&params, params.radius)?;
    let schedule = JunctionSchedule::new(params.gamma, params.radius);
    let materialised = if vertices <= DEFAULT_VERTEX_CAP {
        let ball = build_ball(&params)?;
        if ball.len() as u128 != vertices {
            return Err(CliError::Run(format!(
                "built ball has {} vertices, closed form says {vertices}",
                ball.len()
            )));
        }
        true
    } else {
        false
    };
    let limit = dimension_limit(params.k, params.gamma).ok();
    let mut out = Outcome::default();
    out.push(
        "ball",
        json!({
            "vertices": vertices,
            "junction_depths": schedule.radii(),
            "materialised": materialised,
            "dimension_limit": limit,
        }),
    )?;
    let mut csv = Csv::new(&["r", "ball_size", "dimension_estimate"]);
    if params.gamma > 1.0 {
        for exp in 1..=6u32 {
            let r = 10u64.pow(exp);
            let size = ball_size_exact(&params, r).ok();
            let estimate = dimension_estimate(&params, r).ok();
            out.push("dimension", json!({ "r": r, "ball_size": size, "estimate": estimate, "limit": limit }))?;
            csv.row(vec![
                r.to_string(),
                size.map_or(String::new(), |s| s.to_string()),
                estimate.map_or(String::new(), |e| e.to_string()),
            ]);
        }
    }
    out.csv = Some(csv);
    Ok(out)
}

pub fn green(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let (ball, h) = ball_and_operator(cfg)?;
    ball.check(cfg.x)?;
    ball.check(cfg.y)?;
    let z = cfg.spectral_point();
    let g = green_entry(&h, cfg.x, cfg.y, &z)?;
    let dense_deviation = if h.dim() <= DENSE_GUARD {
        Some((dense_column(&h, cfg.y, &z)?[cfg.x] - g).norm())
    } else {
        None
    };
    let mut out = Outcome::default();
    out.push(
        "green_entry",
        json!({
            "x": cfg.x,
            "y": cfg.y,
            "distance": ball.distance(cfg.x, cfg.y),
            "realization": cfg.realization,
            "re": g.re,
            "im": g.im,
            "abs": g.norm(),
            "dense_deviation": dense_deviation,
        }),
    )?;
    Ok(out)
}

fn moment_csv(estimates: &[MomentEstimate]) -> Csv {
    let mut csv = Csv::new(&["target", "distance", "mean", "stderr", "samples"]);
    for e in estimates {
        csv.row(vec![
            e.target.to_string(),
            e.distance.to_string(),
            e.mean.to_string(),
            e.stderr.to_string(),
            e.samples.to_string(),
        ]);
    }
    csv
}

fn push_fit(out: &mut Outcome, estimates: &[MomentEstimate], l0: u64) -> Result<(), CliError> {
    let payload = match fit_decay(estimates) {
        Ok(fit) => json!({ "fit": fit, "baseline_rate": segmentation_rate_baseline(l0), "l0": l0 }),
        Err(e) => json!({ "fit": null, "reason": e.to_string(), "baseline_rate": segmentation_rate_baseline(l0), "l0": l0 }),
    };
    out.push("decay_fit", payload)
}

pub fn moment_request(cfg: &ExperimentConfig) -> Result<MomentRequest, CliError> {
    let tree = cfg.tree();
    let targets = match &cfg.targets {
        TargetSelection::Explicit(ids) => ids.clone(),
        TargetSelection::Ray => {
            let ball = build_ball(&tree)?;
            ball.check(cfg.source)?;
            let length = (tree.radius - ball.depth(cfg.source)) as usize;
            if length == 0 {
                return Err(CliError::Config(format!(
                    "source {} sits on the edge of the ball; no ray targets",
                    cfg.source
                )));
            }
            ray_targets(&ball, cfg.source, length)?
        }
    };
    Ok(MomentRequest {
        tree,
        kind: cfg.laplacian,
        disorder: cfg.disorder(),
        source: cfg.source,
        targets,
        z: cfg.spectral_point(),
        s: cfg.s,
        samples: cfg.samples,
    })
}

pub fn moments(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let req = moment_request(cfg)?;
    let estimates = fractional_moment_with_workers(&req, cfg.workers)?;
    let mut out = Outcome::default();
    for e in &estimates {
        out.push("moment", e)?;
    }
    push_fit(&mut out, &estimates, cfg.l0)?;
    out.csv = Some(moment_csv(&estimates));
    Ok(out)
}

pub fn minami(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let scan = minami_scan_with_workers(
        cfg.length,
        &cfg.disorder(),
        cfg.s,
        &cfg.spectral_point(),
        cfg.samples,
        cfg.workers,
    )?;
    let mut out = Outcome::default();
    for e in &scan.estimates {
        out.push("chain_moment", e)?;
    }
    out.push("decay_fit", json!({ "fit": scan.fit, "fit_from": 1 }))?;
    out.csv = Some(moment_csv(&scan.estimates));
    Ok(out)
}

pub fn probe_request(cfg: &ExperimentConfig) -> ProbeRequest {
    ProbeRequest {
        region_size: cfg.region_size,
        kind: cfg.laplacian,
        disorder: cfg.disorder(),
        s: cfg.s,
        energy: cfg.energy,
        etas: cfg.etas.clone(),
        samples: cfg.samples,
        pairs: cfg.pairs,
    }
}

pub fn probe(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let report = bound_probe_with_workers(&probe_request(cfg), cfg.workers)?;
    let mut out = Outcome::default();
    let mut csv = Csv::new(&["eta", "max_mean", "max_stderr"]);
    for p in &report.points {
        out.push("probe_eta", p)?;
        csv.row(vec![p.eta.to_string(), p.max_mean.to_string(), p.max_stderr.to_string()]);
    }
    out.push(
        "probe_summary",
        json!({
            "region": report.region,
            "pairs": report.pairs,
            "ratio": report.ratio,
            "bounded": report.bounded,
        }),
    )?;
    out.csv = Some(csv);
    Ok(out)
}

fn push_report(out: &mut Outcome, report: &SegmentationReport) -> Result<(), CliError> {
    out.verification_failed = !report.all_pass();
    out.push("segmentation_report", report)
}

pub fn segment(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    if cfg.l0 < MIN_L0 {
        return Err(CliError::Config(format!("l0 must be >= {MIN_L0}, got {}", cfg.l0)));
    }
    match (cfg.x1, cfg.v, cfg.depth_x, cfg.apex, cfg.depth_v) {
        (Some(x1), Some(v), None, None, None) => {
            let ball = build_ball(&cfg.tree())?;
            let res = segment_path(&ball, x1, v, cfg.l0)?;
            let report = verify_path_segmentation(&ball, &res, x1, v)?;
            let (profile, _) = PathProfile::from_ball(&ball, x1, v)?;
            out.push("segmentation", json!({ "result": res, "l": res.l(), "junction_offsets": profile.junctions() }))?;
            push_report(&mut out, &report)?;
        }
        (None, None, Some(dx), Some(apex), Some(dv)) => {
            let schedule = JunctionSchedule::new(cfg.gamma, dx.max(dv));
            let profile = PathProfile::from_depths(&schedule, dx, apex, dv)?;
            let res = segment_profile(&profile, cfg.l0)?;
            let report = verify_segmentation(&profile, &res);
            out.push("segmentation", json!({ "result": res, "l": res.l(), "junction_offsets": profile.junctions() }))?;
            push_report(&mut out, &report)?;
        }
        _ => {
            return Err(CliError::Config(
                "segment needs either x1 and v (vertex ids in the ball) or depth_x, apex and depth_v".into(),
            ))
        }
    }
    Ok(out)
}

pub fn spectrum(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let (ball, h) = ball_and_operator(cfg)?;
    let dec = spectrum_full(&h)?;
    let metrics = eigen_metrics(&dec, &ball)?;
    let iprs: Vec<f64> = metrics.iter().map(|m| m.ipr).collect();
    let z = treeloc::green::SpectralPoint::new(0.0, 1.0)?;
    let mut stieltjes_error = 0.0f64;
    for x in 0..ball.len() {
        let atoms = spectral_measure(&dec, x)?;
        let g = green_entry(&h, x, x, &z)?;
        stieltjes_error = stieltjes_error.max((stieltjes(&atoms, z.z()) - g).norm());
    }
    let spacing = spacing_statistics(&dec.eigenvalues).ok();
    let mut out = Outcome::default();
    out.push(
        "spectrum_summary",
        json!({
            "vertices": ball.len(),
            "eigenvalue_min": dec.eigenvalues.first(),
            "eigenvalue_max": dec.eigenvalues.last(),
            "median_ipr": median(&iprs),
            "delocalized_ipr": 1.0 / ball.len() as f64,
            "relative_residual": dec.relative_residual(&h)?,
            "norm_defect": dec.norm_defect()?,
            "trace_defect": dec.trace_defect(&h),
            "stieltjes_max_error": stieltjes_error,
            "spacing_ks_distance": spacing.as_ref().map(|s| s.ks_distance),
        }),
    )?;
    let mut csv = Csv::new(&["index", "energy", "ipr", "center", "decay_rate", "decay_r_squared"]);
    for m in &metrics {
        out.push("eigenvector", m)?;
        csv.row(vec![
            m.index.to_string(),
            m.energy.to_string(),
            m.ipr.to_string(),
            m.center.to_string(),
            m.decay.map_or(String::new(), |d| d.rate.to_string()),
            m.decay.map_or(String::new(), |d| d.r_squared.to_string()),
        ]);
    }
    out.csv = Some(csv);
    Ok(out)
}
