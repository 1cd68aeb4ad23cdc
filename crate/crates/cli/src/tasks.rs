//! Task runners: each produces machine-readable artifacts under the output
//! directory and returns a one-line JSON summary.

use crate::config::Config;
use crate::CliError;
use gaugetomo::brt::{
    data_distance, generate_sinogram, FieldRef, SamplingSpec, Sinogram, SinogramKind,
};
use gaugetomo::dtn::{adjoint_residual, dtn_matrix, DtnMatrix};
use gaugetomo::fields::{gauge_equivalent, GaugeVerdict, C64};
use gaugetomo::recon::{
    build_system, build_system_with, detect_gauge_class, random_phantoms, reconstruct_scalar,
    relative_l2_error, stability_report, GaugeClassDecision, PixelGrid,
};
use gaugetomo::tracer::{trace, TraceOutcome};
use gaugetomo::Vec2;
use serde_json::{json, Value};
use std::path::Path;

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("json serializes");
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn run_trace(config: &Config, out: &Path) -> Result<Value, CliError> {
    let task = config
        .trace
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [trace] section".into()))?;
    let scene = config.smooth_scene()?;
    let outcome = trace(
        &scene,
        task.s0,
        Vec2::from_angle(task.angle),
        task.max_reflections,
    )
    .map_err(|e| CliError::Numerical(format!("trace: {e}")))?;
    let artifact = match &outcome {
        TraceOutcome::Ray(ray) => json!({
            "outcome": "ok",
            "s0": ray.start.s,
            "s_end": ray.end.s,
            "vertices": ray.vertices().iter().map(|v| vec![v.x, v.y]).collect::<Vec<_>>(),
            "end_direction": [ray.end_direction.x, ray.end_direction.y],
            "total_length": ray.total_length,
            "n_reflections": ray.n_reflections(),
        }),
        TraceOutcome::Trapped { reflections } => json!({
            "outcome": "trapped",
            "n_reflections": reflections,
        }),
        TraceOutcome::Grazing { hit } => json!({
            "outcome": "grazing",
            "component": hit.component,
            "point": [hit.point.x, hit.point.y],
        }),
    };
    let path = out.join("trace.json");
    write_json(&path, &artifact)?;
    Ok(json!({"task": "trace", "artifact": path, "outcome": artifact["outcome"]}))
}

#[allow(clippy::too_many_arguments)]
fn generate_from_config(
    config: &Config,
    scene: &gaugetomo::scene::Scene,
    field_name: &str,
    kind: SinogramKind,
    gauge: &Option<String>,
    spec: SamplingSpec,
    max_reflections: usize,
    config_dir: &Path,
) -> Result<Sinogram, CliError> {
    let sino = match kind {
        SinogramKind::ScalarIntegral => {
            let v = config.scalar(field_name, config_dir)?;
            generate_sinogram(scene, FieldRef::Scalar(&v), kind, &spec, max_reflections)
        }
        SinogramKind::MagneticPhase | SinogramKind::PhaseFactor => {
            let a = config.vector_gauged(field_name, gauge)?;
            generate_sinogram(scene, FieldRef::Vector(&a), kind, &spec, max_reflections)
        }
    };
    sino.map_err(|e| CliError::Numerical(format!("sinogram: {e}")))
}

pub fn run_sinogram(config: &Config, out: &Path, config_dir: &Path) -> Result<Value, CliError> {
    let task = config
        .sinogram
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [sinogram] section".into()))?;
    let scene = config.smooth_scene()?;
    let mut spec = SamplingSpec::full_circle(task.ns, task.ntheta);
    if let Some(t) = task.theta_min {
        spec.theta_min = t;
    }
    if let Some(t) = task.theta_max {
        spec.theta_max = t;
    }
    if spec.theta_max <= spec.theta_min {
        return Err(CliError::Config(
            "sinogram: theta_max must exceed theta_min".into(),
        ));
    }
    let sino = generate_from_config(
        config,
        &scene,
        &task.field,
        task.kind.to_kind(),
        &task.gauge,
        spec,
        task.max_reflections,
        config_dir,
    )?;
    let path = out.join("sinogram.csv");
    sino.write(&path)
        .map_err(|e| CliError::Io(format!("sinogram artifact: {e}")))?;
    Ok(json!({
        "task": "sinogram",
        "artifact": path,
        "rows": sino.rows.len(),
        "trapped_fraction": sino.trapped_fraction(),
        "grazing_fraction": sino.grazing_fraction(),
    }))
}

pub fn run_reconstruct(config: &Config, out: &Path, config_dir: &Path) -> Result<Value, CliError> {
    let task = config
        .reconstruct
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [reconstruct] section".into()))?;
    let scene = config.smooth_scene()?;
    let truth = config.scalar(&task.truth, config_dir)?;
    let spec = SamplingSpec::full_circle(task.ns, task.ntheta);
    let sino = generate_sinogram(
        &scene,
        FieldRef::Scalar(&truth),
        SinogramKind::ScalarIntegral,
        &spec,
        task.max_reflections,
    )
    .map_err(|e| CliError::Numerical(format!("forward data: {e}")))?;
    let grid = PixelGrid::new(&scene, task.nx, task.ny);
    let system = if task.straight_only {
        build_system_with(&scene, &grid, &sino, |row| row.n_reflections == 0)
    } else {
        build_system(&scene, &grid, &sino)
    }
    .map_err(|e| CliError::Numerical(format!("system assembly: {e}")))?;
    let result = reconstruct_scalar(&system, task.lambda)
        .map_err(|e| CliError::Numerical(format!("reconstruction: {e}")))?;
    if result.cg.stagnated {
        return Err(CliError::Numerical(format!(
            "conjugate gradient stagnated after {} iterations (residual {:.3e})",
            result.cg.iterations,
            result.cg.residual_history.last().copied().unwrap_or(f64::NAN)
        )));
    }
    let err = relative_l2_error(&system, &result, &scene, &truth, task.min_coverage);

    let grid_path = out.join("reconstruction.csv");
    std::fs::write(&grid_path, result.field.to_csv())
        .map_err(|e| CliError::Io(format!("{}: {e}", grid_path.display())))?;
    let report = json!({
        "rows": system.matrix.n_rows,
        "cols": system.matrix.n_cols,
        "lambda": task.lambda,
        "straight_only": task.straight_only,
        "iterations": result.cg.iterations,
        "converged": result.cg.converged,
        "residual_history": result.cg.residual_history,
        "relative_l2_error": err,
        "min_coverage": task.min_coverage,
    });
    let report_path = out.join("reconstruction_report.json");
    write_json(&report_path, &report)?;
    Ok(json!({
        "task": "reconstruct",
        "artifact": grid_path,
        "report": report_path,
        "relative_l2_error": err,
        "iterations": result.cg.iterations,
    }))
}

fn dtn_from_side(
    config: &Config,
    scene: &gaugetomo::dtn::RectScene,
    a: &Option<String>,
    v: &Option<String>,
    gauge: &Option<String>,
    k2: C64,
    rule: gaugetomo::dtn::LinkQuadrature,
    config_dir: &Path,
) -> Result<DtnMatrix, CliError> {
    let a_field = match a {
        Some(name) => config.vector_gauged(name, gauge)?,
        None => match gauge {
            Some(g) => gaugetomo::fields::apply_gauge(
                &gaugetomo::fields::VectorField::Zero,
                &config.gauge(g)?,
            ),
            None => gaugetomo::fields::VectorField::Zero,
        },
    };
    let v_field = match v {
        Some(name) => config.scalar(name, config_dir)?,
        None => gaugetomo::fields::ScalarField::zero(),
    };
    dtn_matrix(scene, &a_field, &v_field, k2, rule)
        .map_err(|e| CliError::Numerical(format!("dtn: {e}")))
}

pub fn run_dtn(config: &Config, out: &Path, config_dir: &Path) -> Result<Value, CliError> {
    let task = config
        .dtn
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [dtn] section".into()))?;
    if config.scene.is_some() && config.rect_scene.is_none() {
        return Err(CliError::Config(
            "dtn is a rectilinear task: replace [scene] with [rect_scene]".into(),
        ));
    }
    let scene = config.rect_scene()?;
    let k2 = complex_of(&task.k2);
    let lam = dtn_from_side(
        config,
        &scene,
        &task.a,
        &task.v,
        &task.gauge,
        k2,
        task.links.to_rule(),
        config_dir,
    )?;
    let path = out.join("dtn.json");
    lam.write_json(&path)
        .map_err(|e| CliError::Io(format!("dtn artifact: {e}")))?;
    // adjoint/hermiticity diagnostics are cheap and useful in the summary
    let herm = lam.hermitian_residual();
    Ok(json!({
        "task": "dtn",
        "artifact": path,
        "dim": lam.dim(),
        "k2": [k2.re, k2.im],
        "hermitian_residual": herm,
    }))
}

fn complex_of(spec: &crate::config::ComplexSpec) -> C64 {
    match spec {
        crate::config::ComplexSpec::Real(re) => C64::new(*re, 0.0),
        crate::config::ComplexSpec::Pair([re, im]) => C64::new(*re, *im),
    }
}

pub fn run_dtn_compare(config: &Config, out: &Path, config_dir: &Path) -> Result<Value, CliError> {
    let task = config
        .dtn_compare
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [dtn_compare] section".into()))?;
    let scene = config.rect_scene()?;
    let k2 = complex_of(&task.k2);
    let rule = task.links.to_rule();
    let first = dtn_from_side(
        config, &scene, &task.first.a, &task.first.v, &task.first.gauge, k2, rule, config_dir,
    )?;
    let second = dtn_from_side(
        config, &scene, &task.second.a, &task.second.v, &task.second.gauge, k2, rule, config_dir,
    )?;
    let first_path = out.join("dtn_first.json");
    let second_path = out.join("dtn_second.json");
    first
        .write_json(&first_path)
        .map_err(|e| CliError::Io(format!("dtn artifact: {e}")))?;
    second
        .write_json(&second_path)
        .map_err(|e| CliError::Io(format!("dtn artifact: {e}")))?;
    let frobenius_gap = first.frobenius_gap(&second);
    let relative = frobenius_gap / first.frobenius_norm();
    let max_entry = first.max_entry_gap(&second);
    let report = json!({
        "frobenius_gap": frobenius_gap,
        "relative_frobenius_gap": relative,
        "max_entry_gap": max_entry,
        "tol": task.tol,
        "within_tol": relative <= task.tol,
    });
    let report_path = out.join("dtn_compare.json");
    write_json(&report_path, &report)?;
    let summary = json!({
        "task": "dtn-compare",
        "report": report_path,
        "relative_frobenius_gap": relative,
        "within_tol": relative <= task.tol,
    });
    if relative <= task.tol {
        Ok(summary)
    } else {
        Err(CliError::AboveTolerance(summary))
    }
}

pub fn run_gauge_check(config: &Config, out: &Path) -> Result<Value, CliError> {
    let task = config
        .gauge_check
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [gauge_check] section".into()))?;
    let scene = config.smooth_scene()?;
    let a1 = config.vector(&task.a1)?;
    let a2 = config.vector(&task.a2)?;
    let spec = SamplingSpec::full_circle(task.ns, task.ntheta);
    let w1 = generate_sinogram(
        &scene,
        FieldRef::Vector(&a1),
        SinogramKind::PhaseFactor,
        &spec,
        task.max_reflections,
    )
    .map_err(|e| CliError::Numerical(format!("sinogram: {e}")))?;
    let w2 = generate_sinogram(
        &scene,
        FieldRef::Vector(&a2),
        SinogramKind::PhaseFactor,
        &spec,
        task.max_reflections,
    )
    .map_err(|e| CliError::Numerical(format!("sinogram: {e}")))?;
    w1.write(&out.join("phases_a1.csv"))
        .map_err(|e| CliError::Io(format!("sinogram artifact: {e}")))?;
    w2.write(&out.join("phases_a2.csv"))
        .map_err(|e| CliError::Io(format!("sinogram artifact: {e}")))?;

    let data_verdict = detect_gauge_class(&w1, &w2, task.tol)
        .map_err(|e| CliError::Numerical(format!("gauge class: {e}")))?;
    let field_decision = gauge_equivalent(&a1, &a2, &scene, task.tol)
        .map_err(|e| CliError::Numerical(format!("gauge equivalence: {e}")))?;

    let data_json = match &data_verdict {
        GaugeClassDecision::Same { max_gap } => json!({"verdict": "same", "max_gap": max_gap}),
        GaugeClassDecision::Different { max_gap, witness } => json!({
            "verdict": "different",
            "max_gap": max_gap,
            "witness": {"s": witness.0, "theta": witness.1},
        }),
    };
    let field_json = match &field_decision.verdict {
        GaugeVerdict::Equivalent { .. } => json!({
            "verdict": "equivalent",
            "holonomies": field_decision.holonomies,
        }),
        GaugeVerdict::Inequivalent { reason } => json!({
            "verdict": "inequivalent",
            "reason": reason.to_string(),
            "holonomies": field_decision.holonomies,
        }),
    };
    let report = json!({"phase_data": data_json, "field_check": field_json});
    let path = out.join("gauge_check.json");
    write_json(&path, &report)?;
    Ok(json!({
        "task": "gauge-check",
        "artifact": path,
        "phase_verdict": report["phase_data"]["verdict"],
        "field_verdict": report["field_check"]["verdict"],
    }))
}

pub fn run_stability(
    config: &Config,
    out: &Path,
    seed: u64,
    config_dir: &Path,
) -> Result<Value, CliError> {
    let task = config
        .stability
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [stability] section".into()))?;
    let scene = config.smooth_scene()?;
    let grid = PixelGrid::new(&scene, task.nx, task.ny);
    let phantoms: Vec<gaugetomo::fields::ScalarField> = match (&task.truth, task.n_phantoms) {
        (Some(name), None) => vec![config.scalar(name, config_dir)?],
        (None, Some(n)) => random_phantoms(&scene, n, seed),
        _ => {
            return Err(CliError::Config(
                "stability needs exactly one of `truth` or `n_phantoms`".into(),
            ))
        }
    };
    let spec = SamplingSpec::full_circle(task.ns, task.ntheta);
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    let mut undefined = 0usize;
    for (k, phantom) in phantoms.iter().enumerate() {
        let sino = generate_sinogram(
            &scene,
            FieldRef::Scalar(phantom),
            SinogramKind::ScalarIntegral,
            &spec,
            task.max_reflections,
        )
        .map_err(|e| CliError::Numerical(format!("phantom {k}: {e}")))?;
        let report = stability_report(&sino, phantom, &scene, &grid)
            .map_err(|e| CliError::Numerical(format!("phantom {k}: {e}")))?;
        match report.ratio_first_power {
            Some(r) => ratios.push(r),
            None => undefined += 1,
        }
        if phantoms.len() == 1 {
            // plot-ready integrand table for single-phantom runs
            let mut csv = String::from("s,theta,abs_dw_ds,abs_dw_dtheta\n");
            for (s, theta, dws, dwt) in &report.integrand {
                csv.push_str(&format!("{s},{theta},{dws},{dwt}\n"));
            }
            let path = out.join("stability_integrand.csv");
            std::fs::write(&path, csv).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        rows.push(json!({
            "lhs": report.lhs,
            "rhs_first_power": report.rhs_first_power,
            "rhs_squared": report.rhs_squared,
            "ratio_first_power": report.ratio_first_power,
            "ratio_squared": report.ratio_squared,
            "used_samples": report.used_samples,
            "skipped_samples": report.skipped_samples,
        }));
    }
    let spread = if ratios.is_empty() {
        None
    } else {
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        Some(max / min)
    };
    let report = json!({
        "phantoms": rows,
        "defined_ratios": ratios,
        "undefined_ratio_count": undefined,
        "ratio_spread_first_power": spread,
        "seed": seed,
    });
    let path = out.join("stability.json");
    write_json(&path, &report)?;
    Ok(json!({
        "task": "stability",
        "artifact": path,
        "n_phantoms": phantoms.len(),
        "ratio_spread_first_power": spread,
        "undefined_ratio_count": undefined,
    }))
}

/// Compare two artifacts of the same kind; errors with `AboveTolerance` when
/// the gap exceeds `tol`.
pub fn run_compare(a: &Path, b: &Path, tol: f64) -> Result<Value, CliError> {
    let kind_of = |p: &Path| -> Option<&'static str> {
        match p.extension().and_then(|e| e.to_str()) {
            Some("csv") => Some("sinogram"),
            Some("json") => Some("dtn"),
            _ => None,
        }
    };
    let (ka, kb) = (kind_of(a), kind_of(b));
    if ka.is_none() || ka != kb {
        return Err(CliError::Config(format!(
            "artifacts must both be sinogram CSVs or dtn JSONs: {} vs {}",
            a.display(),
            b.display()
        )));
    }
    match ka.unwrap() {
        "sinogram" => {
            let wa = Sinogram::read(a).map_err(|e| CliError::Config(format!("{}: {e}", a.display())))?;
            let wb = Sinogram::read(b).map_err(|e| CliError::Config(format!("{}: {e}", b.display())))?;
            let d = data_distance(&wa, &wb)
                .map_err(|e| CliError::Config(format!("compare: {e}")))?;
            let summary = json!({
                "task": "compare",
                "kind": "sinogram",
                "max_abs_gap": d.max_abs,
                "l2_mean_gap": d.l2_mean,
                "outcome_mismatches": d.outcome_mismatches,
                "tol": tol,
                "within_tol": d.max_abs <= tol && d.outcome_mismatches == 0,
            });
            if d.max_abs <= tol && d.outcome_mismatches == 0 {
                Ok(summary)
            } else {
                Err(CliError::AboveTolerance(summary))
            }
        }
        _ => {
            let la = DtnMatrix::read_json(a)
                .map_err(|e| CliError::Config(format!("{}: {e}", a.display())))?;
            let lb = DtnMatrix::read_json(b)
                .map_err(|e| CliError::Config(format!("{}: {e}", b.display())))?;
            if la.dim() != lb.dim() {
                return Err(CliError::Config(format!(
                    "matrix dimensions differ: {} vs {}",
                    la.dim(),
                    lb.dim()
                )));
            }
            let gap = la.frobenius_gap(&lb);
            let relative = gap / la.frobenius_norm().max(f64::MIN_POSITIVE);
            let summary = json!({
                "task": "compare",
                "kind": "dtn",
                "frobenius_gap": gap,
                "relative_frobenius_gap": relative,
                "max_entry_gap": la.max_entry_gap(&lb),
                "tol": tol,
                "within_tol": gap <= tol,
            });
            if gap <= tol {
                Ok(summary)
            } else {
                Err(CliError::AboveTolerance(summary))
            }
        }
    }
}

/// Self-check used by tests: the adjoint identity on a small scene.
pub fn adjoint_probe(scene: &gaugetomo::dtn::RectScene, k2: f64) -> Result<f64, CliError> {
    adjoint_residual(
        scene,
        &gaugetomo::fields::VectorField::Zero,
        &gaugetomo::fields::ScalarField::zero(),
        k2,
        gaugetomo::dtn::LinkQuadrature::Analytic,
    )
    .map_err(|e| CliError::Numerical(e.to_string()))
}
