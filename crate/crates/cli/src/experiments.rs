//! The experiment kinds behind `ssmp run`. Each experiment writes CSV
//! tables plus PASS/FAIL summary lines; batches over entries run in
//! parallel with deterministic ordering.

use std::path::Path;

use anyhow::{bail, Context};
use nalgebra::DVector;
use rayon::prelude::*;

use ssmp::chart::ManifoldSpec;
use ssmp::flow::integrate_geodesic;
use ssmp::gauge::{apply_gauge_ssm, verify_scattering_invariance};
use ssmp::lightlike::{null_convexity, null_project, MagneticSystem};
use ssmp::ode::Tolerances;
use ssmp::reduction::{momentum_mass_state, mp_rhs, reduce};
use ssmp::scattering::{
    reconstruct_scattering, sample_admissible_entries, scattering_mp, scattering_rho_m,
    time_free_action_along, BoundaryTangent, MPBoundaryTangent, ScatteringRecord,
};
use ssmp::simplicity::{
    boundary_energy_samples, check_admissible, mp_convexity, shoot_connect, ShootOptions,
    ShootOutcome,
};

use crate::config::{Config, ExperimentKind, GaugeConfig};
use crate::report::{g17, CsvTable, Summary};

/// Run the configured experiment; returns the summary (exit status derives
/// from it).
pub fn run(config: &Config, out_dir: &Path, tol: Tolerances) -> anyhow::Result<Summary> {
    let spec = crate::config::build_manifold(&config.manifold)?;
    let exp = &config.experiment;
    let mut summary = Summary::default();

    // Momentum admissibility gate (lightlike batches fix ρ = -1, m = 0).
    if exp.kind != ExperimentKind::LightlikeBatch {
        for &rho in &exp.rho {
            let report = check_admissible(&spec, rho, exp.mass);
            if !report.band_ok && !exp.allow_inadmissible {
                bail!(
                    "rho = {rho} is outside the admissible band for mass {} \
                     (max lambda {:.6}); set allow_inadmissible to override",
                    exp.mass,
                    report.lambda_max
                );
            }
        }
    }

    match exp.kind {
        ExperimentKind::ScatterBatch => scatter_batch(&spec, config, out_dir, tol, &mut summary)?,
        ExperimentKind::EquivalenceCheck => {
            equivalence_check(&spec, config, out_dir, tol, &mut summary)?
        }
        ExperimentKind::GaugeInvariance => {
            gauge_invariance(&spec, config, out_dir, tol, &mut summary)?
        }
        ExperimentKind::SimplicityAudit => {
            simplicity_audit(&spec, config, out_dir, &mut summary)?
        }
        ExperimentKind::LightlikeBatch => {
            lightlike_batch(&spec, config, out_dir, tol, &mut summary)?
        }
        ExperimentKind::ConservationSweep => {
            conservation_sweep(&spec, config, out_dir, tol, &mut summary)?
        }
    }
    Ok(summary)
}

fn record_header(dim: usize) -> Vec<String> {
    let mut cols = vec!["index".to_string(), "entry_t".into()];
    for i in 1..=dim {
        cols.push(format!("entry_x{i}"));
    }
    cols.push("entry_vt".into());
    for i in 1..=dim {
        cols.push(format!("entry_vx{i}"));
    }
    cols.push("exit_t".into());
    for i in 1..=dim {
        cols.push(format!("exit_x{i}"));
    }
    cols.push("exit_vt".into());
    for i in 1..=dim {
        cols.push(format!("exit_vx{i}"));
    }
    cols.extend(
        ["T", "time_shift", "action", "rho", "mass", "flags"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols
}

fn record_row(index: usize, rec: &ScatteringRecord, flags: &str) -> Vec<String> {
    let mut cells = vec![index.to_string(), g17(rec.entry.t)];
    cells.extend(rec.entry.x.iter().map(|v| g17(*v)));
    cells.push(g17(rec.entry.vt));
    cells.extend(rec.entry.vx.iter().map(|v| g17(*v)));
    cells.push(g17(rec.exit.t));
    cells.extend(rec.exit.x.iter().map(|v| g17(*v)));
    cells.push(g17(rec.exit.vt));
    cells.extend(rec.exit.vx.iter().map(|v| g17(*v)));
    cells.push(g17(rec.exit_time));
    cells.push(g17(rec.time_shift));
    cells.push(g17(rec.action));
    cells.push(g17(rec.rho));
    cells.push(g17(rec.mass));
    cells.push(flags.to_string());
    cells
}

/// Entries for one `(ρ, m)` batch; a diametral entry is prepended when the
/// domain has one, so closed-form anchors appear in every table.
fn batch_entries(
    spec: &ManifoldSpec,
    rho: f64,
    m: f64,
    count: usize,
    seed: u64,
) -> anyhow::Result<Vec<BoundaryTangent>> {
    let mut entries = Vec::with_capacity(count);
    let r = spec.domain().bounding_radius();
    let mut west = DVector::zeros(spec.dim());
    west[0] = -r;
    if spec.domain().on_boundary(west.as_slice()) {
        let cap = rho * rho / spec.lambda_at(west.as_slice()) - m * m;
        if cap > 0.0 {
            entries.push(BoundaryTangent {
                t: 0.0,
                x: west,
                vt: -rho,
                vx: DVector::zeros(spec.dim()),
            });
        }
    }
    let remaining = count.saturating_sub(entries.len());
    entries.extend(sample_admissible_entries(spec, rho, m, remaining, seed)?);
    Ok(entries)
}

fn scatter_batch(
    spec: &ManifoldSpec,
    config: &Config,
    out_dir: &Path,
    tol: Tolerances,
    summary: &mut Summary,
) -> anyhow::Result<()> {
    let exp = &config.experiment;
    for (ri, &rho) in exp.rho.iter().enumerate() {
        let entries = batch_entries(spec, rho, exp.mass, exp.samples, exp.seed ^ ri as u64)?;
        let results: Vec<_> = entries
            .par_iter()
            .map(|e| scattering_rho_m(spec, rho, exp.mass, e, tol))
            .collect();
        let mut table = CsvTable::new(
            out_dir,
            &format!("records_rho{ri}.csv"),
            &record_header(spec.dim()).iter().map(|s| s.as_str()).collect::<Vec<_>>(),
        );
        let mut max_identity = 0.0f64;
        let mut errors = 0usize;
        for (i, res) in results.iter().enumerate() {
            match res {
                Ok(rec) => {
                    max_identity = max_identity.max(
                        (rec.action - (rec.rho * rec.time_shift - rec.mass * rec.mass * rec.exit_time))
                            .abs(),
                    );
                    table.row(&record_row(i, rec, "ok"));
                }
                Err(e) => {
                    errors += 1;
                    let mut cells = vec![i.to_string()];
                    cells.resize(record_header(spec.dim()).len() - 1, String::new());
                    cells.push(format!("error:{e}"));
                    table.row(&cells);
                }
            }
        }
        table.finish()?;
        summary.assert_le(&format!("scatter-batch/rho{ri}/action_identity"), max_identity, 1e-9);
        summary.assert(
            &format!("scatter-batch/rho{ri}/all_entries_computed"),
            errors == 0,
            &format!("errors={errors} of {}", results.len()),
        );
    }
    Ok(())
}

fn equivalence_check(
    spec: &ManifoldSpec,
    config: &Config,
    out_dir: &Path,
    tol: Tolerances,
    summary: &mut Summary,
) -> anyhow::Result<()> {
    let exp = &config.experiment;
    let m = exp.mass;
    for (ri, &rho) in exp.rho.iter().enumerate() {
        let entries = batch_entries(spec, rho, m, exp.samples, exp.seed ^ ri as u64)?;
        let system = reduce(spec, rho).for_mass(m);
        struct Row {
            rec: ScatteringRecord,
            dev_point: f64,
            dev_tangent: f64,
            dev_exit_t: f64,
            dev_time: f64,
            dev_shift: f64,
            dev_action: f64,
            action_integral: f64,
        }
        let rows: Vec<anyhow::Result<Row>> = entries
            .par_iter()
            .map(|entry| {
                let direct = scattering_rho_m(spec, rho, m, entry, tol)?;
                let rebuilt = reconstruct_scattering(&system, m, entry, tol)?;
                let mp_entry = MPBoundaryTangent { x: entry.x.clone(), vx: entry.vx.clone() };
                let (_, _, traj) = scattering_mp(&system, &mp_entry, tol)?;
                let action_integral = time_free_action_along(&system, m, &traj)?;
                Ok(Row {
                    dev_point: (direct.exit.x.clone() - &rebuilt.exit.x).norm(),
                    dev_tangent: (direct.exit.vx.clone() - &rebuilt.exit.vx).norm(),
                    dev_exit_t: (direct.exit.t - rebuilt.exit.t).abs(),
                    dev_time: (direct.exit_time - rebuilt.exit_time).abs(),
                    dev_shift: (direct.time_shift - rebuilt.time_shift).abs(),
                    dev_action: (direct.action - rebuilt.action).abs(),
                    action_integral,
                    rec: direct,
                })
            })
            .collect();

        let mut records = CsvTable::new(
            out_dir,
            &format!("records_rho{ri}.csv"),
            &record_header(spec.dim()).iter().map(|s| s.as_str()).collect::<Vec<_>>(),
        );
        let mut devs = CsvTable::new(
            out_dir,
            &format!("equivalence_rho{ri}.csv"),
            &[
                "index",
                "dev_exit_point",
                "dev_exit_tangent",
                "dev_exit_t",
                "dev_T",
                "dev_time_shift",
                "dev_action",
                "action_formula",
                "action_integral",
                "action_integral_dev",
            ],
        );
        let mut max_record_dev = 0.0f64;
        let mut max_action_dev = 0.0f64;
        let mut errors = 0usize;
        for (i, row) in rows.iter().enumerate() {
            match row {
                Ok(r) => {
                    records.row(&record_row(i, &r.rec, "ok"));
                    let int_dev = (r.action_integral - r.rec.action).abs();
                    devs.row_values(
                        &i.to_string(),
                        &[
                            r.dev_point,
                            r.dev_tangent,
                            r.dev_exit_t,
                            r.dev_time,
                            r.dev_shift,
                            r.dev_action,
                            r.rec.action,
                            r.action_integral,
                            int_dev,
                        ],
                    );
                    max_record_dev = max_record_dev
                        .max(r.dev_point)
                        .max(r.dev_tangent)
                        .max(r.dev_exit_t)
                        .max(r.dev_time)
                        .max(r.dev_shift)
                        .max(r.dev_action);
                    max_action_dev = max_action_dev.max(int_dev);
                }
                Err(e) => {
                    errors += 1;
                    summary.info(
                        &format!("equivalence-check/rho{ri}/entry{i}"),
                        &format!("skipped: {e}"),
                    );
                }
            }
        }
        records.finish()?;
        devs.finish()?;
        summary.assert_le(
            &format!("equivalence-check/rho{ri}/record_reconstruction"),
            max_record_dev,
            1e-6,
        );
        summary.assert_le(
            &format!("equivalence-check/rho{ri}/action_integral"),
            max_action_dev,
            1e-7,
        );
        summary.assert(
            &format!("equivalence-check/rho{ri}/all_entries_computed"),
            errors == 0,
            &format!("errors={errors}"),
        );
    }
    Ok(())
}

fn gauge_invariance(
    spec: &ManifoldSpec,
    config: &Config,
    out_dir: &Path,
    _tol: Tolerances,
    summary: &mut Summary,
) -> anyhow::Result<()> {
    let exp = &config.experiment;
    let gauge_cfg: &GaugeConfig = config
        .gauge
        .as_ref()
        .context("gauge-invariance needs a [gauge] section")?;
    let radius = spec.domain().bounding_radius();
    let gauge = crate::config::build_gauge(gauge_cfg, radius, spec.dim())?;

    let mut table = CsvTable::new(
        out_dir,
        "gauge_deviations.csv",
        &[
            "case",
            "rho",
            "entries",
            "skipped",
            "max_exit_point",
            "max_exit_tangent",
            "max_exit_time",
            "max_time_shift",
            "max_action",
            "max_deviation",
        ],
    );
    for (ri, &rho) in exp.rho.iter().enumerate() {
        let gauged = apply_gauge_ssm(spec, &gauge, rho, exp.mass)?;
        let report = verify_scattering_invariance(
            spec,
            &gauged,
            rho,
            exp.mass,
            exp.samples,
            exp.seed ^ ri as u64,
        )?;
        table.row(&[
            "gauge".into(),
            g17(rho),
            report.entries.to_string(),
            report.skipped.to_string(),
            g17(report.max_exit_point),
            g17(report.max_exit_tangent),
            g17(report.max_exit_time),
            g17(report.max_time_shift),
            g17(report.max_action),
            g17(report.max_deviation),
        ]);
        summary.assert(
            &format!("gauge-invariance/rho{ri}/records_agree"),
            report.pass,
            &format!("max_deviation={} tol={}", g17(report.max_deviation), g17(1e-5)),
        );

        if let Some(amp) = gauge_cfg.control_perturbation {
            let perturbed = perturb_lambda_interior(spec, amp)?;
            let control = verify_scattering_invariance(
                spec,
                &perturbed,
                rho,
                exp.mass,
                exp.samples,
                exp.seed ^ ri as u64,
            )?;
            table.row(&[
                "control".into(),
                g17(rho),
                control.entries.to_string(),
                control.skipped.to_string(),
                g17(control.max_exit_point),
                g17(control.max_exit_tangent),
                g17(control.max_exit_time),
                g17(control.max_time_shift),
                g17(control.max_action),
                g17(control.max_deviation),
            ]);
            summary.assert(
                &format!("gauge-invariance/rho{ri}/control_detected"),
                control.max_deviation >= 1e-3,
                &format!("deviation={} (expected >= 1e-3)", g17(control.max_deviation)),
            );
        }
    }
    table.finish()?;
    Ok(())
}

/// Interior λ perturbation preserving the boundary trace, used as the
/// deliberate failure control.
fn perturb_lambda_interior(spec: &ManifoldSpec, amplitude: f64) -> anyhow::Result<ManifoldSpec> {
    let base = spec.lambda_field();
    let domain = spec.domain_arc();
    let scale = spec.b_scale();
    let dom = domain.clone();
    let perturbed = ssmp::fields::FdScalarFn {
        f: move |x: &[f64]| base.value(x) * (1.0 + amplitude * dom.b(x) / scale),
    };
    ManifoldSpec::new(
        domain,
        spec.h_field(),
        spec.omega_field(),
        std::sync::Arc::new(perturbed),
    )
    .context("perturbed control spec")
}

fn simplicity_audit(
    spec: &ManifoldSpec,
    config: &Config,
    out_dir: &Path,
    summary: &mut Summary,
) -> anyhow::Result<()> {
    let exp = &config.experiment;
    let m = exp.mass;
    let mut margins = CsvTable::new(
        out_dir,
        "convexity_margins.csv",
        &["rho", "x1", "x2", "second_form", "force_term", "potential_term", "margin"],
    );
    let mut shots = CsvTable::new(
        out_dir,
        "shooting.csv",
        &["rho", "pair", "x1", "x2", "y1", "y2", "solutions", "duration", "condition"],
    );
    for (ri, &rho) in exp.rho.iter().enumerate() {
        let report = check_admissible(spec, rho, m);
        summary.info(
            &format!("simplicity-audit/rho{ri}/band"),
            &format!(
                "lambda_min={} lambda_max={} margin={} band_ok={}",
                g17(report.lambda_min),
                g17(report.lambda_max),
                g17(report.margin),
                report.band_ok
            ),
        );
        let k = -0.5 * m * m;
        let system = reduce(spec, rho).for_mass(m);
        let n_points = exp.samples.min(200).max(8);
        let samples = boundary_energy_samples(&system, k, n_points, 2, exp.seed ^ ri as u64)?;
        let convexity = mp_convexity(&system, &samples, k)?;
        for s in &convexity.samples {
            margins.row(&[
                g17(rho),
                g17(s.x[0]),
                g17(s.x[1.min(s.x.len() - 1)]),
                g17(s.second_form),
                g17(s.force_term),
                g17(s.potential_term),
                g17(s.margin),
            ]);
        }
        summary.info(
            &format!("simplicity-audit/rho{ri}/convexity"),
            &format!(
                "min_margin={} strictly_convex={}",
                g17(convexity.min_margin),
                convexity.strictly_convex
            ),
        );

        // Shooting over sampled boundary pairs.
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(exp.seed ^ (0xface + ri as u64));
        let points = spec.domain().boundary_samples(2 * exp.pairs, &mut rng);
        let mut all_unique = true;
        let mut any_failed = false;
        for (pi, pair) in points.chunks(2).take(exp.pairs).enumerate() {
            let (x, y) = (&pair[0], &pair[1]);
            match shoot_connect(&system, k, x, y, &ShootOptions::default()) {
                Ok(rep) => {
                    let (count, sol) = match &rep.outcome {
                        ShootOutcome::Unique(s) => (1usize, s.clone()),
                        ShootOutcome::NotSimple(sols) => {
                            all_unique = false;
                            (sols.len(), sols[0].clone())
                        }
                    };
                    shots.row(&[
                        g17(rho),
                        pi.to_string(),
                        g17(x[0]),
                        g17(x[1]),
                        g17(y[0]),
                        g17(y[1]),
                        count.to_string(),
                        g17(sol.duration),
                        g17(sol.condition),
                    ]);
                }
                Err(e) => {
                    any_failed = true;
                    shots.row(&[
                        g17(rho),
                        pi.to_string(),
                        g17(x[0]),
                        g17(x[1]),
                        g17(y[0]),
                        g17(y[1]),
                        "0".into(),
                        format!("error:{e}"),
                        String::new(),
                    ]);
                }
            }
        }
        let simple = convexity.strictly_convex && all_unique && !any_failed;
        match exp.expect_simple {
            Some(expected) => summary.assert(
                &format!("simplicity-audit/rho{ri}/verdict"),
                simple == expected,
                &format!("simple={simple} expected={expected}"),
            ),
            None => summary.info(
                &format!("simplicity-audit/rho{ri}/verdict"),
                &format!("simple={simple}"),
            ),
        }
    }
    margins.finish()?;
    shots.finish()?;
    Ok(())
}

fn lightlike_batch(
    spec: &ManifoldSpec,
    config: &Config,
    out_dir: &Path,
    tol: Tolerances,
    summary: &mut Summary,
) -> anyhow::Result<()> {
    let exp = &config.experiment;
    let magnetic = MagneticSystem::new(spec).context("lightlike batches need lambda = 1")?;
    let rho = -1.0;
    let m = 0.0;
    let entries = batch_entries(spec, rho, m, exp.samples, exp.seed)?;

    struct Row {
        rec: ScatteringRecord,
        residual: f64,
        speed_drift: f64,
    }
    let rows: Vec<anyhow::Result<Row>> = entries
        .par_iter()
        .map(|entry| {
            let rec = scattering_rho_m(spec, rho, m, entry, tol)?;
            let state = ssmp::scattering::reconstruct_inward(spec, entry, rho, m)?;
            let traj = integrate_geodesic(spec, &state, None, tol)?;
            let projected = null_project(&traj)?;
            let mut residual = 0.0f64;
            let mut drift = 0.0f64;
            for i in 0..=24 {
                let s = projected.s_end() * i as f64 / 24.0;
                let st = projected.eval(s);
                drift = drift.max((spec.norm_h(st.x.as_slice(), &st.vx) - 1.0).abs());
                if i > 0 && i < 24 {
                    let (xd, vd) = mp_rhs(magnetic.as_mp(), &st)?;
                    let (xd_i, vd_i) = projected.eval_derivative(s);
                    residual = residual.max((xd - xd_i).norm()).max((vd - vd_i).norm());
                }
            }
            Ok(Row { rec, residual, speed_drift: drift })
        })
        .collect();

    let mut records = CsvTable::new(
        out_dir,
        "records_light.csv",
        &record_header(spec.dim()).iter().map(|s| s.as_str()).collect::<Vec<_>>(),
    );
    let mut diag = CsvTable::new(
        out_dir,
        "lightlike_diagnostics.csv",
        &["index", "magnetic_residual", "speed_drift"],
    );
    let mut max_residual = 0.0f64;
    let mut max_drift = 0.0f64;
    let mut errors = 0usize;
    for (i, row) in rows.iter().enumerate() {
        match row {
            Ok(r) => {
                records.row(&record_row(i, &r.rec, "null"));
                diag.row_values(&i.to_string(), &[r.residual, r.speed_drift]);
                max_residual = max_residual.max(r.residual);
                max_drift = max_drift.max(r.speed_drift);
            }
            Err(e) => {
                errors += 1;
                summary.info(&format!("lightlike-batch/entry{i}"), &format!("skipped: {e}"));
            }
        }
    }
    records.finish()?;
    diag.finish()?;
    summary.assert_le("lightlike-batch/magnetic_residual", max_residual, 1e-6);
    summary.assert_le("lightlike-batch/speed_drift", max_drift, 1e-8);
    summary.assert(
        "lightlike-batch/all_entries_computed",
        errors == 0,
        &format!("errors={errors}"),
    );

    let samples = boundary_energy_samples(magnetic.as_mp(), 0.0, 32, 2, exp.seed)?;
    let conv = null_convexity(spec, &samples)?;
    if conv.applicable {
        summary.assert(
            "lightlike-batch/convexity_bridge",
            conv.signs_agree && conv.max_deviation <= 1e-8,
            &format!("max_deviation={}", g17(conv.max_deviation)),
        );
    } else {
        summary.info(
            "lightlike-batch/convexity_bridge",
            &format!(
                "not applicable (omega_tangential={} sym_derivative={})",
                g17(conv.omega_tangential_sup),
                g17(conv.sym_derivative_sup)
            ),
        );
    }
    Ok(())
}

fn conservation_sweep(
    spec: &ManifoldSpec,
    config: &Config,
    out_dir: &Path,
    tol: Tolerances,
    summary: &mut Summary,
) -> anyhow::Result<()> {
    let exp = &config.experiment;
    let m = exp.mass;
    let mut table = CsvTable::new(
        out_dir,
        "conservation.csv",
        &["rho", "index", "J0", "H0", "max_dJ", "max_dH", "rel_dJ", "rel_dH"],
    );
    for (ri, &rho) in exp.rho.iter().enumerate() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(exp.seed ^ ri as u64);
        // Interior points with admissible speeds at this (ρ, m).
        let mut states = Vec::with_capacity(exp.samples);
        let mut guard = 0;
        while states.len() < exp.samples {
            guard += 1;
            if guard > 100 * exp.samples {
                bail!("could not sample enough admissible interior states");
            }
            let x = spec
                .domain()
                .interior_samples(1, &mut rng)
                .pop()
                .expect("interior sample");
            let dir = DVector::from_fn(spec.dim(), |_, _| rng.gen_range(-1.0..1.0f64));
            if dir.norm() < 1e-9 {
                continue;
            }
            match momentum_mass_state(spec, 0.0, x, &dir, rho, m) {
                Ok(state) => states.push(state),
                Err(_) => continue,
            }
        }
        let results: Vec<_> = states
            .par_iter()
            .map(|state| integrate_geodesic(spec, state, Some(exp.horizon), tol))
            .collect();
        let mut max_rel_dj = 0.0f64;
        let mut max_rel_dh = 0.0f64;
        for (i, res) in results.iter().enumerate() {
            let traj = res.as_ref().map_err(|e| anyhow::anyhow!("state {i}: {e}"))?;
            let (j0, h0) = (traj.drift_log[0].1, traj.drift_log[0].2);
            let dj = traj.max_j_drift();
            let dh = traj.max_h_drift();
            let rel_dj = dj / (1.0 + j0.abs());
            let rel_dh = dh / (1.0 + h0.abs());
            max_rel_dj = max_rel_dj.max(rel_dj);
            max_rel_dh = max_rel_dh.max(rel_dh);
            table.row_values(&g17(rho), &[i as f64, j0, h0, dj, dh, rel_dj, rel_dh]);
        }
        summary.assert_le(&format!("conservation-sweep/rho{ri}/J_drift"), max_rel_dj, 1e-8);
        summary.assert_le(&format!("conservation-sweep/rho{ri}/H_drift"), max_rel_dh, 1e-8);
    }
    table.finish()?;
    Ok(())
}
