use std::path::Path;

use anyhow::{bail, Context};
use nls_msol::construct::{
    build_base_multisoliton, build_family, interaction_scales, recover_amplitude, ModeSet, ShootingResult,
};
use nls_msol::diagnostics::{cutoffs, dh_dt_check, energy_report, fit_rate, omega_source, transport_residual};
use nls_msol::evolve::{conservation_drift, evolve};
use nls_msol::field::{norm_h1, norm_l2, spectral_derivative, write_dump};
use nls_msol::linspec::{compute_eigenmode, inverse_iteration, EigenConfig};
use nls_msol::soliton::{ground_state, soliton_sum};
use nls_msol::{Complex64, ComplexField, Grid, LinearizedSpectrum};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::output::{read_trajectory, Constants, Output};

/// Values at or below this are treated as rounding noise when fitting rates.
const FIT_FLOOR: f64 = 1e-9;

pub struct RunContext<'a> {
    pub cfg: &'a ExperimentConfig,
    pub spectrum: LinearizedSpectrum,
    pub out: Output,
    pub verbose: bool,
}

impl RunContext<'_> {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Solves the unit eigenproblem and derives the run constants.
pub fn prepare(cfg: &ExperimentConfig) -> anyhow::Result<(LinearizedSpectrum, Constants)> {
    let spectrum = compute_eigenmode(cfg.exponent()?, &cfg.eigen_grid.grid()?, 1e-9)?;
    let scales = interaction_scales(&cfg.family()?, &spectrum)?;
    let constants = Constants { e0: spectrum.e0, eta0: spectrum.eta0, sigma0: scales.sigma0, gamma: scales.gamma };
    Ok((spectrum, constants))
}

pub fn ground_state_cmd(ctx: &RunContext) -> anyhow::Result<()> {
    let p = ctx.cfg.exponent()?;
    let grid = ctx.cfg.grid.grid()?;
    let mut entries = Vec::new();
    for (i, &c) in ctx.cfg.c_values.iter().enumerate() {
        let q = ground_state(p, c, &grid)?;
        let qxx = spectral_derivative(&q, 2)?;
        let residual = q
            .values()
            .iter()
            .zip(qxx.values())
            .map(|(q, d)| (d.re + q.re.powf(p.get()) - c * q.re).abs())
            .fold(0.0, f64::max);
        let file = format!("ground_state_{i}.bin");
        write_dump(&ctx.out.path(&file), &q, 0.0)?;
        ctx.log(format!("c = {c}: residual {residual:.2e}"));
        entries.push(json!({
            "c": c,
            "file": file,
            "peak": q.max_abs(),
            "mass": norm_l2(&q).powi(2),
            "ode_residual": residual,
        }));
    }
    ctx.out.manifest("ground_state.json", "ground-state", json!({ "p": p.get(), "entries": entries }))
}

pub fn spectrum_cmd(ctx: &RunContext) -> anyhow::Result<()> {
    let spec = &ctx.spectrum;
    write_dump(&ctx.out.path("eigenmode.bin"), &spec.y_plus(), 0.0)?;
    let p = ctx.cfg.exponent()?;
    let base = ctx.cfg.eigen_grid;
    let rows: Vec<anyhow::Result<Vec<f64>>> = ctx
        .cfg
        .c_values
        .par_iter()
        .map(|&c| {
            let e = if c == 1.0 {
                spec.e0
            } else {
                // keep the rescaled profile resolved and inside the box
                let grid = Grid::new(base.length / c.sqrt().min(1.0), base.points)?;
                inverse_iteration(p, c, &grid, &EigenConfig::default())?.e
            };
            let predicted = c * spec.e0;
            Ok(vec![c, e, predicted, e / predicted])
        })
        .collect();
    let rows = rows.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    let header = ["c", "e_measured", "e_scaled", "ratio"].map(String::from);
    ctx.out.csv("eigen_scaling.csv", &header, rows.iter().cloned())?;
    ctx.out.manifest(
        "spectrum.json",
        "spectrum",
        json!({
            "e0": spec.e0,
            "eta0": spec.eta0,
            "residual": spec.residual,
            "eigen_grid": ctx.cfg.eigen_grid,
            "mode_file": "eigenmode.bin",
            "scaling_table": "eigen_scaling.csv",
        }),
    )
}

fn perturbed_data(ctx: &RunContext, t: f64, grid: &Grid) -> anyhow::Result<ComplexField> {
    let family = ctx.cfg.family()?;
    let mut u = soliton_sum(t, &family, grid)?;
    let amps = ctx.cfg.amplitudes();
    if amps.iter().any(|a| *a != 0.0) {
        let modes = ModeSet::new(&family, &ctx.spectrum, grid)?;
        for (j, a) in amps.iter().enumerate() {
            u.axpy(Complex64::new(a * (-modes.rate(j) * t).exp(), 0.0), &modes.plus(j, t))?;
        }
    }
    Ok(u)
}

pub fn evolve_cmd(ctx: &RunContext) -> anyhow::Result<()> {
    let grid = ctx.cfg.grid.grid()?;
    let (t0, sn) = (ctx.cfg.times.t0, ctx.cfg.times.sn);
    let u0 = perturbed_data(ctx, t0, &grid)?;
    let traj = evolve(&u0, t0, sn, ctx.cfg.p, &ctx.cfg.integrator)?;
    ctx.log(format!("evolved {} snapshots", traj.len()));
    ctx.out.trajectory("evolve", &traj)?;
    let header = ["t", "mass", "energy", "momentum"].map(String::from);
    let rows = traj.times.iter().zip(&traj.conserved).map(|(t, c)| vec![*t, c.mass, c.energy, c.momentum]);
    ctx.out.csv("conserved.csv", &header, rows)?;
    let drift = conservation_drift(&traj);
    ctx.out.manifest(
        "evolve.json",
        "evolve",
        json!({ "t0": t0, "Sn": sn, "snapshots": traj.len(), "trajectory": "evolve", "drift": drift }),
    )
}

fn series_rows(res: &ShootingResult) -> (Vec<String>, Vec<Vec<f64>>) {
    let n = res.alpha_series.alpha_plus.len();
    let mut header = vec!["t".to_string(), "z_h1".to_string()];
    header.extend((1..=n).map(|k| format!("alpha_plus_{k}")));
    header.extend((1..=n).map(|k| format!("alpha_minus_{k}")));
    let rows = (0..res.residual_times.len())
        .map(|i| {
            let mut row = vec![res.residual_times[i], res.residual_h1[i]];
            row.extend(res.alpha_series.alpha_plus.iter().map(|a| a[i]));
            row.extend(res.alpha_series.alpha_minus.iter().map(|a| a[i]));
            row
        })
        .collect();
    (header, rows)
}

fn summary(res: &ShootingResult) -> Value {
    json!({
        "target": res.target,
        "a": res.a,
        "b": res.b,
        "stable_final": res.stable_final,
        "exit_time": res.exit_time,
        "theta_margin": res.theta_margin,
        "iterations": res.iterations(),
        "max_z_h1": res.residual_h1.iter().copied().fold(0.0, f64::max),
        "stages": res.stages,
    })
}

pub fn construct_cmd(ctx: &RunContext) -> anyhow::Result<()> {
    let cfg = ctx.cfg;
    let family = cfg.family()?;
    let grid = cfg.grid.grid()?;
    let modes = ModeSet::new(&family, &ctx.spectrum, &grid)?;
    let scales = interaction_scales(&family, &ctx.spectrum)?;
    let (t0, sn, schedule) = (cfg.times.t0, cfg.times.sn, cfg.schedule());
    ctx.log("solving for the base multi-soliton");
    let base = build_base_multisoliton(&family, &modes, scales, t0, sn, &schedule, cfg.integrator, cfg.shooting)?;
    ctx.out.trajectory("base", &base.trajectory)?;
    let (header, rows) = series_rows(&base);
    ctx.out.csv("base_series.csv", &header, rows)?;

    ctx.log("solving the perturbed family");
    let amps = cfg.amplitudes();
    let stages =
        build_family(&family, &modes, scales, &base.trajectory, &amps, t0, sn, &schedule, cfg.integrator, cfg.shooting)?;
    let mut stage_docs = Vec::new();
    let mut previous = &base.trajectory;
    for (n, res) in stages.iter().enumerate() {
        let (header, rows) = series_rows(res);
        let file = format!("stage_{}_series.csv", n + 1);
        ctx.out.csv(&file, &header, rows)?;
        let mut doc = summary(res);
        if let nls_msol::Target::Perturb { j, amplitude } = res.target {
            // the added tail leaves the rounding floor after about ln(1e5)/e_j
            let lo = (t0 + 1.0).min(sn);
            let hi = (lo + 1e5f64.ln() / modes.rate(j)).min(sn);
            doc["recovered"] = match recover_amplitude(&res.trajectory, previous, j, &modes, (lo, hi)) {
                Ok(fit) => json!({ "window": [lo, hi], "fit": fit }),
                Err(e) => json!({ "window": [lo, hi], "error": e.to_string() }),
            };
            doc["amplitude"] = json!(amplitude);
        }
        doc["series"] = json!(file);
        stage_docs.push(doc);
        previous = &res.trajectory;
    }
    if let Some(last) = stages.last() {
        ctx.out.trajectory("family", &last.trajectory)?;
    }
    ctx.out.manifest(
        "construct.json",
        "construct",
        json!({
            "t0": t0,
            "Sn": sn,
            "schedule": schedule,
            "rates": modes.rates(),
            "base": summary(&base),
            "base_series": "base_series.csv",
            "stages": stage_docs,
            "trajectories": { "base": "base", "family": if stages.is_empty() { Value::Null } else { json!("family") } },
        }),
    )
}

struct SnapshotDiagnostics {
    t: f64,
    z_h1: f64,
    alpha_plus: Vec<f64>,
    alpha_minus: Vec<f64>,
    h: f64,
    hform_z: f64,
    hform_ztilde: f64,
    beta: Vec<f64>,
    gamma_par: Vec<f64>,
    omega_h1: f64,
    omega_gap: f64,
    transport: f64,
}

/// Rate fitted over the samples above the rounding floor, or `null` when fewer than three remain.
fn fit_above_floor(ts: &[f64], vs: impl Iterator<Item = f64>) -> Value {
    let (t, v): (Vec<f64>, Vec<f64>) = ts.iter().copied().zip(vs.map(f64::abs)).filter(|(_, v)| *v > FIT_FLOOR).unzip();
    if t.len() < 3 {
        return Value::Null;
    }
    match fit_rate(&t, &v) {
        Ok(fit) => json!({ "rate": fit.rate, "amplitude": fit.amplitude, "fit_residual": fit.fit_residual, "samples": t.len() }),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

pub fn diagnose_cmd(ctx: &RunContext, u_dir: &Path, phi_dir: &Path, perturb: Option<(usize, f64)>) -> anyhow::Result<()> {
    let p = ctx.cfg.p;
    let family = ctx.cfg.family()?;
    let u = read_trajectory(u_dir, p).with_context(|| format!("loading {}", u_dir.display()))?;
    let phi = read_trajectory(phi_dir, p).with_context(|| format!("loading {}", phi_dir.display()))?;
    let grid = *u.snapshots[0].grid();
    u.snapshots[0].same_grid(&phi.snapshots[0])?;
    if let Some((j, _)) = perturb {
        if j >= family.len() {
            bail!("perturbed soliton {j} does not exist");
        }
    }
    let modes = ModeSet::new(&family, &ctx.spectrum, &grid)?;
    let n = family.len();
    let rows: Vec<anyhow::Result<SnapshotDiagnostics>> = (0..u.len())
        .into_par_iter()
        .map(|i| {
            let t = u.times[i];
            let k = phi.index_of(t, 1e-9).with_context(|| format!("reference has no snapshot at t = {t}"))?;
            let (ui, fi) = (&u.snapshots[i], &phi.snapshots[k]);
            ui.same_grid(fi)?;
            let rj = match perturb {
                Some((j, a)) => modes.plus(j, t).scale(Complex64::new(a * (-modes.rate(j) * t).exp(), 0.0)),
                None => ComplexField::zeros(grid),
            };
            let z = &(ui - fi) - &rj;
            let at = modes.at(t);
            let energy = energy_report(t, ui, fi, &rj, &family)?;
            let (omega_h1, omega_gap) = match perturb {
                Some((j, a)) => {
                    let src = omega_source(t, fi, &family, &modes, j, a)?;
                    (src.omega_h1, src.form_gap)
                }
                None => (0.0, 0.0),
            };
            Ok(SnapshotDiagnostics {
                t,
                z_h1: norm_h1(&z),
                alpha_plus: at.alpha_plus(&z)?,
                alpha_minus: at.alpha_minus(&z)?,
                h: energy.h,
                hform_z: energy.hform_z,
                hform_ztilde: energy.hform_ztilde,
                beta: energy.beta,
                gamma_par: energy.gamma_par,
                omega_h1,
                omega_gap,
                transport: transport_residual(fi, &cutoffs(t, &family, &grid)?, p)?,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    ctx.log(format!("diagnosed {} snapshots", rows.len()));

    let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let names = |prefix: &'static str| (1..=n).map(move |k| format!("{prefix}_{k}"));
    let mut header = vec!["t".to_string(), "z_h1".to_string()];
    header.extend(names("alpha_plus").chain(names("alpha_minus")));
    ctx.out.csv(
        "projections.csv",
        &header,
        rows.iter().map(|r| [vec![r.t, r.z_h1], r.alpha_plus.clone(), r.alpha_minus.clone()].concat()),
    )?;
    let mut header = ["t", "H", "form_z", "form_ztilde"].map(String::from).to_vec();
    header.extend(names("beta").chain(names("gamma")));
    ctx.out.csv(
        "energy.csv",
        &header,
        rows.iter().map(|r| [vec![r.t, r.h, r.hform_z, r.hform_ztilde], r.beta.clone(), r.gamma_par.clone()].concat()),
    )?;
    let header = ["t", "omega_h1", "omega_form_gap"].map(String::from);
    ctx.out.csv("source.csv", &header, rows.iter().map(|r| vec![r.t, r.omega_h1, r.omega_gap]))?;
    let header = ["t", "transport_hminus1"].map(String::from);
    ctx.out.csv("transport.csv", &header, rows.iter().map(|r| vec![r.t, r.transport]))?;

    let tube_rate = perturb.map_or(0.0, |(j, _)| modes.rate(j));
    let scales = interaction_scales(&family, &ctx.spectrum)?;
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let zs: Vec<f64> = rows.iter().map(|r| r.z_h1).collect();
    let dh = if rows.len() >= 3 {
        dh_dt_check(&ts, &hs, &zs, tube_rate, scales.gamma).ok().map(|e| e.max_ratio)
    } else {
        None
    };
    let fits = json!({
        "z_h1": fit_above_floor(&ts, zs.iter().copied()),
        "alpha_plus": (0..n).map(|k| fit_above_floor(&ts, rows.iter().map(|r| r.alpha_plus[k]))).collect::<Vec<_>>(),
        "alpha_minus": (0..n).map(|k| fit_above_floor(&ts, rows.iter().map(|r| r.alpha_minus[k]))).collect::<Vec<_>>(),
        "sqrt_abs_H": fit_above_floor(&ts, hs.iter().map(|h| h.abs().sqrt())),
        "omega_h1": fit_above_floor(&ts, rows.iter().map(|r| r.omega_h1)),
        "transport": fit_above_floor(&ts, rows.iter().map(|r| r.transport)),
    });
    ctx.out.manifest(
        "diagnose.json",
        "diagnose",
        json!({
            "u": u_dir,
            "phi": phi_dir,
            "perturbation": perturb.map(|(j, a)| json!({ "j": j, "amplitude": a })),
            "snapshots": rows.len(),
            "rates": fits,
            "max_omega_form_gap": rows.iter().map(|r| r.omega_gap).fold(0.0, f64::max),
            "dh_dt_majorant_ratio": dh,
            "files": ["projections.csv", "energy.csv", "source.csv", "transport.csv"],
        }),
    )
}
