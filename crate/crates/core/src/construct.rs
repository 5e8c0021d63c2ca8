//! Backward shooting construction of the base multi-soliton and of its
//! perturbations along the unstable modes, and composition into families.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{fit_rate, projection_series, ProjectionSeries};
use crate::error::{Error, Result};
use crate::evolve::{IntegratorConfig, Stepper, Trajectory};
use crate::field::{inner_imag, norm_gradient, norm_h1, ComplexField, Grid};
use crate::linspec::{scaled_mode, LinearizedSpectrum};
use crate::soliton::{soliton_sum, SolitonFamily, SolitonParams};

/// Largest backward amplification `e^{e_max ΔS}` accepted for one continuation step.
pub const CONDITIONING_BUDGET: f64 = 1e8;
/// Amplification allowed across one shooting segment.
const SEGMENT_BUDGET: f64 = 100.0;
/// Amplification allowed between a stable-set pin and `t0`.
const PIN_BUDGET: f64 = 1e4;
/// Relative slack when testing the open tube conditions.
const TUBE_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionScales {
    pub sigma0: f64,
    pub gamma: f64,
}

pub fn interaction_scales(family: &SolitonFamily, spec: &LinearizedSpectrum) -> Result<InteractionScales> {
    scales_from_constants(family, spec.eta0, spec.e0)
}

/// `σ₀ = min{η₀√c_min, e₀^{2/3} c_min, c_min, gaps of v}` and `γ = σ₀^{3/2}/10⁶`.
pub fn scales_from_constants(family: &SolitonFamily, eta0: f64, e0: f64) -> Result<InteractionScales> {
    family.validate()?;
    if !(eta0.is_finite() && eta0 > 0.0 && e0.is_finite() && e0 > 0.0) {
        return Err(Error::param("spectrum", "e0 and eta0 must be positive"));
    }
    let cmin = family.c_min();
    let sigma0 = family
        .members
        .windows(2)
        .map(|w| w[1].v - w[0].v)
        .fold((eta0 * cmin.sqrt()).min(e0.powf(2.0 / 3.0) * cmin).min(cmin), f64::min);
    Ok(InteractionScales { sigma0, gamma: sigma0.powf(1.5) / 1e6 })
}

/// The eigenmodes `Y_k^±(t,x) = Y_{c_k}^±(λ_k) e^{iθ_k}` of every soliton of a family.
#[derive(Clone, Debug)]
pub struct ModeSet {
    grid: Grid,
    members: Vec<SolitonParams>,
    rates: Vec<f64>,
    profiles: Vec<ComplexField>,
}

impl ModeSet {
    pub fn new(family: &SolitonFamily, spec: &LinearizedSpectrum, grid: &Grid) -> Result<Self> {
        family.validate()?;
        if spec.p != family.p {
            return Err(Error::param("p", "spectrum and family use different exponents"));
        }
        let modes = family.members.iter().map(|m| scaled_mode(spec, m.c, grid)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: *grid,
            members: family.members.clone(),
            rates: modes.iter().map(|m| m.e_c).collect(),
            profiles: modes.into_iter().map(|m| m.yc_plus).collect(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `e_k` for soliton `k`.
    pub fn rate(&self, k: usize) -> f64 {
        self.rates[k]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// `Y_{c_k}^+` centred at the origin, without carrier.
    pub fn profile(&self, k: usize) -> &ComplexField {
        &self.profiles[k]
    }

    pub fn plus(&self, k: usize, t: f64) -> ComplexField {
        self.moving(k, t, false)
    }

    pub fn minus(&self, k: usize, t: f64) -> ComplexField {
        self.moving(k, t, true)
    }

    fn moving(&self, k: usize, t: f64, conjugate: bool) -> ComplexField {
        let m = &self.members[k];
        let shift = m.center(t);
        let moved = self.profiles[k].fourier_multiply(|q| Complex64::from_polar(1.0, -q * shift));
        let mut out = if conjugate { moved.conj() } else { moved };
        for (v, c) in out.values_mut().iter_mut().zip(m.carrier(t, &self.grid)) {
            *v *= c;
        }
        out
    }

    pub fn at(&self, t: f64) -> ModesAt {
        ModesAt {
            t,
            plus: (0..self.len()).map(|k| self.plus(k, t)).collect(),
            minus: (0..self.len()).map(|k| self.minus(k, t)).collect(),
        }
    }
}

/// All modes frozen at one time.
#[derive(Clone, Debug)]
pub struct ModesAt {
    pub t: f64,
    pub plus: Vec<ComplexField>,
    pub minus: Vec<ComplexField>,
}

impl ModesAt {
    /// `α_k^-(z) = Im∫ z̄ Y_k^-` for every `k`.
    pub fn alpha_minus(&self, z: &ComplexField) -> Result<Vec<f64>> {
        self.minus.iter().map(|y| inner_imag(z, y)).collect()
    }

    pub fn alpha_plus(&self, z: &ComplexField) -> Result<Vec<f64>> {
        self.plus.iter().map(|y| inner_imag(z, y)).collect()
    }

    /// `Φ[k][l] = α_k^-(Y_l^+)` restricted to `set`.
    pub fn gram(&self, set: &[usize]) -> Result<DMatrix<f64>> {
        let mut g = DMatrix::zeros(set.len(), set.len());
        for (r, &k) in set.iter().enumerate() {
            for (c, &l) in set.iter().enumerate() {
                g[(r, c)] = inner_imag(&self.plus[l], &self.minus[k])?;
            }
        }
        Ok(g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Target {
    /// The multi-soliton itself, shot around the soliton sum.
    Base,
    /// Soliton `j` (0-based) perturbed by `A e^{-e_j t} Y_j^+`.
    Perturb { j: usize, amplitude: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootingConfig {
    /// Absolute tolerance on the matching and pinning equations.
    pub newton_tol: f64,
    pub max_iter: usize,
    /// Absolute floor of the finite-difference increment.
    pub fd_increment: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self { newton_tol: 1e-10, max_iter: 20, fd_increment: 1e-8 }
    }
}

impl ShootingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol.is_finite() && self.newton_tol > 0.0) {
            return Err(Error::param("newton_tol", "must be positive"));
        }
        if !(self.fd_increment.is_finite() && self.fd_increment > 0.0) {
            return Err(Error::param("fd_increment", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ShootingProblem<'a> {
    pub family: &'a SolitonFamily,
    pub modes: &'a ModeSet,
    pub scales: InteractionScales,
    pub target: Target,
    pub t0: f64,
    pub sn: f64,
    /// Increasing anchor times ending at `sn`; empty means a single window.
    pub schedule: Vec<f64>,
    /// Trajectory being perturbed; unused for [`Target::Base`].
    pub phi: Option<&'a Trajectory>,
    pub integrator: IntegratorConfig,
    pub shooting: ShootingConfig,
}

impl<'a> ShootingProblem<'a> {
    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        self.integrator.validate()?;
        self.shooting.validate()?;
        if self.modes.len() != self.family.len() {
            return Err(Error::param("modes", "mode set does not match the family"));
        }
        if !(self.t0.is_finite() && self.t0 > 0.0 && self.sn.is_finite() && self.sn > self.t0) {
            return Err(Error::param("times", format!("need 0 < t0 < Sn, got t0 = {}, Sn = {}", self.t0, self.sn)));
        }
        if let Target::Perturb { j, amplitude } = self.target {
            if j >= self.family.len() {
                return Err(Error::param("j", format!("index {j} out of range")));
            }
            if !amplitude.is_finite() {
                return Err(Error::param("amplitude", "must be finite"));
            }
            if self.phi.is_none() {
                return Err(Error::param("phi", "a perturbation needs the trajectory it perturbs"));
            }
        }
        if !self.schedule.is_empty() {
            let last = *self.schedule.last().unwrap();
            if (last - self.sn).abs() > 1e-12 {
                return Err(Error::param("schedule", "must end at Sn"));
            }
            if self.schedule.windows(2).any(|w| w[1] <= w[0]) || self.schedule[0] <= self.t0 {
                return Err(Error::param("schedule", "must increase strictly from above t0"));
            }
        }
        self.snapshot_count(self.sn).map(|_| ())
    }

    /// `K`: solitons whose unstable directions are shot.
    pub fn unstable_set(&self) -> Vec<usize> {
        match self.target {
            Target::Base => (0..self.family.len()).collect(),
            Target::Perturb { j, .. } => {
                let cj = self.family.members[j].c;
                (0..self.family.len()).filter(|&k| self.family.members[k].c > cj).collect()
            }
        }
    }

    /// `J`: the complement of `K`.
    pub fn stable_set(&self) -> Vec<usize> {
        let k = self.unstable_set();
        (0..self.family.len()).filter(|i| !k.contains(i)).collect()
    }

    pub fn k0(&self) -> usize {
        self.unstable_set().len()
    }

    /// Exponent of the tube: `e_j`, or zero for the base problem.
    pub fn tube_rate(&self) -> f64 {
        match self.target {
            Target::Base => 0.0,
            Target::Perturb { j, .. } => self.modes.rate(j),
        }
    }

    pub fn e_max(&self) -> f64 {
        self.modes.rates().iter().copied().fold(0.0, f64::max)
    }

    /// `θ = 2(e_min - e_j - 2γ)` with `e_min` over `K`; `None` when `K` is empty.
    pub fn theta_margin(&self) -> Option<f64> {
        let k = self.unstable_set();
        let emin = k.iter().map(|&i| self.modes.rate(i)).fold(f64::INFINITY, f64::min);
        (!k.is_empty()).then(|| 2.0 * (emin - self.tube_rate() - 2.0 * self.scales.gamma))
    }

    /// Longest window a single backward integration may span.
    pub fn conditioning_cap(&self) -> f64 {
        CONDITIONING_BUDGET.ln() / self.e_max()
    }

    fn snapshot_spacing(&self) -> f64 {
        self.integrator.dt * self.integrator.stride as f64
    }

    fn snapshot_count(&self, s: f64) -> Result<usize> {
        let d = self.snapshot_spacing();
        let n = (s - self.t0) / d;
        let r = n.round();
        if r < 1.0 || (n - r).abs() > 1e-6 {
            return Err(Error::TimeMismatch(format!(
                "window {} is not a multiple of the snapshot spacing {d}",
                s - self.t0
            )));
        }
        Ok(r as usize)
    }

    fn snapshot_time(&self, idx: usize) -> f64 {
        self.t0 + idx as f64 * self.snapshot_spacing()
    }

    /// `r_j(t) = A e^{-e_j t} Y_j^+(t)`, or `None` for the base problem.
    pub fn amplitude_term(&self, t: f64) -> Option<ComplexField> {
        match self.target {
            Target::Base => None,
            Target::Perturb { j, amplitude } => {
                Some(self.modes.plus(j, t).scale(Complex64::new(amplitude * (-self.modes.rate(j) * t).exp(), 0.0)))
            }
        }
    }

    /// The field the perturbation `z` is measured from: `R(t)` for the base
    /// problem, `φ(t) + r_j(t)` otherwise.
    pub fn reference(&self, t: f64) -> Result<ComplexField> {
        match self.target {
            Target::Base => soliton_sum(t, self.family, self.modes.grid()),
            Target::Perturb { .. } => {
                let mut out = self.phi_at(t)?.clone();
                if let Some(r) = self.amplitude_term(t) {
                    out.axpy(Complex64::new(1.0, 0.0), &r)?;
                }
                Ok(out)
            }
        }
    }

    /// The unperturbed trajectory at time `t`.
    pub fn phi_at(&self, t: f64) -> Result<&'a ComplexField> {
        let phi = self.phi.ok_or_else(|| Error::param("phi", "no reference trajectory"))?;
        let i = phi
            .index_of(t, 1e-9)
            .ok_or_else(|| Error::TimeMismatch(format!("reference trajectory has no snapshot at t = {t}")))?;
        if *phi.snapshots[i].grid() != *self.modes.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(&phi.snapshots[i])
    }

    fn at_window(&self, sn: f64) -> ShootingProblem<'a> {
        ShootingProblem { sn, schedule: Vec::new(), ..self.clone() }
    }
}

/// Final datum `u(Sₙ) = ref(Sₙ) + Σ_K b_k Y_k^+(Sₙ)`.
pub fn final_data(prob: &ShootingProblem, b: &[f64]) -> Result<ComplexField> {
    let k = prob.unstable_set();
    if b.len() != k.len() {
        return Err(Error::param("b", format!("expected {} coefficients, got {}", k.len(), b.len())));
    }
    let mut u = prob.reference(prob.sn)?;
    for (&bk, &i) in b.iter().zip(&k) {
        u.axpy(Complex64::new(bk, 0.0), &prob.modes.plus(i, prob.sn))?;
    }
    Ok(u)
}

/// `Φ[k][l] = Im∫ conj(Y_l^+(Sₙ)) Y_k^-(Sₙ)` over `K × K`.
pub fn modulation_matrix(prob: &ShootingProblem) -> Result<DMatrix<f64>> {
    let k = prob.unstable_set();
    let phi = prob.modes.at(prob.sn).gram(&k)?;
    if !k.is_empty() {
        let deviation = (&phi - DMatrix::identity(k.len(), k.len())).norm();
        if deviation >= 0.5 {
            return Err(Error::IllConditionedModulation { deviation });
        }
    }
    Ok(phi)
}

/// `b = Φ⁻¹a`, checked against the quadrature of the assembled datum.
pub fn invert_final_data(prob: &ShootingProblem, a: &[f64]) -> Result<Vec<f64>> {
    let phi = modulation_matrix(prob)?;
    if a.len() != phi.nrows() {
        return Err(Error::param("a", format!("expected {} targets, got {}", phi.nrows(), a.len())));
    }
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let b = phi
        .lu()
        .solve(&DVector::from_column_slice(a))
        .ok_or_else(|| Error::IllConditionedModulation { deviation: f64::INFINITY })?;
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if b.norm() > 2.0 * na * (1.0 + 1e-12) {
        return Err(Error::IllConditionedModulation { deviation: b.norm() / na.max(f64::MIN_POSITIVE) });
    }
    let z = &final_data(prob, b.as_slice())? - &prob.reference(prob.sn)?;
    let modes = prob.modes.at(prob.sn);
    for (&i, &ai) in prob.unstable_set().iter().zip(a) {
        let got = inner_imag(&z, &modes.minus[i])?;
        if (got - ai).abs() > 1e-9 * na.max(1.0) {
            return Err(Error::NonConvergence { iterations: 1, detail: format!("alpha_{i}^- = {got:e} after inversion, target {ai:e}") });
        }
    }
    Ok(b.as_slice().to_vec())
}

fn with_threshold(cfg: &IntegratorConfig, u: &ComplexField) -> IntegratorConfig {
    IntegratorConfig { max_gradient: Some(cfg.max_gradient.unwrap_or(1e3 * norm_gradient(u).max(1e-300))), ..*cfg }
}

/// Outcome of one backward integration from a prescribed final datum.
#[derive(Clone, Debug)]
pub struct ExitReport {
    pub time: f64,
    /// Snapshots from `Sₙ` down to the exit time, in decreasing time.
    pub trajectory: Trajectory,
    /// `α_K^-` at the exit time.
    pub alpha_at_exit: Vec<f64>,
}

struct Tube {
    z_rate: f64,
    alpha_rate: f64,
}

impl Tube {
    fn new(prob: &ShootingProblem) -> Self {
        let e = prob.tube_rate();
        Tube { z_rate: e + prob.scales.gamma, alpha_rate: e + 2.0 * prob.scales.gamma }
    }

    fn holds(&self, t: f64, z_h1: f64, alpha_k: &[f64]) -> bool {
        let an = alpha_k.iter().map(|x| x * x).sum::<f64>().sqrt();
        (self.z_rate * t).exp() * z_h1 < 1.0 - TUBE_SLACK && (self.alpha_rate * t).exp() * an < 1.0 - TUBE_SLACK
    }
}

/// Integrates backward from the datum with `α_K^-(Sₙ) = a` and returns the
/// first snapshot time at which either tube condition fails (`t0` if none).
pub fn exit_time(prob: &ShootingProblem, a: &[f64]) -> Result<ExitReport> {
    prob.validate()?;
    let b = invert_final_data(prob, a)?;
    let u_s = final_data(prob, &b)?;
    let cfg = with_threshold(&prob.integrator, &u_s);
    let stepper = Stepper::new(*u_s.grid(), prob.family.p.get(), -prob.integrator.dt, &cfg)?;
    let tube = Tube::new(prob);
    let kset = prob.unstable_set();
    let n = prob.snapshot_count(prob.sn)?;
    let p = prob.family.p.get();
    let mut traj = Trajectory::default();
    let mut u = u_s;
    let mut idx = n;
    loop {
        let t = prob.snapshot_time(idx);
        let z = &u - &prob.reference(t)?;
        let modes = prob.modes.at(t);
        let alpha: Vec<f64> = kset.iter().map(|&k| inner_imag(&z, &modes.minus[k])).collect::<Result<_>>()?;
        traj.push(t, u.clone(), p);
        if !tube.holds(t, norm_h1(&z), &alpha) || idx == 0 {
            return Ok(ExitReport { time: t, trajectory: traj, alpha_at_exit: alpha });
        }
        stepper.advance(&mut u, t, prob.integrator.stride, prob.integrator.stride, |_, _, _| {})?;
        idx -= 1;
    }
}

/// Per-stage record of a continuation run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageReport {
    pub sn: f64,
    pub iterations: usize,
    /// Largest equation residual at acceptance.
    pub residual: f64,
    pub junction_times: Vec<f64>,
    /// `‖α(u(s⁺)) - α(u(s⁻))‖_∞` at each interior junction.
    pub junction_defects: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ShootingResult {
    pub target: Target,
    pub t0: f64,
    pub sn: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `α_J^-` of the perturbation at `Sₙ` (zero in the single-window method).
    pub stable_final: Vec<f64>,
    /// Snapshots on `[t0, Sₙ]` in increasing time.
    pub trajectory: Trajectory,
    pub exit_time: f64,
    pub residual_times: Vec<f64>,
    /// `‖z(t)‖_{H¹}`.
    pub residual_h1: Vec<f64>,
    pub alpha_series: ProjectionSeries,
    pub theta_margin: Option<f64>,
    pub stages: Vec<StageReport>,
}

impl ShootingResult {
    pub fn junction_defects(&self) -> &[f64] {
        self.stages.last().map_or(&[], |s| &s.junction_defects)
    }

    pub fn iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }
}

pub fn solve_shooting(prob: &ShootingProblem) -> Result<ShootingResult> {
    prob.validate()?;
    let cap = prob.conditioning_cap();
    if prob.schedule.is_empty() {
        if prob.sn - prob.t0 > cap * (1.0 + 1e-12) {
            return Err(Error::Conditioning { exponent: prob.e_max() * (prob.sn - prob.t0) });
        }
        return solve_single_window(prob);
    }
    let mut prev = prob.t0;
    for &s in &prob.schedule {
        if s - prev > cap * (1.0 + 1e-12) {
            return Err(Error::Conditioning { exponent: prob.e_max() * (s - prev) });
        }
        prev = s;
    }
    let mut stages = Vec::new();
    let mut previous: Option<Trajectory> = None;
    let mut last = None;
    for &s in &prob.schedule {
        let stage = prob.at_window(s);
        let mut window = Window::new(&stage, true)?;
        let init = window.initial_guess(previous.as_ref())?;
        let out = window.solve(init)?;
        previous = Some(out.trajectory.clone());
        stages.push(out.report.clone());
        last = Some((stage, out));
    }
    let (stage, out) = last.expect("schedule is non-empty");
    finish(&stage, out.trajectory, stages)
}

fn solve_single_window(prob: &ShootingProblem) -> Result<ShootingResult> {
    if prob.k0() == 1 {
        return bisection(prob);
    }
    let mut window = Window::new(prob, false)?;
    let init = window.initial_guess(None)?;
    let out = window.solve(init)?;
    finish(prob, out.trajectory, vec![out.report])
}

/// Sign bisection for one unstable direction over the ball `|a| ≤ e^{-(e_j+2γ)Sₙ}`.
fn bisection(prob: &ShootingProblem) -> Result<ShootingResult> {
    let radius = (-(prob.tube_rate() + 2.0 * prob.scales.gamma) * prob.sn).exp();
    let probe = |a: f64| -> Result<(f64, ExitReport)> {
        let r = exit_time(prob, &[a])?;
        Ok((r.alpha_at_exit[0], r))
    };
    let (lo, hi) = rayon::join(|| probe(-radius), || probe(radius));
    let (mut lo, mut hi) = ((-radius, lo?.0), (radius, hi?.0));
    if lo.1.signum() == hi.1.signum() {
        return Err(Error::NonConvergence {
            iterations: 0,
            detail: format!("no sign change of alpha^- at exit over the ball (values {:e}, {:e})", lo.1, hi.1),
        });
    }
    let tol = prob.shooting.newton_tol;
    let mut iterations = 0;
    let mut best: Option<(f64, ExitReport)> = None;
    while iterations < 200 {
        iterations += 1;
        let mid = 0.5 * (lo.0 + hi.0);
        let (g, rep) = probe(mid)?;
        let done = (rep.time - prob.t0).abs() < 1e-9 && g.abs() <= tol;
        best = Some((mid, rep));
        if done || hi.0 - lo.0 <= 4.0 * f64::EPSILON * radius {
            break;
        }
        if g.signum() == lo.1.signum() {
            lo = (mid, g);
        } else {
            hi = (mid, g);
        }
    }
    let (a, rep) = best.expect("at least one probe");
    if (rep.time - prob.t0).abs() > 1e-9 {
        return Err(Error::NonConvergence {
            iterations,
            detail: format!("bisection stalled at a = {a:e} with exit time {}", rep.time),
        });
    }
    let residual = rep.alpha_at_exit[0].abs();
    let report = StageReport {
        sn: prob.sn,
        iterations,
        residual,
        junction_times: vec![prob.sn, prob.t0],
        junction_defects: Vec::new(),
    };
    finish(prob, rep.trajectory.ascending(), vec![report])
}

fn finish(prob: &ShootingProblem, trajectory: Trajectory, stages: Vec<StageReport>) -> Result<ShootingResult> {
    let series = projection_series(&trajectory, |t| prob.reference(t), prob.modes)?;
    let mut residual_h1 = Vec::with_capacity(trajectory.len());
    for (t, u) in trajectory.times.iter().zip(&trajectory.snapshots) {
        residual_h1.push(norm_h1(&(u - &prob.reference(*t)?)));
    }
    let last = series.times.len() - 1;
    let kset = prob.unstable_set();
    let a: Vec<f64> = kset.iter().map(|&k| series.alpha_minus[k][last]).collect();
    let b = invert_final_data(prob, &a)?;
    let stable_final = prob.stable_set().iter().map(|&k| series.alpha_minus[k][last]).collect();
    let tube = Tube::new(prob);
    let mut exit = prob.t0;
    for n in (0..series.times.len()).rev() {
        let ak: Vec<f64> = kset.iter().map(|&k| series.alpha_minus[k][n]).collect();
        if !tube.holds(series.times[n], residual_h1[n], &ak) {
            exit = series.times[n];
            break;
        }
    }
    Ok(ShootingResult {
        target: prob.target,
        t0: prob.t0,
        sn: prob.sn,
        a,
        b,
        stable_final,
        residual_times: trajectory.times.clone(),
        residual_h1,
        trajectory,
        exit_time: exit,
        alpha_series: series,
        theta_margin: prob.theta_margin(),
        stages,
    })
}

struct WindowOutput {
    trajectory: Trajectory,
    report: StageReport,
}

/// One pass of the segmented backward integration.
struct Sweep {
    /// Uncorrected state arriving at each junction `0..m`.
    arrivals: Vec<ComplexField>,
    /// `α(arrival - ref)` at junctions `1..=m` (index `i` holds junction `i + 1`).
    end_alpha: Vec<Vec<f64>>,
    /// Snapshots in decreasing time.
    trajectory: Trajectory,
}

/// Segmented shooting on `[t0, Sₙ]` for a fixed `Sₙ`.
///
/// Unknowns are the `α^-` coordinates of the corrected state at each junction
/// (only the set `U₀` at `Sₙ`). Equations are continuity of `α^-` across
/// junctions, `α_K^-(t0) = 0`, and `α_k^- = 0` for `k ∈ J` at the latest
/// junction from which the backward amplification stays within budget.
struct Window<'p, 'a> {
    prob: &'p ShootingProblem<'a>,
    n: usize,
    /// Junction snapshot indices, decreasing from `n` to `0`.
    junctions: Vec<usize>,
    times: Vec<f64>,
    modes: Vec<ModesAt>,
    refs: Vec<ComplexField>,
    /// Correction set at junction 0; all solitons elsewhere.
    first_set: Vec<usize>,
    /// `(k, junction)` pins for the stable set.
    pins: Vec<(usize, usize)>,
    stepper: Stepper,
}

impl<'p, 'a> Window<'p, 'a> {
    fn new(prob: &'p ShootingProblem<'a>, segmented: bool) -> Result<Self> {
        let n = prob.snapshot_count(prob.sn)?;
        let spacing = prob.snapshot_spacing();
        let junctions: Vec<usize> = if segmented {
            let per = ((SEGMENT_BUDGET.ln() / prob.e_max()) / spacing).floor() as usize;
            if per == 0 {
                return Err(Error::param("stride", "snapshot spacing exceeds the segment budget"));
            }
            let m = n.div_ceil(per);
            (0..=m).map(|i| n - (i * n) / m).collect()
        } else {
            vec![n, 0]
        };
        let m = junctions.len() - 1;
        let times: Vec<f64> = junctions.iter().map(|&i| prob.snapshot_time(i)).collect();
        let modes = times.iter().map(|&t| prob.modes.at(t)).collect();
        let refs = times.iter().map(|&t| prob.reference(t)).collect::<Result<Vec<_>>>()?;
        let kset = prob.unstable_set();
        let mut first_set = kset.clone();
        let mut pins = Vec::new();
        if segmented {
            for k in prob.stable_set() {
                let reach = PIN_BUDGET.ln() / prob.modes.rate(k);
                let i = (0..=m).find(|&i| times[i] - prob.t0 <= reach).unwrap_or(m);
                if i >= 1 {
                    first_set.push(k);
                    pins.push((k, i));
                }
            }
            first_set.sort_unstable();
        }
        let u_s = &refs[0];
        let cfg = with_threshold(&prob.integrator, u_s);
        let stepper = Stepper::new(*u_s.grid(), prob.family.p.get(), -prob.integrator.dt, &cfg)?;
        Ok(Self { prob, n, junctions, times, modes, refs, first_set, pins, stepper })
    }

    fn segments(&self) -> usize {
        self.junctions.len() - 1
    }

    fn nsol(&self) -> usize {
        self.prob.family.len()
    }

    fn set(&self, i: usize) -> Vec<usize> {
        if i == 0 {
            self.first_set.clone()
        } else {
            (0..self.nsol()).collect()
        }
    }

    fn offset(&self, i: usize) -> usize {
        if i == 0 {
            0
        } else {
            self.first_set.len() + self.nsol() * (i - 1)
        }
    }

    fn unknowns(&self) -> usize {
        self.offset(self.segments())
    }

    /// Starting values: the previous stage's trajectory where it overlaps,
    /// its terminal coordinates carried along the tube beyond it.
    fn initial_guess(&mut self, previous: Option<&Trajectory>) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.unknowns()];
        let Some(prev) = previous else {
            return Ok(y);
        };
        let prev_end = *prev.times.last().expect("non-empty trajectory");
        let end_alpha = {
            let (t, u) = prev.last().expect("non-empty trajectory");
            self.prob.modes.at(*t).alpha_minus(&(u - &self.prob.reference(*t)?))?
        };
        let decay = self.prob.tube_rate() + 2.0 * self.prob.scales.gamma;
        for i in 0..self.segments() {
            let t = self.times[i];
            let alpha = match prev.index_of(t, 1e-9) {
                Some(idx) => self.modes[i].alpha_minus(&(&prev.snapshots[idx] - &self.refs[i]))?,
                None => end_alpha.iter().map(|a| a * (-decay * (t - prev_end)).exp()).collect(),
            };
            let off = self.offset(i);
            for (c, &k) in self.set(i).iter().enumerate() {
                y[off + c] = alpha[k];
            }
        }
        for &(k, i) in &self.pins {
            if i < self.segments() {
                y[self.offset(i) + k] = 0.0;
            }
        }
        Ok(y)
    }

    /// Corrects `v` along `Y_l^+, l ∈ set(i)` so that its coordinates equal `y`.
    fn correct(&self, v: &ComplexField, i: usize, y: &[f64]) -> Result<ComplexField> {
        let set = self.set(i);
        if set.is_empty() {
            return Ok(v.clone());
        }
        let dz = v - &self.refs[i];
        let alpha = self.modes[i].alpha_minus(&dz)?;
        let rhs = DVector::from_iterator(set.len(), set.iter().zip(y).map(|(&k, &yk)| yk - alpha[k]));
        let d = self.modes[i]
            .gram(&set)?
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::IllConditionedModulation { deviation: f64::INFINITY })?;
        let mut out = v.clone();
        for (&l, &dl) in set.iter().zip(d.iter()) {
            out.axpy(Complex64::new(dl, 0.0), &self.modes[i].plus[l])?;
        }
        Ok(out)
    }

    fn steps(&self, i: usize) -> usize {
        (self.junctions[i] - self.junctions[i + 1]) * self.prob.integrator.stride
    }

    fn propagate(&self, x: &ComplexField, i: usize, mut record: Option<&mut Trajectory>) -> Result<ComplexField> {
        let mut u = x.clone();
        let stride = self.prob.integrator.stride;
        let p = self.prob.family.p.get();
        let top = self.junctions[i];
        let prob = self.prob;
        self.stepper.advance(&mut u, self.times[i], self.steps(i), stride, |step, _, snap| {
            if let Some(traj) = record.as_deref_mut() {
                let idx = top - step / stride;
                if idx != self.junctions[i + 1] || i + 1 == self.segments() {
                    traj.push(prob.snapshot_time(idx), snap.clone(), p);
                }
            }
        })?;
        Ok(u)
    }

    fn sweep(&self, y: &[f64]) -> Result<Sweep> {
        let m = self.segments();
        let p = self.prob.family.p.get();
        let mut trajectory = Trajectory::default();
        let mut arrivals = vec![self.refs[0].clone()];
        let mut end_alpha = Vec::with_capacity(m);
        for i in 0..m {
            let off = self.offset(i);
            let x = self.correct(&arrivals[i], i, &y[off..off + self.set(i).len()])?;
            trajectory.push(self.times[i], x.clone(), p);
            let v = self.propagate(&x, i, Some(&mut trajectory))?;
            end_alpha.push(self.modes[i + 1].alpha_minus(&(&v - &self.refs[i + 1]))?);
            arrivals.push(v);
        }
        Ok(Sweep { arrivals, end_alpha, trajectory })
    }

    fn equations(&self, y: &[f64], sw: &Sweep) -> Vec<f64> {
        let m = self.segments();
        let ns = self.nsol();
        let mut f = Vec::new();
        for i in 0..m - 1 {
            let off = self.offset(i + 1);
            f.extend((0..ns).map(|l| sw.end_alpha[i][l] - y[off + l]));
        }
        for k in self.prob.unstable_set() {
            f.push(sw.end_alpha[m - 1][k]);
        }
        for &(k, i) in &self.pins {
            f.push(if i == m { sw.end_alpha[m - 1][k] } else { y[self.offset(i) + k] });
        }
        f
    }

    /// Finite-difference blocks `∂α(end of segment i)/∂y_i`, all columns in parallel.
    fn blocks(&self, y: &[f64], sw: &Sweep) -> Result<Vec<DMatrix<f64>>> {
        let m = self.segments();
        let jobs: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..self.set(i).len()).map(move |c| (i, c))).collect();
        let cols: Vec<Vec<f64>> = jobs
            .par_iter()
            .map(|&(i, c)| {
                let off = self.offset(i);
                let width = self.set(i).len();
                let yi = &y[off..off + width];
                let h = 1e-3 * yi.iter().map(|v| v * v).sum::<f64>().sqrt() + self.prob.shooting.fd_increment;
                let mut yp = yi.to_vec();
                yp[c] += h;
                let x = self.correct(&sw.arrivals[i], i, &yp)?;
                let v = self.propagate(&x, i, None)?;
                let alpha = self.modes[i + 1].alpha_minus(&(&v - &self.refs[i + 1]))?;
                Ok(alpha.iter().zip(&sw.end_alpha[i]).map(|(a, b)| (a - b) / h).collect())
            })
            .collect::<Result<_>>()?;
        let mut out: Vec<DMatrix<f64>> = (0..m).map(|i| DMatrix::zeros(self.nsol(), self.set(i).len())).collect();
        for (&(i, c), col) in jobs.iter().zip(cols) {
            for (r, v) in col.into_iter().enumerate() {
                out[i][(r, c)] = v;
            }
        }
        Ok(out)
    }

    fn jacobian(&self, g: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = self.segments();
        let ns = self.nsol();
        let nu = self.unknowns();
        let mut jac = DMatrix::zeros(nu, nu);
        let mut row = 0;
        for i in 0..m - 1 {
            let (oi, on) = (self.offset(i), self.offset(i + 1));
            for l in 0..ns {
                for c in 0..g[i].ncols() {
                    jac[(row + l, oi + c)] = g[i][(l, c)];
                }
                jac[(row + l, on + l)] = -1.0;
            }
            row += ns;
        }
        let last = self.offset(m - 1);
        let terminal = |jac: &mut DMatrix<f64>, row: usize, k: usize| {
            for c in 0..g[m - 1].ncols() {
                jac[(row, last + c)] = g[m - 1][(k, c)];
            }
        };
        for k in self.prob.unstable_set() {
            terminal(&mut jac, row, k);
            row += 1;
        }
        for &(k, i) in &self.pins {
            if i == m {
                terminal(&mut jac, row, k);
            } else {
                jac[(row, self.offset(i) + k)] = 1.0;
            }
            row += 1;
        }
        debug_assert_eq!(row, nu);
        jac
    }

    fn solve(&mut self, mut y: Vec<f64>) -> Result<WindowOutput> {
        let tol = self.prob.shooting.newton_tol;
        let max_iter = self.prob.shooting.max_iter;
        let inf = |f: &[f64]| f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut sw = self.sweep(&y)?;
        let mut f = self.equations(&y, &sw);
        let mut g = self.blocks(&y, &sw)?;
        let mut iterations = 0;
        let mut fresh = true;
        while inf(&f) > tol {
            if iterations >= max_iter {
                return Err(Error::NonConvergence {
                    iterations,
                    detail: format!("shooting residual {:.3e} above {tol:e} at Sn = {}", inf(&f), self.prob.sn),
                });
            }
            iterations += 1;
            let step = self
                .jacobian(&g)
                .lu()
                .solve(&-DVector::from_column_slice(&f))
                .ok_or_else(|| Error::NonConvergence { iterations, detail: "singular shooting Jacobian".into() })?;
            let mut accepted = false;
            let mut lambda = 1.0;
            for _ in 0..5 {
                let trial: Vec<f64> = y.iter().zip(step.iter()).map(|(a, d)| a + lambda * d).collect();
                let tsw = self.sweep(&trial)?;
                let tf = self.equations(&trial, &tsw);
                if inf(&tf) < inf(&f) {
                    (y, sw, f) = (trial, tsw, tf);
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if accepted {
                fresh = false;
            } else if !fresh {
                g = self.blocks(&y, &sw)?;
                fresh = true;
            } else {
                return Err(Error::NonConvergence {
                    iterations,
                    detail: format!("line search failed with residual {:.3e}", inf(&f)),
                });
            }
        }
        let defects = (1..self.segments())
            .map(|i| {
                let off = self.offset(i);
                let corrected: Vec<f64> = y[off..off + self.nsol()].to_vec();
                inf(&corrected.iter().zip(&sw.end_alpha[i - 1]).map(|(a, b)| a - b).collect::<Vec<_>>())
            })
            .collect();
        let report = StageReport {
            sn: self.prob.sn,
            iterations,
            residual: inf(&f),
            junction_times: self.times.clone(),
            junction_defects: defects,
        };
        debug_assert_eq!(sw.trajectory.len(), self.n + 1);
        Ok(WindowOutput { trajectory: sw.trajectory.ascending(), report })
    }
}

/// Runs the base problem: the multi-soliton `φ` shot around `R`.
pub fn build_base_multisoliton(
    family: &SolitonFamily,
    modes: &ModeSet,
    scales: InteractionScales,
    t0: f64,
    sn: f64,
    schedule: &[f64],
    integrator: IntegratorConfig,
    shooting: ShootingConfig,
) -> Result<ShootingResult> {
    let prob = ShootingProblem {
        family,
        modes,
        scales,
        target: Target::Base,
        t0,
        sn,
        schedule: schedule.to_vec(),
        phi: None,
        integrator,
        shooting,
    };
    solve_shooting(&prob)
}

/// Nested constructions `φ_{A_σ(1)}, φ_{A_σ(1),A_σ(2)}, …` in the order of increasing `c`.
pub fn build_family(
    family: &SolitonFamily,
    modes: &ModeSet,
    scales: InteractionScales,
    base: &Trajectory,
    amplitudes: &[f64],
    t0: f64,
    sn: f64,
    schedule: &[f64],
    integrator: IntegratorConfig,
    shooting: ShootingConfig,
) -> Result<Vec<ShootingResult>> {
    if amplitudes.len() != family.len() {
        return Err(Error::param("amplitudes", format!("expected {} values, got {}", family.len(), amplitudes.len())));
    }
    let mut out: Vec<ShootingResult> = Vec::with_capacity(family.len());
    for (stage, &j) in family.stage_order().iter().enumerate() {
        let phi = out.last().map_or(base, |r| &r.trajectory);
        let prob = ShootingProblem {
            family,
            modes,
            scales,
            target: Target::Perturb { j, amplitude: amplitudes[j] },
            t0,
            sn,
            schedule: schedule.to_vec(),
            phi: Some(phi),
            integrator,
            shooting,
        };
        let res = solve_shooting(&prob).map_err(|e| Error::Stage { stage, source: Box::new(e) })?;
        out.push(res);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeFit {
    pub amplitude: f64,
    pub rate: f64,
    pub fit_residual: f64,
}

/// Fits `s(t) = Im∫ conj(u - φ) Y_j^- = A e^{-rate·t}` over `window`.
pub fn recover_amplitude(
    u: &Trajectory,
    phi: &Trajectory,
    j: usize,
    modes: &ModeSet,
    window: (f64, f64),
) -> Result<AmplitudeFit> {
    if j >= modes.len() {
        return Err(Error::param("j", format!("index {j} out of range")));
    }
    let (mut ts, mut ss) = (Vec::new(), Vec::new());
    for (t, snap) in u.times.iter().zip(&u.snapshots) {
        if *t < window.0 - 1e-12 || *t > window.1 + 1e-12 {
            continue;
        }
        let k = phi.index_of(*t, 1e-9).ok_or_else(|| Error::TimeMismatch(format!("no reference snapshot at {t}")))?;
        ts.push(*t);
        ss.push(inner_imag(&(snap - &phi.snapshots[k]), &modes.minus(j, *t))?);
    }
    if ts.len() < 3 {
        return Err(Error::BadFit("fewer than three samples in the window".into()));
    }
    if ss.iter().all(|&s| s == 0.0) {
        return Ok(AmplitudeFit { amplitude: 0.0, rate: 0.0, fit_residual: 0.0 });
    }
    let sign = ss[0].signum();
    if ss.iter().any(|s| s.signum() != sign) {
        return Err(Error::BadFit("projection changes sign inside the window".into()));
    }
    let fit = fit_rate(&ts, &ss.iter().map(|s| s.abs()).collect::<Vec<_>>())?;
    if fit.fit_residual > 0.05 {
        return Err(Error::BadFit(format!("projection is not exponential (rms {:.3})", fit.fit_residual)));
    }
    Ok(AmplitudeFit { amplitude: sign * fit.amplitude, rate: fit.rate, fit_residual: fit.fit_residual })
}
