//! Split-step Fourier integration of the NLS in either time direction.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{fft_forward, fft_inverse, norm_gradient, ComplexField, Grid};
use crate::soliton::{conserved, modulus_power, ConservedTriple};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    StrangSplitting,
    FourthOrderSplitting,
}

impl Scheme {
    pub fn order(self) -> u32 {
        match self {
            Scheme::StrangSplitting => 2,
            Scheme::FourthOrderSplitting => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub scheme: Scheme,
    /// Blow-up threshold on `‖u_x‖_{L²}`; `None` means 1e3 times the initial value.
    #[serde(default)]
    pub max_gradient: Option<f64>,
    pub dealias: bool,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_stride() -> usize {
    100
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { dt: 1e-3, scheme: Scheme::StrangSplitting, max_gradient: None, dealias: true, stride: 100 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", format!("must be positive, got {}", self.dt)));
        }
        if let Some(g) = self.max_gradient {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::param("max_gradient", format!("must be positive, got {g}")));
            }
        }
        if self.stride == 0 {
            return Err(Error::param("stride", "must be at least 1"));
        }
        Ok(())
    }
}

const W1: f64 = 1.351_207_191_959_657_8; // 1 / (2 - 2^{1/3})
const W0: f64 = -1.702_414_383_919_315_3; // -2^{1/3} / (2 - 2^{1/3})

enum Substep {
    Nonlinear(f64),
    Linear(usize),
}

/// Fixed-step propagator with precomputed linear multipliers.
pub struct Stepper {
    grid: Grid,
    p: f64,
    h: f64,
    substeps: Vec<Substep>,
    multipliers: Vec<Vec<Complex64>>,
    k2: Vec<f64>,
    threshold: Option<f64>,
}

impl Stepper {
    /// Stepper advancing by the signed step `h`.
    pub fn new(grid: Grid, p: f64, h: f64, cfg: &IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        if !(h.is_finite() && h != 0.0) {
            return Err(Error::param("dt", "step must be finite and non-zero"));
        }
        let m = grid.points();
        let cutoff = m / 3;
        let mask = |i: usize| -> f64 {
            let idx = if i <= m / 2 { i } else { m - i };
            if cfg.dealias && idx > cutoff {
                0.0
            } else {
                1.0
            }
        };
        let k2: Vec<f64> = grid.wavenumbers().iter().map(|k| k * k).collect();
        let multiplier = |tau: f64| -> Vec<Complex64> {
            k2.iter().enumerate().map(|(i, &kk)| Complex64::from_polar(mask(i), -kk * tau)).collect()
        };
        let (substeps, multipliers) = match cfg.scheme {
            Scheme::StrangSplitting => (
                vec![Substep::Nonlinear(0.5 * h), Substep::Linear(0), Substep::Nonlinear(0.5 * h)],
                vec![multiplier(h)],
            ),
            Scheme::FourthOrderSplitting => {
                let (a, b) = (W1 * h, W0 * h);
                (
                    vec![
                        Substep::Nonlinear(0.5 * a),
                        Substep::Linear(0),
                        Substep::Nonlinear(0.5 * (a + b)),
                        Substep::Linear(1),
                        Substep::Nonlinear(0.5 * (a + b)),
                        Substep::Linear(0),
                        Substep::Nonlinear(0.5 * a),
                    ],
                    vec![multiplier(a), multiplier(b)],
                )
            }
        };
        Ok(Self { grid, p, h, substeps, multipliers, k2, threshold: cfg.max_gradient })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    fn nonlinear(&self, u: &mut [Complex64], tau: f64) {
        let p = self.p;
        for v in u.iter_mut() {
            let phase = modulus_power(v.norm_sqr(), p) * tau;
            *v *= Complex64::from_polar(1.0, phase);
        }
    }

    /// One step in place; returns `‖u_x‖²` times `M/dx` seen in the first linear substep.
    fn step_in_place(&self, u: &mut [Complex64]) -> f64 {
        let mut grad = f64::NAN;
        for s in &self.substeps {
            match *s {
                Substep::Nonlinear(tau) => self.nonlinear(u, tau),
                Substep::Linear(j) => {
                    fft_forward(u);
                    if grad.is_nan() {
                        grad = u.iter().zip(&self.k2).map(|(v, k)| v.norm_sqr() * k).sum();
                    }
                    u.iter_mut().zip(&self.multipliers[j]).for_each(|(v, m)| *v *= m);
                    fft_inverse(u);
                }
            }
        }
        grad
    }

    /// Advance `n` steps from time `t`, calling `record(i, t_i, u)` after every
    /// `stride`-th step and at the last one.
    pub fn advance(
        &self,
        u: &mut ComplexField,
        t: f64,
        n: usize,
        stride: usize,
        mut record: impl FnMut(usize, f64, &ComplexField),
    ) -> Result<()> {
        if *u.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let threshold = self.threshold.unwrap_or_else(|| 1e3 * norm_gradient(u).max(1e-300));
        let scale = self.grid.dx() / self.grid.points() as f64;
        for i in 1..=n {
            let g2 = self.step_in_place(u.values_mut());
            let gradient = (g2 * scale).sqrt();
            let ti = t + i as f64 * self.h;
            if !gradient.is_finite() || gradient > threshold {
                return Err(Error::BlowUp { time: ti, gradient, threshold });
            }
            if i % stride == 0 || i == n {
                record(i, ti, u);
            }
        }
        u.ensure_finite()
    }
}

/// A single step of size `dt` (either sign).
pub fn step(u: &ComplexField, dt: f64, p: f64, cfg: &IntegratorConfig) -> Result<ComplexField> {
    if dt.abs() > 2.0 * cfg.dt {
        return Err(Error::param("dt", format!("|dt| = {} exceeds twice the configured step", dt.abs())));
    }
    let stepper = Stepper::new(*u.grid(), p, dt, cfg)?;
    let mut out = u.clone();
    stepper.advance(&mut out, 0.0, 1, 1, |_, _, _| {})?;
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<ComplexField>,
    pub conserved: Vec<ConservedTriple>,
}

impl Trajectory {
    pub fn push(&mut self, t: f64, u: ComplexField, p: f64) {
        self.conserved.push(conserved(&u, p));
        self.times.push(t);
        self.snapshots.push(u);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(&f64, &ComplexField)> {
        self.times.last().zip(self.snapshots.last())
    }

    /// Index of the snapshot at time `t` (within `tol`).
    pub fn index_of(&self, t: f64, tol: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    /// Copy with times in increasing order.
    pub fn ascending(&self) -> Trajectory {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.times[a].partial_cmp(&self.times[b]).unwrap());
        Trajectory {
            times: idx.iter().map(|&i| self.times[i]).collect(),
            snapshots: idx.iter().map(|&i| self.snapshots[i].clone()).collect(),
            conserved: idx.iter().map(|&i| self.conserved[i]).collect(),
        }
    }
}

/// Number of fixed steps covering `span` with steps no longer than `dt`.
pub fn step_count(span: f64, dt: f64) -> usize {
    ((span.abs() / dt) - 1e-9).ceil().max(1.0) as usize
}

pub fn evolve(u0: &ComplexField, t_from: f64, t_to: f64, p: f64, cfg: &IntegratorConfig) -> Result<Trajectory> {
    u0.ensure_finite()?;
    let mut traj = Trajectory::default();
    traj.push(t_from, u0.clone(), p);
    if t_to == t_from {
        return Ok(traj);
    }
    let n = step_count(t_to - t_from, cfg.dt);
    let h = (t_to - t_from) / n as f64;
    let stepper = Stepper::new(*u0.grid(), p, h, cfg)?;
    let mut u = u0.clone();
    stepper.advance(&mut u, t_from, n, cfg.stride, |i, _, snap| {
        let t = if i == n { t_to } else { t_from + i as f64 * h };
        traj.push(t, snap.clone(), p);
    })?;
    Ok(traj)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub mass_rel: f64,
    pub energy_rel: f64,
    pub momentum_abs: f64,
}

pub fn conservation_drift(traj: &Trajectory) -> Drift {
    let Some(first) = traj.conserved.first() else {
        return Drift { mass_rel: 0.0, energy_rel: 0.0, momentum_abs: 0.0 };
    };
    let rel = |a: f64, b: f64| if b != 0.0 { (a - b).abs() / b.abs() } else { (a - b).abs() };
    traj.conserved.iter().fold(Drift { mass_rel: 0.0, energy_rel: 0.0, momentum_abs: 0.0 }, |d, c| Drift {
        mass_rel: d.mass_rel.max(rel(c.mass, first.mass)),
        energy_rel: d.energy_rel.max(rel(c.energy, first.energy)),
        momentum_abs: d.momentum_abs.max((c.momentum - first.momentum).abs()),
    })
}
