//! Ground states, travelling solitons, symmetries and conservation laws.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{norm_gradient, spectral_derivative, ComplexField, Grid};

/// Nonlinearity exponent of `i u_t + u_xx + |u|^{p-1} u = 0`, restricted to the
/// L²-supercritical range `p > 5`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Exponent(f64);

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p > 5.0 {
            Ok(Self(p))
        } else {
            Err(Error::param("p", format!("must exceed 5, got {p}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Exponent {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<Exponent> for f64 {
    fn from(p: Exponent) -> f64 {
        p.0
    }
}

/// `|u|^{p-1}` from `|u|^2`, using integer powers when `(p-1)/2` is integral.
#[inline]
pub fn modulus_power(abs2: f64, p: f64) -> f64 {
    let half = 0.5 * (p - 1.0);
    if half.fract() == 0.0 && half <= 32.0 {
        abs2.powi(half as i32)
    } else {
        abs2.powf(half)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub c: f64,
    pub v: f64,
    pub gamma: f64,
    pub x0: f64,
}

/// Moving-frame coordinates of one soliton at a point `(t, x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolitonFrame {
    pub lambda: f64,
    pub theta: f64,
}

impl SolitonParams {
    pub fn new(c: f64, v: f64, gamma: f64, x0: f64) -> Result<Self> {
        let s = Self { c, v, gamma, x0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::param("c", format!("must be positive, got {}", self.c)));
        }
        if !(self.v.is_finite() && self.gamma.is_finite() && self.x0.is_finite()) {
            return Err(Error::param("soliton", "parameters must be finite"));
        }
        Ok(())
    }

    pub fn frame(&self, t: f64, x: f64) -> SolitonFrame {
        SolitonFrame {
            lambda: x - self.v * t - self.x0,
            theta: 0.5 * self.v * x - 0.25 * self.v * self.v * t + self.c * t + self.gamma,
        }
    }

    pub fn center(&self, t: f64) -> f64 {
        self.v * t + self.x0
    }

    /// Unimodular carrier `e^{iθ(t,x)}` sampled on the grid.
    pub fn carrier(&self, t: f64, grid: &Grid) -> Vec<Complex64> {
        (0..grid.points())
            .map(|i| Complex64::from_polar(1.0, self.frame(t, grid.x(i)).theta))
            .collect()
    }

    pub fn lambdas(&self, t: f64, grid: &Grid) -> Vec<f64> {
        (0..grid.points()).map(|i| self.frame(t, grid.x(i)).lambda).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonFamily {
    pub p: Exponent,
    pub members: Vec<SolitonParams>,
}

impl SolitonFamily {
    pub fn new(p: Exponent, members: Vec<SolitonParams>) -> Result<Self> {
        let f = Self { p, members };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::param("solitons", "family must contain at least one soliton"));
        }
        for m in &self.members {
            m.validate()?;
        }
        if self.members.windows(2).any(|w| w[0].v >= w[1].v) {
            return Err(Error::param("solitons", "velocities must be strictly increasing"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn c_min(&self) -> f64 {
        self.members.iter().map(|m| m.c).fold(f64::INFINITY, f64::min)
    }

    /// Indices sorted by increasing `c`, ties kept in original order.
    pub fn stage_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.members[a].c.partial_cmp(&self.members[b].c).unwrap());
        idx
    }
}

fn sech(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

/// Closed-form `Q_c(x)`.
pub fn ground_state_value(p: f64, c: f64, x: f64) -> f64 {
    let y = c.sqrt() * x;
    let amp = (0.5 * (p + 1.0) * c).powf(1.0 / (p - 1.0));
    amp * sech(0.5 * (p - 1.0) * y).powf(2.0 / (p - 1.0))
}

/// Closed-form `Q_c'(x) = -√c tanh(√c (p-1) x / 2) Q_c(x)`.
pub fn ground_state_slope(p: f64, c: f64, x: f64) -> f64 {
    let sc = c.sqrt();
    -sc * (0.5 * (p - 1.0) * sc * x).tanh() * ground_state_value(p, c, x)
}

fn check_c(c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(Error::param("c", format!("must be positive, got {c}")))
    }
}

/// Ratio of `Q_c` at distance `d` from its centre to its peak.
pub fn tail_ratio(p: f64, c: f64, d: f64) -> f64 {
    ground_state_value(p, c, d) / ground_state_value(p, c, 0.0)
}

/// `Q_c` sampled on the grid (real field).
pub fn ground_state(p: Exponent, c: f64, grid: &Grid) -> Result<ComplexField> {
    check_c(c)?;
    let half = 0.5 * grid.length();
    let ratio = tail_ratio(p.get(), c, half);
    if ratio >= 1e-14 {
        return Err(Error::GridTooShort(format!(
            "Q_c at the boundary is {ratio:.2e} of its peak (need < 1e-14); enlarge L"
        )));
    }
    Ok(ComplexField::from_fn(*grid, |x| Complex64::new(ground_state_value(p.get(), c, x), 0.0)))
}

/// `R_j(t,·) = Q_c(λ) e^{iθ}` on the grid. The profile is not wrapped: callers
/// keep solitons away from the boundary.
pub fn soliton(t: f64, params: &SolitonParams, p: Exponent, grid: &Grid) -> Result<ComplexField> {
    params.validate()?;
    let p = p.get();
    Ok(ComplexField::from_fn(*grid, |x| {
        let fr = params.frame(t, x);
        Complex64::from_polar(ground_state_value(p, params.c, fr.lambda), fr.theta)
    }))
}

pub fn soliton_sum(t: f64, family: &SolitonFamily, grid: &Grid) -> Result<ComplexField> {
    let mut acc = ComplexField::zeros(*grid);
    for m in &family.members {
        acc.axpy(Complex64::new(1.0, 0.0), &soliton(t, m, family.p, grid)?)?;
    }
    Ok(acc)
}

/// `∂_x Q_c(λ_j) e^{iθ_j}`, the translation mode of a moving soliton.
pub fn translation_mode(t: f64, params: &SolitonParams, p: Exponent, grid: &Grid) -> ComplexField {
    ComplexField::from_fn(*grid, |x| {
        let fr = params.frame(t, x);
        Complex64::from_polar(ground_state_slope(p.get(), params.c, fr.lambda), fr.theta)
    })
}

/// The four NLS symmetries acting on a snapshot `u(t,·)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Symmetry {
    /// `u(t - t0, x - x0)`; the snapshot is then valid at time `t + t0`.
    Translate { t0: f64, x0: f64 },
    /// `λ^{2/(p-1)} u(λ² t, λ x)`, resampled onto `target`; valid at time `t / λ²`.
    Scale { lambda: f64, p: f64, target: Grid },
    /// `e^{iγ0} u`.
    Phase(f64),
    /// `u(t, x - v0 t) e^{i(v0 x/2 - v0² t/4)}`.
    Galilean(f64),
}

pub fn apply_symmetry(u: &ComplexField, kind: Symmetry, t: f64) -> Result<ComplexField> {
    match kind {
        Symmetry::Translate { x0, .. } => Ok(shift(u, x0)),
        Symmetry::Scale { lambda, p, target } => {
            if !(lambda.is_finite() && lambda > 0.0) {
                return Err(Error::param("lambda", format!("scale must be positive, got {lambda}")));
            }
            let amp = lambda.powf(2.0 / (p - 1.0));
            Ok(u.resample(target, |x| lambda * x, Complex64::new(0.0, 0.0))
                .scale(Complex64::new(amp, 0.0)))
        }
        Symmetry::Phase(g) => Ok(u.scale(Complex64::from_polar(1.0, g))),
        Symmetry::Galilean(v0) => {
            let moved = shift(u, v0 * t);
            let grid = *u.grid();
            let mut out = moved;
            for (i, val) in out.values_mut().iter_mut().enumerate() {
                let x = grid.x(i);
                *val *= Complex64::from_polar(1.0, 0.5 * v0 * x - 0.25 * v0 * v0 * t);
            }
            Ok(out)
        }
    }
}

/// Periodic shift `u(x - a)` by a Fourier phase.
fn shift(u: &ComplexField, a: f64) -> ComplexField {
    if a == 0.0 {
        return u.clone();
    }
    u.fourier_multiply(|k| Complex64::from_polar(1.0, -k * a))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservedTriple {
    pub mass: f64,
    pub energy: f64,
    pub momentum: f64,
}

pub fn conserved(u: &ComplexField, p: f64) -> ConservedTriple {
    let dx = u.grid().dx();
    let mass: f64 = u.values().iter().map(|v| v.norm_sqr()).sum::<f64>() * dx;
    let grad = norm_gradient(u);
    let pot: f64 = u
        .values()
        .iter()
        .map(|v| {
            let a = v.norm_sqr();
            a * modulus_power(a, p)
        })
        .sum::<f64>()
        * dx;
    let ux = spectral_derivative(u, 1).expect("order 1 is valid");
    let momentum: f64 = ux
        .values()
        .iter()
        .zip(u.values())
        .map(|(d, v)| (d * v.conj()).im)
        .sum::<f64>()
        * dx;
    ConservedTriple { mass, energy: 0.5 * grad * grad - pot / (p + 1.0), momentum }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_order_breaks_ties_by_index() {
        let p = Exponent::new(7.0).unwrap();
        let mk = |c, v| SolitonParams::new(c, v, 0.0, 0.0).unwrap();
        let fam = SolitonFamily::new(p, vec![mk(2.0, -1.0), mk(1.0, 0.0), mk(2.0, 1.0), mk(1.0, 2.0)]).unwrap();
        assert_eq!(fam.stage_order(), vec![1, 3, 0, 2]);
    }

    #[test]
    fn exponent_guard() {
        assert!(Exponent::new(5.0).is_err());
        assert!(Exponent::new(3.0).is_err());
        assert!(Exponent::new(f64::NAN).is_err());
        assert!(Exponent::new(5.5).is_ok());
    }

    #[test]
    fn slope_matches_derivative() {
        let h = 1e-5;
        for &x in &[-1.3, -0.2, 0.0, 0.7, 2.5] {
            let fd = (ground_state_value(7.0, 2.0, x + h) - ground_state_value(7.0, 2.0, x - h)) / (2.0 * h);
            assert!((fd - ground_state_slope(7.0, 2.0, x)).abs() < 1e-8);
        }
    }
}
