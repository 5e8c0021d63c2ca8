//! Functionals used along constructed trajectories: projections on the
//! eigenmodes, localizing cutoffs, the Weinstein-type functional and its
//! quadratic part, the modulated decomposition, the source term and the
//! transport residual.

use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::construct::ModeSet;
use crate::error::{Error, Result};
use crate::evolve::Trajectory;
use crate::field::{inner_imag, inner_real, norm_h1, norm_hminus1, norm_l2, spectral_derivative, ComplexField, Grid};
use crate::linspec::least_squares;
use crate::soliton::{
    ground_state_slope, ground_state_value, modulus_power, soliton, soliton_sum, translation_mode, SolitonFamily,
};

/// Floor applied to moduli raised to negative powers.
pub const MODULUS_FLOOR: f64 = 1e-30;

/// `α_k^±(t) = Im∫ z̄ Y_k^±` for every soliton, indexed `[k][snapshot]`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ProjectionSeries {
    pub times: Vec<f64>,
    pub alpha_plus: Vec<Vec<f64>>,
    pub alpha_minus: Vec<Vec<f64>>,
}

/// Projections of `z = u(t) - reference(t)` along a trajectory.
pub fn projection_series(
    traj: &Trajectory,
    reference: impl Fn(f64) -> Result<ComplexField>,
    modes: &ModeSet,
) -> Result<ProjectionSeries> {
    let n = modes.len();
    let mut out = ProjectionSeries {
        times: traj.times.clone(),
        alpha_plus: vec![Vec::with_capacity(traj.len()); n],
        alpha_minus: vec![Vec::with_capacity(traj.len()); n],
    };
    for (t, u) in traj.times.iter().zip(&traj.snapshots) {
        let z = u - &reference(*t)?;
        let at = modes.at(*t);
        for (k, (p, m)) in at.alpha_plus(&z)?.into_iter().zip(at.alpha_minus(&z)?).enumerate() {
            out.alpha_plus[k].push(p);
            out.alpha_minus[k].push(m);
        }
    }
    Ok(out)
}

/// Projections of `u - φ - A e^{-e_j t} Y_j^+` for two stored trajectories on a common time grid.
pub fn projections(
    u: &Trajectory,
    phi: &Trajectory,
    amplitude: Option<(usize, f64)>,
    modes: &ModeSet,
) -> Result<ProjectionSeries> {
    projection_series(
        u,
        |t| {
            let k = phi.index_of(t, 1e-9).ok_or_else(|| Error::TimeMismatch(format!("no reference snapshot at {t}")))?;
            let mut r = phi.snapshots[k].clone();
            r.same_grid(&u.snapshots[0])?;
            if let Some((j, a)) = amplitude {
                r.axpy(Complex64::new(a * (-modes.rate(j) * t).exp(), 0.0), &modes.plus(j, t))?;
            }
            Ok(r)
        },
        modes,
    )
}

/// `dα_k^±/dt ∓ e_k α_k^±` by centred differences at interior samples.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ModulationResidual {
    pub times: Vec<f64>,
    pub plus: Vec<Vec<f64>>,
    pub minus: Vec<Vec<f64>>,
}

pub fn modulation_residual(series: &ProjectionSeries, rates: &[f64]) -> Result<ModulationResidual> {
    if rates.len() != series.alpha_plus.len() {
        return Err(Error::param("rates", "one rate per soliton is required"));
    }
    let ts = &series.times;
    if ts.len() < 3 {
        return Err(Error::param("series", "need at least three samples"));
    }
    let inner = 1..ts.len() - 1;
    let resid = |a: &[f64], sign: f64, e: f64| -> Vec<f64> {
        inner.clone().map(|n| (a[n + 1] - a[n - 1]) / (ts[n + 1] - ts[n - 1]) - sign * e * a[n]).collect()
    };
    Ok(ModulationResidual {
        times: ts[inner.clone()].to_vec(),
        plus: series.alpha_plus.iter().zip(rates).map(|(a, &e)| resid(a, 1.0, e)).collect(),
        minus: series.alpha_minus.iter().zip(rates).map(|(a, &e)| resid(a, -1.0, e)).collect(),
    })
}

fn bump(y: f64) -> f64 {
    if y.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - y * y)).exp()
    }
}

fn gauss_legendre_16() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = 16;
        (0..n)
            .map(|i| {
                let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, x);
                    for k in 2..=n {
                        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                    let dx = p1 / dp;
                    x -= dx;
                    if dx.abs() < 1e-16 {
                        let w = 2.0 / ((1.0 - x * x) * dp * dp);
                        return (x, w);
                    }
                }
                unreachable!("Legendre roots converge")
            })
            .collect()
    })
}

/// `∫_{-1}^{x} e^{-1/(1-y²)} dy` for `x ≤ 0`, composite 16-point Gauss rule.
fn left_integral(x: f64, panels: usize) -> f64 {
    let x = x.clamp(-1.0, 0.0);
    let h = (x + 1.0) / panels as f64;
    let rule = gauss_legendre_16();
    (0..panels)
        .map(|i| {
            let mid = -1.0 + (i as f64 + 0.5) * h;
            rule.iter().map(|&(s, w)| w * bump(mid + 0.5 * h * s)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

/// `c₀ = ∫_{-1}^{1} e^{-1/(1-y²)} dy` with the given number of panels per half.
pub fn bump_constant_with(panels: usize) -> f64 {
    2.0 * left_integral(0.0, panels)
}

pub fn bump_constant() -> f64 {
    static C0: OnceLock<f64> = OnceLock::new();
    *C0.get_or_init(|| bump_constant_with(64))
}

/// Smooth step `ψ`: 0 below −1, 1 above 1, `ψ(x) + ψ(-x) = 1`.
pub fn bump_psi(x: f64) -> f64 {
    if x <= -1.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else if x <= 0.0 {
        left_integral(x, 64) / bump_constant()
    } else {
        1.0 - left_integral(-x, 64) / bump_constant()
    }
}

pub fn bump_psi_prime(x: f64) -> f64 {
    bump(x) / bump_constant()
}

pub fn bump_psi_second(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        let d = 1.0 - x * x;
        -2.0 * x / (d * d) * bump(x) / bump_constant()
    }
}

/// Localizing profiles at one time; index `k` is the soliton index (0-based).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CutoffSet {
    pub t: f64,
    pub psi: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    /// `m_k(t)` for `k = 2..N` (stored at index `k-2`).
    pub midlines: Vec<f64>,
    /// `∂_x ψ_k`, `∂_x² ψ_k`, `∂_t ψ_k` in closed form.
    pub psi_x: Vec<Vec<f64>>,
    pub psi_xx: Vec<Vec<f64>>,
    pub psi_t: Vec<Vec<f64>>,
}

pub fn cutoffs(t: f64, family: &SolitonFamily, grid: &Grid) -> Result<CutoffSet> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::param("t", format!("cutoffs need t > 0, got {t}")));
    }
    family.validate()?;
    let n = family.len();
    let m = grid.points();
    let xs = grid.coordinates();
    let st = t.sqrt();
    let mut midlines = Vec::with_capacity(n.saturating_sub(1));
    let mut psi = vec![vec![1.0; m]];
    let mut psi_x = vec![vec![0.0; m]];
    let mut psi_xx = vec![vec![0.0; m]];
    let mut psi_t = vec![vec![0.0; m]];
    for k in 1..n {
        let (a, b) = (&family.members[k - 1], &family.members[k]);
        let vm = 0.5 * (a.v + b.v);
        let mk = vm * t + 0.5 * (a.x0 + b.x0);
        midlines.push(mk);
        let arg: Vec<f64> = xs.iter().map(|x| (x - mk) / st).collect();
        psi.push(arg.iter().map(|&s| bump_psi(s)).collect());
        psi_x.push(arg.iter().map(|&s| bump_psi_prime(s) / st).collect());
        psi_xx.push(arg.iter().map(|&s| bump_psi_second(s) / t).collect());
        // d/dt of (x - x̄)/√t - v̄√t, with x̄ the mean initial position
        psi_t.push(
            arg.iter()
                .map(|&s| bump_psi_prime(s) * (-0.5 * s / t - vm / st))
                .collect(),
        );
    }
    let phi: Vec<Vec<f64>> = (0..n)
        .map(|k| if k + 1 < n { psi[k].iter().zip(&psi[k + 1]).map(|(a, b)| a - b).collect() } else { psi[k].clone() })
        .collect();
    let weight = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
        (0..m)
            .map(|i| {
                let mut acc = f(0);
                for k in 1..n {
                    acc += (f(k) - f(k - 1)) * psi[k][i];
                }
                acc
            })
            .collect()
    };
    let energy = |k: usize| family.members[k].c + 0.25 * family.members[k].v.powi(2);
    let h1 = weight(&energy);
    let h2 = weight(&|k| family.members[k].v);
    Ok(CutoffSet { t, psi, phi, h1, h2, midlines, psi_x, psi_xx, psi_t })
}

impl CutoffSet {
    /// Constant profiles `h₁ ≡ c + v²/4`, `h₂ ≡ v` of a lone soliton.
    pub fn single(t: f64, c: f64, v: f64, grid: &Grid) -> Self {
        let m = grid.points();
        CutoffSet {
            t,
            psi: vec![vec![1.0; m]],
            phi: vec![vec![1.0; m]],
            h1: vec![c + 0.25 * v * v; m],
            h2: vec![v; m],
            midlines: Vec::new(),
            psi_x: vec![vec![0.0; m]],
            psi_xx: vec![vec![0.0; m]],
            psi_t: vec![vec![0.0; m]],
        }
    }

    /// `max |Σφ_k - 1|`.
    pub fn partition_defect(&self) -> f64 {
        (0..self.h1.len())
            .map(|i| (self.phi.iter().map(|p| p[i]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `max` deviations of `h₁`, `h₂` from `Σ(c_k + v_k²/4)φ_k` and `Σ v_k φ_k`.
    pub fn abel_defect(&self, family: &SolitonFamily) -> (f64, f64) {
        let mut d = (0.0f64, 0.0f64);
        for i in 0..self.h1.len() {
            let (mut a, mut b) = (0.0, 0.0);
            for (k, m) in family.members.iter().enumerate() {
                a += (m.c + 0.25 * m.v * m.v) * self.phi[k][i];
                b += m.v * self.phi[k][i];
            }
            d.0 = d.0.max((a - self.h1[i]).abs());
            d.1 = d.1.max((b - self.h2[i]).abs());
        }
        d
    }

    /// `‖∂_xφ_k‖_∞ + ‖∂_x²φ_k‖_∞ + ‖∂_tφ_k‖_∞` for each `k`.
    pub fn derivative_bound(&self) -> Vec<f64> {
        let n = self.phi.len();
        let sup = |v: &[Vec<f64>], k: usize| -> f64 {
            (0..self.h1.len())
                .map(|i| if k + 1 < n { v[k][i] - v[k + 1][i] } else { v[k][i] })
                .fold(0.0f64, |a, x| a.max(x.abs()))
        };
        (0..n).map(|k| sup(&self.psi_x, k) + sup(&self.psi_xx, k) + sup(&self.psi_t, k)).collect()
    }
}

/// Ratios of each side of the cutoff estimates to its majorant taken with `C = 1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CutoffBounds {
    pub t: f64,
    /// `sup (|R_k|+|R_kx|)|φ_k-1| / (e^{-4γt} e^{-√σ₀|λ_k|})`.
    pub self_weight: Vec<f64>,
    /// `sup_{l≠k} (|R_k|+|R_kx|)φ_l / (e^{-4γt} e^{-√σ₀|λ_k|})`.
    pub cross_weight: Vec<f64>,
    /// `√t (‖∂_xφ_k‖_∞ + ‖∂_x²φ_k‖_∞ + ‖∂_tφ_k‖_∞)`.
    pub derivative: Vec<f64>,
    /// `sup |h₁ - c_k - v_k²/4|(|R_k|+|R_kx|) / majorant`.
    pub h1_weight: Vec<f64>,
    pub h2_weight: Vec<f64>,
    /// Same left sides against the purely temporal weight `e^{-σ₀^{3/2}t/4}`.
    pub self_time: Vec<f64>,
    pub cross_time: Vec<f64>,
}

pub fn cutoff_bounds_report(t: f64, family: &SolitonFamily, grid: &Grid, sigma0: f64, gamma: f64) -> Result<CutoffBounds> {
    let cut = cutoffs(t, family, grid)?;
    let n = family.len();
    let xs = grid.coordinates();
    let p = family.p.get();
    let time_w = (-0.25 * sigma0.powf(1.5) * t).exp();
    let mut out = CutoffBounds {
        t,
        self_weight: Vec::new(),
        cross_weight: Vec::new(),
        derivative: cut.derivative_bound().iter().map(|d| d * t.sqrt()).collect(),
        h1_weight: Vec::new(),
        h2_weight: Vec::new(),
        self_time: Vec::new(),
        cross_time: Vec::new(),
    };
    for (k, m) in family.members.iter().enumerate() {
        let (mut sw, mut cw, mut h1w, mut h2w, mut st, mut ct) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let ek = m.c + 0.25 * m.v * m.v;
        for (i, &x) in xs.iter().enumerate() {
            let lam = m.frame(t, x).lambda;
            // |R_kx| = |Q'(λ) + i v/2 Q(λ)|
            let q = ground_state_value(p, m.c, lam);
            let dq = ground_state_slope(p, m.c, lam);
            let weight = q + (dq * dq + 0.25 * m.v * m.v * q * q).sqrt();
            if weight == 0.0 {
                continue;
            }
            let maj = (-4.0 * gamma * t).exp() * (-sigma0.sqrt() * lam.abs()).exp();
            let own = weight * (cut.phi[k][i] - 1.0).abs();
            let cross = (0..n).filter(|&l| l != k).map(|l| weight * cut.phi[l][i]).fold(0.0, f64::max);
            sw = sw.max(own / maj);
            cw = cw.max(cross / maj);
            st = st.max(own / time_w);
            ct = ct.max(cross / time_w);
            h1w = h1w.max((cut.h1[i] - ek).abs() * weight / maj);
            h2w = h2w.max((cut.h2[i] - m.v).abs() * weight / maj);
        }
        out.self_weight.push(sw);
        out.cross_weight.push(cw);
        out.h1_weight.push(h1w);
        out.h2_weight.push(h2w);
        out.self_time.push(st);
        out.cross_time.push(ct);
    }
    Ok(out)
}

/// `|w|^{q}` with the modulus floored, for possibly negative `q`.
fn floored_power(abs2: f64, q: f64) -> f64 {
    abs2.sqrt().max(MODULUS_FLOOR).powf(q)
}

/// `|w+z|^{p+1} - |w|^{p+1} - (p+1)|w|^{p-1}Re(w̄z)` without the cancellation of
/// the direct formula, which would leave `O(ε|w|^{p+1})` noise in an `O(|z|²)` result.
fn potential_remainder(w: Complex64, z: Complex64, p: f64) -> f64 {
    let q = 0.5 * (p + 1.0);
    let a = w.norm_sqr();
    let z2 = z.norm_sqr();
    let delta = 2.0 * (w.conj() * z).re + z2;
    if a == 0.0 {
        return (delta.max(0.0)).powf(q);
    }
    let x = delta / a;
    // (1+x)^q - 1 - qx
    let tail = if x.abs() < 0.5 {
        let (mut term, mut acc) = (q * (q - 1.0) * 0.5 * x * x, 0.0);
        for k in 2..200 {
            acc += term;
            if term.abs() <= 1e-17 * acc.abs() {
                break;
            }
            term *= (q - k as f64) / (k as f64 + 1.0) * x;
        }
        acc
    } else {
        (1.0 + x).powf(q) - 1.0 - q * x
    };
    let aq1 = a.powf(q - 1.0);
    a * aq1 * tail + q * aq1 * z2
}

/// The Weinstein-type functional of `z` around `w = φ + r_j`:
/// `∫|z_x|² - 2/(p+1)∫[|w+z|^{p+1} - |w|^{p+1} - (p+1)|w|^{p-1}Re(w̄z)] + ∫h₁|z|² - Im∫h₂ z̄ z_x`.
pub fn weinstein_h(z: &ComplexField, phi: &ComplexField, rj: &ComplexField, cut: &CutoffSet, p: f64) -> Result<f64> {
    z.same_grid(phi)?;
    z.same_grid(rj)?;
    let dx = z.grid().dx();
    let zx = spectral_derivative(z, 1)?;
    let mut acc = 0.0;
    for i in 0..z.values().len() {
        let zi = z.values()[i];
        let w = phi.values()[i] + rj.values()[i];
        let pot = potential_remainder(w, zi, p);
        acc += zx.values()[i].norm_sqr() - 2.0 / (p + 1.0) * pot + cut.h1[i] * zi.norm_sqr()
            - cut.h2[i] * (zi.conj() * zx.values()[i]).im;
    }
    Ok(acc * dx)
}

/// Quadratic part of the functional around a field `w`:
/// `∫|z_x|² - |w|^{p-1}|z|² - (p-1)Re(w̄z)²|w|^{p-3} + h₁|z|² - Im h₂ z̄ z_x`.
pub fn quadratic_form_around(z: &ComplexField, w: &ComplexField, h1: &[f64], h2: &[f64], p: f64) -> Result<f64> {
    z.same_grid(w)?;
    let dx = z.grid().dx();
    let zx = spectral_derivative(z, 1)?;
    let mut acc = 0.0;
    for i in 0..z.values().len() {
        let (zi, wi) = (z.values()[i], w.values()[i]);
        let a2 = wi.norm_sqr();
        let proj = (wi.conj() * zi).re;
        acc += zx.values()[i].norm_sqr() - modulus_power(a2, p) * zi.norm_sqr()
            - (p - 1.0) * proj * proj * floored_power(a2, p - 3.0)
            + h1[i] * zi.norm_sqr()
            - h2[i] * (zi.conj() * zx.values()[i]).im;
    }
    Ok(acc * dx)
}

/// `𝓗[z](t)` around the soliton sum `R(t)`.
pub fn quadratic_form(z: &ComplexField, t: f64, family: &SolitonFamily, cut: &CutoffSet) -> Result<f64> {
    let r = soliton_sum(t, family, z.grid())?;
    quadratic_form_around(z, &r, &cut.h1, &cut.h2, family.p.get())
}

/// `𝓗_k[z](t)`: the form around `R_k` alone with frozen `h₁ = c_k + v_k²/4`, `h₂ = v_k`.
pub fn localized_form(z: &ComplexField, t: f64, k: usize, family: &SolitonFamily) -> Result<f64> {
    let m = family.members.get(k).ok_or_else(|| Error::param("k", "index out of range"))?;
    let rk = soliton(t, m, family.p, z.grid())?;
    let n = z.grid().points();
    quadratic_form_around(z, &rk, &vec![m.c + 0.25 * m.v * m.v; n], &vec![m.v; n], family.p.get())
}

/// `z̃ = z + Σβ_k iR_k + Σγ_k ∂_xQ_{c_k}(λ_k)e^{iθ_k}` and its coefficients.
#[derive(Clone, Debug)]
pub struct TildeDecomposition {
    pub z_tilde: ComplexField,
    pub beta: Vec<f64>,
    pub gamma_par: Vec<f64>,
}

pub fn tilde_decomposition(z: &ComplexField, t: f64, family: &SolitonFamily) -> Result<TildeDecomposition> {
    let grid = *z.grid();
    let p = family.p.get();
    let mut zt = z.clone();
    let (mut beta, mut gamma_par) = (Vec::new(), Vec::new());
    for m in &family.members {
        let rk = soliton(t, m, family.p, &grid)?;
        let tk = translation_mode(t, m, family.p, &grid);
        // ‖Q_c‖² and ‖Q_c'‖² from the moving profiles (carriers are unimodular)
        let q2 = norm_l2(&rk).powi(2);
        let dq2 = norm_l2(&tk).powi(2);
        let b = inner_imag(z, &rk)? / q2;
        let g = -inner_real(&tk, z)? / dq2;
        zt.axpy(Complex64::new(0.0, b), &rk)?;
        zt.axpy(Complex64::new(g, 0.0), &tk)?;
        beta.push(b);
        gamma_par.push(g);
        let _ = p;
    }
    Ok(TildeDecomposition { z_tilde: zt, beta, gamma_par })
}

/// `𝓗[z̃] - 𝓗[z]`.
pub fn form_comparison(z: &ComplexField, t: f64, family: &SolitonFamily, cut: &CutoffSet) -> Result<f64> {
    let dec = tilde_decomposition(z, t, family)?;
    Ok(quadratic_form(&dec.z_tilde, t, family, cut)? - quadratic_form(z, t, family, cut)?)
}

/// `Re∫(-i R̄_k) z̃` and `Re∫ ∂_xQ_{c_k}(λ_k)e^{iθ_k} conj(z̃)` for each `k`.
pub fn tilde_orthogonality(zt: &ComplexField, t: f64, family: &SolitonFamily) -> Result<Vec<(f64, f64)>> {
    let grid = *zt.grid();
    family
        .members
        .iter()
        .map(|m| {
            let rk = soliton(t, m, family.p, &grid)?;
            let tk = translation_mode(t, m, family.p, &grid);
            // Re∫(-i R̄_k) z̃ = Im∫ R̄_k z̃
            Ok((inner_imag(&rk, zt)?, inner_real(&tk, zt)?))
        })
        .collect()
}

/// Both algebraic forms of the source term `Ω` and their agreement.
#[derive(Clone, Debug)]
pub struct SourceTerm {
    pub omega: ComplexField,
    /// `max |Ω_direct - Ω_rewritten|`.
    pub form_gap: f64,
    pub omega_h1: f64,
}

/// `Ω = |φ+r_j|^{p-1}(φ+r_j) - |φ|^{p-1}φ - A e^{-e_jt} Q_{c_j}^{p-1}(λ_j)e^{iθ_j}[pY₁ + iY₂](λ_j)`,
/// compared with `... - |R_j|^{p-1}r_j - (p-1)|R_j|^{p-3}R_j Re(R̄_j r_j)`.
pub fn omega_source(
    t: f64,
    phi: &ComplexField,
    family: &SolitonFamily,
    modes: &ModeSet,
    j: usize,
    amplitude: f64,
) -> Result<SourceTerm> {
    let grid = *phi.grid();
    let p = family.p.get();
    let m = family.members.get(j).ok_or_else(|| Error::param("j", "index out of range"))?;
    let scale = amplitude * (-modes.rate(j) * t).exp();
    let rj = modes.plus(j, t).scale(Complex64::new(scale, 0.0));
    let rsol = soliton(t, m, family.p, &grid)?;
    let carrier = m.carrier(t, &grid);
    let n = grid.points();
    let (mut direct, mut rewritten) = (vec![Complex64::new(0.0, 0.0); n], vec![Complex64::new(0.0, 0.0); n]);
    let mut gap = 0.0f64;
    for i in 0..n {
        let f = phi.values()[i];
        let r = rj.values()[i];
        let w = f + r;
        let common = w * modulus_power(w.norm_sqr(), p) - f * modulus_power(f.norm_sqr(), p);
        let lam = m.frame(t, grid.x(i)).lambda;
        let q = ground_state_value(p, m.c, lam);
        // profile of Y_{c_j}^+ at λ_j, stripped of the carrier
        let y = r * carrier[i].conj();
        let lin = Complex64::new(p * y.re, y.im) * carrier[i] * modulus_power(q * q, p);
        direct[i] = common - lin;
        let rs = rsol.values()[i];
        let a2 = rs.norm_sqr();
        let alt = r * modulus_power(a2, p) + rs * ((p - 1.0) * floored_power(a2, p - 3.0) * (rs.conj() * r).re);
        rewritten[i] = common - alt;
        gap = gap.max((direct[i] - rewritten[i]).norm());
    }
    let omega = ComplexField::new(grid, direct)?;
    Ok(SourceTerm { omega_h1: norm_h1(&omega), omega, form_gap: gap })
}

/// Residual of the eigenrelation `Y'' - cY + iQ^{p-1}Y₂ + pQ^{p-1}Y₁ = i e Y` for the
/// rescaled mode of soliton `k`, in the sup norm relative to `max|Y|`.
pub fn eigenrelation_residual(modes: &ModeSet, family: &SolitonFamily, k: usize) -> Result<f64> {
    let y = modes.profile(k);
    let grid = *y.grid();
    let c = family.members[k].c;
    let p = family.p.get();
    let e = modes.rate(k);
    let yxx = spectral_derivative(y, 2)?;
    let mut worst = 0.0f64;
    for i in 0..grid.points() {
        let q = ground_state_value(p, c, grid.x(i));
        let qp = modulus_power(q * q, p);
        let v = y.values()[i];
        let lhs = yxx.values()[i] - c * v + Complex64::new(p * qp * v.re, qp * v.im);
        worst = worst.max((lhs - Complex64::new(0.0, e) * v).norm());
    }
    Ok(worst / y.max_abs())
}

/// `iφ_xx + i|φ|^{p-1}φ + h₂φ_x - ih₁φ`, i.e. `φ_t + h₂φ_x - ih₁φ` with `φ_t` from the equation.
pub fn transport_field(phi: &ComplexField, h1: &[f64], h2: &[f64], p: f64) -> Result<ComplexField> {
    let fxx = spectral_derivative(phi, 2)?;
    let fx = spectral_derivative(phi, 1)?;
    let i = Complex64::new(0.0, 1.0);
    let vals = (0..phi.values().len())
        .map(|n| {
            let f = phi.values()[n];
            i * fxx.values()[n] + i * f * modulus_power(f.norm_sqr(), p) + h2[n] * fx.values()[n] - i * h1[n] * f
        })
        .collect();
    ComplexField::new(*phi.grid(), vals)
}

/// `‖φ_t + h₂φ_x - ih₁φ‖_{H⁻¹}`.
pub fn transport_residual(phi: &ComplexField, cut: &CutoffSet, p: f64) -> Result<f64> {
    Ok(norm_hminus1(&transport_field(phi, &cut.h1, &cut.h2, p)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `-slope` of `log v`: positive for decay, negative for growth.
    pub rate: f64,
    pub amplitude: f64,
    /// rms of the log residual.
    pub fit_residual: f64,
}

/// Least-squares line through `(t, log max(v, 1e-14))`.
pub fn fit_rate(times: &[f64], values: &[f64]) -> Result<RateFit> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::BadFit("need at least two paired samples".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::BadFit("values must be finite and non-negative".into()));
    }
    let logs: Vec<f64> = values.iter().map(|v| v.max(1e-14).ln()).collect();
    let (slope, icpt, rms) = least_squares(times, &logs);
    Ok(RateFit { rate: if slope == 0.0 { 0.0 } else { -slope }, amplitude: icpt.exp(), fit_residual: rms })
}

/// Samples of `H`, its centred derivative and the Prop.-type majorant
/// `t^{-1/2}‖z‖² + e^{-(e_j+4γ)t}‖z‖ + ‖z‖³`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyVariation {
    pub times: Vec<f64>,
    pub h: Vec<f64>,
    pub dh_dt: Vec<f64>,
    pub majorant: Vec<f64>,
    /// `max |dH/dt| / majorant` over interior samples.
    pub max_ratio: f64,
}

pub fn dh_dt_check(times: &[f64], h: &[f64], z_h1: &[f64], tube_rate: f64, gamma: f64) -> Result<EnergyVariation> {
    if times.len() != h.len() || times.len() != z_h1.len() || times.len() < 3 {
        return Err(Error::param("series", "need at least three aligned samples"));
    }
    let mut out = EnergyVariation { times: Vec::new(), h: Vec::new(), dh_dt: Vec::new(), majorant: Vec::new(), max_ratio: 0.0 };
    for n in 1..times.len() - 1 {
        let t = times[n];
        let d = (h[n + 1] - h[n - 1]) / (times[n + 1] - times[n - 1]);
        let z = z_h1[n];
        let maj = z * z / t.sqrt() + (-(tube_rate + 4.0 * gamma) * t).exp() * z + z * z * z;
        out.times.push(t);
        out.h.push(h[n]);
        out.dh_dt.push(d);
        out.majorant.push(maj);
        if maj > 0.0 {
            out.max_ratio = out.max_ratio.max(d.abs() / maj);
        } else if d != 0.0 {
            out.max_ratio = f64::INFINITY;
        }
    }
    Ok(out)
}

/// Everything the energy argument manipulates, at one time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    pub h: f64,
    pub hform_z: f64,
    pub hform_ztilde: f64,
    pub beta: Vec<f64>,
    pub gamma_par: Vec<f64>,
    pub z_h1: f64,
    pub ztilde_h1: f64,
}

/// `z = u - φ - r_j` at time `t` and its energy report.
pub fn energy_report(
    t: f64,
    u: &ComplexField,
    phi: &ComplexField,
    rj: &ComplexField,
    family: &SolitonFamily,
) -> Result<EnergyReport> {
    let z = &(u - phi) - rj;
    let cut = cutoffs(t, family, u.grid())?;
    let dec = tilde_decomposition(&z, t, family)?;
    Ok(EnergyReport {
        t,
        h: weinstein_h(&z, phi, rj, &cut, family.p.get())?,
        hform_z: quadratic_form(&z, t, family, &cut)?,
        hform_ztilde: quadratic_form(&dec.z_tilde, t, family, &cut)?,
        z_h1: norm_h1(&z),
        ztilde_h1: norm_h1(&dec.z_tilde),
        beta: dec.beta,
        gamma_par: dec.gamma_par,
    })
}
