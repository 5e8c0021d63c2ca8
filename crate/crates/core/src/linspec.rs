//! Linearized operators around the ground state and the unstable eigenpair.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{fft_forward, fft_inverse, inner_imag, ComplexField, Grid};
use crate::soliton::{ground_state_slope, ground_state_value, Exponent};

/// `L₊ = -∂² + c - p Q_c^{p-1}` and `L₋ = -∂² + c - Q_c^{p-1}` on real fields.
#[derive(Clone, Debug)]
pub struct LinearOperators {
    grid: Grid,
    p: f64,
    c: f64,
    k2: Vec<f64>,
    qpow: Vec<f64>,
}

impl LinearOperators {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    fn neg_laplacian(&self, f: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        fft_forward(&mut buf);
        buf.iter_mut().zip(&self.k2).for_each(|(v, &k2)| *v *= k2);
        fft_inverse(&mut buf);
        buf.iter().map(|v| v.re).collect()
    }

    pub fn apply_plus(&self, f: &[f64]) -> Vec<f64> {
        let mut out = self.neg_laplacian(f);
        for ((o, &fi), &q) in out.iter_mut().zip(f).zip(&self.qpow) {
            *o += (self.c - self.p * q) * fi;
        }
        out
    }

    pub fn apply_minus(&self, f: &[f64]) -> Vec<f64> {
        let mut out = self.neg_laplacian(f);
        for ((o, &fi), &q) in out.iter_mut().zip(f).zip(&self.qpow) {
            *o += (self.c - q) * fi;
        }
        out
    }

    /// `L₋ L₊ f`.
    pub fn apply_product(&self, f: &[f64]) -> Vec<f64> {
        self.apply_minus(&self.apply_plus(f))
    }

    /// `(L₊ f₁, f₁) + (L₋ f₂, f₂)` for `f = f₁ + i f₂`.
    pub fn quadratic(&self, f: &ComplexField) -> f64 {
        let (re, im) = (f.re(), f.im());
        let dx = self.grid.dx();
        let a: f64 = self.apply_plus(&re).iter().zip(&re).map(|(x, y)| x * y).sum();
        let b: f64 = self.apply_minus(&im).iter().zip(&im).map(|(x, y)| x * y).sum();
        (a + b) * dx
    }
}

pub fn assemble_operators(p: Exponent, c: f64, grid: &Grid) -> Result<LinearOperators> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::param("c", format!("must be positive, got {c}")));
    }
    // Only Q^{p-1} enters, which decays (p-1) times faster than Q itself.
    let pm1 = p.get() - 1.0;
    let edge = ground_state_value(p.get(), c, 0.5 * grid.length()).powf(pm1);
    if edge > 1e-14 {
        return Err(Error::GridTooShort(format!("potential at the boundary is {edge:.2e}")));
    }
    Ok(LinearOperators {
        grid: *grid,
        p: p.get(),
        c,
        k2: grid.wavenumbers().iter().map(|k| k * k).collect(),
        qpow: (0..grid.points()).map(|i| ground_state_value(p.get(), c, grid.x(i)).powf(pm1)).collect(),
    })
}

/// The unstable eigenpair `𝓛Y⁺ = e₀Y⁺`, `Y⁺ = Y1 + iY2`, normalized so that
/// `-2∫Y1Y2 = 1` and `Y1(0) > 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearizedSpectrum {
    pub e0: f64,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub eta0: f64,
    pub p: Exponent,
    pub grid: Grid,
    pub residual: f64,
}

impl LinearizedSpectrum {
    pub fn y_plus(&self) -> ComplexField {
        ComplexField::from_parts(self.grid, &self.y1, &self.y2).expect("stored modes match grid")
    }

    pub fn y_minus(&self) -> ComplexField {
        self.y_plus().conj()
    }
}

/// Mode of the soliton with frequency `c`: `Y_c⁺(x) = c^{1/4} Y⁺(√c x)`.
#[derive(Clone, Debug)]
pub struct ScaledMode {
    pub c: f64,
    pub e_c: f64,
    pub yc_plus: ComplexField,
    pub yc_minus: ComplexField,
}

/// Unstable eigenvalue for frequency `c`. Conjugating `𝓛_c` by `x ↦ √c x`
/// gives `c·𝓛`, so the eigenvalue grows linearly in `c`.
pub fn scaled_eigenvalue(e0: f64, c: f64) -> f64 {
    c * e0
}

pub fn scaled_mode(spec: &LinearizedSpectrum, c: f64, grid: &Grid) -> Result<ScaledMode> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::param("c", format!("must be positive, got {c}")));
    }
    let sc = c.sqrt();
    let yc = spec
        .y_plus()
        .resample(*grid, |x| sc * x, Complex64::new(0.0, 0.0))
        .scale(Complex64::new(c.powf(0.25), 0.0));
    Ok(ScaledMode { c, e_c: scaled_eigenvalue(spec.e0, c), yc_minus: yc.conj(), yc_plus: yc })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenConfig {
    pub tol: f64,
    pub max_outer: usize,
    pub krylov_dim: usize,
    pub max_restarts: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self { tol: 1e-9, max_outer: 60, krylov_dim: 80, max_restarts: 40 }
    }
}

/// Eigenpair of `L₋L₊ Y1 = -e² Y1` for the operators at frequency `c`,
/// by shift-and-invert power iteration with preconditioned GMRES solves.
#[derive(Clone, Debug)]
pub struct EigenSolution {
    pub e: f64,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

pub fn inverse_iteration(p: Exponent, c: f64, grid: &Grid, cfg: &EigenConfig) -> Result<EigenSolution> {
    let ops = assemble_operators(p, c, grid)?;
    let n = grid.points();
    let dx = grid.dx();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * dx;
    let nrm = |a: &[f64]| dot(a, a).sqrt();

    // even start vector with the width of the soliton
    let mut x: Vec<f64> = (0..n).map(|i| ground_state_value(p.get(), c, grid.x(i))).collect();
    let s = nrm(&x);
    x.iter_mut().for_each(|v| *v /= s);

    // Start far below the spectrum: the most negative eigenvalue is then the nearest.
    let pp = p.get();
    let mut shift = -0.5 * pp * (pp + 1.0) * 4.0 * c * c;
    let mut estimate = f64::NAN;
    let mut settled = 0;
    let mut best: Option<EigenSolution> = None;
    let mut stagnant = 0;
    let mut refined = false;
    for it in 0..cfg.max_outer {
        let k2 = &ops.k2;
        let precond = |r: &[f64]| -> Vec<f64> {
            let mut buf: Vec<Complex64> = r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft_forward(&mut buf);
            for (v, &kk) in buf.iter_mut().zip(k2) {
                let d = (kk + c) * (kk + c) - shift;
                *v /= d;
            }
            fft_inverse(&mut buf);
            buf.iter().map(|v| v.re).collect()
        };
        let apply = |v: &[f64]| -> Vec<f64> {
            let mut out = ops.apply_product(v);
            out.iter_mut().zip(v).for_each(|(o, &vi)| *o -= shift * vi);
            out
        };
        let mut y = gmres(&apply, &precond, &x, 1e-14, cfg.krylov_dim, cfg.max_restarts);
        let s = nrm(&y);
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::NonConvergence { iterations: it, detail: "linear solve broke down".into() });
        }
        y.iter_mut().for_each(|v| *v /= s);
        if y.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() < 0.0 {
            y.iter_mut().for_each(|v| *v = -*v);
        }
        x = y;
        let ax = ops.apply_product(&x);
        let lam = dot(&ax, &x);
        if lam < 0.0 {
            let e = (-lam).sqrt();
            let (y1, y2) = normalize_pair(&ops, x.clone(), e);
            let residual = pair_residual(&ops, &y1, &y2, e);
            let improved = best.as_ref().map_or(true, |b: &EigenSolution| residual < 0.5 * b.residual);
            if improved || !refined {
                stagnant = 0;
            } else {
                stagnant += 1;
            }
            if best.as_ref().map_or(true, |b| residual < b.residual) {
                best = Some(EigenSolution { e, y1, y2, residual, iterations: it + 1 });
            }
            if residual < 0.1 * cfg.tol || stagnant >= 3 {
                break;
            }
        }
        if (lam - estimate).abs() < 1e-3 * lam.abs() {
            settled += 1;
        } else {
            settled = 0;
        }
        estimate = lam;
        if settled >= 2 && lam < 0.0 {
            shift = lam * (1.0 + 1e-3);
            refined = true;
        }
    }
    match best {
        Some(sol) if sol.residual < cfg.tol => Ok(sol),
        Some(sol) => Err(Error::NonConvergence {
            iterations: sol.iterations,
            detail: format!("eigen residual floor {:.3e} above tolerance {:.1e}", sol.residual, cfg.tol),
        }),
        None => Err(Error::NonConvergence {
            iterations: cfg.max_outer,
            detail: format!("shifted inverse iteration stalled near {estimate:.6e}"),
        }),
    }
}

/// Rebuild `Y2 = L₊Y1/e`, scale to `-2∫Y1Y2 = 1` and fix `Y1(0) > 0`.
pub fn normalize_pair(ops: &LinearOperators, y1: Vec<f64>, e: f64) -> (Vec<f64>, Vec<f64>) {
    let dx = ops.grid.dx();
    let y2: Vec<f64> = ops.apply_plus(&y1).iter().map(|v| v / e).collect();
    let cross: f64 = y1.iter().zip(&y2).map(|(a, b)| a * b).sum::<f64>() * dx;
    // cross < 0 for the genuine eigenpair; |cross| keeps the scaling real otherwise
    let s = 1.0 / (2.0 * cross.abs()).sqrt();
    let centre = ops.grid.points() / 2;
    let sign = if y1[centre] < 0.0 { -s } else { s };
    (y1.iter().map(|v| v * sign).collect(), y2.iter().map(|v| v * sign).collect())
}

/// `‖L₊Y1 - eY2‖ + ‖L₋Y2 + eY1‖` in L².
pub fn pair_residual(ops: &LinearOperators, y1: &[f64], y2: &[f64], e: f64) -> f64 {
    let dx = ops.grid.dx();
    let a: f64 = ops.apply_plus(y1).iter().zip(y2).map(|(l, y)| (l - e * y).powi(2)).sum();
    let b: f64 = ops.apply_minus(y2).iter().zip(y1).map(|(l, y)| (l + e * y).powi(2)).sum();
    (a * dx).sqrt() + (b * dx).sqrt()
}

/// Restarted GMRES with right preconditioning; returns the best iterate.
fn gmres(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rtol: f64,
    m: usize,
    restarts: usize,
) -> Vec<f64> {
    let n = b.len();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return x;
    }
    for _ in 0..restarts {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        if beta <= rtol * bnorm {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            let mut w = apply(&precond(&basis[j]));
            for (i, bi) in basis.iter().enumerate() {
                let hij: f64 = w.iter().zip(bi).map(|(a, b)| a * b).sum();
                h[i][j] = hij;
                w.iter_mut().zip(bi).for_each(|(a, b)| *a -= hij * b);
            }
            let wn = norm(&w);
            h[j + 1][j] = wn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = (h[j][j] * h[j][j] + h[j + 1][j] * h[j + 1][j]).sqrt();
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            if g[j + 1].abs() <= rtol * bnorm || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        let mut ycoef = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= h[i][k] * ycoef[k];
            }
            ycoef[i] = s / h[i][i];
        }
        let mut dz = vec![0.0; n];
        for (yk, bk) in ycoef.iter().zip(&basis) {
            dz.iter_mut().zip(bk).for_each(|(d, b)| *d += yk * b);
        }
        let dx = precond(&dz);
        x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        if g[used].abs() <= rtol * bnorm {
            break;
        }
    }
    x
}

/// Dense spectral second-derivative matrix.
fn dense_second_derivative(grid: &Grid) -> DMatrix<f64> {
    let n = grid.points();
    let k2: Vec<f64> = grid.wavenumbers().iter().map(|k| -k * k).collect();
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[j] = Complex64::new(1.0, 0.0);
        fft_forward(&mut buf);
        buf.iter_mut().zip(&k2).for_each(|(v, &k)| *v *= k);
        fft_inverse(&mut buf);
        for i in 0..n {
            d[(i, j)] = buf[i].re;
        }
    }
    d
}

#[derive(Clone, Debug)]
pub struct DenseEigen {
    pub e: f64,
    /// Other real eigenvalues of the block operator, sorted descending.
    pub other_real: Vec<f64>,
    pub y1: Vec<f64>,
}

/// Dense eigensolve of the full matrix `L₋L₊` (intended for M ≲ 512).
pub fn dense_eigen(p: Exponent, c: f64, grid: &Grid) -> Result<DenseEigen> {
    let n = grid.points();
    let ops = assemble_operators(p, c, grid)?;
    let d2 = dense_second_derivative(grid);
    let mut lp = -d2.clone();
    let mut lm = -d2;
    for i in 0..n {
        let qp = ops.qpow[i];
        lp[(i, i)] += c - p.get() * qp;
        lm[(i, i)] += c - qp;
    }
    let a = &lm * &lp;
    let eig = a.clone().complex_eigenvalues();
    let mut negatives: Vec<f64> = eig
        .iter()
        .filter(|z| z.im.abs() < 1e-6 * (1.0 + z.re.abs()) && z.re < -1e-6)
        .map(|z| z.re)
        .collect();
    negatives.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lam = *negatives.first().ok_or_else(|| Error::NonConvergence {
        iterations: 0,
        detail: "dense spectrum has no negative real eigenvalue".into(),
    })?;
    // eigenvector by one inverse-iteration sweep on the dense LU
    let shifted = &a - DMatrix::identity(n, n) * (lam * (1.0 + 1e-10));
    let lu = shifted.lu();
    let mut v = DVector::from_iterator(n, (0..n).map(|i| ground_state_value(p.get(), c, grid.x(i))));
    for _ in 0..3 {
        v = lu.solve(&v).ok_or_else(|| Error::NonConvergence {
            iterations: 0,
            detail: "singular dense shift".into(),
        })?;
        let s = v.norm();
        v /= s;
    }
    Ok(DenseEigen {
        e: (-lam).sqrt(),
        other_real: negatives.iter().skip(1).map(|l| (-l).sqrt()).collect(),
        y1: v.iter().copied().collect(),
    })
}

/// Unstable eigenvalue by shooting the decaying ODE solutions.
///
/// Even solutions of `Y1'' = (c - pQ^{p-1})Y1 - eY2`, `Y2'' = (c - Q^{p-1})Y2 + eY1`
/// are launched from `x = 0`; beyond the core `w = Y1 + iY2` solves
/// `w'' = (c + ie)w`, and an eigenvalue is a zero of the determinant of the map
/// from the two launch vectors to the growing coefficient.
pub fn shooting_eigenvalue(p: Exponent, c: f64, bracket: (f64, f64), samples: usize) -> Result<f64> {
    let det = |e: f64| shooting_determinant(p.get(), c, e);
    let (lo, hi) = bracket;
    let mut prev_e = lo;
    let mut prev_d = det(lo);
    for s in 1..=samples {
        let e = lo + (hi - lo) * s as f64 / samples as f64;
        let d = det(e);
        if d.signum() != prev_d.signum() {
            return brent(&det, prev_e, e, prev_d, d);
        }
        prev_e = e;
        prev_d = d;
    }
    Err(Error::NonConvergence { iterations: samples, detail: "no sign change of the shooting determinant".into() })
}

fn shooting_determinant(p: f64, c: f64, e: f64) -> f64 {
    let sc = c.sqrt();
    let x_end = 9.0 / sc;
    let h = 2.5e-4 / sc;
    let steps = (x_end / h).round() as usize;
    let mu = Complex64::new(c, e).sqrt();
    let mut coeffs = [Complex64::new(0.0, 0.0); 2];
    for (col, start) in [[1.0, 0.0], [0.0, 1.0]].iter().enumerate() {
        // state: y1, y2, y1', y2'
        let mut s = [start[0], start[1], 0.0, 0.0];
        let rhs = |x: f64, s: &[f64; 4]| -> [f64; 4] {
            let q = ground_state_value(p, c, x).powf(p - 1.0);
            [s[2], s[3], (c - p * q) * s[0] - e * s[1], (c - q) * s[1] + e * s[0]]
        };
        let mut x = 0.0;
        for _ in 0..steps {
            let k1 = rhs(x, &s);
            let t: [f64; 4] = std::array::from_fn(|i| s[i] + 0.5 * h * k1[i]);
            let k2 = rhs(x + 0.5 * h, &t);
            let t: [f64; 4] = std::array::from_fn(|i| s[i] + 0.5 * h * k2[i]);
            let k3 = rhs(x + 0.5 * h, &t);
            let t: [f64; 4] = std::array::from_fn(|i| s[i] + h * k3[i]);
            let k4 = rhs(x + h, &t);
            for i in 0..4 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            x += h;
        }
        let w = Complex64::new(s[0], s[1]);
        let dw = Complex64::new(s[2], s[3]);
        coeffs[col] = (dw + mu * w) / (2.0 * mu) * (-mu * x).exp();
    }
    coeffs[0].re * coeffs[1].im - coeffs[1].re * coeffs[0].im
}

fn brent(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> Result<f64> {
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut bisected = true;
    for _ in 0..200 {
        if fb == 0.0 || (b - a).abs() < 1e-14 * b.abs().max(1.0) {
            return Ok(b);
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc)) + b * fa * fc / ((fb - fa) * (fb - fc)) + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let out = !((s > lo.min(b)) && (s < lo.max(b)));
        if out
            || (bisected && (s - b).abs() >= (b - c).abs() / 2.0)
            || (!bisected && (s - b).abs() >= (c - d).abs() / 2.0)
        {
            s = 0.5 * (a + b);
            bisected = true;
        } else {
            bisected = false;
        }
        let fs = f(s);
        d = c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Err(Error::NonConvergence { iterations: 200, detail: "Brent root finder".into() })
}

/// Log-linear fit of the tail of `|f|` against `|x|`; returns the decay rate.
pub fn decay_rate(f: &ComplexField) -> Result<f64> {
    let peak = f.max_abs();
    if peak == 0.0 {
        return Err(Error::BadFit("zero field has no tail".into()));
    }
    let grid = f.grid();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, v) in f.values().iter().enumerate() {
        let a = v.norm();
        if a > 1e-12 * peak && a < 1e-2 * peak {
            xs.push(grid.x(i).abs());
            ys.push(a.ln());
        }
    }
    if xs.len() < 8 {
        return Err(Error::BadFit("too few tail samples".into()));
    }
    let (slope, _, rms) = least_squares(&xs, &ys);
    if rms > 0.3 {
        return Err(Error::BadFit(format!("tail is not exponential (rms log residual {rms:.2})")));
    }
    Ok(-slope)
}

/// Slope, intercept and rms residual of a least-squares line.
pub(crate) fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rms = (xs.iter().zip(ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    (slope, icpt, rms)
}

/// Unstable eigenpair at `c = 1`, with the tail rate `η₀` of `Y±`.
pub fn compute_eigenmode(p: Exponent, grid: &Grid, tol: f64) -> Result<LinearizedSpectrum> {
    let cfg = EigenConfig { tol, ..EigenConfig::default() };
    let sol = inverse_iteration(p, 1.0, grid, &cfg)?;
    let spec = LinearizedSpectrum {
        e0: sol.e,
        y1: sol.y1,
        y2: sol.y2,
        eta0: 0.0,
        p,
        grid: *grid,
        residual: sol.residual,
    };
    let eta0 = decay_rate(&spec.y_plus())?;
    if eta0 < 0.1 {
        return Err(Error::NonConvergence {
            iterations: sol.iterations,
            detail: format!("candidate tail rate {eta0:.3} marks a continuum artifact"),
        });
    }
    Ok(LinearizedSpectrum { eta0, ..spec })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coercivity {
    pub quadratic: f64,
    /// Squares of `∫∂ₓQ v₁`, `∫Q v₂`, `Im∫Y⁺v̄`, `Im∫Y⁻v̄`.
    pub projections: [f64; 4],
}

pub fn coercivity_check(v: &ComplexField, spec: &LinearizedSpectrum) -> Result<Coercivity> {
    let grid = spec.grid;
    if *v.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let ops = assemble_operators(spec.p, 1.0, &grid)?;
    let dx = grid.dx();
    let p = spec.p.get();
    let mut dq_v1 = 0.0;
    let mut q_v2 = 0.0;
    for (i, val) in v.values().iter().enumerate() {
        let x = grid.x(i);
        dq_v1 += ground_state_slope(p, 1.0, x) * val.re;
        q_v2 += ground_state_value(p, 1.0, x) * val.im;
    }
    let yp = inner_imag(v, &spec.y_plus())?;
    let ym = inner_imag(v, &spec.y_minus())?;
    Ok(Coercivity {
        quadratic: ops.quadratic(v),
        projections: [(dq_v1 * dx).powi(2), (q_v2 * dx).powi(2), yp * yp, ym * ym],
    })
}

/// Odd-part fraction `‖f(x) - f(-x)‖ / (2‖f‖)` on a centred grid.
pub fn odd_fraction(values: &[f64]) -> f64 {
    let n = values.len();
    let mut odd = 0.0;
    let mut all = 0.0;
    for i in 1..n {
        let j = n - i;
        odd += (0.5 * (values[i] - values[j])).powi(2);
        all += values[i] * values[i];
    }
    (odd / all.max(f64::MIN_POSITIVE)).sqrt()
}

