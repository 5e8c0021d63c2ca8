//! Periodic grids, complex fields and the spectral calculus on them.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::{Add, Mul, Sub};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid on `[-L/2, L/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    length: f64,
    points: usize,
}

impl Grid {
    pub fn new(length: f64, points: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::param("length", format!("must be positive, got {length}")));
        }
        if points < 16 || points % 2 != 0 {
            return Err(Error::param("points", format!("must be even and >= 16, got {points}")));
        }
        Ok(Self { length, points })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn dx(&self) -> f64 {
        self.length / self.points as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -0.5 * self.length + i as f64 * self.dx()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.x(i)).collect()
    }

    /// Wavenumber of FFT slot `i`; slot `M/2` carries the Nyquist mode `-π/dx`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        let m = self.points as i64;
        let i = i as i64;
        let signed = if i < m / 2 { i } else { i - m };
        2.0 * PI * signed as f64 / self.length
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.wavenumber(i)).collect()
    }

    pub fn nyquist_index(&self) -> usize {
        self.points / 2
    }
}

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

thread_local! {
    static PLANS: RefCell<HashMap<usize, Plans>> = RefCell::new(HashMap::new());
}

fn plans(n: usize) -> Plans {
    PLANS.with(|cell| {
        cell.borrow_mut()
            .entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
            })
            .clone()
    })
}

/// In-place forward DFT, no normalization.
pub fn fft_forward(buf: &mut [Complex64]) {
    plans(buf.len()).0.process(buf);
}

/// In-place inverse DFT, normalized so that it inverts [`fft_forward`].
pub fn fft_inverse(buf: &mut [Complex64]) {
    plans(buf.len()).1.process(buf);
    let s = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|v| *v *= s);
}

/// Complex samples on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.points() {
            return Err(Error::param(
                "values",
                format!("expected {} samples, got {}", grid.points(), values.len()),
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.points()] }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64) -> Complex64) -> Self {
        let values = (0..grid.points()).map(|i| f(grid.x(i))).collect();
        Self { grid, values }
    }

    pub fn from_real(grid: Grid, re: &[f64]) -> Result<Self> {
        Self::new(grid, re.iter().map(|&r| Complex64::new(r, 0.0)).collect())
    }

    pub fn from_parts(grid: Grid, re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::param("im", "real and imaginary parts differ in length"));
        }
        Self::new(grid, re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.im).collect()
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, s: Complex64) -> Self {
        self.map(|v| v * s)
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: Complex64, other: &Self) -> Result<()> {
        self.same_grid(other)?;
        self.values.iter_mut().zip(&other.values).for_each(|(a, &b)| *a += s * b);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite)
        }
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Unnormalized DFT of the samples.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut buf = self.values.clone();
        fft_forward(&mut buf);
        buf
    }

    pub fn from_spectrum(grid: Grid, mut spec: Vec<Complex64>) -> Result<Self> {
        if spec.len() != grid.points() {
            return Err(Error::param("spectrum", "length does not match grid"));
        }
        fft_inverse(&mut spec);
        Ok(Self { grid, values: spec })
    }

    /// Apply a real Fourier multiplier `m(k)`.
    pub fn fourier_multiply(&self, m: impl Fn(f64) -> Complex64) -> Self {
        let mut buf = self.spectrum();
        for (i, v) in buf.iter_mut().enumerate() {
            *v *= m(self.grid.wavenumber(i));
        }
        fft_inverse(&mut buf);
        Self { grid: self.grid, values: buf }
    }

    /// Trigonometric interpolant evaluated at arbitrary points.
    pub fn interpolate(&self, points: &[f64]) -> Vec<Complex64> {
        let m = self.grid.points();
        let spec = self.spectrum();
        let x0 = self.grid.x(0);
        let nyq = self.grid.nyquist_index();
        let inv_m = 1.0 / m as f64;
        points
            .iter()
            .map(|&x| {
                let step = Complex64::from_polar(1.0, 2.0 * PI * (x - x0) / self.grid.length());
                // positive frequencies 0..nyq, negative frequencies walked downward
                let mut acc = Complex64::new(0.0, 0.0);
                let mut w = Complex64::new(1.0, 0.0);
                for coeff in spec.iter().take(nyq) {
                    acc += coeff * w;
                    w *= step;
                }
                let back = step.conj();
                let mut w = back;
                for i in (nyq + 1..m).rev() {
                    acc += spec[i] * w;
                    w *= back;
                }
                // split the Nyquist mode symmetrically so real data stays real
                let ny = spec[nyq] * 0.5;
                let wn = Complex64::from_polar(1.0, PI * (x - x0) / self.grid.length() * m as f64);
                acc += ny * (wn + wn.conj());
                acc * inv_m
            })
            .collect()
    }

    /// Resample onto `target` by trigonometric interpolation, with `outside`
    /// for target points that fall outside this field's period cell.
    pub fn resample(&self, target: Grid, map: impl Fn(f64) -> f64, outside: Complex64) -> Self {
        let half = 0.5 * self.grid.length();
        let xs: Vec<f64> = target.coordinates().into_iter().map(map).collect();
        let inside: Vec<f64> = xs.iter().copied().filter(|x| x.abs() < half).collect();
        let vals = self.interpolate(&inside);
        let mut it = vals.into_iter();
        let values = xs
            .iter()
            .map(|x| if x.abs() < half { it.next().unwrap() } else { outside })
            .collect();
        Self { grid: target, values }
    }
}

impl Add for &ComplexField {
    type Output = ComplexField;
    fn add(self, rhs: Self) -> ComplexField {
        assert_eq!(self.grid, rhs.grid, "grid mismatch");
        ComplexField {
            grid: self.grid,
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexField {
    type Output = ComplexField;
    fn sub(self, rhs: Self) -> ComplexField {
        assert_eq!(self.grid, rhs.grid, "grid mismatch");
        ComplexField {
            grid: self.grid,
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul<f64> for &ComplexField {
    type Output = ComplexField;
    fn mul(self, rhs: f64) -> ComplexField {
        self.map(|v| v * rhs)
    }
}

/// `(ik)^order f` computed in frequency space.
///
/// Odd orders drop the unpaired Nyquist mode so real data stays real.
pub fn spectral_derivative(f: &ComplexField, order: u32) -> Result<ComplexField> {
    if order == 0 {
        return Err(Error::param("order", "derivative order must be positive"));
    }
    let nyq = f.grid().nyquist_index();
    let mut buf = f.spectrum();
    for (i, v) in buf.iter_mut().enumerate() {
        if i == nyq && order % 2 == 1 {
            *v = Complex64::new(0.0, 0.0);
            continue;
        }
        let k = f.grid().wavenumber(i);
        *v *= Complex64::new(0.0, k).powu(order);
    }
    ComplexField::from_spectrum(*f.grid(), buf)
}

/// `Re ∫ f ḡ` by the rectangle rule.
pub fn inner_real(f: &ComplexField, g: &ComplexField) -> Result<f64> {
    f.same_grid(g)?;
    let s: f64 = f.values.iter().zip(&g.values).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
    Ok(s * f.grid.dx())
}

/// `Im ∫ f̄ g` by the rectangle rule.
pub fn inner_imag(f: &ComplexField, g: &ComplexField) -> Result<f64> {
    f.same_grid(g)?;
    let s: f64 = f.values.iter().zip(&g.values).map(|(a, b)| a.re * b.im - a.im * b.re).sum();
    Ok(s * f.grid.dx())
}

pub fn norm_l2(f: &ComplexField) -> f64 {
    (f.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * f.grid.dx()).sqrt()
}

fn weighted_spectral_norm(f: &ComplexField, weight: impl Fn(f64) -> f64) -> f64 {
    let spec = f.spectrum();
    let g = f.grid();
    // Parseval: sum |f_i|^2 dx = (dx / M) sum |F_k|^2
    let s: f64 = spec.iter().enumerate().map(|(i, v)| v.norm_sqr() * weight(g.wavenumber(i))).sum();
    (s * g.dx() / g.points() as f64).sqrt()
}

pub fn norm_h1(f: &ComplexField) -> f64 {
    weighted_spectral_norm(f, |k| 1.0 + k * k)
}

pub fn norm_hminus1(f: &ComplexField) -> f64 {
    weighted_spectral_norm(f, |k| 1.0 / (1.0 + k * k))
}

/// `‖∂_x f‖_{L²}`.
pub fn norm_gradient(f: &ComplexField) -> f64 {
    weighted_spectral_norm(f, |k| k * k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "M")]
    pub points: usize,
    pub t: f64,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Write `path` (raw little-endian interleaved re/im) and its JSON sidecar.
pub fn write_dump(path: &Path, field: &ComplexField, t: f64) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in field.values() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    w.flush()?;
    let header = DumpHeader { length: field.grid().length(), points: field.grid().points(), t };
    let json = serde_json::to_string_pretty(&header).map_err(|e| Error::Dump(e.to_string()))?;
    fs::write(sidecar(path), json)?;
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<(ComplexField, f64)> {
    let header: DumpHeader = serde_json::from_str(&fs::read_to_string(sidecar(path))?)
        .map_err(|e| Error::Dump(e.to_string()))?;
    let grid = Grid::new(header.length, header.points)?;
    let mut bytes = Vec::new();
    BufReader::new(fs::File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() != 16 * header.points {
        return Err(Error::Dump(format!(
            "expected {} bytes, found {}",
            16 * header.points,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Ok((ComplexField::new(grid, values)?, header.t))
}
