//! Periodic lattice, spectral derivatives and the magnetic Dirac operator.
//!
//! Points are `x_{ijk} = center − L/2 + (i, j, k)·h`, stored row-major with
//! the first axis slowest. Spinor fields are stored component-major: the
//! four components follow each other, each an `N³` block.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::algebra::{build_dirac_basis, spin_operator, DiracBasis, Matrix4, MatrixVector};
use crate::error::{Error, Result};
use crate::field::{FieldSpec, Mat3, Vec3};

type C = Complex64;
const CZ: C = C::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub l: f64,
    pub center: Vec3,
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "N={} L={} center=({},{},{})",
            self.n, self.l, self.center[0], self.center[1], self.center[2]
        )
    }
}

impl Grid {
    pub fn new(n: usize, l: f64, center: Vec3) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("N must be even and at least 4, got {n}")));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidGrid(format!("L must be positive and finite, got {l}")));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGrid("center must be finite".into()));
        }
        Ok(Grid { n, l, center })
    }

    pub fn centered(n: usize, l: f64) -> Result<Self> {
        Self::new(n, l, [0.0; 3])
    }

    pub fn h(&self) -> f64 {
        self.l / self.n as f64
    }

    /// Number of lattice points `N³`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(3)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.n;
        (idx / (n * n), (idx / n) % n, idx % n)
    }

    /// Absolute coordinates of a point.
    #[inline]
    pub fn point(&self, idx: usize) -> Vec3 {
        let r = self.relative(idx);
        [r[0] + self.center[0], r[1] + self.center[1], r[2] + self.center[2]]
    }

    /// Coordinates relative to the center, each in `[−L/2, L/2)`.
    #[inline]
    pub fn relative(&self, idx: usize) -> Vec3 {
        let (i, j, k) = self.unindex(idx);
        let h = self.h();
        let o = -0.5 * self.l;
        [o + i as f64 * h, o + j as f64 * h, o + k as f64 * h]
    }

    /// Index of the lattice node at the center.
    pub fn center_index(&self) -> usize {
        let c = self.n / 2;
        self.index(c, c, c)
    }

    /// `|x − center|` replaced by `max(|x − center|, h/2)`.
    #[inline]
    pub fn regularized_radius(&self, idx: usize) -> f64 {
        let r = self.relative(idx);
        (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt().max(0.5 * self.h())
    }

    /// Angular wavenumber of FFT bin `i`: `2π/L · (i or i − N)`.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> f64 {
        let m = if i < self.n / 2 { i as i64 } else { i as i64 - self.n as i64 };
        2.0 * PI / self.l * m as f64
    }

    /// Grid compatibility for operands.
    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: self.to_string(),
                found: other.to_string(),
            })
        }
    }
}

/// Smooth radial cutoff equal to 1 for `r ≤ 0.25 L` and 0 for `r ≥ 0.4 L`.
pub fn cutoff(r: f64, l: f64) -> f64 {
    let (a, b) = (0.25 * l, 0.4 * l);
    if r <= a {
        return 1.0;
    }
    if r >= b {
        return 0.0;
    }
    let t = (r - a) / (b - a);
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    f(1.0 - t) / (f(1.0 - t) + f(t))
}

/// Three-dimensional FFT on an `N³` block, built from 1-D plans.
pub struct Fft3 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fft3({})", self.n)
    }
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn run(&self, data: &mut [C], plan: &Arc<dyn Fft<f64>>, scratch: &mut Vec<C>) {
        let n = self.n;
        debug_assert_eq!(data.len(), n * n * n);
        plan.process(data);
        scratch.resize(n * n * n, CZ);
        // Second axis.
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    scratch[(i * n + k) * n + j] = data[(i * n + j) * n + k];
                }
            }
        }
        plan.process(scratch);
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    data[(i * n + j) * n + k] = scratch[(i * n + k) * n + j];
                }
            }
        }
        // First axis.
        for j in 0..n {
            for k in 0..n {
                for i in 0..n {
                    scratch[(j * n + k) * n + i] = data[(i * n + j) * n + k];
                }
            }
        }
        plan.process(scratch);
        for j in 0..n {
            for k in 0..n {
                for i in 0..n {
                    data[(i * n + j) * n + k] = scratch[(j * n + k) * n + i];
                }
            }
        }
    }

    pub fn forward(&self, data: &mut [C]) {
        let mut s = Vec::new();
        self.run(data, &self.fwd, &mut s);
    }

    /// Normalized inverse.
    pub fn inverse(&self, data: &mut [C]) {
        let mut s = Vec::new();
        self.run(data, &self.inv, &mut s);
        let norm = 1.0 / (self.n * self.n * self.n) as f64;
        data.iter_mut().for_each(|v| *v *= norm);
    }
}

/// Complex scalar samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<C>,
}

impl ScalarField {
    pub fn from_fn(grid: Grid, f: impl Fn(Vec3) -> C) -> Self {
        ScalarField {
            grid,
            values: (0..grid.len()).map(|i| f(grid.point(i))).collect(),
        }
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Self {
        ScalarField {
            grid,
            values: values.iter().map(|&v| C::new(v, 0.0)).collect(),
        }
    }

    pub fn real(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn integral(&self) -> C {
        self.values.iter().sum::<C>() * self.grid.cell_volume()
    }
}

/// `C⁴`-valued samples on a grid, component-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    pub grid: Grid,
    pub data: Vec<C>,
}

impl SpinorField {
    pub fn zeros(grid: Grid) -> Self {
        SpinorField {
            grid,
            data: vec![CZ; 4 * grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Vec3) -> [C; 4]) -> Self {
        let mut u = Self::zeros(grid);
        let n3 = grid.len();
        for i in 0..n3 {
            let v = f(grid.point(i));
            for c in 0..4 {
                u.data[c * n3 + i] = v[c];
            }
        }
        u
    }

    /// Builds a field from a flat component-major vector.
    pub fn from_vec(grid: Grid, data: Vec<C>) -> Result<Self> {
        if data.len() != 4 * grid.len() {
            return Err(Error::Format(format!(
                "expected {} values, got {}",
                4 * grid.len(),
                data.len()
            )));
        }
        Ok(SpinorField { grid, data })
    }

    /// Gaussian `e^{−|x−x₀|²/(2σ²)} v` centered at the absolute point `x₀`.
    pub fn gaussian(grid: Grid, x0: Vec3, sigma: f64, v: [C; 4]) -> Self {
        Self::from_fn(grid, |x| {
            let r2: f64 = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum();
            let g = (-r2 / (2.0 * sigma * sigma)).exp();
            v.map(|z| z * g)
        })
    }

    /// Plane wave `e^{ik·(x − center)} v` for the lattice wavevector with
    /// integer mode numbers `m`.
    pub fn plane_wave(grid: Grid, m: [i64; 3], v: [C; 4]) -> Self {
        let kv = m.map(|mi| 2.0 * PI / grid.l * mi as f64);
        Self::from_fn(grid, |x| {
            let r = [x[0] - grid.center[0], x[1] - grid.center[1], x[2] - grid.center[2]];
            let ph = C::from_polar(1.0, kv[0] * r[0] + kv[1] * r[1] + kv[2] * r[2]);
            v.map(|c| c * ph)
        })
    }

    #[inline]
    pub fn component(&self, c: usize) -> &[C] {
        let n3 = self.grid.len();
        &self.data[c * n3..(c + 1) * n3]
    }

    #[inline]
    pub fn component_mut(&mut self, c: usize) -> &mut [C] {
        let n3 = self.grid.len();
        &mut self.data[c * n3..(c + 1) * n3]
    }

    #[inline]
    pub fn at(&self, idx: usize) -> [C; 4] {
        let n3 = self.grid.len();
        [self.data[idx], self.data[n3 + idx], self.data[2 * n3 + idx], self.data[3 * n3 + idx]]
    }

    #[inline]
    pub fn set(&mut self, idx: usize, v: [C; 4]) {
        let n3 = self.grid.len();
        for (c, val) in v.into_iter().enumerate() {
            self.data[c * n3 + idx] = val;
        }
    }

    /// `|u(x)|²` at a lattice point.
    #[inline]
    pub fn density(&self, idx: usize) -> f64 {
        self.at(idx).iter().map(|v| v.norm_sqr()).sum()
    }

    /// Discrete `(u, v) = h³ Σ u·v̄`.
    pub fn inner(&self, other: &SpinorField) -> C {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b.conj())
            .sum::<C>()
            * self.grid.cell_volume()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `‖u‖₂` evaluated from Fourier coefficients.
    pub fn norm_fourier(&self, fft: &Fft3) -> f64 {
        let n3 = self.grid.len();
        let mut total = 0.0;
        for c in 0..4 {
            let mut buf = self.component(c).to_vec();
            fft.forward(&mut buf);
            total += buf.iter().map(|v| v.norm_sqr()).sum::<f64>() / n3 as f64;
        }
        (total * self.grid.cell_volume()).sqrt()
    }

    pub fn scale(&mut self, s: C) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn scaled(&self, s: C) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// `self += s·other`.
    pub fn axpy(&mut self, s: C, other: &SpinorField) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn sub(&self, other: &SpinorField) -> SpinorField {
        let mut out = self.clone();
        out.axpy(C::new(-1.0, 0.0), other);
        out
    }

    pub fn add(&self, other: &SpinorField) -> SpinorField {
        let mut out = self.clone();
        out.axpy(C::new(1.0, 0.0), other);
        out
    }

    /// Pointwise product with real samples.
    pub fn mul_real(&self, w: &[f64]) -> SpinorField {
        let n3 = self.grid.len();
        let mut out = self.clone();
        for c in 0..4 {
            for i in 0..n3 {
                out.data[c * n3 + i] *= w[i];
            }
        }
        out
    }

    /// Pointwise product with a scalar field.
    pub fn mul_scalar(&self, w: &ScalarField) -> SpinorField {
        let n3 = self.grid.len();
        let mut out = self.clone();
        for c in 0..4 {
            for i in 0..n3 {
                out.data[c * n3 + i] *= w.values[i];
            }
        }
        out
    }

    /// Pointwise `M(x) u(x)` for a matrix field given per point.
    pub fn mul_matrix_field(&self, m: impl Fn(usize) -> Matrix4) -> SpinorField {
        let mut out = SpinorField::zeros(self.grid);
        for i in 0..self.grid.len() {
            out.set(i, m(i).apply(&self.at(i)));
        }
        out
    }

    /// Pointwise product with a constant matrix.
    pub fn mul_matrix(&self, m: &Matrix4) -> SpinorField {
        self.mul_matrix_field(|_| *m)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn max_abs_diff(&self, other: &SpinorField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Trilinear interpolation of all components at an absolute point
    /// (periodic wrap).
    pub fn interpolate_trilinear(&self, x: Vec3) -> [C; 4] {
        let g = &self.grid;
        let n = g.n as i64;
        let h = g.h();
        let mut base = [0i64; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let s = (x[a] - g.center[a] + 0.5 * g.l) / h;
            let f = s.floor();
            base[a] = f as i64;
            frac[a] = s - f;
        }
        let mut out = [CZ; 4];
        for corner in 0..8 {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                idx[a] = (base[a] + bit as i64).rem_euclid(n) as usize;
            }
            if w == 0.0 {
                continue;
            }
            let v = self.at(g.index(idx[0], idx[1], idx[2]));
            for c in 0..4 {
                out[c] += v[c] * w;
            }
        }
        out
    }

    /// Writes the binary layout: `N` (u64 LE), `L` (f64 LE), center (3×f64
    /// LE), then for each component in order the `N³` samples in row-major
    /// point order as (re, im) f64 LE pairs.
    pub fn write_binary(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&(self.grid.n as u64).to_le_bytes())?;
        w.write_all(&self.grid.l.to_le_bytes())?;
        for c in self.grid.center {
            w.write_all(&c.to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let mut b8 = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut b8).map_err(|e| Error::Format(e.to_string()))?;
            Ok(b8)
        };
        let n = u64::from_le_bytes(next(r)?) as usize;
        let l = f64::from_le_bytes(next(r)?);
        let mut center = [0.0; 3];
        for c in center.iter_mut() {
            *c = f64::from_le_bytes(next(r)?);
        }
        if n > 1024 {
            return Err(Error::Format(format!("implausible N = {n}")));
        }
        let grid = Grid::new(n, l, center).map_err(|e| Error::Format(e.to_string()))?;
        let mut data = Vec::with_capacity(4 * grid.len());
        for _ in 0..4 * grid.len() {
            let re = f64::from_le_bytes(next(r)?);
            let im = f64::from_le_bytes(next(r)?);
            data.push(C::new(re, im));
        }
        let mut rest = [0u8; 1];
        match r.read(&mut rest) {
            Ok(0) => {}
            Ok(_) => return Err(Error::Format("trailing bytes after spinor data".into())),
            Err(e) => return Err(Error::Format(e.to_string())),
        }
        Ok(SpinorField { grid, data })
    }
}

/// Everything needed to apply the magnetic Dirac operator on a grid.
#[derive(Clone, Debug)]
pub struct OperatorHandle {
    pub grid: Grid,
    /// Gauge potential samples `A^k`.
    pub a: Arc<[Vec<f64>; 3]>,
    /// Spectral curl of the sampled potential.
    pub b: Arc<[Vec<f64>; 3]>,
    pub m: f64,
    pub basis: DiracBasis,
    pub spin: MatrixVector,
    fft: Arc<Fft3>,
    kvec: Arc<Vec<f64>>,
}

impl OperatorHandle {
    /// Operator with potential samples `a`; `B` is the spectral curl of `a`.
    pub fn new(grid: Grid, a: [Vec<f64>; 3], m: f64) -> Result<Self> {
        if a.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::InvalidGrid("potential sample count does not match N³".into()));
        }
        if a.iter().flatten().any(|v| !v.is_finite()) || !m.is_finite() {
            return Err(Error::InvalidGrid("potential samples and mass must be finite".into()));
        }
        let fft = Arc::new(Fft3::new(grid.n));
        let kvec = Arc::new((0..grid.n).map(|i| grid.wavenumber(i)).collect::<Vec<_>>());
        let basis = build_dirac_basis();
        let mut op = OperatorHandle {
            grid,
            a: Arc::new(a),
            b: Arc::new([vec![], vec![], vec![]]),
            m,
            spin: spin_operator(&basis),
            basis,
            fft,
            kvec,
        };
        let b = op.spectral_curl(&op.a);
        op.b = Arc::new(b);
        Ok(op)
    }

    pub fn free(grid: Grid, m: f64) -> Result<Self> {
        let z = vec![0.0; grid.len()];
        Self::new(grid, [z.clone(), z.clone(), z], m)
    }

    /// Samples the gauge of `spec`, multiplied by [`cutoff`] when `use_cutoff`.
    pub fn from_field(grid: Grid, spec: &FieldSpec, m: f64, use_cutoff: bool) -> Result<Self> {
        let gauge = spec
            .gauge()
            .ok_or_else(|| Error::NoGauge(format!("{} is not divergence free", spec.id())))?;
        let mut a = [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]];
        for i in 0..grid.len() {
            let x = grid.point(i);
            let rel = grid.relative(i);
            let chi = if use_cutoff {
                cutoff((rel[0] * rel[0] + rel[1] * rel[1] + rel[2] * rel[2]).sqrt(), grid.l)
            } else {
                1.0
            };
            if chi == 0.0 {
                continue;
            }
            let v = gauge(x);
            for k in 0..3 {
                a[k][i] = chi * v[k];
            }
        }
        Self::new(grid, a, m)
    }

    /// Same operator with a different spin triple (mutation hook).
    pub fn with_spin(mut self, spin: MatrixVector) -> Self {
        self.spin = spin;
        self
    }

    pub fn with_mass(mut self, m: f64) -> Self {
        self.m = m;
        self
    }

    pub fn fft(&self) -> &Fft3 {
        &self.fft
    }

    /// Operator dimension `4N³`.
    pub fn dim(&self) -> usize {
        4 * self.grid.len()
    }

    /// Spectral derivative along `axis` of a sample block.
    pub fn derivative(&self, values: &[C], axis: usize) -> Vec<C> {
        let mut buf = values.to_vec();
        self.fft.forward(&mut buf);
        self.apply_symbol(&mut buf, axis);
        self.fft.inverse(&mut buf);
        buf
    }

    fn apply_symbol(&self, hat: &mut [C], axis: usize) {
        let n = self.grid.n;
        for (idx, v) in hat.iter_mut().enumerate() {
            let m = match axis {
                0 => idx / (n * n),
                1 => (idx / n) % n,
                _ => idx % n,
            };
            *v *= C::new(0.0, self.kvec[m]);
        }
    }

    /// All three spectral derivatives of a sample block with one forward FFT.
    pub fn gradient(&self, values: &[C]) -> [Vec<C>; 3] {
        let mut hat = values.to_vec();
        self.fft.forward(&mut hat);
        std::array::from_fn(|axis| {
            let mut buf = hat.clone();
            self.apply_symbol(&mut buf, axis);
            self.fft.inverse(&mut buf);
            buf
        })
    }

    /// Real part of the spectral gradient of real samples.
    pub fn gradient_real(&self, values: &[f64]) -> [Vec<f64>; 3] {
        let c: Vec<C> = values.iter().map(|&v| C::new(v, 0.0)).collect();
        self.gradient(&c).map(|g| g.into_iter().map(|v| v.re).collect())
    }

    fn spectral_curl(&self, a: &[Vec<f64>; 3]) -> [Vec<f64>; 3] {
        let g = [self.gradient_real(&a[0]), self.gradient_real(&a[1]), self.gradient_real(&a[2])];
        // g[k][j] = ∂_j A^k.
        let n3 = self.grid.len();
        let mut b = [vec![0.0; n3], vec![0.0; n3], vec![0.0; n3]];
        for i in 0..n3 {
            b[0][i] = g[2][1][i] - g[1][2][i];
            b[1][i] = g[0][2][i] - g[2][0][i];
            b[2][i] = g[1][0][i] - g[0][1][i];
        }
        b
    }

    /// Spectral Jacobian `DB[i][j] = ∂_j B_i` of the lattice field.
    pub fn db(&self) -> [[Vec<f64>; 3]; 3] {
        [
            self.gradient_real(&self.b[0]),
            self.gradient_real(&self.b[1]),
            self.gradient_real(&self.b[2]),
        ]
    }

    pub fn b_at(&self, idx: usize) -> Vec3 {
        [self.b[0][idx], self.b[1][idx], self.b[2][idx]]
    }

    pub fn a_at(&self, idx: usize) -> Vec3 {
        [self.a[0][idx], self.a[1][idx], self.a[2][idx]]
    }

    /// `sup |B|` over the lattice.
    pub fn b_sup(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| crate::field::norm(self.b_at(i)))
            .fold(0.0, f64::max)
    }

    /// `S·v` for a real vector.
    pub fn spin_dot(&self, v: Vec3) -> Matrix4 {
        self.spin.contract_real(v)
    }

    /// `(S·B) u` pointwise.
    pub fn spin_b(&self, u: &SpinorField) -> SpinorField {
        u.mul_matrix_field(|i| self.spin_dot(self.b_at(i)))
    }

    fn check(&self, u: &SpinorField) -> Result<()> {
        self.grid.ensure_same(&u.grid)
    }

    /// `∇_{A,k} u = (∂_k − iA^k) u` for `k = 0, 1, 2`.
    pub fn covariant_derivatives(&self, u: &SpinorField) -> Result<[SpinorField; 3]> {
        self.check(u)?;
        let n3 = self.grid.len();
        let mut out: [SpinorField; 3] = std::array::from_fn(|_| SpinorField::zeros(self.grid));
        for c in 0..4 {
            let comp = u.component(c);
            let grad = self.gradient(comp);
            for (k, g) in grad.into_iter().enumerate() {
                let dst = out[k].component_mut(c);
                for i in 0..n3 {
                    dst[i] = g[i] - C::new(0.0, self.a[k][i]) * comp[i];
                }
            }
        }
        Ok(out)
    }

    /// `∇_{A,k} u` along one axis.
    pub fn covariant_derivative(&self, u: &SpinorField, k: usize) -> Result<SpinorField> {
        self.check(u)?;
        let n3 = self.grid.len();
        let mut out = SpinorField::zeros(self.grid);
        for c in 0..4 {
            let comp = u.component(c);
            let d = self.derivative(comp, k);
            let dst = out.component_mut(c);
            for i in 0..n3 {
                dst[i] = d[i] - C::new(0.0, self.a[k][i]) * comp[i];
            }
        }
        Ok(out)
    }

    /// `𝒟_A u = −i Σ α_k ∇_{A,k} u` (massless part).
    pub fn dirac_massless(&self, u: &SpinorField) -> Result<SpinorField> {
        let grad = self.covariant_derivatives(u)?;
        let mi = C::new(0.0, -1.0);
        let mut out = SpinorField::zeros(self.grid);
        for (k, g) in grad.iter().enumerate() {
            let t = g.mul_matrix(&self.basis.alpha[k]);
            out.axpy(mi, &t);
        }
        Ok(out)
    }

    /// `−Δ_A u = −Σ_k ∇_{A,k}(∇_{A,k} u)`.
    pub fn neg_magnetic_laplacian(&self, u: &SpinorField) -> Result<SpinorField> {
        let grad = self.covariant_derivatives(u)?;
        let mut out = SpinorField::zeros(self.grid);
        for (k, g) in grad.iter().enumerate() {
            let gg = self.covariant_derivative(g, k)?;
            out.axpy(C::new(-1.0, 0.0), &gg);
        }
        Ok(out)
    }

    /// `𝓗u` followed by `𝓗` again.
    pub fn apply_squared(&self, u: &SpinorField) -> Result<SpinorField> {
        let hu = dirac_apply(u, self)?;
        dirac_apply(&hu, self)
    }
}

/// `∇_A u` with its radial/tangential split about the grid center.
#[derive(Clone, Debug)]
pub struct CovariantGradient {
    pub components: [SpinorField; 3],
    /// `x̂·∇_A u`; zero at the center node.
    pub radial: SpinorField,
    /// `∇_A u − x̂ (x̂·∇_A u)`.
    pub tangential: [SpinorField; 3],
}

impl CovariantGradient {
    /// `|∇_A u|²`, `|∇^r_A u|²`, `|∇^τ_A u|²` at a point.
    pub fn densities(&self, idx: usize) -> (f64, f64, f64) {
        let full = self.components.iter().map(|g| g.density(idx)).sum();
        let rad = self.radial.density(idx);
        let tan = self.tangential.iter().map(|g| g.density(idx)).sum();
        (full, rad, tan)
    }
}

/// Unit radial direction about the grid center, zero at the center node.
pub fn radial_unit(grid: &Grid, idx: usize) -> Vec3 {
    let r = grid.relative(idx);
    let n = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if n == 0.0 {
        [0.0; 3]
    } else {
        [r[0] / n, r[1] / n, r[2] / n]
    }
}

pub fn covariant_gradient(u: &SpinorField, op: &OperatorHandle) -> Result<CovariantGradient> {
    let components = op.covariant_derivatives(u)?;
    let grid = op.grid;
    let n3 = grid.len();
    let mut radial = SpinorField::zeros(grid);
    let mut tangential: [SpinorField; 3] = components.clone();
    for i in 0..n3 {
        let e = radial_unit(&grid, i);
        let g = [components[0].at(i), components[1].at(i), components[2].at(i)];
        let mut r = [CZ; 4];
        for c in 0..4 {
            r[c] = g[0][c] * e[0] + g[1][c] * e[1] + g[2][c] * e[2];
        }
        radial.set(i, r);
        for k in 0..3 {
            let mut t = g[k];
            for c in 0..4 {
                t[c] -= r[c] * e[k];
            }
            tangential[k].set(i, t);
        }
    }
    Ok(CovariantGradient {
        components,
        radial,
        tangential,
    })
}

/// `𝓗u = −i Σ α_k (∂_k − iA^k) u + mβu`.
pub fn dirac_apply(u: &SpinorField, op: &OperatorHandle) -> Result<SpinorField> {
    let mut out = op.dirac_massless(u)?;
    if op.m != 0.0 {
        out.axpy(C::new(op.m, 0.0), &u.mul_matrix(&op.basis.beta));
    }
    Ok(out)
}

/// `−Δ_A u`, assembled as `−Σ_k ∇_{A,k}∇_{A,k} u` so that
/// `(−Δ_A u, u) = ‖∇_A u‖²` holds exactly on the lattice.
pub fn magnetic_laplacian(u: &SpinorField, op: &OperatorHandle) -> Result<SpinorField> {
    op.neg_magnetic_laplacian(u)
}

/// `‖𝓗²u − [(m² − Δ_A)u − 2(S·B)u]‖₂ / ‖u‖₂`.
pub fn square_identity_residual(u: &SpinorField, op: &OperatorHandle) -> Result<f64> {
    let lhs = op.apply_squared(u)?;
    let mut rhs = magnetic_laplacian(u, op)?;
    rhs.axpy(C::new(op.m * op.m, 0.0), u);
    rhs.axpy(C::new(-2.0, 0.0), &op.spin_b(u));
    let nu = u.norm();
    if nu == 0.0 {
        return Ok(0.0);
    }
    Ok(lhs.sub(&rhs).norm() / nu)
}

/// Point values of a multiplier: `φ`, `∇φ`, `D²φ`, `Δφ`, `Δ²φ`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointValues {
    pub phi: f64,
    pub grad: Vec3,
    pub hess: Mat3,
    pub lap: f64,
    pub bilap: f64,
}

/// Multiplier samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierSamples {
    pub grid: Grid,
    pub phi: Vec<f64>,
    pub grad: [Vec<f64>; 3],
    pub hess: [[Vec<f64>; 3]; 3],
    pub lap: Vec<f64>,
    pub bilap: Vec<f64>,
    /// `φ′(r)` for radial multipliers (zero otherwise).
    pub radial_d1: Vec<f64>,
}

impl MultiplierSamples {
    /// Samples `f` at coordinates relative to the grid center.
    pub fn from_fn(grid: Grid, f: impl Fn(Vec3) -> PointValues) -> Self {
        let n3 = grid.len();
        let z = || vec![0.0; n3];
        let mut s = MultiplierSamples {
            grid,
            phi: z(),
            grad: [z(), z(), z()],
            hess: std::array::from_fn(|_| [z(), z(), z()]),
            lap: z(),
            bilap: z(),
            radial_d1: z(),
        };
        for i in 0..n3 {
            let v = f(grid.relative(i));
            s.phi[i] = v.phi;
            s.lap[i] = v.lap;
            s.bilap[i] = v.bilap;
            for a in 0..3 {
                s.grad[a][i] = v.grad[a];
                for b in 0..3 {
                    s.hess[a][b][i] = v.hess[a][b];
                }
            }
        }
        s
    }

    /// Radial multiplier from `r ↦ (φ, φ′, φ″, Δφ, Δ²φ)`; at the center the
    /// gradient is zero and the Hessian is `φ″(0) I`.
    pub fn radial(grid: Grid, f: impl Fn(f64) -> [f64; 5]) -> Self {
        let mut s = Self::from_fn(grid, |x| {
            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            let [phi, d1, d2, lap, bilap] = f(r);
            let mut v = PointValues {
                phi,
                lap,
                bilap,
                ..Default::default()
            };
            if r == 0.0 {
                for a in 0..3 {
                    v.hess[a][a] = d2;
                }
                return v;
            }
            let e = [x[0] / r, x[1] / r, x[2] / r];
            for a in 0..3 {
                v.grad[a] = d1 * e[a];
                for b in 0..3 {
                    let id = if a == b { 1.0 } else { 0.0 };
                    v.hess[a][b] = d2 * e[a] * e[b] + d1 / r * (id - e[a] * e[b]);
                }
            }
            v
        });
        for i in 0..grid.len() {
            let r = grid.relative(i);
            let rr = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
            s.radial_d1[i] = if rr == 0.0 { 0.0 } else { f(rr)[1] };
        }
        s
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self::from_fn(grid, |_| PointValues {
            phi: c,
            ..Default::default()
        })
    }
}

/// Residuals of the commutator identities, each normalized by `‖u‖₂`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CommutatorResiduals {
    /// `[𝓗², φ]u` against `−2∇φ·∇_A u − (Δφ)u`.
    pub first: f64,
    /// `2[S·B, [Δ_A, φ]]u` against `−4S·(DB∇φ)u`.
    pub spin: f64,
    /// `(u, [Δ_A, [Δ_A, φ]]u)` against its quadrature expansion, relative
    /// to the largest term or `‖∇_A u‖²`.
    pub double: f64,
    /// `S·(DB∇φ)u` against `φ′ S·(∂_rB)u`; meaningful for radial `φ` only.
    pub radial_form: f64,
}

fn require_grid(op: &OperatorHandle, phi: &MultiplierSamples) -> Result<()> {
    op.grid.ensure_same(&phi.grid)
}

/// `[T, φ]u = T(φu) − φ(Tu)` for an operator `T`.
pub fn commutator_apply(
    u: &SpinorField,
    phi: &[f64],
    t: impl Fn(&SpinorField) -> Result<SpinorField>,
) -> Result<SpinorField> {
    let a = t(&u.mul_real(phi))?;
    let b = t(u)?.mul_real(phi);
    Ok(a.sub(&b))
}

/// Pieces of the double-commutator expansion
/// `(u, [Δ_A, [Δ_A, φ]]u) = −4·hess + bilap − 4·tau`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DoubleCommutatorTerms {
    /// `∫ ∇_A u D²φ ∇̄_A u`.
    pub hess: f64,
    /// `∫ |u|² Δ²φ`.
    pub bilap: f64,
    /// `Im ∫ u φ′ B_τ·∇̄_A u`.
    pub tau: f64,
    /// Lattice value of `(u, [Δ_A, [Δ_A, φ]]u)`.
    pub lattice: f64,
}

/// Evaluates both sides of the double-commutator expansion.
pub fn double_commutator_terms(u: &SpinorField, op: &OperatorHandle, phi: &MultiplierSamples) -> Result<DoubleCommutatorTerms> {
    require_grid(op, phi)?;
    let grid = op.grid;
    let lap = |v: &SpinorField| -> Result<SpinorField> {
        let mut w = magnetic_laplacian(v, op)?;
        w.scale(C::new(-1.0, 0.0));
        Ok(w)
    };
    let inner = |v: &SpinorField| commutator_apply(v, &phi.phi, lap);
    let c1u = inner(u)?;
    let a = lap(&c1u)?;
    let b = inner(&lap(u)?)?;
    let lattice = u.inner(&a.sub(&b)).re;

    let grad = op.covariant_derivatives(u)?;
    let dv = grid.cell_volume();
    let (mut hess, mut bilap, mut tau) = (0.0, 0.0, 0.0);
    for i in 0..grid.len() {
        let g = [grad[0].at(i), grad[1].at(i), grad[2].at(i)];
        for a in 0..3 {
            for b in 0..3 {
                let hab = phi.hess[a][b][i];
                if hab == 0.0 {
                    continue;
                }
                let s: C = (0..4).map(|c| g[a][c] * g[b][c].conj()).sum();
                hess += hab * s.re;
            }
        }
        bilap += u.density(i) * phi.bilap[i];
        let e = radial_unit(&grid, i);
        let bt = crate::field::cross(e, op.b_at(i));
        let ui = u.at(i);
        let mut s = CZ;
        for k in 0..3 {
            for c in 0..4 {
                s += ui[c] * bt[k] * g[k][c].conj();
            }
        }
        tau += phi.radial_d1[i] * s.im;
    }
    Ok(DoubleCommutatorTerms {
        hess: hess * dv,
        bilap: bilap * dv,
        tau: tau * dv,
        lattice,
    })
}

/// `S·(DB∇φ)` and `φ′ S·∂_rB` applied to `u`.
pub fn spin_db_terms(u: &SpinorField, op: &OperatorHandle, phi: &MultiplierSamples) -> Result<(SpinorField, SpinorField)> {
    require_grid(op, phi)?;
    let db = op.db();
    let grid = op.grid;
    let full = u.mul_matrix_field(|i| {
        let mut v = [0.0; 3];
        for a in 0..3 {
            for j in 0..3 {
                v[a] += db[a][j][i] * phi.grad[j][i];
            }
        }
        op.spin_dot(v)
    });
    let radial = u.mul_matrix_field(|i| {
        let e = radial_unit(&grid, i);
        let mut v = [0.0; 3];
        for a in 0..3 {
            for j in 0..3 {
                v[a] += db[a][j][i] * e[j];
            }
            v[a] *= phi.radial_d1[i];
        }
        op.spin_dot(v)
    });
    Ok((full, radial))
}

/// Checks the first and second commutator identities on the lattice.
pub fn commutator_identity_residual(u: &SpinorField, op: &OperatorHandle, phi: &MultiplierSamples) -> Result<CommutatorResiduals> {
    require_grid(op, phi)?;
    op.grid.ensure_same(&u.grid)?;
    let nu = u.norm();
    if nu == 0.0 {
        return Ok(CommutatorResiduals::default());
    }
    // First commutator.
    let lhs = commutator_apply(u, &phi.phi, |v| op.apply_squared(v))?;
    let grad = op.covariant_derivatives(u)?;
    let mut rhs = u.mul_real(&phi.lap);
    rhs.scale(C::new(-1.0, 0.0));
    for k in 0..3 {
        rhs.axpy(C::new(-2.0, 0.0), &grad[k].mul_real(&phi.grad[k]));
    }
    let first = lhs.sub(&rhs).norm() / nu;

    // Spin commutator: 2[S·B, [Δ_A, φ]]u.
    let lap = |v: &SpinorField| -> Result<SpinorField> {
        let mut w = magnetic_laplacian(v, op)?;
        w.scale(C::new(-1.0, 0.0));
        Ok(w)
    };
    let c_u = commutator_apply(u, &phi.phi, lap)?;
    let c_sbu = commutator_apply(&op.spin_b(u), &phi.phi, lap)?;
    let mut lhs2 = op.spin_b(&c_u).sub(&c_sbu);
    lhs2.scale(C::new(2.0, 0.0));
    let (full, radial) = spin_db_terms(u, op, phi)?;
    let rhs2 = full.scaled(C::new(-4.0, 0.0));
    let spin = lhs2.sub(&rhs2).norm() / nu;
    let radial_form = full.sub(&radial).norm() / nu;

    let d = double_commutator_terms(u, op, phi)?;
    let formula = -4.0 * d.hess + d.bilap - 4.0 * d.tau;
    let grad_sq: f64 = grad.iter().map(SpinorField::norm_sqr).sum();
    let scale = [d.lattice, 4.0 * d.hess, d.bilap, 4.0 * d.tau, grad_sq]
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    let double = if scale == 0.0 { 0.0 } else { (d.lattice - formula).abs() / scale };
    Ok(CommutatorResiduals {
        first,
        spin,
        double,
        radial_form,
    })
}

/// CSV header for [`norms_csv_row`].
pub const NORMS_CSV_HEADER: &str = "label,l2_norm,l2_norm_fourier,h_norm,max_abs";

/// One CSV row with the basic norms of a spinor field.
pub fn norms_csv_row(label: &str, u: &SpinorField, op: &OperatorHandle) -> Result<String> {
    let hu = dirac_apply(u, op)?;
    let max_abs = u.data.iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(format!(
        "{label},{},{},{},{}",
        u.norm(),
        u.norm_fourier(op.fft()),
        hu.norm(),
        max_abs
    ))
}
