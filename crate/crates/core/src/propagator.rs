//! Unitary flow `u(t) = e^{−it𝓗} f` by dense eigendecomposition and by
//! short-step Lanczos exponentiation.

use std::fmt;
use std::sync::Arc;

use faer::{Mat, Side};
use num_complex::Complex64 as C;

use crate::lattice::{dirac_apply, OperatorHandle, SpinorField};
use crate::{Error, Result};

/// Largest operator dimension `4N³` the dense path accepts by default.
pub const DENSE_CAP: usize = 16384;

/// Largest asymmetry `|𝓗_ij − conj 𝓗_ji|` tolerated at assembly.
pub const ASYMMETRY_TOL: f64 = 1e-8;

/// Evolution convention written into every trajectory report.
pub const CONVENTION: &str = "u(t)=exp(-itH)f, i u_t = H u";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Dense,
    Krylov,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dense => "dense",
            Method::Krylov => "krylov",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Eigendecomposition of the assembled operator.
pub struct DensePropagator {
    pub op: Arc<OperatorHandle>,
    pub dim: usize,
    /// Nondecreasing eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors in the component-major data layout.
    pub eigenvectors: Mat<C>,
    /// Largest `|𝓗_ij − conj 𝓗_ji|` before symmetrization.
    pub asymmetry: f64,
}

impl fmt::Debug for DensePropagator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensePropagator")
            .field("grid", &self.op.grid)
            .field("dim", &self.dim)
            .field("asymmetry", &self.asymmetry)
            .finish()
    }
}

/// Matrix of `𝓗` built column by column from [`dirac_apply`].
pub fn assemble_matrix(op: &OperatorHandle, cap: usize) -> Result<(Mat<C>, f64)> {
    let dim = op.dim();
    if dim > cap {
        return Err(Error::DenseCapExceeded { dim, cap });
    }
    let mut h = Mat::<C>::zeros(dim, dim);
    let mut e = SpinorField::zeros(op.grid);
    for j in 0..dim {
        e.data[j] = C::new(1.0, 0.0);
        let col = dirac_apply(&e, op)?;
        e.data[j] = C::new(0.0, 0.0);
        for (i, v) in col.data.iter().enumerate() {
            h[(i, j)] = *v;
        }
    }
    let mut asym: f64 = 0.0;
    for j in 0..dim {
        for i in 0..=j {
            let a = h[(i, j)];
            let b = h[(j, i)].conj();
            asym = asym.max((a - b).norm());
            let avg = (a + b) * 0.5;
            h[(i, j)] = avg;
            h[(j, i)] = avg.conj();
        }
    }
    Ok((h, asym))
}

/// Assembles and eigendecomposes `𝓗` on a dense-capable grid.
pub fn assemble_dense(op: &OperatorHandle) -> Result<DensePropagator> {
    assemble_dense_with_cap(op, DENSE_CAP)
}

pub fn assemble_dense_with_cap(op: &OperatorHandle, cap: usize) -> Result<DensePropagator> {
    let (h, asymmetry) = assemble_matrix(op, cap)?;
    if asymmetry > ASYMMETRY_TOL {
        return Err(Error::DenseAssembly { asymmetry });
    }
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let eigenvalues = (0..s.nrows()).map(|i| s[i].re).collect();
    Ok(DensePropagator {
        op: Arc::new(op.clone()),
        dim: h.nrows(),
        eigenvalues,
        eigenvectors: evd.U().to_owned(),
        asymmetry,
    })
}

impl DensePropagator {
    /// Eigenbasis coordinates `Uᴴf`.
    pub fn coordinates(&self, f: &SpinorField) -> Vec<C> {
        let u = &self.eigenvectors;
        (0..self.dim)
            .map(|k| (0..self.dim).map(|i| u[(i, k)].conj() * f.data[i]).sum())
            .collect()
    }

    /// `max_ij |(UᴴU − I)_ij|`.
    pub fn unitarity_defect(&self) -> f64 {
        let u = &self.eigenvectors;
        let g = u.adjoint() * u;
        let mut worst: f64 = 0.0;
        for j in 0..self.dim {
            for i in 0..self.dim {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - C::new(want, 0.0)).norm());
            }
        }
        worst
    }
}

/// States, time derivatives and provenance of one flow.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpinorField>,
    /// `u_t = −i𝓗u` at each sample.
    pub dstates: Vec<SpinorField>,
    pub method: Method,
    pub op: Arc<OperatorHandle>,
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidTimes("no time samples".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidTimes("time samples must be finite".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidTimes("time samples must increase".into()));
    }
    Ok(())
}

/// `t_k = k·τ` for `k = 0..=round(T/τ)`.
pub fn uniform_times(t_end: f64, tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0 && t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidTimes(format!("T = {t_end}, τ = {tau}")));
    }
    let n = (t_end / tau).round() as usize;
    Ok((0..=n).map(|k| k as f64 * tau).collect())
}

fn time_derivative(op: &OperatorHandle, u: &SpinorField) -> Result<SpinorField> {
    Ok(dirac_apply(u, op)?.scaled(C::new(0.0, -1.0)))
}

/// Dense flow evaluated at `times`, starting from `f` at `times[0]`.
pub fn evolve_dense(p: &DensePropagator, f: &SpinorField, times: &[f64]) -> Result<Trajectory> {
    check_times(times)?;
    p.op.grid.ensure_same(&f.grid)?;
    let c = p.coordinates(f);
    let t0 = times[0];
    let mut states = Vec::with_capacity(times.len());
    const CHUNK: usize = 128;
    for block in times.chunks(CHUNK) {
        let mut coef = Mat::<C>::zeros(p.dim, block.len());
        for (j, &t) in block.iter().enumerate() {
            for k in 0..p.dim {
                coef[(k, j)] = c[k] * C::from_polar(1.0, -(t - t0) * p.eigenvalues[k]);
            }
        }
        let out = &p.eigenvectors * &coef;
        for j in 0..block.len() {
            let data = (0..p.dim).map(|i| out[(i, j)]).collect();
            states.push(SpinorField::from_vec(f.grid, data)?);
        }
    }
    let dstates = states
        .iter()
        .map(|u| time_derivative(&p.op, u))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        dstates,
        method: Method::Dense,
        op: p.op.clone(),
    })
}

/// Lanczos exponentiation settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovSettings {
    pub max_subspace: usize,
    /// Upper bound on `‖𝓗‖·τ` for one substep.
    pub norm_step: f64,
    /// Substep halvings tried before giving up.
    pub max_halvings: u32,
}

impl Default for KrylovSettings {
    fn default() -> Self {
        KrylovSettings {
            max_subspace: 40,
            norm_step: 5.0,
            max_halvings: 8,
        }
    }
}

/// Upper bound `Σ_k (π N/L + max|A^k|) + |m|` on the operator norm.
pub fn norm_bound(op: &OperatorHandle) -> f64 {
    let kmax = std::f64::consts::PI * op.grid.n as f64 / op.grid.l;
    let amax: f64 = op
        .a
        .iter()
        .map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .sum();
    3.0 * kmax + amax + op.m.abs()
}

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm2(a: &[C]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `exp(−iτT)e₁` for the real symmetric tridiagonal `T`.
fn tridiagonal_exp(alpha: &[f64], beta: &[f64], tau: f64) -> Result<Vec<C>> {
    let m = alpha.len();
    let t = Mat::<f64>::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let evd = t
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let q = evd.U();
    Ok((0..m)
        .map(|i| {
            (0..m)
                .map(|k| C::from_polar(q[(0, k)] * q[(i, k)], -tau * s[k]))
                .sum()
        })
        .collect())
}

enum Step {
    Done(Vec<C>),
    Unconverged(f64),
}

fn lanczos_step(op: &OperatorHandle, w: &[C], tau: f64, tol: f64, max_m: usize) -> Result<Step> {
    let beta0 = norm2(w);
    if beta0 == 0.0 {
        return Ok(Step::Done(w.to_vec()));
    }
    let grid = op.grid;
    let mut basis: Vec<Vec<C>> = vec![w.iter().map(|z| z / beta0).collect()];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut estimate = f64::INFINITY;
    for j in 0..max_m {
        let v = SpinorField::from_vec(grid, basis[j].clone())?;
        let mut z = dirac_apply(&v, op)?.data;
        let a = dot(&basis[j], &z).re;
        alpha.push(a);
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &z);
                for (zi, qi) in z.iter_mut().zip(q) {
                    *zi -= c * qi;
                }
            }
        }
        let b = norm2(&z);
        let y = tridiagonal_exp(&alpha, &beta, tau)?;
        let breakdown = b <= 1e-13 * (a.abs() + beta.last().copied().unwrap_or(0.0) + 1.0);
        estimate = beta0 * b * y[j].norm();
        if breakdown || estimate <= tol {
            let mut out = vec![C::new(0.0, 0.0); w.len()];
            for (q, yk) in basis.iter().zip(&y) {
                let s = yk * beta0;
                for (o, qi) in out.iter_mut().zip(q) {
                    *o += s * qi;
                }
            }
            return Ok(Step::Done(out));
        }
        beta.push(b);
        basis.push(z.iter().map(|v| v / b).collect());
    }
    Ok(Step::Unconverged(estimate))
}

/// Lanczos flow evaluated at `times`, starting from `f` at `times[0]`.
/// Each substep is accepted once the a-posteriori error estimate is below
/// `tol·‖u‖·τ_sub`.
pub fn evolve_krylov(op: &OperatorHandle, f: &SpinorField, times: &[f64], tol: f64) -> Result<Trajectory> {
    evolve_krylov_with(op, f, times, tol, KrylovSettings::default())
}

pub fn evolve_krylov_with(
    op: &OperatorHandle,
    f: &SpinorField,
    times: &[f64],
    tol: f64,
    settings: KrylovSettings,
) -> Result<Trajectory> {
    check_times(times)?;
    op.grid.ensure_same(&f.grid)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidTimes(format!("tolerance must be positive, got {tol}")));
    }
    let hn = norm_bound(op);
    let mut u = f.data.clone();
    let mut states = vec![f.clone()];
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let mut pieces = ((hn * span) / settings.norm_step).ceil().max(1.0) as usize;
        let mut t = w[0];
        let mut done = 0.0;
        let mut halvings = 0;
        while done < span * (1.0 - 1e-14) {
            let sub = (span / pieces as f64).min(span - done);
            let nu = norm2(&u);
            match lanczos_step(op, &u, sub, tol * nu * sub, settings.max_subspace)? {
                Step::Done(next) => {
                    u = next;
                    done += sub;
                    t += sub;
                }
                Step::Unconverged(estimate) => {
                    if halvings >= settings.max_halvings {
                        return Err(Error::KrylovNonConvergence {
                            time: t,
                            substep: sub,
                            subspace: settings.max_subspace,
                            estimate,
                        });
                    }
                    halvings += 1;
                    pieces *= 2;
                }
            }
        }
        states.push(SpinorField::from_vec(f.grid, u.clone())?);
    }
    let dstates = states
        .iter()
        .map(|s| time_derivative(op, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        dstates,
        method: Method::Krylov,
        op: Arc::new(op.clone()),
    })
}

/// Common step of a uniform time grid.
pub fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::ShortTrajectory {
            needed: 2,
            found: times.len(),
        });
    }
    let tau = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let dev = times
        .windows(2)
        .map(|w| ((w[1] - w[0]) - tau).abs())
        .fold(0.0, f64::max);
    if dev > 1e-9 * tau.abs().max(1.0) {
        return Err(Error::NonUniformSteps(dev));
    }
    Ok(tau)
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `‖u(tₙ)‖₂` and `‖𝓗u(tₙ)‖₂` per sample.
    pub fn norm_series(&self) -> Vec<(f64, f64)> {
        self.states
            .iter()
            .zip(&self.dstates)
            .map(|(u, du)| (u.norm(), du.norm()))
            .collect()
    }

    /// Largest relative drift of `‖u‖₂` and of `‖𝓗u‖₂` from their initial values.
    pub fn drift(&self) -> (f64, f64) {
        let s = self.norm_series();
        let (n0, e0) = s[0];
        let rel = |v: f64, v0: f64| if v0 == 0.0 { v.abs() } else { (v - v0).abs() / v0 };
        s.iter().fold((0.0f64, 0.0f64), |(a, b), &(n, e)| {
            (a.max(rel(n, n0)), b.max(rel(e, e0)))
        })
    }

    /// The samples with `t ≤ t_end`; `t_end` must be a sample time.
    pub fn truncated(&self, t_end: f64) -> Result<Trajectory> {
        let tol = 1e-9 * t_end.abs().max(1.0);
        let last = self
            .times
            .iter()
            .position(|t| (t - t_end).abs() <= tol)
            .ok_or_else(|| Error::InvalidTimes(format!("horizon {t_end} is not a sample time")))?;
        Ok(Trajectory {
            times: self.times[..=last].to_vec(),
            states: self.states[..=last].to_vec(),
            dstates: self.dstates[..=last].to_vec(),
            method: self.method,
            op: Arc::clone(&self.op),
        })
    }

    /// `max_n ‖u(tₙ) − v(tₙ)‖₂ / ‖u(t₀)‖₂`.
    pub fn max_discrepancy(&self, other: &Trajectory) -> Result<f64> {
        if self.times.len() != other.times.len() {
            return Err(Error::InvalidTimes("trajectories have different lengths".into()));
        }
        let n0 = self.states[0].norm().max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for (a, b) in self.states.iter().zip(&other.states) {
            a.grid.ensure_same(&b.grid)?;
            worst = worst.max(a.sub(b).norm() / n0);
        }
        Ok(worst)
    }
}

/// `‖(u_{n+1} − 2u_n + u_{n−1})/τ² + 𝓗²u_n‖₂ / ‖u_n‖₂` at interior samples.
pub fn wave_residual(traj: &Trajectory) -> Result<Vec<f64>> {
    if traj.len() < 3 {
        return Err(Error::ShortTrajectory {
            needed: 3,
            found: traj.len(),
        });
    }
    let tau = uniform_step(&traj.times)?;
    let mut out = Vec::with_capacity(traj.len() - 2);
    for n in 1..traj.len() - 1 {
        let u = &traj.states[n];
        let mut acc = traj.states[n + 1].add(&traj.states[n - 1]);
        acc.axpy(C::new(-2.0, 0.0), u);
        acc.scale(C::new(1.0 / (tau * tau), 0.0));
        // 𝓗²u = i𝓗 u_t.
        let h2u = dirac_apply(&traj.dstates[n], &traj.op)?.scaled(C::new(0.0, 1.0));
        acc = acc.add(&h2u);
        let nu = u.norm();
        out.push(if nu == 0.0 { 0.0 } else { acc.norm() / nu });
    }
    Ok(out)
}

/// For a trajectory of the mass-flipped operator, `v = 𝒟_A u` should solve
/// `iv_t = 𝓗v` for the original mass. Returns `max ‖iv_t − 𝓗v‖ / ‖v‖` with
/// `v_t = 𝒟_A u_t`.
pub fn transport_residual(flipped: &Trajectory, op: &OperatorHandle) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (u, du) in flipped.states.iter().zip(&flipped.dstates) {
        let v = op.dirac_massless(u)?;
        let vt = op.dirac_massless(du)?;
        let r = vt.scaled(C::new(0.0, 1.0)).sub(&dirac_apply(&v, op)?);
        let nv = v.norm();
        if nv > 0.0 {
            worst = worst.max(r.norm() / nv);
        }
    }
    Ok(worst)
}

/// Norm series as CSV with a commented metadata header.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = format!(
        "# method={}\n# convention={}\n# grid={}\n# mass={}\nt,l2_norm,h_norm\n",
        traj.method, CONVENTION, traj.op.grid, traj.op.m
    );
    for (t, (n, e)) in traj.times.iter().zip(traj.norm_series()) {
        s.push_str(&format!("{t},{n},{e}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Grid;

    fn small_grid() -> Grid {
        Grid::centered(4, 6.0).unwrap()
    }

    fn gaussian(grid: Grid) -> SpinorField {
        SpinorField::from_fn(grid, |x| {
            let r2: f64 = x.iter().zip(grid.center).map(|(a, b)| (a - b) * (a - b)).sum();
            let g = (-r2 / 2.0).exp();
            [C::new(g, 0.0), C::new(0.0, 0.5 * g), C::new(0.2 * g, 0.0), C::new(0.0, 0.0)]
        })
    }

    #[test]
    fn cap_is_enforced() {
        let op = OperatorHandle::free(small_grid(), 0.0).unwrap();
        assert!(matches!(
            assemble_dense_with_cap(&op, 100),
            Err(Error::DenseCapExceeded { dim: 256, cap: 100 })
        ));
    }

    #[test]
    fn t_zero_and_eigenvector_phase() {
        let g = small_grid();
        let op = OperatorHandle::free(g, 1.0).unwrap();
        let p = assemble_dense(&op).unwrap();
        let f = gaussian(g);
        let tr = evolve_dense(&p, &f, &[0.0, 0.5]).unwrap();
        assert!(tr.states[0].max_abs_diff(&f) < 1e-13);

        let k = 37;
        let ev = SpinorField::from_vec(g, (0..p.dim).map(|i| p.eigenvectors[(i, k)]).collect()).unwrap();
        let t = 0.8;
        let tr = evolve_dense(&p, &ev, &[0.0, t]).unwrap();
        let want = ev.scaled(C::from_polar(1.0, -t * p.eigenvalues[k]));
        assert!(tr.states[1].max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn krylov_zero_data_and_bad_times() {
        let g = small_grid();
        let op = OperatorHandle::free(g, 0.0).unwrap();
        let z = SpinorField::zeros(g);
        let tr = evolve_krylov(&op, &z, &[0.0, 1.0, 2.0], 1e-9).unwrap();
        assert!(tr.states.iter().all(|s| s.norm() == 0.0));
        assert!(evolve_krylov(&op, &z, &[0.0, 0.0], 1e-9).is_err());
        assert!(evolve_krylov(&op, &z, &[0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn uniform_step_detection() {
        assert!((uniform_step(&[0.0, 0.1, 0.2]).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(uniform_step(&[0.0, 0.1, 0.25]), Err(Error::NonUniformSteps(_))));
        assert_eq!(uniform_times(1.0, 0.25).unwrap().len(), 5);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let g = small_grid();
        let op = OperatorHandle::free(g, 0.0).unwrap();
        let tr = evolve_krylov(&op, &gaussian(g), &[0.0, 0.5], 1e-9).unwrap();
        let csv = trajectory_csv(&tr);
        assert!(csv.contains("# method=krylov"));
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 3);
    }

    #[test]
    fn truncation_keeps_leading_samples() {
        let g = small_grid();
        let op = OperatorHandle::free(g, 0.0).unwrap();
        let tr = evolve_krylov(&op, &gaussian(g), &uniform_times(1.0, 0.25).unwrap(), 1e-9).unwrap();
        let t = tr.truncated(0.5).unwrap();
        assert_eq!(t.times, vec![0.0, 0.25, 0.5]);
        assert_eq!(t.states[2], tr.states[2]);
        assert!(tr.truncated(0.3).is_err());
    }
}
