//! Virial functionals, smoothing norms, the Hardy inequality, the
//! positivity algebra and Strichartz sampling along trajectories.

use num_complex::Complex64 as C;

use crate::field::{cross, FieldConstants};
use crate::lattice::{
    covariant_gradient, dirac_apply, double_commutator_terms, radial_unit, spin_db_terms, Grid,
    MultiplierSamples, OperatorHandle, SpinorField,
};
use crate::multiplier::Multiplier;
use crate::propagator::{uniform_step, Trajectory};
use crate::quadrature::{trapezoid, SphereRule};
use crate::{Error, Result};

const CZ: C = C { re: 0.0, im: 0.0 };

// ---------------------------------------------------------------------------
// Positivity algebra

/// `2Mp² + (½ − 3(M + ½)C₂)q² − (2M + 1)C₁pq`.
pub fn quadratic_form(m: f64, c1: f64, c2: f64, p: f64, q: f64) -> f64 {
    2.0 * m * p * p + (0.5 - 3.0 * (m + 0.5) * c2) * q * q - (2.0 * m + 1.0) * c1 * p * q
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticFormReport {
    pub m: f64,
    pub c1: f64,
    pub c2: f64,
    /// Minimum over the sampled `(p, q)` grid.
    pub min: f64,
    /// `b² − 4ac` of the form `ap² + bpq + cq²`.
    pub discriminant: f64,
    /// Nonnegativity on the quadrant decided from the coefficients.
    pub nonnegative: bool,
}

/// Samples the form on the uniform `samples × samples` grid of `[0, 1]²`;
/// by homogeneity this decides the sign on the whole quadrant.
pub fn quadratic_form_check(m: f64, c1: f64, c2: f64, samples: usize) -> QuadraticFormReport {
    let n = samples.max(2);
    let mut min = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let p = i as f64 / (n - 1) as f64;
            let q = j as f64 / (n - 1) as f64;
            min = min.min(quadratic_form(m, c1, c2, p, q));
        }
    }
    let a = 2.0 * m;
    let b = -(2.0 * m + 1.0) * c1;
    let c = 0.5 - 3.0 * (m + 0.5) * c2;
    let discriminant = b * b - 4.0 * a * c;
    let nonnegative = a >= 0.0 && c >= 0.0 && (b >= 0.0 || discriminant <= 0.0);
    QuadraticFormReport {
        m,
        c1,
        c2,
        min,
        discriminant,
        nonnegative,
    }
}

// ---------------------------------------------------------------------------
// Θ calculus

/// `Θ`, `Θ̇`, `Θ̈` along a trajectory with `L = 𝓗²`, each by the lattice
/// commutators and by the explicit first/second commutator formulas.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ThetaSeries {
    pub times: Vec<f64>,
    pub theta: Vec<f64>,
    /// `Re([L, φ]u, u_t)`.
    pub theta_dot: Vec<f64>,
    /// `−½([L, [L, φ]]u, u)`.
    pub theta_ddot: Vec<f64>,
    /// `−Re(u_t, 2∇φ·∇_A u + (Δφ)u)`.
    pub theta_dot_formula: Vec<f64>,
    /// `2·Hessian − ½∫|u|²Δ²φ + 2·B_τ term + 2·spin term`.
    pub theta_ddot_formula: Vec<f64>,
}

fn apply_l(op: &OperatorHandle, u: &SpinorField) -> Result<SpinorField> {
    op.apply_squared(u)
}

fn commutator_l(op: &OperatorHandle, phi: &[f64], u: &SpinorField) -> Result<SpinorField> {
    Ok(apply_l(op, &u.mul_real(phi))?.sub(&apply_l(op, u)?.mul_real(phi)))
}

/// Momentum pairing `Re(v, 2∇φ·∇_A u + (Δφ)u)` from gradient components.
fn momentum_pairing(v: &SpinorField, grad: &[SpinorField; 3], u: &SpinorField, dphi: &[Vec<f64>; 3], lap: &[f64]) -> f64 {
    let mut w = u.mul_real(lap);
    for k in 0..3 {
        w.axpy(C::new(2.0, 0.0), &grad[k].mul_real(&dphi[k]));
    }
    v.inner(&w).re
}

pub fn theta_functionals(traj: &Trajectory, phi: &MultiplierSamples) -> Result<ThetaSeries> {
    let op = &traj.op;
    op.grid.ensure_same(&phi.grid)?;
    let mut out = ThetaSeries {
        times: traj.times.clone(),
        ..Default::default()
    };
    for (u, ut) in traj.states.iter().zip(&traj.dstates) {
        let lu = apply_l(op, u)?;
        let lphiu = apply_l(op, &u.mul_real(&phi.phi))?;
        let mut w = lu.mul_real(&phi.phi).scaled(C::new(2.0, 0.0));
        w = w.sub(&lphiu);
        let theta = ut.mul_real(&phi.phi).inner(ut).re + w.inner(u).re;

        let c1u = lphiu.sub(&lu.mul_real(&phi.phi));
        let theta_dot = c1u.inner(ut).re;
        let c2u = apply_l(op, &c1u)?.sub(&commutator_l(op, &phi.phi, &lu)?);
        let theta_ddot = -0.5 * c2u.inner(u).re;

        let grad = op.covariant_derivatives(u)?;
        let theta_dot_formula = -momentum_pairing(ut, &grad, u, &phi.grad, &phi.lap);
        let d = double_commutator_terms(u, op, phi)?;
        let (spin_full, _) = spin_db_terms(u, op, phi)?;
        let spin = spin_full.inner(u).re;
        let theta_ddot_formula = 2.0 * d.hess - 0.5 * d.bilap + 2.0 * d.tau + 2.0 * spin;

        out.theta.push(theta);
        out.theta_dot.push(theta_dot);
        out.theta_ddot.push(theta_ddot);
        out.theta_dot_formula.push(theta_dot_formula);
        out.theta_ddot_formula.push(theta_ddot_formula);
    }
    Ok(out)
}

/// Largest relative gap between centered differences of `f` and the
/// samples of its claimed derivative `df`, over interior samples.
pub fn centered_difference_error(times: &[f64], f: &[f64], df: &[f64]) -> Result<f64> {
    if times.len() < 3 {
        return Err(Error::ShortTrajectory {
            needed: 3,
            found: times.len(),
        });
    }
    let tau = uniform_step(times)?;
    let scale = df.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for n in 1..times.len() - 1 {
        let fd = (f[n + 1] - f[n - 1]) / (2.0 * tau);
        worst = worst.max((fd - df[n]).abs() / scale);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Virial identity

/// Terms of the virial identity along a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct VirialReport {
    pub times: Vec<f64>,
    /// `2∫∇_A u D²φ ∇̄_A u` through the radial/tangential split.
    pub hessian: Vec<f64>,
    /// `−½∫|u|²Δ²φ` from the point and sphere masses.
    pub bilaplacian: Vec<f64>,
    /// `2 Im∫u φ′ B_τ·∇̄_A u`.
    pub b_tau: Vec<f64>,
    /// `2∫[φ′ S·∂_rB u]·ū`.
    pub spin_db: Vec<f64>,
    /// `2∫[S·(DB∇φ)u]·ū` with the full Jacobian.
    pub spin_db_full: Vec<f64>,
    /// `Re(u_t, 2∇φ·∇_A u + (Δφ)u)`.
    pub momentum: Vec<f64>,
    /// Fourth-order central difference of `momentum`; `None` at the two
    /// samples closest to each end.
    pub momentum_rate: Vec<Option<f64>>,
    /// `|LHS + d/dt momentum| / scale`.
    pub residual: Vec<Option<f64>>,
    /// `max(|terms|, ‖𝒟_A f‖²)` per sample.
    pub scale: Vec<f64>,
    pub max_residual: f64,
    /// Largest `|spin_db − spin_db_full| / scale`.
    pub radial_form_gap: f64,
    pub warning: Option<String>,
    pub grid: Grid,
    pub multiplier: (f64, f64),
}

impl VirialReport {
    pub fn lhs(&self, n: usize) -> f64 {
        self.hessian[n] + self.bilaplacian[n] + self.b_tau[n] + self.spin_db[n]
    }
}

/// `∮_{|x−c|=ρ} |u|² dσ` by trilinear sampling on `rule`.
pub fn sphere_integral(u: &SpinorField, rho: f64, rule: &SphereRule) -> f64 {
    let c = u.grid.center;
    rho * rho
        * rule.integrate(|d| {
            let v = u.interpolate_trilinear([c[0] + rho * d[0], c[1] + rho * d[1], c[2] + rho * d[2]]);
            v.iter().map(|z| z.norm_sqr()).sum()
        })
}

/// Exact-profile samples on the grid: `(φ′, φ″, φ′/r̃, Δφ)` with the
/// regularized radius `r̃ = max(r, h/2)` in the singular weights.
struct ExactSamples {
    d1: Vec<f64>,
    d2: Vec<f64>,
    d1_over_r: Vec<f64>,
    lap: Vec<f64>,
    grad: [Vec<f64>; 3],
}

fn exact_samples(phi: &Multiplier, grid: &Grid) -> ExactSamples {
    let n3 = grid.len();
    let mut s = ExactSamples {
        d1: vec![0.0; n3],
        d2: vec![0.0; n3],
        d1_over_r: vec![0.0; n3],
        lap: vec![0.0; n3],
        grad: [vec![0.0; n3], vec![0.0; n3], vec![0.0; n3]],
    };
    for i in 0..n3 {
        let x = grid.relative(i);
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let rr = grid.regularized_radius(i);
        let d1 = phi.d1_exact(r);
        s.d1[i] = if r == 0.0 { 0.0 } else { d1 };
        s.d2[i] = phi.d2_exact(r);
        s.d1_over_r[i] = phi.d1_exact(rr) / rr;
        s.lap[i] = phi.lap_exact(rr);
        let e = radial_unit(grid, i);
        for k in 0..3 {
            s.grad[k][i] = s.d1[i] * e[k];
        }
    }
    s
}

/// Evaluates every term of the virial identity with the exact multiplier
/// profile and the lattice field of the trajectory's operator.
pub fn virial_terms(traj: &Trajectory, phi: &Multiplier, sphere: &SphereRule) -> Result<VirialReport> {
    let op = &traj.op;
    let grid = op.grid;
    let n = traj.len();
    if n < 5 {
        return Err(Error::ShortTrajectory { needed: 5, found: n });
    }
    let tau = uniform_step(&traj.times)?;
    let ex = exact_samples(phi, &grid);
    let db = op.db();
    let dv = grid.cell_volume();
    let center = grid.point(grid.center_index());
    let mut rep = VirialReport {
        times: traj.times.clone(),
        hessian: Vec::with_capacity(n),
        bilaplacian: Vec::with_capacity(n),
        b_tau: Vec::with_capacity(n),
        spin_db: Vec::with_capacity(n),
        spin_db_full: Vec::with_capacity(n),
        momentum: Vec::with_capacity(n),
        momentum_rate: Vec::with_capacity(n),
        residual: Vec::with_capacity(n),
        scale: Vec::with_capacity(n),
        max_residual: 0.0,
        radial_form_gap: 0.0,
        warning: None,
        grid,
        multiplier: (phi.r, phi.m),
    };
    if phi.r > 0.4 * grid.l {
        rep.warning = Some(format!("R = {} reaches the cutoff zone of the box (0.4 L = {})", phi.r, 0.4 * grid.l));
    }
    let d0 = op.dirac_massless(&traj.states[0])?.norm_sqr();
    for (u, ut) in traj.states.iter().zip(&traj.dstates) {
        let cg = covariant_gradient(u, op)?;
        let (mut hess, mut btau, mut spin, mut spin_full) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..grid.len() {
            let (_, rad, tan) = cg.densities(i);
            hess += ex.d1_over_r[i] * tan + ex.d2[i] * rad;

            let e = radial_unit(&grid, i);
            let b = op.b_at(i);
            let bt = cross(e, b);
            let ui = u.at(i);
            let mut s = CZ;
            for k in 0..3 {
                let gk = cg.components[k].at(i);
                for c in 0..4 {
                    s += ui[c] * bt[k] * gk[c].conj();
                }
            }
            btau += ex.d1[i] * s.im;

            let mut drb = [0.0; 3];
            let mut dbg = [0.0; 3];
            for a in 0..3 {
                for j in 0..3 {
                    drb[a] += db[a][j][i] * e[j];
                    dbg[a] += db[a][j][i] * ex.grad[j][i];
                }
                drb[a] *= ex.d1[i];
            }
            let su = op.spin_dot(drb).apply(&ui);
            let sf = op.spin_dot(dbg).apply(&ui);
            for c in 0..4 {
                spin += (su[c] * ui[c].conj()).re;
                spin_full += (sf[c] * ui[c].conj()).re;
            }
        }
        let uc = u.interpolate_trilinear(center);
        let uc2: f64 = uc.iter().map(|z| z.norm_sqr()).sum();
        let bilap = -0.5 * (phi.point_mass() * uc2 + phi.sphere_mass() * sphere_integral(u, phi.r, sphere));

        rep.hessian.push(2.0 * hess * dv);
        rep.bilaplacian.push(bilap);
        rep.b_tau.push(2.0 * btau * dv);
        rep.spin_db.push(2.0 * spin * dv);
        rep.spin_db_full.push(2.0 * spin_full * dv);
        rep.momentum.push(momentum_pairing(ut, &cg.components, u, &ex.grad, &ex.lap));
    }
    for k in 0..n {
        let terms = [rep.hessian[k], rep.bilaplacian[k], rep.b_tau[k], rep.spin_db[k]];
        let scale = terms.iter().map(|v| v.abs()).fold(d0, f64::max).max(f64::MIN_POSITIVE);
        rep.scale.push(scale);
        rep.radial_form_gap = rep
            .radial_form_gap
            .max((rep.spin_db[k] - rep.spin_db_full[k]).abs() / scale);
        if k < 2 || k + 2 >= n {
            rep.momentum_rate.push(None);
            rep.residual.push(None);
            continue;
        }
        let p = &rep.momentum;
        let rate = (p[k - 2] - 8.0 * p[k - 1] + 8.0 * p[k + 1] - p[k + 2]) / (12.0 * tau);
        let r = (rep.lhs(k) + rate).abs() / scale;
        rep.momentum_rate.push(Some(rate));
        rep.residual.push(Some(r));
        rep.max_residual = rep.max_residual.max(r);
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Smoothing norms

/// `h·2^j` for `j ≥ 0` up to `0.4 L`.
pub fn dyadic_radii(grid: &Grid) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = grid.h();
    while r <= 0.4 * grid.l {
        out.push(r);
        r *= 2.0;
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SmoothingReport {
    /// Time horizon `T`; integrals run over `[t₀, T]`.
    pub horizon: f64,
    pub radii: Vec<f64>,
    /// `(1/R)∫∫_{|x|≤R}|u|²` per radius.
    pub x_norm: Vec<f64>,
    /// `(1/R²)∫∫_{|x|=R}|u|² dσ` per radius.
    pub y_norm: Vec<f64>,
    /// `(1/R)∫∫_{|x|≤R}|∇_A u|²` per radius.
    pub grad_x_norm: Vec<f64>,
    /// `∫∫|∇^τ_A u|²/|x|` with the regularized radius.
    pub tangential: f64,
    pub x_sup: f64,
    pub y_sup: f64,
    pub grad_x_sup: f64,
    pub f_norm_sq: f64,
    pub hf_norm_sq: f64,
    /// `x_sup / ‖f‖²`.
    pub ratio_l2: f64,
    /// `(grad_x_sup + y_sup + tangential) / ‖𝓗f‖²`.
    pub ratio_energy: f64,
}

struct SmoothingSamples {
    ball: Vec<Vec<f64>>,
    sphere: Vec<Vec<f64>>,
    grad_ball: Vec<Vec<f64>>,
    tangential: Vec<f64>,
}

fn smoothing_samples(traj: &Trajectory, radii: &[f64], rule: &SphereRule) -> Result<SmoothingSamples> {
    let op = &traj.op;
    let grid = op.grid;
    let dv = grid.cell_volume();
    let mut s = SmoothingSamples {
        ball: vec![],
        sphere: vec![],
        grad_ball: vec![],
        tangential: vec![],
    };
    let dist: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.relative(i);
            (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
        })
        .collect();
    for u in &traj.states {
        let cg = covariant_gradient(u, op)?;
        let mut ball = vec![0.0; radii.len()];
        let mut gball = vec![0.0; radii.len()];
        let mut tang = 0.0;
        for i in 0..grid.len() {
            let (full, _, tan) = cg.densities(i);
            let rho = u.density(i);
            for (j, &r) in radii.iter().enumerate() {
                if dist[i] <= r {
                    ball[j] += rho * dv;
                    gball[j] += full * dv;
                }
            }
            tang += tan / grid.regularized_radius(i) * dv;
        }
        s.ball.push(ball);
        s.grad_ball.push(gball);
        s.sphere.push(radii.iter().map(|&r| sphere_integral(u, r, rule)).collect());
        s.tangential.push(tang);
    }
    Ok(s)
}

/// Smoothing norms over `[t₀, T]` for each horizon `T` in `horizons`
/// (each must be a sample time of the trajectory).
pub fn smoothing_norms_at(
    traj: &Trajectory,
    horizons: &[f64],
    rule: &SphereRule,
) -> Result<Vec<SmoothingReport>> {
    let grid = traj.op.grid;
    let radii = dyadic_radii(&grid);
    let samples = smoothing_samples(traj, &radii, rule)?;
    let f_norm_sq = traj.states[0].norm_sqr();
    let hf_norm_sq = traj.dstates[0].norm_sqr();
    let tol = 1e-9 * traj.times.last().copied().unwrap_or(1.0).abs().max(1.0);
    let mut out = Vec::new();
    for &t_end in horizons {
        let last = traj
            .times
            .iter()
            .position(|t| (t - t_end).abs() <= tol)
            .ok_or_else(|| Error::InvalidTimes(format!("horizon {t_end} is not a sample time")))?;
        let ts = &traj.times[..=last];
        let integrate = |series: &dyn Fn(usize) -> f64| -> f64 {
            let ys: Vec<f64> = (0..=last).map(series).collect();
            trapezoid(ts, &ys)
        };
        let mut rep = SmoothingReport {
            horizon: t_end,
            radii: radii.clone(),
            f_norm_sq,
            hf_norm_sq,
            ..Default::default()
        };
        for (j, &r) in radii.iter().enumerate() {
            rep.x_norm.push(integrate(&|n| samples.ball[n][j]) / r);
            rep.y_norm.push(integrate(&|n| samples.sphere[n][j]) / (r * r));
            rep.grad_x_norm.push(integrate(&|n| samples.grad_ball[n][j]) / r);
        }
        rep.tangential = integrate(&|n| samples.tangential[n]);
        rep.x_sup = rep.x_norm.iter().copied().fold(0.0, f64::max);
        rep.y_sup = rep.y_norm.iter().copied().fold(0.0, f64::max);
        rep.grad_x_sup = rep.grad_x_norm.iter().copied().fold(0.0, f64::max);
        rep.ratio_l2 = if f_norm_sq > 0.0 { rep.x_sup / f_norm_sq } else { 0.0 };
        rep.ratio_energy = if hf_norm_sq > 0.0 {
            (rep.grad_x_sup + rep.y_sup + rep.tangential) / hf_norm_sq
        } else {
            0.0
        };
        out.push(rep);
    }
    Ok(out)
}

/// Smoothing norms over the whole trajectory.
pub fn smoothing_norms(traj: &Trajectory, rule: &SphereRule) -> Result<SmoothingReport> {
    let t_end = *traj.times.last().ok_or(Error::ShortTrajectory { needed: 1, found: 0 })?;
    Ok(smoothing_norms_at(traj, &[t_end], rule)?.remove(0))
}

// ---------------------------------------------------------------------------
// Hardy inequality

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HardyReport {
    pub eps: f64,
    pub c0: f64,
    pub b2_sup: f64,
    /// `m²∫|f|²`.
    pub mass_term: f64,
    /// `∫|f|²/|x|²` with the regularized radius.
    pub weighted: f64,
    /// `∫|∇_A f|²`.
    pub gradient: f64,
    pub lhs: f64,
    /// `(1 + ‖B₂‖_∞/m²)∫|𝓗f|²`, or `∫|𝓗f|²` when `m = 0`.
    pub rhs: f64,
    /// `rhs − lhs`.
    pub margin: f64,
    /// `∫|∇_A f|² − ¼∫|f|²/|x|²`.
    pub magnetic_hardy_margin: f64,
    /// `‖𝒟_A f‖²`.
    pub dirac_norm_sq: f64,
    /// `(S·B f, f)`.
    pub spin_term: f64,
    /// `|‖𝒟_A f‖² − ‖∇_A f‖² + 2(S·B f, f)| / max(‖𝒟_A f‖², ‖∇_A f‖²)`.
    pub identity_residual: f64,
    pub holds: bool,
}

/// Largest admissible `ε` used when `1 − 4C₀` reaches the open bound.
pub const HARDY_EPS_MAX: f64 = 1.0 - 1e-9;

/// `ε = 1 − 4C₀`, capped at [`HARDY_EPS_MAX`].
pub fn hardy_epsilon(c0: f64) -> Result<f64> {
    if !(c0 < 0.25) {
        return Err(Error::HardyConstant(c0));
    }
    Ok((1.0 - 4.0 * c0).min(HARDY_EPS_MAX))
}

pub fn hardy_check(f: &SpinorField, op: &OperatorHandle, constants: &FieldConstants, eps: f64) -> Result<HardyReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    if !constants.c0.is_finite() {
        return Err(Error::InfiniteConstant("C0"));
    }
    let b2 = constants.b2_sup;
    if op.m == 0.0 && b2 > 0.0 {
        return Err(Error::MasslessWithBoundedField(b2));
    }
    op.grid.ensure_same(&f.grid)?;
    let grid = op.grid;
    let dv = grid.cell_volume();
    let weighted: f64 = (0..grid.len())
        .map(|i| {
            let r = grid.regularized_radius(i);
            f.density(i) / (r * r) * dv
        })
        .sum();
    let gradient: f64 = op.covariant_derivatives(f)?.iter().map(SpinorField::norm_sqr).sum();
    let mass_term = op.m * op.m * f.norm_sqr();
    let hf = dirac_apply(f, op)?.norm_sqr();
    let dirac_norm_sq = op.dirac_massless(f)?.norm_sqr();
    let spin_term = op.spin_b(f).inner(f).re;
    let lhs = mass_term + ((1.0 - eps) / 4.0 - constants.c0) * weighted + eps * gradient;
    let rhs = if op.m == 0.0 { hf } else { (1.0 + b2 / (op.m * op.m)) * hf };
    let denom = dirac_norm_sq.max(gradient).max(f64::MIN_POSITIVE);
    let identity_residual = (dirac_norm_sq - gradient + 2.0 * spin_term).abs() / denom;
    Ok(HardyReport {
        eps,
        c0: constants.c0,
        b2_sup: b2,
        mass_term,
        weighted,
        gradient,
        lhs,
        rhs,
        margin: rhs - lhs,
        magnetic_hardy_margin: gradient - 0.25 * weighted,
        dirac_norm_sq,
        spin_term,
        identity_residual,
        holds: lhs <= rhs * (1.0 + 1e-12),
    })
}

// ---------------------------------------------------------------------------
// Bound on the momentum functional

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RhsBoundReport {
    pub eps: f64,
    pub m: f64,
    pub times: Vec<f64>,
    /// `|Re(u_t, 2∇φ·∇_A u + (Δφ)u)|`.
    pub momentum: Vec<f64>,
    /// `3/2‖𝒟_A u‖² + ‖∇φ·∇_A u‖² + ½‖uΔφ‖²`.
    pub young: Vec<f64>,
    /// `K‖𝒟_A u‖²` with `K = 3/2 + (M+½)²/ε + 2(1+2M)²/ε`.
    pub chain: Vec<f64>,
    /// `K′‖𝒟_A u‖²` with the unsquared `K′ = 3/2 + (M+½)/ε + 2(1+2M)/ε`.
    pub printed_chain: Vec<f64>,
    pub constant: f64,
    pub printed_constant: f64,
    /// `min_t (chain − momentum)`.
    pub margin: f64,
    pub printed_margin: f64,
    /// `min_t (young − momentum)`.
    pub young_margin: f64,
}

pub fn rhs_bound_check(traj: &Trajectory, phi: &Multiplier, constants: &FieldConstants) -> Result<RhsBoundReport> {
    let c0 = constants.c0;
    if !(c0 < 0.25) {
        return Err(Error::HardyConstant(c0));
    }
    let eps = 1.0 - 4.0 * c0;
    let m = phi.m;
    let constant = 1.5 + (m + 0.5).powi(2) / eps + 2.0 * (1.0 + 2.0 * m).powi(2) / eps;
    let printed_constant = 1.5 + (m + 0.5) / eps + 2.0 * (1.0 + 2.0 * m) / eps;
    let op = &traj.op;
    let grid = op.grid;
    let ex = exact_samples(phi, &grid);
    let mut rep = RhsBoundReport {
        eps,
        m,
        times: traj.times.clone(),
        constant,
        printed_constant,
        margin: f64::INFINITY,
        printed_margin: f64::INFINITY,
        young_margin: f64::INFINITY,
        ..Default::default()
    };
    for (u, ut) in traj.states.iter().zip(&traj.dstates) {
        let grad = op.covariant_derivatives(u)?;
        let p = momentum_pairing(ut, &grad, u, &ex.grad, &ex.lap).abs();
        let d = op.dirac_massless(u)?.norm_sqr();
        let mut dg = SpinorField::zeros(grid);
        for k in 0..3 {
            dg = dg.add(&grad[k].mul_real(&ex.grad[k]));
        }
        let young = 1.5 * d + dg.norm_sqr() + 0.5 * u.mul_real(&ex.lap).norm_sqr();
        rep.momentum.push(p);
        rep.young.push(young);
        rep.chain.push(constant * d);
        rep.printed_chain.push(printed_constant * d);
        rep.margin = rep.margin.min(constant * d - p);
        rep.printed_margin = rep.printed_margin.min(printed_constant * d - p);
        rep.young_margin = rep.young_margin.min(young - p);
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Strichartz sampling

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdmissibleClass {
    Wave,
    Schrodinger,
}

impl AdmissibleClass {
    pub fn name(self) -> &'static str {
        match self {
            AdmissibleClass::Wave => "wave",
            AdmissibleClass::Schrodinger => "Schrödinger",
        }
    }

    /// Wave pairs for the massless flow, Schrödinger pairs otherwise.
    pub fn for_mass(m: f64) -> Self {
        if m == 0.0 {
            AdmissibleClass::Wave
        } else {
            AdmissibleClass::Schrodinger
        }
    }
}

fn exponent(v: f64) -> String {
    if v.is_infinite() {
        "∞".into()
    } else {
        format!("{v}")
    }
}

fn recip(v: f64) -> f64 {
    if v.is_infinite() {
        0.0
    } else {
        1.0 / v
    }
}

/// Checks `(p, q)` against the scaling relation and ranges of `class`.
pub fn check_admissible(p: f64, q: f64, class: AdmissibleClass) -> Result<()> {
    let fail = |relation: String| Error::Inadmissible {
        p: exponent(p),
        q: exponent(q),
        class: class.name(),
        relation,
    };
    if p.is_nan() || q.is_nan() {
        return Err(fail("exponents must be numbers".into()));
    }
    let (ip, iq) = (recip(p), recip(q));
    match class {
        AdmissibleClass::Wave => {
            let lhs = 2.0 * ip + 2.0 * iq;
            if (lhs - 1.0).abs() > 1e-12 {
                return Err(fail(format!("2/p + 2/q = {lhs} ≠ 1")));
            }
            if !(p > 2.0) {
                return Err(fail("requires 2 < p ≤ ∞".into()));
            }
            if !(q >= 2.0 && q.is_finite()) {
                return Err(fail("requires 2 ≤ q < ∞".into()));
            }
        }
        AdmissibleClass::Schrodinger => {
            let lhs = 2.0 * ip + 3.0 * iq;
            if (lhs - 1.5).abs() > 1e-12 {
                return Err(fail(format!("2/p + 3/q = {lhs} ≠ 3/2")));
            }
            if !(p >= 2.0) {
                return Err(fail("requires 2 ≤ p ≤ ∞".into()));
            }
            if !((2.0..=6.0).contains(&q)) {
                return Err(fail("requires 2 ≤ q ≤ 6".into()));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrichartzReport {
    pub p: f64,
    pub q: f64,
    pub class: AdmissibleClass,
    /// `s = 1/q − 1/p − 1/2`.
    pub s: f64,
    pub horizon: f64,
    /// `‖u‖_{L^p([t₀,T]; H^s_q)}`.
    pub norm: f64,
    pub f_norm: f64,
    pub ratio: f64,
}

/// `L^q` norm of the spinor modulus of `|∇|^s u` (massless) or
/// `(1 − Δ)^{s/2} u` (massive).
fn sobolev_lq(u: &SpinorField, op: &OperatorHandle, s: f64, q: f64, class: AdmissibleClass) -> f64 {
    let grid = u.grid;
    let n = grid.n;
    let fft = op.fft();
    let mut comps = Vec::with_capacity(4);
    for c in 0..4 {
        let mut buf = u.component(c).to_vec();
        if s != 0.0 {
            fft.forward(&mut buf);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let kk = [grid.wavenumber(i), grid.wavenumber(j), grid.wavenumber(k)];
                        let k2 = kk[0] * kk[0] + kk[1] * kk[1] + kk[2] * kk[2];
                        let w = match class {
                            AdmissibleClass::Wave if k2 == 0.0 => 0.0,
                            AdmissibleClass::Wave => k2.powf(0.5 * s),
                            AdmissibleClass::Schrodinger => (1.0 + k2).powf(0.5 * s),
                        };
                        buf[grid.index(i, j, k)] *= w;
                    }
                }
            }
            fft.inverse(&mut buf);
        }
        comps.push(buf);
    }
    let dv = grid.cell_volume();
    let modulus = (0..grid.len()).map(|i| comps.iter().map(|c| c[i].norm_sqr()).sum::<f64>().sqrt());
    if q.is_infinite() {
        modulus.fold(0.0, f64::max)
    } else {
        (modulus.map(|m| m.powf(q)).sum::<f64>() * dv).powf(1.0 / q)
    }
}

pub fn strichartz_ratio(traj: &Trajectory, p: f64, q: f64) -> Result<StrichartzReport> {
    let class = AdmissibleClass::for_mass(traj.op.m);
    check_admissible(p, q, class)?;
    let s = recip(q) - recip(p) - 0.5;
    let values: Vec<f64> = traj
        .states
        .iter()
        .map(|u| sobolev_lq(u, &traj.op, s, q, class))
        .collect();
    let norm = if p.is_infinite() {
        values.iter().copied().fold(0.0, f64::max)
    } else {
        if traj.len() < 2 {
            return Err(Error::ShortTrajectory {
                needed: 2,
                found: traj.len(),
            });
        }
        let ys: Vec<f64> = values.iter().map(|v| v.powf(p)).collect();
        trapezoid(&traj.times, &ys).powf(1.0 / p)
    };
    let f_norm = traj.states[0].norm();
    Ok(StrichartzReport {
        p,
        q,
        class,
        s,
        horizon: *traj.times.last().unwrap_or(&0.0),
        norm,
        f_norm,
        ratio: if f_norm > 0.0 { norm / f_norm } else { 0.0 },
    })
}

// ---------------------------------------------------------------------------
// CSV

pub const VIRIAL_CSV_HEADER: &str = "t,hessian,bilaplacian,b_tau,spin_db,spin_db_full,momentum,momentum_rate,residual";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn virial_csv(rep: &VirialReport) -> String {
    let mut s = format!(
        "# grid={}\n# R={} M={}\n# max_residual={}\n{VIRIAL_CSV_HEADER}\n",
        rep.grid, rep.multiplier.0, rep.multiplier.1, rep.max_residual
    );
    for k in 0..rep.times.len() {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            rep.times[k],
            rep.hessian[k],
            rep.bilaplacian[k],
            rep.b_tau[k],
            rep.spin_db[k],
            rep.spin_db_full[k],
            rep.momentum[k],
            opt(rep.momentum_rate[k]),
            opt(rep.residual[k])
        ));
    }
    s
}

pub const THETA_CSV_HEADER: &str = "t,theta,theta_dot,theta_ddot,theta_dot_formula,theta_ddot_formula";

pub fn theta_csv(th: &ThetaSeries) -> String {
    let mut s = format!("{THETA_CSV_HEADER}\n");
    for k in 0..th.times.len() {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            th.times[k], th.theta[k], th.theta_dot[k], th.theta_ddot[k], th.theta_dot_formula[k], th.theta_ddot_formula[k]
        ));
    }
    s
}

pub const SMOOTHING_CSV_HEADER: &str = "T,R,x_norm,y_norm,grad_x_norm,tangential,ratio_l2,ratio_energy";

pub fn smoothing_csv(reps: &[SmoothingReport]) -> String {
    let mut s = format!("{SMOOTHING_CSV_HEADER}\n");
    for rep in reps {
        for (j, r) in rep.radii.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                rep.horizon, r, rep.x_norm[j], rep.y_norm[j], rep.grad_x_norm[j], rep.tangential, rep.ratio_l2, rep.ratio_energy
            ));
        }
    }
    s
}

pub const HARDY_CSV_HEADER: &str =
    "label,eps,C0,B2_sup,mass_term,weighted,gradient,lhs,rhs,margin,magnetic_hardy_margin,identity_residual,verdict";

pub fn hardy_csv_row(label: &str, r: &HardyReport) -> String {
    format!(
        "{label},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.eps,
        r.c0,
        r.b2_sup,
        r.mass_term,
        r.weighted,
        r.gradient,
        r.lhs,
        r.rhs,
        r.margin,
        r.magnetic_hardy_margin,
        r.identity_residual,
        if r.holds { "pass" } else { "fail" }
    )
}

pub const STRICHARTZ_CSV_HEADER: &str = "p,q,class,s,T,norm,f_norm,ratio";

pub fn strichartz_csv_row(r: &StrichartzReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        exponent(r.p),
        exponent(r.q),
        r.class.name(),
        r.s,
        r.horizon,
        r.norm,
        r.f_norm,
        r.ratio
    )
}

pub const RHS_BOUND_CSV_HEADER: &str = "t,momentum,young,chain,printed_chain";

pub fn rhs_bound_csv(r: &RhsBoundReport) -> String {
    let mut s = format!(
        "# eps={} M={} K={} K_printed={}\n{RHS_BOUND_CSV_HEADER}\n",
        r.eps, r.m, r.constant, r.printed_constant
    );
    for k in 0..r.times.len() {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.times[k], r.momentum[k], r.young[k], r.chain[k], r.printed_chain[k]
        ));
    }
    s
}

pub const QUADRATIC_FORM_CSV_HEADER: &str = "M,C1,C2,min,discriminant,nonnegative";

pub fn quadratic_form_csv_row(r: &QuadraticFormReport) -> String {
    format!("{},{},{},{},{},{}", r.m, r.c1, r.c2, r.min, r.discriminant, r.nonnegative)
}
