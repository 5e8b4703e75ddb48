//! The radial multiplier `φ_R` and its mollified variant.
//!
//! ```text
//!   φ′_R(r) = M + r/(3R)               r ≤ R
//!   φ′_R(r) = M + 1/2 − R²/(6r²)       r ≥ R
//! ```
//!
//! normalized by `φ_R(0) = 0`. Then `Δφ_R = 1/R + 2M/r` inside,
//! `(1 + 2M)/r` outside, and in the sense of distributions
//! `Δ²φ_R = −8πM δ₀ − R^{-2} δ_{|x|=R}`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lattice::{Grid, MultiplierSamples};
use crate::quadrature::PanelRule;

/// Truncation of the Gaussian mollifier, in widths.
const KERNEL_SPAN: f64 = 8.0;
const KERNEL_ORDER: usize = 20;

#[derive(Clone, Debug)]
pub struct Multiplier {
    pub r: f64,
    pub m: f64,
    /// Mollifier width; zero for the exact profile.
    pub s: f64,
    rule: PanelRule,
}

impl PartialEq for Multiplier {
    fn eq(&self, other: &Self) -> bool {
        self.r == other.r && self.m == other.m && self.s == other.s
    }
}

pub fn make_multiplier(r: f64, m: f64, s: f64) -> Result<Multiplier> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidMultiplier(format!("R must be positive, got {r}")));
    }
    if !(m >= 0.0) || !m.is_finite() {
        return Err(Error::InvalidMultiplier(format!("M must be nonnegative, got {m}")));
    }
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::InvalidMultiplier(format!("smoothing width must be nonnegative, got {s}")));
    }
    Ok(Multiplier {
        r,
        m,
        s,
        rule: PanelRule::new(KERNEL_ORDER),
    })
}

/// `M = C₁ / (2√(C₁² + 6C₂))`, zero when both constants vanish.
pub fn optimal_m(c1: f64, c2: f64) -> f64 {
    let d = (c1 * c1 + 6.0 * c2).sqrt();
    if d == 0.0 {
        0.0
    } else {
        c1 / (2.0 * d)
    }
}

impl Multiplier {
    /// Exact profile `φ_R(r)` (for `r ≥ 0`).
    pub fn phi_exact(&self, r: f64) -> f64 {
        let (rr, m) = (self.r, self.m);
        if r <= rr {
            m * r + r * r / (6.0 * rr)
        } else {
            (m + 0.5) * r + rr * rr / (6.0 * r) - 0.5 * rr
        }
    }

    pub fn d1_exact(&self, r: f64) -> f64 {
        let (rr, m) = (self.r, self.m);
        if r <= rr {
            m + r / (3.0 * rr)
        } else {
            m + 0.5 - rr * rr / (6.0 * r * r)
        }
    }

    pub fn d2_exact(&self, r: f64) -> f64 {
        let rr = self.r;
        if r <= rr {
            1.0 / (3.0 * rr)
        } else {
            rr * rr / (3.0 * r * r * r)
        }
    }

    /// `Δφ_R(r)` for `r > 0`.
    pub fn lap_exact(&self, r: f64) -> f64 {
        let (rr, m) = (self.r, self.m);
        if r <= rr {
            1.0 / rr + 2.0 * m / r
        } else {
            (1.0 + 2.0 * m) / r
        }
    }

    /// Weight of `δ₀` in `Δ²φ_R`.
    pub fn point_mass(&self) -> f64 {
        -8.0 * PI * self.m
    }

    /// Weight of the surface measure on `|x| = R` in `Δ²φ_R`.
    pub fn sphere_mass(&self) -> f64 {
        -1.0 / (self.r * self.r)
    }

    /// `(f, f′, f″, f‴, f⁗)` of the mollified even extension at `r`.
    fn mollified_derivatives(&self, r: f64) -> [f64; 5] {
        let s = self.s;
        let span = KERNEL_SPAN * s;
        let (lo, hi) = (r - span, r + span);
        let mut cuts = vec![lo];
        for k in [-self.r, 0.0, self.r] {
            if k > lo && k < hi {
                cuts.push(k);
            }
        }
        cuts.push(hi);
        let norm = 1.0 / (s * (2.0 * PI).sqrt());
        let mut acc = [0.0; 5];
        for w in cuts.windows(2) {
            let pieces = ((w[1] - w[0]) / s).ceil().max(1.0) as usize;
            let step = (w[1] - w[0]) / pieces as f64;
            for p in 0..pieces {
                let a = w[0] + p as f64 * step;
                let v: Acc5 = self.rule.integrate(a, a + step, |t| {
                    let x = r - t;
                    let u = x / s;
                    let k = norm * (-0.5 * u * u).exp();
                    let f = self.phi_exact(t.abs());
                    let s2 = s * s;
                    let s4 = s2 * s2;
                    Acc5([
                        f * k,
                        f * (-x / s2) * k,
                        f * (x * x / s4 - 1.0 / s2) * k,
                        f * (-x * x * x / (s4 * s2) + 3.0 * x / s4) * k,
                        f * (x * x * x * x / (s4 * s4) - 6.0 * x * x / (s4 * s2) + 3.0 / s4) * k,
                    ])
                });
                for i in 0..5 {
                    acc[i] += v.0[i];
                }
            }
        }
        acc
    }

    /// `(φ, φ′, φ″, Δφ, Δ²φ)` at radius `r`.
    ///
    /// For the exact profile `Δ²φ` is reported as 0 (its singular part is
    /// carried by [`Self::point_mass`] and [`Self::sphere_mass`]) and the
    /// `r = 0` values are the one-sided limits, with `Δφ(0)` finite only
    /// when `M = 0`.
    pub fn radial_values(&self, r: f64) -> [f64; 5] {
        if self.s == 0.0 {
            let lap = if r == 0.0 {
                if self.m == 0.0 {
                    1.0 / self.r
                } else {
                    f64::INFINITY
                }
            } else {
                self.lap_exact(r)
            };
            return [self.phi_exact(r), self.d1_exact(r), self.d2_exact(r), lap, 0.0];
        }
        let [f0, f1, f2, f3, f4] = self.mollified_derivatives(r);
        if r == 0.0 {
            [f0, 0.0, f2, 3.0 * f2, 5.0 * f4]
        } else {
            [f0, f1, f2, f2 + 2.0 * f1 / r, f4 + 4.0 * f3 / r]
        }
    }

    /// Samples on a grid about its center. Singular values at the center
    /// (exact profile) use the regularized radius `h/2`.
    pub fn samples(&self, grid: Grid) -> MultiplierSamples {
        let reg = 0.5 * grid.h();
        MultiplierSamples::radial(grid, |r| {
            if self.s == 0.0 && r == 0.0 {
                let mut v = self.radial_values(0.0);
                v[3] = self.lap_exact(reg);
                v
            } else {
                self.radial_values(r)
            }
        })
    }
}

#[derive(Clone, Copy, Default)]
struct Acc5([f64; 5]);

impl std::ops::AddAssign for Acc5 {
    fn add_assign(&mut self, o: Acc5) {
        for i in 0..5 {
            self.0[i] += o.0[i];
        }
    }
}

impl std::ops::Mul<f64> for Acc5 {
    type Output = Acc5;
    fn mul(self, s: f64) -> Acc5 {
        Acc5(self.0.map(|v| v * s))
    }
}
