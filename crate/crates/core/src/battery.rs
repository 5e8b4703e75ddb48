//! Band-limited test fields and data on a periodic box.
//!
//! Every member is a trigonometric polynomial with a fixed number of Fourier
//! modes per axis, so lattice products stay below the Nyquist frequency once
//! `N` is large enough and fall above it on coarse grids.

use std::f64::consts::PI;

use num_complex::Complex64 as C;

use crate::lattice::{Grid, MultiplierSamples, OperatorHandle, PointValues, SpinorField};
use crate::Result;

/// Data order used by the standard battery.
pub const DATA_ORDER: u32 = 3;

/// `φ = Σ cos(κx_k)/κ²` with `κ = 2π/L`: a one-mode multiplier whose
/// products with battery members stay below Nyquist for `N ≥ 20`.
pub fn trig_multiplier(grid: Grid) -> MultiplierSamples {
    let kappa = 2.0 * PI / grid.l;
    MultiplierSamples::from_fn(grid, |x| {
        let c = x.map(|v| (kappa * v).cos());
        let sum: f64 = c.iter().sum();
        let mut v = PointValues {
            phi: sum / (kappa * kappa),
            lap: -sum,
            bilap: kappa * kappa * sum,
            ..Default::default()
        };
        for k in 0..3 {
            v.grad[k] = -(kappa * x[k]).sin() / kappa;
            v.hess[k][k] = -c[k];
        }
        v
    })
}

/// Highest Fourier mode per axis of the battery potentials.
pub const FIELD_MODES: u32 = 2;

/// Potential amplitudes of the two swirl fields.
pub const SWIRL_AMPLITUDE: f64 = 0.2;
pub const TILTED_AMPLITUDE: f64 = 0.6;

/// `Π_k cos^{2p}(π x_k / L)`, with modes `|m| ≤ p` per axis.
pub fn bump(x: [f64; 3], l: f64, p: u32) -> f64 {
    x.iter()
        .map(|v| (0.5 + 0.5 * (2.0 * PI * v / l).cos()).powi(p as i32))
        .product()
}

/// `a · bump₁(x) · e × s(x)` with `s_k = sin(κ x_k)/κ`, `κ = 2π/L`.
fn swirl(grid: &Grid, a: f64, axis: [f64; 3]) -> [Vec<f64>; 3] {
    let kappa = 2.0 * PI / grid.l;
    let n3 = grid.len();
    let mut out = [vec![0.0; n3], vec![0.0; n3], vec![0.0; n3]];
    for i in 0..n3 {
        let x = grid.relative(i);
        let w = a * bump(x, grid.l, 1);
        let s = x.map(|v| (kappa * v).sin() / kappa);
        let v = crate::field::cross(axis, s);
        for k in 0..3 {
            out[k][i] = w * v[k];
        }
    }
    out
}

/// Names of the battery fields, in order.
pub const FIELD_NAMES: [&str; 3] = ["trig_swirl", "trig_tilted", "constant_shift"];

/// Names of the battery data, in order.
pub const DATA_NAMES: [&str; 3] = ["upper", "mixed", "boosted"];

/// The three battery operators with mass `m`.
pub fn battery_operators(grid: Grid, m: f64) -> Result<Vec<(&'static str, OperatorHandle)>> {
    let t = 1.0 / 3f64.sqrt();
    let shift = [0.3, -0.2, 0.5].map(|v| vec![v; grid.len()]);
    Ok(vec![
        (FIELD_NAMES[0], OperatorHandle::new(grid, swirl(&grid, SWIRL_AMPLITUDE, [0.0, 0.0, 1.0]), m)?),
        (FIELD_NAMES[1], OperatorHandle::new(grid, swirl(&grid, TILTED_AMPLITUDE, [t, t, t]), m)?),
        (FIELD_NAMES[2], OperatorHandle::new(grid, shift, m)?),
    ])
}

/// The three battery data built on [`bump`] of order `p`; the last one
/// carries a plane-wave factor `e^{iκx}` and so one extra mode.
pub fn battery_data(grid: Grid, p: u32) -> Vec<(&'static str, SpinorField)> {
    let kappa = 2.0 * PI / grid.l;
    let l = grid.l;
    let upper = SpinorField::from_fn(grid, |x| {
        let e = bump(x, l, p);
        [C::new(e, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0)]
    });
    let mixed = SpinorField::from_fn(grid, |x| {
        let e = bump(x, l, p);
        let s = (kappa * x[2]).sin();
        [
            C::new(0.6 * e, 0.0),
            C::new(0.0, 0.4 * e * s),
            C::new(-0.3 * e, 0.2 * e),
            C::new(0.1 * e * s, 0.0),
        ]
    });
    let boosted = SpinorField::from_fn(grid, |x| {
        let e = bump(x, l, p);
        let ph = C::from_polar(e, kappa * x[0]);
        [ph, C::new(0.0, 0.3) * ph, C::new(0.2, 0.0) * ph, C::new(0.1, 0.1) * ph]
    });
    vec![(DATA_NAMES[0], upper), (DATA_NAMES[1], mixed), (DATA_NAMES[2], boosted)]
}

/// Highest Fourier mode per axis of a product of battery potential and
/// datum of order `p`.
pub fn product_modes(p: u32) -> u32 {
    p + 1 + FIELD_MODES
}

/// Whether products of battery potentials and order-`p` data stay strictly
/// below the Nyquist mode of `grid`.
pub fn supports_fit(grid: &Grid, p: u32) -> bool {
    (product_modes(p) as usize) < grid.n / 2
}

/// `max_i r_i² |B(x_i)|` over the lattice nodes with the regularized radius
/// `r_i = max(|x_i|, h/2)`, the whole field taken as the `B₁` part.
pub fn sampled_c0(op: &OperatorHandle) -> f64 {
    (0..op.grid.len())
        .map(|i| {
            let r = op.grid.regularized_radius(i);
            r * r * crate::field::norm(op.b_at(i))
        })
        .fold(0.0, f64::max)
}
