//! Quadrature rules shared by the field and virial modules.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(order.max(1)).expect("nonzero");
    GaussLegendre::new(n).as_node_weight_pairs().to_vec()
}

/// Fixed-order Gauss–Legendre rule mapped onto arbitrary panels.
#[derive(Clone, Debug)]
pub struct PanelRule {
    pairs: Vec<(f64, f64)>,
}

impl PanelRule {
    pub fn new(order: usize) -> Self {
        PanelRule {
            pairs: gauss_legendre(order),
        }
    }

    pub fn order(&self) -> usize {
        self.pairs.len()
    }

    /// `∫_a^b f` with one panel.
    pub fn integrate<T, F>(&self, a: f64, b: f64, mut f: F) -> T
    where
        T: Default + std::ops::AddAssign + std::ops::Mul<f64, Output = T>,
        F: FnMut(f64) -> T,
    {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut acc = T::default();
        for &(x, w) in &self.pairs {
            acc += f(mid + half * x) * (w * half);
        }
        acc
    }

    /// `∫_0^1 f` over the geometric panels `[2^{-k-1}, 2^{-k}]`, `k < levels`,
    /// plus the innermost `[0, 2^{-levels}]`.
    pub fn integrate_unit_geometric<T, F>(&self, levels: u32, mut f: F) -> T
    where
        T: Default + std::ops::AddAssign + std::ops::Mul<f64, Output = T>,
        F: FnMut(f64) -> T,
    {
        let mut acc = T::default();
        let mut hi = 1.0;
        for _ in 0..levels {
            let lo = 0.5 * hi;
            acc += self.integrate(lo, hi, &mut f);
            hi = lo;
        }
        acc += self.integrate(0.0, hi, &mut f);
        acc
    }
}

/// Unit directions of the cube-sphere vertex design: the lattice points of
/// the surface of `[-n, n]³` (`n = 2^level`) projected radially, `24n² + 2`
/// directions. Level 0 gives the 26 face, edge and corner directions.
pub fn cube_sphere_directions(level: u32) -> Vec<[f64; 3]> {
    let n = 1i64 << level;
    let mut dirs = Vec::new();
    for i in -n..=n {
        for j in -n..=n {
            for k in -n..=n {
                if i.abs().max(j.abs()).max(k.abs()) != n {
                    continue;
                }
                let v = [i as f64, j as f64, k as f64];
                let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                dirs.push([v[0] / r, v[1] / r, v[2] / r]);
            }
        }
    }
    dirs
}

/// Product rule on the unit sphere: Gauss–Legendre in `cos θ` times the
/// uniform rule in the azimuth. Exact for spherical harmonics of degree
/// `< 2·n_theta`.
#[derive(Clone, Debug)]
pub struct SphereRule {
    pub nodes: Vec<([f64; 3], f64)>,
}

impl SphereRule {
    pub fn product(n_theta: usize) -> Self {
        let n_phi = 2 * n_theta;
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        for (ct, w) in gauss_legendre(n_theta) {
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            for j in 0..n_phi {
                let ph = 2.0 * PI * (j as f64 + 0.5) / n_phi as f64;
                nodes.push((
                    [st * ph.cos(), st * ph.sin(), ct],
                    w * 2.0 * PI / n_phi as f64,
                ));
            }
        }
        SphereRule { nodes }
    }

    /// Smallest product rule with at least `26·4^level` nodes.
    pub fn with_level(level: u32) -> Self {
        let target = 26usize * 4usize.pow(level);
        let mut n = 1;
        while 2 * n * n < target {
            n += 1;
        }
        Self::product(n)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∮_{|x|=1} f dσ`.
    pub fn integrate(&self, mut f: impl FnMut([f64; 3]) -> f64) -> f64 {
        self.nodes.iter().map(|&(d, w)| w * f(d)).sum()
    }
}

/// Composite trapezoid rule over paired samples.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}
