//! Dirac, Pauli and spin matrices.
//!
//! The Dirac matrices are written in the standard (Dirac–Pauli) block form
//!
//! ```text
//!   alpha_k = [[0, sigma_k], [sigma_k, 0]],   beta = [[I2, 0], [0, -I2]]
//! ```
//!
//! and every identity used by the lattice code (anticommutators, the
//! Clifford product rule, spin norms) can be checked exactly here because all
//! entries are in `{0, ±1, ±i}`.
//!
//! Spin sign convention: [`spin_operator`] returns `S = Σ/2` with
//! `Σ_k = diag(sigma_k, sigma_k)`. This is the sign for which both the product
//! rule `(α·F)(α·G) = F·G + 2i S·(F∧G)` and the squared operator
//! `H² = (m² − Δ_A) − 2 S·B` hold. The literal wedge `(i/4) α∧α` with the
//! ordering `(α2α3 − α3α2, α3α1 − α1α3, α1α2 − α2α1)` is the *negative* of
//! that; it is kept available as [`literal_wedge_spin`] and the relation is
//! recorded by [`algebra_self_test`].

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use rand::Rng;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// Dense 4×4 complex matrix.
#[derive(Clone, Copy, PartialEq)]
pub struct Matrix4(pub [[Complex64; 4]; 4]);

impl Matrix4 {
    pub const fn zero() -> Self {
        Matrix4([[ZERO; 4]; 4])
    }

    pub fn identity() -> Self {
        Self::diag([ONE; 4])
    }

    pub fn diag(d: [Complex64; 4]) -> Self {
        let mut m = Self::zero();
        for (i, v) in d.into_iter().enumerate() {
            m.0[i][i] = v;
        }
        m
    }

    /// Builds `[[a, b], [c, d]]` from 2×2 blocks.
    pub fn from_blocks(
        a: [[Complex64; 2]; 2],
        b: [[Complex64; 2]; 2],
        c: [[Complex64; 2]; 2],
        d: [[Complex64; 2]; 2],
    ) -> Self {
        let mut m = Self::zero();
        for i in 0..2 {
            for j in 0..2 {
                m.0[i][j] = a[i][j];
                m.0[i][j + 2] = b[i][j];
                m.0[i + 2][j] = c[i][j];
                m.0[i + 2][j + 2] = d[i][j];
            }
        }
        m
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|v| *v *= s);
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// `self · v` for a single spinor.
    #[inline]
    pub fn apply(&self, v: &[Complex64; 4]) -> [Complex64; 4] {
        let mut out = [ZERO; 4];
        for (i, row) in self.0.iter().enumerate() {
            out[i] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
        }
        out
    }

    /// `AB + BA`.
    pub fn anticommutator(&self, other: &Self) -> Self {
        *self * *other + *other * *self
    }

    /// `AB − BA`.
    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }
}

impl fmt::Debug for Matrix4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix4[")?;
        for row in &self.0 {
            write!(f, "  ")?;
            for v in row {
                write!(f, "{:>6.3}{:+.3}i ", v.re, v.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Add for Matrix4 {
    type Output = Matrix4;
    fn add(mut self, rhs: Matrix4) -> Matrix4 {
        for (a, b) in self.0.iter_mut().flatten().zip(rhs.0.iter().flatten()) {
            *a += b;
        }
        self
    }
}

impl Sub for Matrix4 {
    type Output = Matrix4;
    fn sub(mut self, rhs: Matrix4) -> Matrix4 {
        for (a, b) in self.0.iter_mut().flatten().zip(rhs.0.iter().flatten()) {
            *a -= b;
        }
        self
    }
}

impl Neg for Matrix4 {
    type Output = Matrix4;
    fn neg(self) -> Matrix4 {
        self.scale(-ONE)
    }
}

impl Mul for Matrix4 {
    type Output = Matrix4;
    fn mul(self, rhs: Matrix4) -> Matrix4 {
        let mut m = Matrix4::zero();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = (0..4).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        m
    }
}

/// A triple of 4×4 matrices: the spin vector `S`, or a matrix-valued field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatrixVector(pub [Matrix4; 3]);

impl MatrixVector {
    /// Scalar triple embedded as multiples of the identity.
    pub fn from_scalars(v: [Complex64; 3]) -> Self {
        MatrixVector(v.map(|c| Matrix4::identity().scale(c)))
    }

    /// `F·G = Σ F_k G_k` (ordered products).
    pub fn dot(&self, other: &Self) -> Matrix4 {
        (0..3).fold(Matrix4::zero(), |acc, k| acc + self.0[k] * other.0[k])
    }

    /// `F∧G` with ordered products, `(F2G3 − F3G2, F3G1 − F1G3, F1G2 − F2G1)`.
    pub fn wedge(&self, other: &Self) -> Self {
        let (f, g) = (&self.0, &other.0);
        MatrixVector([
            f[1] * g[2] - f[2] * g[1],
            f[2] * g[0] - f[0] * g[2],
            f[0] * g[1] - f[1] * g[0],
        ])
    }

    /// `Σ_k self_k · c_k` for a real vector `c` (e.g. `S·B`).
    pub fn contract_real(&self, c: [f64; 3]) -> Matrix4 {
        (0..3).fold(Matrix4::zero(), |acc, k| {
            acc + self.0[k].scale(Complex64::new(c[k], 0.0))
        })
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(Matrix4::is_finite)
    }
}

/// The fixed Dirac matrices `α1, α2, α3, β` and `I4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiracBasis {
    pub alpha: [Matrix4; 3],
    pub beta: Matrix4,
    pub identity: Matrix4,
}

impl DiracBasis {
    /// `α·F = Σ α_k F_k`.
    pub fn alpha_dot(&self, f: &MatrixVector) -> Matrix4 {
        (0..3).fold(Matrix4::zero(), |acc, k| acc + self.alpha[k] * f.0[k])
    }
}

impl Default for DiracBasis {
    fn default() -> Self {
        build_dirac_basis()
    }
}

/// Pauli matrices `σ1, σ2, σ3`.
pub fn pauli() -> [[[Complex64; 2]; 2]; 3] {
    [
        [[ZERO, ONE], [ONE, ZERO]],
        [[ZERO, -I], [I, ZERO]],
        [[ONE, ZERO], [ZERO, -ONE]],
    ]
}

pub fn build_dirac_basis() -> DiracBasis {
    let z = [[ZERO; 2]; 2];
    let id2 = [[ONE, ZERO], [ZERO, ONE]];
    let mid2 = [[-ONE, ZERO], [ZERO, -ONE]];
    let alpha = pauli().map(|s| Matrix4::from_blocks(z, s, s, z));
    DiracBasis {
        alpha,
        beta: Matrix4::from_blocks(id2, z, z, mid2),
        identity: Matrix4::identity(),
    }
}

/// `(i/4) α∧α` with the component ordering
/// `(α2α3 − α3α2, α3α1 − α1α3, α1α2 − α2α1)`. Equals `−Σ/2`.
pub fn literal_wedge_spin(basis: &DiracBasis) -> MatrixVector {
    let a = &basis.alpha;
    let quarter_i = I * 0.25;
    MatrixVector([
        a[1].commutator(&a[2]).scale(quarter_i),
        a[2].commutator(&a[0]).scale(quarter_i),
        a[0].commutator(&a[1]).scale(quarter_i),
    ])
}

/// Spin operator `S = Σ/2`, the sign under which the Clifford product rule
/// and the squared-operator formula hold (see the module docs).
pub fn spin_operator(basis: &DiracBasis) -> MatrixVector {
    let lit = literal_wedge_spin(basis);
    MatrixVector(lit.0.map(|m| -m))
}

/// Max-entry difference between `(α·F)(α·G)` and `F·G + 2i S·(F∧G)`.
///
/// Zero (to rounding) whenever the components of `F` and `G` commute with the
/// Dirac matrices, e.g. scalar multiples of `I4`. For general matrix entries
/// the rule does not hold and the returned value is the defect.
pub fn clifford_product_check(
    f: &MatrixVector,
    g: &MatrixVector,
    basis: &DiracBasis,
    spin: &MatrixVector,
) -> f64 {
    let lhs = basis.alpha_dot(f) * basis.alpha_dot(g);
    let cross = f.wedge(g);
    let rhs = f.dot(g) + spin.dot(&cross).scale(I * 2.0);
    lhs.max_abs_diff(&rhs)
}

/// Largest Clifford-product residual over `count` seeded random complex
/// scalar triples.
pub fn clifford_random_check(
    basis: &DiracBasis,
    spin: &MatrixVector,
    count: usize,
    rng: &mut impl Rng,
) -> f64 {
    let mut draw = || Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    (0..count)
        .map(|_| {
            let f = MatrixVector::from_scalars([draw(), draw(), draw()]);
            let g = MatrixVector::from_scalars([draw(), draw(), draw()]);
            clifford_product_check(&f, &g, basis, spin)
        })
        .fold(0.0, f64::max)
}

/// `‖{a, b} − 2δ I‖_max`.
pub fn anticommutator_residual(a: &Matrix4, b: &Matrix4, delta: bool) -> f64 {
    let target = if delta {
        Matrix4::identity().scale(Complex64::new(2.0, 0.0))
    } else {
        Matrix4::zero()
    };
    a.anticommutator(b).max_abs_diff(&target)
}

/// One named identity and its residual.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityCheck {
    pub name: String,
    pub residual: f64,
}

/// Aggregated algebra identities.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraReport {
    pub checks: Vec<IdentityCheck>,
    /// `S³` as used by the library, recorded for the sign convention.
    pub spin_z: Matrix4,
}

impl AlgebraReport {
    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.residual).fold(0.0, f64::max)
    }

    pub fn failing(&self, tol: f64) -> impl Iterator<Item = &IdentityCheck> {
        self.checks.iter().filter(move |c| !(c.residual <= tol))
    }

    /// Two-column CSV: `identity,residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("identity,residual\n");
        for c in &self.checks {
            out.push_str(&format!("{},{}\n", c.name, c.residual));
        }
        out
    }
}

/// Runs every basis-level identity against `basis` and `spin`.
pub fn algebra_self_test(basis: &DiracBasis, spin: &MatrixVector) -> AlgebraReport {
    let mut checks = Vec::new();
    let mut push = |name: String, residual: f64| checks.push(IdentityCheck { name, residual });
    let id = Matrix4::identity();

    for k in 0..3 {
        for l in 0..3 {
            push(
                format!("anticomm_alpha{}_alpha{}", k + 1, l + 1),
                anticommutator_residual(&basis.alpha[k], &basis.alpha[l], k == l),
            );
        }
    }
    for k in 0..3 {
        push(
            format!("anticomm_alpha{}_beta", k + 1),
            anticommutator_residual(&basis.alpha[k], &basis.beta, false),
        );
    }
    push("beta_squared".into(), (basis.beta * basis.beta).max_abs_diff(&id));
    push("identity".into(), basis.identity.max_abs_diff(&id));
    for k in 0..3 {
        push(
            format!("hermitian_alpha{}", k + 1),
            basis.alpha[k].max_abs_diff(&basis.alpha[k].adjoint()),
        );
    }
    push("hermitian_beta".into(), basis.beta.max_abs_diff(&basis.beta.adjoint()));
    let quarter = id.scale(Complex64::new(0.25, 0.0));
    for k in 0..3 {
        push(
            format!("hermitian_spin{}", k + 1),
            spin.0[k].max_abs_diff(&spin.0[k].adjoint()),
        );
        // (S^k)^2 = I/4 with S^k Hermitian pins the operator norm at 1/2.
        push(
            format!("spin{}_squared_quarter", k + 1),
            (spin.0[k] * spin.0[k]).max_abs_diff(&quarter),
        );
    }
    // [S^1, S^2] = i S^3 and cyclic.
    for k in 0..3 {
        let (a, b, c) = (k, (k + 1) % 3, (k + 2) % 3);
        push(
            format!("spin_commutator_{}{}", a + 1, b + 1),
            spin.0[a].commutator(&spin.0[b]).max_abs_diff(&spin.0[c].scale(I)),
        );
    }
    let lit = literal_wedge_spin(basis);
    push(
        "spin_equals_minus_literal_wedge".into(),
        (0..3)
            .map(|k| (spin.0[k] + lit.0[k]).max_abs())
            .fold(0.0, f64::max),
    );

    AlgebraReport {
        checks,
        spin_z: spin.0[2],
    }
}
