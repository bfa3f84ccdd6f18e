//! Discontinuity surfaces as graphs, their normal field, the flattening chart
//! `Ψ(x̃, x_n) = (x̃, x_n + u(x̃))` and diffeomorphism pushforwards.
//!
//! Points of `R^n` are split as `x = (x̃, x_n)` with `x̃ ∈ R^{n-1}`. The plane
//! `P = {x_n = 0}` is mapped onto the surface `Σ = {x_n = u(x̃)}` by `Ψ`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fields::gap;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// A vector field on `R^n`. Closures must be re-entrant.
pub type VectorField = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

type HeightFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type MapFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type JacobianFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;

/// Tolerance for "x lies in P / on Σ" during sampling-based membership checks.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Relative step of the central finite-difference gradient fallback.
const FD_STEP: f64 = 1e-6;

/// Central finite-difference gradient of `f` at `x`, step `1e-6·max(1, |x_i|)`.
pub fn central_gradient(f: &(dyn Fn(&Vector) -> f64 + Send + Sync), x: &Vector) -> Vector {
    let mut g = Vector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let h = FD_STEP * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central finite-difference jacobian of a map `R^n → R^n`.
pub fn central_jacobian(f: &dyn Fn(&Vector) -> Vector, x: &Vector) -> Matrix {
    let n = x.len();
    let mut jac = Matrix::zeros(n, n);
    let mut probe = x.clone();
    for j in 0..n {
        let h = FD_STEP * x[j].abs().max(1.0);
        probe[j] = x[j] + h;
        let fp = f(&probe);
        probe[j] = x[j] - h;
        let fm = f(&probe);
        probe[j] = x[j];
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// The surface `x_n = u(x̃)` in `R^n`.
#[derive(Clone)]
pub struct SurfaceChart {
    dim: usize,
    height: HeightFn,
    gradient: GradientFn,
}

impl fmt::Debug for SurfaceChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SurfaceChart")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl SurfaceChart {
    /// Surface with a caller-supplied analytic gradient.
    ///
    /// # Panics
    ///
    /// Panics if `dim == 0`.
    pub fn new<U, G>(dim: usize, height: U, gradient: G) -> Self
    where
        U: Fn(&Vector) -> f64 + Send + Sync + 'static,
        G: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        assert!(dim >= 1, "surface dimension must be at least 1");
        Self {
            dim,
            height: Arc::new(height),
            gradient: Arc::new(gradient),
        }
    }

    /// Surface whose gradient is computed by central finite differences.
    pub fn with_numeric_gradient<U>(dim: usize, height: U) -> Self
    where
        U: Fn(&Vector) -> f64 + Send + Sync + 'static,
    {
        let height: HeightFn = Arc::new(height);
        let h = height.clone();
        Self::from_parts(
            dim,
            height,
            Arc::new(move |x: &Vector| central_gradient(&*h, x)),
        )
    }

    fn from_parts(dim: usize, height: HeightFn, gradient: GradientFn) -> Self {
        assert!(dim >= 1, "surface dimension must be at least 1");
        Self {
            dim,
            height,
            gradient,
        }
    }

    /// The hyperplane `P = {x_n = 0}`.
    pub fn flat(dim: usize) -> Self {
        Self::new(dim, |_| 0.0, |x: &Vector| Vector::zeros(x.len()))
    }

    /// The plane `x_n = slopes · x̃`; the dimension is `slopes.len() + 1`.
    pub fn tilt(slopes: Vec<f64>) -> Self {
        let dim = slopes.len() + 1;
        let a = Vector::from_vec(slopes);
        let b = a.clone();
        Self::new(dim, move |x: &Vector| a.dot(x), move |_| b.clone())
    }

    /// The paraboloid `x_n = c·|x̃|²`.
    pub fn paraboloid(dim: usize, curvature: f64) -> Self {
        Self::new(
            dim,
            move |x: &Vector| curvature * x.norm_squared(),
            move |x: &Vector| x * (2.0 * curvature),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Split `x ∈ R^n` into `(x̃, x_n)`.
    pub fn split(&self, x: &Vector) -> (Vector, f64) {
        let n = x.len();
        (x.rows(0, n - 1).into_owned(), x[n - 1])
    }

    /// Join `(x̃, x_n)` into a point of `R^n`.
    pub fn join(&self, tilde: &Vector, last: f64) -> Vector {
        let mut x = Vector::zeros(tilde.len() + 1);
        x.rows_mut(0, tilde.len()).copy_from(tilde);
        x[tilde.len()] = last;
        x
    }

    /// `u(x̃)`.
    pub fn height(&self, tilde: &Vector) -> f64 {
        (self.height)(tilde)
    }

    /// `∇u(x̃)`, checked for length and finiteness.
    pub fn gradient(&self, tilde: &Vector) -> Result<Vector> {
        let g = (self.gradient)(tilde);
        if g.len() != self.dim - 1 {
            return Err(Error::DimensionMismatch {
                expected: self.dim - 1,
                got: g.len(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("surface gradient"));
        }
        Ok(g)
    }

    /// Unit normal of Σ above `x̃`, pointing into `G_2` (`x_n > u`).
    pub fn normal_at(&self, tilde: &Vector) -> Result<Vector> {
        let g = self.gradient(tilde)?;
        let scale = -1.0 / (1.0 + g.norm_squared()).sqrt();
        let mut n = self.join(&g, -1.0);
        n *= scale;
        Ok(n)
    }

    /// The point of Σ above `x̃`, i.e. `Ψ(x̃, 0)`.
    pub fn lift(&self, tilde: &Vector) -> Vector {
        self.join(tilde, self.height(tilde))
    }

    /// `Ψ(x) = (x̃, x_n + u(x̃))`.
    pub fn psi(&self, x: &Vector) -> Vector {
        let (tilde, last) = self.split(x);
        let h = self.height(&tilde);
        self.join(&tilde, last + h)
    }

    /// `Ψ⁻¹(y) = (ỹ, y_n − u(ỹ))`.
    pub fn psi_inverse(&self, y: &Vector) -> Vector {
        let (tilde, last) = self.split(y);
        let h = self.height(&tilde);
        self.join(&tilde, last - h)
    }

    /// Jacobian of `Ψ` at `x`: the identity with last row `(∇u(x̃), 1)`.
    pub fn psi_jacobian(&self, x: &Vector) -> Result<Matrix> {
        let n = self.dim;
        let (tilde, _) = self.split(x);
        let g = self.gradient(&tilde)?;
        let mut j = Matrix::identity(n, n);
        for i in 0..n - 1 {
            j[(n - 1, i)] = g[i];
        }
        Ok(j)
    }

    /// `Ψ` packaged as a [`Diffeo`].
    pub fn psi_diffeo(&self) -> Diffeo {
        let fwd = self.clone();
        let inv = self.clone();
        let jac = self.clone();
        Diffeo::new(
            self.dim,
            move |x| fwd.psi(x),
            move |y| inv.psi_inverse(y),
            move |x| {
                // Gradient failures surface as NaN entries, caught by callers'
                // finiteness checks.
                jac.psi_jacobian(x)
                    .unwrap_or_else(|_| Matrix::from_element(x.len(), x.len(), f64::NAN))
            },
        )
    }

    /// Largest relative mismatch between the supplied gradient and a central
    /// finite difference of `u` over `points`.
    pub fn gradient_consistency(&self, points: &[Vector]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for p in points {
            let analytic = self.gradient(p)?;
            let numeric = central_gradient(&*self.height, p);
            let err = (&analytic - &numeric).norm() / analytic.norm().max(numeric.norm()).max(1.0);
            worst = worst.max(err);
        }
        Ok(worst)
    }
}

/// A diffeomorphism of `R^n` with closed-form inverse and forward jacobian.
#[derive(Clone)]
pub struct Diffeo {
    dim: usize,
    forward: MapFn,
    inverse: MapFn,
    jacobian: JacobianFn,
}

impl fmt::Debug for Diffeo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Diffeo")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl Diffeo {
    pub fn new<F, I, J>(dim: usize, forward: F, inverse: I, jacobian: J) -> Self
    where
        F: Fn(&Vector) -> Vector + Send + Sync + 'static,
        I: Fn(&Vector) -> Vector + Send + Sync + 'static,
        J: Fn(&Vector) -> Matrix + Send + Sync + 'static,
    {
        Self {
            dim,
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
            jacobian: Arc::new(jacobian),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(
            dim,
            |x| x.clone(),
            |y| y.clone(),
            move |_| Matrix::identity(dim, dim),
        )
    }

    /// `x ↦ x + offset`.
    pub fn translation(offset: Vector) -> Self {
        let dim = offset.len();
        let back = offset.clone();
        Self::new(
            dim,
            move |x| x + &offset,
            move |y| y - &back,
            move |_| Matrix::identity(dim, dim),
        )
    }

    /// `F_A(x) = A x`.
    pub fn linear(a: Matrix) -> Result<Self> {
        let dim = a.nrows();
        if a.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: a.ncols(),
            });
        }
        let a_inv = a.clone().try_inverse().ok_or(Error::SingularJacobian)?;
        let a_fwd = a.clone();
        Ok(Self::new(
            dim,
            move |x| &a_fwd * x,
            move |y| &a_inv * y,
            move |_| a.clone(),
        ))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        (self.forward)(x)
    }

    pub fn apply_inverse(&self, y: &Vector) -> Vector {
        (self.inverse)(y)
    }

    /// Jacobian of the forward map at `x`.
    pub fn jacobian_at(&self, x: &Vector) -> Matrix {
        (self.jacobian)(x)
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Diffeo) -> Diffeo {
        let (outer_f, inner_f) = (self.clone(), inner.clone());
        let (outer_i, inner_i) = (self.clone(), inner.clone());
        let (outer_j, inner_j) = (self.clone(), inner.clone());
        Diffeo::new(
            self.dim,
            move |x| outer_f.apply(&inner_f.apply(x)),
            move |y| inner_i.apply_inverse(&outer_i.apply_inverse(y)),
            move |x| outer_j.jacobian_at(&inner_j.apply(x)) * inner_j.jacobian_at(x),
        )
    }

    /// The inverse map as a diffeomorphism in its own right.
    pub fn inverted(&self) -> Diffeo {
        let (f, i, j) = (self.clone(), self.clone(), self.clone());
        Diffeo::new(
            self.dim,
            move |y| i.apply_inverse(y),
            move |x| f.apply(x),
            move |y| {
                let n = y.len();
                j.jacobian_at(&j.apply_inverse(y))
                    .try_inverse()
                    .unwrap_or_else(|| Matrix::from_element(n, n, f64::NAN))
            },
        )
    }

    /// Largest `|inverse(forward(x)) − x|` over `points`.
    pub fn roundtrip_error(&self, points: &[Vector]) -> f64 {
        points
            .iter()
            .map(|x| (self.apply_inverse(&self.apply(x)) - x).norm())
            .fold(0.0, f64::max)
    }

    /// Smallest `|det J(x)|` over `points`.
    pub fn min_abs_determinant(&self, points: &[Vector]) -> f64 {
        points
            .iter()
            .map(|x| self.jacobian_at(x).determinant().abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// A vector based at a point; when tagged as tangent to Σ, `vec · n(base) ≈ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: Vector,
    pub vec: Vector,
}

impl TangentVector {
    /// `|vec · n| / |vec|` (zero for the zero vector).
    pub fn normal_leak(&self, surface: &SurfaceChart) -> Result<f64> {
        let (tilde, _) = surface.split(&self.base);
        let n = surface.normal_at(&tilde)?;
        let norm = self.vec.norm();
        Ok(if norm == 0.0 {
            0.0
        } else {
            self.vec.dot(&n).abs() / norm
        })
    }
}

/// `(DΦ X)(y) = DΦ_{Φ⁻¹(y)} X(Φ⁻¹(y))`.
pub fn pushforward(d: &Diffeo, field: &VectorField) -> VectorField {
    let d = d.clone();
    let field = field.clone();
    Arc::new(move |y: &Vector| {
        let x = d.apply_inverse(y);
        d.jacobian_at(&x) * field(&x)
    })
}

/// Deterministic sample points of `P`, used by membership checks.
fn plane_samples(dim: usize, count: usize) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f9a);
    (0..count)
        .map(|_| {
            let mut x = Vector::zeros(dim);
            for i in 0..dim - 1 {
                x[i] = rng.random_range(-3.0..3.0);
            }
            x
        })
        .collect()
}

/// Write a map `d` with `d(P) ⊆ Σ` as `Ψ ∘ Φ̄` and return `Φ̄ = Ψ⁻¹ ∘ d`,
/// which maps `P` into `P`. Membership is checked at sampled points.
pub fn factorize_through_plane(surface: &SurfaceChart, d: &Diffeo) -> Result<Diffeo> {
    let n = surface.dim();
    if d.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: d.dim(),
        });
    }
    let samples = plane_samples(n, 64);
    let mut worst: f64 = 0.0;
    for x in &samples {
        let y = d.apply(x);
        let g = gap(surface, &y);
        if !g.is_finite() {
            return Err(Error::NonFinite("diffeomorphism image"));
        }
        worst = worst.max(g.abs() / y.norm().max(1.0));
    }
    if worst > MEMBERSHIP_TOL {
        return Err(Error::NotIntoSurface { violation: worst });
    }

    let bar = surface.psi_diffeo().inverted().compose(d);
    for x in &samples {
        let z = bar.apply(x);
        if z[n - 1].abs() > MEMBERSHIP_TOL * z.norm().max(1.0) {
            return Err(Error::NotIntoSurface {
                violation: z[n - 1].abs(),
            });
        }
    }
    Ok(bar)
}
