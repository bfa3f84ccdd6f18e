//! Piecewise-continuous vector fields and classification of surface points.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pushforward, Diffeo, SurfaceChart, Vector, VectorField};

/// Default band for [`classify`].
pub const CLASSIFY_TOL: f64 = 1e-9;

/// Points with `|gap| ≤ ON_SURFACE_TOL·(1 + |x|)` count as lying on Σ.
pub const ON_SURFACE_TOL: f64 = 1e-9;

/// Signed surface coordinate `x_n − u(x̃)`: negative in `G_1`, positive in `G_2`.
pub fn gap(surface: &SurfaceChart, x: &Vector) -> f64 {
    let (tilde, last) = surface.split(x);
    last - surface.height(&tilde)
}

fn ensure_on_surface(surface: &SurfaceChart, x: &Vector) -> Result<()> {
    if x.len() != surface.dim() {
        return Err(Error::DimensionMismatch {
            expected: surface.dim(),
            got: x.len(),
        });
    }
    let g = gap(surface, x);
    if g.is_nan() || g.abs() > ON_SURFACE_TOL * (1.0 + x.norm()) {
        return Err(Error::OffSurface { gap: g });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionKind {
    Crossing,
    AttractingSliding,
    RepellingSliding,
    SingularEqualNormals,
    TangencyBoundary,
}

impl RegionKind {
    /// Members of the sliding region, including its one-sided boundary.
    pub fn is_sliding(self) -> bool {
        matches!(
            self,
            RegionKind::AttractingSliding
                | RegionKind::RepellingSliding
                | RegionKind::TangencyBoundary
        )
    }
}

/// Classify a surface point from its normal components `a = X1N`, `b = X2N`.
///
/// Bands are applied in order: equal normals (`|a − b| ≤ tol`, or both within
/// `tol` of zero), a single vanishing component, same-sign crossing, and
/// finally the two strict sliding cases.
pub fn classify_components(a: f64, b: f64, tol: f64) -> RegionKind {
    let a_small = a.abs() <= tol;
    let b_small = b.abs() <= tol;
    if (a - b).abs() <= tol || (a_small && b_small) {
        RegionKind::SingularEqualNormals
    } else if a_small || b_small {
        RegionKind::TangencyBoundary
    } else if a * b > tol * tol {
        RegionKind::Crossing
    } else if a > 0.0 {
        RegionKind::AttractingSliding
    } else {
        RegionKind::RepellingSliding
    }
}

/// A pair `(X1, X2)` over a surface: `X1` lives on the closure of
/// `G_1 = {x_n < u}`, `X2` on the closure of `G_2 = {x_n > u}`.
///
/// Both fields are stored as total closures and evaluated by continuous
/// extension; evaluation never looks at the side of the surface.
#[derive(Clone)]
pub struct PiecewiseField {
    surface: SurfaceChart,
    lower: VectorField,
    upper: VectorField,
}

impl fmt::Debug for PiecewiseField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PiecewiseField")
            .field("surface", &self.surface)
            .finish_non_exhaustive()
    }
}

impl PiecewiseField {
    pub fn new(surface: SurfaceChart, lower: VectorField, upper: VectorField) -> Self {
        Self {
            surface,
            lower,
            upper,
        }
    }

    pub fn from_fns<F1, F2>(surface: SurfaceChart, lower: F1, upper: F2) -> Self
    where
        F1: Fn(&Vector) -> Vector + Send + Sync + 'static,
        F2: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        Self::new(surface, Arc::new(lower), Arc::new(upper))
    }

    /// Constant fields `X1 ≡ lower`, `X2 ≡ upper`.
    pub fn constant(surface: SurfaceChart, lower: Vector, upper: Vector) -> Self {
        Self::from_fns(surface, move |_| lower.clone(), move |_| upper.clone())
    }

    pub fn surface(&self) -> &SurfaceChart {
        &self.surface
    }

    pub fn lower_field(&self) -> &VectorField {
        &self.lower
    }

    pub fn upper_field(&self) -> &VectorField {
        &self.upper
    }

    /// `X1(x)`.
    pub fn lower(&self, x: &Vector) -> Vector {
        (self.lower)(x)
    }

    /// `X2(x)`.
    pub fn upper(&self, x: &Vector) -> Vector {
        (self.upper)(x)
    }

    /// Both fields multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let (lower, upper) = (self.lower.clone(), self.upper.clone());
        Self::from_fns(
            self.surface.clone(),
            move |x| lower(x) * c,
            move |x| upper(x) * c,
        )
    }

    /// Push both fields forward along `d`, which must map this surface onto
    /// `target`.
    pub fn pushforward(&self, d: &Diffeo, target: SurfaceChart) -> Self {
        Self::new(
            target,
            pushforward(d, &self.lower),
            pushforward(d, &self.upper),
        )
    }

    /// `(X1N, X2N)` at a point of Σ.
    pub fn normal_components(&self, x: &Vector) -> Result<(f64, f64)> {
        ensure_on_surface(&self.surface, x)?;
        let (tilde, _) = self.surface.split(x);
        let n = self.surface.normal_at(&tilde)?;
        let (x1, x2) = (self.lower(x), self.upper(x));
        if x1.iter().chain(x2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field value"));
        }
        Ok((x1.dot(&n), x2.dot(&n)))
    }

    pub fn classify(&self, x: &Vector, tol: f64) -> Result<RegionKind> {
        let (a, b) = self.normal_components(x)?;
        Ok(classify_components(a, b, tol))
    }
}
