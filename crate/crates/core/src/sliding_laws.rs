//! Characteristic maps and the generating maps they induce.
//!
//! A characteristic map `α(p, q, r, s)` acts on the pulled-back field values
//! `u1 = (p, q)` and `u2 = (r, s)` in the flat chart, where `q` and `s` are the
//! components normal to `P`. Its domain is
//! `D = {q·s ≤ 0, q ≠ s}`. The generating map lifts it back to the surface:
//!
//! ```text
//! S(X1, X2)(x) = DΨ_{Ψ⁻¹(x)} · (α(DΨ⁻¹ X1(x), DΨ⁻¹ X2(x)), 0)
//! ```

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{classify_components, PiecewiseField, CLASSIFY_TOL};
use crate::geometry::{TangentVector, Vector};

type AlphaFn = Arc<dyn Fn(&Vector, f64, &Vector, f64) -> Vector + Send + Sync>;

/// Relative width of the excluded band around `q = s`.
const SINGULAR_REL_TOL: f64 = 1e-12;

/// Whether `(q, s)` lies in the domain `D`.
///
/// On `D` the two components never share a strict sign, so `|q − s| = |q| + |s|`
/// and the only singular point left after the sign test is `q = s = 0`.
pub fn in_domain(q: f64, s: f64) -> bool {
    let same_sign = (q > 0.0 && s > 0.0) || (q < 0.0 && s < 0.0);
    q.is_finite()
        && s.is_finite()
        && !same_sign
        && q != s
        && (q - s).abs() >= SINGULAR_REL_TOL * q.abs().max(s.abs())
}

fn check_domain(q: f64, s: f64) -> Result<()> {
    if in_domain(q, s) {
        Ok(())
    } else {
        Err(Error::OutsideDomain { q, s })
    }
}

/// `α(p,q,r,s) = s/(s−q)·p + q/(q−s)·r`, evaluated as `r + λ(p − r)` so that
/// `p = r` returns `p` exactly.
pub fn filippov_alpha(p: &Vector, q: f64, r: &Vector, s: f64) -> Result<Vector> {
    check_domain(q, s)?;
    let lambda = s / (s - q);
    Ok(r + (p - r) * lambda)
}

/// Arithmetic mean `(p + r)/2`, a deliberately non-Filippov law.
pub fn mean_alpha(p: &Vector, q: f64, r: &Vector, s: f64) -> Result<Vector> {
    check_domain(q, s)?;
    Ok((p + r) * 0.5)
}

/// `c · filippov_alpha`.
pub fn scaled_filippov_alpha(c: f64) -> impl Fn(&Vector, f64, &Vector, f64) -> Result<Vector> {
    move |p, q, r, s| filippov_alpha(p, q, r, s).map(|v| v * c)
}

/// A named map `α: D → R^{n-1}`.
#[derive(Clone)]
pub struct CharacteristicMap {
    name: String,
    alpha: AlphaFn,
}

impl fmt::Debug for CharacteristicMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CharacteristicMap")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

impl CharacteristicMap {
    /// Wrap a raw formula; the domain check is applied by [`Self::evaluate`].
    pub fn new<F>(name: impl Into<String>, alpha: F) -> Self
    where
        F: Fn(&Vector, f64, &Vector, f64) -> Vector + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            alpha: Arc::new(alpha),
        }
    }

    pub fn filippov() -> Self {
        Self::new("filippov", |p, q, r, s| r + (p - r) * (s / (s - q)))
    }

    pub fn mean() -> Self {
        Self::new("mean", |p, _, r, _| (p + r) * 0.5)
    }

    pub fn scaled_filippov(c: f64) -> Self {
        Self::new(format!("scaled_filippov({c})"), move |p, q, r, s| {
            (r + (p - r) * (s / (s - q))) * c
        })
    }

    /// Look a law up by name: `filippov`, `mean`, `scaled_filippov` (c = 2)
    /// or `scaled_filippov(<c>)`.
    pub fn by_name(name: &str) -> Result<Self> {
        let trimmed = name.trim();
        match trimmed {
            "filippov" => return Ok(Self::filippov()),
            "mean" => return Ok(Self::mean()),
            "scaled_filippov" => return Ok(Self::scaled_filippov(2.0)),
            _ => {}
        }
        let c = trimmed
            .strip_prefix("scaled_filippov(")
            .and_then(|rest| rest.strip_suffix(')'))
            .and_then(|c| c.trim().parse::<f64>().ok())
            .filter(|c| c.is_finite())
            .ok_or_else(|| Error::UnknownLaw(name.to_string()))?;
        Ok(Self::scaled_filippov(c))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `α(p, q, r, s)`; off-domain input is an error.
    pub fn evaluate(&self, p: &Vector, q: f64, r: &Vector, s: f64) -> Result<Vector> {
        if p.len() != r.len() {
            return Err(Error::DimensionMismatch {
                expected: p.len(),
                got: r.len(),
            });
        }
        check_domain(q, s)?;
        let out = (self.alpha)(p, q, r, s);
        if out.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: p.len(),
                got: out.len(),
            });
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("characteristic map"));
        }
        Ok(out)
    }

    /// `α(u1, u2)` with `u1 = (p, q)`, `u2 = (r, s)` split off their last entry.
    pub fn evaluate_pair(&self, u1: &Vector, u2: &Vector) -> Result<Vector> {
        let n = u1.len();
        if n == 0 || u2.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n.max(1),
                got: u2.len(),
            });
        }
        let p = u1.rows(0, n - 1).into_owned();
        let r = u2.rows(0, n - 1).into_owned();
        self.evaluate(&p, u1[n - 1], &r, u2[n - 1])
    }
}

/// The generating map `S_Σ` built from a characteristic map.
#[derive(Debug, Clone)]
pub struct GeneratingMap {
    law: CharacteristicMap,
}

impl GeneratingMap {
    pub fn new(law: CharacteristicMap) -> Self {
        Self { law }
    }

    pub fn filippov() -> Self {
        Self::new(CharacteristicMap::filippov())
    }

    pub fn law(&self) -> &CharacteristicMap {
        &self.law
    }

    /// Pull `X1(x)`, `X2(x)` back to the flat chart: `u_i = (DΨ)⁻¹ X_i(x)`.
    pub fn pull_back(&self, pf: &PiecewiseField, x: &Vector) -> Result<(Vector, Vector)> {
        let psi = pf.surface().psi_diffeo();
        let jac = psi.jacobian_at(&psi.apply_inverse(x));
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("chart jacobian"));
        }
        let lu = jac.lu();
        let u1 = lu.solve(&pf.lower(x)).ok_or(Error::SingularJacobian)?;
        let u2 = lu.solve(&pf.upper(x)).ok_or(Error::SingularJacobian)?;
        Ok((u1, u2))
    }

    /// The sliding vector at `x ∈ Σ`.
    pub fn generate(&self, pf: &PiecewiseField, x: &Vector) -> Result<TangentVector> {
        // Only used for the on-surface check.
        pf.normal_components(x)?;
        let (u1, u2) = self.pull_back(pf, x)?;
        let alpha = self.law.evaluate_pair(&u1, &u2)?;
        let surface = pf.surface();
        let psi = surface.psi_diffeo();
        let base = psi.apply_inverse(x);
        let chart_vec = surface.join(&alpha, 0.0);
        Ok(TangentVector {
            base: x.clone(),
            vec: psi.jacobian_at(&base) * chart_vec,
        })
    }
}

/// The Filippov sliding vector computed directly from the normal components:
/// `F = X2N/(X2N − X1N)·X1 + X1N/(X1N − X2N)·X2`.
pub fn filippov_direct(pf: &PiecewiseField, x: &Vector) -> Result<TangentVector> {
    let (a, b) = pf.normal_components(x)?;
    let kind = classify_components(a, b, CLASSIFY_TOL);
    if !kind.is_sliding() {
        return Err(Error::NotSliding(kind));
    }
    let lambda = b / (b - a);
    let (x1, x2) = (pf.lower(x), pf.upper(x));
    Ok(TangentVector {
        base: x.clone(),
        vec: &x2 + (x1 - &x2) * lambda,
    })
}

/// Convex weight of `X1` in the Filippov combination.
pub fn filippov_weight(a: f64, b: f64) -> f64 {
    b / (b - a)
}
