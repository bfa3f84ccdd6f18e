//! Randomized audits of sliding laws.
//!
//! Each check samples independent trials, measures a violation for every
//! trial and aggregates the results into an [`AuditReport`]. Trial `i` draws
//! from its own ChaCha stream (`seed`, stream `i`), so reports are identical
//! regardless of how trials are scheduled across threads.
//!
//! The default violation metric is relative:
//! `|lhs − rhs| / max(1, |lhs|, |rhs|)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{PiecewiseField, RegionKind, CLASSIFY_TOL};
use crate::geometry::{Diffeo, Matrix, SurfaceChart, Vector};
use crate::sliding_laws::{in_domain, CharacteristicMap, GeneratingMap};

/// Witness lists are capped at this many entries.
pub const MAX_WITNESSES: usize = 10;

pub const EQUIVARIANCE_TOL: f64 = 1e-8;
pub const HOMOGENEITY_TOL: f64 = 1e-8;
pub const DEPENDENCE_TOL: f64 = 1e-8;
pub const LIMIT_TOL: f64 = 1e-8;
pub const CONSISTENCY_TOL: f64 = 1e-7;
pub const POINTWISE_TOL: f64 = 1e-9;
pub const REGION_TOL: f64 = 1e-7;

/// Depth of the shrinking sequence `q_m = ±2^{-m}` in the continuous-limit check.
pub const LIMIT_DEPTH: i32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Check {
    MatrixEquivariance,
    HomogeneityLinearity,
    LinearDependenceVanishing,
    ContinuousLimit,
    ParametrizationConsistency,
    Pointwise,
    SlidingRegionInvariance,
}

impl Check {
    /// The checks run by `all`: every property of a characteristic map.
    pub const LAW_CHECKS: [Check; 6] = [
        Check::MatrixEquivariance,
        Check::HomogeneityLinearity,
        Check::LinearDependenceVanishing,
        Check::ContinuousLimit,
        Check::ParametrizationConsistency,
        Check::Pointwise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::MatrixEquivariance => "matrix-equivariance",
            Check::HomogeneityLinearity => "homogeneity-linearity",
            Check::LinearDependenceVanishing => "linear-dependence",
            Check::ContinuousLimit => "continuous-limit",
            Check::ParametrizationConsistency => "parametrization-consistency",
            Check::Pointwise => "pointwise",
            Check::SlidingRegionInvariance => "sliding-region-invariance",
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            Check::MatrixEquivariance => EQUIVARIANCE_TOL,
            Check::HomogeneityLinearity => HOMOGENEITY_TOL,
            Check::LinearDependenceVanishing => DEPENDENCE_TOL,
            Check::ContinuousLimit => LIMIT_TOL,
            Check::ParametrizationConsistency => CONSISTENCY_TOL,
            Check::Pointwise => POINTWISE_TOL,
            Check::SlidingRegionInvariance => REGION_TOL,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Check::SlidingRegionInvariance]
            .into_iter()
            .chain(Check::LAW_CHECKS)
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown check {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub seed: u64,
    pub trials: usize,
    pub dim: usize,
    /// Sampled components have magnitudes in `[lo, hi]` and a random sign.
    pub magnitude_range: (f64, f64),
}

impl SamplerConfig {
    pub fn new(seed: u64, trials: usize, dim: usize) -> Result<Self> {
        let cfg = Self {
            seed,
            trials,
            dim,
            magnitude_range: (0.1, 10.0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.magnitude_range;
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dim must be at least 1".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "bad magnitude range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    fn trial_rng(&self, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub trial: usize,
    pub inputs: BTreeMap<String, Vec<f64>>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub law: String,
    pub check: String,
    pub trials: usize,
    pub failures: usize,
    pub worst_violation: f64,
    pub tolerance: f64,
    pub witnesses: Vec<Witness>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Result of a single trial.
#[derive(Debug, Clone)]
struct Outcome {
    violation: f64,
    inputs: BTreeMap<String, Vec<f64>>,
    lhs: Vec<f64>,
    rhs: Vec<f64>,
}

impl Outcome {
    fn compare(lhs: &Vector, rhs: &Vector) -> Self {
        Self {
            violation: relative_violation(lhs, rhs),
            inputs: BTreeMap::new(),
            lhs: lhs.as_slice().to_vec(),
            rhs: rhs.as_slice().to_vec(),
        }
    }

    /// A trial whose evaluation failed outright.
    fn failed(err: &Error) -> Self {
        let mut inputs = BTreeMap::new();
        inputs.insert(format!("error: {err}"), Vec::new());
        Self {
            violation: f64::INFINITY,
            inputs,
            lhs: Vec::new(),
            rhs: Vec::new(),
        }
    }

    fn input(mut self, name: &str, v: &[f64]) -> Self {
        self.inputs.insert(name.to_string(), v.to_vec());
        self
    }
}

/// `|lhs − rhs| / max(1, |lhs|, |rhs|)`.
pub fn relative_violation(lhs: &Vector, rhs: &Vector) -> f64 {
    let diff = (lhs - rhs).norm();
    diff / lhs.norm().max(rhs.norm()).max(1.0)
}

fn aggregate(law: &str, check: Check, cfg: &SamplerConfig, outcomes: Vec<Outcome>) -> AuditReport {
    let tol = check.tolerance();
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let mut witnesses = Vec::new();
    for (trial, o) in outcomes.into_iter().enumerate() {
        let v = if o.violation.is_nan() {
            f64::INFINITY
        } else {
            o.violation
        };
        worst = worst.max(v);
        if v > tol {
            failures += 1;
            if witnesses.len() < MAX_WITNESSES {
                witnesses.push(Witness {
                    trial,
                    inputs: o.inputs,
                    lhs: o.lhs,
                    rhs: o.rhs,
                });
            }
        }
    }
    AuditReport {
        law: law.to_string(),
        check: check.name().to_string(),
        trials: cfg.trials,
        failures,
        worst_violation: worst,
        tolerance: tol,
        witnesses,
    }
}

fn run_trials<F>(law: &str, check: Check, cfg: &SamplerConfig, trial: F) -> Result<AuditReport>
where
    F: Fn(usize, &mut ChaCha8Rng) -> Outcome + Sync,
{
    cfg.validate()?;
    let outcomes: Vec<Outcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = cfg.trial_rng(i);
            trial(i, &mut rng)
        })
        .collect();
    Ok(aggregate(law, check, cfg, outcomes))
}

// ---------------------------------------------------------------------------
// Sampling

/// Random draws within a [`SamplerConfig`]'s magnitude range.
pub struct Sampler<'a, R: Rng> {
    rng: &'a mut R,
    lo: f64,
    hi: f64,
}

impl<'a, R: Rng> Sampler<'a, R> {
    pub fn new(rng: &'a mut R, cfg: &SamplerConfig) -> Self {
        let (lo, hi) = cfg.magnitude_range;
        Self { rng, lo, hi }
    }

    pub fn magnitude(&mut self) -> f64 {
        self.rng.random_range(self.lo..self.hi)
    }

    pub fn sign(&mut self) -> f64 {
        if self.rng.random_bool(0.5) {
            1.0
        } else {
            -1.0
        }
    }

    pub fn signed(&mut self) -> f64 {
        self.sign() * self.magnitude()
    }

    pub fn vector(&mut self, len: usize) -> Vector {
        Vector::from_fn(len, |_, _| self.signed())
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.rng.random_bool(p)
    }

    /// A pair `(q, s)` in `D`; one of them is zero in 10 % of draws.
    pub fn domain_pair(&mut self) -> (f64, f64) {
        let q = self.signed();
        let s = -q.signum() * self.magnitude();
        match self.rng.random_range(0..20) {
            0 => (0.0, s),
            1 => (q, 0.0),
            _ => (q, s),
        }
    }

    /// A pair `(q, s)` strictly inside the sliding region (no zeros).
    pub fn strict_domain_pair(&mut self) -> (f64, f64) {
        let q = self.signed();
        (q, -q.signum() * self.magnitude())
    }

    /// A regular matrix `A` with `F_A(P) ⊂ P`: last row `(0, …, 0, d)`.
    pub fn plane_preserving_matrix(&mut self, n: usize) -> Matrix {
        loop {
            let mut a = Matrix::zeros(n, n);
            for i in 0..n - 1 {
                for j in 0..n - 1 {
                    a[(i, j)] = if i == j { 1.0 } else { 0.0 } + self.uniform(-0.8, 0.8);
                }
                a[(i, n - 1)] = self.uniform(-2.0, 2.0);
            }
            a[(n - 1, n - 1)] = self.sign() * self.uniform(0.5, 2.0);
            if a.determinant().abs() > 0.1 {
                return a;
            }
        }
    }

    /// A random surface from the flat / tilt / paraboloid / wave catalog.
    pub fn surface(&mut self, n: usize) -> SurfaceChart {
        match self.rng.random_range(0..4) {
            0 => SurfaceChart::flat(n),
            1 => SurfaceChart::tilt((0..n - 1).map(|_| self.uniform(-2.0, 2.0)).collect()),
            2 => SurfaceChart::paraboloid(n, self.uniform(-1.0, 1.0)),
            _ => {
                let amp = self.uniform(-1.0, 1.0);
                let k = Vector::from_fn(n - 1, |_, _| self.rng.random_range(-1.5..1.5));
                let k2 = k.clone();
                SurfaceChart::new(
                    n,
                    move |x: &Vector| amp * k.dot(x).sin(),
                    move |x: &Vector| &k2 * (amp * k2.dot(x).cos()),
                )
            }
        }
    }

    /// A smooth map preserving `P`, drawn from the translation / linear /
    /// shear catalog or a composition of all three.
    pub fn plane_map(&mut self, n: usize) -> PlaneMap {
        let translation = |s: &mut Self| PlaneMap::Translation(s.vector(n - 1) * 0.3);
        let linear = |s: &mut Self| PlaneMap::Linear(s.plane_preserving_matrix(n));
        let shear = |s: &mut Self| PlaneMap::Shear {
            coupling: Vector::from_fn(n - 1, |_, _| s.rng.random_range(-1.5..1.5)),
            wobble: Vector::from_fn(n - 1, |_, _| s.rng.random_range(-1.0..1.0)),
        };
        match self.rng.random_range(0..4) {
            0 => translation(self),
            1 => linear(self),
            2 => shear(self),
            _ => PlaneMap::Composite(vec![translation(self), shear(self), linear(self)]),
        }
    }
}

/// Diffeomorphisms of `R^n` that map `P` into `P`, with closed-form inverses.
#[derive(Debug, Clone, PartialEq)]
pub enum PlaneMap {
    /// `x̃ ↦ x̃ + offset`.
    Translation(Vector),
    /// `x ↦ A x` with last row `(0, …, 0, d)`.
    Linear(Matrix),
    /// `y_i = x_i + wobble_i·sin(x_{i−1}) + coupling_i·sin(x_n)` for `i < n`
    /// (no wobble term for the first coordinate), `y_n = x_n`.
    Shear { coupling: Vector, wobble: Vector },
    /// Applied right to left, like function composition.
    Composite(Vec<PlaneMap>),
}

impl PlaneMap {
    pub fn to_diffeo(&self, n: usize) -> Result<Diffeo> {
        match self {
            PlaneMap::Translation(offset) => {
                let mut full = Vector::zeros(n);
                full.rows_mut(0, n - 1).copy_from(offset);
                Ok(Diffeo::translation(full))
            }
            PlaneMap::Linear(a) => Diffeo::linear(a.clone()),
            PlaneMap::Shear { coupling, wobble } => {
                Ok(shear_diffeo(n, coupling.clone(), wobble.clone()))
            }
            PlaneMap::Composite(parts) => {
                let mut acc = Diffeo::identity(n);
                for p in parts.iter().rev() {
                    acc = p.to_diffeo(n)?.compose(&acc);
                }
                Ok(acc)
            }
        }
    }
}

fn shear_diffeo(n: usize, coupling: Vector, wobble: Vector) -> Diffeo {
    let (c1, w1) = (coupling.clone(), wobble.clone());
    let (c2, w2) = (coupling.clone(), wobble.clone());
    Diffeo::new(
        n,
        move |x: &Vector| {
            let mut y = x.clone();
            let lift = x[n - 1].sin();
            for i in 0..n - 1 {
                y[i] += c1[i] * lift;
                if i > 0 {
                    y[i] += w1[i] * x[i - 1].sin();
                }
            }
            y
        },
        move |y: &Vector| {
            let mut x = y.clone();
            let lift = y[n - 1].sin();
            for i in 0..n - 1 {
                x[i] -= c2[i] * lift;
                if i > 0 {
                    x[i] -= w2[i] * x[i - 1].sin();
                }
            }
            x
        },
        move |x: &Vector| {
            let mut j = Matrix::identity(n, n);
            let dlift = x[n - 1].cos();
            for i in 0..n - 1 {
                j[(i, n - 1)] = coupling[i] * dlift;
                if i > 0 {
                    j[(i, i - 1)] = wobble[i] * x[i - 1].cos();
                }
            }
            j
        },
    )
}

/// `Ψ_target ∘ inner ∘ Ψ_source⁻¹`, which maps `source` onto `target` when
/// `inner` preserves `P`.
pub fn conjugate(source: &SurfaceChart, target: &SurfaceChart, inner: &Diffeo) -> Diffeo {
    target
        .psi_diffeo()
        .compose(inner)
        .compose(&source.psi_diffeo().inverted())
}

/// Where a check takes its piecewise fields from.
#[derive(Debug, Clone)]
pub enum FieldSource {
    /// A caller-supplied field; sliding points are found by rejection sampling.
    Fixed(PiecewiseField),
    /// Random surfaces with affine fields built around each sampled point.
    Random,
}

/// Affine fields `X_i(y) = DΨ_x u_i + M_i (y − x)` around `x = Ψ(x̃, 0)`.
fn affine_field_at<R: Rng>(
    s: &mut Sampler<'_, R>,
    surface: SurfaceChart,
    tilde: &Vector,
    u1: &Vector,
    u2: &Vector,
) -> Result<(PiecewiseField, Vector)> {
    let n = surface.dim();
    let x = surface.lift(tilde);
    let jac = surface.psi_jacobian(&surface.psi_inverse(&x))?;
    let (v1, v2) = (&jac * u1, &jac * u2);
    let m1 = Matrix::from_fn(n, n, |_, _| s.uniform(-1.0, 1.0));
    let m2 = Matrix::from_fn(n, n, |_, _| s.uniform(-1.0, 1.0));
    let (xa, xb) = (x.clone(), x.clone());
    let pf = PiecewiseField::from_fns(
        surface,
        move |y: &Vector| &v1 + &m1 * (y - &xa),
        move |y: &Vector| &v2 + &m2 * (y - &xb),
    );
    Ok((pf, x))
}

/// A field and a strictly sliding point of it.
fn sliding_sample<R: Rng>(
    s: &mut Sampler<'_, R>,
    source: &FieldSource,
    n: usize,
) -> Result<Option<(PiecewiseField, Vector)>> {
    match source {
        FieldSource::Random => {
            let surface = s.surface(n);
            let tilde = Vector::from_fn(n - 1, |_, _| s.uniform(-2.0, 2.0));
            let (q, r_s) = s.strict_domain_pair();
            let u1 = surface.join(&s.vector(n - 1), q);
            let u2 = surface.join(&s.vector(n - 1), r_s);
            affine_field_at(s, surface, &tilde, &u1, &u2).map(Some)
        }
        FieldSource::Fixed(pf) => {
            for _ in 0..256 {
                let tilde = Vector::from_fn(n - 1, |_, _| s.uniform(-2.0, 2.0));
                let x = pf.surface().lift(&tilde);
                let kind = pf.classify(&x, CLASSIFY_TOL)?;
                if matches!(
                    kind,
                    RegionKind::AttractingSliding | RegionKind::RepellingSliding
                ) {
                    return Ok(Some((pf.clone(), x)));
                }
            }
            Ok(None)
        }
    }
}

fn source_dim(source: &FieldSource, cfg: &SamplerConfig) -> Result<usize> {
    match source {
        FieldSource::Fixed(pf) if pf.surface().dim() != cfg.dim => Err(Error::DimensionMismatch {
            expected: cfg.dim,
            got: pf.surface().dim(),
        }),
        _ => Ok(cfg.dim),
    }
}

// ---------------------------------------------------------------------------
// Checks on the characteristic map

/// `A (α(u1, u2), 0) = (α(A u1, A u2), 0)` for regular `A` with last row
/// `(0, …, 0, d)`. Trial 0 uses `A = I + e_1 e_nᵀ`, `u1 = e_n`, `u2 = 0`.
pub fn check_matrix_equivariance(
    law: &CharacteristicMap,
    cfg: &SamplerConfig,
) -> Result<AuditReport> {
    let n = cfg.dim;
    run_trials(law.name(), Check::MatrixEquivariance, cfg, |trial, rng| {
        let mut s = Sampler::new(rng, cfg);
        let (a, u1, u2) = if trial == 0 && n >= 2 {
            let mut a = Matrix::identity(n, n);
            a[(0, n - 1)] = 1.0;
            let mut u1 = Vector::zeros(n);
            u1[n - 1] = 1.0;
            (a, u1, Vector::zeros(n))
        } else {
            let a = s.plane_preserving_matrix(n);
            let (q, r_s) = s.domain_pair();
            let p = s.vector(n - 1);
            let r = s.vector(n - 1);
            (a, join(&p, q), join(&r, r_s))
        };
        let (au1, au2) = (&a * &u1, &a * &u2);
        if !in_domain(au1[n - 1], au2[n - 1]) {
            return Outcome::failed(&Error::OutsideDomain {
                q: au1[n - 1],
                s: au2[n - 1],
            });
        }
        let lhs = law
            .evaluate_pair(&u1, &u2)
            .map(|alpha| &a * join(&alpha, 0.0));
        let rhs = law.evaluate_pair(&au1, &au2).map(|alpha| join(&alpha, 0.0));
        match (lhs, rhs) {
            (Ok(l), Ok(r)) => Outcome::compare(&l, &r)
                .input("A", a.as_slice())
                .input("u1", u1.as_slice())
                .input("u2", u2.as_slice()),
            (Err(e), _) | (_, Err(e)) => Outcome::failed(&e),
        }
    })
}

/// Zero-homogeneity in `(q, s)`, homogeneity and additivity in `(p, r)`.
pub fn check_homogeneity_and_linearity(
    law: &CharacteristicMap,
    cfg: &SamplerConfig,
) -> Result<AuditReport> {
    let n = cfg.dim;
    run_trials(law.name(), Check::HomogeneityLinearity, cfg, |_, rng| {
        let mut s = Sampler::new(rng, cfg);
        let (p, r) = (s.vector(n - 1), s.vector(n - 1));
        let (p2, r2) = (s.vector(n - 1), s.vector(n - 1));
        let (q, r_s) = s.domain_pair();
        let k = s.magnitude();
        let run = || -> Result<[(Vector, Vector); 3]> {
            let base = law.evaluate(&p, q, &r, r_s)?;
            let scaled_normals = law.evaluate(&p, k * q, &r, k * r_s)?;
            let scaled_tangent = law.evaluate(&(&p * k), q, &(&r * k), r_s)?;
            let summed = law.evaluate(&(&p + &p2), q, &(&r + &r2), r_s)?;
            let other = law.evaluate(&p2, q, &r2, r_s)?;
            Ok([
                (scaled_normals, base.clone()),
                (scaled_tangent, &base * k),
                (summed, &base + other),
            ])
        };
        match run() {
            Ok(pairs) => {
                let (idx, (l, r_)) = pairs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| {
                        relative_violation(&a.1 .0, &a.1 .1)
                            .total_cmp(&relative_violation(&b.1 .0, &b.1 .1))
                    })
                    .expect("three sub-checks");
                Outcome::compare(l, r_)
                    .input("subcheck", &[idx as f64])
                    .input("p", p.as_slice())
                    .input("q", &[q])
                    .input("r", r.as_slice())
                    .input("s", &[r_s])
                    .input("k", &[k])
            }
            Err(e) => Outcome::failed(&e),
        }
    })
}

/// `α = 0` when `(p, q) = c1 (k, l)` and `(r, s) = c2 (k, l)`, measured as
/// `|α| / max(1, |p|, |r|)`. Trial 0 is `p = e_1, q = 2, r = −e_1/2, s = −1`.
pub fn check_linear_dependence_vanishing(
    law: &CharacteristicMap,
    cfg: &SamplerConfig,
) -> Result<AuditReport> {
    let n = cfg.dim;
    run_trials(
        law.name(),
        Check::LinearDependenceVanishing,
        cfg,
        |trial, rng| {
            let mut s = Sampler::new(rng, cfg);
            let (dir, l, c1, c2) = if trial == 0 && n >= 2 {
                let mut k = Vector::zeros(n - 1);
                k[0] = 0.5;
                (k, 1.0, 2.0, -1.0)
            } else {
                let (c1, c2) = s.domain_pair();
                (s.vector(n - 1), s.magnitude(), c1, c2)
            };
            let (p, q, r, r_s) = (&dir * c1, c1 * l, &dir * c2, c2 * l);
            match law.evaluate(&p, q, &r, r_s) {
                Ok(alpha) => {
                    let scale = p.norm().max(r.norm()).max(1.0);
                    Outcome {
                        violation: alpha.norm() / scale,
                        inputs: BTreeMap::new(),
                        lhs: alpha.as_slice().to_vec(),
                        rhs: vec![0.0; n - 1],
                    }
                    .input("p", p.as_slice())
                    .input("q", &[q])
                    .input("r", r.as_slice())
                    .input("s", &[r_s])
                }
                Err(e) => Outcome::failed(&e),
            }
        },
    )
}

/// `α(p, q_m, p, s_m) → p` along `q_m = σ 2^{-m}`, `s_m = −σ ρ 2^{-m}`;
/// the violation is `|α − p| / |p|` at `m = 40`.
pub fn check_continuous_limit(law: &CharacteristicMap, cfg: &SamplerConfig) -> Result<AuditReport> {
    let n = cfg.dim;
    run_trials(law.name(), Check::ContinuousLimit, cfg, |_, rng| {
        let mut s = Sampler::new(rng, cfg);
        let p = s.vector(n - 1);
        let rho = s.uniform(0.0, 2.0).max(1e-3);
        let sigma = s.sign();
        let mut deviations = Vec::with_capacity(LIMIT_DEPTH as usize);
        let mut last = p.clone();
        for m in 1..=LIMIT_DEPTH {
            let eps = 2f64.powi(-m);
            match law.evaluate(&p, sigma * eps, &p, -sigma * rho * eps) {
                Ok(alpha) => {
                    deviations.push((&alpha - &p).norm());
                    last = alpha;
                }
                Err(e) => return Outcome::failed(&e),
            }
        }
        let dev = *deviations.last().expect("non-empty sequence");
        let norm = p.norm();
        Outcome {
            violation: if norm > 0.0 { dev / norm } else { dev },
            inputs: BTreeMap::new(),
            lhs: last.as_slice().to_vec(),
            rhs: p.as_slice().to_vec(),
        }
        .input("p", p.as_slice())
        .input("rho", &[rho])
        .input("sigma", &[sigma])
        .input("deviation_first", &deviations[..1])
        .input("deviation_last", &[dev])
    })
}

// ---------------------------------------------------------------------------
// Checks on the generating map

/// `(DΦ_x S(X1, X2)(x), S(DΦ X1, DΦ X2)(Φ(x)))` for a surface-preserving `Φ`.
pub fn consistency_sides(
    law: &GeneratingMap,
    pf: &PiecewiseField,
    x: &Vector,
    phi: &Diffeo,
) -> Result<(Vector, Vector)> {
    let before = law.generate(pf, x)?;
    let lhs = phi.jacobian_at(x) * before.vec;
    let pushed = pf.pushforward(phi, pf.surface().clone());
    let rhs = law.generate(&pushed, &phi.apply(x))?.vec;
    Ok((lhs, rhs))
}

/// `DΦ ∘ S = S ∘ DΦ` for `Φ = Ψ ∘ Φ̄ ∘ Ψ⁻¹` with `Φ̄` from the plane-map catalog.
pub fn check_parametrization_consistency(
    law: &CharacteristicMap,
    source: &FieldSource,
    cfg: &SamplerConfig,
) -> Result<AuditReport> {
    let n = source_dim(source, cfg)?;
    let gm = GeneratingMap::new(law.clone());
    run_trials(
        law.name(),
        Check::ParametrizationConsistency,
        cfg,
        |_, rng| {
            let mut s = Sampler::new(rng, cfg);
            let run = |s: &mut Sampler<'_, ChaCha8Rng>| -> Result<Option<Outcome>> {
                let Some((pf, x)) = sliding_sample(s, source, n)? else {
                    return Ok(None);
                };
                let inner = s.plane_map(n);
                let phi = conjugate(pf.surface(), pf.surface(), &inner.to_diffeo(n)?);
                let (lhs, rhs) = consistency_sides(&gm, &pf, &x, &phi)?;
                Ok(Some(Outcome::compare(&lhs, &rhs).input("x", x.as_slice())))
            };
            match run(&mut s) {
                Ok(Some(o)) => o,
                Ok(None) => Outcome::compare(&Vector::zeros(0), &Vector::zeros(0))
                    .input("no sliding point found", &[]),
                Err(e) => Outcome::failed(&e),
            }
        },
    )
}

/// Fields that agree at `x` (but nowhere else in general) give equal sliding
/// vectors at `x`.
pub fn check_pointwise(law: &CharacteristicMap, cfg: &SamplerConfig) -> Result<AuditReport> {
    let n = cfg.dim;
    let gm = GeneratingMap::new(law.clone());
    run_trials(law.name(), Check::Pointwise, cfg, |_, rng| {
        let mut s = Sampler::new(rng, cfg);
        let run = |s: &mut Sampler<'_, ChaCha8Rng>| -> Result<Outcome> {
            let (pf, x) =
                sliding_sample(s, &FieldSource::Random, n)?.expect("random source always yields");
            let (w1, w2) = (s.vector(n), s.vector(n));
            let (a1, a2) = (s.vector(n), s.vector(n));
            let (x1, x2) = (x.clone(), x.clone());
            let (f1, f2) = (pf.lower_field().clone(), pf.upper_field().clone());
            let perturbed = PiecewiseField::from_fns(
                pf.surface().clone(),
                move |y: &Vector| {
                    let d = y - &x1;
                    f1(y) + &w1 * (d.norm_squared() + a1.dot(&d))
                },
                move |y: &Vector| {
                    let d = y - &x2;
                    f2(y) + &w2 * (d.norm_squared() - a2.dot(&d))
                },
            );
            let lhs = gm.generate(&pf, &x)?.vec;
            let rhs = gm.generate(&perturbed, &x)?.vec;
            Ok(Outcome::compare(&lhs, &rhs).input("x", x.as_slice()))
        };
        run(&mut s).unwrap_or_else(|e| Outcome::failed(&e))
    })
}

// ---------------------------------------------------------------------------
// Field-level check

fn sign_band(v: f64, scale: f64) -> i8 {
    if v.abs() <= REGION_TOL * scale {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

/// Product-sign and equal-normal predicates at a surface point.
fn region_predicates(pf: &PiecewiseField, x: &Vector) -> Result<(i8, bool, f64, f64)> {
    let (a, b) = pf.normal_components(x)?;
    let (n1, n2) = (pf.lower(x).norm(), pf.upper(x).norm());
    let product = sign_band(a, n1.max(f64::MIN_POSITIVE)) * sign_band(b, n2.max(f64::MIN_POSITIVE));
    let equal = (a - b).abs() <= REGION_TOL * n1.max(n2);
    Ok((product, equal, a, b))
}

/// Sampled point of Σ with chart values of mixed region type.
fn mixed_sample<R: Rng>(
    s: &mut Sampler<'_, R>,
    source: &FieldSource,
    n: usize,
) -> Result<(PiecewiseField, Vector)> {
    match source {
        FieldSource::Fixed(pf) => {
            let tilde = Vector::from_fn(n - 1, |_, _| s.uniform(-2.0, 2.0));
            Ok((pf.clone(), pf.surface().lift(&tilde)))
        }
        FieldSource::Random => {
            let surface = s.surface(n);
            let tilde = Vector::from_fn(n - 1, |_, _| s.uniform(-2.0, 2.0));
            let q = s.signed();
            let r_s = match s.rng.random_range(0..10) {
                0..=4 => -q.signum() * s.magnitude(),
                5..=7 => q.signum() * s.magnitude(),
                8 => q,
                _ => 0.0,
            };
            let u1 = surface.join(&s.vector(n - 1), q);
            let u2 = surface.join(&s.vector(n - 1), r_s);
            affine_field_at(s, surface, &tilde, &u1, &u2)
        }
    }
}

/// Sliding-region predicates survive pushforward along `Φ = Ψ' ∘ Φ̄ ∘ Ψ⁻¹`,
/// where `Ψ'` flattens a randomly drawn target surface.
pub fn check_sliding_region_invariance(
    source: &FieldSource,
    cfg: &SamplerConfig,
) -> Result<AuditReport> {
    let n = source_dim(source, cfg)?;
    run_trials("-", Check::SlidingRegionInvariance, cfg, |_, rng| {
        let mut s = Sampler::new(rng, cfg);
        let run = |s: &mut Sampler<'_, ChaCha8Rng>| -> Result<Outcome> {
            let (pf, x) = mixed_sample(s, source, n)?;
            let target = s.surface(n);
            let inner = s.plane_map(n).to_diffeo(n)?;
            let phi = conjugate(pf.surface(), &target, &inner);
            let pushed = pf.pushforward(&phi, target);
            let (p0, e0, a0, b0) = region_predicates(&pf, &x)?;
            let (p1, e1, a1, b1) = region_predicates(&pushed, &phi.apply(&x))?;
            let agree = p0 == p1 && e0 == e1;
            Ok(Outcome {
                violation: if agree { 0.0 } else { 1.0 },
                inputs: BTreeMap::new(),
                lhs: vec![a0, b0],
                rhs: vec![a1, b1],
            }
            .input("x", x.as_slice()))
        };
        run(&mut s).unwrap_or_else(|e| Outcome::failed(&e))
    })
}

// ---------------------------------------------------------------------------

/// Run a single check. Field-based checks draw random fields.
pub fn run_check(
    check: Check,
    law: &CharacteristicMap,
    cfg: &SamplerConfig,
) -> Result<AuditReport> {
    match check {
        Check::MatrixEquivariance => check_matrix_equivariance(law, cfg),
        Check::HomogeneityLinearity => check_homogeneity_and_linearity(law, cfg),
        Check::LinearDependenceVanishing => check_linear_dependence_vanishing(law, cfg),
        Check::ContinuousLimit => check_continuous_limit(law, cfg),
        Check::ParametrizationConsistency => {
            check_parametrization_consistency(law, &FieldSource::Random, cfg)
        }
        Check::Pointwise => check_pointwise(law, cfg),
        Check::SlidingRegionInvariance => {
            let mut report = check_sliding_region_invariance(&FieldSource::Random, cfg)?;
            report.law = law.name().to_string();
            Ok(report)
        }
    }
}

/// Every check in [`Check::LAW_CHECKS`], in order.
pub fn run_all(law: &CharacteristicMap, cfg: &SamplerConfig) -> Result<Vec<AuditReport>> {
    Check::LAW_CHECKS
        .iter()
        .map(|&c| run_check(c, law, cfg))
        .collect()
}

fn join(head: &Vector, last: f64) -> Vector {
    let mut v = Vector::zeros(head.len() + 1);
    v.rows_mut(0, head.len()).copy_from(head);
    v[head.len()] = last;
    v
}
