//! Event-driven integration of a piecewise-continuous field.
//!
//! Free flight in `G_1`/`G_2` uses a fixed-step classical RK4. Surface hits are
//! localized by bisection on the step length, then the hit point is classified:
//! crossing points are passed through, sliding points switch to motion on Σ.
//! Sliding is integrated in the flat chart (`x̃` only, `x_n ≡ 0` on `P`) with
//! the chart velocity supplied by a [`GeneratingMap`], and mapped back through
//! `Ψ`, so sliding states lie on Σ to round-off.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fields::{classify_components, gap, PiecewiseField, RegionKind, CLASSIFY_TOL};
use crate::geometry::{SurfaceChart, Vector, VectorField};
use crate::sliding_laws::GeneratingMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    FreeG1,
    FreeG2,
    Sliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    SurfaceHit,
    SlidingEntry,
    SlidingExit,
    CrossingThrough,
    SingularStop,
    TimeEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub state: Vector,
    pub kind: EventKind,
    /// `(X1N, X2N)` when the state lies on Σ.
    pub normals: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub mode: Mode,
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
}

impl Segment {
    fn start(mode: Mode, t: f64, x: &Vector) -> Self {
        Self {
            mode,
            times: vec![t],
            states: vec![x.clone()],
        }
    }

    fn push(&mut self, t: f64, x: &Vector) {
        self.times.push(t);
        self.states.push(x.clone());
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
    pub events: Vec<EventRecord>,
}

impl Trajectory {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Last recorded time and state.
    pub fn final_state(&self) -> Option<(f64, &Vector)> {
        let seg = self.segments.last()?;
        Some((*seg.times.last()?, seg.states.last()?))
    }

    pub fn final_mode(&self) -> Option<Mode> {
        self.segments.last().map(|s| s.mode)
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &EventRecord> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Mode and state at time `t`, taken from the last segment whose span
    /// contains `t` and interpolated linearly between grid points.
    pub fn sample(&self, t: f64) -> Option<(Mode, Vector)> {
        let seg = self.segments.iter().rev().find(|s| {
            s.times.first().is_some_and(|&a| a <= t) && s.times.last().is_some_and(|&b| t <= b)
        })?;
        let i = seg.times.partition_point(|&ti| ti < t);
        if i == 0 || seg.times[i] == t {
            return Some((seg.mode, seg.states[i].clone()));
        }
        let (t0, t1) = (seg.times[i - 1], seg.times[i]);
        let w = (t - t0) / (t1 - t0);
        Some((
            seg.mode,
            &seg.states[i - 1] * (1.0 - w) + &seg.states[i] * w,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub step: f64,
    pub t_end: f64,
    /// Event brackets are shrunk to `event_tol · step`.
    pub event_tol: f64,
    /// Starting points with `|gap| ≤ sliding_tol` are treated as on Σ.
    pub sliding_tol: f64,
    pub max_events: usize,
}

impl IntegratorOptions {
    pub fn new(step: f64, t_end: f64) -> Self {
        Self {
            step,
            t_end,
            event_tol: 1e-10,
            sliding_tol: 1e-7,
            max_events: 1000,
        }
    }

    fn validate(&self) -> Result<(), String> {
        let positive = [
            ("step", self.step),
            ("event_tol", self.event_tol),
            ("sliding_tol", self.sliding_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !self.t_end.is_finite() {
            return Err("t_end must be finite".into());
        }
        if self.max_events == 0 {
            return Err("max_events must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IntegrationErrorKind {
    InvalidOptions(String),
    NonFiniteState { time: f64 },
    TooManyEvents { max: usize },
    Evaluation(Error),
}

impl fmt::Display for IntegrationErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidOptions(msg) => write!(f, "invalid integrator options: {msg}"),
            Self::NonFiniteState { time } => write!(f, "non-finite state at t = {time}"),
            Self::TooManyEvents { max } => write!(f, "more than {max} events"),
            Self::Evaluation(e) => write!(f, "evaluation failed: {e}"),
        }
    }
}

/// Integration failure together with the trajectory computed so far.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationError {
    pub kind: IntegrationErrorKind,
    pub partial: Trajectory,
}

impl fmt::Display for IntegrationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.kind.fmt(f)
    }
}

impl std::error::Error for IntegrationError {}

/// One classical fourth-order Runge-Kutta step of `ẋ = field(x)`.
pub fn step_free(field: &dyn Fn(&Vector) -> Vector, x: &Vector, h: f64) -> Result<Vector, Error> {
    let k1 = field(x);
    let k2 = field(&(x + &k1 * (0.5 * h)));
    let k3 = field(&(x + &k2 * (0.5 * h)));
    let k4 = field(&(x + &k3 * h));
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::NonFinite("free-flight step"))
    }
}

/// RK4 step for a velocity that may fail to evaluate.
fn step_fallible(
    field: &dyn Fn(&Vector) -> Result<Vector, Error>,
    x: &Vector,
    h: f64,
) -> Result<Vector, Error> {
    let k1 = field(x)?;
    let k2 = field(&(x + &k1 * (0.5 * h)))?;
    let k3 = field(&(x + &k2 * (0.5 * h)))?;
    let k4 = field(&(x + &k3 * h))?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::NonFinite("sliding step"))
    }
}

/// Shrink `[lo, hi]` with `fired(lo) = false`, `fired(hi) = true` until its
/// width is at most `width`.
fn bisect(mut fired: impl FnMut(f64) -> bool, mut lo: f64, mut hi: f64, width: f64) -> (f64, f64) {
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if fired(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

/// Locate a sign change of `f` on `[t_lo, t_hi]` to a bracket of width
/// `tol · (t_hi − t_lo)` and return its midpoint.
pub fn locate_event(
    mut f: impl FnMut(f64) -> f64,
    t_lo: f64,
    t_hi: f64,
    tol: f64,
) -> Result<f64, Error> {
    let (f_lo, f_hi) = (f(t_lo), f(t_hi));
    if f_lo.is_nan() || f_hi.is_nan() || f_lo * f_hi >= 0.0 {
        return Err(Error::NoSignChange { lo: t_lo, hi: t_hi });
    }
    let hi_positive = f_hi > 0.0;
    let (lo, hi) = bisect(
        |t| (f(t) > 0.0) == hi_positive,
        t_lo,
        t_hi,
        tol * (t_hi - t_lo),
    );
    Ok(0.5 * (lo + hi))
}

/// Mutable integration state shared by the phases.
struct Run<'a> {
    pf: &'a PiecewiseField,
    law: &'a GeneratingMap,
    opts: &'a IntegratorOptions,
    traj: Trajectory,
}

enum Next {
    Free(Mode),
    Slide,
    Halt,
}

type PhaseResult = Result<(f64, Vector, Next), IntegrationErrorKind>;

impl<'a> Run<'a> {
    fn surface(&self) -> &SurfaceChart {
        self.pf.surface()
    }

    fn event(
        &mut self,
        time: f64,
        state: &Vector,
        kind: EventKind,
        normals: Option<(f64, f64)>,
    ) -> Result<(), IntegrationErrorKind> {
        self.traj.events.push(EventRecord {
            time,
            state: state.clone(),
            kind,
            normals,
        });
        let counted = self
            .traj
            .events
            .iter()
            .filter(|e| e.kind != EventKind::TimeEnd)
            .count();
        if counted > self.opts.max_events {
            return Err(IntegrationErrorKind::TooManyEvents {
                max: self.opts.max_events,
            });
        }
        Ok(())
    }

    fn normals(&self, x: &Vector) -> Result<(f64, f64), IntegrationErrorKind> {
        self.pf
            .normal_components(x)
            .map_err(IntegrationErrorKind::Evaluation)
    }

    /// Project a point vertically onto Σ.
    fn snap(&self, x: &Vector) -> Vector {
        let (tilde, _) = self.surface().split(x);
        self.surface().lift(&tilde)
    }

    /// Next step length; the final step absorbs round-off so that runs end
    /// exactly at `t_end`.
    fn remaining_step(&self, t: f64) -> Option<f64> {
        let left = self.opts.t_end - t;
        if left <= 1e-13 * t.abs().max(1.0) {
            None
        } else if left <= self.opts.step * (1.0 + 1e-9) {
            Some(left)
        } else {
            Some(self.opts.step)
        }
    }

    /// Decide how to continue from a point of Σ.
    fn resolve_on_surface(
        &mut self,
        t: f64,
        x: &Vector,
        arriving: Option<Mode>,
    ) -> Result<Next, IntegrationErrorKind> {
        let (a, b) = self.normals(x)?;
        let kind = classify_components(a, b, CLASSIFY_TOL);
        let normals = Some((a, b));
        let cross = |run: &mut Self, up: bool| -> Result<Next, IntegrationErrorKind> {
            run.event(t, x, EventKind::CrossingThrough, normals)?;
            Ok(Next::Free(if up { Mode::FreeG2 } else { Mode::FreeG1 }))
        };
        match kind {
            // Equal but nonzero normal components: the field is continuous
            // across Σ here, so free flight passes straight through.
            RegionKind::SingularEqualNormals
                if a.abs() > CLASSIFY_TOL && b.abs() > CLASSIFY_TOL =>
            {
                cross(self, a > 0.0)
            }
            RegionKind::SingularEqualNormals => {
                self.event(t, x, EventKind::SingularStop, normals)?;
                Ok(Next::Halt)
            }
            RegionKind::Crossing => cross(self, a > 0.0),
            RegionKind::AttractingSliding => {
                self.event(t, x, EventKind::SlidingEntry, normals)?;
                Ok(Next::Slide)
            }
            RegionKind::RepellingSliding => match arriving {
                // Grazing contact: the field already points back where it came from.
                Some(mode) => Ok(Next::Free(mode)),
                None => {
                    self.event(t, x, EventKind::SlidingEntry, normals)?;
                    Ok(Next::Slide)
                }
            },
            RegionKind::TangencyBoundary => {
                let attracting_closure = a >= -CLASSIFY_TOL && b <= CLASSIFY_TOL;
                if attracting_closure || arriving.is_none() {
                    self.event(t, x, EventKind::SlidingEntry, normals)?;
                    Ok(Next::Slide)
                } else {
                    let dominant = if a.abs() > b.abs() { a } else { b };
                    cross(self, dominant > 0.0)
                }
            }
        }
    }

    fn free_phase(&mut self, mode: Mode, t0: f64, x0: Vector) -> PhaseResult {
        let field: VectorField = match mode {
            Mode::FreeG1 => self.pf.lower_field().clone(),
            _ => self.pf.upper_field().clone(),
        };
        let crossed = |s: &SurfaceChart, x: &Vector| match mode {
            Mode::FreeG1 => gap(s, x) > 0.0,
            _ => gap(s, x) < 0.0,
        };
        let mut seg = Segment::start(mode, t0, &x0);
        let (mut t, mut x) = (t0, x0);
        let result = loop {
            let Some(h) = self.remaining_step(t) else {
                break Ok((t, x, Next::Halt));
            };
            let next = match step_free(&*field, &x, h) {
                Ok(v) => v,
                Err(_) => break Err(IntegrationErrorKind::NonFiniteState { time: t + h }),
            };
            if crossed(self.surface(), &next) {
                let surface = self.surface().clone();
                let (_, tau) = bisect(
                    |tau| {
                        step_free(&*field, &x, tau)
                            .map(|y| crossed(&surface, &y))
                            .unwrap_or(true)
                    },
                    0.0,
                    h,
                    self.opts.event_tol * h,
                );
                let hit = match step_free(&*field, &x, tau) {
                    Ok(v) => self.snap(&v),
                    Err(_) => break Err(IntegrationErrorKind::NonFiniteState { time: t + tau }),
                };
                let t_hit = t + tau;
                seg.push(t_hit, &hit);
                self.traj.segments.push(seg);
                let normals = self.normals(&hit)?;
                self.event(t_hit, &hit, EventKind::SurfaceHit, Some(normals))?;
                let next = self.resolve_on_surface(t_hit, &hit, Some(mode))?;
                return Ok((t_hit, hit, next));
            }
            t = if h == self.opts.t_end - t {
                self.opts.t_end
            } else {
                t + h
            };
            x = next;
            seg.push(t, &x);
        };
        self.traj.segments.push(seg);
        result
    }

    fn slide_phase(&mut self, t0: f64, x0: Vector) -> PhaseResult {
        let surface = self.surface().clone();
        let (pf, law) = (self.pf, self.law);
        let velocity = |z: &Vector| -> Result<Vector, Error> {
            let v = law.generate(pf, &surface.lift(z))?;
            Ok(v.vec.rows(0, z.len()).into_owned())
        };
        let exited = |z: &Vector, tau: f64| -> bool {
            match step_fallible(&velocity, z, tau) {
                Err(_) => true,
                Ok(zn) => match pf.normal_components(&surface.lift(&zn)) {
                    Ok((a, b)) => classify_components(a, b, CLASSIFY_TOL) == RegionKind::Crossing,
                    Err(_) => true,
                },
            }
        };

        let mut seg = Segment::start(Mode::Sliding, t0, &x0);
        let (mut z, _) = surface.split(&x0);
        let mut t = t0;
        let result = loop {
            let Some(h) = self.remaining_step(t) else {
                break Ok((t, surface.lift(&z), Next::Halt));
            };
            if exited(&z, h) {
                let (lo, _) = bisect(|tau| exited(&z, tau), 0.0, h, self.opts.event_tol * h);
                let z_exit = if lo == 0.0 {
                    z.clone()
                } else {
                    match step_fallible(&velocity, &z, lo) {
                        Ok(v) => v,
                        Err(e) => break Err(IntegrationErrorKind::Evaluation(e)),
                    }
                };
                let (t_exit, x_exit) = (t + lo, surface.lift(&z_exit));
                if lo > 0.0 {
                    seg.push(t_exit, &x_exit);
                }
                self.traj.segments.push(seg);
                let (a, b) = self.normals(&x_exit)?;
                if classify_components(a, b, CLASSIFY_TOL) == RegionKind::SingularEqualNormals {
                    self.event(t_exit, &x_exit, EventKind::SingularStop, Some((a, b)))?;
                    return Ok((t_exit, x_exit, Next::Halt));
                }
                self.event(t_exit, &x_exit, EventKind::SlidingExit, Some((a, b)))?;
                // The component that stays away from zero points to the region
                // the trajectory leaves into.
                let survivor = if a.abs() <= b.abs() { b } else { a };
                let mode = if survivor > 0.0 {
                    Mode::FreeG2
                } else {
                    Mode::FreeG1
                };
                return Ok((t_exit, x_exit, Next::Free(mode)));
            }
            let zn = match step_fallible(&velocity, &z, h) {
                Ok(v) => v,
                Err(e) => break Err(IntegrationErrorKind::Evaluation(e)),
            };
            t = if h == self.opts.t_end - t {
                self.opts.t_end
            } else {
                t + h
            };
            z = zn;
            let x = surface.lift(&z);
            seg.push(t, &x);
            let (a, b) = self.normals(&x)?;
            if classify_components(a, b, CLASSIFY_TOL) == RegionKind::SingularEqualNormals {
                self.traj.segments.push(seg);
                self.event(t, &x, EventKind::SingularStop, Some((a, b)))?;
                return Ok((t, x, Next::Halt));
            }
        };
        self.traj.segments.push(seg);
        result
    }

    fn run(&mut self, x0: &Vector, t0: f64) -> Result<(), IntegrationErrorKind> {
        let mut t = t0;
        let mut next = if gap(self.surface(), x0).abs() <= self.opts.sliding_tol {
            let x = self.snap(x0);
            let n = self.resolve_on_surface(t, &x, None)?;
            (x, n)
        } else if gap(self.surface(), x0) < 0.0 {
            (x0.clone(), Next::Free(Mode::FreeG1))
        } else {
            (x0.clone(), Next::Free(Mode::FreeG2))
        };
        loop {
            let (x, step) = next;
            let (t_new, x_new, n) = match step {
                Next::Free(mode) => self.free_phase(mode, t, x)?,
                Next::Slide => self.slide_phase(t, x)?,
                Next::Halt => {
                    if self.traj.events.last().map(|e| e.kind) != Some(EventKind::SingularStop) {
                        let normals = self.pf.normal_components(&x).ok();
                        self.event(t, &x, EventKind::TimeEnd, normals)?;
                    }
                    return Ok(());
                }
            };
            if x_new.iter().any(|v| !v.is_finite()) {
                return Err(IntegrationErrorKind::NonFiniteState { time: t_new });
            }
            t = t_new;
            next = (x_new, n);
        }
    }
}

/// Integrate `pf` from `(t0, x0)` to `opts.t_end`, using `law` on Σ.
///
/// A span with `t_end == t0` yields an empty trajectory.
pub fn integrate(
    pf: &PiecewiseField,
    law: &GeneratingMap,
    x0: &Vector,
    t0: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory, IntegrationError> {
    let fail = |kind, partial| Err(IntegrationError { kind, partial });
    if let Err(msg) = opts.validate() {
        return fail(
            IntegrationErrorKind::InvalidOptions(msg),
            Trajectory::default(),
        );
    }
    if x0.len() != pf.surface().dim() {
        let e = Error::DimensionMismatch {
            expected: pf.surface().dim(),
            got: x0.len(),
        };
        return fail(IntegrationErrorKind::Evaluation(e), Trajectory::default());
    }
    if !t0.is_finite() || opts.t_end < t0 {
        let msg = format!("t_end ({}) must not precede t0 ({t0})", opts.t_end);
        return fail(
            IntegrationErrorKind::InvalidOptions(msg),
            Trajectory::default(),
        );
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return fail(
            IntegrationErrorKind::NonFiniteState { time: t0 },
            Trajectory::default(),
        );
    }
    if opts.t_end == t0 {
        return Ok(Trajectory::default());
    }
    let mut run = Run {
        pf,
        law,
        opts,
        traj: Trajectory::default(),
    };
    match run.run(x0, t0) {
        Ok(()) => Ok(run.traj),
        Err(kind) => fail(kind, run.traj),
    }
}
