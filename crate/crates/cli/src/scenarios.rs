//! Scenario catalog.
//!
//! * `friction`: forced oscillator with Coulomb friction, state `(θ, v)`,
//!   `θ̇ = 1`, `v̇ = A cos(ωθ) − f sgn(v)`, switching surface `v = 0`.
//! * `tilt`: constant fields over the line `x_2 = slope · x_1`.
//! * `flat`: `tilt` with slope zero.

use std::collections::BTreeMap;

use nalgebra::dvector;
use sliding_core::{PiecewiseField, SurfaceChart, Vector};

use crate::config::ScenarioConfig;
use crate::CliError;

pub const SCENARIOS: [&str; 3] = ["friction", "tilt", "flat"];

const FIELD_PARAMS: [&str; 4] = ["lower_x", "lower_y", "upper_x", "upper_y"];

/// `X1 = (1, A cos(ωθ) + f)` below `v = 0`, `X2 = (1, A cos(ωθ) − f)` above.
pub fn friction(f: f64, amplitude: f64, omega: f64) -> Result<PiecewiseField, CliError> {
    if f.is_nan() || f <= 0.0 {
        return Err(CliError::Config(format!(
            "friction coefficient f must be positive, got {f}"
        )));
    }
    Ok(PiecewiseField::from_fns(
        SurfaceChart::flat(2),
        move |x: &Vector| dvector![1.0, amplitude * (omega * x[0]).cos() + f],
        move |x: &Vector| dvector![1.0, amplitude * (omega * x[0]).cos() - f],
    ))
}

pub fn constant_tilt(slope: f64, lower: Vector, upper: Vector) -> PiecewiseField {
    PiecewiseField::constant(SurfaceChart::tilt(vec![slope]), lower, upper)
}

fn take(
    params: &BTreeMap<String, f64>,
    scenario: &str,
    names: &[&str],
) -> Result<Vec<f64>, CliError> {
    if let Some(extra) = params.keys().find(|k| !names.contains(&k.as_str())) {
        return Err(CliError::Config(format!(
            "unknown parameter {extra:?} for scenario {scenario}"
        )));
    }
    names
        .iter()
        .map(|&n| {
            params.get(n).copied().ok_or_else(|| {
                CliError::Config(format!("scenario {scenario} needs parameter {n:?}"))
            })
        })
        .collect()
}

/// Build the field described by `cfg` and check the initial state's dimension.
pub fn build(cfg: &ScenarioConfig) -> Result<PiecewiseField, CliError> {
    let p = &cfg.params;
    let pf = match cfg.scenario.as_str() {
        "friction" => {
            let v = take(p, "friction", &["f", "A", "omega"])?;
            friction(v[0], v[1], v[2])?
        }
        "tilt" => {
            let names: Vec<&str> = std::iter::once("slope").chain(FIELD_PARAMS).collect();
            let v = take(p, "tilt", &names)?;
            constant_tilt(v[0], dvector![v[1], v[2]], dvector![v[3], v[4]])
        }
        "flat" => {
            let v = take(p, "flat", &FIELD_PARAMS)?;
            constant_tilt(0.0, dvector![v[0], v[1]], dvector![v[2], v[3]])
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown scenario {other:?} (expected one of {})",
                SCENARIOS.join(", ")
            )))
        }
    };
    if cfg.x0.len() != pf.surface().dim() {
        return Err(CliError::Config(format!(
            "x0 has {} components, scenario {} needs {}",
            cfg.x0.len(),
            cfg.scenario,
            pf.surface().dim()
        )));
    }
    Ok(pf)
}
