use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{fit_log_linear, gauss_legendre, LogLinearFit};
use crate::error::{Error, Result};

use super::fields::FieldSource;
use super::path::DrivePath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditOptions {
    /// Trapezoid nodes along the loop (periodic, so spectrally accurate).
    pub time_nodes: usize,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self { time_nodes: 128, radial_nodes: 12, angular_nodes: 48 }
    }
}

/// The three second-order contributions to the action over one loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActionAudit {
    pub speed: f64,
    pub period: f64,
    pub radius: f64,
    /// `int Phi~ dt`
    pub scalar_action: f64,
    /// Flux of `F` through the loop, i.e. the Berry phase times hbar.
    pub berry_phase: f64,
    /// `int (1/2) Xdot.I_ind.Xdot dt`
    pub inertial_action: f64,
}

/// Quadrature of the scalar, geometric and inertial actions around the circle of
/// speed `speed` and period `period` centred at `centre` in the plane `axes`.
pub fn action_order_audit(
    fields: &dyn FieldSource,
    centre: &[f64],
    axes: (usize, usize),
    speed: f64,
    period: f64,
    opts: &AuditOptions,
) -> Result<ActionAudit> {
    if !(speed >= 0.0) || !(period > 0.0) {
        return Err(Error::InvalidParameter("audit needs speed >= 0 and period > 0".into()));
    }
    let path = DrivePath::circle(centre.to_vec(), speed, period, axes)?;
    let radius = speed * period / TAU;

    let nt = opts.time_nodes.max(1);
    let h = period / nt as f64;
    let (mut scalar, mut inertial) = (0.0, 0.0);
    for k in 0..nt {
        let t = k as f64 * h;
        let s = fields.sample(&path.coords(t))?;
        let v = path.velocity(t);
        let iv: f64 = (0..v.len())
            .map(|i| (0..v.len()).map(|j| v[i] * s.induced_inertia[(i, j)] * v[j]).sum::<f64>())
            .sum();
        scalar += s.scalar_potential * h;
        inertial += 0.5 * iv * h;
    }

    let mut flux = 0.0;
    if radius > 0.0 {
        let (nodes, weights) = gauss_legendre(opts.radial_nodes.max(1));
        let na = opts.angular_nodes.max(1);
        for (xr, wr) in nodes.iter().zip(&weights) {
            let r = 0.5 * radius * (xr + 1.0);
            for a in 0..na {
                let phi = TAU * a as f64 / na as f64;
                let mut x = centre.to_vec();
                x[axes.0] += r * phi.cos();
                x[axes.1] += r * phi.sin();
                let f = fields.sample(&x)?.curvature[(axes.0, axes.1)];
                flux += f * r * (0.5 * radius * wr) * (TAU / na as f64);
            }
        }
    }
    Ok(ActionAudit { speed, period, radius, scalar_action: scalar, berry_phase: flux, inertial_action: inertial })
}

/// Scaling exponents `(p_V, p_T)` of each action over a grid of speeds and periods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditScaling {
    pub scalar: LogLinearFit,
    pub berry: LogLinearFit,
    pub inertial: LogLinearFit,
    pub samples: Vec<ActionAudit>,
}

pub fn audit_scaling(
    fields: &dyn FieldSource,
    centre: &[f64],
    axes: (usize, usize),
    speeds: &[f64],
    periods: &[f64],
    opts: &AuditOptions,
) -> Result<AuditScaling> {
    let grid: Vec<(f64, f64)> = speeds.iter().flat_map(|&v| periods.iter().map(move |&t| (v, t))).collect();
    let samples = grid
        .par_iter()
        .map(|&(v, t)| action_order_audit(fields, centre, axes, v, t, opts))
        .collect::<Result<Vec<_>>>()?;
    let v: Vec<f64> = samples.iter().map(|s| s.speed).collect();
    let t: Vec<f64> = samples.iter().map(|s| s.period).collect();
    let fit = |f: &dyn Fn(&ActionAudit) -> f64| {
        let y: Vec<f64> = samples.iter().map(|s| f(s).abs()).collect();
        fit_log_linear(&[v.clone(), t.clone()], &y)
    };
    Ok(AuditScaling {
        scalar: fit(&|s| s.scalar_action)?,
        berry: fit(&|s| s.berry_phase)?,
        inertial: fit(&|s| s.inertial_action)?,
        samples,
    })
}
