use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::ParameterPoint;

/// Prescribed slow motion `X(t)` on `[0, duration]` with analytic velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DrivePath {
    /// `X(t) = start + velocity t`.
    Linear { start: Vec<f64>, velocity: Vec<f64>, duration: f64 },
    /// Uniform circle in the `(axes.0, axes.1)` plane starting at angle zero,
    /// one revolution per `period`; other coordinates stay at `centre`.
    Circular {
        centre: Vec<f64>,
        radius: f64,
        period: f64,
        axes: (usize, usize),
        duration: f64,
    },
}

impl DrivePath {
    pub fn linear(start: Vec<f64>, velocity: Vec<f64>, duration: f64) -> Result<Self> {
        let p = DrivePath::Linear { start, velocity, duration };
        p.validate()?;
        Ok(p)
    }

    /// One full revolution at speed `speed`, radius `speed * period / 2 pi`.
    pub fn circle(centre: Vec<f64>, speed: f64, period: f64, axes: (usize, usize)) -> Result<Self> {
        let p = DrivePath::Circular {
            radius: speed * period / TAU,
            centre,
            period,
            axes,
            duration: period,
        };
        p.validate()?;
        Ok(p)
    }

    /// Straight sweep from `start` to `end` at constant speed `rate`.
    pub fn sweep(start: Vec<f64>, end: &[f64], rate: f64) -> Result<Self> {
        if start.len() != end.len() {
            return Err(Error::DimensionMismatch { expected: start.len(), found: end.len() });
        }
        let delta: Vec<f64> = end.iter().zip(&start).map(|(b, a)| b - a).collect();
        let length = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
        if !(rate > 0.0) || length == 0.0 {
            return Err(Error::InvalidParameter("sweep needs a positive rate and distinct ends".into()));
        }
        let duration = length / rate;
        let velocity = delta.iter().map(|d| d / duration).collect();
        Self::linear(start, velocity, duration)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            DrivePath::Linear { start, velocity, duration } => {
                if start.len() != velocity.len() {
                    return Err(Error::DimensionMismatch { expected: start.len(), found: velocity.len() });
                }
                if start.is_empty() || !finite(start) || !finite(velocity) {
                    return Err(Error::InvalidParameter("linear path needs finite coordinates".into()));
                }
                if !(*duration >= 0.0) || !duration.is_finite() {
                    return Err(Error::InvalidParameter(format!("duration {duration}")));
                }
            }
            DrivePath::Circular { centre, radius, period, axes, duration } => {
                if axes.0 >= centre.len() || axes.1 >= centre.len() || axes.0 == axes.1 {
                    return Err(Error::InvalidParameter(format!("bad circle plane {axes:?}")));
                }
                if !finite(centre) || !(*radius >= 0.0) || !(*period > 0.0) || !(*duration >= 0.0) {
                    return Err(Error::InvalidParameter("circle needs radius >= 0, period > 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        match self {
            DrivePath::Linear { duration, .. } | DrivePath::Circular { duration, .. } => *duration,
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            DrivePath::Linear { start, .. } => start.len(),
            DrivePath::Circular { centre, .. } => centre.len(),
        }
    }

    pub fn coords(&self, t: f64) -> Vec<f64> {
        match self {
            DrivePath::Linear { start, velocity, .. } => {
                start.iter().zip(velocity).map(|(x, v)| x + v * t).collect()
            }
            DrivePath::Circular { centre, radius, period, axes, .. } => {
                let phase = TAU * t / period;
                let mut x = centre.clone();
                x[axes.0] += radius * phase.cos();
                x[axes.1] += radius * phase.sin();
                x
            }
        }
    }

    pub fn position(&self, t: f64) -> ParameterPoint {
        ParameterPoint::new(self.coords(t)).expect("validated path yields finite points")
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        match self {
            DrivePath::Linear { velocity, .. } => velocity.clone(),
            DrivePath::Circular { centre, radius, period, axes, .. } => {
                let w = TAU / period;
                let phase = w * t;
                let mut v = vec![0.0; centre.len()];
                v[axes.0] = -radius * w * phase.sin();
                v[axes.1] = radius * w * phase.cos();
                v
            }
        }
    }

    pub fn speed(&self, t: f64) -> f64 {
        self.velocity(t).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Short human-readable description.
    pub fn tag(&self) -> String {
        match self {
            DrivePath::Linear { velocity, duration, .. } => {
                format!("linear |V|={:.6e} T={duration}", velocity.iter().map(|v| v * v).sum::<f64>().sqrt())
            }
            DrivePath::Circular { radius, period, .. } => format!("circle R={radius:.6e} T={period}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_velocity_defect(p: &DrivePath, t: f64, h: f64) -> f64 {
        let (a, b) = (p.coords(t + h), p.coords(t - h));
        p.velocity(t)
            .iter()
            .enumerate()
            .map(|(i, v)| ((a[i] - b[i]) / (2.0 * h) - v).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn velocity_matches_position() {
        let c = DrivePath::circle(vec![0.1, 0.0, -0.2], 0.3, 5.0, (0, 2)).unwrap();
        let e1 = fd_velocity_defect(&c, 1.3, 1e-2);
        let e2 = fd_velocity_defect(&c, 1.3, 5e-3);
        assert!((e1 / e2 - 4.0).abs() < 0.1);
        assert!((c.speed(0.7) - 0.3).abs() < 1e-14);
        let l = DrivePath::sweep(vec![-1.0, 0.0], &[1.0, 2.0], 0.5).unwrap();
        assert!(fd_velocity_defect(&l, 0.4, 1e-3) < 1e-12);
        assert!((l.speed(0.0) - 0.5).abs() < 1e-14);
        let end = l.coords(l.duration());
        assert!((end[0] - 1.0).abs() < 1e-12 && (end[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn circle_closes() {
        let c = DrivePath::circle(vec![0.0, 0.0], 1.0, 2.0, (0, 1)).unwrap();
        let (a, b) = (c.coords(0.0), c.coords(c.duration()));
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_paths() {
        assert!(DrivePath::linear(vec![0.0], vec![1.0, 2.0], 1.0).is_err());
        assert!(DrivePath::circle(vec![0.0], 1.0, 1.0, (0, 1)).is_err());
        assert!(DrivePath::sweep(vec![0.0], &[0.0], 1.0).is_err());
    }
}
