use std::io::Write;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, Normal};

use super::CurvePoint;
use crate::error::{Error, Result};

/// Lower clamp for rates before the probit transform.
pub const DET_CLAMP: f64 = 1e-6;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Inverse standard normal CDF; infinite outside (0, 1).
pub fn probit(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    Normal::standard().inverse_cdf(p)
}

/// DET coordinates: probit of the clamped FAR and FRR of every curve point.
pub fn det_points(curve: &[CurvePoint]) -> Vec<(f64, f64)> {
    let clamp = |v: f64| v.clamp(DET_CLAMP, 1.0 - DET_CLAMP);
    curve
        .iter()
        .map(|p| (probit(clamp(p.far)), probit(clamp(p.frr))))
        .collect()
}

pub fn write_det_csv(points: &[(f64, f64)], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "fd_far,fd_frr").unwrap();
    for (x, y) in points {
        writeln!(buf, "{x:e},{y:e}").unwrap();
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
