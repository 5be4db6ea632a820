use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One operating point. FAR counts impostor scores `>= threshold`, FRR counts
/// genuine scores `< threshold`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

fn check(name: &str, scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::data(format!("empty {name} score list")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::numeric(format!("non-finite {name} score")));
    }
    Ok(())
}

/// FA/FR curve over every distinct pooled score, bracketed by `-inf` and
/// `+inf` thresholds.
pub fn compute_curve(genuine: &[f64], impostor: &[f64]) -> Result<Vec<CurvePoint>> {
    check("genuine", genuine)?;
    check("impostor", impostor)?;
    let mut gen = genuine.to_vec();
    let mut imp = impostor.to_vec();
    gen.sort_by(f64::total_cmp);
    imp.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = gen.iter().chain(&imp).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let (ng, ni) = (gen.len() as f64, imp.len() as f64);
    let mut curve = Vec::with_capacity(thresholds.len() + 2);
    curve.push(CurvePoint {
        threshold: f64::NEG_INFINITY,
        far: 1.0,
        frr: 0.0,
    });
    // genuine below t and impostor below t, advanced monotonically
    let (mut gi, mut ii) = (0usize, 0usize);
    for t in thresholds {
        while gi < gen.len() && gen[gi] < t {
            gi += 1;
        }
        while ii < imp.len() && imp[ii] < t {
            ii += 1;
        }
        curve.push(CurvePoint {
            threshold: t,
            far: (imp.len() - ii) as f64 / ni,
            frr: gi as f64 / ng,
        });
    }
    curve.push(CurvePoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    });
    Ok(curve)
}

/// Equal error rate: where FAR and FRR cross, linearly interpolated between
/// the two curve points that bracket the sign change of `far - frr`.
pub fn compute_eer(curve: &[CurvePoint]) -> f64 {
    let diff = |p: &CurvePoint| p.far - p.frr;
    let Some(k) = curve.iter().position(|p| diff(p) <= 0.0) else {
        return curve.last().map(|p| p.far).unwrap_or(0.5);
    };
    let here = &curve[k];
    if diff(here) == 0.0 || k == 0 {
        return here.far;
    }
    let prev = &curve[k - 1];
    let (d0, d1) = (diff(prev), diff(here));
    let lambda = d0 / (d0 - d1);
    prev.far + lambda * (here.far - prev.far)
}

/// EER straight from score lists.
pub fn eer(genuine: &[f64], impostor: &[f64]) -> Result<f64> {
    Ok(compute_eer(&compute_curve(genuine, impostor)?))
}

/// Threshold minimizing `prior * FRR + (1 - prior) * FAR` and that cost.
pub fn min_cost_threshold(curve: &[CurvePoint], prior: f64) -> (f64, f64) {
    curve
        .iter()
        .map(|p| (p.threshold, prior * p.frr + (1.0 - prior) * p.far))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0.0, 1.0))
}

/// Cost `prior * FRR + (1 - prior) * FAR` at a fixed threshold.
pub fn cost_at(genuine: &[f64], impostor: &[f64], threshold: f64, prior: f64) -> f64 {
    let frr = genuine.iter().filter(|&&s| s < threshold).count() as f64 / genuine.len() as f64;
    let far = impostor.iter().filter(|&&s| s >= threshold).count() as f64 / impostor.len() as f64;
    prior * frr + (1.0 - prior) * far
}

pub fn write_curve_csv(curve: &[CurvePoint], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "threshold,far,frr").unwrap();
    for p in curve {
        writeln!(buf, "{:e},{:e},{:e}", p.threshold, p.far, p.frr).unwrap();
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
