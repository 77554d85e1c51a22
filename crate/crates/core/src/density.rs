//! Normalized log-densities from energies, and blind estimation of the
//! measurement covariance.
//!
//! A trained energy is only defined up to an additive constant. At large
//! covariance the noisy marginal is close to `N(0, Sigma)`, so the constant
//! is fixed by matching the mean energy to the Gaussian entropy there.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::covariance::DiagonalCovariance;
use crate::energymodel::Energy;
use crate::error::{Error, Result};

/// Calibration covariances must have every coordinate at least this
/// fraction of their upper bound.
pub const LARGE_REGIME_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationRecord {
    pub offset: f64,
    pub calibration: DiagonalCovariance,
    pub samples: usize,
    pub stderr: f64,
}

/// Estimates the normalization offset of `model` at `cal`.
pub fn calibrate<E: Energy + ?Sized, R: Rng + ?Sized>(
    model: &E,
    cal: &DiagonalCovariance,
    n: usize,
    rng: &mut R,
) -> Result<NormalizationRecord> {
    if n == 0 {
        return Err(Error::param("calibration needs at least one sample"));
    }
    if cal.len() != model.dim() {
        return Err(Error::dim("calibration covariance differs from model dimension"));
    }
    let threshold = LARGE_REGIME_FRACTION * cal.bounds().max;
    if cal.phi().iter().any(|&p| p < threshold) {
        return Err(Error::Calibration(format!(
            "calibration covariance must be at least {threshold} in every coordinate"
        )));
    }
    let d = cal.len() as f64;
    let entropy = 0.5 * (d * (2.0 * PI * std::f64::consts::E).ln() + cal.logdet());
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let v: Vec<f64> = (0..cal.len()).map(|_| StandardNormal.sample(rng)).collect();
        let y = cal.apply_sqrt(&v)?;
        let u = model.energy(&y, cal)?;
        if !u.is_finite() {
            return Err(Error::Calibration("non-finite energy during calibration".into()));
        }
        let c = u - entropy;
        sum += c;
        sum_sq += c * c;
    }
    let nf = n as f64;
    let offset = sum / nf;
    let stderr = if n > 1 {
        ((sum_sq - nf * offset * offset).max(0.0) / (nf - 1.0) / nf).sqrt()
    } else {
        // Spread of a Gaussian energy around its entropy.
        (d / 2.0).sqrt()
    };
    Ok(NormalizationRecord {
        offset,
        calibration: cal.clone(),
        samples: n,
        stderr: stderr.max(f64::MIN_POSITIVE),
    })
}

/// `log p(y | Sigma) = -(U(y, Sigma) - offset)`.
pub fn log_density<E: Energy + ?Sized>(
    model: &E,
    record: &NormalizationRecord,
    y: &[f64],
    cov: &DiagonalCovariance,
) -> Result<f64> {
    Ok(record.offset - model.energy(y, cov)?)
}

/// Log-density at the covariance floor.
pub fn log_prior<E: Energy + ?Sized>(model: &E, record: &NormalizationRecord, x: &[f64]) -> Result<f64> {
    let cal = &record.calibration;
    let floor = DiagonalCovariance::floor(cal.domain(), cal.shape(), cal.bounds());
    log_density(model, record, x, &floor)
}

/// `log N(y; x, Sigma)`.
pub fn log_likelihood(x: &[f64], y: &[f64], cov: &DiagonalCovariance) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim("x and y differ in length"));
    }
    let r: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    let d = y.len() as f64;
    Ok(-0.5 * (cov.mahalanobis_sq(&r)? + cov.logdet() + d * (2.0 * PI).ln()))
}

/// Bayes' rule: prior plus likelihood minus evidence.
pub fn log_posterior<E: Energy + ?Sized>(
    model: &E,
    record: &NormalizationRecord,
    x: &[f64],
    y: &[f64],
    meas: &DiagonalCovariance,
) -> Result<f64> {
    Ok(log_prior(model, record, x)? + log_likelihood(x, y, meas)? - log_density(model, record, y, meas)?)
}

/// Scores every candidate covariance and returns the maximizer (lowest
/// index on ties) with the full table.
pub fn blind_estimate<E: Energy + ?Sized>(
    model: &E,
    record: &NormalizationRecord,
    y: &[f64],
    candidates: &[DiagonalCovariance],
) -> Result<(usize, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(Error::param("no blind-estimation candidates"));
    }
    let scores = candidates
        .iter()
        .map(|c| {
            if c.len() != y.len() {
                return Err(Error::dim("candidate differs from measurement dimension"));
            }
            log_density(model, record, y, c)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] || (scores[best].is_nan() && !s.is_nan()) {
            best = i;
        }
    }
    Ok((best, scores))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlindRow {
    pub candidate_id: usize,
    pub param1: f64,
    pub param2: f64,
    pub log_density: f64,
}

pub const BLIND_HEADER: &str = "candidate_id,param1,param2,log_density";

pub fn write_blind_csv<W: Write>(mut w: W, rows: &[BlindRow]) -> std::io::Result<()> {
    writeln!(w, "{BLIND_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.candidate_id, r.param1, r.param2, r.log_density)?;
    }
    Ok(())
}
