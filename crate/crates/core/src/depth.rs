//! Per-pixel depth errors, threshold inlier masks and the standard depth
//! metric suite (Abs Rel, RMSE, δ < 1.25^k).
//!
//! A pixel is evaluated iff its ground-truth depth is valid and lies within
//! `[min_depth, max_depth]`. The prediction is not clamped; an invalid
//! predicted depth yields an abs-rel error of exactly 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DepthMap, InlierBoundary, PdcqConfig};

/// Absolute relative error per pixel with its validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthErrors {
    width: usize,
    height: usize,
    errors: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthErrors {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Error per pixel; meaningless where `valid()` is false (stored as 0).
    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

fn check_dims(pred: &DepthMap, gt: &DepthMap) -> Result<()> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            found: pred.dims(),
        });
    }
    Ok(())
}

#[inline]
fn in_range(gt: f64, config: &PdcqConfig) -> bool {
    DepthMap::is_valid(gt) && gt >= config.min_depth && gt <= config.max_depth
}

pub fn abs_rel_map(pred: &DepthMap, gt: &DepthMap, config: &PdcqConfig) -> Result<DepthErrors> {
    check_dims(pred, gt)?;
    let (mut errors, mut valid) = (Vec::with_capacity(gt.values().len()), Vec::with_capacity(gt.values().len()));
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        if in_range(g, config) {
            errors.push((p - g).abs() / g);
            valid.push(true);
        } else {
            errors.push(0.0);
            valid.push(false);
        }
    }
    Ok(DepthErrors {
        width: gt.width(),
        height: gt.height(),
        errors,
        valid,
    })
}

#[inline]
pub(crate) fn passes(error: f64, lambda: f64, boundary: InlierBoundary) -> bool {
    match boundary {
        InlierBoundary::Inclusive => error <= lambda,
        InlierBoundary::Exclusive => error < lambda,
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidLambda(lambda))
    }
}

/// `true` where the pixel survives threshold `lambda` (`error <= lambda`).
/// Pixels without usable ground-truth depth always survive.
pub fn inlier_mask(errors: &DepthErrors, lambda: f64) -> Result<Vec<bool>> {
    inlier_mask_with(errors, lambda, InlierBoundary::Inclusive)
}

pub fn inlier_mask_with(
    errors: &DepthErrors,
    lambda: f64,
    boundary: InlierBoundary,
) -> Result<Vec<bool>> {
    check_lambda(lambda)?;
    Ok(errors
        .errors
        .iter()
        .zip(&errors.valid)
        .map(|(&e, &v)| !v || passes(e, lambda, boundary))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub rmse: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub valid_pixel_count: u64,
}

impl DepthMetrics {
    /// Result for a frame with no evaluable pixel. All fields are zero.
    pub const EMPTY: DepthMetrics = DepthMetrics {
        abs_rel: 0.0,
        rmse: 0.0,
        delta1: 0.0,
        delta2: 0.0,
        delta3: 0.0,
        valid_pixel_count: 0,
    };

    pub fn is_empty(&self) -> bool {
        self.valid_pixel_count == 0
    }
}

pub const DELTA_BASE: f64 = 1.25;

pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap, config: &PdcqConfig) -> Result<DepthMetrics> {
    check_dims(pred, gt)?;
    let thresholds = [DELTA_BASE, DELTA_BASE.powi(2), DELTA_BASE.powi(3)];
    let mut n = 0u64;
    let (mut abs_rel, mut sq) = (0.0f64, 0.0f64);
    let mut within = [0u64; 3];
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        if !in_range(g, config) {
            continue;
        }
        n += 1;
        let diff = p - g;
        abs_rel += diff.abs() / g;
        sq += diff * diff;
        let ratio = (p / g).max(g / p);
        for (count, &t) in within.iter_mut().zip(&thresholds) {
            *count += u64::from(ratio < t);
        }
    }
    if n == 0 {
        return Ok(DepthMetrics::EMPTY);
    }
    let nf = n as f64;
    Ok(DepthMetrics {
        abs_rel: abs_rel / nf,
        rmse: (sq / nf).sqrt(),
        delta1: within[0] as f64 / nf,
        delta2: within[1] as f64 / nf,
        delta3: within[2] as f64 / nf,
        valid_pixel_count: n,
    })
}
