//! Temporal smoothing of the root distance with a sliding-window polynomial
//! fit, one window per hand.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::hand::Handedness;

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("need at least {needed} points for a degree-{degree} fit, got {got}")]
    TooFewPoints { needed: usize, got: usize, degree: usize },
    #[error("sample times must be distinct")]
    DuplicateTimes,
    #[error("times and values differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite sample")]
    NonFinite,
    #[error("least-squares solve failed")]
    Singular,
    #[error("frame {frame} does not follow the last frame {last}")]
    OutOfOrder { frame: i64, last: i64 },
    #[error("degree {degree} must be below the window capacity {capacity}")]
    InvalidWindow { degree: usize, capacity: usize },
}

/// Polynomial in a shifted and scaled variable `s = (t - center) / scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct CenteredPolynomial {
    pub center: f64,
    pub scale: f64,
    /// Ascending powers of `s`.
    pub coeffs: Vec<f64>,
}

impl CenteredPolynomial {
    pub fn eval(&self, t: f64) -> f64 {
        let s = (t - self.center) / self.scale;
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    /// Coefficients in ascending powers of `t` itself.
    pub fn raw_coefficients(&self) -> Vec<f64> {
        let n = self.coeffs.len();
        let mut out = vec![0.0; n];
        // sum_k a_k (t - c)^k / h^k, expanded binomially
        for (k, &a) in self.coeffs.iter().enumerate() {
            let factor = a / self.scale.powi(k as i32);
            let mut binom = 1.0;
            for i in 0..=k {
                // term: C(k, i) t^i (-c)^(k - i)
                out[i] += factor * binom * (-self.center).powi((k - i) as i32);
                binom = binom * (k - i) as f64 / (i + 1) as f64;
            }
        }
        out
    }
}

/// Least-squares polynomial fit in centred coordinates (SVD solve of the
/// Vandermonde system).
pub fn polyfit_centered(ts: &[f64], ys: &[f64], degree: usize) -> Result<CenteredPolynomial, TrackError> {
    if ts.len() != ys.len() {
        return Err(TrackError::LengthMismatch(ts.len(), ys.len()));
    }
    if ts.len() < degree + 1 {
        return Err(TrackError::TooFewPoints {
            needed: degree + 1,
            got: ts.len(),
            degree,
        });
    }
    if ts.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(TrackError::NonFinite);
    }
    let mut sorted = ts.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(TrackError::DuplicateTimes);
    }

    let center = ts.iter().sum::<f64>() / ts.len() as f64;
    let spread = ts.iter().map(|t| (t - center).abs()).fold(0.0, f64::max);
    let scale = if spread > 0.0 { spread } else { 1.0 };
    let vandermonde = DMatrix::from_fn(ts.len(), degree + 1, |i, k| ((ts[i] - center) / scale).powi(k as i32));
    let rhs = DVector::from_column_slice(ys);
    let svd = vandermonde.svd(true, true);
    let coeffs = svd.solve(&rhs, 1e-14).map_err(|_| TrackError::Singular)?;
    Ok(CenteredPolynomial {
        center,
        scale,
        coeffs: coeffs.iter().copied().collect(),
    })
}

/// Least-squares polynomial coefficients, ascending powers of `t`.
pub fn polyfit(ts: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>, TrackError> {
    polyfit_centered(ts, ys, degree).map(|p| p.raw_coefficients())
}

/// Whether the current raw sample takes part in its own fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FitMode {
    /// Fit the window including the new sample and evaluate at its frame.
    #[default]
    Smooth,
    /// Fit only the previous samples and extrapolate to the new frame.
    Extrapolate,
}

/// Per-hand sliding window of `(frame, r)` samples.
#[derive(Clone, Debug)]
pub struct TrackState {
    side: Handedness,
    capacity: usize,
    degree: usize,
    mode: FitMode,
    history: VecDeque<(i64, f64)>,
}

impl TrackState {
    pub const DEFAULT_CAPACITY: usize = 5;
    pub const DEFAULT_DEGREE: usize = 2;

    pub fn new(side: Handedness, capacity: usize, degree: usize, mode: FitMode) -> Result<Self, TrackError> {
        if degree >= capacity {
            return Err(TrackError::InvalidWindow { degree, capacity });
        }
        Ok(TrackState {
            side,
            capacity,
            degree,
            mode,
            history: VecDeque::with_capacity(capacity),
        })
    }

    pub fn with_defaults(side: Handedness) -> Self {
        TrackState::new(side, Self::DEFAULT_CAPACITY, Self::DEFAULT_DEGREE, FitMode::Smooth)
            .expect("default window is valid")
    }

    pub fn side(&self) -> Handedness {
        self.side
    }

    pub fn history(&self) -> impl Iterator<Item = &(i64, f64)> {
        self.history.iter()
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    /// Records `r_raw` at `frame` and returns the smoothed radius.
    ///
    /// Until the window holds more than `degree + 1` samples used by the fit,
    /// the raw value is returned unchanged.
    pub fn push_and_estimate(&mut self, frame: i64, r_raw: f64) -> Result<f64, TrackError> {
        if !r_raw.is_finite() {
            return Err(TrackError::NonFinite);
        }
        if let Some(&(last, _)) = self.history.back() {
            if frame <= last {
                return Err(TrackError::OutOfOrder { frame, last });
            }
        }
        let previous: Vec<(i64, f64)> = self.history.iter().copied().collect();
        self.history.push_back((frame, r_raw));
        while self.history.len() > self.capacity {
            self.history.pop_front();
        }

        let window: Vec<(i64, f64)> = match self.mode {
            FitMode::Smooth => self.history.iter().copied().collect(),
            FitMode::Extrapolate => {
                let keep = previous.len().min(self.capacity);
                previous[previous.len() - keep..].to_vec()
            }
        };
        if window.len() <= self.degree + 1 {
            return Ok(r_raw);
        }
        let ts: Vec<f64> = window.iter().map(|s| s.0 as f64).collect();
        let ys: Vec<f64> = window.iter().map(|s| s.1).collect();
        let estimate = polyfit_centered(&ts, &ys, self.degree)?.eval(frame as f64);
        Ok(if estimate.is_finite() { estimate } else { r_raw })
    }
}
