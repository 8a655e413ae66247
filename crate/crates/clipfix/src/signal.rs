//! Streaming, fixed-memory signal primitives shared by all estimators:
//! triangular (Bartlett) smoothing, cumulative mean/variance, and guarded
//! finite differencing. No allocation after construction.

use thiserror::Error;

/// Default floor on the reported standard deviation of [`CumulativeStats`].
pub const DEFAULT_MIN_SIGMA: f64 = 1e-4;
/// Default denominator guard for [`guarded_ratio_diff`].
pub const DEFAULT_DEN_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SignalError {
    #[error("smoothing window length must be at least 1")]
    ZeroWindow,
}

/// Bartlett coefficient before normalization: `1 - |k - (L-1)/2| / ((L-1)/2)`.
///
/// Lengths 1 and 2 degenerate to uniform weights (the formula is zero or
/// undefined there).
fn bartlett_raw(k: usize, len: usize) -> f64 {
    if len <= 2 {
        return 1.0;
    }
    let mid = (len - 1) as f64 / 2.0;
    1.0 - ((k as f64 - mid) / mid).abs()
}

/// Triangular weighted moving average over the most recent samples.
///
/// Until the buffer fills, the weights are renormalized over the available
/// samples instead of zero-padding, so the output is defined from the first
/// sample onward without a startup bias toward zero.
#[derive(Debug, Clone)]
pub struct SmoothingWindow {
    weights: Vec<f64>,
    buffer: Vec<f64>,
    head: usize,
    filled: usize,
}

impl SmoothingWindow {
    pub fn new(len: usize) -> Result<Self, SignalError> {
        if len == 0 {
            return Err(SignalError::ZeroWindow);
        }
        let mut weights: Vec<f64> = (0..len).map(|k| bartlett_raw(k, len)).collect();
        let sum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= sum;
        }
        Ok(Self {
            weights,
            buffer: vec![0.0; len],
            head: 0,
            filled: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Full-length normalized coefficients, oldest sample first.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Samples currently buffered.
    pub fn filled(&self) -> usize {
        self.filled
    }

    /// Advance the window by one raw sample and return the smoothed value.
    pub fn smooth(&mut self, raw: f64) -> f64 {
        let len = self.buffer.len();
        self.buffer[self.head] = raw;
        self.head = (self.head + 1) % len;
        if self.filled < len {
            self.filled += 1;
        }
        if self.filled == len {
            // ring index of the oldest sample is `head` once full
            let mut acc = 0.0;
            for (k, w) in self.weights.iter().enumerate() {
                acc += w * self.buffer[(self.head + k) % len];
            }
            acc
        } else {
            // partial window: renormalize over available samples
            let n = self.filled;
            let mut acc = 0.0;
            let mut wsum = 0.0;
            let start = (self.head + len - n) % len;
            for k in 0..n {
                let w = bartlett_raw(k, n);
                acc += w * self.buffer[(start + k) % len];
                wsum += w;
            }
            acc / wsum
        }
    }
}

/// Welford-style running mean and sample variance with a sigma floor.
#[derive(Debug, Clone)]
pub struct CumulativeStats {
    count: u64,
    mean: f64,
    m2: f64,
    min_sigma: f64,
}

impl CumulativeStats {
    pub fn new(min_sigma: f64) -> Self {
        Self {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            min_sigma,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample standard deviation (n-1), floored at `min_sigma`.
    pub fn sigma(&self) -> f64 {
        if self.count > 1 {
            (self.m2 / (self.count - 1) as f64).sqrt().max(self.min_sigma)
        } else {
            self.min_sigma
        }
    }

    /// Absorb one value; returns (mean, sigma) over all values so far.
    pub fn update(&mut self, value: f64) -> (f64, f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
        (self.mean, self.sigma())
    }
}

impl Default for CumulativeStats {
    fn default() -> Self {
        Self::new(DEFAULT_MIN_SIGMA)
    }
}

/// Ratio of two same-span increments, or `None` when the denominator is too
/// small to be meaningful this tick (the consumer skips the update).
pub fn guarded_ratio_diff(df_num: f64, df_den: f64, den_epsilon: f64) -> Option<f64> {
    if df_den.abs() >= den_epsilon {
        Some(df_num / df_den)
    } else {
        None
    }
}
