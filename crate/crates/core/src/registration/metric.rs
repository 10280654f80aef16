//! Similarity scoring between paired intensity samples. Every metric reduces
//! the same co-moment accumulator, so sample collection happens once per
//! evaluation regardless of which strategy is active. Lower is always better.

use crate::error::{Error, Result};

/// Running co-moments of (fixed, moving) intensity pairs. Plain sums in f64
/// stay exact far beyond volume-scale sample counts and HU magnitudes.
#[derive(Debug, Clone, Copy, Default)]
pub struct SampleMoments {
    n: f64,
    sum_f: f64,
    sum_m: f64,
    sum_ff: f64,
    sum_mm: f64,
    sum_fm: f64,
}

impl SampleMoments {
    #[inline]
    pub fn push(&mut self, fixed: f64, moving: f64) {
        self.n += 1.0;
        self.sum_f += fixed;
        self.sum_m += moving;
        self.sum_ff += fixed * fixed;
        self.sum_mm += moving * moving;
        self.sum_fm += fixed * moving;
    }

    pub fn merge(&mut self, other: &SampleMoments) {
        self.n += other.n;
        self.sum_f += other.sum_f;
        self.sum_m += other.sum_m;
        self.sum_ff += other.sum_ff;
        self.sum_mm += other.sum_mm;
        self.sum_fm += other.sum_fm;
    }

    pub fn count(&self) -> usize {
        self.n as usize
    }
}

/// Similarity strategy selected by name at runtime; see [`metric_from_name`].
pub trait SimilarityMetric: Send + Sync {
    fn name(&self) -> &'static str;

    /// Reduce accumulated moments to a score; lower is better.
    fn score(&self, moments: &SampleMoments) -> f64;
}

/// Mean squared intensity difference. Zero only when samples agree exactly.
pub struct Ssd;

/// Negative Pearson correlation: -1 at perfect linear agreement, invariant
/// to affine intensity maps. A constant image has no defined correlation and
/// scores 0.
pub struct Ncc;

impl SimilarityMetric for Ssd {
    fn name(&self) -> &'static str {
        "ssd"
    }

    fn score(&self, m: &SampleMoments) -> f64 {
        if m.n == 0.0 {
            return f64::INFINITY;
        }
        (m.sum_ff - 2.0 * m.sum_fm + m.sum_mm) / m.n
    }
}

impl SimilarityMetric for Ncc {
    fn name(&self) -> &'static str {
        "ncc"
    }

    fn score(&self, m: &SampleMoments) -> f64 {
        if m.n == 0.0 {
            return f64::INFINITY;
        }
        let mean_f = m.sum_f / m.n;
        let mean_m = m.sum_m / m.n;
        let var_f = m.sum_ff / m.n - mean_f * mean_f;
        let var_m = m.sum_mm / m.n - mean_m * mean_m;
        if var_f <= 1e-12 || var_m <= 1e-12 {
            return 0.0;
        }
        let cov = m.sum_fm / m.n - mean_f * mean_m;
        -(cov / (var_f.sqrt() * var_m.sqrt())).clamp(-1.0, 1.0)
    }
}

/// Look up a metric by its registered name.
pub fn metric_from_name(name: &str) -> Result<Box<dyn SimilarityMetric>> {
    match name {
        "ssd" => Ok(Box::new(Ssd)),
        "ncc" => Ok(Box::new(Ncc)),
        other => Err(Error::InvalidParameter(format!(
            "unknown similarity metric '{other}' (available: ssd, ncc)"
        ))),
    }
}

/// Names accepted by [`metric_from_name`].
pub fn metric_names() -> &'static [&'static str] {
    &["ssd", "ncc"]
}
