//! Piecewise-linear scalar samples over time.

#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl SampledPath {
    /// `times` must be strictly increasing and the same length as `values`.
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(times.len(), values.len(), "sample length mismatch");
        assert!(!times.is_empty(), "empty sample path");
        debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
        Self { times, values }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Linear interpolation; held constant outside the sampled range.
    pub fn eval(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.values, t)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            times: self.times.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Piecewise-linear interpolation through `(times[k], values[k])`, clamped
/// to the end values outside the sampled range.
pub fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let k = times.partition_point(|&s| s <= t);
    if k == 0 {
        return values[0];
    }
    if k >= times.len() {
        return values[values.len() - 1];
    }
    let (ta, tb) = (times[k - 1], times[k]);
    let w = (t - ta) / (tb - ta);
    values[k - 1] + w * (values[k] - values[k - 1])
}
