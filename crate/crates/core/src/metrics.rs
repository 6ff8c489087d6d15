use serde::{Deserialize, Serialize};

/// One named scalar produced by an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub experiment_id: String,
    pub epsilon: f64,
    pub seed: u64,
    pub t: f64,
    pub metric: String,
    pub value: f64,
}

impl MetricsRecord {
    pub fn new(epsilon: f64, seed: u64, t: f64, metric: &str, value: f64) -> Self {
        MetricsRecord { experiment_id: String::new(), epsilon, seed, t, metric: metric.to_string(), value }
    }

    pub fn with_experiment(mut self, id: &str) -> Self {
        self.experiment_id = id.to_string();
        self
    }
}

/// Least-squares slope of `ys` against `xs`; `None` with fewer than two
/// distinct abscissae.
pub fn regression_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs[..n].iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs[..n].iter().zip(&ys[..n]).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}
