use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::BenchError;

pub const DEFAULT_CONFIDENCE: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    pub n: usize,
}

impl ValidationSummary {
    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

/// Student-t confidence interval for the population mean of `samples`.
pub fn validate(samples: &[f64], confidence: f64) -> Result<ValidationSummary, BenchError> {
    let n = samples.len();
    if n < 2 {
        return Err(BenchError::Invalid(format!("need at least 2 samples, got {n}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(BenchError::Invalid(format!("confidence {confidence} not in (0, 1)")));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(BenchError::Invalid("samples must be finite".into()));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let t = StudentsT::new(0.0, 1.0, nf - 1.0)
        .expect("degrees of freedom are positive")
        .inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let half = t * var.sqrt() / nf.sqrt();
    Ok(ValidationSummary {
        mean,
        ci_low: mean - half,
        ci_high: mean + half,
        confidence,
        n,
    })
}
