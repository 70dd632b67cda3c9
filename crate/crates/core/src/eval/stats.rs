use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

/// How a zero-variance difference sample was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Degenerate {
    /// Every difference is zero: p = 1.
    AllZero,
    /// Constant non-zero difference: p = 0 (limit of t → ∞).
    ConstantNonZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub n: usize,
    pub mean_diff: f64,
    pub t: f64,
    /// Two-sided.
    pub p_value: f64,
    pub degenerate: Option<Degenerate>,
}

/// Two-sided paired t-test on `a − b` with n − 1 degrees of freedom.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "paired t-test needs n >= 2, got {n}"
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if var == 0.0 {
        return Ok(if diffs.iter().all(|&d| d == 0.0) {
            TTest {
                n,
                mean_diff: 0.0,
                t: 0.0,
                p_value: 1.0,
                degenerate: Some(Degenerate::AllZero),
            }
        } else {
            TTest {
                n,
                mean_diff: mean,
                t: f64::INFINITY.copysign(mean),
                p_value: 0.0,
                degenerate: Some(Degenerate::ConstantNonZero),
            }
        });
    }
    let t = mean / (var / nf).sqrt();
    let dist = StudentsT::new(0.0, 1.0, nf - 1.0).map_err(|e| Error::Eval(e.to_string()))?;
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest {
        n,
        mean_diff: mean,
        t,
        p_value,
        degenerate: None,
    })
}
