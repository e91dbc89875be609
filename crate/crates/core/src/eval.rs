//! Relative reconstruction errors and test-set reports.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::ScenarioLabel;
use crate::image::Image;
use crate::recon::{weighted_ubp, WeightTensor};
use crate::train::PairSource;

/// Which ratio [`rel_error_with`] reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorNorm {
    /// `‖F̂ − F‖₂ / ‖F‖₂`
    #[default]
    Relative,
    /// `‖F̂ − F‖₂² / ‖F‖₂²`
    RelativeSquared,
}

/// `‖F̂ − F‖₂ / ‖F‖₂`.
pub fn rel_error(f_hat: &Image, f: &Image) -> Result<f64> {
    rel_error_with(f_hat, f, ErrorNorm::Relative)
}

pub fn rel_error_with(f_hat: &Image, f: &Image, norm: ErrorNorm) -> Result<f64> {
    f.check_same_grid(f_hat, "image comparison")?;
    let den: f64 = f.values().iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::Data("relative error is undefined for a zero reference".into()));
    }
    let num: f64 = f_hat
        .values()
        .iter()
        .zip(f.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(match norm {
        ErrorNorm::Relative => (num / den).sqrt(),
        ErrorNorm::RelativeSquared => num / den,
    })
}

/// Per-pixel `|F̂ − F|`.
pub fn diff_image(f_hat: &Image, f: &Image) -> Result<Image> {
    f.check_same_grid(f_hat, "image comparison")?;
    let mut out = f_hat.clone();
    out.values_mut()
        .zip_mut_with(f.values(), |a, b| *a = (*a - b).abs());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ubp,
    WeightedUbp,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ubp => "UBP",
            Method::WeightedUbp => "weighted-UBP",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleError {
    pub sample: String,
    pub ubp: f64,
    pub weighted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleFailure {
    pub sample: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scenario: ScenarioLabel,
    pub norm: ErrorNorm,
    /// Successful samples, in test-set order.
    pub samples: Vec<SampleError>,
    pub failures: Vec<SampleFailure>,
}

impl EvalReport {
    pub fn count(&self) -> usize {
        self.samples.len()
    }

    pub fn methods(&self) -> Vec<Method> {
        let weighted = self.samples.first().is_some_and(|s| s.weighted.is_some());
        if weighted {
            vec![Method::Ubp, Method::WeightedUbp]
        } else {
            vec![Method::Ubp]
        }
    }

    pub fn errors(&self, method: Method) -> Option<Vec<f64>> {
        self.samples
            .iter()
            .map(|s| match method {
                Method::Ubp => Some(s.ubp),
                Method::WeightedUbp => s.weighted,
            })
            .collect()
    }

    /// Arithmetic mean over the successful samples.
    pub fn mean(&self, method: Method) -> Option<f64> {
        let e = self.errors(method)?;
        if e.is_empty() {
            return None;
        }
        Some(e.iter().sum::<f64>() / e.len() as f64)
    }

    /// `scenario,method,sample,rel_error` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,method,sample,rel_error\n");
        self.append_csv_rows(&mut out);
        out
    }

    pub fn append_csv_rows(&self, out: &mut String) {
        for m in self.methods() {
            for s in &self.samples {
                let e = match m {
                    Method::Ubp => s.ubp,
                    Method::WeightedUbp => s.weighted.unwrap_or(f64::NAN),
                };
                let _ = writeln!(out, "{},{},{},{e:e}", self.scenario, m.as_str(), s.sample);
            }
        }
    }
}

/// Aligned plain-text table with one row per report.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut out = format!(
        "{:<18} {:>8} {:>10} {:>14}\n",
        "scenario", "samples", "UBP", "weighted-UBP"
    );
    for r in reports {
        let cell = |m| r.mean(m).map_or("-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(
            out,
            "{:<18} {:>8} {:>10} {:>14}",
            r.scenario.as_str(),
            r.count(),
            cell(Method::Ubp),
            cell(Method::WeightedUbp)
        );
        for f in &r.failures {
            let _ = writeln!(out, "  failed sample {}: {}", f.sample, f.reason);
        }
    }
    out
}

fn evaluate_one(
    weights: Option<&WeightTensor>,
    test: &dyn PairSource,
    index: usize,
    norm: ErrorNorm,
) -> Result<SampleError> {
    let pair = test.get(index)?;
    let ubp = rel_error_with(&pair.contrib.sum(), &pair.target, norm)?;
    let weighted = match weights {
        None => None,
        Some(w) => {
            let grid = pair.contrib.grid();
            if w.n_s() != pair.contrib.n_s() || w.grid().n() > grid.n() {
                return Err(Error::shape(
                    "weights vs test sample",
                    pair.contrib.values().shape(),
                    w.values().shape(),
                ));
            }
            let rec = weighted_ubp(&w.upsample(grid), &pair.contrib)?;
            Some(rel_error_with(&rec, &pair.target, norm)?)
        }
    };
    Ok(SampleError {
        sample: test.name(index),
        ubp,
        weighted,
    })
}

/// Reconstructs every test sample with the ordinary backprojection and,
/// when `weights` is given, with the weighted one. Failing samples are
/// listed in the report; the call fails only if every sample fails.
pub fn evaluate(
    weights: Option<&WeightTensor>,
    test: &dyn PairSource,
    scenario: ScenarioLabel,
    norm: ErrorNorm,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    let results: Vec<Result<SampleError>> = (0..test.len())
        .into_par_iter()
        .map(|i| evaluate_one(weights, test, i, norm))
        .collect();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    let mut last_error = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => {
                failures.push(SampleFailure {
                    sample: test.name(i),
                    reason: e.to_string(),
                });
                last_error = Some(e);
            }
        }
    }
    if samples.is_empty() {
        return Err(last_error.expect("nonempty test set"));
    }
    Ok(EvalReport {
        scenario,
        norm,
        samples,
        failures,
    })
}
