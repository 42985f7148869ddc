//! Self-convergence study: errors of coarse runs against a fine-step
//! reference and a least-squares rate fit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::error_norms::{error_norms, ErrorReport};
use crate::error::{Error, Result};
use crate::spatial::ProblemInstance;
use crate::stepper::{advance_trajectory, SchemeConfig, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlopeFit {
    Fitted { slope: f64, intercept: f64 },
    /// Some error is zero or non-finite, or fewer than two points.
    Degenerate { reason: String },
}

impl SlopeFit {
    pub fn slope(&self) -> Option<f64> {
        match self {
            SlopeFit::Fitted { slope, .. } => Some(*slope),
            SlopeFit::Degenerate { .. } => None,
        }
    }
}

/// Least-squares fit of `log err = slope log h + intercept`.
pub fn fit_slope(hs: &[f64], errors: &[f64]) -> SlopeFit {
    if hs.len() != errors.len() || hs.len() < 2 {
        return SlopeFit::Degenerate {
            reason: format!("{} step sizes for {} errors", hs.len(), errors.len()),
        };
    }
    if let Some(e) = errors.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return SlopeFit::Degenerate {
            reason: format!("error value {e} has no logarithm"),
        };
    }
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return SlopeFit::Degenerate {
            reason: "all step sizes equal".into(),
        };
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    SlopeFit::Fitted {
        slope,
        intercept: my - slope * mx,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub steps: usize,
    pub h: f64,
    pub errors: ErrorReport,
    /// `composite / h^{1/2}`
    pub m_h: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub rows: Vec<RateRow>,
    pub fit: SlopeFit,
    pub reference_steps: usize,
    pub runs: Vec<Trajectory>,
    pub reference: Trajectory,
}

impl ConvergenceStudy {
    /// `max M(h) / min M(h)` over the sweep.
    pub fn m_spread(&self) -> f64 {
        let ms: Vec<f64> = self.rows.iter().map(|r| r.m_h).collect();
        let max = ms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = ms.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }

    /// Largest growth `M(h_fine) / M(h_coarse)` over all pairs; values at or
    /// below one mean `M` never increases as `h` shrinks.
    pub fn m_growth(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, coarse) in self.rows.iter().enumerate() {
            for fine in &self.rows[i + 1..] {
                let (c, f) = if fine.h < coarse.h { (coarse, fine) } else { (fine, coarse) };
                worst = worst.max(f.m_h / c.m_h);
            }
        }
        worst
    }
}

/// Runs every `N` in `steps` and the reference `n_ref` (in parallel) with the
/// tolerances of `template`, and fits the composite error against `h`.
pub fn convergence_study(
    instance: &ProblemInstance,
    template: &SchemeConfig,
    steps: &[usize],
    n_ref: usize,
) -> Result<ConvergenceStudy> {
    if steps.is_empty() {
        return Err(Error::Config("empty step list".into()));
    }
    if let Some(n) = steps.iter().find(|&&n| n == 0 || !n_ref.is_multiple_of(n)) {
        return Err(Error::Config(format!("{n} steps does not divide the reference {n_ref}")));
    }
    let mut all: Vec<usize> = steps.to_vec();
    all.push(n_ref);
    let mut trajectories = all
        .par_iter()
        .map(|&n| {
            let config = SchemeConfig {
                steps: n,
                ..template.clone()
            };
            advance_trajectory(instance, &config)
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = trajectories.pop().expect("reference run");
    let rows = trajectories
        .par_iter()
        .map(|traj| {
            let errors = error_norms(traj, &reference)?;
            Ok(RateRow {
                steps: traj.steps(),
                h: traj.h(),
                m_h: errors.composite / traj.h().sqrt(),
                errors,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.errors.composite).collect();
    Ok(ConvergenceStudy {
        fit: fit_slope(&hs, &errs),
        rows,
        reference_steps: n_ref,
        runs: trajectories,
        reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_core::{LipschitzPerturbation, NonlinearPotential};
    use crate::spatial::{zero_source, Grid};

    #[test]
    fn slope_of_power_law() {
        let hs = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = hs.iter().map(|h: &f64| 3.0 * h.powf(0.5)).collect();
        let fit = fit_slope(&hs, &errs);
        assert!((fit.slope().unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(fit_slope(&hs, &[1.0, 0.0, 1.0]), SlopeFit::Degenerate { .. }));
        assert!(matches!(fit_slope(&hs[..1], &errs[..1]), SlopeFit::Degenerate { .. }));
    }

    #[test]
    fn zero_data_gives_degenerate_fit() {
        let g = Grid::line(9, 1.0).unwrap();
        let z = vec![0.0; 9];
        let inst = ProblemInstance::p1(
            g,
            NonlinearPotential::cubic(1.0),
            LipschitzPerturbation::affine(0.0, -1.0),
            z.clone(),
            z.clone(),
            z,
            zero_source(9),
        )
        .unwrap();
        let cfg = SchemeConfig::for_instance(&inst, 1.0, 4);
        let study = convergence_study(&inst, &cfg, &[4, 8], 32).unwrap();
        assert!(matches!(study.fit, SlopeFit::Degenerate { .. }));
        assert!(study.rows.iter().all(|r| r.errors.composite == 0.0));
        assert!(convergence_study(&inst, &cfg, &[3], 32).is_err());
    }
}
