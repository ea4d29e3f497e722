//! Adjusted regression of the observed outcome on treatment and covariates,
//! optionally with treatment-by-covariate interactions.

use crate::datagen::ObservedData;
use crate::error::{Error, Result};

use super::lstsq::{self, ColMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub treatment: f64,
    /// One coefficient per covariate, in original units.
    pub covariates: Vec<f64>,
    /// Treatment-by-covariate coefficients, in original units.
    pub interactions: Option<Vec<f64>>,
    /// Rank of the (standardized) design matrix.
    pub rank: usize,
    pub design_width: usize,
    pub minimal_norm: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearFitOptions {
    pub interaction: bool,
    /// Center and scale covariate columns before solving. Coefficients are
    /// reported in original units either way.
    pub standardize: bool,
}

impl LinearFitOptions {
    pub fn plain() -> Self {
        Self {
            interaction: false,
            standardize: true,
        }
    }

    pub fn with_interaction() -> Self {
        Self {
            interaction: true,
            standardize: true,
        }
    }
}

pub fn fit_adjusted(data: &ObservedData, opts: LinearFitOptions) -> Result<LinearModel> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Data(format!("adjusted regression needs at least 2 records, got {n}")));
    }
    let treated = data.t.iter().filter(|&&t| t != 0.0).count();
    let mut warnings = Vec::new();
    if treated == 0 || treated == n {
        let which = if treated == 0 { "control" } else { "treated" };
        if opts.interaction {
            warnings.push(format!("all records are {which}; interaction columns are collinear"));
        } else {
            return Err(Error::Data(format!(
                "all records are {which}; the treatment coefficient is not identified"
            )));
        }
    }

    let d = data.dim();
    // Column statistics; constant columns are left out of the design.
    let mut mean = vec![0.0; d];
    for row in data.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut scale = vec![0.0; d];
    for row in data.rows() {
        for j in 0..d {
            let z = row[j] - mean[j];
            scale[j] += z * z;
        }
    }
    let mut active = Vec::new();
    for j in 0..d {
        let sd = (scale[j] / n as f64).sqrt();
        let varies = data.rows().any(|r| r[j] != data.row(0)[j]);
        scale[j] = if opts.standardize { sd } else { 1.0 };
        if !opts.standardize {
            mean[j] = 0.0;
        }
        if varies {
            active.push(j);
        }
    }

    let blocks = if opts.interaction { 2 } else { 1 };
    let width = 2 + blocks * active.len();
    let mut design = ColMatrix::zeros(n, width);
    design.col_mut(0).fill(1.0);
    design.col_mut(1).copy_from_slice(&data.t);
    for (k, &j) in active.iter().enumerate() {
        for i in 0..n {
            let z = (data.row(i)[j] - mean[j]) / scale[j];
            design.data[(2 + k) * n + i] = z;
            if opts.interaction {
                design.data[(2 + active.len() + k) * n + i] = data.t[i] * z;
            }
        }
    }
    let sol = lstsq::solve(&design, &data.y)?;
    let beta = &sol.x;

    let mut covariates = vec![0.0; d];
    let mut intercept = beta[0];
    let mut treatment = beta[1];
    let mut interactions = opts.interaction.then(|| vec![0.0; d]);
    for (k, &j) in active.iter().enumerate() {
        let b = beta[2 + k];
        covariates[j] = b / scale[j];
        intercept -= b * mean[j] / scale[j];
        if let Some(inter) = interactions.as_mut() {
            let g = beta[2 + active.len() + k];
            inter[j] = g / scale[j];
            treatment -= g * mean[j] / scale[j];
        }
    }
    if sol.minimal_norm {
        warnings.push(format!(
            "design of width {width} has rank {}; using the minimal-norm solution",
            sol.rank
        ));
    }
    Ok(LinearModel {
        intercept,
        treatment,
        covariates,
        interactions,
        rank: sol.rank,
        design_width: width,
        minimal_norm: sol.minimal_norm,
        warnings,
    })
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.covariates.len()
    }

    /// `treatment + xᵀ interactions`, or the constant treatment coefficient
    /// for the plain model.
    pub fn predict_cate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Data(format!(
                "covariate of length {} for a model of dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(match &self.interactions {
            None => self.treatment,
            Some(g) => self.treatment + g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>(),
        })
    }

    pub fn predict_outcome(&self, x: &[f64], t: f64) -> Result<f64> {
        let base = self.intercept + self.covariates.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        Ok(base + t * self.predict_cate(x)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(rows: &[&[f64]], t: &[f64], y: &[f64]) -> ObservedData {
        let d = rows[0].len();
        ObservedData::new(vec![d], rows.concat(), t.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn recovers_exact_linear_outcome() {
        // Y = 2 + 3T + x
        let xs = [0.5, -1.0, 2.0, 3.5, 0.0, 1.25];
        let ts = [0., 1., 0., 1., 1., 0.];
        let ys: Vec<f64> = xs.iter().zip(&ts).map(|(x, t)| 2.0 + 3.0 * t + x).collect();
        let rows: Vec<&[f64]> = xs.iter().map(std::slice::from_ref).collect();
        for standardize in [true, false] {
            let m = fit_adjusted(
                &data(&rows, &ts, &ys),
                LinearFitOptions {
                    interaction: false,
                    standardize,
                },
            )
            .unwrap();
            assert!(!m.minimal_norm);
            assert!((m.intercept - 2.0).abs() < 1e-8);
            assert!((m.treatment - 3.0).abs() < 1e-8);
            assert!((m.covariates[0] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn plain_effect_is_constant() {
        let rows: Vec<&[f64]> = vec![&[1.0, 2.0], &[0.0, 1.0], &[3.0, -1.0], &[2.0, 2.5], &[1.5, 0.5]];
        let m = fit_adjusted(
            &data(&rows, &[0., 1., 0., 1., 1.], &[1., 4., 2., 6., 3.]),
            LinearFitOptions::plain(),
        )
        .unwrap();
        assert_eq!(m.predict_cate(&[0.0, 0.0]).unwrap(), m.predict_cate(&[10.0, -3.0]).unwrap());
        assert!(m.predict_cate(&[1.0]).is_err());
    }

    #[test]
    fn zero_interactions_reduce_to_treatment_coefficient() {
        let m = LinearModel {
            intercept: 1.0,
            treatment: 2.5,
            covariates: vec![0.3, 0.1],
            interactions: Some(vec![0.0, 0.0]),
            rank: 6,
            design_width: 6,
            minimal_norm: false,
            warnings: vec![],
        };
        assert_eq!(m.predict_cate(&[4.0, -7.0]).unwrap(), 2.5);
    }

    #[test]
    fn single_arm_errors_or_warns() {
        let rows: Vec<&[f64]> = vec![&[1.0], &[2.0], &[3.0]];
        let d = data(&rows, &[1., 1., 1.], &[1., 2., 3.]);
        assert!(fit_adjusted(&d, LinearFitOptions::plain()).is_err());
        let m = fit_adjusted(&d, LinearFitOptions::with_interaction()).unwrap();
        assert!(m.minimal_norm);
        assert!(m.warnings.iter().any(|w| w.contains("collinear")));
        assert!(fit_adjusted(&data(&[&[1.0]], &[0.], &[1.]), LinearFitOptions::plain()).is_err());
    }
}
