//! Differentiable black-box models and their input Jacobians.

mod analytic;
mod mlp;

pub use analytic::{AnalyticFn, Term};
pub use mlp::{train_mlp, Activation, InputEncoding, Mlp, MlpConfig};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RamError, Result};

const BLOCK_ROWS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlackBoxModel {
    Mlp(Mlp),
    Analytic(AnalyticFn),
}

/// `∂f/∂x_s` at every instance of a dataset, computed once and reused as a
/// lookup table by every heterogeneity evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianTable(pub Array2<f64>);

impl JacobianTable {
    pub fn column(&self, s: usize) -> ArrayView1<'_, f64> {
        self.0.column(s)
    }

    pub fn n_rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.0.ncols()
    }
}

impl BlackBoxModel {
    pub fn arity(&self) -> usize {
        match self {
            BlackBoxModel::Mlp(m) => m.arity(),
            BlackBoxModel::Analytic(f) => f.arity(),
        }
    }

    fn check_arity(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.arity() {
            return Err(RamError::ArityMismatch {
                expected: self.arity(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check_arity(&x)?;
        let blocks: Vec<Array1<f64>> = row_blocks(x.nrows())
            .into_par_iter()
            .map(|(a, b)| {
                let block = x.slice(s![a..b, ..]);
                match self {
                    BlackBoxModel::Mlp(m) => m.predict_block(block),
                    BlackBoxModel::Analytic(f) => block
                        .rows()
                        .into_iter()
                        .map(|r| f.value(r.as_slice().unwrap_or(&r.to_vec())))
                        .collect(),
                }
            })
            .collect();
        let views: Vec<ArrayView1<'_, f64>> = blocks.iter().map(|b| b.view()).collect();
        Ok(if views.is_empty() {
            Array1::zeros(0)
        } else {
            ndarray::concatenate(Axis(0), &views).expect("row blocks concatenate")
        })
    }

    /// Row `i`, column `s` is `∂f/∂x_s` at row `i`. For one-hot encoded
    /// categoricals this is the derivative along the active coordinate.
    pub fn jacobian(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_arity(&x)?;
        let blocks: Vec<Array2<f64>> = row_blocks(x.nrows())
            .into_par_iter()
            .map(|(a, b)| {
                let block = x.slice(s![a..b, ..]);
                match self {
                    BlackBoxModel::Mlp(m) => m.jacobian_block(block),
                    BlackBoxModel::Analytic(f) => {
                        let mut out = Array2::zeros((block.nrows(), block.ncols()));
                        let mut grad = vec![0.0; block.ncols()];
                        for (i, r) in block.rows().into_iter().enumerate() {
                            f.gradient(&r.to_vec(), &mut grad);
                            out.row_mut(i).assign(&ArrayView1::from(&grad));
                        }
                        out
                    }
                }
            })
            .collect();
        let views: Vec<ArrayView2<'_, f64>> = blocks.iter().map(|b| b.view()).collect();
        Ok(if views.is_empty() {
            Array2::zeros((0, x.ncols()))
        } else {
            ndarray::concatenate(Axis(0), &views).expect("row blocks concatenate")
        })
    }

    pub fn jacobian_table(&self, x: ArrayView2<'_, f64>) -> Result<JacobianTable> {
        self.jacobian(x).map(JacobianTable)
    }

    /// `f` with the differentiable coordinate of feature `s` moved by `delta`;
    /// `None` where no such coordinate exists (discrete inputs of analytic models).
    fn shifted(&self, row: &[f64], s: usize, delta: f64) -> Option<f64> {
        match self {
            BlackBoxModel::Mlp(m) => Some(m.predict_shifted(row, s, delta)),
            BlackBoxModel::Analytic(f) => {
                if f.categorical_inputs().contains(&s) {
                    return None;
                }
                let mut moved = row.to_vec();
                moved[s] += delta;
                Some(f.value(&moved))
            }
        }
    }
}

fn row_blocks(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .step_by(BLOCK_ROWS)
        .map(|a| (a, (a + BLOCK_ROWS).min(n)))
        .collect()
}

/// Max over entries of `|J - central difference| / (1 + |J|)`.
pub fn check_jacobian_fd(model: &BlackBoxModel, x: ArrayView2<'_, f64>, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(RamError::InvalidArgument(format!("step {h} must be positive")));
    }
    let jac = model.jacobian(x)?;
    let mut worst = 0.0f64;
    for (i, row) in x.rows().into_iter().enumerate() {
        let row = row.to_vec();
        for s in 0..row.len() {
            let (Some(up), Some(down)) = (model.shifted(&row, s, h), model.shifted(&row, s, -h))
            else {
                continue;
            };
            let fd = (up - down) / (2.0 * h);
            let j = jac[[i, s]];
            worst = worst.max((j - fd).abs() / (1.0 + j.abs()));
        }
    }
    Ok(worst)
}
