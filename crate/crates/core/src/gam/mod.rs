//! Additive models over the extended feature space.
//!
//! Every (feature, region) pair becomes one extended feature that is active
//! only on the rows of its region. Shape functions are fitted by cyclic
//! gradient boosting of small histogram trees on the squared loss; the
//! optional second stage adds pairwise surfaces on the residuals. A plain
//! GAM is the same model with one region per feature.

mod binning;
mod export;
mod fit;
mod tree;

pub use binning::Binning;
pub use export::{shape_tables, write_shape_tables, ShapeTable};
pub use fit::{fit_gam, fit_ram, select_pairs, PairCandidate};

use ndarray::{s, Array1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackbox::BlackBoxModel;
use crate::data::{Dataset, FeatureMeta, Scaler};
use crate::error::{RamError, Result};
use crate::regions::{RegionConfig, RegionSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    /// Cyclic rounds over all main-effect components.
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub max_bins: usize,
    pub min_samples_leaf: usize,
    /// Components with fewer active rows stay at zero.
    pub min_component_rows: usize,
    pub pair_rounds: usize,
    pub max_pairs: usize,
    pub pair_bins: usize,
    /// Jointly active rows a pair needs to be considered.
    pub min_overlap: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            rounds: 500,
            learning_rate: 0.05,
            max_leaves: 8,
            max_bins: 256,
            min_samples_leaf: 2,
            min_component_rows: 20,
            pair_rounds: 200,
            max_pairs: 10,
            pair_bins: 16,
            min_overlap: 50,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RamError::InvalidArgument(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning rate must lie in (0, 1]");
        }
        if self.max_leaves < 1 {
            return bad("trees need at least one leaf");
        }
        if self.max_bins < 2 || self.pair_bins < 2 {
            return bad("at least two bins are needed");
        }
        Ok(())
    }
}

/// Extended feature `(source, region)` and its active rows in a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedFeature {
    pub source: usize,
    pub region: usize,
    pub mask: Vec<bool>,
}

impl ExtendedFeature {
    pub fn rows(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }
}

fn check_regionsets(n_features: usize, regionsets: &[RegionSet]) -> Result<()> {
    if regionsets.len() != n_features {
        return Err(RamError::ArityMismatch {
            expected: n_features,
            got: regionsets.len(),
        });
    }
    if let Some((s, _)) = regionsets.iter().enumerate().find(|(s, r)| r.feature != *s) {
        return Err(RamError::InvalidArgument(format!(
            "region set {s} belongs to feature {}",
            regionsets[s].feature
        )));
    }
    Ok(())
}

/// One extended feature per (feature, region), in feature-major order.
/// Fails unless every region set partitions the rows of `ds`.
pub fn build_extended_space(ds: &Dataset, regionsets: &[RegionSet]) -> Result<Vec<ExtendedFeature>> {
    check_regionsets(ds.n_features(), regionsets)?;
    let mut out = Vec::new();
    for rs in regionsets {
        rs.check_partition(ds.x.view())?;
        let assigned = rs.assign(ds.x.view());
        for t in 0..rs.n_regions() {
            out.push(ExtendedFeature {
                source: rs.feature,
                region: t,
                mask: assigned.iter().map(|&a| a == t).collect(),
            });
        }
    }
    Ok(out)
}

/// Shape function of one extended feature: `values[bin(x)] + offset`.
/// `values` average to zero over the component's training rows; `offset` is
/// the region's level relative to the other regions of the same feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFunction {
    pub source: usize,
    pub region: usize,
    pub binning: Binning,
    pub values: Vec<f64>,
    pub offset: f64,
    pub active_rows: usize,
}

impl ShapeFunction {
    pub fn eval(&self, v: f64) -> f64 {
        self.values[self.binning.bin(v)] + self.offset
    }
}

/// Pairwise surface on the rows where both members are active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSurface {
    /// `(source, region)` of each member.
    pub a: (usize, usize),
    pub b: (usize, usize),
    pub binning_a: Binning,
    pub binning_b: Binning,
    /// Row-major over `(bin_a, bin_b)`.
    pub values: Vec<f64>,
    pub active_rows: usize,
}

impl PairSurface {
    pub fn eval(&self, va: f64, vb: f64) -> f64 {
        self.values[self.binning_a.bin(va) * self.binning_b.n_bins() + self.binning_b.bin(vb)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveModel {
    pub order: usize,
    pub features: Vec<FeatureMeta>,
    pub regionsets: Vec<RegionSet>,
    pub intercept: f64,
    pub shapes: Vec<ShapeFunction>,
    pub pairs: Vec<PairSurface>,
    /// Training RMSE: intercept only, after every main-effect round, and
    /// after centering.
    pub history: Vec<f64>,
    /// Training RMSE after every pair round.
    pub pair_history: Vec<f64>,
}

impl AdditiveModel {
    /// Index of the first shape of every feature.
    fn shape_offsets(&self) -> Vec<usize> {
        self.regionsets
            .iter()
            .scan(0, |acc, rs| {
                let o = *acc;
                *acc += rs.n_regions();
                Some(o)
            })
            .collect()
    }

    pub fn shape(&self, source: usize, region: usize) -> &ShapeFunction {
        &self.shapes[self.shape_offsets()[source] + region]
    }

    pub fn is_trivial(&self) -> bool {
        self.regionsets.iter().all(|r| r.n_regions() == 1)
    }

    fn predict_row(&self, offsets: &[usize], x: &[f64]) -> f64 {
        let member: Vec<usize> = self.regionsets.iter().map(|rs| rs.membership(x)).collect();
        let mut f = self.intercept;
        for (s, &t) in member.iter().enumerate() {
            f += self.shapes[offsets[s] + t].eval(x[s]);
        }
        for p in &self.pairs {
            if member[p.a.0] == p.a.1 && member[p.b.0] == p.b.1 {
                f += p.eval(x[p.a.0], x[p.b.0]);
            }
        }
        f
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.features.len() {
            return Err(RamError::ArityMismatch {
                expected: self.features.len(),
                got: x.ncols(),
            });
        }
        let offsets = self.shape_offsets();
        let blocks: Vec<Vec<f64>> = (0..x.nrows())
            .step_by(1024)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|a| {
                let b = (a + 1024).min(x.nrows());
                x.slice(s![a..b, ..])
                    .rows()
                    .into_iter()
                    .map(|r| self.predict_row(&offsets, &r.to_vec()))
                    .collect()
            })
            .collect();
        Ok(blocks.into_iter().flatten().collect())
    }

    /// The order-1 part of an order-2 model.
    pub fn without_pairs(&self) -> AdditiveModel {
        AdditiveModel {
            order: 1,
            pairs: Vec::new(),
            pair_history: Vec::new(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format: u32,
    pub target: String,
    pub boost: BoostConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<RegionConfig>,
    pub seed: u64,
}

/// On-disk model: fitted additive model plus everything needed to apply it
/// to raw data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub meta: ModelMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaler: Option<Scaler>,
    #[serde(flatten)]
    pub model: AdditiveModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blackbox: Option<BlackBoxModel>,
}

impl SavedModel {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| RamError::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<SavedModel> {
        let text = std::fs::read_to_string(path).map_err(|e| RamError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Predictions in original target units for a raw (unscaled) dataset.
    pub fn predict_raw(&self, ds: &Dataset) -> Result<Array1<f64>> {
        let mut x = ds.x.clone();
        if let Some(sc) = &self.scaler {
            if sc.features.len() != x.ncols() {
                return Err(RamError::ArityMismatch {
                    expected: sc.features.len(),
                    got: x.ncols(),
                });
            }
            sc.transform_features(&mut x);
        }
        let p = self.model.predict(x.view())?;
        Ok(match &self.scaler {
            Some(sc) => p.mapv(|v| sc.target_to_original(v)),
            None => p,
        })
    }
}

#[cfg(test)]
mod tests;
