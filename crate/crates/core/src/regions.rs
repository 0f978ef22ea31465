//! Level-wise split trees that minimize the count-weighted regional
//! heterogeneity of one feature.
//!
//! At level `l` a single `(feature, position)` split is applied to every
//! region of level `l - 1`, giving `2^l` regions. A level is kept only if it
//! lowers the weighted objective by at least a relative `epsilon`.

use std::collections::BTreeSet;

use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackbox::JacobianTable;
use crate::data::{distinct_sorted, format_number, Dataset, FeatureMeta, Scaler};
use crate::effects::{build_bins, heterogeneity, bin_stats, BinConfig, BinPartition, Moments};
use crate::error::{RamError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    /// Maximum tree depth `L`.
    pub max_depth: usize,
    /// Minimum relative objective drop for a level to be accepted.
    pub epsilon: f64,
    /// Grid points per numeric split feature (both range endpoints included;
    /// 11 points give a step of 0.2 on `[-1, 1]`).
    pub positions: usize,
    /// Minimum instances per region; `None` means `max(20, 1% of N)`.
    pub min_region: Option<usize>,
    pub bins: BinConfig,
}

impl Default for RegionConfig {
    fn default() -> Self {
        RegionConfig {
            max_depth: 3,
            epsilon: 0.2,
            positions: 11,
            min_region: None,
            bins: BinConfig::default(),
        }
    }
}

impl RegionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(RamError::InvalidArgument(format!(
                "epsilon {} outside (0, 1)",
                self.epsilon
            )));
        }
        if self.positions < 2 {
            return Err(RamError::InvalidArgument("need at least 2 split positions".into()));
        }
        Ok(())
    }

    pub fn min_region_for(&self, n: usize) -> usize {
        self.min_region
            .unwrap_or_else(|| 20usize.max((n as f64 * 0.01).ceil() as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitKind {
    /// Pass side: `x_c <= threshold`.
    NumericLe { threshold: f64 },
    /// Pass side: `x_c == category` (a category code).
    CategoricalEq { category: f64 },
}

impl SplitKind {
    #[inline]
    pub fn passes(&self, v: f64) -> bool {
        match *self {
            SplitKind::NumericLe { threshold } => v <= threshold,
            SplitKind::CategoricalEq { category } => v == category,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: usize,
    #[serde(flatten)]
    pub kind: SplitKind,
    pub pass: bool,
}

impl Condition {
    pub fn matches(&self, x: &[f64]) -> bool {
        self.kind.passes(x[self.feature]) == self.pass
    }

    /// Human-readable form, thresholds in original units when a scaler is given.
    pub fn describe(&self, features: &[FeatureMeta], scaler: Option<&Scaler>) -> String {
        let f = &features[self.feature];
        match self.kind {
            SplitKind::NumericLe { threshold } => {
                let t = scaler.map_or(threshold, |sc| sc.feature_to_original(self.feature, threshold));
                let op = if self.pass { "<=" } else { ">" };
                format!("{} {op} {}", f.name, format_number(t))
            }
            SplitKind::CategoricalEq { category } => {
                let op = if self.pass { "=" } else { "!=" };
                format!("{} {op} {}", f.name, f.render_value(category))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub conditions: Vec<Condition>,
    /// Training instances in the region.
    pub count: usize,
    /// Matches whatever no sibling region matches (hand-specified sets only).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub complement: bool,
}

impl Region {
    pub fn new(conditions: Vec<Condition>) -> Self {
        Region {
            conditions,
            count: 0,
            complement: false,
        }
    }

    pub fn complement() -> Self {
        Region {
            conditions: Vec::new(),
            count: 0,
            complement: true,
        }
    }

    /// Conjunction test; complement regions are resolved by [`RegionSet`].
    pub fn contains(&self, x: &[f64]) -> bool {
        !self.complement && self.conditions.iter().all(|c| c.matches(x))
    }

    pub fn describe(&self, features: &[FeatureMeta], scaler: Option<&Scaler>) -> String {
        self.conditions
            .iter()
            .map(|c| c.describe(features, scaler))
            .collect::<Vec<_>>()
            .join(" & ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSplit {
    pub split_feature: usize,
    #[serde(flatten)]
    pub kind: SplitKind,
    /// Weighted objective after applying this level.
    pub objective: f64,
}

/// Regions of one feature. `trace[0]` is the unsplit heterogeneity, followed
/// by the objective of every accepted level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSet {
    pub feature: usize,
    pub levels: Vec<LevelSplit>,
    pub regions: Vec<Region>,
    pub trace: Vec<f64>,
    /// Best split of the first level that failed the drop test, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected: Option<LevelSplit>,
}

impl RegionSet {
    pub fn trivial(feature: usize, n: usize) -> Self {
        RegionSet {
            feature,
            levels: Vec::new(),
            regions: vec![Region {
                count: n,
                ..Region::new(Vec::new())
            }],
            trace: Vec::new(),
            rejected: None,
        }
    }

    /// A hand-specified partition. At most one region may be a complement;
    /// region counts are filled from `x`.
    pub fn custom(feature: usize, regions: Vec<Region>, x: ArrayView2<'_, f64>) -> Result<Self> {
        if regions.is_empty() || regions.iter().filter(|r| r.complement).count() > 1 {
            return Err(RamError::InvalidArgument(
                "custom region set needs regions and at most one complement".into(),
            ));
        }
        let mut rs = RegionSet {
            feature,
            levels: Vec::new(),
            regions,
            trace: Vec::new(),
            rejected: None,
        };
        rs.check_partition(x)?;
        let mut counts = vec![0; rs.regions.len()];
        for t in rs.assign(x) {
            counts[t] += 1;
        }
        for (r, c) in rs.regions.iter_mut().zip(counts) {
            r.count = c;
        }
        Ok(rs)
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    /// Region index of `x`. For split trees, passing a level's condition
    /// keeps bit 0; hand-specified sets return the first matching region.
    pub fn membership(&self, x: &[f64]) -> usize {
        if self.levels.is_empty() && self.regions.len() > 1 {
            return self
                .regions
                .iter()
                .position(|r| r.contains(x))
                .or_else(|| self.regions.iter().position(|r| r.complement))
                .unwrap_or(0);
        }
        self.levels.iter().fold(0, |t, lv| {
            2 * t + usize::from(!lv.kind.passes(x[lv.split_feature]))
        })
    }

    /// Whether region `t` contains `x`, resolving complement regions.
    pub fn region_contains(&self, t: usize, x: &[f64]) -> bool {
        let r = &self.regions[t];
        if r.complement {
            !self.regions.iter().any(|o| o.contains(x))
        } else {
            r.contains(x)
        }
    }

    /// Display form of region `t`, e.g. `x1 > 0 & x3 = 1`; empty for the full space.
    pub fn describe_region(&self, t: usize, features: &[FeatureMeta], scaler: Option<&Scaler>) -> String {
        let r = &self.regions[t];
        if !r.complement {
            return r.describe(features, scaler);
        }
        let others: Vec<String> = self
            .regions
            .iter()
            .filter(|o| !o.complement)
            .map(|o| {
                let negated: Vec<String> = o
                    .conditions
                    .iter()
                    .map(|c| Condition { pass: !c.pass, ..*c }.describe(features, scaler))
                    .collect();
                negated.join(" or ")
            })
            .collect();
        if others.len() == 1 {
            others[0].clone()
        } else {
            format!("none of the {} other regions", others.len())
        }
    }

    pub fn assign(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        x.rows()
            .into_iter()
            .map(|r| self.membership(r.as_slice().unwrap_or(&r.to_vec())))
            .collect()
    }

    /// Verifies that every row of `x` satisfies exactly one region's conditions.
    pub fn check_partition(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        for (i, r) in x.rows().into_iter().enumerate() {
            let row = r.to_vec();
            let matches = (0..self.regions.len())
                .filter(|&t| self.region_contains(t, &row))
                .count();
            if matches != 1 {
                return Err(RamError::NotAPartition {
                    feature: self.feature,
                    row: i,
                    matches,
                });
            }
        }
        Ok(())
    }

    fn from_levels(feature: usize, levels: Vec<LevelSplit>, counts: Vec<usize>, trace: Vec<f64>) -> Self {
        let depth = levels.len();
        let regions = (0..1usize << depth)
            .map(|t| Region {
                count: counts[t],
                ..Region::new(
                    levels
                        .iter()
                        .enumerate()
                        .map(|(l, lv)| Condition {
                            feature: lv.split_feature,
                            kind: lv.kind,
                            pass: (t >> (depth - 1 - l)) & 1 == 0,
                        })
                        .collect(),
                )
            })
            .collect();
        RegionSet {
            feature,
            levels,
            regions,
            trace,
            rejected: None,
        }
    }
}

/// Candidate split positions of feature `c`: `p` evenly spaced points over the
/// observed range for numeric features, the observed categories otherwise.
/// Constant columns yield no candidates.
pub fn candidate_positions(ds: &Dataset, c: usize, p: usize) -> Vec<SplitKind> {
    let col = ds.column(c);
    if ds.is_categorical(c) {
        let cats = distinct_sorted(col);
        if cats.len() < 2 {
            return Vec::new();
        }
        return cats
            .into_iter()
            .map(|category| SplitKind::CategoricalEq { category })
            .collect();
    }
    let (lo, hi) = ds.features[c].range().expect("numeric range");
    if !(hi > lo) || p < 2 {
        return Vec::new();
    }
    let step = (hi - lo) / (p - 1) as f64;
    (0..p)
        .map(|i| SplitKind::NumericLe {
            threshold: if i == p - 1 { hi } else { lo + step * i as f64 },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub feature: usize,
    pub kind: SplitKind,
    pub region_h: Vec<f64>,
    pub region_counts: Vec<usize>,
    /// `sum_t (n_t / N) * H_t`; infinite when some region is below `min_region`.
    pub objective: f64,
}

impl SplitCandidate {
    pub fn is_valid(&self) -> bool {
        self.objective.is_finite()
    }
}

/// Everything about feature `s` that stays fixed during its split search.
pub struct SplitSearch<'a> {
    ds: &'a Dataset,
    s: usize,
    partition: BinPartition,
    bin_of: Vec<Option<u32>>,
    grads: ArrayView1<'a, f64>,
    min_region: usize,
}

impl<'a> SplitSearch<'a> {
    pub fn new(ds: &'a Dataset, jac: &'a JacobianTable, s: usize, cfg: &RegionConfig) -> Result<Self> {
        if jac.n_rows() != ds.n_rows() || jac.n_features() != ds.n_features() {
            return Err(RamError::LengthMismatch {
                left: ds.n_rows(),
                right: jac.n_rows(),
            });
        }
        let grads = jac.column(s);
        let partition = build_bins(s, ds.column(s), Some(grads), cfg.bins)?;
        let bin_of = ds
            .column(s)
            .iter()
            .map(|&v| partition.locate(v).map(|b| b as u32))
            .collect();
        Ok(SplitSearch {
            ds,
            s,
            partition,
            bin_of,
            grads,
            min_region: cfg.min_region_for(ds.n_rows()),
        })
    }

    pub fn partition(&self) -> &BinPartition {
        &self.partition
    }

    /// Unsplit heterogeneity of `s` over all rows.
    pub fn global_h(&self) -> f64 {
        let fb = bin_stats(&self.partition, self.ds.column(self.s), self.grads, None)
            .expect("aligned columns");
        heterogeneity(&fb).h
    }

    /// Per-region `(count, H)` for a row-to-region assignment.
    fn region_stats(&self, assign: impl Fn(usize) -> usize, n_regions: usize) -> Vec<(usize, f64)> {
        let k = self.partition.n_bins();
        let mut acc = vec![Moments::default(); n_regions * k];
        let mut counts = vec![0usize; n_regions];
        for (i, bin) in self.bin_of.iter().enumerate() {
            let t = assign(i);
            counts[t] += 1;
            if let Some(b) = bin {
                acc[t * k + *b as usize].push(self.grads[i]);
            }
        }
        let widths: Vec<f64> = self.partition.widths().collect();
        (0..n_regions)
            .map(|t| {
                let sum: f64 = acc[t * k..(t + 1) * k]
                    .iter()
                    .zip(&widths)
                    .map(|(m, w)| {
                        let st = m.stat();
                        if st.reliable {
                            w * w * st.var
                        } else {
                            0.0
                        }
                    })
                    .sum();
                (counts[t], sum.sqrt())
            })
            .collect()
    }

    /// Applies `(c, kind)` to every current region (`current[i]` in
    /// `0..n_current`) and scores the resulting `2 * n_current` regions.
    pub fn evaluate_split(&self, current: &[usize], n_current: usize, c: usize, kind: SplitKind) -> SplitCandidate {
        let col = self.ds.column(c);
        let stats = self.region_stats(
            |i| 2 * current[i] + usize::from(!kind.passes(col[i])),
            2 * n_current,
        );
        let n = self.ds.n_rows() as f64;
        let valid = stats.iter().all(|&(cnt, _)| cnt >= self.min_region);
        let objective = if valid {
            stats.iter().map(|&(cnt, h)| cnt as f64 / n * h).sum()
        } else {
            f64::INFINITY
        };
        SplitCandidate {
            feature: c,
            kind,
            region_h: stats.iter().map(|s| s.1).collect(),
            region_counts: stats.iter().map(|s| s.0).collect(),
            objective,
        }
    }
}

/// Greedy level-wise search for the regions of feature `s`.
pub fn detect_subregions(
    ds: &Dataset,
    jac: &JacobianTable,
    s: usize,
    cfg: &RegionConfig,
) -> Result<RegionSet> {
    cfg.validate()?;
    let n = ds.n_rows();
    if ds.is_categorical(s) {
        return Ok(RegionSet::trivial(s, n));
    }
    let search = match SplitSearch::new(ds, jac, s, cfg) {
        Ok(search) => search,
        Err(RamError::InvalidArgument(_)) | Err(RamError::InsufficientData { .. }) => {
            log::debug!("feature {s}: cannot be binned, keeping a single region");
            return Ok(RegionSet::trivial(s, n));
        }
        Err(e) => return Err(e),
    };
    let h0 = search.global_h();
    let mut trace = vec![h0];
    let mut levels: Vec<LevelSplit> = Vec::new();
    let mut current = vec![0usize; n];
    let mut counts = vec![n];
    let mut used_categorical: BTreeSet<usize> = BTreeSet::new();
    let mut rejected = None;

    let candidate_features: Vec<usize> = (0..ds.n_features()).filter(|&c| c != s).collect();
    let grids: Vec<(usize, Vec<SplitKind>)> = candidate_features
        .iter()
        .map(|&c| (c, candidate_positions(ds, c, cfg.positions)))
        .collect();

    for _level in 1..=cfg.max_depth {
        let prev = *trace.last().unwrap();
        if prev == 0.0 {
            break;
        }
        let candidates: Vec<(usize, SplitKind)> = grids
            .iter()
            .filter(|(c, _)| !used_categorical.contains(c))
            .flat_map(|(c, kinds)| kinds.iter().map(move |k| (*c, *k)))
            .collect();
        let n_current = counts.len();
        let scored: Vec<SplitCandidate> = candidates
            .par_iter()
            .map(|&(c, kind)| search.evaluate_split(&current, n_current, c, kind))
            .collect();
        // first strictly-better candidate wins: ties go to the lowest feature, then position
        let best = scored
            .into_iter()
            .filter(SplitCandidate::is_valid)
            .fold(None::<SplitCandidate>, |best, cand| match best {
                Some(b) if b.objective <= cand.objective => Some(b),
                _ => Some(cand),
            });
        let Some(best) = best else {
            break;
        };
        let split = LevelSplit {
            split_feature: best.feature,
            kind: best.kind,
            objective: best.objective,
        };
        let drop = 1.0 - best.objective / prev;
        if drop < cfg.epsilon {
            rejected = Some(split);
            break;
        }
        let col = ds.column(best.feature);
        for (i, t) in current.iter_mut().enumerate() {
            *t = 2 * *t + usize::from(!best.kind.passes(col[i]));
        }
        if ds.is_categorical(best.feature) {
            used_categorical.insert(best.feature);
        }
        counts = best.region_counts;
        trace.push(best.objective);
        levels.push(split);
    }

    let mut rs = RegionSet::from_levels(s, levels, counts, trace);
    rs.rejected = rejected;
    Ok(rs)
}

/// Region sets for every feature, searched in parallel.
pub fn detect_all(ds: &Dataset, jac: &JacobianTable, cfg: &RegionConfig) -> Result<Vec<RegionSet>> {
    (0..ds.n_features())
        .into_par_iter()
        .map(|s| detect_subregions(ds, jac, s, cfg))
        .collect()
}

/// Region sets with a single region each: the additive (GAM) baseline.
pub fn trivial_all(ds: &Dataset) -> Vec<RegionSet> {
    (0..ds.n_features())
        .map(|s| RegionSet::trivial(s, ds.n_rows()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::{AnalyticFn, BlackBoxModel, Term};
    use crate::data::FeatureMeta;
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize, seed: u64) -> (Dataset, JacobianTable) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 3), |(_, j)| match j {
            2 => f64::from(rng.random_bool(0.5)),
            _ => rng.random_range(-1.0..1.0),
        });
        let f = BlackBoxModel::Analytic(AnalyticFn::toy(8.0, 1.0));
        let y = f.predict(x.view()).unwrap();
        let jac = f.jacobian_table(x.view()).unwrap();
        let feats = vec![
            FeatureMeta::numeric("x1", 0, 0.0, 0.0),
            FeatureMeta::numeric("x2", 1, 0.0, 0.0),
            FeatureMeta::categorical("x3", 2, vec!["0".into(), "1".into()]),
        ];
        (Dataset::new(feats, x, y, "y").unwrap(), jac)
    }

    #[test]
    fn candidate_grid() {
        let (mut ds, _) = toy(200, 1);
        ds.features[0].kind = crate::data::FeatureKind::Numeric { min: -1.0, max: 1.0 };
        let grid = candidate_positions(&ds, 0, 11);
        let expected: Vec<f64> = (0..11).map(|i| -1.0 + 0.2 * i as f64).collect();
        for (k, e) in grid.iter().zip(expected) {
            match k {
                SplitKind::NumericLe { threshold } => assert!((threshold - e).abs() < 1e-12),
                _ => panic!("numeric grid expected"),
            }
        }
        assert_eq!(
            candidate_positions(&ds, 2, 10),
            vec![
                SplitKind::CategoricalEq { category: 0.0 },
                SplitKind::CategoricalEq { category: 1.0 }
            ]
        );
        let constant = Dataset::new(
            vec![FeatureMeta::numeric("c", 0, 0.0, 0.0)],
            Array2::from_elem((5, 1), 2.0),
            Array1::zeros(5),
            "y",
        )
        .unwrap();
        assert!(candidate_positions(&constant, 0, 10).is_empty());
    }

    #[test]
    fn empty_side_is_invalid() {
        let (ds, jac) = toy(2_000, 2);
        let search = SplitSearch::new(&ds, &jac, 1, &RegionConfig::default()).unwrap();
        let hi = ds.features[0].range().unwrap().1;
        let cand = search.evaluate_split(&vec![0; 2_000], 1, 0, SplitKind::NumericLe { threshold: hi });
        assert!(!cand.is_valid());
        assert_eq!(cand.objective, f64::INFINITY);
        assert_eq!(cand.region_counts, vec![2_000, 0]);
    }

    #[test]
    fn toy_feature_two_splits_on_x3_then_x1() {
        let (ds, jac) = toy(10_000, 3);
        let cfg = RegionConfig {
            positions: 10,
            ..RegionConfig::default()
        };
        let rs = detect_subregions(&ds, &jac, 1, &cfg).unwrap();
        assert!(rs.levels.len() >= 2);
        assert_eq!(rs.levels[0].split_feature, 2);
        assert_eq!(rs.levels[1].split_feature, 0);
        match rs.levels[1].kind {
            SplitKind::NumericLe { threshold } => assert!(threshold.abs() <= 0.25),
            _ => panic!(),
        }
        // 10-point grid: nearest thresholds to 0 are +-1/9, leaving ~0.30
        assert!((rs.trace[1] - 0.894).abs() < 0.09);
        assert!((rs.trace[2] - 0.298).abs() < 0.05);
        rs.check_partition(ds.x.view()).unwrap();
        assert!(rs.levels.iter().all(|l| l.split_feature != 1));
    }

    #[test]
    fn additive_function_is_not_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((2_000, 2), |_| rng.random_range(-1.0..1.0));
        let f = BlackBoxModel::Analytic(AnalyticFn::Terms {
            arity: 2,
            intercept: 0.0,
            terms: vec![
                Term::Linear { feature: 0, coef: 2.0 },
                Term::Linear { feature: 1, coef: -1.0 },
            ],
        });
        let jac = f.jacobian_table(x.view()).unwrap();
        let y = f.predict(x.view()).unwrap();
        let ds = Dataset::new(
            vec![FeatureMeta::numeric("a", 0, 0.0, 0.0), FeatureMeta::numeric("b", 1, 0.0, 0.0)],
            x,
            y,
            "y",
        )
        .unwrap();
        for s in 0..2 {
            let rs = detect_subregions(&ds, &jac, s, &RegionConfig::default()).unwrap();
            assert_eq!(rs.n_regions(), 1);
            assert_eq!(rs.trace, vec![0.0]);
        }
    }

    #[test]
    fn membership_follows_boundary_convention() {
        let rs = RegionSet::from_levels(
            1,
            vec![
                LevelSplit {
                    split_feature: 2,
                    kind: SplitKind::CategoricalEq { category: 1.0 },
                    objective: 1.0,
                },
                LevelSplit {
                    split_feature: 0,
                    kind: SplitKind::NumericLe { threshold: 0.0 },
                    objective: 0.0,
                },
            ],
            vec![1, 1, 1, 1],
            vec![2.0, 1.0, 0.0],
        );
        let x = [0.5, 0.1, 1.0];
        let t = rs.membership(&x);
        assert_eq!(t, 1);
        assert!(rs.regions[t].contains(&x));
        assert_eq!(rs.membership(&[0.0, 0.1, 1.0]), 0);
        assert_eq!(RegionSet::trivial(0, 3).membership(&x), 0);
        let feats = vec![
            FeatureMeta::numeric("x1", 0, -1.0, 1.0),
            FeatureMeta::numeric("x2", 1, -1.0, 1.0),
            FeatureMeta::categorical("x3", 2, vec!["0".into(), "1".into()]),
        ];
        assert_eq!(rs.regions[1].describe(&feats, None), "x3 = 1 & x1 > 0");
        assert_eq!(rs.regions[2].describe(&feats, None), "x3 != 1 & x1 <= 0");
    }

    #[test]
    fn region_set_json_shape() {
        let (ds, jac) = toy(3_000, 5);
        let cfg = RegionConfig {
            positions: 10,
            ..RegionConfig::default()
        };
        let rs = detect_subregions(&ds, &jac, 1, &cfg).unwrap();
        let v: serde_json::Value = serde_json::to_value(&rs).unwrap();
        assert_eq!(v["feature"], 1);
        assert_eq!(v["levels"][0]["split_feature"], 2);
        assert_eq!(v["levels"][0]["kind"], "categorical_eq");
        assert!(v["levels"][1]["threshold"].is_number());
        let back: RegionSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, rs);
    }

    #[test]
    fn default_grid_recovers_the_four_true_regions() {
        let (ds, jac) = toy(10_000, 3);
        let rs = detect_subregions(&ds, &jac, 1, &RegionConfig::default()).unwrap();
        assert_eq!(rs.n_regions(), 4);
        assert!(*rs.trace.last().unwrap() < 0.05);
        let mut used: Vec<usize> = rs.levels.iter().map(|l| l.split_feature).collect();
        used.sort_unstable();
        assert_eq!(used, vec![0, 2]);
    }

    #[test]
    fn custom_set_with_complement() {
        let (ds, _) = toy(500, 6);
        let active = Region::new(vec![
            Condition {
                feature: 0,
                kind: SplitKind::NumericLe { threshold: 0.0 },
                pass: false,
            },
            Condition {
                feature: 2,
                kind: SplitKind::CategoricalEq { category: 1.0 },
                pass: true,
            },
        ]);
        let rs = RegionSet::custom(1, vec![active, Region::complement()], ds.x.view()).unwrap();
        assert_eq!(rs.membership(&[0.5, 0.0, 1.0]), 0);
        assert_eq!(rs.membership(&[-0.5, 0.0, 1.0]), 1);
        assert_eq!(rs.membership(&[0.5, 0.0, 0.0]), 1);
        assert_eq!(rs.regions[0].count + rs.regions[1].count, 500);
        assert_eq!(rs.describe_region(1, &ds.features, None), "x1 <= 0 or x3 != 1");
        let overlapping = vec![Region::new(Vec::new()), Region::new(Vec::new())];
        assert!(RegionSet::custom(1, overlapping, ds.x.view()).is_err());
    }
}
