//! Gradient-based accumulated local effects on variable-width bins.
//!
//! A feature axis is cut into `K_init` equal-width bins which are then merged
//! until every bin holds at least `min_points` instances. Per bin we keep the
//! mean (`mu`) and unbiased variance (`var`) of the instance-level partial
//! derivatives. The effect curve accumulates `width * mu`; the heterogeneity
//! `H = sqrt(sum width^2 * var)` measures how much the local effect of the
//! feature depends on the other features.

use std::io::Write;
use std::path::Path;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{RamError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinConfig {
    pub k_init: usize,
    pub min_points: usize,
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig {
            k_init: 20,
            min_points: 10,
        }
    }
}

/// Bin edges of one feature plus the instance count of each bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinPartition {
    pub feature: usize,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl BinPartition {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| w[1] - w[0])
    }

    /// Bin of `x`: `z_{k-1} <= x < z_k`, the right-most edge belonging to the
    /// last bin. `None` outside `[z_0, z_K]`.
    pub fn locate(&self, x: f64) -> Option<usize> {
        let k = self.counts.len();
        if !(x >= self.edges[0] && x <= self.edges[k]) {
            return None;
        }
        let inner = &self.edges[1..k];
        Some(inner.partition_point(|&e| e <= x))
    }
}

/// Running mean and squared deviations (Welford). Constant inputs give an
/// exactly zero variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Moments {
    pub count: usize,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        Moments {
            count: self.count + other.count,
            mean: self.mean + d * other.count as f64 / n,
            m2: self.m2 + other.m2 + d * d * self.count as f64 * other.count as f64 / n,
        }
    }

    /// `(mu, var, reliable)`; fewer than two points give `(mean or 0, 0, false)`.
    pub fn stat(&self) -> BinStat {
        if self.count < 2 {
            BinStat {
                count: self.count,
                mu: if self.count == 1 { self.mean } else { 0.0 },
                var: 0.0,
                reliable: false,
            }
        } else {
            BinStat {
                count: self.count,
                mu: self.mean,
                var: (self.m2 / (self.count - 1) as f64).max(0.0),
                reliable: true,
            }
        }
    }
}

/// Equal-width bins over `[min, max]`, merged until every bin has at least
/// `min_points` values.
///
/// When `grads` is given, an under-populated bin merges into the neighbour
/// whose provisional `(mu, sigma)` is closest in `|dmu| + |dsigma|`; ties and
/// the gradient-free case go to the left neighbour.
pub fn build_bins(
    feature: usize,
    values: ArrayView1<'_, f64>,
    grads: Option<ArrayView1<'_, f64>>,
    cfg: BinConfig,
) -> Result<BinPartition> {
    if cfg.k_init < 2 || cfg.min_points < 2 {
        return Err(RamError::InvalidArgument(format!(
            "need k_init >= 2 and min_points >= 2, got {} and {}",
            cfg.k_init, cfg.min_points
        )));
    }
    if let Some(g) = &grads {
        if g.len() != values.len() {
            return Err(RamError::LengthMismatch {
                left: values.len(),
                right: g.len(),
            });
        }
    }
    if values.len() < cfg.min_points {
        return Err(RamError::InsufficientData {
            needed: cfg.min_points,
            got: values.len(),
        });
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return Err(RamError::InvalidArgument(format!(
            "feature {feature} is constant; cannot bin"
        )));
    }
    let k = cfg.k_init;
    let width = (hi - lo) / k as f64;
    let mut edges: Vec<f64> = (0..=k).map(|i| lo + width * i as f64).collect();
    edges[k] = hi;

    let mut moments = vec![Moments::default(); k];
    let probe = BinPartition {
        feature,
        edges: edges.clone(),
        counts: vec![0; k],
    };
    for (i, &v) in values.iter().enumerate() {
        let b = probe.locate(v).expect("value inside its own range");
        moments[b].push(grads.as_ref().map_or(0.0, |g| g[i]));
    }

    while moments.len() > 1 {
        let Some(victim) = moments
            .iter()
            .enumerate()
            .filter(|(_, m)| m.count < cfg.min_points)
            .min_by_key(|(i, m)| (m.count, *i))
            .map(|(i, _)| i)
        else {
            break;
        };
        let distance = |a: &Moments, b: &Moments| {
            let (sa, sb) = (a.stat(), b.stat());
            (sa.mu - sb.mu).abs() + (sa.var.sqrt() - sb.var.sqrt()).abs()
        };
        let into_left = if victim == 0 {
            false
        } else if victim == moments.len() - 1 {
            true
        } else {
            distance(&moments[victim], &moments[victim - 1])
                <= distance(&moments[victim], &moments[victim + 1])
        };
        let (left, right) = if into_left {
            (victim - 1, victim)
        } else {
            (victim, victim + 1)
        };
        moments[left] = moments[left].merge(&moments[right]);
        moments.remove(right);
        edges.remove(right);
    }
    Ok(BinPartition {
        feature,
        edges,
        counts: moments.iter().map(|m| m.count).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub count: usize,
    pub mu: f64,
    pub var: f64,
    /// False for bins with fewer than two instances; such bins carry `var = 0`.
    pub reliable: bool,
}

/// A partition with per-bin effect statistics filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilledBins {
    pub feature: usize,
    pub edges: Vec<f64>,
    pub bins: Vec<BinStat>,
}

impl FilledBins {
    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| w[1] - w[0])
    }
}

/// Bin effects and deviations over the instances selected by `mask` (all if `None`).
pub fn bin_stats(
    p: &BinPartition,
    xs: ArrayView1<'_, f64>,
    grads: ArrayView1<'_, f64>,
    mask: Option<&[bool]>,
) -> Result<FilledBins> {
    if xs.len() != grads.len() {
        return Err(RamError::LengthMismatch {
            left: xs.len(),
            right: grads.len(),
        });
    }
    if let Some(m) = mask {
        if m.len() != xs.len() {
            return Err(RamError::LengthMismatch {
                left: xs.len(),
                right: m.len(),
            });
        }
    }
    let mut moments = vec![Moments::default(); p.n_bins()];
    for (i, (&x, &g)) in xs.iter().zip(grads.iter()).enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        if let Some(b) = p.locate(x) {
            moments[b].push(g);
        }
    }
    Ok(FilledBins {
        feature: p.feature,
        edges: p.edges.clone(),
        bins: moments.iter().map(Moments::stat).collect(),
    })
}

/// Accumulated effect curve, piecewise linear between bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCurve {
    pub feature: usize,
    pub knots: Vec<f64>,
    /// Uncentered accumulated values; `values[0] == 0`.
    pub values: Vec<f64>,
    /// Count-weighted mean of the uncentered curve.
    pub centering: f64,
    pub bins: Vec<BinStat>,
}

impl EffectCurve {
    /// Centered curve value at `x`, clamped to the knot range.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.knots.len() - 1;
        let x = x.clamp(self.knots[0], self.knots[k]);
        let j = self.knots[1..k].partition_point(|&e| e <= x);
        let (a, b) = (self.knots[j], self.knots[j + 1]);
        let t = if b > a { (x - a) / (b - a) } else { 0.0 };
        self.values[j] + t * (self.values[j + 1] - self.values[j]) - self.centering
    }

    /// Writes `knot,value,mu,sigma,count`; bin columns describe the bin that
    /// starts at the knot and are empty on the last row.
    pub fn write_csv(&self, out: &mut impl Write, to_original: impl Fn(f64) -> f64) -> std::io::Result<()> {
        writeln!(out, "knot,value,mu,sigma,count")?;
        for (j, (&knot, &v)) in self.knots.iter().zip(&self.values).enumerate() {
            let value = v - self.centering;
            match self.bins.get(j) {
                Some(b) => writeln!(
                    out,
                    "{},{},{},{},{}",
                    to_original(knot),
                    value,
                    b.mu,
                    b.var.sqrt(),
                    b.count
                )?,
                None => writeln!(out, "{},{},,,", to_original(knot), value)?,
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, to_original: impl Fn(f64) -> f64) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| RamError::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w, to_original)
            .and_then(|_| w.flush())
            .map_err(|e| RamError::io(path, e))
    }
}

pub fn dale_curve(fb: &FilledBins) -> EffectCurve {
    let mut values = Vec::with_capacity(fb.edges.len());
    values.push(0.0);
    for (w, b) in fb.widths().zip(&fb.bins) {
        let last = *values.last().unwrap();
        values.push(last + w * b.mu);
    }
    let total: usize = fb.bins.iter().map(|b| b.count).sum();
    let centering = if total == 0 {
        0.0
    } else {
        fb.bins
            .iter()
            .enumerate()
            .map(|(k, b)| b.count as f64 * 0.5 * (values[k] + values[k + 1]))
            .sum::<f64>()
            / total as f64
    };
    EffectCurve {
        feature: fb.feature,
        knots: fb.edges.clone(),
        values,
        centering,
        bins: fb.bins.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityReport {
    pub feature: usize,
    pub h: f64,
    /// `width^2 * var` per bin; zero for unreliable bins.
    pub contributions: Vec<f64>,
}

pub fn heterogeneity(fb: &FilledBins) -> HeterogeneityReport {
    let contributions: Vec<f64> = fb
        .widths()
        .zip(&fb.bins)
        .map(|(w, b)| if b.reliable { w * w * b.var } else { 0.0 })
        .collect();
    HeterogeneityReport {
        feature: fb.feature,
        h: contributions.iter().sum::<f64>().sqrt(),
        contributions,
    }
}

/// Heterogeneity of feature `p.feature` restricted to the rows in `mask`,
/// reusing the global bin edges unchanged.
pub fn regional_heterogeneity(
    p: &BinPartition,
    xs: ArrayView1<'_, f64>,
    grads: ArrayView1<'_, f64>,
    mask: &[bool],
) -> Result<HeterogeneityReport> {
    if !mask.iter().any(|&m| m) {
        return Err(RamError::EmptyMask);
    }
    let fb = bin_stats(p, xs, grads, Some(mask))?;
    if fb.bins.iter().all(|b| !b.reliable) {
        log::warn!(
            "feature {}: every bin has fewer than two instances in the region",
            p.feature
        );
    }
    Ok(heterogeneity(&fb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize, lo: f64, hi: f64, seed: u64) -> Array1<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array1::from_shape_fn(n, |_| rng.random_range(lo..hi))
    }

    /// Counting oracle: points per equal-width bin, computed independently.
    fn equal_width_counts(v: &[f64], k: usize) -> Vec<usize> {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut c = vec![0; k];
        for &x in v {
            let b = (((x - lo) / (hi - lo)) * k as f64).floor() as usize;
            c[b.min(k - 1)] += 1;
        }
        c
    }

    #[test]
    fn dense_uniform_keeps_all_bins() {
        let v = uniform(10_000, -1.0, 1.0, 1);
        let oracle = equal_width_counts(v.as_slice().unwrap(), 20);
        assert!(oracle.iter().all(|&c| c >= 10));
        let p = build_bins(0, v.view(), None, BinConfig::default()).unwrap();
        assert_eq!(p.n_bins(), 20);
        assert_eq!(p.counts, oracle);
    }

    #[test]
    fn sparse_data_collapses_to_few_bins() {
        let v = uniform(25, -1.0, 1.0, 2);
        let p = build_bins(0, v.view(), None, BinConfig::default()).unwrap();
        assert!(p.n_bins() <= 2);
        assert!(p.counts.iter().all(|&c| c >= 10));
        assert_eq!(p.counts.iter().sum::<usize>(), 25);
    }

    #[test]
    fn empty_half_is_merged_away() {
        let mut v = uniform(2_000, -1.0, 0.0, 3).to_vec();
        v.push(1.0);
        let v = Array1::from(v);
        let oracle = equal_width_counts(v.as_slice().unwrap(), 20);
        // right half (bins 10..20) holds a single point
        assert_eq!(oracle[10..].iter().sum::<usize>(), 1);
        let p = build_bins(0, v.view(), None, BinConfig::default()).unwrap();
        assert!(p.counts.iter().all(|&c| c >= 10));
        assert_eq!(*p.edges.last().unwrap(), 1.0);
        // one bin now spans the whole empty half
        let right = p.edges.iter().filter(|&&e| e > 0.0).count();
        assert_eq!(right, 1);
    }

    #[test]
    fn build_bins_errors() {
        let v = uniform(5, 0.0, 1.0, 4);
        assert!(matches!(
            build_bins(0, v.view(), None, BinConfig::default()),
            Err(RamError::InsufficientData { needed: 10, got: 5 })
        ));
        assert!(build_bins(0, v.view(), None, BinConfig { k_init: 1, min_points: 2 }).is_err());
    }

    #[test]
    fn merge_prefers_similar_neighbour() {
        // three bins: left grads 0, middle sparse with grads 5, right grads 5
        let mut xs = vec![];
        let mut gs = vec![];
        for i in 0..20 {
            xs.push(0.01 + i as f64 * 0.01);
            gs.push(0.0);
            xs.push(2.01 + i as f64 * 0.01);
            gs.push(5.0);
        }
        xs.push(1.5);
        gs.push(5.0);
        xs.push(1.6);
        gs.push(5.0);
        xs.push(0.0);
        gs.push(0.0);
        xs.push(3.0);
        gs.push(5.0);
        let xs = Array1::from(xs);
        let gs = Array1::from(gs);
        let p = build_bins(0, xs.view(), Some(gs.view()), BinConfig { k_init: 3, min_points: 10 }).unwrap();
        assert_eq!(p.n_bins(), 2);
        assert_eq!(p.edges[1], 1.0);
    }

    #[test]
    fn constant_gradient_stats() {
        let v = uniform(1_000, -1.0, 1.0, 5);
        let g = Array1::from_elem(1_000, 3.0);
        let p = build_bins(0, v.view(), Some(g.view()), BinConfig::default()).unwrap();
        let fb = bin_stats(&p, v.view(), g.view(), None).unwrap();
        for b in &fb.bins {
            assert_eq!(b.mu, 3.0);
            assert_eq!(b.var, 0.0);
        }
        assert_eq!(heterogeneity(&fb).h, 0.0);
    }

    #[test]
    fn linear_effect_curve() {
        let v = uniform(5_000, 0.0, 1.0, 6);
        let g = Array1::from_elem(5_000, 3.0);
        let p = build_bins(0, v.view(), Some(g.view()), BinConfig::default()).unwrap();
        let curve = dale_curve(&bin_stats(&p, v.view(), g.view(), None).unwrap());
        for w in curve.knots.windows(2).zip(curve.values.windows(2)) {
            let slope = (w.1[1] - w.1[0]) / (w.0[1] - w.0[0]);
            assert!((slope - 3.0).abs() < 1e-9);
        }
        for x in [0.1, 0.5, 0.9] {
            assert!((curve.eval(x) - (3.0 * x - 1.5)).abs() < 0.05);
        }
        let zero = Array1::zeros(5_000);
        let flat = dale_curve(&bin_stats(&p, v.view(), zero.view(), None).unwrap());
        assert!(flat.values.iter().all(|&v| v == 0.0));
        assert_eq!(flat.eval(0.3), 0.0);
    }

    #[test]
    fn singleton_bins_are_unreliable() {
        let p = BinPartition {
            feature: 0,
            edges: vec![0.0, 1.0, 2.0],
            counts: vec![0, 0],
        };
        let xs = Array1::from(vec![0.5, 1.2, 1.4]);
        let gs = Array1::from(vec![4.0, 1.0, 3.0]);
        let fb = bin_stats(&p, xs.view(), gs.view(), None).unwrap();
        assert_eq!(fb.bins[0], BinStat { count: 1, mu: 4.0, var: 0.0, reliable: false });
        assert_eq!(fb.bins[1].var, 2.0);
        let mask = [true, false, true];
        let r = regional_heterogeneity(&p, xs.view(), gs.view(), &mask).unwrap();
        assert_eq!(r.h, 0.0);
        assert!(matches!(
            regional_heterogeneity(&p, xs.view(), gs.view(), &[false; 3]),
            Err(RamError::EmptyMask)
        ));
    }

    #[test]
    fn locate_boundaries() {
        let p = BinPartition {
            feature: 0,
            edges: vec![0.0, 1.0, 2.0],
            counts: vec![0, 0],
        };
        assert_eq!(p.locate(0.0), Some(0));
        assert_eq!(p.locate(1.0), Some(1));
        assert_eq!(p.locate(2.0), Some(1));
        assert_eq!(p.locate(2.5), None);
        assert_eq!(p.locate(-0.1), None);
    }

    #[test]
    fn curve_csv_layout() {
        let fb = FilledBins {
            feature: 0,
            edges: vec![0.0, 1.0, 2.0],
            bins: vec![
                BinStat { count: 2, mu: 1.0, var: 4.0, reliable: true },
                BinStat { count: 2, mu: 1.0, var: 0.0, reliable: true },
            ],
        };
        let mut buf = Vec::new();
        dale_curve(&fb).write_csv(&mut buf, |x| x).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "knot,value,mu,sigma,count");
        assert_eq!(lines[1], "0,-1,1,2,2");
        assert_eq!(lines[3], "2,1,,,");
    }
}
