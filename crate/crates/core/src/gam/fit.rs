//! Cyclic boosting of main effects and pairwise surfaces.

use log::{debug, warn};
use rayon::prelude::*;

use super::tree::{fit_1d, fit_2d};
use super::{build_extended_space, AdditiveModel, Binning, BoostConfig, ExtendedFeature, PairSurface, ShapeFunction};
use crate::data::Dataset;
use crate::error::{RamError, Result};
use crate::regions::{trivial_all, RegionSet};

fn rmse(y: &[f64], f: &[f64]) -> f64 {
    (y.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
}

fn levels(ds: &Dataset, s: usize) -> Option<usize> {
    ds.features[s].categories().map(<[String]>::len)
}

struct Component {
    source: usize,
    region: usize,
    rows: Vec<usize>,
    bins: Vec<usize>,
    counts: Vec<usize>,
    binning: Binning,
    values: Vec<f64>,
    active: bool,
}

impl Component {
    fn new(ds: &Dataset, e: &ExtendedFeature, cfg: &BoostConfig) -> Self {
        let rows = e.rows();
        let col = ds.column(e.source);
        let xs: Vec<f64> = rows.iter().map(|&i| col[i]).collect();
        let binning = Binning::fit(&xs, levels(ds, e.source), cfg.max_bins);
        let bins: Vec<usize> = xs.iter().map(|&v| binning.bin(v)).collect();
        let mut counts = vec![0; binning.n_bins()];
        for &b in &bins {
            counts[b] += 1;
        }
        let active = rows.len() >= cfg.min_component_rows.max(1);
        if !active {
            warn!(
                "{}, region {}: {} active rows, shape kept at zero",
                ds.features[e.source].name,
                e.region,
                rows.len()
            );
        }
        Component {
            source: e.source,
            region: e.region,
            values: vec![0.0; binning.n_bins()],
            rows,
            bins,
            counts,
            binning,
            active,
        }
    }

    fn boost(&mut self, y: &[f64], f: &mut [f64], cfg: &BoostConfig) {
        if !self.active {
            return;
        }
        let mut sum = vec![0.0; self.values.len()];
        for (&i, &b) in self.rows.iter().zip(&self.bins) {
            sum[b] += y[i] - f[i];
        }
        let step = fit_1d(&sum, &self.counts, cfg.max_leaves, cfg.min_samples_leaf);
        for (v, d) in self.values.iter_mut().zip(&step) {
            *v += cfg.learning_rate * d;
        }
        for (&i, &b) in self.rows.iter().zip(&self.bins) {
            f[i] += cfg.learning_rate * step[b];
        }
    }

    /// Mean contribution over the component's rows.
    fn mean(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let total: f64 = self.values.iter().zip(&self.counts).map(|(v, &c)| v * c as f64).sum();
        total / self.rows.len() as f64
    }
}

/// A scored candidate pair of extended features (indices into the extended space).
#[derive(Debug, Clone, PartialEq)]
pub struct PairCandidate {
    pub a: usize,
    pub b: usize,
    /// Drop in training RMSE from one un-shrunk four-leaf fit on the residuals.
    pub score: f64,
}

struct PairWork {
    a: (usize, usize),
    b: (usize, usize),
    rows: Vec<usize>,
    cells: Vec<usize>,
    counts: Vec<usize>,
    binning_a: Binning,
    binning_b: Binning,
    values: Vec<f64>,
}

impl PairWork {
    fn new(ds: &Dataset, ea: &ExtendedFeature, eb: &ExtendedFeature, cfg: &BoostConfig) -> Self {
        let rows: Vec<usize> = (0..ds.n_rows()).filter(|&i| ea.mask[i] && eb.mask[i]).collect();
        let (ca, cb) = (ds.column(ea.source), ds.column(eb.source));
        let xa: Vec<f64> = rows.iter().map(|&i| ca[i]).collect();
        let xb: Vec<f64> = rows.iter().map(|&i| cb[i]).collect();
        let binning_a = Binning::fit(&xa, levels(ds, ea.source), cfg.pair_bins);
        let binning_b = Binning::fit(&xb, levels(ds, eb.source), cfg.pair_bins);
        let nb = binning_b.n_bins();
        let cells: Vec<usize> = xa
            .iter()
            .zip(&xb)
            .map(|(&va, &vb)| binning_a.bin(va) * nb + binning_b.bin(vb))
            .collect();
        let mut counts = vec![0; binning_a.n_bins() * nb];
        for &c in &cells {
            counts[c] += 1;
        }
        PairWork {
            a: (ea.source, ea.region),
            b: (eb.source, eb.region),
            values: vec![0.0; counts.len()],
            rows,
            cells,
            counts,
            binning_a,
            binning_b,
        }
    }

    fn fit(&self, y: &[f64], f: &[f64], cfg: &BoostConfig) -> (Vec<f64>, f64) {
        let mut sum = vec![0.0; self.counts.len()];
        for (&i, &c) in self.rows.iter().zip(&self.cells) {
            sum[c] += y[i] - f[i];
        }
        fit_2d(
            &sum,
            &self.counts,
            self.binning_a.n_bins(),
            self.binning_b.n_bins(),
            cfg.min_samples_leaf,
        )
    }

    /// Shrunk update, centered on the pair's rows so the intercept is unaffected.
    fn boost(&mut self, y: &[f64], f: &mut [f64], cfg: &BoostConfig) {
        let (step, _) = self.fit(y, f, cfg);
        let centre = step.iter().zip(&self.counts).map(|(v, &c)| v * c as f64).sum::<f64>() / self.rows.len() as f64;
        for (v, d) in self.values.iter_mut().zip(&step) {
            *v += cfg.learning_rate * (d - centre);
        }
        for (&i, &c) in self.rows.iter().zip(&self.cells) {
            f[i] += cfg.learning_rate * (step[c] - centre);
        }
    }

    fn into_surface(self) -> PairSurface {
        PairSurface {
            a: self.a,
            b: self.b,
            binning_a: self.binning_a,
            binning_b: self.binning_b,
            values: self.values,
            active_rows: self.rows.len(),
        }
    }
}

/// Ranks pairs of extended features from different source features by how
/// much one shallow surface fit reduces the residual RMSE. Pairs with fewer
/// than `min_overlap` jointly active rows or no improvement are dropped; the
/// best `max_pairs` are returned.
pub fn select_pairs(
    ds: &Dataset,
    ext: &[ExtendedFeature],
    residuals: &[f64],
    cfg: &BoostConfig,
) -> Result<Vec<PairCandidate>> {
    if residuals.len() != ds.n_rows() {
        return Err(RamError::LengthMismatch {
            left: residuals.len(),
            right: ds.n_rows(),
        });
    }
    let n = residuals.len().max(1) as f64;
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let before = (sse / n).sqrt();
    let zeros = vec![0.0; residuals.len()];
    let candidates: Vec<(usize, usize)> = (0..ext.len())
        .flat_map(|a| (a + 1..ext.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| ext[a].source != ext[b].source)
        .collect();
    let mut scored: Vec<PairCandidate> = candidates
        .into_par_iter()
        .filter_map(|(a, b)| {
            let overlap = ext[a].mask.iter().zip(&ext[b].mask).filter(|(p, q)| **p && **q).count();
            if overlap < cfg.min_overlap.max(1) {
                return None;
            }
            let work = PairWork::new(ds, &ext[a], &ext[b], cfg);
            let (_, gain) = work.fit(residuals, &zeros, cfg);
            let score = before - ((sse - gain).max(0.0) / n).sqrt();
            (score > 1e-12).then_some(PairCandidate { a, b, score })
        })
        .collect();
    scored.sort_by(|p, q| q.score.total_cmp(&p.score).then((p.a, p.b).cmp(&(q.a, q.b))));
    scored.truncate(cfg.max_pairs);
    Ok(scored)
}

/// Regionally additive model on the given region sets. `order` 2 adds up to
/// `max_pairs` pairwise surfaces fitted on the main-effect residuals.
pub fn fit_ram(ds: &Dataset, regionsets: &[RegionSet], order: usize, cfg: &BoostConfig) -> Result<AdditiveModel> {
    cfg.validate()?;
    if !(1..=2).contains(&order) {
        return Err(RamError::InvalidArgument(format!("order must be 1 or 2, got {order}")));
    }
    let n = ds.n_rows();
    if n == 0 {
        return Err(RamError::InsufficientData { needed: 1, got: 0 });
    }
    let y = ds.y.to_vec();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(RamError::NonFiniteResiduals { round: 0 });
    }
    let ext = build_extended_space(ds, regionsets)?;
    let intercept = y.iter().sum::<f64>() / n as f64;
    let mut f = vec![intercept; n];
    let mut comps: Vec<Component> = ext.iter().map(|e| Component::new(ds, e, cfg)).collect();
    let mut history = vec![rmse(&y, &f)];
    for round in 1..=cfg.rounds {
        for c in comps.iter_mut() {
            c.boost(&y, &mut f, cfg);
        }
        let r = rmse(&y, &f);
        if !r.is_finite() {
            return Err(RamError::NonFiniteResiduals { round });
        }
        history.push(r);
    }

    // Center every shape on its rows and keep each region's level as an
    // offset relative to the row-weighted level of its feature. All shapes
    // then sum to zero over the training rows, and the least-squares
    // intercept is exactly mean(y).
    let mut offsets = vec![0.0; comps.len()];
    let mut start = 0;
    for rs in regionsets {
        let group = start..start + rs.n_regions();
        let means: Vec<f64> = comps[group.clone()].iter().map(Component::mean).collect();
        let level: f64 = comps[group.clone()]
            .iter()
            .zip(&means)
            .map(|(c, m)| c.rows.len() as f64 * m)
            .sum::<f64>()
            / n as f64;
        for ((c, m), o) in comps[group.clone()].iter_mut().zip(&means).zip(&mut offsets[group.clone()]) {
            c.values.iter_mut().for_each(|v| *v -= m);
            *o = m - level;
        }
        start = group.end;
    }
    f.iter_mut().for_each(|v| *v = intercept);
    for (c, o) in comps.iter().zip(&offsets) {
        for (&i, &b) in c.rows.iter().zip(&c.bins) {
            f[i] += c.values[b] + o;
        }
    }
    history.push(rmse(&y, &f));

    let mut pair_history = Vec::new();
    let mut pairs = Vec::new();
    if order == 2 {
        let residuals: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a - b).collect();
        let chosen = select_pairs(ds, &ext, &residuals, cfg)?;
        debug!("{} pairs selected", chosen.len());
        let mut work: Vec<PairWork> = chosen
            .iter()
            .map(|p| PairWork::new(ds, &ext[p.a], &ext[p.b], cfg))
            .collect();
        if !work.is_empty() {
            for round in 1..=cfg.pair_rounds {
                for w in work.iter_mut() {
                    w.boost(&y, &mut f, cfg);
                }
                let r = rmse(&y, &f);
                if !r.is_finite() {
                    return Err(RamError::NonFiniteResiduals {
                        round: cfg.rounds + round,
                    });
                }
                pair_history.push(r);
            }
        }
        pairs = work.into_iter().map(PairWork::into_surface).collect();
    }

    let shapes = comps
        .into_iter()
        .zip(offsets)
        .map(|(c, offset)| ShapeFunction {
            source: c.source,
            region: c.region,
            active_rows: c.rows.len(),
            binning: c.binning,
            values: c.values,
            offset,
        })
        .collect();
    Ok(AdditiveModel {
        order,
        features: ds.features.clone(),
        regionsets: regionsets.to_vec(),
        intercept,
        shapes,
        pairs,
        history,
        pair_history,
    })
}

/// Additive baseline: one region per feature.
pub fn fit_gam(ds: &Dataset, order: usize, cfg: &BoostConfig) -> Result<AdditiveModel> {
    fit_ram(ds, &trivial_all(ds), order, cfg)
}
