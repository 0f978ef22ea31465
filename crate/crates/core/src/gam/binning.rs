//! Histogram bins for shape functions.

use serde::{Deserialize, Serialize};

/// Maps a feature value to a histogram bin. Numeric bins are `(cut_{b-1}, cut_b]`;
/// values outside the training range fall into the first or last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Binning {
    Numeric { cuts: Vec<f64>, min: f64, max: f64 },
    Categorical { levels: usize },
}

impl Binning {
    /// Bins for the given values: one per category when `levels <= max_bins`,
    /// otherwise up to `max_bins` quantile bins with cuts at midpoints between
    /// neighbouring observed values.
    pub fn fit(values: &[f64], levels: Option<usize>, max_bins: usize) -> Binning {
        if let Some(k) = levels {
            if k <= max_bins {
                return Binning::Categorical { levels: k.max(1) };
            }
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (Some(&min), Some(&max)) = (sorted.first(), sorted.last()) else {
            return Binning::Numeric {
                cuts: Vec::new(),
                min: 0.0,
                max: 0.0,
            };
        };
        let mut distinct = sorted.clone();
        distinct.dedup();
        let cuts = if distinct.len() <= max_bins {
            distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
        } else {
            let n = sorted.len();
            let mut cuts: Vec<f64> = (1..max_bins)
                .filter_map(|q| {
                    let v = sorted[q * n / max_bins];
                    let next = distinct.partition_point(|&d| d <= v);
                    distinct.get(next).map(|&hi| 0.5 * (v + hi))
                })
                .collect();
            cuts.dedup();
            cuts
        };
        Binning::Numeric { cuts, min, max }
    }

    pub fn n_bins(&self) -> usize {
        match self {
            Binning::Numeric { cuts, .. } => cuts.len() + 1,
            Binning::Categorical { levels } => *levels,
        }
    }

    pub fn bin(&self, v: f64) -> usize {
        match self {
            Binning::Numeric { cuts, .. } => cuts.partition_point(|&c| c < v),
            Binning::Categorical { levels } => {
                if v >= 0.0 {
                    (v.round() as usize).min(levels - 1)
                } else {
                    0
                }
            }
        }
    }

    /// `(lower, upper)` of a numeric bin, using the training range for the
    /// outer bins; `None` for categorical bins.
    pub fn bounds(&self, b: usize) -> Option<(f64, f64)> {
        match self {
            Binning::Numeric { cuts, min, max } => {
                let lo = if b == 0 { *min } else { cuts[b - 1] };
                let hi = if b == cuts.len() { *max } else { cuts[b] };
                Some((lo, hi))
            }
            Binning::Categorical { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn few_distinct_values_get_one_bin_each() {
        let b = Binning::fit(&[3.0, 1.0, 2.0, 2.0, 1.0], None, 256);
        assert_eq!(b.n_bins(), 3);
        assert_eq!(b.bin(1.0), 0);
        assert_eq!(b.bin(2.0), 1);
        assert_eq!(b.bin(3.0), 2);
        assert_eq!(b.bin(-10.0), 0);
        assert_eq!(b.bin(10.0), 2);
        assert_eq!(b.bounds(0), Some((1.0, 1.5)));
        assert_eq!(b.bounds(2), Some((2.5, 3.0)));
    }

    #[test]
    fn quantile_bins_are_balanced() {
        let v: Vec<f64> = (0..1000).map(f64::from).collect();
        let b = Binning::fit(&v, None, 10);
        assert_eq!(b.n_bins(), 10);
        let mut counts = vec![0usize; 10];
        for &x in &v {
            counts[b.bin(x)] += 1;
        }
        assert!(counts.iter().all(|&c| c.abs_diff(100) <= 1), "{counts:?}");
    }

    #[test]
    fn heavy_ties_do_not_duplicate_cuts() {
        let mut v = vec![0.0; 900];
        v.extend((1..=100).map(f64::from));
        let Binning::Numeric { cuts, .. } = Binning::fit(&v, None, 20) else {
            panic!()
        };
        assert!(cuts.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(cuts[0], 0.5);
    }

    #[test]
    fn categorical_codes_clamp() {
        let b = Binning::fit(&[0.0, 1.0], Some(3), 256);
        assert_eq!(b.n_bins(), 3);
        assert_eq!(b.bin(2.0), 2);
        assert_eq!(b.bin(7.0), 2);
        assert_eq!(b.bin(-1.0), 0);
        assert!(b.bounds(0).is_none());
    }
}
