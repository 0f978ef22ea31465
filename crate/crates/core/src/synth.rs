//! Synthetic datasets whose ground truth is an [`AnalyticFn`] with exact gradients.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::blackbox::{AnalyticFn, BlackBoxModel, Term};
use crate::data::{Dataset, FeatureMeta};
use crate::error::{RamError, Result};

/// `y = coefficient * x2 * 1{x1 > 0} * 1{x3 = active_category} + noise` with
/// `x1, x2 ~ U(-1, 1)` and `x3 ~ Bernoulli(0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub n: usize,
    pub seed: u64,
    pub noise_sd: f64,
    pub active_category: u8,
    pub coefficient: f64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            n: 10_000,
            seed: 0,
            noise_sd: 0.0,
            active_category: 1,
            coefficient: 8.0,
        }
    }
}

/// Generic generator: `numeric` columns `~ U(-1, 1)` followed by uniform
/// categorical columns with the given level counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub seed: u64,
    pub noise_sd: f64,
    pub numeric: usize,
    pub categorical_levels: Vec<usize>,
    pub function: AnalyticFn,
}

pub fn generate(spec: &SynthSpec) -> Result<(Dataset, BlackBoxModel)> {
    let d = spec.numeric + spec.categorical_levels.len();
    if spec.n == 0 {
        return Err(RamError::InvalidArgument("n must be at least 1".into()));
    }
    if !(spec.noise_sd >= 0.0) {
        return Err(RamError::InvalidArgument("noise sd must be non-negative".into()));
    }
    if spec.function.arity() != d {
        return Err(RamError::ArityMismatch {
            expected: spec.function.arity(),
            got: d,
        });
    }
    if spec.categorical_levels.iter().any(|&k| k < 1) {
        return Err(RamError::InvalidArgument("categorical columns need a level".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut x = Array2::zeros((spec.n, d));
    for mut row in x.rows_mut() {
        for j in 0..spec.numeric {
            row[j] = rng.random_range(-1.0..1.0);
        }
        for (k, &levels) in spec.categorical_levels.iter().enumerate() {
            row[spec.numeric + k] = rng.random_range(0..levels) as f64;
        }
    }
    let noise = Normal::new(0.0, spec.noise_sd.max(f64::MIN_POSITIVE)).expect("valid sd");
    let y: Array1<f64> = x
        .rows()
        .into_iter()
        .map(|r| {
            let eps = if spec.noise_sd > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            spec.function.value(&r.to_vec()) + eps
        })
        .collect();
    let mut features: Vec<FeatureMeta> = (0..spec.numeric)
        .map(|j| FeatureMeta::numeric(format!("x{}", j + 1), j, -1.0, 1.0))
        .collect();
    for (k, &levels) in spec.categorical_levels.iter().enumerate() {
        let j = spec.numeric + k;
        features.push(FeatureMeta::categorical(
            format!("x{}", j + 1),
            j,
            (0..levels).map(|l| l.to_string()).collect(),
        ));
    }
    let ds = Dataset::new(features, x, y, "y")?;
    Ok((ds, BlackBoxModel::Analytic(spec.function.clone())))
}

/// The three-feature toy problem and its analytic black box.
pub fn generate_toy(spec: &ToySpec) -> Result<(Dataset, BlackBoxModel)> {
    if spec.active_category > 1 {
        return Err(RamError::InvalidArgument("active category must be 0 or 1".into()));
    }
    generate(&SynthSpec {
        n: spec.n,
        seed: spec.seed,
        noise_sd: spec.noise_sd,
        numeric: 2,
        categorical_levels: vec![2],
        function: AnalyticFn::toy(spec.coefficient, f64::from(spec.active_category)),
    })
}

/// Additive ground truth (linear numeric terms plus a categorical offset):
/// every numeric feature has a constant partial derivative.
pub fn additive_spec(n: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        n,
        seed,
        noise_sd: 0.0,
        numeric: 4,
        categorical_levels: vec![3],
        function: AnalyticFn::Terms {
            arity: 5,
            intercept: 0.5,
            terms: vec![
                Term::Linear { feature: 0, coef: 1.5 },
                Term::Linear { feature: 1, coef: -2.0 },
                Term::Linear { feature: 2, coef: 0.25 },
                Term::Linear { feature: 3, coef: 4.0 },
                Term::CategoryOffset {
                    feature: 4,
                    offsets: vec![0.0, 1.0, -3.0],
                },
            ],
        },
    }
}

/// Regionally additive ground truth with one numeric and one categorical gate.
pub fn interaction_spec(n: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        n,
        seed,
        noise_sd: 0.1,
        numeric: 4,
        categorical_levels: vec![2],
        function: AnalyticFn::Terms {
            arity: 5,
            intercept: 0.0,
            terms: vec![
                Term::Gated {
                    feature: 0,
                    gate: 1,
                    threshold: 0.4,
                    coef: 3.0,
                },
                Term::CategoryGated {
                    feature: 2,
                    gate: 4,
                    category: 1.0,
                    coef: -2.0,
                },
                Term::Linear { feature: 1, coef: 1.0 },
                Term::Sine {
                    feature: 3,
                    coef: 1.0,
                    freq: 3.0,
                },
            ],
        },
    }
}
