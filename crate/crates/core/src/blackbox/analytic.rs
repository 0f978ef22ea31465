//! Closed-form ground-truth functions with exact gradients.
//!
//! Categorical inputs only ever act as gates or offsets here, so their
//! partial derivative is zero by construction.

use serde::{Deserialize, Serialize};

/// One additive term of [`AnalyticFn::Terms`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "term", rename_all = "snake_case")]
pub enum Term {
    /// `coef * x_f`
    Linear { feature: usize, coef: f64 },
    /// `coef * max(0, x_f - knot)`
    Hinge { feature: usize, coef: f64, knot: f64 },
    /// `coef * sin(freq * x_f)`
    Sine { feature: usize, coef: f64, freq: f64 },
    /// `coef * x_a * x_b`
    Product { a: usize, b: usize, coef: f64 },
    /// `coef * x_f * 1{x_gate > threshold}`
    Gated {
        feature: usize,
        gate: usize,
        threshold: f64,
        coef: f64,
    },
    /// `coef * x_f * 1{x_gate == category}` for a categorical gate.
    CategoryGated {
        feature: usize,
        gate: usize,
        category: f64,
        coef: f64,
    },
    /// `offsets[x_f]` for a categorical feature.
    CategoryOffset { feature: usize, offsets: Vec<f64> },
}

impl Term {
    fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Term::Linear { feature, coef } => coef * x[feature],
            Term::Hinge {
                feature,
                coef,
                knot,
            } => coef * (x[feature] - knot).max(0.0),
            Term::Sine {
                feature,
                coef,
                freq,
            } => coef * (freq * x[feature]).sin(),
            Term::Product { a, b, coef } => coef * x[a] * x[b],
            Term::Gated {
                feature,
                gate,
                threshold,
                coef,
            } => {
                if x[gate] > threshold {
                    coef * x[feature]
                } else {
                    0.0
                }
            }
            Term::CategoryGated {
                feature,
                gate,
                category,
                coef,
            } => {
                if x[gate] == category {
                    coef * x[feature]
                } else {
                    0.0
                }
            }
            Term::CategoryOffset {
                feature,
                ref offsets,
            } => offsets.get(x[feature] as usize).copied().unwrap_or(0.0),
        }
    }

    fn add_gradient(&self, x: &[f64], grad: &mut [f64]) {
        match *self {
            Term::Linear { feature, coef } => grad[feature] += coef,
            Term::Hinge {
                feature,
                coef,
                knot,
            } => {
                if x[feature] > knot {
                    grad[feature] += coef;
                }
            }
            Term::Sine {
                feature,
                coef,
                freq,
            } => grad[feature] += coef * freq * (freq * x[feature]).cos(),
            Term::Product { a, b, coef } => {
                grad[a] += coef * x[b];
                grad[b] += coef * x[a];
            }
            Term::Gated {
                feature,
                gate,
                threshold,
                coef,
            } => {
                if x[gate] > threshold {
                    grad[feature] += coef;
                }
            }
            Term::CategoryGated {
                feature,
                gate,
                category,
                coef,
            } => {
                if x[gate] == category {
                    grad[feature] += coef;
                }
            }
            Term::CategoryOffset { .. } => {}
        }
    }

    fn categorical_inputs(&self) -> Vec<usize> {
        match *self {
            Term::CategoryGated { gate, .. } => vec![gate],
            Term::CategoryOffset { feature, .. } => vec![feature],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "function", rename_all = "snake_case")]
pub enum AnalyticFn {
    /// `coefficient * x2 * 1{x1 > 0} * 1{x3 == active_category}` over
    /// columns `(x1, x2, x3)`.
    Toy {
        coefficient: f64,
        active_category: f64,
    },
    Terms {
        arity: usize,
        intercept: f64,
        terms: Vec<Term>,
    },
}

impl AnalyticFn {
    pub fn toy(coefficient: f64, active_category: f64) -> Self {
        AnalyticFn::Toy {
            coefficient,
            active_category,
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            AnalyticFn::Toy { .. } => 3,
            AnalyticFn::Terms { arity, .. } => *arity,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            AnalyticFn::Toy {
                coefficient,
                active_category,
            } => {
                if x[0] > 0.0 && x[2] == *active_category {
                    coefficient * x[1]
                } else {
                    0.0
                }
            }
            AnalyticFn::Terms {
                intercept, terms, ..
            } => intercept + terms.iter().map(|t| t.value(x)).sum::<f64>(),
        }
    }

    /// Exact gradient; indicator boundaries take the value of the side the
    /// point lies on (`x1 = 0` is inactive for the toy).
    pub fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        match self {
            AnalyticFn::Toy {
                coefficient,
                active_category,
            } => {
                if x[0] > 0.0 && x[2] == *active_category {
                    grad[1] = *coefficient;
                }
            }
            AnalyticFn::Terms { terms, .. } => {
                for t in terms {
                    t.add_gradient(x, grad);
                }
            }
        }
    }

    /// Columns that are used as discrete values and have no derivative.
    pub fn categorical_inputs(&self) -> Vec<usize> {
        match self {
            AnalyticFn::Toy { .. } => vec![2],
            AnalyticFn::Terms { terms, .. } => {
                let mut v: Vec<usize> = terms.iter().flat_map(Term::categorical_inputs).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_values() {
        let f = AnalyticFn::toy(8.0, 1.0);
        assert_eq!(f.value(&[0.5, 0.5, 1.0]), 4.0);
        assert_eq!(f.value(&[-0.5, 0.9, 1.0]), 0.0);
        assert_eq!(f.value(&[0.5, 0.9, 0.0]), 0.0);
        assert_eq!(f.value(&[0.0, 0.9, 1.0]), 0.0);
    }

    #[test]
    fn toy_gradients() {
        let f = AnalyticFn::toy(8.0, 1.0);
        let mut g = [0.0; 3];
        f.gradient(&[0.5, 0.3, 1.0], &mut g);
        assert_eq!(g, [0.0, 8.0, 0.0]);
        f.gradient(&[-0.5, 0.3, 1.0], &mut g);
        assert_eq!(g, [0.0, 0.0, 0.0]);
        f.gradient(&[0.0, 0.3, 1.0], &mut g);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn term_gradients() {
        let f = AnalyticFn::Terms {
            arity: 3,
            intercept: 1.0,
            terms: vec![
                Term::Linear { feature: 0, coef: 3.0 },
                Term::Product { a: 1, b: 2, coef: 2.0 },
                Term::Hinge {
                    feature: 0,
                    coef: -1.0,
                    knot: 0.25,
                },
            ],
        };
        let mut g = [0.0; 3];
        f.gradient(&[0.5, 2.0, -1.0], &mut g);
        assert_eq!(g, [2.0, -2.0, 4.0]);
        assert_eq!(f.value(&[0.5, 2.0, -1.0]), 1.0 + 1.5 - 4.0 - 0.25);
    }

    #[test]
    fn json_round_trip() {
        let f = AnalyticFn::Terms {
            arity: 2,
            intercept: 0.0,
            terms: vec![Term::CategoryOffset {
                feature: 1,
                offsets: vec![0.0, 2.0],
            }],
        };
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<AnalyticFn>(&s).unwrap(), f);
        assert_eq!(f.categorical_inputs(), vec![1]);
    }
}
