//! Metastable regions `A` and `B` as point predicates.

use std::sync::Arc;

use crate::dynamics::Potential;

#[derive(Debug, Clone)]
pub enum Regions {
    /// `A = {V ≤ level, x₁ ≤ 0}`, `B = {V ≤ level, x₁ ≥ 0}`.
    SublevelSplit {
        potential: Arc<dyn Potential>,
        level: f64,
    },
    /// `A = {x₁ < a_max}`, `B = {x₁ > b_min}`.
    Slab { a_max: f64, b_min: f64 },
}

impl Regions {
    pub fn sublevel_split(potential: Arc<dyn Potential>, level: f64) -> Self {
        Regions::SublevelSplit { potential, level }
    }

    pub fn slab(a_max: f64, b_min: f64) -> Self {
        Regions::Slab { a_max, b_min }
    }

    #[inline]
    pub fn in_a(&self, x: &[f64]) -> bool {
        match self {
            Regions::SublevelSplit { potential, level } => {
                x[0] <= 0.0 && potential.value(x) <= *level
            }
            Regions::Slab { a_max, .. } => x[0] < *a_max,
        }
    }

    #[inline]
    pub fn in_b(&self, x: &[f64]) -> bool {
        match self {
            Regions::SublevelSplit { potential, level } => {
                x[0] >= 0.0 && potential.value(x) <= *level
            }
            Regions::Slab { b_min, .. } => x[0] > *b_min,
        }
    }
}
