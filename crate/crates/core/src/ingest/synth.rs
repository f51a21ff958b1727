//! Planted-metric synthetic datasets.
//!
//! Features are i.i.d. standard normal. The label of a point is the sign of a
//! linear score over a random subset of "informative" dimensions, optionally
//! flipped with probability `noise_rate`. Points whose score falls inside a
//! margin band (10% of the score's standard deviation) are redrawn.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{FeatureTable, GroupLabels, Label};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

const MARGIN_FRACTION: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub k: usize,
    pub n_points: usize,
    pub n_informative: usize,
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            k: 20,
            n_points: 400,
            n_informative: 4,
            noise_rate: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Validation("k must be at least 1".into()));
        }
        if self.n_informative == 0 || self.n_informative > self.k {
            return Err(Error::Validation(format!(
                "n_informative must be in 1..={}",
                self.k
            )));
        }
        if !(0.0..0.5).contains(&self.noise_rate) {
            return Err(Error::Validation("noise_rate must be in [0, 0.5)".into()));
        }
        Ok(())
    }
}

/// The planted rule behind a synthetic dataset, written as a JSON sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    /// Sorted indices of the informative dimensions.
    pub planted: Vec<usize>,
    /// Score weight of each planted dimension, aligned with `planted`.
    pub weights: Vec<f64>,
    /// Bins whose label was flipped by label noise.
    pub flipped: Vec<usize>,
    pub spec: SynthSpec,
}

impl PlantedTruth {
    /// Label the noiseless planted rule assigns to a feature vector.
    pub fn label_of<T: Scalar>(&self, f: &[T]) -> Label {
        planted_label(&self.planted, &self.weights, f)
    }
}

#[derive(Clone, Debug)]
pub struct Synthetic<T> {
    pub features: FeatureTable<T>,
    pub labels: GroupLabels,
    pub truth: PlantedTruth,
}

pub(crate) fn planted_score<T: Scalar>(planted: &[usize], weights: &[f64], f: &[T]) -> f64 {
    planted
        .iter()
        .zip(weights)
        .map(|(&p, &w)| w * f[p].to_f64_lossy())
        .sum()
}

pub fn planted_label<T: Scalar>(planted: &[usize], weights: &[f64], f: &[T]) -> Label {
    if planted_score(planted, weights, f) > 0.0 {
        Label::Pos
    } else {
        Label::Neg
    }
}

pub fn synth_generate<T: Scalar>(spec: &SynthSpec) -> Result<Synthetic<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut planted = sample(&mut rng, spec.k, spec.n_informative).into_vec();
    planted.sort_unstable();
    let weights: Vec<f64> = planted
        .iter()
        .map(|_| {
            let mag: f64 = rng.random_range(0.5..1.5);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    let score_std = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    let band = MARGIN_FRACTION * score_std;

    let mut data = Vec::with_capacity(spec.n_points * spec.k);
    let mut labels = Vec::with_capacity(spec.n_points);
    let mut flipped = Vec::new();
    let mut row = vec![0.0f64; spec.k];
    for bin in 0..spec.n_points {
        let score = loop {
            for v in row.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let s = planted_score(&planted, &weights, &row);
            if s.abs() >= band {
                break s;
            }
        };
        let mut label = if score > 0.0 { Label::Pos } else { Label::Neg };
        if spec.noise_rate > 0.0 && rng.random_bool(spec.noise_rate) {
            label = label.opposite();
            flipped.push(bin);
        }
        labels.push(label);
        data.extend(row.iter().map(|&v| T::c(v)));
    }
    let vectors = Matrix::from_vec(spec.n_points, spec.k, data)?;
    let features = FeatureTable::new(vectors, (0..spec.n_points).collect())?;
    Ok(Synthetic {
        features,
        labels: GroupLabels(labels),
        truth: PlantedTruth {
            planted,
            weights,
            flipped,
            spec: spec.clone(),
        },
    })
}
