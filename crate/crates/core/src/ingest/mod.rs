//! Spike recordings, group labels, feature tables and balanced splits.

mod csvio;
mod synth;

pub use csvio::{
    load_features, load_labels, load_metric, load_spikes, read_metric, write_features, write_labels, write_metric,
};
pub use synth::{planted_label, synth_generate, PlantedTruth, SynthSpec, Synthetic};

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Binary group response of one time bin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub fn from_i64(v: i64) -> Option<Self> {
        match v {
            1 => Some(Label::Pos),
            -1 => Some(Label::Neg),
            _ => None,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Pos => 1,
            Label::Neg => -1,
        }
    }

    pub fn value<T: Scalar>(self) -> T {
        match self {
            Label::Pos => T::one(),
            Label::Neg => -T::one(),
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }
}

/// Spike events of a recording, `(cell, repeat, bin)` triples.
#[derive(Clone, Debug)]
pub struct SpikeEvents {
    events: Vec<(usize, usize, usize)>,
    pub n_cells: usize,
    pub n_repeats: usize,
    pub n_bins: usize,
}

impl SpikeEvents {
    pub fn new(
        events: Vec<(usize, usize, usize)>,
        n_cells: usize,
        n_repeats: usize,
        n_bins: usize,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(events.len());
        for &(c, r, b) in &events {
            if c >= n_cells || r >= n_repeats || b >= n_bins {
                return Err(Error::Validation(format!(
                    "spike ({c},{r},{b}) outside {n_cells}x{n_repeats}x{n_bins}"
                )));
            }
            if !seen.insert((c, r, b)) {
                return Err(Error::Validation(format!("duplicate spike ({c},{r},{b})")));
            }
        }
        Ok(Self {
            events,
            n_cells,
            n_repeats,
            n_bins,
        })
    }

    pub fn events(&self) -> &[(usize, usize, usize)] {
        &self.events
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupLabels(pub Vec<Label>);

impl GroupLabels {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.0.iter().filter(|&&l| l == label).count()
    }

    pub fn as_slice(&self) -> &[Label] {
        &self.0
    }
}

/// A bin is `+1` if any cell fires in it in any repeat, otherwise `-1`
/// (the all-silent state).
pub fn group_labels(spikes: &SpikeEvents) -> GroupLabels {
    let mut labels = vec![Label::Neg; spikes.n_bins];
    for &(_, _, b) in spikes.events() {
        labels[b] = Label::Pos;
    }
    GroupLabels(labels)
}

/// Per-cell fraction of bins in which the cell fires in at least one repeat.
pub fn firing_stats(spikes: &SpikeEvents) -> Vec<f64> {
    if spikes.n_bins == 0 {
        return vec![0.0; spikes.n_cells];
    }
    let mut fired = vec![vec![false; spikes.n_bins]; spikes.n_cells];
    for &(c, _, b) in spikes.events() {
        fired[c][b] = true;
    }
    fired
        .iter()
        .map(|row| row.iter().filter(|&&f| f).count() as f64 / spikes.n_bins as f64)
        .collect()
}

/// Per-bin feature vectors. Row `r` belongs to time bin `bins[r]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable<T> {
    pub vectors: Matrix<T>,
    pub bins: Vec<usize>,
    /// Frames per batch; bins with fewer preceding frames are not usable.
    pub batch_size: usize,
}

impl<T: Scalar> FeatureTable<T> {
    pub fn new(vectors: Matrix<T>, bins: Vec<usize>) -> Result<Self> {
        if bins.len() != vectors.rows() {
            return Err(Error::DimensionMismatch {
                expected: vectors.rows(),
                got: bins.len(),
            });
        }
        if vectors.cols() == 0 {
            return Err(Error::Validation("feature dimension must be at least 1".into()));
        }
        if !vectors.is_finite() {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        Ok(Self {
            vectors,
            bins,
            batch_size: 0,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn n_rows(&self) -> usize {
        self.vectors.rows()
    }

    pub fn row(&self, r: usize) -> &[T] {
        self.vectors.row(r)
    }

    /// Drops bins preceded by fewer than `u` frames.
    pub fn with_batch_size(&self, u: usize) -> Self {
        let keep: Vec<usize> = (0..self.n_rows()).filter(|&r| self.bins[r] >= u).collect();
        let vectors = Matrix::from_fn(keep.len(), self.feature_dim(), |i, j| {
            self.vectors[(keep[i], j)]
        });
        Self {
            vectors,
            bins: keep.iter().map(|&r| self.bins[r]).collect(),
            batch_size: u,
        }
    }

    /// 2:1 subsampling of the feature dimensions (keeps even indices).
    pub fn subsample_even(&self) -> Self {
        let k = self.feature_dim().div_ceil(2);
        Self {
            vectors: Matrix::from_fn(self.n_rows(), k, |i, j| self.vectors[(i, 2 * j)]),
            bins: self.bins.clone(),
            batch_size: self.batch_size,
        }
    }

    /// Gathers rows in the given order into a node-feature matrix.
    pub fn gather(&self, rows: &[usize]) -> Matrix<T> {
        Matrix::from_fn(rows.len(), self.feature_dim(), |i, j| {
            self.vectors[(rows[i], j)]
        })
    }

    pub fn row_of_bin(&self, bin: usize) -> Option<usize> {
        self.bins.iter().position(|&b| b == bin)
    }
}

/// Features, aligned labels and a train/validation split (row indices).
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    pub features: FeatureTable<T>,
    pub labels: GroupLabels,
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        features: FeatureTable<T>,
        labels: GroupLabels,
        n_train: usize,
        n_val: usize,
        seed: u64,
    ) -> Result<Self> {
        if labels.len() != features.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: features.n_rows(),
                got: labels.len(),
            });
        }
        let (train_ids, val_ids) = split_balanced(&labels, n_train, n_val, seed)?;
        Ok(Self {
            features,
            labels,
            train_ids,
            val_ids,
        })
    }

    pub fn train_labels(&self) -> Vec<Label> {
        self.train_ids.iter().map(|&i| self.labels.0[i]).collect()
    }

    pub fn val_labels(&self) -> Vec<Label> {
        self.val_ids.iter().map(|&i| self.labels.0[i]).collect()
    }
}

/// Shape of a balanced sample: `(positives, negatives)`. Odd sizes give the
/// extra slot to the positive class.
fn balanced_counts(size: usize) -> (usize, usize) {
    (size.div_ceil(2), size / 2)
}

/// Draws disjoint, label-balanced train and validation index sets.
///
/// Returned ids are sorted ascending so that index order is temporal order.
pub fn split_balanced(
    labels: &GroupLabels,
    n_train: usize,
    n_val: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (tp, tn) = balanced_counts(n_train);
    let (vp, vn) = balanced_counts(n_val);
    let mut pos: Vec<usize> = pool(labels, Label::Pos, &HashSet::new());
    let mut neg: Vec<usize> = pool(labels, Label::Neg, &HashSet::new());
    for (label, needed, have) in [
        (Label::Pos, tp + vp, pos.len()),
        (Label::Neg, tn + vn, neg.len()),
    ] {
        if needed > have {
            return Err(Error::InsufficientClassCount {
                label: label.as_i8(),
                needed,
                available: have,
            });
        }
    }
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut train: Vec<usize> = pos[..tp].iter().chain(&neg[..tn]).copied().collect();
    let mut val: Vec<usize> = pos[tp..tp + vp]
        .iter()
        .chain(&neg[tn..tn + vn])
        .copied()
        .collect();
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Draws one label-balanced sample avoiding `exclude`.
pub fn sample_balanced(
    labels: &GroupLabels,
    size: usize,
    exclude: &[usize],
    seed: u64,
) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exclude: HashSet<usize> = exclude.iter().copied().collect();
    let (np, nn) = balanced_counts(size);
    let mut out = Vec::with_capacity(size);
    for (label, needed) in [(Label::Pos, np), (Label::Neg, nn)] {
        let mut p = pool(labels, label, &exclude);
        if needed > p.len() {
            return Err(Error::InsufficientClassCount {
                label: label.as_i8(),
                needed,
                available: p.len(),
            });
        }
        p.shuffle(&mut rng);
        out.extend_from_slice(&p[..needed]);
    }
    out.sort_unstable();
    Ok(out)
}

fn pool(labels: &GroupLabels, label: Label, exclude: &HashSet<usize>) -> Vec<usize> {
    labels
        .0
        .iter()
        .enumerate()
        .filter(|(i, &l)| l == label && !exclude.contains(i))
        .map(|(i, _)| i)
        .collect()
}
