//! Feature-importance reports from a learned metric matrix.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MetricMatrix;
use crate::scalar::Scalar;

/// Relative cutoff for single-feature importance plots.
pub const THRESHOLD_LOOSE: f64 = 0.3;
/// Stricter cutoff used for the larger descriptor.
pub const THRESHOLD_STRICT: f64 = 0.5;
pub const DEFAULT_TOP_PAIRS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceReport {
    pub k: usize,
    pub threshold_fraction: f64,
    pub diag: Vec<f64>,
    /// Indices with `diag ≥ threshold · max diag`, ascending.
    pub dominant: Vec<usize>,
    /// `(i, j, |M_ij|)` with `i < j`, non-increasing magnitude.
    pub top_pairs: Vec<(usize, usize, f64)>,
}

impl ImportanceReport {
    /// All-zero (or non-positive) diagonal: nothing stands out.
    pub fn is_degenerate(&self) -> bool {
        !self.diag.iter().any(|&d| d > 0.0)
    }
}

/// Diagonal importance with the default number of top pairs.
pub fn diag_importance<T: Scalar>(m: &MetricMatrix<T>, threshold_fraction: f64) -> Result<ImportanceReport> {
    importance_report(m, threshold_fraction, DEFAULT_TOP_PAIRS)
}

pub fn importance_report<T: Scalar>(
    m: &MetricMatrix<T>,
    threshold_fraction: f64,
    n_pairs: usize,
) -> Result<ImportanceReport> {
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(Error::Validation("threshold fraction must lie in (0, 1)".into()));
    }
    let diag: Vec<f64> = m.matrix().diag().iter().map(|x| x.to_f64_lossy()).collect();
    let max = diag.iter().copied().fold(0.0f64, f64::max);
    let dominant = if max > 0.0 {
        let cut = threshold_fraction * max;
        (0..diag.len()).filter(|&i| diag[i] >= cut).collect()
    } else {
        log::warn!("degenerate metric: no positive diagonal entry");
        Vec::new()
    };
    Ok(ImportanceReport {
        k: diag.len(),
        threshold_fraction,
        diag,
        dominant,
        top_pairs: top_offdiag_pairs(m, n_pairs),
    })
}

/// The `n` largest `|M_ij|`, `i < j`; ties by lower `(i, j)`.
pub fn top_offdiag_pairs<T: Scalar>(m: &MetricMatrix<T>, n: usize) -> Vec<(usize, usize, f64)> {
    let a = m.matrix();
    let k = a.rows();
    let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(k * k.saturating_sub(1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            pairs.push((i, j, a[(i, j)].to_f64_lossy().abs()));
        }
    }
    pairs.sort_by(|x, y| y.2.total_cmp(&x.2).then((x.0, x.1).cmp(&(y.0, y.1))));
    pairs.truncate(n);
    pairs
}

/// Layout of a concatenated 3D-SIFT descriptor: `n_subregions` histograms
/// of `n_directions` bins, subregion-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiftIndexMap {
    pub n_subregions: usize,
    pub n_directions: usize,
}

impl SiftIndexMap {
    /// 4×4×4 subregions × 12 icosahedron directions (768 features).
    pub const FULL: Self = Self {
        n_subregions: 64,
        n_directions: 12,
    };
    /// Directions subsampled 2:1 (384 features).
    pub const SUBSAMPLED: Self = Self {
        n_subregions: 64,
        n_directions: 6,
    };

    pub fn len(&self) -> usize {
        self.n_subregions * self.n_directions
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SiftIndex {
    pub subregion: usize,
    /// `(x, y, z)` with x varying fastest.
    pub xyz: [usize; 3],
    pub direction: usize,
}

pub fn decode_sift_index(e: usize, map: &SiftIndexMap) -> Result<SiftIndex> {
    if e >= map.len() {
        return Err(Error::IndexOutOfRange { index: e, len: map.len() });
    }
    let subregion = e / map.n_directions;
    Ok(SiftIndex {
        subregion,
        xyz: [subregion % 4, (subregion / 4) % 4, subregion / 16],
        direction: e % map.n_directions,
    })
}

pub fn encode_sift_index(subregion: usize, direction: usize, map: &SiftIndexMap) -> Result<usize> {
    if subregion >= map.n_subregions {
        return Err(Error::IndexOutOfRange { index: subregion, len: map.n_subregions });
    }
    if direction >= map.n_directions {
        return Err(Error::IndexOutOfRange { index: direction, len: map.n_directions });
    }
    Ok(subregion * map.n_directions + direction)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominantEntry {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub subregion: Option<[usize; 3]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub direction: Option<usize>,
}

/// On-disk form of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    #[serde(rename = "K")]
    pub k: usize,
    pub threshold: f64,
    pub diag: Vec<f64>,
    pub dominant: Vec<DominantEntry>,
    pub top_pairs: Vec<(usize, usize, f64)>,
}

impl ReportDocument {
    pub fn build(report: &ImportanceReport, map: Option<&SiftIndexMap>) -> Result<Self> {
        if let Some(map) = map {
            if map.len() != report.k {
                return Err(Error::Validation(format!(
                    "descriptor map covers {} features but the metric has K = {}",
                    map.len(),
                    report.k
                )));
            }
        }
        let dominant = report
            .dominant
            .iter()
            .map(|&index| {
                Ok(match map {
                    Some(map) => {
                        let s = decode_sift_index(index, map)?;
                        DominantEntry {
                            index,
                            subregion: Some(s.xyz),
                            direction: Some(s.direction),
                        }
                    }
                    None => DominantEntry {
                        index,
                        subregion: None,
                        direction: None,
                    },
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            k: report.k,
            threshold: report.threshold_fraction,
            diag: report.diag.clone(),
            dominant,
            top_pairs: report.top_pairs.clone(),
        })
    }

    pub fn to_report(&self) -> ImportanceReport {
        ImportanceReport {
            k: self.k,
            threshold_fraction: self.threshold,
            diag: self.diag.clone(),
            dominant: self.dominant.iter().map(|d| d.index).collect(),
            top_pairs: self.top_pairs.clone(),
        }
    }
}

pub fn emit_report(report: &ImportanceReport, map: Option<&SiftIndexMap>, path: impl AsRef<Path>) -> Result<()> {
    let doc = ReportDocument::build(report, map)?;
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(f, &doc)?;
    Ok(())
}

pub fn load_report(path: impl AsRef<Path>) -> Result<ReportDocument> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    Ok(serde_json::from_reader(f)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use proptest::prelude::*;

    fn metric(rows: &[&[f64]]) -> MetricMatrix<f64> {
        MetricMatrix::new(Matrix::from_rows(rows)).unwrap()
    }

    #[test]
    fn dominant_examples() {
        let m = MetricMatrix::new(Matrix::from_diag(&[1.0, 0.2, 0.5])).unwrap();
        assert_eq!(diag_importance(&m, THRESHOLD_LOOSE).unwrap().dominant, vec![0, 2]);
        assert_eq!(diag_importance(&m, THRESHOLD_STRICT).unwrap().dominant, vec![0, 2]);
        let m = MetricMatrix::new(Matrix::from_diag(&[1.0, 0.2, 0.49])).unwrap();
        assert_eq!(diag_importance(&m, THRESHOLD_STRICT).unwrap().dominant, vec![0]);
        let z = MetricMatrix::new(Matrix::<f64>::zeros(3, 3)).unwrap();
        let r = diag_importance(&z, THRESHOLD_LOOSE).unwrap();
        assert!(r.dominant.is_empty() && r.is_degenerate());
    }

    #[test]
    fn pair_ranking() {
        let d = MetricMatrix::new(Matrix::from_diag(&[1.0, 1.0, 1.0])).unwrap();
        assert!(top_offdiag_pairs(&d, 3).iter().all(|p| p.2 == 0.0));
        let m = metric(&[
            &[2.0, 0.0, 0.0, 0.0],
            &[0.0, 2.0, 0.0, -0.7],
            &[0.0, 0.0, 2.0, 0.0],
            &[0.0, -0.7, 0.0, 2.0],
        ]);
        let p = top_offdiag_pairs(&m, 100);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], (1, 3, 0.7));
        assert!(p.windows(2).all(|w| w[0].2 >= w[1].2));
    }

    #[test]
    fn sift_decoding() {
        let s = decode_sift_index(0, &SiftIndexMap::FULL).unwrap();
        assert_eq!((s.subregion, s.xyz, s.direction), (0, [0, 0, 0], 0));
        // 1-based (direction 2, subregion 41)
        let e = encode_sift_index(40, 1, &SiftIndexMap::FULL).unwrap();
        assert_eq!(e, 481);
        let s = decode_sift_index(481, &SiftIndexMap::FULL).unwrap();
        assert_eq!((s.subregion, s.xyz, s.direction), (40, [0, 2, 2], 1));
        let s = decode_sift_index(13, &SiftIndexMap::SUBSAMPLED).unwrap();
        assert_eq!((s.subregion, s.direction), (2, 1));
        assert!(decode_sift_index(768, &SiftIndexMap::FULL).is_err());
    }

    #[test]
    fn report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let m = MetricMatrix::new(Matrix::from_diag(&[0.1, 2.0, 1.5, 0.0, 0.0, 0.0])).unwrap();
        let r = diag_importance(&m, THRESHOLD_LOOSE).unwrap();
        emit_report(&r, None, &path).unwrap();
        let doc = load_report(&path).unwrap();
        assert_eq!(doc.to_report(), r);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains("subregion"));

        let map = SiftIndexMap { n_subregions: 2, n_directions: 3 };
        emit_report(&r, Some(&map), &path).unwrap();
        let doc = load_report(&path).unwrap();
        assert_eq!(doc.dominant[0].direction, Some(1));
        assert_eq!(doc.dominant[0].subregion, Some([0, 0, 0]));
        assert!(emit_report(&r, Some(&SiftIndexMap::FULL), &path).is_err());
    }

    proptest! {
        #[test]
        fn decode_is_bijective(e in 0usize..768) {
            let s = decode_sift_index(e, &SiftIndexMap::FULL).unwrap();
            prop_assert_eq!(encode_sift_index(s.subregion, s.direction, &SiftIndexMap::FULL).unwrap(), e);
            prop_assert_eq!(s.xyz[0] + 4 * s.xyz[1] + 16 * s.xyz[2], s.subregion);
        }

        #[test]
        fn rescaling_keeps_selection(d in proptest::collection::vec(0.0f64..3.0, 5), off in -0.2f64..0.2, alpha in 0.01f64..100.0) {
            let mut a = Matrix::from_diag(&d);
            for i in 0..5 { a[(i, i)] += 1.0; }
            a[(0, 3)] = off;
            a[(3, 0)] = off;
            a[(1, 2)] = 0.5 * off;
            a[(2, 1)] = 0.5 * off;
            let m = MetricMatrix::new(a).unwrap();
            let r1 = diag_importance(&m, THRESHOLD_LOOSE).unwrap();
            let r2 = diag_importance(&m.scaled(alpha), THRESHOLD_LOOSE).unwrap();
            prop_assert_eq!(r1.dominant, r2.dominant);
            let o1: Vec<_> = r1.top_pairs.iter().map(|p| (p.0, p.1)).collect();
            let o2: Vec<_> = r2.top_pairs.iter().map(|p| (p.0, p.1)).collect();
            prop_assert_eq!(o1, o2);
        }
    }
}
