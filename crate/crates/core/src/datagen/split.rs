use rand::seq::index::sample;
use rand::Rng;

use super::synth::stream;
use super::DatagenError;
use crate::data::ClusteredDataset;

const STREAM_SPLIT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub per_cluster_min: usize,
    pub per_cluster_max: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        Self { per_cluster_min: 3, per_cluster_max: 5, seed }
    }
}

/// Train and test row ids of a parent dataset, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn apply(&self, ds: &ClusteredDataset) -> (ClusteredDataset, ClusteredDataset) {
        (ds.subset(&self.train), ds.subset(&self.test))
    }

    fn from_mask(in_train: &[bool]) -> Self {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, &t) in in_train.iter().enumerate() {
            if t {
                train.push(i);
            } else {
                test.push(i);
            }
        }
        Self { train, test }
    }
}

/// Draws `min..=max` training rows uniformly from every cluster; the rest is
/// test data.
pub fn split_rows(ds: &ClusteredDataset, spec: &SplitSpec) -> Result<Split, DatagenError> {
    if spec.per_cluster_min == 0 || spec.per_cluster_min > spec.per_cluster_max {
        return Err(DatagenError::Spec(format!(
            "per-cluster range {}..={} is empty or starts at 0",
            spec.per_cluster_min, spec.per_cluster_max
        )));
    }
    let groups = ds.cluster_rows();
    for (i, rows) in groups.iter().enumerate() {
        if rows.len() < spec.per_cluster_max {
            return Err(DatagenError::ClusterTooSmall {
                cluster: i + 1,
                size: rows.len(),
                needed: spec.per_cluster_max,
            });
        }
    }
    let mut rng = stream(spec.seed, STREAM_SPLIT);
    let mut in_train = vec![false; ds.n()];
    for rows in &groups {
        let take = rng.random_range(spec.per_cluster_min..=spec.per_cluster_max);
        for idx in sample(&mut rng, rows.len(), take) {
            in_train[rows[idx]] = true;
        }
    }
    Ok(Split::from_mask(&in_train))
}

pub fn split(
    ds: &ClusteredDataset,
    spec: &SplitSpec,
) -> Result<(ClusteredDataset, ClusteredDataset), DatagenError> {
    Ok(split_rows(ds, spec)?.apply(ds))
}

/// Uniformly draws `round(fraction · n)` training rows (at least one, and at
/// least one left for testing).
pub fn fraction_split(n: usize, fraction: f64, seed: u64) -> Result<Split, DatagenError> {
    if !(fraction > 0.0 && fraction < 1.0) || n < 2 {
        return Err(DatagenError::Spec(format!(
            "training fraction {fraction} of {n} rows leaves an empty side"
        )));
    }
    let take = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = stream(seed, STREAM_SPLIT);
    let mut in_train = vec![false; n];
    for i in sample(&mut rng, n, take) {
        in_train[i] = true;
    }
    Ok(Split::from_mask(&in_train))
}
