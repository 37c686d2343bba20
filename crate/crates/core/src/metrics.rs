//! Accuracy, disparate impact and the fairness-constraint residual.

use thiserror::Error;

use crate::data::ClusteredDataset;
use crate::models::FittedModel;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    Length { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("sensitive attribute takes a single value, groups are undefined")]
    ConstantSensitive,
}

fn same_len(left: usize, right: usize) -> Result<(), MetricsError> {
    if left != right {
        return Err(MetricsError::Length { left, right });
    }
    if left == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

pub fn accuracy(y_true: &[i8], y_pred: &[i8]) -> Result<f64, MetricsError> {
    same_len(y_true.len(), y_pred.len())?;
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisparateImpact {
    /// `rate(S₀) / rate(S₁)`, `None` when either group has no positives.
    pub di: Option<f64>,
    /// `min(di, 1/di)`, or 0 when `di` is undefined.
    pub score: f64,
    pub rate_s0: f64,
    pub rate_s1: f64,
}

impl DisparateImpact {
    pub fn from_rates(rate_s0: f64, rate_s1: f64) -> Self {
        Self::from_ratio(rate_s0, rate_s1, rate_s0, rate_s1)
    }

    /// `num / den` is the ratio; both are positive iff it is defined.
    fn from_ratio(num: f64, den: f64, rate_s0: f64, rate_s1: f64) -> Self {
        if num > 0.0 && den > 0.0 {
            let di = num / den;
            let score = if num <= den { di } else { den / num };
            Self { di: Some(di), score, rate_s0, rate_s1 }
        } else {
            Self { di: None, score: 0.0, rate_s0, rate_s1 }
        }
    }

    pub fn is_defined(&self) -> bool {
        self.di.is_some()
    }
}

pub fn disparate_impact(y_pred: &[i8], s: &[u8]) -> Result<DisparateImpact, MetricsError> {
    same_len(y_pred.len(), s.len())?;
    let mut total = [0usize; 2];
    let mut pos = [0usize; 2];
    for (&y, &g) in y_pred.iter().zip(s) {
        let g = usize::from(g != 0);
        total[g] += 1;
        pos[g] += usize::from(y > 0);
    }
    if total[0] == 0 || total[1] == 0 {
        return Err(MetricsError::ConstantSensitive);
    }
    // Cross-multiplied counts keep the ratio correctly rounded.
    Ok(DisparateImpact::from_ratio(
        (pos[0] * total[1]) as f64,
        (pos[1] * total[0]) as f64,
        pos[0] as f64 / total[0] as f64,
        pos[1] as f64 / total[1] as f64,
    ))
}

/// `(1/n) Σ (sₗ − s̄)(βᵀxₗ + g_cluster(ℓ))` with s̄ taken from `ds`. Clusters
/// the model has not seen contribute `g = 0`.
pub fn fairness_residual(model: &FittedModel, ds: &ClusteredDataset) -> f64 {
    let s_bar = ds.s_bar().value();
    let Ok(decisions) = model.decisions(ds) else {
        return f64::NAN;
    };
    let total: f64 = decisions
        .iter()
        .zip(ds.s())
        .map(|(d, &s)| (f64::from(s) - s_bar) * d.value)
        .sum();
    total / ds.n() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairnessReport {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub disparate_impact: DisparateImpact,
    pub fairness_residual: f64,
}

impl FairnessReport {
    pub const CSV_HEADER: &'static str =
        "tp,tn,fp,fn,accuracy,di,DI,di_defined,rate_s0,rate_s1,fairness_residual";

    pub fn new(
        y_true: &[i8],
        y_pred: &[i8],
        s: &[u8],
        fairness_residual: f64,
    ) -> Result<Self, MetricsError> {
        same_len(y_true.len(), y_pred.len())?;
        let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t > 0, p > 0) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
            }
        }
        Ok(Self {
            tp,
            tn,
            fp,
            fn_,
            accuracy: (tp + tn) as f64 / y_true.len() as f64,
            disparate_impact: disparate_impact(y_pred, s)?,
            fairness_residual,
        })
    }

    /// Predicts `ds` with `model` and scores the result.
    pub fn evaluate(model: &FittedModel, ds: &ClusteredDataset) -> Result<Self, MetricsError> {
        let y_pred = model
            .predict_dataset(ds)
            .map_err(|_| MetricsError::Length { left: model.beta.len(), right: ds.x().ncols() })?;
        Self::new(ds.y(), &y_pred, ds.s(), fairness_residual(model, ds))
    }

    pub fn di_score(&self) -> f64 {
        self.disparate_impact.score
    }

    /// One CSV row in [`Self::CSV_HEADER`] order; an undefined di is left empty.
    pub fn csv_row(&self) -> String {
        let d = &self.disparate_impact;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.tp,
            self.tn,
            self.fp,
            self.fn_,
            self.accuracy,
            d.di.map(|v| v.to_string()).unwrap_or_default(),
            d.score,
            d.is_defined(),
            d.rate_s0,
            d.rate_s1,
            self.fairness_residual
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        let y = vec![1i8; 25];
        assert_eq!(accuracy(&y, &y).unwrap(), 1.0);
        let mut pred = y.clone();
        for v in pred.iter_mut().take(4) {
            *v = -1;
        }
        assert_eq!(accuracy(&y, &pred).unwrap(), 0.84);
        let flipped: Vec<i8> = y.iter().map(|v| -v).collect();
        assert_eq!(accuracy(&y, &flipped).unwrap(), 0.0);
        assert_eq!(accuracy(&y, &y[..3]), Err(MetricsError::Length { left: 25, right: 3 }));
    }

    /// 14 points per group; 9 positives in S₀ and 5 in S₁.
    fn group_counts() -> (Vec<i8>, Vec<u8>) {
        let mut y = Vec::new();
        let mut s = Vec::new();
        for (group, positives) in [(0u8, 9), (1u8, 5)] {
            for i in 0..14 {
                y.push(if i < positives { 1 } else { -1 });
                s.push(group);
            }
        }
        (y, s)
    }

    #[test]
    fn nine_and_five_of_fourteen() {
        let (y, s) = group_counts();
        let d = disparate_impact(&y, &s).unwrap();
        assert_eq!(d.di, Some(1.8));
        assert_eq!(d.score, 5.0 / 9.0);
    }

    #[test]
    fn reciprocal_ratios_score_the_same() {
        assert_eq!(DisparateImpact::from_rates(0.4, 0.2).score, 0.5);
        assert_eq!(DisparateImpact::from_rates(0.2, 0.4).score, 0.5);
        let parity = DisparateImpact::from_rates(0.3, 0.3);
        assert_eq!((parity.di, parity.score), (Some(1.0), 1.0));
    }

    #[test]
    fn zero_positive_group_is_flagged() {
        let d = disparate_impact(&[1, -1, -1, -1], &[0, 0, 1, 1]).unwrap();
        assert!(!d.is_defined());
        assert_eq!(d.score, 0.0);
    }

    #[test]
    fn constant_sensitive_is_an_error() {
        assert_eq!(disparate_impact(&[1, -1], &[1, 1]), Err(MetricsError::ConstantSensitive));
    }

    #[test]
    fn report_counts_and_row() {
        let r = FairnessReport::new(&[1, 1, -1, -1], &[1, -1, 1, -1], &[0, 1, 0, 1], 0.25).unwrap();
        assert_eq!((r.tp, r.tn, r.fp, r.fn_), (1, 1, 1, 1));
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.csv_row(), "1,1,1,1,0.5,,0,false,1,0,0.25");
        assert_eq!(
            FairnessReport::CSV_HEADER.split(',').count(),
            r.csv_row().split(',').count()
        );
    }

    fn labelled() -> impl Strategy<Value = (Vec<i8>, Vec<i8>, Vec<u8>)> {
        (2usize..60).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1i8 } else { -1 }), n),
                prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1i8 } else { -1 }), n),
                prop::collection::vec(0u8..2, n),
            )
        })
    }

    proptest! {
        #[test]
        fn score_is_symmetric_in_group_swap(case in labelled()) {
            let (_, pred, s) = case;
            let swapped: Vec<u8> = s.iter().map(|v| 1 - v).collect();
            match (disparate_impact(&pred, &s), disparate_impact(&pred, &swapped)) {
                (Ok(a), Ok(b)) => {
                    prop_assert!((0.0..=1.0).contains(&a.score));
                    prop_assert!((a.score - b.score).abs() < 1e-12);
                }
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                _ => prop_assert!(false, "only one orientation failed"),
            }
        }

        #[test]
        fn accuracy_ignores_joint_permutation(case in labelled(), seed in any::<u64>()) {
            let (t, p, _) = case;
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut idx: Vec<usize> = (0..t.len()).collect();
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let tp: Vec<i8> = idx.iter().map(|&i| t[i]).collect();
            let pp: Vec<i8> = idx.iter().map(|&i| p[i]).collect();
            prop_assert_eq!(accuracy(&t, &p).unwrap(), accuracy(&tp, &pp).unwrap());
        }
    }
}
