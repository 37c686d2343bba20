use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::DatagenError;
use crate::data::ClusteredDataset;

/// Independent random streams drawn from one seed.
const STREAM_COVARIATES: u64 = 0;
const STREAM_EFFECTS: u64 = 1;
const STREAM_LABELS: u64 = 2;

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn logistic(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// The four simulated settings: fair or unfair coefficients, with or without
/// random intercepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    UnfairRe,
    UnfairNoRe,
    FairRe,
    FairNoRe,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::UnfairRe,
        Scenario::UnfairNoRe,
        Scenario::FairRe,
        Scenario::FairNoRe,
    ];

    pub const UNFAIR_BETA: [f64; 5] = [-1.5, 0.4, 0.8, 0.5, 1.5];
    pub const FAIR_BETA: [f64; 5] = [-1.0, 1.0, 2.0, 1.0, 0.1];

    pub fn is_unfair(self) -> bool {
        matches!(self, Scenario::UnfairRe | Scenario::UnfairNoRe)
    }

    pub fn has_random_effects(self) -> bool {
        matches!(self, Scenario::UnfairRe | Scenario::FairRe)
    }

    pub fn beta(self) -> [f64; 5] {
        if self.is_unfair() {
            Self::UNFAIR_BETA
        } else {
            Self::FAIR_BETA
        }
    }

    /// Variance of the random intercepts.
    pub fn q(self) -> f64 {
        if self.has_random_effects() {
            2.0
        } else {
            0.0
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::UnfairRe => "unfair+RE",
            Scenario::UnfairNoRe => "unfair-RE",
            Scenario::FairRe => "fair+RE",
            Scenario::FairNoRe => "fair-RE",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().replace('\u{2212}', "-").to_ascii_lowercase();
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str().to_ascii_lowercase() == norm)
            .ok_or_else(|| {
                let names: Vec<&str> = Scenario::ALL.iter().map(|s| s.as_str()).collect();
                format!("unknown scenario `{s}` (valid: {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub k: usize,
    /// Intercept, three Gaussian covariates, sensitive attribute.
    pub beta_true: Vec<f64>,
    /// Variance of the random intercepts.
    pub q: f64,
    pub unfair: bool,
    pub seed: u64,
}

impl SynthSpec {
    pub const DEFAULT_N: usize = 40_000;
    pub const SMALL_N: usize = 5_000;
    pub const DEFAULT_K: usize = 100;

    pub fn preset(scenario: Scenario, n: usize, k: usize, seed: u64) -> Self {
        Self {
            n,
            k,
            beta_true: scenario.beta().to_vec(),
            q: scenario.q(),
            unfair: scenario.is_unfair(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.k == 0 {
            return Err(DatagenError::Spec("K must be at least 1".into()));
        }
        if self.n < self.k {
            return Err(DatagenError::Spec(format!(
                "n < K (n = {}, K = {})",
                self.n, self.k
            )));
        }
        if !(self.q >= 0.0 && self.q.is_finite()) {
            return Err(DatagenError::Spec(format!("Q must be nonnegative, got {}", self.q)));
        }
        if self.beta_true.len() != 5 || self.beta_true.iter().any(|b| !b.is_finite()) {
            return Err(DatagenError::Spec(
                "beta_true needs 5 finite entries (intercept, 3 covariates, sensitive)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub dataset: ClusteredDataset,
    pub beta_true: Vec<f64>,
    pub g_true: Vec<f64>,
    /// `P(y = +1)` of each row.
    pub probability: Vec<f64>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData, DatagenError> {
    spec.validate()?;
    let (n, k) = (spec.n, spec.k);

    let mut cov = stream(spec.seed, STREAM_COVARIATES);
    let mut x = DMatrix::zeros(n, 5);
    let mut s = Vec::with_capacity(n);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 1..4 {
            x[(i, j)] = StandardNormal.sample(&mut cov);
        }
        let latent: f64 = StandardNormal.sample(&mut cov);
        let si = u8::from(latent > 0.0);
        x[(i, 4)] = f64::from(si);
        s.push(si);
    }

    let g_true: Vec<f64> = if spec.q > 0.0 {
        let normal = Normal::new(0.0, spec.q.sqrt()).expect("finite variance");
        let mut eff = stream(spec.seed, STREAM_EFFECTS);
        (0..k).map(|_| normal.sample(&mut eff)).collect()
    } else {
        vec![0.0; k]
    };
    // Contiguous blocks whose sizes differ by at most one.
    let cluster: Vec<usize> = (0..n).map(|i| i * k / n + 1).collect();

    let mut lab = stream(spec.seed, STREAM_LABELS);
    let mut y = Vec::with_capacity(n);
    let mut probability = Vec::with_capacity(n);
    for i in 0..n {
        let fixed: f64 = (0..5).map(|j| spec.beta_true[j] * x[(i, j)]).sum();
        let m = if spec.q > 0.0 { fixed + g_true[cluster[i] - 1] } else { fixed };
        let prob = logistic(m);
        probability.push(prob);
        y.push(if lab.random::<f64>() < prob { 1 } else { -1 });
    }

    let dataset = ClusteredDataset::new(x, y, s, cluster, k)?
        .with_names(vec!["x1".into(), "x2".into(), "x3".into(), "x4".into()])?;
    Ok(SynthData {
        dataset,
        beta_true: spec.beta_true.clone(),
        g_true,
        probability,
    })
}
