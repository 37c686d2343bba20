use std::io::Write;

use serde_json::{json, Map, Value};

use super::profile::{performance_profile, poly2_fit, ProfileCurve};
use super::{measure, BenchError};
use crate::datagen::{generate, split, Scenario, SplitSpec, SynthSpec};
use crate::models::{fit, FitSpec, ModelError, ModelKind};
use crate::qp::{QpSettings, QpStatus};

/// Resource comparison of explicit random intercepts against indicator
/// columns as the number of groups grows.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotStudySpec {
    pub n: usize,
    pub groups: Vec<usize>,
    pub scenario: Scenario,
    pub seed: u64,
    pub mu: f64,
    pub lambda: f64,
    pub c: f64,
    /// Independent datasets drawn per group count, seeded `seed + i`.
    pub datasets: usize,
    /// Timed fits per method and dataset; the fastest is kept, since
    /// interference from other processes only ever adds time.
    pub repeats: usize,
    pub settings: QpSettings,
}

impl OneHotStudySpec {
    pub const SMALL_GROUPS: [usize; 5] = [2, 10, 50, 200, 500];
    pub const FULL_GROUPS: [usize; 11] = [2, 10, 50, 500, 1000, 1250, 2000, 2500, 3125, 4000, 5000];

    pub fn small(seed: u64) -> Self {
        Self {
            n: 10_000,
            groups: Self::SMALL_GROUPS.to_vec(),
            scenario: Scenario::UnfairRe,
            seed,
            mu: 1.0,
            lambda: 1.0,
            c: 1e-3,
            datasets: 5,
            repeats: 3,
            settings: QpSettings::default(),
        }
    }

    pub fn full(seed: u64) -> Self {
        Self { n: 100_000, groups: Self::FULL_GROUPS.to_vec(), ..Self::small(seed) }
    }

    /// The two fits being compared.
    pub fn methods(&self) -> [(ModelKind, FitSpec); 2] {
        [
            (ModelKind::Fmesvm, FitSpec::fmesvm(self.mu, self.lambda, self.c)),
            (ModelKind::OneHot, FitSpec::onehot(self.mu, Some(self.c))),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneHotPoint {
    pub k: usize,
    pub method: ModelKind,
    /// Worst status over all fits.
    pub status: QpStatus,
    /// Median over datasets.
    pub train_size: usize,
    /// Median over datasets.
    pub iterations: usize,
    /// Mean over datasets of the fastest repeat.
    pub wall_time_us: f64,
    /// Largest over all fits.
    pub peak_memory_bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneHotStudy {
    pub points: Vec<OneHotPoint>,
}

impl OneHotStudy {
    pub const HEADER: [&'static str; 7] =
        ["groups", "method", "train_size", "status", "iterations", "wall_time_us", "peak_memory_bytes"];

    pub fn methods(&self) -> Vec<ModelKind> {
        let mut m: Vec<ModelKind> = Vec::new();
        for p in &self.points {
            if !m.contains(&p.method) {
                m.push(p.method);
            }
        }
        m
    }

    pub fn series(&self, method: ModelKind) -> Vec<&OneHotPoint> {
        self.points.iter().filter(|p| p.method == method).collect()
    }

    pub fn point(&self, method: ModelKind, k: usize) -> Option<&OneHotPoint> {
        self.points.iter().find(|p| p.method == method && p.k == k)
    }

    pub fn memory_fit(&self, method: ModelKind) -> Result<[f64; 3], BenchError> {
        let s = self.series(method);
        let x: Vec<f64> = s.iter().map(|p| p.k as f64).collect();
        let y: Vec<f64> = s.iter().map(|p| p.peak_memory_bytes as f64).collect();
        poly2_fit(&x, &y)
    }

    pub fn time_fit(&self, method: ModelKind) -> Result<[f64; 3], BenchError> {
        let s = self.series(method);
        let x: Vec<f64> = s.iter().map(|p| p.k as f64).collect();
        let y: Vec<f64> = s.iter().map(|p| p.wall_time_us).collect();
        poly2_fit(&x, &y)
    }

    /// Profiles over the group counts, one curve per method in
    /// [`methods`](Self::methods) order. Unsolved fits count as failures.
    pub fn time_profile(&self) -> Result<Vec<ProfileCurve>, BenchError> {
        self.profile(|p| if p.status == QpStatus::Solved { p.wall_time_us } else { f64::INFINITY })
    }

    pub fn memory_profile(&self) -> Result<Vec<ProfileCurve>, BenchError> {
        self.profile(|p| (p.peak_memory_bytes as f64).max(1.0))
    }

    fn profile(&self, cost: impl Fn(&OneHotPoint) -> f64) -> Result<Vec<ProfileCurve>, BenchError> {
        let methods = self.methods();
        let mut ks: Vec<usize> = self.points.iter().map(|p| p.k).collect();
        ks.sort_unstable();
        ks.dedup();
        let times: Vec<Vec<f64>> = ks
            .iter()
            .map(|&k| {
                methods
                    .iter()
                    .map(|&m| self.point(m, k).map_or(f64::INFINITY, &cost))
                    .collect()
            })
            .collect();
        performance_profile(&times)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::HEADER)?;
        for p in &self.points {
            w.write_record([
                p.k.to_string(),
                p.method.to_string(),
                p.train_size.to_string(),
                p.status.to_string(),
                p.iterations.to_string(),
                format!("{:.1}", p.wall_time_us),
                p.peak_memory_bytes.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> Value {
        let curve_json = |curves: Result<Vec<ProfileCurve>, BenchError>| match curves {
            Ok(c) => {
                let mut m = Map::new();
                for (method, curve) in self.methods().iter().zip(c) {
                    m.insert(method.to_string(), json!({ "tau": curve.taus, "rho": curve.rho }));
                }
                Value::Object(m)
            }
            Err(e) => json!({ "error": e.to_string() }),
        };
        let fit_json = |f: Result<[f64; 3], BenchError>| match f {
            Ok([a, b, c]) => json!({ "a": a, "b": b, "c": c }),
            Err(e) => json!({ "error": e.to_string() }),
        };
        let mut fits = Map::new();
        for m in self.methods() {
            fits.insert(
                m.to_string(),
                json!({ "memory": fit_json(self.memory_fit(m)), "time": fit_json(self.time_fit(m)) }),
            );
        }
        json!({
            "quadratic_fits": fits,
            "time_profile": curve_json(self.time_profile()),
            "memory_profile": curve_json(self.memory_profile()),
        })
    }
}

/// Runs the comparison serially so the timings do not compete for cores.
pub fn onehot_study(spec: &OneHotStudySpec) -> Result<OneHotStudy, BenchError> {
    if spec.groups.is_empty() || spec.repeats == 0 || spec.datasets == 0 {
        return Err(BenchError::Spec("need at least one group count, dataset and repeat".into()));
    }
    let methods = spec.methods();
    let mut points = Vec::new();
    for &k in &spec.groups {
        let mut sizes = Vec::with_capacity(spec.datasets);
        let mut times = vec![Vec::with_capacity(spec.datasets); methods.len()];
        let mut iterations = vec![Vec::with_capacity(spec.datasets); methods.len()];
        let mut peaks = vec![0u64; methods.len()];
        let mut status = vec![QpStatus::Solved; methods.len()];
        for d in 0..spec.datasets as u64 {
            let seed = spec.seed.wrapping_add(d);
            let data = generate(&SynthSpec::preset(spec.scenario, spec.n, k, seed))?;
            let (train, _) = split(&data.dataset, &SplitSpec::new(seed))?;
            sizes.push(train.n() as f64);
            let mut reps = vec![Vec::with_capacity(spec.repeats); methods.len()];
            for rep in 0..spec.repeats {
                // Alternate the order so neither method always runs on a warm cache.
                let order: [usize; 2] = if rep % 2 == 0 { [0, 1] } else { [1, 0] };
                for i in order {
                    let (res, m) = measure(|| fit(&train, &methods[i].1, &spec.settings));
                    let stats = match res {
                        Ok(model) => model.stats,
                        Err(ModelError::Solver { model }) => model.stats,
                        Err(e) => return Err(BenchError::Spec(e.to_string())),
                    };
                    reps[i].push(m.wall_time_us);
                    peaks[i] = peaks[i].max(m.peak_memory_bytes);
                    if stats.status != QpStatus::Solved {
                        status[i] = stats.status;
                    }
                    if rep == 0 {
                        iterations[i].push(stats.iterations as f64);
                    }
                }
            }
            for (i, r) in reps.iter().enumerate() {
                times[i].push(r.iter().copied().fold(f64::INFINITY, f64::min));
            }
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(f64::total_cmp);
            super::quantile(v, 0.5).round() as usize
        };
        let train_size = median(&mut sizes);
        for (i, (kind, _)) in methods.iter().enumerate() {
            points.push(OneHotPoint {
                k,
                method: *kind,
                train_size,
                status: status[i],
                iterations: median(&mut iterations[i]),
                wall_time_us: times[i].iter().sum::<f64>() / times[i].len() as f64,
                peak_memory_bytes: peaks[i],
            });
        }
    }
    Ok(OneHotStudy { points })
}
