//! End-to-end acceptance checks. Each check prints one PASS or FAIL line;
//! the process exits nonzero if any check fails.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use fmesvm::bench::{onehot_study, run, ExperimentResult, ExperimentScenario, ExperimentSpec, OneHotStudySpec, TrackingAllocator};
use fmesvm::datagen::{generate, Scenario, SynthSpec};
use fmesvm::metrics::{disparate_impact, DisparateImpact};
use fmesvm::models::{assemble, fit, FitSpec, ModelKind};
use fmesvm::qp::{kkt_residuals, solve, QpProblem, QpSettings, QpStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

const SEED: u64 = 0;
const C: f64 = 1e-3;

#[derive(Default)]
struct Report {
    checks: usize,
    failed: Vec<&'static str>,
}

impl Report {
    fn check(&mut self, name: &'static str, pass: bool, detail: String) {
        self.checks += 1;
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(name);
        }
    }
}

fn mean(result: &ExperimentResult, kind: ModelKind, metric: impl Fn(&fmesvm::bench::ResultRow) -> f64) -> f64 {
    let v: Vec<f64> = result.rows_for(kind).map(metric).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn failures(result: &ExperimentResult) -> usize {
    result.rows.iter().filter(|r| !r.solved()).count()
}

fn solver_correctness(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut worst_gap, mut worst_kkt, mut unsolved) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..200 {
        let d = rng.random_range(1..=4);
        let general = rng.random_range(0..=(6 - d));
        let b = common::random_box_qp(&mut rng, d, general);
        let qp = QpProblem::new(b.p.clone(), b.q.clone(), b.a.clone(), b.l.clone(), b.u.clone()).unwrap();
        let sol = solve(&qp, &QpSettings::default());
        if sol.status != QpStatus::Solved {
            unsolved += 1;
            continue;
        }
        let (_, oracle) = b.grid_oracle();
        worst_gap = worst_gap.max((sol.objective - oracle).abs());
        let kkt = kkt_residuals(&qp, &sol.z, &sol.lambda);
        worst_kkt = worst_kkt.max(kkt.primal).max(kkt.dual).max(kkt.complementarity);
    }
    let elapsed = start.elapsed();
    report.check(
        "solver matches brute-force oracle on 200 random QPs",
        unsolved == 0 && worst_gap <= 1e-3 && worst_kkt <= 1e-6 && elapsed < Duration::from_secs(60),
        format!("unsolved {unsolved}, max |objective gap| {worst_gap:.2e}, max KKT residual {worst_kkt:.2e}, {elapsed:.1?}"),
    );
}

fn scenario(sc: Scenario) -> (ExperimentResult, Duration) {
    let spec = ExperimentSpec {
        replications: 100,
        n: SynthSpec::SMALL_N,
        k: SynthSpec::DEFAULT_K,
        base_seed: SEED,
        c: C,
        ..ExperimentSpec::new(ExperimentScenario::Synthetic(sc))
    };
    let start = Instant::now();
    let result = run(&spec).unwrap();
    (result, start.elapsed())
}

fn worst_fair_residual(results: &[&ExperimentResult]) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut count = 0;
    for r in results {
        for row in r.rows.iter().filter(|row| matches!(row.estimator, ModelKind::Svmf | ModelKind::Fmesvm)) {
            count += 1;
            worst = if row.fairness_residual.is_finite() { worst.max(row.fairness_residual.abs()) } else { f64::INFINITY };
        }
    }
    (worst, count)
}

fn simulation_studies(report: &mut Report, adult: Option<&ExperimentResult>) {
    let (unfair_re, t_unfair_re) = scenario(Scenario::UnfairRe);
    let (unfair_no, _) = scenario(Scenario::UnfairNoRe);
    let (fair_re, _) = scenario(Scenario::FairRe);
    let (fair_no, _) = scenario(Scenario::FairNoRe);

    let di = |r: &ExperimentResult, k| mean(r, k, |row| row.di_score);
    let acc = |r: &ExperimentResult, k| mean(r, k, |row| row.accuracy);

    let (f, s, m) = (di(&unfair_re, ModelKind::Fmesvm), di(&unfair_re, ModelKind::Svm), di(&unfair_re, ModelKind::Mesvm));
    report.check(
        "unfair+RE: fair mixed model improves mean DI by at least 0.05",
        f - s >= 0.05 && f - m >= 0.05 && t_unfair_re < Duration::from_secs(15 * 60),
        format!(
            "DI FMESVM {f:.4}, SVM {s:.4}, MESVM {m:.4}; margins {:.4} / {:.4}; unsolved fits {}; {t_unfair_re:.1?}",
            f - s,
            f - m,
            failures(&unfair_re)
        ),
    );

    let (me, sv) = (acc(&fair_no, ModelKind::Mesvm), acc(&fair_no, ModelKind::Svm));
    report.check(
        "fair-RE: mixed and plain SVM accuracy within 0.02",
        (me - sv).abs() <= 0.02,
        format!("accuracy MESVM {me:.4}, SVM {sv:.4}, gap {:.4}", (me - sv).abs()),
    );

    let details: Vec<String> = [(&unfair_re, "unfair+RE"), (&fair_re, "fair+RE")]
        .iter()
        .map(|(r, name)| format!("{name}: MESVM {:.4} vs SVM {:.4}", acc(r, ModelKind::Mesvm), acc(r, ModelKind::Svm)))
        .collect();
    report.check(
        "+RE: mixed model more accurate than plain SVM",
        acc(&unfair_re, ModelKind::Mesvm) > acc(&unfair_re, ModelKind::Svm)
            && acc(&fair_re, ModelKind::Mesvm) > acc(&fair_re, ModelKind::Svm),
        details.join("; "),
    );

    let mut all = vec![&unfair_re, &unfair_no, &fair_re, &fair_no];
    all.extend(adult);
    let (worst, count) = worst_fair_residual(&all);
    report.check(
        "fair fits satisfy the fairness constraint",
        count > 0 && worst <= C + 1e-6,
        format!("{count} fair fits, max |residual| {worst:.9} (bound {:.9})", C + 1e-6),
    );
}

fn adult_study(report: &mut Report) -> Option<ExperimentResult> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/adult.data");
    let spec = ExperimentSpec {
        replications: 100,
        base_seed: SEED,
        c: C,
        adult_path: Some(path),
        ..ExperimentSpec::new(ExperimentScenario::Adult)
    };
    let start = Instant::now();
    let result = match run(&spec) {
        Ok(r) => r,
        Err(e) => {
            report.check("adult: fair mixed model beats SVM on DI in 95% of resamples", false, e.to_string());
            return None;
        }
    };
    let elapsed = start.elapsed();
    let svm: Vec<_> = result.rows_for(ModelKind::Svm).collect();
    let fm: Vec<_> = result.rows_for(ModelKind::Fmesvm).collect();
    let wins = svm
        .iter()
        .zip(&fm)
        .filter(|(s, f)| s.solved() && f.solved() && f.di_score > s.di_score)
        .count();
    let share = wins as f64 / spec.replications as f64;
    report.check(
        "adult: fair mixed model beats SVM on DI in 95% of resamples",
        share >= 0.95 && elapsed < Duration::from_secs(30 * 60),
        format!(
            "{wins}/{} wins; mean DI FMESVM {:.4}, SVM {:.4}; train size {}; unsolved fits {}; {elapsed:.1?}",
            spec.replications,
            mean(&result, ModelKind::Fmesvm, |r| r.di_score),
            mean(&result, ModelKind::Svm, |r| r.di_score),
            svm.first().map_or(0, |r| r.train_size),
            failures(&result)
        ),
    );
    Some(result)
}

fn onehot_comparison(report: &mut Report) {
    let spec = OneHotStudySpec::small(SEED);
    let study = onehot_study(&spec).unwrap();
    let mut memory_ok = true;
    let mut time_ok = true;
    let mut lines = Vec::new();
    for &k in &spec.groups {
        let m = study.point(ModelKind::Fmesvm, k).unwrap();
        let o = study.point(ModelKind::OneHot, k).unwrap();
        memory_ok &= m.peak_memory_bytes < o.peak_memory_bytes;
        if k >= 50 {
            time_ok &= m.status == QpStatus::Solved && m.wall_time_us < o.wall_time_us;
        }
        lines.push(format!(
            "K={k}: mem {}/{} B, time {:.0}/{:.0} us",
            m.peak_memory_bytes, o.peak_memory_bytes, m.wall_time_us, o.wall_time_us
        ));
    }
    let quad = study.memory_fit(ModelKind::OneHot).map_or(f64::NAN, |c| c[2]);
    report.check(
        "one-hot: mixed model uses less peak memory at every K",
        memory_ok,
        lines.join("; "),
    );
    report.check("one-hot: mixed model is faster for K >= 50", time_ok, lines.join("; "));
    report.check(
        "one-hot: quadratic memory coefficient is positive",
        quad > 0.0,
        format!("c = {quad:.4e}"),
    );
}

fn metric_examples(report: &mut Report) {
    let mut y = Vec::new();
    let mut s = Vec::new();
    for (group, positives) in [(0u8, 9), (1u8, 5)] {
        for i in 0..14 {
            y.push(if i < positives { 1i8 } else { -1 });
            s.push(group);
        }
    }
    let d = disparate_impact(&y, &s).unwrap();
    let swapped: Vec<u8> = s.iter().map(|v| 1 - v).collect();
    let e = disparate_impact(&y, &swapped).unwrap();
    let two = DisparateImpact::from_rates(0.4, 0.2);
    let half = DisparateImpact::from_rates(0.2, 0.4);
    report.check(
        "disparate impact examples",
        d.di == Some(1.8) && d.score == 5.0 / 9.0 && e.score == 5.0 / 9.0 && two.di == Some(2.0) && half.di == Some(0.5) && two.score == half.score && two.score == 0.5,
        format!("di {:?}, DI {}, di=2 -> DI {}, di=0.5 -> DI {}", d.di, d.score, two.score, half.score),
    );
}

fn reductions(report: &mut Report) {
    let settings = QpSettings::default();
    let data = generate(&SynthSpec::preset(Scenario::UnfairRe, 600, 20, SEED)).unwrap();
    let ds = &data.dataset;
    let free = fit(ds, &FitSpec::mesvm(1.0, 1.0), &settings).unwrap();
    let loose = fit(ds, &FitSpec::fmesvm(1.0, 1.0, 1e30), &settings).unwrap();
    let gap = free
        .decisions(ds)
        .unwrap()
        .iter()
        .zip(loose.decisions(ds).unwrap())
        .map(|(a, b)| (a.value - b.value).abs())
        .fold(0.0f64, f64::max);
    report.check(
        "unbounded fairness threshold reproduces the unconstrained mixed model",
        gap <= 1e-6,
        format!("max decision gap {gap:.2e}"),
    );

    let data = generate(&SynthSpec::preset(Scenario::UnfairNoRe, 300, 1, SEED)).unwrap();
    let ds = &data.dataset;
    let lambda = 1.0;
    let mixed = fit(ds, &FitSpec::fmesvm(1.0, lambda, C), &settings).unwrap();
    // A bias b split as β₀ + g₁ costs at least λb²/(1+2λ): an SVMF whose bias
    // weight is reduced accordingly.
    let (qp, _) = assemble(ds, &FitSpec::svmf(1.0, C)).unwrap();
    let mut p = qp.p().clone();
    p[(0, 0)] = 2.0 * lambda / (1.0 + 2.0 * lambda);
    let shifted = QpProblem::new(p, qp.q().clone(), qp.a().clone(), qp.l().clone(), qp.u().clone()).unwrap();
    let sol = solve(&shifted, &settings);
    let p1 = ds.x().ncols();
    let beta = sol.z.rows(0, p1);
    let mixed_decisions = mixed.decisions(ds).unwrap();
    let gap = (0..ds.n())
        .map(|i| (ds.row(i).dot(&beta.transpose()) - mixed_decisions[i].value).abs())
        .fold(0.0f64, f64::max);
    report.check(
        "single cluster reduces to a bias-shifted fair SVM",
        sol.status == QpStatus::Solved && gap <= 1e-4,
        format!("max decision gap {gap:.2e}"),
    );
}

fn main() {
    let mut report = Report::default();
    solver_correctness(&mut report);
    metric_examples(&mut report);
    reductions(&mut report);
    let adult = adult_study(&mut report);
    simulation_studies(&mut report, adult.as_ref());
    onehot_comparison(&mut report);
    println!("{} of {} checks passed", report.checks - report.failed.len(), report.checks);
    if !report.failed.is_empty() {
        eprintln!("failed: {:?}", report.failed);
        std::process::exit(1);
    }
}
