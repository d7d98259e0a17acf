//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::time::{Duration, Instant};

use ailab_core::harness::{run, ExperimentConfig, RunRecord};
use ailab_core::rng::{derive_rng, rng_from_seed, Rng};
use ailab_core::trainer::StopReason;
use ailab_core::{
    conformal_quantile, loss_and_grad, rebuild_index, score_sk, Backend, EnvConfig, EnvKind, ExpertDataset,
    NoveltyConfig, PolicyParams, StrategyConfig,
};
use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Exp1, StandardNormal};

// Coverage.
const COVERAGE_ALPHAS: [f64; 3] = [0.5, 0.9, 0.95];
const COVERAGE_NCAL: [usize; 2] = [99, 499];
const COVERAGE_TRIALS: usize = 2000;
const COVERAGE_SLACK: f64 = 0.02;
const COVERAGE_TIME: Duration = Duration::from_secs(30);
// Quantile monotonicity.
const ALPHA_GRID: usize = 50;
// K-NN equivalence.
const KNN_SIZES: [usize; 3] = [10, 1_000, 10_000];
const KNN_QUERIES: usize = 1000;
const KNN_PROPERTY_INSTANCES: usize = 100;
const KNN_TIME: Duration = Duration::from_secs(60);
// Gradient check.
const GRAD_INSTANCES: usize = 100;
const GRAD_H: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_FLOOR: f64 = 1e-6;
const GRAD_TIME: Duration = Duration::from_secs(30);
// Stopping-time invariants.
const INVARIANT_RUNS: usize = 20;
// End-to-end pendulum runs.
const E2E_M: usize = 500;
const E2E_T_TRAIN: u64 = 10_000;
const E2E_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const E2E_MIN_CONVERGED: usize = 4;
const E2E_QUERY_RATIO: f64 = 0.5;
const SWEEP_ALPHAS: [f64; 3] = [0.5, 0.93, 0.99];
const SWEEP_KS: [usize; 3] = [1, 5, 9];
const K_SPREAD: f64 = 2.0;
const FULL_EPISODE: usize = 200;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn timed(limit: Duration, f: impl FnOnce() -> Verdict) -> Verdict {
    let t = Instant::now();
    let v = f();
    let took = t.elapsed();
    verdict(
        v.pass && took < limit,
        format!("{} [{:.1}s, limit {}s]", v.detail, took.as_secs_f64(), limit.as_secs()),
    )
}

fn coverage() -> Verdict {
    let mut rng = rng_from_seed(101);
    let mut worst = String::new();
    let mut pass = true;
    for &alpha in &COVERAGE_ALPHAS {
        for &n in &COVERAGE_NCAL {
            let mut total = 0.0;
            for _ in 0..COVERAGE_TRIALS {
                let scores: Vec<f64> = (0..n).map(|_| rng.sample(Exp1)).collect();
                let r = conformal_quantile(&scores, alpha).unwrap().radius;
                // Exact P(test <= R) for a fresh Exp(1) score.
                total += 1.0 - (-r).exp();
            }
            let mean = total / COVERAGE_TRIALS as f64;
            let (lo, hi) = (1.0 - alpha - COVERAGE_SLACK, 1.0 - alpha + 1.0 / (n as f64 + 1.0) + COVERAGE_SLACK);
            let ok = (lo..=hi).contains(&mean);
            pass &= ok;
            worst.push_str(&format!(" a={alpha},N={n}:{mean:.4}{}", if ok { "" } else { "!" }));
        }
    }
    verdict(pass, format!("mean coverage{worst}"))
}

fn quantile_monotonicity() -> Verdict {
    let mut rng = rng_from_seed(102);
    let mut violations = 0;
    let lists = 200;
    for i in 0..lists {
        let n = rng.random_range(1..300);
        let mut scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        if i % 3 == 0 {
            // Heavy ties.
            scores.iter_mut().for_each(|s| *s = s.round());
        }
        let lo = 1.0 / (n as f64 + 1.0);
        let mut prev = f64::INFINITY;
        for j in 0..ALPHA_GRID {
            let alpha = lo + (1.0 - lo) * j as f64 / ALPHA_GRID as f64;
            let r = conformal_quantile(&scores, alpha).unwrap().radius;
            if r > prev {
                violations += 1;
            }
            prev = r;
        }
    }
    verdict(violations == 0, format!("{lists} score lists x {ALPHA_GRID} alphas, {violations} increases"))
}

fn dataset_with_duplicates(rng: &mut Rng, n: usize, dim: usize) -> ExpertDataset {
    let mut d = ExpertDataset::new(dim, 1);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let row = if i > 0 && rng.random_bool(0.2) {
            rows.choose(rng).unwrap().clone()
        } else {
            (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
        };
        d.push(&row, &[0.0]).unwrap();
        rows.push(row);
    }
    d.freeze_standardizer();
    d
}

fn knn_equivalence() -> Verdict {
    let mut rng = rng_from_seed(103);
    let mut mismatches = 0;
    for &n in &KNN_SIZES {
        for dim in [2, 4] {
            let d = dataset_with_duplicates(&mut rng, n, dim);
            let idx = rebuild_index(&d, &NoveltyConfig { k: 1, standardize: true, backend: Backend::KdTree }).unwrap();
            for q in 0..KNN_QUERIES {
                let k = 1 + q % n.min(9);
                let x: Vec<f64> = if q % 2 == 0 {
                    d.state(rng.random_range(0..n)).to_vec()
                } else {
                    (0..dim).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect()
                };
                let brute = score_sk(&x, &d, &NoveltyConfig { k, standardize: true, backend: Backend::BruteForce }).unwrap();
                if idx.score(&x, k).unwrap().to_bits() != brute.to_bits() {
                    mismatches += 1;
                }
            }
        }
    }
    let mut monotone_bad = 0;
    let mut antitone_bad = 0;
    for _ in 0..KNN_PROPERTY_INSTANCES {
        let dim = rng.random_range(1..5);
        let n = rng.random_range(1..60);
        let d = dataset_with_duplicates(&mut rng, n, dim);
        let x: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let scores: Vec<f64> = (1..=n).map(|k| score_sk(&x, &d, &NoveltyConfig::with_k(k)).unwrap()).collect();
        monotone_bad += usize::from(scores.windows(2).any(|w| w[0] > w[1]));

        let k = rng.random_range(1..=n);
        let mut bigger = d.clone();
        for _ in 0..rng.random_range(1..30) {
            let row: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            bigger.push(&row, &[0.0]).unwrap();
        }
        let cfg = NoveltyConfig::with_k(k);
        antitone_bad += usize::from(score_sk(&x, &bigger, &cfg).unwrap() > score_sk(&x, &d, &cfg).unwrap());
    }
    verdict(
        mismatches == 0 && monotone_bad == 0 && antitone_bad == 0,
        format!(
            "{} index queries, {mismatches} mismatches; K-monotone violations {monotone_bad}/{KNN_PROPERTY_INSTANCES}; data-antitone violations {antitone_bad}/{KNN_PROPERTY_INSTANCES}",
            KNN_SIZES.len() * 2 * KNN_QUERIES
        ),
    )
}

fn gradient_check() -> Verdict {
    let mut rng = rng_from_seed(104);
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for _ in 0..GRAD_INSTANCES {
        let (d, a, n) = (rng.random_range(1..7), rng.random_range(1..4), rng.random_range(1..17));
        let mut params = PolicyParams::random(d, 64, a, 0.5, &mut rng);
        let x: Vec<f64> = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = (0..n * a).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (loss, grad) = loss_and_grad(&params, &x, &y).unwrap();
        let floor = GRAD_FLOOR * loss.max(1.0);
        for i in 0..params.len() {
            let orig = params.as_slice()[i];
            params.as_mut_slice()[i] = orig + GRAD_H;
            let lp = loss_and_grad(&params, &x, &y).unwrap().0;
            params.as_mut_slice()[i] = orig - GRAD_H;
            let lm = loss_and_grad(&params, &x, &y).unwrap().0;
            params.as_mut_slice()[i] = orig;
            let numeric = (lp - lm) / (2.0 * GRAD_H);
            let analytic = grad.as_slice()[i];
            // Entries below the finite-difference round-off level are held to an absolute bound.
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
            bad += usize::from(err >= GRAD_REL_TOL);
        }
    }
    verdict(bad == 0, format!("{GRAD_INSTANCES} instances, {bad} entries over tolerance, worst rel err {worst:.2e}"))
}

fn invariants() -> Verdict {
    let mut rng = derive_rng(105, 0, 0);
    let kinds = [EnvKind::Pendulum, EnvKind::Pusher, EnvKind::DoubleIntegrator];
    let mut problems = Vec::new();
    let mut dagger_runs = 0;
    for i in 0..INVARIANT_RUNS {
        let strategy = match i % 5 {
            0 => StrategyConfig::Dagger,
            1 => StrategyConfig::crsail(rng.random_range(0.3..0.97), rng.random_range(1..8)),
            2 => StrategyConfig::RandomRate { p: rng.random_range(0.0..1.0) },
            3 => StrategyConfig::FixedThreshold { tau: rng.random_range(0.0..0.5), k: rng.random_range(1..8) },
            _ => StrategyConfig::EnsembleVariance { members: 3, tau_doubt: rng.random_range(0.0..0.05) },
        };
        let mut cfg = ExperimentConfig::new(EnvConfig::new(kinds[i % 3]), strategy);
        cfg.experiment.m = vec![rng.random_range(20..300)];
        cfg.experiment.seeds = vec![1000 + i as u64];
        cfg.experiment.m_cal = 3;
        cfg.experiment.eval_episodes = 2;
        cfg.experiment.workers = 1;
        if rng.random_bool(0.5) {
            cfg.experiment.t_train = Some(rng.random_range(1..800));
        } else {
            cfg.experiment.t_train = None;
            cfg.experiment.query_budget = Some(rng.random_range(0..300));
        }
        cfg.train.hidden = 16;
        cfg.train.bc_epochs = 5;
        cfg.train.update_epochs = 1;
        let report = run(&cfg).unwrap();
        let Some(rec) = report.records.first() else {
            problems.push(format!("run {i}: {}", report.failures[0].error));
            continue;
        };
        if let Some(p) = check_invariants(&cfg, rec) {
            problems.push(format!("run {i} ({}): {p}", rec.label));
        }
        if matches!(cfg.strategy, StrategyConfig::Dagger) {
            dagger_runs += 1;
            if rec.summary.total_queries != rec.summary.total_steps {
                problems.push(format!("run {i}: dagger queries {} != steps {}", rec.summary.total_queries, rec.summary.total_steps));
            }
        }
    }
    let detail = if problems.is_empty() {
        format!("{INVARIANT_RUNS} runs ({dagger_runs} dagger), no violations")
    } else {
        problems.join("; ")
    };
    verdict(problems.is_empty(), detail)
}

fn check_invariants(cfg: &ExperimentConfig, rec: &RunRecord) -> Option<String> {
    let budget = cfg.budget();
    let (mut steps, mut queries) = (0u64, 0u64);
    for e in &rec.episodes {
        if !budget.allows(steps, queries) {
            return Some(format!("episode {} started past the budget", e.episode));
        }
        if e.queries > e.length {
            return Some(format!("episode {}: |S| = {} > L = {}", e.episode, e.queries, e.length));
        }
        steps += e.length as u64;
        queries += e.queries as u64;
        if e.steps_cum != steps || e.queries_cum != queries {
            return Some(format!("episode {}: cumulative counters drift", e.episode));
        }
        if e.dataset_size as u64 != rec.initial_dataset_size as u64 + queries {
            return Some(format!("episode {}: dataset size {} != initial + queries", e.episode, e.dataset_size));
        }
    }
    if rec.final_dataset_size as u64 != rec.initial_dataset_size as u64 + queries {
        return Some("final dataset size not conserved".into());
    }
    if rec.stop != StopReason::EpisodeCap && budget.allows(steps, queries) {
        return Some("stopped while the budget still allowed another episode".into());
    }
    None
}

struct Grid {
    records: Vec<RunRecord>,
}

impl Grid {
    fn converged(&self) -> usize {
        self.records.iter().filter(|r| r.summary.converged).count()
    }

    fn mean_total_queries(&self) -> f64 {
        self.records.iter().map(|r| r.summary.total_queries as f64).sum::<f64>() / self.records.len() as f64
    }
}

fn pendulum_grid(strategy: StrategyConfig) -> Grid {
    let mut cfg = ExperimentConfig::new(EnvConfig::new(EnvKind::Pendulum), strategy);
    cfg.experiment.m = vec![E2E_M];
    cfg.experiment.seeds = E2E_SEEDS.to_vec();
    cfg.experiment.t_train = Some(E2E_T_TRAIN);
    cfg.experiment.workers = E2E_SEEDS.len();
    let report = run(&cfg).unwrap();
    for f in &report.failures {
        eprintln!("run M={} seed={} failed: {}", f.m, f.seed, f.error);
    }
    Grid { records: report.records }
}

fn query_efficiency(crsail: &Grid, dagger: &Grid) -> Verdict {
    let (c, d) = (crsail.mean_total_queries(), dagger.mean_total_queries());
    let conv = crsail.converged();
    verdict(
        conv >= E2E_MIN_CONVERGED && c <= E2E_QUERY_RATIO * d,
        format!("crsail converged {conv}/{}; mean queries crsail {c:.0} vs dagger {d:.0} (ratio {:.2})", crsail.records.len(), c / d),
    )
}

fn alpha_controls_volume(grids: &[(f64, &Grid)]) -> Verdict {
    let means: Vec<f64> = grids.iter().map(|(_, g)| g.mean_total_queries()).collect();
    let increasing = means.windows(2).all(|w| w[0] < w[1]);
    let rate = |a: f64| grids.iter().find(|(x, _)| *x == a).map(|(_, g)| g.converged()).unwrap();
    let ok = increasing && rate(0.93) >= rate(0.5);
    let parts: Vec<String> = grids
        .iter()
        .map(|(a, g)| format!("a={a}: {:.0} queries, {}/{} conv", g.mean_total_queries(), g.converged(), g.records.len()))
        .collect();
    verdict(ok, parts.join("; "))
}

fn robust_to_k(grids: &[(usize, &Grid)]) -> Verdict {
    let means: Vec<f64> = grids.iter().map(|(_, g)| g.mean_total_queries()).collect();
    let spread = means.iter().cloned().fold(f64::MIN, f64::max) / means.iter().cloned().fold(f64::MAX, f64::min);
    let all_conv = grids.iter().all(|(_, g)| g.converged() >= E2E_MIN_CONVERGED);
    let parts: Vec<String> = grids
        .iter()
        .map(|(k, g)| format!("K={k}: {:.0} queries, {}/{} conv", g.mean_total_queries(), g.converged(), g.records.len()))
        .collect();
    verdict(all_conv && spread <= K_SPREAD, format!("{}; max/min {spread:.2}", parts.join("; ")))
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn query_decay(crsail: &Grid) -> Verdict {
    let mut decaying = 0;
    let (mut progress, mut counts) = (Vec::new(), Vec::new());
    let mut parts = Vec::new();
    for r in crsail.records.iter().filter(|r| r.summary.converged) {
        let q: Vec<f64> = r.episodes.iter().map(|e| e.queries as f64).collect();
        let third = q.len() / 3;
        if third == 0 {
            continue;
        }
        let first = q[..third].iter().sum::<f64>() / third as f64;
        let last = q[q.len() - third..].iter().sum::<f64>() / third as f64;
        decaying += usize::from(last < first);
        parts.push(format!("seed {}: {first:.0}->{last:.0}", r.seed));
        let denom = (r.episodes.len() - 1).max(1) as f64;
        for e in r.episodes.iter().filter(|e| e.length == FULL_EPISODE) {
            progress.push(e.episode as f64 / denom);
            counts.push(e.queries as f64);
        }
    }
    let corr = if progress.len() > 2 { pearson(&progress, &counts) } else { f64::NAN };
    verdict(
        decaying >= E2E_MIN_CONVERGED && corr < 0.0,
        format!("{decaying}/{} seeds decay ({}); corr(progress, queries | L={FULL_EPISODE}) = {corr:.3}", E2E_SEEDS.len(), parts.join(", ")),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |id, name, v: Verdict| {
        println!("[{}] {id}. {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, v));
    };

    report(1, "conformal coverage", timed(COVERAGE_TIME, coverage));
    report(2, "quantile monotone in alpha", quantile_monotonicity());
    report(3, "k-d tree equals brute force", timed(KNN_TIME, knn_equivalence));
    report(4, "gradient vs finite differences", timed(GRAD_TIME, gradient_check));
    report(5, "stopping and conservation invariants", invariants());

    let crsail = pendulum_grid(StrategyConfig::crsail(0.93, 5));
    let dagger = pendulum_grid(StrategyConfig::Dagger);
    report(6, "end-to-end query efficiency", query_efficiency(&crsail, &dagger));

    let low = pendulum_grid(StrategyConfig::crsail(SWEEP_ALPHAS[0], 5));
    let high = pendulum_grid(StrategyConfig::crsail(SWEEP_ALPHAS[2], 5));
    report(
        7,
        "alpha controls query volume",
        alpha_controls_volume(&[(SWEEP_ALPHAS[0], &low), (SWEEP_ALPHAS[1], &crsail), (SWEEP_ALPHAS[2], &high)]),
    );

    let k1 = pendulum_grid(StrategyConfig::crsail(0.93, SWEEP_KS[0]));
    let k9 = pendulum_grid(StrategyConfig::crsail(0.93, SWEEP_KS[2]));
    report(8, "robust to K", robust_to_k(&[(SWEEP_KS[0], &k1), (SWEEP_KS[1], &crsail), (SWEEP_KS[2], &k9)]));

    report(9, "query rate decays", query_decay(&crsail));

    let failed = results.iter().filter(|(_, _, v)| !v.pass).count();
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
