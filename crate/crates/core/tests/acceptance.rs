//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its verdict; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use maml_lab::analysis::{permutation_spread, steps_curve};
use maml_lab::episodes::{
    apply_permutation, enumerate_permutations, fixed_point_histogram, generate_synthetic_pool,
    sample_episode, ClassPool, Episode, EpisodeSpec, Sample, Split,
};
use maml_lab::maml::{
    fo_meta_grad, meta_train, unicorn_meta_grad, InnerLoopConfig, TrainConfig, Variant,
};
use maml_lab::metatest::{
    evaluate, mean_and_ci95, run_strategy, EvalReport, EvalSettings, Strategy,
};
use maml_lab::network::{
    batch_loss_and_grad, features, grad_check, Checkpoint, HeadMode, ParamSet,
};

const LAYERS: [usize; 3] = [16, 32, 32];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

struct Desk {
    base: ClassPool,
    novel: ClassPool,
}

fn desk_pools() -> Desk {
    let pool = generate_synthetic_pool(60, 16, 40, 0.3, 2024).unwrap();
    let ids = pool.ids();
    Desk {
        base: pool.subset(&ids[..50], Split::Base).unwrap(),
        novel: pool.subset(&ids[50..], Split::Novel).unwrap(),
    }
}

fn five_way() -> EpisodeSpec {
    EpisodeSpec::new(5, 1, 15).unwrap()
}

fn dead_samples(params: &ParamSet, ep: &Episode) -> usize {
    ep.support
        .iter()
        .chain(&ep.query)
        .filter(|s| features(params, &s.x).unwrap().iter().all(|&v| v == 0.0))
        .count()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn gradient_correctness() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut depths = Vec::new();
    for arch in 0..20u64 {
        let hidden = rng.random_range(0..=3);
        let mut sizes = vec![rng.random_range(2..=8)];
        for _ in 0..hidden {
            sizes.push(rng.random_range(3..=12));
        }
        sizes.push(rng.random_range(2..=10));
        let n_way = rng.random_range(2..=6);
        let mut params = ParamSet::init(&sizes, HeadMode::PerClass, n_way, arch).unwrap();
        // zero biases behind a dead layer sit exactly on a ReLU kink, where
        // no gradient exists; check at a generic point instead
        for layer in &mut params.encoder.layers {
            for b in &mut layer.bias {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let batch: Vec<Sample> = (0..rng.random_range(3..=10))
            .map(|_| Sample {
                x: (0..sizes[0]).map(|_| rng.random_range(-2.0..2.0)).collect(),
                label: rng.random_range(1..=n_way),
            })
            .collect();
        worst = worst.max(grad_check(&params, &batch, 1e-5).unwrap());
        depths.push(hidden);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-4 && secs < 30.0,
        format!("max relative error {worst:.2e} over 20 architectures (hidden layers {depths:?}), {secs:.2}s"),
    )
}

fn first_order_identity(desk: &Desk) -> Verdict {
    let cfg = InnerLoopConfig::new(0, 0.05).unwrap();
    let mut mismatches = 0;
    for i in 0..100u64 {
        let ep = sample_episode(&desk.base, &five_way(), 1000 + i).unwrap();
        let params = ParamSet::init(&LAYERS, HeadMode::PerClass, 5, i).unwrap();
        let mg = fo_meta_grad(&params, &ep, &cfg).unwrap();
        let (loss, grad) = batch_loss_and_grad(&params, &ep.query).unwrap();
        let same = mg.query_loss.to_bits() == loss.to_bits()
            && mg
                .grad
                .flat()
                .iter()
                .zip(grad.flat())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            mismatches += 1;
        }
    }
    verdict(
        mismatches == 0,
        format!("{mismatches} of 100 episodes differ bitwise"),
    )
}

fn unicorn_invariance(desk: &Desk) -> Verdict {
    let cfg = InnerLoopConfig::new(5, 0.05).unwrap();
    let perms = enumerate_permutations(5).unwrap();
    let rows: Vec<(f64, f64, f64, usize)> = (0..50u64)
        .into_par_iter()
        .map(|i| {
            let ep = sample_episode(&desk.novel, &five_way(), 2000 + i).unwrap();
            let params = ParamSet::init(&LAYERS, HeadMode::Shared, 5, 500 + i).unwrap();
            let base = unicorn_meta_grad(&params, &ep, &cfg).unwrap();
            let base_grad = base.grad.flat();
            let (mut dl, mut da, mut dg) = (0.0f64, 0.0f64, 0.0f64);
            for pi in &perms {
                let other =
                    unicorn_meta_grad(&params, &apply_permutation(&ep, pi).unwrap(), &cfg).unwrap();
                dl = dl.max((other.query_loss - base.query_loss).abs());
                da = da.max((other.query_acc - base.query_acc).abs());
                dg = dg.max(max_abs_diff(&other.grad.flat(), &base_grad));
            }
            (dl, da, dg, dead_samples(&params, &ep))
        })
        .collect();
    let dl = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let da = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let dg = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let dead: usize = rows.iter().map(|r| r.3).sum();

    let shared = ParamSet::init(&LAYERS, HeadMode::Shared, 5, 77).unwrap();
    let spread = permutation_spread(&shared, &desk.novel, &five_way(), &cfg, 50, 9).unwrap();
    let zero_spread = spread.per_task_spread.iter().all(|&s| s == 0.0);
    verdict(
        dl <= 1e-12 && da <= 1e-12 && dg <= 1e-12 && zero_spread,
        format!(
            "drift loss {dl:.1e}, accuracy {da:.1e}, gradient {dg:.1e} over 50 x 120; spread all zero: {zero_spread}; \
             samples with all-zero features: {dead}"
        ),
    )
}

fn joint_equivariance(desk: &Desk) -> Verdict {
    let cfg = InnerLoopConfig::new(5, 0.05).unwrap();
    let perms = enumerate_permutations(5).unwrap();
    let rows: Vec<(usize, usize)> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let ep = sample_episode(&desk.novel, &five_way(), 3000 + i).unwrap();
            let params = ParamSet::init(&LAYERS, HeadMode::PerClass, 5, 600 + i).unwrap();
            let base = fo_meta_grad(&params, &ep, &cfg).unwrap().query_acc;
            let bad = perms
                .iter()
                .filter(|pi| {
                    let moved = params.with_heads_permuted(pi).unwrap();
                    fo_meta_grad(&moved, &apply_permutation(&ep, pi).unwrap(), &cfg)
                        .unwrap()
                        .query_acc
                        != base
                })
                .count();
            (bad, dead_samples(&params, &ep))
        })
        .collect();
    let bad: usize = rows.iter().map(|r| r.0).sum();
    let dead: usize = rows.iter().map(|r| r.1).sum();
    verdict(
        bad == 0,
        format!("{bad} of 12000 (episode, permutation) pairs changed accuracy; samples with all-zero features: {dead}"),
    )
}

fn ensemble_invariance(desk: &Desk) -> Verdict {
    let cfg = InnerLoopConfig::new(5, 0.05).unwrap();
    let perms = enumerate_permutations(5).unwrap();
    let worst: f64 = (0..20u64)
        .into_par_iter()
        .map(|i| {
            let ep = sample_episode(&desk.novel, &five_way(), 4000 + i).unwrap();
            let params = ParamSet::init(&LAYERS, HeadMode::PerClass, 5, 700 + i).unwrap();
            let base = run_strategy(&params, &ep, Strategy::EnsembleFull, &cfg)
                .unwrap()
                .accuracy;
            perms
                .iter()
                .map(|pi| {
                    let other = apply_permutation(&ep, pi).unwrap();
                    (run_strategy(&params, &other, Strategy::EnsembleFull, &cfg)
                        .unwrap()
                        .accuracy
                        - base)
                        .abs()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    verdict(
        worst <= 1e-12,
        format!("largest accuracy change {worst:.1e} over 20 episodes x 120 relabelings"),
    )
}

/// Heap's algorithm, independent of the library's enumeration.
fn heap_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0; n];
    let mut out = vec![a.clone()];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

fn combinatorics() -> Verdict {
    let brute = heap_permutations(5);
    let mut oracle: BTreeMap<usize, u64> = BTreeMap::new();
    for p in &brute {
        *oracle
            .entry(p.iter().enumerate().filter(|(i, v)| i == *v).count())
            .or_default() += 1;
    }
    let expected: BTreeMap<usize, u64> = [(5, 1), (3, 10), (2, 20), (1, 45), (0, 44)]
        .into_iter()
        .collect();
    let library = fixed_point_histogram(5).unwrap();
    let distinct = {
        let mut s = brute.clone();
        s.sort();
        s.dedup();
        s.len()
    };
    // each pairing scores (fixed points) / 5; the mean over all 120 in exact integers
    let correct: u64 = oracle.iter().map(|(k, c)| *k as u64 * c).sum();
    let exact_fifth = correct == brute.len() as u64;
    let pass = library == expected && oracle == expected && distinct == 120 && exact_fifth;
    verdict(
        pass,
        format!(
            "library {library:?}, brute force {oracle:?}; mean initial accuracy {correct}/{} = {}%",
            5 * brute.len(),
            100 * correct / (5 * brute.len() as u64)
        ),
    )
}

fn chance_initialization(desk: &Desk) -> Verdict {
    let params = ParamSet::init(&LAYERS, HeadMode::PerClass, 5, 8).unwrap();
    let settings = EvalSettings {
        spec: five_way(),
        strategy: Strategy::None,
        inner: InnerLoopConfig::new(0, 0.05).unwrap(),
        n_tasks: 2000,
        seed: 31,
        sort_labels: false,
    };
    let r = evaluate(&params, &desk.novel, &settings).unwrap();
    verdict(
        (r.mean_acc - 20.0).abs() <= 3.0,
        format!(
            "step-0 accuracy {:.2} +- {:.2} over 2000 tasks",
            r.mean_acc, r.ci95
        ),
    )
}

fn train(desk: &Desk, variant: Variant, steps: usize, seed: u64) -> ParamSet {
    let cfg = TrainConfig {
        variant,
        inner: InnerLoopConfig::new(steps, 0.05).unwrap(),
        seed,
        ..TrainConfig::default()
    };
    let init = ParamSet::init(&LAYERS, variant.head_mode(), 5, seed).unwrap();
    meta_train(&desk.base, &cfg, &init).unwrap().0
}

fn test(desk: &Desk, params: &ParamSet, steps: usize, seed: u64) -> EvalReport {
    let settings = EvalSettings {
        spec: five_way(),
        strategy: Strategy::None,
        inner: InnerLoopConfig::new(steps, 0.05).unwrap(),
        n_tasks: 1000,
        seed: 100 + seed,
        sort_labels: false,
    };
    evaluate(params, &desk.novel, &settings).unwrap()
}

fn desk_end_to_end(desk: &Desk) -> Vec<Verdict> {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut m15_wins = 0;
    let mut unicorn_ok = 0;
    let mut first: Option<(EvalReport, ParamSet)> = None;
    for seed in 0..3u64 {
        let vanilla = train(desk, Variant::Vanilla, 5, seed);
        let v = test(desk, &vanilla, 5, seed);
        let m1 = test(desk, &train(desk, Variant::Vanilla, 1, seed), 1, seed);
        let m15 = test(desk, &train(desk, Variant::Vanilla, 15, seed), 15, seed);
        let uni = test(desk, &train(desk, Variant::Unicorn, 5, seed), 5, seed);
        if m15.mean_acc >= m1.mean_acc {
            m15_wins += 1;
        }
        if uni.mean_acc >= v.mean_acc - v.ci95 {
            unicorn_ok += 1;
        }
        lines.push(format!(
            "seed {seed}: vanilla M=5 {:.2}+-{:.2}, M=1 {:.2}, M=15 {:.2}, unicorn {:.2}",
            v.mean_acc, v.ci95, m1.mean_acc, m15.mean_acc, uni.mean_acc
        ));
        if first.is_none() {
            first = Some((v, vanilla));
        }
    }
    let (v0, vanilla0) = first.unwrap();
    let curve = steps_curve(
        &vanilla0,
        &desk.novel,
        &five_way(),
        0.05,
        5,
        false,
        1000,
        100,
    )
    .unwrap();
    let (step0, last) = (curve.acc_at_step[0], curve.last());
    let margin = curve.ci95_at_step[0].max(*curve.ci95_at_step.last().unwrap());
    let secs = start.elapsed().as_secs_f64();
    let detail = lines.join("; ");
    vec![
        verdict(
            v0.mean_acc > 20.0 + 3.0 * v0.ci95,
            format!(
                "(a) vanilla {:.2} +- {:.2} against chance 20",
                v0.mean_acc, v0.ci95
            ),
        ),
        verdict(
            last > step0 + margin,
            format!("(b) curve step 0 {step0:.2}, step 5 {last:.2}, ci95 {margin:.2}"),
        ),
        verdict(
            m15_wins >= 2,
            format!("(c) M=15 >= M=1 in {m15_wins} of 3 seeds"),
        ),
        verdict(
            unicorn_ok >= 2,
            format!("(d) unicorn >= vanilla - ci95 in {unicorn_ok} of 3 seeds; {detail}"),
        ),
        verdict(secs < 900.0, format!("(e) runtime {secs:.1}s")),
    ]
}

fn statistics(desk: &Desk) -> Verdict {
    let (mean, ci) = mean_and_ci95(&[1.0, 0.0]);
    let exact = (mean - 50.0).abs() < 1e-9 && (ci - 98.0).abs() < 1e-9;
    let params = ParamSet::init(&LAYERS, HeadMode::PerClass, 5, 3).unwrap();
    let run = |n_tasks, seed| {
        let settings = EvalSettings {
            spec: five_way(),
            strategy: Strategy::None,
            inner: InnerLoopConfig::new(5, 0.05).unwrap(),
            n_tasks,
            seed,
            sort_labels: false,
        };
        evaluate(&params, &desk.novel, &settings).unwrap().ci95
    };
    let (small, big) = (run(500, 41), run(2000, 42));
    let ratio = big / small;
    verdict(
        exact && (ratio - 0.5).abs() <= 0.05,
        format!("[1, 0] gives {mean:.2} +- {ci:.2}; ci95 {small:.3} at 500 tasks, {big:.3} at 2000 (ratio {ratio:.3})"),
    )
}

fn determinism(desk: &Desk) -> Verdict {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let cfg = TrainConfig {
                variant: Variant::Vanilla,
                epochs: 4,
                tasks_per_epoch: 40,
                task_batch_size: 8,
                seed: 6,
                ..TrainConfig::default()
            };
            let init = ParamSet::init(&LAYERS, HeadMode::PerClass, 5, 6).unwrap();
            let (params, _) = meta_train(&desk.base, &cfg, &init).unwrap();
            let bytes = Checkpoint::from_params(&params, 6, 4, Some("vanilla".into()))
                .encode()
                .unwrap();
            let settings = EvalSettings {
                spec: five_way(),
                strategy: Strategy::EnsembleRotated,
                inner: cfg.inner,
                n_tasks: 300,
                seed: 7,
                sort_labels: false,
            };
            let report =
                serde_json::to_string(&evaluate(&params, &desk.novel, &settings).unwrap()).unwrap();
            (bytes, report)
        })
    };
    let (a, b) = (run(1), run(8));
    let pass = a == b;
    verdict(
        pass,
        format!(
            "checkpoints identical: {}, reports identical: {}",
            a.0 == b.0,
            a.1 == b.1
        ),
    )
}

fn main() {
    let desk = desk_pools();
    let mut results: Vec<(String, Verdict)> = vec![
        ("1 gradient correctness".into(), gradient_correctness()),
        ("2 first-order identity".into(), first_order_identity(&desk)),
        (
            "3 unicorn permutation invariance".into(),
            unicorn_invariance(&desk),
        ),
        ("4 joint equivariance".into(), joint_equivariance(&desk)),
        ("5 ensemble invariance".into(), ensemble_invariance(&desk)),
        ("6 combinatorics oracle".into(), combinatorics()),
        (
            "7 chance-level initialization".into(),
            chance_initialization(&desk),
        ),
    ];
    let parts = desk_end_to_end(&desk);
    let all = parts.iter().all(|v| v.pass);
    let detail = parts
        .iter()
        .map(|v| format!("{} {}", if v.pass { "ok" } else { "NO" }, v.detail))
        .collect::<Vec<_>>();
    results.push((
        "8 desk-scale end-to-end".into(),
        verdict(all, detail.join(" | ")),
    ));
    results.push(("9 statistics".into(), statistics(&desk)));
    results.push(("10 determinism".into(), determinism(&desk)));

    let mut failed = 0;
    for (name, v) in &results {
        println!(
            "[{}] criterion {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        if !v.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
