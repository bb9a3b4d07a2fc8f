use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{
    hyper_sweep, permutation_spread, randomized_head_baseline, steps_curve, svg, write_curves_csv,
    StepsCurve, SweepBudget,
};
use crate::episodes::{generate_synthetic_pool, ClassPool, Split, SplitEntry, SplitManifest};
use crate::error::Error;
use crate::maml::{meta_train, pretrain_classifier, write_train_log, PretrainConfig, Variant};
use crate::metatest::{evaluate, EvalSettings};
use crate::network::{Checkpoint, Heads, ParamSet};

use crate::analysis::svg::{line_chart, Series};

use super::cli::Command;
use super::config::RunConfig;
use super::ledger::results_ledger_append;

pub const MANIFEST_FILE: &str = "splits.json";

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(msg.into()))
}

/// Settings resolved once the config is validated.
struct Run {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Creates `name` in the output directory, refusing to overwrite.
    fn create(&self, name: &str) -> Outcome<fs::File> {
        let path = self.path(name);
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                Failure::Runtime(Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", path.display()),
                )))
            })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Outcome<()> {
        let mut f = self.create(name)?;
        f.write_all(bytes)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Outcome<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn data_dir(&self) -> Outcome<&Path> {
        match &self.cfg.paths.data {
            Some(p) => Ok(p),
            None => usage("this command needs --data DIR"),
        }
    }

    fn manifest(&self) -> Outcome<(PathBuf, SplitManifest)> {
        let dir = self.data_dir()?.to_path_buf();
        let manifest = SplitManifest::load(&dir.join(MANIFEST_FILE))?;
        Ok((dir, manifest))
    }

    fn load_split(&self, split: Split) -> Outcome<ClassPool> {
        let (dir, manifest) = self.manifest()?;
        Ok(manifest.load_split(&dir, split)?)
    }

    fn checkpoint(&self) -> Outcome<Checkpoint> {
        match &self.cfg.paths.checkpoint {
            Some(p) => Ok(Checkpoint::load(p)?),
            None => usage("this command needs --checkpoint PATH"),
        }
    }

    fn model(&self) -> Outcome<(Checkpoint, ParamSet)> {
        let ck = self.checkpoint()?;
        let params = ck.params()?;
        Ok((ck, params))
    }
}

fn check_paths(cfg: &RunConfig) -> Outcome<()> {
    let p = &cfg.paths;
    if let Some(dir) = &p.data {
        if !dir.join(MANIFEST_FILE).is_file() {
            return Err(Failure::Runtime(Error::invalid(format!(
                "no {MANIFEST_FILE} in data directory {}",
                dir.display()
            ))));
        }
    }
    for file in [&p.checkpoint, &p.init].into_iter().flatten() {
        if !file.is_file() {
            return Err(Failure::Runtime(Error::invalid(format!(
                "{} does not exist",
                file.display()
            ))));
        }
    }
    Ok(())
}

/// Runs one command under its effective configuration.
pub fn run(command: &Command, cfg: RunConfig) -> Outcome<()> {
    let Some(seed) = cfg.seed else {
        return usage("a seed is required (--seed or \"seed\" in the config)");
    };
    let Some(out) = cfg.paths.out.clone() else {
        return usage("an output directory is required (--out or paths.out in the config)");
    };
    if cfg.threads == Some(0) {
        return usage("--threads must be positive");
    }
    check_paths(&cfg)?;
    fs::create_dir_all(&out)?;
    let run = Run { cfg, seed, out };
    run.write_json("config.json", &run.cfg)?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = run.cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Failure::Runtime(Error::state(e.to_string())))?;
    pool.install(|| match command {
        Command::GenData(_) => gen_data(&run),
        Command::Pretrain(_) => pretrain(&run),
        Command::Train(_) => train(&run),
        Command::Eval(_) => eval(&run),
        Command::Spread(_) => spread(&run),
        Command::Curve(_) => curve(&run),
        Command::Sweep(_) => sweep(&run),
        Command::Baseline(_) => baseline(&run),
    })
}

fn gen_data(run: &Run) -> Outcome<()> {
    let d = &run.cfg.data;
    let total = d.base_classes + d.validation_classes + d.novel_classes;
    let pool = generate_synthetic_pool(total, d.dim, d.per_class, d.sigma, run.seed)?;
    let ids = pool.ids();
    let mut manifest = SplitManifest {
        dim: d.dim,
        splits: Default::default(),
    };
    let mut start = 0;
    for (split, count) in [
        (Split::Base, d.base_classes),
        (Split::Validation, d.validation_classes),
        (Split::Novel, d.novel_classes),
    ] {
        if count == 0 {
            continue;
        }
        let part = pool.subset(&ids[start..start + count], split)?;
        start += count;
        let file = format!("{}.fscp", split.name());
        run.write(&file, &crate::episodes::encode_pool(&part))?;
        manifest.splits.insert(
            split,
            SplitEntry {
                file,
                class_ids: part.ids(),
            },
        );
    }
    run.write_json(MANIFEST_FILE, &manifest)?;
    println!("wrote {total} classes to {}", run.out.display());
    Ok(())
}

fn pretrain(run: &Run) -> Outcome<()> {
    let base = run.load_split(Split::Base)?;
    let p = &run.cfg.pretrain;
    let cfg = PretrainConfig {
        layer_sizes: run.cfg.model.layer_sizes(base.dim),
        epochs: p.epochs,
        lr: p.lr,
        batch_size: p.batch_size,
        seed: run.seed,
    };
    let trained = pretrain_classifier(&base, &cfg)?;
    let ck = Checkpoint::encoder_only(&trained.model.encoder, run.seed, p.epochs);
    run.write("encoder.umck", &ck.encode()?)?;
    run.write_json(
        "pretrain.json",
        &serde_json::json!({ "train_acc": trained.train_acc, "classes": base.len() }),
    )?;
    println!("pre-training accuracy {:.2}%", 100.0 * trained.train_acc);
    Ok(())
}

fn initial_params(
    run: &Run,
    variant: Variant,
    n_way: usize,
    input_dim: usize,
) -> Outcome<ParamSet> {
    match &run.cfg.paths.init {
        None => Ok(ParamSet::init(
            &run.cfg.model.layer_sizes(input_dim),
            variant.head_mode(),
            n_way,
            run.seed,
        )?),
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let heads = Heads::random(
                variant.head_mode(),
                n_way,
                ck.encoder.feature_dim(),
                run.seed,
            );
            Ok(ParamSet::new(ck.encoder, heads)?)
        }
    }
}

fn train(run: &Run) -> Outcome<()> {
    let base = run.load_split(Split::Base)?;
    let cfg = run.cfg.train_config(run.seed)?;
    let init = initial_params(run, cfg.variant, cfg.spec.n_way, base.dim)?;
    let (params, log) = meta_train(&base, &cfg, &init)?;
    let ck = Checkpoint::from_params(
        &params,
        run.seed,
        cfg.epochs,
        Some(cfg.variant.name().to_string()),
    );
    run.write("model.umck", &ck.encode()?)?;
    write_train_log(&log, run.create("train_log.csv")?)?;
    if let Some(last) = log.last() {
        println!(
            "epoch {}: query loss {:.4}, query accuracy {:.2}%",
            last.epoch,
            last.mean_query_loss,
            100.0 * last.mean_query_acc
        );
    }
    Ok(())
}

fn sort_labels(run: &Run, ck: &Checkpoint) -> bool {
    run.cfg
        .eval
        .sort_labels
        .unwrap_or(ck.meta.variant.as_deref() == Some(Variant::Fo.name()))
}

fn eval(run: &Run) -> Outcome<()> {
    let novel = run.load_split(Split::Novel)?;
    let (ck, params) = run.model()?;
    let settings = EvalSettings {
        spec: run.cfg.spec()?,
        strategy: run.cfg.eval.strategy,
        inner: run.cfg.inner()?,
        n_tasks: run.cfg.eval.tasks,
        seed: run.seed,
        sort_labels: sort_labels(run, &ck),
    };
    let report = evaluate(&params, &novel, &settings)?;
    run.write_json("report.json", &report)?;
    let mut w = csv::Writer::from_writer(run.create("per_task.csv")?);
    w.write_record(["task", "accuracy"]).map_err(Error::from)?;
    for (i, a) in report.per_task_acc.iter().enumerate() {
        w.write_record([i.to_string(), a.to_string()])
            .map_err(Error::from)?;
    }
    w.flush()?;
    let ledger = run
        .cfg
        .paths
        .ledger
        .clone()
        .unwrap_or_else(|| run.path("results.csv"));
    results_ledger_append(&ledger, &report)?;
    println!(
        "{}: {:.2} +- {:.2} over {} tasks",
        report.strategy.name(),
        report.mean_acc,
        report.ci95,
        report.task_count
    );
    Ok(())
}

fn spread(run: &Run) -> Outcome<()> {
    let novel = run.load_split(Split::Novel)?;
    let (_, params) = run.model()?;
    let result = permutation_spread(
        &params,
        &novel,
        &run.cfg.spec()?,
        &run.cfg.inner()?,
        run.cfg.analysis.spread_tasks,
        run.seed,
    )?;
    result.write_csv(run.create("spread.csv")?)?;
    run.write_json("spread.json", &result)?;
    let bins: Vec<(String, usize)> = result
        .histogram()
        .into_iter()
        .map(|(lo, n)| (format!("{lo}"), n))
        .collect();
    run.write(
        "spread_hist.svg",
        svg::bar_histogram("Accuracy over head pairings", "query accuracy (%)", &bins).as_bytes(),
    )?;
    let worst = result.per_task_spread.iter().cloned().fold(0.0, f64::max);
    println!(
        "{} occupied bins, largest per-task spread {:.2}%",
        bins.len(),
        100.0 * worst
    );
    Ok(())
}

fn curve_series(name: &str, c: &StepsCurve) -> Series {
    Series {
        name: name.to_string(),
        points: c
            .acc_at_step
            .iter()
            .enumerate()
            .map(|(m, a)| (m as f64, *a))
            .collect(),
    }
}

fn curve(run: &Run) -> Outcome<()> {
    let novel = run.load_split(Split::Novel)?;
    let (_, params) = run.model()?;
    let a = &run.cfg.analysis;
    let c = steps_curve(
        &params,
        &novel,
        &run.cfg.spec()?,
        run.cfg.train.alpha,
        a.curve_max_steps,
        run.cfg.train.freeze_encoder,
        a.curve_tasks,
        run.seed,
    )?;
    let name = if c.freeze_encoder {
        "heads only"
    } else {
        "full"
    };
    write_curves_csv(&[(name, &c)], run.create("curve.csv")?)?;
    run.write(
        "curve.svg",
        line_chart(
            "Accuracy after inner-loop steps",
            "steps",
            "query accuracy (%)",
            &[curve_series(name, &c)],
        )
        .as_bytes(),
    )?;
    println!(
        "step 0: {:.2}%, step {}: {:.2}%",
        c.acc_at_step[0],
        a.curve_max_steps,
        c.last()
    );
    Ok(())
}

fn sweep(run: &Run) -> Outcome<()> {
    let (dir, manifest) = run.manifest()?;
    let base = manifest.load_split(&dir, Split::Base)?;
    let held_out = if manifest.splits.contains_key(&Split::Validation) {
        Split::Validation
    } else {
        Split::Novel
    };
    let eval_pool = manifest.load_split(&dir, held_out)?;
    let t = &run.cfg.train;
    let init_encoder = match &run.cfg.paths.init {
        Some(p) => Some(Checkpoint::load(p)?.encoder),
        None => None,
    };
    let budget = SweepBudget {
        variant: t.variant,
        layer_sizes: run.cfg.model.layer_sizes(base.dim),
        epochs: t.epochs,
        tasks_per_epoch: t.tasks_per_epoch,
        task_batch_size: t.task_batch_size,
        optimizer: t.optimizer,
        eval_tasks: run.cfg.analysis.sweep_eval_tasks,
        init_encoder,
    };
    let a = &run.cfg.analysis;
    let result = hyper_sweep(
        &base,
        &eval_pool,
        &run.cfg.spec()?,
        &a.sweep_alphas,
        &a.sweep_steps,
        &budget,
        run.seed,
    )?;
    result.write_csv(run.create("sweep.csv")?)?;
    run.write_json("sweep.json", &result)?;
    let rows: Vec<String> = result.alphas.iter().map(|x| x.to_string()).collect();
    let cols: Vec<String> = result.steps.iter().map(|x| x.to_string()).collect();
    run.write(
        "sweep.svg",
        svg::heat_grid(
            "Held-out accuracy (%) by step size and steps",
            &rows,
            &cols,
            &result.mean_acc,
        )
        .as_bytes(),
    )?;
    let (i, j) = result.best;
    println!(
        "best on {}: alpha {} with {} steps, {:.2}%",
        held_out.name(),
        result.alphas[i],
        result.steps[j],
        result.mean_acc[i][j]
    );
    Ok(())
}

fn baseline(run: &Run) -> Outcome<()> {
    let novel = run.load_split(Split::Novel)?;
    let (_, params) = run.model()?;
    let mut inner = run.cfg.inner()?;
    inner.steps = run.cfg.analysis.curve_max_steps;
    let (learned, random) = randomized_head_baseline(
        &params,
        &novel,
        &run.cfg.spec()?,
        &inner,
        run.cfg.analysis.curve_tasks,
        run.seed,
    )?;
    write_curves_csv(
        &[("learned", &learned), ("random", &random)],
        run.create("baseline.csv")?,
    )?;
    run.write(
        "baseline.svg",
        line_chart(
            "Learned against random heads",
            "steps",
            "query accuracy (%)",
            &[
                curve_series("learned", &learned),
                curve_series("random", &random),
            ],
        )
        .as_bytes(),
    )?;
    println!(
        "final accuracy: learned {:.2}%, random {:.2}%",
        learned.last(),
        random.last()
    );
    Ok(())
}
