use std::path::Path;

use anyhow::Context;
use llpx_core::dataset::{bags_from_assignments, read_bag_assignments, write_sparse, SparseCorpus};
use llpx_core::eval::{bench_runtime, derive_seed, write_records_csv, BenchSettings};
use llpx_core::{
    cross_validate, gen_related_tasks, noise_sweep, parse_sparse, synth_bags, CvSettings, HyperParams, Instance,
    Method, RelatedTaskSpec, ScalingConfig, SweepSettings, TaskDataset, TrainedModel,
};
use serde::Serialize;

use crate::args::{
    BagArgs, BenchArgs, Cli, Command, Common, CvArgs, DataArgs, Format, GenArgs, MethodArg, PredictArgs,
    ReportArgs, SweepArgs, TrainArgs,
};
use crate::output::{write_atomic, RunClock};
use crate::UsageError;

/// Seed coordinates for bags synthesized outside cross-validation.
const SOURCE_BAGS: u64 = 7;
const TARGET_BAGS: u64 = 8;

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen(a) => with_jobs(&a.common, || gen(&a)),
        Command::Bag(a) => with_jobs(&a.common, || bag(&a)),
        Command::Train(a) => with_jobs(&a.common, || train(&a)),
        Command::Predict(a) => with_jobs(&a.common, || predict(&a)),
        Command::Cv(a) => with_jobs(&a.common, || cv(&a)),
        Command::Sweep(a) => with_jobs(&a.common, || sweep(&a)),
        Command::Bench(a) => with_jobs(&a.common, || bench(&a)),
    }
}

fn with_jobs(common: &Common, f: impl FnOnce() -> anyhow::Result<()>) -> anyhow::Result<()> {
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(UsageError("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("configuring the worker pool")?;
    }
    f()
}

fn read_corpus(path: &Path) -> anyhow::Result<SparseCorpus> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_sparse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_instances(path: &Path) -> anyhow::Result<Vec<Instance>> {
    let corpus = read_corpus(path)?;
    Ok(corpus.densify(None)?)
}

fn gen(a: &GenArgs) -> anyhow::Result<()> {
    let clock = RunClock::start("gen");
    let spec = RelatedTaskSpec {
        n_source: a.n_source,
        n_target: a.n_target,
        dims: a.dims,
        mean_shift: a.mean_shift,
        class_sep: a.class_sep,
    };
    let (s, t) = gen_related_tasks(a.seed, &spec)?;
    for (path, xs) in [(&a.out_source, &s), (&a.out_target, &t)] {
        write_atomic(path, write_sparse(xs).as_bytes())?;
        clock.write_sidecar(path)?;
    }
    Ok(())
}

fn bag(a: &BagArgs) -> anyhow::Result<()> {
    let clock = RunClock::start("bag");
    let xs = read_instances(&a.input)?;
    let task = synth_bags(xs, a.bag_size, a.seed, &ScalingConfig::default())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    task.write_bag_assignments(a.task.as_str(), &mut w)?;
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("flushing CSV: {}", e.error()))?;
    write_atomic(&a.out, &bytes)?;
    clock.write_sidecar(&a.out)
}

/// Both tasks densified to a common dimension; the source may be absent.
struct Loaded {
    source: Option<Vec<Instance>>,
    target: Vec<Instance>,
    dimension: usize,
}

fn load(data: &DataArgs) -> anyhow::Result<Loaded> {
    let target = read_corpus(&data.target)?;
    let source = data.source.as_deref().map(read_corpus).transpose()?;
    let dimension = target.dimension.max(source.as_ref().map_or(0, |s| s.dimension));
    Ok(Loaded {
        source: source.map(|s| s.densify(Some(dimension))).transpose()?,
        target: target.densify(Some(dimension))?,
        dimension,
    })
}

/// Bags a task from an assignment file, or synthesizes them.
fn bag_task(
    xs: Vec<Instance>,
    dimension: usize,
    assignments: Option<&Path>,
    task: &str,
    data: &DataArgs,
    coord: u64,
    hp: &HyperParams,
) -> anyhow::Result<TaskDataset> {
    match assignments {
        Some(path) => {
            let file = std::fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
            let rows = read_bag_assignments(file).with_context(|| format!("parsing {}", path.display()))?;
            Ok(bags_from_assignments(xs, dimension, &rows, task, &hp.scaling)?)
        }
        None => Ok(synth_bags(xs, data.bag_size, derive_seed(data.seed, &[coord]), &hp.scaling)?),
    }
}

fn source_task(loaded: &mut Loaded, data: &DataArgs, hp: &HyperParams) -> anyhow::Result<TaskDataset> {
    match loaded.source.take() {
        Some(xs) => bag_task(xs, loaded.dimension, data.source_bags.as_deref(), "source", data, SOURCE_BAGS, hp),
        None if data.source_bags.is_some() => Err(UsageError("--source-bags needs --source".into()).into()),
        None => Ok(TaskDataset::empty(loaded.dimension)),
    }
}

fn train(a: &TrainArgs) -> anyhow::Result<()> {
    let clock = RunClock::start("train");
    let hp = a.hp.resolve()?;
    let mut loaded = load(&a.data)?;
    let source = source_task(&mut loaded, &a.data, &hp)?;
    let target_xs = std::mem::take(&mut loaded.target);
    let target = bag_task(
        target_xs,
        loaded.dimension,
        a.target_bags.as_deref(),
        "target",
        &a.data,
        TARGET_BAGS,
        &hp,
    )?;
    let model = llpx_core::fit(&source, &target, &hp)?;
    log::info!("trained in {} rounds (converged: {})", model.rounds, model.converged);
    write_atomic(&a.out, model.to_json()?.as_bytes())?;
    clock.write_sidecar(&a.out)
}

fn predict(a: &PredictArgs) -> anyhow::Result<()> {
    let clock = RunClock::start("predict");
    let model = TrainedModel::load(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let xs = read_corpus(&a.input)?.densify(Some(model.dimension()))?;
    let labels = model.predict_many(xs.iter().map(|x| x.features.as_slice()))?;
    let mut text = String::with_capacity(labels.len() * 3);
    for l in labels {
        text.push_str(&format!("{l}\n"));
    }
    write_atomic(&a.out, text.as_bytes())?;
    clock.write_sidecar(&a.out)
}

fn require_source(loaded: &Loaded, methods: &[MethodArg]) -> anyhow::Result<()> {
    if loaded.source.is_none() && methods.iter().any(|m| *m != MethodArg::SingleTask) {
        return Err(UsageError("--source is required unless only single-task is evaluated".into()).into());
    }
    Ok(())
}

fn dataset_name(report: &ReportArgs, data: &DataArgs) -> String {
    report.dataset.clone().unwrap_or_else(|| {
        data.target
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "target".into())
    })
}

fn write_report<T: Serialize>(
    report: &ReportArgs,
    records: &[llpx_core::eval::FoldRecord],
    whole: &T,
) -> anyhow::Result<()> {
    let bytes = match report.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_records_csv(records, &mut buf)?;
            buf
        }
        Format::Json => serde_json::to_vec_pretty(whole)?,
    };
    write_atomic(&report.out, &bytes)
}

fn cv(a: &CvArgs) -> anyhow::Result<()> {
    let clock = RunClock::start("cv");
    let hp = a.hp.resolve()?;
    let mut loaded = load(&a.data)?;
    require_source(&loaded, &[a.method])?;
    let source = source_task(&mut loaded, &a.data, &hp)?;
    let settings = CvSettings {
        bag_size: a.data.bag_size,
        k: a.k,
        seed: a.data.seed,
        method: a.method.into(),
        record_timing: a.report.timing,
    };
    let report = cross_validate(&source, &loaded.target, &hp, &settings)?;
    log::info!("{}: accuracy {:.4} ± {:.4}", settings.method.tag(), report.mean, report.std);
    let records = report.records(&dataset_name(&a.report, &a.data), 0.0);
    write_report(&a.report, &records, &report)?;
    clock.write_sidecar(&a.report.out)
}

fn sweep(a: &SweepArgs) -> anyhow::Result<()> {
    let clock = RunClock::start("sweep");
    let hp = a.hp.resolve()?;
    let mut loaded = load(&a.data)?;
    require_source(&loaded, &a.methods)?;
    let source = source_task(&mut loaded, &a.data, &hp)?;
    let settings = SweepSettings {
        dataset: dataset_name(&a.report, &a.data),
        bag_size: a.data.bag_size,
        k: a.k,
        fractions: a.fractions.clone(),
        seeds: if a.seeds.is_empty() { vec![a.data.seed] } else { a.seeds.clone() },
        methods: a.methods.iter().map(|&m| Method::from(m)).collect(),
        record_timing: a.report.timing,
    };
    let report = noise_sweep(&source, &loaded.target, &hp, &settings)?;
    for row in &report.rows {
        log::info!(
            "{:.2} {}: {:.4} ± {:.4}",
            row.noise_fraction,
            row.method.tag(),
            row.mean_accuracy,
            row.std
        );
    }
    write_report(&a.report, &report.records, &report)?;
    clock.write_sidecar(&a.report.out)
}

fn bench(a: &BenchArgs) -> anyhow::Result<()> {
    let clock = RunClock::start("bench");
    let hp = a.hp.resolve()?;
    let settings = BenchSettings {
        sizes: a.sizes.clone(),
        bag_size: a.bag_size,
        dims: a.dims,
        repetitions: a.repetitions,
        class_sep: a.class_sep,
        mean_shift: a.mean_shift,
    };
    let rows = bench_runtime(&settings, &hp, a.seed)?;
    let bytes = match a.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r)?;
            }
            w.into_inner().map_err(|e| anyhow::anyhow!("flushing CSV: {}", e.error()))?
        }
        Format::Json => serde_json::to_vec_pretty(&rows)?,
    };
    write_atomic(&a.out, &bytes)?;
    clock.write_sidecar(&a.out)
}
