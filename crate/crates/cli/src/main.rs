//! `biknn` command-line tool.
//!
//! Exit status: 0 on success, 1 on usage errors (bad flags or parameter
//! values), 2 on data errors (unreadable or unsuitable input).

mod args;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use biknn::classify::classify;
use biknn::eval::{run_benchmark, BenchConfig, TrialReport};
use biknn::export::{write_classification, write_grid, write_report, write_scores};
use biknn::scorer::{decision_threshold, predict_outliers};
use biknn::{BiknnModel, BiknnParams, Dataset, Preset, SplitMode};
use clap::Parser;

use args::{Cli, Command, DataArgs, ParamArgs};

enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow::anyhow!(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("BIKNN_LOG")
                .unwrap_or_else(|_| "info".into()),
        )
        .init();
    if let Err(f) = configure_threads() {
        return report(f);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    match f {
        Failure::Usage(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Failure::Data(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `BIKNN_THREADS` caps the worker pool used for neighbor search and trials.
fn configure_threads() -> Outcome {
    let Ok(raw) = std::env::var("BIKNN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        usage(format!(
            "BIKNN_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("cannot configure {n} threads: {e}")))
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Fit {
            data,
            params,
            output,
        } => {
            let params = checked(&params)?;
            let ds = load(&data)?;
            let model = fit(&ds, &params)?;
            let json = model.to_json().context("serializing model")?;
            with_output(output.as_deref(), |w| Ok(writeln!(w, "{json}")?))
        }
        Command::Score {
            data,
            params,
            model,
            n_outliers,
            output,
        } => {
            let ds = load(&data)?;
            let scores = match model {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading model {}", path.display()))?;
                    let model = BiknnModel::from_json(&text)
                        .with_context(|| format!("loading model {}", path.display()))?;
                    model.score_all(ds.features()).context("scoring")?
                }
                None => fit(&ds, &checked(&params)?)?.train_scores(),
            };
            let flags = match n_outliers {
                Some(n) => {
                    let thr = decision_threshold(&scores, n).map_err(|e| usage(e.to_string()))?;
                    Some(predict_outliers(&scores, thr))
                }
                None => None,
            };
            with_output(output.as_deref(), |w| {
                Ok(write_scores(w, &scores, flags.as_deref())?)
            })
        }
        Command::Classify {
            data,
            params,
            n_outliers,
            output,
        } => {
            let params = checked(&params)?;
            let ds = load(&data)?;
            if n_outliers == 0 {
                return Err(usage("--n-outliers must be at least 1"));
            }
            let model = fit(&ds, &params)?;
            let types = classify(model.train_space(), n_outliers).context("classifying")?;
            with_output(output.as_deref(), |w| {
                Ok(write_classification(w, model.train_space(), &types)?)
            })
        }
        Command::Grid {
            data,
            params,
            resolution,
            bounds,
            output,
        } => {
            let params = checked(&params)?;
            if resolution < 2 {
                return Err(usage("--resolution must be at least 2"));
            }
            let ds = load(&data)?;
            if ds.d() != 2 {
                return Err(Failure::Data(anyhow::anyhow!(
                    "grid needs 2-dimensional data, {} has {} features",
                    data.input.display(),
                    ds.d()
                )));
            }
            let (mins, maxs) = match bounds {
                Some([x0, x1, y0, y1]) => ([x0, y0], [x1, y1]),
                None => biknn_server::grid_bounds(&ds),
            };
            let model = fit(&ds, &params)?;
            let grid = model
                .score_grid(mins, maxs, resolution)
                .map_err(|e| usage(e.to_string()))?;
            with_output(output.as_deref(), |w| Ok(write_grid(w, mins, maxs, &grid)?))
        }
        Command::Bench {
            input,
            labels,
            params,
            compare,
            trials,
            train_fraction,
            unstratified,
            timing,
            output,
            report,
        } => bench(BenchArgs {
            list: input,
            labels,
            params,
            compare,
            cfg: BenchConfig {
                trials,
                train_fraction,
                base_seed: 0,
                split_mode: if unstratified {
                    SplitMode::Uniform
                } else {
                    SplitMode::Stratified
                },
            },
            timing,
            output,
            report,
        }),
        Command::Serve {
            data,
            params,
            port,
            n_outliers,
            static_dir,
        } => {
            let params = checked(&params)?;
            let ds = load(&data)?;
            let marks = biknn_server::marks_path_for(&data.input);
            let session = biknn_server::Session::new(ds, &params, n_outliers, Some(marks))
                .map_err(|e| Failure::Data(e.into()))?;
            let addr = SocketAddr::from(([127, 0, 0, 1], port));
            let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
            rt.block_on(biknn_server::serve(session, addr, static_dir))
                .with_context(|| format!("serving on {addr}"))?;
            Ok(())
        }
    }
}

fn checked(args: &ParamArgs) -> Result<BiknnParams, Failure> {
    let p = args.build();
    p.validate().map_err(|e| usage(e.to_string()))?;
    Ok(p)
}

fn load(data: &DataArgs) -> Result<Dataset, Failure> {
    Ok(Dataset::load_csv(&data.input, data.labels.as_deref())
        .with_context(|| format!("loading {}", data.input.display()))?)
}

fn fit(ds: &Dataset, params: &BiknnParams) -> Result<BiknnModel, Failure> {
    Ok(BiknnModel::fit(ds.features(), params).context("fitting model")?)
}

fn with_output(
    path: Option<&Path>,
    body: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>,
) -> Outcome {
    match path {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            let mut w = BufWriter::new(file);
            body(&mut w)?;
            w.flush()
                .with_context(|| format!("writing {}", p.display()))?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            body(&mut w)?;
            w.flush().context("writing stdout")?;
        }
    }
    Ok(())
}

struct BenchArgs {
    list: PathBuf,
    labels: String,
    params: ParamArgs,
    compare: Vec<Preset>,
    cfg: BenchConfig,
    timing: bool,
    output: Option<PathBuf>,
    report: Option<PathBuf>,
}

fn bench_params(params: &ParamArgs, compare: &[Preset]) -> Vec<(String, BiknnParams)> {
    let mut list = Vec::new();
    if params.has_explicit_weights() {
        list.push(("custom".to_owned(), params.build()));
    } else if let Some(p) = params.preset {
        list.push((p.name().to_owned(), params.build_for(p)));
    }
    for &p in compare {
        if !list.iter().any(|(n, _)| n == p.name()) {
            list.push((p.name().to_owned(), params.build_for(p)));
        }
    }
    if list.is_empty() {
        list = Preset::ALL
            .iter()
            .map(|&p| (p.name().to_owned(), params.build_for(p)))
            .collect();
    }
    list
}

fn read_dataset_list(list: &Path, labels: &str) -> anyhow::Result<Vec<(String, Dataset)>> {
    let text = std::fs::read_to_string(list)
        .with_context(|| format!("reading dataset list {}", list.display()))?;
    let base = list.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let path = base.join(line);
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| line.to_owned());
        let ds = Dataset::load_csv(&path, Some(labels))
            .with_context(|| format!("loading {}", path.display()))?;
        out.push((name, ds));
    }
    anyhow::ensure!(!out.is_empty(), "dataset list {} is empty", list.display());
    Ok(out)
}

fn bench(mut a: BenchArgs) -> Outcome {
    a.cfg.base_seed = a.params.seed;
    if a.cfg.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    if !(a.cfg.train_fraction > 0.0 && a.cfg.train_fraction < 1.0) {
        return Err(usage("--train-fraction must lie in (0, 1)"));
    }
    let params = bench_params(&a.params, &a.compare);
    for (name, p) in &params {
        p.validate().map_err(|e| usage(format!("{name}: {e}")))?;
    }
    let datasets = read_dataset_list(&a.list, &a.labels)?;
    let mut reports = run_benchmark(&datasets, &params, &a.cfg).context("benchmark")?;
    if !a.timing {
        reports.iter_mut().for_each(strip_timing);
    }
    with_output(a.output.as_deref(), |w| {
        Ok(write_report(w, &reports, a.timing)?)
    })?;
    if let Some(path) = &a.report {
        let json = serde_json::to_string_pretty(&reports).context("serializing report")?;
        std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Wall-clock numbers are the only non-reproducible part of a report.
fn strip_timing(r: &mut TrialReport) {
    r.seconds.clear();
    r.mean_seconds = 0.0;
}
