#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use levyfluct::fluctuation::{self as fl, Window};
use levyfluct::harness::{default_spec, default_specs, emit_report, ExperimentSpec, Runner};
use levyfluct::simulator::{write_sample_csv, SimConfig, WORKERS_ENV};
use levyfluct::{KillingRate, LevyModel, ScaleEvaluator, ScaleMethod};

#[derive(Parser)]
#[command(
    name = "levyfluct",
    version,
    about = "Fluctuation identities for killed spectrally negative Lévy processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Model JSON file, or inline JSON starting with `{`
    #[arg(long)]
    model: String,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 40.0)]
    x_max: f64,
    /// Scale function grid step
    #[arg(long = "h", default_value_t = 1e-3)]
    h_grid: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Auto,
    Closed,
    Inversion,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate W, W' and Z on the evaluator grid (CSV: x,W,Wprime,Z)
    Scale {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a functional over the Cartesian product of parameter grids
    Eval {
        #[arg(value_enum)]
        functional: Functional,
        #[command(flatten)]
        model: ModelArgs,
        /// `name=v1,v2,...` or `name=start:stop:step`; one per parameter
        #[arg(long = "grid", required = true)]
        grids: Vec<String>,
        /// Write CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification experiment; exit 0 iff every tolerance passes
    Verify {
        /// Shipped experiment id (see `list`), or the id of the spec given with --spec
        experiment: String,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (overrides the environment)
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Dump raw per-path extremes as CSV
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        n_paths: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Level for `rho`
        #[arg(long)]
        level: Option<f64>,
        #[arg(long)]
        t_cap: Option<f64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the shipped experiments
    List,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Functional {
    W,
    WPrime,
    Z,
    ZPrime,
    ExitUpLt,
    ExitDownLt,
    OneSidedDownLt,
    JointSupInfCdf,
    PostInfSupCdf,
    MaxLossPostSupCdf,
    HTilde,
    HPostSup,
    HIntermediate,
    YValue,
}

impl Functional {
    fn params(self) -> &'static [&'static str] {
        use Functional::*;
        match self {
            W | WPrime | Z | ZPrime | OneSidedDownLt | HTilde => &["x"],
            HPostSup => &["z"],
            ExitUpLt | ExitDownLt => &["x", "b"],
            JointSupInfCdf | PostInfSupCdf => &["a", "b"],
            MaxLossPostSupCdf => &["d", "a", "b"],
            HIntermediate => &["z", "a", "b"],
            YValue => &["x", "i", "b"],
        }
    }

    fn eval(self, ev: &ScaleEvaluator, p: &[f64]) -> levyfluct::Result<f64> {
        use Functional::*;
        match self {
            W => ev.w(p[0]),
            WPrime => ev.w_prime(p[0]),
            Z => ev.z(p[0]),
            ZPrime => ev.z_prime(p[0]),
            ExitUpLt => fl::exit_up_lt(ev, p[0], p[1]),
            ExitDownLt => fl::exit_down_lt(ev, p[0], p[1]),
            OneSidedDownLt => fl::one_sided_down_lt(ev, p[0]),
            JointSupInfCdf => fl::joint_sup_inf_cdf(ev, Window::new(p[0], p[1])?),
            PostInfSupCdf => fl::post_inf_sup_cdf(ev, p[0], p[1]),
            MaxLossPostSupCdf => fl::max_loss_post_sup_cdf(ev, p[0], p[1], p[2]),
            HTilde => fl::h_tilde(ev, p[0]),
            HPostSup => fl::h_post_sup(ev, p[0]),
            HIntermediate => fl::h_intermediate(ev, p[0], p[1], p[2]),
            YValue => fl::y_value(ev, p[0], p[1], p[2]),
        }
    }
}

fn load_model(arg: &str) -> Result<LevyModel> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading model file {arg}"))?
    };
    serde_json::from_str(&text).with_context(|| format!("parsing model {arg}"))
}

fn evaluator(args: &ModelArgs, method: Method) -> Result<ScaleEvaluator> {
    let model = load_model(&args.model)?;
    let gamma = KillingRate::new(args.gamma)?;
    let ev = match method {
        Method::Auto => ScaleEvaluator::build(&model, gamma, args.x_max, args.h_grid)?,
        Method::Closed => ScaleEvaluator::build_with_method(
            &model,
            gamma,
            args.x_max,
            args.h_grid,
            ScaleMethod::ClosedForm,
        )?,
        Method::Inversion => ScaleEvaluator::build_with_method(
            &model,
            gamma,
            args.x_max,
            args.h_grid,
            ScaleMethod::Inversion,
        )?,
    };
    Ok(ev)
}

/// Parses `name=v1,v2` or `name=start:stop:step` (stop inclusive).
fn parse_grid(spec: &str) -> Result<(String, Vec<f64>)> {
    let (name, values) = spec
        .split_once('=')
        .with_context(|| format!("grid `{spec}` needs name=values"))?;
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse()
            .with_context(|| format!("bad number `{s}` in grid `{spec}`"))
    };
    let parts: Vec<&str> = values.split(':').collect();
    let list = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || stop < start {
                bail!("grid `{spec}` needs step > 0 and start <= stop");
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| start + i as f64 * step).collect()
        }
        [_] => values.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => bail!("grid `{spec}` must be a list or start:stop:step"),
    };
    if list.is_empty() {
        bail!("grid `{spec}` is empty");
    }
    Ok((name.trim().to_string(), list))
}

fn eval_csv(functional: Functional, ev: &ScaleEvaluator, grids: &[String]) -> Result<String> {
    let mut by_name = Vec::new();
    for g in grids {
        by_name.push(parse_grid(g)?);
    }
    let params = functional.params();
    for (name, _) in &by_name {
        if !params.contains(&name.as_str()) {
            bail!("unknown parameter `{name}`; expected {}", params.join(", "));
        }
    }
    let mut axes = Vec::new();
    for p in params {
        let values = by_name
            .iter()
            .find(|(n, _)| n == p)
            .map(|(_, v)| v.clone())
            .with_context(|| format!("missing --grid for `{p}`"))?;
        axes.push(values);
    }
    let mut out = format!("{},value\n", params.join(","));
    let mut idx = vec![0usize; axes.len()];
    loop {
        let point: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
        let value = functional
            .eval(ev, &point)
            .with_context(|| format!("at {point:?}"))?;
        let cells: Vec<String> = point.iter().map(f64::to_string).collect();
        out.push_str(&format!("{},{value}\n", cells.join(",")));
        // odometer over the axes, last one fastest
        let mut k = axes.len();
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn verify(
    experiment: &str,
    spec_path: Option<&Path>,
    out: &Path,
    workers: Option<usize>,
) -> Result<bool> {
    let spec = match spec_path {
        Some(path) => {
            let spec = ExperimentSpec::from_file(path)?;
            if spec.id() != experiment && spec.name.as_str() != experiment {
                bail!(
                    "spec {} is `{}`, not `{experiment}`",
                    path.display(),
                    spec.id()
                );
            }
            spec
        }
        None => default_spec(experiment)
            .with_context(|| format!("no shipped experiment `{experiment}` (try `list`)"))?,
    };
    let mut runner = Runner::new();
    if let Some(w) = workers {
        runner = runner.with_workers(w);
    }
    let report = runner.run(&spec)?;
    let (csv, summary) = emit_report(&report, out)?;
    print!("{}", report.summary());
    eprintln!("wrote {} and {}", csv.display(), summary.display());
    Ok(report.passed())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Scale { model, method, out } => {
            evaluator(&model, method)?.write_grid_csv(&out)?;
        }
        Command::Eval {
            functional,
            model,
            grids,
            out,
        } => {
            let csv = eval_csv(functional, &evaluator(&model, Method::Auto)?, &grids)?;
            match out {
                Some(path) => std::fs::write(&path, csv)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => std::io::stdout().write_all(csv.as_bytes())?,
            }
        }
        Command::Verify {
            experiment,
            spec,
            out,
            workers,
        } => return verify(&experiment, spec.as_deref(), &out, workers),
        Command::Sample {
            model,
            dt,
            n_paths,
            seed,
            level,
            t_cap,
            workers,
            out,
        } => {
            let mut cfg = SimConfig::new(
                load_model(&model.model)?,
                KillingRate::new(model.gamma)?,
                dt,
                n_paths,
                seed,
            )?;
            if let Some(cap) = t_cap {
                cfg = cfg.with_t_cap(cap)?;
            }
            write_sample_csv(&cfg, level, workers, &out)?;
        }
        Command::List => {
            for spec in default_specs() {
                println!("{}\t{}", spec.id(), spec.name.as_str());
            }
            println!("(worker count: --workers or {WORKERS_ENV})");
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
