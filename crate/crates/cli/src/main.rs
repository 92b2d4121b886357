use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use holobind::alt::{
    ablation_csv, ablation_experiment, operator_bind, operator_secret, operator_unbind, BindOperator,
};
use holobind::attacks::{
    clustering_attack, genuine_inversion, genuine_regression, inversion_report, regression_report,
    strong_adversary, AttackReport, Direction, INVERSION_LR, INVERSION_STEPS, REGRESSION_HELD_OUT,
    REGRESSION_TRAIN,
};
use holobind::backbone::{parse_spec, Backbone};
use holobind::container::{read_tensor, write_tensor};
use holobind::protocol::{
    client_infer, cost_report, head_flops, QueryPlan, TcpTransport, Worker,
};
use holobind::tensor::{parse_dims, Tensor};
use holobind::trainer::{
    bound_inputs, metrics_csv, read_model, synth_dataset, train_csps_with, worker_outputs,
    write_model, TrainConfig, HIDDEN,
};
use holobind::vsa::{probe_csv, probe_experiment, unbind_clamped, ProbeMode, Secret};
use holobind::{Error, RngStream};

#[derive(Parser, Debug)]
#[command(name = "holobind", version, about = "Holographic binding for split inference")]
struct Cli {
    /// Seed for every random draw. Falls back to HOLOBIND_SEED, then 1.
    #[arg(long, global = true, env = "HOLOBIND_SEED")]
    seed: Option<u64>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Projected,
    Naive,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OpArg {
    Hrr2d,
    Hrr1d,
    Vtb,
    Ivtb,
    Hilbert,
}

impl OpArg {
    fn operator(self) -> BindOperator {
        match self {
            OpArg::Hrr2d => BindOperator::Hrr2d,
            OpArg::Hrr1d => BindOperator::Hrr1d,
            OpArg::Vtb => BindOperator::Vtb,
            OpArg::Ivtb => BindOperator::Ivtb,
            OpArg::Hilbert => BindOperator::Hilbert,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TargetArg {
    /// Worker outputs.
    R,
    /// Bound inputs as sent to the worker.
    #[value(name = "x_bound")]
    XBound,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AttackKind {
    Cluster,
    Strong,
    Invert,
    Regress,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a projected secret.
    GenSecret {
        #[arg(long)]
        dims: String,
        #[arg(long, value_enum, default_value = "hrr2d")]
        op: OpArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bind a tensor with a secret.
    Bind {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        secret: PathBuf,
        #[arg(long, value_enum, default_value = "hrr2d")]
        op: OpArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover a bound tensor.
    Unbind {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        secret: PathBuf,
        #[arg(long, value_enum, default_value = "hrr2d")]
        op: OpArg,
        #[arg(long)]
        out: PathBuf,
        /// Use the clamped exact reciprocal instead of the conjugate (hrr2d only).
        #[arg(long)]
        naive: bool,
        /// Original HxW of a padded image (hilbert only).
        #[arg(long)]
        crop: Option<String>,
    },
    /// Bundle-and-probe retrieval curves.
    Probe {
        #[arg(long, default_value_t = 1024)]
        d: usize,
        #[arg(long, default_value_t = 32)]
        kmax: usize,
        #[arg(long, value_enum, default_value = "both")]
        mode: ModeArg,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a worker.
    Serve {
        /// Backbone description file.
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        spec: Option<PathBuf>,
        /// Serve the worker stack of a trained toy model instead.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
    },
    /// Classify one image through a worker.
    Query {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        endpoint: String,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute and traffic split of one query.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        dims: String,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the toy model.
    TrainToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long, default_value_t = 60)]
        epochs: usize,
    },
    /// Run an attack against a trained toy model.
    Attack {
        #[arg(long, value_enum)]
        kind: AttackKind,
        /// What the adversary observes (cluster and strong only).
        #[arg(long, value_enum, default_value = "r")]
        target: TargetArg,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Round-trip quality of the alternative binding operators.
    Ablate {
        #[arg(long, default_value_t = 16)]
        side: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_f64(path: &Path) -> holobind::Result<Tensor<f64>> {
    Ok(read_tensor(path)?.into_f64())
}

fn write_text(path: &Path, text: &str) -> holobind::Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn run(cli: Cli) -> holobind::Result<()> {
    let seed = cli.seed.unwrap_or(1);
    match cli.command {
        Command::GenSecret { dims, op, out } => {
            let dims = parse_dims(&dims)?;
            write_tensor(&out, &operator_secret(op.operator(), &dims, &RngStream::new(seed))?)
        }
        Command::Bind {
            input,
            secret,
            op,
            out,
        } => {
            let x = load_f64(&input)?;
            write_tensor(&out, &operator_bind(op.operator(), &x, &load_f64(&secret)?, seed)?)
        }
        Command::Unbind {
            input,
            secret,
            op,
            out,
            naive,
            crop,
        } => {
            let b = load_f64(&input)?;
            if naive {
                if op != OpArg::Hrr2d {
                    return Err(Error::Parameter("--naive applies to hrr2d only".into()));
                }
                return write_tensor(&out, &unbind_clamped(&b, &Secret::raw(load_f64(&secret)?, seed))?);
            }
            let crop = match crop.as_deref().map(parse_dims).transpose()? {
                None => None,
                Some(d) if d.len() == 2 => Some((d[0], d[1])),
                Some(d) => return Err(Error::Parameter(format!("--crop takes HxW, got {d:?}"))),
            };
            write_tensor(&out, &operator_unbind(op.operator(), &b, &load_f64(&secret)?, seed, crop)?)
        }
        Command::Probe {
            d,
            kmax,
            mode,
            trials,
            out,
        } => {
            let side = (d as f64).sqrt().round() as usize;
            if side * side != d {
                return Err(Error::Parameter(format!("d = {d} is not a square")));
            }
            let ks: Vec<usize> = std::iter::successors(Some(1usize), |k| Some(k * 2))
                .take_while(|&k| k <= kmax)
                .collect();
            let modes = match mode {
                ModeArg::Projected => vec![ProbeMode::Projected],
                ModeArg::Naive => vec![ProbeMode::Naive],
                ModeArg::Both => vec![ProbeMode::Projected, ProbeMode::Naive],
            };
            let rows = probe_experiment(side, &ks, &modes, trials, seed)?;
            write_text(&out, &probe_csv(&rows))
        }
        Command::Serve {
            spec,
            model,
            listen,
        } => {
            let backbone = match (spec, model) {
                (Some(path), _) => Backbone::from_spec(&parse_spec(&std::fs::read_to_string(path)?)?)?,
                (None, Some(path)) => read_model(path)?.0.to_backbone(),
                (None, None) => unreachable!("clap requires one of --spec and --model"),
            };
            let worker = Worker::spawn(backbone, listen.as_str())?;
            eprintln!("listening on {}", worker.local_addr());
            worker.join();
            Ok(())
        }
        Command::Query {
            input,
            endpoint,
            k,
            model,
            out,
        } => {
            let x = load_f64(&input)?;
            let (model, _) = read_model(&model)?;
            let plan = QueryPlan::new(k, RngStream::new(seed), endpoint.clone())?;
            let mut transport = TcpTransport::connect(endpoint.as_str())?;
            let dist = client_infer(&x, &plan, &model.pred, &mut transport)?;
            let mut csv = String::from("class,probability\n");
            for (c, p) in dist.iter().enumerate() {
                csv.push_str(&format!("{c},{p:.9}\n"));
            }
            write_text(&out, &csv)
        }
        Command::Bench {
            spec,
            dims,
            k,
            classes,
            out,
        } => {
            let spec = parse_spec(&std::fs::read_to_string(spec)?)?;
            let dims = parse_dims(&dims)?;
            let inputs: usize = dims.iter().product();
            let report = cost_report(&spec, &dims, k, head_flops(inputs, HIDDEN, classes))?;
            match out {
                Some(path) => write_text(&path, &report.csv()),
                None => {
                    print!("{}", report.csv());
                    Ok(())
                }
            }
        }
        Command::TrainToy {
            out,
            metrics,
            epochs,
        } => {
            let data = synth_dataset(seed);
            let cfg = TrainConfig {
                epochs,
                seed,
                ..TrainConfig::default()
            };
            let outcome = train_csps_with(&data, &cfg, |m| {
                log::info!("epoch {} loss {:.4}", m.epoch, m.train_loss)
            })?;
            write_model(&out, &outcome.model, &cfg)?;
            if let Some(path) = metrics {
                write_text(&path, &metrics_csv(&outcome.log))?;
            }
            Ok(())
        }
        Command::Attack {
            kind,
            target,
            model,
            out,
        } => {
            let (model, cfg) = read_model(&model)?;
            let data = synth_dataset(cfg.seed);
            let report = run_attack(kind, target, &model, &data, seed)?;
            write_text(&out, &report.csv())
        }
        Command::Ablate { side, trials, out } => {
            let rows = ablation_experiment(&BindOperator::ALL, side, trials, seed)?;
            write_text(&out, &ablation_csv(&rows))
        }
    }
}

fn observed(
    target: TargetArg,
    model: &holobind::trainer::ToyModel,
    split: &holobind::trainer::Split,
    seed: u64,
) -> holobind::Result<Vec<Tensor<f64>>> {
    match target {
        TargetArg::R => worker_outputs(model, split, seed),
        TargetArg::XBound => bound_inputs(split, seed),
    }
}

fn run_attack(
    kind: AttackKind,
    target: TargetArg,
    model: &holobind::trainer::ToyModel,
    data: &holobind::trainer::SynthDataset,
    seed: u64,
) -> holobind::Result<AttackReport> {
    Ok(match kind {
        AttackKind::Cluster => {
            let r = observed(target, model, &data.test, seed)?;
            clustering_attack(&r, &data.test.labels, data.classes, seed)?.with_threshold(0.05, Direction::AtMost)
        }
        AttackKind::Strong => {
            let train = observed(target, model, &data.train, seed)?;
            let test = observed(target, model, &data.test, seed.wrapping_add(1))?;
            let cfg = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            strong_adversary(
                (&train, &data.train.labels),
                (&test, &data.test.labels),
                data.classes,
                &cfg,
            )?
            .with_threshold(0.45, Direction::AtMost)
        }
        AttackKind::Invert => {
            let inv = genuine_inversion(data, seed, INVERSION_STEPS, INVERSION_LR)?;
            inversion_report(&inv, seed, INVERSION_STEPS, INVERSION_LR).with_threshold(0.2, Direction::AtMost)
        }
        AttackKind::Regress => {
            let r = genuine_regression(data, seed, REGRESSION_TRAIN, REGRESSION_HELD_OUT)?;
            regression_report(&r, seed, REGRESSION_TRAIN, REGRESSION_HELD_OUT).with_threshold(0.15, Direction::AtMost)
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
