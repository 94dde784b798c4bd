use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use imdd::channel::{Channel, ChannelConfig};
use imdd::complexity::{eta_sweep, FlopsReport};
use imdd::harness::{
    checkpoint_path, parse_result_csv, plot_ber_svg, prepare_sbrnn_artifacts, read_checkpoint,
    result_csv_bytes, run_sweep, write_checkpoint, ExperimentConfig, SystemKind,
};
use imdd::labeling::{ber_lower_bound, expected_ber};
use imdd::trainer::Trainer;

#[derive(Parser)]
#[command(
    name = "imdd",
    version,
    about = "Learned SBRNN transceiver and PAM/MLSD baseline over a dispersive IM/DD fiber link"
)]
struct Cli {
    /// Experiment configuration file (TOML). Defaults apply if omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the harness seed (trainer seeds are re-derived).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for CSVs, checkpoints and plots.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the autoencoder at one distance and save the checkpoint.
    Train {
        /// Fiber length in km.
        #[arg(long)]
        distance: f64,
        /// Also write an intermediate checkpoint every N steps.
        #[arg(long)]
        checkpoint_every: Option<usize>,
    },
    /// Evaluate a checkpoint on the test set at one distance.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        distance: f64,
    },
    /// Run the configured distance sweep and emit the results CSV.
    Sweep {
        /// Train missing checkpoints instead of failing.
        #[arg(long)]
        train: bool,
        /// Also render the BER-distance SVG.
        #[arg(long)]
        plot: bool,
    },
    /// Fit the sliding-window combining weights at one distance.
    OptimizeWeights {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        distance: f64,
    },
    /// Optimize the bit-to-symbol mapping at one distance.
    OptimizeLabeling {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        distance: f64,
    },
    /// Run the PAM/MLSD baseline sweep.
    Mlsd,
    /// Print the analytic FLOPS-per-decoded-bit accounting.
    Flops {
        /// Upper end of the matched-memory sweep (bits).
        #[arg(long, default_value_t = 36)]
        eta_max: usize,
    },
    /// Render a results CSV into a BER-versus-distance SVG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> imdd::Result<()> {
    std::fs::create_dir_all(&cli.out)?;
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    }
    .with_seed_override(cli.seed);
    cfg.validate()?;
    let hash = cfg.hash();

    match cli.command {
        Command::Train { distance, checkpoint_every } => {
            let dims = cfg.autoencoder.dims()?;
            let channel =
                Channel::new(ChannelConfig { distance_km: distance, ..cfg.channel.clone() })?;
            let mut trainer_cfg = cfg.trainer.clone();
            trainer_cfg.val_window = cfg.estimator.window;
            let mut trainer = Trainer::new(trainer_cfg, &channel, dims)?;

            let ckpt = checkpoint_path(&cli.out, &hash, distance);
            let trace_path = cli.out.join(format!("train_{hash}_{distance}km.csv"));
            let mut trace = String::from("step,loss,val_bler\n");
            let outcome = trainer.run(|row, params| {
                trace.push_str(&format!(
                    "{},{},{}\n",
                    row.step,
                    row.loss,
                    row.val_bler.map(|b| b.to_string()).unwrap_or_default()
                ));
                if row.step % 100 == 0 || row.val_bler.is_some() {
                    eprintln!(
                        "step {} loss {:.5}{}",
                        row.step,
                        row.loss,
                        row.val_bler.map(|b| format!(" val BLER {b:.5}")).unwrap_or_default()
                    );
                }
                if let Some(every) = checkpoint_every {
                    if every > 0 && (row.step + 1) % every == 0 {
                        let _ = write_checkpoint(&ckpt, params);
                    }
                }
            })?;
            write_checkpoint(&ckpt, &outcome.best_params)?;
            std::fs::write(&trace_path, trace)?;
            eprintln!(
                "saved {} (best validation BLER {:?}) and {}",
                ckpt.display(),
                outcome.best_val_bler,
                trace_path.display()
            );
        }

        Command::Eval { checkpoint, distance } => {
            // Stage the checkpoint and run a single-distance sweep.
            let mut eval_cfg = cfg.clone();
            eval_cfg.harness.system = SystemKind::Sbrnn;
            eval_cfg.harness.distances_km = vec![distance];
            eval_cfg.harness.train = false;
            let eval_hash = eval_cfg.hash();
            let ckpt_dir = cli.out.join("eval_ckpt");
            std::fs::create_dir_all(&ckpt_dir)?;
            let params = read_checkpoint(&checkpoint)?;
            write_checkpoint(&checkpoint_path(&ckpt_dir, &eval_hash, distance), &params)?;
            let (rows, _) = run_sweep(&eval_cfg, &ckpt_dir, &|msg| eprintln!("{msg}"))?;
            let csv = result_csv_bytes(&rows, &eval_hash)?;
            let path = cli.out.join(format!("eval_{eval_hash}_{distance}km.csv"));
            std::fs::write(&path, &csv)?;
            print!("{}", String::from_utf8_lossy(&csv));
            eprintln!("wrote {}", path.display());
        }

        Command::Sweep { train, plot } => {
            let mut cfg = cfg;
            if train {
                cfg.harness.train = true;
            }
            let (rows, weights) = run_sweep(&cfg, &cli.out, &|msg| eprintln!("{msg}"))?;
            let csv = result_csv_bytes(&rows, &hash)?;
            let csv_path = cli.out.join(format!("sweep_{hash}.csv"));
            std::fs::write(&csv_path, &csv)?;
            eprintln!("wrote {}", csv_path.display());
            if !weights.is_empty() {
                let path = cli.out.join(format!("weights_{hash}.csv"));
                let mut w = csv::Writer::from_writer(Vec::new());
                for record in &weights {
                    w.serialize(record).map_err(|e| imdd::Error::format(e.to_string()))?;
                }
                let bytes = w
                    .into_inner()
                    .map_err(|e| imdd::Error::format(e.to_string()))?;
                let mut file = format!("# config {hash}\n").into_bytes();
                file.extend_from_slice(&bytes);
                std::fs::write(&path, file)?;
                eprintln!("wrote {}", path.display());
            }
            if plot {
                let svg = plot_ber_svg(&rows, Some(cfg.harness.hd_fec_ber), &hash);
                let path = cli.out.join(format!("plot_{hash}.svg"));
                std::fs::write(&path, svg)?;
                eprintln!("wrote {}", path.display());
            }
        }

        Command::OptimizeWeights { checkpoint, distance } => {
            let channel =
                Channel::new(ChannelConfig { distance_km: distance, ..cfg.channel.clone() })?;
            let params = read_checkpoint(&checkpoint)?;
            let artifacts = prepare_sbrnn_artifacts(&cfg, &channel, params)?;
            let opt = &artifacts.weight_opt;
            let path = cli.out.join(format!("weights_{hash}_{distance}km.txt"));
            let text: String = opt.weights.as_slice().iter().map(|w| format!("{w}\n")).collect();
            std::fs::write(&path, text)?;
            println!(
                "cross entropy: uniform {:.6} -> optimized {:.6} ({} iterations)",
                opt.cost_uniform, opt.cost_optimized, opt.iterations
            );
            println!("weights: {:?}", opt.weights.as_slice());
            eprintln!("wrote {}", path.display());
        }

        Command::OptimizeLabeling { checkpoint, distance } => {
            let channel =
                Channel::new(ChannelConfig { distance_km: distance, ..cfg.channel.clone() })?;
            let params = read_checkpoint(&checkpoint)?;
            let mut label_cfg = cfg.clone();
            label_cfg.harness.labeling_variants = vec!["optimized".into()];
            let artifacts = prepare_sbrnn_artifacts(&label_cfg, &channel, params)?;
            let (_, labeling) = &artifacts.labelings[0];
            let path = cli.out.join(format!("labeling_{hash}_{distance}km.txt"));
            std::fs::write(&path, labeling.to_lines())?;
            println!(
                "expected BER {:.6e} (lower bound {:.6e})",
                expected_ber(labeling, &artifacts.confusion),
                ber_lower_bound(&artifacts.confusion, labeling.width())
            );
            eprintln!("wrote {}", path.display());
        }

        Command::Mlsd => {
            let mut cfg = cfg;
            if cfg.harness.system == SystemKind::Sbrnn {
                cfg.harness.system = if cfg.mlsd.pam.order == 4 {
                    SystemKind::Pam4Mlsd
                } else {
                    SystemKind::Pam2Mlsd
                };
            }
            let hash = cfg.hash();
            let (rows, _) = run_sweep(&cfg, &cli.out, &|msg| eprintln!("{msg}"))?;
            let csv = result_csv_bytes(&rows, &hash)?;
            let path = cli.out.join(format!("mlsd_{hash}.csv"));
            std::fs::write(&path, &csv)?;
            print!("{}", String::from_utf8_lossy(&csv));
            eprintln!("wrote {}", path.display());
        }

        Command::Flops { eta_max } => {
            let dims = cfg.autoencoder.dims()?;
            let report = FlopsReport::new(
                dims.alphabet,
                dims.block_len,
                cfg.estimator.window,
                cfg.mlsd.pam.order,
                cfg.mlsd.memory,
            );
            println!(
                "SBRNN  M={} n={} W={}: tx {:.1} + rx {:.1} = {:.1} FLOPS/bit",
                report.alphabet,
                report.block_len,
                report.window,
                report.sbrnn_tx,
                report.sbrnn_rx,
                report.sbrnn_tx + report.sbrnn_rx
            );
            println!(
                "MLSD   PAM{} mu={} ({} states): {:.1} FLOPS/bit",
                report.pam_order,
                report.memory,
                cfg.mlsd.pam.states(report.memory),
                report.mlsd
            );
            println!("\nmatched-memory sweep (eta = bits per window / state):");
            println!("{:>6} {:>16} {:>16}", "eta", "sbrnn_rx", "mlsd");
            for (eta, rx, vit) in
                eta_sweep(dims.alphabet, dims.block_len, cfg.mlsd.pam.order, eta_max)
            {
                println!("{eta:>6} {rx:>16.1} {vit:>16.1}");
            }
        }

        Command::Plot { input, output } => {
            let bytes = std::fs::read(&input)?;
            let rows = parse_result_csv(&bytes)?;
            if rows.is_empty() {
                return Err(imdd::Error::Empty("no rows to plot".into()));
            }
            let svg = plot_ber_svg(&rows, Some(cfg.harness.hd_fec_ber), &hash);
            let path = output.unwrap_or_else(|| input.with_extension("svg"));
            std::fs::write(&path, svg)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}
