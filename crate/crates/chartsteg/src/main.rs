use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chartsteg::bundle::{read_json, write_json, ChartData, InfoFile};
use chartsteg::checkpoint;
use chartsteg::config::RunConfig;
use chartsteg::error::{AppError, Result};
use chartsteg::eval::{evaluate_dir, write_report};
use chartsteg::image_io::{check_lossless, read_rgb, write_gray, write_rgb};
use chartsteg::pipeline::{decode_revealed, encode, reveal_all, EncodeRequest, DEFAULT_K};
use chartsteg::synth::write_samples;
use chartsteg::train::train;
use chartsteg_core::dtoi::Plane;
use chartsteg_core::stegnet::StegModel;
use clap::{Parser, Subcommand};

/// Hide chart data and chart information inside chart images.
#[derive(Parser)]
#[command(name = "chartsteg", version)]
struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed data and chart information into a carrier image.
    Encode {
        #[arg(long)]
        carrier: PathBuf,
        /// Data JSON; omit for an info-only embedding.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        info: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Output image, PNG only.
        #[arg(long)]
        out: PathBuf,
        /// Interpolation factor for discrete data.
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        /// Data-channel budget (1 to 3).
        #[arg(long, default_value_t = 3)]
        max_channels: usize,
    },
    /// Recover chart information and data from an encoded image.
    Decode {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train a model from a TOML config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Training checkpoint (train.ckpt) to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Measure quality and capacity over a directory of PNG charts.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// JSON report; a CSV with the same stem is written next to it.
        #[arg(long)]
        report: PathBuf,
    },
    /// Write an untrained model checkpoint for a config.
    InitModel {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write synthetic chart carriers and example data/info bundles.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long, default_value_t = 384)]
        size: usize,
    },
}

fn load_model(path: &Path) -> Result<StegModel<f32>> {
    Ok(checkpoint::load(path)?.0)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

fn cmd_encode(
    carrier: &Path,
    data: Option<&Path>,
    info: &Path,
    model: &Path,
    out: &Path,
    k: usize,
    max_channels: usize,
) -> Result<()> {
    check_lossless(out)?;
    if !(1..=3).contains(&max_channels) {
        return Err(AppError::Usage(format!("--max-channels must be 1, 2 or 3, got {max_channels}")));
    }
    let req = EncodeRequest {
        carrier: read_rgb(carrier)?,
        data: data.map(read_json::<ChartData>).transpose()?,
        info: read_json::<InfoFile>(info)?.into(),
        k,
        max_channels,
    };
    let model = load_model(model)?;
    let enc = encode(&model, &req)?;
    write_rgb(out, &enc.image)?;
    println!("{}", serde_json::to_string_pretty(&enc.report).expect("report serializes"));
    Ok(())
}

fn cmd_decode(image: &Path, model: &Path, out_dir: &Path) -> Result<()> {
    let model = load_model(model)?;
    let img = read_rgb(image)?;
    create_dir(out_dir)?;
    let revealed = reveal_all(&model, &img)?;
    match decode_revealed(&model, &revealed) {
        Ok(d) => {
            write_json(&out_dir.join("info.json"), &InfoFile::from(&d.info))?;
            if let Some(data) = &d.data {
                write_json(&out_dir.join("data.json"), data)?;
            }
            for (i, c) in d.channels.iter().enumerate() {
                write_gray(&out_dir.join(format!("data_image_{i}.png")), c)?;
            }
            write_gray(&out_dir.join("qr.png"), &d.qr)?;
            write_json(&out_dir.join("manifest.json"), &d.manifest)?;
            println!("{}", serde_json::to_string_pretty(&d.manifest).expect("manifest serializes"));
            match d.manifest.data_error {
                Some(e) => Err(AppError::PayloadLost(format!("data could not be restored: {e}"))),
                None => Ok(()),
            }
        }
        Err(e) => {
            // nothing can be de-normalized; leave the raw channels for inspection
            let (h, w) = (img.height, img.width);
            for c in 0..revealed.channels() {
                let data = revealed.plane(c).iter().map(|&v| f64::from(v).clamp(0.0, 1.0)).collect();
                let name = if c == 3 { "qr.png".to_string() } else { format!("data_image_{c}.png") };
                write_gray(&out_dir.join(name), &Plane::from_vec(h, w, data)?)?;
            }
            let manifest = serde_json::json!({ "height": h, "width": w, "error": e.to_string() });
            write_json(&out_dir.join("manifest.json"), &manifest)?;
            Err(e)
        }
    }
}

fn cmd_train(config: &Path, resume: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let summary = train(&cfg, resume, &mut |line| eprintln!("{line}"))?;
    println!(
        "{}",
        serde_json::json!({
            "steps": summary.steps,
            "initial": summary.initial,
            "final": summary.last,
            "model": summary.model_path,
        })
    );
    Ok(())
}

fn cmd_eval(model: &Path, corpus: &Path, report: &Path, seed: u64) -> Result<()> {
    let model = load_model(model)?;
    let levels = evaluate_dir(&model, corpus, seed, &mut |line| eprintln!("{line}"))?;
    write_report(report, &levels)?;
    for l in &levels {
        let r = &l.report;
        println!(
            "{:<8} psnr {:.2} ssim {:.4} rmse {:.4} tra {:.4} bpp {:.4}",
            l.level.name(),
            r.psnr,
            r.ssim,
            r.rmse,
            r.tra,
            r.bpp
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Encode {
            carrier,
            data,
            info,
            model,
            out,
            k,
            max_channels,
        } => cmd_encode(&carrier, data.as_deref(), &info, &model, &out, k, max_channels),
        Command::Decode { image, model, out_dir } => cmd_decode(&image, &model, &out_dir),
        Command::Train { config, resume } => cmd_train(&config, resume.as_deref(), cli.seed),
        Command::Eval { model, corpus, report } => cmd_eval(&model, &corpus, &report, cli.seed.unwrap_or(0)),
        Command::InitModel { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let model = StegModel::init(cfg.model.hyper(), cli.seed.unwrap_or(cfg.train.seed))?;
            checkpoint::save(&out, &model, None)
        }
        Command::Synth { out_dir, count, size } => {
            write_samples(&out_dir, count, size, cli.seed.unwrap_or(0))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
