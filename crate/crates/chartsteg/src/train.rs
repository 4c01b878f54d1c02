//! Training driver: corpus, optimization loop, metrics log, checkpoints.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chartsteg_core::dtoi::Plane;
use chartsteg_core::metrics::{psnr_u8, rmse};
use chartsteg_core::stegnet::{EncodedImage, StegModel, Tensor, QR_CHANNEL};
use chartsteg_core::trainer::corpus::{build, QrRenderer};
use chartsteg_core::trainer::loss::total;
use chartsteg_core::trainer::synth::random_text;
use chartsteg_core::trainer::{Sample, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, TrainingState};
use crate::config::RunConfig;
use crate::error::{AppError, Result};
use crate::image_io::read_rgb;
use crate::qr::{encode_qr_payload, QrImage, SYMBOL_CHARS, SYMBOL_PX};

/// Held-out split seed offset, so it never overlaps the training draw.
const HELD_OUT_SEED: u64 = 0x005e_ed0f_4e1d;

/// Renders text as one full QR symbol image.
pub fn render_qr(text: &str) -> chartsteg_core::Result<Plane> {
    encode_qr_payload(text, (SYMBOL_PX, SYMBOL_PX))
        .map(|q| q.pixels)
        .map_err(|e| chartsteg_core::Error::Parameter(e.to_string()))
}

/// `count` random alphanumeric strings with lengths in `len_range`, rendered
/// as QR images.
pub fn synth_qr(count: usize, len_range: (usize, usize), seed: u64) -> Result<Vec<(String, QrImage)>> {
    let (lo, hi) = len_range;
    if lo == 0 || hi < lo || hi > SYMBOL_CHARS {
        return Err(AppError::Usage(format!(
            "QR text lengths must lie within 1..={SYMBOL_CHARS}, got {lo}..={hi}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let text = random_text(lo, hi, &mut rng);
            let img = encode_qr_payload(&text, (SYMBOL_PX, SYMBOL_PX))?;
            Ok((text, img))
        })
        .collect()
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| AppError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn list_carriers(dir: &Path) -> Result<Vec<PathBuf>> {
    let files = png_files(dir)?;
    if files.is_empty() {
        return Err(AppError::Usage(format!("no PNG images in {}", dir.display())));
    }
    Ok(files)
}

/// Swaps synthetic carriers for random crops of the given chart images.
fn use_carrier_dir(samples: &mut [Sample], dir: &Path, crop: usize, seed: u64) -> Result<()> {
    let images: Vec<EncodedImage> = list_carriers(dir)?
        .iter()
        .map(|p| read_rgb(p))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|i| i.height >= crop && i.width >= crop)
        .collect();
    if images.is_empty() {
        return Err(AppError::Usage(format!(
            "no chart in {} is at least {crop}x{crop}",
            dir.display()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in samples {
        let img = &images[rng.gen_range(0..images.len())];
        let (r0, c0) = (rng.gen_range(0..=img.height - crop), rng.gen_range(0..=img.width - crop));
        s.carrier = Tensor::from_fn(3, crop, crop, |c, y, x| {
            f32::from(img.rgb[((r0 + y) * img.width + c0 + x) * 3 + c]) / 255.0
        });
    }
    Ok(())
}

/// Training and held-out sets for a config.
pub fn corpora(cfg: &RunConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let render: &QrRenderer<'_> = &render_qr;
    let seed = cfg.train.seed;
    let mut train = build(&cfg.corpus_spec(cfg.corpus.size), Some(render), seed)?;
    let mut held = build(&cfg.corpus_spec(cfg.corpus.held_out), Some(render), seed ^ HELD_OUT_SEED)?;
    if let Some(dir) = &cfg.corpus.carriers {
        use_carrier_dir(&mut train, dir, cfg.corpus.crop, seed)?;
        use_carrier_dir(&mut held, dir, cfg.corpus.crop, seed ^ HELD_OUT_SEED)?;
    }
    Ok((train, held))
}

/// Held-out measurements on training-size samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub loss: f64,
    /// 8-bit PSNR between carrier and encoded image.
    pub psnr: f64,
    /// Over populated data channels.
    pub rmse: f64,
    /// Fraction of QR pixels on the wrong side of `m_qr / 2`.
    pub qr_pixel_error: f64,
}

pub fn evaluate(model: &StegModel<f32>, samples: &[Sample], cfg: &RunConfig) -> Result<HeldOut> {
    let weights = cfg.train_config().weights();
    let half = model.hyper.m_qr / 2.0;
    let mut out = HeldOut::default();
    let (mut n_data, mut n_qr) = (0usize, 0usize);
    for s in samples {
        let layout = s.secrets.layout();
        let concealed = model.conceal(&s.carrier, &s.secrets)?;
        let encoded: Tensor<f32> = concealed.image.to_tensor();
        let revealed = model.reveal_image(&concealed.image, layout)?;
        let restored = revealed.secrets.tensor();
        out.loss += total(&s.carrier, &encoded, s.secrets.tensor(), restored, &layout.mask(), &weights)?.total;
        let carrier8 = EncodedImage::from_tensor(&s.carrier);
        out.psnr += psnr_u8(&carrier8.rgb, &concealed.image.rgb)?.min(100.0);
        if layout.data_channels > 0 {
            let take = |t: &Tensor<f32>| -> Vec<f64> {
                (0..layout.data_channels).flat_map(|c| t.plane(c).iter().map(|&v| f64::from(v))).collect::<Vec<_>>()
            };
            out.rmse += rmse(&take(s.secrets.tensor()), &take(restored))?;
            n_data += 1;
        }
        if layout.qr {
            let truth = s.secrets.tensor().plane(QR_CHANNEL);
            let got = restored.plane(QR_CHANNEL);
            let wrong = truth.iter().zip(got).filter(|(a, b)| (f64::from(**a) > half) != (f64::from(**b) > half)).count();
            out.qr_pixel_error += wrong as f64 / truth.len() as f64;
            n_qr += 1;
        }
    }
    let n = samples.len().max(1) as f64;
    out.loss /= n;
    out.psnr /= n;
    out.rmse /= n_data.max(1) as f64;
    out.qr_pixel_error /= n_qr.max(1) as f64;
    Ok(out)
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Step {
        step: u64,
        lr: f64,
        loss: f64,
        mse: f64,
        freq: f64,
        restoration: f64,
        #[serde(default)]
        grad_norm: f64,
    },
    Eval {
        step: u64,
        #[serde(flatten)]
        held_out: HeldOut,
    },
}

impl LogRecord {
    fn step(&self) -> u64 {
        match self {
            Self::Step { step, .. } | Self::Eval { step, .. } => *step,
        }
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    BufReader::new(file)
        .lines()
        .map(|line| {
            let line = line.map_err(|e| AppError::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| AppError::format(path, e))
        })
        .collect()
}

pub struct RunPaths {
    pub log: PathBuf,
    pub state: PathBuf,
    pub model: PathBuf,
}

impl RunPaths {
    pub fn new(dir: &Path) -> Self {
        Self {
            log: dir.join("metrics.jsonl"),
            state: dir.join("train.ckpt"),
            model: dir.join("model.ckpt"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub steps: u64,
    pub initial: HeldOut,
    pub last: HeldOut,
    pub model_path: PathBuf,
}

struct Log {
    path: PathBuf,
    file: File,
}

impl Log {
    /// Opens the log, keeping only records up to `keep_until` so a resumed
    /// run writes the same log as an uninterrupted one.
    fn open(path: &Path, keep_until: Option<u64>) -> Result<Self> {
        let kept = match keep_until {
            Some(step) if path.exists() => read_log(path)?.into_iter().filter(|r| r.step() <= step).collect(),
            _ => Vec::new(),
        };
        let mut file = File::create(path).map_err(|e| AppError::io(path, e))?;
        for r in &kept {
            writeln!(file, "{}", serde_json::to_string(r).unwrap()).map_err(|e| AppError::io(path, e))?;
        }
        let file = OpenOptions::new().append(true).open(path).map_err(|e| AppError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    fn write(&mut self, r: &LogRecord) -> Result<()> {
        writeln!(self.file, "{}", serde_json::to_string(r).unwrap()).map_err(|e| AppError::io(&self.path, e))
    }
}

/// Trains per `cfg`, optionally continuing from a training checkpoint.
/// `progress` receives one human-readable line per eval.
pub fn train(cfg: &RunConfig, resume: Option<&Path>, progress: &mut dyn FnMut(&str)) -> Result<TrainSummary> {
    cfg.validate()?;
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let paths = RunPaths::new(dir);
    let mut trainer = match resume {
        Some(path) => {
            let (model, state) = checkpoint::load(path)?;
            let state = state.ok_or_else(|| {
                AppError::Usage(format!("{} holds no optimizer state; resume needs train.ckpt", path.display()))
            })?;
            Trainer::resume(cfg.train_config(), model, state.adam, state.step, state.plateau)?
        }
        None => Trainer::new(cfg.train_config())?,
    };
    let mut log = Log::open(&paths.log, resume.map(|_| trainer.step))?;
    let (corpus, held) = corpora(cfg)?;
    let initial = evaluate(&StegModel::init(cfg.model.hyper(), cfg.train.seed)?, &held, cfg)?;
    if trainer.step == 0 {
        log.write(&LogRecord::Eval {
            step: 0,
            held_out: initial,
        })?;
    }
    let mut last = None;
    let save_state = |t: &Trainer| -> Result<()> {
        let state = TrainingState {
            step: t.step,
            config: cfg.clone(),
            adam: t.adam.clone(),
            plateau: t.plateau.clone(),
        };
        checkpoint::save(&paths.state, &t.model, Some(&state))
    };
    while trainer.step < cfg.train.steps {
        let r = trainer.train_step(&corpus)?;
        log.write(&LogRecord::Step {
            step: r.step,
            lr: r.lr,
            loss: r.loss.total,
            mse: r.loss.mse,
            freq: r.loss.freq,
            restoration: r.loss.restoration,
            grad_norm: r.grad_norm,
        })?;
        let end = r.step == cfg.train.steps;
        if r.step % cfg.train.eval_every.max(1) == 0 || end {
            let held_out = evaluate(&trainer.model, &held, cfg)?;
            log.write(&LogRecord::Eval { step: r.step, held_out })?;
            last = Some(held_out);
            progress(&format!(
                "step {} lr {:.2e} batch loss {:.4} | held-out loss {:.4} psnr {:.2} rmse {:.4} qr {:.4}",
                r.step, r.lr, r.loss.total, held_out.loss, held_out.psnr, held_out.rmse, held_out.qr_pixel_error
            ));
        }
        if r.step % cfg.train.checkpoint_every.max(1) == 0 || end {
            save_state(&trainer)?;
        }
    }
    let last = match last {
        Some(l) => l,
        None => evaluate(&trainer.model, &held, cfg)?,
    };
    checkpoint::save(&paths.model, &trainer.model, None)?;
    Ok(TrainSummary {
        steps: trainer.step,
        initial,
        last,
        model_path: paths.model,
    })
}
