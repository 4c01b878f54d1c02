//! Evaluation over a directory of chart carriers at three payload levels.
//!
//! | level   | data fields                     | info text            |
//! |---------|---------------------------------|----------------------|
//! | low     | one field, a quarter of carrier | 200 characters       |
//! | medium  | two carrier-sized fields        | 600 characters       |
//! | maximum | three carrier-sized fields      | fills the QR symbols |

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use chartsteg_core::metrics::{psnr_u8, rmse, ssim, tra, EvalReport, ImageEval, PsnrMode};
use chartsteg_core::payload::{serialize_metadata, ChartInfo};
use chartsteg_core::stegnet::{EncodedImage, StegModel, Tensor};
use chartsteg_core::trainer::synth::{perlin, random_text};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::bundle::{ChartData, Field};
use crate::error::{AppError, Result};
use crate::image_io::read_rgb;
use crate::pipeline::{decode_revealed, encode, prepare_data, reveal_all, EncodeRequest, DEFAULT_K};
use crate::qr::{grid_capacity, SYMBOL_CHARS};
use crate::train::list_carriers;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Low,
    Medium,
    Maximum,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Low, Level::Medium, Level::Maximum];

    pub fn name(self) -> &'static str {
        match self {
            Level::Low => "low",
            Level::Medium => "medium",
            Level::Maximum => "maximum",
        }
    }
}

fn field<R: Rng>(h: usize, w: usize, rng: &mut R) -> Field {
    let (scale, shift) = (rng.gen_range(1.0..500.0), rng.gen_range(-100.0..100.0));
    Field {
        height: h,
        width: w,
        values: perlin(h, w, 4, rng).into_iter().map(|v| v * scale + shift).collect(),
    }
}

/// Seeded data and info for one carrier at one level.
pub fn level_payload<R: Rng>(level: Level, dims: (usize, usize), rng: &mut R) -> Result<(ChartData, ChartInfo)> {
    let (h, w) = dims;
    let fields = match level {
        Level::Low => vec![field(h / 2, w / 2, rng)],
        Level::Medium => (0..2).map(|_| field(h, w, rng)).collect(),
        Level::Maximum => (0..3).map(|_| field(h, w, rng)).collect(),
    };
    let data = ChartData::Continuous { fields };
    let mut info = ChartInfo::default();
    info.aux.insert("level".into(), level.name().into());
    let chars = match level {
        Level::Low => 200,
        Level::Medium => 600,
        Level::Maximum => {
            let (rows, cols) = grid_capacity(dims);
            let plan = prepare_data(Some(&data), dims, DEFAULT_K, 3)?.map(|p| p.1);
            let overhead = serialize_metadata(&info, plan.as_ref())?.len();
            // the text's own length prefix grows with it
            (rows * cols * SYMBOL_CHARS).saturating_sub(overhead + 6)
        }
    };
    info.spec_text = random_text(chars, chars, rng);
    Ok((data, info))
}

fn to_f64(img: &EncodedImage) -> Vec<f64> {
    img.to_tensor::<f64>().data().iter().map(|v| v * 255.0).collect()
}

/// Runs the full encode and decode paths on one carrier.
pub fn evaluate_one(model: &StegModel<f32>, name: &str, carrier: &EncodedImage, level: Level, seed: u64) -> Result<ImageEval> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (data, info) = level_payload(level, (carrier.height, carrier.width), &mut rng)?;
    let req = EncodeRequest {
        carrier: carrier.clone(),
        data: Some(data),
        info,
        k: DEFAULT_K,
        max_channels: 3,
    };
    let enc = encode(model, &req)?;
    let revealed = reveal_all(model, &enc.image)?;
    let n_data = enc.report.data_channels;
    let take = |t: &Tensor<f32>, clamp: bool| -> Vec<f64> {
        (0..n_data)
            .flat_map(|c| {
                t.plane(c).iter().map(move |&v| {
                    let v = f64::from(v);
                    if clamp {
                        v.clamp(0.0, 1.0)
                    } else {
                        v
                    }
                })
            })
            .collect()
    };
    let data_rmse = rmse(&take(enc.secrets.tensor(), false), &take(&revealed, true))?;
    let restored_text = match decode_revealed(model, &revealed) {
        Ok(d) => d.info.spec_text,
        Err(AppError::Qr { .. }) | Err(AppError::PayloadLost(_)) => String::new(),
        Err(e) => return Err(e),
    };
    let (h, w) = (carrier.height, carrier.width);
    Ok(ImageEval {
        name: format!("{name}:{}", level.name()),
        psnr: psnr_u8(&carrier.rgb, &enc.image.rgb)?,
        ssim: ssim(&to_f64(carrier), &to_f64(&enc.image), 3, h, w, 255.0)?,
        rmse: data_rmse,
        tra: tra(&req.info.spec_text, &restored_text),
        bpp: enc.report.bpp,
    })
}

pub struct LevelReport {
    pub level: Level,
    pub report: EvalReport,
    pub seconds_per_image: f64,
}

/// Evaluates every PNG carrier in `dir` at every level.
pub fn evaluate_dir(model: &StegModel<f32>, dir: &Path, seed: u64, progress: &mut dyn FnMut(&str)) -> Result<Vec<LevelReport>> {
    let files = list_carriers(dir)?;
    let carriers: Vec<(String, EncodedImage)> = files
        .iter()
        .map(|p| Ok((p.file_name().unwrap().to_string_lossy().into_owned(), read_rgb(p)?)))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for level in Level::ALL {
        let start = Instant::now();
        let mut images = Vec::new();
        for (i, (name, img)) in carriers.iter().enumerate() {
            let e = evaluate_one(model, name, img, level, seed.wrapping_add(i as u64 * 3 + level as u64))?;
            progress(&format!(
                "{} psnr {:.2} ssim {:.4} rmse {:.4} tra {:.4} bpp {:.4}",
                e.name, e.psnr, e.ssim, e.rmse, e.tra, e.bpp
            ));
            images.push(e);
        }
        out.push(LevelReport {
            level,
            seconds_per_image: start.elapsed().as_secs_f64() / carriers.len() as f64,
            report: EvalReport::from_images(PsnrMode::EightBit, images),
        });
    }
    Ok(out)
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!("inf")
    }
}

pub fn report_json(levels: &[LevelReport]) -> Value {
    let level = |l: &LevelReport| {
        let r = &l.report;
        json!({
            "level": l.level.name(),
            "psnr_mode": match r.psnr_mode { PsnrMode::EightBit => "8bit", PsnrMode::Unit => "unit" },
            "psnr": num(r.psnr),
            "psnr_infinite": r.psnr_infinite,
            "ssim": r.ssim,
            "rmse": r.rmse,
            "tra": r.tra,
            "bpp": r.bpp,
            "seconds_per_image": l.seconds_per_image,
            "images": r.images.iter().map(|i| json!({
                "name": i.name, "psnr": num(i.psnr), "ssim": i.ssim, "rmse": i.rmse, "tra": i.tra, "bpp": i.bpp
            })).collect::<Vec<_>>(),
        })
    };
    json!({ "levels": levels.iter().map(level).collect::<Vec<_>>() })
}

pub fn report_csv(levels: &[LevelReport]) -> String {
    let mut s = String::from("level,images,psnr,ssim,rmse,tra,bpp,seconds_per_image\n");
    for l in levels {
        let r = &l.report;
        let _ = writeln!(
            s,
            "{},{},{:.4},{:.6},{:.6},{:.6},{:.6},{:.3}",
            l.level.name(),
            r.images.len(),
            r.psnr,
            r.ssim,
            r.rmse,
            r.tra,
            r.bpp,
            l.seconds_per_image
        );
    }
    s
}

/// Writes `<report>` as JSON and the same stem with `.csv` next to it.
pub fn write_report(path: &Path, levels: &[LevelReport]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&report_json(levels)).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| AppError::io(path, e))?;
    let csv = path.with_extension("csv");
    fs::write(&csv, report_csv(levels)).map_err(|e| AppError::io(&csv, e))
}
