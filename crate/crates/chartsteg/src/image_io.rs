//! Lossless image files.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use chartsteg_core::dtoi::{quantize, Plane};
use chartsteg_core::stegnet::EncodedImage;
use png::{BitDepth, ColorType, Transformations};

use crate::error::{AppError, Result};

/// Accepts only `.png` paths; everything else is refused by name.
pub fn check_lossless(path: &Path) -> Result<()> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    if ext == "png" {
        return Ok(());
    }
    Err(AppError::Usage(format!(
        "refusing to write `{}`: encoded images are stored only as lossless PNG, got extension `.{ext}`",
        path.display()
    )))
}

/// Reads any PNG as 8-bit RGB. Gray is replicated; alpha is composited on white.
pub fn read_rgb(path: &Path) -> Result<EncodedImage> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| AppError::format(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| AppError::format(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| AppError::format(path, e))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let stride = info.line_size;
    let over_white = |v: u8, a: u8| ((v as u32 * a as u32 + 255 * (255 - a as u32) + 127) / 255) as u8;
    let mut rgb = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        let row = &buf[y * stride..];
        for x in 0..w {
            let px = match info.color_type {
                ColorType::Grayscale => [row[x]; 3],
                ColorType::GrayscaleAlpha => [over_white(row[2 * x], row[2 * x + 1]); 3],
                ColorType::Rgb => [row[3 * x], row[3 * x + 1], row[3 * x + 2]],
                ColorType::Rgba => {
                    let a = row[4 * x + 3];
                    [
                        over_white(row[4 * x], a),
                        over_white(row[4 * x + 1], a),
                        over_white(row[4 * x + 2], a),
                    ]
                }
                ColorType::Indexed => return Err(AppError::format(path, "unexpanded palette image")),
            };
            rgb.extend_from_slice(&px);
        }
    }
    Ok(EncodedImage { height: h, width: w, rgb })
}

fn write_png(path: &Path, w: usize, h: usize, color: ColorType, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(color);
    enc.set_depth(BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| AppError::format(path, e))?;
    writer.write_image_data(bytes).map_err(|e| AppError::format(path, e))?;
    writer.finish().map_err(|e| AppError::format(path, e))
}

pub fn write_rgb(path: &Path, img: &EncodedImage) -> Result<()> {
    check_lossless(path)?;
    write_png(path, img.width, img.height, ColorType::Rgb, &img.rgb)
}

/// Writes a [0,1] plane as 8-bit grayscale.
pub fn write_gray(path: &Path, plane: &Plane) -> Result<()> {
    check_lossless(path)?;
    let bytes: Vec<u8> = plane.data.iter().map(|&v| quantize(v)).collect();
    write_png(path, plane.width, plane.height, ColorType::Grayscale, &bytes)
}
