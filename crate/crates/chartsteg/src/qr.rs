//! Stitched grids of Version 40, ECC level H QR symbols.
//!
//! Text is split into 1273-byte chunks, one per symbol, laid out row-major
//! from the top-left corner. Each symbol is drawn at two pixels per module
//! with a three-pixel quiet margin, so it occupies a 360-pixel square. Pixel
//! value 1 is a dark module.

use chartsteg_core::dtoi::Plane;
use chartsteg_core::payload::check_charset;
use qrcode::bits::Bits;
use qrcode::{Color, EcLevel, QrCode, Version};
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{AppError, Result};

/// Byte capacity of one Version 40 symbol at ECC level H.
pub const SYMBOL_CHARS: usize = 1273;
pub const MODULES: usize = 177;
pub const MODULE_PX: usize = 2;
pub const MARGIN_PX: usize = 3;
pub const SYMBOL_PX: usize = MODULES * MODULE_PX + 2 * MARGIN_PX;

/// Cells whose dark fraction falls below this are treated as empty.
const BLANK_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct QrImage {
    pub pixels: Plane,
    pub rows: usize,
    pub cols: usize,
    pub symbol_px: usize,
}

/// Largest symbol grid (rows, cols) that fits in an image.
pub fn grid_capacity(dims: (usize, usize)) -> (usize, usize) {
    (dims.0 / SYMBOL_PX, dims.1 / SYMBOL_PX)
}

pub fn symbols_needed(chars: usize) -> usize {
    chars.div_ceil(SYMBOL_CHARS).max(1)
}

/// Module matrix of one symbol, row-major, `true` = dark.
pub fn encode_symbol(chunk: &str) -> Result<Vec<bool>> {
    // byte mode throughout: the mixed-mode optimizer can overshoot a full chunk
    let build = || {
        let mut bits = Bits::new(Version::Normal(40));
        bits.push_byte_data(chunk.as_bytes())?;
        bits.push_terminator(EcLevel::H)?;
        QrCode::with_bits(bits, EcLevel::H)
    };
    let code = build().map_err(|e| AppError::Usage(format!("cannot build QR symbol: {e}")))?;
    debug_assert_eq!(code.width(), MODULES);
    Ok(code.to_colors().into_iter().map(|c| c == Color::Dark).collect())
}

fn draw_symbol(pixels: &mut Plane, modules: &[bool], top: usize, left: usize) {
    for (i, &dark) in modules.iter().enumerate() {
        if !dark {
            continue;
        }
        let r = top + MARGIN_PX + (i / MODULES) * MODULE_PX;
        let c = left + MARGIN_PX + (i % MODULES) * MODULE_PX;
        for dy in 0..MODULE_PX {
            for dx in 0..MODULE_PX {
                pixels.set(r + dy, c + dx, 1.0);
            }
        }
    }
}

fn chunks(text: &str) -> Vec<&str> {
    if text.is_empty() {
        return vec![""];
    }
    // ASCII only, so byte offsets are char boundaries
    (0..text.len()).step_by(SYMBOL_CHARS).map(|i| &text[i..(i + SYMBOL_CHARS).min(text.len())]).collect()
}

/// Renders `text` as the smallest row-major grid that fits in `dims`.
pub fn encode_qr_payload(text: &str, dims: (usize, usize)) -> Result<QrImage> {
    check_charset(text)?;
    let needed = symbols_needed(text.len());
    let (max_rows, max_cols) = grid_capacity(dims);
    let available = max_rows * max_cols;
    if needed > available {
        return Err(chartsteg_core::Error::Capacity {
            what: format!("QR symbols for {} characters", text.len()),
            required: needed,
            available,
        }
        .into());
    }
    let cols = needed.min(max_cols);
    let rows = needed.div_ceil(cols);
    let mut pixels = Plane::zeros(rows * SYMBOL_PX, cols * SYMBOL_PX);
    for (i, chunk) in chunks(text).into_iter().enumerate() {
        let modules = encode_symbol(chunk)?;
        draw_symbol(&mut pixels, &modules, (i / cols) * SYMBOL_PX, (i % cols) * SYMBOL_PX);
    }
    Ok(QrImage {
        pixels,
        rows,
        cols,
        symbol_px: SYMBOL_PX,
    })
}

/// Otsu threshold of a set of values, between their minimum and maximum.
pub fn otsu(values: &[f64]) -> f64 {
    const BINS: usize = 256;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi.is_nan() || hi <= lo {
        return if lo.is_finite() { lo } else { 0.5 };
    }
    let width = (hi - lo) / BINS as f64;
    let mut hist = [0u64; BINS];
    for &v in values {
        hist[(((v - lo) / width) as usize).min(BINS - 1)] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &n)| i as f64 * n as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_bin) = (-1.0, 0);
    for (i, &n) in hist.iter().enumerate() {
        w0 += n as f64;
        sum0 += i as f64 * n as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let d = sum0 / w0 - (sum_all - sum0) / w1;
        let between = w0 * w1 * d * d;
        if between > best {
            best = between;
            best_bin = i;
        }
    }
    lo + (best_bin + 1) as f64 * width
}

/// Reads the module matrix of the symbol whose square starts at (top, left)
/// by averaging each module's pixels against `threshold`.
fn sample_modules(pixels: &Plane, top: usize, left: usize, threshold: f64) -> Vec<bool> {
    let area = (MODULE_PX * MODULE_PX) as f64;
    (0..MODULES * MODULES)
        .map(|i| {
            let r = top + MARGIN_PX + (i / MODULES) * MODULE_PX;
            let c = left + MARGIN_PX + (i % MODULES) * MODULE_PX;
            let mut sum = 0.0;
            for dy in 0..MODULE_PX {
                for dx in 0..MODULE_PX {
                    sum += pixels.get(r + dy, c + dx);
                }
            }
            sum / area > threshold
        })
        .collect()
}

/// Decodes one module matrix.
pub fn decode_symbol(modules: &[bool]) -> std::result::Result<String, String> {
    if modules.len() != MODULES * MODULES {
        return Err(format!("expected {} modules, got {}", MODULES * MODULES, modules.len()));
    }
    let grid = rqrr::SimpleGrid::from_func(MODULES, |x, y| modules[y * MODULES + x]);
    rqrr::Grid::new(grid).decode().map(|(_, text)| text).map_err(|e| e.to_string())
}

/// Binarizes with Otsu and decodes every non-blank cell in row-major order.
/// Decoding stops at the first blank cell; the top-left cell must hold a
/// symbol.
pub fn decode_qr_payload(pixels: &Plane) -> Result<String> {
    let (rows, cols) = grid_capacity((pixels.height, pixels.width));
    if rows == 0 || cols == 0 {
        return Err(AppError::Qr {
            row: 0,
            col: 0,
            reason: format!("image {}x{} is smaller than one symbol", pixels.height, pixels.width),
        });
    }
    let threshold = otsu(&pixels.data);
    let mut text = String::new();
    for cell in 0..rows * cols {
        let (row, col) = (cell / cols, cell % cols);
        let modules = sample_modules(pixels, row * SYMBOL_PX, col * SYMBOL_PX, threshold);
        let dark = modules.iter().filter(|&&d| d).count() as f64 / modules.len() as f64;
        if dark < BLANK_FRACTION {
            if cell == 0 {
                return Err(AppError::Qr {
                    row,
                    col,
                    reason: "no symbol present".into(),
                });
            }
            break;
        }
        let chunk = decode_symbol(&modules).map_err(|reason| AppError::Qr { row, col, reason })?;
        text.push_str(&chunk);
    }
    Ok(text)
}

/// Flips `fraction` of the modules of every symbol in the image, chosen
/// uniformly without replacement. Used to probe the error-correction margin.
pub fn flip_modules<R: Rng>(img: &QrImage, fraction: f64, rng: &mut R) -> QrImage {
    let mut out = img.clone();
    let n = MODULES * MODULES;
    let flips = (fraction * n as f64).round() as usize;
    for cell in 0..img.rows * img.cols {
        let (top, left) = ((cell / img.cols) * SYMBOL_PX, (cell % img.cols) * SYMBOL_PX);
        for i in sample(rng, n, flips) {
            let r = top + MARGIN_PX + (i / MODULES) * MODULE_PX;
            let c = left + MARGIN_PX + (i % MODULES) * MODULE_PX;
            for dy in 0..MODULE_PX {
                for dx in 0..MODULE_PX {
                    let v = out.pixels.get(r + dy, c + dx);
                    out.pixels.set(r + dy, c + dx, 1.0 - v);
                }
            }
        }
    }
    out
}
