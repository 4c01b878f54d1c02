//! Text payload: chart information plus the data-image plan, serialized as a
//! self-delimiting ASCII blob, and the QR-channel scaling.
//!
//! The blob is a sequence of atoms `<len>:<bytes>`, `len` being the decimal
//! byte length. Floats are written with 17 significant digits so they parse
//! back bit-exactly. The last atom is an FNV-1a checksum of everything before
//! it. See `docs/payload-format.md` for the grammar.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use crate::dtoi::{DataImagePlan, Norm, PartPlan, Placement, PlanePlan};
use crate::error::{Error, Result};

const MAGIC: &str = "CSG1";

/// Chart source/spec text and free-form key-value information.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChartInfo {
    pub spec_text: String,
    pub aux: BTreeMap<String, String>,
}

/// Everything recovered from a payload.
#[derive(Clone, Debug, PartialEq)]
pub struct Metadata {
    pub info: ChartInfo,
    pub plan: Option<DataImagePlan>,
}

/// Printable ASCII plus tab, line feed and carriage return.
pub fn is_representable(c: char) -> bool {
    matches!(c, ' '..='~' | '\t' | '\n' | '\r')
}

/// First character outside the declared set, as an encoding error.
pub fn check_charset(text: &str) -> Result<()> {
    match text.chars().enumerate().find(|(_, c)| !is_representable(*c)) {
        Some((index, ch)) => Err(Error::Encoding { index, ch }),
        None => Ok(()),
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

struct Writer {
    out: String,
}

impl Writer {
    fn atom(&mut self, s: &str) {
        let _ = write!(self.out, "{}:{}", s.len(), s);
    }

    fn uint(&mut self, v: usize) {
        self.atom(&v.to_string());
    }

    fn float(&mut self, v: f64) {
        self.atom(&format!("{v:.16e}"));
    }

    fn placement(&mut self, p: &Placement) {
        for v in [p.channel, p.row, p.col, p.height, p.width] {
            self.uint(v);
        }
    }

    fn norm(&mut self, n: &Norm) {
        self.float(n.min);
        self.float(n.max);
    }
}

/// Serializes info and plan deterministically.
pub fn serialize_metadata(info: &ChartInfo, plan: Option<&DataImagePlan>) -> Result<String> {
    check_charset(&info.spec_text)?;
    for (k, v) in &info.aux {
        check_charset(k)?;
        check_charset(v)?;
    }
    let mut w = Writer { out: String::new() };
    w.atom(MAGIC);
    w.atom(&info.spec_text);
    w.uint(info.aux.len());
    for (k, v) in &info.aux {
        w.atom(k);
        w.atom(v);
    }
    match plan {
        None => w.atom("N"),
        Some(DataImagePlan::Continuous { planes }) => {
            if planes.iter().any(|p| !p.norm.min.is_finite() || !p.norm.max.is_finite()) {
                return Err(Error::Parameter("plan holds non-finite normalization constants".into()));
            }
            w.atom("C");
            w.uint(planes.len());
            for p in planes {
                w.norm(&p.norm);
                w.placement(&p.placement);
            }
        }
        Some(DataImagePlan::Discrete { k, parts }) => {
            if parts.iter().any(|p| [p.x_norm, p.y_norm].iter().any(|n| !n.min.is_finite() || !n.max.is_finite())) {
                return Err(Error::Parameter("plan holds non-finite normalization constants".into()));
            }
            w.atom("D");
            w.uint(*k);
            w.uint(parts.len());
            for p in parts {
                for v in [p.n_points, p.grid_rows, p.grid_cols, p.pad_count, p.pad_start] {
                    w.uint(v);
                }
                w.norm(&p.x_norm);
                w.norm(&p.y_norm);
                w.placement(&p.x_at);
                w.placement(&p.y_at);
            }
        }
    }
    let sum = fnv1a(w.out.as_bytes());
    w.atom(&format!("{sum:016x}"));
    Ok(w.out)
}

struct Reader<'a> {
    rest: &'a str,
    consumed: usize,
}

impl<'a> Reader<'a> {
    fn err<T>(&self, what: &str) -> Result<T> {
        Err(Error::Parse(format!("{what} at byte {}", self.consumed)))
    }

    fn atom(&mut self) -> Result<&'a str> {
        let Some(colon) = self.rest.find(':') else {
            return self.err("missing length prefix");
        };
        let Ok(len) = self.rest[..colon].parse::<usize>() else {
            return self.err("bad length prefix");
        };
        let start = colon + 1;
        if self.rest.len() < start + len || !self.rest.is_char_boundary(start + len) {
            return self.err("truncated field");
        }
        let value = &self.rest[start..start + len];
        self.rest = &self.rest[start + len..];
        self.consumed += start + len;
        Ok(value)
    }

    fn uint(&mut self) -> Result<usize> {
        let a = self.atom()?;
        match a.parse() {
            Ok(v) => Ok(v),
            Err(_) => self.err("bad integer"),
        }
    }

    fn float(&mut self) -> Result<f64> {
        let a = self.atom()?;
        match a.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => self.err("bad number"),
        }
    }

    fn placement(&mut self) -> Result<Placement> {
        Ok(Placement {
            channel: self.uint()?,
            row: self.uint()?,
            col: self.uint()?,
            height: self.uint()?,
            width: self.uint()?,
        })
    }

    fn norm(&mut self) -> Result<Norm> {
        let (min, max) = (self.float()?, self.float()?);
        if max < min {
            return self.err("normalization max below min");
        }
        Ok(Norm { min, max })
    }

    /// Guards allocation sizes against corrupt counts.
    fn count(&mut self, per_item: usize) -> Result<usize> {
        let n = self.uint()?;
        if n.saturating_mul(per_item) > self.rest.len() {
            return self.err("count exceeds remaining payload");
        }
        Ok(n)
    }
}

/// Inverse of [`serialize_metadata`]; verifies magic and checksum.
pub fn parse_metadata(blob: &str) -> Result<Metadata> {
    let mut r = Reader { rest: blob, consumed: 0 };
    if r.atom()? != MAGIC {
        return Err(Error::Parse("not a chart payload".into()));
    }
    let spec_text = r.atom()?.to_string();
    let n_aux = r.count(4)?;
    let mut aux = BTreeMap::new();
    for _ in 0..n_aux {
        let k = r.atom()?.to_string();
        let v = r.atom()?.to_string();
        aux.insert(k, v);
    }
    let plan = match r.atom()? {
        "N" => None,
        "C" => {
            let n = r.count(14)?;
            let mut planes = Vec::with_capacity(n);
            for _ in 0..n {
                planes.push(PlanePlan {
                    norm: r.norm()?,
                    placement: r.placement()?,
                });
            }
            Some(DataImagePlan::Continuous { planes })
        }
        "D" => {
            let k = r.uint()?;
            let n = r.count(38)?;
            let mut parts = Vec::with_capacity(n);
            for _ in 0..n {
                parts.push(PartPlan {
                    n_points: r.uint()?,
                    grid_rows: r.uint()?,
                    grid_cols: r.uint()?,
                    pad_count: r.uint()?,
                    pad_start: r.uint()?,
                    x_norm: r.norm()?,
                    y_norm: r.norm()?,
                    x_at: r.placement()?,
                    y_at: r.placement()?,
                });
            }
            Some(DataImagePlan::Discrete { k, parts })
        }
        _ => return r.err("unknown plan kind"),
    };
    let body_len = r.consumed;
    let sum = r.atom()?;
    if !r.rest.is_empty() {
        return r.err("trailing bytes");
    }
    if sum != format!("{:016x}", fnv1a(&blob.as_bytes()[..body_len])) {
        return Err(Error::Parse("payload checksum mismatch".into()));
    }
    Ok(Metadata {
        info: ChartInfo { spec_text, aux },
        plan,
    })
}

fn check_m_qr(m_qr: f64) -> Result<()> {
    if !m_qr.is_finite() || m_qr <= 0.0 {
        return Err(Error::Parameter(format!("m_qr must be a positive number, got {m_qr}")));
    }
    Ok(())
}

/// Multiplies QR pixels by `m_qr`.
pub fn scale_qr(pixels: &[f64], m_qr: f64) -> Result<Vec<f64>> {
    check_m_qr(m_qr)?;
    Ok(pixels.iter().map(|v| v * m_qr).collect())
}

/// Divides QR pixels by `m_qr`.
pub fn unscale_qr(pixels: &[f64], m_qr: f64) -> Result<Vec<f64>> {
    check_m_qr(m_qr)?;
    Ok(pixels.iter().map(|v| v / m_qr).collect())
}
