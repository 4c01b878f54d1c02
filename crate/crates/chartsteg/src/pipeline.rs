//! Encode and decode paths: data-to-image, payload text, QR, network.

use chartsteg_core::dtoi::{
    dtoi_continuous, dtoi_discrete_fitted, inverse_dtoi_continuous, inverse_dtoi_discrete, max_points,
    DataImagePlan, Plane,
};
use chartsteg_core::metrics::{bpp, payload_bits};
use chartsteg_core::payload::{fnv1a, parse_metadata, scale_qr, serialize_metadata, unscale_qr, ChartInfo};
use chartsteg_core::stegnet::{ChannelLayout, EncodedImage, SecretStack, StegModel, Tensor, MAX_DATA_CHANNELS};
use chartsteg_core::Error;
use serde::Serialize;

use crate::bundle::ChartData;
use crate::error::{AppError, Result};
use crate::qr::{decode_qr_payload, encode_qr_payload, grid_capacity, SYMBOL_CHARS};

/// Interpolation factor used for discrete data unless overridden.
pub const DEFAULT_K: usize = 3;

#[derive(Clone, Debug)]
pub struct EncodeRequest {
    pub carrier: EncodedImage,
    pub data: Option<ChartData>,
    pub info: ChartInfo,
    pub k: usize,
    /// Upper bound on data channels, at most three.
    pub max_channels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CapacityReport {
    pub height: usize,
    pub width: usize,
    pub data_channels: usize,
    pub qr_symbols: usize,
    pub qr_symbols_available: usize,
    pub payload_chars: usize,
    pub payload_char_capacity: usize,
    pub data_pixels: usize,
    pub payload_bits: u64,
    pub bpp: f64,
    /// Largest discrete set the carrier could take at this K.
    pub max_points: usize,
}

#[derive(Clone, Debug)]
pub struct Encoded {
    pub image: EncodedImage,
    pub report: CapacityReport,
    pub plan: Option<DataImagePlan>,
    pub payload: String,
    /// Network input, kept for evaluation.
    pub secrets: SecretStack<f32>,
}

/// Data images and plan for a request, with every capacity bound checked.
pub fn prepare_data(
    data: Option<&ChartData>,
    dims: (usize, usize),
    k: usize,
    max_channels: usize,
) -> Result<Option<(Vec<Plane>, DataImagePlan)>> {
    let budget = max_channels.min(MAX_DATA_CHANNELS);
    let prepared = match data {
        None => return Ok(None),
        Some(ChartData::Continuous { fields }) => dtoi_continuous(&ChartData::planes(fields)?, dims)?,
        Some(ChartData::Discrete { points }) => dtoi_discrete_fitted(&ChartData::pairs(points), dims, k)?,
    };
    let used = prepared.1.channel_count();
    if used > budget {
        return Err(Error::Capacity {
            what: "data-image channels".into(),
            required: used,
            available: budget,
        }
        .into());
    }
    Ok(Some(prepared))
}

pub fn encode(model: &StegModel<f32>, req: &EncodeRequest) -> Result<Encoded> {
    let (h, w) = (req.carrier.height, req.carrier.width);
    let prepared = prepare_data(req.data.as_ref(), (h, w), req.k, req.max_channels)?;
    let plan = prepared.as_ref().map(|p| p.1.clone());
    let payload = serialize_metadata(&req.info, plan.as_ref())?;
    let qr = encode_qr_payload(&payload, (h, w))?;
    let (rows, cols) = grid_capacity((h, w));

    let mut qr_channel = Plane::zeros(h, w);
    qr_channel.blit(&qr.pixels, 0, 0);
    let qr_scaled = scale_qr(&qr_channel.data, model.hyper.m_qr)?;
    let qr_tensor = Tensor::from_vec(1, h, w, qr_scaled.iter().map(|&v| v as f32).collect())?;
    let data_tensors: Vec<Tensor<f32>> = match &prepared {
        Some((channels, _)) => channels
            .iter()
            .map(|p| Tensor::from_vec(1, h, w, p.quantized().data.iter().map(|&v| v as f32).collect()))
            .collect::<chartsteg_core::Result<_>>()?,
        None => Vec::new(),
    };
    let secrets = SecretStack::new(h, w, &data_tensors, Some(&qr_tensor))?;
    let concealed = model.conceal(&req.carrier.to_tensor(), &secrets)?;

    let data_pixels = plan.as_ref().map_or(0, |p| p.payload_pixels());
    let bits = payload_bits(data_pixels, payload.len());
    let report = CapacityReport {
        height: h,
        width: w,
        data_channels: data_tensors.len(),
        qr_symbols: qr.rows * qr.cols,
        qr_symbols_available: rows * cols,
        payload_chars: payload.len(),
        payload_char_capacity: rows * cols * SYMBOL_CHARS,
        data_pixels,
        payload_bits: bits,
        bpp: bpp(bits, 3, h, w),
        max_points: max_points((h, w), req.k),
    };
    Ok(Encoded {
        image: concealed.image,
        report,
        plan,
        payload,
        secrets,
    })
}

/// What the decode side found, with an integrity verdict.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub height: usize,
    pub width: usize,
    pub data_channels: usize,
    pub data_kind: Option<&'static str>,
    pub plan: Option<serde_json::Value>,
    pub payload_chars: usize,
    /// FNV-1a of the recovered info text.
    pub info_checksum: String,
    /// Whether the payload's embedded checksum matched on parse.
    pub payload_checksum_ok: bool,
    pub data_restored: bool,
    pub data_error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Decoded {
    pub info: ChartInfo,
    pub plan: Option<DataImagePlan>,
    pub data: Option<ChartData>,
    /// Restored data-image channels, clamped to `[0, 1]`.
    pub channels: Vec<Plane>,
    /// Restored QR channel after unscaling.
    pub qr: Plane,
    pub manifest: Manifest,
}

fn plan_json(plan: &DataImagePlan) -> serde_json::Value {
    let place = |p: &chartsteg_core::dtoi::Placement| {
        serde_json::json!({"channel": p.channel, "row": p.row, "col": p.col, "height": p.height, "width": p.width})
    };
    match plan {
        DataImagePlan::Continuous { planes } => serde_json::json!({
            "kind": "continuous",
            "planes": planes.iter().map(|p| serde_json::json!({
                "min": p.norm.min, "max": p.norm.max, "at": place(&p.placement)
            })).collect::<Vec<_>>()
        }),
        DataImagePlan::Discrete { k, parts } => serde_json::json!({
            "kind": "discrete",
            "k": k,
            "parts": parts.iter().map(|p| serde_json::json!({
                "points": p.n_points, "grid": [p.grid_rows, p.grid_cols],
                "pad_count": p.pad_count, "pad_start": p.pad_start,
                "x": {"min": p.x_norm.min, "max": p.x_norm.max, "at": place(&p.x_at)},
                "y": {"min": p.y_norm.min, "max": p.y_norm.max, "at": place(&p.y_at)},
            })).collect::<Vec<_>>()
        }),
    }
}

fn info_checksum(info: &ChartInfo) -> String {
    let mut bytes = info.spec_text.as_bytes().to_vec();
    for (k, v) in &info.aux {
        bytes.push(0);
        bytes.extend_from_slice(k.as_bytes());
        bytes.push(0);
        bytes.extend_from_slice(v.as_bytes());
    }
    format!("{:016x}", fnv1a(&bytes))
}

/// All four secret channels as revealed by the network.
pub fn reveal_all(model: &StegModel<f32>, image: &EncodedImage) -> Result<Tensor<f32>> {
    let full = ChannelLayout::new(MAX_DATA_CHANNELS, true)?;
    Ok(model.reveal_image(image, full)?.secrets.tensor().clone())
}

pub fn decode(model: &StegModel<f32>, image: &EncodedImage) -> Result<Decoded> {
    decode_revealed(model, &reveal_all(model, image)?)
}

/// Decode path after the network: QR, payload, inverse data-to-image.
pub fn decode_revealed(model: &StegModel<f32>, planes: &Tensor<f32>) -> Result<Decoded> {
    let (h, w) = (planes.height(), planes.width());
    let channel = |c: usize| -> Plane {
        let data = planes.plane(c).iter().map(|&v| f64::from(v).clamp(0.0, 1.0)).collect();
        Plane::from_vec(h, w, data).expect("plane sized to the image")
    };
    let qr_raw: Vec<f64> = planes.plane(3).iter().map(|&v| f64::from(v)).collect();
    let qr = Plane::from_vec(h, w, unscale_qr(&qr_raw, model.hyper.m_qr)?)?;
    let payload = decode_qr_payload(&qr)?;
    let meta = parse_metadata(&payload).map_err(|e| AppError::PayloadLost(e.to_string()))?;

    let n_data = meta.plan.as_ref().map_or(0, |p| p.channel_count());
    let channels: Vec<Plane> = (0..n_data).map(channel).collect();
    let restored = match &meta.plan {
        None => Ok(None),
        Some(plan @ DataImagePlan::Continuous { .. }) => {
            inverse_dtoi_continuous(&channels, plan).map(|p| Some(ChartData::from_planes(&p)))
        }
        Some(plan @ DataImagePlan::Discrete { .. }) => {
            inverse_dtoi_discrete(&channels, plan).map(|p| Some(ChartData::from_pairs(&p)))
        }
    };
    let (data, data_error) = match restored {
        Ok(d) => (d, None),
        Err(e) => (None, Some(e.to_string())),
    };
    let manifest = Manifest {
        height: h,
        width: w,
        data_channels: n_data,
        data_kind: meta.plan.as_ref().map(|p| match p {
            DataImagePlan::Continuous { .. } => "continuous",
            DataImagePlan::Discrete { .. } => "discrete",
        }),
        plan: meta.plan.as_ref().map(plan_json),
        payload_chars: payload.len(),
        info_checksum: info_checksum(&meta.info),
        payload_checksum_ok: true,
        data_restored: data.is_some(),
        data_error,
    };
    Ok(Decoded {
        info: meta.info,
        plan: meta.plan,
        data,
        channels,
        qr,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chartsteg_core::stegnet::Hyper;

    fn tiny() -> StegModel<f32> {
        let hyper = Hyper {
            n_blocks: 2,
            dense_growth: 4,
            dense_layers: 2,
            ffb_features: 4,
            ffb_blocks: 1,
            ..Hyper::default()
        };
        StegModel::init(hyper, 1).unwrap()
    }

    fn carrier(h: usize, w: usize) -> EncodedImage {
        EncodedImage {
            height: h,
            width: w,
            rgb: (0..h * w * 3).map(|i| (200 + i % 50) as u8).collect(),
        }
    }

    #[test]
    fn too_many_points_is_a_capacity_error_naming_the_maximum() {
        let max = max_points((40, 40), 3);
        let points = (0..max + 1).map(|i| [i as f64, (i * 7 % 13) as f64]).collect();
        let req = EncodeRequest {
            carrier: carrier(40, 40),
            data: Some(ChartData::Discrete { points }),
            info: ChartInfo::default(),
            k: 3,
            max_channels: 3,
        };
        let err = encode(&tiny(), &req).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains(&max.to_string()), "{err}");
    }

    #[test]
    fn carrier_smaller_than_a_symbol_has_no_room_for_the_payload() {
        let req = EncodeRequest {
            carrier: carrier(64, 64),
            data: None,
            info: ChartInfo::default(),
            k: 3,
            max_channels: 3,
        };
        let err = encode(&tiny(), &req).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn channel_budget_is_enforced() {
        let field = crate::bundle::Field {
            height: 40,
            width: 40,
            values: (0..1600).map(f64::from).collect(),
        };
        let data = ChartData::Continuous {
            fields: vec![field.clone(), field],
        };
        let err = prepare_data(Some(&data), (40, 40), 3, 1).unwrap_err();
        assert!(matches!(
            err,
            AppError::Core(Error::Capacity {
                required: 2,
                available: 1,
                ..
            })
        ));
    }

    #[test]
    fn plain_image_has_no_payload() {
        let err = decode(&tiny(), &carrier(360, 360)).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
    }
}
