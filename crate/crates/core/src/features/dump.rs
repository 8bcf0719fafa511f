//! Feature dump records, one JSON object per sample:
//! `{"flow_id", "label", "packets", "images_b64": [..], "pkt_stats": [[..], ..], "flow_stat": [..]}`.
//! Image bytes are the raw 0-255 values before division.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{
    bytes_to_image, FeatureError, FlowStatVector, PktStatVector, Sample, IMAGE_BYTES,
    PACKET_SLOTS,
};
use crate::http::Label;

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    flow_id: String,
    label: Label,
    packets: usize,
    images_b64: Vec<String>,
    pkt_stats: Vec<Vec<f64>>,
    flow_stat: Vec<f64>,
}

pub fn sample_to_record(sample: &Sample) -> String {
    let rec = SampleRecord {
        flow_id: sample.flow_id.clone(),
        label: sample.label,
        packets: sample.packets,
        images_b64: sample.images.iter().map(|i| B64.encode(i.to_bytes())).collect(),
        pkt_stats: sample.pkt_stats.iter().map(|p| p.values().to_vec()).collect(),
        flow_stat: sample.flow_stat.values().to_vec(),
    };
    serde_json::to_string(&rec).expect("sample serialization is infallible")
}

pub fn sample_from_record(line: &str) -> Result<Sample, FeatureError> {
    let bad = |m: String| FeatureError::CorruptRecord(m);
    let rec: SampleRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
    if rec.images_b64.len() != PACKET_SLOTS || rec.pkt_stats.len() != PACKET_SLOTS {
        return Err(bad(format!("expected {PACKET_SLOTS} packet slots")));
    }
    let mut images = Vec::new();
    for img in &rec.images_b64 {
        let bytes = B64.decode(img).map_err(|e| bad(e.to_string()))?;
        if bytes.len() != IMAGE_BYTES {
            return Err(bad(format!("image of {} bytes", bytes.len())));
        }
        images.push(bytes_to_image(&bytes));
    }
    let pkt_stats = rec
        .pkt_stats
        .into_iter()
        .map(|v| PktStatVector::from_values(v).ok_or_else(|| bad("pkt_stat length".into())))
        .collect::<Result<_, _>>()?;
    let flow_stat =
        FlowStatVector::from_values(rec.flow_stat).ok_or_else(|| bad("flow_stat length".into()))?;
    Ok(Sample {
        flow_id: rec.flow_id,
        label: rec.label,
        images,
        pkt_stats,
        flow_stat,
        packets: rec.packets,
    })
}
