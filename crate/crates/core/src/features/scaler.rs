use super::{FeatureError, FlowStatVector, PktStatVector, Sample, FLOW_STAT_DIM, PKT_STAT_DIM};

/// Per-dimension min-max normalization of the statistics vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub pkt_min: Vec<f64>,
    pub pkt_max: Vec<f64>,
    pub flow_min: Vec<f64>,
    pub flow_max: Vec<f64>,
}

fn scale(x: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Fits the scaler on training samples. Packet ranges only consider real
/// packet slots, never the zero padding.
pub fn fit_scaler<'a>(
    samples: impl IntoIterator<Item = &'a Sample>,
) -> Result<Scaler, FeatureError> {
    let mut s = Scaler {
        pkt_min: vec![f64::INFINITY; PKT_STAT_DIM],
        pkt_max: vec![f64::NEG_INFINITY; PKT_STAT_DIM],
        flow_min: vec![f64::INFINITY; FLOW_STAT_DIM],
        flow_max: vec![f64::NEG_INFINITY; FLOW_STAT_DIM],
    };
    let widen = |lo: &mut [f64], hi: &mut [f64], v: &[f64]| {
        for ((l, h), &x) in lo.iter_mut().zip(hi.iter_mut()).zip(v) {
            *l = l.min(x);
            *h = h.max(x);
        }
    };
    let mut seen = 0usize;
    for sample in samples {
        seen += 1;
        for p in sample.pkt_stats.iter().take(sample.packets) {
            widen(&mut s.pkt_min, &mut s.pkt_max, p.values());
        }
        widen(&mut s.flow_min, &mut s.flow_max, sample.flow_stat.values());
    }
    if seen == 0 {
        return Err(FeatureError::EmptyFit);
    }
    for (lo, hi) in s.pkt_min.iter_mut().zip(s.pkt_max.iter_mut()) {
        if !lo.is_finite() {
            *lo = 0.0;
            *hi = 0.0;
        }
    }
    Ok(s)
}

impl Scaler {
    pub fn apply_pkt(&self, v: &PktStatVector) -> PktStatVector {
        let values = v
            .values()
            .iter()
            .enumerate()
            .map(|(i, &x)| scale(x, self.pkt_min[i], self.pkt_max[i]))
            .collect();
        PktStatVector::from_values(values).expect("length preserved")
    }

    pub fn apply_flow(&self, v: &FlowStatVector) -> FlowStatVector {
        let values = v
            .values()
            .iter()
            .enumerate()
            .map(|(i, &x)| scale(x, self.flow_min[i], self.flow_max[i]))
            .collect();
        FlowStatVector::from_values(values).expect("length preserved")
    }

    /// Normalizes a sample; padding slots stay all zero.
    pub fn apply(&self, sample: &Sample) -> Sample {
        let mut out = sample.clone();
        for (i, p) in out.pkt_stats.iter_mut().enumerate() {
            if i < sample.packets {
                *p = self.apply_pkt(p);
            }
        }
        out.flow_stat = self.apply_flow(&sample.flow_stat);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;
    use crate::http::Label;

    fn sample(pkt: f64, flow: f64) -> Sample {
        Sample {
            flow_id: String::new(),
            label: Label::Benign,
            images: vec![PktTextImage::zeros(); 2],
            pkt_stats: vec![
                PktStatVector::from_values(vec![pkt; PKT_STAT_DIM]).unwrap(),
                PktStatVector::zeros(),
            ],
            flow_stat: FlowStatVector::from_values(vec![flow; FLOW_STAT_DIM]).unwrap(),
            packets: 1,
        }
    }

    #[test]
    fn empty_fit_fails() {
        assert_eq!(fit_scaler(&Vec::<Sample>::new()), Err(FeatureError::EmptyFit));
    }

    #[test]
    fn degenerate_dimensions_map_to_zero() {
        let s = fit_scaler(&[sample(3.0, 7.0), sample(3.0, 7.0)]).unwrap();
        let out = s.apply(&sample(3.0, 7.0));
        assert!(out.pkt_stats[0].values().iter().all(|&v| v == 0.0));
        assert!(out.flow_stat.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_map_and_clamp() {
        let s = fit_scaler(&[sample(0.0, 0.0), sample(10.0, 10.0)]).unwrap();
        assert_eq!(s.apply(&sample(5.0, 5.0)).flow_stat.values()[0], 0.5);
        assert_eq!(s.apply(&sample(20.0, 20.0)).pkt_stats[0].values()[0], 1.0);
        assert_eq!(s.apply(&sample(-3.0, -3.0)).flow_stat.values()[3], 0.0);
    }

    #[test]
    fn padding_slot_ignored_and_kept_zero() {
        let s = fit_scaler(&[sample(4.0, 1.0), sample(8.0, 2.0)]).unwrap();
        assert_eq!(s.pkt_min[0], 4.0);
        let out = s.apply(&sample(6.0, 1.5));
        assert!(out.pkt_stats[1].values().iter().all(|&v| v == 0.0));
    }
}
