//! Relative-position bucketing as used by text-to-text transformer attention
//! biases: exact buckets for short offsets, logarithmically widening buckets
//! beyond, clipped at the last bucket.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BucketConfig {
    pub num_buckets: usize,
    pub max_distance: usize,
    pub bidirectional: bool,
}

impl Default for BucketConfig {
    fn default() -> Self {
        Self {
            num_buckets: 32,
            max_distance: 128,
            bidirectional: true,
        }
    }
}

impl BucketConfig {
    pub fn new(num_buckets: usize, max_distance: usize, bidirectional: bool) -> Result<Self> {
        let cfg = Self {
            num_buckets,
            max_distance,
            bidirectional,
        };
        if bidirectional && !num_buckets.is_multiple_of(2) {
            return Err(Error::Input(format!(
                "num_buckets must be even when bidirectional, got {num_buckets}"
            )));
        }
        if cfg.half() < 2 {
            return Err(Error::Input(
                "need at least two buckets per direction".into(),
            ));
        }
        if max_distance <= cfg.half() {
            return Err(Error::Input(format!(
                "max_distance {max_distance} must exceed {}",
                cfg.half()
            )));
        }
        Ok(cfg)
    }

    /// Buckets available to one direction.
    pub fn half(&self) -> usize {
        if self.bidirectional {
            self.num_buckets / 2
        } else {
            self.num_buckets
        }
    }

    /// Offsets below this map to their own bucket.
    pub fn max_exact(&self) -> usize {
        self.half() / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Compressed {
    pub bucket: usize,
    pub magnitude: usize,
}

pub fn compress(offset: i64, cfg: &BucketConfig) -> Compressed {
    let half = cfg.half();
    let max_exact = cfg.max_exact();
    let dist = offset.unsigned_abs() as usize;
    let magnitude = if dist < max_exact {
        dist
    } else {
        let ratio = (dist as f64 / max_exact as f64).ln()
            / (cfg.max_distance as f64 / max_exact as f64).ln();
        let log_part = (ratio * (half - max_exact) as f64).floor() as usize;
        (max_exact + log_part).min(half - 1)
    };
    let bucket = if cfg.bidirectional && offset > 0 {
        magnitude + half
    } else {
        magnitude
    };
    Compressed { bucket, magnitude }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionReport {
    /// `magnitudes[k]` is the compressed magnitude of offset `k`.
    pub magnitudes: Vec<usize>,
    pub distinct: usize,
    /// `(magnitude, number of offsets in 0..=max_offset mapped to it)`, ascending.
    pub widths: Vec<(usize, usize)>,
}

impl CompressionReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("offset\tmagnitude\n");
        for (offset, m) in self.magnitudes.iter().enumerate() {
            out.push_str(&format!("{offset}\t{m}\n"));
        }
        out
    }
}

pub fn compression_report(max_offset: usize, cfg: &BucketConfig) -> Result<CompressionReport> {
    if max_offset < 1 {
        return Err(Error::Input("max_offset must be at least 1".into()));
    }
    let magnitudes: Vec<usize> = (0..=max_offset)
        .map(|o| compress(o as i64, cfg).magnitude)
        .collect();
    let mut widths: Vec<(usize, usize)> = Vec::new();
    for &m in &magnitudes {
        match widths.last_mut() {
            Some((last, w)) if *last == m => *w += 1,
            _ => widths.push((m, 1)),
        }
    }
    Ok(CompressionReport {
        distinct: widths.len(),
        magnitudes,
        widths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact integer oracle for the log region: the magnitude is
    /// `max_exact + k` for the largest `k` with
    /// `dist^span ≥ max_exact^(span-k) · max_distance^k`, `span = half − max_exact`.
    fn oracle(dist: u64, cfg: &BucketConfig) -> usize {
        let half = cfg.half() as u32;
        let me = cfg.max_exact() as u32;
        if dist < me as u64 {
            return dist as usize;
        }
        let span = half - me;
        let lhs = (dist as u128).pow(span);
        let mut k = 0;
        while k < span
            && lhs >= (me as u128).pow(span - k - 1) * (cfg.max_distance as u128).pow(k + 1)
        {
            k += 1;
        }
        ((me + k) as usize).min(cfg.half() - 1)
    }

    #[test]
    fn fifteen_maps_to_nine() {
        assert_eq!(compress(15, &BucketConfig::default()).magnitude, 9);
    }

    #[test]
    fn zero_is_identity() {
        let c = compress(0, &BucketConfig::default());
        assert_eq!((c.bucket, c.magnitude), (0, 0));
    }

    #[test]
    fn collisions_and_clipping() {
        let cfg = BucketConfig::default();
        assert_eq!(compress(14, &cfg).magnitude, 9);
        assert_eq!(compress(200, &cfg).magnitude, 15);
        assert_eq!(compress(-15, &cfg).bucket, 9);
        assert_eq!(compress(15, &cfg).bucket, 25);
    }

    #[test]
    fn matches_integer_oracle() {
        let cfg = BucketConfig::default();
        // u128 keeps dist^8 exact up to well past max_distance.
        for d in 0..=1000u64 {
            assert_eq!(
                compress(d as i64, &cfg).magnitude,
                oracle(d, &cfg),
                "offset {d}"
            );
        }
    }

    #[test]
    fn exact_region_report() {
        let r = compression_report(7, &BucketConfig::default()).unwrap();
        assert_eq!(r.distinct, 8);
        assert!(r.widths.iter().all(|&(_, w)| w == 1));
    }

    #[test]
    fn report_to_nineteen_has_eleven_magnitudes() {
        let r = compression_report(19, &BucketConfig::default()).unwrap();
        assert_eq!(r.distinct, 11);
        assert_eq!(r.magnitudes[15], 9);
    }

    #[test]
    fn widths_grow_in_log_region() {
        let cfg = BucketConfig::default();
        let r = compression_report(cfg.max_distance - 1, &cfg).unwrap();
        let log_widths: Vec<usize> = r
            .widths
            .iter()
            .filter(|(m, _)| *m >= cfg.max_exact())
            .map(|&(_, w)| w)
            .collect();
        assert!(
            log_widths.windows(2).all(|w| w[0] <= w[1]),
            "{log_widths:?}"
        );
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(BucketConfig::new(31, 128, true).is_err());
        assert!(BucketConfig::new(32, 16, true).is_err());
        assert!(BucketConfig::new(32, 128, false).is_ok());
        assert!(compression_report(0, &BucketConfig::default()).is_err());
    }

    #[test]
    fn tsv_ends_with_fifteen_nine() {
        let r = compression_report(15, &BucketConfig::default()).unwrap();
        assert!(r.to_tsv().ends_with("15\t9\n"));
    }
}
