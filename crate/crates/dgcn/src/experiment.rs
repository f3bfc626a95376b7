//! Synthetic dataset specs and cross-seed aggregation.

use dgcn_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parses `n=..,c=..,h=..,d=..,deg=..,noise=..[,seed=..]`. Omitted keys keep
/// their defaults.
pub fn parse_synth_spec(spec: &str) -> Result<SynthConfig> {
    let mut cfg = SynthConfig::default();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("synth spec entry {part:?} is not key=value")))?;
        let bad = || Error::Usage(format!("synth spec: bad value {value:?} for {key}"));
        let int = || value.trim().parse::<usize>().map_err(|_| bad());
        let float = || value.trim().parse::<f64>().map_err(|_| bad());
        match key.trim() {
            "n" => cfg.n = int()?,
            "c" => cfg.classes = int()?,
            "d" => cfg.dims = int()?,
            "h" => cfg.homophily = float()?,
            "deg" => cfg.mean_degree = float()?,
            "noise" => cfg.feature_noise = float()?,
            "seed" => cfg.seed = value.trim().parse().map_err(|_| bad())?,
            other => return Err(Error::Usage(format!("synth spec: unknown key {other:?}"))),
        }
    }
    Ok(cfg)
}

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&v, 0.25), quantile(&v, 0.75));
    Some(Summary {
        count: v.len(),
        median: quantile(&v, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
        min: v[0],
        max: v[v.len() - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_three() {
        let s = summarize(&[0.8, 0.6, 0.7]).unwrap();
        assert!((s.median - 0.7).abs() < 1e-15);
        assert!((s.q1 - 0.65).abs() < 1e-15);
        assert!((s.iqr - 0.1).abs() < 1e-12);
    }

    #[test]
    fn median_of_even_count() {
        assert_eq!(summarize(&[1.0, 4.0, 2.0, 3.0]).unwrap().median, 2.5);
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn synth_spec_round_trip() {
        let c = parse_synth_spec("n=300, c=5,h=0.1,d=20,deg=8,noise=0.5,seed=3").unwrap();
        assert_eq!((c.n, c.classes, c.dims, c.seed), (300, 5, 20, 3));
        assert_eq!(
            (c.homophily, c.mean_degree, c.feature_noise),
            (0.1, 8.0, 0.5)
        );
        assert_eq!(parse_synth_spec("").unwrap(), SynthConfig::default());
        assert!(parse_synth_spec("n=abc").is_err());
        assert!(parse_synth_spec("x=1").is_err());
        assert!(parse_synth_spec("n").is_err());
    }
}
