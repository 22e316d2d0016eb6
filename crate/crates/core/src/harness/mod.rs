//! Experiment harness: run configuration, the training loop, the evaluation
//! protocol, and CSV metrics.

pub mod config;
pub mod metrics;
pub mod train;

pub use config::{Algo, ReplayStrategy, RunConfig};
pub use metrics::{emit_metrics, parse_metrics, MetricsRow, CSV_HEADER};
pub use train::{compare, evaluate, train, train_with, EvalStats, RunArtifacts};

use crate::error::{Error, Result};
use crate::kv::KvDoc;
use std::path::Path;

/// Load `key = value` overrides from a config file into a RunConfig.
pub fn apply_config_file(config: &mut RunConfig, path: &Path) -> Result<()> {
    let doc = KvDoc::load(path)?;
    config.apply_kv(&doc)
}

/// Parse a seed list: either a single number, a comma list (`0,3,7`), or an
/// inclusive range (`0..4` meaning 0,1,2,3,4).
pub fn parse_seed_list(raw: &str) -> Result<Vec<u64>> {
    let raw = raw.trim();
    if let Some((lo, hi)) = raw.split_once("..") {
        let lo: u64 = lo
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad seed range start '{lo}'")))?;
        let hi: u64 = hi
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad seed range end '{hi}'")))?;
        if hi < lo {
            return Err(Error::Config(format!("empty seed range {lo}..{hi}")));
        }
        return Ok((lo..=hi).collect());
    }
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad seed '{s}'")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists_parse_ranges_and_commas() {
        assert_eq!(parse_seed_list("0..4").unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(parse_seed_list("7").unwrap(), vec![7]);
        assert_eq!(parse_seed_list("1, 3,5").unwrap(), vec![1, 3, 5]);
        assert!(parse_seed_list("4..1").is_err());
        assert!(parse_seed_list("x").is_err());
    }
}
