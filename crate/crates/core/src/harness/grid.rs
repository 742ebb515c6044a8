use rayon::prelude::*;
use thiserror::Error;

use super::config::{ConfigError, ScenarioConfig, Scheme};
use super::metrics::MetricsRecord;
use super::world::run_scenario;
use crate::simcore::derive_seed;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid axis {0} is empty")]
    EmptyAxis(&'static str),
    #[error("cell {cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: ConfigError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridAxes {
    pub pers: Vec<f64>,
    pub latencies_ms: Vec<f64>,
    /// Target indicator correlations. Empty keeps the base channel as given.
    pub correlations: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub repeats: u32,
}

impl Default for GridAxes {
    fn default() -> Self {
        Self {
            pers: vec![0.0, 1e-4],
            latencies_ms: vec![0.0, 1.0, 5.0],
            correlations: vec![-0.34, 0.0, 0.34],
            schemes: Scheme::ALL.to_vec(),
            repeats: 5,
        }
    }
}

/// Every cell of the grid in output order. Cells that differ only in scheme,
/// PER or latency share a seed, so the schemes see the same channel.
pub fn expand_grid(base: &ScenarioConfig, axes: &GridAxes) -> Result<Vec<ScenarioConfig>, GridError> {
    if axes.pers.is_empty() {
        return Err(GridError::EmptyAxis("per"));
    }
    if axes.latencies_ms.is_empty() {
        return Err(GridError::EmptyAxis("latency"));
    }
    if axes.schemes.is_empty() {
        return Err(GridError::EmptyAxis("scheme"));
    }
    if axes.repeats == 0 {
        return Err(GridError::EmptyAxis("repeats"));
    }
    let corrs: Vec<Option<f64>> = if axes.correlations.is_empty() {
        vec![base.corr_target]
    } else {
        axes.correlations.iter().copied().map(Some).collect()
    };
    let mut cells = Vec::new();
    for (ci, &corr) in corrs.iter().enumerate() {
        for &per in &axes.pers {
            for &lat in &axes.latencies_ms {
                for rep in 0..axes.repeats {
                    let seed = derive_seed(base.seed, ci as u64 * 1_000_003 + rep as u64);
                    for &scheme in &axes.schemes {
                        let mut cfg = base.clone();
                        cfg.scheme = scheme;
                        cfg.per = per;
                        cfg.latency_ms = lat;
                        cfg.corr_target = corr;
                        cfg.seed = seed;
                        cfg.event_log = false;
                        let c = corr.map_or_else(|| "base".to_string(), |c| format!("{c}"));
                        cfg.scenario = format!("{}/corr{c}/per{per}/lat{lat}/r{rep}", base.scenario);
                        cells.push(cfg);
                    }
                }
            }
        }
    }
    Ok(cells)
}

/// Run every cell on the rayon pool; rows come back in cell order.
pub fn run_grid(base: &ScenarioConfig, axes: &GridAxes) -> Result<Vec<MetricsRecord>, GridError> {
    let cells = expand_grid(base, axes)?;
    for cfg in &cells {
        cfg.validate().map_err(|source| GridError::Cell { cell: cfg.scenario.clone(), source })?;
    }
    cells
        .par_iter()
        .map(|cfg| {
            run_scenario(cfg)
                .map(|out| out.record)
                .map_err(|source| GridError::Cell { cell: cfg.scenario.clone(), source })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinality_matches_axes() {
        let axes = GridAxes {
            pers: vec![0.0, 1e-4],
            latencies_ms: vec![0.0, 5.0],
            correlations: vec![],
            schemes: Scheme::ALL.to_vec(),
            repeats: 3,
        };
        let cells = expand_grid(&ScenarioConfig::default(), &axes).unwrap();
        assert_eq!(cells.len(), 36);
        let mut ids: Vec<_> = cells.iter().map(|c| (c.scenario.clone(), c.scheme)).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 36);
    }

    #[test]
    fn repeats_get_distinct_seeds_and_schemes_share_them() {
        let axes = GridAxes { pers: vec![0.0], latencies_ms: vec![0.0], repeats: 4, ..GridAxes::default() };
        let cells = expand_grid(&ScenarioConfig::default(), &axes).unwrap();
        let mut seeds: Vec<u64> = cells.iter().map(|c| c.seed).collect();
        assert!(cells.chunks(3).all(|ch| ch.iter().all(|c| c.seed == ch[0].seed)));
        seeds.dedup();
        seeds.sort();
        let n = seeds.len();
        seeds.dedup();
        assert_eq!(seeds.len(), n);
        assert_eq!(n, 3 * 4);
    }

    #[test]
    fn empty_axes_are_rejected() {
        let axes = GridAxes { schemes: vec![], ..GridAxes::default() };
        assert!(matches!(expand_grid(&ScenarioConfig::default(), &axes), Err(GridError::EmptyAxis("scheme"))));
    }
}
