//! Exact simulation of the Galton-Watson process with immigration.
//!
//! One generation applies the branching recursion
//! `X_k = sum_{j<=X_{k-1}} xi_{k,j} + eps_k` with the offspring sum drawn
//! through the convolution fast paths of [`DistributionSpec::sample_sum`].
//! The martingale differences `M_k = X_k - X_{k-1} - m_eps` and their
//! branching/immigration decomposition `M_k = N_k + (eps_k - m_eps)` are
//! derived pathwise.
//!
//! Path `i` of an ensemble is a pure function of
//! `(master_seed, i, config)`: generation `k` draws from substream slot
//! `k` of the path's stream family and the initial value from slot 0, so
//! any path regenerates in isolation and ensembles are identical for
//! every worker count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rayon::prelude::*;

use crate::distributions::{DistError, DistributionSpec};
use crate::rng::StreamKey;

/// Paths per sequential block in deterministic parallel folds.
const FOLD_BLOCK: u64 = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("population overflow in generation {generation} of path {path_index}")]
    PopulationOverflow { path_index: u64, generation: u64 },
    #[error("horizon_K must be >= 1")]
    EmptyHorizon,
    #[error("immigration counts were not recorded (set record_immigration)")]
    ImmigrationNotRecorded,
    #[error("ensemble must contain at least one path")]
    EmptyEnsemble,
    #[error(transparent)]
    Distribution(#[from] DistError),
}

/// Simulation configuration: offspring, immigration and initial laws plus
/// the generation horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GWConfig {
    pub offspring: DistributionSpec,
    pub immigration: DistributionSpec,
    pub initial: DistributionSpec,
    #[serde(rename = "horizon_K")]
    pub horizon: u64,
    #[serde(default)]
    pub record_immigration: bool,
}

impl GWConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.horizon == 0 {
            return Err(SimError::EmptyHorizon);
        }
        Ok(())
    }

    /// Critical iff the offspring mean is exactly 1. The five law variants
    /// all realize unit means exactly in f64 (Poisson(1), PointMass(1),
    /// Geometric(1/2), TwoPoint(0,2,1/2), half-half tables), so this is an
    /// analytic comparison, not a tolerance.
    pub fn is_critical(&self) -> bool {
        self.offspring.mean() == 1.0
    }
}

/// One realized trajectory `X_0..X_K`, optionally with the immigration
/// counts that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct GWPath {
    /// Population counts, length K+1.
    pub x: Vec<u64>,
    /// Immigration counts `eps_1..eps_K` when recorded.
    pub eps: Option<Vec<u64>>,
    /// Path index within its ensemble (stream identifier).
    pub seed_id: u64,
}

impl GWPath {
    /// Number of simulated generations K.
    pub fn horizon(&self) -> u64 {
        (self.x.len() - 1) as u64
    }

    /// Martingale differences `M_k = X_k - X_{k-1} - m_eps`, k = 1..K.
    pub fn martingale_differences(&self, m_eps: f64) -> Vec<f64> {
        self.x
            .windows(2)
            .map(|w| w[1] as f64 - w[0] as f64 - m_eps)
            .collect()
    }

    /// Splits each `M_k` into the centered offspring sum
    /// `N_k = (X_k - eps_k) - X_{k-1}` and the centered immigration
    /// `eps_k - m_eps`. The parts sum to `M_k`: exactly whenever `m_eps`
    /// is exactly representable (the integer part is always exact), and
    /// to within one rounding of `m_eps` otherwise.
    pub fn decompose(&self, m_eps: f64) -> Result<(Vec<f64>, Vec<f64>), SimError> {
        let eps = self.eps.as_ref().ok_or(SimError::ImmigrationNotRecorded)?;
        let mut branching = Vec::with_capacity(eps.len());
        let mut centered = Vec::with_capacity(eps.len());
        for (k, w) in self.x.windows(2).enumerate() {
            // Offspring sum X_k - eps_k is nonnegative on every simulated
            // path; a violation means the path was hand-built wrong.
            let offspring = w[1]
                .checked_sub(eps[k])
                .unwrap_or_else(|| panic!("invalid path: X_{} < eps_{}", k + 1, k + 1));
            branching.push(offspring as f64 - w[0] as f64);
            centered.push(eps[k] as f64 - m_eps);
        }
        Ok((branching, centered))
    }
}

/// Simulate a single path from the stream family `key`.
pub fn simulate_path(config: &GWConfig, key: StreamKey) -> Result<GWPath, SimError> {
    config.validate()?;
    let k_max = config.horizon;
    let mut x = Vec::with_capacity(k_max as usize + 1);
    let mut eps_rec = if config.record_immigration {
        Some(Vec::with_capacity(k_max as usize))
    } else {
        None
    };

    // X_0 draws from its own slot: independent of everything else.
    let mut init_stream = key.slot(0);
    let mut prev = config.initial.sample(&mut init_stream);
    x.push(prev);

    for k in 1..=k_max {
        let mut stream = key.slot(k);
        let offspring = config
            .offspring
            .sample_sum(prev, &mut stream)
            .map_err(|e| match e {
                DistError::SumOverflow { .. } => SimError::PopulationOverflow {
                    path_index: key.path_index,
                    generation: k,
                },
                other => SimError::Distribution(other),
            })?;
        let imm = config.immigration.sample(&mut stream);
        let next = offspring
            .checked_add(imm)
            .ok_or(SimError::PopulationOverflow {
                path_index: key.path_index,
                generation: k,
            })?;
        if let Some(rec) = eps_rec.as_mut() {
            rec.push(imm);
        }
        x.push(next);
        prev = next;
    }

    Ok(GWPath {
        x,
        eps: eps_rec,
        seed_id: key.path_index,
    })
}

/// A seeded family of independent paths. Paths are produced on demand;
/// `materialize` realizes all of them, the `par_*` methods stream them.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub config: GWConfig,
    pub master_seed: u64,
    pub n_paths: u64,
}

/// Construct an ensemble description (validates the config).
pub fn generate_ensemble(
    config: &GWConfig,
    master_seed: u64,
    n_paths: u64,
) -> Result<PathEnsemble, SimError> {
    PathEnsemble::new(config.clone(), master_seed, n_paths)
}

impl PathEnsemble {
    pub fn new(config: GWConfig, master_seed: u64, n_paths: u64) -> Result<Self, SimError> {
        config.validate()?;
        if n_paths == 0 {
            return Err(SimError::EmptyEnsemble);
        }
        Ok(Self {
            config,
            master_seed,
            n_paths,
        })
    }

    /// Regenerate path `i` in isolation; bit-identical to the same path
    /// inside any parallel run.
    pub fn path(&self, i: u64) -> Result<GWPath, SimError> {
        simulate_path(&self.config, StreamKey::new(self.master_seed, i))
    }

    /// All paths, in index order, generated in parallel.
    pub fn materialize(&self) -> Result<Vec<GWPath>, SimError> {
        (0..self.n_paths)
            .into_par_iter()
            .map(|i| self.path(i))
            .collect()
    }

    /// Deterministic parallel fold: paths are mapped in fixed blocks of
    /// 1024, each block folds left-to-right, and block results merge in a
    /// fixed pairwise tree. The float result is bit-stable across thread
    /// counts as long as `merge` is a pure function.
    pub fn par_fold<A, MapF, MergeF>(&self, map: MapF, merge: MergeF) -> Result<A, SimError>
    where
        A: Send,
        MapF: Fn(&GWPath) -> A + Sync,
        MergeF: Fn(A, A) -> A + Sync,
    {
        let n_blocks = self.n_paths.div_ceil(FOLD_BLOCK);
        let blocks: Result<Vec<A>, SimError> = (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let lo = b * FOLD_BLOCK;
                let hi = ((b + 1) * FOLD_BLOCK).min(self.n_paths);
                let mut acc: Option<A> = None;
                for i in lo..hi {
                    let path = self.path(i)?;
                    let v = map(&path);
                    acc = Some(match acc {
                        None => v,
                        Some(a) => merge(a, v),
                    });
                }
                Ok(acc.expect("non-empty block"))
            })
            .collect();
        let mut level = blocks?;
        while level.len() > 1 {
            let mut next = Vec::with_capacity(level.len().div_ceil(2));
            let mut it = level.into_iter();
            while let Some(a) = it.next() {
                match it.next() {
                    Some(b) => next.push(merge(a, b)),
                    None => next.push(a),
                }
            }
            level = next;
        }
        Ok(level.pop().expect("non-empty ensemble"))
    }

    /// Map each path to one value, collected in path order.
    pub fn par_map_collect<T, MapF>(&self, map: MapF) -> Result<Vec<T>, SimError>
    where
        T: Send,
        MapF: Fn(&GWPath) -> T + Sync,
    {
        let n_blocks = self.n_paths.div_ceil(FOLD_BLOCK);
        let blocks: Result<Vec<Vec<T>>, SimError> = (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let lo = b * FOLD_BLOCK;
                let hi = ((b + 1) * FOLD_BLOCK).min(self.n_paths);
                let mut out = Vec::with_capacity((hi - lo) as usize);
                for i in lo..hi {
                    out.push(map(&self.path(i)?));
                }
                Ok(out)
            })
            .collect();
        Ok(blocks?.into_iter().flatten().collect())
    }
}
