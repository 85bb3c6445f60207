//! Door-to-door match probability under the uniform sub-cube model.
//!
//! Driver and passenger origins and destinations are independent uniform
//! draws over `n` sub-cubes. A door-to-door match needs both the origins
//! and the destinations to coincide.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::rng;

/// Default sample count for the probability curve.
pub const DEFAULT_SAMPLE_COUNT: u64 = 1000;

// samples drawn per independent stream
const CHUNK: u64 = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatchProbError {
    #[error("sub-cube count must be at least 1")]
    NoSubCubes,
    #[error("sample count must be at least 1")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SubCubeModel {
    n: u64,
    sample_count: u64,
    seed: u64,
}

impl SubCubeModel {
    pub fn new(n: u64, sample_count: u64, seed: u64) -> Result<Self, MatchProbError> {
        if n == 0 {
            return Err(MatchProbError::NoSubCubes);
        }
        if sample_count == 0 {
            return Err(MatchProbError::NoSamples);
        }
        Ok(Self { n, sample_count, seed })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Monte Carlo estimate: the fraction of sampled quadruples where the
/// passenger's origin and destination equal the driver's.
///
/// Samples are drawn in chunks of 65 536, chunk `k` from stream `k` of the
/// seed, so the estimate does not depend on the thread count.
pub fn match_probability_mc(model: &SubCubeModel) -> f64 {
    let n = model.n;
    let chunks = model.sample_count.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(model.seed, k);
            let len = CHUNK.min(model.sample_count - k * CHUNK);
            let mut hits = 0u64;
            for _ in 0..len {
                let o_p = rng.random_range(1..=n);
                let o_d = rng.random_range(1..=n);
                let d_p = rng.random_range(1..=n);
                let d_d = rng.random_range(1..=n);
                hits += u64::from(o_p == o_d && d_p == d_d);
            }
            hits
        })
        .sum();
    hits as f64 / model.sample_count as f64
}

/// Closed form `1 / n²` for independent uniform endpoints.
pub fn match_probability_exact(n: u64) -> Result<f64, MatchProbError> {
    if n == 0 {
        return Err(MatchProbError::NoSubCubes);
    }
    let n = n as f64;
    Ok(1.0 / (n * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchProbRow {
    pub n: u64,
    pub estimate: f64,
    pub exact: f64,
}

/// One row per sub-cube count, each estimated from its own seed stream.
pub fn match_probability_table(
    ns: &[u64],
    sample_count: u64,
    seed: u64,
) -> Result<Vec<MatchProbRow>, MatchProbError> {
    ns.iter()
        .map(|&n| {
            let model = SubCubeModel::new(n, sample_count, seed.wrapping_add(n))?;
            Ok(MatchProbRow { n, estimate: match_probability_mc(&model), exact: match_probability_exact(n)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn within_3_sigma(n: u64, samples: u64, seed: u64) -> (f64, f64, f64) {
        let p = match_probability_exact(n).unwrap();
        let est = match_probability_mc(&SubCubeModel::new(n, samples, seed).unwrap());
        let sigma = (p * (1.0 - p) / samples as f64).sqrt();
        (est, p, 3.0 * sigma)
    }

    #[test]
    fn single_cube_always_matches() {
        for seed in 0..5 {
            let m = SubCubeModel::new(1, 1000, seed).unwrap();
            assert_eq!(match_probability_mc(&m), 1.0);
        }
    }

    #[test]
    fn closed_form() {
        assert_eq!(match_probability_exact(1).unwrap(), 1.0);
        assert_eq!(match_probability_exact(27).unwrap(), 1.0 / 729.0);
        assert_eq!(match_probability_exact(125).unwrap(), 1.0 / 15625.0);
        assert_eq!(match_probability_exact(0), Err(MatchProbError::NoSubCubes));
        let ps: Vec<f64> = (1..50).map(|n| match_probability_exact(n).unwrap()).collect();
        assert!(ps.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn two_cubes_near_quarter() {
        let (est, p, tol) = within_3_sigma(2, 1_000_000, 11);
        assert_eq!(p, 0.25);
        assert!((est - p).abs() <= tol, "{est}");
        assert!(tol < 0.0013 + 1e-12);
    }

    #[test]
    fn reproducible_and_partial_chunks() {
        let m = SubCubeModel::new(3, 200_001, 5).unwrap();
        assert_eq!(match_probability_mc(&m), match_probability_mc(&m));
        let other = SubCubeModel::new(3, 200_001, 6).unwrap();
        assert_ne!(match_probability_mc(&m), match_probability_mc(&other));
    }

    #[test]
    fn invalid_models() {
        assert_eq!(SubCubeModel::new(0, 10, 0), Err(MatchProbError::NoSubCubes));
        assert_eq!(SubCubeModel::new(3, 0, 0), Err(MatchProbError::NoSamples));
    }
}
