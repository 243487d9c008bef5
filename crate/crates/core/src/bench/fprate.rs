use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BenchError;
use crate::forest::NodeAddress;
use crate::index::{CuckooIndex, IndexConfig, InsertOutcome, DEFAULT_BUCKETS, SLOTS_PER_BUCKET};

/// Distinct non-zero fingerprint values.
const FINGERPRINT_VALUES: f64 = 4095.0;

#[derive(Clone, Debug, PartialEq)]
pub struct FpRateParams {
    pub bucket_count: usize,
    pub entries: usize,
    pub seed: u64,
}

impl Default for FpRateParams {
    fn default() -> Self {
        Self {
            bucket_count: DEFAULT_BUCKETS,
            entries: 3148,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FpRateResult {
    pub probes: u64,
    pub entries_inserted: usize,
    pub failed_inserts: usize,
    pub load_factor: f64,
    /// Absent-key probes where some candidate slot carried the same
    /// fingerprint.
    pub fingerprint_matches: u64,
    /// Absent-key probes that returned an entity.
    pub wrong_results: u64,
    pub rate: f64,
    /// Match probability if both candidate buckets were full.
    pub full_bucket_rate: f64,
    /// Match probability given the occupancy each probe actually saw.
    pub occupancy_rate: f64,
}

impl FpRateResult {
    /// Binomial standard deviation of the measured rate around `p`.
    pub fn sigma(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.probes as f64).sqrt()
    }
}

/// `1 - (1 - 1/4095)^slots`: chance that one of `slots` independent
/// fingerprints equals a query's.
pub fn match_probability(slots: usize) -> f64 {
    1.0 - (1.0 - 1.0 / FINGERPRINT_VALUES).powi(slots as i32)
}

/// Match rate against two full four-slot buckets.
pub fn full_bucket_match_rate() -> f64 {
    match_probability(2 * SLOTS_PER_BUCKET)
}

/// Fills a fixed-size index with random labels and probes it with labels
/// that were never inserted.
pub fn fp_rate_experiment(params: &FpRateParams, probes: u64) -> Result<FpRateResult, BenchError> {
    if probes == 0 {
        return Err(BenchError::InvalidSpec("probes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut index = CuckooIndex::new(IndexConfig {
        seed: params.seed,
        ..IndexConfig::fixed(params.bucket_count)
    })?;

    let mut inserted = 0;
    let mut failed = 0;
    let mut next = 0u32;
    while inserted + failed < params.entries {
        let label = format!("entity-{:016x}", rng.random::<u64>());
        match index.insert(&label, &[NodeAddress::new(next, 0)]) {
            InsertOutcome::Inserted => inserted += 1,
            InsertOutcome::Failed => failed += 1,
            InsertOutcome::AppendedExisting => continue,
        }
        next += 1;
    }

    let mut matches = 0;
    let mut wrong = 0;
    let mut expected = 0.0;
    for i in 0..probes {
        let label = format!("absent-{i}-{:016x}", rng.random::<u64>());
        let outcome = index.probe(&label);
        matches += outcome.fingerprint_matched as u64;
        wrong += outcome.found.is_some() as u64;
        expected += match_probability(outcome.occupied_slots);
    }
    Ok(FpRateResult {
        probes,
        entries_inserted: inserted,
        failed_inserts: failed,
        load_factor: index.load_factor(),
        fingerprint_matches: matches,
        wrong_results: wrong,
        rate: matches as f64 / probes as f64,
        full_bucket_rate: full_bucket_match_rate(),
        occupancy_rate: expected / probes as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_index_never_matches() {
        let r = fp_rate_experiment(
            &FpRateParams {
                entries: 0,
                ..FpRateParams::default()
            },
            5_000,
        )
        .unwrap();
        assert_eq!(r.fingerprint_matches, 0);
        assert_eq!(r.rate, 0.0);
        assert_eq!(r.occupancy_rate, 0.0);
    }

    #[test]
    fn closed_form() {
        assert!((full_bucket_match_rate() - 0.001_952_4).abs() < 1e-6);
        assert_eq!(match_probability(0), 0.0);
    }

    #[test]
    fn small_run_has_no_wrong_results() {
        let r = fp_rate_experiment(&FpRateParams::default(), 20_000).unwrap();
        assert_eq!(r.entries_inserted, 3148);
        assert_eq!(r.wrong_results, 0);
        assert!(r.rate <= r.full_bucket_rate + 4.0 * r.sigma(r.full_bucket_rate));
    }
}
