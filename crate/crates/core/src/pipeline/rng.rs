use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Topology-slot sentinels for the per-scenario streams that are not tied to
/// one topology.
pub(crate) const ADMITTANCE_STREAM: u64 = u64::MAX;
pub(crate) const TOPOLOGY_STREAM: u64 = u64::MAX - 1;
pub(crate) const SCENARIO_COST_STREAM: u64 = u64::MAX - 2;
/// Scenario-slot sentinel for the load stream shared by all scenarios.
pub(crate) const LOAD_STREAM: u64 = u64::MAX;

const DOMAIN: &[u8; 8] = b"datakit1";

/// Random stream for one `(seed, scenario, topology)` triple. The triple is
/// the ChaCha key itself, so distinct triples always give distinct streams
/// and the result depends on nothing else (worker count, platform, order).
pub fn derive_scenario_rng(seed: u64, scenario: u64, topology: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&scenario.to_le_bytes());
    key[16..24].copy_from_slice(&topology.to_le_bytes());
    key[24..].copy_from_slice(DOMAIN);
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;
    use std::collections::HashSet;

    fn head(seed: u64, s: u64, t: u64, n: usize) -> Vec<u64> {
        let mut rng = derive_scenario_rng(seed, s, t);
        (0..n).map(|_| rng.next_u64()).collect()
    }

    #[test]
    fn same_triple_same_stream() {
        assert_eq!(head(9, 3, 4, 64), head(9, 3, 4, 64));
    }

    #[test]
    fn neighbouring_triples_differ() {
        let a = head(9, 0, 0, 64);
        let b = head(9, 0, 1, 64);
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
        assert_ne!(head(9, 1, 0, 1), head(9, 0, 1, 1));
        assert_ne!(head(10, 0, 0, 1), head(9, 0, 0, 1));
    }

    #[test]
    fn first_outputs_do_not_collide() {
        // birthday bound for 1e5 draws of 64 bits: n²/2⁶⁵ ≈ 3e-10 expected collisions
        let n = 100_000u64;
        let expected = (n as f64).powi(2) / 2f64.powi(65);
        let firsts: HashSet<u64> = (0..n).map(|i| head(42, i / 100, i % 100, 1)[0]).collect();
        let collisions = n as usize - firsts.len();
        assert!(collisions as f64 <= (2.0 * expected).max(0.0).ceil());
    }
}
