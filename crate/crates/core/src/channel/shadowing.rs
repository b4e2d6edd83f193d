use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::engine::rng::mix64;
use crate::types::NodeId;

/// Log-normal shadowing with an independent draw per (tx, rx, TTI).
///
/// Samples are derived from a counter-based hash of the link and the TTI, so
/// the value does not depend on the order in which links are evaluated.
#[derive(Clone, Debug)]
pub struct ShadowingField {
    key: u64,
    std_dev_db: f64,
}

impl ShadowingField {
    pub fn new(key: u64, std_dev_db: f64) -> Self {
        Self { key, std_dev_db }
    }

    pub fn disabled() -> Self {
        Self::new(0, 0.0)
    }

    pub fn std_dev_db(&self) -> f64 {
        self.std_dev_db
    }

    pub fn sample_db(&self, tx: NodeId, rx: NodeId, tti: u64) -> f64 {
        if self.std_dev_db == 0.0 {
            return 0.0;
        }
        let link = (u64::from(tx.0) << 32) | u64::from(rx.0);
        let seed = mix64(mix64(self.key ^ mix64(link)) ^ tti);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: f64 = StandardNormal.sample(&mut rng);
        z * self.std_dev_db
    }
}
