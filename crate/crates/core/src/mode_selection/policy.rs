use std::collections::BTreeMap;

use super::ModeSelectionError;
use crate::types::{Mode, NodeId};

/// Mode chosen when the UL and SL CQIs are equal.
pub const TIE_BREAK_MODE: Mode = Mode::Dm;

/// What a policy knows about one peered pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairState {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub mode: Mode,
    /// Reported CQI of the sender's uplink.
    pub ul_cqi: u8,
    /// Reported or preconfigured CQI of the sidelink.
    pub sl_cqi: u8,
}

pub trait ModeSelectionPolicy: Send {
    fn name(&self) -> &str;

    /// Desired mode for any subset of `pairs`.
    fn select(&mut self, tti: u64, pairs: &[PairState]) -> Vec<(NodeId, NodeId, Mode)>;
}

/// Picks the mode whose link reports the better CQI.
pub fn best_cqi_decide(ul_cqi: u8, sl_cqi: u8) -> Mode {
    match sl_cqi.cmp(&ul_cqi) {
        std::cmp::Ordering::Greater => Mode::Dm,
        std::cmp::Ordering::Less => Mode::Im,
        std::cmp::Ordering::Equal => TIE_BREAK_MODE,
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct BestCqiPolicy;

impl BestCqiPolicy {
    pub const NAME: &'static str = "D2DModeSelectionBestCqi";
}

impl ModeSelectionPolicy for BestCqiPolicy {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn select(&mut self, _tti: u64, pairs: &[PairState]) -> Vec<(NodeId, NodeId, Mode)> {
        pairs
            .iter()
            .map(|p| (p.sender, p.receiver, best_cqi_decide(p.ul_cqi, p.sl_cqi)))
            .collect()
    }
}

type Factory = fn() -> Box<dyn ModeSelectionPolicy>;

/// Maps `d2dModeSelectionType` names to policy constructors.
#[derive(Clone)]
pub struct PolicyRegistry {
    factories: BTreeMap<String, Factory>,
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register(BestCqiPolicy::NAME, || Box::new(BestCqiPolicy));
        r
    }
}

impl PolicyRegistry {
    pub fn register(&mut self, name: &str, factory: Factory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn create(&self, name: &str) -> Result<Box<dyn ModeSelectionPolicy>, ModeSelectionError> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| ModeSelectionError::UnknownPolicy(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(best_cqi_decide(7, 10), Mode::Dm);
        assert_eq!(best_cqi_decide(9, 5), Mode::Im);
        assert_eq!(best_cqi_decide(7, 7), Mode::Dm);
    }

    #[test]
    fn matches_argmax_oracle_everywhere() {
        for ul in 0..=15u8 {
            for sl in 0..=15u8 {
                let best = [(Mode::Dm, sl), (Mode::Im, ul)]
                    .into_iter()
                    .max_by_key(|&(m, c)| (c, m == Mode::Dm))
                    .unwrap()
                    .0;
                assert_eq!(best_cqi_decide(ul, sl), best, "ul={ul} sl={sl}");
            }
        }
    }

    #[test]
    fn registry_lookup() {
        let r = PolicyRegistry::default();
        assert_eq!(
            r.create("D2DModeSelectionBestCqi").unwrap().name(),
            "D2DModeSelectionBestCqi"
        );
        assert_eq!(
            r.create("D2DModeSelectionFoo").err(),
            Some(ModeSelectionError::UnknownPolicy("D2DModeSelectionFoo".into()))
        );
    }

    proptest! {
        #[test]
        fn shift_invariant(ul in 0u8..=15, sl in 0u8..=15, c in -15i16..=15) {
            let (a, b) = (i16::from(ul) + c, i16::from(sl) + c);
            prop_assume!((0..=15).contains(&a) && (0..=15).contains(&b));
            prop_assert_eq!(best_cqi_decide(ul, sl), best_cqi_decide(a as u8, b as u8));
        }
    }
}
