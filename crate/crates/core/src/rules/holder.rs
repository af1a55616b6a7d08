//! Atomically swappable rule set. Readers take a snapshot without locking;
//! a swap replaces the whole compiled engine at once.

use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;

use crate::dicom::DataSet;

use super::{Decision, Engine, Error, RuleSet, SourceDef};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwapMode {
    /// The new set must carry a higher version than the current one.
    Forward,
    /// Reinstates an older set, re-stamped with current version + 1.
    Rollback,
}

pub struct RulesetHolder {
    current: ArcSwap<Engine>,
    writer: Mutex<()>,
}

impl RulesetHolder {
    pub fn new(rules: RuleSet) -> Self {
        RulesetHolder {
            current: ArcSwap::from_pointee(Engine::new(rules)),
            writer: Mutex::new(()),
        }
    }

    pub fn snapshot(&self) -> Arc<Engine> {
        self.current.load_full()
    }

    pub fn version(&self) -> u64 {
        self.current.load().version()
    }

    pub fn evaluate(&self, ds: &DataSet, source: &SourceDef) -> Decision {
        self.current.load().evaluate(ds, source)
    }

    /// Installs `new` and returns the displaced rule set.
    pub fn swap(&self, new: RuleSet, mode: SwapMode) -> Result<RuleSet, Error> {
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let current = self.current.load().version();
        let new = match mode {
            SwapMode::Forward if new.version <= current => {
                return Err(Error::StaleVersion {
                    current,
                    offered: new.version,
                })
            }
            SwapMode::Forward => new,
            SwapMode::Rollback => new.with_version(current + 1),
        };
        let old = self.current.swap(Arc::new(Engine::new(new)));
        Ok(old.rules().clone())
    }

    /// Re-stamps `new` as current + 1 and installs it.
    pub fn reload(&self, new: RuleSet) -> Result<u64, Error> {
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let version = self.current.load().version() + 1;
        self.current.swap(Arc::new(Engine::new(new.with_version(version))));
        Ok(version)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::parse_rules;

    fn rs(v: u64) -> RuleSet {
        parse_rules("[rule all]\nwhen = true\n").unwrap().with_version(v)
    }

    #[test]
    fn forward_and_stale() {
        let h = RulesetHolder::new(rs(1));
        let old = h.swap(rs(2), SwapMode::Forward).unwrap();
        assert_eq!(old.version, 1);
        assert_eq!(h.version(), 2);
        assert_eq!(
            h.swap(old.clone(), SwapMode::Forward).unwrap_err(),
            Error::StaleVersion { current: 2, offered: 1 }
        );
        h.swap(old, SwapMode::Rollback).unwrap();
        assert_eq!(h.version(), 3);
        assert_eq!(h.reload(rs(1)).unwrap(), 4);
    }
}
