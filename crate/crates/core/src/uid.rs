//! UID, GUID and clock sources. Both can be seeded so that repeated runs
//! produce identical artifacts.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// UUID-derived root: `2.25.<128-bit integer>`, valid without registration.
pub const UID_ROOT: &str = "2.25";

#[derive(Clone, Debug)]
pub struct UidSource {
    rng: Arc<Mutex<ChaCha20Rng>>,
}

impl UidSource {
    pub fn seeded(seed: u64) -> Self {
        UidSource {
            rng: Arc::new(Mutex::new(ChaCha20Rng::seed_from_u64(seed))),
        }
    }

    pub fn from_entropy() -> Self {
        UidSource {
            rng: Arc::new(Mutex::new(ChaCha20Rng::from_entropy())),
        }
    }

    fn random_u128(&self) -> u128 {
        let mut v: u128 = self.rng.lock().expect("uid rng poisoned").gen();
        // shape as a version 4 UUID
        v &= !(0xF000u128 << 64);
        v |= 0x4000u128 << 64;
        v &= !(0xC000u128 << 48);
        v |= 0x8000u128 << 48;
        v
    }

    pub fn next_uid(&self) -> String {
        format!("{UID_ROOT}.{}", self.random_u128())
    }

    /// Hyphenated uppercase GUID, used as HL7 message control id.
    pub fn next_guid(&self) -> String {
        let h = format!("{:032X}", self.random_u128());
        format!("{}-{}-{}-{}-{}", &h[0..8], &h[8..12], &h[12..16], &h[16..20], &h[20..32])
    }
}

pub trait Clock: Send + Sync + std::fmt::Debug {
    fn now(&self) -> NaiveDateTime;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> NaiveDateTime {
        chrono::Local::now().naive_local()
    }
}

/// Deterministic clock: starts at a fixed instant and advances one second
/// per reading.
#[derive(Debug)]
pub struct SteppingClock {
    start: NaiveDateTime,
    ticks: AtomicU64,
}

impl SteppingClock {
    pub fn new(start: NaiveDateTime) -> Self {
        SteppingClock {
            start,
            ticks: AtomicU64::new(0),
        }
    }

    /// 2024-01-01 12:00:00.
    pub fn default_start() -> Self {
        let start = NaiveDate::from_ymd_opt(2024, 1, 1)
            .and_then(|d| d.and_hms_opt(12, 0, 0))
            .expect("valid constant date");
        Self::new(start)
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> NaiveDateTime {
        let n = self.ticks.fetch_add(1, Ordering::Relaxed);
        self.start + Duration::seconds(n as i64)
    }
}

pub fn dicom_date(t: &NaiveDateTime) -> String {
    t.format("%Y%m%d").to_string()
}

pub fn dicom_time(t: &NaiveDateTime) -> String {
    t.format("%H%M%S").to_string()
}

/// `YYYYMMDDHHMMSS`.
pub fn hl7_timestamp(t: &NaiveDateTime) -> String {
    t.format("%Y%m%d%H%M%S").to_string()
}
