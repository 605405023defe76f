//! Injectable wall clock.

use std::sync::atomic::{AtomicI64, Ordering};

use chrono::{DateTime, TimeZone, Utc};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock for reproducible transcripts and journals.
///
/// Every call to `now` returns the current instant and then advances it by
/// `step_secs` (zero keeps it frozen).
#[derive(Debug)]
pub struct ManualClock {
    secs: AtomicI64,
    step_secs: i64,
}

impl ManualClock {
    pub fn fixed(at: DateTime<Utc>) -> Self {
        Self::stepping(at, 0)
    }

    pub fn stepping(start: DateTime<Utc>, step_secs: i64) -> Self {
        ManualClock {
            secs: AtomicI64::new(start.timestamp()),
            step_secs,
        }
    }

    /// 13 May 2012, 11:00 UTC, the instant used throughout the sample messages.
    pub fn sample() -> Self {
        Self::fixed(Utc.with_ymd_and_hms(2012, 5, 13, 11, 0, 0).unwrap())
    }

    pub fn advance(&self, secs: i64) {
        self.secs.fetch_add(secs, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        let secs = self.secs.fetch_add(self.step_secs, Ordering::SeqCst);
        Utc.timestamp_opt(secs, 0).unwrap()
    }
}
