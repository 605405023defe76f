use std::sync::{Arc, Mutex};

/// Points on the write path where a crash can be simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultPoint {
    /// Part of the line reached the file, nothing was flushed.
    PreFlush,
    /// The line is durable but the caller was never acknowledged.
    PostFlush,
    /// The caller was acknowledged, then the process died.
    PostAck,
}

impl FaultPoint {
    pub const ALL: [FaultPoint; 3] = [FaultPoint::PreFlush, FaultPoint::PostFlush, FaultPoint::PostAck];
}

/// Shared one-shot crash trigger. Cloning shares the trigger.
#[derive(Debug, Clone, Default)]
pub struct FaultInjector {
    armed: Arc<Mutex<Option<FaultPoint>>>,
}

impl FaultInjector {
    pub fn arm(&self, point: FaultPoint) {
        *self.armed.lock().unwrap() = Some(point);
    }

    pub fn disarm(&self) {
        *self.armed.lock().unwrap() = None;
    }

    /// True (and disarms) if `point` is the armed one.
    pub fn trip(&self, point: FaultPoint) -> bool {
        let mut armed = self.armed.lock().unwrap();
        if *armed == Some(point) {
            *armed = None;
            true
        } else {
            false
        }
    }
}
