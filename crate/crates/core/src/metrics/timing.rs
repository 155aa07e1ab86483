use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::protocol::HrTime;

use super::MetricsError;

/// Milliseconds since the Unix epoch from the wall clock.
pub fn epoch_millis_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Elapsed time between two marks of the monotonic clock.
pub fn hr_elapsed(start: Instant, stop: Instant) -> Result<HrTime, MetricsError> {
    stop.checked_duration_since(start)
        .map(HrTime::from)
        .ok_or(MetricsError::ClockError)
}

/// One timing layer: wall-clock start/stop plus a monotonic duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingSample {
    pub epoch_start_ms: u64,
    pub epoch_stop_ms: u64,
    pub hr_elapsed: HrTime,
}

impl TimingSample {
    pub fn new(epoch_start_ms: u64, epoch_stop_ms: u64, hr_elapsed: HrTime) -> Result<Self, MetricsError> {
        if epoch_stop_ms < epoch_start_ms {
            return Err(MetricsError::ClockError);
        }
        Ok(Self {
            epoch_start_ms,
            epoch_stop_ms,
            hr_elapsed,
        })
    }

    pub fn millis(&self) -> f64 {
        self.hr_elapsed.as_millis_f64()
    }

    pub fn epoch_delta_ms(&self) -> u64 {
        self.epoch_stop_ms - self.epoch_start_ms
    }
}

/// Running stopwatch that stamps both clocks at start and stop.
#[derive(Debug, Clone, Copy)]
pub struct Stopwatch {
    epoch_start_ms: u64,
    mark: Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self {
            epoch_start_ms: epoch_millis_now(),
            mark: Instant::now(),
        }
    }

    pub fn epoch_start_ms(&self) -> u64 {
        self.epoch_start_ms
    }

    pub fn stop(&self) -> TimingSample {
        let hr = HrTime::from(self.mark.elapsed());
        let stop = epoch_millis_now().max(self.epoch_start_ms);
        TimingSample {
            epoch_start_ms: self.epoch_start_ms,
            epoch_stop_ms: stop,
            hr_elapsed: hr,
        }
    }
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;

    #[test]
    fn zero_interval() {
        let t = Instant::now();
        assert_eq!(hr_elapsed(t, t).unwrap(), HrTime::ZERO);
    }

    #[test]
    fn sub_second_interval() {
        let t = Instant::now();
        let hr = hr_elapsed(t, t + Duration::from_nanos(26_250_589)).unwrap();
        assert_eq!((hr.seconds(), hr.nanoseconds()), (0, 26_250_589));
        // 1533675892401 - 1533675892375 = 26 ms of epoch delta
        assert_eq!(hr.as_nanos() / 1_000_000, 26);
    }

    #[test]
    fn multi_second_interval() {
        let t = Instant::now();
        let total: u64 = 2_500_000_000;
        let hr = hr_elapsed(t, t + Duration::from_nanos(total)).unwrap();
        assert_eq!(
            (hr.seconds(), u64::from(hr.nanoseconds())),
            (total / 1_000_000_000, total % 1_000_000_000)
        );
    }

    #[test]
    fn reversed_marks_are_a_clock_error() {
        let t = Instant::now();
        let later = t + Duration::from_millis(1);
        assert!(matches!(hr_elapsed(later, t), Err(MetricsError::ClockError)));
    }

    #[test]
    fn stopwatch_layers_agree() {
        let sw = Stopwatch::start();
        std::thread::sleep(Duration::from_millis(20));
        let s = sw.stop();
        assert!(s.millis() >= 20.0);
        assert!((s.epoch_delta_ms() as f64 - s.millis()).abs() <= 2.0);
    }
}
