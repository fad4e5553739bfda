use std::collections::VecDeque;

use mpcc_core::QuadState;

const TIME_EPS: f64 = 1e-9;

/// FIFO of time-stamped states that releases measurements `delay` seconds late.
#[derive(Debug, Clone)]
pub struct DelayBuffer {
    delay: f64,
    buf: VecDeque<(f64, QuadState)>,
}

impl DelayBuffer {
    pub fn new(delay: f64) -> Self {
        Self { delay: delay.max(0.0), buf: VecDeque::new() }
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    /// Timestamps must be non-decreasing; an equal timestamp replaces the
    /// previous entry.
    pub fn push(&mut self, t: f64, state: QuadState) {
        if let Some(back) = self.buf.back_mut() {
            debug_assert!(t >= back.0 - TIME_EPS, "timestamps must not decrease");
            if (t - back.0).abs() <= TIME_EPS {
                *back = (t, state);
                return;
            }
        }
        self.buf.push_back((t, state));
    }

    /// Newest state with timestamp `≤ t − delay`, or the oldest one held if
    /// nothing is that old yet.
    pub fn observe(&mut self, t: f64) -> Option<(f64, QuadState)> {
        let cutoff = t - self.delay + TIME_EPS;
        while self.buf.len() > 1 && self.buf[1].0 <= cutoff {
            self.buf.pop_front();
        }
        self.buf.front().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn state(x: f64) -> QuadState {
        QuadState::at_rest(Vector3::new(x, 0.0, 1.0))
    }

    #[test]
    fn zero_delay_is_transparent() {
        let mut b = DelayBuffer::new(0.0);
        for k in 0..50 {
            let t = k as f64 * 1e-3;
            b.push(t, state(t));
            let (ts, s) = b.observe(t).unwrap();
            assert_eq!(ts, t);
            assert_eq!(s, state(t));
        }
    }

    #[test]
    fn lag_within_one_step() {
        let dt = 1e-3;
        let d = 0.0305;
        let mut b = DelayBuffer::new(d);
        for k in 0..200 {
            let t = k as f64 * dt;
            b.push(t, state(t));
            let (ts, _) = b.observe(t).unwrap();
            if t >= d {
                let lag = t - ts;
                assert!(lag >= d - 1e-9 && lag < d + dt, "lag {lag}");
            } else {
                assert_eq!(ts, 0.0);
            }
        }
    }
}
