use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Running maximum of nonnegative samples over a trailing time window `[t - span, t]`.
///
/// Stored values are strictly decreasing from front to back, so pushes and
/// queries are amortized O(1).
#[derive(Debug, Clone)]
pub struct SlidingWindowMax {
    span: f64,
    samples: VecDeque<(f64, f64)>,
    last_t: Option<f64>,
}

impl SlidingWindowMax {
    pub fn new(span: f64) -> Result<Self> {
        if !(span > 0.0 && span.is_finite()) {
            return Err(Error::Input(format!("window span must be positive, got {span}")));
        }
        Ok(SlidingWindowMax {
            span,
            samples: VecDeque::new(),
            last_t: None,
        })
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::Input(format!("non-finite sample time {t}")));
        }
        match self.last_t {
            Some(last) if t < last => Err(Error::Ordering { t, last }),
            _ => Ok(()),
        }
    }

    pub fn push(&mut self, t: f64, v: f64) -> Result<()> {
        self.check_time(t)?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Input(format!("window samples must be finite and >= 0, got {v}")));
        }
        while self.samples.back().is_some_and(|&(_, b)| b <= v) {
            self.samples.pop_back();
        }
        self.samples.push_back((t, v));
        self.last_t = Some(t);
        self.evict(t);
        Ok(())
    }

    fn evict(&mut self, now: f64) {
        let start = now - self.span;
        while self.samples.front().is_some_and(|&(t, _)| t < start) {
            self.samples.pop_front();
        }
    }

    /// Maximum over samples with time in `[now - span, now]`; 0 when none.
    ///
    /// Queries advance the clock: later pushes must not precede `now`.
    pub fn max(&mut self, now: f64) -> Result<f64> {
        self.check_time(now)?;
        self.last_t = Some(now);
        self.evict(now);
        Ok(self.samples.front().map_or(0.0, |&(_, v)| v))
    }

    /// Current maximum without advancing the clock.
    pub fn peek(&self) -> f64 {
        self.samples.front().map_or(0.0, |&(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
