use serde::{Deserialize, Serialize};

use crate::error::Fault;
use crate::program::{StreamerConfig, MAX_STREAM_DIMS};

/// Runtime position of one affine stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamCursor {
    pub config: StreamerConfig,
    idx: [u64; MAX_STREAM_DIMS],
    /// Deliveries of the current element so far.
    rep: u32,
    /// Elements fully consumed.
    pub done: u64,
}

impl StreamCursor {
    pub fn new(config: StreamerConfig) -> Self {
        StreamCursor { config, idx: [0; MAX_STREAM_DIMS], rep: 0, done: 0 }
    }

    pub fn exhausted(&self) -> bool {
        self.done >= self.config.total_elements()
    }

    /// Address of the element at `ahead` deliveries from now, if any.
    pub fn peek(&self, ahead: u64) -> Option<u64> {
        let repeat = u64::from(self.config.repeat);
        let elem = self.done + (u64::from(self.rep) + ahead) / repeat;
        if elem >= self.config.total_elements() {
            return None;
        }
        let mut rest = elem;
        let mut offset = 0i64;
        for (b, s) in self.config.bounds.iter().zip(&self.config.strides) {
            offset = offset.wrapping_add(s.wrapping_mul((rest % b) as i64));
            rest /= b;
        }
        Some(self.config.base.wrapping_add(offset as u64))
    }

    fn address(&self) -> u64 {
        let offset: i64 = self
            .config
            .strides
            .iter()
            .zip(&self.idx)
            .map(|(s, i)| s.wrapping_mul(*i as i64))
            .fold(0i64, i64::wrapping_add);
        self.config.base.wrapping_add(offset as u64)
    }

    fn advance_element(&mut self) {
        self.done += 1;
        for d in 0..self.config.dims() {
            self.idx[d] += 1;
            if self.idx[d] < self.config.bounds[d] {
                return;
            }
            self.idx[d] = 0;
        }
    }

    /// Delivers the next address and moves the cursor.
    pub fn advance(&mut self) -> Result<u64, Fault> {
        if self.exhausted() {
            return Err(Fault::StreamExhausted(self.config.reg));
        }
        let addr = self.address();
        self.rep += 1;
        if self.rep >= self.config.repeat {
            self.rep = 0;
            self.advance_element();
        }
        Ok(addr)
    }
}
