use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::Micros;

/// Per-attempt Bernoulli loss plus a collision penalty, with link-layer ARQ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkModel {
    /// Loss probability of a single transmission attempt, in `[0, 1)`.
    pub loss: f64,
    /// Extra loss probability contributed by each overlapping transmission.
    pub collision: f64,
    pub propagation_us: Micros,
    pub bandwidth_bps: u64,
    pub backoff_slot_us: Micros,
    /// Link-layer retransmissions after the first attempt.
    pub max_retries: u32,
    pub mtu: usize,
    pub link_header_bytes: usize,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self {
            loss: 0.10,
            collision: 0.25,
            propagation_us: 10,
            bandwidth_bps: 250_000,
            backoff_slot_us: 1_000,
            max_retries: 3,
            mtu: 128,
            link_header_bytes: 23,
        }
    }
}

/// Result of pushing one frame across an otherwise idle link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transmission {
    /// Arrival time at the receiver, if any attempt succeeded.
    pub delivered_at: Option<Micros>,
    pub attempts: u32,
    /// When the sender's radio becomes free again.
    pub medium_free_at: Micros,
}

impl LinkModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |f: &str, m: &str| SimError::invalid(format!("link.{f}"), m);
        if !(0.0..1.0).contains(&self.loss) {
            return Err(bad("loss", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.collision) {
            return Err(bad("collision", "must lie in [0, 1)"));
        }
        if self.bandwidth_bps == 0 {
            return Err(bad("bandwidth_bps", "must be positive"));
        }
        if self.mtu <= self.link_header_bytes {
            return Err(bad("mtu", "must exceed link_header_bytes"));
        }
        if self.max_retries > 16 {
            return Err(bad("max_retries", "at most 16"));
        }
        Ok(())
    }

    pub fn airtime(&self, frame_len: usize) -> Micros {
        (frame_len as u64 * 8 * 1_000_000).div_ceil(self.bandwidth_bps)
    }

    pub fn check_frame(&self, frame_len: usize) -> Result<(), SimError> {
        if frame_len > self.mtu {
            Err(SimError::MtuExceeded {
                frame: frame_len,
                mtu: self.mtu,
            })
        } else {
            Ok(())
        }
    }

    /// Loss probability of one attempt overlapped by `overlaps` transmissions.
    pub fn attempt_loss(&self, overlaps: u32) -> f64 {
        1.0 - (1.0 - self.loss) * (1.0 - self.collision).powi(overlaps as i32)
    }

    /// Delay before attempt `k` (0-based): none for the first, then uniform in `[0, 2^k slots]`.
    pub fn backoff<R: Rng + ?Sized>(&self, attempt: u32, rng: &mut R) -> Micros {
        if attempt == 0 {
            0
        } else {
            rng.gen_range(0..=(self.backoff_slot_us << attempt))
        }
    }

    /// Frame lengths (header included) needed to carry a packet; more than
    /// one means link fragmentation.
    pub fn fragment_lengths(&self, packet_len: usize) -> Vec<usize> {
        let room = self.mtu - self.link_header_bytes;
        if packet_len == 0 {
            return vec![self.link_header_bytes];
        }
        let full = packet_len / room;
        let rest = packet_len % room;
        let mut v = vec![self.mtu; full];
        if rest > 0 {
            v.push(rest + self.link_header_bytes);
        }
        v
    }

    /// Send one frame over an isolated link: up to `1 + max_retries` attempts.
    pub fn transmit<R: Rng + ?Sized>(
        &self,
        frame_len: usize,
        now: Micros,
        rng: &mut R,
    ) -> Result<Transmission, SimError> {
        self.check_frame(frame_len)?;
        let air = self.airtime(frame_len);
        let mut t = now;
        for attempt in 0..=self.max_retries {
            t += self.backoff(attempt, rng);
            let end = t + air;
            let lost = rng.gen::<f64>() < self.attempt_loss(0);
            if !lost {
                return Ok(Transmission {
                    delivered_at: Some(end + self.propagation_us),
                    attempts: attempt + 1,
                    medium_free_at: end,
                });
            }
            t = end;
        }
        Ok(Transmission {
            delivered_at: None,
            attempts: self.max_retries + 1,
            medium_free_at: t,
        })
    }
}
