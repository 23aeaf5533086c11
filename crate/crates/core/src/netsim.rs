//! Deterministic discrete-event machinery and the simulated broadcast
//! channel standing in for the radio.
//!
//! Events are totally ordered by (time, insertion sequence), so identical
//! inputs replay identically. The channel model is latency plus independent
//! per-receiver Bernoulli loss; transmissions never collide. Each station's
//! random draws come from its own counter-derived stream, so adding a
//! station leaves every other station's stream untouched.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("event scheduled into the past: now {now_ms} ms, requested {requested_ms} ms")]
    SchedulePast { now_ms: f64, requested_ms: f64 },
    #[error("station {0} is not registered on the channel")]
    UnregisteredStation(u32),
}

struct Queued<E> {
    time_ms: f64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Queued<E> {
    fn eq(&self, other: &Self) -> bool {
        self.time_ms == other.time_ms && self.seq == other.seq
    }
}
impl<E> Eq for Queued<E> {}
impl<E> PartialOrd for Queued<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Queued<E> {
    // Reversed: BinaryHeap is a max-heap, we pop the earliest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time_ms
            .total_cmp(&self.time_ms)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Future events in deterministic (time, sequence) order.
pub struct EventQueue<E> {
    heap: BinaryHeap<Queued<E>>,
    next_seq: u64,
    now_ms: f64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self { heap: BinaryHeap::new(), next_seq: 0, now_ms: 0.0 }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now_ms(&self) -> f64 {
        self.now_ms
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Handlers may only schedule into the present or future.
    pub fn schedule(&mut self, time_ms: f64, event: E) -> Result<(), SimError> {
        if time_ms < self.now_ms {
            return Err(SimError::SchedulePast { now_ms: self.now_ms, requested_ms: time_ms });
        }
        self.heap.push(Queued { time_ms, seq: self.next_seq, event });
        self.next_seq += 1;
        Ok(())
    }

    /// Pop exactly the next event; `None` signals end of simulation.
    pub fn pop(&mut self) -> Option<(f64, E)> {
        let q = self.heap.pop()?;
        self.now_ms = q.time_ms;
        Some((q.time_ms, q.event))
    }

    /// Time of the next event without popping it.
    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|q| q.time_ms)
    }
}

/// Transmission time of a frame on the air, microseconds. PHY preamble and
/// headers are ignored.
pub fn airtime_us(frame_len_bytes: usize, bitrate_bps: u64) -> f64 {
    (frame_len_bytes as f64 * 8.0) / bitrate_bps as f64 * 1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default = "default_bitrate")]
    pub bitrate_bps: u64,
    /// Independent drop probability per receiver, [0, 1].
    #[serde(default)]
    pub loss_probability: f64,
    /// Fixed propagation plus processing delay, ms.
    #[serde(default = "default_latency")]
    pub latency_ms: f64,
    /// Uniform extra delay in [0, jitter_ms), ms.
    #[serde(default)]
    pub jitter_ms: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_bitrate() -> u64 {
    6_000_000 // ITS-G5 base rate on a 10 MHz channel
}

fn default_latency() -> f64 {
    1.0
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            bitrate_bps: default_bitrate(),
            loss_probability: 0.0,
            latency_ms: default_latency(),
            jitter_ms: 0.0,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.bitrate_bps == 0 {
            return Err("bitrate_bps must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return Err(format!("loss_probability {} out of [0,1]", self.loss_probability));
        }
        if self.latency_ms < 0.0 || self.jitter_ms < 0.0 {
            return Err("latency_ms and jitter_ms must be >= 0".into());
        }
        Ok(())
    }
}

/// A frame arriving at one receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery {
    pub rx_station: u32,
    pub deliver_at_ms: f64,
}

struct StationStreams {
    loss: ChaCha12Rng,
    jitter: ChaCha12Rng,
    busy_ms: f64,
}

const STREAMS_PER_STATION: u64 = 4;

/// An independent random stream for one (station, purpose) pair, derived
/// from the scenario seed. Streams never interleave, so adding a station
/// cannot shift another station's draws.
pub(crate) fn station_stream(seed: u64, station: u32, purpose: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(station as u64 * STREAMS_PER_STATION + purpose);
    rng
}

fn uniform_f64(rng: &mut ChaCha12Rng) -> f64 {
    // 53 uniformly random mantissa bits in [0, 1).
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The shared broadcast medium: per-receiver loss and delay draws plus
/// per-station channel-busy accounting.
pub struct Channel {
    config: ChannelConfig,
    stations: BTreeMap<u32, StationStreams>,
}

impl Channel {
    pub fn new(config: ChannelConfig) -> Self {
        Self { config, stations: BTreeMap::new() }
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn register(&mut self, station: u32) {
        self.stations.entry(station).or_insert_with(|| StationStreams {
            loss: station_stream(self.config.seed, station, 0),
            jitter: station_stream(self.config.seed, station, 1),
            busy_ms: 0.0,
        });
    }

    pub fn is_registered(&self, station: u32) -> bool {
        self.stations.contains_key(&station)
    }

    /// Deliver a frame from `tx_station` to every other registered station,
    /// minus per-receiver loss draws. The frame's airtime is charged to the
    /// transmitter now; receivers are charged when the caller reports the
    /// delivery via [`Channel::note_reception`].
    pub fn broadcast(
        &mut self,
        tx_station: u32,
        frame_len_bytes: usize,
        now_ms: f64,
    ) -> Result<Vec<Delivery>, SimError> {
        if !self.stations.contains_key(&tx_station) {
            return Err(SimError::UnregisteredStation(tx_station));
        }
        let air_ms = airtime_us(frame_len_bytes, self.config.bitrate_bps) / 1000.0;
        let loss = self.config.loss_probability;
        let latency = self.config.latency_ms;
        let jitter = self.config.jitter_ms;
        let mut deliveries = Vec::new();
        for (&id, streams) in self.stations.iter_mut() {
            if id == tx_station {
                streams.busy_ms += air_ms;
                continue;
            }
            let dropped = uniform_f64(&mut streams.loss) < loss;
            let delay = latency + uniform_f64(&mut streams.jitter) * jitter;
            if !dropped {
                deliveries.push(Delivery { rx_station: id, deliver_at_ms: now_ms + delay });
            }
        }
        Ok(deliveries)
    }

    /// Charge a received frame's airtime to the receiver's busy window.
    pub fn note_reception(&mut self, rx_station: u32, frame_len_bytes: usize) {
        let air_ms = airtime_us(frame_len_bytes, self.config.bitrate_bps) / 1000.0;
        if let Some(streams) = self.stations.get_mut(&rx_station) {
            streams.busy_ms += air_ms;
        }
    }

    /// Read and reset the station's busy accumulator (one CBR window).
    pub fn take_busy_ms(&mut self, station: u32) -> f64 {
        match self.stations.get_mut(&station) {
            Some(streams) => std::mem::take(&mut streams.busy_ms),
            None => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn airtime_oracles() {
        // len * 8 / bitrate: 70 B at 6 Mb/s = 93.33 us, 134 B = 178.67 us.
        assert!((airtime_us(70, 6_000_000) - 93.33).abs() < 0.01);
        assert!((airtime_us(134, 6_000_000) - 178.67).abs() < 0.01);
    }

    #[test]
    fn doubling_bitrate_halves_airtime() {
        for len in [26, 70, 800] {
            let a = airtime_us(len, 3_000_000);
            let b = airtime_us(len, 6_000_000);
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_time_events_pop_in_insertion_order() {
        let mut q = EventQueue::new();
        q.schedule(5.0, "b").unwrap();
        q.schedule(1.0, "a").unwrap();
        q.schedule(5.0, "c").unwrap();
        assert_eq!(q.pop(), Some((1.0, "a")));
        assert_eq!(q.pop(), Some((5.0, "b")));
        assert_eq!(q.pop(), Some((5.0, "c")));
        assert_eq!(q.pop(), None);
    }

    #[test]
    fn scheduling_into_the_past_is_fatal() {
        let mut q = EventQueue::new();
        q.schedule(10.0, ()).unwrap();
        q.pop();
        assert_eq!(
            q.schedule(5.0, ()),
            Err(SimError::SchedulePast { now_ms: 10.0, requested_ms: 5.0 })
        );
        // Scheduling at the current instant is allowed.
        q.schedule(10.0, ()).unwrap();
    }

    #[test]
    fn time_is_non_decreasing() {
        let mut q = EventQueue::new();
        for t in [3.0, 1.0, 2.0, 1.5, 8.0] {
            q.schedule(t, ()).unwrap();
        }
        let mut last = 0.0;
        while let Some((t, ())) = q.pop() {
            assert!(t >= last);
            last = t;
        }
    }

    fn channel_with(loss: f64, jitter: f64, seed: u64, n: u32) -> Channel {
        let mut ch = Channel::new(ChannelConfig {
            loss_probability: loss,
            jitter_ms: jitter,
            seed,
            ..Default::default()
        });
        for id in 1..=n {
            ch.register(id);
        }
        ch
    }

    #[test]
    fn lossless_broadcast_reaches_every_other_station_once() {
        let mut ch = channel_with(0.0, 0.0, 7, 5);
        let deliveries = ch.broadcast(3, 70, 100.0).unwrap();
        let mut rx: Vec<u32> = deliveries.iter().map(|d| d.rx_station).collect();
        rx.sort_unstable();
        assert_eq!(rx, vec![1, 2, 4, 5]);
        for d in &deliveries {
            assert_eq!(d.deliver_at_ms, 101.0); // default 1 ms latency
        }
    }

    #[test]
    fn full_loss_still_accrues_transmitter_busy_time() {
        let mut ch = channel_with(1.0, 0.0, 7, 3);
        let deliveries = ch.broadcast(1, 70, 0.0).unwrap();
        assert!(deliveries.is_empty());
        let busy = ch.take_busy_ms(1);
        assert!((busy - 93.33 / 1000.0).abs() < 1e-5);
        assert_eq!(ch.take_busy_ms(2), 0.0);
        // Accumulator was reset.
        assert_eq!(ch.take_busy_ms(1), 0.0);
    }

    #[test]
    fn unregistered_transmitter_is_an_error() {
        let mut ch = channel_with(0.0, 0.0, 7, 2);
        assert_eq!(
            ch.broadcast(9, 70, 0.0).unwrap_err(),
            SimError::UnregisteredStation(9)
        );
    }

    #[test]
    fn identical_seeds_replay_identical_schedules() {
        let run = |seed: u64| -> Vec<Delivery> {
            let mut ch = channel_with(0.3, 2.0, seed, 10);
            let mut all = Vec::new();
            for i in 0..50 {
                let tx = 1 + (i % 10) as u32;
                all.extend(ch.broadcast(tx, 70, i as f64 * 10.0).unwrap());
            }
            all
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn adding_a_station_preserves_existing_streams() {
        // Draws seen by stations 1..3 must be unchanged when station 4
        // joins, because each station draws from its own stream.
        let collect = |n: u32| -> Vec<(u32, f64)> {
            let mut ch = channel_with(0.5, 1.0, 9, n);
            let mut out = Vec::new();
            for i in 0..20 {
                for d in ch.broadcast(1, 70, i as f64).unwrap() {
                    if d.rx_station <= 3 {
                        out.push((d.rx_station, d.deliver_at_ms));
                    }
                }
            }
            out
        };
        assert_eq!(collect(3), collect(4));
    }
}
