//! Discrete-event CSMA/CA broadcast simulator on a one-dimensional highway.
//!
//! Vehicles are static. Each generates a packet every `1/lambda` seconds from
//! a random phase, senses the channel and either transmits at once or backs
//! off. Every reception attempt is classified as OK, SEN, RXB, PRO or COL.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::table;

type Ns = i64;

fn to_ns(seconds: f64) -> Ns {
    (seconds * 1e9).round() as Ns
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShadowingMode {
    /// One draw per ordered vehicle pair, fixed for the replication.
    PerLink,
    /// A fresh draw for every packet at every receiver.
    PerPacket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub duration_s: f64,
    pub warmup_s: f64,
    pub replications: u32,
    pub span_m: f64,
    /// Share of the span, centred, whose vehicles contribute statistics.
    pub central_fraction: f64,
    pub bin_m: f64,
    pub cw_slots: u32,
    pub shadowing: ShadowingMode,
    pub record_packets: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            duration_s: 20.0,
            warmup_s: 1.0,
            replications: 1,
            span_m: 5000.0,
            central_fraction: 0.4,
            bin_m: 25.0,
            cw_slots: 15,
            shadowing: ShadowingMode::PerLink,
            record_packets: false,
        }
    }
}

impl SimParams {
    pub fn validate(&self, lambda: f64) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.warmup_s >= 0.0 && self.duration_s > self.warmup_s) {
            return bad(format!(
                "duration_s ({}) must exceed warmup_s ({})",
                self.duration_s, self.warmup_s
            ));
        }
        let periods = (self.duration_s - self.warmup_s) * lambda;
        if periods < 50.0 {
            return bad(format!("measurement window covers {periods:.1} packet periods, need at least 50"));
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.span_m.is_nan() || self.span_m <= 0.0 || self.bin_m.is_nan() || self.bin_m <= 0.0 {
            return bad("span_m and bin_m must be positive".into());
        }
        if !(self.central_fraction > 0.0 && self.central_fraction <= 1.0) {
            return bad("central_fraction must lie in (0, 1]".into());
        }
        if self.cw_slots == 0 {
            return bad("cw_slots must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Ok,
    Sen,
    Rxb,
    Pro,
    Col,
}

/// Vehicle placement and per-vehicle settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub positions: Vec<f64>,
    /// Fixed packet phases in seconds; drawn uniformly when `None`.
    pub phases: Option<Vec<f64>>,
    pub muted: Vec<bool>,
    /// Vehicles whose transmissions and receptions are counted.
    pub measured: Vec<bool>,
}

impl SimScenario {
    /// Lattice `i / beta` over the span; the central share is measured.
    pub fn lattice(beta: f64, params: &SimParams) -> Self {
        let n = (params.span_m * beta).floor() as usize + 1;
        let positions: Vec<f64> = (0..n).map(|i| i as f64 / beta).collect();
        let center = positions[n - 1] / 2.0;
        let half = params.central_fraction * params.span_m / 2.0;
        let measured = positions.iter().map(|x| (x - center).abs() <= half).collect();
        Self { positions, phases: None, muted: vec![false; n], measured }
    }

    /// Explicit positions, every vehicle measured and active.
    pub fn custom(positions: Vec<f64>) -> Self {
        let n = positions.len();
        Self { positions, phases: None, muted: vec![false; n], measured: vec![true; n] }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Silences every vehicle except `keep`.
    pub fn mute_all_but(mut self, keep: usize) -> Self {
        for (i, m) in self.muted.iter_mut().enumerate() {
            *m = i != keep;
        }
        self
    }

    /// Index of the vehicle closest to the middle of the placement.
    pub fn middle(&self) -> usize {
        let lo = self.positions.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.positions.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let c = (lo + hi) / 2.0;
        (0..self.len())
            .min_by(|&a, &b| {
                (self.positions[a] - c).abs().total_cmp(&(self.positions[b] - c).abs())
            })
            .unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if self.muted.len() != n || self.measured.len() != n {
            return Err(Error::Config("per-vehicle vectors differ in length".into()));
        }
        if let Some(p) = &self.phases {
            if p.len() != n {
                return Err(Error::Config("phase vector length differs from vehicle count".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub attempts: u64,
    pub ok: u64,
    pub sen: u64,
    pub rxb: u64,
    pub pro: u64,
    pub col: u64,
}

impl OutcomeCounts {
    pub fn add(&mut self, o: Outcome) {
        self.attempts += 1;
        match o {
            Outcome::Ok => self.ok += 1,
            Outcome::Sen => self.sen += 1,
            Outcome::Rxb => self.rxb += 1,
            Outcome::Pro => self.pro += 1,
            Outcome::Col => self.col += 1,
        }
    }

    pub fn merge(&mut self, o: &OutcomeCounts) {
        self.attempts += o.attempts;
        self.ok += o.ok;
        self.sen += o.sen;
        self.rxb += o.rxb;
        self.pro += o.pro;
        self.col += o.col;
    }

    fn frac(&self, x: u64) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            x as f64 / self.attempts as f64
        }
    }

    pub fn pdr(&self) -> f64 {
        self.frac(self.ok)
    }

    /// Shares of attempts lost to SEN, RXB, PRO and COL.
    pub fn hats(&self) -> [f64; 4] {
        [self.frac(self.sen), self.frac(self.rxb), self.frac(self.pro), self.frac(self.col)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub tx: usize,
    pub rx: usize,
    pub distance_m: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimBin {
    /// Bin centre.
    pub distance_bin_m: f64,
    pub attempts: u64,
    pub ok: u64,
    pub sen: u64,
    pub rxb: u64,
    pub pro: u64,
    pub col: u64,
    /// Attempt-weighted mean transmitter-receiver distance in the bin.
    pub mean_distance_m: f64,
}

impl SimBin {
    pub fn counts(&self) -> OutcomeCounts {
        OutcomeCounts {
            attempts: self.attempts,
            ok: self.ok,
            sen: self.sen,
            rxb: self.rxb,
            pro: self.pro,
            col: self.col,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub fingerprint: String,
    pub bin_m: f64,
    pub bins: Vec<SimBin>,
    /// Counts per exact transmitter-receiver distance (millimetre key).
    pub by_distance: BTreeMap<i64, OutcomeCounts>,
    /// Busy fraction of every measured vehicle, all replications.
    pub vehicle_busy: Vec<f64>,
    pub cbr_measured: f64,
    pub transmissions: u64,
    /// Packets generated while the previous one was still pending.
    pub dropped: u64,
    pub packets: Vec<PacketRecord>,
}

/// Mean busy fraction over measured vehicles.
pub fn measure_cbr(report: &SimReport) -> f64 {
    if report.vehicle_busy.is_empty() {
        0.0
    } else {
        report.vehicle_busy.iter().sum::<f64>() / report.vehicle_busy.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Generate(usize),
    /// The transmission becomes audible to carrier sense one slot after it starts.
    SenseOn(u64),
    BackoffExpire(usize, u64),
    TxEnd(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mac {
    Idle,
    Backoff { slots: i64, since: Option<Ns>, token: u64 },
    Transmitting,
}

#[derive(Debug, Clone, Copy)]
struct Decode {
    tx: u64,
    start: Ns,
    signal_mw: f64,
    max_interf_mw: f64,
}

struct Tx {
    src: usize,
    tracked: bool,
    /// Per-packet received powers (dBm, mW); `None` reads the link tables.
    own: Option<Box<(Vec<f64>, Vec<f64>)>>,
    /// Receivers at or above the sensing threshold.
    hearers: Vec<u32>,
}

fn mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

struct Engine<'a> {
    sc: &'a Scenario,
    params: &'a SimParams,
    world: &'a SimScenario,
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
    /// Median received power `[src][rx]`, dBm, shadowing included when frozen.
    link_dbm: Vec<f64>,
    link_mw: Vec<f64>,
    queue: BinaryHeap<Reverse<(Ns, u64, Event)>>,
    seq: u64,
    now: Ns,
    slot: Ns,
    airtime: Ns,
    warmup: Ns,
    end: Ns,
    noise_mw: f64,
    mac: Vec<Mac>,
    next_token: u64,
    mac_busy: Vec<u32>,
    phys_busy: Vec<u32>,
    busy_since: Vec<Ns>,
    busy_total: Vec<Ns>,
    total_mw: Vec<f64>,
    active_at: Vec<u32>,
    decode: Vec<Option<Decode>>,
    txs: HashMap<u64, Tx>,
    next_tx: u64,
    /// Slot in `counts` for every ordered pair.
    pair_slot: Vec<u32>,
    slot_keys: Vec<i64>,
    counts: Vec<OutcomeCounts>,
    packets: Vec<PacketRecord>,
    transmissions: u64,
    dropped: u64,
}

/// Millimetre key of a distance.
fn distance_key(d: f64) -> i64 {
    (d * 1000.0).round() as i64
}

impl<'a> Engine<'a> {
    fn new(sc: &'a Scenario, params: &'a SimParams, world: &'a SimScenario, seed: u64) -> Result<Self> {
        let cfg = sc.config();
        let n = world.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = sc.sigma();
        let normal = if sigma > 0.0 {
            Some(Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?)
        } else {
            None
        };
        let mut link_dbm = vec![0.0; n * n];
        let mut pair_slot = vec![0u32; n * n];
        let mut slot_of: HashMap<i64, u32> = HashMap::new();
        let mut slot_keys = Vec::new();
        for s in 0..n {
            for r in 0..n {
                if s == r {
                    continue;
                }
                let d = (world.positions[s] - world.positions[r]).abs();
                let key = distance_key(d);
                pair_slot[s * n + r] = *slot_of.entry(key).or_insert_with(|| {
                    slot_keys.push(key);
                    slot_keys.len() as u32 - 1
                });
                let mut p = sc.mean_rx_power(d);
                if let (Some(nd), ShadowingMode::PerLink) = (&normal, params.shadowing) {
                    p += nd.sample(&mut rng);
                }
                link_dbm[s * n + r] = p;
            }
        }
        Ok(Self {
            sc,
            params,
            world,
            rng,
            normal,
            link_mw: link_dbm.iter().map(|&p| mw(p)).collect(),
            link_dbm,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            slot: to_ns(cfg.slot_time),
            airtime: to_ns(sc.airtime()),
            warmup: to_ns(params.warmup_s),
            end: to_ns(params.duration_s),
            noise_mw: mw(cfg.n0),
            mac: vec![Mac::Idle; n],
            next_token: 0,
            mac_busy: vec![0; n],
            phys_busy: vec![0; n],
            busy_since: vec![0; n],
            busy_total: vec![0; n],
            total_mw: vec![0.0; n],
            active_at: vec![0; n],
            decode: vec![None; n],
            txs: HashMap::new(),
            next_tx: 0,
            counts: vec![OutcomeCounts::default(); slot_keys.len()],
            pair_slot,
            slot_keys,
            packets: Vec::new(),
            transmissions: 0,
            dropped: 0,
        })
    }

    /// Received power of `tx` at `u`, dBm and mW.
    fn power(&self, tx: &Tx, u: usize) -> (f64, f64) {
        match &tx.own {
            Some(o) => (o.0[u], o.1[u]),
            None => {
                let k = tx.src * self.world.len() + u;
                (self.link_dbm[k], self.link_mw[k])
            }
        }
    }

    fn push(&mut self, at: Ns, ev: Event) {
        self.seq += 1;
        self.queue.push(Reverse((at, self.seq, ev)));
    }

    fn run(mut self) -> Result<RunResult> {
        let period = 1.0 / self.sc.config().lambda;
        for v in 0..self.world.len() {
            if self.world.muted[v] {
                continue;
            }
            let phase = match &self.world.phases {
                Some(p) => p[v],
                None => self.rng.gen::<f64>() * period,
            };
            self.push(to_ns(phase), Event::Generate(v));
        }
        let period_ns = to_ns(period);
        while let Some(Reverse((t, _, ev))) = self.queue.pop() {
            if t > self.end {
                break;
            }
            self.now = t;
            match ev {
                Event::Generate(v) => {
                    if t + period_ns < self.end {
                        self.push(t + period_ns, Event::Generate(v));
                    }
                    self.generate(v);
                }
                Event::SenseOn(id) => self.sense_on(id),
                Event::BackoffExpire(v, token) => {
                    if let Mac::Backoff { token: cur, since: Some(_), .. } = self.mac[v] {
                        if cur == token {
                            self.start_tx(v);
                        }
                    }
                }
                Event::TxEnd(id) => self.tx_end(id),
            }
        }
        self.now = self.end;
        for v in 0..self.world.len() {
            if self.phys_busy[v] > 0 {
                self.close_busy(v);
            }
        }
        let window = (self.end - self.warmup) as f64;
        let vehicle_busy = (0..self.world.len())
            .filter(|&v| self.world.measured[v])
            .map(|v| self.busy_total[v] as f64 / window)
            .collect();
        Ok(RunResult {
            counts: self
                .slot_keys
                .iter()
                .zip(&self.counts)
                .filter(|(_, c)| c.attempts > 0)
                .map(|(k, c)| (*k, *c))
                .collect(),
            packets: self.packets,
            vehicle_busy,
            transmissions: self.transmissions,
            dropped: self.dropped,
        })
    }

    fn generate(&mut self, v: usize) {
        if self.mac[v] != Mac::Idle {
            self.dropped += 1;
            return;
        }
        if self.mac_busy[v] == 0 {
            self.start_tx(v);
        } else {
            let slots = self.rng.gen_range(0..self.params.cw_slots) as i64;
            self.next_token += 1;
            self.mac[v] = Mac::Backoff { slots, since: None, token: self.next_token };
        }
    }

    /// Channel at `v` went idle: resume the countdown.
    fn resume(&mut self, v: usize) {
        if let Mac::Backoff { slots, since: None, .. } = self.mac[v] {
            if slots <= 0 {
                self.start_tx(v);
                return;
            }
            self.next_token += 1;
            let token = self.next_token;
            self.mac[v] = Mac::Backoff { slots, since: Some(self.now), token };
            self.push(self.now + slots * self.slot, Event::BackoffExpire(v, token));
        }
    }

    /// Channel at `v` went busy: freeze the countdown, keeping whole slots.
    fn freeze(&mut self, v: usize) {
        if let Mac::Backoff { slots, since: Some(s), .. } = self.mac[v] {
            let left = slots - (self.now - s) / self.slot;
            if left <= 0 {
                self.start_tx(v);
            } else {
                self.next_token += 1;
                self.mac[v] = Mac::Backoff { slots: left, since: None, token: self.next_token };
            }
        }
    }

    fn record(&mut self, tx: &Tx, rx: usize, outcome: Outcome) {
        if !tx.tracked || !self.world.measured[rx] {
            return;
        }
        let n = self.world.len();
        self.counts[self.pair_slot[tx.src * n + rx] as usize].add(outcome);
        if self.params.record_packets {
            let d = (self.world.positions[tx.src] - self.world.positions[rx]).abs();
            self.packets.push(PacketRecord { tx: tx.src, rx, distance_m: d, outcome });
        }
    }

    fn open_busy(&mut self, v: usize) {
        self.busy_since[v] = self.now;
    }

    fn close_busy(&mut self, v: usize) {
        let a = self.busy_since[v].max(self.warmup);
        let b = self.now.min(self.end);
        if b > a {
            self.busy_total[v] += b - a;
        }
    }

    fn start_tx(&mut self, v: usize) {
        let n = self.world.len();
        let p_sen = self.sc.config().p_sen;
        self.mac[v] = Mac::Transmitting;
        self.transmissions += 1;
        let id = self.next_tx;
        self.next_tx += 1;

        let own = match (&self.normal, self.params.shadowing) {
            (Some(nd), ShadowingMode::PerPacket) => {
                let mut dbm = self.link_dbm[v * n..(v + 1) * n].to_vec();
                for (r, p) in dbm.iter_mut().enumerate() {
                    if r != v {
                        *p += nd.sample(&mut self.rng);
                    }
                }
                let lin = dbm.iter().map(|&p| mw(p)).collect();
                Some(Box::new((dbm, lin)))
            }
            _ => None,
        };
        let tracked = self.world.measured[v] && self.now >= self.warmup && self.now + self.airtime <= self.end;
        let mut tx = Tx { src: v, tracked, own, hearers: Vec::new() };

        // Half duplex: whatever v was decoding is lost.
        if let Some(dec) = self.decode[v].take() {
            self.lose(dec.tx, v);
        }

        for u in 0..n {
            if u == v {
                continue;
            }
            let (p, p_mw) = self.power(&tx, u);
            let sensed = p >= p_sen;
            if sensed {
                tx.hearers.push(u as u32);
                self.phys_busy[u] += 1;
                if self.phys_busy[u] == 1 {
                    self.open_busy(u);
                }
            }
            self.total_mw[u] += p_mw;
            self.active_at[u] += 1;

            if !sensed {
                self.record(&tx, u, Outcome::Sen);
                self.bump_interference(u);
                continue;
            }
            if self.mac[u] == Mac::Transmitting {
                self.record(&tx, u, Outcome::Rxb);
                continue;
            }
            match self.decode[u] {
                Some(dec) if self.now - dec.start < self.slot && p_mw > dec.signal_mw => {
                    // Same-slot arrival with more power captures the receiver.
                    self.lose(dec.tx, u);
                    self.begin_decode(u, id, p_mw);
                }
                Some(_) => {
                    self.record(&tx, u, Outcome::Rxb);
                    self.bump_interference(u);
                }
                None => self.begin_decode(u, id, p_mw),
            }
        }
        self.txs.insert(id, tx);
        self.push(self.now + self.slot, Event::SenseOn(id));
        self.push(self.now + self.airtime, Event::TxEnd(id));
    }

    fn begin_decode(&mut self, u: usize, id: u64, signal_mw: f64) {
        let interf = (self.total_mw[u] - signal_mw).max(0.0);
        self.decode[u] = Some(Decode { tx: id, start: self.now, signal_mw, max_interf_mw: interf });
    }

    fn bump_interference(&mut self, u: usize) {
        if let Some(dec) = self.decode[u].as_mut() {
            let interf = (self.total_mw[u] - dec.signal_mw).max(0.0);
            if interf > dec.max_interf_mw {
                dec.max_interf_mw = interf;
            }
        }
    }

    /// Receiver `u` dropped packet `id` for a competing event.
    fn lose(&mut self, id: u64, u: usize) {
        if let Some(tx) = self.txs.remove(&id) {
            self.record(&tx, u, Outcome::Rxb);
            self.txs.insert(id, tx);
        }
        if let Some(dec) = self.decode[u] {
            if dec.tx == id {
                self.decode[u] = None;
            }
        }
    }

    fn sense_on(&mut self, id: u64) {
        let Some(tx) = self.txs.get_mut(&id) else { return };
        let hearers = std::mem::take(&mut tx.hearers);
        for &u in &hearers {
            let u = u as usize;
            self.mac_busy[u] += 1;
            if self.mac_busy[u] == 1 {
                self.freeze(u);
            }
        }
        if let Some(tx) = self.txs.get_mut(&id) {
            tx.hearers = hearers;
        }
    }

    fn tx_end(&mut self, id: u64) {
        let Some(tx) = self.txs.remove(&id) else { return };
        let p_sen = self.sc.config().p_sen;
        let noise = self.sc.config().n0;
        let mut idle = Vec::new();
        for u in 0..self.world.len() {
            if u == tx.src {
                continue;
            }
            let (p, p_mw) = self.power(&tx, u);
            if p >= p_sen {
                self.phys_busy[u] -= 1;
                if self.phys_busy[u] == 0 {
                    self.close_busy(u);
                }
                // SenseOn has always fired: airtime exceeds one slot.
                self.mac_busy[u] -= 1;
                if self.mac_busy[u] == 0 {
                    idle.push(u);
                }
            }
            self.active_at[u] -= 1;
            if self.active_at[u] == 0 {
                self.total_mw[u] = 0.0;
            } else {
                self.total_mw[u] -= p_mw;
            }
            if let Some(dec) = self.decode[u] {
                if dec.tx == id {
                    self.decode[u] = None;
                    let snr = 10.0 * dec.signal_mw.log10() - noise;
                    let sinr = 10.0 * (dec.signal_mw / (self.noise_mw + dec.max_interf_mw)).log10();
                    let draw: f64 = self.rng.gen();
                    let outcome = if draw < self.sc.fer_at_snr(snr) {
                        Outcome::Pro
                    } else if draw < self.sc.fer_at_snr(sinr) {
                        Outcome::Col
                    } else {
                        Outcome::Ok
                    };
                    self.record(&tx, u, outcome);
                }
            }
        }
        self.mac[tx.src] = Mac::Idle;
        for u in idle {
            self.resume(u);
        }
    }
}

struct RunResult {
    counts: BTreeMap<i64, OutcomeCounts>,
    packets: Vec<PacketRecord>,
    vehicle_busy: Vec<f64>,
    transmissions: u64,
    dropped: u64,
}

/// Seed of replication `r`.
pub fn replication_seed(seed: u64, r: u32) -> u64 {
    seed.wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs `params.replications` independent replications on the lattice.
pub fn run_sim(sc: &Scenario, params: &SimParams, seed: u64) -> Result<SimReport> {
    let world = SimScenario::lattice(sc.config().beta, params);
    run_sim_on(sc, params, &world, seed)
}

pub fn run_sim_on(sc: &Scenario, params: &SimParams, world: &SimScenario, seed: u64) -> Result<SimReport> {
    params.validate(sc.config().lambda)?;
    world.validate()?;
    if sc.airtime() <= sc.config().slot_time {
        return Err(Error::Config("packet airtime must exceed the slot time".into()));
    }
    let runs = (0..params.replications)
        .into_par_iter()
        .map(|r| Engine::new(sc, params, world, replication_seed(seed, r))?.run())
        .collect::<Result<Vec<_>>>()?;

    let mut by_distance: BTreeMap<i64, OutcomeCounts> = BTreeMap::new();
    let mut packets = Vec::new();
    let mut vehicle_busy = Vec::new();
    let (mut transmissions, mut dropped) = (0, 0);
    for run in runs {
        for (k, c) in &run.counts {
            by_distance.entry(*k).or_default().merge(c);
        }
        packets.extend(run.packets);
        vehicle_busy.extend(run.vehicle_busy);
        transmissions += run.transmissions;
        dropped += run.dropped;
    }
    let bins = bin_counts(&by_distance, params.bin_m);
    let mut report = SimReport {
        seed,
        fingerprint: sc.fingerprint(),
        bin_m: params.bin_m,
        bins,
        by_distance,
        vehicle_busy,
        cbr_measured: 0.0,
        transmissions,
        dropped,
        packets,
    };
    report.cbr_measured = measure_cbr(&report);
    Ok(report)
}

fn bin_counts(by_distance: &BTreeMap<i64, OutcomeCounts>, bin_m: f64) -> Vec<SimBin> {
    let mut acc: BTreeMap<i64, (OutcomeCounts, f64)> = BTreeMap::new();
    for (&mm, c) in by_distance {
        let d = mm as f64 / 1000.0;
        let e = acc.entry((d / bin_m).floor() as i64).or_default();
        e.0.merge(c);
        e.1 += d * c.attempts as f64;
    }
    acc.into_iter()
        .map(|(b, (c, wsum))| SimBin {
            distance_bin_m: (b as f64 + 0.5) * bin_m,
            attempts: c.attempts,
            ok: c.ok,
            sen: c.sen,
            rxb: c.rxb,
            pro: c.pro,
            col: c.col,
            mean_distance_m: if c.attempts > 0 { wsum / c.attempts as f64 } else { (b as f64 + 0.5) * bin_m },
        })
        .collect()
}

impl SimReport {
    pub fn total(&self) -> OutcomeCounts {
        let mut t = OutcomeCounts::default();
        for c in self.by_distance.values() {
            t.merge(c);
        }
        t
    }

    pub fn to_csv_string(&self) -> Result<String> {
        table::write_table(
            &self.bins,
            &[
                ("cbr_measured", format!("{}", self.cbr_measured)),
                ("fingerprint", self.fingerprint.clone()),
                ("seed", self.seed.to_string()),
                ("bin_m", format!("{}", self.bin_m)),
            ],
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        table::write_file(path, &self.to_csv_string()?)
    }

    /// Reads the binned form back; per-distance and per-vehicle detail is
    /// not part of the file.
    pub fn from_csv_str(text: &str, origin: &str) -> Result<Self> {
        let (bins, meta): (Vec<SimBin>, _) = table::read_table(text, origin)?;
        let field = |k: &str| {
            meta.get(k).cloned().ok_or_else(|| Error::Csv {
                origin: origin.into(),
                message: format!("missing footer field {k}"),
            })
        };
        let num = |k: &str| -> Result<f64> {
            field(k)?.parse().map_err(|_| Error::Csv {
                origin: origin.into(),
                message: format!("bad footer field {k}"),
            })
        };
        for b in &bins {
            if b.ok + b.sen + b.rxb + b.pro + b.col != b.attempts {
                return Err(Error::Csv {
                    origin: origin.into(),
                    message: format!("bin {} outcome counts do not sum to attempts", b.distance_bin_m),
                });
            }
        }
        let cbr = num("cbr_measured")?;
        Ok(Self {
            seed: num("seed")? as u64,
            fingerprint: field("fingerprint")?,
            bin_m: meta.get("bin_m").and_then(|v| v.parse().ok()).unwrap_or(25.0),
            bins,
            by_distance: BTreeMap::new(),
            vehicle_busy: Vec::new(),
            cbr_measured: cbr,
            transmissions: 0,
            dropped: 0,
            packets: Vec::new(),
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv_str(&table::read_file(path)?, &path.display().to_string())
    }
}
