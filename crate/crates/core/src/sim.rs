//! Slotted Monte Carlo simulator of the protocol.
//!
//! Throughput runs evolve the unbounded queue at S with Bernoulli arrivals and a
//! fresh user request every slot. Delay runs follow one outstanding request at
//! a time through the retry states (D, S, data center) until it is received.
//! Link outcomes are Bernoulli draws against the success table entry that
//! matches the set of active transmitters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{HitProfile, RequestLocation, ZipfRequestSampler};
use crate::error::{Error, Result};
use crate::phy::SuccessProbTable;
use crate::throughput::{busy_probability, service_rate, AccessProbs, MuMode};

/// How the user's requests are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestMode {
    /// Independent flags: external miss with `q_u`, file at D with `p_hd`, at S with `p_hs`.
    /// These are the literal products the analytic formulas use.
    #[default]
    Factorized,
    /// External miss with `q_u`, then an exclusive location with `p_hd / q_u`, `p_hs / q_u`.
    FactorizedConditional,
    /// Exact Zipf ranks located by the placement.
    ZipfExact,
}

/// Which service-rate reading the protocol realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMuMode {
    /// S -> D under data center interference also needs an extra Bernoulli(`q_s`) pass.
    ExtraGate,
    #[default]
    Protocol,
}

impl SimMuMode {
    /// The analytic mode this simulation mode realizes.
    pub fn analytic(self) -> MuMode {
        match self {
            SimMuMode::ExtraGate => MuMode::Verbatim,
            SimMuMode::Protocol => MuMode::Corrected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    #[default]
    Throughput,
    Delay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub slots: u64,
    pub seed: u64,
    pub request_mode: RequestMode,
    pub mu_mode: SimMuMode,
    pub measure: Measure,
    pub warmup_slots: u64,
    /// Completed requests to collect in delay runs.
    pub requests: u64,
    /// A request still pending after this many slots aborts the delay run.
    pub delay_cap: u64,
    /// Batches used for the batch-means standard errors.
    pub batches: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            slots: 1_000_000,
            seed: 0,
            request_mode: RequestMode::default(),
            mu_mode: SimMuMode::default(),
            measure: Measure::default(),
            warmup_slots: 10_000,
            requests: 100_000,
            delay_cap: 1_000_000,
            batches: 50,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slots <= self.warmup_slots {
            return Err(Error::domain(format!(
                "slots ({}) must exceed warmup_slots ({})",
                self.slots, self.warmup_slots
            )));
        }
        if self.batches < 2 {
            return Err(Error::domain("at least two batches are needed for a standard error"));
        }
        if self.slots - self.warmup_slots < self.batches {
            return Err(Error::domain("fewer measured slots than batches"));
        }
        if self.measure == Measure::Delay && (self.requests < self.batches || self.delay_cap == 0) {
            return Err(Error::domain("delay runs need requests >= batches and a positive delay_cap"));
        }
        Ok(())
    }
}

/// Everything a simulation needs about one operating point.
#[derive(Debug, Clone)]
pub struct SimScenario {
    pub probs: AccessProbs<f64>,
    pub hits: HitProfile<f64>,
    pub table: SuccessProbTable<f64>,
    /// Required by [`RequestMode::ZipfExact`].
    pub sampler: Option<ZipfRequestSampler>,
}

impl SimScenario {
    pub fn new(probs: AccessProbs<f64>, hits: HitProfile<f64>, table: SuccessProbTable<f64>) -> Self {
        SimScenario {
            probs,
            hits,
            table,
            sampler: None,
        }
    }

    pub fn with_sampler(mut self, sampler: ZipfRequestSampler) -> Self {
        self.sampler = Some(sampler);
        self
    }

    pub fn validate(&self, config: &SimConfig) -> Result<()> {
        self.probs.validate()?;
        self.hits.validate()?;
        self.table.validate()?;
        if config.request_mode == RequestMode::ZipfExact && self.sampler.is_none() {
            return Err(Error::domain("zipf-exact requests need a catalog sampler"));
        }
        if config.measure == Measure::Delay && !(self.hits.q_u > 0.0) {
            return Err(Error::domain("delay runs need external requests (q_u > 0)"));
        }
        Ok(())
    }

    /// Analytic `mu` under `mode`.
    pub fn mu(&self, mode: MuMode) -> f64 {
        service_rate(&self.probs, &self.hits, &self.table, mode)
    }

    /// `P(S => D)` used by delay runs: `q_s` times the stationary busy probability.
    pub fn transmit_prob(&self, mode: MuMode) -> f64 {
        self.probs.q_s * busy_probability(self.probs.lambda, self.mu(mode))
    }
}

/// A user request for external content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Request {
    pub external: bool,
    pub at_d: bool,
    pub at_s: bool,
}

/// Where an outstanding delay-tagged request stands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    /// First slot after the request was issued.
    Fresh,
    /// File at D; retrying D (S may help while it is silent).
    TryD,
    /// File at S, not at D.
    TryS,
    /// File only at the data center.
    TryDc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Outstanding {
    pub request: Request,
    pub stage: Stage,
    /// Slots spent so far, including the current one.
    pub age: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SimState {
    pub queue_len: u64,
    pub outstanding: Option<Outstanding>,
    pub clock: u64,
}

/// What happened in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SlotEvents {
    pub arrival: bool,
    /// The queue was non-empty at the start of the slot.
    pub busy: bool,
    pub s_transmitted: bool,
    pub departure: bool,
    pub external_request: bool,
    pub user_served: bool,
    /// Delay of the request completed in this slot.
    pub completed_delay: Option<u64>,
    pub timed_out: bool,
}

/// Mean with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: u64,
}

impl Estimate {
    /// `|mean - target| <= k * std_err`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_err
    }

    /// Distance to `target` in standard errors (0 when both coincide).
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = (self.mean - target).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.std_err
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub measure: Measure,
    pub slots_measured: u64,
    pub t_s_hat: Option<Estimate>,
    pub t_u_hat: Option<Estimate>,
    /// Departures per busy slot.
    pub service_rate_hat: Option<Estimate>,
    pub busy_fraction: f64,
    pub mean_queue_len: f64,
    /// Least-squares slope of the queue length, packets per slot.
    pub queue_drift: f64,
    pub unstable_flag: bool,
    pub arrivals: u64,
    pub departures: u64,
    pub final_queue_len: u64,
    pub mean_delay_hat: Option<Estimate>,
    pub completed_requests: u64,
    pub timed_out_requests: u64,
    pub diagnostics: Vec<String>,
}

fn draw_request<R: Rng>(scenario: &SimScenario, mode: RequestMode, rng: &mut R) -> Request {
    let h = &scenario.hits;
    match mode {
        RequestMode::Factorized => Request {
            external: rng.random_bool(h.q_u),
            at_d: rng.random_bool(h.p_hd),
            at_s: rng.random_bool(h.p_hs),
        },
        RequestMode::FactorizedConditional => {
            if !rng.random_bool(h.q_u) {
                return Request { external: false, at_d: false, at_s: false };
            }
            let u = rng.random::<f64>() * h.q_u;
            Request {
                external: true,
                at_d: u < h.p_hd,
                at_s: u >= h.p_hd && u < h.p_hd + h.p_hs,
            }
        }
        RequestMode::ZipfExact => {
            let sampler = scenario.sampler.as_ref().expect("validated: sampler present");
            match crate::cache::sample_request(sampler, rng) {
                RequestLocation::Local => Request { external: false, at_d: false, at_s: false },
                RequestLocation::AtD => Request { external: true, at_d: true, at_s: false },
                RequestLocation::AtS => Request { external: true, at_d: false, at_s: true },
                RequestLocation::DcOnly => Request { external: true, at_d: false, at_s: false },
            }
        }
    }
}

fn draw_external<R: Rng>(scenario: &SimScenario, mode: RequestMode, rng: &mut R) -> Request {
    loop {
        let r = draw_request(scenario, mode, rng);
        if r.external {
            return r;
        }
    }
}

/// Advances the system by one slot.
pub fn step<R: Rng>(state: &mut SimState, scenario: &SimScenario, config: &SimConfig, rng: &mut R) -> SlotEvents {
    state.clock += 1;
    match config.measure {
        Measure::Throughput => throughput_slot(state, scenario, config, rng),
        Measure::Delay => delay_slot(state, scenario, config, rng),
    }
}

fn throughput_slot<R: Rng>(state: &mut SimState, scn: &SimScenario, config: &SimConfig, rng: &mut R) -> SlotEvents {
    let p = &scn.probs;
    let t = &scn.table;
    let mut ev = SlotEvents {
        arrival: rng.random_bool(p.lambda),
        busy: state.queue_len > 0,
        ..SlotEvents::default()
    };
    ev.s_transmitted = ev.busy && rng.random_bool(p.q_s);
    let req = draw_request(scn, config.request_mode, rng);
    ev.external_request = req.external;

    if ev.s_transmitted {
        if !req.external {
            ev.departure = rng.random_bool(t.p_sd);
        } else if req.at_d && rng.random_bool(p.q_d) {
            ev.user_served = rng.random_bool(t.p_du_given_s);
            ev.departure = rng.random_bool(t.p_sd_given_d);
        } else if rng.random_bool(p.alpha) {
            ev.user_served = rng.random_bool(t.p_dcu_given_s);
            let gate = match config.mu_mode {
                SimMuMode::ExtraGate => rng.random_bool(p.q_s),
                SimMuMode::Protocol => true,
            };
            ev.departure = gate && rng.random_bool(t.p_sd_given_dc);
        } else {
            ev.departure = rng.random_bool(t.p_sd);
        }
    } else if req.external {
        ev.user_served = if req.at_d && rng.random_bool(p.q_d) {
            rng.random_bool(t.p_du)
        } else if req.at_s && rng.random_bool(p.q_c) {
            rng.random_bool(t.p_su)
        } else if rng.random_bool(p.alpha) {
            rng.random_bool(t.p_dcu)
        } else {
            false
        };
    }

    if ev.departure {
        state.queue_len -= 1;
    }
    if ev.arrival {
        state.queue_len += 1;
    }
    ev
}

fn dc_attempt<R: Rng>(scn: &SimScenario, s_busy: bool, rng: &mut R) -> bool {
    let p = if s_busy { scn.table.p_dcu_given_s } else { scn.table.p_dcu };
    rng.random_bool(scn.probs.alpha) && rng.random_bool(p)
}

fn delay_slot<R: Rng>(state: &mut SimState, scn: &SimScenario, config: &SimConfig, rng: &mut R) -> SlotEvents {
    let mut out = match state.outstanding {
        Some(o) => o,
        None => Outstanding {
            request: draw_external(scn, config.request_mode, rng),
            stage: Stage::Fresh,
            age: 0,
        },
    };
    out.age += 1;
    let p = &scn.probs;
    let t = &scn.table;
    let s_busy = rng.random_bool(scn.transmit_prob(config.mu_mode.analytic()));

    let stage = match out.stage {
        Stage::Fresh if out.request.at_d => Stage::TryD,
        Stage::Fresh if out.request.at_s => Stage::TryS,
        Stage::Fresh => Stage::TryDc,
        s => s,
    };
    let fresh = out.stage == Stage::Fresh;
    let done = match stage {
        Stage::TryD => {
            if rng.random_bool(p.q_d) {
                rng.random_bool(if s_busy { t.p_du_given_s } else { t.p_du })
            } else if s_busy {
                dc_attempt(scn, true, rng)
            } else {
                let s_hit = match config.request_mode {
                    RequestMode::Factorized => rng.random_bool(scn.hits.p_hs),
                    _ => out.request.at_s,
                };
                if s_hit {
                    rng.random_bool(p.q_c) && rng.random_bool(t.p_su)
                } else {
                    dc_attempt(scn, false, rng)
                }
            }
        }
        // Only the first slot competes with S's own transmissions; once S owes
        // U a retry it stays silent toward D.
        Stage::TryS if fresh && s_busy => dc_attempt(scn, true, rng),
        Stage::TryS => {
            if rng.random_bool(p.q_c) {
                rng.random_bool(t.p_su)
            } else {
                dc_attempt(scn, false, rng)
            }
        }
        Stage::TryDc => dc_attempt(scn, s_busy, rng),
        Stage::Fresh => unreachable!(),
    };

    let mut ev = SlotEvents {
        s_transmitted: s_busy,
        external_request: fresh,
        user_served: done,
        ..SlotEvents::default()
    };
    if done {
        ev.completed_delay = Some(out.age);
        state.outstanding = None;
    } else if out.age >= config.delay_cap {
        ev.timed_out = true;
        state.outstanding = None;
    } else {
        out.stage = stage;
        state.outstanding = Some(out);
    }
    ev
}

/// Equal-count batches over a stream of observations.
struct Batches {
    size: u64,
    count: usize,
    sums: Vec<f64>,
    lens: Vec<u64>,
}

impl Batches {
    fn new(total: u64, count: u64) -> Self {
        Batches {
            size: (total / count).max(1),
            count: count as usize,
            sums: vec![0.0],
            lens: vec![0],
        }
    }

    fn push(&mut self, x: f64) {
        let last = self.sums.len() - 1;
        if self.lens[last] >= self.size && self.sums.len() < self.count {
            self.sums.push(0.0);
            self.lens.push(0);
        }
        let last = self.sums.len() - 1;
        self.sums[last] += x;
        self.lens[last] += 1;
    }

    fn means(&self) -> Vec<f64> {
        self.sums
            .iter()
            .zip(&self.lens)
            .filter(|(_, &n)| n > 0)
            .map(|(s, &n)| s / n as f64)
            .collect()
    }

    fn estimate(&self) -> Estimate {
        let samples: u64 = self.lens.iter().sum();
        let mean = self.sums.iter().sum::<f64>() / samples as f64;
        let means = self.means();
        let b = means.len() as f64;
        let var = if means.len() > 1 {
            means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1.0)
        } else {
            f64::NAN
        };
        Estimate {
            mean,
            std_err: (var / b).sqrt(),
            samples,
        }
    }
}

/// Least-squares slope of the batch means against their mid-slot positions.
fn drift_per_slot(means: &[f64], batch_len: u64) -> f64 {
    let n = means.len() as f64;
    if means.len() < 2 {
        return 0.0;
    }
    let x_bar = (n - 1.0) / 2.0;
    let y_bar = means.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in means.iter().enumerate() {
        let dx = i as f64 - x_bar;
        sxy += dx * (y - y_bar);
        sxx += dx * dx;
    }
    sxy / sxx / batch_len as f64
}

fn empty_stats(measure: Measure) -> SimStats {
    SimStats {
        measure,
        slots_measured: 0,
        t_s_hat: None,
        t_u_hat: None,
        service_rate_hat: None,
        busy_fraction: 0.0,
        mean_queue_len: 0.0,
        queue_drift: 0.0,
        unstable_flag: false,
        arrivals: 0,
        departures: 0,
        final_queue_len: 0,
        mean_delay_hat: None,
        completed_requests: 0,
        timed_out_requests: 0,
        diagnostics: Vec::new(),
    }
}

pub fn run_throughput(scenario: &SimScenario, config: &SimConfig) -> Result<SimStats> {
    if config.measure != Measure::Throughput {
        return Err(Error::domain("run_throughput needs measure = throughput"));
    }
    config.validate()?;
    scenario.validate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = SimState::default();
    let mut stats = empty_stats(Measure::Throughput);

    let measured = config.slots - config.warmup_slots;
    let mut ts = Batches::new(measured, config.batches);
    let mut tu = Batches::new(measured, config.batches);
    let mut queue = Batches::new(measured, config.batches);
    let (mut busy_slots, mut busy_departures) = (0u64, 0u64);

    for slot in 0..config.slots {
        let start_len = state.queue_len;
        let ev = step(&mut state, scenario, config, &mut rng);
        stats.arrivals += ev.arrival as u64;
        stats.departures += ev.departure as u64;
        if slot < config.warmup_slots {
            continue;
        }
        ts.push(ev.departure as u64 as f64);
        tu.push(ev.user_served as u64 as f64);
        queue.push(start_len as f64);
        if ev.busy {
            busy_slots += 1;
            busy_departures += ev.departure as u64;
        }
    }

    stats.slots_measured = measured;
    stats.final_queue_len = state.queue_len;
    stats.t_s_hat = Some(ts.estimate());
    stats.t_u_hat = Some(tu.estimate());
    stats.busy_fraction = busy_slots as f64 / measured as f64;
    if busy_slots > 0 {
        let rate = busy_departures as f64 / busy_slots as f64;
        stats.service_rate_hat = Some(Estimate {
            mean: rate,
            std_err: (rate * (1.0 - rate) / busy_slots as f64).sqrt(),
            samples: busy_slots,
        });
    }
    let q = queue.estimate();
    stats.mean_queue_len = q.mean;
    stats.queue_drift = drift_per_slot(&queue.means(), queue.size);
    stats.unstable_flag = stats.queue_drift * measured as f64 > 2.0 * (measured as f64).sqrt();
    if stats.unstable_flag {
        stats
            .diagnostics
            .push(format!("queue grows by {:.4} packets/slot", stats.queue_drift));
    }
    Ok(stats)
}

pub fn run_delay(scenario: &SimScenario, config: &SimConfig) -> Result<SimStats> {
    if config.measure != Measure::Delay {
        return Err(Error::domain("run_delay needs measure = delay"));
    }
    config.validate()?;
    scenario.validate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = SimState::default();
    let mut stats = empty_stats(Measure::Delay);
    let mut delays = Batches::new(config.requests, config.batches);

    while stats.completed_requests < config.requests {
        let ev = step(&mut state, scenario, config, &mut rng);
        if let Some(d) = ev.completed_delay {
            delays.push(d as f64);
            stats.completed_requests += 1;
        }
        if ev.timed_out {
            stats.timed_out_requests += 1;
            stats.diagnostics.push(format!(
                "request not served within {} slots; the analytic delay is probably infinite",
                config.delay_cap
            ));
            break;
        }
    }
    stats.slots_measured = state.clock;
    if stats.completed_requests > 0 {
        stats.mean_delay_hat = Some(delays.estimate());
    }
    Ok(stats)
}

/// Runs whichever measurement `config` asks for.
pub fn run(scenario: &SimScenario, config: &SimConfig) -> Result<SimStats> {
    match config.measure {
        Measure::Throughput => run_throughput(scenario, config),
        Measure::Delay => run_delay(scenario, config),
    }
}

/// Empirical service rate against both analytic readings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MuDiscrepancy {
    pub empirical: Estimate,
    pub verbatim: f64,
    pub corrected: f64,
    pub matches_verbatim: bool,
    pub matches_corrected: bool,
}

impl MuDiscrepancy {
    pub fn verdict(&self) -> &'static str {
        match (self.matches_verbatim, self.matches_corrected) {
            (true, true) => "both readings match (they coincide here)",
            (true, false) => "the verbatim reading matches",
            (false, true) => "the corrected reading matches",
            (false, false) => "neither reading matches",
        }
    }
}

/// Compares the per-busy-slot departure rate with both analytic `mu` values at 3 standard errors.
pub fn mu_discrepancy(stats: &SimStats, scenario: &SimScenario) -> Option<MuDiscrepancy> {
    let empirical = stats.service_rate_hat?;
    let verbatim = scenario.mu(MuMode::Verbatim);
    let corrected = scenario.mu(MuMode::Corrected);
    Some(MuDiscrepancy {
        empirical,
        verbatim,
        corrected,
        matches_verbatim: empirical.within(verbatim, 3.0),
        matches_corrected: empirical.within(corrected, 3.0),
    })
}
