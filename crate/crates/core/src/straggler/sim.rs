use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use super::{HedgeAction, WorkloadParams};
use crate::error::{Error, Result};
use crate::stats::percentile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub servers: usize,
    pub window_ms: f64,
    /// Service time multiplier of a slowed-down copy.
    pub slowdown_factor: f64,
    pub slowdown_prob: f64,
    /// Windows of arrival/processing history in the observation.
    pub history_windows: usize,
    pub record_events: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            servers: 10,
            window_ms: 500.0,
            slowdown_factor: 10.0,
            slowdown_prob: 0.1,
            history_windows: 4,
            record_events: false,
        }
    }
}

impl SimConfig {
    /// `2n` queue features, three per history window, load and safeguard flag.
    pub fn observation_width(&self) -> usize {
        2 * self.servers + 3 * self.history_windows + 2
    }
}

/// Nominal size times `factor` with probability `prob`, else nominal.
pub fn draw_service_time<R: Rng + ?Sized>(nominal: f64, factor: f64, prob: f64, rng: &mut R) -> f64 {
    if prob > 0.0 && rng.random::<f64>() < prob {
        nominal * factor
    } else {
        nominal
    }
}

/// Shortest queue, lowest index on ties, optionally skipping one server.
pub fn shortest_queue(lengths: &[usize], exclude: Option<usize>) -> Option<usize> {
    lengths
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .min_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum EventKind {
    Arrival(u64),
    Hedge(u64),
    Finish(usize),
}

#[derive(Clone, Copy, Debug)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

#[derive(Clone, Copy, Debug)]
struct Copy {
    job: u64,
    service_ms: f64,
}

#[derive(Clone, Debug)]
struct Job {
    arrival: f64,
    size: f64,
    timeout: f64,
    done: bool,
    hedged: bool,
    /// Copies still queued or in service.
    outstanding: u8,
    servers: [usize; 2],
}

#[derive(Clone, Debug, Default)]
struct Server {
    waiting: VecDeque<Copy>,
    in_service: Option<Copy>,
    last_change: f64,
    queue_area: f64,
    busy_area: f64,
    busy_total: f64,
}

impl Server {
    fn len(&self) -> usize {
        self.waiting.len() + usize::from(self.in_service.is_some())
    }

    fn account(&mut self, now: f64) {
        let dt = now - self.last_change;
        if dt > 0.0 {
            self.queue_area += self.len() as f64 * dt;
            if self.in_service.is_some() {
                self.busy_area += dt;
                self.busy_total += dt;
            }
        }
        self.last_change = now;
    }
}

/// Per-window history entry used in observations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub arrival_rate: f64,
    pub mean_processing_ms: f64,
    pub max_processing_ms: f64,
}

/// What happened during one action window.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowOutcome {
    /// Negated p95 latency of jobs completed in the window (carried over from
    /// the previous window when nothing completed).
    pub reward: f64,
    pub latencies: Vec<f64>,
    pub arrivals: usize,
    /// Mean nominal size of the jobs that arrived (0 without arrivals).
    pub arrival_mean_size_ms: f64,
    pub hedges: usize,
    pub summary: WindowSummary,
    /// Largest queue length seen at any instant of the window.
    pub peak_queue: usize,
    /// Queue lengths at the end of the window.
    pub queue_lengths: Vec<usize>,
    pub load: f64,
}

impl WindowOutcome {
    pub fn max_queue(&self) -> usize {
        self.queue_lengths.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord {
    pub t_ms: f64,
    pub event: &'static str,
    pub job_id: u64,
    pub server: Option<usize>,
    pub detail: String,
}

/// Request proxy in front of `n` FIFO servers with join-shortest-queue
/// dispatch and at most one hedge per job.
pub struct StragglerSim {
    config: SimConfig,
    arrivals_rng: ChaCha8Rng,
    service_rng: ChaCha8Rng,
    now: f64,
    seq: u64,
    next_job: u64,
    events: BinaryHeap<Event>,
    servers: Vec<Server>,
    jobs: HashMap<u64, Job>,
    workload: WorkloadParams,
    history: VecDeque<WindowSummary>,
    prev_reward: f64,
    last_outcome: Option<WindowOutcome>,
    log: Vec<EventRecord>,
    // per-window accumulators
    w_latencies: Vec<f64>,
    w_processing: Vec<f64>,
    w_hedges: usize,
    w_peak: usize,
    completed: u64,
    arrived: u64,
}

impl StragglerSim {
    pub fn new(config: SimConfig, workload: WorkloadParams, seed: u64) -> Result<Self> {
        if config.servers == 0 {
            return Err(Error::config("at least one server is required"));
        }
        workload.validate()?;
        let servers = vec![Server::default(); config.servers];
        let history = VecDeque::from(vec![WindowSummary::default(); config.history_windows]);
        Ok(Self {
            arrivals_rng: ChaCha8Rng::seed_from_u64(seed),
            service_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5e71_1ce0),
            config,
            now: 0.0,
            seq: 0,
            next_job: 0,
            events: BinaryHeap::new(),
            servers,
            jobs: HashMap::new(),
            workload,
            history,
            prev_reward: 0.0,
            last_outcome: None,
            log: Vec::new(),
            w_latencies: Vec::new(),
            w_processing: Vec::new(),
            w_hedges: 0,
            w_peak: 0,
            completed: 0,
            arrived: 0,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now_ms(&self) -> f64 {
        self.now
    }

    pub fn workload(&self) -> WorkloadParams {
        self.workload
    }

    pub fn set_workload(&mut self, workload: WorkloadParams) -> Result<()> {
        workload.validate()?;
        self.workload = workload;
        Ok(())
    }

    pub fn queue_lengths(&self) -> Vec<usize> {
        self.servers.iter().map(Server::len).collect()
    }

    pub fn arrived(&self) -> u64 {
        self.arrived
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    pub fn event_log(&self) -> &[EventRecord] {
        &self.log
    }

    pub fn write_event_log<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_ms", "event", "job_id", "server", "detail"])?;
        for r in &self.log {
            let server = r.server.map(|s| s.to_string()).unwrap_or_default();
            w.write_record([format!("{:.6}", r.t_ms), r.event.to_string(), r.job_id.to_string(), server, r.detail.clone()])?;
        }
        w.flush()?;
        Ok(())
    }

    fn record(&mut self, event: &'static str, job_id: u64, server: Option<usize>, detail: impl FnOnce() -> String) {
        if self.config.record_events {
            self.log.push(EventRecord { t_ms: self.now, event, job_id, server, detail: detail() });
        }
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.events.push(Event { time, seq: self.seq, kind });
    }

    /// Injects a job arriving at `at_ms` with the given nominal size.
    pub fn inject_job(&mut self, at_ms: f64, size_ms: f64, timeout_ms: f64) -> u64 {
        let id = self.next_job;
        self.next_job += 1;
        self.jobs.insert(
            id,
            Job { arrival: at_ms, size: size_ms, timeout: timeout_ms, done: false, hedged: false, outstanding: 0, servers: [usize::MAX; 2] },
        );
        self.push(at_ms, EventKind::Arrival(id));
        id
    }

    fn generate_arrivals(&mut self, start: f64, end: f64, timeout: f64) -> Result<(usize, f64)> {
        let WorkloadParams { rate_per_s, mean_size_ms, size_sigma } = self.workload;
        let gap = Exp::new(rate_per_s / 1000.0).map_err(|e| Error::config(e.to_string()))?;
        let mu = mean_size_ms.ln() - 0.5 * size_sigma * size_sigma;
        let sizes = LogNormal::new(mu, size_sigma).map_err(|e| Error::config(e.to_string()))?;
        let mut t = start;
        let (mut count, mut total) = (0, 0.0);
        loop {
            t += gap.sample(&mut self.arrivals_rng);
            if t >= end {
                break;
            }
            let size = sizes.sample(&mut self.arrivals_rng);
            self.inject_job(t, size, timeout);
            count += 1;
            total += size;
        }
        Ok((count, if count > 0 { total / count as f64 } else { 0.0 }))
    }

    fn enqueue(&mut self, server: usize, copy: Copy) {
        let now = self.now;
        let s = &mut self.servers[server];
        s.account(now);
        if s.in_service.is_none() {
            s.in_service = Some(copy);
            let finish = now + copy.service_ms;
            self.push(finish, EventKind::Finish(server));
        } else {
            s.waiting.push_back(copy);
        }
        let len = self.servers[server].len();
        self.w_peak = self.w_peak.max(len);
    }

    fn new_copy(&mut self, job: u64) -> Copy {
        let size = self.jobs[&job].size;
        let service_ms = draw_service_time(size, self.config.slowdown_factor, self.config.slowdown_prob, &mut self.service_rng);
        Copy { job, service_ms }
    }

    fn handle(&mut self, ev: Event) {
        self.now = ev.time;
        match ev.kind {
            EventKind::Arrival(id) => {
                self.arrived += 1;
                let lengths = self.queue_lengths();
                let server = shortest_queue(&lengths, None).expect("at least one server");
                let copy = self.new_copy(id);
                let job = self.jobs.get_mut(&id).unwrap();
                job.outstanding = 1;
                job.servers[0] = server;
                let timeout = job.timeout;
                self.record("arrival", id, Some(server), || format!("service={:.6}", copy.service_ms));
                self.enqueue(server, copy);
                if timeout.is_finite() && self.config.servers > 1 {
                    self.push(ev.time + timeout, EventKind::Hedge(id));
                }
            }
            EventKind::Hedge(id) => {
                let Some(job) = self.jobs.get(&id) else { return };
                if job.done || job.hedged {
                    return;
                }
                let original = job.servers[0];
                let lengths = self.queue_lengths();
                let server = shortest_queue(&lengths, Some(original)).expect("another server");
                let copy = self.new_copy(id);
                let job = self.jobs.get_mut(&id).unwrap();
                job.hedged = true;
                job.outstanding += 1;
                job.servers[1] = server;
                self.w_hedges += 1;
                self.record("hedge", id, Some(server), || format!("service={:.6}", copy.service_ms));
                self.enqueue(server, copy);
            }
            EventKind::Finish(server) => {
                let now = self.now;
                let s = &mut self.servers[server];
                s.account(now);
                let copy = s.in_service.take().expect("finish event for idle server");
                if let Some(next) = s.waiting.pop_front() {
                    s.in_service = Some(next);
                    self.push(now + next.service_ms, EventKind::Finish(server));
                }
                self.w_processing.push(copy.service_ms);
                self.complete_copy(copy.job, server);
            }
        }
    }

    fn complete_copy(&mut self, id: u64, server: usize) {
        let now = self.now;
        let job = self.jobs.get_mut(&id).unwrap();
        job.outstanding -= 1;
        if job.done {
            self.record("finish_duplicate", id, Some(server), String::new);
        } else {
            job.done = true;
            let latency = now - job.arrival;
            let sibling = if !job.hedged {
                None
            } else if job.servers[0] == server {
                Some(job.servers[1])
            } else {
                Some(job.servers[0])
            };
            self.w_latencies.push(latency);
            self.completed += 1;
            self.record("complete", id, Some(server), || format!("latency={latency:.6}"));
            // a sibling still waiting in a queue is withdrawn; one in service runs on
            if let Some(other) = sibling {
                let s = &mut self.servers[other];
                if let Some(pos) = s.waiting.iter().position(|c| c.job == id) {
                    s.account(now);
                    s.waiting.remove(pos);
                    self.jobs.get_mut(&id).unwrap().outstanding -= 1;
                    self.record("cancel", id, Some(other), String::new);
                }
            }
        }
        if self.jobs[&id].outstanding == 0 {
            self.jobs.remove(&id);
        }
    }

    fn run_until(&mut self, end: f64) {
        while let Some(ev) = self.events.peek() {
            if ev.time >= end {
                break;
            }
            let ev = self.events.pop().unwrap();
            debug_assert!(ev.time >= self.now);
            self.handle(ev);
        }
        self.now = end;
    }

    /// Advances one window; every job arriving in it uses `action`'s timeout.
    pub fn step(&mut self, action: HedgeAction) -> Result<WindowOutcome> {
        let start = self.now;
        let end = start + self.config.window_ms;
        for s in &mut self.servers {
            s.queue_area = 0.0;
            s.busy_area = 0.0;
            s.last_change = start;
        }
        self.w_latencies.clear();
        self.w_processing.clear();
        self.w_hedges = 0;
        self.w_peak = self.servers.iter().map(Server::len).max().unwrap_or(0);

        let (arrivals, arrival_mean_size_ms) = self.generate_arrivals(start, end, action.timeout_ms())?;
        self.run_until(end);
        for s in &mut self.servers {
            s.account(end);
        }

        let reward = match percentile(&self.w_latencies, 95.0) {
            Some(p95) => -p95,
            None => self.prev_reward,
        };
        self.prev_reward = reward;

        let window = self.config.window_ms;
        let summary = WindowSummary {
            arrival_rate: arrivals as f64 * 1000.0 / window,
            mean_processing_ms: crate::stats::mean(&self.w_processing).unwrap_or(0.0),
            max_processing_ms: self.w_processing.iter().copied().fold(0.0, f64::max),
        };
        if self.config.history_windows > 0 {
            self.history.pop_back();
            self.history.push_front(summary);
        }
        let load = self.servers.iter().map(|s| s.busy_area / window).sum::<f64>() / self.servers.len() as f64;
        let outcome = WindowOutcome {
            reward,
            latencies: std::mem::take(&mut self.w_latencies),
            arrivals,
            arrival_mean_size_ms,
            hedges: self.w_hedges,
            summary,
            peak_queue: self.w_peak,
            queue_lengths: self.queue_lengths(),
            load,
        };
        self.last_outcome = Some(outcome.clone());
        Ok(outcome)
    }

    /// Observation after the latest window:
    /// instantaneous queues (n), window-mean queues (n), per history window
    /// (mean processing, max processing, arrival rate), load, safeguard flag.
    /// Magnitudes are log-compressed so unstable queues stay representable.
    pub fn observe(&self, safeguard_active: bool) -> Vec<f64> {
        let window = self.config.window_ms;
        let mut obs = Vec::with_capacity(self.config.observation_width());
        obs.extend(self.servers.iter().map(|s| (s.len() as f64).ln_1p()));
        obs.extend(self.servers.iter().map(|s| (s.queue_area / window).ln_1p()));
        for h in &self.history {
            obs.push(h.mean_processing_ms.ln_1p());
            obs.push(h.max_processing_ms.ln_1p());
            obs.push((h.arrival_rate / 100.0).ln_1p());
        }
        let load = self.last_outcome.as_ref().map_or(0.0, |o| o.load);
        obs.push(load);
        obs.push(if safeguard_active { 1.0 } else { 0.0 });
        obs
    }

    /// Runs without new arrivals until every queued copy has finished.
    pub fn drain(&mut self) {
        while let Some(ev) = self.events.pop() {
            self.handle(ev);
        }
    }

    /// Cumulative busy time of each server since the start (ms).
    pub fn busy_time(&self) -> Vec<f64> {
        self.servers.iter().map(|s| s.busy_total).collect()
    }
}
