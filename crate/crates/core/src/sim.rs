//! Trajectories of the fractional linear birth-death process and the
//! fractional M/M/1 queue.
//!
//! Both processes are semi-Markov: in state `k` the holding time is
//! Mittag-Leffler with rate `q(k)`, after which the process jumps up with
//! probability `lambda / (lambda + mu)` and down otherwise.
//!
//! | process          | `q(k)`, `k >= 1`  | state 0                         |
//! |------------------|-------------------|---------------------------------|
//! | linear BD        | `(lambda + mu) k` | absorbing                        |
//! | M/M/1            | `lambda + mu`     | rate `lambda`, always a birth    |

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{ml_sojourn_unchecked, sample_inverse_subordinator, RngStream};

/// `(alpha, lambda, mu, i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub lambda: f64,
    pub mu: f64,
    pub initial_state: u64,
}

impl ModelParams {
    pub fn new(alpha: f64, lambda: f64, mu: f64, initial_state: u64) -> Result<Self> {
        let p = ModelParams { alpha, lambda, mu, initial_state };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(invalid(format!("lambda must be finite and > 0, got {}", self.lambda)));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(invalid(format!("mu must be finite and > 0, got {}", self.mu)));
        }
        Ok(())
    }

    /// Total jump intensity `theta = lambda + mu`.
    pub fn theta(&self) -> f64 {
        self.lambda + self.mu
    }

    pub fn birth_probability(&self) -> f64 {
        self.lambda / self.theta()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Birth,
    Death,
}

impl EventType {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventType::Birth => "birth",
            EventType::Death => "death",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "birth" | "b" | "B" => Some(EventType::Birth),
            "death" | "d" | "D" => Some(EventType::Death),
            _ => None,
        }
    }
}

/// One jump of a trajectory. `sojourn` is the generated holding time that
/// ended at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub sojourn: f64,
    pub event_type: EventType,
    pub state_after: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    MaxEvents,
    Extinction,
    Horizon,
    TargetState,
}

/// When to stop a simulation; the first satisfied condition wins.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_events: Option<usize>,
    pub time_horizon: Option<f64>,
    pub target_state: Option<u64>,
}

impl StopRule {
    pub fn max_events(n: usize) -> Self {
        StopRule { max_events: Some(n), ..Default::default() }
    }

    pub fn horizon(t: f64) -> Self {
        StopRule { time_horizon: Some(t), ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.max_events.is_none() && self.time_horizon.is_none() && self.target_state.is_none() {
            return Err(invalid("stop rule must bound events, time or target state"));
        }
        if let Some(t) = self.time_horizon {
            if !(t >= 0.0) {
                return Err(invalid(format!("time horizon must be >= 0, got {t}")));
            }
        }
        Ok(())
    }
}

/// A simulated (or reconstructed) trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub params: ModelParams,
    pub events: Vec<Event>,
    pub terminal_reason: TerminalReason,
}

impl PathSample {
    /// Builds a path from event times, deriving sojourns by differencing
    /// (the first measured from time 0).
    pub fn from_times(
        params: ModelParams,
        events: &[(f64, EventType, u64)],
        terminal_reason: TerminalReason,
    ) -> Result<Self> {
        let mut previous = 0.0;
        let mut out = Vec::with_capacity(events.len());
        for &(time, event_type, state_after) in events {
            if !(time > previous) {
                return Err(invalid(format!("event times must be strictly increasing ({time} after {previous})")));
            }
            out.push(Event { time, sojourn: time - previous, event_type, state_after });
            previous = time;
        }
        Ok(PathSample { params, events: out, terminal_reason })
    }

    pub fn final_state(&self) -> u64 {
        self.events.last().map_or(self.params.initial_state, |e| e.state_after)
    }

    /// State occupied at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> u64 {
        let idx = self.events.partition_point(|e| e.time <= t);
        if idx == 0 {
            self.params.initial_state
        } else {
            self.events[idx - 1].state_after
        }
    }

    /// Writes `event_index,event_time,event_type,state_after`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["event_index", "event_time", "event_type", "state_after"])?;
        for (i, e) in self.events.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                crate::harness::output::fmt_f64(e.time),
                e.event_type.as_str().to_string(),
                e.state_after.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    LinearBirthDeath,
    MM1,
}

/// Event-by-event generator shared by every simulator.
pub struct Walker<'a> {
    dynamics: Dynamics,
    params: ModelParams,
    state: u64,
    time: f64,
    stream: &'a mut RngStream,
}

impl<'a> Walker<'a> {
    pub fn new(dynamics: Dynamics, params: ModelParams, stream: &'a mut RngStream) -> Result<Self> {
        params.validate()?;
        Ok(Walker { dynamics, params, state: params.initial_state, time: 0.0, stream })
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Holding rate in the current state; zero means absorbed.
    fn rate(&self) -> f64 {
        match (self.dynamics, self.state) {
            (Dynamics::LinearBirthDeath, k) => self.params.theta() * k as f64,
            (Dynamics::MM1, 0) => self.params.lambda,
            (Dynamics::MM1, _) => self.params.theta(),
        }
    }

    /// Draws the next holding time and jump without committing it.
    fn propose(&mut self) -> Option<(f64, EventType)> {
        let rate = self.rate();
        if rate == 0.0 {
            return None;
        }
        let sojourn = ml_sojourn_unchecked(self.stream, self.params.alpha, rate);
        let event_type = if self.state == 0 || self.stream.uniform() < self.params.birth_probability() {
            EventType::Birth
        } else {
            EventType::Death
        };
        Some((sojourn, event_type))
    }

    fn commit(&mut self, sojourn: f64, event_type: EventType) -> Event {
        self.time += sojourn;
        self.state = match event_type {
            EventType::Birth => self.state + 1,
            EventType::Death => self.state - 1,
        };
        Event { time: self.time, sojourn, event_type, state_after: self.state }
    }

    /// Next event, or `None` once absorbed at 0 (linear process only).
    pub fn step(&mut self) -> Option<Event> {
        let (sojourn, event_type) = self.propose()?;
        Some(self.commit(sojourn, event_type))
    }

    /// Runs until `stop` fires or the process is absorbed.
    pub fn run(&mut self, stop: &StopRule) -> (Vec<Event>, TerminalReason) {
        let mut events = Vec::with_capacity(stop.max_events.unwrap_or(0).min(1 << 20));
        loop {
            if stop.max_events.is_some_and(|n| events.len() >= n) {
                return (events, TerminalReason::MaxEvents);
            }
            let Some((sojourn, event_type)) = self.propose() else {
                return (events, TerminalReason::Extinction);
            };
            if stop.time_horizon.is_some_and(|h| self.time + sojourn > h) {
                return (events, TerminalReason::Horizon);
            }
            let event = self.commit(sojourn, event_type);
            events.push(event);
            if stop.target_state == Some(event.state_after) {
                return (events, TerminalReason::TargetState);
            }
        }
    }
}

fn simulate(dynamics: Dynamics, params: ModelParams, stream: &mut RngStream, stop: &StopRule) -> Result<PathSample> {
    stop.validate()?;
    let mut walker = Walker::new(dynamics, params, stream)?;
    let (events, terminal_reason) = walker.run(stop);
    Ok(PathSample { params, events, terminal_reason })
}

/// Fractional linear birth-death process: holding rate `(lambda + mu) k`,
/// absorbed at 0.
pub fn simulate_linear_bd(params: ModelParams, stream: &mut RngStream, stop: &StopRule) -> Result<PathSample> {
    simulate(Dynamics::LinearBirthDeath, params, stream, stop)
}

/// Fractional M/M/1 queue: holding rate `lambda + mu` above 0, `lambda` at 0
/// where the next event is always an arrival.
pub fn simulate_mm1(params: ModelParams, stream: &mut RngStream, stop: &StopRule) -> Result<PathSample> {
    simulate(Dynamics::MM1, params, stream, stop)
}

/// Queue length at time `t` drawn as `N^1(E^alpha(t))`: the classical queue
/// run to an independent inverse-stable clock.
pub fn simulate_mm1_subordinated(params: ModelParams, stream: &mut RngStream, t: f64) -> Result<u64> {
    params.validate()?;
    let clock = sample_inverse_subordinator(stream, params.alpha, t)?;
    let classical = ModelParams { alpha: 1.0, ..params };
    let mut walker = Walker::new(Dynamics::MM1, classical, stream)?;
    walker.run(&StopRule::horizon(clock));
    Ok(walker.state())
}

/// One observed holding period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SojournRecord {
    pub state_before: u64,
    pub duration: f64,
    pub event_type: EventType,
}

/// Holding times with their departure states and jump directions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SojournData {
    pub records: Vec<SojournRecord>,
    pub n_births: usize,
    pub n_deaths: usize,
}

impl SojournData {
    pub fn from_records(records: Vec<SojournRecord>) -> Result<Self> {
        if let Some(bad) = records.iter().find(|r| !(r.duration > 0.0) || !r.duration.is_finite()) {
            return Err(invalid(format!("sojourn durations must be finite and > 0, got {}", bad.duration)));
        }
        let n_births = records.iter().filter(|r| r.event_type == EventType::Birth).count();
        let n_deaths = records.len() - n_births;
        Ok(SojournData { records, n_births, n_deaths })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Drops sojourns that departed state 0.
    pub fn without_zero_state(&self) -> SojournData {
        let kept: Vec<_> = self.records.iter().copied().filter(|r| r.state_before != 0).collect();
        let n_births = kept.iter().filter(|r| r.event_type == EventType::Birth).count();
        let n_deaths = kept.len() - n_births;
        SojournData { records: kept, n_births, n_deaths }
    }

    pub fn extend(&mut self, other: SojournData) {
        self.n_births += other.n_births;
        self.n_deaths += other.n_deaths;
        self.records.extend(other.records);
    }

    /// Reads `state_before,duration,event_type` rows.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let mut records = Vec::new();
        for (idx, row) in reader.records().enumerate() {
            let line = idx + 2;
            let row = row?;
            let field = |i: usize| row.get(i).map(str::trim).unwrap_or("");
            let parse_err = |message: String| Error::Parse { line, message };
            let state_before = field(0).parse::<u64>().map_err(|e| parse_err(format!("state_before: {e}")))?;
            let duration = field(1).parse::<f64>().map_err(|e| parse_err(format!("duration: {e}")))?;
            let event_type =
                EventType::parse(field(2)).ok_or_else(|| parse_err(format!("unknown event type {:?}", field(2))))?;
            records.push(SojournRecord { state_before, duration, event_type });
        }
        Self::from_records(records)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["state_before", "duration", "event_type"])?;
        for r in &self.records {
            w.write_record([
                r.state_before.to_string(),
                crate::harness::output::fmt_f64(r.duration),
                r.event_type.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Holding times of a path, each tagged with the state it was spent in.
pub fn extract_sojourns(path: &PathSample) -> SojournData {
    let mut state = path.params.initial_state;
    let mut records = Vec::with_capacity(path.events.len());
    let mut n_births = 0;
    for e in &path.events {
        records.push(SojournRecord { state_before: state, duration: e.sojourn, event_type: e.event_type });
        if e.event_type == EventType::Birth {
            n_births += 1;
        }
        state = e.state_after;
    }
    let n_deaths = records.len() - n_births;
    SojournData { records, n_births, n_deaths }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64, lambda: f64, mu: f64, i: u64) -> ModelParams {
        ModelParams::new(alpha, lambda, mu, i).unwrap()
    }

    #[test]
    fn empty_path_from_zero() {
        let mut s = RngStream::new(1, 0);
        let path = simulate_linear_bd(params(0.8, 1.0, 1.0, 0), &mut s, &StopRule::max_events(10)).unwrap();
        assert!(path.events.is_empty());
        assert_eq!(path.terminal_reason, TerminalReason::Extinction);
    }

    #[test]
    fn unbounded_stop_rule_rejected() {
        let mut s = RngStream::new(1, 0);
        assert!(simulate_mm1(params(0.8, 1.0, 1.0, 0), &mut s, &StopRule::default()).is_err());
    }

    #[test]
    fn mm1_never_negative_and_births_from_zero() {
        let mut s = RngStream::new(3, 0);
        let path = simulate_mm1(params(0.7, 0.5, 2.0, 0), &mut s, &StopRule::max_events(5000)).unwrap();
        let mut state = 0;
        for e in &path.events {
            if state == 0 {
                assert_eq!(e.event_type, EventType::Birth);
            }
            assert_eq!(e.state_after as i64 - state as i64, if e.event_type == EventType::Birth { 1 } else { -1 });
            state = e.state_after;
        }
    }

    #[test]
    fn horizon_and_target() {
        let mut s = RngStream::new(5, 0);
        let path = simulate_mm1(params(1.0, 1.0, 1.0, 3), &mut s, &StopRule::horizon(10.0)).unwrap();
        assert_eq!(path.terminal_reason, TerminalReason::Horizon);
        assert!(path.events.iter().all(|e| e.time <= 10.0));
        let stop = StopRule { target_state: Some(0), max_events: Some(100_000), ..Default::default() };
        let path = simulate_mm1(params(0.9, 1.0, 3.0, 3), &mut s, &stop).unwrap();
        assert_eq!(path.terminal_reason, TerminalReason::TargetState);
        assert_eq!(path.final_state(), 0);
    }

    #[test]
    fn extraction_by_differencing() {
        let p = params(0.5, 1.0, 1.0, 1);
        let path = PathSample::from_times(
            p,
            &[(0.5, EventType::Birth, 2), (1.7, EventType::Death, 1)],
            TerminalReason::MaxEvents,
        )
        .unwrap();
        let data = extract_sojourns(&path);
        assert_eq!(data.len(), 2);
        assert!((data.records[0].duration - 0.5).abs() < 1e-15);
        assert!((data.records[1].duration - 1.2).abs() < 1e-15);
        assert_eq!(data.records[0].state_before, 1);
        assert_eq!(data.records[1].state_before, 2);
        assert_eq!((data.n_births, data.n_deaths), (1, 1));
        assert!(PathSample::from_times(
            p,
            &[(1.0, EventType::Birth, 2), (1.0, EventType::Death, 1)],
            TerminalReason::MaxEvents
        )
        .is_err());
    }

    #[test]
    fn state_at_lookup() {
        let p = params(0.5, 1.0, 1.0, 2);
        let path = PathSample::from_times(
            p,
            &[(1.0, EventType::Birth, 3), (2.0, EventType::Death, 2), (3.0, EventType::Death, 1)],
            TerminalReason::MaxEvents,
        )
        .unwrap();
        assert_eq!(path.state_at(0.5), 2);
        assert_eq!(path.state_at(1.0), 3);
        assert_eq!(path.state_at(2.5), 2);
        assert_eq!(path.state_at(9.0), 1);
    }
}
