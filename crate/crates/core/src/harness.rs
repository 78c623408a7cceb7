//! Closed-loop co-simulation of plant, observer and controller.
//!
//! Per sample `t`: measure `y(t) = C x(t) + noise`, build the parameter from
//! the current estimate `x̂e(t)`, the previously applied input and `r(t)`,
//! get `u(t)` from the controller, advance the plant with `u(t)` plus the
//! active input disturbance, then advance the estimate with `(u(t), y(t))`.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::AugmentedModel;
use crate::condense::ParamLayout;
use crate::error::ModelError;
use crate::motor::{plant_step, LtiModel};
use crate::observer::{observer_step, ObserverGain, ObserverState};
use crate::pi::{pi_step, PiConfig, PiState};
use crate::runtime::{ControlLaw, SearchError};
use crate::wire::{
    decode_response, encode_request, encode_response, frame_time, ProtocolError, RequestDecoder, RequestFrame,
    REQUEST_LEN, RESPONSE_LEN,
};

/// Smallest sample time for which a request/response pair fits at the
/// default baud rate with margin.
pub const PROTOCOL_MIN_TS: f64 = 5e-3;
pub const DEFAULT_BAUD: f64 = 115_200.0;

/// Input bounds are checked exactly; this only decides the saturated flag.
const SATURATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceEvent {
    pub t_start: f64,
    pub t_end: f64,
    /// Volts added to the plant input while active.
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseEvent {
    pub t_start: f64,
    pub t_end: f64,
    /// Half-width of the uniform noise added to the measurement.
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub duration: f64,
    pub ts: f64,
    /// `(t, value)` steps; the reference holds the last value with `t <= now`,
    /// zero before the first.
    pub reference: Vec<(f64, f64)>,
    pub disturbances: Vec<DisturbanceEvent>,
    pub noise: Vec<NoiseEvent>,
    pub protocol_in_loop: bool,
}

impl Scenario {
    pub fn new(duration: f64, ts: f64) -> Self {
        Scenario {
            duration,
            ts,
            reference: Vec::new(),
            disturbances: Vec::new(),
            noise: Vec::new(),
            protocol_in_loop: false,
        }
    }

    /// 0 → 20 → 35 → 10 rad/s at 0, 1, 2, 3 s over 4 s.
    pub fn default_tracking(ts: f64) -> Self {
        let mut s = Scenario::new(4.0, ts);
        s.reference = vec![(0.0, 20.0), (1.0, 35.0), (2.0, 10.0), (3.0, 20.0)];
        s
    }

    /// +10 V over [0.5, 0.7) s, +20 V from 1.4 s, 8-unit measurement noise
    /// over [2.3, 2.7) s, constant 140 rad/s reference.
    pub fn default_disturbance(ts: f64) -> Self {
        let mut s = Scenario::new(3.0, ts);
        s.reference = vec![(0.0, 140.0)];
        s.disturbances = vec![
            DisturbanceEvent {
                t_start: 0.5,
                t_end: 0.7,
                amplitude: 10.0,
            },
            DisturbanceEvent {
                t_start: 1.4,
                t_end: 3.0,
                amplitude: 20.0,
            },
        ];
        s.noise = vec![NoiseEvent {
            t_start: 2.3,
            t_end: 2.7,
            amplitude: 8.0,
            seed: 7,
        }];
        s
    }

    pub fn samples(&self) -> usize {
        libm::round(self.duration / self.ts) as usize
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.ts
    }

    fn slack(&self) -> f64 {
        1e-9 * self.ts
    }

    pub fn reference_at(&self, t: f64) -> f64 {
        let mut value = 0.0;
        for &(at, v) in &self.reference {
            if at <= t + self.slack() {
                value = v;
            }
        }
        value
    }

    fn active(&self, t: f64, t0: f64, t1: f64) -> bool {
        t + self.slack() >= t0 && t + self.slack() < t1
    }

    pub fn disturbance_at(&self, t: f64) -> f64 {
        self.disturbances
            .iter()
            .filter(|e| self.active(t, e.t_start, e.t_end))
            .map(|e| e.amplitude)
            .sum()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return Err(HarnessError::Config("sample time must be positive"));
        }
        if !(self.duration >= self.ts && self.duration.is_finite()) {
            return Err(HarnessError::Config("duration must cover at least one sample"));
        }
        let within = |t: f64| t >= 0.0 && t <= self.duration + self.slack();
        if self.reference.iter().any(|&(t, v)| !within(t) || !v.is_finite()) {
            return Err(HarnessError::Config("reference step outside the scenario"));
        }
        if self.reference.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(HarnessError::Config("reference steps out of order"));
        }
        for e in &self.disturbances {
            if !(within(e.t_start) && within(e.t_end) && e.t_start < e.t_end && e.amplitude.is_finite()) {
                return Err(HarnessError::Config("disturbance event outside the scenario"));
            }
        }
        for e in &self.noise {
            if !(within(e.t_start) && within(e.t_end) && e.t_start < e.t_end && e.amplitude >= 0.0) {
                return Err(HarnessError::Config("noise event outside the scenario"));
            }
        }
        if self.protocol_in_loop && self.ts < PROTOCOL_MIN_TS - self.slack() {
            return Err(HarnessError::Config(
                "protocol-in-loop needs a sample time of at least 5 ms (request plus response take 3.8 ms at 115200 baud)",
            ));
        }
        Ok(())
    }

    /// Reference change times within the run, with the step size. A nonzero
    /// initial reference counts as a change from zero at t = 0.
    pub fn reference_changes(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        let mut prev = 0.0;
        for &(t, v) in &self.reference {
            if v != prev {
                out.push((t, prev, v));
                prev = v;
            }
        }
        out
    }
}

/// Noise generator state per event, one generator each so events are
/// independent of one another.
struct NoiseSource {
    events: Vec<(NoiseEvent, ChaCha8Rng)>,
}

impl NoiseSource {
    fn new(events: &[NoiseEvent]) -> Self {
        NoiseSource {
            events: events.iter().map(|e| (*e, ChaCha8Rng::seed_from_u64(e.seed))).collect(),
        }
    }

    fn sample(&mut self, scenario: &Scenario, t: f64) -> f64 {
        let mut total = 0.0;
        for (e, rng) in self.events.iter_mut() {
            if scenario.active(t, e.t_start, e.t_end) && e.amplitude > 0.0 {
                total += rng.gen_range(-e.amplitude..=e.amplitude);
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HarnessError {
    Config(&'static str),
    Model(ModelError),
    Search { t: f64, theta: Vec<f64>, source: SearchError },
    Protocol { t: f64, source: ProtocolError },
    Transport { t: f64, message: String },
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(msg) => write!(f, "configuration error: {msg}"),
            HarnessError::Model(e) => write!(f, "model error: {e}"),
            HarnessError::Search { t, theta, source } => {
                write!(f, "at t = {t:.4} s, parameter {theta:?}: {source}")
            }
            HarnessError::Protocol { t, source } => write!(f, "at t = {t:.4} s: {source}"),
            HarnessError::Transport { t, message } => write!(f, "at t = {t:.4} s: transport failed: {message}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for HarnessError {}

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        HarnessError::Model(e)
    }
}

/// Byte channel to a remote controller with strict request/response
/// alternation.
pub trait FrameTransport {
    fn exchange(&mut self, request: &[u8; REQUEST_LEN]) -> Result<[u8; RESPONSE_LEN], String>;

    /// Region used for the last answer, when the far side reports it.
    fn last_region(&self) -> Option<usize> {
        None
    }
}

/// Parameter vector recovered from a request frame. Only the layout with
/// three estimated states (position, speed, disturbance), one input and one
/// output fits the frame.
pub fn theta_from_request(frame: &RequestFrame) -> [f64; 5] {
    [frame.x1, frame.x3, frame.x4, frame.u_prev, frame.r]
}

pub fn request_from_loop(xe_hat: &[f64], y: f64, u_prev: f64, r: f64) -> RequestFrame {
    RequestFrame {
        x1: xe_hat[0],
        x2: y,
        x3: xe_hat[1],
        x4: xe_hat[2],
        u_prev,
        r,
    }
}

/// Controller side of the link: assembles frames from a byte stream and
/// answers each valid one.
pub struct LawResponder<'a> {
    law: &'a dyn ControlLaw,
    decoder: RequestDecoder,
    last_region: Option<usize>,
    pub frame_errors: usize,
    pub search_errors: usize,
    pub answered: usize,
}

impl<'a> LawResponder<'a> {
    pub fn new(law: &'a dyn ControlLaw) -> Self {
        LawResponder {
            law,
            decoder: RequestDecoder::new(),
            last_region: None,
            frame_errors: 0,
            search_errors: 0,
            answered: 0,
        }
    }

    /// Feed received bytes; appends any responses to `out`.
    pub fn feed(&mut self, bytes: &[u8], out: &mut Vec<u8>) {
        for &b in bytes {
            match self.decoder.push(b) {
                None => {}
                Some(Err(e)) => {
                    log::warn!("dropping malformed request: {e}");
                    self.frame_errors += 1;
                }
                Some(Ok(frame)) => match self.answer(&frame) {
                    Ok(resp) => {
                        out.extend_from_slice(&resp);
                        self.answered += 1;
                    }
                    Err(e) => {
                        log::warn!("no answer for request: {e}");
                        self.search_errors += 1;
                    }
                },
            }
        }
    }

    fn answer(&mut self, frame: &RequestFrame) -> Result<[u8; RESPONSE_LEN], String> {
        let theta = theta_from_request(frame);
        let mut u = [0.0];
        let region = self
            .law
            .evaluate(&theta, &mut u)
            .map_err(|e| alloc::format!("{e}"))?;
        self.last_region = Some(region);
        encode_response(u[0]).map_err(|e| alloc::format!("{e}"))
    }
}

impl FrameTransport for LawResponder<'_> {
    fn exchange(&mut self, request: &[u8; REQUEST_LEN]) -> Result<[u8; RESPONSE_LEN], String> {
        let mut out = Vec::with_capacity(RESPONSE_LEN);
        self.feed(request, &mut out);
        out.as_slice()
            .try_into()
            .map_err(|_| alloc::format!("expected one {RESPONSE_LEN}-byte response, got {} bytes", out.len()))
    }

    fn last_region(&self) -> Option<usize> {
        self.last_region
    }
}

pub enum Controller<'a> {
    /// Explicit law evaluated in-process.
    Explicit(&'a dyn ControlLaw),
    /// Explicit law behind the frame protocol.
    Remote(Box<dyn FrameTransport + 'a>),
    Pi(PiConfig),
}

impl Controller<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Controller::Explicit(_) => "empc",
            Controller::Remote(_) => "empc-protocol",
            Controller::Pi(_) => "pi",
        }
    }
}

/// Plant, estimator and actuator limits for a run.
#[derive(Debug, Clone)]
pub struct LoopSetup<'a> {
    pub plant: &'a LtiModel,
    pub aug: &'a AugmentedModel,
    pub observer: &'a ObserverGain,
    pub layout: ParamLayout,
    pub u_min: f64,
    pub u_max: f64,
    pub x0: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub r: f64,
    pub y: f64,
    pub u: f64,
    pub x: Vec<f64>,
    pub xe_hat: Vec<f64>,
    pub region: Option<usize>,
    pub saturated: bool,
    /// Parameter the controller acted on, before any quantization.
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub controller: String,
    pub ts: f64,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    /// Samples with `u` outside `[u_min, u_max]`, no tolerance.
    pub fn input_violations(&self, u_min: f64, u_max: f64) -> usize {
        self.rows.iter().filter(|r| !(r.u >= u_min && r.u <= u_max)).count()
    }
}

/// With `protocol_in_loop` set, an in-process explicit law is reached
/// through an in-memory frame link so quantization matches the wire.
pub fn run_closed_loop(
    setup: &LoopSetup<'_>,
    scenario: &Scenario,
    controller: &mut Controller<'_>,
) -> Result<Trace, HarnessError> {
    if scenario.protocol_in_loop {
        if let Controller::Explicit(law) = controller {
            let mut link = Controller::Remote(Box::new(LawResponder::new(*law)));
            return run_inner(setup, scenario, &mut link);
        }
    }
    run_inner(setup, scenario, controller)
}

fn run_inner(
    setup: &LoopSetup<'_>,
    scenario: &Scenario,
    controller: &mut Controller<'_>,
) -> Result<Trace, HarnessError> {
    scenario.validate()?;
    let plant = setup.plant;
    if (plant.ts - scenario.ts).abs() > 1e-12 * plant.ts.max(1.0) {
        return Err(HarnessError::Config("scenario sample time differs from the design sample time"));
    }
    if plant.inputs() != 1 || plant.outputs() != 1 {
        return Err(HarnessError::Config("harness drives single-input single-output plants"));
    }
    if plant.d.amax() != 0.0 {
        return Err(HarnessError::Config("plant has direct feedthrough"));
    }
    if setup.x0.len() != plant.states() {
        return Err(HarnessError::Config("initial state length differs from the plant"));
    }
    let remote = matches!(controller, Controller::Remote(_));
    if (remote || scenario.protocol_in_loop) && !matches!(controller, Controller::Pi(_)) {
        if scenario.ts < PROTOCOL_MIN_TS - scenario.slack() {
            return Err(HarnessError::Config(
                "protocol-in-loop needs a sample time of at least 5 ms (request plus response take 3.8 ms at 115200 baud)",
            ));
        }
        if setup.layout.states != 3 || setup.layout.inputs != 1 || setup.layout.outputs != 1 {
            return Err(HarnessError::Config("frame carries exactly three estimated states"));
        }
    }
    let wire_time = frame_time(DEFAULT_BAUD, REQUEST_LEN + RESPONSE_LEN);
    if remote {
        log::debug!("wire time per sample {:.3} ms of {:.3} ms", wire_time * 1e3, scenario.ts * 1e3);
    }

    let n = scenario.samples();
    let mut noise = NoiseSource::new(&scenario.noise);
    let mut x = setup.x0.clone();
    let mut est = ObserverState::zeros(setup.aug);
    let mut pi_state = PiState::default();
    let mut u_prev = 0.0;
    let mut theta = vec![0.0; setup.layout.dim()];
    let mut u_buf = [0.0];
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let t = scenario.time(k);
        let r = scenario.reference_at(t);
        let y = (&plant.c * &x)[0] + noise.sample(scenario, t);

        let xe = est.xe_hat.as_slice();
        theta[..xe.len()].copy_from_slice(xe);
        theta[xe.len()] = u_prev;
        theta[xe.len() + 1] = r;

        let (u, region, saturated) = match controller {
            Controller::Explicit(law) => {
                let region = law
                    .evaluate(&theta, &mut u_buf)
                    .map_err(|source| HarnessError::Search {
                        t,
                        theta: theta.clone(),
                        source,
                    })?;
                (u_buf[0], Some(region), at_bound(u_buf[0], setup))
            }
            Controller::Remote(link) => {
                let request = encode_request(&request_from_loop(xe, y, u_prev, r))
                    .map_err(|source| HarnessError::Protocol { t, source })?;
                let response = link
                    .exchange(&request)
                    .map_err(|message| HarnessError::Transport { t, message })?;
                let u = decode_response(&response).map_err(|source| HarnessError::Protocol { t, source })?;
                (u, link.last_region(), at_bound(u, setup))
            }
            Controller::Pi(cfg) => {
                let out = pi_step(cfg, &mut pi_state, r - y);
                (out.u, None, out.saturated)
            }
        };

        rows.push(TraceRow {
            t,
            r,
            y,
            u,
            x: x.as_slice().to_vec(),
            xe_hat: xe.to_vec(),
            region,
            saturated,
            theta: theta.clone(),
        });

        let u_vec = DVector::from_element(1, u);
        let d_vec = DVector::from_element(1, scenario.disturbance_at(t));
        let (x_next, _) = plant_step(plant, &x, &u_vec, &d_vec, &DVector::zeros(1))?;
        est = observer_step(setup.observer, setup.aug, &est, &u_vec, &DVector::from_element(1, y))?;
        x = x_next;
        u_prev = u;
    }
    Ok(Trace {
        controller: String::from(controller.name()),
        ts: scenario.ts,
        rows,
    })
}

fn at_bound(u: f64, setup: &LoopSetup<'_>) -> bool {
    (u - setup.u_min).abs() <= SATURATION_TOL || (u - setup.u_max).abs() <= SATURATION_TOL
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub ise: f64,
    pub iae: f64,
    /// Longest settling time over all reference changes; `None` if any
    /// change did not settle before the next one (or the end).
    pub settling_time: Option<f64>,
    pub settling_times: Vec<Option<f64>>,
    /// Largest overshoot over all changes, percent of the step.
    pub overshoot_pct: f64,
    /// `y - r` at the last sample.
    pub steady_state_error: f64,
}

/// 2% band of the step size.
pub const SETTLING_BAND: f64 = 0.02;

pub fn compute_metrics(trace: &Trace) -> Option<Metrics> {
    let rows = &trace.rows;
    let last = rows.last()?;
    let ts = trace.ts;
    let ise = rows.iter().map(|r| (r.y - r.r) * (r.y - r.r)).sum::<f64>() * ts;
    let iae = rows.iter().map(|r| (r.y - r.r).abs()).sum::<f64>() * ts;

    // Segment boundaries at reference changes; the first sample counts as a
    // change from zero when its reference is nonzero.
    let mut starts = Vec::new();
    let mut prev = 0.0;
    for (i, row) in rows.iter().enumerate() {
        if row.r != prev {
            starts.push((i, prev, row.r));
            prev = row.r;
        }
    }
    let mut settling_times = Vec::with_capacity(starts.len());
    let mut overshoot_pct = 0.0f64;
    for (s, &(i0, from, to)) in starts.iter().enumerate() {
        let i1 = starts.get(s + 1).map_or(rows.len(), |next| next.0);
        let step = to - from;
        let band = SETTLING_BAND * step.abs();
        let seg = &rows[i0..i1];
        let last_out = seg.iter().rposition(|r| (r.y - to).abs() > band);
        let settled = match last_out {
            None => Some(0.0),
            Some(j) if j + 1 < seg.len() => Some((j + 1) as f64 * ts),
            Some(_) => None,
        };
        settling_times.push(settled);
        let peak = seg
            .iter()
            .map(|r| (r.y - to) * step.signum())
            .fold(0.0f64, f64::max);
        overshoot_pct = overshoot_pct.max(100.0 * peak / step.abs());
    }
    let settling_time = if settling_times.iter().any(Option::is_none) {
        None
    } else {
        Some(settling_times.iter().flatten().fold(0.0f64, |a, b| a.max(*b)))
    };
    Some(Metrics {
        ise,
        iae,
        settling_time,
        settling_times,
        overshoot_pct,
        steady_state_error: last.y - last.r,
    })
}

/// First time after `t_event` from which `|y - r| <= tol` holds up to
/// `t_until` (exclusive), or `None` if it never does.
pub fn settles_after(trace: &Trace, t_event: f64, t_until: f64, tol: f64) -> Option<f64> {
    let slack = 1e-9 * trace.ts;
    let window: Vec<&TraceRow> = trace
        .rows
        .iter()
        .filter(|r| r.t + slack >= t_event && r.t + slack < t_until)
        .collect();
    let last_out = window.iter().rposition(|r| (r.y - r.r).abs() > tol);
    match last_out {
        None => window.first().map(|r| r.t),
        Some(j) if j + 1 < window.len() => Some(window[j + 1].t),
        Some(_) => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub first: (Trace, Metrics),
    pub second: (Trace, Metrics),
}

pub fn compare_controllers(
    setup: &LoopSetup<'_>,
    scenario: &Scenario,
    first: &mut Controller<'_>,
    second: &mut Controller<'_>,
) -> Result<Comparison, HarnessError> {
    let run = |c: &mut Controller<'_>| -> Result<(Trace, Metrics), HarnessError> {
        let trace = run_closed_loop(setup, scenario, c)?;
        let metrics = compute_metrics(&trace).ok_or(HarnessError::Config("empty trace"))?;
        Ok((trace, metrics))
    };
    Ok(Comparison {
        first: run(first)?,
        second: run(second)?,
    })
}
