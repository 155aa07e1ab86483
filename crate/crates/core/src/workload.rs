//! Workload generation: synthetic text payloads and the three plan types
//! (batch peak load, backoff responsiveness probe, timeout probe).

use std::collections::HashSet;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::protocol::{ProtocolError, RequestEnvelope, SLEEP_FIELD};

/// Default cap on a single synthesized payload.
pub const DEFAULT_PAYLOAD_BUDGET: usize = 64 * 1024 * 1024;

/// Word counts of the size ladder used for HTTP size measurements.
pub const WORD_LADDER: [usize; 6] = [10, 100, 1_000, 10_000, 100_000, 1_000_000];

const MAX_WORD_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("payload of {words} words may need {needed} bytes, over the {budget} byte budget")]
    CapacityError {
        words: usize,
        needed: usize,
        budget: usize,
    },
    #[error("invalid workload spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Seeded generator of space-separated lowercase words.
#[derive(Debug, Clone, Copy)]
pub struct WordSynthesizer {
    budget_bytes: usize,
}

impl Default for WordSynthesizer {
    fn default() -> Self {
        Self {
            budget_bytes: DEFAULT_PAYLOAD_BUDGET,
        }
    }
}

impl WordSynthesizer {
    pub fn with_budget(budget_bytes: usize) -> Self {
        Self { budget_bytes }
    }

    /// `n` words of 1..=8 letters from `a..=z`, joined by single spaces.
    pub fn synthesize(&self, n: usize, seed: u64) -> Result<String, WorkloadError> {
        let needed = n
            .checked_mul(MAX_WORD_LEN + 1)
            .map(|b| b.saturating_sub(1))
            .unwrap_or(usize::MAX);
        if needed > self.budget_bytes {
            return Err(WorkloadError::CapacityError {
                words: n,
                needed,
                budget: self.budget_bytes,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = String::with_capacity(needed);
        for i in 0..n {
            if i > 0 {
                out.push(' ');
            }
            let len = rng.random_range(1..=MAX_WORD_LEN);
            for _ in 0..len {
                out.push(char::from(rng.random_range(b'a'..=b'z')));
            }
        }
        Ok(out)
    }
}

pub fn synthesize_words(n: usize, seed: u64) -> Result<String, WorkloadError> {
    WordSynthesizer::default().synthesize(n, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dispatch {
    /// One invocation at a time.
    Synchronous,
    /// Up to `max_in_flight` invocations of a batch run concurrently.
    Asynchronous { max_in_flight: usize },
}

impl Dispatch {
    pub fn max_in_flight(&self) -> usize {
        match *self {
            Dispatch::Synchronous => 1,
            Dispatch::Asynchronous { max_in_flight } => max_in_flight,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec {
    pub total_requests: usize,
    pub batch_size: usize,
    pub dispatch: Dispatch,
    /// Word count per request, cycled over the invocations. A single entry
    /// gives every request the same size.
    pub words_per_request: Vec<usize>,
    pub seed: u64,
}

impl BatchSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.total_requests == 0 || self.batch_size == 0 {
            return Err(WorkloadError::InvalidSpec(
                "total_requests and batch_size must be positive".into(),
            ));
        }
        if self.batch_size > self.total_requests {
            return Err(WorkloadError::InvalidSpec(format!(
                "batch_size {} exceeds total_requests {}",
                self.batch_size, self.total_requests
            )));
        }
        if self.dispatch.max_in_flight() == 0 {
            return Err(WorkloadError::InvalidSpec("max_in_flight must be at least 1".into()));
        }
        if self.words_per_request.is_empty() {
            return Err(WorkloadError::InvalidSpec("no word count given".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackoffSpec {
    pub initial_wait_ms: u64,
    pub multiplier: f64,
    pub steps: usize,
    pub words_per_request: usize,
    pub seed: u64,
}

impl Default for BackoffSpec {
    fn default() -> Self {
        Self {
            initial_wait_ms: 100,
            multiplier: 2.0,
            steps: 8,
            words_per_request: 10,
            seed: 0,
        }
    }
}

impl BackoffSpec {
    /// Waits between consecutive invocations, `floor(initial * multiplier^i)`.
    pub fn gaps(&self) -> Vec<u64> {
        (0..self.steps)
            .map(|i| (self.initial_wait_ms as f64 * self.multiplier.powi(i as i32)).floor() as u64)
            .collect()
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.initial_wait_ms == 0 || self.steps == 0 {
            return Err(WorkloadError::InvalidSpec(
                "initial wait and steps must be positive".into(),
            ));
        }
        if !(self.multiplier.is_finite() && self.multiplier > 1.0) {
            return Err(WorkloadError::InvalidSpec(format!(
                "multiplier {} must be a finite value above 1",
                self.multiplier
            )));
        }
        let gaps = self.gaps();
        if gaps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(WorkloadError::InvalidSpec(format!(
                "gaps {gaps:?} are not strictly increasing at whole-millisecond resolution"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeoutLevel {
    Gateway,
    Function,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeoutSpec {
    pub requested_sleep_ms: u64,
    pub expected_limit_ms: u64,
    pub level_under_test: TimeoutLevel,
}

impl TimeoutSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.requested_sleep_ms == 0 {
            return Err(WorkloadError::InvalidSpec("requested sleep must be positive".into()));
        }
        Ok(())
    }

    /// A timeout requires strictly exceeding the limit.
    pub fn expected_outcome(&self) -> ExpectedOutcome {
        if self.requested_sleep_ms > self.expected_limit_ms {
            ExpectedOutcome::Timeout
        } else {
            ExpectedOutcome::Success
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectedOutcome {
    Success,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeoutExpectation {
    pub level: TimeoutLevel,
    pub outcome: ExpectedOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedInvocation {
    pub fire_offset_ms: u64,
    pub batch: usize,
    pub words: usize,
    pub envelope: RequestEnvelope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadPlan {
    pub proxy_uri: String,
    pub dispatch: Dispatch,
    pub invocations: Vec<PlannedInvocation>,
    pub expectation: Option<TimeoutExpectation>,
}

impl WorkloadPlan {
    pub fn batch_count(&self) -> usize {
        self.invocations.last().map_or(0, |i| i.batch + 1)
    }

    /// Adds the same extra field to every planned request.
    pub fn with_extra(mut self, name: &str, value: &str) -> Result<Self, WorkloadError> {
        for inv in &mut self.invocations {
            inv.envelope.set_extra(name, value)?;
        }
        Ok(self)
    }
}

/// Deterministic UUIDs and per-request payload seeds from one master seed.
struct PlanRng {
    rng: ChaCha8Rng,
    seen: HashSet<String>,
}

impl PlanRng {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seen: HashSet::new(),
        }
    }

    fn uuid(&mut self) -> String {
        loop {
            let mut bytes = [0u8; 16];
            self.rng.fill_bytes(&mut bytes);
            let id = uuid::Builder::from_random_bytes(bytes)
                .into_uuid()
                .simple()
                .to_string();
            if self.seen.insert(id.clone()) {
                return id;
            }
        }
    }

    fn payload_seed(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

pub fn plan_batch(
    spec: &BatchSpec,
    target_uri: &str,
    proxy_uri: &str,
) -> Result<WorkloadPlan, WorkloadError> {
    spec.validate()?;
    let synth = WordSynthesizer::default();
    let mut rng = PlanRng::new(spec.seed);
    let invocations = (0..spec.total_requests)
        .map(|i| {
            let words = spec.words_per_request[i % spec.words_per_request.len()];
            let uuid = rng.uuid();
            let data = synth.synthesize(words, rng.payload_seed())?;
            Ok(PlannedInvocation {
                fire_offset_ms: 0,
                batch: i / spec.batch_size,
                words,
                envelope: RequestEnvelope::new(uuid, target_uri, data)?,
            })
        })
        .collect::<Result<Vec<_>, WorkloadError>>()?;
    Ok(WorkloadPlan {
        proxy_uri: proxy_uri.to_owned(),
        dispatch: spec.dispatch,
        invocations,
        expectation: None,
    })
}

pub fn plan_backoff(
    spec: &BackoffSpec,
    target_uri: &str,
    proxy_uri: &str,
) -> Result<WorkloadPlan, WorkloadError> {
    spec.validate()?;
    let synth = WordSynthesizer::default();
    let mut rng = PlanRng::new(spec.seed);
    let mut offset = 0u64;
    let offsets = std::iter::once(0).chain(spec.gaps().into_iter().map(|g| {
        offset += g;
        offset
    }));
    let invocations = offsets
        .enumerate()
        .map(|(i, fire_offset_ms)| {
            let uuid = rng.uuid();
            let data = synth.synthesize(spec.words_per_request, rng.payload_seed())?;
            Ok(PlannedInvocation {
                fire_offset_ms,
                batch: i,
                words: spec.words_per_request,
                envelope: RequestEnvelope::new(uuid, target_uri, data)?,
            })
        })
        .collect::<Result<Vec<_>, WorkloadError>>()?;
    Ok(WorkloadPlan {
        proxy_uri: proxy_uri.to_owned(),
        dispatch: Dispatch::Synchronous,
        invocations,
        expectation: None,
    })
}

pub fn plan_timeout_probe(
    spec: &TimeoutSpec,
    sleeper_uri: &str,
    proxy_uri: &str,
) -> Result<WorkloadPlan, WorkloadError> {
    spec.validate()?;
    let mut rng = PlanRng::new(spec.requested_sleep_ms ^ spec.expected_limit_ms.rotate_left(32));
    let envelope = RequestEnvelope::new(rng.uuid(), sleeper_uri, "")?
        .with_extra(SLEEP_FIELD, spec.requested_sleep_ms.to_string())?;
    Ok(WorkloadPlan {
        proxy_uri: proxy_uri.to_owned(),
        dispatch: Dispatch::Synchronous,
        invocations: vec![PlannedInvocation {
            fire_offset_ms: 0,
            batch: 0,
            words: 0,
            envelope,
        }],
        expectation: Some(TimeoutExpectation {
            level: spec.level_under_test,
            outcome: spec.expected_outcome(),
        }),
    })
}
