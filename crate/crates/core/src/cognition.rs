//! Token-level cognitive machinery and the perception / evaluation / feedback cycle.
//!
//! One [`cycle_step`] perceives the front of the thought flow (optionally blended
//! with an external input), predicts the next token from the attention-weighted
//! context, takes the prediction error, and feeds `kappa * d^2 psi / dt^2` back into
//! the geodesic equation as a forcing term before activating the token nearest to
//! the new front.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, GeoError, Result};
use crate::geodesic::{geodesic_step, Activation, ConstantForcing, GeodesicState, Trajectory};
use crate::manifold::{MetricSource, TokenEmbedding, TokenField};
use crate::mind::nearest_token;

/// A draw `v' ~ N(v, Sigma)` for one token.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledEmbedding {
    pub token_id: u64,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ActivationFn {
    #[default]
    Identity,
    Tanh,
}

impl ActivationFn {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationFn::Identity => x,
            ActivationFn::Tanh => x.tanh(),
        }
    }
}

/// Shape of the feedback function `psi`, applied componentwise before the gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum FeedbackFn {
    #[default]
    Linear,
    /// `limit * tanh(x / limit)`: linear near zero, saturating at `limit`.
    Tanh { limit: f64 },
}

/// Which form produces the predicted token inside the cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Predictor {
    /// `sigma(W_phi c + b_phi)` over the attention context.
    #[default]
    Contextual,
    /// Previous front plus the integrated velocity over `window`.
    Geometric { window: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CognitionParams {
    pub value_matrix: DMatrix<f64>,
    pub predictor_matrix: DMatrix<f64>,
    pub bias: Vec<f64>,
    pub activation: ActivationFn,
    /// Perception blend `beta` in `[0, 1]`.
    pub input_blend: f64,
    pub feedback_gain: f64,
    pub feedback: FeedbackFn,
    /// Consciousness intensity `kappa >= 0`.
    pub kappa: f64,
    pub attention_temperature: f64,
    pub context_capacity: usize,
    pub predictor: Predictor,
}

impl CognitionParams {
    /// Identity value/predictor maps, zero bias, `beta = 0`, unit gain, `kappa = 0`,
    /// temperature `sqrt(D)` and a 16-token context window.
    pub fn identity(dimension: usize) -> Self {
        CognitionParams {
            value_matrix: DMatrix::identity(dimension, dimension),
            predictor_matrix: DMatrix::identity(dimension, dimension),
            bias: vec![0.0; dimension],
            activation: ActivationFn::Identity,
            input_blend: 0.0,
            feedback_gain: 1.0,
            feedback: FeedbackFn::Linear,
            kappa: 0.0,
            attention_temperature: (dimension as f64).sqrt(),
            context_capacity: 16,
            predictor: Predictor::Contextual,
        }
    }

    pub fn dimension(&self) -> usize {
        self.bias.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dimension();
        if d == 0 {
            return Err(GeoError::invalid("cognition dimension must be positive"));
        }
        for (name, m) in [("value", &self.value_matrix), ("predictor", &self.predictor_matrix)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(GeoError::invalid(format!(
                    "{name} matrix is {}x{}, expected {d}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.input_blend) {
            return Err(GeoError::invalid(format!(
                "input blend must lie in [0, 1], got {}",
                self.input_blend
            )));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(GeoError::invalid(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if !(self.attention_temperature.is_finite() && self.attention_temperature > 0.0) {
            return Err(GeoError::invalid("attention temperature must be > 0"));
        }
        if !self.feedback_gain.is_finite() {
            return Err(GeoError::invalid("feedback gain must be finite"));
        }
        if let FeedbackFn::Tanh { limit } = self.feedback {
            if !(limit > 0.0) {
                return Err(GeoError::invalid("tanh feedback limit must be > 0"));
            }
        }
        if let Predictor::Geometric { window } = self.predictor {
            if !(window > 0.0) {
                return Err(GeoError::invalid("geometric prediction window must be > 0"));
            }
        }
        if self.context_capacity == 0 {
            return Err(GeoError::invalid("context capacity must be at least 1"));
        }
        Ok(())
    }

    /// `psi(delta)` componentwise.
    pub fn psi(&self, delta: &[f64]) -> Vec<f64> {
        delta
            .iter()
            .map(|x| {
                let shaped = match self.feedback {
                    FeedbackFn::Linear => *x,
                    FeedbackFn::Tanh { limit } => limit * (x / limit).tanh(),
                };
                self.feedback_gain * shaped
            })
            .collect()
    }
}

/// The three most recent `psi(delta)` values with their times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorHistory {
    entries: VecDeque<(f64, Vec<f64>)>,
}

impl ErrorHistory {
    pub const CAPACITY: usize = 3;

    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `psi` at `time`, evicting the oldest entry when full.
    pub fn push(&mut self, time: f64, psi: Vec<f64>) -> Result<()> {
        if let Some((last, prev)) = self.entries.back() {
            if !(time > *last) {
                return Err(GeoError::invalid(format!(
                    "history times must increase: {time} after {last}"
                )));
            }
            check_dim(prev.len(), psi.len())?;
        }
        if self.entries.len() == Self::CAPACITY {
            self.entries.pop_front();
        }
        self.entries.push_back((time, psi));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &(f64, Vec<f64>)> {
        self.entries.iter()
    }
}

/// Draw from `N(mean, Sigma)` as `mean + L z`; `L` is the elementwise square root
/// for diagonal covariances and the Cholesky factor otherwise.
pub fn sample_embedding<R: Rng + ?Sized>(
    token: &TokenEmbedding,
    rng: &mut R,
) -> Result<SampledEmbedding> {
    let d = token.dimension();
    token.validate(d).map_err(|e| match e {
        GeoError::Validation { id, reason } => GeoError::invalid(format!("token {id}: {reason}")),
        other => other,
    })?;
    let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let value = if token.has_diagonal_covariance() {
        token
            .mean
            .iter()
            .zip(&z)
            .enumerate()
            .map(|(i, (m, zi))| m + token.covariance[(i, i)].sqrt() * zi)
            .collect()
    } else {
        let factor = match Cholesky::new(token.covariance.clone()) {
            Some(c) => c.l(),
            None => {
                // semidefinite: Q sqrt(max(lambda, 0))
                let eig = SymmetricEigen::new(token.covariance.clone());
                let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
            }
        };
        let noise = factor * DVector::from_vec(z);
        token.mean.iter().zip(noise.iter()).map(|(m, n)| m + n).collect()
    };
    Ok(SampledEmbedding {
        token_id: token.id,
        value,
    })
}

/// Scaled dot-product softmax `alpha_j = softmax_j(<q, v'_j> / T)`.
pub fn attention_weights(
    query: &SampledEmbedding,
    sequence: &[SampledEmbedding],
    params: &CognitionParams,
) -> Result<Vec<f64>> {
    if sequence.is_empty() {
        return Err(GeoError::invalid("attention over an empty sequence"));
    }
    let logits = sequence
        .iter()
        .map(|s| {
            check_dim(query.value.len(), s.value.len())?;
            let dot: f64 = query.value.iter().zip(&s.value).map(|(a, b)| a * b).sum();
            Ok(dot / params.attention_temperature)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(softmax(&logits))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `c = sum_j alpha_j W_omega v'_j`.
pub fn context_vector(
    weights: &[f64],
    sequence: &[SampledEmbedding],
    params: &CognitionParams,
) -> Result<Vec<f64>> {
    if weights.len() != sequence.len() {
        return Err(GeoError::invalid(format!(
            "{} weights for {} sequence entries",
            weights.len(),
            sequence.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(GeoError::invalid(format!("attention weights sum to {total}")));
    }
    let d = params.value_matrix.nrows();
    let mut mixed = DVector::zeros(params.value_matrix.ncols());
    for (w, s) in weights.iter().zip(sequence) {
        check_dim(params.value_matrix.ncols(), s.value.len())?;
        mixed.axpy(*w, &DVector::from_column_slice(&s.value), 1.0);
    }
    let c = &params.value_matrix * mixed;
    debug_assert_eq!(c.len(), d);
    Ok(c.iter().copied().collect())
}

/// `g = sigma(W_phi c + b_phi)`.
pub fn predict_contextual(context: &[f64], params: &CognitionParams) -> Result<Vec<f64>> {
    check_dim(params.predictor_matrix.ncols(), context.len())?;
    let pre = &params.predictor_matrix * DVector::from_column_slice(context);
    Ok(pre
        .iter()
        .zip(&params.bias)
        .map(|(p, b)| params.activation.apply(p + b))
        .collect())
}

/// Geometric prediction: the recorded position at `t - window` plus the trapezoidal
/// integral of the sampled velocities over `[t - window, t]`, where `t` is the time
/// of the last sample.
pub fn predict_geometric(traj: &Trajectory, window: f64) -> Result<Vec<f64>> {
    geometric_prediction(&traj.samples, traj.dt, window, None)
}

/// As [`predict_geometric`], but starting from an explicit previous prediction.
pub fn predict_geometric_from(anchor: &[f64], traj: &Trajectory, window: f64) -> Result<Vec<f64>> {
    geometric_prediction(&traj.samples, traj.dt, window, Some(anchor))
}

fn window_steps(window: f64, dt: f64) -> Result<usize> {
    if !(window > 0.0 && dt > 0.0) {
        return Err(GeoError::invalid("window and dt must be positive"));
    }
    let k = (window / dt).round();
    if k < 1.0 || ((k * dt) - window).abs() > 1e-9 * window.max(1.0) {
        return Err(GeoError::invalid(format!(
            "window {window} is not a positive multiple of dt {dt}"
        )));
    }
    Ok(k as usize)
}

fn geometric_prediction(
    samples: &[GeodesicState],
    dt: f64,
    window: f64,
    anchor: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let k = window_steps(window, dt)?;
    if samples.len() < k + 1 {
        return Err(GeoError::invalid(format!(
            "window {window} exceeds recorded history of {} samples",
            samples.len()
        )));
    }
    let span = &samples[samples.len() - 1 - k..];
    Ok(integrate_span(span, dt, anchor))
}

fn integrate_span(span: &[GeodesicState], dt: f64, anchor: Option<&[f64]>) -> Vec<f64> {
    let mut g = anchor.map_or_else(|| span[0].position.clone(), |a| a.to_vec());
    for pair in span.windows(2) {
        for (gi, (a, b)) in g.iter_mut().zip(pair[0].velocity.iter().zip(&pair[1].velocity)) {
            *gi += 0.5 * dt * (a + b);
        }
    }
    g
}

/// `f = (1 - beta) front + beta input`, or the front itself without input.
pub fn perceive(front: &[f64], input: Option<&[f64]>, params: &CognitionParams) -> Result<Vec<f64>> {
    match input {
        None => Ok(front.to_vec()),
        Some(i) => {
            check_dim(front.len(), i.len())?;
            let b = params.input_blend;
            Ok(front.iter().zip(i).map(|(f, x)| (1.0 - b) * f + b * x).collect())
        }
    }
}

/// `delta = perceived - predicted`.
pub fn prediction_error(perceived: &[f64], predicted: &[f64]) -> Result<Vec<f64>> {
    check_dim(perceived.len(), predicted.len())?;
    Ok(perceived.iter().zip(predicted).map(|(f, g)| f - g).collect())
}

/// `kappa * (psi_t - 2 psi_{t-dt} + psi_{t-2dt}) / dt^2`; zero while the history
/// holds fewer than three entries.
pub fn feedback_forcing(history: &ErrorHistory, params: &CognitionParams, dt: f64) -> Result<Vec<f64>> {
    let d = params.dimension();
    if !(dt > 0.0) {
        return Err(GeoError::invalid(format!("dt must be > 0, got {dt}")));
    }
    if history.len() < ErrorHistory::CAPACITY || params.kappa == 0.0 {
        return Ok(vec![0.0; d]);
    }
    let e: Vec<&(f64, Vec<f64>)> = history.entries().collect();
    for pair in e.windows(2) {
        let gap = pair[1].0 - pair[0].0;
        if (gap - dt).abs() > 1e-9 * pair[1].0.abs().max(1.0) {
            return Err(GeoError::invalid(format!(
                "history spacing {gap} does not match dt {dt}"
            )));
        }
    }
    let (p0, p1, p2) = (&e[0].1, &e[1].1, &e[2].1);
    check_dim(d, p2.len())?;
    Ok((0..d)
        .map(|i| {
            let f = params.kappa * (p2[i] - 2.0 * p1[i] + p0[i]) / (dt * dt);
            // canonical +0 so zero forcing is bit-identical to the unforced path
            if f == 0.0 {
                0.0
            } else {
                f
            }
        })
        .collect())
}

/// Live state of one thought flow.
#[derive(Debug, Clone)]
pub struct MindState {
    pub front: GeodesicState,
    pub context: VecDeque<SampledEmbedding>,
    pub history: ErrorHistory,
    pub params: CognitionParams,
    rng: ChaCha8Rng,
    /// Front samples kept for the geometric predictor.
    recent: VecDeque<GeodesicState>,
    start_time: f64,
    cycles: usize,
    dt: Option<f64>,
    pub last_activation: Option<Activation>,
    pub last_perceived: Option<Vec<f64>>,
    pub last_prediction: Option<Vec<f64>>,
    pub last_error: Option<Vec<f64>>,
}

impl MindState {
    pub fn new(front: GeodesicState, params: CognitionParams, seed: u64) -> Result<Self> {
        params.validate()?;
        check_dim(params.dimension(), front.dimension())?;
        check_dim(front.position.len(), front.velocity.len())?;
        let start_time = front.time;
        let mut recent = VecDeque::new();
        recent.push_back(front.clone());
        Ok(MindState {
            front,
            context: VecDeque::with_capacity(params.context_capacity),
            history: ErrorHistory::new(),
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            recent,
            start_time,
            cycles: 0,
            dt: None,
            last_activation: None,
            last_perceived: None,
            last_prediction: None,
            last_error: None,
        })
    }

    pub fn cycles(&self) -> usize {
        self.cycles
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Activates the token nearest to the front, samples it into the context
    /// window and returns its id. No-op on an empty field.
    pub fn activate_nearest(&mut self, field: &TokenField) -> Result<Option<Activation>> {
        if field.is_empty() {
            self.last_activation = None;
            return Ok(None);
        }
        let id = nearest_token(field, &self.front.position)?;
        let token = field.token(id).expect("nearest token id comes from the field");
        let sample = sample_embedding(token, &mut self.rng)?;
        if self.context.len() == self.params.context_capacity {
            self.context.pop_front();
        }
        self.context.push_back(sample);
        let act = Activation {
            time: self.front.time,
            token_id: id,
        };
        self.last_activation = Some(act);
        Ok(Some(act))
    }

    fn predict(&mut self, perceived: &[f64], dt: f64) -> Result<Vec<f64>> {
        match self.params.predictor {
            Predictor::Contextual => {
                if self.context.is_empty() {
                    // nothing activated yet: no expectation to violate
                    return Ok(perceived.to_vec());
                }
                let seq: &[SampledEmbedding] = self.context.make_contiguous();
                let query = &seq[seq.len() - 1];
                let weights = attention_weights(query, seq, &self.params)?;
                let c = context_vector(&weights, seq, &self.params)?;
                predict_contextual(&c, &self.params)
            }
            Predictor::Geometric { window } => {
                let k = window_steps(window, dt)?;
                let span = self.recent.make_contiguous();
                if span.len() < 2 {
                    return Ok(span[0].position.clone());
                }
                let take = (k + 1).min(span.len());
                Ok(integrate_span(&span[span.len() - take..], dt, None))
            }
        }
    }
}

/// One complete perception / prediction / evaluation / adjustment cycle.
pub fn cycle_step(
    mut state: MindState,
    field: &TokenField,
    source: &MetricSource,
    input: Option<&[f64]>,
    dt: f64,
) -> Result<MindState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(GeoError::invalid(format!("dt must be > 0, got {dt}")));
    }
    match state.dt {
        None => state.dt = Some(dt),
        Some(prev) if prev != dt => {
            return Err(GeoError::invalid(format!(
                "cycle dt changed from {prev} to {dt}"
            )))
        }
        _ => {}
    }

    let perceived = perceive(&state.front.position, input, &state.params)?;
    let predicted = state.predict(&perceived, dt)?;
    let delta = prediction_error(&perceived, &predicted)?;
    let psi = state.params.psi(&delta);
    state.history.push(state.front.time, psi)?;
    let force = feedback_forcing(&state.history, &state.params, dt)?;

    let mut next = geodesic_step(&state.front, source, &ConstantForcing(force), dt)?;
    state.cycles += 1;
    next.time = state.start_time + state.cycles as f64 * dt;
    state.front = next;

    if let Predictor::Geometric { window } = state.params.predictor {
        let keep = window_steps(window, dt)? + 1;
        state.recent.push_back(state.front.clone());
        while state.recent.len() > keep {
            state.recent.pop_front();
        }
    }

    state.last_perceived = Some(perceived);
    state.last_prediction = Some(predicted);
    state.last_error = Some(delta);
    state.activate_nearest(field)?;
    Ok(state)
}
