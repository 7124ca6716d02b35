//! Whole thought flows, competition, learning and field analysis.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, SymmetricEigen};
use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::cognition::{cycle_step, CognitionParams, MindState};
use crate::error::{check_dim, GeoError, Result};
use crate::geodesic::{GeodesicState, Trajectory};
use crate::manifold::{curvature_at, density_at, sq_dist, MetricSource, TokenField};

/// Id of the token whose mean is closest to `x`; ties go to the lowest id.
pub fn nearest_token(field: &TokenField, x: &[f64]) -> Result<u64> {
    check_dim(field.dimension(), x.len())?;
    let mut best: Option<(f64, u64)> = None;
    for t in field.tokens() {
        let d = sq_dist(x, &t.mean);
        best = match best {
            Some((bd, bid)) if bd < d || (bd == d && bid < t.id) => Some((bd, bid)),
            _ => Some((d, t.id)),
        };
    }
    best.map(|(_, id)| id)
        .ok_or_else(|| GeoError::invalid("nearest token of an empty field"))
}

/// How a flow's metric is derived; `Field` follows the (possibly learned) field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum MetricChoice {
    #[default]
    Field,
    Flat { scale: f64 },
    Sphere { radius: f64 },
}

impl MetricChoice {
    pub fn source_for(&self, field: &TokenField) -> MetricSource {
        match *self {
            MetricChoice::Field => MetricSource::FieldConformal(field.clone()),
            MetricChoice::Flat { scale } => MetricSource::Flat { scale },
            MetricChoice::Sphere { radius } => MetricSource::Sphere { radius },
        }
    }
}

/// External inputs keyed by cycle index; missing steps carry no input.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InputSchedule(pub BTreeMap<usize, Vec<f64>>);

impl InputSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    /// The same input on every one of `steps` cycles.
    pub fn repeated(input: Vec<f64>, steps: usize) -> Self {
        InputSchedule((0..steps).map(|s| (s, input.clone())).collect())
    }

    pub fn at(&self, step: usize) -> Option<&[f64]> {
        self.0.get(&step).map(|v| v.as_slice())
    }
}

/// Start point, initial velocity and discretization of a flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub start: Vec<f64>,
    pub velocity: Vec<f64>,
    pub steps: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThoughtFlow {
    pub trajectory: Trajectory,
    /// Prediction error of every completed cycle.
    pub errors: Vec<Vec<f64>>,
    pub score: f64,
    pub seed: u64,
}

fn initial_state(
    field: &TokenField,
    source: &MetricSource,
    params: &CognitionParams,
    flow: &FlowConfig,
    seed: u64,
) -> Result<(MindState, Trajectory)> {
    if flow.steps == 0 {
        return Err(GeoError::invalid("a thought flow needs at least one cycle"));
    }
    check_dim(flow.start.len(), flow.velocity.len())?;
    let position = if field.is_empty() {
        flow.start.clone()
    } else {
        let id = nearest_token(field, &flow.start)?;
        field.token(id).map(|t| t.mean.clone()).unwrap_or_default()
    };
    source.check_point(&position)?;
    let mut state = MindState::new(
        GeodesicState::new(position, flow.velocity.clone()),
        params.clone(),
        seed,
    )?;
    let mut traj = Trajectory::new(flow.dt);
    traj.samples.push(state.front.clone());
    if let Some(a) = state.activate_nearest(field)? {
        traj.activations.push(a);
    }
    Ok((state, traj))
}

/// Runs `flow.steps` consciousness cycles from the token nearest to `flow.start`.
/// A chart exit truncates the flow and sets the trajectory's `truncated` flag.
pub fn run_thought_flow(
    field: &TokenField,
    source: &MetricSource,
    params: &CognitionParams,
    inputs: &InputSchedule,
    flow: &FlowConfig,
    seed: u64,
) -> Result<ThoughtFlow> {
    let (mut state, mut traj) = initial_state(field, source, params, flow, seed)?;
    let mut errors = Vec::with_capacity(flow.steps);
    for step in 0..flow.steps {
        match cycle_step(state, field, source, inputs.at(step), flow.dt) {
            Ok(next) => {
                state = next;
                record_cycle(&state, &mut traj, &mut errors);
            }
            Err(GeoError::ChartExit { last_valid }) if !errors.is_empty() => {
                log::warn!("flow seed {seed} left the chart at t = {}", last_valid.time);
                traj.truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let mut out = ThoughtFlow {
        trajectory: traj,
        errors,
        score: 0.0,
        seed,
    };
    out.score = score_flow(&out)?;
    Ok(out)
}

fn record_cycle(state: &MindState, traj: &mut Trajectory, errors: &mut Vec<Vec<f64>>) {
    traj.samples.push(state.front.clone());
    if let Some(a) = state.last_activation {
        traj.activations.push(a);
    }
    if let Some(e) = &state.last_error {
        errors.push(e.clone());
    }
}

/// Negative mean squared prediction error over the cycles.
pub fn score_flow(flow: &ThoughtFlow) -> Result<f64> {
    score_errors(&flow.errors)
}

pub fn score_errors(errors: &[Vec<f64>]) -> Result<f64> {
    if errors.is_empty() {
        return Err(GeoError::invalid("cannot score a flow without cycles"));
    }
    let total: f64 = errors.iter().map(|e| e.iter().map(|x| x * x).sum::<f64>()).sum();
    Ok(-total / errors.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub winner: Option<usize>,
    pub scores: Vec<f64>,
    pub threshold: f64,
}

/// Argmax over scores (lowest index on ties), kept only if it exceeds `threshold`.
pub fn select_by_scores(scores: &[f64], threshold: f64) -> Selection {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        match best {
            Some(b) if scores[b] >= *s => {}
            _ => best = Some(i),
        }
    }
    Selection {
        winner: best.filter(|b| scores[*b] > threshold),
        scores: scores.to_vec(),
        threshold,
    }
}

pub fn select_conscious(flows: &[ThoughtFlow], threshold: f64) -> Selection {
    let scores: Vec<f64> = flows.iter().map(|f| f.score).collect();
    select_by_scores(&scores, threshold)
}

/// Pulls the token nearest to `perceived` toward it: `v <- v + eta (perceived - v)`.
pub fn learn_update(field: &TokenField, perceived: &[f64], eta: f64) -> Result<TokenField> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(GeoError::invalid(format!("learning rate must lie in [0, 1], got {eta}")));
    }
    if perceived.iter().any(|v| !v.is_finite()) {
        return Err(GeoError::invalid("perceived point has non-finite components"));
    }
    let id = nearest_token(field, perceived)?;
    let mut next = field.clone();
    if let Some(t) = next.tokens_mut().iter_mut().find(|t| t.id == id) {
        for (m, p) in t.mean.iter_mut().zip(perceived) {
            *m += eta * (p - *m);
        }
    }
    Ok(next)
}

/// Per-cycle record of a learning run.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningRun {
    /// Field after each cycle's update (one per completed cycle).
    pub snapshots: Vec<TokenField>,
    /// `|delta|` of each cycle.
    pub error_norms: Vec<f64>,
    pub flow: ThoughtFlow,
}

/// Thought flow in which every cycle is followed by a [`learn_update`] toward
/// the perceived point; the metric follows the updated field when `metric` is `Field`.
pub fn run_learning(
    field: &TokenField,
    metric: MetricChoice,
    params: &CognitionParams,
    inputs: &InputSchedule,
    flow: &FlowConfig,
    eta: f64,
    seed: u64,
) -> Result<LearningRun> {
    if field.is_empty() {
        return Err(GeoError::invalid("learning needs a non-empty field"));
    }
    let mut current = field.clone();
    let mut source = metric.source_for(&current);
    let (mut state, mut traj) = initial_state(&current, &source, params, flow, seed)?;
    let mut errors = Vec::new();
    let mut snapshots = Vec::new();
    for step in 0..flow.steps {
        match cycle_step(state, &current, &source, inputs.at(step), flow.dt) {
            Ok(next) => state = next,
            Err(GeoError::ChartExit { .. }) if !errors.is_empty() => {
                traj.truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
        record_cycle(&state, &mut traj, &mut errors);
        let perceived = state
            .last_perceived
            .clone()
            .expect("completed cycle records its perception");
        current = learn_update(&current, &perceived, eta)?;
        source = metric.source_for(&current);
        snapshots.push(current.clone());
    }
    let error_norms = errors
        .iter()
        .map(|e| e.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let score = score_errors(&errors)?;
    Ok(LearningRun {
        snapshots,
        error_norms,
        flow: ThoughtFlow {
            trajectory: traj,
            errors,
            score,
            seed,
        },
    })
}

fn resolve_ids(field: &TokenField, ids: &[u64]) -> Result<BTreeSet<u64>> {
    if ids.is_empty() {
        return Err(GeoError::invalid("feature needs at least one token id"));
    }
    let set: BTreeSet<u64> = ids.iter().copied().collect();
    if let Some(missing) = set.iter().find(|id| field.token(**id).is_none()) {
        return Err(GeoError::invalid(format!("unknown token id {missing}")));
    }
    Ok(set)
}

/// `F = sum_i w_i v_i` over the selected tokens.
pub fn feature_vector(field: &TokenField, ids: &[u64]) -> Result<Vec<f64>> {
    let set = resolve_ids(field, ids)?;
    let mut f = vec![0.0; field.dimension()];
    for t in field.tokens().iter().filter(|t| set.contains(&t.id)) {
        for (fi, v) in f.iter_mut().zip(&t.mean) {
            *fi += t.weight * v;
        }
    }
    Ok(f)
}

/// Rescales the weights of the selected tokens, returning a new field.
pub fn manipulate_feature(field: &TokenField, ids: &[u64], scale: f64) -> Result<TokenField> {
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(GeoError::invalid(format!("feature scale must be >= 0, got {scale}")));
    }
    let set = resolve_ids(field, ids)?;
    let mut next = field.clone();
    for t in next.tokens_mut().iter_mut().filter(|t| set.contains(&t.id)) {
        t.weight *= scale;
    }
    Ok(next)
}

/// Sampling of the curvature grid and the connectivity test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub points_per_axis: usize,
    /// Padding of the token bounding box, in bandwidths.
    pub padding: f64,
    /// Quantile of `|scalar curvature|` above which grid points are flagged.
    pub percentile: f64,
    /// Connectivity density floor; `None` means the field's epsilon.
    pub rho_min: Option<f64>,
    /// Hard cap on `points_per_axis ^ D`.
    pub max_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points_per_axis: 9,
            padding: 2.0,
            percentile: 0.9,
            rho_min: None,
            max_points: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub point: Vec<f64>,
    pub scalar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldReport {
    pub curvature_samples: Vec<CurvatureSample>,
    pub curvature_cut: f64,
    pub high_curvature: Vec<Vec<f64>>,
    pub rho_min: f64,
    pub components: Vec<Vec<u64>>,
    pub intrinsic_dimension: usize,
}

fn grid_points(lo: &[f64], hi: &[f64], n: usize) -> Vec<Vec<f64>> {
    let d = lo.len();
    let total = n.pow(d as u32);
    (0..total)
        .map(|mut k| {
            (0..d)
                .map(|axis| {
                    let i = k % n;
                    k /= n;
                    if n == 1 {
                        0.5 * (lo[axis] + hi[axis])
                    } else {
                        lo[axis] + (hi[axis] - lo[axis]) * i as f64 / (n - 1) as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// Nearest-rank quantile of non-negative values.
fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Smallest density on the straight chart segment from `a` to `b`.
pub fn min_density_on_segment(field: &TokenField, a: &[f64], b: &[f64]) -> Result<f64> {
    let len = sq_dist(a, b).sqrt();
    let pieces = ((len / (field.bandwidth() / 8.0)).ceil() as usize).max(1);
    let mut min = f64::INFINITY;
    let mut p = vec![0.0; a.len()];
    for k in 0..=pieces {
        let s = k as f64 / pieces as f64;
        for (pi, (x, y)) in p.iter_mut().zip(a.iter().zip(b)) {
            *pi = x + s * (y - x);
        }
        min = min.min(density_at(field, &p)?);
    }
    Ok(min)
}

/// Connected components of the token graph with an edge wherever the density
/// along the connecting segment stays at or above `rho_min`. Components are
/// sorted internally and ordered by their smallest id.
pub fn token_components(field: &TokenField, rho_min: f64) -> Result<Vec<Vec<u64>>> {
    let tokens = field.tokens();
    let n = tokens.len();
    let mut uf = UnionFind::<usize>::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if uf.equiv(i, j) {
                continue;
            }
            if min_density_on_segment(field, &tokens[i].mean, &tokens[j].mean)? >= rho_min {
                uf.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for (i, t) in tokens.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().push(t.id);
    }
    let mut comps: Vec<Vec<u64>> = groups
        .into_values()
        .map(|mut g| {
            g.sort_unstable();
            g
        })
        .collect();
    comps.sort();
    Ok(comps)
}

fn mean_covariance(field: &TokenField) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let n = field.len();
    if n < 2 {
        return None;
    }
    let d = field.dimension();
    let mut mean = vec![0.0; d];
    for t in field.tokens() {
        for (m, v) in mean.iter_mut().zip(&t.mean) {
            *m += v / n as f64;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for t in field.tokens() {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (t.mean[i] - mean[i]) * (t.mean[j] - mean[j]) / n as f64;
            }
        }
    }
    Some((mean, cov))
}

/// Eigenpairs of the token-mean covariance, largest variance first.
fn principal_axes(field: &TokenField) -> Option<(Vec<f64>, Vec<f64>, DMatrix<f64>)> {
    let (mean, cov) = mean_covariance(field)?;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]).then(a.cmp(b)));
    let values = order.iter().map(|i| eig.eigenvalues[*i].max(0.0)).collect();
    let vectors = DMatrix::from_columns(
        &order.iter().map(|i| eig.eigenvectors.column(*i).into_owned()).collect::<Vec<_>>(),
    );
    Some((mean, values, vectors))
}

/// Smallest `k` whose leading principal components explain at least 95% of the
/// token-mean variance, clamped to `[1, D]`.
pub fn intrinsic_dimension(field: &TokenField) -> usize {
    let d = field.dimension();
    let Some((_, values, _)) = principal_axes(field) else {
        return 1;
    };
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return 1;
    }
    let mut acc = 0.0;
    for (k, v) in values.iter().enumerate() {
        acc += v;
        if acc >= 0.95 * total {
            return (k + 1).clamp(1, d);
        }
    }
    d
}

/// Token means projected onto the two leading principal axes.
pub fn pca_projection(field: &TokenField) -> Vec<(u64, [f64; 2])> {
    let Some((mean, _, axes)) = principal_axes(field) else {
        return field.tokens().iter().map(|t| (t.id, [0.0, 0.0])).collect();
    };
    field
        .tokens()
        .iter()
        .map(|t| {
            let mut xy = [0.0; 2];
            for (k, c) in xy.iter_mut().enumerate().take(axes.ncols()) {
                *c = (0..mean.len()).map(|i| (t.mean[i] - mean[i]) * axes[(i, k)]).sum();
            }
            (t.id, xy)
        })
        .collect()
}

/// Curvature survey over the padded token bounding box, high-curvature flags,
/// connectivity components and the PCA dimension estimate.
pub fn analyze_field(field: &TokenField, source: &MetricSource, grid: &GridSpec) -> Result<FieldReport> {
    if grid.points_per_axis == 0 {
        return Err(GeoError::invalid("grid needs at least one point per axis"));
    }
    if !(0.0..=1.0).contains(&grid.percentile) {
        return Err(GeoError::invalid("curvature percentile must lie in [0, 1]"));
    }
    let d = field.dimension();
    let total = (grid.points_per_axis as u128).pow(d as u32);
    if total > grid.max_points as u128 {
        return Err(GeoError::invalid(format!(
            "grid of {total} points exceeds the cap of {}",
            grid.max_points
        )));
    }
    let pad = grid.padding * field.bandwidth();
    let (lo, hi) = if field.is_empty() {
        (vec![-pad; d], vec![pad; d])
    } else {
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for t in field.tokens() {
            for i in 0..d {
                lo[i] = lo[i].min(t.mean[i]);
                hi[i] = hi[i].max(t.mean[i]);
            }
        }
        (lo.iter().map(|v| v - pad).collect(), hi.iter().map(|v| v + pad).collect())
    };

    let mut samples = Vec::new();
    for p in grid_points(&lo, &hi, grid.points_per_axis) {
        match curvature_at(source, &p) {
            Ok(c) => samples.push(CurvatureSample {
                point: p,
                scalar: c.scalar,
            }),
            // grid points on a chart singularity carry no curvature
            Err(GeoError::SingularChart { .. }) | Err(GeoError::SingularMetric { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let magnitudes: Vec<f64> = samples.iter().map(|s| s.scalar.abs()).collect();
    let cut = quantile(&magnitudes, grid.percentile);
    let high_curvature = samples
        .iter()
        .filter(|s| s.scalar.abs() > cut)
        .map(|s| s.point.clone())
        .collect();

    let rho_min = grid.rho_min.unwrap_or(field.epsilon());
    Ok(FieldReport {
        curvature_samples: samples,
        curvature_cut: cut,
        high_curvature,
        rho_min,
        components: token_components(field, rho_min)?,
        intrinsic_dimension: intrinsic_dimension(field),
    })
}

/// Demo setup used by the learning example: three tokens in the plane, a fixed
/// stimulus away from the start token and moderate feedback.
pub mod demo {
    use super::*;
    use crate::manifold::TokenEmbedding;

    pub fn field() -> TokenField {
        TokenField::new(
            2,
            1.0,
            1.0,
            vec![
                TokenEmbedding::new(0, vec![0.0, 0.0]).with_diagonal_covariance(&[1e-4, 1e-4]),
                TokenEmbedding::new(1, vec![3.0, 0.0]).with_diagonal_covariance(&[1e-4, 1e-4]),
                TokenEmbedding::new(2, vec![0.0, 3.0]).with_diagonal_covariance(&[1e-4, 1e-4]),
            ],
        )
        .expect("demo field is valid")
    }

    pub fn params() -> CognitionParams {
        let mut p = CognitionParams::identity(2);
        p.input_blend = 0.5;
        p.kappa = 1.0;
        p
    }

    pub fn input() -> Vec<f64> {
        vec![1.0, 1.0]
    }

    pub fn flow(steps: usize) -> FlowConfig {
        FlowConfig {
            start: vec![0.0, 0.0],
            velocity: vec![0.0, 0.0],
            steps,
            dt: 0.1,
        }
    }

    pub const LEARNING_RATE: f64 = 0.2;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::TokenEmbedding;

    fn field_of(points: &[(u64, Vec<f64>)]) -> TokenField {
        let d = points[0].1.len();
        TokenField::new(
            d,
            1.0,
            0.1,
            points.iter().map(|(id, m)| TokenEmbedding::new(*id, m.clone())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn nearest_token_examples() {
        let one = field_of(&[(5, vec![1.0, 1.0])]);
        assert_eq!(nearest_token(&one, &[-9.0, 4.0]).unwrap(), 5);
        let tie = field_of(&[(7, vec![2.0, 0.0]), (3, vec![-2.0, 0.0])]);
        assert_eq!(nearest_token(&tie, &[0.0, 0.0]).unwrap(), 3);
        let two = field_of(&[(0, vec![0.0, 0.0]), (1, vec![10.0, 0.0])]);
        assert_eq!(nearest_token(&two, &[4.0, 0.0]).unwrap(), 0);
        let empty = TokenField::empty(2, 1.0, 1.0).unwrap();
        assert!(nearest_token(&empty, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn score_examples() {
        assert_eq!(score_errors(&vec![vec![0.0, 0.0]; 3]).unwrap(), 0.0);
        assert_eq!(score_errors(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap(), -1.0);
        assert_eq!(score_errors(&[vec![0.0, 0.0], vec![0.0, 2.0]]).unwrap(), -2.0);
        assert!(score_errors(&[]).is_err());
    }

    #[test]
    fn selection_examples() {
        assert_eq!(select_by_scores(&[-0.5], -1.0).winner, Some(0));
        assert_eq!(select_by_scores(&[-3.0, -2.0], -1.0).winner, None);
        assert_eq!(select_by_scores(&[-1.0, -0.2, -0.2], -5.0).winner, Some(1));
        // equal to the threshold does not surpass it
        assert_eq!(select_by_scores(&[-1.0], -1.0).winner, None);
        assert_eq!(select_by_scores(&[], 0.0).winner, None);
    }

    #[test]
    fn learn_update_examples() {
        let f = field_of(&[(0, vec![0.0, 0.0]), (1, vec![5.0, 5.0])]);
        assert_eq!(learn_update(&f, &[1.0, 0.0], 0.0).unwrap(), f);
        let jumped = learn_update(&f, &[1.0, -2.0], 1.0).unwrap();
        assert_eq!(jumped.token(0).unwrap().mean, vec![1.0, -2.0]);
        assert_eq!(jumped.token(1).unwrap().mean, vec![5.0, 5.0]);

        let target = [2.0, 0.0];
        let once = learn_update(&f, &target, 0.5).unwrap();
        let twice = learn_update(&once, &target, 0.5).unwrap();
        let d0 = sq_dist(&f.token(0).unwrap().mean, &target).sqrt();
        let d2 = sq_dist(&twice.token(0).unwrap().mean, &target).sqrt();
        assert!(d2 <= 0.25 * d0 + 1e-15);
        assert_eq!(twice.len(), 2);

        let empty = TokenField::empty(2, 1.0, 1.0).unwrap();
        assert!(learn_update(&empty, &target, 0.5).is_err());
        assert!(learn_update(&f, &target, 1.5).is_err());
    }

    #[test]
    fn feature_examples() {
        let f = field_of(&[(0, vec![1.0, 0.0]), (1, vec![0.0, 2.0])]);
        assert_eq!(feature_vector(&f, &[0]).unwrap(), vec![1.0, 0.0]);
        let halves = manipulate_feature(&f, &[0, 1], 0.5).unwrap();
        assert_eq!(feature_vector(&halves, &[0, 1]).unwrap(), vec![0.5, 1.0]);
        let weighted = manipulate_feature(&manipulate_feature(&f, &[0], 2.0).unwrap(), &[1], 1.0).unwrap();
        assert_eq!(feature_vector(&weighted, &[1, 0]).unwrap(), vec![2.0, 2.0]);
        assert!(feature_vector(&f, &[9]).is_err());
        assert!(feature_vector(&f, &[]).is_err());
        assert!(manipulate_feature(&f, &[9], 2.0).is_err());
        assert!(manipulate_feature(&f, &[0], -1.0).is_err());
    }

    #[test]
    fn manipulation_scale_one_and_zero() {
        let f = field_of(&[(0, vec![1.0, 0.0]), (1, vec![0.0, 2.0])]);
        assert_eq!(manipulate_feature(&f, &[0, 1], 1.0).unwrap(), f);
        let off = manipulate_feature(&f, &[0], 0.0).unwrap();
        let only_one = field_of(&[(1, vec![0.0, 2.0])]);
        for p in [[1.0, 0.0], [0.3, 0.7], [-4.0, 2.0]] {
            assert_eq!(density_at(&off, &p).unwrap(), density_at(&only_one, &p).unwrap());
        }
    }

    #[test]
    fn empty_field_report() {
        let f = TokenField::empty(2, 1.0, 0.5).unwrap();
        let r = analyze_field(&f, &MetricSource::conformal(f.clone()), &GridSpec::default()).unwrap();
        assert!(r.components.is_empty());
        assert!(r.high_curvature.is_empty());
        assert_eq!(r.curvature_samples.len(), 81);
        assert!(r.curvature_samples.iter().all(|s| s.scalar.abs() < 1e-12));
        assert_eq!(r.intrinsic_dimension, 1);
    }

    #[test]
    fn line_in_five_dimensions_has_dimension_one() {
        let dir = [1.0, -2.0, 0.5, 3.0, 1.5];
        let pts: Vec<(u64, Vec<f64>)> = (0..12)
            .map(|i| (i as u64, dir.iter().map(|d| d * (i as f64 - 4.0) * 0.3 + 1.0).collect()))
            .collect();
        assert_eq!(intrinsic_dimension(&field_of(&pts)), 1);
        let plane: Vec<(u64, Vec<f64>)> = (0..16)
            .map(|i| {
                let (a, b) = ((i % 4) as f64, (i / 4) as f64);
                (i as u64, vec![a, b, 0.0])
            })
            .collect();
        assert_eq!(intrinsic_dimension(&field_of(&plane)), 2);
    }

    #[test]
    fn pca_projection_of_a_line_is_one_dimensional() {
        let pts: Vec<(u64, Vec<f64>)> =
            (0..5).map(|i| (i as u64, vec![i as f64, 2.0 * i as f64, -(i as f64)])).collect();
        let proj = pca_projection(&field_of(&pts));
        assert_eq!(proj.len(), 5);
        assert!(proj.iter().all(|(_, xy)| xy[1].abs() < 1e-9));
        let spread = (proj[4].1[0] - proj[0].1[0]).abs();
        assert!((spread - 4.0 * 6f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn grid_cap_is_enforced() {
        let f = TokenField::empty(6, 1.0, 1.0).unwrap();
        let grid = GridSpec {
            points_per_axis: 10,
            ..GridSpec::default()
        };
        assert!(analyze_field(&f, &MetricSource::flat(), &grid).is_err());
    }

    #[test]
    fn quantile_nearest_rank() {
        let v: Vec<f64> = (1..=10).map(|x| x as f64).collect();
        assert_eq!(quantile(&v, 0.9), 9.0);
        assert_eq!(quantile(&v, 1.0), 10.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
    }
}
