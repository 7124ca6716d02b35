//! Geodesic integration (free and forced), path length/energy and shooting.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, GeoError, Result};
use crate::manifold::{christoffel_at, metric_at, MetricSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub time: f64,
}

impl GeodesicState {
    pub fn new(position: Vec<f64>, velocity: Vec<f64>) -> Self {
        GeodesicState {
            position,
            velocity,
            time: 0.0,
        }
    }

    pub fn at_rest(position: Vec<f64>) -> Self {
        let d = position.len();
        Self::new(position, vec![0.0; d])
    }

    pub fn dimension(&self) -> usize {
        self.position.len()
    }

    /// Metric speed `sqrt(v^T g v)` at the current position.
    pub fn metric_speed(&self, source: &MetricSource) -> Result<f64> {
        let g = metric_at(source, &self.position)?;
        Ok(g.inner(&self.velocity, &self.velocity).sqrt())
    }
}

/// External acceleration on the right-hand side of the geodesic equation.
pub trait Forcing {
    fn acceleration(&self, state: &GeodesicState) -> Vec<f64>;
}

/// The unforced geodesic.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroForcing;

impl Forcing for ZeroForcing {
    fn acceleration(&self, state: &GeodesicState) -> Vec<f64> {
        vec![0.0; state.dimension()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantForcing(pub Vec<f64>);

impl Forcing for ConstantForcing {
    fn acceleration(&self, _state: &GeodesicState) -> Vec<f64> {
        self.0.clone()
    }
}

impl<F> Forcing for F
where
    F: Fn(&GeodesicState) -> Vec<f64>,
{
    fn acceleration(&self, state: &GeodesicState) -> Vec<f64> {
        self(state)
    }
}

/// A token activated at a sample time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub time: f64,
    pub token_id: u64,
}

/// Uniformly time-sampled path plus the activated-token sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<GeodesicState>,
    pub dt: f64,
    pub activations: Vec<Activation>,
    /// Set when integration stopped early because the path left the chart.
    pub truncated: bool,
}

impl Trajectory {
    pub fn new(dt: f64) -> Self {
        Trajectory {
            samples: Vec::new(),
            dt,
            activations: Vec::new(),
            truncated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.samples.first().map_or(0, |s| s.dimension())
    }

    pub fn first(&self) -> Option<&GeodesicState> {
        self.samples.first()
    }

    pub fn last(&self) -> Option<&GeodesicState> {
        self.samples.last()
    }

    /// Activated token at sample `i`, if any.
    pub fn token_at(&self, i: usize) -> Option<u64> {
        let t = self.samples.get(i)?.time;
        self.activations
            .iter()
            .find(|a| a.time == t)
            .map(|a| a.token_id)
    }

    pub fn token_sequence(&self) -> Vec<u64> {
        self.activations.iter().map(|a| a.token_id).collect()
    }
}

fn derivative<F: Forcing + ?Sized>(
    source: &MetricSource,
    forcing: &F,
    state: &GeodesicState,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let gamma = christoffel_at(source, &state.position)?;
    let quad = gamma.contract(&state.velocity);
    let force = forcing.acceleration(state);
    check_dim(state.dimension(), force.len())?;
    let acc = quad.iter().zip(&force).map(|(q, f)| -q + f).collect();
    Ok((state.velocity.clone(), acc))
}

fn offset(base: &GeodesicState, dx: &[f64], dv: &[f64], h: f64, dt: f64) -> GeodesicState {
    GeodesicState {
        position: base.position.iter().zip(dx).map(|(x, d)| x + h * d).collect(),
        velocity: base.velocity.iter().zip(dv).map(|(v, d)| v + h * d).collect(),
        time: base.time + dt,
    }
}

/// One classical RK4 step of `x' = v`, `v' = -Gamma(x)[v, v] + F(state)`.
pub fn geodesic_step<F: Forcing + ?Sized>(
    state: &GeodesicState,
    source: &MetricSource,
    forcing: &F,
    dt: f64,
) -> Result<GeodesicState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(GeoError::invalid(format!("dt must be > 0, got {dt}")));
    }
    check_dim(state.position.len(), state.velocity.len())?;
    let exit = || GeoError::ChartExit {
        last_valid: Box::new(state.clone()),
    };
    let chart = |r: Result<(Vec<f64>, Vec<f64>)>| {
        r.map_err(|e| match e {
            GeoError::SingularChart { .. } | GeoError::SingularMetric { .. } => exit(),
            other => other,
        })
    };

    let half = 0.5 * dt;
    let (k1x, k1v) = chart(derivative(source, forcing, state))?;
    let s2 = offset(state, &k1x, &k1v, half, half);
    let (k2x, k2v) = chart(derivative(source, forcing, &s2))?;
    let s3 = offset(state, &k2x, &k2v, half, half);
    let (k3x, k3v) = chart(derivative(source, forcing, &s3))?;
    let s4 = offset(state, &k3x, &k3v, dt, dt);
    let (k4x, k4v) = chart(derivative(source, forcing, &s4))?;

    let combine = |base: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..base.len())
            .map(|i| base[i] + dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
            .collect()
    };
    let next = GeodesicState {
        position: combine(&state.position, &k1x, &k2x, &k3x, &k4x),
        velocity: combine(&state.velocity, &k1v, &k2v, &k3v, &k4v),
        time: state.time + dt,
    };
    if next.velocity.iter().any(|v| !v.is_finite()) || source.check_point(&next.position).is_err()
    {
        return Err(exit());
    }
    Ok(next)
}

/// Number of RK4 steps covering `horizon` at `dt`; tolerant of `T/dt` landing just below an integer.
pub fn step_count(horizon: f64, dt: f64) -> usize {
    (horizon / dt + 1e-9).floor() as usize
}

/// Repeated RK4 steps over `[t0, t0 + T]`. Leaving the chart truncates the
/// result at the last valid sample and sets `truncated`.
pub fn integrate_geodesic<F: Forcing + ?Sized>(
    initial: &GeodesicState,
    source: &MetricSource,
    forcing: &F,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(GeoError::invalid(format!("dt must be > 0, got {dt}")));
    }
    if !(horizon >= dt) {
        return Err(GeoError::invalid(format!(
            "horizon {horizon} must be at least dt {dt}"
        )));
    }
    source.check_point(&initial.position)?;
    check_dim(initial.position.len(), initial.velocity.len())?;
    let steps = step_count(horizon, dt);
    let t0 = initial.time;
    let mut traj = Trajectory::new(dt);
    traj.samples.reserve(steps + 1);
    traj.samples.push(initial.clone());
    let mut state = initial.clone();
    for k in 1..=steps {
        match geodesic_step(&state, source, forcing, dt) {
            Ok(mut next) => {
                next.time = t0 + k as f64 * dt;
                traj.samples.push(next.clone());
                state = next;
            }
            Err(GeoError::ChartExit { .. }) => {
                log::debug!("chart exit at t = {}", state.time);
                traj.truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(traj)
}

/// Trapezoidal length `int sqrt(v^T g v) dt` and energy `1/2 int v^T g v dt`.
pub fn path_length_energy(traj: &Trajectory, source: &MetricSource) -> Result<(f64, f64)> {
    if traj.samples.len() < 2 {
        return Err(GeoError::invalid("path needs at least two samples"));
    }
    let mut length = 0.0;
    let mut energy = 0.0;
    let last = traj.samples.len() - 1;
    for (i, s) in traj.samples.iter().enumerate() {
        check_dim(s.position.len(), s.velocity.len())?;
        let g = metric_at(source, &s.position)?;
        let q = g.inner(&s.velocity, &s.velocity);
        let w = if i == 0 || i == last { 0.5 } else { 1.0 };
        length += w * q.sqrt();
        energy += w * q;
    }
    Ok((length * traj.dt, 0.5 * energy * traj.dt))
}

/// Options for the shooting boundary-value solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShootingOptions {
    /// Accept when the endpoint miss is at most this.
    pub tol: f64,
    pub max_iters: usize,
    /// RK4 step on the unit parameter interval.
    pub dt: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions {
            tol: 1e-8,
            max_iters: 50,
            dt: 1e-2,
        }
    }
}

fn shoot_endpoint(a: &[f64], v: &[f64], source: &MetricSource, dt: f64) -> Option<Vec<f64>> {
    let traj = integrate_geodesic(
        &GeodesicState::new(a.to_vec(), v.to_vec()),
        source,
        &ZeroForcing,
        1.0,
        dt,
    )
    .ok()?;
    if traj.truncated {
        return None;
    }
    traj.last().map(|s| s.position.clone())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Geodesic from `a` to `b` on `t in [0, 1]` by single shooting with damped
/// Gauss-Newton on the endpoint miss. The initial guess is the chart chord `b - a`.
pub fn geodesic_between(
    a: &[f64],
    b: &[f64],
    source: &MetricSource,
    opts: &ShootingOptions,
) -> Result<Trajectory> {
    check_dim(a.len(), b.len())?;
    source.check_point(a)?;
    source.check_point(b)?;
    if a == b {
        return Err(GeoError::invalid("endpoints coincide"));
    }
    if !(opts.tol > 0.0 && opts.dt > 0.0 && opts.dt <= 1.0) {
        return Err(GeoError::invalid("shooting tolerance and dt must be positive, dt <= 1"));
    }
    let d = a.len();
    let miss_of = |end: &[f64]| -> Vec<f64> { end.iter().zip(b).map(|(e, t)| e - t).collect() };

    let mut v: Vec<f64> = b.iter().zip(a).map(|(y, x)| y - x).collect();
    let mut residual = match shoot_endpoint(a, &v, source, opts.dt) {
        Some(end) => miss_of(&end),
        None => {
            return Err(GeoError::NoGeodesic {
                iterations: 0,
                miss: f64::INFINITY,
            })
        }
    };
    let mut miss = norm(&residual);

    for iter in 0..=opts.max_iters {
        if miss <= opts.tol {
            log::debug!("shooting converged after {iter} iterations, miss {miss:e}");
            return integrate_geodesic(
                &GeodesicState::new(a.to_vec(), v),
                source,
                &ZeroForcing,
                1.0,
                opts.dt,
            );
        }
        if iter == opts.max_iters {
            break;
        }

        let mut jac = DMatrix::zeros(d, d);
        for k in 0..d {
            let h = 1e-7 * v[k].abs().max(1.0);
            let mut vp = v.clone();
            vp[k] += h;
            let end = shoot_endpoint(a, &vp, source, opts.dt).ok_or(GeoError::NoGeodesic {
                iterations: iter,
                miss,
            })?;
            for (i, r) in miss_of(&end).iter().enumerate() {
                jac[(i, k)] = (r - residual[i]) / h;
            }
        }
        let rhs = -DVector::from_column_slice(&residual);
        let delta = match jac.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|x| x.is_finite()) => s,
            _ => jac
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|_| GeoError::NoGeodesic { iterations: iter, miss })?,
        };

        // damping: halve the step while the miss does not decrease
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = v.iter().zip(delta.iter()).map(|(x, dx)| x + step * dx).collect();
            if let Some(end) = shoot_endpoint(a, &trial, source, opts.dt) {
                let r = miss_of(&end);
                let m = norm(&r);
                if m < miss {
                    v = trial;
                    residual = r;
                    miss = m;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(GeoError::NoGeodesic {
                iterations: iter + 1,
                miss,
            });
        }
    }
    Err(GeoError::NoGeodesic {
        iterations: opts.max_iters,
        miss,
    })
}
