//! Scenario builders and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use geomind::{metric_at, GeodesicState, MetricSource, Result, TokenEmbedding, TokenField, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_field(seed: u64, n: usize, dim: usize, bandwidth: f64, epsilon: f64) -> TokenField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = (0..n as u64)
        .map(|id| {
            let mean = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            TokenEmbedding::new(id, mean).with_weight(rng.random_range(0.5..2.0))
        })
        .collect();
    TokenField::new(dim, bandwidth, epsilon, tokens).unwrap()
}

/// A single token above the segment between two flanking points on the x axis.
pub fn bend_setup() -> (TokenField, Vec<f64>, Vec<f64>, u64) {
    let field = TokenField::new(
        2,
        1.0,
        0.5,
        vec![TokenEmbedding::new(7, vec![0.0, 1.5])],
    )
    .unwrap();
    (field, vec![-2.0, 0.0], vec![2.0, 0.0], 7)
}

/// Largest signed distance from the chord `a -> b` toward `toward` over all samples.
pub fn max_deviation_toward(traj: &Trajectory, a: &[f64], b: &[f64], toward: &[f64]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = (dx * dx + dy * dy).sqrt();
    let signed = |p: &[f64]| (dx * (p[1] - a[1]) - dy * (p[0] - a[0])) / len;
    let side = signed(toward).signum();
    traj.samples
        .iter()
        .map(|s| side * signed(&s.position))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Two tight clusters `separation` apart along the first axis.
pub fn two_clusters(separation: f64, bandwidth: f64, epsilon: f64) -> TokenField {
    let mut tokens = Vec::new();
    for (k, centre) in [0.0, separation].into_iter().enumerate() {
        for j in 0..3u64 {
            let offset = 0.1 * bandwidth * j as f64;
            tokens.push(TokenEmbedding::new(10 * k as u64 + j, vec![centre + offset, offset]));
        }
    }
    TokenField::new(2, bandwidth, epsilon, tokens).unwrap()
}

/// Unit-sphere great circle through the equator point (pi/2, 0) with chart
/// velocity (0.6, 0.8): exact chart position at time `t`.
pub fn great_circle_exact(t: f64) -> [f64; 2] {
    let (x, y, z) = (t.cos(), 0.8 * t.sin(), -0.6 * t.sin());
    [z.acos(), y.atan2(x)]
}

pub fn great_circle_start() -> GeodesicState {
    GeodesicState::new(vec![FRAC_PI_2, 0.0], vec![0.6, 0.8])
}

/// Discrete energy `1/2 sum g(mid)(dx, dx) / dt` of a sampled path on `[0, 1]`.
pub fn discrete_energy(points: &[Vec<f64>], source: &MetricSource) -> Result<f64> {
    let dt = 1.0 / (points.len() - 1) as f64;
    let mut e = 0.0;
    for w in points.windows(2) {
        let mid: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect();
        let dx: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| b - a).collect();
        e += 0.5 * metric_at(source, &mid)?.inner(&dx, &dx) / dt;
    }
    Ok(e)
}

/// `points + amp * sin(k pi t) * dir` with a random mode `k` and unit direction:
/// a smooth perturbation that keeps both endpoints.
pub fn perturb<R: Rng>(points: &[Vec<f64>], amp: f64, rng: &mut R) -> Vec<Vec<f64>> {
    let d = points[0].len();
    let k = rng.random_range(1..=3) as f64;
    let mut dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    dir.iter_mut().for_each(|x| *x /= n);
    let last = (points.len() - 1) as f64;
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let bump = amp * (k * std::f64::consts::PI * i as f64 / last).sin();
            p.iter().zip(&dir).map(|(x, u)| x + bump * u).collect()
        })
        .collect()
}

/// Brute-force nearest token: smallest distance, lowest id on ties.
pub fn brute_nearest(field: &TokenField, x: &[f64]) -> u64 {
    let mut best = (f64::INFINITY, u64::MAX);
    for t in field.tokens() {
        let d: f64 = t.mean.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 || (d == best.0 && t.id < best.1) {
            best = (d, t.id);
        }
    }
    best.1
}

/// Brute-force connectivity oracle: depth-first search over the token graph
/// whose edges are segments with sampled density >= `rho_min` (spacing h/16).
pub fn brute_components(field: &TokenField, rho_min: f64) -> usize {
    let toks = field.tokens();
    let n = toks.len();
    let h = field.bandwidth();
    let connected = |i: usize, j: usize| {
        let (a, b) = (&toks[i].mean, &toks[j].mean);
        let len = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let pieces = ((len / (h / 16.0)).ceil() as usize).max(1);
        (0..=pieces).all(|k| {
            let s = k as f64 / pieces as f64;
            let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect();
            geomind::density_at(field, &p).unwrap() >= rho_min
        })
    };
    let mut seen = vec![false; n];
    let mut count = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && connected(i, j) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}
