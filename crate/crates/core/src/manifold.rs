//! Data-driven and analytic metrics, connection coefficients and curvature.
//!
//! A [`TokenField`] induces the conformal metric `g(x) = I / (rho(x) + eps)`, where
//! `rho` is an unnormalized Gaussian kernel density over the token means. Dense
//! regions are therefore "short" and geodesics are drawn toward learned tokens.
//! Two analytic sources (flat space and the 2-sphere chart) exist as oracles.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_dim, GeoError, Result};

/// One embedded token: mean, covariance and feature weight.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbedding {
    pub id: u64,
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub weight: f64,
}

impl TokenEmbedding {
    /// Token with zero covariance and unit weight.
    pub fn new(id: u64, mean: Vec<f64>) -> Self {
        let d = mean.len();
        TokenEmbedding {
            id,
            mean,
            covariance: DMatrix::zeros(d, d),
            weight: 1.0,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_covariance(mut self, covariance: DMatrix<f64>) -> Self {
        self.covariance = covariance;
        self
    }

    pub fn with_diagonal_covariance(mut self, diag: &[f64]) -> Self {
        self.covariance = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag));
        self
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    /// True when every off-diagonal covariance entry is exactly zero.
    pub fn has_diagonal_covariance(&self) -> bool {
        let c = &self.covariance;
        (0..c.nrows()).all(|i| (0..c.ncols()).all(|j| i == j || c[(i, j)] == 0.0))
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        let fail = |reason: String| GeoError::Validation { id: self.id, reason };
        if self.mean.len() != dimension {
            return Err(fail(format!(
                "mean has dimension {}, field dimension is {dimension}",
                self.mean.len()
            )));
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(fail("mean has non-finite components".into()));
        }
        if !(self.weight.is_finite() && self.weight >= 0.0) {
            return Err(fail(format!("weight must be finite and >= 0, got {}", self.weight)));
        }
        let c = &self.covariance;
        if c.nrows() != dimension || c.ncols() != dimension {
            return Err(fail(format!(
                "covariance is {}x{}, expected {dimension}x{dimension}",
                c.nrows(),
                c.ncols()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(fail("covariance has non-finite entries".into()));
        }
        let scale = c.amax().max(1.0);
        for i in 0..dimension {
            for j in (i + 1)..dimension {
                if (c[(i, j)] - c[(j, i)]).abs() > 1e-12 * scale {
                    return Err(fail("covariance is not symmetric".into()));
                }
            }
        }
        if self.has_diagonal_covariance() {
            if let Some(v) = c.diagonal().iter().find(|v| **v < 0.0) {
                return Err(fail(format!("covariance has negative variance {v}")));
            }
        } else {
            let min = SymmetricEigen::new(c.clone()).eigenvalues.min();
            if min < -1e-12 * scale {
                return Err(fail(format!(
                    "covariance is not positive semidefinite (eigenvalue {min:e})"
                )));
            }
        }
        Ok(())
    }
}

/// A validated set of token embeddings plus the kernel parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenField {
    tokens: Vec<TokenEmbedding>,
    dimension: usize,
    bandwidth: f64,
    epsilon: f64,
}

impl TokenField {
    pub fn new(
        dimension: usize,
        bandwidth: f64,
        epsilon: f64,
        tokens: Vec<TokenEmbedding>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(GeoError::invalid("field dimension must be positive"));
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(GeoError::invalid(format!("bandwidth must be > 0, got {bandwidth}")));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(GeoError::invalid(format!("epsilon must be > 0, got {epsilon}")));
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &tokens {
            if !seen.insert(t.id) {
                return Err(GeoError::Validation {
                    id: t.id,
                    reason: "duplicate token id".into(),
                });
            }
            t.validate(dimension)?;
        }
        Ok(TokenField {
            tokens,
            dimension,
            bandwidth,
            epsilon,
        })
    }

    pub fn empty(dimension: usize, bandwidth: f64, epsilon: f64) -> Result<Self> {
        Self::new(dimension, bandwidth, epsilon, Vec::new())
    }

    pub fn tokens(&self) -> &[TokenEmbedding] {
        &self.tokens
    }

    pub fn token(&self, id: u64) -> Option<&TokenEmbedding> {
        self.tokens.iter().find(|t| t.id == id)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Mutable token access for crate-internal updates that cannot break invariants
    /// (mean moves of equal dimension, non-negative weight rescaling).
    pub(crate) fn tokens_mut(&mut self) -> &mut [TokenEmbedding] {
        &mut self.tokens
    }
}

/// Kernel density `rho(x) = sum_i w_i exp(-|x - v_i|^2 / (2 h^2))`.
pub fn density_at(field: &TokenField, x: &[f64]) -> Result<f64> {
    check_dim(field.dimension, x.len())?;
    let inv = 1.0 / (2.0 * field.bandwidth * field.bandwidth);
    Ok(field
        .tokens
        .iter()
        .map(|t| t.weight * (-sq_dist(x, &t.mean) * inv).exp())
        .sum())
}

/// Density and its gradient at `x`.
pub fn density_gradient(field: &TokenField, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_dim(field.dimension, x.len())?;
    let h2 = field.bandwidth * field.bandwidth;
    let mut rho = 0.0;
    let mut grad = vec![0.0; x.len()];
    for t in &field.tokens {
        let k = t.weight * (-sq_dist(x, &t.mean) / (2.0 * h2)).exp();
        rho += k;
        for (g, (xi, vi)) in grad.iter_mut().zip(x.iter().zip(&t.mean)) {
            *g -= k * (xi - vi) / h2;
        }
    }
    Ok((rho, grad))
}

/// Conformal factor `lambda = 1 / (rho + eps)`.
pub fn conformal_factor(field: &TokenField, x: &[f64]) -> Result<f64> {
    Ok(1.0 / (density_at(field, x)? + field.epsilon))
}

fn conformal_factor_gradient(field: &TokenField, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (rho, grad) = density_gradient(field, x)?;
    let denom = rho + field.epsilon;
    let lambda = 1.0 / denom;
    let scale = -1.0 / (denom * denom);
    Ok((lambda, grad.into_iter().map(|g| g * scale).collect()))
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Where the local geometry comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricSource {
    FieldConformal(TokenField),
    /// `g = scale * I` in any dimension.
    Flat { scale: f64 },
    /// Round 2-sphere of the given radius in the `(theta, phi)` chart.
    Sphere { radius: f64 },
}

impl MetricSource {
    pub fn conformal(field: TokenField) -> Self {
        MetricSource::FieldConformal(field)
    }

    pub fn flat() -> Self {
        MetricSource::Flat { scale: 1.0 }
    }

    pub fn sphere(radius: f64) -> Self {
        MetricSource::Sphere { radius }
    }

    /// Fixed dimension of the source, `None` for the dimension-agnostic flat metric.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            MetricSource::FieldConformal(f) => Some(f.dimension()),
            MetricSource::Flat { .. } => None,
            MetricSource::Sphere { .. } => Some(2),
        }
    }

    /// Checks that `x` is a valid chart point for this source.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if let Some(d) = self.dimension() {
            check_dim(d, x.len())?;
        } else if x.is_empty() {
            return Err(GeoError::invalid("point must have at least one coordinate"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::SingularChart { point: x.to_vec() });
        }
        if let MetricSource::Sphere { .. } = self {
            let theta = x[0];
            if !(theta > 0.0 && theta < std::f64::consts::PI) || theta.sin() == 0.0 {
                return Err(GeoError::SingularChart { point: x.to_vec() });
            }
        }
        Ok(())
    }
}

/// Metric components `g_{mu nu}` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTensor(pub DMatrix<f64>);

impl MetricTensor {
    pub fn components(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, mu: usize, nu: usize) -> f64 {
        self.0[(mu, nu)]
    }

    pub fn inverse(&self) -> Option<DMatrix<f64>> {
        self.0.clone().try_inverse()
    }

    /// `u^T g v`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let d = self.dimension();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += u[i] * self.0[(i, j)] * v[j];
            }
        }
        s
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.0.clone()).eigenvalues.min()
    }

    pub fn is_symmetric(&self) -> bool {
        self.0 == self.0.transpose()
    }
}

pub fn metric_at(source: &MetricSource, x: &[f64]) -> Result<MetricTensor> {
    source.check_point(x)?;
    let d = x.len();
    let g = match source {
        MetricSource::FieldConformal(field) => {
            DMatrix::identity(d, d) * conformal_factor(field, x)?
        }
        MetricSource::Flat { scale } => DMatrix::identity(d, d) * *scale,
        MetricSource::Sphere { radius } => {
            let r2 = radius * radius;
            let s = x[0].sin();
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![r2, r2 * s * s]))
        }
    };
    Ok(MetricTensor(g))
}

/// Connection coefficients `Gamma^mu_{nu lambda}`, stored `[mu][nu][lambda]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelSymbols {
    dim: usize,
    data: Vec<f64>,
}

impl ChristoffelSymbols {
    pub fn zeros(dim: usize) -> Self {
        ChristoffelSymbols {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    #[inline]
    fn idx(&self, mu: usize, nu: usize, lam: usize) -> usize {
        (mu * self.dim + nu) * self.dim + lam
    }

    pub fn get(&self, mu: usize, nu: usize, lam: usize) -> f64 {
        self.data[self.idx(mu, nu, lam)]
    }

    pub fn set(&mut self, mu: usize, nu: usize, lam: usize, value: f64) {
        let i = self.idx(mu, nu, lam);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `Gamma^mu_{nu lambda} v^nu v^lambda` for every `mu`.
    pub fn contract(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|mu| {
                let mut s = 0.0;
                for nu in 0..d {
                    if v[nu] == 0.0 {
                        continue;
                    }
                    for lam in 0..d {
                        s += self.get(mu, nu, lam) * v[nu] * v[lam];
                    }
                }
                s
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|Gamma^mu_{nu lambda} - Gamma^mu_{lambda nu}|`.
    pub fn lower_asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut m: f64 = 0.0;
        for mu in 0..d {
            for nu in 0..d {
                for lam in 0..d {
                    m = m.max((self.get(mu, nu, lam) - self.get(mu, lam, nu)).abs());
                }
            }
        }
        m
    }
}

/// Finite-difference step used for metric and connection derivatives.
pub fn fd_step(x: &[f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    1e-4 * norm.max(1.0)
}

/// Connection coefficients from the closed form of each source.
pub fn christoffel_at(source: &MetricSource, x: &[f64]) -> Result<ChristoffelSymbols> {
    source.check_point(x)?;
    let d = x.len();
    let mut gamma = ChristoffelSymbols::zeros(d);
    match source {
        MetricSource::Flat { scale } => {
            if *scale == 0.0 {
                return Err(GeoError::SingularMetric { point: x.to_vec() });
            }
        }
        MetricSource::Sphere { .. } => {
            let (s, c) = x[0].sin_cos();
            gamma.set(0, 1, 1, -s * c);
            gamma.set(1, 0, 1, c / s);
            gamma.set(1, 1, 0, c / s);
        }
        MetricSource::FieldConformal(field) => {
            let (lambda, grad) = conformal_factor_gradient(field, x)?;
            let half_inv = 0.5 / lambda;
            for mu in 0..d {
                for nu in 0..d {
                    for lam in 0..d {
                        let mut s = 0.0;
                        if mu == nu {
                            s += grad[lam];
                        }
                        if mu == lam {
                            s += grad[nu];
                        }
                        if nu == lam {
                            s -= grad[mu];
                        }
                        gamma.set(mu, nu, lam, half_inv * s);
                    }
                }
            }
        }
    }
    Ok(gamma)
}

/// Connection coefficients from central differences of `metric_at` and the
/// Levi-Civita formula. Works for any source; used as the independent route.
pub fn christoffel_numeric(source: &MetricSource, x: &[f64]) -> Result<ChristoffelSymbols> {
    let g = metric_at(source, x)?;
    let d = x.len();
    let ginv = g
        .inverse()
        .ok_or_else(|| GeoError::SingularMetric { point: x.to_vec() })?;
    let delta = fd_step(x);
    // dg[k][(i, j)] = d g_ij / d x^k
    let mut dg = Vec::with_capacity(d);
    let mut xp = x.to_vec();
    for k in 0..d {
        xp[k] = x[k] + delta;
        let plus = metric_at(source, &xp)?;
        xp[k] = x[k] - delta;
        let minus = metric_at(source, &xp)?;
        xp[k] = x[k];
        dg.push((plus.0 - minus.0) / (2.0 * delta));
    }
    let mut gamma = ChristoffelSymbols::zeros(d);
    for mu in 0..d {
        for nu in 0..d {
            for lam in nu..d {
                let mut s = 0.0;
                for rho in 0..d {
                    let term = dg[lam][(rho, nu)] + dg[nu][(rho, lam)] - dg[rho][(nu, lam)];
                    s += ginv[(mu, rho)] * term;
                }
                gamma.set(mu, nu, lam, 0.5 * s);
                gamma.set(mu, lam, nu, 0.5 * s);
            }
        }
    }
    Ok(gamma)
}

/// Riemann tensor `R^rho_{sigma mu nu}`, stored `[rho][sigma][mu][nu]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiemannTensor {
    dim: usize,
    data: Vec<f64>,
}

impl RiemannTensor {
    fn zeros(dim: usize) -> Self {
        RiemannTensor {
            dim,
            data: vec![0.0; dim.pow(4)],
        }
    }

    #[inline]
    fn idx(&self, rho: usize, sigma: usize, mu: usize, nu: usize) -> usize {
        ((rho * self.dim + sigma) * self.dim + mu) * self.dim + nu
    }

    pub fn get(&self, rho: usize, sigma: usize, mu: usize, nu: usize) -> f64 {
        self.data[self.idx(rho, sigma, mu, nu)]
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureReport {
    pub riemann: RiemannTensor,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
}

/// Riemann tensor from central differences of the connection plus the quadratic
/// terms, contracted to Ricci and scalar curvature with the inverse metric.
pub fn curvature_at(source: &MetricSource, x: &[f64]) -> Result<CurvatureReport> {
    let g = metric_at(source, x)?;
    let ginv = g
        .inverse()
        .ok_or_else(|| GeoError::SingularMetric { point: x.to_vec() })?;
    let d = x.len();
    let gamma = christoffel_at(source, x)?;
    let delta = fd_step(x);

    // dgamma[k] holds d Gamma / d x^k
    let mut dgamma = Vec::with_capacity(d);
    let mut xp = x.to_vec();
    for k in 0..d {
        xp[k] = x[k] + delta;
        let plus = christoffel_at(source, &xp)?;
        xp[k] = x[k] - delta;
        let minus = christoffel_at(source, &xp)?;
        xp[k] = x[k];
        let data = plus
            .data
            .iter()
            .zip(&minus.data)
            .map(|(p, m)| (p - m) / (2.0 * delta))
            .collect();
        dgamma.push(ChristoffelSymbols { dim: d, data });
    }

    let mut riemann = RiemannTensor::zeros(d);
    // half[mu][nu] = d_mu Gamma^rho_{nu sigma} + Gamma^rho_{mu lam} Gamma^lam_{nu sigma};
    // R = half[mu][nu] - half[nu][mu] is then exactly antisymmetric in (mu, nu).
    let mut half = vec![0.0; d * d];
    for rho in 0..d {
        for sigma in 0..d {
            for mu in 0..d {
                for nu in 0..d {
                    let mut s = dgamma[mu].get(rho, nu, sigma);
                    for lam in 0..d {
                        s += gamma.get(rho, mu, lam) * gamma.get(lam, nu, sigma);
                    }
                    half[mu * d + nu] = s;
                }
            }
            for mu in 0..d {
                for nu in 0..d {
                    let i = riemann.idx(rho, sigma, mu, nu);
                    riemann.data[i] = half[mu * d + nu] - half[nu * d + mu];
                }
            }
        }
    }

    let mut ricci = DMatrix::zeros(d, d);
    for sigma in 0..d {
        for nu in 0..d {
            ricci[(sigma, nu)] = (0..d).map(|rho| riemann.get(rho, sigma, rho, nu)).sum();
        }
    }
    let scalar = (0..d)
        .flat_map(|s| (0..d).map(move |n| (s, n)))
        .map(|(s, n)| ginv[(s, n)] * ricci[(s, n)])
        .sum();

    Ok(CurvatureReport {
        riemann,
        ricci,
        scalar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4};

    fn one_token(eps: f64) -> TokenField {
        TokenField::new(2, 1.0, eps, vec![TokenEmbedding::new(0, vec![0.0, 0.0])]).unwrap()
    }

    #[test]
    fn density_examples() {
        let empty = TokenField::empty(2, 1.0, 1.0).unwrap();
        assert_eq!(density_at(&empty, &[3.0, -1.0]).unwrap(), 0.0);
        let f = one_token(1.0);
        assert_eq!(density_at(&f, &[0.0, 0.0]).unwrap(), 1.0);
        // r = sqrt(2 ln 2) ~ 1.17741 gives half the peak
        let rho = density_at(&f, &[1.17741, 0.0]).unwrap();
        assert!((rho - 0.5).abs() < 1e-5, "{rho}");
        assert!(matches!(
            density_at(&f, &[0.0]),
            Err(GeoError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn metric_examples() {
        let empty = MetricSource::conformal(TokenField::empty(3, 1.0, 1.0).unwrap());
        let g = metric_at(&empty, &[0.3, 0.1, 2.0]).unwrap();
        assert_eq!(g.0, DMatrix::identity(3, 3));

        let g = metric_at(&MetricSource::conformal(one_token(1.0)), &[0.0, 0.0]).unwrap();
        assert_eq!(g.0, DMatrix::identity(2, 2) * 0.5);

        let g = metric_at(&MetricSource::sphere(1.0), &[FRAC_PI_2, 0.0]).unwrap();
        assert_eq!(g.0, DMatrix::identity(2, 2));

        let flat = metric_at(&MetricSource::Flat { scale: 4.0 }, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(flat.0, DMatrix::identity(4, 4) * 4.0);
    }

    #[test]
    fn sphere_pole_is_singular_chart() {
        let s = MetricSource::sphere(1.0);
        assert!(matches!(metric_at(&s, &[0.0, 1.0]), Err(GeoError::SingularChart { .. })));
        assert!(matches!(
            christoffel_at(&s, &[std::f64::consts::PI, 1.0]),
            Err(GeoError::SingularChart { .. })
        ));
    }

    #[test]
    fn sphere_christoffel_closed_form() {
        let g = christoffel_at(&MetricSource::sphere(1.0), &[FRAC_PI_4, 0.0]).unwrap();
        assert!((g.get(0, 1, 1) + 0.5).abs() < 1e-12);
        assert!((g.get(1, 0, 1) - 1.0).abs() < 1e-12);
        assert!((g.get(1, 1, 0) - 1.0).abs() < 1e-12);
        assert_eq!(g.get(0, 0, 0), 0.0);
    }

    #[test]
    fn flat_has_no_connection_or_curvature() {
        let flat = MetricSource::Flat { scale: 2.5 };
        let x = [0.4, -1.2, 7.0];
        assert_eq!(christoffel_at(&flat, &x).unwrap().max_abs(), 0.0);
        assert_eq!(christoffel_numeric(&flat, &x).unwrap().max_abs(), 0.0);
        let c = curvature_at(&flat, &x).unwrap();
        assert_eq!(c.riemann.max_abs(), 0.0);
        assert_eq!(c.scalar, 0.0);
    }

    #[test]
    fn conformal_closed_form_matches_finite_difference() {
        let src = MetricSource::conformal(one_token(1.0));
        let x = [0.5, 0.5];
        let closed = christoffel_at(&src, &x).unwrap();
        let fd = christoffel_numeric(&src, &x).unwrap();
        for (a, b) in closed.as_slice().iter().zip(fd.as_slice()) {
            assert!((a - b).abs() <= 1e-4, "{a} vs {b}");
        }
        assert_eq!(closed.lower_asymmetry(), 0.0);
        assert_eq!(fd.lower_asymmetry(), 0.0);
    }

    #[test]
    fn sphere_scalar_curvature() {
        let c = curvature_at(&MetricSource::sphere(1.0), &[FRAC_PI_3, 1.0]).unwrap();
        assert!((c.scalar - 2.0).abs() < 1e-3, "{}", c.scalar);
        let c = curvature_at(&MetricSource::sphere(2.0), &[1.0, 0.3]).unwrap();
        assert!((c.scalar - 0.5).abs() < 1e-3, "{}", c.scalar);
    }

    #[test]
    fn riemann_antisymmetric_in_last_pair() {
        let f = TokenField::new(
            3,
            0.8,
            0.5,
            vec![
                TokenEmbedding::new(1, vec![0.0, 0.0, 0.0]),
                TokenEmbedding::new(2, vec![1.0, 0.5, -0.3]).with_weight(2.0),
            ],
        )
        .unwrap();
        let c = curvature_at(&MetricSource::conformal(f), &[0.3, 0.2, 0.1]).unwrap();
        let d = 3;
        for r in 0..d {
            for s in 0..d {
                for m in 0..d {
                    for n in 0..d {
                        let sum = c.riemann.get(r, s, m, n) + c.riemann.get(r, s, n, m);
                        assert!(sum.abs() <= 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn field_validation_errors() {
        let dup = TokenField::new(
            1,
            1.0,
            1.0,
            vec![TokenEmbedding::new(4, vec![0.0]), TokenEmbedding::new(4, vec![1.0])],
        );
        assert!(matches!(dup, Err(GeoError::Validation { id: 4, .. })));

        let neg = TokenField::new(1, 1.0, 1.0, vec![TokenEmbedding::new(1, vec![0.0]).with_weight(-1.0)]);
        assert!(matches!(neg, Err(GeoError::Validation { id: 1, .. })));

        let not_psd = TokenEmbedding::new(9, vec![0.0, 0.0])
            .with_covariance(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(matches!(
            TokenField::new(2, 1.0, 1.0, vec![not_psd]),
            Err(GeoError::Validation { id: 9, .. })
        ));

        assert!(TokenField::empty(2, 0.0, 1.0).is_err());
        assert!(TokenField::empty(2, 1.0, 0.0).is_err());
    }

    #[test]
    fn raising_a_weight_raises_density_and_lowers_lambda() {
        let base = one_token(0.5);
        let mut heavier = base.clone();
        heavier.tokens_mut()[0].weight = 1.5;
        let at = [0.0, 0.0];
        assert!(density_at(&heavier, &at).unwrap() > density_at(&base, &at).unwrap());
        assert!(conformal_factor(&heavier, &at).unwrap() < conformal_factor(&base, &at).unwrap());
    }
}
