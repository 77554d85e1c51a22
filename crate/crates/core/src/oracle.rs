//! Analytic reference energies.
//!
//! [`GaussianScaleMixturePrior`] (isotropic zero-mean components) and
//! [`GaussianFieldPrior`] (stationary Gaussian field, diagonal in the DCT
//! basis) give exact energies, data scores, covariance scores and posterior
//! means for any diagonal noise covariance. Everything the learned model and
//! the samplers do is checked against these.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::covariance::{DiagonalCovariance, Domain, GroupPartition, Shape};
use crate::energymodel::Energy;
use crate::error::{Error, Result};
use crate::numerics::{logsumexp, softmax};
use crate::record::Record;
use crate::spectral;

/// Mixture of zero-mean isotropic Gaussians `sum_i w_i N(0, s_i^2 I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScaleMixturePrior {
    weights: Vec<f64>,
    variances: Vec<f64>,
    dim: usize,
}

impl GaussianScaleMixturePrior {
    pub fn new(weights: Vec<f64>, variances: Vec<f64>, dim: usize) -> Result<Self> {
        if weights.is_empty() || weights.len() != variances.len() {
            return Err(Error::param("need matching, non-empty weights and variances"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) || variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::param("weights and variances must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!("weights sum to {total}, not 1")));
        }
        if dim == 0 {
            return Err(Error::dim("dimension must be positive"));
        }
        Ok(Self { weights, variances, dim })
    }

    /// A single isotropic Gaussian `N(0, c I)`.
    pub fn gaussian(variance: f64, dim: usize) -> Result<Self> {
        Self::new(vec![1.0], vec![variance], dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    fn check(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<()> {
        if y.len() != self.dim || cov.len() != self.dim {
            return Err(Error::dim(format!(
                "prior has dimension {}, got y of {} and covariance of {}",
                self.dim,
                y.len(),
                cov.len()
            )));
        }
        Ok(())
    }

    /// Per-component log joint terms (unnormalized responsibilities) in the
    /// covariance eigenbasis coordinates `c`.
    fn component_logs(&self, c: &[f64], phi: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.variances)
            .map(|(w, s2)| {
                let mut quad = 0.0;
                let mut logdet = 0.0;
                for (x, p) in c.iter().zip(phi) {
                    let v = s2 + p;
                    quad += x * x / v;
                    logdet += (2.0 * PI * v).ln();
                }
                -0.5 * quad - 0.5 * logdet + w.ln()
            })
            .collect()
    }

    /// Posterior probability of each mixture component given `y`.
    pub fn responsibilities(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<Vec<f64>> {
        self.check(y, cov)?;
        let c = cov.to_basis(y)?;
        Ok(softmax(&self.component_logs(&c, cov.phi())).0)
    }

    /// `-log p(y | Sigma)`.
    pub fn energy(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<f64> {
        self.check(y, cov)?;
        let c = cov.to_basis(y)?;
        Ok(-logsumexp(&self.component_logs(&c, cov.phi())))
    }

    pub fn grad_y(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<Vec<f64>> {
        self.check(y, cov)?;
        let c = cov.to_basis(y)?;
        let (p, _) = softmax(&self.component_logs(&c, cov.phi()));
        let g: Vec<f64> = c
            .iter()
            .zip(cov.phi())
            .map(|(x, ph)| {
                p.iter()
                    .zip(&self.variances)
                    .map(|(pi, s2)| pi * x / (s2 + ph))
                    .sum()
            })
            .collect();
        cov.from_basis(&g)
    }

    /// Per-coordinate `dU/dphi_j` in the covariance eigenbasis.
    pub fn grad_phi(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<Vec<f64>> {
        self.check(y, cov)?;
        let c = cov.to_basis(y)?;
        let (p, _) = softmax(&self.component_logs(&c, cov.phi()));
        Ok(c.iter()
            .zip(cov.phi())
            .map(|(x, ph)| {
                p.iter()
                    .zip(&self.variances)
                    .map(|(pi, s2)| {
                        let inv = 1.0 / (s2 + ph);
                        pi * (0.5 * inv - 0.5 * (inv * x).powi(2))
                    })
                    .sum()
            })
            .collect())
    }

    /// Group-aggregated covariance score.
    pub fn grad_phi_grouped(
        &self,
        y: &[f64],
        cov: &DiagonalCovariance,
        partition: &GroupPartition,
    ) -> Result<Vec<f64>> {
        if partition.dim() != self.dim {
            return Err(Error::dim("partition does not cover the prior dimension"));
        }
        Ok(partition.aggregate(&self.grad_phi(y, cov)?))
    }

    /// Closed-form `E[x | y, Sigma]`: responsibility-weighted per-component
    /// Wiener shrinkage.
    pub fn posterior_mean(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<Vec<f64>> {
        self.check(y, cov)?;
        let c = cov.to_basis(y)?;
        let (p, _) = softmax(&self.component_logs(&c, cov.phi()));
        let m: Vec<f64> = c
            .iter()
            .zip(cov.phi())
            .map(|(x, ph)| {
                p.iter()
                    .zip(&self.variances)
                    .map(|(pi, s2)| pi * s2 / (s2 + ph) * x)
                    .sum()
            })
            .collect();
        cov.from_basis(&m)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let s = self.variances[k].sqrt();
        (0..self.dim)
            .map(|_| s * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect()
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        r.set("kind", "gsm");
        r.set("dim", self.dim);
        r.set_floats("weights", &self.weights);
        r.set_floats("variances", &self.variances);
        r
    }

    pub fn from_record(r: &Record) -> Result<Self> {
        Self::new(r.list("weights")?, r.list("variances")?, r.get("dim")?)
    }
}

impl Energy for GaussianScaleMixturePrior {
    fn dim(&self) -> usize {
        self.dim
    }

    fn energy(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<f64> {
        GaussianScaleMixturePrior::energy(self, y, cov)
    }

    fn grad_input(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<Vec<f64>> {
        self.grad_y(y, cov)
    }

    fn grad_cov(&self, y: &[f64], cov: &DiagonalCovariance, partition: &GroupPartition) -> Result<Vec<f64>> {
        self.grad_phi_grouped(y, cov, partition)
    }

    fn natural_partition(&self) -> GroupPartition {
        GroupPartition::singletons(self.dim)
    }
}

type Factor = Cholesky<f64, Dyn>;

/// Factorizations kept for recently used covariances.
const CACHE_SLOTS: usize = 4;

/// Stationary Gaussian field `N(0, C)` with `C = D^T diag(c) D`, `D` the
/// orthonormal DCT.
#[derive(Debug)]
pub struct GaussianFieldPrior {
    spectrum: Vec<f64>,
    shape: Shape,
    cache: Mutex<Vec<(Vec<f64>, Arc<Factor>)>>,
    dense_prior: OnceLock<DMatrix<f64>>,
}

impl Clone for GaussianFieldPrior {
    fn clone(&self) -> Self {
        Self {
            spectrum: self.spectrum.clone(),
            shape: self.shape,
            cache: Mutex::new(Vec::new()),
            dense_prior: OnceLock::new(),
        }
    }
}

impl PartialEq for GaussianFieldPrior {
    fn eq(&self, other: &Self) -> bool {
        self.spectrum == other.spectrum && self.shape == other.shape
    }
}

impl GaussianFieldPrior {
    pub fn new(spectrum: Vec<f64>, shape: Shape) -> Result<Self> {
        if spectrum.len() != shape.len {
            return Err(Error::dim("spectrum length does not match shape"));
        }
        if spectrum.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::param("field spectrum must be positive and finite"));
        }
        Ok(Self {
            spectrum,
            shape,
            cache: Mutex::new(Vec::new()),
            dense_prior: OnceLock::new(),
        })
    }

    /// Power-law spectrum `c_k ∝ (omega_k^2 + cutoff^2)^(-exponent)`, scaled
    /// to unit average pixel variance.
    pub fn power_law(shape: Shape, exponent: f64, cutoff: f64) -> Result<Self> {
        if !(cutoff > 0.0) {
            return Err(Error::param("cutoff must be positive"));
        }
        let raw: Vec<f64> = spectral::frequencies_squared(shape.len, shape.grid)
            .into_iter()
            .map(|w2| (w2 + cutoff * cutoff).powf(-exponent))
            .collect();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        Self::new(raw.into_iter().map(|c| c / mean).collect(), shape)
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    fn check(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<()> {
        if y.len() != self.shape.len || cov.shape() != self.shape {
            return Err(Error::dim("field prior, measurement and covariance shapes differ"));
        }
        Ok(())
    }

    /// Dense prior covariance `C` in pixel coordinates.
    pub fn prior_covariance(&self) -> DMatrix<f64> {
        self.dense_prior
            .get_or_init(|| self.dense_in_pixels(|k| self.spectrum[k]))
            .clone()
    }

    fn dense_in_pixels(&self, f: impl Fn(usize) -> f64) -> DMatrix<f64> {
        let n = self.shape.len;
        let d = DMatrix::from_row_slice(n, n, &spectral::basis_matrix(n, self.shape.grid));
        let mut scaled = d.clone();
        for (k, mut row) in scaled.row_iter_mut().enumerate() {
            row *= f(k);
        }
        d.tr_mul(&scaled)
    }

    /// Cholesky factor of `C + Sigma` for a spatial-domain `Sigma`.
    fn marginal_factor(&self, cov: &DiagonalCovariance) -> Result<Arc<Factor>> {
        if let Some((_, f)) = self.cache.lock().unwrap().iter().find(|(phi, _)| phi.as_slice() == cov.phi()) {
            return Ok(Arc::clone(f));
        }
        let mut k = self.prior_covariance();
        for (i, p) in cov.phi().iter().enumerate() {
            k[(i, i)] += p;
        }
        let f = Arc::new(
            Cholesky::new(k).ok_or_else(|| Error::Contract("C + Sigma is not positive definite".into()))?,
        );
        let mut guard = self.cache.lock().unwrap();
        if guard.len() == CACHE_SLOTS {
            guard.remove(0);
        }
        guard.push((cov.phi().to_vec(), Arc::clone(&f)));
        Ok(f)
    }

    pub fn energy(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<f64> {
        self.check(y, cov)?;
        let n = y.len() as f64;
        match cov.domain() {
            Domain::Spectral => {
                let c = cov.to_basis(y)?;
                let mut quad = 0.0;
                let mut logdet = 0.0;
                for ((x, s), p) in c.iter().zip(&self.spectrum).zip(cov.phi()) {
                    quad += x * x / (s + p);
                    logdet += (s + p).ln();
                }
                Ok(0.5 * quad + 0.5 * logdet + 0.5 * n * (2.0 * PI).ln())
            }
            Domain::Spatial => {
                let f = self.marginal_factor(cov)?;
                let yv = DVector::from_column_slice(y);
                let sol = f.solve(&yv);
                let logdet: f64 = f.l_dirty().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
                Ok(0.5 * yv.dot(&sol) + 0.5 * logdet + 0.5 * n * (2.0 * PI).ln())
            }
        }
    }

    pub fn grad_y(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<Vec<f64>> {
        self.check(y, cov)?;
        match cov.domain() {
            Domain::Spectral => {
                let c = cov.to_basis(y)?;
                let g: Vec<f64> = c
                    .iter()
                    .zip(&self.spectrum)
                    .zip(cov.phi())
                    .map(|((x, s), p)| x / (s + p))
                    .collect();
                cov.from_basis(&g)
            }
            Domain::Spatial => {
                let f = self.marginal_factor(cov)?;
                Ok(f.solve(&DVector::from_column_slice(y)).as_slice().to_vec())
            }
        }
    }

    /// Per-coordinate `dU/dphi_j` in the covariance eigenbasis:
    /// `0.5 [K^-1]_jj - 0.5 [K^-1 y]_j^2` with `K = C + Sigma`.
    pub fn grad_phi(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<Vec<f64>> {
        self.check(y, cov)?;
        match cov.domain() {
            Domain::Spectral => {
                let c = cov.to_basis(y)?;
                Ok(c.iter()
                    .zip(&self.spectrum)
                    .zip(cov.phi())
                    .map(|((x, s), p)| {
                        let inv = 1.0 / (s + p);
                        0.5 * inv - 0.5 * (inv * x).powi(2)
                    })
                    .collect())
            }
            Domain::Spatial => {
                let f = self.marginal_factor(cov)?;
                let kinv = f.inverse();
                let g = f.solve(&DVector::from_column_slice(y));
                Ok((0..y.len())
                    .map(|j| 0.5 * kinv[(j, j)] - 0.5 * g[j] * g[j])
                    .collect())
            }
        }
    }

    /// Closed-form Wiener filter. Spectral noise: `c/(c+phi)` per coefficient.
    /// Spatial noise: `(C^-1 + Sigma^-1)^-1 Sigma^-1 y`.
    pub fn posterior_mean(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<Vec<f64>> {
        self.check(y, cov)?;
        match cov.domain() {
            Domain::Spectral => {
                let c = cov.to_basis(y)?;
                let m: Vec<f64> = c
                    .iter()
                    .zip(&self.spectrum)
                    .zip(cov.phi())
                    .map(|((x, s), p)| s / (s + p) * x)
                    .collect();
                cov.from_basis(&m)
            }
            Domain::Spatial => {
                let prec = self.posterior_precision(cov);
                let rhs = DVector::from_iterator(y.len(), y.iter().zip(cov.phi()).map(|(v, p)| v / p));
                let f = Cholesky::new(prec)
                    .ok_or_else(|| Error::Contract("posterior precision is not positive definite".into()))?;
                Ok(f.solve(&rhs).as_slice().to_vec())
            }
        }
    }

    fn posterior_precision(&self, cov: &DiagonalCovariance) -> DMatrix<f64> {
        let mut prec = self.dense_in_pixels(|k| 1.0 / self.spectrum[k]);
        for (i, p) in cov.phi().iter().enumerate() {
            prec[(i, i)] += 1.0 / p;
        }
        prec
    }

    /// Dense posterior covariance of `x | y` in pixel coordinates.
    pub fn posterior_covariance(&self, cov: &DiagonalCovariance) -> Result<DMatrix<f64>> {
        if cov.shape() != self.shape {
            return Err(Error::dim("covariance shape differs from field shape"));
        }
        match cov.domain() {
            Domain::Spectral => Ok(self.dense_in_pixels(|k| {
                let (s, p) = (self.spectrum[k], cov.phi()[k]);
                s * p / (s + p)
            })),
            Domain::Spatial => Cholesky::new(self.posterior_precision(cov))
                .map(|f| f.inverse())
                .ok_or_else(|| Error::Contract("posterior precision is not positive definite".into())),
        }
    }

    /// Exact `log p(x | y, Sigma)`.
    pub fn posterior_log_density(&self, x: &[f64], y: &[f64], cov: &DiagonalCovariance) -> Result<f64> {
        let mean = self.posterior_mean(y, cov)?;
        let pc = self.posterior_covariance(cov)?;
        let f = Cholesky::new(pc).ok_or_else(|| Error::Contract("posterior covariance is singular".into()))?;
        let r = DVector::from_iterator(x.len(), x.iter().zip(&mean).map(|(a, b)| a - b));
        let quad = r.dot(&f.solve(&r));
        let logdet: f64 = f.l_dirty().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        Ok(-0.5 * (quad + logdet + x.len() as f64 * (2.0 * PI).ln()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let c: Vec<f64> = self
            .spectrum
            .iter()
            .map(|s| s.sqrt() * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect();
        spectral::inverse(&c, self.shape.grid)
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        r.set("kind", "field");
        r.set_usizes("dims", &self.shape.to_dims());
        r.set_floats("spectrum", &self.spectrum);
        r
    }

    pub fn from_record(r: &Record) -> Result<Self> {
        let shape = Shape::from_dims(&r.list::<usize>("dims")?)?;
        if r.contains("spectrum") {
            Self::new(r.list("spectrum")?, shape)
        } else {
            Self::power_law(shape, r.get_or("exponent", 1.0)?, r.get_or("cutoff", 0.5)?)
        }
    }
}

impl Energy for GaussianFieldPrior {
    fn dim(&self) -> usize {
        self.shape.len
    }

    fn energy(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<f64> {
        GaussianFieldPrior::energy(self, y, cov)
    }

    fn grad_input(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<Vec<f64>> {
        self.grad_y(y, cov)
    }

    fn grad_cov(&self, y: &[f64], cov: &DiagonalCovariance, partition: &GroupPartition) -> Result<Vec<f64>> {
        if partition.dim() != self.shape.len {
            return Err(Error::dim("partition does not cover the field"));
        }
        Ok(partition.aggregate(&self.grad_phi(y, cov)?))
    }

    fn natural_partition(&self) -> GroupPartition {
        GroupPartition::singletons(self.shape.len)
    }
}

/// Either analytic prior, as loaded from a spec record.
#[derive(Debug, Clone, PartialEq)]
pub enum OraclePrior {
    Gsm(GaussianScaleMixturePrior),
    Field(GaussianFieldPrior),
}

impl OraclePrior {
    pub fn from_record(r: &Record) -> Result<Self> {
        match r.str("kind")? {
            "gsm" => Ok(Self::Gsm(GaussianScaleMixturePrior::from_record(r)?)),
            "field" => Ok(Self::Field(GaussianFieldPrior::from_record(r)?)),
            other => Err(Error::parse(format!("unknown prior kind `{other}`"))),
        }
    }

    pub fn to_record(&self) -> Record {
        match self {
            Self::Gsm(p) => p.to_record(),
            Self::Field(p) => p.to_record(),
        }
    }

    pub fn as_energy(&self) -> &dyn Energy {
        match self {
            Self::Gsm(p) => p,
            Self::Field(p) => p,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Self::Gsm(p) => p.sample(rng),
            Self::Field(p) => p.sample(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{make_box_covariance, make_blur_covariance, PhiBounds};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spatial(phi: Vec<f64>) -> DiagonalCovariance {
        let n = phi.len();
        DiagonalCovariance::new(Domain::Spatial, Shape::flat(n), phi, PhiBounds::default()).unwrap()
    }

    #[test]
    fn single_component_scalar_energy() {
        let p = GaussianScaleMixturePrior::gaussian(1.0, 1).unwrap();
        let u = p.energy(&[2.0], &spatial(vec![3.0])).unwrap();
        let want = 0.5 + 0.5 * (8.0 * PI).ln();
        assert!((u - want).abs() < 1e-14);
    }

    #[test]
    fn degenerate_mixture_matches_single() {
        let one = GaussianScaleMixturePrior::gaussian(2.0, 3).unwrap();
        let two = GaussianScaleMixturePrior::new(vec![0.3, 0.7], vec![2.0, 2.0], 3).unwrap();
        let cov = spatial(vec![0.5, 1.5, 0.01]);
        for y in [[0.0, 0.0, 0.0], [1.0, -2.0, 3.0], [10.0, 0.1, -5.0]] {
            let a = one.energy(&y, &cov).unwrap();
            let b = two.energy(&y, &cov).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_component_closed_form() {
        // Term-by-term: component i has variances (s_i + phi_j).
        let p = GaussianScaleMixturePrior::new(vec![0.5, 0.5], vec![1.0, 16.0], 2).unwrap();
        let cov = spatial(vec![1.0, 4.0]);
        let y = [1.0, -1.0];
        let term = |s: f64| {
            let v = [s + 1.0, s + 4.0];
            -0.5 * (1.0 / v[0] + 1.0 / v[1])
                - 0.5 * ((2.0 * PI * v[0]).ln() + (2.0 * PI * v[1]).ln())
                + 0.5f64.ln()
        };
        let (a, b) = (term(1.0), term(16.0));
        let want = -(a.max(b) + ((a - a.max(b)).exp() + (b - a.max(b)).exp()).ln());
        assert!((p.energy(&y, &cov).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn scores_at_origin_and_single_component() {
        let p = GaussianScaleMixturePrior::new(vec![0.5, 0.5], vec![1.0, 16.0], 3).unwrap();
        let cov = spatial(vec![0.2, 2.0, 50.0]);
        assert!(p.grad_y(&[0.0; 3], &cov).unwrap().iter().all(|g| *g == 0.0));

        let g1 = GaussianScaleMixturePrior::gaussian(2.0, 3).unwrap();
        let y = [1.0, -3.0, 0.5];
        let g = g1.grad_y(&y, &cov).unwrap();
        for j in 0..3 {
            assert!((g[j] - y[j] / (2.0 + cov.phi()[j])).abs() < 1e-15);
        }
    }

    #[test]
    fn covariance_score_stationary_point_and_grouping() {
        let g1 = GaussianScaleMixturePrior::gaussian(1.0, 2).unwrap();
        let cov = spatial(vec![3.0, 1.0]);
        // y_0^2 = s^2 + phi_0
        let s = g1.grad_phi(&[2.0, 0.7], &cov).unwrap();
        assert!(s[0].abs() < 1e-15);

        let p = GaussianScaleMixturePrior::new(vec![0.5, 0.5], vec![1.0, 16.0], 4).unwrap();
        let cov = spatial(vec![0.5, 0.5, 2.0, 2.0]);
        let y = [0.3, -1.0, 2.0, 0.1];
        let per = p.grad_phi(&y, &cov).unwrap();
        let grouped = p
            .grad_phi_grouped(&y, &cov, &GroupPartition::halves(4).unwrap())
            .unwrap();
        assert!((grouped[0] - per[0] - per[1]).abs() < 1e-15);
        assert!((grouped[1] - per[2] - per[3]).abs() < 1e-15);
    }

    #[test]
    fn tweedie_route_matches_closed_form_mixture_mean() {
        let p = GaussianScaleMixturePrior::new(vec![0.3, 0.7], vec![1.0, 16.0], 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let phi: Vec<f64> = (0..5).map(|_| 10f64.powf(rng.random_range(-3.0..2.0))).collect();
            let cov = spatial(phi);
            let y: Vec<f64> = (0..5).map(|_| rng.random_range(-6.0..6.0)).collect();
            let closed = p.posterior_mean(&y, &cov).unwrap();
            let tweedie = Energy::posterior_mean(&p, &y, &cov).unwrap();
            for (a, b) in closed.iter().zip(&tweedie) {
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn scalar_wiener_and_noiseless_limit() {
        let f = GaussianFieldPrior::new(vec![1.0], Shape::flat(1)).unwrap();
        let cov = spatial(vec![1.0]);
        assert!((f.posterior_mean(&[2.0], &cov).unwrap()[0] - 1.0).abs() < 1e-14);
        let floor = spatial(vec![1e-9]);
        assert!((f.posterior_mean(&[2.0], &floor).unwrap()[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn posterior_mean_shrinks_as_noise_grows() {
        let p = GaussianScaleMixturePrior::gaussian(1.5, 2).unwrap();
        let y = [2.0, -1.0];
        let mut prev = y.map(f64::abs).to_vec();
        for phi in [0.01, 0.1, 1.0, 10.0] {
            let m = p.posterior_mean(&y, &spatial(vec![phi; 2])).unwrap();
            for (a, b) in m.iter().zip(&prev) {
                assert!(a.abs() < *b);
            }
            prev = m.iter().map(|v| v.abs()).collect();
        }
    }

    #[test]
    fn field_spatial_and_spectral_routes_agree_for_isotropic_noise() {
        let f = GaussianFieldPrior::power_law(Shape::grid(4, 4), 1.0, 0.5).unwrap();
        let b = PhiBounds::default();
        let sp = DiagonalCovariance::uniform(Domain::Spatial, Shape::grid(4, 4), 0.3, b).unwrap();
        let fr = DiagonalCovariance::uniform(Domain::Spectral, Shape::grid(4, 4), 0.3, b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = f.sample(&mut rng);
        assert!((f.energy(&y, &sp).unwrap() - f.energy(&y, &fr).unwrap()).abs() < 1e-10);
        let (ga, gb) = (f.grad_y(&y, &sp).unwrap(), f.grad_y(&y, &fr).unwrap());
        assert!(crate::numerics::rel_err(&ga, &gb, 1e-12) < 1e-10);
    }

    #[test]
    fn field_wiener_matches_tweedie_for_box_and_blur() {
        let shape = Shape::grid(6, 6);
        let f = GaussianFieldPrior::power_law(shape, 1.0, 0.5).unwrap();
        let b = PhiBounds::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let covs = [
            make_box_covariance(6, 6, 3, 1.0, 0.05, b).unwrap(),
            make_blur_covariance(shape, 1.0, 0.1, 1e-2, b).unwrap(),
        ];
        for cov in &covs {
            let y = f.sample(&mut rng);
            let wiener = f.posterior_mean(&y, cov).unwrap();
            let tweedie = Energy::posterior_mean(&f, &y, cov).unwrap();
            assert!(crate::numerics::rel_err(&wiener, &tweedie, 1e-300) < 1e-8);
        }
    }

    #[test]
    fn record_round_trip() {
        let p = OraclePrior::Gsm(GaussianScaleMixturePrior::new(vec![0.5, 0.5], vec![1.0, 16.0], 10).unwrap());
        let back = OraclePrior::from_record(&Record::parse(&p.to_record().to_text()).unwrap()).unwrap();
        assert_eq!(back, p);
        let f = OraclePrior::Field(GaussianFieldPrior::power_law(Shape::grid(3, 3), 1.0, 0.5).unwrap());
        let back = OraclePrior::from_record(&Record::parse(&f.to_record().to_text()).unwrap()).unwrap();
        assert_eq!(back, f);
    }
}
