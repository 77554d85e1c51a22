//! Numerical self-checks on analytic priors and sampler kernels.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::covariance::{
    make_blur_covariance, make_box_covariance, sample_log_uniform, DiagonalCovariance, Domain, GroupPartition,
    PhiBounds, Shape,
};
use crate::energymodel::Energy;
use crate::error::{Error, Result};
use crate::oracle::{GaussianFieldPrior, GaussianScaleMixturePrior};
use crate::sampling::{mala_corrector_step, mala_log_alpha, StepSize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Grad,
    FpIdentity,
    Tweedie,
    Bregman,
    Mala,
}

impl Scope {
    pub const ALL: [Scope; 5] = [Scope::Grad, Scope::FpIdentity, Scope::Tweedie, Scope::Bregman, Scope::Mala];

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "grad" => Scope::Grad,
            "fp_identity" => Scope::FpIdentity,
            "tweedie" => Scope::Tweedie,
            "bregman" => Scope::Bregman,
            "mala" => Scope::Mala,
            other => return Err(Error::parse(format!("unknown check scope `{other}`"))),
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Grad => "grad",
            Scope::FpIdentity => "fp_identity",
            Scope::Tweedie => "tweedie",
            Scope::Bregman => "bregman",
            Scope::Mala => "mala",
        }
    }
}

/// One measured quantity compared against its tolerance. `passed` is
/// `lower <= measured <= tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub measured: f64,
    pub lower: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckReport {
    pub fn upper(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self::within(name, measured, f64::NEG_INFINITY, tolerance)
    }

    pub fn within(name: impl Into<String>, measured: f64, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            lower,
            tolerance: upper,
            passed: measured >= lower && measured <= upper,
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        if self.lower.is_finite() {
            write!(
                f,
                "{verdict} {}: measured {:.4e} in [{:.4e}, {:.4e}]",
                self.name, self.measured, self.lower, self.tolerance
            )
        } else {
            write!(f, "{verdict} {}: measured {:.4e} <= {:.4e}", self.name, self.measured, self.tolerance)
        }
    }
}

fn normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn rel_norm_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = crate::numerics::norm(b).max(crate::numerics::norm(a)).max(1e-300);
    diff / scale
}

/// Central finite difference of the energy along every input coordinate.
pub fn fd_grad_input<E: Energy + ?Sized>(model: &E, y: &[f64], cov: &DiagonalCovariance, h: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(y.len());
    let mut yp = y.to_vec();
    for j in 0..y.len() {
        yp[j] = y[j] + h;
        let up = model.energy(&yp, cov)?;
        yp[j] = y[j] - h;
        let dn = model.energy(&yp, cov)?;
        yp[j] = y[j];
        out.push((up - dn) / (2.0 * h));
    }
    Ok(out)
}

/// Central finite difference of the energy along every variance in the
/// eigenbasis, with step `min(h, phi_j / 2)`.
pub fn fd_grad_phi<E: Energy + ?Sized>(model: &E, y: &[f64], cov: &DiagonalCovariance, h: f64) -> Result<Vec<f64>> {
    let phi = cov.phi();
    let mut out = Vec::with_capacity(phi.len());
    for j in 0..phi.len() {
        let step = h.min(phi[j] / 2.0);
        let mut p = phi.to_vec();
        p[j] = phi[j] + step;
        let up = model.energy(y, &cov.with_phi(p.clone())?)?;
        p[j] = phi[j] - step;
        let dn = model.energy(y, &cov.with_phi(p)?)?;
        out.push((up - dn) / (2.0 * step));
    }
    Ok(out)
}

/// Worst relative error of the analytic scores of a scale mixture against
/// finite differences over `draws` random `(y, Phi)` with `Phi` log-uniform
/// in `[1e-6, 1e2]`. Returns `(grad_y error, grad_phi error)`.
pub fn gsm_gradient_errors(prior: &GaussianScaleMixturePrior, draws: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = prior.dim();
    let range = PhiBounds { min: 1e-6, max: 1e2 };
    let (mut ey, mut ep) = (0.0f64, 0.0f64);
    for _ in 0..draws {
        let phi: Vec<f64> = (0..d).map(|_| sample_log_uniform(range, &mut rng)).collect();
        let cov = DiagonalCovariance::new(Domain::Spatial, Shape::flat(d), phi, PhiBounds::default())?;
        let x = prior.sample(&mut rng);
        let v = normals(d, &mut rng);
        let y: Vec<f64> = x.iter().zip(cov.phi()).zip(&v).map(|((a, p), n)| a + p.sqrt() * n).collect();
        // Smallest variance sets the curvature scale of the input step.
        let scale = cov.phi().iter().cloned().fold(f64::INFINITY, f64::min) + prior.variances()[0];
        ey = ey.max(rel_norm_err(&fd_grad_input(prior, &y, &cov, 1e-4 * scale.sqrt())?, &prior.grad_y(&y, &cov)?));
        ep = ep.max(rel_norm_err(&fd_grad_phi(prior, &y, &cov, 1e-4)?, &prior.grad_phi(&y, &cov)?));
    }
    Ok((ey, ep))
}

/// Per-group relative residual of `dU/dt_g = 1/2 sum_{i in g} (U_ii - U_i^2)`
/// with the second derivative taken by central differences of the analytic
/// gradient. Residuals are normalized by the magnitude of the three terms.
pub fn fokker_planck_residuals<E: Energy + ?Sized>(
    model: &E,
    y: &[f64],
    cov: &DiagonalCovariance,
    partition: &GroupPartition,
    h: f64,
) -> Result<Vec<f64>> {
    if cov.domain() != Domain::Spatial {
        return Err(Error::param("the identity check runs on spatial covariances"));
    }
    let lhs = model.grad_cov(y, cov, partition)?;
    let g = model.grad_input(y, cov)?;
    let mut second = vec![0.0; y.len()];
    let mut yp = y.to_vec();
    for (j, s) in second.iter_mut().enumerate() {
        yp[j] = y[j] + h;
        let up = model.grad_input(&yp, cov)?[j];
        yp[j] = y[j] - h;
        let dn = model.grad_input(&yp, cov)?[j];
        yp[j] = y[j];
        *s = (up - dn) / (2.0 * h);
    }
    let curv = partition.aggregate(&second);
    let sq = partition.aggregate(&g.iter().map(|v| v * v).collect::<Vec<_>>());
    Ok(lhs
        .iter()
        .zip(curv.iter().zip(&sq))
        .map(|(l, (c, s))| {
            let rhs = 0.5 * (c - s);
            (l - rhs).abs() / (l.abs() + 0.5 * c.abs() + 0.5 * s.abs()).max(1e-300)
        })
        .collect())
}

/// Worst Fokker-Planck residual of a scale mixture over random draws with
/// per-coordinate variances log-uniform in `[1e-2, 1e2]`.
pub fn gsm_fokker_planck_error(prior: &GaussianScaleMixturePrior, draws: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = prior.dim();
    let range = PhiBounds { min: 1e-2, max: 1e2 };
    let part = GroupPartition::singletons(d);
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let phi: Vec<f64> = (0..d).map(|_| sample_log_uniform(range, &mut rng)).collect();
        let cov = DiagonalCovariance::new(Domain::Spatial, Shape::flat(d), phi, PhiBounds::default())?;
        let x = prior.sample(&mut rng);
        let y: Vec<f64> = x
            .iter()
            .zip(cov.phi())
            .map(|(a, p)| a + p.sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        for r in fokker_planck_residuals(prior, &y, &cov, &part, 1e-4)? {
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

/// Worst relative gap between the Tweedie denoiser `y - Sigma grad U` and
/// the closed-form Wiener filter over random box and blur covariances.
pub fn field_tweedie_error(prior: &GaussianFieldPrior, draws: usize, seed: u64) -> Result<f64> {
    let (h, w) = prior
        .shape()
        .grid
        .ok_or_else(|| Error::param("the Tweedie check needs a 2-D field"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = PhiBounds::default();
    let mut worst = 0.0f64;
    for k in 0..draws {
        let cov = if k % 2 == 0 {
            let s = rng.random_range(1..=h.min(w));
            let sigma_in = (rng.random_range(-2.0..1.0f64) * std::f64::consts::LN_10).exp();
            make_box_covariance(h, w, s, sigma_in, 1e-3, bounds)?
        } else {
            let width = rng.random_range(0.5..3.0);
            let sigma = (rng.random_range(-3.0..-1.0f64) * std::f64::consts::LN_10).exp();
            make_blur_covariance(prior.shape(), width, sigma, 1e-2, bounds)?
        };
        let x = prior.sample(&mut rng);
        let noise = cov.apply_sqrt(&normals(x.len(), &mut rng))?;
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let g = prior.grad_y(&y, &cov)?;
        let sg = cov.apply(&g)?;
        let tweedie: Vec<f64> = y.iter().zip(&sg).map(|(a, b)| a - b).collect();
        worst = worst.max(rel_norm_err(&tweedie, &prior.posterior_mean(&y, &cov)?));
    }
    Ok(worst)
}

/// Discrepancy between the exact mirror step `(1/t + gamma g)^-1` and its
/// linearization `t - gamma t^2 g`.
pub fn bregman_discrepancy(t: f64, g: f64, gamma: f64) -> f64 {
    let exact = 1.0 / (1.0 / t + gamma * g);
    let linear = t - gamma * t * t * g;
    (exact - linear).abs()
}

/// Smallest and largest ratio `disc(gamma) / disc(gamma / 2)` over covariance
/// scores of a scale mixture, for `gamma` in a short halving sequence.
pub fn bregman_ratio_range(prior: &GaussianScaleMixturePrior, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = prior.dim();
    let part = GroupPartition::single(d)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..20 {
        let t = sample_log_uniform(PhiBounds { min: 1e-1, max: 1e1 }, &mut rng);
        let cov = DiagonalCovariance::uniform(Domain::Spatial, Shape::flat(d), t, PhiBounds::default())?;
        let x = prior.sample(&mut rng);
        let y: Vec<f64> = x
            .iter()
            .map(|a| a + t.sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let g = prior.grad_cov(&y, &cov, &part)?[0];
        if g.abs() < 1e-6 {
            continue;
        }
        // Keep gamma t g small so both formulas stay in the asymptotic regime.
        let gamma0 = 0.05 / (t * g.abs());
        for k in 0..4 {
            let gamma = gamma0 / 2f64.powi(k);
            let r = bregman_discrepancy(t, g, gamma) / bregman_discrepancy(t, g, gamma / 2.0);
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    Ok((lo, hi))
}

/// MALA sanity checks: the hand-computed acceptance ratio, acceptance of an
/// identity proposal, and the stationary variance of a standard normal.
pub fn mala_reports(seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    let la = mala_log_alpha(0.0, -0.5, &[0.0], &[1.0], &[0.0], &[1.0], 1.0);
    out.push(CheckReport::upper("mala hand-computed log alpha", (la + 0.125).abs(), 1e-14));
    let id = mala_log_alpha(-1.3, -1.3, &[0.2], &[0.2], &[0.4], &[0.4], 0.5);
    out.push(CheckReport::upper("mala identity proposal 1 - alpha", 1.0 - id.exp(), 0.0));

    let target = GaussianScaleMixturePrior::gaussian(1.0, 1)?;
    let floor = DiagonalCovariance::floor(Domain::Spatial, Shape::flat(1), PhiBounds::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0];
    let (n, mut s2, mut acc) = (200_000, 0.0, 0usize);
    for _ in 0..n {
        let o = mala_corrector_step(&target, &x, &floor, &[0.0], &floor, &[true], StepSize::Fixed(1.0), &mut rng)?;
        acc += o.accepted as usize;
        x = o.state;
        s2 += x[0] * x[0];
    }
    // The floor variance shifts the target by 1e-9.
    out.push(CheckReport::upper("mala stationary variance rel err", (s2 / n as f64 - 1.0).abs(), 0.03));
    out.push(CheckReport::within("mala acceptance rate", acc as f64 / n as f64, 0.0, 1.0));
    Ok(out)
}

/// Runs the oracle suite of one scope.
pub fn run_scope(scope: Scope, seed: u64) -> Result<Vec<CheckReport>> {
    let gsm = GaussianScaleMixturePrior::new(vec![0.5, 0.5], vec![1.0, 16.0], 8)?;
    Ok(match scope {
        Scope::Grad => {
            let (ey, ep) = gsm_gradient_errors(&gsm, 100, seed)?;
            vec![
                CheckReport::upper("gsm grad_y vs finite differences", ey, 1e-6),
                CheckReport::upper("gsm grad_phi vs finite differences", ep, 1e-6),
            ]
        }
        Scope::FpIdentity => vec![CheckReport::upper(
            "gsm Fokker-Planck identity",
            gsm_fokker_planck_error(&gsm, 100, seed)?,
            1e-6,
        )],
        Scope::Tweedie => {
            let field = GaussianFieldPrior::power_law(Shape::grid(8, 8), 1.0, 0.5)?;
            vec![CheckReport::upper(
                "field Tweedie vs Wiener filter",
                field_tweedie_error(&field, 20, seed)?,
                1e-8,
            )]
        }
        Scope::Bregman => {
            let (lo, hi) = bregman_ratio_range(&gsm, seed)?;
            vec![
                CheckReport::within("bregman halving ratio (min)", lo, 3.2, 4.8),
                CheckReport::within("bregman halving ratio (max)", hi, 3.2, 4.8),
            ]
        }
        Scope::Mala => mala_reports(seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_scope_passes() {
        for scope in Scope::ALL {
            for r in run_scope(scope, 1).unwrap() {
                println!("{r}");
                assert!(r.passed, "{r}");
            }
        }
    }

    #[test]
    fn scope_names_round_trip() {
        for s in Scope::ALL {
            assert_eq!(Scope::parse(s.as_str()).unwrap(), s);
        }
        assert!(Scope::parse("nope").is_err());
    }
}
