//! Predictor-corrector posterior sampling over any [`Energy`].
//!
//! Each level moves the iterate from `Sigma_t` to `Sigma_{t-1}` with a
//! reverse-diffusion predictor, then runs Langevin correctors at
//! `Sigma_{t-1}` guided by the measurement `y ~ N(x, Sigma_T)`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::covariance::{geometric_schedule, CovarianceSchedule, DiagonalCovariance, Domain, GroupPartition};
use crate::energymodel::Energy;
use crate::error::{Error, Result};

/// Below this measurement gap a coordinate receives no guidance.
pub const GUIDANCE_GAP_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    FixedGeometric,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectorKind {
    None,
    Ula,
    Mala,
}

/// Langevin step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// `eps = 2 (r |z| / |g|)^2` from the noise draw `z` and drift `g`.
    Ratio(f64),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub mode: ScheduleMode,
    /// Number of predictor levels `T` (fixed mode).
    pub levels: usize,
    pub corrector: CorrectorKind,
    pub corrector_steps: usize,
    pub step: StepSize,
    /// Scales the predictor's injected noise only.
    pub temperature: f64,
    /// Last non-floor variance of the geometric schedule.
    pub schedule_end: f64,
    pub adaptive_eta: f64,
    pub psd_floor: f64,
    /// Adaptive-mode level budget; `None` means `10 * levels`.
    pub max_levels: Option<usize>,
    pub retain_iterates: bool,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            mode: ScheduleMode::FixedGeometric,
            levels: 600,
            corrector: CorrectorKind::Ula,
            corrector_steps: 1,
            step: StepSize::Ratio(0.15),
            temperature: 0.9,
            schedule_end: 1e-3,
            adaptive_eta: 0.1,
            psd_floor: 1e-9,
            max_levels: None,
            retain_iterates: false,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, bounds_min: f64) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::param("sampler needs at least one level"));
        }
        match self.step {
            StepSize::Ratio(r) | StepSize::Fixed(r) if !(r > 0.0) => {
                return Err(Error::param("step parameter must be positive"))
            }
            _ => {}
        }
        if !(self.temperature >= 0.0) || !(self.adaptive_eta > 0.0) || !(self.schedule_end > 0.0) {
            return Err(Error::param("temperature, eta and schedule end must be positive"));
        }
        if self.psd_floor < bounds_min {
            return Err(Error::param("psd floor below the covariance lower bound"));
        }
        Ok(())
    }

    fn level_budget(&self) -> usize {
        self.max_levels.unwrap_or(10 * self.levels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelDiagnostics {
    pub level: usize,
    pub energy: f64,
    pub accept_rate: f64,
    pub mean_phi: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    /// `x_T, ..., x_0` when retained.
    pub iterates: Vec<Vec<f64>>,
    /// `Sigma_T, ..., Sigma_0`.
    pub covariances: Vec<DiagonalCovariance>,
    pub diagnostics: Vec<LevelDiagnostics>,
}

pub const DIAGNOSTICS_HEADER: &str = "level,energy,accept_rate,mean_phi";

pub fn write_diagnostics_csv<W: Write>(mut w: W, rows: &[LevelDiagnostics]) -> std::io::Result<()> {
    writeln!(w, "{DIAGNOSTICS_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.level, r.energy, r.accept_rate, r.mean_phi)?;
    }
    Ok(())
}

fn normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `Sigma_t - Sigma_{t-1}` in the eigenbasis.
pub fn schedule_decrement(hi: &DiagonalCovariance, lo: &DiagonalCovariance) -> Result<Vec<f64>> {
    if !hi.same_layout(lo) {
        return Err(Error::Schedule("levels differ in domain or shape".into()));
    }
    Ok(hi.phi().iter().zip(lo.phi()).map(|(a, b)| a - b).collect())
}

/// Reverse-diffusion step `x - dSigma grad + temperature * sqrt(dSigma) v`.
pub fn predictor_step<E: Energy + ?Sized, R: Rng + ?Sized>(
    model: &E,
    x: &[f64],
    sigma_t: &DiagonalCovariance,
    dsigma: &[f64],
    temperature: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if dsigma.len() != sigma_t.len() {
        return Err(Error::dim("dSigma differs from covariance dimension"));
    }
    let floor = sigma_t.bounds().min;
    for (i, (&ds, &p)) in dsigma.iter().zip(sigma_t.phi()).enumerate() {
        if ds < 0.0 || ds > (p - floor) * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::Schedule(format!("dSigma[{i}] = {ds} outside [0, {}]", p - floor)));
        }
    }
    let grad = model.grad_input(x, sigma_t)?;
    let drift = sigma_t.scale_with(&grad, |i, _| dsigma[i])?;
    let v = normals(x.len(), rng);
    let noise = sigma_t.scale_with(&v, |i, _| dsigma[i].sqrt())?;
    Ok(x.iter()
        .zip(&drift)
        .zip(&noise)
        .map(|((a, b), c)| a - b + temperature * c)
        .collect())
}

/// Measurement context for the correctors.
struct Guidance<'a> {
    y: &'a [f64],
    sigma_meas: &'a DiagonalCovariance,
    mask: &'a [bool],
}

impl Guidance<'_> {
    fn check(&self, x: &[f64], sigma_t: &DiagonalCovariance) -> Result<Vec<f64>> {
        if self.y.len() != x.len() || self.mask.len() != x.len() {
            return Err(Error::dim("measurement, mask and state differ in length"));
        }
        if !self.sigma_meas.same_layout(sigma_t) {
            return Err(Error::Schedule("measurement covariance layout differs".into()));
        }
        let gap: Vec<f64> = self
            .sigma_meas
            .phi()
            .iter()
            .zip(sigma_t.phi())
            .map(|(a, b)| a - b)
            .collect();
        if let Some(i) = gap.iter().position(|&g| g < -1e-12 * sigma_t.phi().iter().cloned().fold(0.0, f64::max)) {
            return Err(Error::Schedule(format!("Sigma_T < Sigma_t at coordinate {i}")));
        }
        Ok(gap)
    }

    /// Coordinate weights applied to drift and noise: the mask in the
    /// spatial domain, everything in the spectral domain.
    fn active(&self, domain: Domain, j: usize) -> bool {
        domain == Domain::Spectral || self.mask[j]
    }

    fn guided(&self, domain: Domain, j: usize, gap: &[f64]) -> bool {
        self.active(domain, j) && gap[j] > GUIDANCE_GAP_FLOOR
    }

    /// `grad U - grad log N(y; x, Sigma_T - Sigma_t)` restricted to active
    /// coordinates, in the spatial representation.
    fn drift<E: Energy + ?Sized>(
        &self,
        model: &E,
        x: &[f64],
        sigma_t: &DiagonalCovariance,
        gap: &[f64],
    ) -> Result<Vec<f64>> {
        let domain = sigma_t.domain();
        let grad = sigma_t.to_basis(&model.grad_input(x, sigma_t)?)?;
        let resid: Vec<f64> = self.y.iter().zip(x).map(|(a, b)| a - b).collect();
        let resid = sigma_t.to_basis(&resid)?;
        let g: Vec<f64> = (0..x.len())
            .map(|j| {
                if !self.active(domain, j) {
                    0.0
                } else if self.guided(domain, j, gap) {
                    grad[j] - resid[j] / gap[j]
                } else {
                    grad[j]
                }
            })
            .collect();
        sigma_t.from_basis(&g)
    }

    fn log_target<E: Energy + ?Sized>(
        &self,
        model: &E,
        x: &[f64],
        sigma_t: &DiagonalCovariance,
        gap: &[f64],
    ) -> Result<f64> {
        let domain = sigma_t.domain();
        let resid: Vec<f64> = self.y.iter().zip(x).map(|(a, b)| a - b).collect();
        let resid = sigma_t.to_basis(&resid)?;
        let mut lp = -model.energy(x, sigma_t)?;
        for j in 0..x.len() {
            if self.guided(domain, j, gap) {
                lp += crate::numerics::log_normal(resid[j], 0.0, gap[j]);
            }
        }
        Ok(lp)
    }

    /// Noise restricted to active coordinates.
    fn masked_noise<R: Rng + ?Sized>(&self, sigma_t: &DiagonalCovariance, rng: &mut R) -> Vec<f64> {
        let mut z = normals(self.y.len(), rng);
        if sigma_t.domain() == Domain::Spatial {
            for (zj, &m) in z.iter_mut().zip(self.mask) {
                if !m {
                    *zj = 0.0;
                }
            }
        }
        z
    }
}

fn step_from_rule(step: StepSize, z: &[f64], g: &[f64]) -> f64 {
    match step {
        StepSize::Fixed(eps) => eps,
        StepSize::Ratio(r) => {
            let gn = crate::numerics::norm(g);
            if gn == 0.0 {
                0.0
            } else {
                2.0 * (r * crate::numerics::norm(z) / gn).powi(2)
            }
        }
    }
}

/// One unadjusted Langevin step at `sigma_t` guided by `y`. Returns the new
/// state and the step size used.
#[allow(clippy::too_many_arguments)]
pub fn ula_corrector_step<E: Energy + ?Sized, R: Rng + ?Sized>(
    model: &E,
    x: &[f64],
    sigma_t: &DiagonalCovariance,
    y: &[f64],
    sigma_meas: &DiagonalCovariance,
    mask: &[bool],
    step: StepSize,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let guide = Guidance { y, sigma_meas, mask };
    let gap = guide.check(x, sigma_t)?;
    let g = guide.drift(model, x, sigma_t, &gap)?;
    let z = guide.masked_noise(sigma_t, rng);
    let eps = step_from_rule(step, &z, &g);
    let next = x
        .iter()
        .zip(&g)
        .zip(&z)
        .map(|((a, b), c)| a - 0.5 * eps * b + eps.sqrt() * c)
        .collect();
    Ok((next, eps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MalaOutcome {
    pub state: Vec<f64>,
    pub accepted: bool,
    pub accept_prob: f64,
    pub step: f64,
}

/// `log alpha` of a Langevin proposal `x -> xp` with drift `g`, step `eps`.
pub fn mala_log_alpha(
    log_target_x: f64,
    log_target_xp: f64,
    x: &[f64],
    xp: &[f64],
    g_x: &[f64],
    g_xp: &[f64],
    eps: f64,
) -> f64 {
    // log q(b | a) up to a constant: -|b - a + eps/2 g(a)|^2 / (2 eps)
    let log_q = |to: &[f64], from: &[f64], g: &[f64]| -> f64 {
        -to.iter()
            .zip(from)
            .zip(g)
            .map(|((b, a), ga)| (b - a + 0.5 * eps * ga).powi(2))
            .sum::<f64>()
            / (2.0 * eps)
    };
    // Grouped so an identical proposal gives exactly zero.
    ((log_target_xp - log_target_x) + (log_q(x, xp, g_xp) - log_q(xp, x, g_x))).min(0.0)
}

/// Metropolis-adjusted Langevin step. With [`StepSize::Ratio`] the step is
/// set from the current state and reused for the reverse move.
#[allow(clippy::too_many_arguments)]
pub fn mala_corrector_step<E: Energy + ?Sized, R: Rng + ?Sized>(
    model: &E,
    x: &[f64],
    sigma_t: &DiagonalCovariance,
    y: &[f64],
    sigma_meas: &DiagonalCovariance,
    mask: &[bool],
    step: StepSize,
    rng: &mut R,
) -> Result<MalaOutcome> {
    let guide = Guidance { y, sigma_meas, mask };
    let gap = guide.check(x, sigma_t)?;
    let g = guide.drift(model, x, sigma_t, &gap)?;
    let z = guide.masked_noise(sigma_t, rng);
    let eps = step_from_rule(step, &z, &g);
    if !(eps > 0.0) {
        return Err(Error::param("MALA step size is zero"));
    }
    let xp: Vec<f64> = x
        .iter()
        .zip(&g)
        .zip(&z)
        .map(|((a, b), c)| a - 0.5 * eps * b + eps.sqrt() * c)
        .collect();
    let gp = guide.drift(model, &xp, sigma_t, &gap)?;
    let lt = guide.log_target(model, x, sigma_t, &gap)?;
    let ltp = guide.log_target(model, &xp, sigma_t, &gap)?;
    let log_alpha = mala_log_alpha(lt, ltp, x, &xp, &g, &gp, eps);
    let log_alpha = if log_alpha.is_nan() { f64::NEG_INFINITY } else { log_alpha };
    let u: f64 = rng.random();
    let accepted = u.ln() < log_alpha;
    Ok(MalaOutcome {
        state: if accepted { xp } else { x.to_vec() },
        accepted,
        accept_prob: log_alpha.exp(),
        step: eps,
    })
}

/// Mirror-descent covariance decrement `eta t_g^2 grad_cov_g`, clipped to
/// `[0, t_g - floor]`. Returned per coordinate in the eigenbasis.
pub fn adaptive_step<E: Energy + ?Sized>(
    model: &E,
    x: &[f64],
    sigma_t: &DiagonalCovariance,
    partition: &GroupPartition,
    eta: f64,
    floor: f64,
) -> Result<Vec<f64>> {
    if !(eta > 0.0) {
        return Err(Error::param("adaptive step needs eta > 0"));
    }
    let t = partition.group_values(sigma_t.phi())?;
    let gc = model.grad_cov(x, sigma_t, partition)?;
    let per_group: Vec<f64> = t
        .iter()
        .zip(&gc)
        .map(|(&tg, &g)| (eta * tg * tg * g).clamp(0.0, (tg - floor).max(0.0)))
        .collect();
    partition.expand(&per_group)
}

/// Coordinates the measurement leaves uncertain.
pub fn default_mask(sigma_meas: &DiagonalCovariance) -> Vec<bool> {
    let floor = sigma_meas.bounds().min;
    sigma_meas.phi().iter().map(|&p| p > floor).collect()
}

/// Fixed geometric schedule from the measurement covariance to the floor.
pub fn fixed_schedule(sigma_meas: &DiagonalCovariance, config: &SamplerConfig) -> Result<CovarianceSchedule> {
    let begin = sigma_meas.phi().iter().cloned().fold(0.0, f64::max);
    let end = config.schedule_end.min(begin * 0.5);
    geometric_schedule(begin, end, config.levels, sigma_meas)
}

struct ChainState {
    x: Vec<f64>,
    energy: f64,
    accepted: usize,
    proposals: usize,
}

/// Predictor from `hi` to `lo` followed by the configured correctors at `lo`.
#[allow(clippy::too_many_arguments)]
fn advance<E: Energy + ?Sized, R: Rng + ?Sized>(
    model: &E,
    x: &[f64],
    hi: &DiagonalCovariance,
    lo: &DiagonalCovariance,
    y: &[f64],
    sigma_meas: &DiagonalCovariance,
    mask: &[bool],
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<ChainState> {
    let ds = schedule_decrement(hi, lo)?;
    let mut x = predictor_step(model, x, hi, &ds, config.temperature, rng)?;
    let (mut accepted, mut proposals) = (0, 0);
    if !lo.is_floor() {
        for _ in 0..config.corrector_steps {
            match config.corrector {
                CorrectorKind::None => break,
                CorrectorKind::Ula => {
                    x = ula_corrector_step(model, &x, lo, y, sigma_meas, mask, config.step, rng)?.0;
                }
                CorrectorKind::Mala => {
                    let out = mala_corrector_step(model, &x, lo, y, sigma_meas, mask, config.step, rng)?;
                    accepted += out.accepted as usize;
                    proposals += 1;
                    x = out.state;
                }
            }
        }
    }
    let energy = model.energy(&x, lo)?;
    Ok(ChainState {
        x,
        energy,
        accepted,
        proposals,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn accept_rate(accepted: usize, proposals: usize) -> f64 {
    if proposals == 0 {
        1.0
    } else {
        accepted as f64 / proposals as f64
    }
}

/// Runs the full predictor-corrector loop from `x_T = y`.
pub fn posterior_sample<E: Energy + ?Sized, R: Rng + ?Sized>(
    model: &E,
    y: &[f64],
    sigma_meas: &DiagonalCovariance,
    mask: Option<&[bool]>,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, Trajectory)> {
    config.validate(sigma_meas.bounds().min)?;
    if y.len() != sigma_meas.len() || y.len() != model.dim() {
        return Err(Error::dim("measurement, covariance and model dimensions differ"));
    }
    let default = default_mask(sigma_meas);
    let mask = mask.unwrap_or(&default);
    let mut traj = Trajectory {
        covariances: vec![sigma_meas.clone()],
        ..Trajectory::default()
    };
    if config.retain_iterates {
        traj.iterates.push(y.to_vec());
    }
    if sigma_meas.is_floor() {
        return Ok((y.to_vec(), traj));
    }
    let mut x = y.to_vec();
    match config.mode {
        ScheduleMode::FixedGeometric => {
            let sched = fixed_schedule(sigma_meas, config)?;
            for t in (1..=sched.levels()).rev() {
                let (hi, lo) = (sched.at(t), sched.at(t - 1));
                let st = advance(model, &x, hi, lo, y, sigma_meas, mask, config, rng)?;
                x = st.x;
                record_level(&mut traj, config, &x, lo, t, st.energy, accept_rate(st.accepted, st.proposals));
            }
        }
        ScheduleMode::Adaptive => {
            let partition = model.natural_partition();
            let floor = config.psd_floor;
            let mut current = sigma_meas.clone();
            let budget = config.level_budget();
            let mut level = 0;
            while !current.is_floor() {
                if level >= budget {
                    return Err(Error::Termination {
                        levels: level,
                        trajectory: Box::new(traj),
                    });
                }
                let lo = if current.phi().iter().all(|&p| p <= floor) {
                    DiagonalCovariance::floor(current.domain(), current.shape(), current.bounds())
                } else {
                    let ds = adaptive_step(model, &x, &current, &partition, config.adaptive_eta, floor)?;
                    let phi = current.phi().iter().zip(&ds).map(|(p, d)| p - d).collect();
                    current.with_phi_clamped(phi)?
                };
                let st = advance(model, &x, &current, &lo, y, sigma_meas, mask, config, rng)?;
                x = st.x;
                level += 1;
                record_level(&mut traj, config, &x, &lo, level, st.energy, accept_rate(st.accepted, st.proposals));
                current = lo;
            }
        }
    }
    Ok((x, traj))
}

fn record_level(
    traj: &mut Trajectory,
    config: &SamplerConfig,
    x: &[f64],
    lo: &DiagonalCovariance,
    level: usize,
    energy: f64,
    accept_rate: f64,
) {
    if config.retain_iterates {
        traj.iterates.push(x.to_vec());
    }
    traj.covariances.push(lo.clone());
    traj.diagnostics.push(LevelDiagnostics {
        level,
        energy,
        accept_rate,
        mean_phi: mean(lo.phi()),
    });
}

/// Random stream of chain `i` for seed `seed`.
pub fn chain_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// Independent chains on a fixed schedule, advanced one level at a time so
/// every chain evaluates the model at the same covariance. Chain `i` draws
/// from [`chain_rng`]`(config.seed, i)` and matches a lone
/// [`posterior_sample`] run with that stream.
///
/// The returned trajectory holds the shared covariances and per-level
/// diagnostics averaged over chains.
pub fn posterior_sample_chains<E: Energy + ?Sized>(
    model: &E,
    ys: &[Vec<f64>],
    sigma_meas: &DiagonalCovariance,
    mask: Option<&[bool]>,
    config: &SamplerConfig,
) -> Result<(Vec<Vec<f64>>, Trajectory)> {
    config.validate(sigma_meas.bounds().min)?;
    if config.mode != ScheduleMode::FixedGeometric {
        return Err(Error::param("batched chains need a fixed schedule"));
    }
    if ys.iter().any(|y| y.len() != sigma_meas.len() || y.len() != model.dim()) {
        return Err(Error::dim("measurement, covariance and model dimensions differ"));
    }
    let default = default_mask(sigma_meas);
    let mask = mask.unwrap_or(&default);
    let mut traj = Trajectory {
        covariances: vec![sigma_meas.clone()],
        ..Trajectory::default()
    };
    let mut xs: Vec<Vec<f64>> = ys.to_vec();
    if sigma_meas.is_floor() {
        return Ok((xs, traj));
    }
    let mut rngs: Vec<ChaCha8Rng> = (0..ys.len()).map(|i| chain_rng(config.seed, i)).collect();
    let sched = fixed_schedule(sigma_meas, config)?;
    for t in (1..=sched.levels()).rev() {
        let (hi, lo) = (sched.at(t), sched.at(t - 1));
        let states = xs
            .par_iter()
            .zip(ys.par_iter())
            .zip(rngs.par_iter_mut())
            .map(|((x, y), rng)| advance(model, x, hi, lo, y, sigma_meas, mask, config, rng))
            .collect::<Result<Vec<_>>>()?;
        let energy = mean(&states.iter().map(|s| s.energy).collect::<Vec<_>>());
        let accepted = states.iter().map(|s| s.accepted).sum();
        let proposals = states.iter().map(|s| s.proposals).sum();
        xs = states.into_iter().map(|s| s.x).collect();
        let keep = SamplerConfig {
            retain_iterates: false,
            ..config.clone()
        };
        record_level(&mut traj, &keep, &[], lo, t, energy, accept_rate(accepted, proposals));
    }
    Ok((xs, traj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{PhiBounds, Shape};
    use crate::oracle::GaussianScaleMixturePrior;

    fn cov(phi: Vec<f64>) -> DiagonalCovariance {
        let n = phi.len();
        DiagonalCovariance::new(Domain::Spatial, Shape::flat(n), phi, PhiBounds::default()).unwrap()
    }

    #[test]
    fn zero_decrement_leaves_state() {
        let m = GaussianScaleMixturePrior::gaussian(1.0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = vec![0.3, -0.2, 1.0];
        let out = predictor_step(&m, &x, &cov(vec![0.5; 3]), &[0.0; 3], 1.0, &mut rng).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn negative_decrement_is_schedule_error() {
        let m = GaussianScaleMixturePrior::gaussian(1.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = predictor_step(&m, &[0.0, 0.0], &cov(vec![0.5; 2]), &[-0.1, 0.0], 1.0, &mut rng);
        assert!(matches!(r, Err(Error::Schedule(_))));
    }

    #[test]
    fn no_guidance_at_zero_gap() {
        let m = GaussianScaleMixturePrior::gaussian(1.0, 2).unwrap();
        let c = cov(vec![0.5; 2]);
        let guide = Guidance {
            y: &[1.0, 2.0],
            sigma_meas: &c,
            mask: &[true, true],
        };
        let gap = guide.check(&[1.0, 2.0], &c).unwrap();
        let drift = guide.drift(&m, &[1.0, 2.0], &c, &gap).unwrap();
        assert_eq!(drift, m.grad_y(&[1.0, 2.0], &c).unwrap());
    }

    #[test]
    fn meas_below_level_is_schedule_error() {
        let m = GaussianScaleMixturePrior::gaussian(1.0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = ula_corrector_step(&m, &[0.0], &cov(vec![1.0]), &[0.0], &cov(vec![0.5]), &[true], StepSize::Ratio(0.1), &mut rng);
        assert!(matches!(r, Err(Error::Schedule(_))));
    }

    #[test]
    fn mala_hand_computed_alpha() {
        // Standard normal target, x = 0 -> x' = 1, eps = 1.
        // g(0) = 0, g(1) = 1; log q(1|0) = -1/2, log q(0|1) = -(0-1+0.5)^2/2 = -1/8.
        // log alpha = -1/2 - 1/8 - 0 + 1/2 = -1/8.
        let la = mala_log_alpha(0.0, -0.5, &[0.0], &[1.0], &[0.0], &[1.0], 1.0);
        assert!((la + 0.125).abs() < 1e-15);
    }

    #[test]
    fn mala_identity_proposal_accepts() {
        assert_eq!(mala_log_alpha(-1.0, -1.0, &[0.5], &[0.5], &[0.0], &[0.0], 0.3), 0.0);
    }

    #[test]
    fn measurement_at_floor_returns_y() {
        let m = GaussianScaleMixturePrior::gaussian(1.0, 3).unwrap();
        let floor = DiagonalCovariance::floor(Domain::Spatial, Shape::flat(3), PhiBounds::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = vec![1.0, 2.0, 3.0];
        let (x, traj) = posterior_sample(&m, &y, &floor, None, &SamplerConfig::default(), &mut rng).unwrap();
        assert_eq!(x, y);
        assert!(traj.diagnostics.is_empty());
    }

    #[test]
    fn adaptive_zero_score_gives_zero_step() {
        struct Flat;
        impl Energy for Flat {
            fn dim(&self) -> usize {
                2
            }
            fn energy(&self, _: &[f64], _: &DiagonalCovariance) -> Result<f64> {
                Ok(0.0)
            }
            fn grad_input(&self, y: &[f64], _: &DiagonalCovariance) -> Result<Vec<f64>> {
                Ok(vec![0.0; y.len()])
            }
            fn grad_cov(&self, _: &[f64], _: &DiagonalCovariance, p: &GroupPartition) -> Result<Vec<f64>> {
                Ok(vec![0.0; p.num_groups()])
            }
            fn natural_partition(&self) -> GroupPartition {
                GroupPartition::singletons(2)
            }
        }
        let ds = adaptive_step(&Flat, &[1.0, 1.0], &cov(vec![2.0, 3.0]), &GroupPartition::singletons(2), 0.5, 1e-9)
            .unwrap();
        assert_eq!(ds, vec![0.0, 0.0]);
    }

    #[test]
    fn batched_chains_match_single_runs() {
        let m = GaussianScaleMixturePrior::new(vec![0.5, 0.5], vec![1.0, 4.0], 3).unwrap();
        let meas = cov(vec![2.0, 1e-9, 0.5]);
        let config = SamplerConfig {
            levels: 10,
            corrector: CorrectorKind::Mala,
            corrector_steps: 2,
            seed: 9,
            ..SamplerConfig::default()
        };
        let ys = vec![vec![0.5, 1.0, -0.3], vec![2.0, -1.0, 0.1]];
        let (xs, traj) = posterior_sample_chains(&m, &ys, &meas, None, &config).unwrap();
        assert_eq!(traj.diagnostics.len(), 10);
        for (i, y) in ys.iter().enumerate() {
            let mut rng = chain_rng(9, i);
            let (x, _) = posterior_sample(&m, y, &meas, None, &config, &mut rng).unwrap();
            assert_eq!(x, xs[i]);
        }
        // Observed coordinate stays put.
        assert_eq!(xs[0][1], 1.0);
    }
}
