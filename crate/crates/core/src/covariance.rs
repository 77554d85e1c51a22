//! Diagonal covariance algebra.
//!
//! A [`DiagonalCovariance`] stores one variance per coordinate of either the
//! pixel basis ([`Domain::Spatial`]) or the orthonormal DCT basis
//! ([`Domain::Spectral`]). Linear degradations that are diagonal in one of
//! those bases map onto such covariances through [`from_linear_operator`],
//! and [`geometric_schedule`] bridges a measurement covariance down to the
//! clean floor.

use rand::Rng;

use crate::error::{Error, Result};
use crate::record::Record;
use crate::spectral;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Spatial,
    Spectral,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Spatial => "spatial",
            Domain::Spectral => "spectral",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(Domain::Spatial),
            "spectral" => Ok(Domain::Spectral),
            other => Err(Error::parse(format!("unknown domain `{other}`"))),
        }
    }
}

/// Signal shape: flat length plus an optional `height x width` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub len: usize,
    pub grid: Option<(usize, usize)>,
}

impl Shape {
    pub fn flat(len: usize) -> Self {
        Self { len, grid: None }
    }

    pub fn grid(height: usize, width: usize) -> Self {
        Self {
            len: height * width,
            grid: Some((height, width)),
        }
    }

    pub fn to_dims(self) -> Vec<usize> {
        match self.grid {
            Some((h, w)) => vec![h, w],
            None => vec![self.len],
        }
    }

    pub fn from_dims(dims: &[usize]) -> Result<Self> {
        match dims {
            [len] => Ok(Self::flat(*len)),
            [h, w] => Ok(Self::grid(*h, *w)),
            _ => Err(Error::dim(format!("dims must have 1 or 2 entries, got {dims:?}"))),
        }
    }
}

/// Admissible range for per-coordinate variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for PhiBounds {
    fn default() -> Self {
        Self { min: 1e-9, max: 1e3 }
    }
}

impl PhiBounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min > 0.0 && min.is_finite() && max.is_finite() && min <= max) {
            return Err(Error::param(format!("invalid phi bounds [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalCovariance {
    domain: Domain,
    shape: Shape,
    phi: Vec<f64>,
    bounds: PhiBounds,
}

impl DiagonalCovariance {
    pub fn new(domain: Domain, shape: Shape, phi: Vec<f64>, bounds: PhiBounds) -> Result<Self> {
        if shape.len != phi.len() {
            return Err(Error::dim(format!(
                "shape has {} coordinates but phi has {}",
                shape.len,
                phi.len()
            )));
        }
        // Small relative slack so values produced by exp/log round trips at the
        // bounds are not rejected.
        let lo = bounds.min * (1.0 - 1e-12);
        let hi = bounds.max * (1.0 + 1e-12);
        if let Some((i, v)) = phi
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < lo || **v > hi)
        {
            return Err(Error::param(format!(
                "phi[{i}] = {v} outside [{}, {}]",
                bounds.min, bounds.max
            )));
        }
        Ok(Self {
            domain,
            shape,
            phi,
            bounds,
        })
    }

    /// Clamps every entry into `bounds` before validating.
    pub fn clamped(domain: Domain, shape: Shape, phi: Vec<f64>, bounds: PhiBounds) -> Result<Self> {
        if let Some(i) = phi.iter().position(|v| v.is_nan()) {
            return Err(Error::param(format!("phi[{i}] is NaN")));
        }
        let phi = phi.into_iter().map(|v| bounds.clamp(v)).collect();
        Self::new(domain, shape, phi, bounds)
    }

    pub fn uniform(domain: Domain, shape: Shape, value: f64, bounds: PhiBounds) -> Result<Self> {
        Self::new(domain, shape, vec![value; shape.len], bounds)
    }

    /// The clean endpoint: every coordinate at the lower bound.
    pub fn floor(domain: Domain, shape: Shape, bounds: PhiBounds) -> Self {
        Self {
            domain,
            shape,
            phi: vec![bounds.min; shape.len],
            bounds,
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn bounds(&self) -> PhiBounds {
        self.bounds
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn is_floor(&self) -> bool {
        self.phi.iter().all(|&v| v <= self.bounds.min)
    }

    /// Same domain, shape and bounds with new variances.
    pub fn with_phi(&self, phi: Vec<f64>) -> Result<Self> {
        Self::new(self.domain, self.shape, phi, self.bounds)
    }

    pub fn with_phi_clamped(&self, phi: Vec<f64>) -> Result<Self> {
        Self::clamped(self.domain, self.shape, phi, self.bounds)
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.domain == other.domain && self.shape == other.shape
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.phi.len() {
            return Err(Error::dim(format!(
                "vector has {} entries, covariance has {}",
                v.len(),
                self.phi.len()
            )));
        }
        Ok(())
    }

    /// Coordinates of `v` in this covariance's eigenbasis.
    pub fn to_basis(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        Ok(match self.domain {
            Domain::Spatial => v.to_vec(),
            Domain::Spectral => spectral::forward(v, self.shape.grid),
        })
    }

    pub fn from_basis(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        Ok(match self.domain {
            Domain::Spatial => v.to_vec(),
            Domain::Spectral => spectral::inverse(v, self.shape.grid),
        })
    }

    /// Applies the diagonal map `coef_i = f(i, phi_i)` in the eigenbasis.
    pub fn scale_with(&self, v: &[f64], f: impl Fn(usize, f64) -> f64) -> Result<Vec<f64>> {
        let mut c = self.to_basis(v)?;
        for (i, (ci, &p)) in c.iter_mut().zip(&self.phi).enumerate() {
            *ci *= f(i, p);
        }
        self.from_basis(&c)
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.scale_with(v, |_, p| p)
    }

    pub fn apply_sqrt(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.scale_with(v, |_, p| p.sqrt())
    }

    pub fn apply_inv(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.scale_with(v, |_, p| 1.0 / p)
    }

    pub fn logdet(&self) -> f64 {
        self.phi.iter().map(|p| p.ln()).sum()
    }

    /// Quadratic form `v^T Sigma^{-1} v`.
    pub fn mahalanobis_sq(&self, v: &[f64]) -> Result<f64> {
        let c = self.to_basis(v)?;
        Ok(c.iter().zip(&self.phi).map(|(x, p)| x * x / p).sum())
    }
}

/// Disjoint, covering groups of coordinates sharing one variance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    group_of: Vec<usize>,
}

impl GroupPartition {
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        let d: usize = groups.iter().map(Vec::len).sum();
        let mut group_of = vec![usize::MAX; d];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::param(format!("group {g} is empty")));
            }
            for &i in members {
                if i >= d || group_of[i] != usize::MAX {
                    return Err(Error::param(format!(
                        "index {i} is out of range or appears in more than one group"
                    )));
                }
                group_of[i] = g;
            }
        }
        Ok(Self { groups, group_of })
    }

    /// First `d/2` coordinates, then the rest.
    pub fn halves(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::dim("need at least two coordinates for two groups"));
        }
        let mid = d / 2;
        Self::new(vec![(0..mid).collect(), (mid..d).collect()])
    }

    pub fn singletons(d: usize) -> Self {
        Self {
            groups: (0..d).map(|i| vec![i]).collect(),
            group_of: (0..d).collect(),
        }
    }

    pub fn single(d: usize) -> Result<Self> {
        Self::new(vec![(0..d).collect()])
    }

    /// `b x b` patches of a `height x width` grid in row-major patch order.
    pub fn patches(height: usize, width: usize, b: usize) -> Result<Self> {
        if b == 0 || height % b != 0 || width % b != 0 {
            return Err(Error::dim(format!(
                "patch size {b} does not divide {height}x{width}"
            )));
        }
        let mut groups = Vec::with_capacity((height / b) * (width / b));
        for pr in 0..height / b {
            for pc in 0..width / b {
                let mut members = Vec::with_capacity(b * b);
                for r in pr * b..(pr + 1) * b {
                    for c in pc * b..(pc + 1) * b {
                        members.push(r * width + c);
                    }
                }
                groups.push(members);
            }
        }
        Self::new(groups)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn dim(&self) -> usize {
        self.group_of.len()
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.group_of[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Per-coordinate values from one value per group.
    pub fn expand(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.groups.len() {
            return Err(Error::dim(format!(
                "{} group values for {} groups",
                values.len(),
                self.groups.len()
            )));
        }
        Ok(self.group_of.iter().map(|&g| values[g]).collect())
    }

    /// The shared value of each group; errors if `phi` varies within a group.
    pub fn group_values(&self, phi: &[f64]) -> Result<Vec<f64>> {
        if phi.len() != self.dim() {
            return Err(Error::dim(format!(
                "phi has {} entries, partition covers {}",
                phi.len(),
                self.dim()
            )));
        }
        self.groups
            .iter()
            .enumerate()
            .map(|(g, members)| {
                let v = phi[members[0]];
                if members.iter().any(|&i| phi[i] != v) {
                    Err(Error::Contract(format!("phi varies within group {g}")))
                } else {
                    Ok(v)
                }
            })
            .collect()
    }

    /// Sums per-coordinate values within each group.
    pub fn aggregate(&self, per_coord: &[f64]) -> Vec<f64> {
        self.groups
            .iter()
            .map(|members| members.iter().map(|&i| per_coord[i]).sum())
            .collect()
    }
}

/// `Sigma = sigma^2 H^{-1} H^{-T}` for an operator `H` diagonal in the chosen
/// basis, stabilizing small gains with `eps` and clamping into `bounds`.
pub fn from_linear_operator(
    h_diag: &[f64],
    sigma: f64,
    eps: f64,
    domain: Domain,
    shape: Shape,
    bounds: PhiBounds,
) -> Result<DiagonalCovariance> {
    if !(sigma > 0.0) {
        return Err(Error::param(format!("sigma must be positive, got {sigma}")));
    }
    if !(eps >= 0.0) {
        return Err(Error::param(format!("eps must be non-negative, got {eps}")));
    }
    if let Some(i) = h_diag.iter().position(|h| !(*h >= 0.0)) {
        return Err(Error::param(format!("h_diag[{i}] is negative")));
    }
    let mut phi = Vec::with_capacity(h_diag.len());
    for (i, &h) in h_diag.iter().enumerate() {
        let gain = h.max(eps);
        if gain == 0.0 {
            return Err(Error::SingularOperator { index: i });
        }
        phi.push(sigma * sigma / (gain * gain));
    }
    DiagonalCovariance::clamped(domain, shape, phi, bounds)
}

fn box_origin(height: usize, width: usize, s: usize) -> (usize, usize) {
    ((height - s) / 2, (width - s) / 2)
}

/// Binary mask of the centered `s x s` box (top-left corner floored).
pub fn box_mask(height: usize, width: usize, s: usize) -> Result<Vec<bool>> {
    if s > height.min(width) {
        return Err(Error::dim(format!("box size {s} exceeds {height}x{width}")));
    }
    let (r0, c0) = box_origin(height, width, s);
    let mut mask = vec![false; height * width];
    for r in r0..r0 + s {
        for c in c0..c0 + s {
            mask[r * width + c] = true;
        }
    }
    Ok(mask)
}

pub fn make_box_covariance(
    height: usize,
    width: usize,
    s: usize,
    sigma_in: f64,
    sigma_out: f64,
    bounds: PhiBounds,
) -> Result<DiagonalCovariance> {
    if !(sigma_in > 0.0 && sigma_out > 0.0) {
        return Err(Error::param("box noise levels must be positive"));
    }
    let mask = box_mask(height, width, s)?;
    let phi = mask
        .iter()
        .map(|&inside| if inside { sigma_in * sigma_in } else { sigma_out * sigma_out })
        .collect();
    DiagonalCovariance::clamped(Domain::Spatial, Shape::grid(height, width), phi, bounds)
}

/// Bottom half of the rows at `sigma_in`, top half at `sigma_out`.
pub fn make_half_mask_covariance(
    height: usize,
    width: usize,
    sigma_in: f64,
    sigma_out: f64,
    bounds: PhiBounds,
) -> Result<DiagonalCovariance> {
    if !(sigma_in > 0.0 && sigma_out > 0.0) {
        return Err(Error::param("mask noise levels must be positive"));
    }
    let phi = (0..height * width)
        .map(|i| {
            if i / width >= height / 2 {
                sigma_in * sigma_in
            } else {
                sigma_out * sigma_out
            }
        })
        .collect();
    DiagonalCovariance::clamped(Domain::Spatial, Shape::grid(height, width), phi, bounds)
}

pub fn make_patch_grouped_covariance(
    height: usize,
    width: usize,
    b: usize,
    per_patch_variances: &[f64],
    bounds: PhiBounds,
) -> Result<(DiagonalCovariance, GroupPartition)> {
    let partition = GroupPartition::patches(height, width, b)?;
    let phi = partition.expand(per_patch_variances)?;
    let cov = DiagonalCovariance::clamped(Domain::Spatial, Shape::grid(height, width), phi, bounds)?;
    Ok((cov, partition))
}

/// Gaussian blur of standard deviation `width_px` pixels, diagonal in the
/// DCT basis, observed with white noise `sigma`.
pub fn make_blur_covariance(
    shape: Shape,
    width_px: f64,
    sigma: f64,
    eps: f64,
    bounds: PhiBounds,
) -> Result<DiagonalCovariance> {
    if !(width_px >= 0.0) {
        return Err(Error::param("blur width must be non-negative"));
    }
    let gains: Vec<f64> = spectral::frequencies_squared(shape.len, shape.grid)
        .into_iter()
        .map(|w2| (-0.5 * width_px * width_px * w2).exp())
        .collect();
    from_linear_operator(&gains, sigma, eps, Domain::Spectral, shape, bounds)
}

/// Ideal low-pass keeping the lowest `1/factor` of DCT frequencies per axis.
pub fn make_superres_covariance(
    shape: Shape,
    factor: usize,
    sigma: f64,
    eps: f64,
    bounds: PhiBounds,
) -> Result<DiagonalCovariance> {
    if factor == 0 {
        return Err(Error::param("super-resolution factor must be positive"));
    }
    let gains: Vec<f64> = match shape.grid {
        Some((h, w)) => {
            let (kh, kw) = (h.div_ceil(factor), w.div_ceil(factor));
            (0..h * w)
                .map(|i| if i / w < kh && i % w < kw { 1.0 } else { 0.0 })
                .collect()
        }
        None => {
            let k = shape.len.div_ceil(factor);
            (0..shape.len).map(|i| if i < k { 1.0 } else { 0.0 }).collect()
        }
    };
    from_linear_operator(&gains, sigma, eps, Domain::Spectral, shape, bounds)
}

/// One log-uniform draw on `[range.min, range.max]`.
pub fn sample_log_uniform<R: Rng + ?Sized>(range: PhiBounds, rng: &mut R) -> f64 {
    if range.min == range.max {
        return range.min;
    }
    let (lo, hi) = (range.min.ln(), range.max.ln());
    let u: f64 = rng.random();
    range.clamp((lo + u * (hi - lo)).exp())
}

/// Independent log-uniform variance per coordinate (density proportional to
/// `1/phi` on the range).
pub fn sample_phi_prior<R: Rng + ?Sized>(
    shape: Shape,
    domain: Domain,
    range: PhiBounds,
    bounds: PhiBounds,
    rng: &mut R,
) -> Result<DiagonalCovariance> {
    check_range_inside(range, bounds)?;
    let phi = (0..shape.len).map(|_| sample_log_uniform(range, rng)).collect();
    DiagonalCovariance::new(domain, shape, phi, bounds)
}

/// One log-uniform draw per group, shared by the group's coordinates.
pub fn sample_grouped_phi_prior<R: Rng + ?Sized>(
    partition: &GroupPartition,
    shape: Shape,
    domain: Domain,
    range: PhiBounds,
    bounds: PhiBounds,
    rng: &mut R,
) -> Result<(DiagonalCovariance, Vec<f64>)> {
    check_range_inside(range, bounds)?;
    if shape.len != partition.dim() {
        return Err(Error::dim("partition and shape disagree"));
    }
    let values: Vec<f64> = (0..partition.num_groups())
        .map(|_| sample_log_uniform(range, rng))
        .collect();
    let phi = partition.expand(&values)?;
    Ok((DiagonalCovariance::new(domain, shape, phi, bounds)?, values))
}

fn check_range_inside(range: PhiBounds, bounds: PhiBounds) -> Result<()> {
    if range.min < bounds.min || range.max > bounds.max || range.min > range.max {
        return Err(Error::param(format!(
            "prior range [{}, {}] not inside bounds [{}, {}]",
            range.min, range.max, bounds.min, bounds.max
        )));
    }
    Ok(())
}

/// Ordered covariances `[Sigma_T, ..., Sigma_0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSchedule {
    steps: Vec<DiagonalCovariance>,
}

impl CovarianceSchedule {
    pub fn new(steps: Vec<DiagonalCovariance>) -> Result<Self> {
        let first = steps
            .first()
            .ok_or_else(|| Error::Schedule("empty schedule".into()))?;
        for (k, pair) in steps.windows(2).enumerate() {
            let (hi, lo) = (&pair[0], &pair[1]);
            if !hi.same_layout(lo) || !hi.same_layout(first) {
                return Err(Error::Schedule(format!("step {} changes domain or shape", k + 1)));
            }
            if let Some(i) = hi.phi().iter().zip(lo.phi()).position(|(a, b)| b > a) {
                return Err(Error::Schedule(format!(
                    "variance of coordinate {i} increases at step {}",
                    k + 1
                )));
            }
        }
        if !steps.last().unwrap().is_floor() {
            return Err(Error::Schedule("final covariance is not at the floor".into()));
        }
        Ok(Self { steps })
    }

    /// Number of reverse transitions `T`.
    pub fn levels(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn steps(&self) -> &[DiagonalCovariance] {
        &self.steps
    }

    /// `Sigma_t` for `t` in `0..=T`.
    pub fn at(&self, t: usize) -> &DiagonalCovariance {
        &self.steps[self.levels() - t]
    }
}

/// Geometric bridge from `begin` to `end` over `t_levels` transitions.
///
/// Coordinates whose template variance is above the floor follow
/// `min(template_i, begin * (end/begin)^((T-t)/T))`; the rest keep their
/// template value. `Sigma_0` is the floor.
pub fn geometric_schedule(
    begin: f64,
    end: f64,
    t_levels: usize,
    template: &DiagonalCovariance,
) -> Result<CovarianceSchedule> {
    if t_levels == 0 {
        return Err(Error::param("schedule needs at least one level"));
    }
    if !(begin > end && end > 0.0) {
        return Err(Error::param(format!(
            "need begin > end > 0, got begin = {begin}, end = {end}"
        )));
    }
    let floor = template.bounds().min;
    let active: Vec<bool> = template.phi().iter().map(|&p| p > floor).collect();
    let mut steps = Vec::with_capacity(t_levels + 1);
    for t in (1..=t_levels).rev() {
        let frac = (t_levels - t) as f64 / t_levels as f64;
        let level = begin * (end / begin).powf(frac);
        let phi = template
            .phi()
            .iter()
            .zip(&active)
            .map(|(&p, &on)| if on { p.min(level) } else { p })
            .collect();
        steps.push(template.with_phi_clamped(phi)?);
    }
    steps.push(DiagonalCovariance::floor(
        template.domain(),
        template.shape(),
        template.bounds(),
    ));
    CovarianceSchedule::new(steps)
}

/// Serializable covariance family description.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceFamily {
    Explicit { phi: Vec<f64> },
    Box { size: usize, sigma_in: f64, sigma_out: f64 },
    HalfMask { sigma_in: f64, sigma_out: f64 },
    Patch { patch_size: usize, variances: Vec<f64> },
    Blur { width: f64, sigma: f64, eps: f64 },
    SuperRes { factor: usize, sigma: f64, eps: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    pub domain: Domain,
    pub shape: Shape,
    pub bounds: PhiBounds,
    pub family: CovarianceFamily,
}

impl CovarianceSpec {
    pub fn explicit(cov: &DiagonalCovariance) -> Self {
        Self {
            domain: cov.domain(),
            shape: cov.shape(),
            bounds: cov.bounds(),
            family: CovarianceFamily::Explicit {
                phi: cov.phi().to_vec(),
            },
        }
    }

    fn grid(&self) -> Result<(usize, usize)> {
        self.shape
            .grid
            .ok_or_else(|| Error::dim("this covariance family needs a height x width grid"))
    }

    pub fn build(&self) -> Result<DiagonalCovariance> {
        use CovarianceFamily::*;
        let b = self.bounds;
        match &self.family {
            Explicit { phi } => DiagonalCovariance::new(self.domain, self.shape, phi.clone(), b),
            Box { size, sigma_in, sigma_out } => {
                let (h, w) = self.grid()?;
                make_box_covariance(h, w, *size, *sigma_in, *sigma_out, b)
            }
            HalfMask { sigma_in, sigma_out } => {
                let (h, w) = self.grid()?;
                make_half_mask_covariance(h, w, *sigma_in, *sigma_out, b)
            }
            Patch { patch_size, variances } => {
                let (h, w) = self.grid()?;
                make_patch_grouped_covariance(h, w, *patch_size, variances, b).map(|(c, _)| c)
            }
            Blur { width, sigma, eps } => make_blur_covariance(self.shape, *width, *sigma, *eps, b),
            SuperRes { factor, sigma, eps } => {
                make_superres_covariance(self.shape, *factor, *sigma, *eps, b)
            }
        }
    }

    pub fn to_record(&self) -> Record {
        use CovarianceFamily::*;
        let mut r = Record::new();
        r.set("domain", self.domain.as_str());
        r.set_usizes("dims", &self.shape.to_dims());
        r.set("phi_min", self.bounds.min);
        r.set("phi_max", self.bounds.max);
        match &self.family {
            Explicit { phi } => {
                r.set("family", "explicit");
                r.set_floats("phi", phi);
            }
            Box { size, sigma_in, sigma_out } => {
                r.set("family", "box");
                r.set("box_size", size);
                r.set("sigma_in", sigma_in);
                r.set("sigma_out", sigma_out);
            }
            HalfMask { sigma_in, sigma_out } => {
                r.set("family", "half_mask");
                r.set("sigma_in", sigma_in);
                r.set("sigma_out", sigma_out);
            }
            Patch { patch_size, variances } => {
                r.set("family", "patch");
                r.set("patch_size", patch_size);
                r.set_floats("variances", variances);
            }
            Blur { width, sigma, eps } => {
                r.set("family", "blur");
                r.set("blur_width", width);
                r.set("sigma", sigma);
                r.set("eps", eps);
            }
            SuperRes { factor, sigma, eps } => {
                r.set("family", "superres");
                r.set("factor", factor);
                r.set("sigma", sigma);
                r.set("eps", eps);
            }
        }
        r
    }

    pub fn from_record(r: &Record) -> Result<Self> {
        let defaults = PhiBounds::default();
        let bounds = PhiBounds::new(
            r.get_or("phi_min", defaults.min)?,
            r.get_or("phi_max", defaults.max)?,
        )?;
        let shape = Shape::from_dims(&r.list::<usize>("dims")?)?;
        let family_name = r.str("family")?;
        let family = match family_name {
            "explicit" => CovarianceFamily::Explicit { phi: r.list("phi")? },
            "box" => CovarianceFamily::Box {
                size: r.get("box_size")?,
                sigma_in: r.get("sigma_in")?,
                sigma_out: r.get("sigma_out")?,
            },
            "half_mask" => CovarianceFamily::HalfMask {
                sigma_in: r.get("sigma_in")?,
                sigma_out: r.get("sigma_out")?,
            },
            "patch" => CovarianceFamily::Patch {
                patch_size: r.get("patch_size")?,
                variances: r.list("variances")?,
            },
            "blur" => CovarianceFamily::Blur {
                width: r.get("blur_width")?,
                sigma: r.get("sigma")?,
                eps: r.get_or("eps", 1e-3)?,
            },
            "superres" => CovarianceFamily::SuperRes {
                factor: r.get("factor")?,
                sigma: r.get("sigma")?,
                eps: r.get_or("eps", 1e-3)?,
            },
            other => return Err(Error::parse(format!("unknown covariance family `{other}`"))),
        };
        let default_domain = match family {
            CovarianceFamily::Blur { .. } | CovarianceFamily::SuperRes { .. } => "spectral",
            _ => "spatial",
        };
        let domain = Domain::parse(r.raw("domain").unwrap_or(default_domain))?;
        Ok(Self {
            domain,
            shape,
            bounds,
            family,
        })
    }
}
