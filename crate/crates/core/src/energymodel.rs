//! The covariance-conditioned energy interface and the learned
//! quadratic-mixture energy.
//!
//! ```text
//! U(y, t) = -logsumexp_i( -sum_g a_ig(e) r_g^2 - b_i(e) ),   r_g^2 = sum_{j in g} y_j^2
//! e_g     = log(t_g + floor)
//! ```
//!
//! The coefficients come from an [`Mlp`] over the log-variance embedding.
//! Quadratic coefficients pass through softplus; offsets are the raw output
//! scaled by the signal dimension so the network works at a per-dimension
//! scale.

use nalgebra::DMatrix;
use rand::Rng;

use crate::covariance::{DiagonalCovariance, Domain, GroupPartition, Shape};
use crate::error::{Error, Result};
use crate::gradengine::{tangent_forward, BoundMlp, Matrix, Mlp, NodeId, Tape};
use crate::numerics::{logsumexp, softmax, softplus};
use crate::record::Record;

/// Capabilities shared by analytic and learned energies.
pub trait Energy: Sync {
    fn dim(&self) -> usize;

    /// `U(y, Sigma)`.
    fn energy(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<f64>;

    /// `grad_y U(y, Sigma)`.
    fn grad_input(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<Vec<f64>>;

    /// `dU/dphi` in the covariance eigenbasis, summed within each group of
    /// `partition`.
    fn grad_cov(&self, y: &[f64], cov: &DiagonalCovariance, partition: &GroupPartition) -> Result<Vec<f64>>;

    /// Grouping of covariance parameters the energy is conditioned on.
    fn natural_partition(&self) -> GroupPartition;

    /// Anisotropic Tweedie denoiser `y - Sigma grad_y U`.
    fn posterior_mean(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<Vec<f64>> {
        let g = self.grad_input(y, cov)?;
        let sg = cov.apply(&g)?;
        Ok(y.iter().zip(&sg).map(|(a, b)| a - b).collect())
    }
}

impl<E: Energy + ?Sized> Energy for &E {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn energy(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<f64> {
        (**self).energy(y, cov)
    }
    fn grad_input(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<Vec<f64>> {
        (**self).grad_input(y, cov)
    }
    fn grad_cov(&self, y: &[f64], cov: &DiagonalCovariance, partition: &GroupPartition) -> Result<Vec<f64>> {
        (**self).grad_cov(y, cov, partition)
    }
    fn natural_partition(&self) -> GroupPartition {
        (**self).natural_partition()
    }
    fn posterior_mean(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<Vec<f64>> {
        (**self).posterior_mean(y, cov)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub components: usize,
    pub hidden: usize,
    /// Number of linear layers in the coefficient network.
    pub depth: usize,
    /// Offset inside the log-variance embedding.
    pub embed_floor: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            components: 2,
            hidden: 256,
            depth: 5,
            embed_floor: 1e-2,
        }
    }
}

/// Per-sample mixture coefficients: `a[i][g]` and `b[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticMixtureEnergy {
    components: usize,
    partition: GroupPartition,
    shape: Shape,
    embed_floor: f64,
    net: Mlp,
}

fn inverse_softplus(a: f64) -> f64 {
    // a = log(1 + e^x)  =>  x = log(e^a - 1) = a + log(1 - e^-a)
    a + (-(-a).exp()).ln_1p()
}

impl QuadraticMixtureEnergy {
    /// Randomly initialized model: weights and biases uniform in
    /// `±fan_in^(-1/2)`, quadratic-coefficient output biases zero, offset
    /// output biases at `(d/m)/2 log(2 pi)`.
    pub fn new<R: Rng + ?Sized>(
        config: &ModelConfig,
        partition: GroupPartition,
        shape: Shape,
        rng: &mut R,
    ) -> Result<Self> {
        if config.components == 0 || config.depth == 0 || config.hidden == 0 {
            return Err(Error::param("components, depth and hidden width must be positive"));
        }
        if !(config.embed_floor > 0.0) {
            return Err(Error::param("embedding floor must be positive"));
        }
        if partition.dim() != shape.len {
            return Err(Error::dim("partition does not cover the signal shape"));
        }
        let g = partition.num_groups();
        let m = config.components;
        let mut widths = vec![g];
        widths.extend(std::iter::repeat_n(config.hidden, config.depth - 1));
        widths.push(m * (g + 1));
        let mut net = Mlp::new(&widths, |fan_in| {
            let bound = (fan_in as f64).powf(-0.5);
            rng.random_range(-bound..=bound)
        })?;
        let d = shape.len as f64;
        let bias = &mut net.layers.last_mut().unwrap().1;
        for c in 0..m * g {
            bias[(0, c)] = 0.0;
        }
        for c in m * g..m * (g + 1) {
            // b = d * raw
            bias[(0, c)] = 0.5 * (d / m as f64) * (2.0 * std::f64::consts::PI).ln() / d;
        }
        Ok(Self {
            components: m,
            partition,
            shape,
            embed_floor: config.embed_floor,
            net,
        })
    }

    /// A model whose coefficients do not depend on the covariance: every
    /// network weight is zero and the output bias encodes `a` (`m x G`) and
    /// `b` (`m`).
    pub fn constant(
        partition: GroupPartition,
        shape: Shape,
        a: &[Vec<f64>],
        b: &[f64],
        config: &ModelConfig,
    ) -> Result<Self> {
        let g = partition.num_groups();
        let m = b.len();
        if m == 0 || a.len() != m || a.iter().any(|row| row.len() != g) {
            return Err(Error::dim("coefficient shapes do not match components x groups"));
        }
        if a.iter().flatten().any(|v| !(*v > 0.0)) {
            return Err(Error::param("quadratic coefficients must be positive"));
        }
        let mut widths = vec![g];
        widths.extend(std::iter::repeat_n(config.hidden, config.depth - 1));
        widths.push(m * (g + 1));
        let mut net = Mlp::new(&widths, |_| 0.0)?;
        let d = shape.len as f64;
        let bias = &mut net.layers.last_mut().unwrap().1;
        for i in 0..m {
            for k in 0..g {
                bias[(0, i * g + k)] = inverse_softplus(a[i][k]);
            }
            bias[(0, m * g + i)] = b[i] / d;
        }
        Ok(Self {
            components: m,
            partition,
            shape,
            embed_floor: config.embed_floor,
            net,
        })
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn embed_floor(&self) -> f64 {
        self.embed_floor
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params()
    }

    pub fn params(&self) -> Vec<f64> {
        self.net.flat_params()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        self.net.set_flat_params(flat)
    }

    /// Adds `delta` to every offset `b_i` (a global energy shift).
    pub fn shift_offsets(&mut self, delta: f64) {
        let g = self.partition.num_groups();
        let m = self.components;
        let d = self.shape.len as f64;
        let bias = &mut self.net.layers.last_mut().unwrap().1;
        for c in m * g..m * (g + 1) {
            bias[(0, c)] += delta / d;
        }
    }

    pub fn embedding(&self, t: &[f64]) -> Vec<f64> {
        t.iter().map(|v| (v + self.embed_floor).ln()).collect()
    }

    /// Group variances of `cov`, enforcing the layout this model supports.
    pub fn group_variances(&self, cov: &DiagonalCovariance) -> Result<Vec<f64>> {
        if cov.domain() != Domain::Spatial {
            return Err(Error::Contract("the learned energy is conditioned on spatial covariances".into()));
        }
        if cov.len() != self.shape.len {
            return Err(Error::dim(format!(
                "model has dimension {}, covariance has {}",
                self.shape.len,
                cov.len()
            )));
        }
        self.partition.group_values(cov.phi())
    }

    pub fn coefficients(&self, t: &[f64]) -> Coefficients {
        let e = self.embedding(t);
        let raw = self.net.eval(&DMatrix::from_row_slice(1, e.len(), &e));
        let (m, g) = (self.components, self.partition.num_groups());
        let d = self.shape.len as f64;
        let a = (0..m)
            .map(|i| (0..g).map(|k| softplus(raw[(0, i * g + k)])).collect())
            .collect();
        let b = (0..m).map(|i| d * raw[(0, m * g + i)]).collect();
        Coefficients { a, b }
    }

    fn check_y(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.shape.len {
            return Err(Error::dim(format!(
                "model has dimension {}, y has {}",
                self.shape.len,
                y.len()
            )));
        }
        Ok(())
    }

    fn group_sq_norms(&self, y: &[f64]) -> Vec<f64> {
        self.partition
            .groups()
            .iter()
            .map(|members| members.iter().map(|&j| y[j] * y[j]).sum())
            .collect()
    }

    fn exponents(coef: &Coefficients, r2: &[f64]) -> Vec<f64> {
        coef.a
            .iter()
            .zip(&coef.b)
            .map(|(a, b)| -a.iter().zip(r2).map(|(ak, rk)| ak * rk).sum::<f64>() - b)
            .collect()
    }

    fn check_partition(&self, partition: &GroupPartition) -> Result<()> {
        if partition != &self.partition {
            return Err(Error::Contract(
                "covariance scores of the learned energy are defined on its own partition".into(),
            ));
        }
        Ok(())
    }

    /// `dU/dt_g` for every group, through the tangent-augmented network.
    pub fn grad_groups(&self, y: &[f64], t: &[f64]) -> Result<Vec<f64>> {
        self.check_y(y)?;
        let mut tape = Tape::new();
        let net = self.net.bind(&mut tape);
        let inputs = BatchInputs::new(self, &[self.group_sq_norms(y)], &[t.to_vec()]);
        let graph = build_graph(&mut tape, self, &net, &inputs, true)?;
        Ok(graph
            .grad_cov
            .iter()
            .map(|&node| tape.value(node)[(0, 0)])
            .collect())
    }
}

impl Energy for QuadraticMixtureEnergy {
    fn dim(&self) -> usize {
        self.shape.len
    }

    fn energy(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<f64> {
        self.check_y(y)?;
        let t = self.group_variances(cov)?;
        let coef = self.coefficients(&t);
        Ok(-logsumexp(&Self::exponents(&coef, &self.group_sq_norms(y))))
    }

    fn grad_input(&self, y: &[f64], cov: &DiagonalCovariance) -> Result<Vec<f64>> {
        self.check_y(y)?;
        let t = self.group_variances(cov)?;
        let coef = self.coefficients(&t);
        let (p, _) = softmax(&Self::exponents(&coef, &self.group_sq_norms(y)));
        let alpha: Vec<f64> = (0..self.partition.num_groups())
            .map(|k| p.iter().zip(&coef.a).map(|(pi, a)| 2.0 * pi * a[k]).sum())
            .collect();
        Ok(y.iter()
            .enumerate()
            .map(|(j, v)| alpha[self.partition.group_of(j)] * v)
            .collect())
    }

    fn grad_cov(&self, y: &[f64], cov: &DiagonalCovariance, partition: &GroupPartition) -> Result<Vec<f64>> {
        self.check_partition(partition)?;
        let t = self.group_variances(cov)?;
        self.grad_groups(y, &t)
    }

    fn natural_partition(&self) -> GroupPartition {
        self.partition.clone()
    }
}

/// Constant inputs of a batched energy graph.
#[derive(Debug, Clone)]
pub struct BatchInputs {
    /// `n x G` group variances.
    pub t: Matrix,
    /// `n x G` squared group norms of `y`.
    pub r2: Matrix,
}

impl BatchInputs {
    pub fn new(model: &QuadraticMixtureEnergy, r2: &[Vec<f64>], t: &[Vec<f64>]) -> Self {
        let g = model.partition.num_groups();
        let n = t.len();
        Self {
            t: Matrix::from_fn(n, g, |r, c| t[r][c]),
            r2: Matrix::from_fn(n, g, |r, c| r2[r][c]),
        }
    }
}

/// Nodes of a batched energy graph; every per-sample quantity is one row.
#[derive(Debug, Clone)]
pub struct EnergyGraph {
    /// `n x 1` energies.
    pub energy: NodeId,
    /// `n x G` data-score coefficients: `dU/dy_j = alpha_{g(j)} y_j`.
    pub alpha: NodeId,
    /// One `n x 1` node per group with `dU/dt_g`, when requested.
    pub grad_cov: Vec<NodeId>,
}

/// Records the batched energy, score coefficients and (optionally) covariance
/// scores of `model` on `tape`, differentiable in the bound parameters.
pub fn build_graph(
    tape: &mut Tape,
    model: &QuadraticMixtureEnergy,
    net: &BoundMlp,
    inputs: &BatchInputs,
    with_cov_score: bool,
) -> Result<EnergyGraph> {
    let (m, g) = (model.components, model.partition.num_groups());
    let n = inputs.t.nrows();
    let d = model.shape.len as f64;
    let floor = model.embed_floor;

    let emb = tape.constant(inputs.t.map(|v| (v + floor).ln()));
    let seeds: Vec<NodeId> = if with_cov_score {
        (0..g)
            .map(|k| {
                let s = Matrix::from_fn(n, g, |r, c| {
                    if c == k {
                        1.0 / (inputs.t[(r, c)] + floor)
                    } else {
                        0.0
                    }
                });
                tape.constant(s)
            })
            .collect()
    } else {
        Vec::new()
    };
    let dual = tangent_forward(tape, net, emb, &seeds)?;

    // Constant layout matrices. Column i*G + k of `a` is a_{ik}.
    let r_rep = tape.constant(Matrix::from_fn(n, m * g, |r, c| inputs.r2[(r, c % g)]));
    let group_sum = tape.constant(Matrix::from_fn(m * g, m, |r, c| f64::from(u8::from(r / g == c))));
    let comp_rep = tape.constant(Matrix::from_fn(m, m * g, |r, c| f64::from(u8::from(c / g == r))));
    let comp_sum = tape.constant(Matrix::from_fn(m * g, g, |r, c| f64::from(u8::from(r % g == c))));
    let ones_m = tape.constant(Matrix::from_element(m, 1, 1.0));

    let a_raw = tape.slice_cols(dual.primal, 0, m * g)?;
    let a = tape.softplus(a_raw)?;
    let b_raw = tape.slice_cols(dual.primal, m * g, m)?;
    let b = tape.scale(b_raw, d)?;

    let ar = tape.mul(a, r_rep)?;
    let quad = tape.affine(ar, group_sum, None)?;
    let qb = tape.add(quad, b)?;
    let s = tape.scale(qb, -1.0)?;
    let lse = tape.logsumexp(s)?;
    let energy = tape.scale(lse, -1.0)?;
    let centered = tape.sub(s, lse)?;
    let p = tape.exp(centered)?;

    let p_rep = tape.affine(p, comp_rep, None)?;
    let pa = tape.mul(p_rep, a)?;
    let alpha_half = tape.affine(pa, comp_sum, None)?;
    let alpha = tape.scale(alpha_half, 2.0)?;

    let mut grad_cov = Vec::with_capacity(seeds.len());
    if with_cov_score {
        let sig = tape.sigmoid(a_raw)?;
        for &tan in &dual.tangents {
            let da_raw = tape.slice_cols(tan, 0, m * g)?;
            let da = tape.mul(sig, da_raw)?;
            let db_raw = tape.slice_cols(tan, m * g, m)?;
            let db = tape.scale(db_raw, d)?;
            let dar = tape.mul(da, r_rep)?;
            let dquad = tape.affine(dar, group_sum, None)?;
            // -ds = dquad + db; dU = sum_i p_i (-ds_i)
            let neg_ds = tape.add(dquad, db)?;
            let weighted = tape.mul(p, neg_ds)?;
            grad_cov.push(tape.affine(weighted, ones_m, None)?);
        }
    }
    Ok(EnergyGraph {
        energy,
        alpha,
        grad_cov,
    })
}

const CHECKPOINT_VERSION: u32 = 1;

/// Training metadata carried in a checkpoint.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointMeta {
    pub step: usize,
    pub seed: u64,
    pub loss_tail: Vec<f64>,
}

impl QuadraticMixtureEnergy {
    pub fn to_checkpoint(&self, meta: &CheckpointMeta) -> Record {
        let mut r = Record::new();
        r.set("format_version", CHECKPOINT_VERSION);
        r.set("m", self.components);
        r.set_usizes("dims", &self.shape.to_dims());
        let group_of: Vec<usize> = (0..self.shape.len).map(|j| self.partition.group_of(j)).collect();
        r.set_usizes("partition.group_of", &group_of);
        r.set_usizes("layers", &self.net.widths());
        r.set("embed_floor", self.embed_floor);
        r.set_floats("params", &self.params());
        r.set("meta.step", meta.step);
        r.set("meta.seed", meta.seed);
        r.set_floats("meta.loss_tail", &meta.loss_tail);
        r
    }

    pub fn from_checkpoint(r: &Record) -> Result<(Self, CheckpointMeta)> {
        let version: u32 = r.get("format_version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::parse(format!("unsupported checkpoint version {version}")));
        }
        let shape = Shape::from_dims(&r.list::<usize>("dims")?)?;
        let group_of: Vec<usize> = r.list("partition.group_of")?;
        if group_of.len() != shape.len {
            return Err(Error::parse("partition does not cover dims"));
        }
        let num_groups = group_of.iter().max().map_or(0, |g| g + 1);
        let mut groups = vec![Vec::new(); num_groups];
        for (j, &g) in group_of.iter().enumerate() {
            groups[g].push(j);
        }
        let partition = GroupPartition::new(groups)?;
        let widths: Vec<usize> = r.list("layers")?;
        let mut net = Mlp::new(&widths, |_| 0.0)?;
        net.set_flat_params(&r.list::<f64>("params")?)?;
        let m: usize = r.get("m")?;
        if net.input_dim() != num_groups || net.output_dim() != m * (num_groups + 1) {
            return Err(Error::parse("layer widths inconsistent with m and partition"));
        }
        let model = Self {
            components: m,
            partition,
            shape,
            embed_floor: r.get("embed_floor")?,
            net,
        };
        let meta = CheckpointMeta {
            step: r.get_or("meta.step", 0)?,
            seed: r.get_or("meta.seed", 0)?,
            loss_tail: if r.contains("meta.loss_tail") {
                r.list("meta.loss_tail")?
            } else {
                Vec::new()
            },
        };
        Ok((model, meta))
    }
}
