//! Python bindings: covariances, analytic priors, the learned energy,
//! training, posterior sampling, calibration and blind estimation.

use ebm::checks::{run_scope, Scope};
use ebm::covariance::{make_blur_covariance, make_box_covariance, PhiBounds};
use ebm::density::{self, NormalizationRecord};
use ebm::energymodel::{CheckpointMeta, ModelConfig, QuadraticMixtureEnergy};
use ebm::oracle::OraclePrior;
use ebm::record::Record;
use ebm::sampling::{self, CorrectorKind, SamplerConfig, StepSize};
use ebm::training::{self, Dataset, MetricsRow, TrainingConfig};
use ebm::{DiagonalCovariance, Domain, Energy, GaussianFieldPrior, GaussianScaleMixturePrior, GroupPartition, Shape};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn err(e: ebm::Error) -> PyErr {
    match e {
        ebm::Error::Io(e) => PyIOError::new_err(e.to_string()),
        ebm::Error::Dimension(_) | ebm::Error::Parameter(_) | ebm::Error::Parse(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn shape_of(dims: &[usize]) -> PyResult<Shape> {
    Shape::from_dims(dims).map_err(err)
}

/// Diagonal covariance in the pixel (`"spatial"`) or DCT (`"spectral"`) basis.
#[pyclass(name = "Covariance", module = "aniso_ebm", from_py_object)]
#[derive(Clone)]
struct PyCovariance(DiagonalCovariance);

#[pymethods]
impl PyCovariance {
    #[new]
    #[pyo3(signature = (phi, dims=None, domain="spatial", phi_min=1e-9, phi_max=1e3))]
    fn new(phi: Vec<f64>, dims: Option<Vec<usize>>, domain: &str, phi_min: f64, phi_max: f64) -> PyResult<Self> {
        let shape = shape_of(&dims.unwrap_or_else(|| vec![phi.len()]))?;
        let bounds = PhiBounds::new(phi_min, phi_max).map_err(err)?;
        let domain = Domain::parse(domain).map_err(err)?;
        Ok(Self(DiagonalCovariance::new(domain, shape, phi, bounds).map_err(err)?))
    }

    /// Centered `size x size` box with noise `sigma_in` inside, `sigma_out` outside.
    #[staticmethod]
    fn box_mask(height: usize, width: usize, size: usize, sigma_in: f64, sigma_out: f64) -> PyResult<Self> {
        Ok(Self(
            make_box_covariance(height, width, size, sigma_in, sigma_out, PhiBounds::default()).map_err(err)?,
        ))
    }

    /// Gaussian blur of the given width as a spectral covariance.
    #[staticmethod]
    #[pyo3(signature = (height, width, blur_width, sigma, eps=1e-3))]
    fn blur(height: usize, width: usize, blur_width: f64, sigma: f64, eps: f64) -> PyResult<Self> {
        let shape = Shape::grid(height, width);
        Ok(Self(
            make_blur_covariance(shape, blur_width, sigma, eps, PhiBounds::default()).map_err(err)?,
        ))
    }

    #[getter]
    fn phi(&self) -> Vec<f64> {
        self.0.phi().to_vec()
    }

    #[getter]
    fn domain(&self) -> &'static str {
        self.0.domain().as_str()
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.0.shape().to_dims()
    }

    fn apply(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.apply(&v).map_err(err)
    }

    fn apply_sqrt(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.apply_sqrt(&v).map_err(err)
    }

    fn apply_inv(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.apply_inv(&v).map_err(err)
    }

    fn logdet(&self) -> f64 {
        self.0.logdet()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Covariance(domain={}, dims={:?})", self.0.domain().as_str(), self.0.shape().to_dims())
    }
}

/// Zero-mean Gaussian scale mixture `sum_k w_k N(0, s_k I)`.
#[pyclass(name = "GsmPrior", module = "aniso_ebm")]
struct PyGsm(GaussianScaleMixturePrior);

/// Stationary Gaussian field with a power-law DCT spectrum.
#[pyclass(name = "FieldPrior", module = "aniso_ebm")]
struct PyField(GaussianFieldPrior);

/// Learned quadratic-mixture energy.
#[pyclass(name = "EnergyModel", module = "aniso_ebm")]
struct PyModel {
    model: QuadraticMixtureEnergy,
    meta: CheckpointMeta,
}

/// Anything implementing the shared energy interface.
#[derive(FromPyObject)]
enum AnyEnergy<'py> {
    Gsm(PyRef<'py, PyGsm>),
    Field(PyRef<'py, PyField>),
    Model(PyRef<'py, PyModel>),
}

impl AnyEnergy<'_> {
    fn get(&self) -> &dyn Energy {
        match self {
            Self::Gsm(p) => &p.0,
            Self::Field(p) => &p.0,
            Self::Model(m) => &m.model,
        }
    }
}

/// One `#[pymethods]` block per energy class: the shared interface plus
/// `$extra` class-specific methods.
macro_rules! energy_class {
    ($ty:ty, |$s:ident| $get:expr, { $($extra:tt)* }) => {
        #[pymethods]
        impl $ty {
            #[getter]
            fn dim(&self) -> usize {
                let $s = self;
                let e: &dyn Energy = $get;
                e.dim()
            }

            fn energy(&self, y: Vec<f64>, cov: &PyCovariance) -> PyResult<f64> {
                let $s = self;
                let e: &dyn Energy = $get;
                e.energy(&y, &cov.0).map_err(err)
            }

            fn grad_input(&self, y: Vec<f64>, cov: &PyCovariance) -> PyResult<Vec<f64>> {
                let $s = self;
                let e: &dyn Energy = $get;
                e.grad_input(&y, &cov.0).map_err(err)
            }

            /// Covariance score summed over the energy's own parameter groups.
            fn grad_cov(&self, y: Vec<f64>, cov: &PyCovariance) -> PyResult<Vec<f64>> {
                let $s = self;
                let e: &dyn Energy = $get;
                e.grad_cov(&y, &cov.0, &e.natural_partition()).map_err(err)
            }

            /// Tweedie denoiser `y - Sigma grad_y U`.
            fn posterior_mean(&self, y: Vec<f64>, cov: &PyCovariance) -> PyResult<Vec<f64>> {
                let $s = self;
                let e: &dyn Energy = $get;
                e.posterior_mean(&y, &cov.0).map_err(err)
            }

            $($extra)*
        }
    };
}

energy_class!(PyGsm, |s| &s.0, {
    #[new]
    fn new(weights: Vec<f64>, variances: Vec<f64>, dim: usize) -> PyResult<Self> {
        Ok(Self(GaussianScaleMixturePrior::new(weights, variances, dim).map_err(err)?))
    }

    fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.0.sample(&mut rng)).collect()
    }
});

energy_class!(PyField, |s| &s.0, {
    #[new]
    #[pyo3(signature = (height, width, exponent=1.0, cutoff=0.5))]
    fn new(height: usize, width: usize, exponent: f64, cutoff: f64) -> PyResult<Self> {
        Ok(Self(
            GaussianFieldPrior::power_law(Shape::grid(height, width), exponent, cutoff).map_err(err)?,
        ))
    }

    fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.0.sample(&mut rng)).collect()
    }

    /// Diagonal of the exact posterior covariance.
    fn posterior_variance(&self, cov: &PyCovariance) -> PyResult<Vec<f64>> {
        let c = self.0.posterior_covariance(&cov.0).map_err(err)?;
        Ok(c.diagonal().iter().copied().collect())
    }
});

energy_class!(PyModel, |s| &s.model, {
    #[new]
    #[pyo3(signature = (dim, partition="halves", components=2, hidden=64, depth=5, embed_floor=1e-2, seed=0))]
    fn new(
        dim: usize,
        partition: &str,
        components: usize,
        hidden: usize,
        depth: usize,
        embed_floor: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let part = match partition {
            "halves" => GroupPartition::halves(dim).map_err(err)?,
            "single" => GroupPartition::single(dim).map_err(err)?,
            "singletons" => GroupPartition::singletons(dim),
            other => return Err(PyValueError::new_err(format!("unknown partition `{other}`"))),
        };
        let cfg = ModelConfig {
            components,
            hidden,
            depth,
            embed_floor,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = QuadraticMixtureEnergy::new(&cfg, part, Shape::flat(dim), &mut rng).map_err(err)?;
        Ok(Self {
            model,
            meta: CheckpointMeta {
                step: 0,
                seed,
                loss_tail: Vec::new(),
            },
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let (model, meta) = QuadraticMixtureEnergy::from_checkpoint(&Record::parse(&text).map_err(err)?).map_err(err)?;
        Ok(Self { model, meta })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        std::fs::write(path, self.model.to_checkpoint(&self.meta).to_text())
            .map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.model.num_params()
    }

    #[getter]
    fn steps_trained(&self) -> usize {
        self.meta.step
    }

    /// Trains on `data` (rows of length `dim`) and returns the metrics rows
    /// as `(step, loss_total, loss_adsm, loss_acsm, grad_norm, lr)`.
    #[pyo3(signature = (data, steps, batch_size=512, learning_rate=1e-4, warmup_steps=1000, clip_norm=20.0,
                        phi_min=1e-2, phi_max=1e2, adsm_weight=1.0, acsm_weight=1.0, metrics_every=100, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        py: Python<'_>,
        data: Vec<Vec<f64>>,
        steps: usize,
        batch_size: usize,
        learning_rate: f64,
        warmup_steps: usize,
        clip_norm: f64,
        phi_min: f64,
        phi_max: f64,
        adsm_weight: f64,
        acsm_weight: f64,
        metrics_every: usize,
        seed: u64,
    ) -> PyResult<Vec<(usize, f64, f64, f64, f64, f64)>> {
        let config = TrainingConfig {
            batch_size,
            steps,
            learning_rate,
            warmup_steps,
            clip_norm,
            phi_range: PhiBounds::new(phi_min, phi_max).map_err(err)?,
            adsm_weight,
            acsm_weight,
            seed,
            metrics_every,
        };
        let dataset = Dataset::new(data).map_err(err)?;
        let model = &mut self.model;
        let out = py
            .detach(|| training::train(model, &config, &dataset, None))
            .map_err(err)?;
        self.meta = out.meta;
        Ok(out
            .metrics
            .iter()
            .map(|r: &MetricsRow| (r.step, r.loss_total, r.loss_adsm, r.loss_acsm, r.grad_norm, r.lr))
            .collect())
    }
});

/// Calibrates the energy at `cal` (all coordinates at least half of
/// `cal`'s `phi_max`). Returns `(offset, stderr)`.
#[pyfunction]
#[pyo3(signature = (energy, cal, samples=10_000, seed=0))]
fn calibrate(energy: AnyEnergy<'_>, cal: &PyCovariance, samples: usize, seed: u64) -> PyResult<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = density::calibrate(energy.get(), &cal.0, samples, &mut rng).map_err(err)?;
    Ok((r.offset, r.stderr))
}

fn record(offset: f64, cov: &DiagonalCovariance) -> NormalizationRecord {
    NormalizationRecord {
        offset,
        calibration: cov.clone(),
        samples: 0,
        stderr: f64::MIN_POSITIVE,
    }
}

/// `offset - U(y, Sigma)`.
#[pyfunction]
#[pyo3(signature = (energy, y, cov, offset=0.0))]
fn log_density(energy: AnyEnergy<'_>, y: Vec<f64>, cov: &PyCovariance, offset: f64) -> PyResult<f64> {
    density::log_density(energy.get(), &record(offset, &cov.0), &y, &cov.0).map_err(err)
}

/// Scores each candidate covariance; returns `(argmax, scores)`.
#[pyfunction]
#[pyo3(signature = (energy, y, candidates, offset=0.0))]
fn blind_estimate(
    energy: AnyEnergy<'_>,
    y: Vec<f64>,
    candidates: Vec<PyCovariance>,
    offset: f64,
) -> PyResult<(usize, Vec<f64>)> {
    let covs: Vec<DiagonalCovariance> = candidates.into_iter().map(|c| c.0).collect();
    let first = covs.first().ok_or_else(|| PyValueError::new_err("no candidates"))?;
    density::blind_estimate(energy.get(), &record(offset, first), &y, &covs).map_err(err)
}

/// Posterior samples, one chain per row of `ys`, on a fixed geometric
/// schedule from `cov` down to the floor.
#[pyfunction]
#[pyo3(signature = (energy, ys, cov, levels=600, corrector="ula", corrector_steps=1, step_ratio=None,
                    step_fixed=None, temperature=0.9, schedule_end=1e-3, seed=0))]
#[allow(clippy::too_many_arguments)]
fn posterior_sample(
    py: Python<'_>,
    energy: AnyEnergy<'_>,
    ys: Vec<Vec<f64>>,
    cov: &PyCovariance,
    levels: usize,
    corrector: &str,
    corrector_steps: usize,
    step_ratio: Option<f64>,
    step_fixed: Option<f64>,
    temperature: f64,
    schedule_end: f64,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let corrector = match corrector {
        "none" => CorrectorKind::None,
        "ula" => CorrectorKind::Ula,
        "mala" => CorrectorKind::Mala,
        other => return Err(PyValueError::new_err(format!("unknown corrector `{other}`"))),
    };
    let step = match (step_ratio, step_fixed) {
        (Some(_), Some(_)) => return Err(PyValueError::new_err("give only one of step_ratio and step_fixed")),
        (_, Some(e)) => StepSize::Fixed(e),
        (Some(r), None) => StepSize::Ratio(r),
        (None, None) => SamplerConfig::default().step,
    };
    let config = SamplerConfig {
        levels,
        corrector,
        corrector_steps,
        step,
        temperature,
        schedule_end,
        seed,
        ..SamplerConfig::default()
    };
    let e = energy.get();
    let meas = &cov.0;
    // The model is read-only, so chains can run without the interpreter lock.
    let out = py.detach(|| sampling::posterior_sample_chains(e, &ys, meas, None, &config));
    Ok(out.map_err(err)?.0)
}

/// Draws `n` samples from an analytic prior record (`kind = gsm | field`).
#[pyfunction]
fn sample_prior(spec: &str, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let prior = OraclePrior::from_record(&Record::parse(spec).map_err(err)?).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| prior.sample(&mut rng)).collect())
}

/// Runs a self-check scope; returns `(name, measured, passed)` rows.
#[pyfunction]
#[pyo3(signature = (scope, seed=0))]
fn check(scope: &str, seed: u64) -> PyResult<Vec<(String, f64, bool)>> {
    let s = Scope::parse(scope).map_err(err)?;
    Ok(run_scope(s, seed)
        .map_err(err)?
        .into_iter()
        .map(|r| (r.name, r.measured, r.passed))
        .collect())
}

#[pymodule]
#[pyo3(name = "aniso_ebm")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCovariance>()?;
    m.add_class::<PyGsm>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(log_density, m)?)?;
    m.add_function(wrap_pyfunction!(blind_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(posterior_sample, m)?)?;
    m.add_function(wrap_pyfunction!(sample_prior, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    Ok(())
}
