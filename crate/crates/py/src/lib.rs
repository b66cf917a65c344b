//! Python bindings. Volumes cross the boundary as flat W-fastest lists plus
//! a `(D, H, W)` tuple; flows as three such lists in x, y, z order.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wavereg::io;
use wavereg::metrics::{self, LabelVolume};
use wavereg::optimizer::{self, RegistrationConfig};
use wavereg::pyramid::CoefficientPyramid;
use wavereg::similarity::{LossConfig, SimilarityKind};
use wavereg::synth::{self, SynthKind, SynthSpec};
use wavereg::volume::{self, Dims, ScalarVolume, Spacing, VectorField, UNIT_SPACING};
use wavereg::wavelet::{self, FilterBank, Subband, Subbands, WaveletKind};
use wavereg::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn dims_of((d, h, w): (usize, usize, usize)) -> Dims {
    Dims::new(d, h, w)
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Scalar volume.
#[pyclass(name = "Volume", module = "wavereg", from_py_object)]
#[derive(Clone)]
pub struct PyVolume {
    inner: ScalarVolume,
}

#[pymethods]
impl PyVolume {
    #[new]
    #[pyo3(signature = (dims, data, spacing = None))]
    fn new(dims: (usize, usize, usize), data: Vec<f64>, spacing: Option<Spacing>) -> PyResult<Self> {
        let inner = ScalarVolume::new(dims_of(dims), spacing.unwrap_or(UNIT_SPACING), data).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        let d = self.inner.dims();
        (d.d, d.h, d.w)
    }

    #[getter]
    fn spacing(&self) -> Spacing {
        self.inner.spacing()
    }

    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.data().len()
    }

    fn __repr__(&self) -> String {
        format!("Volume(dims={})", self.inner.dims())
    }
}

/// Three-component displacement field.
#[pyclass(name = "Field", module = "wavereg", from_py_object)]
#[derive(Clone)]
pub struct PyField {
    inner: VectorField,
}

#[pymethods]
impl PyField {
    #[new]
    #[pyo3(signature = (dims, channels, spacing = None))]
    fn new(dims: (usize, usize, usize), channels: [Vec<f64>; 3], spacing: Option<Spacing>) -> PyResult<Self> {
        let inner = VectorField::new(dims_of(dims), spacing.unwrap_or(UNIT_SPACING), channels).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn zeros(dims: (usize, usize, usize)) -> Self {
        Self { inner: VectorField::zeros(dims_of(dims)) }
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        let d = self.inner.dims();
        (d.d, d.h, d.w)
    }

    fn channels(&self) -> [Vec<f64>; 3] {
        self.inner.channels().clone()
    }

    fn max_magnitude(&self) -> f64 {
        self.inner.max_magnitude()
    }

    fn mean_magnitude(&self) -> f64 {
        self.inner.mean_magnitude()
    }

    /// Mean endpoint error against another field on the same grid.
    fn endpoint_error(&self, other: &PyField) -> PyResult<f64> {
        if self.inner.dims() != other.inner.dims() {
            return Err(PyValueError::new_err("fields have different dims"));
        }
        let mut d = self.inner.clone();
        d.add_scaled(-1.0, &other.inner);
        Ok(d.mean_magnitude())
    }

    fn __repr__(&self) -> String {
        format!("Field(dims={})", self.inner.dims())
    }
}

/// Wavelet coefficient pyramid parameterising a flow.
#[pyclass(name = "Pyramid", module = "wavereg", from_py_object)]
#[derive(Clone)]
pub struct PyPyramid {
    inner: CoefficientPyramid,
}

#[pymethods]
impl PyPyramid {
    #[staticmethod]
    fn zeros(dims: (usize, usize, usize)) -> PyResult<Self> {
        Ok(Self { inner: wavereg::pyramid::init_pyramid(dims_of(dims)).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_flat(dims: (usize, usize, usize), values: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: CoefficientPyramid::from_flat(dims_of(dims), &values).map_err(to_py)? })
    }

    fn to_flat(&self) -> Vec<f64> {
        self.inner.to_flat()
    }

    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    #[pyo3(signature = (wavelet = "haar"))]
    fn reconstruct(&self, wavelet: &str) -> PyResult<PyField> {
        let fb = FilterBank::new(parse::<WaveletKind>(wavelet)?);
        Ok(PyField { inner: wavereg::pyramid::reconstruct_flow(&self.inner, &fb).map_err(to_py)? })
    }
}

/// Single-level 3D DWT; returns the eight sub-bands keyed by label (`lll` .. `hhh`).
#[pyfunction]
#[pyo3(signature = (vol, wavelet = "haar"))]
fn dwt3<'py>(py: Python<'py>, vol: &PyVolume, wavelet: &str) -> PyResult<Bound<'py, PyDict>> {
    let fb = FilterBank::new(parse::<WaveletKind>(wavelet)?);
    let sb = wavelet::dwt3_volume(&vol.inner, &fb).map_err(to_py)?;
    let out = PyDict::new(py);
    for b in Subband::ALL {
        out.set_item(b.label(), sb.band(b).to_vec())?;
    }
    Ok(out)
}

/// Inverse of [`dwt3`]; `dims` is the half-resolution band shape.
#[pyfunction]
#[pyo3(signature = (bands, dims, wavelet = "haar"))]
fn idwt3(bands: &Bound<'_, PyDict>, dims: (usize, usize, usize), wavelet: &str) -> PyResult<PyVolume> {
    let fb = FilterBank::new(parse::<WaveletKind>(wavelet)?);
    let mut arrays: [Vec<f64>; 8] = Default::default();
    for b in Subband::ALL {
        let item = bands
            .get_item(b.label())?
            .ok_or_else(|| PyValueError::new_err(format!("missing sub-band {}", b.label())))?;
        arrays[b.index()] = item.extract()?;
    }
    let sb = Subbands::new(dims_of(dims), 1, arrays).map_err(to_py)?;
    Ok(PyVolume { inner: wavelet::idwt3_volume(&sb, &fb, UNIT_SPACING).map_err(to_py)? })
}

#[pyfunction]
fn warp(vol: &PyVolume, flow: &PyField) -> PyResult<PyVolume> {
    Ok(PyVolume { inner: volume::warp(&vol.inner, &flow.inner).map_err(to_py)? })
}

#[pyfunction]
fn warp_nearest(vol: &PyVolume, flow: &PyField) -> PyResult<PyVolume> {
    Ok(PyVolume { inner: volume::warp_nearest(&vol.inner, &flow.inner).map_err(to_py)? })
}

/// Registers `moving` onto `fixed`; returns `(flow, pyramid, info)`.
#[pyfunction]
#[pyo3(signature = (moving, fixed, loss = "ncc", diff = false, lam = None, wavelet = "haar",
                    stages = (100, 100, 100), lr = optimizer::DEFAULT_LR, sq_steps = 7))]
#[allow(clippy::too_many_arguments)]
fn register<'py>(
    py: Python<'py>,
    moving: &PyVolume,
    fixed: &PyVolume,
    loss: &str,
    diff: bool,
    lam: Option<f64>,
    wavelet: &str,
    stages: (usize, usize, usize),
    lr: f64,
    sq_steps: usize,
) -> PyResult<(PyField, PyPyramid, Bound<'py, PyDict>)> {
    let kind: SimilarityKind = parse(loss)?;
    let mut loss_cfg = LossConfig::new(kind);
    if let Some(l) = lam {
        loss_cfg = loss_cfg.with_lambda(l);
    }
    let config = RegistrationConfig {
        loss: loss_cfg,
        diffeomorphic: diff,
        wavelet: parse(wavelet)?,
        stage_iterations: [stages.0, stages.1, stages.2],
        lr,
        sq_steps,
    };
    let (m, f) = (moving.inner.clone(), fixed.inner.clone());
    let r = py.detach(move || optimizer::register(&m, &f, &config)).map_err(to_py)?;
    let info = PyDict::new(py);
    info.set_item("loss", r.diagnostics.loss)?;
    info.set_item("similarity", r.diagnostics.similarity)?;
    info.set_item("smoothness", r.diagnostics.smoothness)?;
    info.set_item("neg_jac_percent", r.diagnostics.neg_jac_percent)?;
    info.set_item("loss_history", r.loss_history)?;
    Ok((PyField { inner: r.flow }, PyPyramid { inner: r.pyramid }, info))
}

/// Synthetic pair; returns a dict with `moving`, `fixed`, `gt_flow`,
/// `target_flow` and, when requested, `moving_labels`/`fixed_labels`.
#[pyfunction]
#[pyo3(signature = (kind, dims, max_disp, seed = 0, labels = false))]
fn synth_pair<'py>(
    py: Python<'py>,
    kind: &str,
    dims: (usize, usize, usize),
    max_disp: f64,
    seed: u64,
    labels: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let mut spec = SynthSpec::new(parse::<SynthKind>(kind)?, dims_of(dims), max_disp, seed);
    if labels {
        spec = spec.with_labels();
    }
    let pair = synth::synth_pair(&spec).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("moving", PyVolume { inner: pair.moving })?;
    out.set_item("fixed", PyVolume { inner: pair.fixed })?;
    out.set_item("gt_flow", PyField { inner: pair.gt_flow })?;
    out.set_item("target_flow", PyField { inner: pair.target_flow })?;
    if let Some(l) = pair.labels {
        out.set_item("moving_labels", PyVolume { inner: l.moving.to_volume() })?;
        out.set_item("fixed_labels", PyVolume { inner: l.fixed.to_volume() })?;
    }
    Ok(out)
}

fn labels_of(v: &PyVolume) -> PyResult<LabelVolume> {
    LabelVolume::from_volume(&v.inner).map_err(to_py)
}

/// Per-label Dice as a `{label: score or None}` dict.
#[pyfunction]
fn dice<'py>(py: Python<'py>, a: &PyVolume, b: &PyVolume, labels: Vec<u32>) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    for (l, s) in metrics::dice(&labels_of(a)?, &labels_of(b)?, &labels).map_err(to_py)? {
        out.set_item(l, s)?;
    }
    Ok(out)
}

#[pyfunction]
fn hausdorff(a: &PyVolume, b: &PyVolume, label: u32) -> PyResult<f64> {
    metrics::hausdorff(&labels_of(a)?, &labels_of(b)?, label).map_err(to_py)
}

#[pyfunction]
fn neg_jac_fraction(flow: &PyField) -> PyResult<f64> {
    metrics::neg_jac_fraction(&flow.inner).map_err(to_py)
}

#[pyfunction]
fn read_image(path: PathBuf) -> PyResult<PyVolume> {
    Ok(PyVolume { inner: io::read_image(&path).map_err(to_py)? })
}

#[pyfunction]
fn write_image(path: PathBuf, vol: &PyVolume) -> PyResult<()> {
    io::write_image(&path, &vol.inner).map_err(to_py)
}

#[pyfunction]
fn read_field(path: PathBuf) -> PyResult<PyField> {
    Ok(PyField { inner: io::read_field(&path).map_err(to_py)? })
}

#[pyfunction]
fn write_field(path: PathBuf, flow: &PyField) -> PyResult<()> {
    io::write_field(&path, &flow.inner).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "wavereg")]
fn wavereg_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVolume>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyPyramid>()?;
    m.add_function(wrap_pyfunction!(dwt3, m)?)?;
    m.add_function(wrap_pyfunction!(idwt3, m)?)?;
    m.add_function(wrap_pyfunction!(warp, m)?)?;
    m.add_function(wrap_pyfunction!(warp_nearest, m)?)?;
    m.add_function(wrap_pyfunction!(register, m)?)?;
    m.add_function(wrap_pyfunction!(synth_pair, m)?)?;
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(hausdorff, m)?)?;
    m.add_function(wrap_pyfunction!(neg_jac_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(read_image, m)?)?;
    m.add_function(wrap_pyfunction!(write_image, m)?)?;
    m.add_function(wrap_pyfunction!(read_field, m)?)?;
    m.add_function(wrap_pyfunction!(write_field, m)?)?;
    Ok(())
}
