//! Python bindings for the location-field pipeline: meshes and the
//! procedural dataset, field rendering and degradation, descriptor
//! training, retrieval banks, pose recovery and the evaluation metrics.

use std::path::Path;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use lfd::dataset::{gen_procedural_dataset, DatasetSpec};
use lfd::degrade::DegradeConfig;
use lfd::field::Domain;
use lfd::geom::{Camera, Pose, PoseParams};
use lfd::grad::TrainSample;
use lfd::mesh;
use lfd::metrics;
use lfd::net::{DescriptorNet, NetConfig};
use lfd::pnp;
use lfd::render::{render_location_field, sample_pose, PoseConfig};
use lfd::retrieval;
use lfd::train::TrainConfig;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

/// Triangle mesh in the canonical unit-cube frame.
#[pyclass(name = "Mesh", from_py_object)]
#[derive(Clone)]
struct PyMesh {
    inner: mesh::Mesh,
}

#[pymethods]
impl PyMesh {
    /// Load a Wavefront OBJ (v/f subset) and normalize it to the unit cube.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let raw = mesh::load_obj(Path::new(path)).map_err(io_err)?;
        let inner = mesh::normalize_mesh(&raw).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn model_id(&self) -> String {
        self.inner.model_id.clone()
    }

    #[getter]
    fn vertex_count(&self) -> usize {
        self.inner.vertices.len()
    }

    #[getter]
    fn triangle_count(&self) -> usize {
        self.inner.triangles.len()
    }

    /// Area-uniform surface samples as (x, y, z) tuples.
    fn sample_surface(&self, n: usize, seed: u64) -> PyResult<Vec<(f64, f64, f64)>> {
        let ps = mesh::sample_surface(&self.inner, n, seed).map_err(value_err)?;
        Ok(ps.points.iter().map(|p| (p.x, p.y, p.z)).collect())
    }

    fn save(&self, path: &str) -> PyResult<()> {
        mesh::save_obj(Path::new(path), &self.inner).map_err(io_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh(id='{}', vertices={}, triangles={})",
            self.inner.model_id,
            self.inner.vertices.len(),
            self.inner.triangles.len()
        )
    }
}

/// Per-pixel canonical coordinates plus mask, with camera and pose
/// metadata.
#[pyclass(name = "LocationField", from_py_object)]
#[derive(Clone)]
struct PyLocationField {
    inner: lfd::LocationField,
}

#[pymethods]
impl PyLocationField {
    #[getter]
    fn width(&self) -> u32 {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.height
    }

    #[getter]
    fn domain(&self) -> &'static str {
        match self.inner.domain {
            Domain::Rendered => "rendered",
            Domain::PredictedSim => "predicted_sim",
        }
    }

    #[getter]
    fn model_id(&self) -> Option<String> {
        self.inner.model_id.clone()
    }

    #[getter]
    fn masked_count(&self) -> usize {
        self.inner.masked_count()
    }

    /// Flat row-major coordinates, three floats per pixel.
    fn coords(&self) -> Vec<f32> {
        self.inner.coords.iter().flatten().copied().collect()
    }

    fn mask(&self) -> Vec<bool> {
        self.inner.mask.clone()
    }

    /// Ground-truth pose as (rotation row-major, translation), if present.
    fn pose(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        self.inner.pose.as_ref().map(|p| {
            let r = (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .map(|(i, j)| p.rotation[(i, j)])
                .collect();
            let t = vec![p.translation.x, p.translation.y, p.translation.z];
            (r, t)
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: lfd::io::load_lf(Path::new(path)).map_err(io_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        lfd::io::save_lf(Path::new(path), &self.inner).map_err(io_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "LocationField({}x{}, {}, masked={})",
            self.inner.width,
            self.inner.height,
            self.domain(),
            self.inner.masked_count()
        )
    }
}

/// Descriptor network with trained centers and the domain mapper.
#[pyclass(name = "DescriptorNet")]
struct PyDescriptorNet {
    inner: DescriptorNet,
    model_ids: Vec<String>,
}

#[pymethods]
impl PyDescriptorNet {
    #[getter]
    fn dim(&self) -> usize {
        self.inner.cfg.dim
    }

    #[getter]
    fn num_models(&self) -> usize {
        self.inner.cfg.num_models
    }

    #[getter]
    fn model_ids(&self) -> Vec<String> {
        self.model_ids.clone()
    }

    /// Descriptor and classifier logits for a field.
    fn forward(&self, lf: &PyLocationField) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let (f, logits) = self.inner.forward(&lf.inner).map_err(value_err)?;
        Ok((f.to_vec(), logits.to_vec()))
    }

    /// Query embedding: predicted fields pass through the domain mapper.
    fn embed(&self, lf: &PyLocationField) -> PyResult<Vec<f64>> {
        Ok(retrieval::embed_query(&self.inner, &lf.inner)
            .map_err(value_err)?
            .to_vec())
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (inner, model_ids) = lfd::io::load_checkpoint(Path::new(path)).map_err(io_err)?;
        Ok(Self { inner, model_ids })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        lfd::io::save_checkpoint(Path::new(path), &self.inner, &self.model_ids).map_err(io_err)
    }
}

/// Model-id to center-descriptor table used at matching time.
#[pyclass(name = "CenterBank")]
struct PyCenterBank {
    inner: retrieval::CenterBank,
}

#[pymethods]
impl PyCenterBank {
    #[getter]
    fn model_ids(&self) -> Vec<String> {
        self.inner.model_ids.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: lfd::io::load_bank(Path::new(path)).map_err(io_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        lfd::io::save_bank(Path::new(path), &self.inner).map_err(io_err)
    }
}

/// Procedural model database from a JSON spec
/// `{"families": [{"kind": "chair", "count": 3}], "separation": 0.02}`.
#[pyfunction]
fn gen_dataset(spec_json: &str, seed: u64) -> PyResult<Vec<PyMesh>> {
    let spec: DatasetSpec = serde_json::from_str(spec_json).map_err(value_err)?;
    let meshes = gen_procedural_dataset(&spec, seed).map_err(value_err)?;
    Ok(meshes.into_iter().map(|inner| PyMesh { inner }).collect())
}

/// Render one location field under a seeded random viewpoint.
#[pyfunction]
#[pyo3(signature = (mesh, resolution, seed, focal=None))]
fn render_view(
    mesh: &PyMesh,
    resolution: u32,
    seed: u64,
    focal: Option<f64>,
) -> PyResult<PyLocationField> {
    let cam = Camera::centered(focal.unwrap_or(resolution as f64), resolution, resolution);
    let pose = sample_pose(&PoseConfig::default(), &cam, seed);
    let inner = render_location_field(&mesh.inner, &pose, &cam, resolution, resolution)
        .map_err(value_err)?;
    Ok(PyLocationField { inner })
}

/// Render at an explicit viewpoint (angles in degrees).
#[pyfunction]
#[pyo3(signature = (mesh, resolution, azimuth, elevation, inplane, distance, focal=None))]
fn render_at(
    mesh: &PyMesh,
    resolution: u32,
    azimuth: f64,
    elevation: f64,
    inplane: f64,
    distance: f64,
    focal: Option<f64>,
) -> PyResult<PyLocationField> {
    let cam = Camera::centered(focal.unwrap_or(resolution as f64), resolution, resolution);
    let pose = Pose::from_params(PoseParams {
        azimuth_deg: azimuth,
        elevation_deg: elevation,
        inplane_deg: inplane,
        distance,
    });
    let inner = render_location_field(&mesh.inner, &pose, &cam, resolution, resolution)
        .map_err(value_err)?;
    Ok(PyLocationField { inner })
}

/// Simulate a predicted field from a rendered one.
#[pyfunction]
#[pyo3(signature = (lf, seed, config_json=None))]
fn degrade(lf: &PyLocationField, seed: u64, config_json: Option<&str>) -> PyResult<PyLocationField> {
    let cfg = match config_json {
        Some(text) => serde_json::from_str::<DegradeConfig>(text).map_err(value_err)?,
        None => DegradeConfig::default(),
    };
    Ok(PyLocationField {
        inner: lfd::degrade::degrade(&lf.inner, &cfg, seed).map_err(value_err)?,
    })
}

/// Train a descriptor net. `rendered` holds (field, label) pairs;
/// `predicted` holds (degraded field, label, paired rendered field).
#[pyfunction]
#[pyo3(signature = (rendered, predicted, model_ids, seed, epochs=50, hidden=None, dim=64, batch_size=32))]
#[allow(clippy::too_many_arguments)]
fn train(
    rendered: Vec<(PyLocationField, usize)>,
    predicted: Vec<(PyLocationField, usize, PyLocationField)>,
    model_ids: Vec<String>,
    seed: u64,
    epochs: usize,
    hidden: Option<Vec<usize>>,
    dim: usize,
    batch_size: usize,
) -> PyResult<PyDescriptorNet> {
    let first = rendered
        .first()
        .ok_or_else(|| PyValueError::new_err("rendered set is empty"))?;
    let resolution = first.0.inner.width;
    let mut dataset: Vec<TrainSample> = Vec::new();
    for (lf, label) in &rendered {
        dataset.push(TrainSample::rendered(lf.inner.clone(), *label));
    }
    for (lf, label, paired) in &predicted {
        dataset.push(TrainSample::predicted(
            lf.inner.clone(),
            *label,
            paired.inner.clone(),
        ));
    }
    let net_cfg = NetConfig {
        input_width: resolution,
        input_height: resolution,
        pool: if resolution % 14 == 0 {
            resolution / 14
        } else {
            1
        },
        hidden: hidden.unwrap_or_else(|| vec![128, 64]),
        dim,
        num_models: model_ids.len(),
        ..NetConfig::with_defaults(resolution, model_ids.len(), seed)
    };
    let train_cfg = TrainConfig {
        epochs,
        batch_size,
        decay_epochs: vec![epochs / 2, epochs * 5 / 6],
        seed,
        ..TrainConfig::default()
    };
    let (net, _) = lfd::train::train(&dataset, net_cfg, &train_cfg).map_err(value_err)?;
    Ok(PyDescriptorNet {
        inner: net,
        model_ids,
    })
}

/// Bank of the trained center rows.
#[pyfunction]
fn build_bank(net: &PyDescriptorNet) -> PyResult<PyCenterBank> {
    let inner = retrieval::build_center_bank(&net.inner, net.model_ids.clone())
        .map_err(value_err)?;
    Ok(PyCenterBank { inner })
}

/// Centers for unseen models by multi-view descriptor averaging.
#[pyfunction]
#[pyo3(signature = (net, meshes, views, seed))]
fn bank_for_unseen(
    net: &PyDescriptorNet,
    meshes: Vec<PyMesh>,
    views: u32,
    seed: u64,
) -> PyResult<PyCenterBank> {
    let models: Vec<mesh::Mesh> = meshes.into_iter().map(|m| m.inner).collect();
    let cfg = net.inner.cfg.clone();
    let cam = Camera::centered(cfg.input_width as f64, cfg.input_width, cfg.input_height);
    let inner = retrieval::centers_for_unseen(
        &net.inner,
        &models,
        views,
        &PoseConfig::default(),
        &cam,
        seed,
    )
    .map_err(value_err)?;
    Ok(PyCenterBank { inner })
}

/// Ranked (model_id, distance) list for a query field.
#[pyfunction]
#[pyo3(signature = (net, lf, bank, k=None))]
fn retrieve(
    net: &PyDescriptorNet,
    lf: &PyLocationField,
    bank: &PyCenterBank,
    k: Option<usize>,
) -> PyResult<Vec<(String, f64)>> {
    let res = retrieval::retrieve(&net.inner, &lf.inner, &bank.inner, k.unwrap_or(bank.inner.len()))
        .map_err(value_err)?;
    Ok(res
        .ranked
        .into_iter()
        .map(|r| (r.model_id, r.distance))
        .collect())
}

/// Recover the object pose from a field's 2D-3D correspondences.
/// Returns (rotation row-major, translation, rms reprojection px).
#[pyfunction]
#[pyo3(signature = (lf, n=200, seed=0, ransac=None))]
fn solve_pose(
    lf: &PyLocationField,
    n: usize,
    seed: u64,
    ransac: Option<bool>,
) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let field = &lf.inner;
    let n = n.min(field.masked_count());
    let corrs = pnp::sample_correspondences(field, n, seed).map_err(value_err)?;
    let use_ransac = ransac.unwrap_or(field.domain == Domain::PredictedSim);
    let pose = if use_ransac {
        pnp::solve_pnp_ransac(&corrs, &field.camera, 500, 2.0, seed)
            .map_err(value_err)?
            .0
    } else {
        pnp::solve_pnp(&corrs, &field.camera).map_err(value_err)?
    };
    let rms = pnp::reprojection_error(&pose, &field.camera, &corrs).map_err(value_err)?;
    let r = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| pose.rotation[(i, j)])
        .collect();
    let t = vec![pose.translation.x, pose.translation.y, pose.translation.z];
    Ok((r, t, rms))
}

/// Modified Hausdorff distance between two meshes on sampled surfaces.
#[pyfunction]
#[pyo3(signature = (a, b, samples=10000, seed=0))]
fn hausdorff(a: &PyMesh, b: &PyMesh, samples: usize, seed: u64) -> PyResult<f64> {
    let pa = mesh::sample_surface(&a.inner, samples, seed).map_err(value_err)?;
    let pb = mesh::sample_surface(&b.inner, samples, seed).map_err(value_err)?;
    metrics::hausdorff_mod(&pa, &pb).map_err(value_err)
}

/// Solid-voxelization IOU of two meshes at the given resolution.
#[pyfunction]
#[pyo3(signature = (a, b, resolution=128))]
fn voxel_iou(a: &PyMesh, b: &PyMesh, resolution: u32) -> PyResult<f64> {
    let ga = metrics::voxelize(&a.inner, resolution);
    let gb = metrics::voxelize(&b.inner, resolution);
    metrics::iou3d(&ga, &gb).map_err(value_err)
}

#[pymodule]
fn lfd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyLocationField>()?;
    m.add_class::<PyDescriptorNet>()?;
    m.add_class::<PyCenterBank>()?;
    m.add_function(wrap_pyfunction!(gen_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(render_view, m)?)?;
    m.add_function(wrap_pyfunction!(render_at, m)?)?;
    m.add_function(wrap_pyfunction!(degrade, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(build_bank, m)?)?;
    m.add_function(wrap_pyfunction!(bank_for_unseen, m)?)?;
    m.add_function(wrap_pyfunction!(retrieve, m)?)?;
    m.add_function(wrap_pyfunction!(solve_pose, m)?)?;
    m.add_function(wrap_pyfunction!(hausdorff, m)?)?;
    m.add_function(wrap_pyfunction!(voxel_iou, m)?)?;
    Ok(())
}
