//! Bit-exact binary formats (little-endian, versioned by magic) for
//! location fields, center banks and network checkpoints, plus PPM
//! visualization of a field's coordinate channels.
//!
//! Layouts:
//! - `LFD1`: magic, u32 width/height, u8 domain, camera as 4 f32
//!   (focal, px, py, unused), u8 pose flag + optional 12 f32 (rotation
//!   row-major, translation), length-prefixed model id, width*height*3
//!   f32 coordinates row-major, width*height u8 mask.
//! - `LFB1`: magic, u32 K, u32 D, u8 provenance tag, u32 view count,
//!   K length-prefixed ids, K*D f32 centers row-major.
//! - `LFC1`: magic, u32 version, net config, the model-id table the net
//!   was trained on (possibly empty), a named layer table with shapes,
//!   then the f32 payloads in table order.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::field::{Domain, LocationField};
use crate::geom::{Camera, Pose};
use crate::net::{DescriptorNet, Linear, NetConfig};
use crate::retrieval::{CenterBank, Provenance};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io error on {path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("cannot write an empty bank")]
    EmptyBank,
}

fn format_err<T>(msg: impl Into<String>) -> Result<T, IoError> {
    Err(IoError::Format(msg.into()))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        if self.pos + n > self.buf.len() {
            return format_err(format!(
                "truncated: need {} bytes at offset {}, have {}",
                n,
                self.pos,
                self.buf.len() - self.pos
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, IoError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, IoError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, IoError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| IoError::Format("invalid utf-8 in string".to_string()))
    }

    fn finish(&self) -> Result<(), IoError> {
        if self.pos != self.buf.len() {
            return format_err(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            ));
        }
        Ok(())
    }
}

fn push_string(out: &mut Vec<u8>, s: &str) {
    out.extend((s.len() as u32).to_le_bytes());
    out.extend(s.as_bytes());
}

// ---------------------------------------------------------------------------
// Location fields (LFD1)
// ---------------------------------------------------------------------------

const LF_MAGIC: &[u8; 4] = b"LFD1";

pub fn write_lf(lf: &LocationField) -> Vec<u8> {
    let n = (lf.width * lf.height) as usize;
    let mut out = Vec::with_capacity(34 + 13 * n);
    out.extend(LF_MAGIC);
    out.extend(lf.width.to_le_bytes());
    out.extend(lf.height.to_le_bytes());
    out.push(match lf.domain {
        Domain::Rendered => 0,
        Domain::PredictedSim => 1,
    });
    for v in [lf.camera.focal, lf.camera.px, lf.camera.py, 0.0] {
        out.extend((v as f32).to_le_bytes());
    }
    match &lf.pose {
        Some(pose) => {
            out.push(1);
            for r in 0..3 {
                for c in 0..3 {
                    out.extend((pose.rotation[(r, c)] as f32).to_le_bytes());
                }
            }
            for k in 0..3 {
                out.extend((pose.translation[k] as f32).to_le_bytes());
            }
        }
        None => out.push(0),
    }
    push_string(&mut out, lf.model_id.as_deref().unwrap_or(""));
    for c in &lf.coords {
        for v in c {
            out.extend(v.to_le_bytes());
        }
    }
    out.extend(lf.mask.iter().map(|&m| u8::from(m)));
    out
}

pub fn read_lf(bytes: &[u8]) -> Result<LocationField, IoError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != LF_MAGIC {
        return format_err("bad magic, expected LFD1");
    }
    let width = r.u32()?;
    let height = r.u32()?;
    let n = width as usize * height as usize;
    if n == 0 {
        return format_err("zero-area field");
    }
    let domain = match r.u8()? {
        0 => Domain::Rendered,
        1 => Domain::PredictedSim,
        d => return format_err(format!("unknown domain tag {d}")),
    };
    let focal = r.f32()? as f64;
    let px = r.f32()? as f64;
    let py = r.f32()? as f64;
    let _unused = r.f32()?;
    let pose = match r.u8()? {
        0 => None,
        1 => {
            let mut m = [0.0f64; 9];
            for v in m.iter_mut() {
                *v = r.f32()? as f64;
            }
            let mut t = [0.0f64; 3];
            for v in t.iter_mut() {
                *v = r.f32()? as f64;
            }
            Some(Pose::new(
                Matrix3::from_row_slice(&m),
                Vector3::new(t[0], t[1], t[2]),
            ))
        }
        f => return format_err(format!("unknown pose flag {f}")),
    };
    let id = r.string()?;
    let mut coords = Vec::with_capacity(n);
    for _ in 0..n {
        coords.push([r.f32()?, r.f32()?, r.f32()?]);
    }
    let mask_bytes = r.take(n)?;
    let mut mask = Vec::with_capacity(n);
    for &b in mask_bytes {
        match b {
            0 => mask.push(false),
            1 => mask.push(true),
            other => return format_err(format!("mask byte {other} is not 0/1")),
        }
    }
    r.finish()?;
    Ok(LocationField {
        width,
        height,
        coords,
        mask,
        camera: Camera {
            focal,
            px,
            py,
            width,
            height,
        },
        pose,
        model_id: (!id.is_empty()).then_some(id),
        domain,
    })
}

// ---------------------------------------------------------------------------
// Center banks (LFB1)
// ---------------------------------------------------------------------------

const BANK_MAGIC: &[u8; 4] = b"LFB1";

pub fn write_bank(bank: &CenterBank) -> Result<Vec<u8>, IoError> {
    if bank.is_empty() {
        return Err(IoError::EmptyBank);
    }
    let mut out = Vec::new();
    out.extend(BANK_MAGIC);
    out.extend((bank.len() as u32).to_le_bytes());
    out.extend((bank.centers.ncols() as u32).to_le_bytes());
    let (tag, views) = match bank.provenance {
        Provenance::Trained => (0u8, 0u32),
        Provenance::AveragedViews(v) => (1u8, v),
    };
    out.push(tag);
    out.extend(views.to_le_bytes());
    for id in &bank.model_ids {
        push_string(&mut out, id);
    }
    for v in bank.centers.iter() {
        out.extend((*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn read_bank(bytes: &[u8]) -> Result<CenterBank, IoError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != BANK_MAGIC {
        return format_err("bad magic, expected LFB1");
    }
    let k = r.u32()? as usize;
    let d = r.u32()? as usize;
    if k == 0 {
        return format_err("bank has no entries");
    }
    let provenance = match (r.u8()?, r.u32()?) {
        (0, _) => Provenance::Trained,
        (1, v) => Provenance::AveragedViews(v),
        (t, _) => return format_err(format!("unknown provenance tag {t}")),
    };
    let mut ids = Vec::with_capacity(k);
    for _ in 0..k {
        ids.push(r.string()?);
    }
    let mut centers = Array2::zeros((k, d));
    for v in centers.iter_mut() {
        *v = r.f32()? as f64;
    }
    r.finish()?;
    CenterBank::new(ids, centers, provenance)
        .map_err(|e| IoError::Format(format!("invalid bank: {e}")))
}

// ---------------------------------------------------------------------------
// Network checkpoints (LFC1)
// ---------------------------------------------------------------------------

const CKPT_MAGIC: &[u8; 4] = b"LFC1";
const CKPT_VERSION: u32 = 1;

struct TableEntry {
    name: String,
    rows: u32,
    cols: u32,
}

pub fn write_checkpoint(net: &DescriptorNet, model_ids: &[String]) -> Vec<u8> {
    let cfg = &net.cfg;
    let mut out = Vec::new();
    out.extend(CKPT_MAGIC);
    out.extend(CKPT_VERSION.to_le_bytes());
    out.extend(cfg.input_width.to_le_bytes());
    out.extend(cfg.input_height.to_le_bytes());
    out.extend(cfg.pool.to_le_bytes());
    out.extend((cfg.hidden.len() as u32).to_le_bytes());
    for h in &cfg.hidden {
        out.extend((*h as u32).to_le_bytes());
    }
    out.extend((cfg.dim as u32).to_le_bytes());
    out.extend((cfg.num_models as u32).to_le_bytes());
    for v in [cfg.alpha, cfg.beta, cfg.delta, cfg.margin, cfg.huber_t] {
        out.extend(v.to_le_bytes());
    }
    out.push(u8::from(cfg.mean_normalize));
    out.extend(cfg.seed.to_le_bytes());
    out.extend((model_ids.len() as u32).to_le_bytes());
    for id in model_ids {
        push_string(&mut out, id);
    }

    let mut entries: Vec<(String, Vec<f64>, u32, u32)> = Vec::new();
    for (i, layer) in net.layers.iter().enumerate() {
        entries.push((
            format!("layer{i}.weight"),
            layer.weight.iter().copied().collect(),
            layer.weight.nrows() as u32,
            layer.weight.ncols() as u32,
        ));
        entries.push((
            format!("layer{i}.bias"),
            layer.bias.iter().copied().collect(),
            layer.bias.len() as u32,
            0,
        ));
    }
    for (name, m) in [
        ("classifier", &net.classifier),
        ("centers", &net.centers),
        ("mapper1", &net.mapper1),
        ("mapper2", &net.mapper2),
    ] {
        entries.push((
            name.to_string(),
            m.iter().copied().collect(),
            m.nrows() as u32,
            m.ncols() as u32,
        ));
    }

    out.extend((entries.len() as u32).to_le_bytes());
    for (name, _, rows, cols) in &entries {
        push_string(&mut out, name);
        out.extend(rows.to_le_bytes());
        out.extend(cols.to_le_bytes());
    }
    for (_, values, _, _) in &entries {
        for v in values {
            out.extend((*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<(DescriptorNet, Vec<String>), IoError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != CKPT_MAGIC {
        return format_err("bad magic, expected LFC1");
    }
    let version = r.u32()?;
    if version != CKPT_VERSION {
        return format_err(format!("unsupported checkpoint version {version}"));
    }
    let input_width = r.u32()?;
    let input_height = r.u32()?;
    let pool = r.u32()?;
    let n_hidden = r.u32()? as usize;
    let mut hidden = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        hidden.push(r.u32()? as usize);
    }
    let dim = r.u32()? as usize;
    let num_models = r.u32()? as usize;
    let alpha = r.f64()?;
    let beta = r.f64()?;
    let delta = r.f64()?;
    let margin = r.f64()?;
    let huber_t = r.f64()?;
    let mean_normalize = r.u8()? != 0;
    let seed = r.u64()?;
    let id_count = r.u32()? as usize;
    let mut model_ids = Vec::with_capacity(id_count);
    for _ in 0..id_count {
        model_ids.push(r.string()?);
    }
    if id_count != 0 && id_count != num_models {
        return format_err(format!(
            "id table has {id_count} entries for {num_models} models"
        ));
    }
    let cfg = NetConfig {
        input_width,
        input_height,
        pool,
        hidden,
        dim,
        num_models,
        alpha,
        beta,
        delta,
        margin,
        huber_t,
        mean_normalize,
        seed,
    };

    let n_entries = r.u32()? as usize;
    let mut table = Vec::with_capacity(n_entries);
    for _ in 0..n_entries {
        let name = r.string()?;
        let rows = r.u32()?;
        let cols = r.u32()?;
        table.push(TableEntry { name, rows, cols });
    }
    let mut matrices: Vec<(String, Array2<f64>)> = Vec::new();
    let mut vectors: Vec<(String, Array1<f64>)> = Vec::new();
    for e in &table {
        if e.cols == 0 {
            let mut v = Array1::zeros(e.rows as usize);
            for x in v.iter_mut() {
                *x = r.f32()? as f64;
            }
            vectors.push((e.name.clone(), v));
        } else {
            let mut m = Array2::zeros((e.rows as usize, e.cols as usize));
            for x in m.iter_mut() {
                *x = r.f32()? as f64;
            }
            matrices.push((e.name.clone(), m));
        }
    }
    r.finish()?;

    let mut take_matrix = |name: &str| -> Result<Array2<f64>, IoError> {
        matrices
            .iter()
            .position(|(n, _)| n == name)
            .map(|i| matrices.remove(i).1)
            .ok_or_else(|| IoError::Format(format!("missing table entry '{name}'")))
    };
    let n_layers = cfg.hidden.len() + 1;
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let weight = take_matrix(&format!("layer{i}.weight"))?;
        let bias = vectors
            .iter()
            .position(|(n, _)| n == &format!("layer{i}.bias"))
            .map(|j| vectors.remove(j).1)
            .ok_or_else(|| IoError::Format(format!("missing table entry 'layer{i}.bias'")))?;
        layers.push(Linear { weight, bias });
    }
    let classifier = take_matrix("classifier")?;
    let centers = take_matrix("centers")?;
    let mapper1 = take_matrix("mapper1")?;
    let mapper2 = take_matrix("mapper2")?;

    let net = DescriptorNet::from_parts(cfg, layers, classifier, centers, mapper1, mapper2)
        .map_err(|e| IoError::Format(format!("shape mismatch: {e}")))?;
    Ok((net, model_ids))
}

// ---------------------------------------------------------------------------
// File helpers and PPM visualization
// ---------------------------------------------------------------------------

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    fs::write(path, bytes).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_lf(path: &Path, lf: &LocationField) -> Result<(), IoError> {
    write_file(path, &write_lf(lf))
}

pub fn load_lf(path: &Path) -> Result<LocationField, IoError> {
    read_lf(&read_file(path)?)
}

pub fn save_bank(path: &Path, bank: &CenterBank) -> Result<(), IoError> {
    write_file(path, &write_bank(bank)?)
}

pub fn load_bank(path: &Path) -> Result<CenterBank, IoError> {
    read_bank(&read_file(path)?)
}

pub fn save_checkpoint(path: &Path, net: &DescriptorNet, model_ids: &[String]) -> Result<(), IoError> {
    write_file(path, &write_checkpoint(net, model_ids))
}

pub fn load_checkpoint(path: &Path) -> Result<(DescriptorNet, Vec<String>), IoError> {
    read_checkpoint(&read_file(path)?)
}

/// P6 image bytes for one coordinate channel: masked pixels map
/// `[-0.5, 0.5]` to gray levels, unmasked pixels are black.
pub fn channel_ppm(lf: &LocationField, channel: usize) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", lf.width, lf.height).into_bytes();
    for i in 0..lf.mask.len() {
        let v = if lf.mask[i] {
            (((lf.coords[i][channel] as f64 + 0.5) * 255.0).round()).clamp(0.0, 255.0) as u8
        } else {
            0
        };
        out.extend([v, v, v]);
    }
    out
}

/// Write the three channel images `<stem>_x.ppm`, `<stem>_y.ppm`,
/// `<stem>_z.ppm` next to `stem`.
pub fn save_channel_ppms(stem: &Path, lf: &LocationField) -> Result<[std::path::PathBuf; 3], IoError> {
    let mut paths = Vec::with_capacity(3);
    for (c, suffix) in ["x", "y", "z"].iter().enumerate() {
        let path = stem.with_file_name(format!(
            "{}_{}.ppm",
            stem.file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "lf".to_string()),
            suffix
        ));
        write_file(&path, &channel_ppm(lf, c))?;
        paths.push(path);
    }
    Ok([paths[0].clone(), paths[1].clone(), paths[2].clone()])
}
