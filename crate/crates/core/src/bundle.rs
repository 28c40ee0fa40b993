//! Tensor bundles: a JSON manifest next to one raw little-endian data file.
//!
//! Complex entries are stored as interleaved `f64` real/imaginary pairs.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat};
use crate::model::{FastFcaBin, FastFcaParams, FcaBin, FcaParams};
use crate::stft::Spectrogram;
use crate::synth::{SceneConfig, SceneKind, SceneTruth, SyntheticScene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Complex128,
    Float64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    /// Row-major, last axis fastest.
    pub shape: Vec<usize>,
    /// Byte offset into the data file.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    data_file: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// In-memory bundle. Tensors are appended in order and looked up by name.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub meta: serde_json::Value,
    entries: Vec<TensorEntry>,
    bytes: Vec<u8>,
}

fn manifest_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.json"))
}

impl Bundle {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            entries: Vec::new(),
            bytes: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    fn push(&mut self, name: &str, dtype: DType, shape: &[usize], values: impl Iterator<Item = f64>) {
        let offset = self.bytes.len() as u64;
        for v in values {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.entries.push(TensorEntry {
            name: name.to_owned(),
            dtype,
            shape: shape.to_vec(),
            offset,
        });
    }

    pub fn push_complex(&mut self, name: &str, shape: &[usize], data: &[Complex64]) -> Result<()> {
        check_len(shape, data.len())?;
        self.push(name, DType::Complex128, shape, data.iter().flat_map(|c| [c.re, c.im]));
        Ok(())
    }

    pub fn push_real(&mut self, name: &str, shape: &[usize], data: &[f64]) -> Result<()> {
        check_len(shape, data.len())?;
        self.push(name, DType::Float64, shape, data.iter().copied());
        Ok(())
    }

    fn raw(&self, name: &str, dtype: DType) -> Result<(&TensorEntry, Vec<f64>)> {
        let entry = self
            .entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Format(format!("bundle has no tensor {name:?}")))?;
        if entry.dtype != dtype {
            return Err(Error::Format(format!("tensor {name:?} is {:?}", entry.dtype)));
        }
        let width = if dtype == DType::Complex128 { 2 } else { 1 };
        let count = entry.shape.iter().product::<usize>() * width;
        let start = entry.offset as usize;
        let end = start + 8 * count;
        let slice = self
            .bytes
            .get(start..end)
            .ok_or_else(|| Error::Format(format!("tensor {name:?} runs past the data file")))?;
        let values = slice
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok((entry, values))
    }

    pub fn complex(&self, name: &str) -> Result<(Vec<usize>, Vec<Complex64>)> {
        let (entry, v) = self.raw(name, DType::Complex128)?;
        Ok((
            entry.shape.clone(),
            v.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect(),
        ))
    }

    pub fn real(&self, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        let (entry, v) = self.raw(name, DType::Float64)?;
        Ok((entry.shape.clone(), v))
    }

    /// Writes `<stem>.json` and `<stem>.bin` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let data_file = format!("{stem}.bin");
        fs::write(dir.join(&data_file), &self.bytes)?;
        let manifest = Manifest {
            data_file,
            meta: self.meta.clone(),
            tensors: self.entries.clone(),
        };
        fs::write(manifest_path(dir, stem), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self> {
        let manifest: Manifest = serde_json::from_slice(&fs::read(manifest_path(dir, stem))?)?;
        let bytes = fs::read(dir.join(&manifest.data_file))?;
        Ok(Self {
            meta: manifest.meta,
            entries: manifest.tensors,
            bytes,
        })
    }
}

fn check_len(shape: &[usize], len: usize) -> Result<()> {
    let expected = shape.iter().product();
    if expected != len {
        return Err(Error::DimensionMismatch { expected, actual: len });
    }
    Ok(())
}

fn expect_shape(name: &str, shape: &[usize], rank: usize) -> Result<()> {
    if shape.len() != rank {
        return Err(Error::Format(format!(
            "tensor {name:?} should have rank {rank}, found {shape:?}"
        )));
    }
    Ok(())
}

fn flatten_complex<'a>(mats: impl IntoIterator<Item = &'a CMat>) -> Vec<Complex64> {
    // row-major per matrix
    mats.into_iter()
        .flat_map(|m| m.transpose().iter().copied().collect::<Vec<_>>())
        .collect()
}

fn flatten_real<'a>(mats: impl IntoIterator<Item = &'a RMat>) -> Vec<f64> {
    mats.into_iter()
        .flat_map(|m| m.transpose().iter().copied().collect::<Vec<_>>())
        .collect()
}

fn cmat_at(data: &[Complex64], k: usize, rows: usize, cols: usize) -> CMat {
    CMat::from_row_slice(rows, cols, &data[k * rows * cols..(k + 1) * rows * cols])
}

fn rmat_at(data: &[f64], k: usize, rows: usize, cols: usize) -> RMat {
    RMat::from_row_slice(rows, cols, &data[k * rows * cols..(k + 1) * rows * cols])
}

pub fn push_spectrograms(bundle: &mut Bundle, name: &str, specs: &[Spectrogram]) -> Result<()> {
    let first = specs.first().ok_or_else(|| Error::Shape("no spectrograms".into()))?;
    if specs.iter().any(|s| !s.same_shape(first)) {
        return Err(Error::Shape("spectrogram shapes differ".into()));
    }
    let data: Vec<Complex64> = specs.iter().flat_map(|s| s.values().iter().copied()).collect();
    bundle.push_complex(
        name,
        &[specs.len(), first.channels(), first.freqs(), first.frames()],
        &data,
    )
}

pub fn read_spectrograms(bundle: &Bundle, name: &str) -> Result<Vec<Spectrogram>> {
    let (shape, data) = bundle.complex(name)?;
    expect_shape(name, &shape, 4)?;
    let size = shape[1] * shape[2] * shape[3];
    data.chunks_exact(size.max(1))
        .take(shape[0])
        .map(|c| Spectrogram::from_values(shape[1], shape[2], shape[3], c.to_vec()))
        .collect()
}

/// SCMs indexed `[i][n]`, stored as an `I × N × M × M` tensor.
pub fn push_scms(bundle: &mut Bundle, name: &str, scms: &[Vec<CMat>]) -> Result<()> {
    let n = scms.first().map_or(0, Vec::len);
    let m = scms.first().and_then(|b| b.first()).map_or(0, |r| r.nrows());
    bundle.push_complex(name, &[scms.len(), n, m, m], &flatten_complex(scms.iter().flatten()))
}

pub fn read_scms(bundle: &Bundle, name: &str) -> Result<Vec<Vec<CMat>>> {
    let (shape, data) = bundle.complex(name)?;
    expect_shape(name, &shape, 4)?;
    let (n, m) = (shape[1], shape[2]);
    Ok((0..shape[0])
        .map(|i| (0..n).map(|k| cmat_at(&data, i * n + k, m, m)).collect())
        .collect())
}

fn push_fastfca(bundle: &mut Bundle, p: &FastFcaParams) -> Result<()> {
    let (i, j, m, n) = (p.freqs(), p.blocks(), p.dim(), p.sources());
    bundle.push_complex("w", &[i, m, m], &flatten_complex(p.bins.iter().map(|b| &b.w)))?;
    bundle.push_real(
        "loadings",
        &[i, m, n],
        &flatten_real(p.bins.iter().map(|b| &b.loadings)),
    )?;
    bundle.push_real("acts", &[i, n, j], &flatten_real(p.bins.iter().map(|b| &b.acts)))
}

fn read_fastfca(bundle: &Bundle) -> Result<FastFcaParams> {
    let (ws, w) = bundle.complex("w")?;
    let (ls, l) = bundle.real("loadings")?;
    let (hs, h) = bundle.real("acts")?;
    expect_shape("w", &ws, 3)?;
    expect_shape("loadings", &ls, 3)?;
    expect_shape("acts", &hs, 3)?;
    let bins = (0..ws[0])
        .map(|i| FastFcaBin {
            w: cmat_at(&w, i, ws[1], ws[2]),
            loadings: rmat_at(&l, i, ls[1], ls[2]),
            acts: rmat_at(&h, i, hs[1], hs[2]),
        })
        .collect();
    let params = FastFcaParams { bins };
    params.validate()?;
    Ok(params)
}

fn push_fca(bundle: &mut Bundle, p: &FcaParams) -> Result<()> {
    push_scms(
        bundle,
        "scms",
        &p.bins.iter().map(|b| b.scms.clone()).collect::<Vec<_>>(),
    )?;
    bundle.push_real(
        "powers",
        &[p.freqs(), p.blocks(), p.sources()],
        &flatten_real(p.bins.iter().map(|b| &b.powers)),
    )
}

fn read_fca(bundle: &Bundle) -> Result<FcaParams> {
    let scms = read_scms(bundle, "scms")?;
    let (ps, p) = bundle.real("powers")?;
    expect_shape("powers", &ps, 3)?;
    let bins = scms
        .into_iter()
        .enumerate()
        .map(|(i, scms)| FcaBin {
            scms,
            powers: rmat_at(&p, i, ps[1], ps[2]),
        })
        .collect();
    let params = FcaParams { bins };
    params.validate()?;
    Ok(params)
}

/// Everything needed to rebuild a [`SyntheticScene`].
pub fn scene_bundle(scene: &SyntheticScene) -> Result<Bundle> {
    let mut b = Bundle::new(serde_json::to_value(scene.config)?);
    push_spectrograms(&mut b, "mixture", std::slice::from_ref(&scene.mixture))?;
    push_spectrograms(&mut b, "images", &scene.images)?;
    match &scene.truth {
        SceneTruth::Jd(p) => push_fastfca(&mut b, p)?,
        SceneTruth::FullRank(p) => push_fca(&mut b, p)?,
        SceneTruth::Instantaneous { mixing, params } => {
            b.push_complex("mixing", &[mixing.nrows(), mixing.ncols()], &flatten_complex([mixing]))?;
            push_fastfca(&mut b, params)?;
        }
    }
    Ok(b)
}

pub fn scene_from_bundle(bundle: &Bundle) -> Result<SyntheticScene> {
    let config: SceneConfig = serde_json::from_value(bundle.meta.clone())?;
    let mixture = read_spectrograms(bundle, "mixture")?
        .pop()
        .ok_or_else(|| Error::Format("empty mixture tensor".into()))?;
    let images = read_spectrograms(bundle, "images")?;
    let truth = match config.kind {
        SceneKind::JdExact => SceneTruth::Jd(read_fastfca(bundle)?),
        SceneKind::Fullrank => SceneTruth::FullRank(read_fca(bundle)?),
        SceneKind::Instantaneous => {
            let (s, a) = bundle.complex("mixing")?;
            expect_shape("mixing", &s, 2)?;
            SceneTruth::Instantaneous {
                mixing: cmat_at(&a, 0, s[0], s[1]),
                params: read_fastfca(bundle)?,
            }
        }
    };
    Ok(SyntheticScene {
        config,
        mixture,
        images,
        truth,
    })
}
