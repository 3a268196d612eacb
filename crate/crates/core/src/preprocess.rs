//! Dimensionality reduction and feature rescaling.
//!
//! Reducers are fit on the training split only; `apply` never mutates them.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, QcnnError, Result};

/// Upper end used for half-open `[0, pi)` targets.
pub const PI_EXCLUSIVE: f64 = std::f64::consts::PI * (1.0 - 1e-6);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionMethod {
    Bilinear,
    Pca,
    AutoEnc,
}

impl ReductionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Bilinear => "bilinear",
            Self::Pca => "pca",
            Self::AutoEnc => "autoenc",
        }
    }
}

impl fmt::Display for ReductionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReductionMethod {
    type Err = QcnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bilinear" | "resize" => Ok(Self::Bilinear),
            "pca" => Ok(Self::Pca),
            "autoenc" | "autoencoder" | "ae" => Ok(Self::AutoEnc),
            other => Err(invalid!("unknown reduction `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionSpec {
    pub method: ReductionMethod,
    pub out_dim: usize,
    /// Target interval for per-feature min-max rescaling.
    pub rescale: Option<(f64, f64)>,
}

impl ReductionSpec {
    pub fn new(
        method: ReductionMethod,
        out_dim: usize,
        rescale: Option<(f64, f64)>,
    ) -> Result<Self> {
        match method {
            ReductionMethod::Bilinear if out_dim != 256 => {
                return Err(invalid!(
                    "bilinear resize only produces 256 features, asked for {out_dim}"
                ))
            }
            ReductionMethod::Pca | ReductionMethod::AutoEnc
                if !matches!(out_dim, 8 | 16 | 30 | 32) =>
            {
                return Err(invalid!(
                    "{method} supports 8, 16, 30 or 32 features, asked for {out_dim}"
                ))
            }
            _ => {}
        }
        if let Some((lo, hi)) = rescale {
            if !(lo < hi) {
                return Err(invalid!("rescale interval [{lo}, {hi}] is empty"));
            }
        }
        Ok(Self {
            method,
            out_dim,
            rescale,
        })
    }
}

/// Bilinear resampling with half-pixel centers and edge clamping; row-major in and out.
pub fn bilinear_resize(
    image: &[f64],
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
) -> Result<Vec<f64>> {
    if image.len() != in_h * in_w || in_h == 0 || in_w == 0 || out_h == 0 || out_w == 0 {
        return Err(invalid!(
            "bilinear resize expects a {in_h}x{in_w} image, got {} values",
            image.len()
        ));
    }
    let axis = |i: usize, n_in: usize, n_out: usize| {
        let scale = n_in as f64 / n_out as f64;
        let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, src - lo as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        let (y0, y1, wy) = axis(r, in_h, out_h);
        for c in 0..out_w {
            let (x0, x1, wx) = axis(c, in_w, out_w);
            let top = image[y0 * in_w + x0] * (1.0 - wx) + image[y0 * in_w + x1] * wx;
            let bottom = image[y1 * in_w + x0] * (1.0 - wx) + image[y1 * in_w + x1] * wx;
            out.push(top * (1.0 - wy) + bottom * wy);
        }
    }
    Ok(out)
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || d == 0 {
        return Err(invalid!("cannot fit on an empty feature matrix"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != d) {
        return Err(invalid!(
            "row {i} has {} features, expected {d}",
            rows[i].len()
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// One principal axis per row, by descending eigenvalue.
    pub components: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    pub fn out_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(invalid!(
                "PCA fitted on {} features, got {}",
                self.mean.len(),
                x.len()
            ));
        }
        let centered = DVector::from_column_slice(x) - &self.mean;
        Ok((&self.components * centered).iter().copied().collect())
    }
}

/// Top `out_dim` principal axes of the mean-centered sample covariance.
pub fn fit_pca(train: &[Vec<f64>], out_dim: usize) -> Result<Pca> {
    let x = to_matrix(train)?;
    let (n, d) = x.shape();
    if out_dim == 0 || out_dim > d {
        return Err(invalid!("PCA out_dim {out_dim} must be in 1..={d}"));
    }
    if n < 2 {
        return Err(invalid!("PCA needs at least two samples"));
    }
    let mean = x.row_mean().transpose();
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut components = DMatrix::zeros(out_dim, d);
    let mut eigenvalues = Vec::with_capacity(out_dim);
    for (k, &idx) in order.iter().take(out_dim).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        // Deterministic sign: largest-magnitude entry positive.
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        components.row_mut(k).copy_from(&v.transpose());
        eigenvalues.push(eig.eigenvalues[idx]);
    }
    Ok(Pca {
        mean,
        components,
        eigenvalues,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    #[default]
    Relu,
}

impl Activation {
    fn eval(self, v: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(v),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative in terms of the activation output.
    fn slope(self, out: f64) -> f64 {
        match self {
            Activation::Sigmoid => out * (1.0 - out),
            Activation::Relu => f64::from(u8::from(out > 0.0)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    /// Hidden-layer activation; the output layer is always sigmoid.
    #[serde(default)]
    pub latent_activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            latent_activation: Activation::Relu,
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// One-hidden-layer autoencoder with a sigmoid output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    pub latent_activation: Activation,
    /// `latent x input`
    pub w_enc: DMatrix<f64>,
    pub b_enc: DVector<f64>,
    /// `input x latent`
    pub w_dec: DMatrix<f64>,
    pub b_dec: DVector<f64>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}

fn add_bias_activate(mut z: DMatrix<f64>, b: &DVector<f64>, act: Activation) -> DMatrix<f64> {
    for mut row in z.row_iter_mut() {
        for (v, bias) in row.iter_mut().zip(b.iter()) {
            *v = act.eval(*v + bias);
        }
    }
    z
}

impl Autoencoder {
    pub fn new(
        input_dim: usize,
        latent_dim: usize,
        latent_activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            latent_activation,
            w_enc: glorot(latent_dim, input_dim, rng),
            b_enc: DVector::zeros(latent_dim),
            w_dec: glorot(input_dim, latent_dim, rng),
            b_dec: DVector::zeros(input_dim),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.w_enc.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_enc.ncols()
    }

    /// Latent activations for a batch, one row per sample.
    fn encode_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        add_bias_activate(
            x * self.w_enc.transpose(),
            &self.b_enc,
            self.latent_activation,
        )
    }

    fn decode_batch(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        add_bias_activate(h * self.w_dec.transpose(), &self.b_dec, Activation::Sigmoid)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(invalid!(
                "autoencoder expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            ));
        }
        let h = self.encode_batch(&DMatrix::from_row_slice(1, x.len(), x));
        Ok(h.iter().copied().collect())
    }

    /// Reconstruction MSE over row-major samples.
    pub fn reconstruction_mse_rows(&self, rows: &[Vec<f64>]) -> Result<f64> {
        let x = to_matrix(rows)?;
        if x.ncols() != self.input_dim() {
            return Err(invalid!(
                "autoencoder expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            ));
        }
        Ok(self.reconstruction_mse(&x))
    }

    pub fn reconstruction_mse(&self, x: &DMatrix<f64>) -> f64 {
        let y = self.decode_batch(&self.encode_batch(x));
        (y - x).norm_squared() / x.len() as f64
    }
}

struct AdamState {
    m: Vec<DMatrix<f64>>,
    v: Vec<DMatrix<f64>>,
    t: i32,
}

impl AdamState {
    fn new(shapes: &[(usize, usize)]) -> Self {
        Self {
            m: shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: [&mut DMatrix<f64>; 4], grads: [DMatrix<f64>; 4], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            for i in 0..p.len() {
                m[i] = B1 * m[i] + (1.0 - B1) * g[i];
                v[i] = B2 * v[i] + (1.0 - B2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + 1e-8);
            }
        }
    }
}

/// Trains on `train` and returns the model with the full-data reconstruction
/// MSE before training and after each epoch.
pub fn fit_autoencoder(
    train: &[Vec<f64>],
    latent_dim: usize,
    config: &AutoencoderConfig,
) -> Result<(Autoencoder, Vec<f64>)> {
    let x = to_matrix(train)?;
    let (n, d) = x.shape();
    if latent_dim == 0 || config.batch_size == 0 {
        return Err(invalid!(
            "autoencoder needs latent_dim >= 1 and batch_size >= 1"
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ae = Autoencoder::new(d, latent_dim, config.latent_activation, &mut rng);
    // Biases live as column matrices so Adam treats every tensor alike.
    let mut b_enc = DMatrix::from_column_slice(latent_dim, 1, ae.b_enc.as_slice());
    let mut b_dec = DMatrix::from_column_slice(d, 1, ae.b_dec.as_slice());
    let mut adam = AdamState::new(&[(latent_dim, d), (latent_dim, 1), (d, latent_dim), (d, 1)]);
    let mut history = vec![ae.reconstruction_mse(&x)];
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let xb = x.select_rows(chunk.iter());
            let bsz = chunk.len();
            let h = ae.encode_batch(&xb);
            let y = ae.decode_batch(&h);
            let scale = 2.0 / (bsz * d) as f64;
            let mut dz2 = &y - &xb;
            for (g, yv) in dz2.iter_mut().zip(y.iter()) {
                *g *= scale * yv * (1.0 - yv);
            }
            let g_wdec = dz2.tr_mul(&h);
            let g_bdec = DMatrix::from_iterator(d, 1, dz2.row_sum().iter().copied());
            let mut dz1 = &dz2 * &ae.w_dec;
            for (g, hv) in dz1.iter_mut().zip(h.iter()) {
                *g *= ae.latent_activation.slope(*hv);
            }
            let g_wenc = dz1.tr_mul(&xb);
            let g_benc = DMatrix::from_iterator(latent_dim, 1, dz1.row_sum().iter().copied());
            adam.step(
                [&mut ae.w_enc, &mut b_enc, &mut ae.w_dec, &mut b_dec],
                [g_wenc, g_benc, g_wdec, g_bdec],
                config.learning_rate,
            );
            ae.b_enc.copy_from_slice(b_enc.as_slice());
            ae.b_dec.copy_from_slice(b_dec.as_slice());
        }
        let loss = ae.reconstruction_mse(&x);
        if !loss.is_finite() {
            return Err(QcnnError::TrainingFailure {
                iteration: history.len(),
                message: format!("autoencoder loss became {loss}"),
            });
        }
        history.push(loss);
    }
    let (first, last) = (history[0], *history.last().unwrap());
    if last > first {
        return Err(QcnnError::TrainingFailure {
            iteration: config.epochs,
            message: format!("autoencoder did not converge: loss {first} -> {last}"),
        });
    }
    Ok((ae, history))
}

/// Per-feature affine map fitted on training data.
#[derive(Clone, Debug, PartialEq)]
pub struct Rescaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl Rescaler {
    pub fn fit(train: &[Vec<f64>], lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(invalid!("rescale interval [{lo}, {hi}] is empty"));
        }
        let x = to_matrix(train)?;
        let min = x.column_iter().map(|c| c.min()).collect();
        let max = x.column_iter().map(|c| c.max()).collect();
        Ok(Self { min, max, lo, hi })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.min.len() {
            return Err(invalid!(
                "rescaler fitted on {} features, got {}",
                self.min.len(),
                x.len()
            ));
        }
        Ok(x.iter()
            .enumerate()
            .map(|(j, &v)| {
                let span = self.max[j] - self.min[j];
                if span <= 0.0 {
                    return 0.5 * (self.lo + self.hi);
                }
                let t = (v - self.min[j]) / span;
                (self.lo + t * (self.hi - self.lo)).clamp(self.lo, self.hi)
            })
            .collect())
    }
}

/// Rescales every column of `train` and `test` with bounds taken from `train`.
pub fn rescale(
    train: &[Vec<f64>],
    test: &[Vec<f64>],
    lo: f64,
    hi: f64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let r = Rescaler::fit(train, lo, hi)?;
    let tr = train.iter().map(|x| r.apply(x)).collect::<Result<_>>()?;
    let te = test.iter().map(|x| r.apply(x)).collect::<Result<_>>()?;
    Ok((tr, te))
}

#[derive(Clone, Debug, PartialEq)]
pub enum FittedReducer {
    /// 28x28 to 16x16.
    Bilinear,
    Pca(Pca),
    AutoEnc(Autoencoder),
}

const CACHE_MAGIC: &[u8; 8] = b"QCNNRED\0";
const CACHE_VERSION: u32 = 1;

impl FittedReducer {
    pub fn fit(spec: &ReductionSpec, train: &[Vec<f64>], ae: &AutoencoderConfig) -> Result<Self> {
        match spec.method {
            ReductionMethod::Bilinear => Ok(Self::Bilinear),
            ReductionMethod::Pca => fit_pca(train, spec.out_dim).map(Self::Pca),
            ReductionMethod::AutoEnc => {
                fit_autoencoder(train, spec.out_dim, ae).map(|(m, _)| Self::AutoEnc(m))
            }
        }
    }

    pub fn method(&self) -> ReductionMethod {
        match self {
            Self::Bilinear => ReductionMethod::Bilinear,
            Self::Pca(_) => ReductionMethod::Pca,
            Self::AutoEnc(_) => ReductionMethod::AutoEnc,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Bilinear => bilinear_resize(x, 28, 28, 16, 16),
            Self::Pca(p) => p.apply(x),
            Self::AutoEnc(a) => a.apply(x),
        }
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|x| self.apply(x)).collect()
    }

    /// Little-endian binary: magic, version, method tag, then shapes and f64 payloads.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        let put_mat = |out: &mut Vec<u8>, m: &DMatrix<f64>| {
            out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
            for v in m.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        match self {
            Self::Bilinear => out.push(0),
            Self::Pca(p) => {
                out.push(1);
                put_mat(
                    &mut out,
                    &DMatrix::from_column_slice(p.mean.len(), 1, p.mean.as_slice()),
                );
                put_mat(&mut out, &p.components);
                put_mat(
                    &mut out,
                    &DMatrix::from_column_slice(p.eigenvalues.len(), 1, &p.eigenvalues),
                );
            }
            Self::AutoEnc(a) => {
                out.push(match a.latent_activation {
                    Activation::Sigmoid => 2,
                    Activation::Relu => 3,
                });
                put_mat(&mut out, &a.w_enc);
                put_mat(
                    &mut out,
                    &DMatrix::from_column_slice(a.b_enc.len(), 1, a.b_enc.as_slice()),
                );
                put_mat(&mut out, &a.w_dec);
                put_mat(
                    &mut out,
                    &DMatrix::from_column_slice(a.b_dec.len(), 1, a.b_dec.as_slice()),
                );
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| QcnnError::Parse {
                offset: bytes.len() as u64,
                message: format!("reducer cache truncated, needed {n} bytes at {pos}"),
            })?;
            pos += n;
            Ok(s)
        };
        if take(8)? != CACHE_MAGIC {
            return Err(QcnnError::Parse {
                offset: 0,
                message: "not a reducer cache file".into(),
            });
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(QcnnError::Parse {
                offset: 8,
                message: format!("unsupported reducer cache version {version}"),
            });
        }
        let tag = take(1)?[0];
        let mut mat = || -> Result<DMatrix<f64>> {
            let r = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
            let c = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
            let count = r
                .checked_mul(c)
                .filter(|&k| k <= bytes.len() / 8)
                .ok_or_else(|| QcnnError::Parse {
                    offset: 0,
                    message: format!("implausible matrix shape {r}x{c}"),
                })?;
            let raw = take(count * 8)?;
            let vals: Vec<f64> = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            Ok(DMatrix::from_column_slice(r, c, &vals))
        };
        match tag {
            0 => Ok(Self::Bilinear),
            1 => {
                let mean = mat()?;
                let components = mat()?;
                let eig = mat()?;
                Ok(Self::Pca(Pca {
                    mean: DVector::from_column_slice(mean.as_slice()),
                    components,
                    eigenvalues: eig.as_slice().to_vec(),
                }))
            }
            2 | 3 => {
                let latent_activation = if tag == 2 {
                    Activation::Sigmoid
                } else {
                    Activation::Relu
                };
                let w_enc = mat()?;
                let b_enc = mat()?;
                let w_dec = mat()?;
                let b_dec = mat()?;
                Ok(Self::AutoEnc(Autoencoder {
                    latent_activation,
                    w_enc,
                    b_enc: DVector::from_column_slice(b_enc.as_slice()),
                    w_dec,
                    b_dec: DVector::from_column_slice(b_dec.as_slice()),
                }))
            }
            t => Err(QcnnError::Parse {
                offset: 12,
                message: format!("unknown reducer tag {t}"),
            }),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::File::create(&tmp)?.write_all(&self.to_bytes())?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

/// Cache file name for a fitted reducer.
pub fn cache_file_name(
    dataset: &str,
    method: ReductionMethod,
    out_dim: usize,
    seed: u64,
) -> String {
    format!("{dataset}-{method}-{out_dim}-s{seed}.red")
}
