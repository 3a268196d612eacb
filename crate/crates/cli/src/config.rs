//! Run configuration files and their expansion into a run matrix.
//!
//! A config is TOML with four optional sections. Every `[grid]` key takes a
//! single value or a list; the matrix is their Cartesian product.
//!
//! ```toml
//! [grid]
//! dataset = "mnist"
//! encoding = ["qubit", "dense"]
//! reduction = ["pca", "autoenc"]
//! ansatz = "all"
//!
//! [train]
//! seeds = 5
//!
//! [output]
//! dir = "results/table1"
//! ```

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use qcnn::cnn::{CnnSpec, CNN_BUDGETS};
use qcnn::preprocess::{Activation, AutoencoderConfig, PI_EXCLUSIVE};
use qcnn::{
    AnsatzId, Boundary, DatasetName, EncodingKind, EncodingSpec, GradientMethod, Loss, Model,
    ModelSpec, Optimizer, Reduction, ReductionMethod, ReductionSpec, Sharing, TrainConfig,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config_err, CliResult};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

fn one<T>(v: T) -> OneOrMany<T> {
    OneOrMany::One(v)
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Dataset root holding `mnist/` and `fashion/`.
    pub root: Option<PathBuf>,
    /// Reducer cache directory; defaults to `<output dir>/cache`.
    pub cache: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub dataset: OneOrMany<String>,
    /// `qcnn`, `hqc` or `cnn`.
    pub model: OneOrMany<String>,
    pub encoding: OneOrMany<String>,
    /// Ignored for amplitude encoding, which always uses the 16x16 resize.
    pub reduction: OneOrMany<String>,
    /// Ansatz ids or `all`.
    pub ansatz: OneOrMany<String>,
    pub filters: OneOrMany<usize>,
    pub boundary: OneOrMany<String>,
    pub loss: OneOrMany<String>,
    pub optimizer: OneOrMany<String>,
    /// Parameter budgets for `model = "cnn"`.
    pub cnn_params: OneOrMany<usize>,
    pub qubits: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            dataset: one("mnist".into()),
            model: one("qcnn".into()),
            encoding: one("amplitude".into()),
            reduction: one("pca".into()),
            ansatz: one("c9b".into()),
            filters: one(1),
            boundary: one("periodic".into()),
            loss: one("ce".into()),
            optimizer: one("nesterov".into()),
            cnn_params: OneOrMany::Many(CNN_BUDGETS.iter().map(|b| b.1).collect()),
            qubits: 8,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Seeds `first_seed .. first_seed + seeds`.
    pub seeds: usize,
    pub first_seed: u64,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub gradient: String,
    /// `mean` or `sum`; unset picks the loss's own default.
    pub loss_reduction: Option<String>,
    /// Optimizer for `cnn` cells.
    pub cnn_optimizer: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            seeds: 5,
            first_seed: 0,
            iterations: t.iterations,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            gradient: t.gradient.as_str().into(),
            loss_reduction: None,
            cnn_optimizer: "adam".into(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoencoderSection {
    pub activation: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for AutoencoderSection {
    fn default() -> Self {
        let a = AutoencoderConfig::default();
        Self {
            activation: "relu".into(),
            epochs: a.epochs,
            batch_size: a.batch_size,
            learning_rate: a.learning_rate,
            seed: a.seed,
        }
    }
}

impl AutoencoderSection {
    pub fn to_config(&self) -> CliResult<AutoencoderConfig> {
        let latent_activation = match self.activation.trim().to_ascii_lowercase().as_str() {
            "relu" => Activation::Relu,
            "sigmoid" => Activation::Sigmoid,
            other => {
                return Err(config_err!(
                    "unknown autoencoder activation `{other}` (relu or sigmoid)"
                ))
            }
        };
        if self.epochs == 0
            || self.batch_size == 0
            || self.learning_rate.is_nan()
            || self.learning_rate <= 0.0
        {
            return Err(config_err!(
                "autoencoder epochs, batch_size and learning_rate must be positive"
            ));
        }
        Ok(AutoencoderConfig {
            latent_activation,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub autoencoder: AutoencoderSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| config_err!("{e}"))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.train.seeds as u64)
            .map(|k| self.train.first_seed + k)
            .collect()
    }

    /// Validates every combination and returns the de-duplicated cells in grid order.
    pub fn expand(&self) -> CliResult<Vec<Cell>> {
        if self.train.seeds == 0 {
            return Err(config_err!("train.seeds must be at least 1"));
        }
        let g = &self.grid;
        let datasets = parse_all::<DatasetName>(&g.dataset, "dataset")?;
        let models = parse_all::<ModelKind>(&g.model, "model")?;
        let encodings = parse_all::<EncodingKind>(&g.encoding, "encoding")?;
        let reductions = parse_all::<ReductionMethod>(&g.reduction, "reduction")?;
        let boundaries = parse_all::<Boundary>(&g.boundary, "boundary")?;
        let losses = parse_all::<Loss>(&g.loss, "loss")?;
        let optimizers = parse_all::<Optimizer>(&g.optimizer, "optimizer")?;
        let mut ansatze = Vec::new();
        for a in g.ansatz.to_vec() {
            if a.trim().eq_ignore_ascii_case("all") {
                ansatze.extend(AnsatzId::ALL);
            } else {
                ansatze.push(a.parse::<AnsatzId>().map_err(|e| config_err!("{e}"))?);
            }
        }
        let filters = g.filters.to_vec();
        let gradient = self
            .train
            .gradient
            .parse::<GradientMethod>()
            .map_err(|e| config_err!("{e}"))?;
        let reduction = match &self.train.loss_reduction {
            Some(r) => Some(r.parse::<Reduction>().map_err(|e| config_err!("{e}"))?),
            None => None,
        };
        let cnn_optimizer = self
            .train
            .cnn_optimizer
            .parse::<Optimizer>()
            .map_err(|e| config_err!("{e}"))?;
        if self.train.iterations == 0
            || self.train.batch_size == 0
            || self.train.learning_rate.is_nan()
            || self.train.learning_rate <= 0.0
        {
            return Err(config_err!(
                "train iterations, batch_size and learning_rate must be positive"
            ));
        }
        let ae = self.autoencoder.to_config()?;
        let train_for = |loss: Loss, optimizer: Optimizer| TrainConfig {
            loss,
            optimizer,
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            iterations: self.train.iterations,
            gradient,
            momentum: self.train.momentum,
            reduction,
        };

        let mut cells: Vec<Cell> = Vec::new();
        let mut push = |cell: Cell| {
            if !cells.iter().any(|c| c.config_hash() == cell.config_hash()) {
                cells.push(cell);
            }
        };
        for &dataset in &datasets {
            for &model in &models {
                for &loss in &losses {
                    if model == ModelKind::Cnn {
                        for &budget in &g.cnn_params.to_vec() {
                            for &red in &reductions {
                                let input_len = CNN_BUDGETS
                                    .iter()
                                    .find(|b| b.1 == budget)
                                    .map(|b| b.0)
                                    .ok_or_else(|| config_err!("no CNN with {budget} parameters; budgets are {CNN_BUDGETS:?}"))?;
                                let cell = Cell {
                                    dataset,
                                    model,
                                    encoding: None,
                                    reduction: red,
                                    features: input_len,
                                    ansatz: None,
                                    filters: 1,
                                    boundary: Boundary::Periodic,
                                    qubits: 0,
                                    cnn_params: Some(budget),
                                    train: train_for(loss, cnn_optimizer),
                                    autoencoder: ae,
                                };
                                cell.validate()?;
                                push(cell);
                            }
                        }
                        continue;
                    }
                    for &optimizer in &optimizers {
                        for &boundary in &boundaries {
                            for &l in &filters {
                                for &id in &ansatze {
                                    for &enc in &encodings {
                                        let reds: Vec<ReductionMethod> =
                                            if enc == EncodingKind::Amplitude {
                                                vec![ReductionMethod::Bilinear]
                                            } else {
                                                reductions.clone()
                                            };
                                        for red in reds {
                                            let spec = EncodingSpec::new(enc, g.qubits)
                                                .map_err(|e| config_err!("{e}"))?;
                                            let cell = Cell {
                                                dataset,
                                                model,
                                                encoding: Some(enc),
                                                reduction: red,
                                                features: spec.capacity(),
                                                ansatz: Some(id),
                                                filters: l,
                                                boundary,
                                                qubits: g.qubits,
                                                cnn_params: None,
                                                train: train_for(loss, optimizer),
                                                autoencoder: ae,
                                            };
                                            cell.validate()?;
                                            push(cell);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(cells)
    }
}

fn parse_all<T>(values: &OneOrMany<String>, what: &str) -> CliResult<Vec<T>>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    let out: Vec<T> = values
        .to_vec()
        .iter()
        .map(|s| s.parse::<T>().map_err(|e| config_err!("{what}: {e}")))
        .collect::<CliResult<_>>()?;
    if out.is_empty() {
        return Err(config_err!("grid.{what} is empty"));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Qcnn,
    Hqc,
    Cnn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Qcnn => "qcnn",
            ModelKind::Hqc => "hqc",
            ModelKind::Cnn => "cnn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qcnn" => Ok(ModelKind::Qcnn),
            "hqc" | "ttn" => Ok(ModelKind::Hqc),
            "cnn" => Ok(ModelKind::Cnn),
            other => Err(format!("unknown model `{other}` (qcnn, hqc or cnn)")),
        }
    }
}

/// Feature pipeline identity: which reducer and which rescale interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureKey {
    pub dataset: DatasetName,
    pub reduction: ReductionMethod,
    pub dim: usize,
    pub rescale: Option<(f64, f64)>,
}

/// One point of the run matrix; a run is a cell plus a seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub dataset: DatasetName,
    pub model: ModelKind,
    /// `None` for CNN cells.
    pub encoding: Option<EncodingKind>,
    pub reduction: ReductionMethod,
    pub features: usize,
    pub ansatz: Option<AnsatzId>,
    pub filters: usize,
    pub boundary: Boundary,
    pub qubits: usize,
    pub cnn_params: Option<usize>,
    pub train: TrainConfig,
    pub autoencoder: AutoencoderConfig,
}

/// A constructed model for a cell.
pub enum Network {
    Quantum(Box<Model>),
    Classical(CnnSpec),
}

impl Network {
    pub fn param_count(&self) -> usize {
        match self {
            Network::Quantum(m) => m.param_count(),
            Network::Classical(s) => s.target_params,
        }
    }

    pub fn model_hash(&self) -> String {
        match self {
            Network::Quantum(m) => m.spec().hash_hex(),
            Network::Classical(s) => s.hash_hex(),
        }
    }
}

impl Cell {
    pub fn sharing(&self) -> Sharing {
        match self.model {
            ModelKind::Hqc => Sharing::Independent,
            _ => Sharing::Shared,
        }
    }

    pub fn model_spec(&self) -> Option<ModelSpec> {
        let enc = EncodingSpec::new(self.encoding?, self.qubits).ok()?;
        let id = self.ansatz?;
        let base = match self.model {
            ModelKind::Qcnn => ModelSpec::qcnn(enc, id),
            ModelKind::Hqc => ModelSpec::hqc(enc, id),
            ModelKind::Cnn => return None,
        };
        Some(base.with_filters(self.filters).with_boundary(self.boundary))
    }

    /// Checks capacity and construction rules without touching data.
    pub fn validate(&self) -> CliResult<()> {
        if let Some(enc) = self.encoding {
            let spec = EncodingSpec::new(enc, self.qubits).map_err(|e| config_err!("{e}"))?;
            let produced = if self.reduction == ReductionMethod::Bilinear {
                256
            } else {
                self.features
            };
            if produced != spec.capacity() {
                return Err(config_err!(
                    "{}: {enc} encoding on {} qubits takes {} features but {} yields {produced}",
                    self.label(),
                    self.qubits,
                    spec.capacity(),
                    self.reduction
                ));
            }
        }
        ReductionSpec::new(self.reduction, self.feature_key().dim, self.rescale())
            .map_err(|e| config_err!("{}: {e}", self.label()))?;
        self.network().map(|_| ())
    }

    pub fn network(&self) -> CliResult<Network> {
        match self.model {
            ModelKind::Cnn => {
                let budget = self
                    .cnn_params
                    .ok_or_else(|| config_err!("cnn cell without a parameter budget"))?;
                let spec = CnnSpec::new(self.features, budget).map_err(|e| config_err!("{e}"))?;
                spec.plan().map_err(|e| config_err!("{e}"))?;
                Ok(Network::Classical(spec))
            }
            _ => {
                let spec = self
                    .model_spec()
                    .ok_or_else(|| config_err!("{}: incomplete quantum cell", self.label()))?;
                Model::new(spec)
                    .map(|m| Network::Quantum(Box::new(m)))
                    .map_err(|e| config_err!("{}: {e}", self.label()))
            }
        }
    }

    /// Target interval applied after reduction.
    pub fn rescale(&self) -> Option<(f64, f64)> {
        match self.encoding {
            None | Some(EncodingKind::Qubit) | Some(EncodingKind::Dense) => {
                Some((0.0, PI_EXCLUSIVE))
            }
            Some(EncodingKind::HybridAngle) => Some((0.0, FRAC_PI_2)),
            Some(EncodingKind::Amplitude) | Some(EncodingKind::HybridDirect) => None,
        }
    }

    pub fn feature_key(&self) -> FeatureKey {
        FeatureKey {
            dataset: self.dataset,
            reduction: self.reduction,
            dim: if self.reduction == ReductionMethod::Bilinear {
                256
            } else {
                self.features
            },
            rescale: self.rescale(),
        }
    }

    pub fn ansatz_str(&self) -> String {
        self.ansatz
            .map_or_else(|| "-".into(), |a| a.as_str().into())
    }

    pub fn encoding_str(&self) -> String {
        self.encoding
            .map_or_else(|| "-".into(), |e| e.as_str().into())
    }

    pub fn reduction_str(&self) -> String {
        format!("{}{}", self.reduction, self.feature_key().dim)
    }

    pub fn label(&self) -> String {
        match self.model {
            ModelKind::Cnn => format!(
                "{} cnn{} {} loss={} opt={}",
                self.dataset,
                self.cnn_params.unwrap_or(0),
                self.reduction_str(),
                self.train.loss,
                self.train.optimizer
            ),
            _ => format!(
                "{} {} {} {} {} L={} {} loss={} opt={}",
                self.dataset,
                self.model,
                self.ansatz_str(),
                self.encoding_str(),
                self.reduction_str(),
                self.filters,
                self.boundary,
                self.train.loss,
                self.train.optimizer
            ),
        }
    }

    /// Everything that determines a run's outcome except the seed.
    pub fn canonical(&self) -> String {
        let t = &self.train;
        let mut s = format!(
            "dataset={};model={};ansatz={};encoding={};reduction={};features={};filters={};boundary={};qubits={};cnn={};\
             loss={};optimizer={};lr={:e};batch={};iterations={};gradient={};momentum={:e};reduction_mode={}",
            self.dataset,
            self.model,
            self.ansatz_str(),
            self.encoding_str(),
            self.reduction,
            self.features,
            self.filters,
            self.boundary,
            self.qubits,
            self.cnn_params.unwrap_or(0),
            t.loss,
            t.optimizer,
            t.learning_rate,
            t.batch_size,
            t.iterations,
            t.gradient,
            t.momentum,
            t.effective_reduction(),
        );
        if self.reduction == ReductionMethod::AutoEnc {
            let a = &self.autoencoder;
            s.push_str(&format!(
                ";ae={:?},{},{},{:e},{}",
                a.latent_activation, a.epochs, a.batch_size, a.learning_rate, a.seed
            ));
        }
        s
    }

    pub fn config_hash(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }

    /// File-name-safe identifier.
    pub fn slug(&self) -> String {
        let head = match self.model {
            ModelKind::Cnn => format!(
                "{}_cnn{}_{}",
                self.dataset,
                self.cnn_params.unwrap_or(0),
                self.reduction_str()
            ),
            _ => format!(
                "{}_{}_{}_{}_{}_L{}_{}",
                self.dataset,
                self.model,
                self.ansatz_str(),
                self.encoding_str(),
                self.reduction_str(),
                self.filters,
                self.boundary
            ),
        };
        format!(
            "{head}_{}_{}_{}",
            self.train.loss,
            self.train.optimizer,
            &self.config_hash()[..8]
        )
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_one_grid_has_ninety_cells() {
        let cfg = RunConfig::parse(
            r#"
            [grid]
            encoding = ["amplitude", "qubit", "dense", "hde", "hae"]
            reduction = ["pca", "autoenc"]
            ansatz = "all"
            "#,
        )
        .unwrap();
        let cells = cfg.expand().unwrap();
        // Amplitude has a single resize column; the other four encodings have two.
        assert_eq!(cells.len(), 10 * (1 + 4 * 2));
        assert_eq!(cfg.seeds(), vec![0, 1, 2, 3, 4]);
        let mut hashes: Vec<String> = cells.iter().map(Cell::config_hash).collect();
        hashes.sort();
        hashes.dedup();
        assert_eq!(hashes.len(), cells.len());
    }

    #[test]
    fn capacity_violation_is_a_config_error() {
        let cfg =
            RunConfig::parse("[grid]\nencoding = \"qubit\"\nreduction = \"bilinear\"\n").unwrap();
        let err = cfg.expand().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("takes 8 features"), "{err}");

        let cfg = RunConfig::parse("[grid]\nencoding = \"amplitude\"\nqubits = 4\n").unwrap();
        let err = cfg.expand().unwrap_err();
        assert!(err.to_string().contains("256"), "{err}");
    }

    #[test]
    fn unknown_keys_and_values_are_rejected() {
        assert!(RunConfig::parse("[grid]\nansatz_typo = 1\n").is_err());
        let cfg = RunConfig::parse("[grid]\nansatz = \"c10\"\n").unwrap();
        assert_eq!(cfg.expand().unwrap_err().exit_code(), 2);
        let cfg = RunConfig::parse("[grid]\nmodel = \"cnn\"\ncnn_params = 30\n").unwrap();
        assert_eq!(cfg.expand().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn cnn_cells_use_their_own_optimizer_and_input_size() {
        let cfg = RunConfig::parse("[grid]\nmodel = \"cnn\"\nreduction = [\"pca\", \"autoenc\"]\n")
            .unwrap();
        let cells = cfg.expand().unwrap();
        assert_eq!(cells.len(), 8);
        assert!(cells.iter().all(|c| c.train.optimizer == Optimizer::Adam));
        let sizes: Vec<usize> = cells.iter().map(|c| c.features).collect();
        assert_eq!(sizes, vec![8, 8, 8, 8, 16, 16, 16, 16]);
        for c in &cells {
            assert_eq!(c.network().unwrap().param_count(), c.cnn_params.unwrap());
        }
    }

    #[test]
    fn matched_training_conditions() {
        let cfg = RunConfig::parse(
            "[grid]\nmodel = [\"qcnn\", \"cnn\"]\nencoding = \"dense\"\ncnn_params = 56\n",
        )
        .unwrap();
        let cells = cfg.expand().unwrap();
        let (q, c) = (&cells[0].train, &cells[1].train);
        assert_eq!(
            (q.iterations, q.batch_size, q.learning_rate),
            (c.iterations, c.batch_size, c.learning_rate)
        );
        assert_eq!(cells[0].feature_key(), cells[1].feature_key());
    }

    #[test]
    fn slug_is_stable_and_distinguishes_settings() {
        let a = RunConfig::parse("[grid]\nencoding = \"qubit\"\n")
            .unwrap()
            .expand()
            .unwrap();
        let b = RunConfig::parse("[grid]\nencoding = \"qubit\"\n[train]\niterations = 100\n")
            .unwrap()
            .expand()
            .unwrap();
        assert_eq!(a[0].slug(), a[0].clone().slug());
        assert!(a[0]
            .slug()
            .starts_with("mnist_qcnn_c9b_qubit_pca8_L1_periodic_ce_nesterov_"));
        assert_ne!(a[0].config_hash(), b[0].config_hash());
    }
}
