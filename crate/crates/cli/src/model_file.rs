//! Self-describing binary model container.
//!
//! Layout: magic `ENTM`, format version (u32 LE), header length (u64 LE),
//! a JSON header, then every tensor's values as f64 LE in header order.
//! The header names each parameter array with its shape and carries the
//! full training configuration (optimizer, dims, seed) and the batch-norm
//! constants, so a file can be audited without loading the payload.

use std::fs;
use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use entrain_core::corpus::TripletSample;
use entrain_core::mat::Mat;
use entrain_core::measures::{AdvModel, DrModel, Measure, ModelDims, Scorer, TrainConfig, TrainError};
use entrain_core::nn::{AdamConfig, BatchNorm, Dense, EncDec};

const MAGIC: &[u8; 4] = b"ENTM";
const VERSION: u32 = 1;

/// Per-block parameter arrays, in serialization order.
const PARTS: [&str; 8] = [
    "l1.w",
    "l1.b",
    "bn.gamma",
    "bn.beta",
    "bn.running_mean",
    "bn.running_var",
    "l2.w",
    "l2.b",
];

fn block_names(measure: Measure) -> &'static [&'static str] {
    match measure {
        Measure::Dr => &["enc0", "dec0", "enc1", "dec1"],
        Measure::Adv => &["enc0", "dec1", "dec2"],
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AdamHeader {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DimsHeader {
    feat: usize,
    hidden: usize,
    code: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConfigHeader {
    batch_size: usize,
    max_epochs: usize,
    patience: usize,
    adam: AdamHeader,
    grl_lambda: f64,
    seed: u64,
    dims: DimsHeader,
}

#[derive(Debug, Serialize, Deserialize)]
struct BnHeader {
    momentum: f64,
    eps: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelHeader {
    measure: String,
    config: ConfigHeader,
    batch_norm: BnHeader,
    pub tensors: Vec<TensorInfo>,
}

impl ModelHeader {
    pub fn measure(&self) -> Result<Measure> {
        self.measure
            .parse()
            .map_err(|_| anyhow::anyhow!("unknown measure {:?} in model header", self.measure))
    }
}

/// Either trained model behind one file format.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Dr(DrModel),
    Adv(AdvModel),
}

impl AnyModel {
    pub fn measure(&self) -> Measure {
        match self {
            AnyModel::Dr(_) => Measure::Dr,
            AnyModel::Adv(_) => Measure::Adv,
        }
    }

    pub fn cfg(&self) -> &TrainConfig {
        match self {
            AnyModel::Dr(m) => &m.cfg,
            AnyModel::Adv(m) => &m.cfg,
        }
    }

    pub fn scorer(&self) -> &dyn Scorer {
        match self {
            AnyModel::Dr(m) => m,
            AnyModel::Adv(m) => m,
        }
    }

    /// (response loss, baseline loss) per sample; score = response - baseline.
    pub fn loss_components(
        &self,
        samples: &[TripletSample],
    ) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
        match self {
            AnyModel::Dr(m) => m.loss_components(samples),
            AnyModel::Adv(m) => m.loss_components(samples),
        }
    }

    fn blocks(&self) -> Vec<(&'static str, &EncDec)> {
        match self {
            AnyModel::Dr(m) => vec![
                ("enc0", &m.enc0),
                ("dec0", &m.dec0),
                ("enc1", &m.enc1),
                ("dec1", &m.dec1),
            ],
            AnyModel::Adv(m) => vec![("enc0", &m.enc0), ("dec1", &m.dec1), ("dec2", &m.dec2)],
        }
    }
}

fn block_tensors<'a>(name: &str, e: &'a EncDec) -> Vec<(String, Vec<usize>, &'a [f64])> {
    vec![
        (format!("{name}.l1.w"), vec![e.l1.w.rows(), e.l1.w.cols()], e.l1.w.as_slice()),
        (format!("{name}.l1.b"), vec![e.l1.b.len()], &e.l1.b),
        (format!("{name}.bn.gamma"), vec![e.bn.gamma.len()], &e.bn.gamma),
        (format!("{name}.bn.beta"), vec![e.bn.beta.len()], &e.bn.beta),
        (
            format!("{name}.bn.running_mean"),
            vec![e.bn.running_mean.len()],
            &e.bn.running_mean,
        ),
        (
            format!("{name}.bn.running_var"),
            vec![e.bn.running_var.len()],
            &e.bn.running_var,
        ),
        (format!("{name}.l2.w"), vec![e.l2.w.rows(), e.l2.w.cols()], e.l2.w.as_slice()),
        (format!("{name}.l2.b"), vec![e.l2.b.len()], &e.l2.b),
    ]
}

pub fn save_model(path: &Path, model: &AnyModel) -> Result<()> {
    let blocks = model.blocks();
    let bn = &blocks[0].1.bn;
    debug_assert!(blocks
        .iter()
        .all(|(_, e)| e.bn.momentum == bn.momentum && e.bn.eps == bn.eps));
    let cfg = model.cfg();

    let mut tensors = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    for (name, block) in &blocks {
        for (tname, shape, data) in block_tensors(name, block) {
            tensors.push(TensorInfo { name: tname, shape });
            for v in data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
    }

    let header = ModelHeader {
        measure: model.measure().as_str().to_owned(),
        config: ConfigHeader {
            batch_size: cfg.batch_size,
            max_epochs: cfg.max_epochs,
            patience: cfg.patience,
            adam: AdamHeader {
                lr: cfg.adam.lr,
                beta1: cfg.adam.beta1,
                beta2: cfg.adam.beta2,
                eps: cfg.adam.eps,
            },
            grl_lambda: cfg.grl_lambda,
            seed: cfg.seed,
            dims: DimsHeader {
                feat: cfg.dims.feat,
                hidden: cfg.dims.hidden,
                code: cfg.dims.code,
            },
        },
        batch_norm: BnHeader {
            momentum: bn.momentum,
            eps: bn.eps,
        },
        tensors,
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let mut out: Vec<u8> = Vec::with_capacity(16 + header_bytes.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&payload);
    fs::write(path, out).with_context(|| format!("writing model {}", path.display()))
}

/// Header only: enough to audit parameter names and shapes.
pub fn read_header(path: &Path) -> Result<ModelHeader> {
    let mut file =
        fs::File::open(path).with_context(|| format!("opening model {}", path.display()))?;
    read_header_from(&mut file, path)
}

fn read_header_from(file: &mut fs::File, path: &Path) -> Result<ModelHeader> {
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .with_context(|| format!("{}: truncated prefix", path.display()))?;
    if &magic != MAGIC {
        bail!("{}: not a model file (bad magic)", path.display());
    }
    let mut word = [0u8; 4];
    file.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        bail!(
            "{}: unsupported model format version {version} (expected {VERSION})",
            path.display()
        );
    }
    let mut len = [0u8; 8];
    file.read_exact(&mut len)?;
    let header_len = u64::from_le_bytes(len) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)
        .with_context(|| format!("{}: truncated header", path.display()))?;
    serde_json::from_slice(&header_bytes)
        .with_context(|| format!("{}: malformed model header", path.display()))
}

pub fn load_model(path: &Path) -> Result<AnyModel> {
    let mut file =
        fs::File::open(path).with_context(|| format!("opening model {}", path.display()))?;
    let header = read_header_from(&mut file, path)?;
    let measure = header.measure()?;

    // strict layout: exactly the expected tensor names, in order
    let expected: Vec<String> = block_names(measure)
        .iter()
        .flat_map(|b| PARTS.iter().map(move |p| format!("{b}.{p}")))
        .collect();
    let found: Vec<&str> = header.tensors.iter().map(|t| t.name.as_str()).collect();
    if found != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        bail!(
            "{}: unexpected tensor layout for measure {}: found [{}]",
            path.display(),
            measure.as_str(),
            found.join(", ")
        );
    }

    let total: usize = header
        .tensors
        .iter()
        .map(|t| t.shape.iter().product::<usize>())
        .sum();
    let mut payload = vec![0u8; total * 8];
    file.read_exact(&mut payload)
        .with_context(|| format!("{}: truncated payload", path.display()))?;
    let mut trailing = [0u8; 1];
    if file.read(&mut trailing)? != 0 {
        bail!("{}: trailing bytes after payload", path.display());
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks_exact(8)")));

    let c = &header.config;
    let cfg = TrainConfig {
        batch_size: c.batch_size,
        max_epochs: c.max_epochs,
        patience: c.patience,
        adam: AdamConfig {
            lr: c.adam.lr,
            beta1: c.adam.beta1,
            beta2: c.adam.beta2,
            eps: c.adam.eps,
        },
        grl_lambda: c.grl_lambda,
        seed: c.seed,
        dims: ModelDims {
            feat: c.dims.feat,
            hidden: c.dims.hidden,
            code: c.dims.code,
        },
    };
    let bn = &header.batch_norm;

    let mut tensors = header.tensors.iter();
    let mut next_vec = |want: usize, name: &str| -> Result<Vec<f64>> {
        let info = tensors.next().expect("layout verified above");
        let n: usize = info.shape.iter().product();
        if info.shape.len() != want {
            bail!(
                "{}: tensor {name} has rank {} (expected {want})",
                path.display(),
                info.shape.len()
            );
        }
        Ok(values.by_ref().take(n).collect())
    };

    let mut load_block = |name: &str| -> Result<EncDec> {
        let w_shape = header
            .tensors
            .iter()
            .find(|t| t.name == format!("{name}.l1.w"))
            .expect("layout verified")
            .shape
            .clone();
        let l1_w = next_vec(2, &format!("{name}.l1.w"))?;
        let l1_b = next_vec(1, &format!("{name}.l1.b"))?;
        let gamma = next_vec(1, &format!("{name}.bn.gamma"))?;
        let beta = next_vec(1, &format!("{name}.bn.beta"))?;
        let running_mean = next_vec(1, &format!("{name}.bn.running_mean"))?;
        let running_var = next_vec(1, &format!("{name}.bn.running_var"))?;
        let w2_shape = header
            .tensors
            .iter()
            .find(|t| t.name == format!("{name}.l2.w"))
            .expect("layout verified")
            .shape
            .clone();
        let l2_w = next_vec(2, &format!("{name}.l2.w"))?;
        let l2_b = next_vec(1, &format!("{name}.l2.b"))?;
        if l1_b.len() != w_shape[0] || gamma.len() != w_shape[0] || l2_b.len() != w2_shape[0] {
            bail!("{}: inconsistent shapes in block {name}", path.display());
        }
        Ok(EncDec {
            l1: Dense {
                w: Mat::from_vec(w_shape[0], w_shape[1], l1_w),
                b: l1_b,
            },
            bn: BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                momentum: bn.momentum,
                eps: bn.eps,
            },
            l2: Dense {
                w: Mat::from_vec(w2_shape[0], w2_shape[1], l2_w),
                b: l2_b,
            },
        })
    };

    Ok(match measure {
        Measure::Dr => {
            let enc0 = load_block("enc0")?;
            let dec0 = load_block("dec0")?;
            let enc1 = load_block("enc1")?;
            let dec1 = load_block("dec1")?;
            AnyModel::Dr(DrModel {
                enc0,
                dec0,
                enc1,
                dec1,
                cfg,
            })
        }
        Measure::Adv => {
            let enc0 = load_block("enc0")?;
            let dec1 = load_block("dec1")?;
            let dec2 = load_block("dec2")?;
            AnyModel::Adv(AdvModel {
                enc0,
                dec1,
                dec2,
                cfg,
            })
        }
    })
}
