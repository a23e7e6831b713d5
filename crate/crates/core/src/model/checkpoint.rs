use std::fs;
use std::path::{Path, PathBuf};

use super::{Composition, ModelConfig, NBodyModel, Standardizer};
use super::{GpaParams, Matrix, RraParams};
use crate::{config_hash, Error, Result, FORMAT_VERSION};

const MAGIC: &[u8; 4] = b"VRSR";
const BINARY_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Everything needed to rebuild an [`NBodyModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub arrays: Vec<NamedArray>,
}

fn manifest_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".manifest");
    PathBuf::from(p)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn from_model(model: &NBodyModel) -> Self {
        let mut arrays: Vec<NamedArray> = model
            .named_params()
            .into_iter()
            .map(|(name, shape, data)| NamedArray {
                name: name.into(),
                shape,
                data: data.to_vec(),
            })
            .collect();
        let dim = model.input_norm.mean.len();
        for (name, v) in [
            ("norm.input.mean", &model.input_norm.mean),
            ("norm.input.std", &model.input_norm.std),
            ("norm.target.mean", &model.target_norm.mean),
            ("norm.target.std", &model.target_norm.std),
        ] {
            arrays.push(NamedArray {
                name: name.into(),
                shape: vec![dim],
                data: v.clone(),
            });
        }
        arrays.push(NamedArray {
            name: "mass_features".into(),
            shape: vec![model.mass_features.len()],
            data: model.mass_features.clone(),
        });
        Self {
            config: model.config.clone(),
            arrays,
        }
    }

    fn take(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| bad(format!("missing array {name}")))
    }

    fn matrix(&self, name: &str) -> Result<Matrix> {
        let a = self.take(name)?;
        match a.shape[..] {
            [r, c] => Matrix::from_vec(r, c, a.data.clone()),
            _ => Err(bad(format!("{name} is not a matrix"))),
        }
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.take(name)?.data.clone())
    }

    pub fn into_model(self) -> Result<NBodyModel> {
        let rra = RraParams {
            lift: self.matrix("rra.lift")?,
            w_b: self.matrix("rra.w_b")?,
            readout: self.matrix("rra.readout")?,
            generators: self.config.generators,
        };
        let gpa = match self.config.composition {
            Composition::Rra => None,
            Composition::GpaRra => Some(GpaParams {
                w_q: self.matrix("gpa.w_q")?,
                w_k: self.matrix("gpa.w_k")?,
                w_v: self.matrix("gpa.w_v")?,
                gamma: *self
                    .vector("gpa.gamma")?
                    .first()
                    .ok_or_else(|| bad("empty gamma"))?,
            }),
        };
        Ok(NBodyModel {
            input_norm: Standardizer {
                mean: self.vector("norm.input.mean")?,
                std: self.vector("norm.input.std")?,
            },
            target_norm: Standardizer {
                mean: self.vector("norm.target.mean")?,
                std: self.vector("norm.target.std")?,
            },
            mass_features: self.vector("mass_features")?,
            config: self.config,
            rra,
            gpa,
        })
    }
}

fn shape_str(shape: &[usize]) -> String {
    shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

/// Writes the binary at `path` and a text manifest next to it.
pub fn save_checkpoint(model: &NBodyModel, path: &Path) -> Result<()> {
    let ck = Checkpoint::from_model(model);
    let mut bin = Vec::new();
    bin.extend_from_slice(MAGIC);
    bin.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    bin.extend_from_slice(&(ck.arrays.len() as u32).to_le_bytes());
    for a in &ck.arrays {
        bin.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
        bin.extend_from_slice(a.name.as_bytes());
        bin.extend_from_slice(&(a.shape.len() as u32).to_le_bytes());
        for &d in &a.shape {
            bin.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &a.data {
            bin.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bin)?;

    let config_json = serde_json::to_string(&ck.config)?;
    let mut manifest = format!(
        "format {FORMAT_VERSION}\nseed {}\nconfig_hash {}\nconfig {config_json}\n",
        ck.config.seed,
        config_hash(&ck.config)?
    );
    for a in &ck.arrays {
        manifest.push_str(&format!("array {} {}\n", a.name, shape_str(&a.shape)));
    }
    fs::write(manifest_path(path), manifest)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn bytes(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| bad("truncated file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.bytes(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.bytes(8)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<NBodyModel> {
    let buf = fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.bytes(4)? != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != BINARY_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()? as usize;
    let mut arrays = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.bytes(len)?.to_vec())
            .map_err(|_| bad("array name is not UTF-8"))?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.bytes(n.checked_mul(8).ok_or_else(|| bad("array too large"))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        arrays.push(NamedArray { name, shape, data });
    }
    if r.pos != buf.len() {
        return Err(bad("trailing bytes after arrays"));
    }

    let manifest = fs::read_to_string(manifest_path(path))?;
    let field = |key: &str| {
        manifest
            .lines()
            .find_map(|l| l.strip_prefix(key).and_then(|rest| rest.strip_prefix(' ')))
            .ok_or_else(|| bad(format!("manifest lacks {key}")))
    };
    let config: ModelConfig = serde_json::from_str(field("config")?)?;
    if field("config_hash")? != config_hash(&config)? {
        return Err(bad("config hash does not match the manifest config"));
    }
    let listed: Vec<&str> = manifest
        .lines()
        .filter_map(|l| l.strip_prefix("array "))
        .collect();
    let stored: Vec<String> = arrays
        .iter()
        .map(|a| format!("{} {}", a.name, shape_str(&a.shape)))
        .collect();
    if listed != stored {
        return Err(bad("manifest arrays do not match the binary"));
    }
    Checkpoint { config, arrays }.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{generate_nbody, NBodyConfig};

    fn model(composition: Composition) -> NBodyModel {
        let d = generate_nbody(&NBodyConfig {
            n_bodies: 2,
            steps: 5,
            n_trajectories: 2,
            ..Default::default()
        })
        .unwrap()
        .trajectories;
        NBodyModel::new(
            ModelConfig {
                composition,
                n_bodies: 2,
                seed: 9,
                ..Default::default()
            },
            &d,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for (c, lift_rows) in [(Composition::Rra, 8), (Composition::GpaRra, 64)] {
            let m = model(c);
            let path = dir.path().join("model.bin");
            save_checkpoint(&m, &path).unwrap();
            assert_eq!(load_checkpoint(&path).unwrap(), m);
            let manifest = fs::read_to_string(manifest_path(&path)).unwrap();
            assert!(manifest.contains("seed 9"));
            assert!(manifest.contains(&format!("array rra.lift {lift_rows}x32")));
        }
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&model(Composition::Rra), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
        fs::write(&path, b"nope").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn tampered_manifest_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&model(Composition::Rra), &path).unwrap();
        let mp = manifest_path(&path);
        let text = fs::read_to_string(&mp)
            .unwrap()
            .replace("\"gamma\":0.5", "\"gamma\":0.25");
        fs::write(&mp, text).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
