//! Binary model files. The byte layout is documented in `docs/checkpoint-format.md`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{Adam, AdamConfig, ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"HGDT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a model file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
}

/// Everything needed to restore a model: its configuration text, parameters
/// and buffers, optional optimizer state, and free-form JSON metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub params: ParamStore,
    pub optimizer: Option<Adam>,
    pub metadata: String,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
        Checkpoint::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        write_bytes(w, self.config.as_bytes())?;

        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for (_, p) in self.params.iter() {
            write_bytes(w, p.name.as_bytes())?;
            w.write_all(&[p.trainable as u8])?;
            w.write_all(&(p.value.shape().len() as u32).to_le_bytes())?;
            for &d in p.value.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            write_f64s(w, p.value.data())?;
        }

        match &self.optimizer {
            None => w.write_all(&[0])?,
            Some(adam) => {
                w.write_all(&[1])?;
                w.write_all(&adam.step.to_le_bytes())?;
                let c = adam.config;
                write_f64s(w, &[c.lr, c.beta1, c.beta2, c.eps])?;
                let entries: Vec<usize> = (0..self.params.len())
                    .filter(|&i| adam.moments(i).is_some())
                    .collect();
                w.write_all(&(entries.len() as u32).to_le_bytes())?;
                for i in entries {
                    let (m, v) = adam.moments(i).expect("filtered");
                    w.write_all(&(i as u32).to_le_bytes())?;
                    w.write_all(&(m.len() as u64).to_le_bytes())?;
                    write_f64s(w, m)?;
                    write_f64s(w, v)?;
                }
            }
        }

        write_bytes(w, self.metadata.as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Checkpoint, CheckpointError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let config = read_string(r)?;

        let mut params = ParamStore::new();
        for _ in 0..read_u32(r)? {
            let name = read_string(r)?;
            let trainable = match read_u8(r)? {
                0 => false,
                1 => true,
                t => return Err(CheckpointError::Corrupt(format!("trainable flag {t}"))),
            };
            let rank = read_u32(r)? as usize;
            if rank > 8 {
                return Err(CheckpointError::Corrupt(format!(
                    "rank {rank} for `{name}`"
                )));
            }
            let shape = (0..rank)
                .map(|_| read_u64(r).map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| CheckpointError::Corrupt(format!("shape of `{name}`")))?;
            let data = read_f64s(r, n)?;
            let value =
                Tensor::new(shape, data).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
            params
                .add(name, value, trainable)
                .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        }

        let optimizer = match read_u8(r)? {
            0 => None,
            1 => {
                let step = read_u64(r)?;
                let c = read_f64s(r, 4)?;
                let mut adam = Adam::new(AdamConfig {
                    lr: c[0],
                    beta1: c[1],
                    beta2: c[2],
                    eps: c[3],
                });
                adam.step = step;
                adam.m = vec![Vec::new(); params.len()];
                adam.v = vec![Vec::new(); params.len()];
                for _ in 0..read_u32(r)? {
                    let i = read_u32(r)? as usize;
                    let n = read_u64(r)? as usize;
                    if i >= params.len() || params.get(super::ParamId(i)).value.numel() != n {
                        return Err(CheckpointError::Corrupt(format!("optimizer entry {i}")));
                    }
                    adam.m[i] = read_f64s(r, n)?;
                    adam.v[i] = read_f64s(r, n)?;
                }
                Some(adam)
            }
            t => return Err(CheckpointError::Corrupt(format!("optimizer flag {t}"))),
        };

        let metadata = read_string(r)?;
        Ok(Checkpoint {
            config,
            params,
            optimizer,
            metadata,
        })
    }
}

fn write_bytes<W: Write>(w: &mut W, b: &[u8]) -> io::Result<()> {
    w.write_all(&(b.len() as u32).to_le_bytes())?;
    w.write_all(b)
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u8<R: Read>(r: &mut R) -> io::Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R) -> Result<String, CheckpointError> {
    let n = read_u32(r)? as usize;
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(CheckpointError::Corrupt("truncated string".into()));
    }
    String::from_utf8(buf).map_err(|_| CheckpointError::Corrupt("invalid UTF-8".into()))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, CheckpointError> {
    let mut buf = Vec::new();
    r.take(n as u64 * 8).read_to_end(&mut buf)?;
    if buf.len() != n * 8 {
        return Err(CheckpointError::Corrupt("truncated tensor data".into()));
    }
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ParamStore::new();
        let w = params
            .add(
                "w",
                Tensor::matrix(2, 2, vec![1.0, -0.5, 1e-300, f64::MAX]).unwrap(),
                true,
            )
            .unwrap();
        params
            .add("bn.mean", Tensor::row(vec![0.25]), false)
            .unwrap();
        params.get_mut(w).grad = Tensor::matrix(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut params);
        params.zero_grad();
        Checkpoint {
            config: "d = 8\n".into(),
            params,
            optimizer: Some(adam),
            metadata: "{\"auc\":1.0}".into(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"HGDT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let back = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn rejects_bad_input() {
        let ck = sample();
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Checkpoint::read_from(&mut bad.as_slice()),
            Err(CheckpointError::BadMagic)
        ));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            Checkpoint::read_from(&mut bad.as_slice()),
            Err(CheckpointError::UnsupportedVersion(9))
        ));
        let truncated = &bytes[..bytes.len() - 5];
        assert!(Checkpoint::read_from(&mut &truncated[..]).is_err());
    }
}
