use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{init_model, GatConfig, GatError, GatModel};

pub const CHECKPOINT_MAGIC: &[u8] = b"PSGAT1\n";

/// A saved model plus the epoch it came from and a few metric values.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: GatModel,
    pub epoch: usize,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: GatConfig,
    seed: u64,
    epoch: usize,
    metrics: BTreeMap<String, f64>,
    n_params: usize,
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, mut w: W) -> Result<(), GatError> {
    let header = Header {
        config: ckpt.model.config.clone(),
        seed: ckpt.model.config.seed,
        epoch: ckpt.epoch,
        metrics: ckpt.metrics.clone(),
        n_params: ckpt.model.params.len(),
    };
    w.write_all(CHECKPOINT_MAGIC)?;
    serde_json::to_writer(&mut w, &header).map_err(|e| GatError::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    let mut result = Ok(());
    ckpt.model.params.for_each_tensor(|t| {
        for x in t {
            if result.is_ok() {
                result = w.write_all(&x.to_le_bytes());
            }
        }
    });
    result?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(mut r: R) -> Result<Checkpoint, GatError> {
    let mut magic = vec![0u8; CHECKPOINT_MAGIC.len()];
    r.read_exact(&mut magic)
        .map_err(|_| GatError::Format("file too short for the magic line".into()))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(GatError::Version(
            String::from_utf8_lossy(&magic).trim_end().to_string(),
        ));
    }
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    let header: Header =
        serde_json::from_slice(&line).map_err(|e| GatError::Format(format!("header: {e}")))?;
    let mut model = init_model(&header.config)?;
    if model.params.len() != header.n_params {
        return Err(GatError::Format(format!(
            "header announces {} parameters, configuration implies {}",
            header.n_params,
            model.params.len()
        )));
    }
    let mut flat = vec![0.0; header.n_params];
    let mut buf = [0u8; 8];
    for x in flat.iter_mut() {
        r.read_exact(&mut buf)
            .map_err(|_| GatError::Format("truncated parameter data".into()))?;
        *x = f64::from_le_bytes(buf);
    }
    if r.read(&mut buf)? != 0 {
        return Err(GatError::Format(
            "trailing bytes after parameter data".into(),
        ));
    }
    model.params.load_flat(&flat)?;
    Ok(Checkpoint {
        model,
        epoch: header.epoch,
        metrics: header.metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckpt() -> Checkpoint {
        let model = init_model(&GatConfig {
            layers: 2,
            d_in: 5,
            d_hidden: 3,
            mlp_hidden: 2,
            seed: 42,
        })
        .unwrap();
        Checkpoint {
            model,
            epoch: 7,
            metrics: [("val_loss".to_string(), 0.25)].into_iter().collect(),
        }
    }

    #[test]
    fn round_trip() {
        let mut bytes = Vec::new();
        write_checkpoint(&ckpt(), &mut bytes).unwrap();
        assert_eq!(read_checkpoint(&bytes[..]).unwrap(), ckpt());
        let mut again = Vec::new();
        write_checkpoint(&read_checkpoint(&bytes[..]).unwrap(), &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn version_and_truncation() {
        let mut bytes = Vec::new();
        write_checkpoint(&ckpt(), &mut bytes).unwrap();
        let mut other = bytes.clone();
        other[5] = b'2';
        assert!(matches!(
            read_checkpoint(&other[..]),
            Err(GatError::Version(_))
        ));
        bytes.pop();
        assert!(matches!(
            read_checkpoint(&bytes[..]),
            Err(GatError::Format(_))
        ));
    }
}
