use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingTable, SkipGramConfig, Vocab};
use crate::linalg::Matrix;

pub const EMBEDDING_MAGIC: &[u8] = b"PSEMB1\n";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    d: usize,
    #[serde(rename = "V")]
    v: usize,
    config: SkipGramConfig,
    tokens: Vec<String>,
    freqs: Vec<u64>,
}

pub fn write_embeddings<W: Write>(table: &EmbeddingTable, mut w: W) -> Result<(), EmbeddingError> {
    let header = Header {
        d: table.dim(),
        v: table.vocab.len(),
        config: table.config.clone(),
        tokens: table.vocab.tokens().to_vec(),
        freqs: (0..table.vocab.len())
            .map(|i| table.vocab.freq(i))
            .collect(),
    };
    w.write_all(EMBEDDING_MAGIC)?;
    serde_json::to_writer(&mut w, &header).map_err(|e| EmbeddingError::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    for x in table.vectors.as_slice().iter().chain(&table.unk_vector) {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings<R: BufRead>(mut r: R) -> Result<EmbeddingTable, EmbeddingError> {
    let mut magic = vec![0u8; EMBEDDING_MAGIC.len()];
    r.read_exact(&mut magic)
        .map_err(|_| EmbeddingError::Format("file too short for the magic line".into()))?;
    if magic != EMBEDDING_MAGIC {
        return Err(EmbeddingError::Version(
            String::from_utf8_lossy(&magic).trim_end().to_string(),
        ));
    }
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    let header: Header = serde_json::from_slice(&line)
        .map_err(|e| EmbeddingError::Format(format!("header: {e}")))?;
    if header.tokens.len() != header.v || header.freqs.len() != header.v {
        return Err(EmbeddingError::Format(format!(
            "header lists {} tokens and {} frequencies for V = {}",
            header.tokens.len(),
            header.freqs.len(),
            header.v
        )));
    }
    if header.d != header.config.dim {
        return Err(EmbeddingError::Format("d disagrees with config.dim".into()));
    }
    let mut values = vec![0.0; header.v * header.d + header.d];
    let mut buf = [0u8; 8];
    for x in values.iter_mut() {
        r.read_exact(&mut buf)
            .map_err(|_| EmbeddingError::Format("truncated vector data".into()))?;
        *x = f64::from_le_bytes(buf);
    }
    if r.read(&mut buf)? != 0 {
        return Err(EmbeddingError::Format(
            "trailing bytes after vector data".into(),
        ));
    }
    let unk_vector = values.split_off(header.v * header.d);
    Ok(EmbeddingTable {
        vocab: Vocab::from_tokens(header.tokens, header.freqs),
        vectors: Matrix::from_vec(header.v, header.d, values),
        unk_vector,
        config: header.config,
    })
}
