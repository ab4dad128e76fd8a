//! Newline-delimited JSON chain files: one block per line, fields in
//! canonical order, digests as lowercase hex.

use thiserror::Error;

use super::types::Block;

#[derive(Debug, Error)]
pub enum ChainFileError {
    #[error("chain file is empty")]
    Empty,
    #[error("line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub fn write_ndjson(blocks: &[Block]) -> String {
    let mut out = String::new();
    for block in blocks {
        out.push_str(&serde_json::to_string(block).expect("blocks always serialize"));
        out.push('\n');
    }
    out
}

pub fn read_ndjson(text: &str) -> Result<Vec<Block>, ChainFileError> {
    let mut blocks = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let block = serde_json::from_str(line).map_err(|source| ChainFileError::Malformed { line: i + 1, source })?;
        blocks.push(block);
    }
    if blocks.is_empty() {
        return Err(ChainFileError::Empty);
    }
    Ok(blocks)
}
