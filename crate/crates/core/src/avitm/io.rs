//! Flat binary model files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "AVITMBLK" | version u32 | K u32 | V u32 | decoder u8
//! header_len u32 | header (UTF-8 JSON)
//! block_count u32
//! per block: name_len u32 | name | len u64 | len × f64
//! ```
//!
//! The JSON header carries hyperparameters; the blocks carry every numeric
//! array bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::model::TopicModel;
use super::{DecoderKind, ModelConfig, ModelError};

pub const MODEL_MAGIC: &[u8; 8] = b"AVITMBLK";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockFile {
    pub topics: u32,
    pub vocab_size: u32,
    pub decoder: DecoderKind,
    pub header: String,
    pub blocks: Vec<(String, Vec<f64>)>,
}

impl BlockFile {
    pub fn block_map(&self) -> BTreeMap<&str, &[f64]> {
        self.blocks
            .iter()
            .map(|(n, b)| (n.as_str(), b.as_slice()))
            .collect()
    }
}

pub fn write_blocks<W: Write>(mut w: W, file: &BlockFile) -> std::io::Result<()> {
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    w.write_all(&file.topics.to_le_bytes())?;
    w.write_all(&file.vocab_size.to_le_bytes())?;
    w.write_all(&[file.decoder.code()])?;
    w.write_all(&(file.header.len() as u32).to_le_bytes())?;
    w.write_all(file.header.as_bytes())?;
    w.write_all(&(file.blocks.len() as u32).to_le_bytes())?;
    for (name, values) in &file.blocks {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(values.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(values.len() * 8);
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], ModelError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| ModelError::Format(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ModelError> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_string<R: Read>(r: &mut R, len: usize, what: &str) -> Result<String, ModelError> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|e| ModelError::Format(format!("truncated {what}: {e}")))?;
    String::from_utf8(buf).map_err(|_| ModelError::Format(format!("{what} is not UTF-8")))
}

pub fn read_blocks<R: Read>(mut r: R) -> Result<BlockFile, ModelError> {
    let magic: [u8; 8] = read_array(&mut r)?;
    if &magic != MODEL_MAGIC {
        return Err(ModelError::Format("bad magic; not a model file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != MODEL_VERSION {
        return Err(ModelError::Format(format!(
            "unsupported version {version} (expected {MODEL_VERSION})"
        )));
    }
    let topics = read_u32(&mut r)?;
    let vocab_size = read_u32(&mut r)?;
    let [code] = read_array::<1, _>(&mut r)?;
    let decoder = DecoderKind::from_code(code)
        .ok_or_else(|| ModelError::Format(format!("unknown decoder code {code}")))?;
    let header_len = read_u32(&mut r)? as usize;
    let header = read_string(&mut r, header_len, "header")?;
    let count = read_u32(&mut r)?;
    let mut blocks = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let name = read_string(&mut r, name_len, "block name")?;
        let len = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let mut raw = vec![0u8; len.checked_mul(8).ok_or_else(|| ModelError::Format("block too large".into()))?];
        r.read_exact(&mut raw)
            .map_err(|e| ModelError::Format(format!("truncated block `{name}`: {e}")))?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        blocks.push((name, values));
    }
    Ok(BlockFile {
        topics,
        vocab_size,
        decoder,
        header,
        blocks,
    })
}

impl TopicModel {
    /// Parameters followed by batch-norm running statistics.
    pub fn state_blocks(&self) -> Vec<(String, Vec<f64>)> {
        self.params()
            .into_iter()
            .chain(self.running_stats())
            .map(|(n, b)| (n, b.to_vec()))
            .collect()
    }

    pub fn to_block_file(&self) -> BlockFile {
        BlockFile {
            topics: self.topics() as u32,
            vocab_size: self.vocab_size() as u32,
            decoder: self.decoder_kind(),
            header: serde_json::to_string(self.config()).expect("config serializes"),
            blocks: self.state_blocks(),
        }
    }

    /// Rebuilds a model from a block file. Blocks not belonging to the model
    /// (optimizer state in a checkpoint, say) are ignored.
    pub fn from_block_file(file: &BlockFile) -> Result<Self, ModelError> {
        let config: ModelConfig = serde_json::from_str(&file.header)
            .map_err(|e| ModelError::Format(format!("bad header: {e}")))?;
        if config.topics != file.topics as usize
            || config.vocab_size != file.vocab_size as usize
            || config.decoder != file.decoder
        {
            return Err(ModelError::Format(
                "header fields disagree with the hyperparameters".into(),
            ));
        }
        let mut model = TopicModel::new(config, 0)?;
        let blocks = file.block_map();
        let load = |name: String, dst: &mut [f64]| -> Result<(), ModelError> {
            let src = blocks
                .get(name.as_str())
                .ok_or_else(|| ModelError::Format(format!("missing block `{name}`")))?;
            if src.len() != dst.len() {
                return Err(ModelError::Format(format!(
                    "block `{name}` has {} values, expected {}",
                    src.len(),
                    dst.len()
                )));
            }
            dst.copy_from_slice(src);
            Ok(())
        };
        for (name, dst) in model.params_mut() {
            load(name, dst)?;
        }
        for (name, dst) in model.running_stats_mut() {
            load(name, dst)?;
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_blocks(&mut out, &self.to_block_file()).expect("writing to memory");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        Self::from_block_file(&read_blocks(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Human-readable summary of the file contents.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format     AVITMBLK v{MODEL_VERSION}");
        let _ = writeln!(s, "topics     {}", self.topics());
        let _ = writeln!(s, "vocab      {}", self.vocab_size());
        let _ = writeln!(s, "decoder    {}", self.decoder_kind());
        let _ = writeln!(
            s,
            "config     {}",
            serde_json::to_string(self.config()).expect("config serializes")
        );
        let _ = writeln!(s, "blocks");
        for (name, values) in self.state_blocks() {
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            let _ = writeln!(s, "  {name:<28} {:>9}  l2={norm:.6e}", values.len());
        }
        s
    }
}
