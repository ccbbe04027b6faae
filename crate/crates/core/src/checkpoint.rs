//! Trained-model container.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic          8 bytes  "HDHGNCKP"
//! version        u32      1
//! config         u32 length + model config JSON
//! vocab          u32 length + vocabulary JSON
//! vocab digest   32 bytes SHA-256 of the vocabulary JSON
//! config digest  32 bytes SHA-256 of the config JSON
//! tensors        u32 count, then per tensor:
//!                  u32 name length + UTF-8 name
//!                  u32 rank, rank × u64 dims
//!                  f32 values
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::Vocab;
use crate::model::{Model, ModelConfig, Params};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"HDHGNCKP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub vocab: Vocab,
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        reason: reason.into(),
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_blob(out: &mut Vec<u8>, bytes: &[u8]) {
    put_u32(out, bytes.len() as u32);
    out.extend_from_slice(bytes);
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| bad("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn blob(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn text(&mut self) -> Result<&'a str> {
        std::str::from_utf8(self.blob()?).map_err(|_| bad("text field is not UTF-8"))
    }
}

impl Checkpoint {
    pub fn new(model: Model<f32>, vocab: Vocab) -> Self {
        Checkpoint { model, vocab }
    }

    pub fn config(&self) -> &ModelConfig {
        self.model.config()
    }

    pub fn vocab_digest(&self) -> String {
        self.vocab.digest()
    }

    /// `VocabMismatch` unless the stored vocabulary has digest `expected`.
    pub fn require_vocab(&self, expected: &str) -> Result<()> {
        let found = self.vocab_digest();
        if found != expected {
            return Err(Error::VocabMismatch {
                expected: expected.to_string(),
                found,
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let config = serde_json::to_string(self.model.config()).expect("config serializes");
        let vocab = self.vocab.to_json();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_blob(&mut out, config.as_bytes());
        put_blob(&mut out, vocab.as_bytes());
        out.extend_from_slice(&Sha256::digest(vocab.as_bytes()));
        out.extend_from_slice(&Sha256::digest(config.as_bytes()));
        let params = self.model.params();
        put_u32(&mut out, params.len() as u32);
        for (name, t) in params.names().iter().zip(params.tensors()) {
            put_blob(&mut out, name.as_bytes());
            put_u32(&mut out, t.shape().len() as u32);
            for d in t.shape() {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { buf: bytes, pos: 0 };
        if c.take(8)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = c.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let config_text = c.text()?;
        let vocab_text = c.text()?;
        let vocab_digest = c.take(32)?;
        let config_digest = c.take(32)?;
        if Sha256::digest(vocab_text.as_bytes()).as_slice() != vocab_digest {
            return Err(Error::VocabMismatch {
                expected: hex::encode(vocab_digest),
                found: hex::encode(Sha256::digest(vocab_text.as_bytes())),
            });
        }
        if Sha256::digest(config_text.as_bytes()).as_slice() != config_digest {
            return Err(bad("config digest does not match stored config"));
        }
        let config: ModelConfig =
            serde_json::from_str(config_text).map_err(|e| bad(format!("config: {e}")))?;
        let vocab = Vocab::from_json(vocab_text)?;
        let count = c.u32()? as usize;
        let mut stored = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name = c.text()?.to_string();
            let rank = c.u32()? as usize;
            let shape = (0..rank)
                .map(|_| c.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |a, d| a.checked_mul(*d))
                .ok_or_else(|| bad("tensor too large"))?;
            let raw = c.take(len.checked_mul(4).ok_or_else(|| bad("tensor too large"))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            stored.push((name, Tensor::from_vec(&shape, data)?));
        }
        if c.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let specs = crate::model::layout(
            &config,
            &crate::model::TableSizes::new(&vocab, config.variant),
        );
        let params = Params::from_named(&specs, stored)?;
        let model = Model::from_params(&config, &vocab, params)?;
        Ok(Checkpoint { model, vocab })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synthetic::random_ast;
    use crate::graph::{encode_corpus, Variant};
    use crate::rng;

    fn checkpoint(variant: Variant) -> Checkpoint {
        let mut r = rng::stream(0, "ckpt", 0);
        let asts: Vec<_> = (0..4)
            .map(|i| random_ast(&mut r, 12, &format!("{i}"), Some(i % 2)))
            .collect();
        let (vocab, _) = encode_corpus(&asts, 1, vec!["a".into(), "b".into()]).unwrap();
        let cfg = ModelConfig {
            layers: 1,
            embed_dim: 8,
            hidden_dim: 8,
            heads: 2,
            variant,
            ..Default::default()
        };
        Checkpoint::new(Model::new(&cfg, &vocab, 4).unwrap(), vocab)
    }

    #[test]
    fn round_trip_is_exact() {
        for v in Variant::ALL {
            let ck = checkpoint(v);
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn header_and_vocab_checks() {
        let ck = checkpoint(Variant::Full);
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..8], b"HDHGNCKP");
        ck.require_vocab(&ck.vocab_digest()).unwrap();
        assert!(matches!(
            ck.require_vocab("00"),
            Err(Error::VocabMismatch { .. })
        ));
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        let mut tampered = bytes.clone();
        let at = bytes
            .windows(13)
            .position(|w| w == b"identifier_va")
            .unwrap();
        tampered[at] = b'J';
        assert!(matches!(
            Checkpoint::from_bytes(&tampered),
            Err(Error::VocabMismatch { .. })
        ));
    }
}
