//! Checkpoint files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "BNNC" | u32 version | u32 L | u32 c | u32 dims[L+1]
//! hyperparameters: u32 batch_size | u32 epochs | u32 r_num | u32 r_den
//!                  f64 p_r0 | u32 gamma (0 = auto) | u64 seed
//!                  u32 clamp_bits (0 = off) | u32 share_classifier
//! per layer:       i8 H[K_l][K_{l-1}] (perceptron-major)
//!                  u64 P[c][ceil(K_l/64)] (packed rows, zero padding)
//! train state:     f64 p_r | u32 epoch | f64 error_fraction
//! u32 CRC-32 of every preceding byte
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::bitcore::{words_for, BitMatrix, BitVector};
use crate::error::{Error, Result};
use crate::model::{Gamma, Hyperparams, LayerState, Network, Robustness};
use crate::train::TrainState;

pub const MAGIC: &[u8; 4] = b"BNNC";
pub const VERSION: u32 = 1;

/// Serialises the full training state. Pure: equal inputs give equal bytes.
pub fn encode(net: &Network, state: &TrainState, hyper: &Hyperparams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, net.layers().len() as u32);
    put_u32(&mut out, net.classes() as u32);
    for d in net.dims() {
        put_u32(&mut out, d as u32);
    }

    put_u32(&mut out, hyper.batch_size as u32);
    put_u32(&mut out, hyper.epochs);
    put_u32(&mut out, hyper.robustness.numerator());
    put_u32(&mut out, hyper.robustness.denominator());
    out.extend_from_slice(&hyper.p_r0.to_le_bytes());
    put_u32(
        &mut out,
        match hyper.gamma {
            Gamma::Auto => 0,
            Gamma::Fixed(g) => g as u32,
        },
    );
    out.extend_from_slice(&hyper.seed.to_le_bytes());
    put_u32(&mut out, hyper.clamp_bits.unwrap_or(0));
    put_u32(&mut out, hyper.share_classifier as u32);

    for layer in net.layers() {
        out.extend(layer.hidden().iter().map(|&h| h as u8));
        for &w in layer.classifier().as_words() {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }

    out.extend_from_slice(&state.p_r.to_le_bytes());
    put_u32(&mut out, state.epoch);
    out.extend_from_slice(&state.error_fraction.to_le_bytes());

    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Writes a checkpoint and syncs it to disk.
pub fn save(net: &Network, state: &TrainState, hyper: &Hyperparams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(net, state, hyper);
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    file.sync_all().map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(Network, TrainState, Hyperparams)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(self.path, format!("truncated at offset {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses and validates checkpoint bytes; `path` is only used in messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<(Network, TrainState, Hyperparams)> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Version { path: path.into(), found: version });
    }
    if bytes.len() < 12 {
        return Err(Error::format(path, "truncated"));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(payload) != stored {
        return Err(Error::Validation(format!("{}: checksum mismatch", path.display())));
    }

    let mut r = Reader { path, bytes: payload, pos: 8 };
    let n_layers = r.u32()? as usize;
    let classes = r.u32()? as usize;
    if n_layers == 0 || classes < 2 {
        return Err(Error::Validation(format!("{n_layers} layers, {classes} classes")));
    }
    // each dim costs 4 bytes; bound before allocating
    if n_layers + 1 > payload.len() / 4 {
        return Err(Error::format(path, "layer count exceeds file size"));
    }
    let dims: Vec<usize> = (0..=n_layers).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
    if dims.contains(&0) {
        return Err(Error::Validation(format!("zero dimension in {dims:?}")));
    }

    let batch_size = r.u32()? as usize;
    let epochs = r.u32()?;
    let (num, den) = (r.u32()?, r.u32()?);
    let robustness = Robustness::new(num, den).map_err(|e| Error::Validation(e.to_string()))?;
    let p_r0 = r.f64()?;
    let gamma = match r.u32()? {
        0 => Gamma::Auto,
        g => Gamma::Fixed(g as usize),
    };
    let seed = r.u64()?;
    let clamp_bits = match r.u32()? {
        0 => None,
        b => Some(b),
    };
    let share_classifier = match r.u32()? {
        0 => false,
        1 => true,
        v => return Err(Error::Validation(format!("share flag {v}"))),
    };
    let hyper = Hyperparams { batch_size, epochs, robustness, p_r0, gamma, seed, clamp_bits, share_classifier };
    hyper.validate().map_err(|e| Error::Validation(e.to_string()))?;

    let mut layers = Vec::with_capacity(n_layers);
    let mut shared: Option<Arc<BitMatrix>> = None;
    for (l, w) in dims.windows(2).enumerate() {
        let (k_prev, k) = (w[0], w[1]);
        let hidden: Vec<i8> = r.take(k_prev * k)?.iter().map(|&b| b as i8).collect();
        let stride = words_for::<u64>(k);
        let mut rows = Vec::with_capacity(classes);
        for _ in 0..classes {
            let words = (0..stride).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
            rows.push(
                BitVector::from_words(k, words)
                    .map_err(|e| Error::Validation(format!("layer {} classifier: {e}", l + 1)))?,
            );
        }
        let p = BitMatrix::from_rows(k, &rows)?;
        let classifier = match &shared {
            Some(s) if **s == p => Arc::clone(s),
            Some(_) => {
                return Err(Error::Validation(format!("layer {} classifier differs from the shared one", l + 1)))
            }
            None => {
                let p = Arc::new(p);
                if share_classifier {
                    shared = Some(Arc::clone(&p));
                }
                p
            }
        };
        let layer = LayerState::from_parts(k_prev, k, hidden, classifier).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("layer {}: {m}", l + 1)),
            other => other,
        })?;
        layers.push(layer);
    }

    let p_r = r.f64()?;
    let epoch = r.u32()?;
    let error_fraction = r.f64()?;
    if !(0.0..=1.0).contains(&p_r) || !(0.0..=1.0).contains(&error_fraction) {
        return Err(Error::Validation(format!("train state p_r={p_r} E={error_fraction}")));
    }
    if r.pos != payload.len() {
        return Err(Error::format(path, format!("{} trailing bytes", payload.len() - r.pos)));
    }

    let net = Network::from_layers(dims[0], classes, layers)?;
    Ok((net, TrainState { p_r, epoch, error_fraction }, hyper))
}
