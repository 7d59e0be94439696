//! Binary container for model inputs and target tensors. Little-endian.
//!
//! ```text
//! magic     4 bytes "TSTF"
//! version   u16 = 1
//! kind      u8    0 target, 1 spectral, 2 chroma, 3 symbolic
//! body      per kind, see the encoders below
//! digest    8 bytes, head of SHA-256 over everything before it
//! ```
use std::path::Path;

use sha2::{Digest, Sha256};
use tunescribe_core::features::{BinAxis, ChannelKind, ChromaFeature, SpectralFeature, SymbolicFeature, CHROMA_BINS};
use tunescribe_core::models::ModelInput;
use tunescribe_core::{ActivationTensor, PitchAxis, TimeGrid};

use crate::error::{Error, Result};
use crate::fsio;

const MAGIC: &[u8; 4] = b"TSTF";
const VERSION: u16 = 1;
const ROLL_PITCHES: usize = 128;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn floats(&mut self, v: &[f64]) {
        v.iter().for_each(|&x| self.f64(x));
    }
    fn grid(&mut self, g: &TimeGrid) {
        self.u32(g.n_frames);
        self.f64(g.hop_s);
    }
    fn finish(mut self) -> Vec<u8> {
        let d = Sha256::digest(&self.0);
        self.0.extend_from_slice(&d[..8]);
        self.0
    }
}

struct Reader<'a> {
    b: &'a [u8],
    at: usize,
}

type Parse<T> = std::result::Result<T, String>;

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Parse<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.b.len()).ok_or("truncated")?;
        let s = &self.b[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> Parse<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Parse<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn f64(&mut self) -> Parse<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn floats(&mut self, n: usize) -> Parse<Vec<f64>> {
        if n.checked_mul(8).is_none_or(|len| len > self.b.len() - self.at) {
            return Err("truncated".into());
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn grid(&mut self) -> Parse<TimeGrid> {
        let n = self.u32()?;
        let hop = self.f64()?;
        if !(hop > 0.0 && hop.is_finite()) {
            return Err(format!("bad hop {hop}"));
        }
        Ok(TimeGrid::new(hop, n))
    }
}

fn header(w: &mut Writer, kind: u8) {
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    w.u8(kind);
}

fn open(bytes: &[u8]) -> Parse<(u8, Reader<'_>)> {
    if bytes.len() < 15 || &bytes[..4] != MAGIC {
        return Err("not a tensor file".into());
    }
    let (body, digest) = bytes.split_at(bytes.len() - 8);
    if Sha256::digest(body)[..8] != *digest {
        return Err("digest mismatch".into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    Ok((bytes[6], Reader { b: body, at: 7 }))
}

fn end(r: &Reader) -> Parse<()> {
    if r.at != r.b.len() {
        return Err("trailing bytes".into());
    }
    Ok(())
}

pub fn encode_tensor(t: &ActivationTensor) -> Vec<u8> {
    let mut w = Writer::default();
    header(&mut w, 0);
    let [f, b, c] = t.shape();
    w.u32(f);
    w.u32(b);
    w.u32(c);
    w.floats(t.data());
    w.finish()
}

pub fn decode_tensor(bytes: &[u8]) -> Parse<ActivationTensor> {
    let (kind, mut r) = open(bytes)?;
    if kind != 0 {
        return Err(format!("expected a target tensor, found kind {kind}"));
    }
    let (f, b, c) = (r.u32()?, r.u32()?, r.u32()?);
    let n = f.checked_mul(b).and_then(|x| x.checked_mul(c)).ok_or("shape overflow")?;
    let data = r.floats(n)?;
    end(&r)?;
    ActivationTensor::from_vec(f, b, c, data).map_err(|e| e.to_string())
}

pub fn encode_input(x: &ModelInput) -> Vec<u8> {
    let mut w = Writer::default();
    match x {
        ModelInput::Spectral(s) => {
            header(&mut w, 1);
            w.grid(&s.grid);
            w.u32(s.bins);
            w.u32(s.sample_rate as usize);
            match s.axis {
                BinAxis::Linear { n_fft } => {
                    w.u8(0);
                    w.u32(n_fft);
                }
                BinAxis::Pitch(a) => {
                    w.u8(1);
                    w.u8(a.lowest_midi);
                    w.u32(a.n_semitones);
                    w.u32(a.bins_per_semitone);
                }
            }
            w.u8(s.channels.len() as u8);
            for c in &s.channels {
                let name = c.name().as_bytes();
                w.u8(name.len() as u8);
                w.0.extend_from_slice(name);
            }
            w.floats(&s.data);
        }
        ModelInput::Chroma(c) => {
            header(&mut w, 2);
            w.grid(&c.grid);
            w.u32(c.unconverged_frames);
            w.floats(&c.data);
        }
        ModelInput::Symbolic(s) => {
            header(&mut w, 3);
            w.grid(&s.grid);
            w.floats(&s.pianoroll);
            w.floats(&s.spectral_flux);
            w.floats(&s.ioi);
        }
    }
    w.finish()
}

pub fn decode_input(bytes: &[u8]) -> Parse<ModelInput> {
    let (kind, mut r) = open(bytes)?;
    let x = match kind {
        1 => {
            let grid = r.grid()?;
            let bins = r.u32()?;
            let sample_rate = r.u32()? as u32;
            let axis = match r.u8()? {
                0 => BinAxis::Linear { n_fft: r.u32()? },
                1 => BinAxis::Pitch(PitchAxis {
                    lowest_midi: r.u8()?,
                    n_semitones: r.u32()?,
                    bins_per_semitone: r.u32()?,
                }),
                t => return Err(format!("unknown bin axis {t}")),
            };
            let nc = r.u8()? as usize;
            let mut channels = Vec::with_capacity(nc);
            for _ in 0..nc {
                let len = r.u8()? as usize;
                let name = std::str::from_utf8(r.take(len)?).map_err(|e| e.to_string())?;
                channels.push(ChannelKind::from_name(name).ok_or_else(|| format!("unknown channel {name:?}"))?);
            }
            let n = grid.n_frames.checked_mul(bins).and_then(|x| x.checked_mul(nc)).ok_or("shape overflow")?;
            let data = r.floats(n)?;
            let s = SpectralFeature {
                data,
                bins,
                channels,
                grid,
                axis,
                sample_rate,
            };
            if !s.is_valid() {
                return Err("feature values must be finite and non-negative".into());
            }
            ModelInput::Spectral(s)
        }
        2 => {
            let grid = r.grid()?;
            let unconverged_frames = r.u32()?;
            let data = r.floats(grid.n_frames.checked_mul(CHROMA_BINS).ok_or("shape overflow")?)?;
            ModelInput::Chroma(ChromaFeature {
                data,
                grid,
                unconverged_frames,
            })
        }
        3 => {
            let grid = r.grid()?;
            let n = grid.n_frames;
            let pianoroll = r.floats(n.checked_mul(ROLL_PITCHES).ok_or("shape overflow")?)?;
            let spectral_flux = r.floats(n)?;
            let ioi = r.floats(n)?;
            ModelInput::Symbolic(SymbolicFeature {
                pianoroll,
                spectral_flux,
                ioi,
                grid,
            })
        }
        k => return Err(format!("expected a model input, found kind {k}")),
    };
    end(&r)?;
    Ok(x)
}

pub fn read_tensor(path: &Path) -> Result<ActivationTensor> {
    decode_tensor(&fsio::read(path)?).map_err(|e| Error::data(path, e))
}

pub fn read_input(path: &Path) -> Result<ModelInput> {
    decode_input(&fsio::read(path)?).map_err(|e| Error::data(path, e))
}
