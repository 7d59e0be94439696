//! WAV input and output.
use std::io::Cursor;
use std::path::Path;

use tunescribe_core::features::AudioClip;

use crate::error::{Error, Result};
use crate::fsio;

/// Reads any PCM or float WAV and averages the channels to mono.
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let bytes = fsio::read(path)?;
    decode_wav(&bytes).map_err(|e| Error::input(path, e))
}

fn decode_wav(bytes: &[u8]) -> std::result::Result<AudioClip, String> {
    let mut reader = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| e.to_string())?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?,
        hound::SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?
        }
    };
    let ch = spec.channels.max(1) as usize;
    let mono = interleaved.chunks(ch).map(|f| f.iter().sum::<f64>() / ch as f64).collect();
    AudioClip::new(mono, spec.sample_rate).map_err(|e| e.to_string())
}

/// 32-bit float mono WAV bytes.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut buf, spec).expect("in-memory writer");
        for &s in clip.samples() {
            w.write_sample(s as f32).expect("in-memory write");
        }
        w.finalize().expect("in-memory finalize");
    }
    buf.into_inner()
}

pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    fsio::write_atomic(path, &encode_wav(clip))
}
