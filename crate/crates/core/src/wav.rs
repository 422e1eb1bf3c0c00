//! Minimal RIFF/WAV reader and writer.
//!
//! Supports little-endian PCM at 16/24/32 bits and IEEE float at 32/64 bits,
//! which covers everything the pipeline produces or consumes. Reading a
//! multichannel file keeps the first channel only.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::Signal;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Sample encoding used when writing a WAV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Pcm16,
    Pcm24,
    Pcm32,
    Float32,
    Float64,
}

impl BitDepth {
    pub fn bits(self) -> u16 {
        match self {
            BitDepth::Pcm16 => 16,
            BitDepth::Pcm24 => 24,
            BitDepth::Pcm32 => 32,
            BitDepth::Float32 => 32,
            BitDepth::Float64 => 64,
        }
    }

    fn format_tag(self) -> u16 {
        match self {
            BitDepth::Pcm16 | BitDepth::Pcm24 | BitDepth::Pcm32 => FORMAT_PCM,
            BitDepth::Float32 | BitDepth::Float64 => FORMAT_IEEE_FLOAT,
        }
    }
}

impl std::str::FromStr for BitDepth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" | "16" => Ok(BitDepth::Pcm16),
            "pcm24" | "24" => Ok(BitDepth::Pcm24),
            "pcm32" | "32" => Ok(BitDepth::Pcm32),
            "f32" | "float32" => Ok(BitDepth::Float32),
            "f64" | "float64" => Ok(BitDepth::Float64),
            other => Err(Error::InvalidArgument(format!(
                "unknown bit depth {other:?} (expected pcm16/pcm24/pcm32/float32/float64)"
            ))),
        }
    }
}

struct FmtChunk {
    format_tag: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

/// Load a WAV file and return its first channel mapped to `[-1, 1]`.
///
/// Integer formats are scaled by `1 / 2^(bits-1)`, so full-scale negative PCM
/// maps to exactly -1.0.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wav(&bytes)
}

fn parse_wav(bytes: &[u8]) -> Result<Signal> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Wav("not a RIFF/WAVE file".into()));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = (body_start + size).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::Wav("fmt chunk too short".into()));
                }
                let mut tag = u16::from_le_bytes(body[0..2].try_into().unwrap());
                if tag == FORMAT_EXTENSIBLE {
                    // Subformat GUID starts with the real format code.
                    if body.len() < 26 {
                        return Err(Error::Wav("extensible fmt chunk too short".into()));
                    }
                    tag = u16::from_le_bytes(body[24..26].try_into().unwrap());
                }
                fmt = Some(FmtChunk {
                    format_tag: tag,
                    channels: u16::from_le_bytes(body[2..4].try_into().unwrap()),
                    sample_rate: u32::from_le_bytes(body[4..8].try_into().unwrap()),
                    bits_per_sample: u16::from_le_bytes(body[14..16].try_into().unwrap()),
                });
            }
            b"data" => {
                data = Some(body);
            }
            _ => {}
        }
        // Chunk bodies are padded to even length.
        pos = body_start + size + (size & 1);
    }

    let fmt = fmt.ok_or_else(|| Error::Wav("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Wav("missing data chunk".into()))?;
    if fmt.channels == 0 {
        return Err(Error::Wav("zero channels".into()));
    }

    let bytes_per_sample = (fmt.bits_per_sample / 8) as usize;
    let frame_bytes = bytes_per_sample * fmt.channels as usize;
    if frame_bytes == 0 {
        return Err(Error::Wav("zero-size frames".into()));
    }
    let frames = data.len() / frame_bytes;

    let decode: fn(&[u8]) -> f64 = match (fmt.format_tag, fmt.bits_per_sample) {
        (FORMAT_PCM, 16) => |b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
        (FORMAT_PCM, 24) => |b| {
            let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
            v as f64 / 8_388_608.0
        },
        (FORMAT_PCM, 32) => {
            |b| i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / 2_147_483_648.0
        }
        (FORMAT_IEEE_FLOAT, 32) => {
            |b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64
        }
        (FORMAT_IEEE_FLOAT, 64) => {
            |b| f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]])
        }
        (tag, bits) => {
            return Err(Error::Wav(format!(
                "unsupported encoding: format tag {tag}, {bits} bits"
            )))
        }
    };

    // First channel only.
    let mut samples = Vec::with_capacity(frames);
    for f in 0..frames {
        let off = f * frame_bytes;
        samples.push(decode(&data[off..off + bytes_per_sample]));
    }

    if samples.is_empty() {
        return Err(Error::EmptySignal);
    }
    Signal::new(samples, fmt.sample_rate)
}

/// Write a mono WAV file at the requested bit depth.
///
/// Samples outside `[-1, 1]` are clipped with a warning before encoding.
pub fn save_wav(signal: &Signal, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let clipped = signal
        .samples
        .iter()
        .filter(|s| s.abs() > 1.0)
        .count();
    if clipped > 0 {
        log::warn!(
            "save_wav {}: {clipped} sample(s) outside [-1, 1] clipped",
            path.display()
        );
    }

    let mut body: Vec<u8> = Vec::with_capacity(signal.len() * 8);
    for &raw in &signal.samples {
        let s = raw.clamp(-1.0, 1.0);
        match depth {
            BitDepth::Pcm16 => {
                let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                body.extend_from_slice(&v.to_le_bytes());
            }
            BitDepth::Pcm24 => {
                let v = (s * 8_388_608.0)
                    .round()
                    .clamp(-8_388_608.0, 8_388_607.0) as i32;
                body.extend_from_slice(&v.to_le_bytes()[0..3]);
            }
            BitDepth::Pcm32 => {
                let v = (s * 2_147_483_648.0)
                    .round()
                    .clamp(-2_147_483_648.0, 2_147_483_647.0) as i32;
                body.extend_from_slice(&v.to_le_bytes());
            }
            BitDepth::Float32 => body.extend_from_slice(&(s as f32).to_le_bytes()),
            BitDepth::Float64 => body.extend_from_slice(&s.to_le_bytes()),
        }
    }

    let bits = depth.bits();
    let block_align = bits / 8; // mono
    let byte_rate = signal.sample_rate * block_align as u32;
    let data_len = body.len() as u32;

    let mut out: Vec<u8> = Vec::with_capacity(44 + body.len());
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&depth.format_tag().to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&signal.sample_rate.to_le_bytes());
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    out.extend_from_slice(&body);

    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}
