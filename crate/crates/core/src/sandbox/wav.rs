//! Little-endian RIFF/WAVE reading and writing.
//!
//! Only `fmt ` and `data` chunks are interpreted; everything else is skipped.
//! Integer PCM of 8/16/24/32 bits and IEEE float of 32/64 bits are decoded,
//! including the `WAVE_FORMAT_EXTENSIBLE` wrapping of those two.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::profile::TierProfile;

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xfffe;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed WAV at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },
    #[error("unsupported WAV encoding (format tag {code:#06x}, {bits} bits)")]
    UnsupportedEncoding { code: u16, bits: u16 },
}

fn format_err(offset: usize, reason: &str) -> WavError {
    WavError::Format {
        offset,
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    Int,
    Float,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavSpec {
    pub sample_rate: u32,
    pub channels: u16,
    pub bits_per_sample: u16,
    pub format: SampleFormat,
}

impl WavSpec {
    pub fn pcm16(sample_rate: u32, channels: u16) -> Self {
        WavSpec {
            sample_rate,
            channels,
            bits_per_sample: 16,
            format: SampleFormat::Int,
        }
    }

    fn block_align(&self) -> usize {
        self.channels as usize * (self.bits_per_sample as usize / 8)
    }

    fn check(&self) -> Result<(), WavError> {
        let ok = match self.format {
            SampleFormat::Int => matches!(self.bits_per_sample, 8 | 16 | 24 | 32),
            SampleFormat::Float => matches!(self.bits_per_sample, 32 | 64),
        };
        if !ok {
            let code = match self.format {
                SampleFormat::Int => FORMAT_PCM,
                SampleFormat::Float => FORMAT_FLOAT,
            };
            return Err(WavError::UnsupportedEncoding {
                code,
                bits: self.bits_per_sample,
            });
        }
        if self.channels == 0 {
            return Err(format_err(22, "zero channels"));
        }
        if self.sample_rate == 0 {
            return Err(format_err(24, "zero sample rate"));
        }
        Ok(())
    }
}

/// Summary of one WAV artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveInfo {
    pub path: PathBuf,
    pub sample_rate: u32,
    pub channels: u16,
    pub bit_depth: u16,
    pub format: SampleFormat,
    pub frame_count: u64,
    pub duration: f64,
    pub peak_amplitude: f64,
    pub valid_for_tier: bool,
}

/// Decoded audio: header plus the mono downmix in [-1, 1].
#[derive(Debug, Clone)]
pub struct DecodedWave {
    pub spec: WavSpec,
    pub frame_count: u64,
    pub mono: Vec<f64>,
}

impl DecodedWave {
    pub fn duration(&self) -> f64 {
        self.frame_count as f64 / self.spec.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.mono.iter().fold(0.0f64, |m, s| m.max(s.abs())).min(1.0)
    }
}

fn u16_at(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Parses a complete WAV file held in memory.
pub fn decode_bytes(bytes: &[u8]) -> Result<DecodedWave, WavError> {
    if bytes.len() < 4 || &bytes[0..4] != b"RIFF" {
        return Err(format_err(0, "bad magic"));
    }
    if bytes.len() < 12 {
        return Err(format_err(4, "truncated RIFF header"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(format_err(8, "not a WAVE file"));
    }
    let mut pos = 12;
    let mut spec = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        // Streaming writers leave the size as a placeholder; clamp to the file.
        let body_end = body_start.saturating_add(size).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => spec = Some(parse_fmt(body, body_start)?),
            b"data" => data = Some(body),
            _ => {}
        }
        if data.is_some() && spec.is_some() {
            break;
        }
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }
    let spec = spec.ok_or_else(|| format_err(12, "missing fmt chunk"))?;
    let data = data.ok_or_else(|| format_err(pos.min(bytes.len()), "missing data chunk"))?;
    let block = spec.block_align();
    let frames = data.len() / block;
    let width = spec.bits_per_sample as usize / 8;
    let channels = spec.channels as usize;
    let mut mono = Vec::with_capacity(frames);
    for f in 0..frames {
        let frame = &data[f * block..(f + 1) * block];
        let mut acc = 0.0;
        for c in 0..channels {
            acc += sample_value(&frame[c * width..(c + 1) * width], spec);
        }
        mono.push(acc / channels as f64);
    }
    Ok(DecodedWave {
        spec,
        frame_count: frames as u64,
        mono,
    })
}

fn parse_fmt(body: &[u8], offset: usize) -> Result<WavSpec, WavError> {
    if body.len() < 16 {
        return Err(format_err(offset, "fmt chunk shorter than 16 bytes"));
    }
    let mut tag = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let bits = u16_at(body, 14);
    if tag == FORMAT_EXTENSIBLE {
        if body.len() < 40 {
            return Err(format_err(offset, "extensible fmt chunk too short"));
        }
        // first two bytes of the sub-format GUID carry the real tag
        tag = u16_at(body, 24);
    }
    let format = match tag {
        FORMAT_PCM => SampleFormat::Int,
        FORMAT_FLOAT => SampleFormat::Float,
        code => return Err(WavError::UnsupportedEncoding { code, bits }),
    };
    let spec = WavSpec {
        sample_rate,
        channels,
        bits_per_sample: bits,
        format,
    };
    spec.check().map_err(|e| match e {
        WavError::Format { reason, .. } => WavError::Format { offset, reason },
        other => other,
    })?;
    Ok(spec)
}

fn sample_value(b: &[u8], spec: WavSpec) -> f64 {
    match (spec.format, spec.bits_per_sample) {
        (SampleFormat::Int, 8) => (b[0] as f64 - 128.0) / 128.0,
        (SampleFormat::Int, 16) => i16::from_le_bytes([b[0], b[1]]) as f64 / 32_768.0,
        (SampleFormat::Int, 24) => {
            let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
            v as f64 / 8_388_608.0
        }
        (SampleFormat::Int, 32) => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / 2_147_483_648.0,
        (SampleFormat::Float, 32) => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        (SampleFormat::Float, 64) => {
            f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]])
        }
        _ => unreachable!("spec checked at parse time"),
    }
}

pub fn decode_wave(path: &Path) -> Result<DecodedWave, WavError> {
    let bytes = fs::read(path).map_err(|source| WavError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_bytes(&bytes)
}

/// Parses and fully decodes `path`. `valid_for_tier` is left false; see
/// [`parse_wave_for`].
pub fn parse_wave(path: &Path) -> Result<WaveInfo, WavError> {
    let decoded = decode_wave(path)?;
    Ok(WaveInfo {
        path: path.to_path_buf(),
        sample_rate: decoded.spec.sample_rate,
        channels: decoded.spec.channels,
        bit_depth: decoded.spec.bits_per_sample,
        format: decoded.spec.format,
        frame_count: decoded.frame_count,
        duration: decoded.duration(),
        peak_amplitude: decoded.peak(),
        valid_for_tier: false,
    })
}

pub fn parse_wave_for(path: &Path, profile: &TierProfile) -> Result<WaveInfo, WavError> {
    let mut info = parse_wave(path)?;
    info.valid_for_tier = profile.accepts(&info);
    Ok(info)
}

/// Encodes interleaved samples in [-1, 1] (clipped) into WAV bytes.
pub fn encode_wave(spec: WavSpec, interleaved: &[f64]) -> Result<Vec<u8>, WavError> {
    spec.check()?;
    if !interleaved.len().is_multiple_of(spec.channels as usize) {
        return Err(format_err(0, "sample count is not a multiple of channels"));
    }
    let width = spec.bits_per_sample as usize / 8;
    let data_len = interleaved.len() * width;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    let tag = match spec.format {
        SampleFormat::Int => FORMAT_PCM,
        SampleFormat::Float => FORMAT_FLOAT,
    };
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&spec.channels.to_le_bytes());
    out.extend_from_slice(&spec.sample_rate.to_le_bytes());
    let block = spec.block_align() as u32;
    out.extend_from_slice(&(spec.sample_rate * block).to_le_bytes());
    out.extend_from_slice(&(block as u16).to_le_bytes());
    out.extend_from_slice(&spec.bits_per_sample.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in interleaved {
        let s = s.clamp(-1.0, 1.0);
        match (spec.format, spec.bits_per_sample) {
            (SampleFormat::Int, 8) => out.push((s * 127.0).round() as i16 as u8 ^ 0x80),
            (SampleFormat::Int, 16) => {
                out.extend_from_slice(&((s * 32_767.0).round() as i16).to_le_bytes())
            }
            (SampleFormat::Int, 24) => {
                let v = (s * 8_388_607.0).round() as i32;
                out.extend_from_slice(&v.to_le_bytes()[..3]);
            }
            (SampleFormat::Int, 32) => {
                out.extend_from_slice(&((s * 2_147_483_647.0).round() as i32).to_le_bytes())
            }
            (SampleFormat::Float, 32) => out.extend_from_slice(&(s as f32).to_le_bytes()),
            (SampleFormat::Float, 64) => out.extend_from_slice(&s.to_le_bytes()),
            _ => unreachable!("spec checked above"),
        }
    }
    Ok(out)
}

pub fn write_wave(path: &Path, spec: WavSpec, interleaved: &[f64]) -> Result<(), WavError> {
    let bytes = encode_wave(spec, interleaved)?;
    let io = |source| WavError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&bytes).map_err(io)
}

/// A mono sine tone, handy for fixtures.
pub fn sine(freq: f64, amplitude: f64, sample_rate: u32, seconds: f64) -> Vec<f64> {
    let n = (seconds * sample_rate as f64).round() as usize;
    (0..n)
        .map(|i| amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / sample_rate as f64).sin())
        .collect()
}
