//! PCM16 decoding for RIFF/WAVE and NIST SPHERE containers.
//!
//! TIMIT ships its `.WAV` files as NIST SPHERE despite the extension, so the
//! container is chosen by sniffing the magic bytes rather than the file name.

use std::fs;
use std::io::{self, Cursor};
use std::path::Path;

use crate::{Error, Result};

const SPHERE_MAGIC: &[u8] = b"NIST_1A";
const SPHERE_HEADER_LEN: usize = 1024;
const PCM16_SCALE: f32 = 1.0 / 32768.0;

/// Decoded mono PCM signal.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    /// Builds a clip, rejecting empty signals, a zero rate, and samples outside `[-1, 1]`.
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Validation("audio clip has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Validation("sample rate must be positive".into()));
        }
        if let Some((i, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !s.is_finite() || s.abs() > 1.0)
        {
            return Err(Error::Validation(format!(
                "sample {i} = {s} outside [-1, 1]"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn from_pcm16(pcm: &[i16], sample_rate: u32) -> Result<Self> {
        Self::new(
            pcm.iter().map(|&s| f32::from(s) * PCM16_SCALE).collect(),
            sample_rate,
        )
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Quantizes back to PCM16 (inverse of the 1/32768 decode scaling, clamped).
    pub fn to_pcm16(&self) -> Vec<i16> {
        quantize_pcm16(&self.samples)
    }
}

pub fn quantize_pcm16(samples: &[f32]) -> Vec<i16> {
    samples
        .iter()
        .map(|&s| (f64::from(s) * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
        .collect()
}

/// Reads a mono PCM16 RIFF/WAVE or NIST SPHERE file.
pub fn read_audio(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"RIFF") {
        decode_riff(path, &bytes)
    } else if bytes.starts_with(SPHERE_MAGIC) {
        decode_sphere(path, &bytes)
    } else {
        let head = String::from_utf8_lossy(&bytes[..bytes.len().min(8)]).into_owned();
        Err(Error::decode(
            path,
            format!("unrecognized container (magic {head:?}); expected RIFF/WAVE or NIST_1A"),
        ))
    }
}

fn decode_riff(path: &Path, bytes: &[u8]) -> Result<AudioClip> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| hound_error(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::decode(
            path,
            format!(
                "unsupported RIFF/WAVE codec: {:?} {}-bit (only PCM16 is supported)",
                spec.sample_format, spec.bits_per_sample
            ),
        ));
    }
    if spec.channels != 1 {
        return Err(Error::decode(
            path,
            format!("RIFF/WAVE has {} channels; mono required", spec.channels),
        ));
    }
    let pcm = reader
        .into_samples::<i16>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| hound_error(path, e))?;
    AudioClip::from_pcm16(&pcm, spec.sample_rate).map_err(|e| Error::decode(path, e.to_string()))
}

fn hound_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::io(path, e),
        other => Error::decode(path, format!("RIFF/WAVE: {other}")),
    }
}

#[derive(Debug, Default)]
struct SphereHeader {
    header_len: usize,
    sample_count: Option<usize>,
    sample_rate: Option<u32>,
    channel_count: usize,
    sample_n_bytes: usize,
    coding: String,
    byte_format: String,
}

fn parse_sphere_header(path: &Path, bytes: &[u8]) -> Result<SphereHeader> {
    let bad = |reason: String| Error::decode(path, format!("NIST SPHERE header: {reason}"));
    // "NIST_1A\n   1024\n" announces the header size on the second line.
    let preamble = bytes.get(..16).ok_or_else(|| {
        Error::io(
            path,
            io::Error::new(io::ErrorKind::UnexpectedEof, "truncated SPHERE header"),
        )
    })?;
    let preamble = std::str::from_utf8(preamble).map_err(|_| bad("non-ASCII preamble".into()))?;
    let header_len: usize = preamble
        .lines()
        .nth(1)
        .map(str::trim)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("missing header length".into()))?;
    if header_len < 16 {
        return Err(bad(format!("header length {header_len} too small")));
    }
    let raw = bytes.get(..header_len).ok_or_else(|| {
        Error::io(
            path,
            io::Error::new(io::ErrorKind::UnexpectedEof, "truncated SPHERE header"),
        )
    })?;
    let text = String::from_utf8_lossy(raw);

    let mut header = SphereHeader {
        header_len,
        channel_count: 1,
        sample_n_bytes: 2,
        coding: "pcm".into(),
        byte_format: "01".into(),
        ..Default::default()
    };
    for line in text.lines().skip(2) {
        let line = line.trim();
        if line == "end_head" {
            break;
        }
        let mut parts = line.splitn(3, char::is_whitespace);
        let (Some(key), Some(ty), value) = (parts.next(), parts.next(), parts.next()) else {
            continue;
        };
        let value = value.unwrap_or("").trim();
        let int = || -> Result<usize> {
            if ty != "-i" {
                return Err(bad(format!("field {key} has type {ty}, expected -i")));
            }
            value
                .parse()
                .map_err(|_| bad(format!("field {key}: bad integer {value:?}")))
        };
        match key {
            "sample_count" => header.sample_count = Some(int()?),
            "sample_rate" => header.sample_rate = Some(int()? as u32),
            "channel_count" => header.channel_count = int()?,
            "sample_n_bytes" => header.sample_n_bytes = int()?,
            "sample_coding" => header.coding = value.to_string(),
            "sample_byte_format" => header.byte_format = value.to_string(),
            _ => {}
        }
    }
    Ok(header)
}

fn decode_sphere(path: &Path, bytes: &[u8]) -> Result<AudioClip> {
    let header = parse_sphere_header(path, bytes)?;
    if header.coding != "pcm" {
        return Err(Error::decode(
            path,
            format!(
                "unsupported NIST SPHERE sample_coding {:?} (only uncompressed pcm)",
                header.coding
            ),
        ));
    }
    if header.sample_n_bytes != 2 {
        return Err(Error::decode(
            path,
            format!(
                "unsupported NIST SPHERE sample width {} bytes (only PCM16)",
                header.sample_n_bytes
            ),
        ));
    }
    if header.channel_count != 1 {
        return Err(Error::decode(
            path,
            format!(
                "NIST SPHERE has {} channels; mono required",
                header.channel_count
            ),
        ));
    }
    let big_endian = match header.byte_format.as_str() {
        "01" => false,
        "10" => true,
        other => {
            return Err(Error::decode(
                path,
                format!("unsupported NIST SPHERE sample_byte_format {other:?}"),
            ))
        }
    };
    let sample_rate = header
        .sample_rate
        .ok_or_else(|| Error::decode(path, "NIST SPHERE header lacks sample_rate"))?;

    let payload = &bytes[header.header_len..];
    let count = header.sample_count.unwrap_or(payload.len() / 2);
    let needed = count * 2;
    if payload.len() < needed {
        return Err(Error::io(
            path,
            io::Error::new(
                io::ErrorKind::UnexpectedEof,
                format!(
                    "SPHERE payload truncated: header declares {count} samples, found {} bytes",
                    payload.len()
                ),
            ),
        ));
    }
    let pcm: Vec<i16> = payload[..needed]
        .chunks_exact(2)
        .map(|b| {
            let pair = [b[0], b[1]];
            if big_endian {
                i16::from_be_bytes(pair)
            } else {
                i16::from_le_bytes(pair)
            }
        })
        .collect();
    AudioClip::from_pcm16(&pcm, sample_rate).map_err(|e| Error::decode(path, e.to_string()))
}

/// Writes mono PCM16 RIFF/WAVE.
pub fn write_wav(path: impl AsRef<Path>, pcm: &[i16], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| hound_error(path, e))?;
    for &s in pcm {
        writer.write_sample(s).map_err(|e| hound_error(path, e))?;
    }
    writer.finalize().map_err(|e| hound_error(path, e))
}

/// Writes mono little-endian PCM16 NIST SPHERE with a 1024-byte header.
pub fn write_sphere(path: impl AsRef<Path>, pcm: &[i16], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let mut header = format!(
        "NIST_1A\n   1024\n\
         sample_count -i {}\n\
         sample_rate -i {sample_rate}\n\
         channel_count -i 1\n\
         sample_n_bytes -i 2\n\
         sample_byte_format -s2 01\n\
         sample_coding -s3 pcm\n\
         sample_sig_bits -i 16\n\
         end_head\n",
        pcm.len()
    )
    .into_bytes();
    header.resize(SPHERE_HEADER_LEN, b' ');
    let mut bytes = header;
    bytes.reserve(pcm.len() * 2);
    for s in pcm {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, secs: f64, sr: u32) -> Vec<i16> {
        let n = (secs * f64::from(sr)) as usize;
        let samples: Vec<f32> = (0..n)
            .map(|i| {
                (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / f64::from(sr)).sin()) as f32
            })
            .collect();
        quantize_pcm16(&samples)
    }

    #[test]
    fn riff_zero_signal() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.wav");
        write_wav(&p, &vec![0i16; 16000], 16000).unwrap();
        let clip = read_audio(&p).unwrap();
        assert_eq!(clip.len(), 16000);
        assert_eq!(clip.sample_rate(), 16000);
        assert!(clip.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn riff_exact_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.wav");
        write_wav(&p, &[16384i16; 100], 8000).unwrap();
        let clip = read_audio(&p).unwrap();
        assert!(clip.samples().iter().all(|&s| s == 0.5));
        assert_eq!(clip.sample_rate(), 8000);
    }

    #[test]
    fn sphere_matches_riff() {
        let dir = tempfile::tempdir().unwrap();
        let pcm = sine(440.0, 1.0, 16000);
        let wav = dir.path().join("a.wav");
        let sph = dir.path().join("a.sph");
        write_wav(&wav, &pcm, 16000).unwrap();
        write_sphere(&sph, &pcm, 16000).unwrap();
        let a = read_audio(&wav).unwrap();
        let b = read_audio(&sph).unwrap();
        let max_diff = a
            .samples()
            .iter()
            .zip(b.samples())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f32, f32::max);
        assert_eq!(a.len(), b.len());
        assert_eq!(max_diff, 0.0);
        assert_eq!(b.sample_rate(), 16000);
    }

    #[test]
    fn sphere_big_endian() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("be.sph");
        let mut header = b"NIST_1A\n   1024\nsample_count -i 2\nsample_rate -i 16000\nsample_byte_format -s2 10\nend_head\n".to_vec();
        header.resize(1024, b' ');
        header.extend_from_slice(&16384i16.to_be_bytes());
        header.extend_from_slice(&(-16384i16).to_be_bytes());
        fs::write(&p, header).unwrap();
        assert_eq!(read_audio(&p).unwrap().samples(), &[0.5, -0.5]);
    }

    #[test]
    fn sphere_truncated_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.sph");
        write_sphere(&p, &[1i16; 100], 16000).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(read_audio(&p), Err(Error::Io { .. })));
    }

    #[test]
    fn riff_truncated_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wav");
        write_wav(&p, &[7i16; 1000], 16000).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 101]).unwrap();
        assert!(matches!(read_audio(&p), Err(Error::Io { .. })), "{:?}", read_audio(&p));
    }

    #[test]
    fn shorten_is_decode_error_naming_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.sph");
        let mut header =
            b"NIST_1A\n   1024\nsample_rate -i 16000\nsample_coding -s26 pcm,embedded-shorten-v2.00\nend_head\n"
                .to_vec();
        header.resize(1030, b' ');
        fs::write(&p, header).unwrap();
        match read_audio(&p) {
            Err(Error::Decode { reason, .. }) => assert!(reason.contains("shorten"), "{reason}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stereo_and_float_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for _ in 0..8 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(read_audio(&p), Err(Error::Decode { .. })));

        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(0.0f32).unwrap();
        w.finalize().unwrap();
        match read_audio(&p) {
            Err(Error::Decode { reason, .. }) => assert!(reason.contains("Float"), "{reason}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        fs::write(&p, b"OggS....").unwrap();
        assert!(matches!(read_audio(&p), Err(Error::Decode { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_audio("/nonexistent/file.wav"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn clip_rejects_out_of_range() {
        assert!(AudioClip::new(vec![0.0, 1.5], 16000).is_err());
        assert!(AudioClip::new(vec![], 16000).is_err());
        assert!(AudioClip::new(vec![0.0], 0).is_err());
    }
}
