//! Binary feature tensors (`UEFM`) and contribution logs (`UECL`).

use std::path::Path;

use crate::error::{Error, Result};
use crate::render::{ContributionLog, LogEntry};
use crate::representations::FeatureMaps;
use crate::scene::ImageBuffer;

pub const FEATURE_MAGIC: &[u8; 4] = b"UEFM";
pub const LOG_MAGIC: &[u8; 4] = b"UECL";
pub const FORMAT_VERSION: u32 = 1;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(
                field,
                self.pos as u64,
                format!("need {n} bytes, file ends"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4, "magic")? != magic {
            return Err(Error::parse(
                "magic",
                0,
                format!("expected {}", String::from_utf8_lossy(magic)),
            ));
        }
        let at = self.pos as u64;
        let v = self.u32("version")?;
        if v != FORMAT_VERSION {
            return Err(Error::parse("version", at, format!("unsupported version {v}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::parse("data", self.pos as u64, "trailing bytes"));
        }
        Ok(())
    }
}

/// Little-endian layout: magic, version, width, height, channels, one
/// `u32` length-prefixed UTF-8 name per channel, then `f32` samples
/// row-major and channel-interleaved.
pub fn encode_feature_maps(maps: &FeatureMaps) -> Result<Vec<u8>> {
    let img = &maps.image;
    if maps.names.len() != img.channels {
        return Err(Error::invalid("channel names do not match the channel count"));
    }
    let mut out = Vec::with_capacity(20 + img.data.len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    for v in [FORMAT_VERSION, img.width as u32, img.height as u32, img.channels as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for n in &maps.names {
        out.extend_from_slice(&(n.len() as u32).to_le_bytes());
        out.extend_from_slice(n.as_bytes());
    }
    for v in &img.data {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_feature_maps(bytes: &[u8], camera_id: &str) -> Result<FeatureMaps> {
    let mut c = Cursor { bytes, pos: 0 };
    c.header(FEATURE_MAGIC)?;
    let w = c.u32("width")? as usize;
    let h = c.u32("height")? as usize;
    let ch = c.u32("channels")? as usize;
    let mut names = Vec::with_capacity(ch);
    for _ in 0..ch {
        let len = c.u32("name_length")? as usize;
        let at = c.pos as u64;
        let raw = c.take(len, "name")?;
        names.push(String::from_utf8(raw.to_vec()).map_err(|_| Error::parse("name", at, "channel name is not UTF-8"))?);
    }
    let n = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(ch))
        .ok_or_else(|| Error::parse("channels", 12, "tensor size overflows"))?;
    let raw = c.take(n * 4, "data")?;
    c.finish()?;
    let data = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok(FeatureMaps {
        camera_id: camera_id.to_string(),
        names,
        image: ImageBuffer::from_vec(w, h, ch, data)?,
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads a feature tensor; the camera id is the file stem.
pub fn read_feature_maps(path: &Path) -> Result<FeatureMaps> {
    decode_feature_maps(&std::fs::read(path)?, &stem(path))
}

pub fn write_feature_maps(path: &Path, maps: &FeatureMaps) -> Result<()> {
    std::fs::write(path, encode_feature_maps(maps)?)?;
    Ok(())
}

/// Little-endian layout: magic, version, width, height, primitive count
/// (`u32`), entry count (`u64`), `n + 1` offsets (`u64`), then per entry
/// pixel (`u32`), alpha and transmittance (`f64`).
pub fn encode_log(log: &ContributionLog) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + log.offsets().len() * 8 + log.len() * 20);
    out.extend_from_slice(LOG_MAGIC);
    for v in [
        FORMAT_VERSION,
        log.width as u32,
        log.height as u32,
        log.n_gaussians() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(log.len() as u64).to_le_bytes());
    for &o in log.offsets() {
        out.extend_from_slice(&(o as u64).to_le_bytes());
    }
    for e in log.entries() {
        out.extend_from_slice(&e.pixel.to_le_bytes());
        out.extend_from_slice(&e.alpha.to_le_bytes());
        out.extend_from_slice(&e.transmittance.to_le_bytes());
    }
    out
}

pub fn decode_log(bytes: &[u8]) -> Result<ContributionLog> {
    let mut c = Cursor { bytes, pos: 0 };
    c.header(LOG_MAGIC)?;
    let w = c.u32("width")? as usize;
    let h = c.u32("height")? as usize;
    let n = c.u32("n_gaussians")? as usize;
    let m = c.u64("n_entries")? as usize;
    if bytes.len() < 28 + (n + 1) * 8 {
        return Err(Error::parse("offsets", 28, "file too short for the offset table"));
    }
    let offsets = (0..=n)
        .map(|_| c.u64("offsets").map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    if (bytes.len() - c.pos) / 20 < m {
        return Err(Error::parse(
            "entries",
            c.pos as u64,
            format!("file too short for {m} entries"),
        ));
    }
    let mut entries = Vec::with_capacity(m);
    for _ in 0..m {
        let pixel = c.u32("pixel")?;
        let alpha = c.f64("alpha")?;
        let transmittance = c.f64("transmittance")?;
        entries.push(LogEntry {
            pixel,
            alpha,
            transmittance,
        });
    }
    c.finish()?;
    ContributionLog::from_parts(w, h, offsets, entries)
}

pub fn read_log(path: &Path) -> Result<ContributionLog> {
    decode_log(&std::fs::read(path)?)
}

pub fn write_log(path: &Path, log: &ContributionLog) -> Result<()> {
    std::fs::write(path, encode_log(log))?;
    Ok(())
}
