//! PNG (8/16-bit) and PFM image files.

use std::io::{BufReader, Cursor};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scene::ImageBuffer;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PngDepth {
    Eight,
    Sixteen,
}

fn png_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image(format!("{}: {e}", path.display()))
}

/// Decodes a PNG to `[0, 1]` samples. Gray and RGB keep their channel
/// count; alpha is dropped; palettes are expanded to RGB.
pub fn decode_png(bytes: &[u8], name: &Path) -> Result<ImageBuffer> {
    let mut dec = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(|e| png_err(name, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err(name, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| png_err(name, e))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let (src_ch, keep) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => return Err(png_err(name, "palette was not expanded")),
    };
    let sixteen = info.bit_depth == png::BitDepth::Sixteen;
    if !sixteen && info.bit_depth != png::BitDepth::Eight {
        return Err(png_err(name, format!("unsupported bit depth {:?}", info.bit_depth)));
    }
    let bytes_per = if sixteen { 2 } else { 1 };
    let mut data = Vec::with_capacity(w * h * keep);
    for y in 0..h {
        let row = &buf[y * info.line_size..(y + 1) * info.line_size];
        for x in 0..w {
            for c in 0..keep {
                let o = (x * src_ch + c) * bytes_per;
                data.push(if sixteen {
                    u16::from_be_bytes([row[o], row[o + 1]]) as f64 / 65535.0
                } else {
                    row[o] as f64 / 255.0
                });
            }
        }
    }
    ImageBuffer::from_vec(w, h, keep, data)
}

pub fn read_png(path: &Path) -> Result<ImageBuffer> {
    decode_png(&std::fs::read(path)?, path)
}

/// Reads a color image as 3 channels; grayscale is replicated.
pub fn read_color_png(path: &Path) -> Result<ImageBuffer> {
    let img = read_png(path)?;
    if img.channels == 3 {
        return Ok(img);
    }
    let data = img.data.iter().flat_map(|&v| [v, v, v]).collect();
    ImageBuffer::from_vec(img.width, img.height, 3, data)
}

/// Reads a mask: 1 where the first channel is nonzero, else 0.
pub fn read_mask_png(path: &Path) -> Result<ImageBuffer> {
    let img = read_png(path)?;
    let data = (0..img.pixel_count())
        .map(|i| if img.pixel(i)[0] > 0.0 { 1.0 } else { 0.0 })
        .collect();
    ImageBuffer::from_vec(img.width, img.height, 1, data)
}

/// Encodes 1- or 3-channel samples, clamped to `[0, 1]` and rounded.
pub fn encode_png(img: &ImageBuffer, depth: PngDepth) -> Result<Vec<u8>> {
    let color = match img.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(Error::Image(format!("cannot write {c}-channel PNG"))),
    };
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(color);
        let data: Vec<u8> = match depth {
            PngDepth::Eight => {
                enc.set_depth(png::BitDepth::Eight);
                img.data
                    .iter()
                    .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                    .collect()
            }
            PngDepth::Sixteen => {
                enc.set_depth(png::BitDepth::Sixteen);
                img.data
                    .iter()
                    .flat_map(|v| ((v.clamp(0.0, 1.0) * 65535.0).round() as u16).to_be_bytes())
                    .collect()
            }
        };
        let mut w = enc.write_header().map_err(|e| Error::Image(e.to_string()))?;
        w.write_image_data(&data).map_err(|e| Error::Image(e.to_string()))?;
    }
    Ok(out)
}

pub fn write_png(path: &Path, img: &ImageBuffer, depth: PngDepth) -> Result<()> {
    std::fs::write(path, encode_png(img, depth)?)?;
    Ok(())
}

/// Decodes a PFM (`Pf` gray or `PF` RGB). Rows are stored bottom-up; a
/// negative scale marks little-endian samples.
pub fn decode_pfm(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut pos = 0usize;
    let mut token = |what: &'static str| -> Result<(String, usize)> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(what, start as u64, "unexpected end of PFM header"));
        }
        Ok((String::from_utf8_lossy(&bytes[start..pos]).into_owned(), start))
    };
    let (magic, at) = token("magic")?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(Error::parse("magic", at as u64, format!("not a PFM file (`{magic}`)"))),
    };
    let (w, at_w) = token("width")?;
    let (h, at_h) = token("height")?;
    let (s, at_s) = token("scale")?;
    let w: usize = w.parse().map_err(|_| Error::parse("width", at_w as u64, "bad width"))?;
    let h: usize = h
        .parse()
        .map_err(|_| Error::parse("height", at_h as u64, "bad height"))?;
    let scale: f64 = s.parse().map_err(|_| Error::parse("scale", at_s as u64, "bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse("scale", at_s as u64, "scale must be finite and nonzero"));
    }
    // exactly one whitespace byte separates the header from the samples
    let body = pos + 1;
    let need = w * h * channels * 4;
    if bytes.len() < body + need {
        return Err(Error::parse(
            "data",
            bytes.len() as u64,
            format!("expected {need} bytes of samples"),
        ));
    }
    let little = scale < 0.0;
    let mut data = vec![0.0; w * h * channels];
    for row in 0..h {
        let y = h - 1 - row;
        for i in 0..w * channels {
            let o = body + (row * w * channels + i) * 4;
            let b: [u8; 4] = bytes[o..o + 4].try_into().unwrap();
            let v = if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
            data[y * w * channels + i] = v as f64;
        }
    }
    ImageBuffer::from_vec(w, h, channels, data)
}

pub fn read_pfm(path: &Path) -> Result<ImageBuffer> {
    decode_pfm(&std::fs::read(path)?)
}

/// Encodes as little-endian PFM (samples narrowed to `f32`).
pub fn encode_pfm(img: &ImageBuffer) -> Result<Vec<u8>> {
    let magic = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::Image(format!("cannot write {c}-channel PFM"))),
    };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    let row_len = img.width * img.channels;
    for y in (0..img.height).rev() {
        for v in &img.data[y * row_len..(y + 1) * row_len] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_pfm(path: &Path, img: &ImageBuffer) -> Result<()> {
    std::fs::write(path, encode_pfm(img)?)?;
    Ok(())
}
