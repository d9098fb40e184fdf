//! 8-bit PNG and binary PPM (P6) / PGM (P5) reading and writing.
//!
//! Samples map to `[0, 1]` by division by 255 on load; on save each value
//! becomes `round(clamp(v, 0, 1) * 255)`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads a PNG, PPM or PGM file, detected by its magic bytes.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"\x89PNG") {
        decode_png(path, &bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(path, &bytes)
    } else {
        Err(format_err(path, "not a PNG, PPM (P6) or PGM (P5) file"))
    }
}

/// Writes an image; the format follows the file extension (`png`, `ppm`, `pgm`).
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    if img.channels() != 1 && img.channels() != 3 {
        return Err(format_err(
            path,
            format!("cannot save {} channels", img.channels()),
        ));
    }
    let bytes = interleaved_bytes(img);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match ext.as_str() {
        "png" => {
            let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
            enc.set_color(if img.channels() == 3 {
                png::ColorType::Rgb
            } else {
                png::ColorType::Grayscale
            });
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc
                .write_header()
                .map_err(|e| format_err(path, e.to_string()))?;
            writer
                .write_image_data(&bytes)
                .map_err(|e| format_err(path, e.to_string()))?;
            writer
                .finish()
                .map_err(|e| format_err(path, e.to_string()))?;
        }
        "ppm" | "pgm" => {
            let (magic, want) = if ext == "ppm" { ("P6", 3) } else { ("P5", 1) };
            if img.channels() != want {
                return Err(format_err(
                    path,
                    format!(".{ext} needs {want} channel(s), image has {}", img.channels()),
                ));
            }
            write!(out, "{magic}\n{} {}\n255\n", img.width(), img.height())
                .and_then(|_| out.write_all(&bytes))
                .map_err(|e| Error::io(path, e))?;
        }
        _ => return Err(format_err(path, format!("unknown extension `{ext}`"))),
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn interleaved_bytes(img: &Image) -> Vec<u8> {
    let c = img.channels();
    let n = img.plane_len();
    let mut bytes = vec![0u8; n * c];
    for ch in 0..c {
        for (i, &v) in img.channel(ch).iter().enumerate() {
            bytes[i * c + ch] = quantize(v);
        }
    }
    bytes
}

fn from_interleaved(path: &Path, h: usize, w: usize, c: usize, bytes: &[u8]) -> Result<Image> {
    if h == 0 || w == 0 {
        return Err(format_err(path, "zero-dimension image"));
    }
    if bytes.len() < h * w * c {
        return Err(format_err(path, "truncated pixel data"));
    }
    let n = h * w;
    let mut data = vec![0.0; n * c];
    for ch in 0..c {
        for i in 0..n {
            data[ch * n + i] = bytes[i * c + ch] as f64 / 255.0;
        }
    }
    Image::from_vec(h, w, c, data)
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<Image> {
    let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec
        .read_info()
        .map_err(|e| format_err(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| format_err(path, e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(format_err(path, "only 8-bit PNG is supported"));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(format_err(
                path,
                format!("unsupported PNG color type {other:?}"),
            ))
        }
    };
    let (h, w) = (info.height as usize, info.width as usize);
    // rows may be padded to line_size
    let line = info.line_size;
    let mut packed = Vec::with_capacity(h * w * channels);
    for y in 0..h {
        packed.extend_from_slice(&buf[y * line..y * line + w * channels]);
    }
    from_interleaved(path, h, w, channels, &packed)
}

fn decode_pnm(path: &Path, bytes: &[u8]) -> Result<Image> {
    let channels = if bytes[1] == b'6' { 3 } else { 1 };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(format_err(path, "truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(path, "malformed header field"))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(format_err(
            path,
            format!("only maxval 255 is supported, got {maxval}"),
        ));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(format_err(path, "missing whitespace after header")),
    }
    from_interleaved(path, h, w, channels, &bytes[pos..])
}
