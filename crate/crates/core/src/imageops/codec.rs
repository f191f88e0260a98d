//! 8-bit PNG boundary: `u8 v <-> v / 255`.

use std::io::Cursor;
use std::path::Path;

use super::ImageBuffer;
use crate::error::{Error, Result};

pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| Error::Decode(e.to_string()))?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!("bit depth {:?} (only 8-bit supported)", info.bit_depth)));
    }
    let (keep, stride) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::GrayscaleAlpha => (1, 2),
        png::ColorType::Rgba => (3, 4),
        png::ColorType::Indexed => return Err(Error::Format("indexed colour PNG".into())),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Decode("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| Error::Decode(e.to_string()))?;
    let line = frame.line_size;
    let mut data = Vec::with_capacity(h * w * keep);
    for y in 0..h {
        let row = &buf[y * line..y * line + w * stride];
        for px in row.chunks_exact(stride) {
            data.extend(px[..keep].iter().map(|&v| v as f64 / 255.0));
        }
    }
    ImageBuffer::new(h, w, keep, data)
}

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(if img.channels() == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Format(e.to_string()))?;
        let bytes: Vec<u8> = img.data().iter().map(|v| (v * 255.0).round() as u8).collect();
        writer
            .write_image_data(&bytes)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(out)
}

pub fn read_png(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes).map_err(|e| match e {
        Error::Decode(m) => Error::Decode(format!("{}: {m}", path.display())),
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_png(path: impl AsRef<Path>, img: &ImageBuffer) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
