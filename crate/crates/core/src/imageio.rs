//! PNG read/write for [`ImagePatch`] (8-bit RGB; other PNG layouts are
//! expanded or converted on read).

use std::io::Cursor;
use std::path::Path;

use crate::corruption::ImagePatch;
use crate::error::{Error, Result};
use crate::util::atomic_write;

pub fn encode_png(img: &ImagePatch) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Fast);
        let mut w = enc.write_header()?;
        w.write_image_data(&img.pixels)?;
        w.finish()?;
    }
    Ok(buf)
}

pub fn decode_png(bytes: &[u8]) -> Result<ImagePatch> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("png too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf)?;
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width as usize, info.height as usize);
    let rgb: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => buf,
        png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        png::ColorType::Indexed => return Err(Error::Format("unexpanded indexed png".into())),
    };
    ImagePatch::new(w, h, rgb)
}

pub fn write_png(path: &Path, img: &ImagePatch) -> Result<()> {
    atomic_write(path, &encode_png(img)?)
}

pub fn read_png(path: &Path) -> Result<ImagePatch> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    decode_png(&std::fs::read(path)?)
}
