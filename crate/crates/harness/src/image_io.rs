//! PNG encoding and decoding.

use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor};
use std::path::Path;

use png::{BitDepth, ColorType, Compression, Decoder, Encoder, Transformations};
use pointcount_core::RgbImage;

use crate::Error;

/// Encodes an 8-bit RGB PNG. Output bytes depend only on the pixels.
pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, Error> {
    let mut out = Vec::new();
    {
        let mut enc = Encoder::new(&mut out, img.width, img.height);
        enc.set_color(ColorType::Rgb);
        enc.set_depth(BitDepth::Eight);
        enc.set_compression(Compression::Fast);
        let mut w = enc.write_header().map_err(|e| Error::Image(e.to_string()))?;
        w.write_image_data(&img.pixels).map_err(|e| Error::Image(e.to_string()))?;
    }
    Ok(out)
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let bytes = encode_png(img)?;
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    std::io::Write::write_all(&mut BufWriter::new(f), &bytes).map_err(|e| Error::io(path, e))
}

struct Decoded {
    width: u32,
    height: u32,
    color: ColorType,
    depth: BitDepth,
    data: Vec<u8>,
}

fn decode<R: std::io::BufRead + std::io::Seek>(reader: R, expand: bool) -> Result<Decoded, Error> {
    let mut dec = Decoder::new(reader);
    if expand {
        dec.set_transformations(Transformations::EXPAND | Transformations::STRIP_16);
    } else {
        dec.set_transformations(Transformations::EXPAND);
    }
    let mut r = dec.read_info().map_err(|e| Error::Image(e.to_string()))?;
    let size = r.output_buffer_size().ok_or_else(|| Error::Image("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = r.next_frame(&mut buf).map_err(|e| Error::Image(e.to_string()))?;
    buf.truncate(info.buffer_size());
    Ok(Decoded { width: info.width, height: info.height, color: info.color_type, depth: info.bit_depth, data: buf })
}

fn to_rgb(d: Decoded) -> Result<RgbImage, Error> {
    let n = d.width as usize * d.height as usize;
    let pixels = match d.color {
        ColorType::Rgb => d.data,
        ColorType::Rgba => d.data.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        ColorType::Grayscale => d.data.iter().flat_map(|v| [*v, *v, *v]).collect(),
        ColorType::GrayscaleAlpha => d.data.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        ColorType::Indexed => return Err(Error::Image("unexpanded palette image".into())),
    };
    if pixels.len() != n * 3 {
        return Err(Error::Image("unexpected pixel buffer size".into()));
    }
    Ok(RgbImage { width: d.width, height: d.height, pixels })
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbImage, Error> {
    to_rgb(decode(Cursor::new(bytes), true)?)
}

pub fn read_png(path: &Path) -> Result<RgbImage, Error> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    to_rgb(decode(BufReader::new(f), true)?).map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

/// Reads an instance label image: 8/16-bit grayscale values, or RGB packed
/// as `r << 16 | g << 8 | b`. Zero is background.
pub fn read_label_png(path: &Path) -> Result<(Vec<u32>, u32, u32), Error> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let d = decode(BufReader::new(f), false)?;
    let labels = match (d.color, d.depth) {
        (ColorType::Grayscale, BitDepth::Sixteen) => {
            d.data.chunks_exact(2).map(|p| u32::from(u16::from_be_bytes([p[0], p[1]]))).collect()
        }
        (ColorType::Grayscale, _) => d.data.iter().map(|v| u32::from(*v)).collect(),
        (ColorType::Rgb, BitDepth::Eight) => {
            d.data.chunks_exact(3).map(|p| u32::from(p[0]) << 16 | u32::from(p[1]) << 8 | u32::from(p[2])).collect()
        }
        (ColorType::Rgba, BitDepth::Eight) => {
            d.data.chunks_exact(4).map(|p| u32::from(p[0]) << 16 | u32::from(p[1]) << 8 | u32::from(p[2])).collect()
        }
        (c, b) => return Err(Error::Image(format!("{}: unsupported label format {c:?}/{b:?}", path.display()))),
    };
    Ok((labels, d.width, d.height))
}

/// Writes an 8- or 16-bit grayscale label image.
pub fn write_label_png(path: &Path, labels: &[u32], width: u32, height: u32) -> Result<(), Error> {
    let wide = labels.iter().any(|l| *l > 255);
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = Encoder::new(BufWriter::new(f), width, height);
    enc.set_color(ColorType::Grayscale);
    enc.set_depth(if wide { BitDepth::Sixteen } else { BitDepth::Eight });
    let mut w = enc.write_header().map_err(|e| Error::Image(e.to_string()))?;
    let data: Vec<u8> = if wide {
        labels.iter().flat_map(|l| (*l as u16).to_be_bytes()).collect()
    } else {
        labels.iter().map(|l| *l as u8).collect()
    };
    w.write_image_data(&data).map_err(|e| Error::Image(e.to_string()))
}
