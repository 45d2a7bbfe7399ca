use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};
use crate::halluc::{ForegroundMask, LatentGrid};
use crate::scalar::Scalar;

pub const OVTG_MAGIC: &[u8; 4] = b"OVTG";
const PNG_MAGIC: &[u8; 8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    /// 16-byte header (magic, u32 width, height, channels; little-endian)
    /// followed by row-major f32 LE values.
    Ovtg,
    /// 8-bit PNG, values mapped to [−1, 1].
    Png,
}

impl GridFormat {
    pub fn detect(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(OVTG_MAGIC) {
            Ok(GridFormat::Ovtg)
        } else if bytes.starts_with(PNG_MAGIC) {
            Ok(GridFormat::Png)
        } else {
            Err(Error::invalid("unrecognized grid format (expected OVTG or PNG)"))
        }
    }

    /// `.png` paths are PNG, everything else OVTG.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("png") => GridFormat::Png,
            _ => GridFormat::Ovtg,
        }
    }
}

pub fn read_ovtg<T: Scalar, R: Read>(mut reader: R) -> Result<LatentGrid<T>> {
    let mut header = [0u8; 16];
    reader.read_exact(&mut header)?;
    if &header[..4] != OVTG_MAGIC {
        return Err(Error::invalid("missing OVTG magic"));
    }
    let field = |i: usize| u32::from_le_bytes(header[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let (w, h, c) = (field(1), field(2), field(3));
    let n = w.checked_mul(h).and_then(|v| v.checked_mul(c)).ok_or_else(|| Error::invalid("grid too large"))?;
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw)?;
    if raw.len() != n * 4 {
        return Err(Error::DimensionMismatch { expected: n * 4, found: raw.len() });
    }
    let values = raw.chunks_exact(4).map(|b| T::lit(f32::from_le_bytes(b.try_into().unwrap()) as f64)).collect();
    LatentGrid::new(w, h, c, values)
}

pub fn write_ovtg<T: Scalar, W: Write>(mut writer: W, grid: &LatentGrid<T>) -> Result<()> {
    let dims = [grid.width(), grid.height(), grid.channels()];
    let mut header = OVTG_MAGIC.to_vec();
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::invalid("grid dimension exceeds u32"))?;
        header.extend_from_slice(&d.to_le_bytes());
    }
    writer.write_all(&header)?;
    let mut body = Vec::with_capacity(grid.values().len() * 4);
    for v in grid.values() {
        body.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    writer.write_all(&body)?;
    writer.flush()?;
    Ok(())
}

/// Decodes a PNG; 8-bit samples `p` become `p / 127.5 − 1`.
pub fn read_png<T: Scalar>(bytes: &[u8]) -> Result<LatentGrid<T>> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
    let channels = img.color().channel_count() as usize;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw: Vec<u8> = match channels {
        1 => img.into_luma8().into_raw(),
        2 => img.into_luma_alpha8().into_raw(),
        3 => img.into_rgb8().into_raw(),
        _ => img.into_rgba8().into_raw(),
    };
    LatentGrid::new(w, h, channels.min(4), raw.iter().map(|&p| T::lit(p as f64 / 127.5 - 1.0)).collect())
}

/// Encodes values clamped to [−1, 1] as 8-bit PNG with 1–4 channels.
pub fn write_png<T: Scalar, W: Write>(writer: W, grid: &LatentGrid<T>) -> Result<()> {
    let color = match grid.channels() {
        1 => ExtendedColorType::L8,
        2 => ExtendedColorType::La8,
        3 => ExtendedColorType::Rgb8,
        4 => ExtendedColorType::Rgba8,
        c => return Err(Error::invalid(format!("PNG supports 1-4 channels, grid has {c}"))),
    };
    let bytes: Vec<u8> =
        grid.values().iter().map(|v| ((v.as_f64().clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8).collect();
    PngEncoder::new(writer).write_image(&bytes, grid.width() as u32, grid.height() as u32, color)?;
    Ok(())
}

/// Reads a grid in either format, detected from the file's magic bytes.
pub fn read_grid<T: Scalar>(path: &Path) -> Result<(LatentGrid<T>, GridFormat)> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let format = GridFormat::detect(&bytes)?;
    let grid = match format {
        GridFormat::Ovtg => read_ovtg(bytes.as_slice())?,
        GridFormat::Png => read_png(&bytes)?,
    };
    Ok((grid, format))
}

pub fn write_grid<T: Scalar>(path: &Path, grid: &LatentGrid<T>, format: GridFormat) -> Result<()> {
    let writer = BufWriter::new(File::create(path)?);
    match format {
        GridFormat::Ovtg => write_ovtg(writer, grid),
        GridFormat::Png => write_png(writer, grid),
    }
}

/// Reads a single-channel mask. OVTG values must lie in [0, 1]; PNG
/// samples are scaled by 1/255 after conversion to grayscale.
pub fn read_mask<T: Scalar>(path: &Path) -> Result<ForegroundMask<T>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    match GridFormat::detect(&bytes)? {
        GridFormat::Ovtg => {
            let g: LatentGrid<T> = read_ovtg(bytes.as_slice())?;
            if g.channels() != 1 {
                return Err(Error::invalid(format!("mask must have one channel, found {}", g.channels())));
            }
            ForegroundMask::new(g.width(), g.height(), g.into_values())
        }
        GridFormat::Png => {
            let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)?.into_luma8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            ForegroundMask::new(w, h, img.into_raw().into_iter().map(|p| T::lit(p as f64 / 255.0)).collect())
        }
    }
}
