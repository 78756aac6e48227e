//! Linear-intensity image buffers and their on-disk containers.
//!
//! The canonical container is single-channel PFM ("Pf"), little-endian
//! (negative scale field), which stores linear intensities losslessly as
//! f32. 16-bit binary PGM ("P5", big-endian samples per the format) is
//! accepted on input; its integer values are mapped to [0, 1] by dividing
//! by the declared maxval.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major single-channel f64 image; row 0 is the top image row.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<f64>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::invalid(format!(
                "image data length {} does not match {width} x {height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> f64 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, value: f64) {
        self.data[v as usize * self.width as usize + u as usize] = value;
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Writes a grayscale little-endian PFM. Values are narrowed to f32; rows
/// are stored bottom-to-top as the format prescribes.
pub fn write_pfm(image: &ImageBuffer, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path.display(), e.to_string()))?;
    let mut out = BufWriter::new(file);
    write!(out, "Pf\n{} {}\n-1.0\n", image.width, image.height)?;
    let w = image.width as usize;
    for row in (0..image.height as usize).rev() {
        for col in 0..w {
            let v = image.data[row * w + col] as f32;
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a grayscale PFM (little- or big-endian).
pub fn read_pfm(path: &Path) -> Result<ImageBuffer> {
    let file = File::open(path).map_err(|e| Error::file(path.display(), e.to_string()))?;
    let mut reader = BufReader::new(file);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;

    let mut cursor = 0usize;
    let magic = next_token(&bytes, &mut cursor)
        .ok_or_else(|| Error::file(path.display(), "missing PFM header"))?;
    if magic == "PF" {
        return Err(Error::file(path.display(), "color PFM not supported, expected grayscale 'Pf'"));
    }
    if magic != "Pf" {
        return Err(Error::file(path.display(), format!("bad PFM magic '{magic}'")));
    }
    let width: u32 = parse_token(&bytes, &mut cursor, path, "width")?;
    let height: u32 = parse_token(&bytes, &mut cursor, path, "height")?;
    let scale: f64 = parse_token(&bytes, &mut cursor, path, "scale")?;
    if scale == 0.0 {
        return Err(Error::file(path.display(), "PFM scale must be nonzero"));
    }
    let little_endian = scale < 0.0;
    // Header tokens are followed by exactly one whitespace byte.
    let n = width as usize * height as usize;
    let expected = n * 4;
    if bytes.len() < cursor + expected {
        return Err(Error::file(
            path.display(),
            format!("truncated PFM: need {expected} sample bytes, found {}", bytes.len() - cursor),
        ));
    }
    let mut data = vec![0.0f64; n];
    let w = width as usize;
    for row in 0..height as usize {
        // PFM stores the bottom row first.
        let target_row = height as usize - 1 - row;
        for col in 0..w {
            let off = cursor + (row * w + col) * 4;
            let raw: [u8; 4] = bytes[off..off + 4].try_into().expect("bounds checked");
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            data[target_row * w + col] = v as f64;
        }
    }
    ImageBuffer::from_data(width, height, data)
}

/// Reads a 16-bit binary PGM and maps its samples to [0, 1].
pub fn read_pgm16(path: &Path) -> Result<ImageBuffer> {
    let file = File::open(path).map_err(|e| Error::file(path.display(), e.to_string()))?;
    let mut reader = BufReader::new(file);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;

    let mut cursor = 0usize;
    let magic = next_token(&bytes, &mut cursor)
        .ok_or_else(|| Error::file(path.display(), "missing PGM header"))?;
    if magic != "P5" {
        return Err(Error::file(path.display(), format!("bad PGM magic '{magic}'")));
    }
    let width: u32 = parse_token(&bytes, &mut cursor, path, "width")?;
    let height: u32 = parse_token(&bytes, &mut cursor, path, "height")?;
    let maxval: u32 = parse_token(&bytes, &mut cursor, path, "maxval")?;
    if !(256..=65535).contains(&maxval) {
        return Err(Error::file(
            path.display(),
            format!("expected a 16-bit PGM (maxval in 256..=65535), got {maxval}"),
        ));
    }
    let n = width as usize * height as usize;
    if bytes.len() < cursor + n * 2 {
        return Err(Error::file(path.display(), "truncated PGM sample data"));
    }
    let mut data = vec![0.0f64; n];
    for (i, slot) in data.iter_mut().enumerate() {
        let off = cursor + i * 2;
        let v = u16::from_be_bytes([bytes[off], bytes[off + 1]]);
        *slot = v as f64 / maxval as f64;
    }
    ImageBuffer::from_data(width, height, data)
}

/// Advances past whitespace and PNM `#` comments, returning the next
/// ASCII token. Leaves the cursor one byte past the token's terminating
/// whitespace.
fn next_token(bytes: &[u8], cursor: &mut usize) -> Option<String> {
    let mut i = *cursor;
    loop {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        break;
    }
    if i >= bytes.len() {
        return None;
    }
    let start = i;
    while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
        i += 1;
    }
    let token = String::from_utf8_lossy(&bytes[start..i]).into_owned();
    // Consume the single whitespace byte terminating the token.
    *cursor = (i + 1).min(bytes.len());
    Some(token)
}

fn parse_token<T: std::str::FromStr>(
    bytes: &[u8],
    cursor: &mut usize,
    path: &Path,
    what: &str,
) -> Result<T> {
    let token = next_token(bytes, cursor)
        .ok_or_else(|| Error::file(path.display(), format!("missing {what}")))?;
    token
        .parse()
        .map_err(|_| Error::file(path.display(), format!("bad {what} '{token}'")))
}
