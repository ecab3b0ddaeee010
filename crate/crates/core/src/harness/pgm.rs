//! Binary PGM (`P5`, maxval 255) reading and writing.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::GrayImage;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::data_at(format!("expected {what} in PGM header"), start));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::data_at(format!("{what} out of range"), start))
    }
}

/// Decodes a `P5` byte stream.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 {
        return Err(Error::data_at("truncated PGM header", bytes.len()));
    }
    if &bytes[..2] != b"P5" {
        let found = String::from_utf8_lossy(&bytes[..2]).into_owned();
        return Err(Error::data_at(format!("expected binary PGM magic 'P5', found '{found}'"), 0));
    }
    let mut c = Cursor { bytes, pos: 2 };
    let width = c.number("width")?;
    let height = c.number("height")?;
    let maxval_at = c.pos;
    let maxval = c.number("maxval")?;
    if maxval != 255 {
        return Err(Error::data_at(format!("only maxval 255 is supported, found {maxval}"), maxval_at));
    }
    if width == 0 || height == 0 {
        return Err(Error::data_at("image dimensions must be positive", 2));
    }
    // exactly one whitespace byte separates the header from the raster
    if c.pos >= bytes.len() || !bytes[c.pos].is_ascii_whitespace() {
        return Err(Error::data_at("missing whitespace after PGM header", c.pos));
    }
    let start = c.pos + 1;
    let need = width.checked_mul(height).ok_or_else(|| Error::data_at("image dimensions overflow", 2))?;
    let have = bytes.len() - start;
    if have < need {
        return Err(Error::data_at(
            format!("truncated raster: expected {need} bytes, found {have}"),
            bytes.len(),
        ));
    }
    if have > need {
        return Err(Error::data_at(format!("{} trailing bytes after raster", have - need), start + need));
    }
    GrayImage::new(width, height, bytes[start..].to_vec())
}

/// Encodes an image as `P5` with the minimal header `P5\n<w> <h>\n255\n`.
pub fn pgm_bytes(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.pixels());
    out
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|e| match e {
        Error::Data { message, offset } => Error::Data {
            message: format!("{}: {message}", path.display()),
            offset,
        },
        other => other,
    })
}

pub fn save_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, pgm_bytes(image)).map_err(|e| Error::io(path, e))
}

/// Loads every `.pgm` file in `dir`, sorted by file name.
pub fn load_pgm_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, GrayImage)>> {
    let dir = dir.as_ref();
    let mut names: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|p| {
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            load_pgm(&p).map(|img| (id, img))
        })
        .collect()
}
