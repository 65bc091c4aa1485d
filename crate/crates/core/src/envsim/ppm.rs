//! Binary PPM (P6) frame dumps.

use std::io::{Read, Write};

use crate::types::Frame;

use super::EnvError;

/// Writes `P6\n<w> <h>\n255\n` followed by the raw RGB bytes, row-major.
pub fn write_ppm<W: Write>(frame: &Frame, mut out: W) -> Result<(), EnvError> {
    write!(out, "P6\n{} {}\n255\n", frame.width(), frame.height())?;
    out.write_all(frame.pixels())?;
    Ok(())
}

/// Reads back the exact format produced by [`write_ppm`].
pub fn read_ppm<R: Read>(mut input: R) -> Result<Frame, EnvError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let bad = |m: &str| EnvError::Config(format!("malformed PPM: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
    }
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(bad("expected P6 with maxval 255"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    // Exactly one whitespace byte separates the header from the raster.
    let body = bytes.get(pos + 1..).ok_or_else(|| bad("missing raster"))?;
    Frame::from_pixels(w, h, body.to_vec()).map_err(|e| bad(&e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_raster_are_exact() {
        let mut f = Frame::filled(2, 1, [1, 2, 3]);
        f.set_pixel(0, 1, [255, 0, 10]);
        let mut buf = Vec::new();
        write_ppm(&f, &mut buf).unwrap();
        assert_eq!(buf, b"P6\n2 1\n255\n\x01\x02\x03\xff\x00\x0a");
        assert_eq!(read_ppm(&buf[..]).unwrap(), f);
    }
}
