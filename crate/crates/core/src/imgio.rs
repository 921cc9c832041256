//! Image readers and writers.
//!
//! PGM (P5) and PPM (P6) are the reference formats: trivial headers, raw
//! bytes, bit-exact by construction. PNG is supported for interop with
//! annotation tools and is lossless for 8-bit data.

use crate::spectral::{GrayImage, RgbImage};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad image header: {0}")]
    BadHeader(String),
    #[error("unsupported image extension '{0}'")]
    UnsupportedExtension(String),
    #[error("png: {0}")]
    Png(#[from] image::ImageError),
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<(), ImageIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", img.width, img.height)?;
    w.write_all(&img.pixels)?;
    Ok(())
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<(), ImageIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    w.write_all(&img.pixels)?;
    Ok(())
}

/// Reads one whitespace-delimited header token, skipping `#` comments.
fn read_token(r: &mut impl BufRead) -> Result<String, ImageIoError> {
    let mut tok = String::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0] as char;
        if in_comment {
            if c == '\n' {
                in_comment = false;
            }
            continue;
        }
        if c == '#' {
            in_comment = true;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c);
    }
    if tok.is_empty() {
        return Err(ImageIoError::BadHeader("unexpected end of header".into()));
    }
    Ok(tok)
}

fn read_netpbm_header(
    r: &mut impl BufRead,
    magic: &str,
) -> Result<(usize, usize), ImageIoError> {
    let m = read_token(r)?;
    if m != magic {
        return Err(ImageIoError::BadHeader(format!(
            "expected {magic}, found {m}"
        )));
    }
    let width: usize = read_token(r)?
        .parse()
        .map_err(|_| ImageIoError::BadHeader("bad width".into()))?;
    let height: usize = read_token(r)?
        .parse()
        .map_err(|_| ImageIoError::BadHeader("bad height".into()))?;
    let maxval: usize = read_token(r)?
        .parse()
        .map_err(|_| ImageIoError::BadHeader("bad maxval".into()))?;
    if maxval != 255 {
        return Err(ImageIoError::BadHeader(format!(
            "only maxval 255 supported, found {maxval}"
        )));
    }
    Ok((width, height))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, ImageIoError> {
    let mut r = BufReader::new(File::open(path)?);
    let (width, height) = read_netpbm_header(&mut r, "P5")?;
    let mut pixels = vec![0u8; width * height];
    r.read_exact(&mut pixels)?;
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}

pub fn read_ppm(path: &Path) -> Result<RgbImage, ImageIoError> {
    let mut r = BufReader::new(File::open(path)?);
    let (width, height) = read_netpbm_header(&mut r, "P6")?;
    let mut pixels = vec![0u8; width * height * 3];
    r.read_exact(&mut pixels)?;
    Ok(RgbImage {
        width,
        height,
        pixels,
    })
}

pub fn write_png_gray(path: &Path, img: &GrayImage) -> Result<(), ImageIoError> {
    let buf = image::GrayImage::from_raw(img.width as u32, img.height as u32, img.pixels.clone())
        .expect("pixel buffer matches dimensions");
    buf.save(path)?;
    Ok(())
}

pub fn write_png_rgb(path: &Path, img: &RgbImage) -> Result<(), ImageIoError> {
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.pixels.clone())
        .expect("pixel buffer matches dimensions");
    buf.save(path)?;
    Ok(())
}

/// Loads a grayscale image by extension (`pgm` or `png`); color inputs are
/// reduced to their blue channel, which carries the detection signal in
/// compressed RGB frames.
pub fn load_gray(path: &Path) -> Result<GrayImage, ImageIoError> {
    match extension(path)?.as_str() {
        "pgm" => read_pgm(path),
        "ppm" => Ok(read_ppm(path)?.channel(2)),
        "png" => {
            let img = image::open(path)?;
            match img {
                image::DynamicImage::ImageLuma8(g) => Ok(GrayImage {
                    width: g.width() as usize,
                    height: g.height() as usize,
                    pixels: g.into_raw(),
                }),
                other => {
                    let rgb = other.to_rgb8();
                    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
                    let img = RgbImage {
                        width: w,
                        height: h,
                        pixels: rgb.into_raw(),
                    };
                    Ok(img.channel(2))
                }
            }
        }
        ext => Err(ImageIoError::UnsupportedExtension(ext.to_string())),
    }
}

/// Loads an RGB image by extension (`ppm` or `png`).
pub fn load_rgb(path: &Path) -> Result<RgbImage, ImageIoError> {
    match extension(path)?.as_str() {
        "ppm" => read_ppm(path),
        "png" => {
            let rgb = image::open(path)?.to_rgb8();
            Ok(RgbImage {
                width: rgb.width() as usize,
                height: rgb.height() as usize,
                pixels: rgb.into_raw(),
            })
        }
        ext => Err(ImageIoError::UnsupportedExtension(ext.to_string())),
    }
}

/// Writes a grayscale image, picking the format from the extension.
pub fn save_gray(path: &Path, img: &GrayImage) -> Result<(), ImageIoError> {
    match extension(path)?.as_str() {
        "pgm" => write_pgm(path, img),
        "png" => write_png_gray(path, img),
        ext => Err(ImageIoError::UnsupportedExtension(ext.to_string())),
    }
}

/// Writes an RGB image, picking the format from the extension.
pub fn save_rgb(path: &Path, img: &RgbImage) -> Result<(), ImageIoError> {
    match extension(path)?.as_str() {
        "ppm" => write_ppm(path, img),
        "png" => write_png_rgb(path, img),
        ext => Err(ImageIoError::UnsupportedExtension(ext.to_string())),
    }
}

fn extension(path: &Path) -> Result<String, ImageIoError> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .ok_or_else(|| ImageIoError::UnsupportedExtension(path.display().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample_gray() -> GrayImage {
        let mut img = GrayImage::new(5, 3);
        for (i, p) in img.pixels.iter_mut().enumerate() {
            *p = (i * 17 % 256) as u8;
        }
        img
    }

    fn sample_rgb() -> RgbImage {
        let mut img = RgbImage::new(4, 2);
        for (i, p) in img.pixels.iter_mut().enumerate() {
            *p = (i * 31 % 256) as u8;
        }
        img
    }

    #[test]
    fn pgm_roundtrip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let img = sample_gray();
        write_pgm(&path, &img).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), img);
    }

    #[test]
    fn ppm_roundtrip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.ppm");
        let img = sample_rgb();
        write_ppm(&path, &img).unwrap();
        assert_eq!(read_ppm(&path).unwrap(), img);
    }

    #[test]
    fn png_roundtrip_is_lossless() {
        let dir = tempdir().unwrap();
        let gpath = dir.path().join("g.png");
        let g = sample_gray();
        save_gray(&gpath, &g).unwrap();
        assert_eq!(load_gray(&gpath).unwrap(), g);

        let cpath = dir.path().join("c.png");
        let c = sample_rgb();
        save_rgb(&cpath, &c).unwrap();
        assert_eq!(load_rgb(&cpath).unwrap(), c);
    }

    #[test]
    fn header_comments_are_skipped() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        let mut bytes = b"P5\n# a comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 9]);
        std::fs::write(&path, bytes).unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.pixels, vec![7, 9]);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, b"P6\n1 1\n255\nxxx").unwrap();
        assert!(matches!(read_pgm(&path), Err(ImageIoError::BadHeader(_))));
    }

    #[test]
    fn unknown_extension_is_rejected() {
        let p = Path::new("/tmp/whatever.bmp");
        assert!(matches!(
            save_gray(p, &sample_gray()),
            Err(ImageIoError::UnsupportedExtension(_))
        ));
    }
}
