//! Minimal PNG reading and writing for fixtures and output validation.

use std::io::Read;
use std::path::Path;

pub const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: file is empty")]
    Empty(String),
    #[error("{0}: not a PNG (bad signature)")]
    BadSignature(String),
    #[error("{0}: malformed IHDR chunk")]
    BadHeader(String),
    #[error("{0}: zero image dimensions")]
    ZeroSize(String),
    #[error("{path}: {reason}")]
    Encode { path: String, reason: String },
}

/// Width and height from the IHDR chunk, after checking the signature.
pub fn png_dimensions(path: impl AsRef<Path>) -> Result<(u32, u32), ImageError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut file = std::fs::File::open(path).map_err(|e| ImageError::Io {
        path: name.clone(),
        source: e,
    })?;
    let mut head = Vec::with_capacity(24);
    file.by_ref()
        .take(24)
        .read_to_end(&mut head)
        .map_err(|e| ImageError::Io {
            path: name.clone(),
            source: e,
        })?;
    if head.is_empty() {
        return Err(ImageError::Empty(name));
    }
    if head.len() < 8 || head[..8] != PNG_SIGNATURE {
        return Err(ImageError::BadSignature(name));
    }
    if head.len() < 24 || &head[12..16] != b"IHDR" {
        return Err(ImageError::BadHeader(name));
    }
    let w = u32::from_be_bytes([head[16], head[17], head[18], head[19]]);
    let h = u32::from_be_bytes([head[20], head[21], head[22], head[23]]);
    if w == 0 || h == 0 {
        return Err(ImageError::ZeroSize(name));
    }
    Ok((w, h))
}

/// Checks signature and nonzero IHDR dimensions.
pub fn validate_png(path: impl AsRef<Path>) -> Result<(u32, u32), ImageError> {
    png_dimensions(path)
}

/// Any supported image: PNG is checked structurally, JPEG by magic bytes.
pub fn validate_image(path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| ImageError::Io {
        path: name.clone(),
        source: e,
    })?;
    if bytes.is_empty() {
        return Err(ImageError::Empty(name));
    }
    if bytes.starts_with(&[0xff, 0xd8, 0xff]) {
        return Ok(());
    }
    png_dimensions(path).map(|_| ())
}

/// Writes an 8-bit RGB PNG.
pub fn write_rgb_png(
    path: impl AsRef<Path>,
    width: u32,
    height: u32,
    rgb: &[u8],
) -> Result<(), ImageError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    assert_eq!(rgb.len(), width as usize * height as usize * 3);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| ImageError::Io {
            path: name.clone(),
            source: e,
        })?;
    }
    let file = std::fs::File::create(path).map_err(|e| ImageError::Io {
        path: name.clone(),
        source: e,
    })?;
    let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), width, height);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let encode_err = |e: png::EncodingError| ImageError::Encode {
        path: name.clone(),
        reason: e.to_string(),
    };
    let mut writer = encoder.write_header().map_err(encode_err)?;
    writer.write_image_data(rgb).map_err(encode_err)?;
    writer.finish().map_err(encode_err)
}

/// A flat-coloured image, used for fixture inputs.
pub fn write_solid_png(
    path: impl AsRef<Path>,
    width: u32,
    height: u32,
    colour: [u8; 3],
) -> Result<(), ImageError> {
    let rgb: Vec<u8> = std::iter::repeat_n(colour, width as usize * height as usize)
        .flatten()
        .collect();
    write_rgb_png(path, width, height, &rgb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn written_png_validates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        write_solid_png(&p, 7, 5, [10, 120, 30]).unwrap();
        assert_eq!(validate_png(&p).unwrap(), (7, 5));
        let decoder = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(&p).unwrap()));
        let reader = decoder.read_info().unwrap();
        assert_eq!(reader.info().width, 7);
    }

    #[test]
    fn empty_and_garbage_files_fail() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("e.png");
        std::fs::write(&empty, b"").unwrap();
        assert!(matches!(validate_png(&empty), Err(ImageError::Empty(_))));
        let junk = dir.path().join("j.png");
        std::fs::write(&junk, b"not an image at all, really").unwrap();
        assert!(matches!(
            validate_png(&junk),
            Err(ImageError::BadSignature(_))
        ));
    }
}
