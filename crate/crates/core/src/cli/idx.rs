//! IDX tensor files: big-endian magic, big-endian u32 dimensions, raw u8 payload.

use thiserror::Error;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated file: need {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}

/// Images as stored: `count` row-major `rows × cols` u8 grids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }
}

fn read_header(bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>, IdxError> {
    let header = 4 * (1 + dims);
    if bytes.len() < 4 {
        return Err(IdxError::TruncatedFile {
            expected: header,
            actual: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let found = word(0);
    if found != magic {
        return Err(IdxError::BadMagic { expected: magic, found });
    }
    if bytes.len() < header {
        return Err(IdxError::TruncatedFile {
            expected: header,
            actual: bytes.len(),
        });
    }
    let sizes: Vec<usize> = (1..=dims).map(|i| word(i) as usize).collect();
    let expected = header + sizes.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(IdxError::TruncatedFile {
            expected,
            actual: bytes.len(),
        });
    }
    Ok(sizes)
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages, IdxError> {
    let dims = read_header(bytes, IMAGES_MAGIC, 3)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..16 + count * rows * cols].to_vec(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let dims = read_header(bytes, LABELS_MAGIC, 1)?;
    Ok(bytes[8..8 + dims[0]].to_vec())
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for word in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Parses an image/label pair, checking that the counts agree.
pub fn parse_pair(images: &[u8], labels: &[u8]) -> Result<(IdxImages, Vec<u8>), IdxError> {
    let images = parse_images(images)?;
    let labels = parse_labels(labels)?;
    if images.count != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    Ok((images, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> IdxImages {
        IdxImages {
            count: 2,
            rows: 2,
            cols: 3,
            pixels: vec![0, 1, 2, 3, 4, 5, 250, 251, 252, 253, 254, 255],
        }
    }

    #[test]
    fn round_trip() {
        let bytes = encode_images(&sample());
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        assert_eq!(parse_images(&bytes).unwrap(), sample());
        assert_eq!(encode_images(&parse_images(&bytes).unwrap()), bytes);
        let labels = encode_labels(&[7, 1]);
        assert_eq!(parse_labels(&labels).unwrap(), vec![7, 1]);
    }

    #[test]
    fn malformed_inputs() {
        let mut bytes = encode_images(&sample());
        bytes[3] = 1;
        assert_eq!(
            parse_images(&bytes),
            Err(IdxError::BadMagic {
                expected: IMAGES_MAGIC,
                found: 0x801
            })
        );
        let bytes = encode_images(&sample());
        assert_eq!(
            parse_images(&bytes[..bytes.len() - 1]),
            Err(IdxError::TruncatedFile { expected: 28, actual: 27 })
        );
        assert!(matches!(parse_labels(&[0, 0]), Err(IdxError::TruncatedFile { .. })));
        assert_eq!(
            parse_pair(&encode_images(&sample()), &encode_labels(&[1, 2, 3])),
            Err(IdxError::CountMismatch { images: 2, labels: 3 })
        );
    }
}
