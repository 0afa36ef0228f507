//! Binary Netpbm images: PGM (`P5`) and PPM (`P6`), maxval 255 only.

use std::path::Path;

use loadnet_tensor::Tensor;

use super::write_atomic;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pnm {
    pub width: usize,
    pub height: usize,
    /// 1 for PGM, 3 for PPM.
    pub channels: usize,
    /// Interleaved samples, row-major.
    pub pixels: Vec<u8>,
}

impl Pnm {
    pub fn gray(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        Self {
            width,
            height,
            channels: 1,
            pixels,
        }
    }

    pub fn rgb(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        debug_assert_eq!(pixels.len(), width * height * 3);
        Self {
            width,
            height,
            channels: 3,
            pixels,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut pos = 0;
        let mut fields = [0usize; 3];
        let magic = bytes.get(..2).ok_or_else(|| Error::format(path, "empty image file"))?;
        let channels = match magic {
            b"P5" => 1,
            b"P6" => 3,
            _ => return Err(Error::format(path, "not a binary PGM/PPM file")),
        };
        pos += 2;
        for field in &mut fields {
            // whitespace and `#` comments may separate header fields
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|b| *b != b'\n') {
                            pos += 1;
                        }
                    }
                    _ => break,
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            *field = std::str::from_utf8(&bytes[start..pos])
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::format(path, "malformed image header"))?;
        }
        let [width, height, maxval] = fields;
        if maxval != 255 {
            return Err(Error::format(path, format!("unsupported maxval {maxval} (only 255)")));
        }
        if width == 0 || height == 0 {
            return Err(Error::format(path, "image has zero extent"));
        }
        if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(Error::format(path, "malformed image header"));
        }
        pos += 1;
        let n = width * height * channels;
        if bytes.len() - pos != n {
            return Err(Error::format(
                path,
                format!("expected {n} pixel bytes, found {}", bytes.len() - pos),
            ));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels: bytes[pos..].to_vec(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }

    /// Planar `[C, H, W]` tensor with values in `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        let (c, plane) = (self.channels, self.width * self.height);
        let data = (0..c * plane)
            .map(|i| self.pixels[(i % plane) * c + i / plane] as f32 / 255.0)
            .collect();
        Tensor::new(&[c, self.height, self.width], data).expect("extents are positive")
    }

    /// Quantizes a `[1 or 3, H, W]` tensor, clamping to `[0, 1]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [c, h, w] = t.dims() else {
            return Err(Error::Data(format!("image tensor must be [C, H, W], found {:?}", t.dims())));
        };
        let (c, h, w) = (*c, *h, *w);
        if c != 1 && c != 3 {
            return Err(Error::Data(format!("image tensor must have 1 or 3 channels, found {c}")));
        }
        let plane = h * w;
        let mut pixels = vec![0u8; c * plane];
        for (i, v) in t.data().iter().enumerate() {
            pixels[(i % plane) * c + i / plane] = quantize(*v);
        }
        Ok(Self {
            width: w,
            height: h,
            channels: c,
            pixels,
        })
    }
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let img = Pnm::rgb(2, 1, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(img.encode(), b"P6\n2 1\n255\n\x01\x02\x03\x04\x05\x06");
    }

    #[test]
    fn decode_accepts_comments() {
        let img = Pnm::decode(b"P5 # made by hand\n2 2 255\n\x00\x10\x20\x30", Path::new("x")).unwrap();
        assert_eq!((img.width, img.height, img.channels), (2, 2, 1));
        assert_eq!(img.pixels, vec![0, 16, 32, 48]);
    }

    #[test]
    fn rejects_other_maxval_and_short_payload() {
        let err = Pnm::decode(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00", Path::new("a.ppm")).unwrap_err();
        assert!(err.to_string().contains("maxval"), "{err}");
        assert!(Pnm::decode(b"P6\n1 1\n255\n\x00", Path::new("a.ppm")).is_err());
        assert!(Pnm::decode(b"P3\n1 1\n255\n0 0 0", Path::new("a.ppm")).is_err());
    }

    #[test]
    fn tensor_conversion_is_planar() {
        let img = Pnm::rgb(2, 1, vec![255, 0, 0, 0, 0, 255]);
        let t = img.to_tensor();
        assert_eq!(t.dims(), &[3, 1, 2]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(Pnm::from_tensor(&t).unwrap(), img);
    }
}
