//! Image rasters, PNG ingestion and the per-coordinate difference.
//!
//! Pixels are stored as `f64` on the 8-bit scale `[0, 255]`, row-major in
//! `(h, w, c)` order. Norms computed on this scale convert to the unit scale
//! by dividing L1, L2 and L∞ by 255; L0 is scale-free.

use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAX_INTENSITY: f64 = 255.0;

/// An immutable `H × W × C` raster of intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if values.len() != expected {
            return Err(Error::InvalidImage(format!(
                "expected {expected} values for {height}x{width}x{channels}, got {}",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > MAX_INTENSITY)
        {
            return Err(Error::InvalidImage(format!(
                "value {v} at index {i} outside [0, 255]"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    /// Builds an image by clamping every value into `[0, 255]`.
    pub fn from_clipped(
        height: usize,
        width: usize,
        channels: usize,
        mut values: Vec<f64>,
    ) -> Result<Self> {
        for v in &mut values {
            *v = v.clamp(0.0, MAX_INTENSITY);
        }
        Self::new(height, width, channels, values)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.values[self.index(row, col, channel)]
    }

    /// Copies one channel out as a row-major `H × W` plane.
    pub fn plane(&self, channel: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Rounds every value to the nearest integer, as an 8-bit encode would.
    pub fn quantized(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| v.round()).collect(),
            ..self.clone()
        }
    }
}

/// An original image and its perturbed counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub pair_id: String,
    original: ImageTensor,
    adversarial: ImageTensor,
}

impl ImagePair {
    pub fn new(
        pair_id: impl Into<String>,
        original: ImageTensor,
        adversarial: ImageTensor,
    ) -> Result<Self> {
        if original.shape() != adversarial.shape() {
            return Err(Error::ShapeMismatch {
                left: original.shape(),
                right: adversarial.shape(),
            });
        }
        Ok(Self {
            pair_id: pair_id.into(),
            original,
            adversarial,
        })
    }

    pub fn original(&self) -> &ImageTensor {
        &self.original
    }

    pub fn adversarial(&self) -> &ImageTensor {
        &self.adversarial
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.original.shape()
    }

    /// The same pair with original and adversarial exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pair_id: self.pair_id.clone(),
            original: self.adversarial.clone(),
            adversarial: self.original.clone(),
        }
    }
}

/// Signed per-coordinate difference `adversarial - original`.
pub fn diff(pair: &ImagePair) -> Result<Vec<f64>> {
    diff_images(pair.original(), pair.adversarial())
}

pub(crate) fn diff_images(original: &ImageTensor, adversarial: &ImageTensor) -> Result<Vec<f64>> {
    if original.shape() != adversarial.shape() {
        return Err(Error::ShapeMismatch {
            left: original.shape(),
            right: adversarial.shape(),
        });
    }
    Ok(adversarial
        .values()
        .iter()
        .zip(original.values())
        .map(|(a, o)| a - o)
        .collect())
}

/// Decodes an 8-bit grayscale or RGB PNG.
pub fn load_png(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn decode_png(bytes: &[u8]) -> Result<ImageTensor> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(e.to_string()))?;
    let info = reader.info();
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(Error::Format(format!(
                "color type {other:?} not supported (grayscale or RGB only)"
            )))
        }
    };
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "bit depth {:?} not supported (8 only)",
            info.bit_depth
        )));
    }
    if info.trns.is_some() {
        return Err(Error::Format("transparency chunk not supported".into()));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(e.to_string()))?;
    let row_len = width * channels;
    let mut values = Vec::with_capacity(height * row_len);
    for row in buf[..frame.buffer_size()].chunks(frame.line_size).take(height) {
        values.extend(row[..row_len].iter().map(|&b| f64::from(b)));
    }
    ImageTensor::new(height, width, channels, values)
}

/// Encodes an image as an 8-bit PNG, rounding values to the nearest integer.
pub fn encode_png(image: &ImageTensor) -> Result<Vec<u8>> {
    let color = match image.channels() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => {
            return Err(Error::Format(format!(
                "cannot encode {c}-channel image as PNG"
            )))
        }
    };
    let data: Vec<u8> = image.values().iter().map(|v| v.round() as u8).collect();
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(
            BufWriter::new(&mut out),
            image.width() as u32,
            image.height() as u32,
        );
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Format(e.to_string()))?;
        writer
            .write_image_data(&data)
            .map_err(|e| Error::Format(e.to_string()))?;
        writer.finish().map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(out)
}

pub fn save_png(image: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(image)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
