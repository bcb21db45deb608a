//! Image files, sidecar metadata, per-swatch CSV and contour grids.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::counting::SwatchMeasurement;
use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::spectrum::Spectrum2D;
use crate::weave::{BasicShape, Canvas, DegradationSpec, WeavePattern};

/// Rec. 709 luma weights.
pub const LUMINANCE: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// Contents of the JSON file stored next to an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetadata {
    /// px/cm
    pub resolution: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisRecord>,
}

/// Ground truth of a synthesized image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRecord {
    pub pattern: WeavePattern,
    pub shape: BasicShape,
    pub canvas: Canvas,
    pub degradation: DegradationSpec,
    /// Stored value `v` maps back to `offset + scale·v`.
    pub intensity: IntensityMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityMap {
    pub offset: f64,
    pub scale: f64,
}

/// `scan.png` → `scan.png.meta.json`.
pub fn sidecar_path(image: &Path) -> PathBuf {
    let mut name = image.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn read_metadata(path: &Path) -> Result<ImageMetadata> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_metadata(path: &Path, meta: &ImageMetadata) -> Result<()> {
    let mut text = serde_json::to_string_pretty(meta).map_err(|e| Error::Serialization(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a PGM or PNG image with intensities in `[0, 1]`.
///
/// An explicit `resolution` wins over the sidecar; without either the load
/// fails.
pub fn load_image(path: &Path, resolution: Option<f64>) -> Result<ImageGrid> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let resolution = match resolution {
        Some(r) => r,
        None => {
            let sidecar = sidecar_path(path);
            if !sidecar.is_file() {
                return Err(Error::MissingResolution { path: path.to_path_buf() });
            }
            read_metadata(&sidecar)?.resolution
        }
    };
    let (width, height, pixels) = if bytes.starts_with(b"\x89PNG") {
        decode_png(path, &bytes)?
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        decode_pgm(path, &bytes)?
    } else {
        return Err(Error::format(path, "not a PGM or PNG file"));
    };
    ImageGrid::new(width, height, pixels, resolution, path.display().to_string()).map_err(|e| match e {
        Error::InvalidParameter(m) => Error::format(path, m),
        other => other,
    })
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let bad = |e: png::DecodingError| Error::format(path, e.to_string());
    let mut decoder = png::Decoder::new(bytes);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(bad)?;
    if reader.info().animation_control.is_some_and(|a| a.num_frames > 1) {
        return Err(Error::MultiFrame { path: path.to_path_buf() });
    }
    let mut buf = vec![0; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf).map_err(bad)?;
    let (width, height) = (frame.width as usize, frame.height as usize);
    let wide = frame.bit_depth == png::BitDepth::Sixteen;
    let samples: Vec<f64> = if wide {
        buf[..frame.buffer_size()]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0)
            .collect()
    } else {
        buf[..frame.buffer_size()].iter().map(|&b| b as f64 / 255.0).collect()
    };
    let channels = frame.color_type.samples();
    let stride = frame.line_size / if wide { 2 } else { 1 };
    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        let row = &samples[y * stride..y * stride + width * channels];
        for px in row.chunks_exact(channels) {
            pixels.push(match frame.color_type {
                png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => px[0],
                png::ColorType::Rgb | png::ColorType::Rgba => {
                    LUMINANCE[0] * px[0] + LUMINANCE[1] * px[1] + LUMINANCE[2] * px[2]
                }
                png::ColorType::Indexed => return Err(Error::format(path, "unexpanded palette")),
            });
        }
    }
    Ok((width, height, pixels))
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn next(&mut self) -> Option<&'a [u8]> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, path: &Path, what: &str) -> Result<usize> {
        self.next()
            .and_then(|t| std::str::from_utf8(t).ok()?.parse().ok())
            .ok_or_else(|| Error::format(path, format!("bad or missing {what}")))
    }
}

fn decode_pgm(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let mut t = Tokens { bytes, pos: 0 };
    let binary = t.next() == Some(b"P5");
    let width = t.number(path, "width")?;
    let height = t.number(path, "height")?;
    let maxval = t.number(path, "maxval")?;
    if !(1..=65535).contains(&maxval) {
        return Err(Error::format(path, format!("maxval {maxval} out of range")));
    }
    let count = width * height;
    let scale = maxval as f64;
    let pixels = if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = t.pos + 1;
        let size = if maxval > 255 { 2 } else { 1 };
        let end = start + count * size;
        if end > bytes.len() {
            return Err(Error::format(path, "raster is truncated"));
        }
        t.pos = end;
        if size == 1 {
            bytes[start..end].iter().map(|&b| b as f64 / scale).collect()
        } else {
            bytes[start..end]
                .chunks_exact(2)
                .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / scale)
                .collect()
        }
    } else {
        (0..count)
            .map(|_| t.number(path, "sample").map(|v| v as f64 / scale))
            .collect::<Result<Vec<_>>>()?
    };
    if pixels.iter().any(|&v| v > 1.0) {
        return Err(Error::format(path, "sample exceeds maxval"));
    }
    t.skip_space();
    if t.pos < bytes.len() {
        return Err(Error::MultiFrame { path: path.to_path_buf() });
    }
    Ok((width, height, pixels))
}

/// Writes a 16-bit grayscale PNG or binary PGM, chosen by extension,
/// stretching the pixel range over the full scale.
pub fn save_image(image: &ImageGrid, path: &Path) -> Result<IntensityMap> {
    let (lo, hi) = image
        .pixels()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let scale = if hi > lo { hi - lo } else { 1.0 };
    let levels: Vec<u16> = image
        .pixels()
        .iter()
        .map(|&v| ((v - lo) / scale * 65535.0).round() as u16)
        .collect();
    let raster: Vec<u8> = levels.iter().flat_map(|v| v.to_be_bytes()).collect();
    let (w, h) = (image.width(), image.height());
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => {
            let mut encoder = png::Encoder::new(&mut out, w as u32, h as u32);
            encoder.set_color(png::ColorType::Grayscale);
            encoder.set_depth(png::BitDepth::Sixteen);
            let mut writer = encoder
                .write_header()
                .map_err(|e| Error::format(path, e.to_string()))?;
            writer
                .write_image_data(&raster)
                .map_err(|e| Error::format(path, e.to_string()))?;
        }
        Some("pgm") => {
            write!(out, "P5\n{w} {h}\n65535\n").map_err(|e| Error::io(path, e))?;
            out.write_all(&raster).map_err(|e| Error::io(path, e))?;
        }
        _ => return Err(Error::format(path, "output must end in .png or .pgm")),
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(IntensityMap {
        offset: lo,
        scale: scale / 65535.0,
    })
}

#[derive(Serialize)]
struct SwatchRow {
    x_px: f64,
    y_px: f64,
    f_v: Option<f64>,
    f_h: Option<f64>,
    angle_v: Option<f64>,
    angle_h: Option<f64>,
    confidence: f64,
}

/// One row per swatch; missing readings are empty cells.
pub fn write_swatch_csv(path: &Path, maps: &[SwatchMeasurement]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for m in maps {
        w.serialize(SwatchRow {
            x_px: m.position.x,
            y_px: m.position.y,
            f_v: m.f_v,
            f_h: m.f_h,
            angle_v: m.angle_v,
            angle_h: m.angle_h,
            confidence: m.confidence,
        })
        .map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Plain-text matrix of the spectrum for external contour plotting.
///
/// The first row holds `f_x` and the first column `f_y` (threads/cm); the
/// corner cell is `nan`. Row `i + 1` is `f_y = axis[i]`.
pub fn write_contour(path: &Path, psd: &Spectrum2D) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let axis = psd.freq_axis();
    let n = psd.n_dft();
    let io = |e| Error::io(path, e);
    write!(out, "nan").map_err(io)?;
    for f in &axis {
        write!(out, " {f}").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for (iy, fy) in axis.iter().enumerate() {
        write!(out, "{fy}").map_err(io)?;
        for v in &psd.values()[iy * n..(iy + 1) * n] {
            write!(out, " {v}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a grid written by [`write_contour`] back as `(f_x, f_y, values)`.
pub fn read_contour(path: &Path) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::format(path, e.to_string()));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format(path, "empty contour file"))?;
    let fx = header.split_whitespace().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
    let (mut fy, mut values) = (Vec::new(), Vec::new());
    for line in lines {
        let mut cells = line.split_whitespace();
        let Some(first) = cells.next() else { continue };
        fy.push(parse(first)?);
        let row = cells.map(parse).collect::<Result<Vec<_>>>()?;
        if row.len() != fx.len() {
            return Err(Error::format(path, format!("row {} has {} values", fy.len(), row.len())));
        }
        values.extend(row);
    }
    Ok((fx, fy, values))
}
