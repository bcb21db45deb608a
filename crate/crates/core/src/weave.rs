//! Weave pattern model and ground-truth image synthesis.
//!
//! A weave is a basic thread shape repeated over a lattice with basis
//! `a = [m·d_v, 0]`, `b = [n·d_v, p·d_h]`. The image is the sum of shifted
//! copies of the shape; its spectrum therefore lives on the reciprocal
//! lattice, weighted by the spectrum of the shape.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::lattice::{lattice_points, Basis2D, Rect, Vec2};

/// Integer weave structure plus thread spacings (cm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeavePattern {
    pub m: u32,
    pub n: u32,
    pub p: u32,
    pub d_v: f64,
    pub d_h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeaveKind {
    Plain,
    SimpleTwill,
    Other,
}

impl WeavePattern {
    pub fn new(m: u32, n: u32, p: u32, d_v: f64, d_h: f64) -> Result<Self> {
        let pattern = Self { m, n, p, d_v, d_h };
        pattern.validate()?;
        Ok(pattern)
    }

    /// Plain weave from thread densities in threads/cm.
    pub fn plain(f_v: f64, f_h: f64) -> Result<Self> {
        Self::new(2, 1, 1, 1.0 / f_v, 1.0 / f_h)
    }

    /// Twill (`p = 1`) from thread densities in threads/cm.
    pub fn twill(m: u32, n: u32, f_v: f64, f_h: f64) -> Result<Self> {
        Self::new(m, n, 1, 1.0 / f_v, 1.0 / f_h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.p == 0 {
            return Err(Error::InvalidPattern(format!(
                "m and p must be positive (m={}, p={})",
                self.m, self.p
            )));
        }
        if self.n >= self.m {
            return Err(Error::InvalidPattern(format!(
                "n must satisfy 0 <= n < m (m={}, n={})",
                self.m, self.n
            )));
        }
        if !(self.d_v > 0.0 && self.d_h > 0.0 && self.d_v.is_finite() && self.d_h.is_finite()) {
            return Err(Error::InvalidPattern(format!(
                "thread spacings must be positive (d_v={}, d_h={})",
                self.d_v, self.d_h
            )));
        }
        Ok(())
    }

    /// Vertical thread density, threads/cm.
    pub fn f_v(&self) -> f64 {
        1.0 / self.d_v
    }

    /// Horizontal thread density, threads/cm.
    pub fn f_h(&self) -> f64 {
        1.0 / self.d_h
    }

    pub fn kind(&self) -> WeaveKind {
        match (self.m, self.n, self.p) {
            (2, 1, 1) => WeaveKind::Plain,
            (m, n, 1) if m > 2 && (n == 1 || n == m - 1) => WeaveKind::SimpleTwill,
            _ => WeaveKind::Other,
        }
    }
}

/// Lattice basis of a weave: `a = [m·d_v, 0]`, `b = [n·d_v, p·d_h]`.
pub fn pattern_basis(pattern: &WeavePattern) -> Result<Basis2D> {
    pattern.validate()?;
    Basis2D::new(
        Vec2::new(pattern.m as f64 * pattern.d_v, 0.0),
        Vec2::new(pattern.n as f64 * pattern.d_v, pattern.p as f64 * pattern.d_h),
    )
}

/// Right triangle with its vertices and the number of lattice segments
/// along the hypotenuse and the segmented leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    /// `[right-angle vertex, end of the single-segment leg, end of the segmented leg]`.
    pub vertices: [Vec2; 3],
    pub hypotenuse_segments: u32,
    pub leg_segments: u32,
}

impl Triangle {
    pub fn single_leg(&self) -> Vec2 {
        self.vertices[1] - self.vertices[0]
    }

    pub fn segmented_leg(&self) -> Vec2 {
        self.vertices[2] - self.vertices[0]
    }

    pub fn hypotenuse(&self) -> Vec2 {
        self.vertices[2] - self.vertices[1]
    }
}

/// Frequency-domain triangle of a weave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpectralTriangle {
    Right(Triangle),
    /// `n = 0`: the reciprocal lattice is rectangular and only axis peaks
    /// carry the densities.
    Degenerate { f_v: f64, f_h: f64 },
}

/// The spectral triangle: right angle at DC, a leg of length `f_v` along
/// the horizontal-frequency axis, a leg of `n` segments of length `f_h/p`
/// along the vertical-frequency axis and `m` segments on the hypotenuse.
pub fn spectral_triangle(pattern: &WeavePattern) -> Result<SpectralTriangle> {
    pattern.validate()?;
    if pattern.n == 0 {
        return Ok(SpectralTriangle::Degenerate {
            f_v: pattern.f_v(),
            f_h: pattern.f_h(),
        });
    }
    let l1 = pattern.f_v();
    let l2 = pattern.n as f64 * pattern.f_h() / pattern.p as f64;
    Ok(SpectralTriangle::Right(Triangle {
        vertices: [Vec2::ZERO, Vec2::new(l1, 0.0), Vec2::new(0.0, l2)],
        hypotenuse_segments: pattern.m,
        leg_segments: pattern.n,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Rectangle,
    /// Rectangle whose outer edges fall off with a half cosine.
    RaisedCosineRectangle,
}

/// Fraction of each side occupied by the cosine edge of a
/// [`ShapeKind::RaisedCosineRectangle`] (0.5 = outer quarter on each end).
pub const RAISED_COSINE_TAPER: f64 = 0.5;

/// Sub-samples per pixel side when rendering rotated shapes.
const SUPERSAMPLE: usize = 4;

/// Basic thread shape, centred on its lattice point with the long side horizontal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasicShape {
    pub kind: ShapeKind,
    /// cm, along x
    pub width: f64,
    /// cm, along y
    pub height: f64,
    pub amplitude: f64,
}

impl BasicShape {
    /// Rectangle covering 90% of the `m` vertical and `p` horizontal threads
    /// of one repetition cell.
    pub fn default_for(pattern: &WeavePattern) -> Self {
        Self {
            kind: ShapeKind::Rectangle,
            width: 0.9 * pattern.m as f64 * pattern.d_v,
            height: 0.9 * pattern.p as f64 * pattern.d_h,
            amplitude: 1.0,
        }
    }

    pub fn with_kind(mut self, kind: ShapeKind) -> Self {
        self.kind = kind;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "shape extent must be positive ({} x {})",
                self.width, self.height
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidParameter("shape amplitude must be finite".into()));
        }
        Ok(())
    }

    /// Value at offset `u` (cm) from the shape centre, in shape coordinates.
    pub fn eval(&self, u: Vec2) -> f64 {
        self.amplitude * self.profile(u.x, 0.5 * self.width) * self.profile(u.y, 0.5 * self.height)
    }

    fn profile(&self, s: f64, half: f64) -> f64 {
        let d = s.abs();
        if d > half {
            return 0.0;
        }
        match self.kind {
            ShapeKind::Rectangle => 1.0,
            ShapeKind::RaisedCosineRectangle => {
                let edge = RAISED_COSINE_TAPER * half;
                let flat = half - edge;
                if d <= flat {
                    1.0
                } else {
                    0.5 * (1.0 + (PI * (d - flat) / edge).cos())
                }
            }
        }
    }

    /// `∫_0^d profile` for `d ≥ 0`.
    fn half_integral(&self, d: f64, half: f64) -> f64 {
        let d = d.min(half);
        match self.kind {
            ShapeKind::Rectangle => d,
            ShapeKind::RaisedCosineRectangle => {
                let edge = RAISED_COSINE_TAPER * half;
                let flat = half - edge;
                if d <= flat {
                    d
                } else {
                    let t = d - flat;
                    flat + 0.5 * t + 0.5 * edge / PI * (PI * t / edge).sin()
                }
            }
        }
    }

    /// Mean of the 1-D profile over `[a, b]` (offsets from the centre, cm).
    fn interval_mean(&self, a: f64, b: f64, half: f64) -> f64 {
        let signed = |s: f64| s.signum() * self.half_integral(s.abs(), half);
        (signed(b) - signed(a)) / (b - a)
    }
}

/// Imperfections applied on top of the ideal weave, in this order:
/// lattice perturbations, rotation, pair merging, blur, stripe noise,
/// white noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationSpec {
    /// Independent Gaussian displacement of every lattice point, cm.
    pub jitter_sigma_cm: f64,
    /// Relative std of each vertical-thread spacing; offsets accumulate
    /// across the canvas so local density drifts.
    pub spacing_jitter_v: f64,
    /// Same for horizontal threads.
    pub spacing_jitter_h: f64,
    /// Relative std of an independent horizontal displacement of each
    /// vertical thread.
    pub thread_jitter_v: f64,
    /// Same for the vertical displacement of each horizontal thread.
    pub thread_jitter_h: f64,
    /// Log-normal sigma of a random gain shared by all shapes in one
    /// vertical thread column.
    pub column_gain_sigma: f64,
    /// Global rotation about the image centre, degrees counter-clockwise.
    pub rotation_deg: f64,
    /// Gaussian blur, pixels.
    pub blur_sigma_px: f64,
    /// Fuses adjacent vertical threads in pairs by a horizontal blur
    /// confined to each pair, with this sigma as a fraction of `d_v`.
    pub merge_sigma_v: f64,
    /// Side of the square patches that each draw their own pairing parity, cm.
    pub merge_patch_cm: f64,
    /// Std of a random offset added to each pixel row.
    pub row_stripe_sigma: f64,
    /// Std of additive white noise.
    pub noise_sigma: f64,
    /// When set, overrides `noise_sigma` so that signal variance over noise
    /// variance equals this many dB.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for DegradationSpec {
    fn default() -> Self {
        Self {
            jitter_sigma_cm: 0.0,
            spacing_jitter_v: 0.0,
            spacing_jitter_h: 0.0,
            thread_jitter_v: 0.0,
            thread_jitter_h: 0.0,
            column_gain_sigma: 0.0,
            rotation_deg: 0.0,
            blur_sigma_px: 0.0,
            merge_sigma_v: 0.0,
            merge_patch_cm: 1.0,
            row_stripe_sigma: 0.0,
            noise_sigma: 0.0,
            snr_db: None,
            seed: 0,
        }
    }
}

impl DegradationSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("jitter_sigma_cm", self.jitter_sigma_cm),
            ("spacing_jitter_v", self.spacing_jitter_v),
            ("spacing_jitter_h", self.spacing_jitter_h),
            ("thread_jitter_v", self.thread_jitter_v),
            ("thread_jitter_h", self.thread_jitter_h),
            ("column_gain_sigma", self.column_gain_sigma),
            ("blur_sigma_px", self.blur_sigma_px),
            ("merge_sigma_v", self.merge_sigma_v),
            ("row_stripe_sigma", self.row_stripe_sigma),
            ("noise_sigma", self.noise_sigma),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.merge_patch_cm > 0.0 && self.merge_patch_cm.is_finite()) {
            return Err(Error::InvalidParameter("merge patch must be positive".into()));
        }
        if !self.rotation_deg.is_finite() {
            return Err(Error::InvalidParameter("rotation must be finite".into()));
        }
        Ok(())
    }
}

/// Physical size and sampling of a synthesized raster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub width_cm: f64,
    pub height_cm: f64,
    /// px/cm
    pub resolution: f64,
}

impl Canvas {
    pub fn square(side_cm: f64, resolution: f64) -> Self {
        Self {
            width_cm: side_cm,
            height_cm: side_cm,
            resolution,
        }
    }

    pub fn width_px(&self) -> usize {
        (self.width_cm * self.resolution).round() as usize
    }

    pub fn height_px(&self) -> usize {
        (self.height_cm * self.resolution).round() as usize
    }
}

// Independent random streams so that enabling one degradation never
// changes the draws of another.
const STREAM_SPACING_V: u64 = 1;
const STREAM_SPACING_H: u64 = 2;
const STREAM_GAIN: u64 = 3;
const STREAM_JITTER: u64 = 4;
const STREAM_STRIPES: u64 = 5;
const STREAM_NOISE: u64 = 6;
const STREAM_THREAD_V: u64 = 7;
const STREAM_THREAD_H: u64 = 8;
const STREAM_MERGE: u64 = 9;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// Cumulative per-thread offsets, anchored at thread `0`, for thread
/// indices `lo..=hi`.
struct Drift {
    lo: i64,
    offsets: Vec<f64>,
}

impl Drift {
    fn new(lo: i64, hi: i64, step_sigma: f64, rng: &mut ChaCha8Rng) -> Self {
        let len = (hi - lo + 1).max(1) as usize;
        let mut offsets = vec![0.0; len];
        if step_sigma > 0.0 {
            let zero = (-lo).clamp(0, len as i64 - 1) as usize;
            let steps: Vec<f64> = (0..len).map(|_| step_sigma * normal(rng)).collect();
            for i in zero + 1..len {
                offsets[i] = offsets[i - 1] + steps[i];
            }
            for i in (0..zero).rev() {
                offsets[i] = offsets[i + 1] - steps[i];
            }
        }
        Self { lo, offsets }
    }

    fn at(&self, k: i64) -> f64 {
        let i = (k - self.lo).clamp(0, self.offsets.len() as i64 - 1) as usize;
        self.offsets[i]
    }
}

/// Renders `Σ_p shape(x - p)` over the weave lattice, averaged over each
/// pixel's area, then applies `degradation`.
///
/// Unrotated shapes are integrated exactly; rotated ones are averaged over a
/// regular sub-pixel grid.
pub fn synthesize_image(
    pattern: &WeavePattern,
    shape: &BasicShape,
    canvas: &Canvas,
    degradation: &DegradationSpec,
) -> Result<ImageGrid> {
    pattern.validate()?;
    shape.validate()?;
    degradation.validate()?;
    let res = canvas.resolution;
    if !(res > 0.0 && canvas.width_cm > 0.0 && canvas.height_cm > 0.0) {
        return Err(Error::InvalidParameter(
            "canvas size and resolution must be positive".into(),
        ));
    }
    let spacing_px = pattern.d_v.min(pattern.d_h) * res;
    if spacing_px < 2.0 {
        return Err(Error::Aliasing { spacing_px });
    }
    let (w, h) = (canvas.width_px(), canvas.height_px());
    if w < 2 || h < 2 {
        return Err(Error::InvalidParameter(format!("canvas of {w}x{h} px is too small")));
    }

    let basis = pattern_basis(pattern)?;
    let seed = degradation.seed;
    let center = Vec2::new(0.5 * w as f64 / res, 0.5 * h as f64 / res);
    let theta = degradation.rotation_deg.to_radians();

    // Lattice window: the image pulled back through the rotation, padded
    // by the shape extent and the expected displacement.
    let half_diag = 0.5 * canvas.width_cm.hypot(canvas.height_cm);
    let shape_reach = 0.5 * shape.width.hypot(shape.height);
    let n_cols = (2.0 * half_diag / pattern.d_v).ceil() + 2.0;
    let n_rows = (2.0 * half_diag / pattern.d_h).ceil() + 2.0;
    let drift_reach = 5.0
        * (degradation.spacing_jitter_v * pattern.d_v * n_cols.sqrt())
            .max(degradation.spacing_jitter_h * pattern.d_h * n_rows.sqrt());
    let thread_reach = 5.0
        * (degradation.thread_jitter_v * pattern.d_v).max(degradation.thread_jitter_h * pattern.d_h);
    let margin = shape_reach + 5.0 * degradation.jitter_sigma_cm + drift_reach + thread_reach + pattern.d_v.max(pattern.d_h);
    let reach = half_diag + margin;
    let window = Rect::new(center.x - reach, center.x + reach, center.y - reach, center.y + reach);
    let points = lattice_points(&basis, &window)?;

    let col_of = |x: f64| (x / pattern.d_v).round() as i64;
    let row_of = |y: f64| (y / pattern.d_h).round() as i64;
    let (col_lo, col_hi) = (col_of(window.x_min) - 1, col_of(window.x_max) + 1);
    let (row_lo, row_hi) = (row_of(window.y_min) - 1, row_of(window.y_max) + 1);
    let col_anchor = col_of(center.x);
    let row_anchor = row_of(center.y);

    let drift_v = Drift::new(
        col_lo - col_anchor,
        col_hi - col_anchor,
        degradation.spacing_jitter_v * pattern.d_v,
        &mut stream(seed, STREAM_SPACING_V),
    );
    let drift_h = Drift::new(
        row_lo - row_anchor,
        row_hi - row_anchor,
        degradation.spacing_jitter_h * pattern.d_h,
        &mut stream(seed, STREAM_SPACING_H),
    );
    let gains: Vec<f64> = {
        let mut rng = stream(seed, STREAM_GAIN);
        let s = degradation.column_gain_sigma;
        (col_lo..=col_hi)
            .map(|_| {
                if s > 0.0 {
                    (s * normal(&mut rng) - 0.5 * s * s).exp()
                } else {
                    1.0
                }
            })
            .collect()
    };
    let offsets = |lo: i64, hi: i64, sigma: f64, id: u64| -> Vec<f64> {
        let mut rng = stream(seed, id);
        (lo..=hi)
            .map(|_| if sigma > 0.0 { sigma * normal(&mut rng) } else { 0.0 })
            .collect()
    };
    let shift_v = offsets(col_lo, col_hi, degradation.thread_jitter_v * pattern.d_v, STREAM_THREAD_V);
    let shift_h = offsets(row_lo, row_hi, degradation.thread_jitter_h * pattern.d_h, STREAM_THREAD_H);
    let mut jitter_rng = stream(seed, STREAM_JITTER);

    let mut pixels = vec![0.0; w * h];
    let (sin_t, cos_t) = theta.sin_cos();
    let ext_x = 0.5 * (shape.width * cos_t.abs() + shape.height * sin_t.abs());
    let ext_y = 0.5 * (shape.width * sin_t.abs() + shape.height * cos_t.abs());

    for p in &points.points {
        let col = col_of(p.x);
        let row = row_of(p.y);
        let mut q = *p;
        q.x += drift_v.at(col - col_anchor);
        q.y += drift_h.at(row - row_anchor);
        q.x += shift_v[(col - col_lo).clamp(0, shift_v.len() as i64 - 1) as usize];
        q.y += shift_h[(row - row_lo).clamp(0, shift_h.len() as i64 - 1) as usize];
        if degradation.jitter_sigma_cm > 0.0 {
            q.x += degradation.jitter_sigma_cm * normal(&mut jitter_rng);
            q.y += degradation.jitter_sigma_cm * normal(&mut jitter_rng);
        }
        let gain = gains[(col - col_lo).clamp(0, gains.len() as i64 - 1) as usize];
        let q = center + (q - center).rotated(theta);

        let x0 = ((q.x - ext_x) * res).floor().max(0.0) as usize;
        let y0 = ((q.y - ext_y) * res).floor().max(0.0) as usize;
        let x1 = ((q.x + ext_x) * res).floor().min(w as f64 - 1.0);
        let y1 = ((q.y + ext_y) * res).floor().min(h as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        let (x1, y1) = (x1 as usize, y1 as usize);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        if theta == 0.0 {
            let (hw, hh) = (0.5 * shape.width, 0.5 * shape.height);
            let wx: Vec<f64> = (x0..=x1)
                .map(|px| shape.interval_mean(px as f64 / res - q.x, (px + 1) as f64 / res - q.x, hw))
                .collect();
            for py in y0..=y1 {
                let wy = shape.interval_mean(py as f64 / res - q.y, (py + 1) as f64 / res - q.y, hh);
                if wy == 0.0 {
                    continue;
                }
                let scale = gain * shape.amplitude * wy;
                let row_px = &mut pixels[py * w + x0..=py * w + x1];
                for (out, v) in row_px.iter_mut().zip(&wx) {
                    *out += scale * v;
                }
            }
        } else {
            for py in y0..=y1 {
                for px in x0..=x1 {
                    let mut acc = 0.0;
                    for sy in 0..SUPERSAMPLE {
                        let cy = (py as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64) / res;
                        for sx in 0..SUPERSAMPLE {
                            let cx = (px as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64) / res;
                            acc += shape.eval(Vec2::new(cx - q.x, cy - q.y).rotated(-theta));
                        }
                    }
                    pixels[py * w + px] += gain * acc / (SUPERSAMPLE * SUPERSAMPLE) as f64;
                }
            }
        }
    }

    if degradation.merge_sigma_v > 0.0 {
        merge_thread_pairs(
            &mut pixels,
            w,
            res,
            pattern.d_v,
            degradation.merge_sigma_v * pattern.d_v * res,
            degradation.merge_patch_cm,
            &mut stream(seed, STREAM_MERGE),
        );
    }

    if degradation.blur_sigma_px > 0.0 {
        gaussian_blur(&mut pixels, w, h, degradation.blur_sigma_px);
    }

    if degradation.row_stripe_sigma > 0.0 {
        let mut rng = stream(seed, STREAM_STRIPES);
        for row in pixels.chunks_mut(w) {
            let offset = degradation.row_stripe_sigma * normal(&mut rng);
            row.iter_mut().for_each(|v| *v += offset);
        }
    }

    let noise_sigma = match degradation.snr_db {
        Some(snr) => {
            let mean = pixels.iter().sum::<f64>() / pixels.len() as f64;
            let var = pixels.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / pixels.len() as f64;
            (var / 10f64.powf(snr / 10.0)).sqrt()
        }
        None => degradation.noise_sigma,
    };
    if noise_sigma > 0.0 {
        let mut rng = stream(seed, STREAM_NOISE);
        pixels.iter_mut().for_each(|v| *v += noise_sigma * normal(&mut rng));
    }

    ImageGrid::new(
        w,
        h,
        pixels,
        res,
        format!(
            "synthetic m={} n={} p={} f_v={:.4} f_h={:.4}",
            pattern.m,
            pattern.n,
            pattern.p,
            pattern.f_v(),
            pattern.f_h()
        ),
    )
}

/// Pairs vertical threads `(j, j + 1)` with `j` of a per-patch parity and
/// blurs each row horizontally without crossing pair boundaries.
fn merge_thread_pairs(
    pixels: &mut [f64],
    width: usize,
    res: f64,
    d_v: f64,
    sigma_px: f64,
    patch_cm: f64,
    rng: &mut ChaCha8Rng,
) {
    let height = pixels.len() / width;
    let patch_px = (patch_cm * res).max(1.0);
    let (nx, ny) = (
        (width as f64 / patch_px).ceil() as usize,
        (height as f64 / patch_px).ceil() as usize,
    );
    let parity: Vec<f64> = (0..nx * ny).map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 }).collect();
    let kernel = gaussian_kernel(sigma_px);
    let radius = (kernel.len() / 2) as i64;
    let pair_of = |x: f64, phase: f64| ((x / res / d_v - phase + 0.5) / 2.0).floor() as i64;
    let mut row = vec![0.0; width];
    for y in 0..height {
        row.copy_from_slice(&pixels[y * width..(y + 1) * width]);
        let py = ((y as f64 / patch_px) as usize).min(ny - 1);
        for x in 0..width {
            let px = ((x as f64 / patch_px) as usize).min(nx - 1);
            let phase = parity[py * nx + px];
            let pair = pair_of(x as f64 + 0.5, phase);
            let (mut acc, mut norm) = (0.0, 0.0);
            for (i, k) in kernel.iter().enumerate() {
                let sx = x as i64 + i as i64 - radius;
                if sx < 0 || sx >= width as i64 || pair_of(sx as f64 + 0.5, phase) != pair {
                    continue;
                }
                acc += k * row[sx as usize];
                norm += k;
            }
            pixels[y * width + x] = acc / norm;
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with clamp-to-edge boundaries.
pub fn gaussian_blur(pixels: &mut [f64], width: usize, height: usize, sigma: f64) {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let mut tmp = vec![0.0; pixels.len()];
    for y in 0..height {
        let row = &pixels[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let sx = (x as i64 + i as i64 - radius).clamp(0, width as i64 - 1) as usize;
                acc += k * row[sx];
            }
            tmp[y * width + x] = acc;
        }
    }
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let sy = (y as i64 + i as i64 - radius).clamp(0, height as i64 - 1) as usize;
                acc += k * tmp[sy * width + x];
            }
            pixels[y * width + x] = acc;
        }
    }
}
