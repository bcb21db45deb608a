//! Windowed segmentation and averaged periodograms of images.
//!
//! Segments of `N×N` pixels are taken on a 2-D grid of offsets spaced `D`
//! pixels apart, multiplied by a separable window, zero-padded to
//! `N_DFT×N_DFT` and transformed. Each periodogram is `|I_r(k)|² / N` and
//! the estimate is the arithmetic mean over all `K` segments.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::grid::ImageGrid;
use crate::lattice::Vec2;

/// 4-term Blackman–Harris coefficients.
pub const BLACKMAN_HARRIS: [f64; 4] = [0.35875, 0.48829, 0.14128, 0.01168];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    #[serde(rename = "blackman-harris-4term")]
    BlackmanHarris,
    Hann,
    Rectangular,
}

impl WindowKind {
    /// Half-width of the main lobe in DFT bins of the window length.
    pub fn mainlobe_half_width(self) -> f64 {
        match self {
            WindowKind::BlackmanHarris => 4.0,
            WindowKind::Hann => 2.0,
            WindowKind::Rectangular => 1.0,
        }
    }

    /// Symmetric 1-D window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        let denom = (n - 1) as f64;
        (0..n)
            .map(|k| {
                let x = 2.0 * PI * k as f64 / denom;
                match self {
                    WindowKind::Rectangular => 1.0,
                    WindowKind::Hann => 0.5 - 0.5 * x.cos(),
                    WindowKind::BlackmanHarris => {
                        let [a0, a1, a2, a3] = BLACKMAN_HARRIS;
                        a0 - a1 * x.cos() + a2 * (2.0 * x).cos() - a3 * (3.0 * x).cos()
                    }
                }
            })
            .collect()
    }
}

/// How an image is cut into windowed segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationPlan {
    /// Segment side `N`, px.
    pub segment: usize,
    /// Displacement `D` between consecutive segments, px.
    pub step: usize,
    pub window: WindowKind,
    /// Transform size `N_DFT`.
    pub n_dft: usize,
}

impl Default for SegmentationPlan {
    /// 400 px Blackman–Harris segments every 100 px, 2048-point transform.
    fn default() -> Self {
        Self {
            segment: 400,
            step: 100,
            window: WindowKind::BlackmanHarris,
            n_dft: 2048,
        }
    }
}

impl SegmentationPlan {
    pub fn new(segment: usize, step: usize, window: WindowKind, n_dft: usize) -> Result<Self> {
        let plan = Self {
            segment,
            step,
            window,
            n_dft,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0 < self.step && self.step <= self.segment && self.segment <= self.n_dft) {
            return Err(Error::InvalidParameter(format!(
                "segmentation requires 0 < D <= N <= N_DFT (D={}, N={}, N_DFT={})",
                self.step, self.segment, self.n_dft
            )));
        }
        if self.segment < 2 {
            return Err(Error::InvalidParameter("segment side must be at least 2".into()));
        }
        Ok(())
    }

    /// Main-lobe half-width of the window response, in frequency units.
    pub fn mainlobe_radius(&self, resolution: f64) -> f64 {
        self.window.mainlobe_half_width() * resolution / self.segment as f64
    }

    /// Overlap ratio `s = (N − D) / D`.
    pub fn overlap_ratio(&self) -> f64 {
        (self.segment - self.step) as f64 / self.step as f64
    }

    /// Offsets along one axis of length `len` at which a full segment fits.
    pub fn offsets(&self, len: usize) -> Vec<usize> {
        if len < self.segment {
            return Vec::new();
        }
        (0..=(len - self.segment) / self.step)
            .map(|r| r * self.step)
            .collect()
    }

    /// `K` for an image of `width × height` pixels.
    pub fn segment_count(&self, width: usize, height: usize) -> usize {
        self.offsets(width).len() * self.offsets(height).len()
    }

    fn check_fits(&self, image: &ImageGrid) -> Result<()> {
        self.validate()?;
        if image.width() < self.segment || image.height() < self.segment {
            return Err(Error::ImageTooSmall {
                width: image.width(),
                height: image.height(),
                required: self.segment,
            });
        }
        Ok(())
    }
}

/// Separable `N×N` window, row-major.
pub fn make_window(plan: &SegmentationPlan) -> Vec<f64> {
    let w = plan.window.coefficients(plan.segment);
    let mut out = Vec::with_capacity(w.len() * w.len());
    for wy in &w {
        out.extend(w.iter().map(|wx| wx * wy));
    }
    out
}

/// Top-left corners of all segments, row-major (`y` outer, `x` inner).
pub fn segment_origins(image: &ImageGrid, plan: &SegmentationPlan) -> Result<Vec<(usize, usize)>> {
    plan.check_fits(image)?;
    let xs = plan.offsets(image.width());
    let ys = plan.offsets(image.height());
    Ok(ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect())
}

fn windowed_block(image: &ImageGrid, x0: usize, y0: usize, window: &[f64], n: usize) -> Vec<f64> {
    let mut block = image.block(x0, y0, n);
    block.iter_mut().zip(window).for_each(|(v, w)| *v *= w);
    block
}

/// All windowed segments, in [`segment_origins`] order.
pub fn extract_segments(image: &ImageGrid, plan: &SegmentationPlan) -> Result<Vec<Vec<f64>>> {
    let window = make_window(plan);
    Ok(segment_origins(image, plan)?
        .into_iter()
        .map(|(x, y)| windowed_block(image, x, y, &window, plan.segment))
        .collect())
}

/// Nonnegative DC-centred spectral raster.
///
/// Bin `(ix, iy)` holds frequency `((ix − c)·Δf, (iy − c)·Δf)` with
/// `c = ⌊N_DFT/2⌋` and `Δf` in threads/cm. `ix` follows image columns and
/// `iy` image rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum2D {
    n_dft: usize,
    bin_width: f64,
    segment_count: usize,
    values: Vec<f64>,
}

impl Spectrum2D {
    pub fn from_values(
        n_dft: usize,
        bin_width: f64,
        segment_count: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != n_dft * n_dft {
            return Err(Error::InvalidParameter(format!(
                "spectrum needs {} values, got {}",
                n_dft * n_dft,
                values.len()
            )));
        }
        if !(bin_width > 0.0) {
            return Err(Error::InvalidParameter("bin width must be positive".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "spectrum values must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            n_dft,
            bin_width,
            segment_count,
            values,
        })
    }

    pub fn n_dft(&self) -> usize {
        self.n_dft
    }

    /// threads/cm per bin.
    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn center(&self) -> usize {
        self.n_dft / 2
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.n_dft + ix]
    }

    /// Value at signed bin offsets from DC, `None` outside the raster.
    pub fn at_offset(&self, kx: i64, ky: i64) -> Option<f64> {
        let c = self.center() as i64;
        let (ix, iy) = (kx + c, ky + c);
        let n = self.n_dft as i64;
        (0..n)
            .contains(&ix)
            .then_some(())
            .filter(|_| (0..n).contains(&iy))
            .map(|_| self.get(ix as usize, iy as usize))
    }

    /// Frequency of bin `(ix, iy)`.
    pub fn frequency(&self, ix: usize, iy: usize) -> Vec2 {
        let c = self.center() as f64;
        Vec2::new(
            (ix as f64 - c) * self.bin_width,
            (iy as f64 - c) * self.bin_width,
        )
    }

    /// Frequencies along either axis, ascending.
    pub fn freq_axis(&self) -> Vec<f64> {
        let c = self.center() as f64;
        (0..self.n_dft)
            .map(|i| (i as f64 - c) * self.bin_width)
            .collect()
    }

    /// Largest frequency magnitude representable on both axes.
    pub fn max_frequency(&self) -> f64 {
        (self.n_dft - 1 - self.center()) as f64 * self.bin_width
    }

    /// Bilinear interpolation at frequency `f`; `None` outside the raster.
    pub fn sample(&self, f: Vec2) -> Option<f64> {
        let c = self.center() as f64;
        let fx = f.x / self.bin_width + c;
        let fy = f.y / self.bin_width + c;
        let last = (self.n_dft - 1) as f64;
        if !(0.0..=last).contains(&fx) || !(0.0..=last).contains(&fy) {
            return None;
        }
        let (x0, y0) = (fx.floor().min(last - 1.0), fy.floor().min(last - 1.0));
        let (tx, ty) = (fx - x0, fy - y0);
        let (x0, y0) = (x0 as usize, y0 as usize);
        let v00 = self.get(x0, y0);
        let v10 = self.get(x0 + 1, y0);
        let v01 = self.get(x0, y0 + 1);
        let v11 = self.get(x0 + 1, y0 + 1);
        Some(
            v00 * (1.0 - tx) * (1.0 - ty)
                + v10 * tx * (1.0 - ty)
                + v01 * (1.0 - tx) * ty
                + v11 * tx * ty,
        )
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Reusable 2-D zero-padded transform of real `N×N` blocks.
pub struct SpectralEstimator {
    n_dft: usize,
    fft: Arc<dyn Fft<f64>>,
    rows: Vec<Complex64>,
    power_t: Vec<f64>,
}

impl SpectralEstimator {
    pub fn new(n_dft: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(n_dft);
        Self {
            n_dft,
            fft,
            rows: Vec::new(),
            power_t: vec![0.0; n_dft * n_dft],
        }
    }

    pub fn n_dft(&self) -> usize {
        self.n_dft
    }

    /// `scale·|DFT(block)|²` of a `w×h` block, DC-centred, added into `acc`.
    fn accumulate(&mut self, block: &[f64], w: usize, h: usize, scale: f64, acc: &mut [f64]) {
        let nd = self.n_dft;
        assert!(w <= nd && h <= nd && block.len() == w * h);
        self.rows.clear();
        self.rows.resize(h * nd, Complex64::default());
        let fft = &self.fft;
        let scratch_len = fft.get_inplace_scratch_len();
        self.rows
            .par_chunks_mut(nd)
            .enumerate()
            .for_each_init(
                || vec![Complex64::default(); scratch_len],
                |scratch, (r, row)| {
                    for (dst, &v) in row.iter_mut().zip(&block[r * w..(r + 1) * w]) {
                        *dst = Complex64::new(v, 0.0);
                    }
                    fft.process_with_scratch(row, scratch);
                },
            );
        let rows = &self.rows;
        self.power_t
            .par_chunks_mut(nd)
            .enumerate()
            .for_each_init(
                || (vec![Complex64::default(); nd], vec![Complex64::default(); scratch_len]),
                |(column, scratch), (kx, out)| {
                    for (r, dst) in column.iter_mut().enumerate() {
                        *dst = if r < h { rows[r * nd + kx] } else { Complex64::default() };
                    }
                    fft.process_with_scratch(column, scratch);
                    for (o, c) in out.iter_mut().zip(column.iter()) {
                        *o = c.norm_sqr() * scale;
                    }
                },
            );
        // Transpose back to row-major (iy, ix) with DC moved to the centre.
        let shift = nd / 2;
        const BLOCK: usize = 64;
        let power_t = &self.power_t;
        acc.par_chunks_mut(BLOCK * nd).enumerate().for_each(|(b, band)| {
            let iy0 = b * BLOCK;
            for kx0 in (0..nd).step_by(BLOCK) {
                for kx in kx0..(kx0 + BLOCK).min(nd) {
                    let ix = (kx + shift) % nd;
                    let src = &power_t[kx * nd..(kx + 1) * nd];
                    for (r, row) in band.chunks_mut(nd).enumerate() {
                        let ky = (iy0 + r + nd - shift) % nd;
                        row[ix] += src[ky];
                    }
                }
            }
        });
    }

    /// Unscaled `|DFT|²` of a `w×h` block, DC-centred, row-major.
    pub fn power(&mut self, block: &[f64], w: usize, h: usize) -> Vec<f64> {
        let mut values = vec![0.0; self.n_dft * self.n_dft];
        self.accumulate(block, w, h, 1.0, &mut values);
        values
    }

    /// Periodogram of one (already windowed) `n×n` segment.
    pub fn periodogram(&mut self, segment: &[f64], n: usize, resolution: f64) -> Spectrum2D {
        let mut values = vec![0.0; self.n_dft * self.n_dft];
        self.accumulate(segment, n, n, 1.0 / n as f64, &mut values);
        Spectrum2D {
            n_dft: self.n_dft,
            bin_width: resolution / self.n_dft as f64,
            segment_count: 1,
            values,
        }
    }

    /// Averaged periodogram; segments are summed in [`segment_origins`]
    /// order and divided by `K` once at the end.
    pub fn averaged_periodogram(
        &mut self,
        image: &ImageGrid,
        plan: &SegmentationPlan,
    ) -> Result<Spectrum2D> {
        if plan.n_dft != self.n_dft {
            return Err(Error::InvalidParameter(format!(
                "estimator built for N_DFT={} used with plan N_DFT={}",
                self.n_dft, plan.n_dft
            )));
        }
        let origins = segment_origins(image, plan)?;
        let window = make_window(plan);
        let mut sum = vec![0.0; self.n_dft * self.n_dft];
        for &(x, y) in &origins {
            let block = windowed_block(image, x, y, &window, plan.segment);
            self.accumulate(&block, plan.segment, plan.segment, 1.0 / plan.segment as f64, &mut sum);
        }
        let k = origins.len() as f64;
        sum.iter_mut().for_each(|v| *v /= k);
        Ok(Spectrum2D {
            n_dft: self.n_dft,
            bin_width: image.resolution() / self.n_dft as f64,
            segment_count: origins.len(),
            values: sum,
        })
    }
}

/// Periodogram of one windowed `N×N` segment (`segment.len() == N²`).
pub fn periodogram(segment: &[f64], n_dft: usize, resolution: f64) -> Result<Spectrum2D> {
    let n = (segment.len() as f64).sqrt().round() as usize;
    if n * n != segment.len() || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "segment of {} values is not square",
            segment.len()
        )));
    }
    if n > n_dft {
        return Err(Error::InvalidParameter(format!(
            "segment side {n} exceeds N_DFT={n_dft}"
        )));
    }
    Ok(SpectralEstimator::new(n_dft).periodogram(segment, n, resolution))
}

/// Averaged periodogram of `image` under `plan`.
pub fn averaged_periodogram(image: &ImageGrid, plan: &SegmentationPlan) -> Result<Spectrum2D> {
    plan.validate()?;
    SpectralEstimator::new(plan.n_dft).averaged_periodogram(image, plan)
}
