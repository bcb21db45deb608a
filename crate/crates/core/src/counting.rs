//! Thread counting.
//!
//! Two methods live here. The swatch method takes small windowed DFTs over
//! the image and reads the dominant peak near each frequency axis. The
//! triangle method detects the peak lattice of an averaged periodogram and
//! reads off the right triangle spanned by DC, the first lattice point on
//! the `f_x` axis and the perpendicular lattice point reached by the evenly
//! divided hypotenuse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::lattice::{lattice_points, Basis2D, Rect, Vec2};
use crate::spectrum::{SpectralEstimator, Spectrum2D, WindowKind};

/// Measurements with at least this confidence enter the statistics.
pub const CONFIDENT: f64 = 0.5;
/// Peak-to-median ratio below which a sector has no usable peak.
pub const NOISE_FLOOR_RATIO: f64 = 5.0;
const CONFIDENCE_MIDPOINT: f64 = 8.0;
const CONFIDENCE_SCALE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn square(x: usize, y: usize, size: usize) -> Self {
        Self {
            x,
            y,
            width: size,
            height: size,
        }
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(
            self.x as f64 + self.width as f64 / 2.0,
            self.y as f64 + self.height as f64 / 2.0,
        )
    }

    fn fits(&self, image: &ImageGrid) -> bool {
        self.x + self.width <= image.width() && self.y + self.height <= image.height()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwatchParams {
    /// Swatch side, cm.
    pub swatch_cm: f64,
    /// Fraction of a swatch shared by neighbours, in `[0, 1)`.
    pub overlap: f64,
    pub n_dft: usize,
    pub window: WindowKind,
    /// threads/cm.
    pub dc_radius: f64,
}

impl Default for SwatchParams {
    fn default() -> Self {
        Self {
            swatch_cm: 1.0,
            overlap: 0.5,
            n_dft: 1024,
            window: WindowKind::Hann,
            dc_radius: 3.0,
        }
    }
}

impl SwatchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.swatch_cm > 0.0 && self.swatch_cm.is_finite()) {
            return Err(Error::InvalidParameter("swatch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::InvalidParameter(format!(
                "overlap must lie in [0, 1), got {}",
                self.overlap
            )));
        }
        if self.n_dft < 2 {
            return Err(Error::InvalidParameter("N_DFT must be at least 2".into()));
        }
        if !(self.dc_radius >= 0.0) {
            return Err(Error::InvalidParameter("DC radius must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn swatch_px(&self, resolution: f64) -> usize {
        (self.swatch_cm * resolution).round().max(2.0) as usize
    }
}

/// Local density and orientation read from one swatch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwatchMeasurement {
    /// Swatch centre, px.
    pub position: Vec2,
    /// threads/cm.
    pub f_v: Option<f64>,
    pub f_h: Option<f64>,
    /// Degrees from the respective frequency axis.
    pub angle_v: Option<f64>,
    pub angle_h: Option<f64>,
    pub confidence: f64,
}

impl SwatchMeasurement {
    pub fn is_confident(&self) -> bool {
        self.confidence >= CONFIDENT
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionStatistics {
    pub mode: f64,
    pub mean: f64,
    pub std: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountStatistics {
    pub vertical: DirectionStatistics,
    pub horizontal: DirectionStatistics,
    pub confident: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// threads/cm.
    pub freq: Vec2,
    pub magnitude: f64,
}

/// Local maxima of a PSD in the closed upper half-plane, strongest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    pub peaks: Vec<Peak>,
    /// Bin width of the source spectrum, threads/cm.
    pub bin_width: f64,
    /// DC exclusion radius used for detection, threads/cm.
    pub dc_radius: f64,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    /// Peaks together with their point reflections.
    pub fn symmetric(&self) -> Vec<Vec2> {
        self.peaks
            .iter()
            .flat_map(|p| [p.freq, -p.freq])
            .collect()
    }

    /// Strongest peak within `tol` of `f` or of `−f`.
    pub fn near(&self, f: Vec2, tol: f64) -> Option<&Peak> {
        self.peaks
            .iter()
            .filter(|p| p.freq.distance(f) <= tol || p.freq.distance(-f) <= tol)
            .max_by(|a, b| a.magnitude.total_cmp(&b.magnitude))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeakParams {
    /// threads/cm.
    pub dc_radius: f64,
    /// threads/cm.
    pub min_separation: f64,
    /// Multiple of the median off-DC value.
    pub rel_threshold: f64,
    /// Peaks weaker than the strongest off-DC value by more than this are dropped.
    pub dynamic_range_db: f64,
    /// Minimum height of a peak over the highest saddle joining it to a
    /// stronger one, dB.
    pub min_prominence_db: f64,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self {
            dc_radius: 3.0,
            min_separation: 1.0,
            rel_threshold: 4.0,
            dynamic_range_db: 30.0,
            min_prominence_db: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitParams {
    /// Horizontal threads per basic shape.
    pub p: u32,
    /// Support tolerance relative to the spacing being checked.
    pub rel_tolerance: f64,
    /// Lower bound of the support tolerance, in bins.
    pub min_tolerance_bins: f64,
    /// threads/cm.
    pub max_residual: f64,
    /// Allowed deviation of the leg angle from 90°.
    pub perpendicular_tol_deg: f64,
    /// Largest hypotenuse segment count considered.
    pub max_m: u32,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            p: 1,
            rel_tolerance: 0.05,
            min_tolerance_bins: 1.5,
            max_residual: 0.2,
            perpendicular_tol_deg: 2.0,
            max_m: 12,
        }
    }
}

/// Fitted spectral triangle.
///
/// `v2` is the single-segment leg (length `l1`), `v1` the other leg (length
/// `l2`, `n` segments); the hypotenuse `v2 → v1` has `m` segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleFit {
    pub m: u32,
    pub n: u32,
    pub p: u32,
    pub l1: f64,
    pub l2: f64,
    pub f_v: f64,
    pub f_h: f64,
    pub residual: f64,
    pub v1: Vec2,
    pub v2: Vec2,
    /// Peaks (counting reflections) matched to the fitted lattice.
    pub support: usize,
    /// Axis-only fit, `n = 0`.
    pub degenerate: bool,
}

/// Relative pixel spread below which a swatch counts as featureless.
const FLAT_TOLERANCE: f64 = 1e-9;

fn logistic_confidence(ratio: f64) -> f64 {
    if !(ratio >= NOISE_FLOOR_RATIO) {
        return 0.0;
    }
    1.0 / (1.0 + (-(ratio - CONFIDENCE_MIDPOINT) / CONFIDENCE_SCALE).exp())
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

/// Sub-bin offsets of a maximum from log-parabolic fits along each axis.
fn refine_offset(values: &[f64], n: usize, ix: usize, iy: usize) -> (f64, f64) {
    let at = |x: usize, y: usize| values[y * n + x];
    let vertex = |l: f64, c: f64, r: f64| -> f64 {
        if !(l > 0.0 && c > 0.0 && r > 0.0) {
            return 0.0;
        }
        let (l, c, r) = (l.ln(), c.ln(), r.ln());
        let den = l - 2.0 * c + r;
        if den >= 0.0 {
            return 0.0;
        }
        (0.5 * (l - r) / den).clamp(-0.5, 0.5)
    };
    let c = at(ix, iy);
    let dx = if ix > 0 && ix + 1 < n {
        vertex(at(ix - 1, iy), c, at(ix + 1, iy))
    } else {
        0.0
    };
    let dy = if iy > 0 && iy + 1 < n {
        vertex(at(ix, iy - 1), c, at(ix, iy + 1))
    } else {
        0.0
    };
    (dx, dy)
}

#[derive(Default)]
struct Sector {
    magnitudes: Vec<f64>,
    best: Option<(f64, usize, usize)>,
}

impl Sector {
    fn push(&mut self, magnitude: f64, ix: usize, iy: usize) {
        self.magnitudes.push(magnitude);
        if self.best.is_none_or(|(b, _, _)| magnitude > b) {
            self.best = Some((magnitude, ix, iy));
        }
    }

    fn confidence(&mut self) -> f64 {
        let Some((peak, _, _)) = self.best else {
            return 0.0;
        };
        if peak <= 0.0 {
            return 0.0;
        }
        let med = median(&mut self.magnitudes);
        if med <= 0.0 {
            return 1.0;
        }
        logistic_confidence(peak / med)
    }
}

fn measure_swatch(
    estimator: &mut SpectralEstimator,
    image: &ImageGrid,
    rect: PixelRect,
    params: &SwatchParams,
) -> SwatchMeasurement {
    let (w, h) = (rect.width, rect.height);
    let mut block = image.region(rect.x, rect.y, w, h);
    let mean = block.iter().sum::<f64>() / block.len() as f64;
    let spread = block.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if spread <= FLAT_TOLERANCE * mean.abs().max(1.0) {
        return SwatchMeasurement {
            position: rect.center(),
            f_v: None,
            f_h: None,
            angle_v: None,
            angle_h: None,
            confidence: 0.0,
        };
    }
    let wx = params.window.coefficients(w);
    let wy = params.window.coefficients(h);
    for (y, row) in block.chunks_mut(w).enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * wx[x] * wy[y];
        }
    }
    let nd = params.n_dft;
    let power = estimator.power(&block, w, h);
    let bw = image.resolution() / nd as f64;
    let c = (nd / 2) as f64;

    let mut sx = Sector::default();
    let mut sy = Sector::default();
    for iy in 0..nd {
        let fy = (iy as f64 - c) * bw;
        for ix in 0..nd {
            let fx = (ix as f64 - c) * bw;
            if fx.hypot(fy) <= params.dc_radius {
                continue;
            }
            let mag = power[iy * nd + ix].sqrt();
            if fx > 0.0 && fy.abs() <= fx {
                sx.push(mag, ix, iy);
            }
            if fy > 0.0 && fx.abs() <= fy {
                sy.push(mag, ix, iy);
            }
        }
    }

    let locate = |s: &Sector| -> Vec2 {
        let (_, ix, iy) = s.best.expect("sector with confidence has a peak");
        let (dx, dy) = refine_offset(&power, nd, ix, iy);
        Vec2::new((ix as f64 + dx - c) * bw, (iy as f64 + dy - c) * bw)
    };
    let (cx, cy) = (sx.confidence(), sy.confidence());
    let mut out = SwatchMeasurement {
        position: rect.center(),
        f_v: None,
        f_h: None,
        angle_v: None,
        angle_h: None,
        confidence: cx.min(cy),
    };
    if cx > 0.0 {
        let f = locate(&sx);
        out.f_v = Some(f.norm());
        out.angle_v = Some(f.y.atan2(f.x).to_degrees());
    }
    if cy > 0.0 {
        let f = locate(&sy);
        out.f_h = Some(f.norm());
        out.angle_h = Some((-f.x).atan2(f.y).to_degrees());
    }
    out
}

/// Reads the dominant peak of each axis sector of one swatch.
pub fn swatch_count(
    image: &ImageGrid,
    rect: PixelRect,
    params: &SwatchParams,
) -> Result<SwatchMeasurement> {
    params.validate()?;
    if rect.width < 2 || rect.height < 2 || !rect.fits(image) {
        return Err(Error::InvalidParameter(format!(
            "swatch {rect:?} does not fit inside a {}x{} image",
            image.width(),
            image.height()
        )));
    }
    if rect.width > params.n_dft || rect.height > params.n_dft {
        return Err(Error::InvalidParameter(format!(
            "swatch of {}x{} px exceeds N_DFT={}",
            rect.width, rect.height, params.n_dft
        )));
    }
    let mut estimator = SpectralEstimator::new(params.n_dft);
    Ok(measure_swatch(&mut estimator, image, rect, params))
}

/// Swatch grid covering the image, row-major.
pub fn swatch_grid(image: &ImageGrid, params: &SwatchParams) -> Result<Vec<PixelRect>> {
    params.validate()?;
    let size = params.swatch_px(image.resolution());
    if size > image.width() || size > image.height() {
        return Err(Error::ImageTooSmall {
            width: image.width(),
            height: image.height(),
            required: size,
        });
    }
    if size > params.n_dft {
        return Err(Error::InvalidParameter(format!(
            "swatch of {size} px exceeds N_DFT={}",
            params.n_dft
        )));
    }
    let step = ((size as f64 * (1.0 - params.overlap)).round() as usize).max(1);
    let xs: Vec<usize> = (0..=image.width() - size).step_by(step).collect();
    let ys: Vec<usize> = (0..=image.height() - size).step_by(step).collect();
    Ok(ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| PixelRect::square(x, y, size)))
        .collect())
}

/// Raster scan of swatch measurements, row-major.
pub fn count_maps(image: &ImageGrid, params: &SwatchParams) -> Result<Vec<SwatchMeasurement>> {
    let rects = swatch_grid(image, params)?;
    let mut estimator = SpectralEstimator::new(params.n_dft);
    Ok(rects
        .into_iter()
        .map(|r| measure_swatch(&mut estimator, image, r, params))
        .collect())
}

fn direction_statistics(values: &[f64], bin_width: f64) -> DirectionStatistics {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = lo - bin_width / 2.0;
    let bins = ((hi - start) / bin_width).floor() as usize + 1;
    let mut counts = vec![0usize; bins];
    for v in values {
        let i = (((v - start) / bin_width).floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    let edges: Vec<f64> = (0..=bins).map(|i| start + i as f64 * bin_width).collect();
    let best = counts.iter().copied().max().unwrap_or(0);
    let mode_bin = counts.iter().position(|&c| c == best).unwrap_or(0);
    DirectionStatistics {
        mode: start + (mode_bin as f64 + 0.5) * bin_width,
        mean,
        std,
        histogram: Histogram { edges, counts },
    }
}

/// Histogram, mode, mean and sample standard deviation of the confident
/// measurements in each direction.
pub fn statistics(maps: &[SwatchMeasurement], bin_width: f64) -> Result<CountStatistics> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "histogram bin width must be positive, got {bin_width}"
        )));
    }
    let confident: Vec<&SwatchMeasurement> = maps
        .iter()
        .filter(|m| m.is_confident() && m.f_v.is_some() && m.f_h.is_some())
        .collect();
    if confident.is_empty() {
        return Err(Error::InsufficientData(format!(
            "none of {} swatch measurements is confident",
            maps.len()
        )));
    }
    let fv: Vec<f64> = confident.iter().filter_map(|m| m.f_v).collect();
    let fh: Vec<f64> = confident.iter().filter_map(|m| m.f_h).collect();
    Ok(CountStatistics {
        vertical: direction_statistics(&fv, bin_width),
        horizontal: direction_statistics(&fh, bin_width),
        confident: confident.len(),
        total: maps.len(),
    })
}

/// Local maxima at or above `threshold` with the saddle level joining each
/// to a stronger maximum, zero when no such saddle lies above `threshold`.
///
/// Bins are merged in descending order under 8-connectivity. Equal values are ordered by index so plateaus
/// yield one maximum.
fn prominent_maxima(
    values: &[f64],
    n: usize,
    threshold: f64,
) -> Vec<(f64, usize, usize, f64)> {
    let mut order: Vec<usize> = (0..n * n)
        .filter(|&i| values[i] >= threshold && values[i] > 0.0)
        .collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    const UNSET: usize = usize::MAX;
    let mut parent = vec![UNSET; n * n];
    // root -> index of the component's maximum
    let mut top = vec![UNSET; n * n];
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        while parent[i] != root {
            let next = parent[i];
            parent[i] = root;
            i = next;
        }
        root
    }
    let mut saddle = vec![f64::NAN; n * n];
    for &i in &order {
        parent[i] = i;
        top[i] = i;
        let (x, y) = ((i % n) as i64, (i / n) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= n as i64 || ny >= n as i64 {
                    continue;
                }
                let j = ny as usize * n + nx as usize;
                if parent[j] == UNSET {
                    continue;
                }
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri == rj {
                    continue;
                }
                let (ti, tj) = (top[ri], top[rj]);
                let i_wins = values[ti] > values[tj] || (values[ti] == values[tj] && ti < tj);
                let (winner, loser) = if i_wins { (ri, rj) } else { (rj, ri) };
                saddle[top[loser]] = values[i];
                parent[loser] = winner;
            }
        }
    }
    let mut out = Vec::new();
    for &i in &order {
        if top[i] == i && parent[i] != UNSET {
            let s = if saddle[i].is_nan() { 0.0 } else { saddle[i] };
            out.push((values[i], i % n, i / n, s));
        }
    }
    out
}

/// Local maxima of `psd` above the noise threshold, outside the DC disc,
/// pruned to `min_separation` and kept in the closed upper half-plane.
pub fn detect_peaks(psd: &Spectrum2D, params: &PeakParams) -> PeakSet {
    let n = psd.n_dft();
    let c = psd.center();
    let bw = psd.bin_width();
    let values = psd.values();
    let empty = PeakSet {
        peaks: Vec::new(),
        bin_width: bw,
        dc_radius: params.dc_radius,
    };
    let off_dc = |ix: usize, iy: usize| psd.frequency(ix, iy).norm() > params.dc_radius;

    let mut background = Vec::new();
    for iy in 0..n {
        for ix in 0..n {
            if off_dc(ix, iy) {
                background.push(values[iy * n + ix]);
            }
        }
    }
    let strongest = background.iter().copied().fold(0.0, f64::max);
    if strongest <= 0.0 {
        return empty;
    }
    let floor = strongest * 10f64.powf(-params.dynamic_range_db / 10.0);
    let threshold = (params.rel_threshold * median(&mut background)).max(floor);

    let min_ratio = 10f64.powf(params.min_prominence_db / 10.0);
    let mut candidates: Vec<(f64, usize, usize)> = prominent_maxima(values, n, threshold)
        .into_iter()
        .filter(|&(v, ix, iy, saddle)| {
            let upper = iy > c || (iy == c && ix > c);
            upper && off_dc(ix, iy) && ix > 0 && iy > 0 && ix + 1 < n && iy + 1 < n && v >= min_ratio * saddle
        })
        .map(|(v, ix, iy, _)| (v, ix, iy))
        .collect();
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| (a.2, a.1).cmp(&(b.2, b.1)))
    });

    let mut peaks: Vec<Peak> = Vec::new();
    for (v, ix, iy) in candidates {
        let (dx, dy) = refine_offset(values, n, ix, iy);
        let freq = Vec2::new(
            (ix as f64 + dx - c as f64) * bw,
            (iy as f64 + dy - c as f64) * bw,
        );
        let coarse = psd.frequency(ix, iy);
        if peaks
            .iter()
            .any(|p| p.freq.distance(coarse) < params.min_separation)
        {
            continue;
        }
        peaks.push(Peak { freq, magnitude: v });
    }
    PeakSet {
        peaks,
        bin_width: bw,
        dc_radius: params.dc_radius,
    }
}

/// Upper half-plane peaks, nearest to DC first, tried as basis vectors.
const BASIS_CANDIDATES: usize = 16;
const MISS_PENALTY: f64 = 0.25;
/// Search range for integer lattice coordinates.
const COORD_RANGE: i64 = 24;

struct Support<'a> {
    points: &'a [Vec2],
    min_tol: f64,
    rel_tol: f64,
}

impl Support<'_> {
    fn tol(&self, spacing: f64) -> f64 {
        (self.rel_tol * spacing).max(self.min_tol)
    }

    /// Nearest lattice coordinates of `p` and whether `p` lies within tolerance.
    fn on_lattice(&self, p: Vec2, a: Vec2, b: Vec2) -> Option<(f64, f64)> {
        let det = a.cross(b);
        let i = (p.cross(b) / det).round();
        let j = (a.cross(p) / det).round();
        let tol = self.tol(a.norm().min(b.norm()));
        (p.distance(a * i + b * j) <= tol).then_some((i, j))
    }

    fn explained(&self, a: Vec2, b: Vec2, radius: f64) -> usize {
        self.points
            .iter()
            .filter(|p| p.norm() <= radius && self.on_lattice(**p, a, b).is_some())
            .count()
    }
}

/// Lagrange–Gauss reduction of a 2-D basis.
fn reduce(mut a: Vec2, mut b: Vec2) -> (Vec2, Vec2) {
    for _ in 0..64 {
        if b.norm() < a.norm() {
            std::mem::swap(&mut a, &mut b);
        }
        let k = (a.dot(b) / a.dot(a)).round();
        if k == 0.0 {
            break;
        }
        b = b - a * k;
    }
    (a, b)
}

struct LatticeFit {
    a: Vec2,
    b: Vec2,
    residual: f64,
    matched: usize,
}

/// Least-squares refinement of the lattice through the matched points.
fn refine_lattice(a: Vec2, b: Vec2, support: &Support) -> Option<LatticeFit> {
    let (mut a, mut b) = reduce(a, b);
    let radius = 2.5 * a.norm().max(b.norm());
    let mut last = None;
    for _ in 0..3 {
        if a.cross(b).abs() < 1e-12 {
            return last;
        }
        let matched: Vec<(f64, f64, Vec2)> = support
            .points
            .iter()
            .filter(|p| p.norm() <= radius)
            .filter_map(|&p| {
                let (i, j) = support.on_lattice(p, a, b)?;
                (i != 0.0 || j != 0.0).then_some((i, j, p))
            })
            .collect();
        let (mut sii, mut sij, mut sjj) = (0.0, 0.0, 0.0);
        let (mut sip, mut sjp) = (Vec2::ZERO, Vec2::ZERO);
        for &(i, j, p) in &matched {
            sii += i * i;
            sij += i * j;
            sjj += j * j;
            sip = sip + p * i;
            sjp = sjp + p * j;
        }
        let d = sii * sjj - sij * sij;
        if matched.len() < 2 || d.abs() < 1e-9 {
            return last;
        }
        a = (sip * sjj - sjp * sij) * (1.0 / d);
        b = (sjp * sii - sip * sij) * (1.0 / d);
        let ss: f64 = matched
            .iter()
            .map(|&(i, j, p)| (p - (a * i + b * j)).norm().powi(2))
            .sum();
        last = Some(LatticeFit {
            a,
            b,
            residual: (ss / matched.len() as f64).sqrt(),
            matched: matched.len(),
        });
    }
    last
}

/// Lattice points of `a`, `b` in the annulus `inner < |f| ≤ outer`.
fn lattice_count(a: Vec2, b: Vec2, inner: f64, outer: f64) -> usize {
    let Ok(basis) = Basis2D::new(a, b) else {
        return 0;
    };
    lattice_points(&basis, &Rect::centered(outer))
        .map(|set| {
            set.points
                .iter()
                .filter(|p| p.norm() > inner && p.norm() <= outer)
                .count()
        })
        .unwrap_or(0)
}

/// Exhaustive search over pairs of low-order peaks for the lattice that
/// best explains the peak set: each explained peak scores one, each
/// predicted point without a peak costs a quarter. Equal scores go to the
/// coarser lattice.
fn best_lattice(peaks: &PeakSet, support: &Support) -> Option<LatticeFit> {
    let mut near: Vec<Vec2> = peaks.peaks.iter().map(|p| p.freq).collect();
    near.sort_by(|u, v| u.norm().total_cmp(&v.norm()));
    near.truncate(BASIS_CANDIDATES);
    let radius = 1.25 * near.last()?.norm();
    let inner = peaks.dc_radius + support.min_tol;
    let mut best: Option<(f64, f64, LatticeFit)> = None;
    for (k, &u) in near.iter().enumerate() {
        for &w in &near[k + 1..] {
            if u.cross(w).abs() < 0.05 * u.norm() * w.norm() {
                continue;
            }
            let Some(fit) = refine_lattice(u, w, support) else {
                continue;
            };
            let hits = support.explained(fit.a, fit.b, radius);
            let predicted = lattice_count(fit.a, fit.b, inner, radius);
            let score = hits as f64 - MISS_PENALTY * predicted.saturating_sub(hits) as f64;
            let area = fit.a.cross(fit.b).abs();
            let better = best.as_ref().is_none_or(|(sc, ar, _)| {
                score > *sc || (score == *sc && area > ar * (1.0 + 1e-6))
            });
            if better {
                best = Some((score, area, fit));
            }
        }
    }
    best.map(|(_, _, fit)| fit)
}

fn angle_between(from: Vec2, to: Vec2) -> f64 {
    let d = to.angle() - from.angle();
    d.sin().atan2(d.cos()).to_degrees()
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Primitive lattice vectors `(i, j, i·a + j·b)` within the search range.
fn primitive_vectors(a: Vec2, b: Vec2) -> impl Iterator<Item = (i64, i64, Vec2)> {
    (-COORD_RANGE..=COORD_RANGE).flat_map(move |i| {
        (-COORD_RANGE..=COORD_RANGE)
            .filter(move |&j| gcd(i, j) == 1)
            .map(move |j| (i, j, a * i as f64 + b * j as f64))
    })
}

/// Canonical triangle of the lattice spanned by `a`, `b`.
///
/// `b̄` is the shortest primitive vector perpendicular to the single leg
/// `v2`, `m` is the index of `{v2, b̄}` in the lattice and `0 ≤ n < m` makes
/// `(v2 − n·b̄)/m` a lattice vector, so the hypotenuse `v2 → n·b̄` crosses
/// `m − 1` lattice points. `v2` is the primitive vector closest to the `+f_x`
/// axis among those with `m ≤ max_m`; smaller `m`, then shorter, breaks ties.
fn canonical_triangle(a: Vec2, b: Vec2, support: &Support, params: &FitParams) -> Option<TriangleFit> {
    let vectors: Vec<(i64, i64, Vec2)> = primitive_vectors(a, b).collect();
    let off_axis = |v: Vec2| (v.angle().abs() - (support.min_tol / v.norm()).atan()).max(0.0);
    let mut best: Option<(f64, i64, (i64, i64, Vec2), (i64, i64, Vec2))> = None;
    for &(i2, j2, v2) in vectors.iter().filter(|(_, _, v)| v.x > 0.0 && v.y.abs() <= v.x) {
        let Some(&(ib, jb, b_bar)) = vectors
            .iter()
            .filter(|(_, _, w)| (angle_between(v2, *w) - 90.0).abs() <= params.perpendicular_tol_deg)
            .min_by(|(_, _, u), (_, _, v)| u.norm().total_cmp(&v.norm()))
        else {
            continue;
        };
        let m = (i2 * jb - j2 * ib).abs();
        if m == 0 || m > params.max_m as i64 {
            continue;
        }
        let key = (off_axis(v2), m, v2.norm());
        let better = best.as_ref().is_none_or(|(o, bm, (_, _, bv), _)| {
            key.0
                .total_cmp(o)
                .then(key.1.cmp(bm))
                .then(key.2.total_cmp(&bv.norm()))
                .is_lt()
        });
        if better {
            best = Some((key.0, m, (i2, j2, v2), (ib, jb, b_bar)));
        }
    }
    let (_, m, (i2, j2, v2), (ib, jb, b_bar)) = best?;
    let n = (0..m).find(|n| (i2 - n * ib) % m == 0 && (j2 - n * jb) % m == 0)?;
    let v1 = b_bar * n as f64;
    let p = params.p as f64;
    Some(TriangleFit {
        m: m as u32,
        n: n as u32,
        p: params.p,
        l1: v2.norm(),
        l2: v1.norm(),
        f_v: v2.norm(),
        f_h: if n == 0 {
            p * b_bar.norm()
        } else {
            p * v1.norm() / n as f64
        },
        residual: 0.0,
        v1,
        v2,
        support: 0,
        degenerate: n == 0,
    })
}

/// Fits the spectral triangle to a peak lattice.
///
/// Every pair of low-order peaks seeds a candidate lattice, refined by least
/// squares over all peaks it explains; the lattice explaining the most peaks
/// is kept. The triangle is then read off that lattice, so hypotenuse points
/// lost in nulls of the thread-shape envelope do not change `m` or `n`. A
/// rectangular lattice yields the axis-only case `m = 1, n = 0`.
pub fn fit_spectral_triangle(peaks: &PeakSet, params: &FitParams) -> Result<TriangleFit> {
    if params.p == 0 {
        return Err(Error::InvalidParameter("p must be at least 1".into()));
    }
    if peaks.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "triangle fit needs at least 2 peaks, got {}",
            peaks.len()
        )));
    }
    let points = peaks.symmetric();
    let support = Support {
        points: &points,
        min_tol: params.min_tolerance_bins * peaks.bin_width,
        rel_tol: params.rel_tolerance,
    };
    let failed = |reason: String, best: Option<TriangleFit>| Error::FitFailed {
        reason,
        best: best.map(Box::new),
    };
    let Some(lattice) = best_lattice(peaks, &support) else {
        return Err(failed("peaks do not span a 2-D lattice".into(), None));
    };
    let Some(triangle) = canonical_triangle(lattice.a, lattice.b, &support, params) else {
        return Err(failed(
            "lattice has no leg perpendicular to the horizontal-axis vector".into(),
            None,
        ));
    };
    let fit = TriangleFit {
        residual: lattice.residual,
        support: lattice.matched,
        ..triangle
    };
    if fit.residual > params.max_residual {
        return Err(failed(
            format!(
                "lattice residual {:.4} exceeds {}",
                fit.residual, params.max_residual
            ),
            Some(fit),
        ));
    }
    Ok(fit)
}
