//! Categorical PSD features and pairwise canvas comparison.

use serde::{Deserialize, Serialize};

use crate::counting::{detect_peaks, fit_spectral_triangle, FitParams, PeakParams, PeakSet, TriangleFit};
use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::lattice::Vec2;
use crate::spectrum::{averaged_periodogram, SegmentationPlan, Spectrum2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeShape {
    Diamond,
    Cross,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagonalConnection {
    Horizontal,
    Vertical,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CenterShape {
    C,
    O,
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AxisEmphasis {
    Vertical,
    Horizontal,
    Both,
    None,
}

impl DiagonalConnection {
    /// Counterpart after a quarter turn of the image.
    pub fn rotated(self) -> Self {
        match self {
            Self::Horizontal => Self::Vertical,
            Self::Vertical => Self::Horizontal,
            Self::None => Self::None,
        }
    }
}

impl AxisEmphasis {
    pub fn rotated(self) -> Self {
        match self {
            Self::Horizontal => Self::Vertical,
            Self::Vertical => Self::Horizontal,
            other => other,
        }
    }
}

/// Classifier thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    /// Median contour elongation above which edges are cross-like.
    pub elongation_threshold: f64,
    /// Fraction of peak prominence at which contours are traced.
    pub contour_level: f64,
    /// Peaks farther than this multiple of the first-harmonic radius count
    /// as distant.
    pub far_factor: f64,
    pub ridge_threshold: f64,
    pub prominence_threshold: f64,
    /// Minimum dip below both path ends, as a fraction of the peak.
    pub dip_fraction: f64,
    pub axis_ratio_threshold: f64,
    /// Values more than this far below the strongest off-DC value are
    /// raised to that level before any ratio is formed.
    pub dynamic_range_db: f64,
    /// Minimum angle from either axis for a peak to count as diagonal.
    pub diagonal_min_angle_deg: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            elongation_threshold: 2.0,
            contour_level: 0.5,
            far_factor: 1.3,
            ridge_threshold: 0.25,
            prominence_threshold: 0.2,
            dip_fraction: 0.05,
            axis_ratio_threshold: 3.0,
            dynamic_range_db: 30.0,
            diagonal_min_angle_deg: 10.0,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("elongation_threshold", self.elongation_threshold),
            ("far_factor", self.far_factor),
            ("ridge_threshold", self.ridge_threshold),
            ("prominence_threshold", self.prominence_threshold),
            ("dip_fraction", self.dip_fraction),
            ("axis_ratio_threshold", self.axis_ratio_threshold),
            ("dynamic_range_db", self.dynamic_range_db),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.contour_level > 0.0 && self.contour_level < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "contour_level must lie in (0, 1), got {}",
                self.contour_level
            )));
        }
        if !(0.0..45.0).contains(&self.diagonal_min_angle_deg) {
            return Err(Error::InvalidParameter(format!(
                "diagonal_min_angle_deg must lie in [0, 45), got {}",
                self.diagonal_min_angle_deg
            )));
        }
        Ok(())
    }
}

/// Raw scalars behind the four categorical features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMetrics {
    /// Median contour elongation of the distant peaks.
    pub elongation: f64,
    pub far_peaks: usize,
    /// No distant peak was found; elongation comes from the nearest ones.
    pub edge_fallback: bool,
    pub diagonal_peak: Option<Vec2>,
    /// Path minimum over peak value towards the vertical axis.
    pub ridge_horizontal: f64,
    /// Same towards the horizontal axis.
    pub ridge_vertical: f64,
    pub prominence: f64,
    pub dip_depth: f64,
    /// Median level on the `f_x = 0` axis over the background median.
    pub axis_ratio_vertical: f64,
    pub axis_ratio_horizontal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFingerprint {
    pub edge_shape: EdgeShape,
    pub diagonal_connection: DiagonalConnection,
    pub center_shape: CenterShape,
    pub axis_emphasis: AxisEmphasis,
    pub f_v: Option<f64>,
    pub f_h: Option<f64>,
    pub metrics: FeatureMetrics,
    /// Set when the triangle fit failed and frequencies are missing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_error: Option<String>,
}

impl FeatureFingerprint {
    /// Recomputes the categoricals from the stored metrics.
    pub fn reclassify(&mut self, params: &FeatureParams) {
        let m = &self.metrics;
        self.edge_shape = edge_from(m.elongation, params);
        self.diagonal_connection = diagonal_from(m.ridge_horizontal, m.ridge_vertical, params);
        self.center_shape = center_from(m.prominence, m.dip_depth, params);
        self.axis_emphasis = axes_from(m.axis_ratio_vertical, m.axis_ratio_horizontal, params);
    }

    /// The fingerprint expected after a quarter turn of the image.
    pub fn rotated(&self) -> Self {
        let mut out = self.clone();
        out.f_v = self.f_h;
        out.f_h = self.f_v;
        out.diagonal_connection = self.diagonal_connection.rotated();
        out.axis_emphasis = self.axis_emphasis.rotated();
        let m = &mut out.metrics;
        std::mem::swap(&mut m.ridge_horizontal, &mut m.ridge_vertical);
        std::mem::swap(&mut m.axis_ratio_vertical, &mut m.axis_ratio_horizontal);
        m.diagonal_peak = self.metrics.diagonal_peak.map(|f| Vec2::new(-f.y, f.x));
        out
    }

    pub fn frequencies(&self) -> Option<(f64, f64)> {
        self.f_v.zip(self.f_h)
    }
}

fn edge_from(elongation: f64, params: &FeatureParams) -> EdgeShape {
    if elongation > params.elongation_threshold {
        EdgeShape::Cross
    } else {
        EdgeShape::Diamond
    }
}

fn diagonal_from(horizontal: f64, vertical: f64, params: &FeatureParams) -> DiagonalConnection {
    let t = params.ridge_threshold;
    match (horizontal > t, vertical > t) {
        (true, false) => DiagonalConnection::Horizontal,
        (false, true) => DiagonalConnection::Vertical,
        (true, true) if horizontal > vertical => DiagonalConnection::Horizontal,
        (true, true) if vertical > horizontal => DiagonalConnection::Vertical,
        _ => DiagonalConnection::None,
    }
}

fn center_from(prominence: f64, dip_depth: f64, params: &FeatureParams) -> CenterShape {
    if prominence < params.prominence_threshold {
        CenterShape::Plain
    } else if dip_depth >= params.dip_fraction {
        CenterShape::O
    } else {
        CenterShape::C
    }
}

fn axes_from(vertical: f64, horizontal: f64, params: &FeatureParams) -> AxisEmphasis {
    let t = params.axis_ratio_threshold;
    match (vertical > t, horizontal > t) {
        (true, true) => AxisEmphasis::Both,
        (true, false) => AxisEmphasis::Vertical,
        (false, true) => AxisEmphasis::Horizontal,
        (false, false) => AxisEmphasis::None,
    }
}

/// A spectrum seen through the dynamic-range floor.
struct Floored<'a> {
    psd: &'a Spectrum2D,
    floor: f64,
}

impl<'a> Floored<'a> {
    fn new(psd: &'a Spectrum2D, dc_radius: f64, dynamic_range_db: f64) -> Self {
        let n = psd.n_dft();
        let mut strongest = 0.0f64;
        for iy in 0..n {
            for ix in 0..n {
                if psd.frequency(ix, iy).norm() > dc_radius {
                    strongest = strongest.max(psd.get(ix, iy));
                }
            }
        }
        Self {
            psd,
            floor: strongest * 10f64.powf(-dynamic_range_db / 10.0),
        }
    }

    fn get(&self, ix: usize, iy: usize) -> f64 {
        self.psd.get(ix, iy).max(self.floor)
    }

    fn sample(&self, f: Vec2) -> Option<f64> {
        self.psd.sample(f).map(|v| v.max(self.floor))
    }

    fn bin(&self, f: Vec2) -> Option<(usize, usize)> {
        let c = self.psd.center() as f64;
        let bw = self.psd.bin_width();
        let ix = (f.x / bw).round() + c;
        let iy = (f.y / bw).round() + c;
        let n = self.psd.n_dft() as f64;
        ((0.0..n).contains(&ix) && (0.0..n).contains(&iy)).then_some((ix as usize, iy as usize))
    }
}

fn median_of(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Ratio of the longer to the shorter side of the bounding box of the
/// connected contour region around bin `(px, py)`.
///
/// The region is confined to a square of half-side `reach` bins and the
/// contour level is taken relative to the lowest value inside it.
fn contour_elongation(values: &[f64], n: usize, (px, py): (usize, usize), reach: usize, level: f64) -> Option<f64> {
    let at = |x: usize, y: usize| values[y * n + x];
    let (x_min, x_max) = (px.saturating_sub(reach), (px + reach).min(n - 1));
    let (y_min, y_max) = (py.saturating_sub(reach), (py + reach).min(n - 1));
    let mut top = at(px, py);
    // the refined frequency may round to a bin next to the maximum
    let mut peak = (px, py);
    for y in py.saturating_sub(1)..=(py + 1).min(n - 1) {
        for x in px.saturating_sub(1)..=(px + 1).min(n - 1) {
            if at(x, y) > top {
                top = at(x, y);
                peak = (x, y);
            }
        }
    }
    let mut base = top;
    for y in y_min..=y_max {
        for x in x_min..=x_max {
            base = base.min(at(x, y));
        }
    }
    if top <= base {
        return None;
    }
    let threshold = base + level * (top - base);
    let w = x_max - x_min + 1;
    let mut seen = vec![false; w * (y_max - y_min + 1)];
    seen[(peak.1 - y_min) * w + peak.0 - x_min] = true;
    let mut stack = vec![peak];
    let (mut lx, mut hx, mut ly, mut hy) = (peak.0, peak.0, peak.1, peak.1);
    while let Some((x, y)) = stack.pop() {
        lx = lx.min(x);
        hx = hx.max(x);
        ly = ly.min(y);
        hy = hy.max(y);
        let neighbours = [
            (x > x_min).then(|| (x - 1, y)),
            (x < x_max).then(|| (x + 1, y)),
            (y > y_min).then(|| (x, y - 1)),
            (y < y_max).then(|| (x, y + 1)),
        ];
        for (nx, ny) in neighbours.into_iter().flatten() {
            let slot = (ny - y_min) * w + nx - x_min;
            if !seen[slot] && at(nx, ny) >= threshold {
                seen[slot] = true;
                stack.push((nx, ny));
            }
        }
    }
    let (ex, ey) = ((hx - lx + 1) as f64, (hy - ly + 1) as f64);
    Some(ex.max(ey) / ex.min(ey))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeReading {
    pub shape: EdgeShape,
    pub elongation: f64,
    pub far_peaks: usize,
    pub fallback: bool,
}

/// Contour elongation of the peaks far from the centre.
pub fn classify_edge_shape(psd: &Spectrum2D, peaks: &PeakSet, params: &FeatureParams) -> EdgeReading {
    let view = Floored::new(psd, peaks.dc_radius, params.dynamic_range_db);
    edge_reading(&view, peaks, params)
}

fn edge_reading(view: &Floored, peaks: &PeakSet, params: &FeatureParams) -> EdgeReading {
    let bw = view.psd.bin_width();
    let n = view.psd.n_dft();
    let first = peaks
        .peaks
        .iter()
        .map(|p| p.freq.norm())
        .fold(f64::INFINITY, f64::min);
    let far: Vec<Vec2> = peaks
        .peaks
        .iter()
        .map(|p| p.freq)
        .filter(|f| f.norm() > params.far_factor * first)
        .collect();
    let fallback = far.is_empty();
    let chosen: Vec<Vec2> = if fallback {
        peaks.peaks.iter().map(|p| p.freq).collect()
    } else {
        far
    };
    let values: Vec<f64> = view.psd.values().iter().map(|&v| v.max(view.floor)).collect();
    let reach = (0.5 * first / bw).floor().max(2.0) as usize;
    let mut ratios: Vec<f64> = chosen
        .iter()
        .filter_map(|&f| view.bin(f))
        .filter_map(|b| contour_elongation(&values, n, b, reach, params.contour_level))
        .collect();
    let elongation = if ratios.is_empty() { 1.0 } else { median_of(&mut ratios) };
    EdgeReading {
        shape: edge_from(elongation, params),
        elongation,
        far_peaks: if fallback { 0 } else { chosen.len() },
        fallback,
    }
}

/// Nearest peak lying clear of both axes.
fn first_diagonal_peak(peaks: &PeakSet, params: &FeatureParams) -> Option<Vec2> {
    let slope = params.diagonal_min_angle_deg.to_radians().tan();
    let mut best: Option<(f64, f64, Vec2)> = None;
    for p in &peaks.peaks {
        let f = p.freq;
        let (ax, ay) = (f.x.abs(), f.y.abs());
        if ax.min(ay) <= slope * ax.max(ay) || f.norm() <= peaks.dc_radius {
            continue;
        }
        let r = f.norm();
        let better = match best {
            None => true,
            Some((br, bm, _)) => {
                let tol = 1e-6 * br;
                r < br - tol || (r <= br + tol && p.magnitude > bm)
            }
        };
        if better {
            best = Some((r, p.magnitude, f));
        }
    }
    best.map(|(_, _, f)| f)
}

fn path_values(view: &Floored, from: Vec2, to: Vec2, dc_radius: f64) -> Vec<f64> {
    let bw = view.psd.bin_width();
    let steps = ((to - from).norm() / bw).ceil().max(1.0) as usize;
    (0..=steps)
        .filter_map(|k| {
            let f = from + (to - from) * (k as f64 / steps as f64);
            if f.norm() <= dc_radius {
                return None;
            }
            view.sample(f)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagonalReading {
    pub connection: DiagonalConnection,
    pub peak: Option<Vec2>,
    pub ridge_horizontal: f64,
    pub ridge_vertical: f64,
}

/// Ridge levels from the first diagonal peak to each axis.
pub fn classify_diagonal_connection(psd: &Spectrum2D, peaks: &PeakSet, params: &FeatureParams) -> DiagonalReading {
    let view = Floored::new(psd, peaks.dc_radius, params.dynamic_range_db);
    diagonal_reading(&view, peaks, params)
}

fn diagonal_reading(view: &Floored, peaks: &PeakSet, params: &FeatureParams) -> DiagonalReading {
    let none = DiagonalReading {
        connection: DiagonalConnection::None,
        peak: None,
        ridge_horizontal: 0.0,
        ridge_vertical: 0.0,
    };
    let Some(f) = first_diagonal_peak(peaks, params) else {
        return none;
    };
    let Some(top) = view.sample(f).filter(|&v| v > 0.0) else {
        return none;
    };
    let ridge = |to: Vec2| {
        let path = path_values(view, f, to, peaks.dc_radius);
        path.iter().copied().fold(top, f64::min) / top
    };
    let ridge_horizontal = ridge(Vec2::new(0.0, f.y));
    let ridge_vertical = ridge(Vec2::new(f.x, 0.0));
    DiagonalReading {
        connection: diagonal_from(ridge_horizontal, ridge_vertical, params),
        peak: Some(f),
        ridge_horizontal,
        ridge_vertical,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterReading {
    pub shape: CenterShape,
    pub prominence: f64,
    pub dip_depth: f64,
}

/// Profile from the edge of the DC region out to the first diagonal peak.
pub fn classify_center(psd: &Spectrum2D, peaks: &PeakSet, params: &FeatureParams) -> CenterReading {
    let view = Floored::new(psd, peaks.dc_radius, params.dynamic_range_db);
    center_reading(&view, peaks, params)
}

fn center_reading(view: &Floored, peaks: &PeakSet, params: &FeatureParams) -> CenterReading {
    let none = CenterReading {
        shape: CenterShape::Plain,
        prominence: 0.0,
        dip_depth: 0.0,
    };
    let Some(f) = first_diagonal_peak(peaks, params) else {
        return none;
    };
    let Some(top) = view.sample(f).filter(|&v| v > 0.0) else {
        return none;
    };
    let start = f * (peaks.dc_radius / f.norm()) * (1.0 + 1e-9);
    let path = path_values(view, start, f, peaks.dc_radius);
    if path.len() < 3 {
        return none;
    }
    let lowest = path.iter().copied().fold(f64::INFINITY, f64::min);
    let interior = path[1..path.len() - 1]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let ends = path[0].min(path[path.len() - 1]);
    let prominence = (top - lowest) / top;
    let dip_depth = (ends - interior) / top;
    CenterReading {
        shape: center_from(prominence, dip_depth, params),
        prominence,
        dip_depth,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisReading {
    pub emphasis: AxisEmphasis,
    pub ratio_vertical: f64,
    pub ratio_horizontal: f64,
}

/// Axis levels against the off-axis background.
///
/// Bins within `exclusion` (frequency units, at least one bin) of a detected
/// peak or its reflection are left out of every median.
pub fn classify_axes(psd: &Spectrum2D, peaks: &PeakSet, exclusion: f64, params: &FeatureParams) -> AxisReading {
    let view = Floored::new(psd, peaks.dc_radius, params.dynamic_range_db);
    axis_reading(&view, peaks, exclusion, params)
}

fn axis_reading(view: &Floored, peaks: &PeakSet, exclusion: f64, params: &FeatureParams) -> AxisReading {
    let psd = view.psd;
    let n = psd.n_dft();
    let c = psd.center();
    let bw = psd.bin_width();
    let mut masked = vec![false; n * n];
    let r = (exclusion.max(bw) / bw).ceil() as i64;
    for f in peaks.symmetric() {
        let Some((px, py)) = view.bin(f) else { continue };
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (px as i64 + dx, py as i64 + dy);
                if (0..n as i64).contains(&x) && (0..n as i64).contains(&y) && dx * dx + dy * dy <= r * r {
                    masked[y as usize * n + x as usize] = true;
                }
            }
        }
    }
    let keep = |ix: usize, iy: usize| !masked[iy * n + ix] && psd.frequency(ix, iy).norm() > peaks.dc_radius;

    let mut vertical: Vec<f64> = (0..n).filter(|&iy| keep(c, iy)).map(|iy| view.get(c, iy)).collect();
    let mut horizontal: Vec<f64> = (0..n).filter(|&ix| keep(ix, c)).map(|ix| view.get(ix, c)).collect();
    let mut background = Vec::with_capacity(n * n);
    for iy in 0..n {
        if iy.abs_diff(c) <= 1 {
            continue;
        }
        for ix in 0..n {
            if ix.abs_diff(c) > 1 && keep(ix, iy) {
                background.push(view.get(ix, iy));
            }
        }
    }
    let base = median_of(&mut background);
    let ratio = |values: &mut Vec<f64>| {
        let m = median_of(values);
        if base > 0.0 {
            m / base
        } else {
            1.0
        }
    };
    let ratio_vertical = ratio(&mut vertical);
    let ratio_horizontal = ratio(&mut horizontal);
    AxisReading {
        emphasis: axes_from(ratio_vertical, ratio_horizontal, params),
        ratio_vertical,
        ratio_horizontal,
    }
}

/// Everything needed to fingerprint an image.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FingerprintConfig {
    pub peaks: PeakParams,
    pub fit: FitParams,
    pub features: FeatureParams,
}

/// Fingerprint from an already computed spectrum, peak set and fit.
pub fn fingerprint_from_parts(
    psd: &Spectrum2D,
    peaks: &PeakSet,
    fit: std::result::Result<&TriangleFit, &Error>,
    exclusion: f64,
    params: &FeatureParams,
) -> FeatureFingerprint {
    let view = Floored::new(psd, peaks.dc_radius, params.dynamic_range_db);
    let edge = edge_reading(&view, peaks, params);
    let diagonal = diagonal_reading(&view, peaks, params);
    let center = center_reading(&view, peaks, params);
    let axes = axis_reading(&view, peaks, exclusion, params);
    let (f_v, f_h, fit_error) = match fit {
        Ok(t) => (Some(t.f_v), Some(t.f_h), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    FeatureFingerprint {
        edge_shape: edge.shape,
        diagonal_connection: diagonal.connection,
        center_shape: center.shape,
        axis_emphasis: axes.emphasis,
        f_v,
        f_h,
        metrics: FeatureMetrics {
            elongation: edge.elongation,
            far_peaks: edge.far_peaks,
            edge_fallback: edge.fallback,
            diagonal_peak: diagonal.peak,
            ridge_horizontal: diagonal.ridge_horizontal,
            ridge_vertical: diagonal.ridge_vertical,
            prominence: center.prominence,
            dip_depth: center.dip_depth,
            axis_ratio_vertical: axes.ratio_vertical,
            axis_ratio_horizontal: axes.ratio_horizontal,
        },
        fit_error,
    }
}

/// Averaged periodogram, peaks, triangle fit and the four classifiers.
///
/// A failed fit leaves the frequencies unset instead of failing.
pub fn fingerprint(image: &ImageGrid, plan: &SegmentationPlan, config: &FingerprintConfig) -> Result<FeatureFingerprint> {
    config.features.validate()?;
    let psd = averaged_periodogram(image, plan)?;
    let peaks = detect_peaks(&psd, &config.peaks);
    let fit = fit_spectral_triangle(&peaks, &config.fit);
    Ok(fingerprint_from_parts(
        &psd,
        &peaks,
        fit.as_ref(),
        plan.mainlobe_radius(image.resolution()),
        &config.features,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Match,
    NoMatch,
    /// Features agree but thread counts differ by more than the tolerance.
    Conflict,
    /// Frequencies missing on at least one side.
    FeatureOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMatches {
    pub edge_shape: bool,
    pub diagonal_connection: bool,
    pub center_shape: bool,
    pub axis_emphasis: bool,
}

impl FeatureMatches {
    pub fn count(&self) -> usize {
        [self.edge_shape, self.diagonal_connection, self.center_shape, self.axis_emphasis]
            .iter()
            .filter(|&&b| b)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub count_match: bool,
    /// The second canvas was compared after a quarter turn.
    pub rotated: bool,
    /// Absolute count differences `(vertical, horizontal)` in the chosen
    /// pairing, threads/cm.
    pub count_difference: Option<(f64, f64)>,
    pub feature_matches: FeatureMatches,
    pub matching_features: usize,
    pub verdict: Verdict,
}

/// Count tolerance for two canvases to share a roll, threads/cm.
pub const COUNT_TOLERANCE: f64 = 1.0;
/// Features that must agree for a match.
pub const MIN_MATCHING_FEATURES: usize = 3;

fn feature_matches(a: &FeatureFingerprint, b: &FeatureFingerprint) -> FeatureMatches {
    FeatureMatches {
        edge_shape: a.edge_shape == b.edge_shape,
        diagonal_connection: a.diagonal_connection == b.diagonal_connection,
        center_shape: a.center_shape == b.center_shape,
        axis_emphasis: a.axis_emphasis == b.axis_emphasis,
    }
}

/// Compares two fingerprints, also trying `b` turned by 90°.
pub fn compare(a: &FeatureFingerprint, b: &FeatureFingerprint) -> MatchReport {
    let (Some((av, ah)), Some(_)) = (a.frequencies(), b.frequencies()) else {
        let features = feature_matches(a, b);
        return MatchReport {
            count_match: false,
            rotated: false,
            count_difference: None,
            matching_features: features.count(),
            feature_matches: features,
            verdict: Verdict::FeatureOnly,
        };
    };
    let turned = b.rotated();
    let pairing = |other: &FeatureFingerprint| {
        let (bv, bh) = other.frequencies().expect("frequencies checked above");
        let diff = ((av - bv).abs(), (ah - bh).abs());
        let features = feature_matches(a, other);
        let count_match = diff.0 <= COUNT_TOLERANCE && diff.1 <= COUNT_TOLERANCE;
        (count_match, features.count(), diff.0.max(diff.1), diff, features)
    };
    let direct = pairing(b);
    let quarter = pairing(&turned);
    let better = |p: &(bool, usize, f64, (f64, f64), FeatureMatches)| (p.0, p.1, -p.2);
    let (rotated, chosen) = if better(&quarter) > better(&direct) {
        (true, quarter)
    } else {
        (false, direct)
    };
    let (count_match, matching, _, diff, features) = chosen;
    let verdict = match (count_match, matching >= MIN_MATCHING_FEATURES) {
        (true, true) => Verdict::Match,
        (false, true) => Verdict::Conflict,
        _ => Verdict::NoMatch,
    };
    MatchReport {
        count_match,
        rotated,
        count_difference: Some(diff),
        feature_matches: features,
        matching_features: matching,
        verdict,
    }
}
