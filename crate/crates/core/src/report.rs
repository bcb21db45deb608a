//! Analysis configuration, the JSON report and the pipelines that fill it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::counting::{
    count_maps, detect_peaks, fit_spectral_triangle, statistics, CountStatistics, FitParams, Peak, PeakParams,
    SwatchMeasurement, SwatchParams, TriangleFit,
};
use crate::error::{Error, Result};
use crate::features::{compare, fingerprint_from_parts, FeatureFingerprint, FeatureParams, MatchReport};
use crate::grid::ImageGrid;
use crate::io::SynthesisRecord;
use crate::spectrum::{averaged_periodogram, SegmentationPlan, Spectrum2D};

/// Schema tag written at the top of every report.
pub const REPORT_VERSION: &str = "canvas-psd-report/1";

/// Every tunable of the analysis; missing TOML keys take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub plan: SegmentationPlan,
    pub swatch: SwatchParams,
    /// Histogram bin width, threads/cm.
    pub histogram_bin: f64,
    pub peaks: PeakParams,
    pub fit: FitParams,
    pub features: FeatureParams,
    /// px/cm; replaces sidecar metadata when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution_override: Option<f64>,
    /// Seed for synthesis.
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            plan: SegmentationPlan::default(),
            swatch: SwatchParams::default(),
            histogram_bin: 0.1,
            peaks: PeakParams::default(),
            fit: FitParams::default(),
            features: FeatureParams::default(),
            resolution_override: None,
            seed: 0,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        self.swatch.validate()?;
        self.features.validate()?;
        if !(self.histogram_bin > 0.0 && self.histogram_bin.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "histogram_bin must be positive, got {}",
                self.histogram_bin
            )));
        }
        let peaks = [
            ("peaks.dc_radius", self.peaks.dc_radius),
            ("peaks.min_separation", self.peaks.min_separation),
            ("peaks.rel_threshold", self.peaks.rel_threshold),
            ("peaks.dynamic_range_db", self.peaks.dynamic_range_db),
            ("peaks.min_prominence_db", self.peaks.min_prominence_db),
        ];
        for (name, v) in peaks {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.fit.p == 0 {
            return Err(Error::InvalidParameter("fit.p must be at least 1".into()));
        }
        if let Some(r) = self.resolution_override {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidParameter(format!("resolution_override must be positive, got {r}")));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Serialization(m) | Error::InvalidParameter(m) => Error::format(path, m),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: "canvas-psd".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Count,
    Psd,
    Fingerprint,
    Compare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub path: String,
    pub width: usize,
    pub height: usize,
    /// px/cm
    pub resolution: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisRecord>,
}

impl SourceInfo {
    pub fn of(image: &ImageGrid, synthesis: Option<SynthesisRecord>) -> Self {
        Self {
            path: image.origin_label().to_string(),
            width: image.width(),
            height: image.height(),
            resolution: image.resolution(),
            synthesis,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdSummary {
    pub n_dft: usize,
    /// threads/cm
    pub bin_width: f64,
    pub segment_count: usize,
    pub overlap_ratio: f64,
    pub peaks: Vec<Peak>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<TriangleFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub result: MatchReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub version: String,
    pub tool: ToolInfo,
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceInfo>,
    pub config: AnalysisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counting: Option<CountStatistics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psd: Option<PsdSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<FeatureFingerprint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
}

impl AnalysisReport {
    fn new(command: Command, source: Option<SourceInfo>, config: &AnalysisConfig) -> Self {
        Self {
            version: REPORT_VERSION.into(),
            tool: ToolInfo::default(),
            command,
            source,
            config: config.clone(),
            counting: None,
            psd: None,
            fingerprint: None,
            comparison: None,
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if report.version != REPORT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported report version {:?}, expected {REPORT_VERSION:?}",
                report.version
            )));
        }
        Ok(report)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Serialization(m) => Error::format(path, m),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Swatch maps and their statistics.
pub fn count_report(
    image: &ImageGrid,
    config: &AnalysisConfig,
    synthesis: Option<SynthesisRecord>,
) -> Result<(AnalysisReport, Vec<SwatchMeasurement>)> {
    config.validate()?;
    let maps = count_maps(image, &config.swatch)?;
    let mut report = AnalysisReport::new(Command::Count, Some(SourceInfo::of(image, synthesis)), config);
    report.counting = Some(statistics(&maps, config.histogram_bin)?);
    Ok((report, maps))
}

fn spectral(
    command: Command,
    image: &ImageGrid,
    config: &AnalysisConfig,
    synthesis: Option<SynthesisRecord>,
) -> Result<(AnalysisReport, Spectrum2D)> {
    config.validate()?;
    let psd = averaged_periodogram(image, &config.plan)?;
    let peaks = detect_peaks(&psd, &config.peaks);
    let fit = fit_spectral_triangle(&peaks, &config.fit);
    let fingerprint = fingerprint_from_parts(
        &psd,
        &peaks,
        fit.as_ref(),
        config.plan.mainlobe_radius(image.resolution()),
        &config.features,
    );
    let mut report = AnalysisReport::new(command, Some(SourceInfo::of(image, synthesis)), config);
    if command == Command::Psd {
        report.psd = Some(PsdSummary {
            n_dft: psd.n_dft(),
            bin_width: psd.bin_width(),
            segment_count: psd.segment_count(),
            overlap_ratio: config.plan.overlap_ratio(),
            peaks: peaks.peaks,
            fit_error: fit.as_ref().err().map(|e| e.to_string()),
            fit: fit.ok(),
        });
    }
    report.fingerprint = Some(fingerprint);
    Ok((report, psd))
}

/// Averaged periodogram, peaks, triangle fit and fingerprint.
pub fn psd_report(
    image: &ImageGrid,
    config: &AnalysisConfig,
    synthesis: Option<SynthesisRecord>,
) -> Result<(AnalysisReport, Spectrum2D)> {
    spectral(Command::Psd, image, config, synthesis)
}

/// Like [`psd_report`] but keeps only the fingerprint.
pub fn fingerprint_report(
    image: &ImageGrid,
    config: &AnalysisConfig,
    synthesis: Option<SynthesisRecord>,
) -> Result<AnalysisReport> {
    spectral(Command::Fingerprint, image, config, synthesis).map(|(r, _)| r)
}

/// Compares the fingerprints stored in two reports.
pub fn compare_reports(
    a: (&str, &AnalysisReport),
    b: (&str, &AnalysisReport),
    config: &AnalysisConfig,
) -> Result<AnalysisReport> {
    let fingerprint = |(name, r): (&str, &AnalysisReport)| {
        r.fingerprint
            .clone()
            .ok_or_else(|| Error::InvalidParameter(format!("{name}: report has no fingerprint")))
    };
    let (fa, fb) = (fingerprint(a)?, fingerprint(b)?);
    let mut report = AnalysisReport::new(Command::Compare, None, config);
    report.comparison = Some(Comparison {
        a: a.0.to_string(),
        b: b.0.to_string(),
        result: compare(&fa, &fb),
    });
    Ok(report)
}
