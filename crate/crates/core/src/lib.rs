//! Spectral analysis of woven canvas radiographs.
//!
//! Lattice algebra, a synthetic weave generator, averaged periodograms,
//! thread counting by swatch DFTs and by the spectral triangle, and a
//! four-feature PSD fingerprint for comparing canvases.

pub mod counting;
pub mod error;
pub mod features;
pub mod grid;
pub mod io;
pub mod lattice;
pub mod report;
pub mod spectrum;
pub mod weave;

pub use counting::{CountStatistics, Peak, PeakSet, SwatchMeasurement, TriangleFit};
pub use error::{Error, Result};
pub use features::{FeatureFingerprint, MatchReport, Verdict};
pub use grid::ImageGrid;
pub use lattice::{Basis2D, Vec2};
pub use report::{AnalysisConfig, AnalysisReport};
pub use spectrum::{SegmentationPlan, Spectrum2D, WindowKind};
pub use weave::{BasicShape, Canvas, DegradationSpec, WeavePattern};
