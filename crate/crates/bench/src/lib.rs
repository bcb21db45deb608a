//! Shared fixtures for the benchmarks in `benches/`.

use canvas_core::{BasicShape, Canvas, DegradationSpec, ImageGrid, WeavePattern};

/// Plain weave of `f_v × f_h` threads/cm on a square canvas at 200 px/cm.
pub fn plain_weave(f_v: f64, f_h: f64, side_cm: f64) -> ImageGrid {
    let pattern = WeavePattern::plain(f_v, f_h).expect("valid pattern");
    canvas_core::weave::synthesize_image(
        &pattern,
        &BasicShape::default_for(&pattern),
        &Canvas::square(side_cm, 200.0),
        &DegradationSpec::seeded(1),
    )
    .expect("synthesis")
}
