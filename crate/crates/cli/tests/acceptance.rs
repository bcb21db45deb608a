//! Acceptance suite: one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use canvas_core::counting::{count_maps, detect_peaks, fit_spectral_triangle, statistics, PeakParams, PeakSet};
use canvas_core::features::{fingerprint, AxisEmphasis, DiagonalConnection, FingerprintConfig};
use canvas_core::lattice::{fundamental_area, lattice_points, reciprocal_basis, PointSet2D, Rect};
use canvas_core::spectrum::averaged_periodogram;
use canvas_core::weave::{pattern_basis, synthesize_image};
use canvas_core::{
    AnalysisConfig, Basis2D, BasicShape, Canvas, DegradationSpec, ImageGrid, SegmentationPlan, Vec2, WeavePattern,
    WindowKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

struct Outcome {
    pass: bool,
    title: &'static str,
    detail: String,
}

fn outcome(pass: bool, title: &'static str, detail: String) -> Outcome {
    Outcome { pass, title, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn quarter_turn(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

fn random_basis(rng: &mut ChaCha8Rng) -> Basis2D {
    loop {
        let la = 0.05 * 40f64.powf(rng.gen::<f64>());
        let lb = 0.05 * 40f64.powf(rng.gen::<f64>());
        let phi = rng.gen_range(0.0..2.0 * PI);
        let theta = rng.gen_range(0.1..PI - 0.1) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let a = Vec2::new(la * phi.cos(), la * phi.sin());
        let b = Vec2::new(lb * (phi + theta).cos(), lb * (phi + theta).sin());
        if let Ok(basis) = Basis2D::new(a, b) {
            return basis;
        }
    }
}

fn inside(points: Vec<Vec2>, half: f64) -> PointSet2D {
    PointSet2D {
        points: points.into_iter().filter(|p| p.x.abs() <= half && p.y.abs() <= half).collect(),
        bounds: Rect::centered(half),
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut ortho, mut length, mut rotation, mut area, mut points) = (0f64, 0f64, 0f64, 0f64, 0usize);
    let mut set_failures = 0;
    let mut errors = 0;
    for _ in 0..100 {
        let q = random_basis(&mut rng);
        let Ok(r) = reciprocal_basis(&q) else {
            errors += 1;
            continue;
        };
        ortho = ortho
            .max((q.a.dot(r.a) - 1.0).abs())
            .max((q.b.dot(r.b) - 1.0).abs())
            .max(q.a.dot(r.b).abs() / (q.a.norm() * r.b.norm()))
            .max(q.b.dot(r.a).abs() / (q.b.norm() * r.a.norm()));
        let sin = (q.a.cross(q.b) / (q.a.norm() * q.b.norm())).abs();
        length = length
            .max(rel(r.a.norm(), 1.0 / (q.a.norm() * sin)))
            .max(rel(r.b.norm(), 1.0 / (q.b.norm() * sin)));
        let det = q.det();
        let turned_a = quarter_turn(q.a) * (1.0 / det);
        let turned_b = quarter_turn(q.b) * (-1.0 / det);
        rotation = rotation
            .max(r.b.distance(turned_a) / r.b.norm())
            .max(r.a.distance(turned_b) / r.a.norm());
        let (Ok(aq), Ok(ar)) = (fundamental_area(&q), fundamental_area(&r)) else {
            errors += 1;
            continue;
        };
        area = area.max((aq * ar - 1.0).abs());

        let half = 12.0 / det.abs().sqrt() * rng.gen_range(0.9..1.1);
        let tol = 1e-9;
        let direct = inside(lattice_points(&r, &Rect::centered(1.01 * half)).unwrap().points, half);
        let source = lattice_points(&q, &Rect::centered(1.5 * half * det.abs())).unwrap();
        let mapped = inside(
            source.points.iter().map(|&p| quarter_turn(p) * (1.0 / det)).collect(),
            half,
        );
        let back = reciprocal_basis(&r).unwrap();
        let window = Rect::centered(12.0 * det.abs().sqrt());
        let dual_ok = lattice_points(&back, &window)
            .unwrap()
            .same_points(&lattice_points(&q, &window).unwrap(), tol);
        if !(direct.same_points(&mapped, tol) && dual_ok && !direct.is_empty()) {
            set_failures += 1;
        }
        points += direct.len();
    }
    let elapsed = start.elapsed();
    let pass = errors == 0
        && ortho <= 1e-10
        && length <= 1e-10
        && rotation <= 1e-10
        && area <= 1e-12
        && set_failures == 0
        && elapsed < Duration::from_secs(5);
    outcome(
        pass,
        "lattice duality over 100 random bases",
        format!(
            "orthogonality {ortho:.1e} length {length:.1e} rotation {rotation:.1e} (tol 1e-10), area product {area:.1e} \
             (tol 1e-12), point-set mismatches {set_failures} over {points} points, errors {errors}, {:.2} s (limit 5 s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Normalized squared window transform at `nu` cycles/px.
fn window_response(window: &[f64], nu: f64) -> f64 {
    let mid = 0.5 * (window.len() - 1) as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (k, w) in window.iter().enumerate() {
        let ph = 2.0 * PI * nu * (k as f64 - mid);
        re += w * ph.cos();
        im += w * ph.sin();
    }
    let dc: f64 = window.iter().sum();
    (re * re + im * im) / (dc * dc)
}

/// Tabulated window response over frequency offsets in `[-reach, reach]`.
struct Kernel {
    step: f64,
    table: Vec<f64>,
}

impl Kernel {
    fn new(window: &[f64], res: f64, reach: f64) -> Self {
        let step = 1e-3;
        let table = (0..=(reach / step).ceil() as usize + 1)
            .map(|i| window_response(window, i as f64 * step / res))
            .collect();
        Self { step, table }
    }

    fn at(&self, df: f64) -> f64 {
        let x = df.abs() / self.step;
        let i = x as usize;
        if i + 1 >= self.table.len() {
            return 0.0;
        }
        let t = x - i as f64;
        self.table[i] * (1.0 - t) + self.table[i + 1] * t
    }
}

fn matrix_patterns() -> Vec<(u32, u32)> {
    let mut pats = vec![(2, 1)];
    for m in 3..=5 {
        pats.push((m, 1));
        pats.push((m, m - 1));
    }
    pats
}

const FREQS: [f64; 3] = [6.0, 10.0, 16.0];

/// Model prominence a lattice point needs above the detector's before it
/// must be detected; the model sums neighbour responses incoherently.
const MODEL_MARGIN_DB: f64 = 3.0;

struct MatrixCase {
    m: u32,
    n: u32,
    f_v: f64,
    f_h: f64,
    peaks: PeakSet,
}

fn criterion_2(cases: &mut Vec<MatrixCase>) -> Outcome {
    let start = Instant::now();
    let res = 200.0;
    let plan = SegmentationPlan::default();
    let reach = 2.0 * plan.mainlobe_radius(res);
    let kernel = Kernel::new(&WindowKind::BlackmanHarris.coefficients(plan.segment), res, reach);
    let prominence = 10f64.powf(PeakParams::default().min_prominence_db / 10.0);
    let margin = 10f64.powf(MODEL_MARGIN_DB / 10.0);
    let (mut borderline, mut borderline_found) = (0, 0);
    let (mut extra, mut missed, mut checked, mut bad) = (0, 0, 0, Vec::new());
    for (m, n) in matrix_patterns() {
        for f_v in FREQS {
            for f_h in FREQS {
                let pattern = WeavePattern::new(m, n, 1, 1.0 / f_v, 1.0 / f_h).unwrap();
                let shape = BasicShape::default_for(&pattern);
                let image =
                    synthesize_image(&pattern, &shape, &Canvas::square(3.0, res), &DegradationSpec::none()).unwrap();
                let psd = averaged_periodogram(&image, &plan).unwrap();
                let bin = psd.bin_width();
                let peaks = detect_peaks(&psd, &PeakParams::default());

                let band = 2.0 * f_v.max(f_h);
                let recip = reciprocal_basis(&pattern_basis(&pattern).unwrap()).unwrap();
                let lattice = lattice_points(&recip, &Rect::centered(band + reach)).unwrap().points;
                let power = |f: Vec2| {
                    (sinc(shape.width * f.x) * sinc(shape.height * f.y) * sinc(f.x / res) * sinc(f.y / res)).powi(2)
                };
                let model = |f: Vec2| -> f64 {
                    lattice
                        .iter()
                        .filter(|q| (f.x - q.x).abs() < reach && (f.y - q.y).abs() < reach)
                        .map(|&q| power(q) * kernel.at(f.x - q.x) * kernel.at(f.y - q.y))
                        .sum()
                };
                let model_prominence = |f: Vec2| -> f64 {
                    let top = model(f);
                    let saddle = lattice
                        .iter()
                        .filter(|q| q.distance(f) > 1e-9 && q.distance(f) < reach && model(**q) > top)
                        .map(|&q| (0..=64).map(|i| model(f + (q - f) * (i as f64 / 64.0))).fold(f64::INFINITY, f64::min))
                        .fold(0.0, f64::max);
                    top / saddle
                };
                let predicted: Vec<Vec2> = lattice
                    .iter()
                    .copied()
                    .filter(|f| f.norm() <= band && f.norm() > peaks.dc_radius && (f.y > 0.0 || (f.y == 0.0 && f.x > 0.0)))
                    .collect();
                let strongest = predicted.iter().map(|&f| power(f)).fold(0.0, f64::max);
                let near = |a: Vec2, b: Vec2| a.distance(b) <= bin || a.distance(-b) <= bin;

                let off = peaks
                    .peaks
                    .iter()
                    .filter(|p| p.freq.norm() <= band && !lattice.iter().any(|&f| near(p.freq, f)))
                    .count();
                let strong: Vec<(Vec2, f64)> = predicted
                    .iter()
                    .filter(|&&f| power(f) >= strongest * 10f64.powf(-2.5))
                    .map(|&f| (f, model_prominence(f)))
                    .collect();
                let lost = strong
                    .iter()
                    .filter(|(f, prom)| *prom >= prominence * margin && !peaks.peaks.iter().any(|p| near(p.freq, *f)))
                    .count();
                for (f, prom) in &strong {
                    if *prom >= prominence && *prom < prominence * margin {
                        borderline += 1;
                        borderline_found += usize::from(peaks.peaks.iter().any(|p| near(p.freq, *f)));
                    }
                }
                checked += 1;
                extra += off;
                missed += lost;
                if off + lost > 0 {
                    bad.push(format!("({m},{n}) {f_v}/{f_h}"));
                }
                cases.push(MatrixCase { m, n, f_v, f_h, peaks });
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = extra == 0 && missed == 0 && elapsed < Duration::from_secs(300);
    outcome(
        pass,
        "psd peaks on the reciprocal lattice within one bin",
        format!(
            "{checked} weaves, {extra} off-lattice peaks, {missed} resolvable lattice points missed{} \
             (detected {borderline_found} of {borderline} not required within {MODEL_MARGIN_DB} dB of the prominence threshold), {:.1} s (limit 300 s)",
            if bad.is_empty() { String::new() } else { format!(" in {}", bad.join(", ")) },
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3(cases: &[MatrixCase]) -> Outcome {
    let start = Instant::now();
    let config = AnalysisConfig::default();
    let bin = 200.0 / config.plan.n_dft as f64;
    let mut clean_fail = Vec::new();
    let mut worst_clean = 0f64;
    for c in cases {
        match fit_spectral_triangle(&c.peaks, &config.fit) {
            Ok(t) => {
                let ev = (t.f_v - c.f_v).abs() / bin.max(0.01 * c.f_v);
                let eh = (t.f_h - c.f_h).abs() / bin.max(0.01 * c.f_h);
                worst_clean = worst_clean.max(ev).max(eh);
                if t.m != c.m || t.n != c.n || ev > 1.0 || eh > 1.0 {
                    clean_fail.push(format!("({},{}) {}/{}", c.m, c.n, c.f_v, c.f_h));
                }
            }
            Err(_) => clean_fail.push(format!("({},{}) {}/{} no fit", c.m, c.n, c.f_v, c.f_h)),
        }
    }
    let mut noisy_fail = Vec::new();
    let mut worst_noisy = 0f64;
    let mut seed = 0;
    for f_v in FREQS {
        for f_h in FREQS {
            seed += 1;
            let pattern = WeavePattern::plain(f_v, f_h).unwrap();
            let degradation = DegradationSpec {
                jitter_sigma_cm: 0.05 * pattern.d_v,
                blur_sigma_px: 1.0,
                snr_db: Some(10.0),
                seed,
                ..DegradationSpec::default()
            };
            let image = synthesize_image(
                &pattern,
                &BasicShape::default_for(&pattern),
                &Canvas::square(3.0, 200.0),
                &degradation,
            )
            .unwrap();
            let psd = averaged_periodogram(&image, &config.plan).unwrap();
            match fit_spectral_triangle(&detect_peaks(&psd, &config.peaks), &config.fit) {
                Ok(t) => {
                    let err = rel(t.f_v, f_v).max(rel(t.f_h, f_h));
                    worst_noisy = worst_noisy.max(err);
                    if t.m != 2 || t.n != 1 || err > 0.05 {
                        noisy_fail.push(format!("{f_v}/{f_h}"));
                    }
                }
                Err(_) => noisy_fail.push(format!("{f_v}/{f_h} no fit")),
            }
        }
    }
    let pass = clean_fail.is_empty() && noisy_fail.is_empty();
    let list = |v: &[String]| if v.is_empty() { String::new() } else { format!(" [{}]", v.join(", ")) };
    outcome(
        pass,
        "triangle fit round trip",
        format!(
            "clean: {}/{} exact m, n with worst error {worst_clean:.2} of max(bin, 1%){}; degraded plain: {}/9 within 5% \
             with worst {:.2}%{}, {:.1} s",
            cases.len() - clean_fail.len(),
            cases.len(),
            list(&clean_fail),
            9 - noisy_fail.len(),
            100.0 * worst_noisy,
            list(&noisy_fail),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let n = 16;
    let realizations = 4000;
    let plan = SegmentationPlan::new(n, n, WindowKind::BlackmanHarris, n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut variances = Vec::new();
    for k_side in [1, 2, 4] {
        let side = n * k_side;
        let mut samples = Vec::with_capacity(realizations);
        for _ in 0..realizations {
            let pixels: Vec<f64> = (0..side * side).map(|_| rng.sample(StandardNormal)).collect();
            let image = ImageGrid::new(side, side, pixels, 1.0, "white noise").unwrap();
            let psd = averaged_periodogram(&image, &plan).unwrap();
            assert_eq!(psd.segment_count(), k_side * k_side);
            samples.push(psd.at_offset(3, 2).unwrap());
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
        variances.push((k_side * k_side, var));
    }
    let (_, v1) = variances[0];
    let ratios: Vec<(usize, f64)> = variances.iter().map(|&(k, v)| (k, v * k as f64 / v1)).collect();
    let elapsed = start.elapsed();
    let pass = ratios.iter().all(|&(_, r)| (r - 1.0).abs() <= 0.2) && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        "averaged periodogram variance scales as 1/K",
        format!(
            "{realizations} realizations, K*var(K)/var(1): {} (tol 20%), {:.1} s (limit 120 s)",
            ratios.iter().map(|(k, r)| format!("K={k} {r:.3}")).collect::<Vec<_>>().join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let config = AnalysisConfig::default();
    let (f_v, f_h) = (10.0, 7.0);
    let pattern = WeavePattern::plain(f_v, f_h).unwrap();
    let shape = BasicShape::default_for(&pattern);
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 1..=10 {
        let degradation = DegradationSpec {
            merge_sigma_v: 0.4,
            seed,
            ..DegradationSpec::default()
        };
        let image = synthesize_image(&pattern, &shape, &Canvas::square(3.0, 200.0), &degradation).unwrap();
        let stats = statistics(&count_maps(&image, &config.swatch).unwrap(), config.histogram_bin).unwrap();
        let hist_err = rel(stats.vertical.mode, f_v).max(rel(stats.horizontal.mode, f_h));
        let psd = averaged_periodogram(&image, &config.plan).unwrap();
        let psd_err = fit_spectral_triangle(&detect_peaks(&psd, &config.peaks), &config.fit)
            .map(|t| rel(t.f_v, f_v).max(rel(t.f_h, f_h)))
            .unwrap_or(f64::INFINITY);
        if hist_err > 0.2 && psd_err <= 0.05 {
            wins += 1;
        }
        rows.push(format!("{:.0}%/{:.1}%", 100.0 * hist_err, 100.0 * psd_err));
    }
    outcome(
        wins >= 9,
        "thread merging defeats the histogram but not the psd triangle",
        format!(
            "{wins}/10 trials with histogram error > 20% and psd error <= 5% (need 9); histogram/psd errors {}, {:.1} s",
            rows.join(" "),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn exact_bin_weave(pattern: &WeavePattern) -> ImageGrid {
    let res = 204.8;
    let canvas = Canvas::square(600.0 / res, res);
    synthesize_image(pattern, &BasicShape::default_for(pattern), &canvas, &DegradationSpec::none()).unwrap()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let plan = SegmentationPlan::default();
    let config = FingerprintConfig::default();
    let weaves = [
        ("plain 10/7", WeavePattern::plain(10.0, 7.0).unwrap()),
        ("twill 5,1 13/9", WeavePattern::twill(5, 1, 13.0, 9.0).unwrap()),
    ];
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, pattern) in &weaves {
        let image = exact_bin_weave(pattern);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| fingerprint(&image, &plan, &config).unwrap())
        };
        let reference = run(1);
        let json = serde_json::to_string(&reference).unwrap();
        let identical = [run(1), run(4), run(4)]
            .iter()
            .all(|fp| serde_json::to_string(fp).unwrap() == json && fp == &reference);

        let turned = fingerprint(&image.rotate90(), &plan, &config).unwrap();
        let expected = reference.rotated();
        let flags = turned.edge_shape == expected.edge_shape
            && turned.center_shape == expected.center_shape
            && turned.diagonal_connection == expected.diagonal_connection
            && turned.axis_emphasis == expected.axis_emphasis;
        let freq_err = match (turned.frequencies(), reference.frequencies()) {
            (Some((tv, th)), Some((rv, rh))) => rel(tv, rh).max(rel(th, rv)),
            _ => f64::INFINITY,
        };
        let directional = !matches!(reference.diagonal_connection, DiagonalConnection::None)
            || !matches!(reference.axis_emphasis, AxisEmphasis::None);
        pass &= identical && flags && freq_err <= 1e-9;
        notes.push(format!(
            "{name}: repeat/1 vs 4 threads {}, rotated flags {} ({:?} -> {:?}{}), f swap error {freq_err:.1e}",
            if identical { "bit-identical" } else { "DIFFERENT" },
            if flags { "swapped" } else { "WRONG" },
            reference.diagonal_connection,
            turned.diagonal_connection,
            if directional { "" } else { ", no directional flag" },
        ));
    }
    outcome(
        pass,
        "fingerprint determinism and quarter-turn covariance",
        format!("{} (tol 1e-9), {:.1} s", notes.join("; "), start.elapsed().as_secs_f64()),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let default_plan = SegmentationPlan::default();
    let s = default_plan.overlap_ratio();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for _ in 0..20 {
        let n = rng.gen_range(2..=64);
        let d = rng.gen_range(1..=n);
        let w = rng.gen_range(n..=6 * n);
        let h = rng.gen_range(n..=6 * n);
        let plan = SegmentationPlan::new(n, d, WindowKind::Hann, n).unwrap();
        let mut brute = 0;
        for y in 0..h {
            for x in 0..w {
                if x % d == 0 && y % d == 0 && x + n <= w && y + n <= h {
                    brute += 1;
                }
            }
        }
        let image = ImageGrid::filled(w, h, 0.0, 1.0).unwrap();
        let origins = canvas_core::spectrum::segment_origins(&image, &plan).unwrap().len();
        if plan.segment_count(w, h) != brute || origins != brute {
            mismatches += 1;
        }
    }
    outcome(
        s == 3.0 && mismatches == 0,
        "overlap ratio and segment counts",
        format!(
            "s = {s} for N=400, D=100; segment count mismatches {mismatches}/20 against enumeration, {:.3} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_canvas-psd"))
        .args(args)
        .env_remove("CANVAS_PSD_CONFIG")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("canvas-psd {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn end_to_end(dir: &Path) -> Result<(bool, String), String> {
    let p = |name: &str| dir.join(name).display().to_string();
    let synth = |out: &str, extra: &[&str]| {
        let mut args = vec!["synth", "--snr-db", "20"];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["-o", out]);
        cli(&args)
    };
    synth(&p("a.png"), &["--fv", "10", "--fh", "7", "--seed", "7"])?;
    synth(&p("b.png"), &["--fv", "10", "--fh", "7", "--seed", "8"])?;
    synth(&p("c.png"), &["--pattern", "twill", "--m", "5", "--n", "1", "--fv", "13", "--fh", "9", "--seed", "7"])?;
    for name in ["a", "b", "c"] {
        cli(&["psd", &p(&format!("{name}.png")), "-o", &p(&format!("{name}.json"))])?;
    }
    cli(&["compare", &p("a.json"), &p("b.json"), "-o", &p("ab.json")])?;
    cli(&["compare", &p("a.json"), &p("c.json"), "-o", &p("ac.json")])?;

    synth(&p("a2.png"), &["--fv", "10", "--fh", "7", "--seed", "7"])?;
    cli(&["psd", &p("a.png"), "-o", &p("a_again.json")])?;
    cli(&["compare", &p("a.json"), &p("b.json"), "-o", &p("ab_again.json")])?;
    let bytes = |name: &str| std::fs::read(dir.join(name)).map_err(|e| e.to_string());
    let repeat = bytes("a.json")? == bytes("a_again.json")?
        && bytes("ab.json")? == bytes("ab_again.json")?
        && bytes("a.png")? == bytes("a2.png")?;

    let ab = read_json(&dir.join("ab.json"))?;
    let ac = read_json(&dir.join("ac.json"))?;
    let verdict = |v: &Value| v["comparison"]["result"]["verdict"].as_str().unwrap_or("missing").to_string();
    let result = &ac["comparison"]["result"];
    let count_gap = result["count_difference"]
        .as_array()
        .map(|d| d.iter().filter_map(Value::as_f64).fold(0.0, f64::max))
        .unwrap_or(0.0);
    let differing = 4 - result["matching_features"].as_u64().unwrap_or(4);
    let pass = verdict(&ab) == "match" && verdict(&ac) == "no-match" && count_gap > 1.0 && differing >= 2 && repeat;
    Ok((
        pass,
        format!(
            "same family: {}; different weave (count gap {count_gap:.2}/cm, {differing} features differ): {}; repeat runs {}",
            verdict(&ab),
            verdict(&ac),
            if repeat { "byte-identical" } else { "DIFFER" }
        ),
    ))
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().expect("temporary directory");
    let (pass, detail) = end_to_end(dir.path()).unwrap_or_else(|e| (false, e));
    outcome(
        pass,
        "cli synth, psd and compare",
        format!("{detail}, {:.1} s", start.elapsed().as_secs_f64()),
    )
}

fn main() -> ExitCode {
    let mut cases = Vec::new();
    let results = [
        criterion_1(),
        criterion_2(&mut cases),
        criterion_3(&cases),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),

    ];
    let mut failed = 0;
    for (i, r) in results.iter().enumerate() {
        println!("criterion {} {} {}: {}", i + 1, if r.pass { "PASS" } else { "FAIL" }, r.title, r.detail);
        failed += usize::from(!r.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
