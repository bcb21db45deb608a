use canvas_core::lattice::{canonicalize, fundamental_area, lattice_points, reciprocal_basis, Rect};
use canvas_core::spectrum::{averaged_periodogram, segment_origins};
use canvas_core::{Basis2D, ImageGrid, SegmentationPlan, Vec2, WindowKind};
use proptest::prelude::*;

fn basis() -> impl Strategy<Value = Basis2D> {
    (0.1f64..3.0, 0.1f64..3.0, 0.0f64..std::f64::consts::TAU, 0.2f64..2.9)
        .prop_map(|(la, lb, phi, theta)| {
            Basis2D::new(
                Vec2::new(la * phi.cos(), la * phi.sin()),
                Vec2::new(lb * (phi + theta).cos(), lb * (phi + theta).sin()),
            )
            .unwrap()
        })
}

proptest! {
    #[test]
    fn reciprocal_is_dual(q in basis()) {
        let r = reciprocal_basis(&q).unwrap();
        prop_assert!((q.a.dot(r.a) - 1.0).abs() < 1e-10);
        prop_assert!((q.b.dot(r.b) - 1.0).abs() < 1e-10);
        prop_assert!(q.a.dot(r.b).abs() < 1e-10);
        prop_assert!(q.b.dot(r.a).abs() < 1e-10);
        let area = fundamental_area(&q).unwrap() * fundamental_area(&r).unwrap();
        prop_assert!((area - 1.0).abs() < 1e-12);
        let back = reciprocal_basis(&r).unwrap();
        prop_assert!(back.a.distance(q.a) < 1e-10 * q.a.norm());
        prop_assert!(back.b.distance(q.b) < 1e-10 * q.b.norm());
    }

    #[test]
    fn canonical_form_keeps_the_lattice(ax in 0.2f64..2.0, bx in -3.0f64..3.0, by in 0.2f64..2.0, flip in any::<bool>()) {
        let (a, b) = (Vec2::new(ax, 0.0), Vec2::new(bx, by));
        let q = if flip { Basis2D::new(b, a * -1.0) } else { Basis2D::new(a, b) }.unwrap();
        let c = canonicalize(&q).unwrap();
        prop_assert!(c.is_canonical());
        let window = Rect::centered(6.0);
        let lhs = lattice_points(&q, &window).unwrap();
        let rhs = lattice_points(&c, &window).unwrap();
        prop_assert!(lhs.same_points(&rhs, 1e-9));
    }

    #[test]
    fn lattice_points_are_exactly_the_members(q in basis()) {
        let window = Rect::centered(3.0);
        let set = lattice_points(&q, &window).unwrap();
        for p in &set.points {
            let (i, j) = q.coordinates(*p);
            prop_assert!((i - i.round()).abs() < 1e-9 && (j - j.round()).abs() < 1e-9);
            prop_assert!(window.contains(*p, 1e-12));
        }
        let mut brute = 0;
        for i in -200i64..=200 {
            for j in -200i64..=200 {
                let p = q.point(i, j);
                if p.x.abs() <= 3.0 && p.y.abs() <= 3.0 {
                    brute += 1;
                }
            }
        }
        prop_assert_eq!(set.len(), brute);
    }

    #[test]
    fn segment_count_matches_origins(n in 2usize..40, d_frac in 0.05f64..1.0, w_extra in 0usize..90, h_extra in 0usize..90) {
        let d = ((n as f64 * d_frac).ceil() as usize).clamp(1, n);
        let plan = SegmentationPlan::new(n, d, WindowKind::Rectangular, n).unwrap();
        let (w, h) = (n + w_extra, n + h_extra);
        let image = ImageGrid::filled(w, h, 1.0, 1.0).unwrap();
        let origins = segment_origins(&image, &plan).unwrap();
        prop_assert_eq!(origins.len(), plan.segment_count(w, h));
        prop_assert_eq!(plan.segment_count(w, h), (1 + (w - n) / d) * (1 + (h - n) / d));
        prop_assert!(origins.iter().all(|&(x, y)| x % d == 0 && y % d == 0 && x + n <= w && y + n <= h));
    }

    #[test]
    fn periodogram_is_symmetric_and_satisfies_parseval(pixels in prop::collection::vec(-1.0f64..1.0, 64)) {
        let image = ImageGrid::new(8, 8, pixels.clone(), 1.0, "random").unwrap();
        let plan = SegmentationPlan::new(8, 8, WindowKind::Rectangular, 16).unwrap();
        let psd = averaged_periodogram(&image, &plan).unwrap();
        let nd = psd.n_dft() as i64;
        let energy: f64 = pixels.iter().map(|v| v * v).sum();
        let total: f64 = psd.values().iter().sum();
        prop_assert!((total - (nd * nd) as f64 * energy / 8.0).abs() <= 1e-9 * total.max(1.0));
        for ky in -(nd / 2) + 1..nd / 2 {
            for kx in -(nd / 2) + 1..nd / 2 {
                let a = psd.at_offset(kx, ky).unwrap();
                let b = psd.at_offset(-kx, -ky).unwrap();
                prop_assert!(a >= 0.0);
                prop_assert!((a - b).abs() <= 1e-9 * a.max(b).max(1e-12));
            }
        }
    }
}
