use irbeacon_core::imaging::{detect_light_sources_in, DetectorParams};
use irbeacon_core::{detect_light_sources, distance_transform, BinaryMap, GrayImage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_distance(map: &BinaryMap) -> Vec<f64> {
    let (w, h) = (map.width(), map.height());
    let on: Vec<(usize, usize)> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).filter(|&(x, y)| map.get(x, y)).collect();
    let diag = (w as f64).hypot(h as f64);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let best = on
                .iter()
                .map(|&(a, b)| (x as f64 - a as f64).hypot(y as f64 - b as f64))
                .fold(f64::INFINITY, f64::min);
            out.push(if best.is_finite() { best } else { diag });
        }
    }
    out
}

fn random_map(rng: &mut impl Rng, w: usize, h: usize) -> BinaryMap {
    let density = [0.0, 0.001, 0.01, 0.05, 0.3, 0.9][rng.random_range(0..6)];
    let bits = (0..w * h).map(|_| rng.random_bool(density)).collect();
    BinaryMap::from_bits(w, h, bits).unwrap()
}

#[test]
fn distance_transform_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..150 {
        let (w, h) = if case < 5 { (64, 64) } else { (rng.random_range(1..=64), rng.random_range(1..=64)) };
        let map = random_map(&mut rng, w, h);
        let got = distance_transform(&map);
        let want = brute_distance(&map);
        for (i, (a, b)) in got.values().iter().zip(&want).enumerate() {
            assert!((a - b).abs() <= 1e-9, "{w}x{h} pixel {i}: {a} vs {b}");
        }
    }
}

#[test]
fn single_pixel_and_empty_maps() {
    let mut map = BinaryMap::empty(5, 4);
    let empty = distance_transform(&map);
    assert!(empty.values().iter().all(|&d| d == empty.max_dist()));
    map.set(4, 3, true);
    let d = distance_transform(&map);
    assert_eq!(d.get(4, 3), 0.0);
    assert_eq!(d.get(0, 0), 5.0);
    assert_eq!(d.get(1, 3), 3.0);
}

/// Direct form of the detection predicate, in exact integer arithmetic.
/// `k2` is `k²` as a fraction `num / den`.
fn brute_detect(img: &GrayImage, window: usize, k2: (i128, i128)) -> Vec<(usize, usize)> {
    let (w, h) = (img.width(), img.height());
    let r = window / 2;
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = img.get(x, y) as i128;
            let (mut n, mut s, mut s2, mut is_max) = (0i128, 0i128, 0i128, true);
            for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    let q = img.get(xx, yy) as i128;
                    n += 1;
                    s += q;
                    s2 += q * q;
                    let earlier = (yy, xx) < (y, x);
                    if q > p || (q == p && earlier) {
                        is_max = false;
                    }
                }
            }
            let excess = n * p - s;
            let spread = n * s2 - s * s;
            if is_max && excess > 0 && k2.1 * excess * excess > k2.0 * spread {
                out.push((x, y));
            }
        }
    }
    out
}

fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> GrayImage {
    let base: u8 = rng.random_range(0..60);
    let noise: u8 = rng.random_range(0..30);
    let mut px: Vec<u8> = (0..w * h).map(|_| base.saturating_add(rng.random_range(0..=noise))).collect();
    for _ in 0..rng.random_range(0..12) {
        let (cx, cy, amp) = (rng.random_range(0..w), rng.random_range(0..h), rng.random_range(20.0..400.0));
        for y in cy.saturating_sub(3)..(cy + 4).min(h) {
            for x in cx.saturating_sub(3)..(cx + 4).min(w) {
                let d2 = (x as f64 - cx as f64).powi(2) + (y as f64 - cy as f64).powi(2);
                let v = px[y * w + x] as f64 + amp * (-d2 / 2.0).exp();
                px[y * w + x] = v.min(255.0) as u8;
            }
        }
    }
    // flat plateaus exercise the tie rule
    if rng.random_bool(0.3) {
        let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
        for y in y0..(y0 + 3).min(h) {
            for x in x0..(x0 + 3).min(w) {
                px[y * w + x] = 255;
            }
        }
    }
    GrayImage::new(w, h, px).unwrap()
}

#[test]
fn detector_equals_brute_force_predicate() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let ks = [(1.5, (9, 4)), (2.0, (4, 1)), (2.5, (25, 4)), (3.0, (9, 1))];
    for _ in 0..300 {
        let (w, h) = (rng.random_range(1..=48), rng.random_range(1..=48));
        let img = random_image(&mut rng, w, h);
        let (k, k2) = ks[rng.random_range(0..ks.len())];
        let window = [3, 5, 7, 9, 15][rng.random_range(0..5)];
        let (map, dets) = detect_light_sources(&img, &DetectorParams { k, window }).unwrap();
        let want = brute_detect(&img, window, k2);
        let mut got: Vec<(usize, usize)> = dets.iter().map(|d| (d.x, d.y)).collect();
        got.sort_by_key(|&(x, y)| (y, x));
        assert_eq!(got, want, "{w}x{h} k={k} window={window}");
        assert_eq!(map.count(), want.len());
        assert!(want.iter().all(|&(x, y)| map.get(x, y)));
        assert!(dets.windows(2).all(|p| p[0].intensity >= p[1].intensity));
    }
}

#[test]
fn plateau_gives_one_detection_at_its_first_pixel() {
    let mut img = GrayImage::filled(20, 20, 10);
    for y in 8..11 {
        for x in 5..9 {
            img.set(x, y, 200);
        }
    }
    let (_, dets) = detect_light_sources(&img, &DetectorParams { k: 2.5, window: 15 }).unwrap();
    assert_eq!(dets.len(), 1);
    assert_eq!((dets[0].x, dets[0].y), (5, 8));
}

fn detections_f64(w: usize, h: usize, px: &[f64], params: &DetectorParams) -> Vec<(usize, usize)> {
    let (_, d) = detect_light_sources_in(w, h, px, params).unwrap();
    let mut v: Vec<_> = d.into_iter().map(|d| (d.x, d.y)).collect();
    v.sort_by_key(|&(x, y)| (y, x));
    v
}

fn image_strategy() -> impl Strategy<Value = (usize, usize, Vec<u8>)> {
    (3usize..28, 3usize..28).prop_flat_map(|(w, h)| (Just(w), Just(h), prop::collection::vec(any::<u8>(), w * h)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    // Integer gain and offset keep every vicinity sum exact, so the
    // detection set must not move at all.
    #[test]
    fn detection_is_affine_invariant(
        (w, h, px) in image_strategy(),
        a in 1u32..6,
        b in -300i32..300,
        window in prop::sample::select(vec![3usize, 5, 7, 9]),
        k in prop::sample::select(vec![1.0f64, 2.0, 2.5, 3.0]),
    ) {
        let params = DetectorParams { k, window };
        let base: Vec<f64> = px.iter().map(|&v| v as f64).collect();
        let mapped: Vec<f64> = base.iter().map(|&v| a as f64 * v + b as f64).collect();
        prop_assert_eq!(detections_f64(w, h, &base, &params), detections_f64(w, h, &mapped, &params));
    }

    #[test]
    fn detection_is_local(
        (w, h, px) in image_strategy(),
        seed in any::<u64>(),
        window in prop::sample::select(vec![3usize, 5, 7]),
    ) {
        let params = DetectorParams { k: 2.5, window };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (px_x, px_y) = (rng.random_range(0..w), rng.random_range(0..h));
        let r = window / 2;
        let mut changed = px.clone();
        for y in 0..h {
            for x in 0..w {
                if x.abs_diff(px_x) > r || y.abs_diff(px_y) > r {
                    changed[y * w + x] = rng.random();
                }
            }
        }
        let before = GrayImage::new(w, h, px).unwrap();
        let after = GrayImage::new(w, h, changed).unwrap();
        let (m0, _) = detect_light_sources(&before, &params).unwrap();
        let (m1, _) = detect_light_sources(&after, &params).unwrap();
        prop_assert_eq!(m0.get(px_x, px_y), m1.get(px_x, px_y));
    }

    #[test]
    fn distance_is_one_lipschitz(
        (w, h) in (2usize..40, 2usize..40),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = random_map(&mut rng, w, h);
        prop_assume!(map.count() > 0);
        let d = distance_transform(&map);
        for y in 0..h {
            for x in 0..w {
                let here = d.get(x, y);
                if x + 1 < w {
                    prop_assert!((here - d.get(x + 1, y)).abs() <= 1.0 + 1e-12);
                }
                if y + 1 < h {
                    prop_assert!((here - d.get(x, y + 1)).abs() <= 1.0 + 1e-12);
                }
                if x + 1 < w && y + 1 < h {
                    prop_assert!((here - d.get(x + 1, y + 1)).abs() <= std::f64::consts::SQRT_2 + 1e-12);
                }
                prop_assert_eq!(here == 0.0, map.get(x, y));
            }
        }
    }
}
