use std::collections::BTreeSet;

use fieldmap_core::confidence::{retention_curve, threshold_polygons};
use fieldmap_core::indicators::entropy;
use fieldmap_core::raster::{global_cells_covering, GridSpec, Raster, PIXEL_10M_DEG};
use fieldmap_core::stitch::{plan_patches, stitch, PatchProbs, CLASS_FIELD, PATCH_SIZE};
use fieldmap_core::vectorize::{extract_fields, DEFAULT_MIN_PIXELS};
use proptest::prelude::*;

fn grid(w: usize, h: usize) -> GridSpec {
    GridSpec::from_origin(28.0, -14.0, PIXEL_10M_DEG, w, h).unwrap()
}

fn scene() -> impl Strategy<Value = (Vec<bool>, Vec<Option<f32>>)> {
    (prop::collection::vec(any::<bool>(), 150 * 150), prop::collection::vec(prop::option::weighted(0.9, 0.0f32..=1.0), 9))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn higher_thresholds_keep_subsets((bits, scores) in scene(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let g = grid(150, 150);
        let classes = Raster::new(g, bits.iter().map(|&x| if x { CLASS_FIELD } else { 0 }).collect(), None).unwrap();
        let polys = extract_fields(&classes, DEFAULT_MIN_PIXELS, "t", 2024);
        let (cells, _) = global_cells_covering(&g);
        prop_assert_eq!(cells.len(), scores.len());
        let conf = Raster::new(cells, scores.iter().map(|s| s.unwrap_or(f32::NAN)).collect(), Some(f32::NAN)).unwrap();

        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let ids = |t| threshold_polygons(&polys, &conf, t).into_iter().map(|p| p.id).collect::<BTreeSet<_>>();
        prop_assert!(ids(hi).is_subset(&ids(lo)));

        let curve = retention_curve(&polys, &conf, &[0.0, lo, hi, 1.0]);
        for w in curve.windows(2) {
            prop_assert!(w[1].fields <= w[0].fields && w[1].area_m2 <= w[0].area_m2);
        }
    }

    #[test]
    fn stitched_pixels_are_distributions(seed in any::<u64>(), extra in 1usize..200) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (PATCH_SIZE, PATCH_SIZE + extra);
        let plan = plan_patches((h, w)).unwrap();
        let patches: Vec<_> = plan.windows.iter().map(|&win| {
            let probs: PatchProbs = (0..PATCH_SIZE * PATCH_SIZE).map(|_| {
                let v: [f64; 3] = [rng.gen(), rng.gen(), rng.gen::<f64>() + 1e-9];
                let s: f64 = v.iter().sum();
                [v[0] / s, v[1] / s, v[2] / s]
            }).collect();
            (win, probs)
        }).collect();
        let out = stitch(&patches, &plan, grid(w, h)).unwrap();
        for p in &out.data {
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let e = entropy(*p);
            prop_assert!((0.0..=3f64.ln() + 1e-12).contains(&e));
        }
    }
}
