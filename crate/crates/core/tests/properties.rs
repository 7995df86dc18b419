use std::collections::VecDeque;

use gridmask::augment::{apply_mask, schedule_probability, ImageTensor, SchedulePolicy};
use gridmask::baseline::{cutout_mask, has_mask, CutoutParams, HasParams};
use gridmask::mask::{
    keep_ratio, render_grid_mask, render_random_grid_mask, reverse_mask, GridSpec, Mask,
};
use gridmask::rng::stream;
use proptest::prelude::*;
use rand::Rng;

fn spec_strategy() -> impl Strategy<Value = GridSpec> {
    (0.0f64..=1.0, 1u32..=48)
        .prop_flat_map(|(r, d)| (Just(r), Just(d), 0..d, 0..d))
        .prop_map(|(r, d, dx, dy)| GridSpec::new(r, d, dx, dy, 0.0).unwrap())
}

/// 4-connected components of dropped cells, as sizes.
fn dropped_components(mask: &Mask) -> Vec<(usize, bool)> {
    let (h, w) = (mask.height(), mask.width());
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    for start in 0..h * w {
        if seen[start] || mask.cells()[start] == 1 {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let (mut size, mut touches_border) = (0, false);
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let (i, j) = (idx / w, idx % w);
            touches_border |= i == 0 || j == 0 || i == h - 1 || j == w - 1;
            let mut visit = |ni: usize, nj: usize| {
                let n = ni * w + nj;
                if !seen[n] && mask.cells()[n] == 0 {
                    seen[n] = true;
                    queue.push_back(n);
                }
            };
            if i > 0 {
                visit(i - 1, j);
            }
            if i + 1 < h {
                visit(i + 1, j);
            }
            if j > 0 {
                visit(i, j - 1);
            }
            if j + 1 < w {
                visit(i, j + 1);
            }
        }
        out.push((size, touches_border));
    }
    out
}

proptest! {
    #[test]
    fn keep_ratio_law_on_whole_periods(r in 0.0f64..1.0, d in 2u32..=40, ny in 1usize..=5, nx in 1usize..=5) {
        let spec = GridSpec::aligned(r, d).unwrap();
        let (h, w) = (ny * d as usize, nx * d as usize);
        let m = render_grid_mask(&spec, h, w).unwrap();
        let (dd, ld) = (d as usize * d as usize, spec.l_drop() as usize);
        prop_assert_eq!(m.count_kept() * dd, h * w * (dd - ld * ld));
        prop_assert!((keep_ratio(&m) - (2.0 * r - r * r)).abs() <= 2.0 / d as f64);
    }

    #[test]
    fn mask_matches_modular_rule(spec in spec_strategy(), h in 1usize..=60, w in 1usize..=60) {
        let m = render_grid_mask(&spec, h, w).unwrap();
        let (d, keep) = (spec.d as i64, spec.l_keep() as i64);
        for i in 0..h {
            for j in 0..w {
                let row_band = (i as i64 - spec.delta_y as i64).rem_euclid(d) < keep;
                let col_band = (j as i64 - spec.delta_x as i64).rem_euclid(d) < keep;
                prop_assert_eq!(m.is_kept(i, j), row_band || col_band);
            }
        }
    }

    #[test]
    fn periodic_in_both_axes(spec in spec_strategy(), h in 1usize..=50, w in 1usize..=50) {
        let d = spec.d as usize;
        let m = render_grid_mask(&spec, h + d, w + d).unwrap();
        for i in 0..h {
            for j in 0..w {
                prop_assert_eq!(m.get(i, j), m.get(i + d, j));
                prop_assert_eq!(m.get(i, j), m.get(i, j + d));
            }
        }
    }

    #[test]
    fn shifting_offsets_translates_the_mask(spec in spec_strategy(), sy in 0usize..12, sx in 0usize..12) {
        let d = spec.d;
        let shifted = GridSpec {
            delta_x: (spec.delta_x + sx as u32) % d,
            delta_y: (spec.delta_y + sy as u32) % d,
            ..spec
        };
        let (h, w) = (40, 40);
        let base = render_grid_mask(&spec, h + sy, w + sx).unwrap();
        let moved = render_grid_mask(&shifted, h + sy, w + sx).unwrap();
        for i in 0..h {
            for j in 0..w {
                prop_assert_eq!(moved.get(i + sy, j + sx), base.get(i, j));
            }
        }
    }

    #[test]
    fn interior_drops_are_l_drop_squares(spec in spec_strategy()) {
        prop_assume!(spec.l_drop() > 0 && spec.l_keep() > 0);
        let side = 4 * spec.d as usize;
        let m = render_grid_mask(&spec, side, side).unwrap();
        let l = spec.l_drop() as usize;
        let interior: Vec<usize> = dropped_components(&m)
            .into_iter()
            .filter(|&(_, border)| !border)
            .map(|(size, _)| size)
            .collect();
        prop_assert!(!interior.is_empty());
        prop_assert!(interior.iter().all(|&s| s == l * l));
    }

    #[test]
    fn rendering_is_deterministic(spec in spec_strategy(), seed: u64, p_u in 0.0f64..=1.0) {
        prop_assert_eq!(render_grid_mask(&spec, 33, 47).unwrap(), render_grid_mask(&spec, 33, 47).unwrap());
        let a = render_random_grid_mask(&spec, 33, 47, p_u, &mut stream(seed, &[])).unwrap();
        let b = render_random_grid_mask(&spec, 33, 47, p_u, &mut stream(seed, &[])).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn random_variant_only_keeps_more(spec in spec_strategy(), seed: u64, p_u in 0.0f64..=1.0) {
        let standard = render_grid_mask(&spec, 30, 30).unwrap();
        let random = render_random_grid_mask(&spec, 30, 30, p_u, &mut stream(seed, &[])).unwrap();
        for (s, r) in standard.cells().iter().zip(random.cells()) {
            prop_assert!(r >= s);
        }
    }

    #[test]
    fn reverse_is_complement(cells in proptest::collection::vec(0u8..=1, 1..200)) {
        let n = cells.len();
        let m = Mask::from_cells(1, n, cells).unwrap();
        let rev = reverse_mask(&m);
        prop_assert_eq!(reverse_mask(&rev), m.clone());
        for (a, b) in m.cells().iter().zip(rev.cells()) {
            prop_assert_eq!(a + b, 1);
        }
    }

    #[test]
    fn applying_a_mask_twice_is_applying_it_once(
        h in 1usize..=16, w in 1usize..=16, c in 1usize..=3, seed: u64, fill in 0u8..=255,
    ) {
        let mut rng = stream(seed, &[]);
        let cells = (0..h * w).map(|_| rng.gen_range(0..=1u8)).collect();
        let mask = Mask::from_cells(h, w, cells).unwrap();
        let data = (0..h * w * c).map(|_| rng.gen()).collect();
        let img = ImageTensor::from_u8(h, w, c, data).unwrap();
        let once = apply_mask(&img, &mask, fill as f32).unwrap();
        prop_assert_eq!(apply_mask(&once, &mask, fill as f32).unwrap(), once);
    }

    #[test]
    fn ramp_is_monotone_and_bounded(upper in 0.0f64..=1.0, end in 1u32..500, a in 0u32..1000, b in 0u32..1000) {
        let ramp = SchedulePolicy::LinearRamp { upper, end_epoch: end };
        let (lo, hi) = (a.min(b), a.max(b));
        let (p_lo, p_hi) = (schedule_probability(&ramp, lo), schedule_probability(&ramp, hi));
        prop_assert!(p_lo <= p_hi);
        prop_assert!((0.0..=upper).contains(&p_lo) && (0.0..=upper).contains(&p_hi));
    }

    #[test]
    fn has_hides_whole_patches(h in 1usize..=50, w in 1usize..=50, cell in 1usize..=16, p in 0.0f64..=1.0, seed: u64) {
        let m = has_mask(&mut stream(seed, &[]), h, w, HasParams { cell, p_hide: p }).unwrap();
        for top in (0..h).step_by(cell) {
            for left in (0..w).step_by(cell) {
                let (ph, pw) = (cell.min(h - top), cell.min(w - left));
                let kept = m.count_kept_in(top, left, ph, pw);
                prop_assert!(kept == 0 || kept == ph * pw);
            }
        }
    }

    #[test]
    fn cutout_is_one_clipped_square(h in 1usize..=60, w in 1usize..=60, side in 1usize..=30, seed: u64) {
        let m = cutout_mask(&mut stream(seed, &[]), h, w, CutoutParams { side }).unwrap();
        let comps = dropped_components(&m);
        prop_assert_eq!(comps.len(), 1);
        let dropped = comps[0].0;
        // The dropped region is its own bounding box.
        let rows: Vec<usize> = (0..h).filter(|&i| (0..w).any(|j| !m.is_kept(i, j))).collect();
        let cols: Vec<usize> = (0..w).filter(|&j| (0..h).any(|i| !m.is_kept(i, j))).collect();
        prop_assert_eq!(dropped, rows.len() * cols.len());
        prop_assert!(rows.len() <= side && cols.len() <= side);
    }
}
