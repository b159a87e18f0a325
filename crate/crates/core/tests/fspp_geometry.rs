//! Pyramid bin geometry and pooling invariants over random map sizes.

use proptest::prelude::*;
use wpal::nn::{fspp_bin_count, fspp_bins, fspp_pool, PyramidSpec};
use wpal::Tensor;

fn specs() -> impl Strategy<Value = PyramidSpec> {
    prop_oneof![
        Just(PyramidSpec::global_only()),
        (1usize..5, 1usize..5).prop_map(|(r, c)| PyramidSpec::two_level(r, c).unwrap()),
    ]
}

fn map(c: usize, h: usize, w: usize, seed: u64) -> Tensor {
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let data = (0..c * h * w)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect();
    Tensor::new(vec![c, h, w], data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bins_are_nonempty_and_cover_the_map(h in 4usize..=64, w in 4usize..=64, spec in specs()) {
        let regions = fspp_bins(&spec, h, w);
        prop_assert_eq!(regions.len(), spec.bins_per_channel());
        let mut covered = vec![false; h * w];
        for r in &regions {
            prop_assert!(r.height() > 0 && r.width() > 0);
            prop_assert!(r.bottom <= h && r.right <= w);
            for y in r.top..r.bottom {
                for x in r.left..r.right {
                    covered[y * w + x] = true;
                }
            }
        }
        prop_assert!(covered.iter().all(|&c| c));
        // The second level alone also covers the map.
        if regions.len() > 1 {
            let mut second = vec![false; h * w];
            for r in &regions[1..] {
                for y in r.top..r.bottom {
                    for x in r.left..r.right {
                        second[y * w + x] = true;
                    }
                }
            }
            prop_assert!(second.iter().all(|&c| c));
        }
    }

    #[test]
    fn output_length_is_size_invariant(
        c in 1usize..4,
        (h1, w1, h2, w2) in (4usize..=64, 4usize..=64, 4usize..=64, 4usize..=64),
        spec in specs(),
        seed in any::<u64>(),
    ) {
        let (a, la) = fspp_pool(&map(c, h1, w1, seed), &spec).unwrap();
        let (b, lb) = fspp_pool(&map(c, h2, w2, seed ^ 1), &spec).unwrap();
        prop_assert_eq!(a.scores.len(), c * spec.bins_per_channel());
        prop_assert_eq!(a.scores.len(), b.scores.len());
        prop_assert_eq!(la.coords.len(), lb.coords.len());
    }

    /// Each bin reports the maximum of its region, at a location inside it,
    /// and raising any activation never lowers any bin score.
    #[test]
    fn pooling_is_regional_max_and_monotone(
        h in 4usize..=24,
        w in 4usize..=24,
        spec in specs(),
        seed in any::<u64>(),
        bump in 0.0f64..2.0,
        at in any::<prop::sample::Index>(),
    ) {
        let m = map(2, h, w, seed);
        let (v, locs) = fspp_pool(&m, &spec).unwrap();
        let regions = fspp_bins(&spec, h, w);
        let per = regions.len();
        for (k, (&s, &(y, x))) in v.scores.iter().zip(&locs.coords).enumerate() {
            let (ch, r) = (k / per, regions[k % per]);
            prop_assert!(r.contains(y, x));
            let mut best = f64::NEG_INFINITY;
            for yy in r.top..r.bottom {
                for xx in r.left..r.right {
                    best = best.max(m.at(&[ch, yy, xx]));
                }
            }
            prop_assert_eq!(s, best);
            prop_assert_eq!(m.at(&[ch, y, x]), s);
        }
        let mut raised = m.clone();
        let i = at.index(raised.numel());
        raised.data_mut()[i] += bump;
        let (v2, _) = fspp_pool(&raised, &spec).unwrap();
        for (a, b) in v.scores.iter().zip(&v2.scores) {
            prop_assert!(b >= a);
        }
    }
}

#[test]
fn detector_bin_accounting() {
    let g33 = PyramidSpec::two_level(3, 3).unwrap();
    let g31 = PyramidSpec::two_level(3, 1).unwrap();
    assert_eq!(g33.bins_per_channel(), 10);
    assert_eq!(g31.bins_per_channel(), 4);
    assert_eq!(fspp_bin_count(&[(512, g33), (512, g33), (1024, g31)]), 14336);
    assert_eq!(fspp_bin_count(&[(32, g33), (32, g33), (64, g31)]), 896);
}
