//! Property-based invariants over the image pipeline.

use pgkit::pipeline::{extract_patches, flip, patch_shuffle, reconstruct, FlipAxis, ImageSample};
use pgkit::tensor::Tensor;
use proptest::prelude::*;

fn image_strategy() -> impl Strategy<Value = (ImageSample, usize)> {
    // Side is a multiple of the patch size so the grid tiles exactly.
    (1usize..=8, 1usize..=6, 1usize..=3).prop_flat_map(|(p, tiles, c)| {
        let side = p * tiles;
        (
            proptest::collection::vec(0.0f32..1.0, side * side * c),
            Just((side, c, p)),
        )
            .prop_map(move |(data, (side, c, p))| {
                let px = Tensor::from_vec(&[side, side, c], data).unwrap();
                (ImageSample::new(px, 0, "prop").unwrap(), p)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn patch_round_trip_is_identity((img, p) in image_strategy()) {
        let grid = extract_patches(&img, p).unwrap();
        let back = reconstruct(&grid).unwrap();
        prop_assert_eq!(&back.pixels, &img.pixels);
    }

    #[test]
    fn shuffle_preserves_pixel_multiset((img, p) in image_strategy(), seed in any::<u64>()) {
        let shuffled = patch_shuffle(&img, p, seed).unwrap();
        let mut a: Vec<u32> = img.pixels.data().iter().map(|v| v.to_bits()).collect();
        let mut b: Vec<u32> = shuffled.pixels.data().iter().map(|v| v.to_bits()).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn flips_are_involutive((img, _) in image_strategy()) {
        for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
            let twice = flip(&flip(&img, axis), axis);
            prop_assert_eq!(&twice.pixels, &img.pixels);
        }
    }
}
