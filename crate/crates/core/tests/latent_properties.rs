mod common;

use motion_scaffold::latent::{
    decode_latent, downsample_mask, encode_frames, upsample_mask, CodecSpec, LatentError, LatentTensor,
};
use motion_scaffold::raster::Raster;
use proptest::prelude::*;

fn codec() -> impl Strategy<Value = CodecSpec> {
    prop_oneof![
        Just(CodecSpec::identity()),
        (1usize..5, 1usize..4, 3usize..6).prop_map(|(ss, ts, c)| CodecSpec::block(ss, ts, c).unwrap()),
    ]
}

/// A codec plus a latent grid size; the pixel video is the grid times the strides.
fn codec_and_grid() -> impl Strategy<Value = (CodecSpec, usize, usize, usize)> {
    (codec(), 1usize..4, 1usize..5, 1usize..5)
}

fn occupancy(frames: usize, w: usize, h: usize) -> impl Strategy<Value = Vec<Raster>> {
    prop::collection::vec(
        prop::collection::vec(prop::bool::weighted(0.1), w * h)
            .prop_map(move |bits| Raster::new(w, h, 1, bits.iter().map(|&b| b as u8 as f64).collect()).unwrap()),
        frames,
    )
}

fn video(frames: usize, w: usize, h: usize) -> impl Strategy<Value = Vec<Raster>> {
    prop::collection::vec(
        prop::collection::vec(0.0..=1.0f64, w * h * 3).prop_map(move |d| Raster::new(w, h, 3, d).unwrap()),
        frames,
    )
}

fn shape() -> impl Strategy<Value = [usize; 4]> {
    (1usize..4, 1usize..5, 1usize..6, 1usize..6).prop_map(|(f, c, h, w)| [f, c, h, w])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn upsampled_mask_covers_every_active_pixel(
        ((spec, lf, lh, lw), occ, dilation) in codec_and_grid().prop_flat_map(|(spec, lf, lh, lw)| {
            let (ss, ts) = (spec.spatial_stride, spec.temporal_stride);
            (Just((spec, lf, lh, lw)), occupancy(lf * ts, lw * ss, lh * ss), 0usize..3)
        })
    ) {
        let mask = downsample_mask(&occ, &spec, dilation).unwrap();
        prop_assert_eq!(mask.shape(), [lf, 1, lh, lw]);
        let up = upsample_mask(&mask, &spec);
        prop_assert_eq!(up.len(), occ.len());
        for (src, cover) in occ.iter().zip(&up) {
            for (s, c) in src.data().iter().zip(cover.data()) {
                prop_assert!(*s < 0.5 || *c >= 0.5);
            }
        }
        // dilation only grows the mask
        let tighter = downsample_mask(&occ, &spec, 0).unwrap();
        prop_assert!(tighter.count_active() <= mask.count_active());
    }

    #[test]
    fn encoding_is_linear(
        (spec, frames_a, frames_b) in codec_and_grid().prop_flat_map(|(spec, lf, lh, lw)| {
            let (ss, ts) = (spec.spatial_stride, spec.temporal_stride);
            (Just(spec), video(lf * ts, lw * ss, lh * ss), video(lf * ts, lw * ss, lh * ss))
        }),
        a in 0.0..=1.0f64,
        share in 0.0..=1.0f64,
    ) {
        // non-negative weights summing to at most 1 keep pixels in range
        let b = (1.0 - a) * share;
        let mix: Vec<Raster> = frames_a
            .iter()
            .zip(&frames_b)
            .map(|(x, y)| {
                let d = x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect();
                Raster::new(x.width(), x.height(), 3, d).unwrap()
            })
            .collect();
        let ea = encode_frames(&frames_a, &spec).unwrap();
        let eb = encode_frames(&frames_b, &spec).unwrap();
        let combined = ea.zip_with(&eb, |p, q| a * p + b * q).unwrap();
        let direct = encode_frames(&mix, &spec).unwrap();
        prop_assert!(direct.max_abs_diff(&combined) <= 1e-12);
    }

    #[test]
    fn identity_codec_round_trips_frames(frames in (1usize..4, 1usize..6, 1usize..6).prop_flat_map(|(f, w, h)| video(f, w, h))) {
        let spec = CodecSpec::identity();
        let z = encode_frames(&frames, &spec).unwrap();
        prop_assert_eq!(decode_latent(&z, &spec).unwrap(), frames);
    }

    #[test]
    fn latent_files_round_trip_bit_exact(t in shape().prop_flat_map(|s| common::tensor(s, 10.0))) {
        let single = t.to_f32_precision();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.phyl");
        single.write(&path).unwrap();
        let back = LatentTensor::read(&path).unwrap();
        prop_assert_eq!(back.shape(), single.shape());
        for (x, y) in back.data().iter().zip(single.data()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
        prop_assert_eq!(back.to_bytes().unwrap(), std::fs::read(&path).unwrap());
    }

    #[test]
    fn corrupt_files_are_rejected(t in shape().prop_flat_map(|s| common::tensor(s, 1.0)), cut in 0usize..1000, byte in 0usize..4) {
        let bytes = t.to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[byte] ^= 0x20;
        prop_assert!(matches!(LatentTensor::from_bytes(&bad), Err(LatentError::BadMagic(_))));
        let cut = cut % bytes.len();
        let truncated = LatentTensor::from_bytes(&bytes[..cut]);
        prop_assert!(
            matches!(truncated, Err(LatentError::Truncated { expected, got }) if got == cut && expected > cut),
            "{:?}", truncated
        );
    }
}
