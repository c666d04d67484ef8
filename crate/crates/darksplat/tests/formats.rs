use std::path::Path;

use darksplat::event_io::{decode_binary, decode_text, encode_binary, encode_text, read_events, write_events};
use darksplat::image_io::{load_png, save_png};
use darksplat::scene_io::{decode_scene, encode_scene, SceneFile};
use darksplat::DataError;
use darksplat_core::events::{Event, EventStream};
use darksplat_core::sh::coeff_count;
use darksplat_core::synth::quantize16;
use darksplat_core::{Gaussian, Image, Scene};
use proptest::prelude::*;

fn stream_strategy() -> impl Strategy<Value = EventStream> {
    (1u32..300, 1u32..300).prop_flat_map(|(w, h)| {
        prop::collection::vec((0u64..1 << 40, 0..w as u16, 0..h as u16, prop::bool::ANY), 0..60).prop_map(move |raw| {
            let mut s = EventStream::new(w, h);
            s.events = raw.into_iter().map(|(t, x, y, on)| Event { t, x, y, polarity: if on { 1 } else { -1 } }).collect();
            s.sort();
            s
        })
    })
}

fn finite() -> impl Strategy<Value = f64> {
    -1e6f64..1e6
}

fn scene_strategy() -> impl Strategy<Value = Scene> {
    (0usize..=3).prop_flat_map(|degree| {
        let k = coeff_count(degree);
        let gaussian = (
            prop::array::uniform3(finite()),
            (0.1f64..2.0, prop::array::uniform3(finite())).prop_map(|(w, v)| [w, v[0], v[1], v[2]]),
            prop::array::uniform3(finite()),
            finite(),
            prop::collection::vec(prop::array::uniform3(finite()), k),
        )
            .prop_map(|(position, rotation, log_scale, opacity_logit, sh)| Gaussian {
                position,
                rotation,
                log_scale,
                opacity_logit,
                sh,
            });
        prop::collection::vec(gaussian, 0..8).prop_map(move |gaussians| Scene { sh_degree: degree, gaussians })
    })
}

proptest! {
    #[test]
    fn event_encodings_round_trip(s in stream_strategy()) {
        let path = Path::new("mem");
        prop_assert_eq!(&decode_text(path, &encode_text(&s)).unwrap(), &s);
        prop_assert_eq!(&decode_binary(path, &encode_binary(&s)).unwrap(), &s);
    }

    #[test]
    fn truncated_binary_events_are_rejected(s in stream_strategy(), cut in 1usize..13) {
        prop_assume!(!s.is_empty());
        let bytes = encode_binary(&s);
        let err = decode_binary(Path::new("mem"), &bytes[..bytes.len() - cut]).unwrap_err();
        let is_corrupt = matches!(err, DataError::Corrupt { .. });
        prop_assert!(is_corrupt);
    }

    #[test]
    fn scene_encoding_round_trips(scene in scene_strategy(), hash in prop::array::uniform32(any::<u8>())) {
        let file = SceneFile { scene, config_hash: hash };
        let bytes = encode_scene(&file);
        prop_assert_eq!(decode_scene(Path::new("mem"), &bytes).unwrap(), file);
        if bytes.len() > 1 {
            prop_assert!(decode_scene(Path::new("mem"), &bytes[..bytes.len() - 1]).is_err());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn files_round_trip(s in stream_strategy(), w in 1u32..20, h in 1u32..20, seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        for name in ["e.evs", "e.csv"] {
            let path = dir.path().join(name);
            write_events(&path, &s).unwrap();
            prop_assert_eq!(&read_events(&path).unwrap(), &s);
        }
        let mut img = Image::new(w, h);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = ((seed.wrapping_mul(i as u64 + 1) >> 11) as f64 / (1u64 << 53) as f64).fract();
        }
        quantize16(&mut img);
        let path = dir.path().join("f.png");
        save_png(&path, &img).unwrap();
        prop_assert_eq!(load_png(&path).unwrap(), img);
    }
}
