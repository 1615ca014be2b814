use fan_core::frontend::{FrameConfig, GmvnStats};
use fan_core::io::{read_checkpoint, write_checkpoint, Checkpoint, SavedModel};
use fan_core::layers::{Parameterized, VariantTag};
use fan_core::train::{tiny_batch, tiny_config, tiny_pipeline, Route};

fn saved(tag: VariantTag) -> SavedModel {
    let cfg = tiny_config();
    let n = cfg.mc.channels * cfg.mc.bins;
    SavedModel {
        pipeline: tiny_pipeline(tag, 8).unwrap(),
        config: cfg,
        frame: FrameConfig {
            fft_size: 16,
            window_len_samples: 16,
            hop_samples: 8,
            ..FrameConfig::default()
        },
        mics: vec![0, 3],
        stats: GmvnStats {
            channels: 2,
            bins: 5,
            frame_count: 40,
            mean: (0..n).flat_map(|i| [i as f64 * 0.25, -0.5]).collect(),
            variance: (0..n).flat_map(|i| [1.0 + i as f64, 2.0]).collect(),
        },
    }
}

#[test]
fn saved_model_survives_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for tag in VariantTag::ALL {
        let model = saved(tag);
        let path = dir.path().join(format!("{tag}.fanm"));
        write_checkpoint(&path, &model.to_checkpoint()).unwrap();
        let loaded = SavedModel::from_checkpoint(&read_checkpoint(&path).unwrap()).unwrap();
        assert_eq!(loaded.pipeline.tag(), tag);
        assert_eq!(loaded.config, model.config);
        assert_eq!(loaded.frame, model.frame);
        assert_eq!(loaded.mics, model.mics);
        assert_eq!(loaded.stats.frame_count, 40);
        for (a, b) in model.pipeline.tensors().iter().zip(loaded.pipeline.tensors()) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.data.iter().zip(b.data) {
                assert_eq!(*y, *x as f32 as f64, "{}", a.name);
            }
        }
        let again = loaded.to_checkpoint().to_bytes().unwrap();
        assert_eq!(Checkpoint::from_bytes(&again).unwrap().to_bytes().unwrap(), again);
        let stacks: Vec<_> = tiny_batch(1, 3).into_iter().map(|(s, _)| s).collect();
        let s0 = model.pipeline.utterance_scores(&stacks, Route::Full).unwrap();
        let s1 = loaded.pipeline.utterance_scores(&stacks, Route::Full).unwrap();
        for (a, b) in s0.iter().zip(&s1) {
            assert!((a - b).abs() < 1e-4 * (1.0 + a.abs()));
        }
    }
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let bytes = saved(VariantTag::BatAt).to_checkpoint().to_bytes().unwrap();
    for cut in [0, 4, 7, bytes.len() / 2, bytes.len() - 1] {
        assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
    }
}
