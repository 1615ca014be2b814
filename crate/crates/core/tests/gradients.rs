use fan_core::layers::{Parameterized, VariantTag};
use fan_core::train::{gradient_check, tiny_batch, tiny_pipeline, Example, Route, Trainable, DEFAULT_STEP};

const TOL: f64 = 1e-4;

fn tiny(tag: VariantTag, seed: u64) -> fan_core::train::Pipeline {
    tiny_pipeline(tag, seed).unwrap()
}

#[test]
fn central_difference_agrees_for_every_variant() {
    let data = tiny_batch(3, 4);
    let batch: Vec<Example<'_>> = data.iter().map(|(s, l)| Example { stack: s, label: *l }).collect();
    for tag in VariantTag::ALL {
        let p = tiny(tag, 17);
        let report = gradient_check(&p, &batch, Route::Full, DEFAULT_STEP, 1e-8).unwrap();
        assert!(report.vacuous().is_empty(), "{tag}: {:?}", report.vacuous());
        assert!(
            report.max_relative_error() < TOL,
            "{tag}: {}",
            report.max_relative_error()
        );
    }
}

#[test]
fn parallel_gradient_matches_sequential() {
    let data = tiny_batch(5, 11);
    let batch: Vec<Example<'_>> = data.iter().map(|(s, l)| Example { stack: s, label: *l }).collect();
    for tag in [VariantTag::BatAt, VariantTag::BatFanAvg] {
        let p = tiny(tag, 2);
        let cache = p.forward_loss(&batch, Route::Full).unwrap();
        let seq = p.backward(&cache, Trainable::ALL);
        let (loss, par) = p.loss_and_grad(&batch, Route::Full, Trainable::ALL).unwrap();
        assert!((loss - cache.loss).abs() < 1e-12);
        for (a, b) in seq.tensors().iter().zip(par.tensors()) {
            for (x, y) in a.data.iter().zip(b.data) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{}", a.name);
            }
        }
    }
}

#[test]
fn frozen_groups_get_zero_gradient() {
    let data = tiny_batch(6, 4);
    let batch: Vec<Example<'_>> = data.iter().map(|(s, l)| Example { stack: s, label: *l }).collect();
    let p = tiny(VariantTag::BatFanMax, 9);
    let only_mc = Trainable {
        mc: true,
        fe: false,
        classifier: false,
    };
    let (_, g) = p.loss_and_grad(&batch, Route::Full, only_mc).unwrap();
    assert!(g.fe.tensors().iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
    assert!(g.classifier.tensors().iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
    assert!(g.mc.tensors().iter().any(|t| t.data.iter().any(|&v| v != 0.0)));
    let (_, g) = p.loss_and_grad(&batch, Route::SingleChannel, Trainable::ALL).unwrap();
    assert!(g.mc.tensors().iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
}
