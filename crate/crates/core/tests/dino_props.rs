//! Properties of the DINO loss stack.

use gcnrefine::dino::{
    cross_entropy, dino_loss, ema_update, entropy, run_dino_demo, temperature_softmax, DinoDemoConfig,
    LossNormalization,
};
use proptest::prelude::*;

fn logits() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 2..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn softmax_ignores_constant_shift(z in logits(), c in -100.0f64..100.0, tau in 0.05f64..5.0) {
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let a = temperature_softmax(&z, tau).unwrap();
        let b = temperature_softmax(&shifted, tau).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lower_temperature_sharpens(z in logits(), tau in 0.05f64..5.0, factor in 1.01f64..10.0) {
        let sharp = temperature_softmax(&z, tau).unwrap();
        let soft = temperature_softmax(&z, tau * factor).unwrap();
        let max = |p: &[f64]| p.iter().copied().fold(0.0, f64::max);
        prop_assert!(max(&sharp) >= max(&soft) - 1e-12);
        prop_assert!(entropy(&sharp) <= entropy(&soft) + 1e-12);
    }

    #[test]
    fn cross_entropy_is_bounded_by_entropy((t, s) in (2usize..12).prop_flat_map(|n| (
        prop::collection::vec(-5.0f64..5.0, n),
        prop::collection::vec(-5.0f64..5.0, n),
    ))) {
        let p_t = temperature_softmax(&t, 1.0).unwrap();
        let p_s = temperature_softmax(&s, 0.5).unwrap();
        prop_assert!(cross_entropy(&p_t, &p_s).unwrap() >= entropy(&p_t) - 1e-9);
        prop_assert!((cross_entropy(&p_t, &p_t).unwrap() - entropy(&p_t)).abs() <= 1e-9);
    }

    #[test]
    fn ema_contracts_geometrically(
        start in prop::collection::vec(-3.0f64..3.0, 1..10),
        momentum in 0.5f64..0.99,
    ) {
        let student: Vec<f64> = start.iter().map(|v| v + 1.0).collect();
        let mut teacher = start.clone();
        for _ in 0..10 {
            let before: Vec<f64> = teacher.iter().zip(&student).map(|(t, s)| t - s).collect();
            ema_update(&mut teacher, &student, momentum).unwrap();
            for (i, (t, s)) in teacher.iter().zip(&student).enumerate() {
                let ratio = (t - s) / before[i];
                prop_assert!((ratio - momentum).abs() < 1e-12, "ratio {ratio}");
            }
        }
    }
}

#[test]
fn dino_loss_skips_same_crop_pairs() {
    let p = vec![0.5, 0.5];
    let q = vec![0.9, 0.1];
    let teacher = vec![p.clone()];
    // Student crop 0 is the teacher's own crop; only crop 1 counts.
    let loss = dino_loss(&teacher, &[vec![1e-9, 1.0 - 1e-9], q.clone()], LossNormalization::Sum).unwrap();
    assert!((loss - cross_entropy(&p, &q).unwrap()).abs() < 1e-12);
}

#[test]
fn demo_reduces_loss() {
    let report = run_dino_demo(&DinoDemoConfig::default()).unwrap();
    assert!(report.final_loss < report.initial_loss, "{report:?}");
    assert_eq!(report.loss_trace.len(), DinoDemoConfig::default().epochs + 1);
}
