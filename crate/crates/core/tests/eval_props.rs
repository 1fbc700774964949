use proptest::prelude::*;
use vispflow::dataset::Category;
use vispflow::eval::{directional_similarity, round3, verdict, BenchReport, Verdict, TABLE_ORDER};

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 3)
}

proptest! {
    #[test]
    fn scale_and_sign(a0 in vec3(), a1 in vec3(), b0 in vec3(), b1 in vec3(), k in 0.1f64..10.0) {
        let Ok(s) = directional_similarity(&a0, &a1, &b0, &b1) else { return Ok(()) };
        let scaled: Vec<f64> = a0.iter().zip(&a1).map(|(x, y)| x + k * (y - x)).collect();
        let flipped: Vec<f64> = b0.iter().zip(&b1).map(|(x, y)| 2.0 * x - y).collect();
        prop_assert!((directional_similarity(&a0, &scaled, &b0, &b1).unwrap() - s).abs() < 1e-9);
        prop_assert!((directional_similarity(&a0, &a1, &b0, &flipped).unwrap() + s).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn verdict_is_monotone(s in prop::array::uniform4(1.0f64..=5.0), i in 0usize..4, up in 0.0f64..4.0) {
        let before = verdict(s).unwrap();
        let mut raised = s;
        raised[i] = (raised[i] + up).min(5.0);
        if before == Verdict::Pass {
            prop_assert_eq!(verdict(raised).unwrap(), Verdict::Pass);
        }
    }
}

#[test]
fn printed_rows_total() {
    let rows = [
        ("Gemini3", [0.890, 0.700, 0.355, 0.727, 0.302, 0.520, 0.292, 0.535], 0.540),
        ("GPT5.2", [0.850, 0.800, 0.079, 0.500, 0.116, 0.240, 0.083, 0.465], 0.392),
        ("Qwen3.5", [0.859, 0.720, 0.354, 0.713, 0.272, 0.320, 0.306, 0.481], 0.503),
    ];
    for (name, rates, total) in rows {
        let r: Vec<(Category, f64)> = TABLE_ORDER.iter().copied().zip(rates).collect();
        assert_eq!(round3(BenchReport::from_rates(name, &r, false).unwrap().total), total, "{name}");
    }
}
