use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vispflow::render::*;

fn scan(tokens: &[Token], w: u32, h: u32, lo: u32, hi: u32, g: &dyn GlyphSource) -> Option<u32> {
    (lo..=hi).rev().find(|&s| fits_at(tokens, w, h, s, g).is_some())
}

fn words() -> impl Strategy<Value = String> {
    proptest::collection::vec("[a-z]{1,9}|ね|こ", 1..8).prop_map(|v| v.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn search_matches_linear_scan(text in words(), w in 8u32..300, h in 8u32..200, lo in 1u32..30, span in 0u32..80, narrow in any::<bool>()) {
        let font = if narrow { BuiltinFont::narrow() } else { BuiltinFont::mono() };
        let toks = tokenize(&text).tokens;
        let hi = lo + span;
        let r = layout_bbox(&toks, w, h, lo, hi, &font).unwrap();
        prop_assert_eq!(r.best.as_ref().map(|b| b.size), scan(&toks, w, h, lo, hi, &font));
        let n = (hi - lo + 1) as f64;
        prop_assert!(r.wrap_evaluations as f64 <= n.log2().ceil() + 1.0);
        if let Some(b) = r.best {
            prop_assert!(b.height_milli() <= h as u64 * 1000);
            prop_assert!(b.max_width_milli() <= w as u64 * 1000);
            if b.size < hi {
                prop_assert!(fits_at(&toks, w, h, b.size + 1, &font).is_none());
            }
            let joined: Vec<String> = b.lines.iter().map(|l| l.text.clone()).collect();
            prop_assert_eq!(joined.join(" ").replace(' ', ""), text.replace(' ', ""));
        }
    }

    #[test]
    fn text_render_is_reproducible(seed in any::<u64>(), text in words()) {
        let base = Canvas::new(80, 64, Rgba::rgb(200, 180, 40)).unwrap();
        let cfg = TextRenderConfig::default();
        let a = render_text_instruction(&base, &text, &mut ChaCha8Rng::seed_from_u64(seed), &cfg);
        let b = render_text_instruction(&base, &text, &mut ChaCha8Rng::seed_from_u64(seed), &cfg);
        prop_assert_eq!(a.is_ok(), b.is_ok());
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert_eq!(&a.0, &b.0);
            prop_assert!(a.1.rect.within(80, 64));
        }
    }

    #[test]
    fn marker_pixels_stay_on_canvas(seed in any::<u64>(), x in -40i64..100, y in -40i64..100, angle in -7.0f64..7.0, m in 0.0f64..=1.0) {
        // a 1-pixel frame around the canvas catches any pixel that escapes
        let base = Canvas::new(64, 64, Rgba::WHITE).unwrap();
        let spec = MarkerSpec::Arrow { origin: (x, y), angle, magnitude: m, color: None, width: None };
        let (out, rec) = render_marker(&base, &spec, &mut ChaCha8Rng::seed_from_u64(seed), &MarkerConfig::default()).unwrap();
        prop_assert_eq!((out.width(), out.height()), (64, 64));
        let g = rec.arrow.unwrap();
        let inside = |p: (i64, i64)| p.0 >= 0 && p.1 >= 0 && p.0 < 64 && p.1 < 64;
        if !inside(g.origin) || !inside(g.tip) {
            prop_assert!(rec.clipped);
        }
    }
}
