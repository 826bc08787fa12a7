use smartbrush_web_demo::{to_rgba, Editor};

#[test]
fn stroke_across_border_regenerates_and_undo_restores() {
    let mut ed = Editor::new(3, 2, 32).unwrap();
    let before = ed.render();
    for x in 16..48 {
        ed.paint(x as f64, 16.0, 6.0);
    }
    assert!(ed.brushed_pixels() > 0);
    let report: serde_json::Value = serde_json::from_str(&ed.generate(true).unwrap()).unwrap();
    assert_eq!(report["chunks"], serde_json::json!(["0,0", "1,0"]));
    assert_eq!(report["pairs"].as_array().unwrap().len(), 1);
    assert!(report["pairs"][0]["seam_after"].as_f64().unwrap().is_finite());
    let after = ed.render();
    assert_ne!(after, before);
    let half = |img: &smartbrush_core::map::RgbImage, x0| img.crop(x0, 0, 32, 32);
    assert_ne!(half(&after, 0), half(&before, 0));
    assert_ne!(half(&after, 32), half(&before, 32));
    assert_eq!(ed.brushed_pixels(), 0);

    assert!(ed.undo());
    assert_eq!(ed.render(), before);
    assert!(!ed.undo());
}

#[test]
fn generate_needs_a_brush_and_rank_reports_all_materials() {
    let mut ed = Editor::new(1, 1, 16).unwrap();
    assert!(ed.generate(true).is_err());
    let r: serde_json::Value = serde_json::from_str(&ed.rank_at(3, 3).unwrap()).unwrap();
    assert_eq!(r["ranking"].as_array().unwrap().len(), 8);
    assert!(ed.rank_at(40, 3).is_err());
}

#[test]
fn rgba_tints_brushed_pixels() {
    let mut ed = Editor::new(2, 1, 16).unwrap();
    ed.paint(2.5, 2.5, 1.0);
    let img = ed.render();
    let plain = to_rgba(&img, |_, _| false);
    let tinted = to_rgba(&img, |x, y| ed.is_brushed(x, y));
    assert_eq!(plain.len(), 16 * 16 * 4);
    let i = (2 * 16 + 2) * 4;
    assert_ne!(plain[i..i + 4], tinted[i..i + 4]);
    assert_eq!(plain[..4], tinted[..4]);
}
