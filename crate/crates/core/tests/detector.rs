mod common;

use awareness_core::detector::{detect, iou, ncc_score, nms, train_templates, Detection, DetectorConfig, DetectorError};
use awareness_core::raster::{
    draw_glyph, tile_background_at, GlyphClass, GrayImage, Image, Rect, TileStyle, TileStyleKind,
};
use awareness_core::specgen::LabeledImage;
use common::fixture;
use proptest::prelude::*;

#[test]
fn one_template_per_training_glyph() {
    let f = fixture();
    assert_eq!(f.train.len(), 60);
    assert_eq!(f.templates.count(GlyphClass::Caution), 20);
    assert_eq!(f.templates.count(GlyphClass::Danger), 20);
    assert_eq!(f.templates.len(), 40);
}

#[test]
fn training_images_match_their_own_boxes() {
    let f = fixture();
    for (label, img) in f.images.iter().filter(|(l, _)| f.train.contains(l)).take(12) {
        let dets = detect(img, &f.templates);
        for b in &label.boxes {
            let hit = dets.iter().find(|d| d.cls == b.cls && iou(&d.rect, &b.rect) >= 0.9);
            let hit = hit.unwrap_or_else(|| panic!("{}: no detection for {:?}", label.path, b));
            assert!(hit.score >= 0.99, "{}: self-match {}", label.path, hit.score);
        }
    }
}

#[test]
fn blank_designer_tile_has_no_detections() {
    let f = fixture();
    let blank = tile_background_at(TileStyle { kind: TileStyleKind::Designer, world_seed: 7 }, (12_345, -678), (640, 480));
    assert!(detect(&blank, &f.templates).is_empty());
    let runtime = tile_background_at(TileStyle { kind: TileStyleKind::Runtime, world_seed: 1 }, (999, 4242), (640, 480));
    assert!(detect(&runtime, &f.templates).is_empty());
}

#[test]
fn glyph_on_runtime_tiles_is_found() {
    let f = fixture();
    for (cls, size) in [(GlyphClass::Danger, 64), (GlyphClass::Caution, 56), (GlyphClass::Danger, 80)] {
        let mut img = tile_background_at(TileStyle { kind: TileStyleKind::Runtime, world_seed: 3 }, (500, 900), (400, 300));
        let r = Rect::new(123, 77, size, size);
        draw_glyph(&mut img, cls, r).unwrap();
        let dets = detect(&img, &f.templates);
        let top = dets.first().expect("a detection");
        assert_eq!(top.cls, cls);
        assert!(iou(&top.rect, &r) >= 0.5, "{:?} vs {:?}", top.rect, r);
    }
}

#[test]
fn translation_moves_detections_by_the_same_offset() {
    let f = fixture();
    let place = |x: i64, y: i64| {
        let mut img = Image::new(320, 240, [60, 60, 60]);
        draw_glyph(&mut img, GlyphClass::Caution, Rect::new(x, y, 64, 64)).unwrap();
        detect(&img, &f.templates)
    };
    let base = place(40, 30);
    assert!(!base.is_empty());
    for (dx, dy) in [(2, 0), (0, 4), (60, 22), (100, 100)] {
        let moved = place(40 + dx, 30 + dy);
        assert_eq!(moved.len(), base.len());
        for (a, b) in base.iter().zip(&moved) {
            assert_eq!(b.rect, a.rect.translate(dx, dy));
            assert_eq!(a.cls, b.cls);
            assert!((a.score - b.score).abs() < 1e-9);
        }
    }
}

#[test]
fn degenerate_crop_is_rejected() {
    let img = Image::new(100, 100, [90, 90, 90]);
    let label = LabeledImage {
        path: "flat.png".into(),
        width: 100,
        height: 100,
        boxes: vec![awareness_core::specgen::BoundingBox { cls: GlyphClass::Danger, rect: Rect::new(10, 10, 20, 20) }],
    };
    let err = train_templates([(&label, &img)], &DetectorConfig::default()).unwrap_err();
    assert!(matches!(err, DetectorError::DegenerateCrop { .. }));
}

#[test]
fn missing_class_is_rejected() {
    let f = fixture();
    let (label, img) = f.images.iter().find(|(l, _)| l.boxes.iter().any(|b| b.cls == GlyphClass::Caution)).unwrap();
    let err = train_templates([(label, img)], &DetectorConfig::default()).unwrap_err();
    assert!(matches!(err, DetectorError::MissingClass(GlyphClass::Danger)));
    let only_caution = DetectorConfig { classes: vec![GlyphClass::Caution], ..Default::default() };
    assert_eq!(train_templates([(label, img)], &only_caution).unwrap().len(), 1);
}

fn gray(w: u32, h: u32, px: Vec<u8>) -> GrayImage {
    GrayImage::from_raw(w, h, px).unwrap()
}

proptest! {
    #[test]
    fn ncc_is_invariant_to_positive_affine_intensity(
        px in prop::collection::vec(0u8..100, 36),
        tpl in prop::collection::vec(any::<u8>(), 36),
        a in 1u8..3,
        b in 0u8..50,
    ) {
        let w = gray(6, 6, px.clone());
        let t = gray(6, 6, tpl);
        let w2 = gray(6, 6, px.iter().map(|&p| p * a + b).collect());
        let (s1, s2) = (ncc_score(&w, &t).unwrap(), ncc_score(&w2, &t).unwrap());
        prop_assert!((s1 - s2).abs() < 1e-9, "{} vs {}", s1, s2);
        prop_assert!((-1.0..=1.0).contains(&s1));
        let inverted = gray(6, 6, px.iter().map(|&p| 200 - p).collect());
        let s3 = ncc_score(&inverted, &t).unwrap();
        prop_assert!((s1 + s3).abs() < 1e-9);
    }

    #[test]
    fn nms_survivors_do_not_overlap(
        raw in prop::collection::vec((0i64..60, 0i64..60, 5u32..30, 0.0f64..1.0, any::<bool>()), 0..40),
        thr in 0.1f64..0.9,
    ) {
        let dets: Vec<Detection> = raw
            .iter()
            .map(|&(x, y, s, score, danger)| Detection {
                cls: if danger { GlyphClass::Danger } else { GlyphClass::Caution },
                rect: Rect::new(x, y, s, s),
                score,
            })
            .collect();
        let kept = nms(dets.clone(), thr);
        for (i, a) in kept.iter().enumerate() {
            prop_assert!(dets.contains(a));
            for b in &kept[i + 1..] {
                prop_assert!(a.score >= b.score);
                prop_assert!(a.cls != b.cls || iou(&a.rect, &b.rect) < thr);
            }
        }
        // every suppressed detection overlaps a better survivor of its class
        for d in &dets {
            if !kept.contains(d) {
                prop_assert!(kept.iter().any(|k| k.cls == d.cls && k.score >= d.score && iou(&k.rect, &d.rect) >= thr));
            }
        }
        prop_assert_eq!(nms(kept.clone(), thr), kept);
    }
}
