#![allow(dead_code)]

use std::sync::OnceLock;

use awareness_core::detector::{train_templates, DetectorConfig, TemplateSet};
use awareness_core::raster::Image;
use awareness_core::specgen::{render_spec_image, split_dataset, LabeledImage, SpecDatasetConfig};

pub struct Fixture {
    pub images: Vec<(LabeledImage, Image)>,
    pub train: Vec<LabeledImage>,
    pub templates: TemplateSet,
}

pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = SpecDatasetConfig::default();
        let images: Vec<(LabeledImage, Image)> = (0..cfg.image_count())
            .map(|i| {
                let (img, label) = render_spec_image(&cfg, i).unwrap();
                (label, img)
            })
            .collect();
        let labels: Vec<LabeledImage> = images.iter().map(|(l, _)| l.clone()).collect();
        let (train, _) = split_dataset(&labels, 2.0 / 3.0, 11);
        let pairs: Vec<(&LabeledImage, &Image)> = images
            .iter()
            .filter(|(l, _)| train.contains(l))
            .map(|(l, i)| (l, i))
            .collect();
        let templates = train_templates(pairs, &DetectorConfig::default()).unwrap();
        Fixture { images, train, templates }
    })
}

