#![allow(dead_code)]

use std::path::Path;

use awareness_harness::pipeline::{cmd_specgen, cmd_train};
use awareness_harness::HarnessConfig;

/// Default config rooted at `out`.
pub fn config_in(out: &Path) -> HarnessConfig {
    HarnessConfig { out_dir: out.to_path_buf(), ..Default::default() }
}

/// Default config rooted at `out` with the design-spec dataset generated and the
/// detector trained.
pub fn trained(out: &Path) -> HarnessConfig {
    let cfg = config_in(out);
    cmd_specgen(&cfg).unwrap();
    cmd_train(&cfg).unwrap();
    cfg
}
