#![no_main]
use libfuzzer_sys::fuzz_target;

use homodefect::study::StudyConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = StudyConfig::from_json_str(text) else { return };
    if cfg.validate().is_ok() {
        let _ = cfg.eps_list();
        let _ = cfg.truncation_radius();
        let _ = cfg.memory_estimate();
        let _ = cfg.check_resources(false);
    }
});
