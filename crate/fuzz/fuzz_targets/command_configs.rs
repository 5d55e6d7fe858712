#![no_main]
use libfuzzer_sys::fuzz_target;

use homodefect::commands::{CorrectorConfig, PotentialConfig, SolveConfig, TensorConfig};

// First byte picks the config kind, the rest is the JSON text.
fuzz_target!(|data: &[u8]| {
    let Some((&kind, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    match kind % 4 {
        0 => {
            let _ = CorrectorConfig::from_json_str(text);
        }
        1 => {
            let _ = TensorConfig::from_json_str(text);
        }
        2 => {
            let _ = PotentialConfig::from_json_str(text);
        }
        _ => {
            if let Ok(cfg) = SolveConfig::from_json_str(text) {
                let study = cfg.to_study();
                let _ = study.validate();
            }
        }
    }
});
