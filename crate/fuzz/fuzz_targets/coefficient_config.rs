#![no_main]
use libfuzzer_sys::fuzz_target;

use homodefect::coefficients::CoefficientSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = CoefficientSpec::from_json_str(text) else { return };
    let _ = spec.content_hash();
    if spec.validate().is_err() {
        return;
    }
    // A validated spec evaluates to finite values within its bounds.
    let y = vec![0.37; spec.dim];
    let a = spec.eval_periodic(&y) + spec.eval_defect(&y);
    assert!(a.is_finite());
    let json = serde_json::to_string(&spec).unwrap();
    assert_eq!(CoefficientSpec::from_json_str(&json).unwrap(), spec);
});
