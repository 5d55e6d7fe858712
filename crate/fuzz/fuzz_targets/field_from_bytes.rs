#![no_main]
use libfuzzer_sys::fuzz_target;

use homodefect::grid::GridField;

fuzz_target!(|data: &[u8]| {
    if let Ok(field) = GridField::from_bytes(data) {
        let bytes = field.to_bytes();
        let again = GridField::from_bytes(&bytes).expect("re-encoded field decodes");
        assert_eq!(field, again);
        assert_eq!(bytes, again.to_bytes());
    }
});
