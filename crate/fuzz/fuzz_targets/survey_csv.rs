#![no_main]

use iidm_core::preprocess::{parse_survey, write_survey};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(plaques) = parse_survey(text) {
            let again = parse_survey(&write_survey(&plaques)).expect("written table parses");
            assert_eq!(again, plaques);
        }
    }
});
