#![no_main]

use iidm_cli::iidr;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = iidr::decode(data) {
        let bytes = iidr::encode(&r).expect("decoded raster re-encodes");
        assert!(iidr::decode(&bytes).expect("re-decodes").bit_eq(&r));
    }
});
