#![no_main]

use iidm_cli::checkpoint::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::decode(data) {
        let bytes = ck.encode().expect("decoded checkpoint re-encodes");
        let again = Checkpoint::decode(&bytes).expect("re-decodes");
        assert_eq!(again.encode().expect("encodes"), bytes);
    }
});
