#![no_main]

use libfuzzer_sys::fuzz_target;
use navfield::tensor::checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(entries) = checkpoint::decode(data) {
        // anything that decodes must re-encode to the same bytes
        let again = checkpoint::encode(entries.iter().map(|(n, t)| (n.as_str(), t)));
        assert_eq!(again, data);
    }
});
