#![no_main]

use libfuzzer_sys::fuzz_target;
use navfield::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(text) {
        let back = RunConfig::parse(&cfg.to_text()).expect("snapshot parses");
        assert_eq!(back.to_text(), cfg.to_text());
    }
});
