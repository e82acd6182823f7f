#![no_main]

use libfuzzer_sys::fuzz_target;
use navfield::world::Scene;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(scene) = Scene::parse(text) {
        assert!(scene.is_connected());
        let back = Scene::parse(&scene.to_text()).expect("serialized scene parses");
        assert_eq!(back, scene);
    }
});
