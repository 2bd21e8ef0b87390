#![no_main]

use libfuzzer_sys::fuzz_target;

// Any config that parses must serialize back to text that reparses to an
// identical value.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(config) = iccbf::config::ScenarioConfig::from_toml_str(text) else {
        return;
    };
    let serialized = config.to_toml_string().expect("serializable");
    let reparsed = iccbf::config::ScenarioConfig::from_toml_str(&serialized)
        .expect("round trip reparses");
    assert_eq!(config, reparsed, "round trip changed the config");
});
