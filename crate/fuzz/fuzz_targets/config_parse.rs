#![no_main]

use libfuzzer_sys::fuzz_target;

// Parsing an untrusted scenario file must never panic: it either yields a
// validated config or a structured error.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = iccbf::config::ScenarioConfig::from_toml_str(text);
    }
});
