#![no_main]

use chroma_noise::io::parse_sidecar;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(sidecar) = parse_sidecar(text) {
        assert_eq!(parse_sidecar(&sidecar.to_line()).unwrap(), sidecar);
    }
});
