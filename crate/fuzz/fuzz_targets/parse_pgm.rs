#![no_main]

use chroma_noise::io::{encode_pgm, parse_pgm};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(pgm) = parse_pgm(data) {
        assert_eq!(pgm.samples.len(), pgm.width * pgm.height);
        assert!(pgm.samples.iter().all(|&s| s <= pgm.max_value));
        // Whatever parses must survive a re-encode unchanged.
        assert_eq!(parse_pgm(&encode_pgm(&pgm)).unwrap(), pgm);
    }
});
