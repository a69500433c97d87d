//! Task JSON: instruction or requirement form, profile reference, cores.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = resel_core::io::parse_task(data);
});
