//! Profile CSV; rejected rows become warnings, so most inputs return Ok.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = resel_core::io::parse_profiles(data, "fuzz");
});
